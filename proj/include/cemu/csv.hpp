#pragma once

#include <fstream>
#include <string>
#include <vector>

namespace cemu {

// UTF-8 CSV with a fixed header row and stable column order. Unless
// `deterministic`, a generation-timestamp comment leads the file; with it,
// re-running on identical data reproduces identical bytes.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header,
            bool deterministic);

  void row(const std::vector<std::string>& cells);
  void comment(const std::string& text);

 private:
  std::ofstream out_;
};

}  // namespace cemu
