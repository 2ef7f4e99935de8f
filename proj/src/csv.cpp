#include "cemu/csv.hpp"

#include <ctime>
#include <stdexcept>

namespace cemu {

CsvWriter::CsvWriter(const std::string& path,
                     const std::vector<std::string>& header,
                     bool deterministic) {
  out_.open(path, std::ios::out | std::ios::trunc);
  if (!out_) throw std::runtime_error("cannot open csv file '" + path + "'");
  if (!deterministic) {
    char buf[64];
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    out_ << "# generated " << buf << "\n";
  }
  row(header);
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  for (size_t i = 0; i < cells.size(); ++i) {
    if (i) out_ << ",";
    out_ << cells[i];
  }
  out_ << "\n";
  out_.flush();
}

void CsvWriter::comment(const std::string& text) {
  out_ << "# " << text << "\n";
  out_.flush();
}

}  // namespace cemu
