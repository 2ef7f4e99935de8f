// Dumps collective dependency DAGs (full or boundary-projected) in the
// documented text format, for debugging and golden-file tests.
#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "cemu/dag.hpp"

int main(int argc, char** argv) {
  CLI::App app{"cemu dag: dump collective dependency DAGs"};
  std::string op_name = "allreduce";
  uint32_t n = 4;
  uint64_t bytes = 4096;
  uint32_t elem_size = 1;
  uint32_t op_id = 0;
  std::string boundary;  // comma-separated real ranks; empty = full DAG
  std::string side_name = "emulated";
  std::string out_path;
  app.add_option("--op", op_name, "allreduce or allgather");
  app.add_option("--n", n, "world size")->required();
  app.add_option("--bytes", bytes, "payload bytes (per rank for allgather)");
  app.add_option("--elem-size", elem_size, "element size in bytes");
  app.add_option("--op-id", op_id, "operation id stamped on messages");
  app.add_option("--boundary", boundary,
                 "project onto this real rank set (comma separated)");
  app.add_option("--side", side_name,
                 "boundary view: emulated (default) or real");
  app.add_option("--out", out_path, "write to file instead of stdout");
  CLI11_PARSE(app, argc, argv);

  try {
    const cemu::CollKind op = cemu::parse_coll_kind(op_name);
    const cemu::CollectiveDag dag =
        cemu::build_collective_dag(op, n, bytes, op_id, elem_size);
    std::string text;
    if (boundary.empty()) {
      text = cemu::dump_dag(dag);
    } else {
      std::set<uint32_t> real;
      std::istringstream ss(boundary);
      std::string tok;
      while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) real.insert(static_cast<uint32_t>(std::stoul(tok)));
      }
      const auto side = side_name == "real" ? cemu::BoundarySide::kReal
                                            : cemu::BoundarySide::kEmulated;
      text = cemu::dump_boundary(cemu::project_boundary(dag, real, side));
    }
    if (out_path.empty()) {
      std::cout << text;
    } else {
      std::ofstream out(out_path);
      out << text;
    }
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "cemu-dag: %s\n", e.what());
    return 1;
  }
}
