#include "cemu/dag.hpp"

#include <algorithm>
#include <cassert>
#include <map>
#include <sstream>

namespace cemu {

const char* coll_kind_name(CollKind k) {
  return k == CollKind::kAllReduce ? "allreduce" : "allgather";
}

CollKind parse_coll_kind(const std::string& s) {
  if (s == "allreduce") return CollKind::kAllReduce;
  if (s == "allgather") return CollKind::kAllGather;
  throw DagError("unknown collective kind '" + s + "'");
}

const char* boundary_dir_name(BoundaryDir d) {
  return d == BoundaryDir::kFromReal ? "from_real" : "to_real";
}

std::string MsgDesc::str() const {
  std::ostringstream os;
  os << "op=" << op_id << " step=" << step << " src=" << src_rank
     << " dst=" << dst_rank << " chunk=" << chunk_index
     << " size=" << size_bytes;
  return os.str();
}

uint64_t chunk_bytes(uint32_t n, uint64_t total_bytes, uint32_t elem_size,
                     uint32_t chunk_index) {
  const uint64_t elems = total_bytes / elem_size;
  const uint64_t base = elems / n;
  const uint64_t rem = elems % n;
  const uint64_t c_elems = base + (chunk_index == n - 1 ? rem : 0);
  return c_elems * elem_size;
}

uint64_t chunk_offset_bytes(uint32_t n, uint64_t total_bytes,
                            uint32_t elem_size, uint32_t chunk_index) {
  const uint64_t elems = total_bytes / elem_size;
  const uint64_t base = elems / n;
  return chunk_index * base * elem_size;
}

namespace {

uint32_t mod_n(int64_t x, uint32_t n) {
  int64_t r = x % static_cast<int64_t>(n);
  if (r < 0) r += n;
  return static_cast<uint32_t>(r);
}

void check_build_args(CollKind kind, uint32_t n, uint64_t bytes,
                      uint32_t elem_size) {
  if (n < 2) throw DagError("world size must be >= 2");
  if (elem_size == 0) throw DagError("elem_size must be > 0");
  if (bytes % elem_size != 0) {
    throw DagError("payload size " + std::to_string(bytes) +
                   " is not a multiple of elem_size " +
                   std::to_string(elem_size));
  }
  if (kind == CollKind::kAllReduce && bytes / elem_size < n) {
    throw DagError("all-reduce payload of " + std::to_string(bytes) +
                   " bytes is too small to split into " + std::to_string(n) +
                   " chunks");
  }
}

// Chunk index sent by `rank` at schedule position p.
uint32_t send_chunk_at(CollKind kind, uint32_t n, uint32_t rank, uint32_t p) {
  if (kind == CollKind::kAllGather) {
    return mod_n(static_cast<int64_t>(rank) - p, n);
  }
  if (p <= n - 2) {  // reduce-scatter step s = p
    return mod_n(static_cast<int64_t>(rank) - p, n);
  }
  const uint32_t t = p - (n - 1);  // all-gather step
  return mod_n(static_cast<int64_t>(rank) + 1 - t, n);
}

uint64_t msg_size(const CollectiveDag& dag, uint64_t total_bytes,
                  uint32_t elem_size, uint32_t chunk) {
  if (dag.kind == CollKind::kAllGather) return total_bytes;
  return chunk_bytes(dag.n, total_bytes, elem_size, chunk);
}

CollectiveDag build_ring_dag(CollKind kind, uint32_t n, uint64_t bytes,
                             uint32_t op_id, uint32_t elem_size) {
  check_build_args(kind, n, bytes, elem_size);
  CollectiveDag dag;
  dag.kind = kind;
  dag.n = n;
  dag.positions = (kind == CollKind::kAllReduce) ? 2 * (n - 1) : n - 1;

  dag.vertices.resize(static_cast<size_t>(n) * dag.positions * 2);
  for (uint32_t r = 0; r < n; ++r) {
    for (uint32_t p = 0; p < dag.positions; ++p) {
      const uint32_t chunk = send_chunk_at(kind, n, r, p);
      MsgDesc m;
      m.op_id = op_id;
      m.step = p;
      m.src_rank = r;
      m.dst_rank = (r + 1) % n;
      m.chunk_index = chunk;
      m.size_bytes = msg_size(dag, bytes, elem_size, chunk);

      CollectiveDag::Task& send = dag.vertices[dag.vid(r, p, TaskKind::kSend)];
      send.kind = TaskKind::kSend;
      send.msg = m;
      send.owner_rank = r;

      // The matching recv lives at the successor and carries the same MsgDesc.
      CollectiveDag::Task& recv =
          dag.vertices[dag.vid(m.dst_rank, p, TaskKind::kRecv)];
      recv.kind = TaskKind::kRecv;
      recv.msg = m;
      recv.owner_rank = m.dst_rank;
    }
  }

  for (uint32_t r = 0; r < n; ++r) {
    for (uint32_t p = 0; p < dag.positions; ++p) {
      // recv depends on its matching send
      dag.edges.emplace_back(dag.vid(r, p, TaskKind::kSend),
                             dag.vid((r + 1) % n, p, TaskKind::kRecv));
      // send at p+1 forwards the chunk received at p
      if (p + 1 < dag.positions) {
        dag.edges.emplace_back(dag.vid(r, p, TaskKind::kRecv),
                               dag.vid(r, p + 1, TaskKind::kSend));
      }
    }
  }
  return dag;
}

}  // namespace

CollectiveDag build_ring_allreduce_dag(uint32_t n, uint64_t total_bytes,
                                       uint32_t op_id, uint32_t elem_size) {
  return build_ring_dag(CollKind::kAllReduce, n, total_bytes, op_id,
                        elem_size);
}

CollectiveDag build_ring_allgather_dag(uint32_t n, uint64_t bytes_per_rank,
                                       uint32_t op_id, uint32_t elem_size) {
  return build_ring_dag(CollKind::kAllGather, n, bytes_per_rank, op_id,
                        elem_size);
}

CollectiveDag build_collective_dag(CollKind kind, uint32_t n, uint64_t bytes,
                                   uint32_t op_id, uint32_t elem_size) {
  return build_ring_dag(kind, n, bytes, op_id, elem_size);
}

MsgDesc scheduled_send(const CollectiveDag& dag, uint32_t rank,
                       uint32_t position) {
  return dag.vertices[dag.vid(rank, position, TaskKind::kSend)].msg;
}

MsgDesc scheduled_recv(const CollectiveDag& dag, uint32_t rank,
                       uint32_t position) {
  return dag.vertices[dag.vid(rank, position, TaskKind::kRecv)].msg;
}

AcyclicResult validate_acyclic(
    size_t vertex_count,
    const std::vector<std::pair<uint32_t, uint32_t>>& edges) {
  std::vector<std::vector<uint32_t>> out(vertex_count);
  std::vector<uint32_t> indeg(vertex_count, 0);
  for (const auto& [u, v] : edges) {
    out[u].push_back(v);
    ++indeg[v];
  }
  std::vector<uint32_t> queue;
  for (uint32_t v = 0; v < vertex_count; ++v) {
    if (indeg[v] == 0) queue.push_back(v);
  }
  size_t popped = 0;
  while (!queue.empty()) {
    const uint32_t u = queue.back();
    queue.pop_back();
    ++popped;
    for (uint32_t v : out[u]) {
      if (--indeg[v] == 0) queue.push_back(v);
    }
  }
  AcyclicResult res;
  if (popped == vertex_count) {
    res.ok = true;
    return res;
  }
  // Extract a cycle witness: walk predecessors among the unresolved vertices
  // until a vertex repeats.
  std::vector<std::vector<uint32_t>> in(vertex_count);
  for (const auto& [u, v] : edges) {
    if (indeg[v] > 0 && indeg[u] > 0) in[v].push_back(u);
  }
  uint32_t start = 0;
  for (uint32_t v = 0; v < vertex_count; ++v) {
    if (indeg[v] > 0) {
      start = v;
      break;
    }
  }
  std::vector<int64_t> seen_at(vertex_count, -1);
  std::vector<uint32_t> path;
  uint32_t cur = start;
  while (seen_at[cur] < 0) {
    seen_at[cur] = static_cast<int64_t>(path.size());
    path.push_back(cur);
    cur = in[cur].front();
  }
  res.cycle.assign(path.begin() + seen_at[cur], path.end());
  return res;
}

AcyclicResult validate_acyclic(const CollectiveDag& dag) {
  return validate_acyclic(dag.vertices.size(), dag.edges);
}

size_t BoundaryDag::count(BoundaryDir d) const {
  size_t c = 0;
  for (const auto& v : vertices) {
    if (v.dir == d) ++c;
  }
  return c;
}

BoundaryDag project_boundary(const CollectiveDag& dag,
                             const std::set<uint32_t>& real_set,
                             BoundarySide side) {
  if (real_set.empty()) throw DagError("real set must be nonempty");
  for (uint32_t r : real_set) {
    if (r >= dag.n) throw DagError("real set contains out-of-range rank");
  }
  if (real_set.size() >= dag.n) {
    throw DagError("real set must be a strict subset (nothing to emulate)");
  }

  auto is_real = [&](uint32_t r) { return real_set.count(r) != 0; };

  BoundaryDag b;
  b.kind = dag.kind;
  b.side = side;
  b.n = dag.n;

  // Retain the chosen side's task of every crossing message, in canonical
  // (step, src, dst) order.
  std::vector<uint32_t> task_vid;  // full-dag vertex id per boundary vertex
  for (uint32_t p = 0; p < dag.positions; ++p) {
    struct Row {
      MsgDesc msg;
      BoundaryDir dir;
      uint32_t vid;
      TaskKind tk;
    };
    std::vector<Row> rows;
    for (uint32_t r = 0; r < dag.n; ++r) {
      const MsgDesc m = scheduled_send(dag, r, p);
      if (is_real(m.src_rank) == is_real(m.dst_rank)) continue;
      const BoundaryDir dir = is_real(m.src_rank) ? BoundaryDir::kFromReal
                                                  : BoundaryDir::kToReal;
      // The owning side keeps its own task: for the emulated view a from-real
      // message is a recv (at the emulated dst), a to-real message is a send
      // (at the emulated src). The real view mirrors this.
      const bool own_send = (side == BoundarySide::kEmulated)
                                ? dir == BoundaryDir::kToReal
                                : dir == BoundaryDir::kFromReal;
      Row row;
      row.msg = m;
      row.dir = dir;
      row.tk = own_send ? TaskKind::kSend : TaskKind::kRecv;
      row.vid = own_send ? dag.vid(m.src_rank, p, TaskKind::kSend)
                         : dag.vid(m.dst_rank, p, TaskKind::kRecv);
      rows.push_back(row);
    }
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& c) {
      return std::tie(a.msg.src_rank, a.msg.dst_rank) <
             std::tie(c.msg.src_rank, c.msg.dst_rank);
    });
    for (const Row& row : rows) {
      BoundaryDag::Vertex v;
      v.dir = row.dir;
      v.task_kind = row.tk;
      v.msg = row.msg;
      b.vertices.push_back(v);
      task_vid.push_back(row.vid);
    }
  }

  // Full-DAG reachability restricted to the retained tasks.
  const size_t nb = b.vertices.size();
  std::vector<std::vector<uint32_t>> out(dag.vertices.size());
  for (const auto& [u, v] : dag.edges) out[u].push_back(v);
  std::vector<std::vector<bool>> reach(nb,
                                       std::vector<bool>(nb, false));
  std::map<uint32_t, uint32_t> vid_to_bidx;
  for (size_t i = 0; i < nb; ++i) vid_to_bidx[task_vid[i]] = i;
  std::vector<uint8_t> mark(dag.vertices.size());
  for (size_t i = 0; i < nb; ++i) {
    std::fill(mark.begin(), mark.end(), 0);
    std::vector<uint32_t> stack{task_vid[i]};
    mark[task_vid[i]] = 1;
    while (!stack.empty()) {
      const uint32_t u = stack.back();
      stack.pop_back();
      for (uint32_t v : out[u]) {
        if (mark[v]) continue;
        mark[v] = 1;
        stack.push_back(v);
      }
    }
    for (size_t j = 0; j < nb; ++j) {
      if (j != i && mark[task_vid[j]]) reach[i][j] = true;
    }
  }

  // Transitive reduction: drop (u,v) when some retained w lies between them.
  b.preds.resize(nb);
  for (size_t u = 0; u < nb; ++u) {
    for (size_t v = 0; v < nb; ++v) {
      if (!reach[u][v]) continue;
      bool covered = false;
      for (size_t w = 0; w < nb && !covered; ++w) {
        if (w != u && w != v && reach[u][w] && reach[w][v]) covered = true;
      }
      if (!covered) {
        b.edges.emplace_back(static_cast<uint32_t>(u),
                             static_cast<uint32_t>(v));
        b.preds[v].push_back(static_cast<uint32_t>(u));
      }
    }
  }
  return b;
}

bool check_isomorphic(const BoundaryDag& a, const BoundaryDag& b) {
  if (a.vertices.size() != b.vertices.size()) return false;
  const size_t nb = a.vertices.size();
  bool all_same = true;
  bool all_flipped = true;
  for (size_t i = 0; i < nb; ++i) {
    const auto& va = a.vertices[i];
    const auto& vb = b.vertices[i];
    // Canonical order means the bijection is positional; messages must agree
    // exactly (step, chunk, endpoints, size) and so must the direction label.
    if (!(va.msg == vb.msg) || va.dir != vb.dir) return false;
    if (va.task_kind != vb.task_kind) all_same = false;
    if (va.task_kind == vb.task_kind) all_flipped = false;
  }
  if (!all_same && !all_flipped) return false;
  auto ea = a.edges;
  auto eb = b.edges;
  std::sort(ea.begin(), ea.end());
  std::sort(eb.begin(), eb.end());
  return ea == eb;
}

std::string dump_dag(const CollectiveDag& dag) {
  std::ostringstream os;
  os << "# collective " << coll_kind_name(dag.kind) << " n=" << dag.n
     << " positions=" << dag.positions << "\n";
  for (const auto& t : dag.vertices) {
    os << t.msg.op_id << " " << (t.kind == TaskKind::kSend ? "send" : "recv")
       << " " << t.msg.step << " " << t.msg.src_rank << " " << t.msg.dst_rank
       << " " << t.msg.chunk_index << " " << t.msg.size_bytes << "\n";
  }
  os << "edges\n";
  auto edges = dag.edges;
  std::sort(edges.begin(), edges.end());
  for (const auto& [u, v] : edges) os << u << " " << v << "\n";
  return os.str();
}

std::string dump_boundary(const BoundaryDag& b) {
  std::ostringstream os;
  os << "# boundary " << coll_kind_name(b.kind) << " n=" << b.n << " side="
     << (b.side == BoundarySide::kEmulated ? "emulated" : "real") << "\n";
  for (const auto& v : b.vertices) {
    os << v.msg.op_id << " " << boundary_dir_name(v.dir) << ":"
       << (v.task_kind == TaskKind::kSend ? "send" : "recv") << " "
       << v.msg.step << " " << v.msg.src_rank << " " << v.msg.dst_rank << " "
       << v.msg.chunk_index << " " << v.msg.size_bytes << "\n";
  }
  os << "edges\n";
  auto edges = b.edges;
  std::sort(edges.begin(), edges.end());
  for (const auto& [u, v] : edges) os << u << " " << v << "\n";
  return os.str();
}

}  // namespace cemu
