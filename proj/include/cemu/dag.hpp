#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace cemu {

class DagError : public std::runtime_error {
 public:
  explicit DagError(const std::string& what) : std::runtime_error(what) {}
};

enum class CollKind { kAllReduce, kAllGather };

const char* coll_kind_name(CollKind k);
CollKind parse_coll_kind(const std::string& s);

enum class TaskKind { kSend, kRecv };

// One ring message: who sends which chunk to whom at which schedule position.
struct MsgDesc {
  uint32_t op_id = 0;
  uint32_t step = 0;  // schedule position, 0..positions-1
  uint32_t src_rank = 0;
  uint32_t dst_rank = 0;
  uint32_t chunk_index = 0;
  uint64_t size_bytes = 0;

  bool operator==(const MsgDesc&) const = default;
  std::string str() const;
};

// Dependency DAG of one collective call. Vertices are send/recv tasks, edges
// are data dependencies:
//   - each recv depends on its matching send, and
//   - at every rank, the send at position p+1 depends on the recv at
//     position p (the forwarded chunk is the one just received).
struct CollectiveDag {
  struct Task {
    TaskKind kind = TaskKind::kSend;
    MsgDesc msg;
    uint32_t owner_rank = 0;
  };

  CollKind kind = CollKind::kAllReduce;
  uint32_t n = 0;          // world size
  uint32_t positions = 0;  // schedule length per rank
  std::vector<Task> vertices;
  std::vector<std::pair<uint32_t, uint32_t>> edges;  // u must precede v

  // Vertex id layout: (rank * positions + position) * 2 + (send=0|recv=1).
  uint32_t vid(uint32_t rank, uint32_t position, TaskKind k) const {
    return (rank * positions + position) * 2 +
           (k == TaskKind::kSend ? 0u : 1u);
  }
};

// Element-granular chunking: `total_bytes` must be a multiple of `elem_size`;
// the element array is split into n chunks of floor(E/n) elements with the
// last chunk absorbing the remainder. elem_size=1 gives plain byte chunking.
uint64_t chunk_bytes(uint32_t n, uint64_t total_bytes, uint32_t elem_size,
                     uint32_t chunk_index);
uint64_t chunk_offset_bytes(uint32_t n, uint64_t total_bytes,
                            uint32_t elem_size, uint32_t chunk_index);

// Ring all-reduce: 2(n-1) positions per rank. Reduce-scatter steps
// s = 0..n-2 send chunk (r-s) mod n and receive chunk (r-s-1) mod n;
// all-gather steps t = 0..n-2 send chunk (r+1-t) mod n and receive
// chunk (r-t) mod n.
CollectiveDag build_ring_allreduce_dag(uint32_t n, uint64_t total_bytes,
                                       uint32_t op_id, uint32_t elem_size = 1);

// Ring all-gather: n-1 positions; at step t rank r sends chunk (r-t) mod n
// and receives chunk (r-t-1) mod n. Every chunk is one rank's whole block of
// bytes_per_rank bytes.
CollectiveDag build_ring_allgather_dag(uint32_t n, uint64_t bytes_per_rank,
                                       uint32_t op_id, uint32_t elem_size = 1);

CollectiveDag build_collective_dag(CollKind kind, uint32_t n, uint64_t bytes,
                                   uint32_t op_id, uint32_t elem_size = 1);

// The message rank `rank` sends/receives at `position`, straight from the
// schedule formulas (no DAG materialization).
MsgDesc scheduled_send(const CollectiveDag& dag, uint32_t rank,
                       uint32_t position);
MsgDesc scheduled_recv(const CollectiveDag& dag, uint32_t rank,
                       uint32_t position);

struct AcyclicResult {
  bool ok = false;
  std::vector<uint32_t> cycle;  // witness vertex ids when !ok
};

// Kahn's check over an arbitrary vertex/edge list; O(V+E).
AcyclicResult validate_acyclic(size_t vertex_count,
                               const std::vector<std::pair<uint32_t,
                                                           uint32_t>>& edges);
AcyclicResult validate_acyclic(const CollectiveDag& dag);

enum class BoundaryDir { kFromReal, kToReal };
enum class BoundarySide { kReal, kEmulated };

const char* boundary_dir_name(BoundaryDir d);

// Projection of a CollectiveDag onto the real/emulated boundary: one vertex
// per crossing message, owned by the chosen side's task (the emulated side's
// recv for a from-real message, its send for a to-real message; mirrored for
// the real side). Edges are the transitive reduction of full-DAG reachability
// restricted to the retained tasks. Vertices are in canonical order:
// ascending (step, src, dst).
struct BoundaryDag {
  struct Vertex {
    BoundaryDir dir = BoundaryDir::kFromReal;
    TaskKind task_kind = TaskKind::kSend;  // task kind on the owning side
    MsgDesc msg;
  };

  CollKind kind = CollKind::kAllReduce;
  BoundarySide side = BoundarySide::kEmulated;
  uint32_t n = 0;
  std::vector<Vertex> vertices;
  std::vector<std::pair<uint32_t, uint32_t>> edges;
  std::vector<std::vector<uint32_t>> preds;  // per-vertex predecessor ids

  size_t count(BoundaryDir d) const;
};

BoundaryDag project_boundary(const CollectiveDag& dag,
                             const std::set<uint32_t>& real_set,
                             BoundarySide side = BoundarySide::kEmulated);

// Label-preserving bijection test by canonical ordering (not general graph
// isomorphism): vertices must carry identical messages in canonical order,
// task kinds must either all match or all be flipped send<->recv, and edge
// sets must coincide under that bijection.
bool check_isomorphic(const BoundaryDag& a, const BoundaryDag& b);

// Text dump formats used by the dag tool and golden-file tests. One vertex
// per line (op_id, kind, step, src, dst, chunk, size), then the edge list as
// 0-based vertex indices in file order.
std::string dump_dag(const CollectiveDag& dag);
std::string dump_boundary(const BoundaryDag& b);

}  // namespace cemu
