#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cemu/collective.hpp"
#include "cemu/config.hpp"

namespace cemu {

// Synthetic data-parallel model: per-layer compute phases and gradient sizes.
// No tensors, no autograd; compute is emulated by calibrated busy-wait.
struct LayerSpec {
  int64_t forward_us = 0;
  int64_t backward_us = 0;
  uint64_t grad_bytes = 0;

  bool operator==(const LayerSpec&) const = default;
};

struct ModelSpec {
  std::string name = "model";
  std::vector<LayerSpec> layers;
  uint32_t iterations = 1;
  uint32_t warmup_iterations = 0;
  int64_t update_us = 0;  // optional post-backward weight-update stand-in

  bool operator==(const ModelSpec&) const = default;

  uint64_t total_grad_bytes() const;
  int64_t total_compute_us() const;
};

ModelSpec parse_model_spec(const std::string& text);
std::string render_model_spec(const ModelSpec& m);

// `name_or_path` may be one of the built-in profiles (bert-like, small,
// wide) or a path to a model spec file.
ModelSpec load_model_spec(const std::string& name_or_path);
std::optional<ModelSpec> builtin_model(const std::string& name);
std::vector<std::string> builtin_model_names();

// One all-reduce batch of gradients: a contiguous span of layers, filled
// greedily in reverse layer order (gradients become ready back-to-front).
struct Bucket {
  uint32_t first_layer = 0;  // lowest layer index in the bucket
  uint32_t last_layer = 0;   // highest layer index in the bucket
  uint64_t bytes = 0;
};

// Greedy fill in reverse layer order; a bucket closes when adding the next
// layer would exceed bucket_bytes; a single oversized layer forms its own
// bucket. Returned in issue order (reverse layer order).
std::vector<Bucket> bucketize(const ModelSpec& model, uint64_t bucket_bytes);

// The collective plan one training iteration produces: one all-reduce per
// bucket, in issue order.
std::vector<CollectivePlanEntry> harness_plan(const ModelSpec& model,
                                              uint64_t bucket_bytes);

struct BucketTrace {
  uint32_t bucket_id = 0;
  int64_t issue_us = 0;
  int64_t complete_us = 0;
};

struct IterationTrace {
  uint32_t iteration = 0;
  int64_t start_us = 0;
  int64_t end_us = 0;
  std::vector<BucketTrace> buckets;

  int64_t iteration_time_us() const { return end_us - start_us; }
};

// Forward pass, backward pass with bucketed asynchronous all-reduce
// overlapping, wait-all, optional update phase. Runs model.iterations times
// (warmup included; statistics exclude it downstream).
std::vector<IterationTrace> run_training_loop(const JobConfig& cfg,
                                              const ModelSpec& model,
                                              WorkerSession& session);

// Trace CSV: iter,start_us,end_us,bucket_id,issue_us,complete_us (one row
// per iteration x bucket).
void write_iteration_csv(const std::string& path,
                         const std::vector<IterationTrace>& traces,
                         bool deterministic);
std::vector<IterationTrace> read_iteration_csv(const std::string& path);

// Mean/stddev of iteration time over post-warmup iterations.
struct IterationStats {
  size_t count = 0;
  double mean_us = 0;
  double stddev_us = 0;
};
IterationStats iteration_stats(const std::vector<IterationTrace>& traces,
                               uint32_t warmup);

}  // namespace cemu
