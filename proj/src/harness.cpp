#include "cemu/harness.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "cemu/clock.hpp"
#include "cemu/csv.hpp"
#include "cemu/stats.hpp"

namespace cemu {

uint64_t ModelSpec::total_grad_bytes() const {
  uint64_t sum = 0;
  for (const auto& l : layers) sum += l.grad_bytes;
  return sum;
}

int64_t ModelSpec::total_compute_us() const {
  int64_t sum = update_us;
  for (const auto& l : layers) sum += l.forward_us + l.backward_us;
  return sum;
}

ModelSpec parse_model_spec(const std::string& text) {
  ModelSpec m;
  m.layers.clear();
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  bool have_iters = false;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const size_t b = s.find_first_not_of(" \t\r\n");
      if (b == std::string::npos) return std::string();
      const size_t e = s.find_last_not_of(" \t\r\n");
      return s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("model line " + std::to_string(lineno) +
                        ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    auto as_u64 = [&](const std::string& v) {
      char* end = nullptr;
      const unsigned long long r = std::strtoull(v.c_str(), &end, 10);
      if (v.empty() || *end != '\0') {
        throw ConfigError("model " + key + ": expected integer, got '" + v +
                          "'");
      }
      return static_cast<uint64_t>(r);
    };
    if (key == "name") {
      m.name = val;
    } else if (key == "iterations") {
      m.iterations = static_cast<uint32_t>(as_u64(val));
      have_iters = true;
    } else if (key == "warmup") {
      m.warmup_iterations = static_cast<uint32_t>(as_u64(val));
    } else if (key == "update_us") {
      m.update_us = static_cast<int64_t>(as_u64(val));
    } else if (key == "layer") {
      // layer = <forward_us> <backward_us> <grad_bytes>
      std::istringstream ls(val);
      LayerSpec l;
      if (!(ls >> l.forward_us >> l.backward_us >> l.grad_bytes)) {
        throw ConfigError("model layer: expected 'forward_us backward_us "
                          "grad_bytes', got '" + val + "'");
      }
      std::string extra;
      if (ls >> extra) {
        throw ConfigError("model layer: trailing token '" + extra + "'");
      }
      if (l.forward_us < 0 || l.backward_us < 0) {
        throw ConfigError("model layer: durations must be >= 0");
      }
      m.layers.push_back(l);
    } else {
      throw ConfigError("model " + key + ": unknown key");
    }
  }
  if (m.layers.empty()) {
    throw ConfigError("model: needs at least one layer");
  }
  if (!have_iters || m.iterations == 0) {
    throw ConfigError("model iterations: must be >= 1");
  }
  if (m.warmup_iterations >= m.iterations) {
    throw ConfigError("model warmup: must be < iterations");
  }
  return m;
}

std::string render_model_spec(const ModelSpec& m) {
  std::ostringstream out;
  out << "name = " << m.name << "\n";
  out << "iterations = " << m.iterations << "\n";
  out << "warmup = " << m.warmup_iterations << "\n";
  out << "update_us = " << m.update_us << "\n";
  for (const auto& l : m.layers) {
    out << "layer = " << l.forward_us << " " << l.backward_us << " "
        << l.grad_bytes << "\n";
  }
  return out.str();
}

std::optional<ModelSpec> builtin_model(const std::string& name) {
  ModelSpec m;
  m.name = name;
  m.iterations = 60;
  m.warmup_iterations = 10;
  if (name == "bert-like") {
    // 4 buckets of 2 ms backward each with the shipped 64 KiB bucket size
    m.layers.assign(4, LayerSpec{1000, 2000, 64 * 1024});
  } else if (name == "small") {
    // everything fits one bucket
    m.layers.assign(2, LayerSpec{1000, 2000, 32 * 1024});
  } else if (name == "wide") {
    // 16 buckets, 1 ms backward each
    m.layers.assign(16, LayerSpec{1000, 1000, 64 * 1024});
  } else {
    return std::nullopt;
  }
  return m;
}

std::vector<std::string> builtin_model_names() {
  return {"bert-like", "small", "wide"};
}

ModelSpec load_model_spec(const std::string& name_or_path) {
  if (auto m = builtin_model(name_or_path)) return *m;
  std::ifstream in(name_or_path);
  if (!in) {
    throw ConfigError("model '" + name_or_path +
                      "' is neither a built-in profile nor a readable file");
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_model_spec(ss.str());
}

std::vector<Bucket> bucketize(const ModelSpec& model, uint64_t bucket_bytes) {
  // Close-on-overflow also covers the oversized-layer rule: such a layer
  // starts its own bucket and the next layer necessarily overflows it.
  std::vector<Bucket> out;
  Bucket cur;
  bool open = false;
  for (auto it = model.layers.rbegin(); it != model.layers.rend(); ++it) {
    const uint32_t layer =
        static_cast<uint32_t>(model.layers.rend() - it - 1);
    const uint64_t bytes = it->grad_bytes;
    if (open && cur.bytes + bytes > bucket_bytes) {
      out.push_back(cur);
      open = false;
    }
    if (!open) {
      cur = Bucket{layer, layer, 0};
      open = true;
    }
    cur.first_layer = layer;
    cur.bytes += bytes;
  }
  if (open) out.push_back(cur);
  return out;
}

std::vector<CollectivePlanEntry> harness_plan(const ModelSpec& model,
                                              uint64_t bucket_bytes) {
  std::vector<CollectivePlanEntry> plan;
  for (const Bucket& b : bucketize(model, bucket_bytes)) {
    if (b.bytes == 0) continue;  // nothing to reduce, no call is made
    CollectivePlanEntry e;
    e.kind = CollKind::kAllReduce;
    e.bytes = b.bytes;
    e.elem_size = 1;
    plan.push_back(e);
  }
  return plan;
}

std::vector<IterationTrace> run_training_loop(const JobConfig& cfg,
                                              const ModelSpec& model,
                                              WorkerSession& session) {
  const std::vector<Bucket> buckets = bucketize(model, cfg.bucket_bytes);
  // One gradient buffer per bucket so several all-reduce calls can be in
  // flight; contents are synthetic (zeros).
  std::vector<std::vector<uint8_t>> grads;
  for (const Bucket& b : buckets) grads.emplace_back(b.bytes, 0);

  std::vector<IterationTrace> traces;
  traces.reserve(model.iterations);
  const uint32_t num_layers = static_cast<uint32_t>(model.layers.size());

  for (uint32_t iter = 0; iter < model.iterations; ++iter) {
    IterationTrace tr;
    tr.iteration = iter;
    tr.start_us = now_us();

    for (const LayerSpec& l : model.layers) {
      emulate_compute_us(l.forward_us);
    }

    // Backward pass: gradients become ready in reverse layer order and each
    // bucket's all-reduce is issued the moment the bucket fills, overlapping
    // communication with the remaining backward compute.
    std::vector<CollHandle> handles(buckets.size());
    std::vector<int64_t> skipped_at(buckets.size(), 0);
    size_t next_bucket = 0;
    for (uint32_t i = num_layers; i-- > 0;) {
      emulate_compute_us(model.layers[i].backward_us);
      if (next_bucket < buckets.size() &&
          buckets[next_bucket].first_layer == i) {
        if (buckets[next_bucket].bytes > 0) {
          handles[next_bucket] =
              session.allreduce_async(std::span<uint8_t>(grads[next_bucket]),
                                      /*elem_size=*/1);
        } else {
          skipped_at[next_bucket] = now_us();  // empty bucket: no call
        }
        ++next_bucket;
      }
    }
    // A final partial bucket (if any) was issued at backward end by the same
    // first_layer == 0 condition; wait for everything in issue order.
    for (size_t b = 0; b < buckets.size(); ++b) {
      BucketTrace bt;
      bt.bucket_id = static_cast<uint32_t>(b);
      if (handles[b]) {
        session.wait(handles[b]);
        bt.issue_us = handles[b]->issue_us();
        bt.complete_us = handles[b]->complete_us();
      } else {
        bt.issue_us = skipped_at[b];
        bt.complete_us = skipped_at[b];
      }
      tr.buckets.push_back(bt);
    }

    emulate_compute_us(model.update_us);
    tr.end_us = now_us();
    traces.push_back(std::move(tr));
  }
  return traces;
}

void write_iteration_csv(const std::string& path,
                         const std::vector<IterationTrace>& traces,
                         bool deterministic) {
  CsvWriter csv(path,
                {"iter", "start_us", "end_us", "bucket_id", "issue_us",
                 "complete_us"},
                deterministic);
  for (const auto& tr : traces) {
    for (const auto& b : tr.buckets) {
      csv.row({std::to_string(tr.iteration), std::to_string(tr.start_us),
               std::to_string(tr.end_us), std::to_string(b.bucket_id),
               std::to_string(b.issue_us), std::to_string(b.complete_us)});
    }
  }
}

std::vector<IterationTrace> read_iteration_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open trace csv '" + path + "'");
  std::string line;
  std::map<uint32_t, IterationTrace> by_iter;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;  // column names
      continue;
    }
    std::istringstream ls(line);
    std::string tok;
    std::vector<std::string> cols;
    while (std::getline(ls, tok, ',')) cols.push_back(tok);
    if (cols.size() != 6) throw ConfigError("bad trace csv row: " + line);
    const uint32_t iter = static_cast<uint32_t>(std::stoul(cols[0]));
    IterationTrace& tr = by_iter[iter];
    tr.iteration = iter;
    tr.start_us = std::stoll(cols[1]);
    tr.end_us = std::stoll(cols[2]);
    BucketTrace bt;
    bt.bucket_id = static_cast<uint32_t>(std::stoul(cols[3]));
    bt.issue_us = std::stoll(cols[4]);
    bt.complete_us = std::stoll(cols[5]);
    tr.buckets.push_back(bt);
  }
  std::vector<IterationTrace> out;
  for (auto& [iter, tr] : by_iter) out.push_back(std::move(tr));
  return out;
}

IterationStats iteration_stats(const std::vector<IterationTrace>& traces,
                               uint32_t warmup) {
  std::vector<double> xs;
  for (const auto& tr : traces) {
    if (tr.iteration < warmup) continue;
    xs.push_back(static_cast<double>(tr.iteration_time_us()));
  }
  IterationStats s;
  s.count = xs.size();
  s.mean_us = mean(xs);
  s.stddev_us = sample_stddev(xs);
  return s;
}

}  // namespace cemu
