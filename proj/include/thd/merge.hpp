#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace thd {

// Checkpoint-merging arithmetic over generic named-tensor maps. All methods
// operate elementwise in 32-bit floats, matching checkpoint practice, and
// preserve the name/shape set exactly.

struct Tensor {
  std::vector<uint64_t> shape;
  std::vector<float> data;

  uint64_t element_count() const;
};

struct TensorMap {
  std::map<std::string, Tensor> entries;  // ordered: deterministic iteration
};

enum class MergeMethod { average, task_vector, ties, dare };

struct MergeConfig {
  MergeMethod method = MergeMethod::average;
  double alpha = 1.0;
  double ties_keep_fraction = 0.20;   // fraction of largest-magnitude entries kept
  bool ties_global_threshold = false; // threshold over all tensors instead of per tensor
  double dare_drop_prob = 0.80;
  uint64_t seed = 0;
};

// Throws ShapeError unless both maps have identical name/shape sets.
void check_compatible(const TensorMap& a, const TensorMap& b, const std::string& what);

// Elementwise difference a - base (the task vector of a fine-tuned
// checkpoint against its shared base).
TensorMap task_vector_of(const TensorMap& tuned, const TensorMap& base);

TensorMap average_merge(const TensorMap& a, const TensorMap& b);
TensorMap task_vector_merge(const TensorMap& base, const TensorMap& a, const TensorMap& b,
                            const MergeConfig& cfg);
// Prunes each task vector to its largest-magnitude entries, elects the
// per-entry sign carrying more total magnitude (exact tie zeroes the entry),
// sums the sign-consistent values, and adds alpha times the result to base.
TensorMap ties_merge(const TensorMap& base, const TensorMap& a, const TensorMap& b,
                     const MergeConfig& cfg);
// Bernoulli-drops task-vector entries at dare_drop_prob, rescales survivors
// by 1/(1-p), and adds alpha times the result to theta. The drop mask for a
// tensor comes from the (seed, tensor name) stream, so the parallel and
// serial paths agree.
TensorMap dare_merge(const TensorMap& theta, const TensorMap& tau, const MergeConfig& cfg);

// Single-threaded references for the parallel kernels above.
TensorMap average_merge_serial(const TensorMap& a, const TensorMap& b);
TensorMap task_vector_merge_serial(const TensorMap& base, const TensorMap& a, const TensorMap& b,
                                   const MergeConfig& cfg);
TensorMap ties_merge_serial(const TensorMap& base, const TensorMap& a, const TensorMap& b,
                            const MergeConfig& cfg);
TensorMap dare_merge_serial(const TensorMap& theta, const TensorMap& tau, const MergeConfig& cfg);

// Container file: magic "THDT", version u32, entry count u32, then per entry
// name length u16 + UTF-8 name, rank u8, dims as u64, raw little-endian f32
// payload. Entries are written in name order.
void write_tensor_map(const std::string& path, const TensorMap& map);
TensorMap read_tensor_map(const std::string& path);

}  // namespace thd
