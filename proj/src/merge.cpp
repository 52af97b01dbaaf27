#include "thd/merge.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "thd/errors.hpp"
#include "thd/rng.hpp"

namespace thd {

namespace {

constexpr char kMagic[4] = {'T', 'H', 'D', 'T'};
constexpr uint32_t kVersion = 1;

std::vector<const std::string*> sorted_names(const TensorMap& m) {
  std::vector<const std::string*> names;
  names.reserve(m.entries.size());
  for (const auto& [name, tensor] : m.entries) names.push_back(&name);
  return names;  // std::map iterates in name order already
}

TensorMap like(const TensorMap& proto) {
  TensorMap out;
  for (const auto& [name, tensor] : proto.entries) {
    Tensor t;
    t.shape = tensor.shape;
    t.data.assign(tensor.data.size(), 0.0f);
    out.entries.emplace(name, std::move(t));
  }
  return out;
}

// Magnitude threshold below which task-vector entries are pruned: the value
// of the ceil(frac*n)-th largest |tau| entry. Everything >= the threshold
// survives, so ties at the boundary are all kept.
float keep_threshold(std::vector<float> mags, double frac) {
  if (mags.empty()) return 0.0f;
  auto k = static_cast<std::size_t>(std::ceil(frac * static_cast<double>(mags.size())));
  k = std::clamp<std::size_t>(k, 1, mags.size());
  std::nth_element(mags.begin(), mags.begin() + static_cast<long>(k - 1), mags.end(),
                   std::greater<float>());
  return mags[k - 1];
}

void ties_one_tensor(const Tensor& base, const Tensor& a, const Tensor& b, float alpha,
                     float thr_a, float thr_b, Tensor& out) {
  const std::size_t n = base.data.size();
  for (std::size_t i = 0; i < n; ++i) {
    const float ta_raw = a.data[i] - base.data[i];
    const float tb_raw = b.data[i] - base.data[i];
    const float ta = std::fabs(ta_raw) >= thr_a ? ta_raw : 0.0f;
    const float tb = std::fabs(tb_raw) >= thr_b ? tb_raw : 0.0f;

    const float pos = (ta > 0.0f ? ta : 0.0f) + (tb > 0.0f ? tb : 0.0f);
    const float neg = (ta < 0.0f ? -ta : 0.0f) + (tb < 0.0f ? -tb : 0.0f);

    float merged = 0.0f;
    if (pos > neg) {
      merged = pos;
    } else if (neg > pos) {
      merged = -neg;
    }  // exact tie (including both pruned): entry contributes nothing
    out.data[i] = base.data[i] + alpha * merged;
  }
}

template <typename Fn>
void for_each_tensor(const TensorMap& proto, bool parallel, Fn&& fn) {
  const auto names = sorted_names(proto);
  const long long n = static_cast<long long>(names.size());
  if (parallel) {
#pragma omp parallel for schedule(dynamic)
    for (long long i = 0; i < n; ++i) fn(*names[static_cast<std::size_t>(i)]);
  } else {
    for (long long i = 0; i < n; ++i) fn(*names[static_cast<std::size_t>(i)]);
  }
}

TensorMap average_impl(const TensorMap& a, const TensorMap& b, bool parallel) {
  check_compatible(a, b, "average_merge");
  TensorMap out = like(a);
  for_each_tensor(a, parallel, [&](const std::string& name) {
    const auto& ta = a.entries.at(name).data;
    const auto& tb = b.entries.at(name).data;
    auto& to = out.entries.at(name).data;
    for (std::size_t i = 0; i < ta.size(); ++i) to[i] = (ta[i] + tb[i]) / 2.0f;
  });
  return out;
}

TensorMap task_vector_impl(const TensorMap& base, const TensorMap& a, const TensorMap& b,
                           const MergeConfig& cfg, bool parallel) {
  check_compatible(base, a, "task_vector_merge(base,a)");
  check_compatible(base, b, "task_vector_merge(base,b)");
  const float alpha = static_cast<float>(cfg.alpha);
  TensorMap out = like(base);
  for_each_tensor(base, parallel, [&](const std::string& name) {
    const auto& tb = base.entries.at(name).data;
    const auto& da = a.entries.at(name).data;
    const auto& db = b.entries.at(name).data;
    auto& to = out.entries.at(name).data;
    for (std::size_t i = 0; i < tb.size(); ++i) {
      to[i] = tb[i] + alpha * ((da[i] - tb[i]) + (db[i] - tb[i]));
    }
  });
  return out;
}

TensorMap ties_impl(const TensorMap& base, const TensorMap& a, const TensorMap& b,
                    const MergeConfig& cfg, bool parallel) {
  check_compatible(base, a, "ties_merge(base,a)");
  check_compatible(base, b, "ties_merge(base,b)");
  if (!(cfg.ties_keep_fraction > 0.0 && cfg.ties_keep_fraction <= 1.0)) {
    throw ValidationError("ties_merge: keep fraction must lie in (0,1]");
  }
  const float alpha = static_cast<float>(cfg.alpha);
  TensorMap out = like(base);

  float global_a = 0.0f, global_b = 0.0f;
  if (cfg.ties_global_threshold) {
    std::vector<float> mags_a, mags_b;
    for (const auto& [name, tensor] : base.entries) {
      const auto& da = a.entries.at(name).data;
      const auto& db = b.entries.at(name).data;
      for (std::size_t i = 0; i < tensor.data.size(); ++i) {
        mags_a.push_back(std::fabs(da[i] - tensor.data[i]));
        mags_b.push_back(std::fabs(db[i] - tensor.data[i]));
      }
    }
    global_a = keep_threshold(std::move(mags_a), cfg.ties_keep_fraction);
    global_b = keep_threshold(std::move(mags_b), cfg.ties_keep_fraction);
  }

  for_each_tensor(base, parallel, [&](const std::string& name) {
    const Tensor& tb = base.entries.at(name);
    const Tensor& ta = a.entries.at(name);
    const Tensor& tc = b.entries.at(name);
    float thr_a = global_a, thr_b = global_b;
    if (!cfg.ties_global_threshold) {
      std::vector<float> mags_a(tb.data.size()), mags_b(tb.data.size());
      for (std::size_t i = 0; i < tb.data.size(); ++i) {
        mags_a[i] = std::fabs(ta.data[i] - tb.data[i]);
        mags_b[i] = std::fabs(tc.data[i] - tb.data[i]);
      }
      thr_a = keep_threshold(std::move(mags_a), cfg.ties_keep_fraction);
      thr_b = keep_threshold(std::move(mags_b), cfg.ties_keep_fraction);
    }
    ties_one_tensor(tb, ta, tc, alpha, thr_a, thr_b, out.entries.at(name));
  });
  return out;
}

TensorMap dare_impl(const TensorMap& theta, const TensorMap& tau, const MergeConfig& cfg,
                    bool parallel) {
  check_compatible(theta, tau, "dare_merge");
  if (!(cfg.dare_drop_prob >= 0.0 && cfg.dare_drop_prob < 1.0)) {
    throw ValidationError("dare_merge: drop probability must lie in [0,1)");
  }
  const float alpha = static_cast<float>(cfg.alpha);
  const float scale = static_cast<float>(1.0 / (1.0 - cfg.dare_drop_prob));
  TensorMap out = like(theta);
  for_each_tensor(theta, parallel, [&](const std::string& name) {
    const auto& th = theta.entries.at(name).data;
    const auto& tv = tau.entries.at(name).data;
    auto& to = out.entries.at(name).data;
    Rng rng(cfg.seed, name);
    for (std::size_t i = 0; i < th.size(); ++i) {
      const bool drop = rng.next_double() < cfg.dare_drop_prob;
      const float survivor = drop ? 0.0f : tv[i] * scale;
      to[i] = th[i] + alpha * survivor;
    }
  });
  return out;
}

}  // namespace

uint64_t Tensor::element_count() const {
  uint64_t n = 1;
  for (uint64_t d : shape) {
    if (d != 0 && n > UINT64_MAX / d) {
      throw ValidationError("tensor shape overflows the element count");
    }
    n *= d;
  }
  return n;
}

void check_compatible(const TensorMap& a, const TensorMap& b, const std::string& what) {
  if (a.entries.size() != b.entries.size()) {
    throw ShapeError(what + ": maps have " + std::to_string(a.entries.size()) + " vs " +
                     std::to_string(b.entries.size()) + " tensors");
  }
  for (const auto& [name, tensor] : a.entries) {
    auto it = b.entries.find(name);
    if (it == b.entries.end()) {
      throw ShapeError(what + ": tensor '" + name + "' missing from second map");
    }
    if (it->second.shape != tensor.shape) {
      throw ShapeError(what + ": tensor '" + name + "' has mismatched shapes");
    }
  }
}

TensorMap task_vector_of(const TensorMap& tuned, const TensorMap& base) {
  check_compatible(tuned, base, "task_vector_of");
  TensorMap out = like(tuned);
  for (const auto& [name, tensor] : tuned.entries) {
    const auto& b = base.entries.at(name).data;
    auto& o = out.entries.at(name).data;
    for (std::size_t i = 0; i < tensor.data.size(); ++i) o[i] = tensor.data[i] - b[i];
  }
  return out;
}

TensorMap average_merge(const TensorMap& a, const TensorMap& b) { return average_impl(a, b, true); }
TensorMap average_merge_serial(const TensorMap& a, const TensorMap& b) {
  return average_impl(a, b, false);
}

TensorMap task_vector_merge(const TensorMap& base, const TensorMap& a, const TensorMap& b,
                            const MergeConfig& cfg) {
  return task_vector_impl(base, a, b, cfg, true);
}
TensorMap task_vector_merge_serial(const TensorMap& base, const TensorMap& a, const TensorMap& b,
                                   const MergeConfig& cfg) {
  return task_vector_impl(base, a, b, cfg, false);
}

TensorMap ties_merge(const TensorMap& base, const TensorMap& a, const TensorMap& b,
                     const MergeConfig& cfg) {
  return ties_impl(base, a, b, cfg, true);
}
TensorMap ties_merge_serial(const TensorMap& base, const TensorMap& a, const TensorMap& b,
                            const MergeConfig& cfg) {
  return ties_impl(base, a, b, cfg, false);
}

TensorMap dare_merge(const TensorMap& theta, const TensorMap& tau, const MergeConfig& cfg) {
  return dare_impl(theta, tau, cfg, true);
}
TensorMap dare_merge_serial(const TensorMap& theta, const TensorMap& tau, const MergeConfig& cfg) {
  return dare_impl(theta, tau, cfg, false);
}

void write_tensor_map(const std::string& path, const TensorMap& map) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot open '" + path + "' for writing");

  auto put_u32 = [&](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  out.write(kMagic, 4);
  put_u32(kVersion);
  put_u32(static_cast<uint32_t>(map.entries.size()));
  for (const auto& [name, tensor] : map.entries) {
    if (tensor.element_count() != tensor.data.size()) {
      throw ValidationError("tensor '" + name + "': data length does not match shape");
    }
    if (name.size() > 0xffff) throw ValidationError("tensor name too long: '" + name + "'");
    const auto name_len = static_cast<uint16_t>(name.size());
    out.write(reinterpret_cast<const char*>(&name_len), 2);
    out.write(name.data(), static_cast<long>(name.size()));
    const auto rank = static_cast<uint8_t>(tensor.shape.size());
    out.write(reinterpret_cast<const char*>(&rank), 1);
    for (uint64_t d : tensor.shape) out.write(reinterpret_cast<const char*>(&d), 8);
    out.write(reinterpret_cast<const char*>(tensor.data.data()),
              static_cast<long>(tensor.data.size() * sizeof(float)));
  }
  if (!out) throw ValidationError("write failed for '" + path + "'");
}

TensorMap read_tensor_map(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");

  auto fail = [&](const std::string& why) -> void {
    throw ValidationError("tensor container '" + path + "': " + why);
  };
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) fail("bad magic");
  uint32_t version = 0, count = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&count), 4);
  if (!in || version != kVersion) fail("unsupported version");

  TensorMap map;
  for (uint32_t e = 0; e < count; ++e) {
    uint16_t name_len = 0;
    in.read(reinterpret_cast<char*>(&name_len), 2);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    uint8_t rank = 0;
    in.read(reinterpret_cast<char*>(&rank), 1);
    if (!in) fail("truncated entry header");
    Tensor t;
    t.shape.resize(rank);
    for (auto& d : t.shape) in.read(reinterpret_cast<char*>(&d), 8);
    if (!in) fail("truncated shape for '" + name + "'");
    const uint64_t elems = t.element_count();
    if (elems > (1ull << 40)) fail("implausible element count for '" + name + "'");
    t.data.resize(elems);
    in.read(reinterpret_cast<char*>(t.data.data()), static_cast<long>(t.data.size() * sizeof(float)));
    if (!in) fail("truncated payload for '" + name + "'");
    if (!map.entries.emplace(std::move(name), std::move(t)).second) fail("duplicate tensor name");
  }
  return map;
}

}  // namespace thd
