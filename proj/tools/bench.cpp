// Compares the OpenMP kernels against their serial references on synthetic
// workloads and checks that both produce identical results.

#include <cstdio>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "thd/ensemble.hpp"
#include "thd/merge.hpp"
#include "thd/restoration.hpp"
#include "thd/rng.hpp"

namespace {

double now() {
#ifdef _OPENMP
  return omp_get_wtime();
#else
  return static_cast<double>(clock()) / CLOCKS_PER_SEC;
#endif
}

std::string random_text(thd::Rng& rng, std::size_t len) {
  static const char alphabet[] = "abcdefghijklmnopqrstuvwxyz0123456789+-*/= ()\n";
  std::string s;
  s.reserve(len);
  for (std::size_t i = 0; i < len; ++i) {
    s.push_back(alphabet[rng.next_below(sizeof(alphabet) - 1)]);
  }
  return s;
}

void bench_fuzzy_restore() {
  thd::Rng rng(7);
  const std::string response = random_text(rng, 4000);
  std::vector<std::string> fragments;
  for (int i = 0; i < 24; ++i) {
    const std::size_t start = rng.next_below(response.size() - 80);
    std::string frag = response.substr(start, 40 + rng.next_below(40));
    for (int e = 0; e < 3; ++e) {  // a few corruptions so the scan cannot shortcut
      frag[rng.next_below(frag.size())] = '#';
    }
    fragments.push_back(frag);
  }
  const thd::RestorationConfig cfg;

  double t0 = now();
  std::size_t hits_serial = 0;
  for (const auto& f : fragments) {
    if (thd::fuzzy_restore_serial(f, response, cfg)) ++hits_serial;
  }
  const double serial = now() - t0;

  t0 = now();
  std::vector<std::optional<thd::Span>> parallel_out;
  for (const auto& f : fragments) {
    parallel_out.push_back(thd::fuzzy_restore(f, response, cfg));
  }
  const double parallel = now() - t0;

  std::size_t hits_parallel = 0;
  bool identical = true;
  for (std::size_t i = 0; i < fragments.size(); ++i) {
    if (parallel_out[i]) ++hits_parallel;
    const auto ref = thd::fuzzy_restore_serial(fragments[i], response, cfg);
    identical &= (parallel_out[i].has_value() == ref.has_value()) &&
                 (!ref || (parallel_out[i]->start == ref->start && parallel_out[i]->end == ref->end));
  }

  std::printf("fuzzy_restore     serial %7.3fs  parallel %7.3fs  speedup %5.2fx  match %s\n",
              serial, parallel, serial / parallel,
              identical && hits_serial == hits_parallel ? "yes" : "NO");
}

void bench_bootstrap() {
  thd::Rng rng(11);
  std::vector<thd::ValidationSample> validation;
  const std::vector<std::string> critics = {"c1", "c2", "c3"};
  for (int s = 0; s < 64; ++s) {
    thd::ValidationSample v;
    v.ground_truth.scores.resize(80);
    v.per_critic.resize(3);
    for (auto& c : v.per_critic) c.scores.resize(80);
    for (int i = 0; i < 80; ++i) {
      const double a = rng.next_double(), b = rng.next_double(), c = rng.next_double();
      v.per_critic[0].scores[i] = a;
      v.per_critic[1].scores[i] = b;
      v.per_critic[2].scores[i] = c;
      v.ground_truth.scores[i] = 0.5 * a + 0.3 * b + 0.2 * c;
    }
    validation.push_back(std::move(v));
  }

  double t0 = now();
  const auto ci_serial = thd::bootstrap_weights_serial(validation, critics, 2000, 42);
  const double serial = now() - t0;
  t0 = now();
  const auto ci_parallel = thd::bootstrap_weights(validation, critics, 2000, 42);
  const double parallel = now() - t0;

  bool identical = true;
  for (std::size_t k = 0; k < critics.size(); ++k) {
    identical &= ci_serial.intervals[k].lo == ci_parallel.intervals[k].lo &&
                 ci_serial.intervals[k].hi == ci_parallel.intervals[k].hi;
  }
  std::printf("bootstrap_weights serial %7.3fs  parallel %7.3fs  speedup %5.2fx  match %s\n",
              serial, parallel, serial / parallel, identical ? "yes" : "NO");
}

thd::TensorMap random_map(thd::Rng& rng, int tensors, std::size_t elems) {
  thd::TensorMap m;
  for (int t = 0; t < tensors; ++t) {
    thd::Tensor tensor;
    tensor.shape = {elems};
    tensor.data.resize(elems);
    for (auto& v : tensor.data) v = static_cast<float>(rng.next_double(-1.0, 1.0));
    m.entries.emplace("tensor_" + std::to_string(t), std::move(tensor));
  }
  return m;
}

void bench_merge() {
  thd::Rng rng(13);
  const auto base = random_map(rng, 24, 200000);
  const auto a = random_map(rng, 24, 200000);
  const auto b = random_map(rng, 24, 200000);
  thd::MergeConfig cfg;
  cfg.seed = 5;

  double t0 = now();
  const auto ties_s = thd::ties_merge_serial(base, a, b, cfg);
  const auto dare_s = thd::dare_merge_serial(a, thd::task_vector_of(b, base), cfg);
  const double serial = now() - t0;

  t0 = now();
  const auto ties_p = thd::ties_merge(base, a, b, cfg);
  const auto dare_p = thd::dare_merge(a, thd::task_vector_of(b, base), cfg);
  const double parallel = now() - t0;

  bool identical = true;
  for (const auto& [name, tensor] : ties_s.entries) {
    identical &= tensor.data == ties_p.entries.at(name).data;
  }
  for (const auto& [name, tensor] : dare_s.entries) {
    identical &= tensor.data == dare_p.entries.at(name).data;
  }
  std::printf("merge (ties+dare) serial %7.3fs  parallel %7.3fs  speedup %5.2fx  match %s\n",
              serial, parallel, serial / parallel, identical ? "yes" : "NO");
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("threads: %d\n", omp_get_max_threads());
#else
  std::printf("threads: 1 (compiled without OpenMP)\n");
#endif
  bench_fuzzy_restore();
  bench_bootstrap();
  bench_merge();
  return 0;
}
