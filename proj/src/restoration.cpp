#include "thd/restoration.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <limits>

#include "thd/errors.hpp"

namespace thd {

namespace {

bool is_ws(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

// Folded view of a string: whitespace removed, with a map from folded index
// back to the original byte position. Matching happens in folded space;
// spans are reported in original coordinates.
struct Folded {
  std::string text;
  std::vector<std::size_t> orig;  // orig[i] = original index of folded char i
};

Folded fold(const std::string& s, bool fold_ws) {
  Folded f;
  f.text.reserve(s.size());
  f.orig.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (fold_ws && is_ws(s[i])) continue;
    f.text.push_back(s[i]);
    f.orig.push_back(i);
  }
  return f;
}

// Best window seen so far. Distances are compared as exact rationals
// (dist / norm) via cross multiplication so tie-breaking never depends on
// floating-point rounding.
struct WindowHit {
  uint64_t dist = 0;
  uint64_t norm = 1;
  std::size_t start = 0;  // folded coordinates
  std::size_t len = 0;
  bool valid = false;
};

bool better(const WindowHit& a, const WindowHit& b) {
  if (!a.valid || !b.valid) return a.valid;
  const __uint128_t lhs = static_cast<__uint128_t>(a.dist) * b.norm;
  const __uint128_t rhs = static_cast<__uint128_t>(b.dist) * a.norm;
  if (lhs != rhs) return lhs < rhs;
  if (a.start != b.start) return a.start < b.start;
  return a.len < b.len;
}

// One DP sweep of fragment f against response window starting at `start`.
// The last DP row holds the edit distance of f against every window prefix,
// so a single sweep scores all admissible lengths at this start. Rows are
// abandoned once their minimum exceeds the largest distance that could still
// clear the threshold (row minima are non-decreasing).
void scan_start(const std::string& f, const std::string& r, std::size_t start, std::size_t lmin,
                std::size_t lmax, uint64_t abandon_above, double max_ndist, WindowHit& best,
                std::vector<uint64_t>& dp) {
  const std::size_t m = f.size();
  const std::size_t width = std::min(lmax, r.size() - start);
  if (width < lmin) return;

  dp.resize(width + 1);
  for (std::size_t j = 0; j <= width; ++j) dp[j] = j;

  for (std::size_t i = 1; i <= m; ++i) {
    uint64_t diag = dp[0];
    dp[0] = i;
    uint64_t row_min = dp[0];
    for (std::size_t j = 1; j <= width; ++j) {
      const uint64_t up = dp[j];
      uint64_t v = std::min(up, dp[j - 1]) + 1;
      const uint64_t sub = diag + (f[i - 1] == r[start + j - 1] ? 0 : 1);
      v = std::min(v, sub);
      diag = up;
      dp[j] = v;
      row_min = std::min(row_min, v);
    }
    if (row_min > abandon_above) return;
  }

  for (std::size_t j = lmin; j <= width; ++j) {
    const uint64_t norm = std::max<uint64_t>(m, j);
    if (static_cast<double>(dp[j]) > max_ndist * static_cast<double>(norm)) continue;
    WindowHit hit{dp[j], norm, start, j, true};
    if (better(hit, best)) best = hit;
  }
}

std::optional<Span> fuzzy_restore_impl(const std::string& fragment,
                                       const std::string& response_text,
                                       const RestorationConfig& cfg, bool parallel) {
  if (fragment.empty()) return std::nullopt;

  const Folded f = fold(fragment, cfg.whitespace_fold);
  const Folded r = fold(response_text, cfg.whitespace_fold);
  if (f.text.empty() || r.text.empty()) return std::nullopt;

  const std::size_t m = f.text.size();
  const auto lmin = static_cast<std::size_t>(std::max(1.0, std::ceil(0.7 * static_cast<double>(m))));
  const auto lmax = static_cast<std::size_t>(std::floor(1.3 * static_cast<double>(m)));
  if (lmin > r.text.size()) return std::nullopt;

  WindowHit best;

  // Distance 0 means window == folded fragment, and the earliest such window
  // is exactly the leftmost occurrence.
  const std::size_t exact = r.text.find(f.text);
  if (exact != std::string::npos) {
    best = {0, static_cast<uint64_t>(m), exact, m, true};
  } else {
    const auto cap = static_cast<uint64_t>(
        std::floor(cfg.max_normalized_edit_distance * static_cast<double>(std::max(m, lmax))));
    const std::size_t last_start = r.text.size() - lmin;

    if (parallel) {
#pragma omp parallel
      {
        WindowHit local;
        std::vector<uint64_t> dp;
#pragma omp for schedule(static) nowait
        for (long long p = 0; p <= static_cast<long long>(last_start); ++p) {
          scan_start(f.text, r.text, static_cast<std::size_t>(p), lmin, lmax, cap,
                     cfg.max_normalized_edit_distance, local, dp);
        }
#pragma omp critical
        {
          if (better(local, best)) best = local;
        }
      }
    } else {
      std::vector<uint64_t> dp;
      for (std::size_t p = 0; p <= last_start; ++p) {
        scan_start(f.text, r.text, p, lmin, lmax, cap, cfg.max_normalized_edit_distance, best, dp);
      }
    }
  }

  if (!best.valid) return std::nullopt;
  const std::size_t orig_start = r.orig[best.start];
  const std::size_t orig_end = r.orig[best.start + best.len - 1] + 1;
  return Span{orig_start, orig_end, response_text.substr(orig_start, orig_end - orig_start)};
}

}  // namespace

std::optional<Span> fuzzy_restore(const std::string& fragment, const std::string& response_text,
                                  const RestorationConfig& cfg) {
  return fuzzy_restore_impl(fragment, response_text, cfg, true);
}

std::optional<Span> fuzzy_restore_serial(const std::string& fragment,
                                         const std::string& response_text,
                                         const RestorationConfig& cfg) {
  return fuzzy_restore_impl(fragment, response_text, cfg, false);
}

std::vector<std::optional<std::string>> FuzzyRestorer::propose(
    const std::vector<std::string>& fragments, const std::string& response_text) {
  std::vector<std::optional<std::string>> out(fragments.size());
  for (std::size_t i = 0; i < fragments.size(); ++i) {
    if (auto span = fuzzy_restore(fragments[i], response_text, cfg_)) {
      out[i] = span->text;
    }
  }
  return out;
}

std::string TagProtocolRestorer::render_prompt(const std::string& prompt_template,
                                               const std::string& response_text,
                                               const std::vector<std::string>& fragments) {
  std::string extracted;
  for (std::size_t i = 0; i < fragments.size(); ++i) {
    const std::string n = std::to_string(i + 1);
    extracted += "<extract" + n + ">" + fragments[i] + "</extract" + n + ">\n";
  }
  std::string prompt = prompt_template;
  for (auto [key, value] : {std::pair<std::string, const std::string*>{"{original_text}", &response_text},
                            {"{extracted_text}", &extracted}}) {
    std::size_t pos;
    while ((pos = prompt.find(key)) != std::string::npos) {
      prompt.replace(pos, key.size(), *value);
    }
  }
  return prompt;
}

std::vector<std::optional<std::string>> TagProtocolRestorer::parse_reply(const std::string& reply,
                                                                         std::size_t expected) {
  std::vector<std::optional<std::string>> out(expected);
  for (std::size_t i = 0; i < expected; ++i) {
    const std::string n = std::to_string(i + 1);
    const std::string open = "<result" + n + ">";
    const std::string close = "</result" + n + ">";
    const std::size_t a = reply.find(open);
    if (a == std::string::npos) continue;
    const std::size_t b = reply.find(close, a + open.size());
    if (b == std::string::npos) continue;
    std::string body = reply.substr(a + open.size(), b - a - open.size());
    if (body.find("NO_MATCH_FOUND") != std::string::npos) continue;
    out[i] = std::move(body);
  }
  return out;
}

std::vector<std::optional<std::string>> TagProtocolRestorer::propose(
    const std::vector<std::string>& fragments, const std::string& response_text) {
  const std::string prompt = render_prompt(template_, response_text, fragments);
  const auto reply = completer_(prompt);
  if (!reply) {
    throw TransportError("restoration completer returned no reply");
  }
  return parse_reply(*reply, fragments.size());
}

RestorationReport restore(const std::vector<std::string>& fragments,
                          const std::string& response_text, Restorer& restorer,
                          const RestorationConfig& cfg) {
  if (cfg.max_rounds < 1) {
    throw ValidationError("restoration: max_rounds must be >= 1");
  }

  struct FragState {
    std::size_t index;
    std::string original;
    std::string current;
  };

  RestorationReport report;
  report.restored.source = "restoration";
  std::vector<Span> resolved;
  std::vector<FragState> unresolved;

  auto locate = [&](const std::string& text) {
    const std::size_t pos = response_text.find(text);
    return Span{pos, pos + text.size(), text};
  };

  for (std::size_t i = 0; i < fragments.size(); ++i) {
    if (!fragments[i].empty() && response_text.find(fragments[i]) != std::string::npos) {
      resolved.push_back(locate(fragments[i]));
      ++report.direct_match_count;
    } else {
      unresolved.push_back({i, fragments[i], fragments[i]});
    }
  }

  for (int round = 1; round <= cfg.max_rounds && !unresolved.empty(); ++round) {
    report.rounds_used = round;

    std::vector<std::string> inputs;
    inputs.reserve(unresolved.size());
    for (const auto& f : unresolved) inputs.push_back(f.current);

    std::vector<std::optional<std::string>> candidates;
    try {
      candidates = restorer.propose(inputs, response_text);
    } catch (const std::exception&) {
      ++report.failed_rounds;
      continue;  // everything stays unresolved this round
    }
    candidates.resize(unresolved.size());  // surplus dropped, missing = failure

    std::vector<FragState> next;
    for (std::size_t i = 0; i < unresolved.size(); ++i) {
      FragState& f = unresolved[i];
      const auto& cand = candidates[i];
      if (cand && !cand->empty() && response_text.find(*cand) != std::string::npos) {
        resolved.push_back(locate(*cand));
      } else {
        if (cand) f.current = *cand;  // retry the refined text next round
        next.push_back(std::move(f));
      }
    }
    unresolved = std::move(next);
  }

  for (const auto& f : unresolved) report.unrestored.push_back(f.original);
  report.post_restoration_count = resolved.size();

  std::sort(resolved.begin(), resolved.end(), [](const Span& a, const Span& b) {
    return a.start != b.start ? a.start < b.start : a.end < b.end;
  });
  report.restored.spans = std::move(resolved);
  return report;
}

}  // namespace thd
