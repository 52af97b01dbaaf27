#include "thd/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <functional>
#include <map>
#include <optional>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"
#include "thd/annotate.hpp"
#include "thd/applications.hpp"
#include "thd/config.hpp"
#include "thd/critic_client.hpp"
#include "thd/ensemble.hpp"
#include "thd/errors.hpp"
#include "thd/evaluation.hpp"
#include "thd/io.hpp"
#include "thd/losses.hpp"
#include "thd/merge.hpp"
#include "thd/restoration.hpp"
#include "thd/span_align.hpp"

namespace thd {

namespace {

using nlohmann::json;

struct GlobalOpts {
  std::string config_path;
  std::string out_dir;
  std::optional<uint64_t> seed;
};

// Relative artifact paths resolve against --out.
std::string out_path(const GlobalOpts& g, const std::string& p) {
  if (g.out_dir.empty() || p.empty() || std::filesystem::path(p).is_absolute()) return p;
  std::filesystem::create_directories(g.out_dir);
  return (std::filesystem::path(g.out_dir) / p).string();
}

PipelineConfig effective_config(const GlobalOpts& g) {
  PipelineConfig cfg;
  if (!g.config_path.empty()) cfg = load_config(g.config_path);
  if (g.seed) cfg.seed = *g.seed;
  return cfg;
}

std::map<std::string, SampleRecord> samples_by_id(const std::vector<SampleRecord>& samples) {
  std::map<std::string, SampleRecord> map;
  for (const auto& s : samples) {
    if (!map.emplace(s.id, s).second) {
      throw ValidationError("duplicate sample id '" + s.id + "'");
    }
  }
  return map;
}

// Tokenizations for every sample: external offsets when a tokens file is
// given, the reference tokenizer otherwise.
std::map<std::string, TokenizedResponse> resolve_tokens(const std::vector<SampleRecord>& samples,
                                                        const std::string& tokens_path) {
  std::map<std::string, TokenizedResponse> map;
  if (!tokens_path.empty()) {
    map = read_token_offsets(tokens_path);
    for (const auto& s : samples) {
      auto it = map.find(s.id);
      if (it == map.end()) throw ValidationError("no token offsets for sample '" + s.id + "'");
      if (it->second.response_text != s.response) {
        throw ValidationError("token offsets for '" + s.id + "' were built from different text");
      }
    }
  } else {
    for (const auto& s : samples) map.emplace(s.id, tokenize(s.response));
  }
  return map;
}

std::string critic_source_id(const std::string& source) {
  return source.rfind("critic:", 0) == 0 ? source.substr(7) : source;
}

// (sample, critic-major) index over a scores file.
struct ScoreIndex {
  std::vector<SoftLabelSeq> records;
  std::map<std::string, std::size_t> by_key;  // sample \x1f critic
  std::vector<std::string> critic_order;      // appearance order
  std::vector<std::string> sample_order;      // appearance order

  static std::string key(const std::string& sample, const std::string& critic) {
    return sample + '\x1f' + critic;
  }
};

ScoreIndex index_scores(const std::string& path) {
  ScoreIndex idx;
  idx.records = read_scores(path);
  std::set<std::string> seen_critics, seen_samples;
  for (std::size_t i = 0; i < idx.records.size(); ++i) {
    const auto& r = idx.records[i];
    const std::string critic = critic_source_id(r.source);
    if (!idx.by_key.emplace(ScoreIndex::key(r.sample_id, critic), i).second) {
      throw ValidationError(path + ": duplicate record for sample '" + r.sample_id +
                            "', critic '" + critic + "'");
    }
    if (seen_critics.insert(critic).second) idx.critic_order.push_back(critic);
    if (seen_samples.insert(r.sample_id).second) idx.sample_order.push_back(r.sample_id);
  }
  return idx;
}

std::vector<ValidationSample> build_validation(const ScoreIndex& scores,
                                               const std::vector<SoftLabelSeq>& gt,
                                               const std::vector<std::string>& critics) {
  std::vector<ValidationSample> out;
  for (const auto& g : gt) {
    ValidationSample v;
    v.ground_truth = g;
    for (const auto& critic : critics) {
      auto it = scores.by_key.find(ScoreIndex::key(g.sample_id, critic));
      if (it == scores.by_key.end()) {
        throw ValidationError("no scores from critic '" + critic + "' for sample '" +
                              g.sample_id + "'");
      }
      v.per_critic.push_back(scores.records[it->second]);
    }
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<EvalSample> build_eval_samples(const std::string& gt_path,
                                           const std::string& pred_path,
                                           const std::string& samples_path) {
  const auto gt = read_scores(gt_path);
  const auto pred = read_scores(pred_path);
  std::map<std::string, const SoftLabelSeq*> pred_by_id;
  for (const auto& p : pred) pred_by_id[p.sample_id] = &p;

  std::map<std::string, SampleRecord> samples;
  if (!samples_path.empty()) samples = samples_by_id(read_samples(samples_path));

  std::vector<EvalSample> out;
  for (const auto& g : gt) {
    auto it = pred_by_id.find(g.sample_id);
    if (it == pred_by_id.end()) {
      throw ValidationError("no prediction for sample '" + g.sample_id + "'");
    }
    EvalSample e;
    e.id = g.sample_id;
    e.gt = g;
    e.pred = *it->second;
    if (auto s = samples.find(g.sample_id); s != samples.end()) {
      e.final_answer_correct = s->second.final_answer_correct;
    }
    out.push_back(std::move(e));
  }
  return out;
}

SpanSet spans_from_offsets(const std::vector<std::pair<std::size_t, std::size_t>>& offsets,
                           const std::string& text, const std::string& source) {
  SpanSet set;
  set.source = source;
  for (auto [s, e] : offsets) {
    if (s > e || e > text.size()) {
      throw RangeError("span [" + std::to_string(s) + "," + std::to_string(e) +
                       ") out of bounds");
    }
    set.spans.push_back({s, e, text.substr(s, e - s)});
  }
  return set;
}

// ---------------------------------------------------------------- annotate

int cmd_annotate(const GlobalOpts& g, const std::string& samples_path,
                 const std::string& transcripts_dir, std::vector<std::string> critic_ids,
                 int critique_count, const std::string& prompts_dir, const std::string& out) {
  const PipelineConfig cfg = effective_config(g);
  const auto samples = read_samples(samples_path);
  if (critique_count <= 0 && !cfg.critique_count_set) {
    throw ValidationError("annotate: critique count is mandatory (--c or config key 'c')");
  }
  const int c_count = critique_count > 0 ? critique_count : cfg.critique_count;
  if (c_count < 1) throw ValidationError("annotate: critique count must be >= 1");

  std::vector<std::unique_ptr<CriticClient>> critics;
  if (!transcripts_dir.empty()) {
    if (critic_ids.empty()) throw ValidationError("annotate: --critics required with --transcripts");
    for (const auto& id : critic_ids) {
      critics.push_back(std::make_unique<MockCriticClient>(transcripts_dir, id));
    }
  } else {
    if (cfg.critics.empty()) {
      throw ValidationError("annotate: no critics configured (use --transcripts or --config)");
    }
    for (const auto& spec : cfg.critics) {
      if (!critic_ids.empty() &&
          std::find(critic_ids.begin(), critic_ids.end(), spec.client_id) == critic_ids.end()) {
        continue;
      }
      critics.push_back(std::make_unique<HttpCriticClient>(spec));
    }
    if (critics.empty()) throw ValidationError("annotate: --critics matched no configured critic");
  }

  std::string math_template, code_template;
  if (!prompts_dir.empty()) {
    math_template = load_text(prompts_dir + "/math_critique.txt");
    code_template = load_text(prompts_dir + "/code_critique.txt");
  } else {
    math_template = code_template = "Problem: {problem}\n\nSolution: {solution}\n";
  }

  std::vector<CritiqueRecord> records;
  for (const auto& critic : critics) {
    std::vector<std::vector<CritiqueRecord>> per_sample(samples.size());

    const long long n = static_cast<long long>(samples.size());
#pragma omp parallel for schedule(dynamic)
    for (long long si = 0; si < n; ++si) {
      const SampleRecord& sample = samples[static_cast<std::size_t>(si)];
      const std::string& tpl =
          sample.domain == TaskDomain::code ? code_template : math_template;
      const std::string prompt = render_critique_prompt(tpl, sample.prompt, sample.response);
      for (int run = 1; run <= c_count; ++run) {
        CritiqueRecord rec;
        rec.sample_id = sample.id;
        rec.critic = critic->id();
        rec.run = run;
        const auto raw = critic->critique(sample, prompt, run);
        if (raw) {
          try {
            rec.fragments = parse_critique(*raw);
            rec.valid = true;
          } catch (const ParseError&) {
            rec.valid = false;
          }
        }
        per_sample[static_cast<std::size_t>(si)].push_back(std::move(rec));
      }
    }
    for (auto& rs : per_sample) {
      for (auto& r : rs) records.push_back(std::move(r));
    }
  }

  write_critiques(out_path(g, out), records);
  return 0;
}

// ----------------------------------------------------------------- restore

int cmd_restore(const GlobalOpts& g, const std::string& critiques_path,
                const std::string& samples_path, const std::string& out,
                const std::string& stats_out, RestorationConfig rcfg,
                const std::string& llm_endpoint, const std::string& llm_model,
                const std::string& llm_credential_env, const std::string& llm_template_path) {
  auto records = read_critiques(critiques_path);
  const auto samples = samples_by_id(read_samples(samples_path));

  std::unique_ptr<Restorer> restorer;
  if (!llm_endpoint.empty()) {
    HttpClientConfig hc;
    hc.client_id = "restorer";
    auto [base, path] = split_endpoint(llm_endpoint);
    hc.base_url = base;
    hc.path = path;
    hc.model = llm_model;
    hc.credential_env_var = llm_credential_env.empty() ? "THD_RESTORER_TOKEN" : llm_credential_env;
    const std::string tpl = llm_template_path.empty()
                                ? "{original_text}\n{extracted_text}\n"
                                : load_text(llm_template_path);
    restorer = std::make_unique<TagProtocolRestorer>(make_http_completer(hc), tpl);
  } else {
    restorer = std::make_unique<FuzzyRestorer>(rcfg);
  }

  std::size_t total_fragments = 0, direct = 0, post = 0, unrestored = 0;
  for (auto& rec : records) {
    if (!rec.valid || rec.fragments.empty()) {
      rec.spans.clear();
      continue;
    }
    auto it = samples.find(rec.sample_id);
    if (it == samples.end()) {
      throw ValidationError("critique references unknown sample '" + rec.sample_id + "'");
    }
    const RestorationReport report =
        restore(rec.fragments, it->second.response, *restorer, rcfg);
    rec.spans.clear();
    for (const Span& s : report.restored.spans) rec.spans.emplace_back(s.start, s.end);
    total_fragments += rec.fragments.size();
    direct += report.direct_match_count;
    post += report.post_restoration_count;
    unrestored += report.unrestored.size();
  }

  write_critiques(out_path(g, out), records);
  if (!stats_out.empty()) {
    json stats = {{"fragments", total_fragments},
                  {"direct_match", direct},
                  {"post_restoration", post},
                  {"unrestored", unrestored}};
    if (total_fragments > 0) {
      stats["direct_match_rate"] = static_cast<double>(direct) / static_cast<double>(total_fragments);
      stats["post_restoration_rate"] =
          static_cast<double>(post) / static_cast<double>(total_fragments);
    }
    save_text(out_path(g, stats_out), stats.dump(2) + "\n");
  }
  return 0;
}

// ------------------------------------------------------------------- label

int cmd_label(const GlobalOpts& g, const std::string& critiques_path,
              const std::string& samples_path, const std::string& tokens_path,
              const std::string& out) {
  const auto records = read_critiques(critiques_path);
  const auto samples = read_samples(samples_path);
  const auto tokens = resolve_tokens(samples, tokens_path);

  std::vector<std::string> critic_order;
  std::set<std::string> seen;
  std::map<std::string, std::vector<const CritiqueRecord*>> grouped;  // critic \x1f sample
  for (const auto& rec : records) {
    if (seen.insert(rec.critic).second) critic_order.push_back(rec.critic);
    grouped[rec.critic + '\x1f' + rec.sample_id].push_back(&rec);
  }

  std::vector<SoftLabelSeq> out_scores;
  for (const auto& critic : critic_order) {
    for (const auto& sample : samples) {
      auto it = grouped.find(critic + '\x1f' + sample.id);
      if (it == grouped.end()) continue;
      const TokenizedResponse& resp = tokens.at(sample.id);

      std::size_t valid_runs = 0;
      std::vector<double> acc(resp.tokens.size(), 0.0);
      for (const CritiqueRecord* rec : it->second) {
        if (!rec->valid) continue;
        const SpanSet spans =
            spans_from_offsets(rec->spans, sample.response, critic + ":run" + std::to_string(rec->run));
        const BinaryLabelSeq labels = label_from_spans(resp, spans);
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += labels.labels[i];
        ++valid_runs;
      }
      if (valid_runs == 0) continue;  // no valid critique; filtered downstream

      SoftLabelSeq seq;
      seq.sample_id = sample.id;
      seq.source = "critic:" + critic;
      seq.scores.resize(acc.size());
      for (std::size_t i = 0; i < acc.size(); ++i) {
        seq.scores[i] = acc[i] / static_cast<double>(valid_runs);
      }
      out_scores.push_back(std::move(seq));
    }
  }

  write_scores(out_path(g, out), out_scores);
  return 0;
}

// ---------------------------------------------------------------- ensemble

int cmd_ensemble_fit(const GlobalOpts& g, const std::string& scores_path,
                     const std::string& gt_path, std::vector<std::string> critics,
                     bool allow_negative, const std::string& out) {
  const PipelineConfig cfg = effective_config(g);
  const ScoreIndex idx = index_scores(scores_path);
  if (critics.empty()) critics = idx.critic_order;
  const auto gt = read_scores(gt_path);
  const auto validation = build_validation(idx, gt, critics);
  const EnsembleWeights w = fit_weights(validation, critics, {.nonneg = !allow_negative});
  write_weights(out_path(g, out), w, cfg.seed);
  return 0;
}

int cmd_ensemble_apply(const GlobalOpts& g, const std::string& scores_path,
                       const std::string& weights_path, bool uniform, const std::string& out) {
  const ScoreIndex idx = index_scores(scores_path);

  std::optional<EnsembleWeights> weights;
  std::vector<std::string> critics;
  if (uniform) {
    critics = idx.critic_order;
  } else {
    if (weights_path.empty()) throw ValidationError("ensemble apply: need --weights or --uniform");
    weights = read_weights(weights_path);
    critics = weights->critic_ids;
  }

  std::vector<SoftLabelSeq> out_scores;
  for (const auto& sample_id : idx.sample_order) {
    std::vector<SoftLabelSeq> per_critic;
    bool complete = true;
    for (const auto& critic : critics) {
      auto it = idx.by_key.find(ScoreIndex::key(sample_id, critic));
      if (it == idx.by_key.end()) {
        complete = false;
        break;
      }
      per_critic.push_back(idx.records[it->second]);
    }
    if (!complete) continue;  // a critic never produced a valid run for it
    out_scores.push_back(uniform ? uniform_ensemble(per_critic)
                                 : apply_weights(per_critic, critics, *weights));
  }

  write_scores(out_path(g, out), out_scores);
  return 0;
}

int cmd_ensemble_bootstrap(const GlobalOpts& g, const std::string& scores_path,
                           const std::string& gt_path, std::vector<std::string> critics,
                           int resamples, bool serial, bool allow_negative,
                           const std::string& out) {
  const PipelineConfig cfg = effective_config(g);
  const ScoreIndex idx = index_scores(scores_path);
  if (critics.empty()) critics = idx.critic_order;
  const auto validation = build_validation(idx, read_scores(gt_path), critics);
  const FitOptions opts{.nonneg = !allow_negative};
  const WeightCI ci = serial
                          ? bootstrap_weights_serial(validation, critics, resamples, cfg.seed, opts)
                          : bootstrap_weights(validation, critics, resamples, cfg.seed, opts);
  write_weight_ci(out_path(g, out), ci);
  return 0;
}

// ------------------------------------------------------------------ filter

int cmd_filter(const GlobalOpts& g, const std::string& samples_path,
               const std::string& scores_path, const std::string& out,
               const std::string& kept_out) {
  const auto samples = read_samples(samples_path);
  const auto scores = read_scores(scores_path);
  std::map<std::string, const SoftLabelSeq*> by_id;
  for (const auto& s : scores) by_id[s.sample_id] = &s;

  std::vector<FilterItem> items;
  for (const auto& sample : samples) {
    FilterItem item;
    item.sample = sample;
    auto it = by_id.find(sample.id);
    if (it == by_id.end()) {
      item.trace_valid = false;  // nothing aggregated: corrupted or all-invalid trace
    } else {
      item.aggregated = *it->second;
    }
    items.push_back(std::move(item));
  }

  const FilterResult result = filter_dataset(items);
  write_filter_decisions(out_path(g, out), result);

  if (!kept_out.empty()) {
    std::vector<SampleRecord> kept;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (result.decisions[i].kept) kept.push_back(samples[i]);
    }
    write_samples(out_path(g, kept_out), kept);
  }
  return 0;
}

// ------------------------------------------------------- eval, sweep, bins

int cmd_eval(const GlobalOpts& g, const std::string& gt, const std::string& pred,
             const std::string& samples, Thresholds th, const std::string& report_out,
             const std::string& detail_out) {
  const auto eval_samples = build_eval_samples(gt, pred, samples);
  const EvalReport report = evaluate(eval_samples, th);
  if (!report_out.empty()) write_report_json(out_path(g, report_out), report, th);
  if (!detail_out.empty()) write_detail_jsonl(out_path(g, detail_out), report);
  return 0;
}

int cmd_sweep(const GlobalOpts& g, const std::string& gt, const std::string& pred,
              const std::string& samples, Thresholds th, const std::string& out) {
  const auto eval_samples = build_eval_samples(gt, pred, samples);
  write_sweep_csv(out_path(g, out), threshold_sweep(eval_samples, th));
  return 0;
}

int cmd_bins(const GlobalOpts& g, const std::string& gt, const std::string& pred,
             const std::string& samples, Thresholds th, const std::string& out) {
  const auto eval_samples = build_eval_samples(gt, pred, samples);
  write_length_bins_csv(out_path(g, out), length_bin_report(evaluate(eval_samples, th)));
  return 0;
}

// --------------------------------------------------------------- prm-adapt

int cmd_prm_adapt(const GlobalOpts& g, const std::string& tokens_path,
                  const std::string& steps_path, const std::string& kind_name,
                  const std::string& out) {
  const auto tokens = read_token_offsets(tokens_path);
  const StepScoreKind kind = [&] {
    if (kind_name == "correctness") return StepScoreKind::correctness;
    if (kind_name == "error-prob") return StepScoreKind::error_prob;
    throw ValidationError("prm-adapt: --kind must be correctness or error-prob");
  }();

  std::vector<SoftLabelSeq> out_scores;
  for_each_jsonl(steps_path, [&](const json& rec, std::size_t) {
    const auto id = rec.at("id").get<std::string>();
    auto it = tokens.find(id);
    if (it == tokens.end()) throw ValidationError("no token offsets for sample '" + id + "'");
    SoftLabelSeq seq = prm_step_to_token(it->second, rec.at("step_scores").get<std::vector<double>>(),
                                         double_newline_steps, kind);
    seq.sample_id = id;
    out_scores.push_back(std::move(seq));
  });
  write_scores(out_path(g, out), out_scores);
  return 0;
}

// ------------------------------------------------------------------- merge

int cmd_merge(const GlobalOpts& g, const std::string& method, const std::string& base_path,
              const std::string& a_path, const std::string& b_path, MergeConfig mcfg,
              bool serial, const std::string& out) {
  const TensorMap a = read_tensor_map(a_path);
  const TensorMap b = read_tensor_map(b_path);

  TensorMap merged;
  if (method == "average") {
    merged = serial ? average_merge_serial(a, b) : average_merge(a, b);
  } else {
    if (base_path.empty()) throw ValidationError("merge: --base required for method '" + method + "'");
    const TensorMap base = read_tensor_map(base_path);
    if (method == "task_vector") {
      merged = serial ? task_vector_merge_serial(base, a, b, mcfg) : task_vector_merge(base, a, b, mcfg);
    } else if (method == "ties") {
      merged = serial ? ties_merge_serial(base, a, b, mcfg) : ties_merge(base, a, b, mcfg);
    } else if (method == "dare") {
      const TensorMap tau = task_vector_of(b, base);
      merged = serial ? dare_merge_serial(a, tau, mcfg) : dare_merge(a, tau, mcfg);
    } else {
      throw ValidationError("merge: unknown method '" + method + "'");
    }
  }
  write_tensor_map(out_path(g, out), merged);
  return 0;
}

// --------------------------------------------------------------------- bon

int cmd_bon(const GlobalOpts& g, const std::string& candidates_path,
            const std::string& strategy_name, const std::string& out,
            const std::string& summary_out) {
  const auto sets = read_candidate_sets(candidates_path);
  const AggregateStrategy strategy = aggregate_strategy_from_name(strategy_name);

  std::size_t decided = 0, correct = 0, oracle = 0;
  JsonlWriter w(out_path(g, out));
  for (const auto& set : sets) {
    const std::string selected = select_best(set, strategy);
    const Candidate* chosen = nullptr;
    bool any_correct = false;
    for (const auto& cand : set.candidates) {
      if (cand.candidate_id == selected) chosen = &cand;
      any_correct |= cand.is_correct.value_or(false);
    }
    w.write({{"sample_id", set.sample_id},
             {"selected", selected},
             {"strategy", strategy_name},
             {"score", aggregate_candidate(chosen->scores, strategy)}});
    if (chosen->is_correct.has_value()) {
      ++decided;
      if (*chosen->is_correct) ++correct;
    }
    if (any_correct) ++oracle;
  }

  if (!summary_out.empty()) {
    json summary = {{"samples", sets.size()},
                    {"strategy", strategy_name},
                    {"labeled", decided},
                    {"accuracy", decided > 0 ? json(static_cast<double>(correct) /
                                                    static_cast<double>(decided))
                                             : json(nullptr)},
                    {"oracle_ceiling", sets.empty() ? json(nullptr)
                                                    : json(static_cast<double>(oracle) /
                                                           static_cast<double>(sets.size()))}};
    save_text(out_path(g, summary_out), summary.dump(2) + "\n");
  }
  return 0;
}

// ------------------------------------------------------------------- hints

int cmd_hints(const GlobalOpts& g, const std::string& samples_path,
              const std::string& tokens_path, const std::string& scores_path, double threshold,
              bool step, const std::string& out) {
  const auto samples = read_samples(samples_path);
  const auto tokens = resolve_tokens(samples, tokens_path);
  const auto scores = read_scores(scores_path);
  std::map<std::string, const SoftLabelSeq*> by_id;
  for (const auto& s : scores) by_id[s.sample_id] = &s;

  JsonlWriter w(out_path(g, out));
  for (const auto& sample : samples) {
    auto it = by_id.find(sample.id);
    if (it == by_id.end()) throw ValidationError("no scores for sample '" + sample.id + "'");
    const TokenizedResponse& resp = tokens.at(sample.id);
    const HintedText hinted = step ? insert_step_hints(resp, *it->second, threshold)
                                   : insert_hints(resp, *it->second, threshold);
    json spans = json::array();
    for (const Span& s : hinted.marked_spans.spans) spans.push_back({{"s", s.start}, {"e", s.end}});
    w.write({{"sample_id", sample.id},
             {"text_with_markers", hinted.text_with_markers},
             {"spans", spans},
             {"threshold", threshold}});
  }
  return 0;
}

// ----------------------------------------------------------------- correct

int cmd_correct(const GlobalOpts& g, const std::string& samples_path,
                const std::string& transcripts_dir, const HttpClientConfig& remote,
                const std::string& condition_name, int max_iters, double threshold,
                const std::string& template_path, const std::string& out,
                const std::string& summary_out) {
  const auto samples = read_correction_samples(samples_path);
  const HintCondition condition = hint_condition_from_name(condition_name);
  const std::string tpl = template_path.empty()
                              ? "Problem: {problem}\n\nPrevious Solution:\n"
                                "{previous_solution_with_hints}\n"
                              : load_text(template_path);
  std::unique_ptr<Corrector> corrector;
  if (!transcripts_dir.empty()) {
    corrector = std::make_unique<MockCorrector>(transcripts_dir, condition_name);
  } else if (!remote.base_url.empty()) {
    corrector = std::make_unique<HttpCorrector>(remote);
  } else {
    throw TransportError("correct: no corrector configured (--transcripts or --endpoint)");
  }

  CorrectionLoopOptions opts;
  opts.condition = condition;
  opts.threshold = threshold;
  opts.max_iterations = max_iters;

  std::vector<CorrectionLog> logs(samples.size());
  const long long n = static_cast<long long>(samples.size());
#pragma omp parallel for schedule(dynamic)
  for (long long i = 0; i < n; ++i) {
    logs[static_cast<std::size_t>(i)] =
        correction_loop(samples[static_cast<std::size_t>(i)], *corrector, tpl, opts);
  }

  write_correction_logs(out_path(g, out), logs);
  if (!summary_out.empty()) {
    const CorrectionSummary s = correction_summary(logs);
    json rec = {{"samples", s.samples},
                {"condition", condition_name},
                {"correction_rate", s.correction_rate},
                {"first_iteration_rate", s.first_iteration_rate}};
    save_text(out_path(g, summary_out), rec.dump(2) + "\n");
  }
  return 0;
}

// ------------------------------------------------------------------ report

int cmd_report(const GlobalOpts& g, const std::string& report_path, const std::string& detail_path,
               const std::string& decisions_path, const std::string& out_json,
               const std::string& out_csv) {
  json metrics;
  try {
    metrics = json::parse(load_text(report_path));
  } catch (const json::exception& e) {
    throw ValidationError(report_path + ": " + std::string(e.what()));
  }

  json final_report = {{"metrics", metrics}};

  if (!detail_path.empty()) {
    std::map<std::string, std::size_t> categories;
    std::size_t rows = 0;
    for_each_jsonl(detail_path, [&](const json& rec, std::size_t) {
      ++rows;
      categories[rec.at("category").get<std::string>()] += 1;
    });
    final_report["detail"] = {{"rows", rows}, {"categories", categories}};
  }

  if (!decisions_path.empty()) {
    std::size_t kept = 0, dropped = 0;
    std::map<std::string, std::size_t> reasons;
    for_each_jsonl(decisions_path, [&](const json& rec, std::size_t) {
      if (rec.at("kept").get<bool>()) {
        ++kept;
      } else {
        ++dropped;
        reasons[rec.at("reason").get<std::string>()] += 1;
      }
    });
    final_report["filter"] = {{"kept", kept}, {"dropped", dropped}, {"reasons", reasons}};
  }

  save_text(out_path(g, out_json), final_report.dump(2) + "\n");

  if (!out_csv.empty()) {
    std::string csv = "metric,value\n";
    for (const auto& [key, value] : metrics.items()) {
      if (value.is_number()) {
        csv += key + "," + format_double(value.get<double>()) + "\n";
      } else if (value.is_null()) {
        csv += key + ",\n";
      }
    }
    if (final_report.contains("filter")) {
      csv += "filter_kept," + format_double(final_report["filter"]["kept"].get<double>()) + "\n";
      csv += "filter_dropped," + format_double(final_report["filter"]["dropped"].get<double>()) + "\n";
    }
    save_text(out_path(g, out_csv), csv);
  }
  return 0;
}

// ------------------------------------------------------------------ losses

int cmd_loss(const GlobalOpts& g, const std::string& gt_path, const std::string& pred_path,
             bool weighted, LossConfig lcfg, const std::string& out) {
  const auto gt = read_scores(gt_path);
  std::map<std::string, const SoftLabelSeq*> pred_by_id;
  std::vector<SoftLabelSeq> pred;
  if (!pred_path.empty()) {
    pred = read_scores(pred_path);
    for (const auto& p : pred) pred_by_id[p.sample_id] = &p;
  }

  JsonlWriter w(out_path(g, out));
  for (const auto& target : gt) {
    const TokenWeights tw = export_token_weights(target, lcfg);
    json rec = {{"sample_id", target.sample_id},
                {"pos_weight", tw.pos_weight},
                {"neg_weight", tw.neg_weight},
                {"coeffs", tw.per_token_coeff}};
    if (!pred_path.empty()) {
      auto it = pred_by_id.find(target.sample_id);
      if (it == pred_by_id.end()) {
        throw ValidationError("no prediction for sample '" + target.sample_id + "'");
      }
      const LossBreakdown breakdown =
          weighted ? weighted_ce(*it->second, target, lcfg) : standard_ce(*it->second, target, lcfg);
      rec["loss"] = breakdown.total;
    } else {
      rec["loss"] = json(nullptr);
    }
    w.write(rec);
  }
  return 0;
}

}  // namespace

int run_subcommand(const std::vector<std::string>& args) {
  CLI::App app{"token-level hallucination data engine and evaluation harness"};
  app.require_subcommand(1);

  GlobalOpts g;
  uint64_t seed_flag = 0;
  app.add_option("--config", g.config_path, "pipeline config file");
  app.add_option("--out", g.out_dir, "directory that relative output paths resolve against");
  auto* seed_opt = app.add_option("--seed", seed_flag, "seed overriding the config");

  // annotate
  auto* annotate = app.add_subcommand("annotate", "run critics over samples, emit raw critiques");
  std::string an_samples, an_transcripts, an_prompts, an_out = "critiques.jsonl";
  std::vector<std::string> an_critics;
  int an_c = 0;
  annotate->add_option("--samples", an_samples)->required();
  annotate->add_option("--transcripts", an_transcripts, "mock critic transcript directory");
  annotate->add_option("--critics", an_critics)->delimiter(',');
  annotate->add_option("--c", an_c, "critiques per sample");
  annotate->add_option("--prompts", an_prompts, "directory with critique prompt templates");
  annotate->add_option("--out-critiques", an_out);

  // restore
  auto* restore_cmd = app.add_subcommand("restore", "align critique fragments to exact spans");
  std::string re_critiques, re_samples, re_out = "critiques_restored.jsonl", re_stats;
  std::string re_llm_endpoint, re_llm_model, re_llm_env, re_llm_template;
  RestorationConfig re_cfg;
  bool re_no_fold = false;
  restore_cmd->add_option("--critiques", re_critiques)->required();
  restore_cmd->add_option("--samples", re_samples)->required();
  restore_cmd->add_option("--out-critiques", re_out);
  restore_cmd->add_option("--stats", re_stats);
  restore_cmd->add_option("--max-rounds", re_cfg.max_rounds);
  restore_cmd->add_option("--max-edit-distance", re_cfg.max_normalized_edit_distance);
  restore_cmd->add_flag("--no-whitespace-fold", re_no_fold);
  restore_cmd->add_option("--llm-endpoint", re_llm_endpoint, "tag-protocol restorer endpoint");
  restore_cmd->add_option("--llm-model", re_llm_model);
  restore_cmd->add_option("--llm-credential-env", re_llm_env);
  restore_cmd->add_option("--llm-template", re_llm_template);

  // label
  auto* label = app.add_subcommand("label", "turn restored spans into per-critic soft scores");
  std::string la_critiques, la_samples, la_tokens, la_out = "scores.jsonl";
  label->add_option("--critiques", la_critiques)->required();
  label->add_option("--samples", la_samples)->required();
  label->add_option("--tokens", la_tokens, "external token offsets (JSONL)");
  label->add_option("--out-scores", la_out);

  // ensemble fit|apply|bootstrap
  auto* ensemble = app.add_subcommand("ensemble", "combine per-critic scores");
  ensemble->require_subcommand(1);
  auto* fit = ensemble->add_subcommand("fit", "fit weights on validation ground truth");
  std::string fi_scores, fi_gt, fi_out = "weights.json";
  std::vector<std::string> fi_critics;
  bool fi_allow_negative = false;
  fit->add_option("--scores", fi_scores)->required();
  fit->add_option("--gt", fi_gt)->required();
  fit->add_option("--critics", fi_critics)->delimiter(',');
  fit->add_flag("--allow-negative", fi_allow_negative);
  fit->add_option("--out-weights", fi_out);

  auto* apply = ensemble->add_subcommand("apply", "apply weights (or uniform averaging)");
  std::string ap_scores, ap_weights, ap_out = "ensembled.jsonl";
  bool ap_uniform = false;
  apply->add_option("--scores", ap_scores)->required();
  apply->add_option("--weights", ap_weights);
  apply->add_flag("--uniform", ap_uniform);
  apply->add_option("--out-scores", ap_out);

  auto* boot = ensemble->add_subcommand("bootstrap", "percentile CIs for the fitted weights");
  std::string bo_scores, bo_gt, bo_out = "weight_ci.json";
  std::vector<std::string> bo_critics;
  int bo_resamples = 1000;
  bool bo_serial = false, bo_allow_negative = false;
  boot->add_option("--scores", bo_scores)->required();
  boot->add_option("--gt", bo_gt)->required();
  boot->add_option("--critics", bo_critics)->delimiter(',');
  boot->add_option("--resamples", bo_resamples);
  boot->add_flag("--serial", bo_serial);
  boot->add_flag("--allow-negative", bo_allow_negative);
  boot->add_option("--out-ci", bo_out);

  // filter
  auto* filter = app.add_subcommand("filter", "apply the dataset quality rules");
  std::string fl_samples, fl_scores, fl_out = "filter_decisions.jsonl", fl_kept;
  filter->add_option("--samples", fl_samples)->required();
  filter->add_option("--scores", fl_scores)->required();
  filter->add_option("--out-decisions", fl_out);
  filter->add_option("--out-kept", fl_kept);

  // eval / sweep / bins share inputs
  std::string ev_gt, ev_pred, ev_samples, ev_report = "report.json", ev_detail = "detail.jsonl";
  Thresholds ev_th;
  auto add_eval_inputs = [&](CLI::App* cmd) {
    cmd->add_option("--gt", ev_gt)->required();
    cmd->add_option("--pred", ev_pred)->required();
    cmd->add_option("--samples", ev_samples);
    cmd->add_option("--beta-gt", ev_th.beta_gt);
    cmd->add_option("--beta-pred", ev_th.beta_pred);
  };
  auto* eval_cmd = app.add_subcommand("eval", "score predictions against ground truth");
  add_eval_inputs(eval_cmd);
  eval_cmd->add_option("--out-report", ev_report);
  eval_cmd->add_option("--out-detail", ev_detail);

  auto* sweep = app.add_subcommand("sweep", "threshold sensitivity table");
  std::string sw_out = "sweep.csv";
  add_eval_inputs(sweep);
  sweep->add_option("--out-csv", sw_out);

  auto* bins = app.add_subcommand("bins", "length-binned detection report");
  std::string bi_out = "bins.csv";
  add_eval_inputs(bins);
  bins->add_option("--out-csv", bi_out);

  // prm-adapt
  auto* prm = app.add_subcommand("prm-adapt", "spread step scores over step tokens");
  std::string pr_tokens, pr_steps, pr_kind = "correctness", pr_out = "prm_scores.jsonl";
  prm->add_option("--tokens", pr_tokens)->required();
  prm->add_option("--steps", pr_steps)->required();
  prm->add_option("--kind", pr_kind, "correctness | error-prob");
  prm->add_option("--out-scores", pr_out);

  // merge
  auto* merge = app.add_subcommand("merge", "checkpoint merging over tensor containers");
  std::string me_method, me_base, me_a, me_b, me_out = "merged.thdt";
  MergeConfig me_cfg;
  bool me_serial = false;
  merge->add_option("--method", me_method, "average | task_vector | ties | dare")->required();
  merge->add_option("--base", me_base);
  merge->add_option("--a", me_a)->required();
  merge->add_option("--b", me_b)->required();
  merge->add_option("--alpha", me_cfg.alpha);
  merge->add_option("--keep-fraction", me_cfg.ties_keep_fraction);
  merge->add_flag("--global-threshold", me_cfg.ties_global_threshold);
  merge->add_option("--drop-prob", me_cfg.dare_drop_prob);
  merge->add_flag("--serial", me_serial);
  merge->add_option("--out-tensors", me_out);

  // bon
  auto* bon = app.add_subcommand("bon", "best-of-N candidate selection");
  std::string bn_candidates, bn_strategy = "mean", bn_out = "selections.jsonl", bn_summary;
  bon->add_option("--candidates", bn_candidates)->required();
  bon->add_option("--strategy", bn_strategy, "mean | min | worst10");
  bon->add_option("--out-selections", bn_out);
  bon->add_option("--out-summary", bn_summary);

  // hints
  auto* hints = app.add_subcommand("hints", "insert <<< >>> markers around flagged regions");
  std::string hi_samples, hi_tokens, hi_scores, hi_out = "hinted.jsonl";
  double hi_threshold = 0.5;
  bool hi_step = false;
  hints->add_option("--samples", hi_samples)->required();
  hints->add_option("--tokens", hi_tokens);
  hints->add_option("--scores", hi_scores)->required();
  hints->add_option("--threshold", hi_threshold);
  hints->add_flag("--step", hi_step, "paragraph-level hints");
  hints->add_option("--out-hints", hi_out);

  // correct
  auto* correct = app.add_subcommand("correct", "run the hinted correction loop");
  std::string co_samples, co_transcripts, co_condition = "token", co_template,
              co_out = "correction_log.jsonl", co_summary;
  std::string co_endpoint, co_model, co_credential_env;
  int co_max_iters = 3;
  double co_threshold = 0.5;
  correct->add_option("--samples", co_samples)->required();
  correct->add_option("--transcripts", co_transcripts, "mock corrector transcript directory");
  correct->add_option("--endpoint", co_endpoint, "remote corrector chat endpoint");
  correct->add_option("--model", co_model);
  correct->add_option("--credential-env", co_credential_env);
  correct->add_option("--condition", co_condition, "baseline | token | step | oracle");
  correct->add_option("--max-iters", co_max_iters);
  correct->add_option("--threshold", co_threshold);
  correct->add_option("--prompt-template", co_template);
  correct->add_option("--out-log", co_out);
  correct->add_option("--out-summary", co_summary);

  // report
  auto* report = app.add_subcommand("report", "combine stage artifacts into a final report");
  std::string rp_report, rp_detail, rp_decisions, rp_json = "final_report.json",
              rp_csv = "final_report.csv";
  report->add_option("--report", rp_report)->required();
  report->add_option("--detail", rp_detail);
  report->add_option("--decisions", rp_decisions);
  report->add_option("--out-json", rp_json);
  report->add_option("--out-csv", rp_csv);

  // loss export
  auto* loss = app.add_subcommand("loss", "per-sample loss weights (and losses) export");
  std::string lo_gt, lo_pred, lo_out = "loss_export.jsonl";
  bool lo_weighted = true;
  LossConfig lo_cfg;
  loss->add_option("--gt", lo_gt)->required();
  loss->add_option("--pred", lo_pred, "optional predictions; adds per-sample loss values");
  loss->add_flag("!--standard", lo_weighted, "use the unweighted objective");
  loss->add_option("--beta", lo_cfg.beta);
  loss->add_option("--out-losses", lo_out);

  // app-level flags (--seed/--config/--out) may appear after the subcommand
  std::function<void(CLI::App*)> allow_fallthrough = [&](CLI::App* cmd) {
    for (CLI::App* sub : cmd->get_subcommands({})) {
      sub->fallthrough();
      allow_fallthrough(sub);
    }
  };
  allow_fallthrough(&app);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());  // CLI11 convention
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (seed_opt->count() > 0) g.seed = seed_flag;

  try {
    if (*annotate) {
      return cmd_annotate(g, an_samples, an_transcripts, an_critics, an_c, an_prompts, an_out);
    }
    if (*restore_cmd) {
      re_cfg.whitespace_fold = !re_no_fold;
      return cmd_restore(g, re_critiques, re_samples, re_out, re_stats, re_cfg, re_llm_endpoint,
                         re_llm_model, re_llm_env, re_llm_template);
    }
    if (*label) return cmd_label(g, la_critiques, la_samples, la_tokens, la_out);
    if (*fit) return cmd_ensemble_fit(g, fi_scores, fi_gt, fi_critics, fi_allow_negative, fi_out);
    if (*apply) return cmd_ensemble_apply(g, ap_scores, ap_weights, ap_uniform, ap_out);
    if (*boot) {
      return cmd_ensemble_bootstrap(g, bo_scores, bo_gt, bo_critics, bo_resamples, bo_serial,
                                    bo_allow_negative, bo_out);
    }
    if (*filter) return cmd_filter(g, fl_samples, fl_scores, fl_out, fl_kept);
    if (*eval_cmd) return cmd_eval(g, ev_gt, ev_pred, ev_samples, ev_th, ev_report, ev_detail);
    if (*sweep) return cmd_sweep(g, ev_gt, ev_pred, ev_samples, ev_th, sw_out);
    if (*bins) return cmd_bins(g, ev_gt, ev_pred, ev_samples, ev_th, bi_out);
    if (*prm) return cmd_prm_adapt(g, pr_tokens, pr_steps, pr_kind, pr_out);
    if (*merge) return cmd_merge(g, me_method, me_base, me_a, me_b, me_cfg, me_serial, me_out);
    if (*bon) return cmd_bon(g, bn_candidates, bn_strategy, bn_out, bn_summary);
    if (*hints) return cmd_hints(g, hi_samples, hi_tokens, hi_scores, hi_threshold, hi_step, hi_out);
    if (*correct) {
      HttpClientConfig remote;
      if (!co_endpoint.empty()) {
        remote.client_id = "corrector";
        auto [base, path] = split_endpoint(co_endpoint);
        remote.base_url = base;
        remote.path = path;
        remote.model = co_model;
        remote.credential_env_var =
            co_credential_env.empty() ? "THD_CORRECTOR_TOKEN" : co_credential_env;
      }
      return cmd_correct(g, co_samples, co_transcripts, remote, co_condition, co_max_iters,
                         co_threshold, co_template, co_out, co_summary);
    }
    if (*report) return cmd_report(g, rp_report, rp_detail, rp_decisions, rp_json, rp_csv);
    if (*loss) return cmd_loss(g, lo_gt, lo_pred, lo_weighted, lo_cfg, lo_out);
  } catch (const TransportError& e) {
    std::cerr << "transport error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace thd
