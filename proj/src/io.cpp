#include "thd/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include "thd/errors.hpp"
#include "thd/span_align.hpp"

namespace thd {

namespace {

using nlohmann::json;

std::vector<std::pair<std::size_t, std::size_t>> offsets_from_json(const json& tokens) {
  std::vector<std::pair<std::size_t, std::size_t>> offsets;
  offsets.reserve(tokens.size());
  for (const auto& t : tokens) {
    offsets.emplace_back(t.at("s").get<std::size_t>(), t.at("e").get<std::size_t>());
  }
  return offsets;
}

json spans_to_json(const std::vector<std::pair<std::size_t, std::size_t>>& spans) {
  json arr = json::array();
  for (auto [s, e] : spans) arr.push_back({{"s", s}, {"e", e}});
  return arr;
}

std::optional<bool> opt_bool(const json& rec, const char* key) {
  if (!rec.contains(key) || rec.at(key).is_null()) return std::nullopt;
  return rec.at(key).get<bool>();
}

}  // namespace

void for_each_jsonl(const std::string& path, const JsonlHandler& handler) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    try {
      handler(rec, line_no);
    } catch (const json::exception& e) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

struct JsonlWriter::Impl {
  std::ofstream out;
};

JsonlWriter::JsonlWriter(const std::string& path) : impl_(new Impl) {
  impl_->out.open(path, std::ios::binary);  // binary: no newline translation anywhere
  if (!impl_->out) throw ValidationError("cannot open '" + path + "' for writing");
}

JsonlWriter::~JsonlWriter() = default;

void JsonlWriter::write(const nlohmann::json& record) {
  impl_->out << record.dump() << '\n';
  if (!impl_->out) throw ValidationError("write failed");
}

std::string load_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void save_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw ValidationError("write failed for '" + path + "'");
}

std::string format_double(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::vector<SampleRecord> read_samples(const std::string& path) {
  std::vector<SampleRecord> out;
  for_each_jsonl(path, [&](const json& rec, std::size_t) {
    SampleRecord s;
    s.id = rec.at("id").get<std::string>();
    s.domain = task_domain_from_name(rec.value("domain", "math_stem"));
    s.prompt = rec.value("prompt", "");
    s.response = rec.at("response").get<std::string>();
    s.final_answer_correct = opt_bool(rec, "final_answer_correct");
    s.policy_model = rec.value("policy_model", "");
    out.push_back(std::move(s));
  });
  return out;
}

void write_samples(const std::string& path, const std::vector<SampleRecord>& samples) {
  JsonlWriter w(path);
  for (const auto& s : samples) {
    json rec = {{"id", s.id},
                {"domain", task_domain_name(s.domain)},
                {"prompt", s.prompt},
                {"response", s.response},
                {"policy_model", s.policy_model}};
    rec["final_answer_correct"] =
        s.final_answer_correct ? json(*s.final_answer_correct) : json(nullptr);
    w.write(rec);
  }
}

std::map<std::string, TokenizedResponse> read_token_offsets(const std::string& path) {
  std::map<std::string, TokenizedResponse> out;
  for_each_jsonl(path, [&](const json& rec, std::size_t) {
    const auto id = rec.at("id").get<std::string>();
    out[id] = from_offsets(id, rec.at("text").get<std::string>(),
                           offsets_from_json(rec.at("tokens")));
  });
  return out;
}

void write_token_offsets(const std::string& path,
                         const std::vector<std::pair<std::string, TokenizedResponse>>& entries) {
  JsonlWriter w(path);
  for (const auto& [id, resp] : entries) {
    json tokens = json::array();
    for (const Token& t : resp.tokens) tokens.push_back({{"s", t.start}, {"e", t.end}});
    w.write({{"id", id}, {"text", resp.response_text}, {"tokens", tokens}});
  }
}

std::vector<SoftLabelSeq> read_scores(const std::string& path) {
  std::vector<SoftLabelSeq> out;
  for_each_jsonl(path, [&](const json& rec, std::size_t line_no) {
    SoftLabelSeq s;
    s.sample_id = rec.at("sample_id").get<std::string>();
    s.source = rec.value("source", "");
    s.scores = rec.at("scores").get<std::vector<double>>();
    for (double v : s.scores) {
      if (v < 0.0 || v > 1.0) {
        throw ValidationError(path + ":" + std::to_string(line_no) + ": score " +
                              std::to_string(v) + " outside [0,1]");
      }
    }
    out.push_back(std::move(s));
  });
  return out;
}

void write_scores(const std::string& path, const std::vector<SoftLabelSeq>& scores) {
  JsonlWriter w(path);
  for (const auto& s : scores) {
    w.write({{"sample_id", s.sample_id}, {"source", s.source}, {"scores", s.scores}});
  }
}

std::vector<CritiqueRecord> read_critiques(const std::string& path) {
  std::vector<CritiqueRecord> out;
  for_each_jsonl(path, [&](const json& rec, std::size_t) {
    CritiqueRecord r;
    r.sample_id = rec.at("sample_id").get<std::string>();
    r.critic = rec.at("critic").get<std::string>();
    r.run = rec.at("run").get<int>();
    r.fragments = rec.at("fragments").get<std::vector<std::string>>();
    for (const auto& s : rec.at("spans")) {
      r.spans.emplace_back(s.at("s").get<std::size_t>(), s.at("e").get<std::size_t>());
    }
    r.valid = rec.at("valid").get<bool>();
    out.push_back(std::move(r));
  });
  return out;
}

void write_critiques(const std::string& path, const std::vector<CritiqueRecord>& records) {
  JsonlWriter w(path);
  for (const auto& r : records) {
    w.write({{"sample_id", r.sample_id},
             {"critic", r.critic},
             {"run", r.run},
             {"fragments", r.fragments},
             {"spans", spans_to_json(r.spans)},
             {"valid", r.valid}});
  }
}

void write_weights(const std::string& path, const EnsembleWeights& w, uint64_t seed) {
  json rec = {{"critics", w.critic_ids},
              {"weights", w.weights},
              {"fit_loss", w.fit_loss},
              {"seed", seed},
              {"nonneg", w.nonneg_enforced},
              {"ridge_applied", w.ridge_applied}};
  save_text(path, rec.dump(2) + "\n");
}

EnsembleWeights read_weights(const std::string& path) {
  json rec;
  try {
    rec = json::parse(load_text(path));
  } catch (const json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
  EnsembleWeights w;
  w.critic_ids = rec.at("critics").get<std::vector<std::string>>();
  w.weights = rec.at("weights").get<std::vector<double>>();
  w.fit_loss = rec.value("fit_loss", 0.0);
  w.nonneg_enforced = rec.value("nonneg", true);
  w.ridge_applied = rec.value("ridge_applied", false);
  if (w.critic_ids.size() != w.weights.size()) {
    throw ValidationError(path + ": critics/weights length mismatch");
  }
  return w;
}

void write_weight_ci(const std::string& path, const WeightCI& ci) {
  json critics = json::array(), point = json::array(), lo = json::array(), hi = json::array();
  for (const auto& iv : ci.intervals) {
    critics.push_back(iv.critic_id);
    point.push_back(iv.point);
    lo.push_back(iv.lo);
    hi.push_back(iv.hi);
  }
  json rec = {{"critics", critics}, {"point", point},        {"lo", lo},
              {"hi", hi},           {"resamples", ci.resamples}, {"seed", ci.seed},
              {"skipped", ci.skipped}};
  save_text(path, rec.dump(2) + "\n");
}

nlohmann::json report_to_json(const EvalReport& report, const Thresholds& th) {
  json rec = {{"beta_gt", th.beta_gt},
              {"beta_pred", th.beta_pred},
              {"s_incor", report.s_incor},
              {"s_incor_micro", report.s_incor_micro},
              {"s_cor", report.s_cor},
              {"auroc", report.auroc_defined ? json(report.auroc) : json(nullptr)},
              {"auprc", report.auprc_defined ? json(report.auprc) : json(nullptr)},
              {"counts",
               {{"hallucinated", report.n_hallucinated},
                {"non_hallucinated", report.n_non_hallucinated},
                {"excluded", report.n_excluded},
                {"total", report.per_sample.size()}}}};
  return rec;
}

void write_report_json(const std::string& path, const EvalReport& report, const Thresholds& th) {
  save_text(path, report_to_json(report, th).dump(2) + "\n");
}

void write_detail_jsonl(const std::string& path, const EvalReport& report) {
  JsonlWriter w(path);
  for (const SampleResult& r : report.per_sample) {
    json rec = {{"sample_id", r.id},
                {"category", category_name(r.category)},
                {"tokens", r.token_count}};
    if (r.category == SampleCategory::hallucinated) {
      rec["precision"] = r.prf.precision;
      rec["recall"] = r.prf.recall;
      rec["f1"] = r.prf.f1;
      rec["precision_undefined"] = r.prf.precision_undefined;
    } else if (r.category == SampleCategory::non_hallucinated) {
      rec["clean_recall"] = r.clean_recall_pct;
    }
    w.write(rec);
  }
}

void write_report_csv(const std::string& path, const EvalReport& report) {
  std::string csv = "metric,value\n";
  csv += "s_incor," + format_double(report.s_incor) + "\n";
  csv += "s_incor_micro," + format_double(report.s_incor_micro) + "\n";
  csv += "s_cor," + format_double(report.s_cor) + "\n";
  csv += "auroc," + (report.auroc_defined ? format_double(report.auroc) : std::string()) + "\n";
  csv += "auprc," + (report.auprc_defined ? format_double(report.auprc) : std::string()) + "\n";
  csv += "n_hallucinated," + std::to_string(report.n_hallucinated) + "\n";
  csv += "n_non_hallucinated," + std::to_string(report.n_non_hallucinated) + "\n";
  csv += "n_excluded," + std::to_string(report.n_excluded) + "\n";
  save_text(path, csv);
}

void write_sweep_csv(const std::string& path, const SweepTable& table) {
  std::string csv = "beta_gt,beta_pred,s_incor,delta_vs_default,is_default\n";
  const double base = table.rows.empty() ? 0.0 : table.rows[0].s_incor;
  for (const SweepRow& row : table.rows) {
    csv += format_double(row.thresholds.beta_gt) + "," + format_double(row.thresholds.beta_pred) +
           "," + format_double(row.s_incor) + "," + format_double(row.s_incor - base) + "," +
           (row.is_default ? "1" : "0") + "\n";
  }
  csv += "max_abs_delta," + format_double(table.max_abs_delta) + ",,,\n";
  save_text(path, csv);
}

void write_length_bins_csv(const std::string& path, const std::vector<LengthBinRow>& rows) {
  std::string csv = "bin,count,mean_s_incor\n";
  for (const LengthBinRow& row : rows) {
    csv += row.label + "," + std::to_string(row.count) + "," + format_double(row.mean_s_incor) +
           "\n";
  }
  save_text(path, csv);
}

void write_filter_decisions(const std::string& path, const FilterResult& result) {
  JsonlWriter w(path);
  for (const FilterDecision& d : result.decisions) {
    w.write({{"sample_id", d.sample_id},
             {"kept", d.kept},
             {"reason", d.kept ? json(nullptr) : json(drop_reason_name(d.reason))}});
  }
}

std::vector<CandidateSet> read_candidate_sets(const std::string& path) {
  std::vector<CandidateSet> out;
  std::map<std::string, std::size_t> index;
  for_each_jsonl(path, [&](const json& rec, std::size_t line_no) {
    const auto sample_id = rec.at("sample_id").get<std::string>();
    Candidate cand;
    cand.candidate_id = rec.at("candidate_id").get<std::string>();
    const auto text = rec.at("text").get<std::string>();
    if (rec.contains("tokens")) {
      cand.response = from_offsets(sample_id + "/" + cand.candidate_id, text,
                                   offsets_from_json(rec.at("tokens")));
    } else {
      cand.response = tokenize(text);
    }
    cand.scores.sample_id = sample_id;
    cand.scores.source = rec.value("source", "detector");
    cand.scores.scores = rec.at("scores").get<std::vector<double>>();
    if (cand.scores.size() != cand.response.tokens.size()) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": candidate '" +
                            cand.candidate_id + "' has " + std::to_string(cand.scores.size()) +
                            " scores for " + std::to_string(cand.response.tokens.size()) +
                            " tokens");
    }
    cand.is_correct = opt_bool(rec, "is_correct");

    auto [it, inserted] = index.try_emplace(sample_id, out.size());
    if (inserted) {
      out.push_back({sample_id, {}});
    }
    out[it->second].candidates.push_back(std::move(cand));
  });
  return out;
}

std::vector<CorrectionSample> read_correction_samples(const std::string& path) {
  std::vector<CorrectionSample> out;
  for_each_jsonl(path, [&](const json& rec, std::size_t) {
    CorrectionSample s;
    s.sample_id = rec.at("id").get<std::string>();
    s.problem = rec.at("problem").get<std::string>();
    s.response = tokenize(rec.at("response").get<std::string>());
    s.reference_answer = rec.at("reference_answer").get<std::string>();
    s.detector_scores.sample_id = s.sample_id;
    s.detector_scores.source = "detector";
    if (rec.contains("scores")) {
      s.detector_scores.scores = rec.at("scores").get<std::vector<double>>();
    } else {
      s.detector_scores.scores.assign(s.response.tokens.size(), 0.0);
    }
    s.gt_spans.source = "labeler";
    if (rec.contains("gt_spans")) {
      for (const auto& sp : rec.at("gt_spans")) {
        const auto a = sp.at("s").get<std::size_t>();
        const auto b = sp.at("e").get<std::size_t>();
        s.gt_spans.spans.push_back(
            {a, b, s.response.response_text.substr(a, b - a)});
      }
    }
    out.push_back(std::move(s));
  });
  return out;
}

void write_correction_logs(const std::string& path, const std::vector<CorrectionLog>& logs) {
  JsonlWriter w(path);
  for (const CorrectionLog& log : logs) {
    for (const CorrectionIteration& it : log.iterations) {
      w.write({{"sample_id", log.sample_id},
               {"iter", it.iteration},
               {"condition", hint_condition_name(log.condition)},
               {"success", it.success},
               {"client_ok", it.client_ok}});
    }
  }
}

}  // namespace thd
