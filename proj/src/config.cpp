#include "thd/config.hpp"

#include <sstream>

#include "thd/errors.hpp"
#include "thd/io.hpp"

namespace thd {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> parts;
  std::string part;
  while (in >> part) parts.push_back(part);
  return parts;
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ValidationError("config: key '" + key + "' expects a boolean, got '" + v + "'");
}

double parse_num(const std::string& v, const std::string& key) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ValidationError("config: key '" + key + "' expects a number, got '" + v + "'");
  }
}

MergeMethod parse_merge_method(const std::string& v) {
  if (v == "average") return MergeMethod::average;
  if (v == "task_vector") return MergeMethod::task_vector;
  if (v == "ties") return MergeMethod::ties;
  if (v == "dare") return MergeMethod::dare;
  throw ValidationError("config: unknown merge method '" + v + "'");
}

}  // namespace

std::pair<std::string, std::string> split_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ValidationError("endpoint '" + url + "' has no scheme");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

PipelineConfig parse_config_text(const std::string& text, const std::string& origin) {
  PipelineConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;

  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;

    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto where = [&] { return origin + ":" + std::to_string(line_no); };

    if (key == "critic") {
      const auto parts = split_ws(value);
      if (parts.size() < 4) {
        throw ValidationError(where() +
                              ": critic needs '<id> <endpoint> <model> <credential-env> ...'");
      }
      HttpClientConfig c;
      c.client_id = parts[0];
      auto [base, path] = split_endpoint(parts[1]);
      c.base_url = base;
      c.path = path;
      c.model = parts[2];
      c.credential_env_var = parts[3];
      if (c.credential_env_var.empty()) {
        throw ValidationError(where() + ": credential env var name must be non-empty");
      }
      if (parts.size() > 4) c.max_in_flight = static_cast<int>(parse_num(parts[4], key));
      if (parts.size() > 5) c.timeout_ms = static_cast<int>(parse_num(parts[5], key));
      if (parts.size() > 6) c.retries = static_cast<int>(parse_num(parts[6], key));
      cfg.critics.push_back(std::move(c));
    } else if (key == "c" || key == "critiques") {
      cfg.critique_count = static_cast<int>(parse_num(value, key));
      cfg.critique_count_set = true;
      if (cfg.critique_count < 1) throw ValidationError(where() + ": critique count must be >= 1");
    } else if (key == "seed") {
      cfg.seed = static_cast<uint64_t>(parse_num(value, key));
    } else if (key == "beta_gt") {
      cfg.thresholds.beta_gt = parse_num(value, key);
    } else if (key == "beta_pred") {
      cfg.thresholds.beta_pred = parse_num(value, key);
    } else if (key == "max_rounds") {
      cfg.restoration.max_rounds = static_cast<int>(parse_num(value, key));
    } else if (key == "max_edit_distance") {
      cfg.restoration.max_normalized_edit_distance = parse_num(value, key);
    } else if (key == "whitespace_fold") {
      cfg.restoration.whitespace_fold = parse_bool(value, key);
    } else if (key == "loss_beta") {
      cfg.loss.beta = parse_num(value, key);
    } else if (key == "score_clip_epsilon") {
      cfg.loss.score_clip_epsilon = parse_num(value, key);
    } else if (key == "weight_floor_epsilon") {
      cfg.loss.weight_floor_epsilon = parse_num(value, key);
    } else if (key == "merge_method") {
      cfg.merge.method = parse_merge_method(value);
    } else if (key == "merge_alpha") {
      cfg.merge.alpha = parse_num(value, key);
    } else if (key == "ties_keep_fraction") {
      cfg.merge.ties_keep_fraction = parse_num(value, key);
    } else if (key == "ties_global_threshold") {
      cfg.merge.ties_global_threshold = parse_bool(value, key);
    } else if (key == "dare_drop_prob") {
      cfg.merge.dare_drop_prob = parse_num(value, key);
    } else if (key == "in_dir") {
      cfg.input_dir = value;
    } else if (key == "out_dir") {
      cfg.output_dir = value;
    } else {
      cfg.extra[key] = value;
    }
  }
  return cfg;
}

PipelineConfig load_config(const std::string& path) {
  return parse_config_text(load_text(path), path);
}

}  // namespace thd
