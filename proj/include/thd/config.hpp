#pragma once

#include <map>
#include <string>
#include <vector>

#include "thd/critic_client.hpp"
#include "thd/evaluation.hpp"
#include "thd/losses.hpp"
#include "thd/merge.hpp"
#include "thd/restoration.hpp"

namespace thd {

// Pipeline configuration in a plain `key = value` text format. Repeated
// `critic` keys add one critic each:
//   critic = <id> <endpoint-url> <model> <credential-env> [max_in_flight] [timeout_ms] [retries]
// Credentials never appear in the file; only the environment variable name.

struct PipelineConfig {
  std::vector<HttpClientConfig> critics;
  int critique_count = 4;
  bool critique_count_set = false;
  Thresholds thresholds;
  RestorationConfig restoration;
  LossConfig loss;
  MergeConfig merge;
  uint64_t seed = 0;
  std::string input_dir;
  std::string output_dir;
  std::map<std::string, std::string> extra;  // unrecognized keys, kept verbatim
};

PipelineConfig parse_config_text(const std::string& text, const std::string& origin = "<config>");
PipelineConfig load_config(const std::string& path);

// Splits "http://host:port/some/path" into base ("http://host:port") and
// path ("/some/path", default "/" when absent).
std::pair<std::string, std::string> split_endpoint(const std::string& url);

}  // namespace thd
