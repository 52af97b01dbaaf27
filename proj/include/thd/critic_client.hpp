#pragma once

#include <condition_variable>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "thd/annotate.hpp"
#include "thd/applications.hpp"

namespace thd {

// Transport for critic/corrector/restorer calls: either a chat-completion
// HTTP endpoint or a directory of canned transcripts for offline,
// deterministic runs.

struct HttpClientConfig {
  std::string client_id;
  std::string base_url;  // e.g. http://127.0.0.1:8080
  std::string path = "/v1/chat/completions";
  std::string model;
  std::string credential_env_var;  // bearer token read from this variable
  int max_in_flight = 4;
  int timeout_ms = 30000;
  int retries = 3;
  int backoff_base_ms = 200;  // exponential, with jitter
};

using ChatCompleter = std::function<std::optional<std::string>(const std::string& prompt)>;

// Bounded-concurrency chat completer with retries. Throws TransportError only
// on setup problems (empty env var name); per-call failures return nullopt
// after the retry budget.
ChatCompleter make_http_completer(const HttpClientConfig& cfg);

class HttpCriticClient : public CriticClient {
 public:
  explicit HttpCriticClient(const HttpClientConfig& cfg)
      : id_(cfg.client_id), completer_(make_http_completer(cfg)) {}
  std::string id() const override { return id_; }
  std::optional<std::string> critique(const SampleRecord&, const std::string& prompt,
                                      int) override {
    return completer_(prompt);
  }

 private:
  std::string id_;
  ChatCompleter completer_;
};

// Replays canned critiques from <dir>/<sample_id>__<critic_id>__run<N>.txt.
class MockCriticClient : public CriticClient {
 public:
  MockCriticClient(std::string transcript_dir, std::string critic_id)
      : dir_(std::move(transcript_dir)), id_(std::move(critic_id)) {}
  std::string id() const override { return id_; }
  std::optional<std::string> critique(const SampleRecord& sample, const std::string& prompt,
                                      int run) override;

 private:
  std::string dir_;
  std::string id_;
};

class HttpCorrector : public Corrector {
 public:
  explicit HttpCorrector(const HttpClientConfig& cfg) : completer_(make_http_completer(cfg)) {}
  std::optional<std::string> correct(const std::string&, int, const std::string& prompt) override {
    return completer_(prompt);
  }

 private:
  ChatCompleter completer_;
};

// Replays <dir>/<sample_id>__<condition>__iter<N>.txt.
class MockCorrector : public Corrector {
 public:
  MockCorrector(std::string transcript_dir, std::string condition)
      : dir_(std::move(transcript_dir)), condition_(std::move(condition)) {}
  std::optional<std::string> correct(const std::string& sample_id, int iteration,
                                     const std::string& prompt) override;

 private:
  std::string dir_;
  std::string condition_;
};

std::optional<std::string> read_text_file(const std::string& path);

}  // namespace thd
