#include "thd/critic_client.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "thd/errors.hpp"
#include "thd/rng.hpp"

namespace thd {

namespace {

// In-flight cap shared by every call made through one completer.
class Gate {
 public:
  explicit Gate(int slots) : slots_(slots) {}
  void acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return slots_ > 0; });
    --slots_;
  }
  void release() {
    {
      std::lock_guard lock(mu_);
      ++slots_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int slots_;
};

struct GateHold {
  Gate& gate;
  explicit GateHold(Gate& g) : gate(g) { gate.acquire(); }
  ~GateHold() { gate.release(); }
};

}  // namespace

std::optional<std::string> read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

ChatCompleter make_http_completer(const HttpClientConfig& cfg) {
  if (cfg.credential_env_var.empty()) {
    throw TransportError("critic '" + cfg.client_id + "': credential env var name is empty");
  }
  auto gate = std::make_shared<Gate>(std::max(1, cfg.max_in_flight));
  const HttpClientConfig conf = cfg;

  return [gate, conf](const std::string& prompt) -> std::optional<std::string> {
    GateHold hold(*gate);

    nlohmann::json body = {
        {"model", conf.model},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
    };
    const std::string payload = body.dump();

    thread_local Rng jitter(
        std::hash<std::thread::id>{}(std::this_thread::get_id()));

    for (int attempt = 0; attempt <= conf.retries; ++attempt) {
      if (attempt > 0) {
        const auto backoff = static_cast<int64_t>(conf.backoff_base_ms) * (1ll << (attempt - 1));
        const auto sleep_ms = backoff + static_cast<int64_t>(jitter.next_below(
                                            static_cast<uint64_t>(conf.backoff_base_ms) + 1));
        std::this_thread::sleep_for(std::chrono::milliseconds(sleep_ms));
      }

      httplib::Client client(conf.base_url);
      client.set_connection_timeout(0, conf.timeout_ms * 1000);
      client.set_read_timeout(0, conf.timeout_ms * 1000);
      client.set_write_timeout(0, conf.timeout_ms * 1000);
      httplib::Headers headers;
      if (const char* token = std::getenv(conf.credential_env_var.c_str())) {
        headers.emplace("Authorization", std::string("Bearer ") + token);
      }

      auto res = client.Post(conf.path, headers, payload, "application/json");
      if (!res || res->status < 200 || res->status >= 300) continue;
      try {
        const auto reply = nlohmann::json::parse(res->body);
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
      } catch (const nlohmann::json::exception&) {
        continue;  // malformed reply counts as a failed attempt
      }
    }
    return std::nullopt;
  };
}

std::optional<std::string> MockCriticClient::critique(const SampleRecord& sample,
                                                      const std::string&, int run) {
  return read_text_file(dir_ + "/" + sample.id + "__" + id_ + "__run" + std::to_string(run) +
                        ".txt");
}

std::optional<std::string> MockCorrector::correct(const std::string& sample_id, int iteration,
                                                  const std::string&) {
  return read_text_file(dir_ + "/" + sample_id + "__" + condition_ + "__iter" +
                        std::to_string(iteration) + ".txt");
}

}  // namespace thd
