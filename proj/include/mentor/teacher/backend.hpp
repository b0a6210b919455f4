#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mentor/corpus/synthetic.hpp"

namespace mentor {

struct TeacherRequest {
  std::string sample_id;
  std::string prompt;
  int n = 4;
  double temperature = 1.0;
  double top_p = 0.9;
  int max_tokens = 128;

  void validate() const;
};

void to_json(nlohmann::json& j, const TeacherRequest& r);
void from_json(const nlohmann::json& j, TeacherRequest& r);

class TeacherBackend {
 public:
  virtual ~TeacherBackend() = default;
  virtual std::string id() const = 0;

  // Counts the call, then delegates; must be safe to call concurrently.
  std::vector<std::string> complete(const TeacherRequest& request) {
    ++calls_;
    return do_complete(request);
  }
  std::size_t calls() const { return calls_.load(); }

 protected:
  virtual std::vector<std::string> do_complete(const TeacherRequest& request) = 0;

 private:
  std::atomic<std::size_t> calls_{0};
};

struct OracleTeacherConfig {
  double success_probability = 0.8;
  double feedback_bonus = 0.1;
  std::uint64_t seed = 42;

  void validate() const;
};

void to_json(nlohmann::json& j, const OracleTeacherConfig& c);
void from_json(const nlohmann::json& j, OracleTeacherConfig& c);

// Offline teacher over a rationale bank. Each completion is correct with
// probability success_probability (plus feedback_bonus when the target block
// carries a wrong solution) and its surface form is a seeded pick of a bank
// text and a framing phrase. Wrong completions keep a bank rationale but state
// a different answer. Outputs depend only on (seed, prompt, completion index).
class OracleTeacher final : public TeacherBackend {
 public:
  OracleTeacher(OracleTeacherConfig config, RationaleBank bank);
  std::string id() const override { return "oracle"; }

  // Framing phrases the oracle may add; vocabularies must cover them.
  static const std::vector<std::string>& lexicon();

 protected:
  std::vector<std::string> do_complete(const TeacherRequest& request) override;

 private:
  OracleTeacherConfig config_;
  RationaleBank bank_;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

struct HttpBackendConfig {
  std::string base_url;  // scheme://host[:port][/prefix]
  std::string model = "gpt-3.5-turbo";
  std::string api_key;   // from the environment, never serialized
  std::chrono::milliseconds timeout{60000};
};

// POST {base_url}/v1/chat/completions with the prompt as one user message.
// HTTP errors and malformed bodies raise TransportError.
class HttpChatBackend final : public TeacherBackend {
 public:
  explicit HttpChatBackend(HttpBackendConfig config);
  std::string id() const override { return "http:" + config_.model; }

 protected:
  std::vector<std::string> do_complete(const TeacherRequest& request) override;

 private:
  HttpBackendConfig config_;
  std::string host_, prefix_;
};

// Retry schedule for retryable transport errors: sleeps of 1 s, 2 s, 4 s,
// then the last error propagates.
const std::vector<std::chrono::milliseconds>& retry_schedule();
void real_sleep(std::chrono::milliseconds d);

std::vector<std::string> complete_with_retries(TeacherBackend& backend,
                                               const TeacherRequest& request,
                                               const Sleeper& sleep = real_sleep);

}  // namespace mentor
