#include "mentor/teacher/backend.hpp"

#include <algorithm>
#include <numeric>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "mentor/common/error.hpp"
#include "mentor/common/io.hpp"
#include "mentor/common/rng.hpp"
#include "mentor/corpus/sample.hpp"
#include "mentor/teacher/prompt.hpp"

namespace mentor {

void TeacherRequest::validate() const {
  if (n < 1) throw ConfigError("teacher request n must be >= 1");
  if (!(temperature >= 0.0)) throw ConfigError("teacher temperature must be non-negative");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("teacher top_p must be in (0, 1]");
  if (max_tokens < 1) throw ConfigError("teacher max_tokens must be >= 1");
}

void to_json(nlohmann::json& j, const TeacherRequest& r) {
  j = nlohmann::json{{"sample_id", r.sample_id},     {"prompt", r.prompt},
                     {"n", r.n},                     {"temperature", r.temperature},
                     {"top_p", r.top_p},             {"max_tokens", r.max_tokens}};
}

void from_json(const nlohmann::json& j, TeacherRequest& r) {
  r.sample_id = j.at("sample_id").get<std::string>();
  r.prompt = j.at("prompt").get<std::string>();
  r.n = j.at("n").get<int>();
  r.temperature = j.at("temperature").get<double>();
  r.top_p = j.at("top_p").get<double>();
  r.max_tokens = j.at("max_tokens").get<int>();
}

void OracleTeacherConfig::validate() const {
  if (!(success_probability >= 0.0 && success_probability <= 1.0)) {
    throw ConfigError("success_probability must be in [0, 1]");
  }
  if (!(feedback_bonus >= 0.0)) throw ConfigError("feedback_bonus must be non-negative");
  if (success_probability + feedback_bonus > 1.0 + 1e-12) {
    throw ConfigError("success_probability + feedback_bonus must not exceed 1");
  }
}

void to_json(nlohmann::json& j, const OracleTeacherConfig& c) {
  j = nlohmann::json{{"success_probability", c.success_probability},
                     {"feedback_bonus", c.feedback_bonus},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, OracleTeacherConfig& c) {
  c.success_probability = j.at("success_probability").get<double>();
  c.feedback_bonus = j.at("feedback_bonus").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
}

namespace {

struct Frame {
  std::string prefix, suffix;
};

const std::vector<Frame>& frames() {
  static const std::vector<Frame> f{{"", ""},
                                    {"Let us work it out.", ""},
                                    {"Step by step.", ""},
                                    {"", "That is the answer."}};
  return f;
}

std::string framed(const std::string& rationale, const Frame& f) {
  std::string out = rationale;
  if (!f.prefix.empty()) out = f.prefix + " " + out;
  if (!f.suffix.empty()) out += " " + f.suffix;
  return out;
}

std::string wrong_answer(const std::string& answer, Rng& rng) {
  const auto v = canonical_decimal(answer);
  if (!v) return "";
  const long long y = std::stoll(*v);
  const long long delta = rng.between(1, 3);
  const long long w = (y - delta >= 0 && rng.uniform() < 0.5) ? y - delta : y + delta;
  return std::to_string(w);
}

}  // namespace

OracleTeacher::OracleTeacher(OracleTeacherConfig config, RationaleBank bank)
    : config_(config), bank_(std::move(bank)) {
  config_.validate();
}

const std::vector<std::string>& OracleTeacher::lexicon() {
  static const std::vector<std::string> words = [] {
    std::vector<std::string> out;
    for (const auto& f : frames()) {
      if (!f.prefix.empty()) out.push_back(f.prefix);
      if (!f.suffix.empty()) out.push_back(f.suffix);
    }
    return out;
  }();
  return words;
}

std::vector<std::string> OracleTeacher::do_complete(const TeacherRequest& request) {
  request.validate();
  const auto it = bank_.find(request.sample_id);
  if (it == bank_.end() || it->second.empty()) {
    throw LookupError("oracle bank has no rationale for " + request.sample_id);
  }
  const auto& texts = it->second;
  const bool feedback = target_block(request.prompt).find("Wrong Solution:") != std::string_view::npos;
  const double p = std::min(1.0, config_.success_probability + (feedback ? config_.feedback_bonus : 0.0));
  const std::uint64_t prompt_seed = derive_seed(config_.seed, hash_string(request.prompt));

  std::vector<std::size_t> combos(texts.size() * frames().size());
  std::iota(combos.begin(), combos.end(), 0);
  Rng order_rng(prompt_seed);
  order_rng.shuffle(std::span(combos));

  std::vector<std::string> out;
  for (int k = 0; k < request.n; ++k) {
    Rng rng(derive_seed(prompt_seed, static_cast<std::uint64_t>(k)));
    const std::size_t c = combos[static_cast<std::size_t>(k) % combos.size()];
    const auto& text = texts[c / frames().size()];
    const auto& frame = frames()[c % frames().size()];
    auto [rationale, answer] = split_rationale(text);
    if (!(rng.uniform() < p)) answer = wrong_answer(answer, rng);
    std::string completion = framed(rationale, frame);
    if (!answer.empty()) completion += "\nAnswer: " + answer;
    out.push_back(std::move(completion));
  }
  return out;
}

HttpChatBackend::HttpChatBackend(HttpBackendConfig config) : config_(std::move(config)) {
  const auto scheme = config_.base_url.find("://");
  if (scheme == std::string::npos) throw ConfigError("teacher base_url needs a scheme: " + config_.base_url);
  const auto path = config_.base_url.find('/', scheme + 3);
  host_ = config_.base_url.substr(0, path);
  prefix_ = path == std::string::npos ? "" : config_.base_url.substr(path);
  while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
}

std::vector<std::string> HttpChatBackend::do_complete(const TeacherRequest& request) {
  request.validate();
  httplib::Client client(host_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  const Json body{{"model", config_.model},
                  {"messages", Json::array({Json{{"role", "user"}, {"content", request.prompt}}})},
                  {"n", request.n},
                  {"temperature", request.temperature},
                  {"top_p", request.top_p},
                  {"max_tokens", request.max_tokens}};
  const auto res = client.Post(prefix_ + "/v1/chat/completions", headers, body.dump(), "application/json");
  if (!res) throw TransportError("teacher request failed: " + httplib::to_string(res.error()));
  if (res->status >= 400) {
    throw TransportError("teacher endpoint returned HTTP " + std::to_string(res->status), res->status);
  }
  std::vector<std::string> out;
  try {
    const Json j = Json::parse(res->body);
    for (const auto& choice : j.at("choices")) {
      out.push_back(choice.at("message").at("content").get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("malformed teacher response: ") + e.what(), res->status, true);
  }
  if (static_cast<int>(out.size()) != request.n) {
    throw TransportError("teacher returned " + std::to_string(out.size()) + " completions, expected " +
                             std::to_string(request.n),
                         res->status, true);
  }
  return out;
}

const std::vector<std::chrono::milliseconds>& retry_schedule() {
  static const std::vector<std::chrono::milliseconds> s{std::chrono::milliseconds(1000),
                                                         std::chrono::milliseconds(2000),
                                                         std::chrono::milliseconds(4000)};
  return s;
}

void real_sleep(std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }

std::vector<std::string> complete_with_retries(TeacherBackend& backend,
                                               const TeacherRequest& request,
                                               const Sleeper& sleep) {
  const auto& schedule = retry_schedule();
  for (std::size_t attempt = 0;; ++attempt) {
    try {
      return backend.complete(request);
    } catch (const TransportError& e) {
      if (!e.retryable() || attempt >= schedule.size()) throw;
      log_warn(std::string("teacher: ") + e.what() + ", retrying");
      sleep(schedule[attempt]);
    }
  }
}

}  // namespace mentor
