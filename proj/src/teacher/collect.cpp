#include "mentor/teacher/collect.hpp"

#include <atomic>
#include <set>
#include <thread>

#include "mentor/common/error.hpp"
#include "mentor/common/io.hpp"

namespace mentor {

Digest cache_key(const TeacherRequest& request, std::string_view backend_id) {
  const Json j{{"backend", backend_id},
               {"prompt", request.prompt},
               {"n", request.n},
               {"temperature", request.temperature},
               {"top_p", request.top_p},
               {"max_tokens", request.max_tokens}};
  return sha256(j.dump());
}

TeacherCache::TeacherCache(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

std::optional<std::vector<std::string>> TeacherCache::get(const Digest& key) const {
  std::lock_guard lock(mutex_);
  const auto path = dir_ / (to_hex(key) + ".json");
  if (!fs::exists(path)) return std::nullopt;
  try {
    return read_json(path).at("completions").get<std::vector<std::string>>();
  } catch (const std::exception& e) {
    log_warn("teacher cache: ignoring unreadable entry " + path.string() + ": " + e.what());
    return std::nullopt;
  }
}

void TeacherCache::put(const Digest& key, const TeacherRequest& request,
                       std::string_view backend_id, const std::vector<std::string>& completions) {
  std::lock_guard lock(mutex_);
  write_json(dir_ / (to_hex(key) + ".json"),
             Json{{"backend", backend_id}, {"request", request}, {"completions", completions}});
}

void to_json(nlohmann::json& j, const TeacherExchange& e) {
  j = nlohmann::json{{"request", e.request},       {"completions", e.completions},
                     {"retained", e.retained},     {"num_success", e.num_success},
                     {"cached", e.cached},         {"failed", e.failed},
                     {"error", e.error}};
}

void to_json(nlohmann::json& j, const CollectOptions& c) {
  j = nlohmann::json{{"n", c.n},
                     {"temperature", c.temperature},
                     {"top_p", c.top_p},
                     {"max_tokens", c.max_tokens},
                     {"max_in_flight", c.max_in_flight}};
}

void from_json(const nlohmann::json& j, CollectOptions& c) {
  c.n = j.at("n").get<int>();
  c.temperature = j.at("temperature").get<double>();
  c.top_p = j.at("top_p").get<double>();
  c.max_tokens = j.at("max_tokens").get<int>();
  c.max_in_flight = j.at("max_in_flight").get<int>();
}

void to_json(nlohmann::json& j, const CollectReport& r) {
  j = nlohmann::json{{"num_requests", r.num_requests}, {"num_success", r.num_success},
                     {"num_failed", r.num_failed},     {"num_cached", r.num_cached},
                     {"num_retained", r.num_retained}};
}

void from_json(const nlohmann::json& j, CollectReport& r) {
  r.num_requests = j.at("num_requests").get<std::size_t>();
  r.num_success = j.at("num_success").get<std::size_t>();
  r.num_failed = j.at("num_failed").get<std::size_t>();
  r.num_cached = j.at("num_cached").get<std::size_t>();
  r.num_retained = j.at("num_retained").get<std::size_t>();
}

CollectReport summarize(std::span<const TeacherExchange> exchanges) {
  CollectReport r;
  for (const auto& e : exchanges) {
    ++r.num_requests;
    r.num_success += static_cast<std::size_t>(e.num_success);
    r.num_failed += e.failed;
    r.num_cached += e.cached;
  }
  return r;
}

std::vector<TeacherExchange> collect(TeacherBackend& backend, const DatasetStore& store,
                                     const PromptTemplate& tmpl,
                                     std::span<const TeacherTarget> targets, int round,
                                     const CollectOptions& options, TeacherCache* cache,
                                     const Sleeper& sleep) {
  if (options.max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
  std::vector<TeacherExchange> exchanges(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const Sample& s = store.sample(targets[i].sample_id);
    auto& req = exchanges[i].request;
    req.sample_id = s.id;
    req.prompt = render_feedback_prompt(tmpl, s, targets[i].wrong_rationale);
    req.n = options.n;
    req.temperature = options.temperature;
    req.top_p = options.top_p;
    req.max_tokens = options.max_tokens;
    req.validate();
  }

  const std::string backend_id = backend.id();
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  auto worker = [&] {
    try {
      for (std::size_t i = next++; i < exchanges.size(); i = next++) {
        auto& ex = exchanges[i];
        const Digest key = cache_key(ex.request, backend_id);
        if (cache) {
          if (auto hit = cache->get(key)) {
            ex.completions = std::move(*hit);
            ex.cached = true;
          }
        }
        if (!ex.cached) {
          try {
            ex.completions = complete_with_retries(backend, ex.request, sleep);
            if (cache) cache->put(key, ex.request, backend_id, ex.completions);
          } catch (const TransportError& e) {
            ex.failed = true;
            ex.error = e.what();
            log_warn("teacher: request for " + ex.request.sample_id + " failed: " + e.what());
            continue;
          }
        }
        const Sample& s = store.sample(ex.request.sample_id);
        std::set<std::string> seen;
        for (const auto& text : ex.completions) {
          auto rec = judge(text, s, Source::teacher, round);
          if (!rec.correct) continue;
          ++ex.num_success;
          if (seen.insert(normalize_for_dedup(rec.text)).second) ex.retained.push_back(std::move(rec));
        }
      }
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (!first_error) first_error = std::current_exception();
      next = exchanges.size();
    }
  };
  const auto threads = static_cast<std::size_t>(options.max_in_flight);
  if (threads == 1 || exchanges.size() <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < std::min(threads, exchanges.size()); ++t) pool.emplace_back(worker);
  }
  if (first_error) std::rethrow_exception(first_error);
  return exchanges;
}

std::vector<RationaleRecord> retained_records(std::span<const TeacherExchange> exchanges) {
  std::vector<RationaleRecord> out;
  for (const auto& e : exchanges) out.insert(out.end(), e.retained.begin(), e.retained.end());
  return out;
}

}  // namespace mentor
