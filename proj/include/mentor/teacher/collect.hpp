#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mentor/common/digest.hpp"
#include "mentor/corpus/store.hpp"
#include "mentor/teacher/backend.hpp"
#include "mentor/teacher/prompt.hpp"

namespace mentor {

// SHA-256 over the byte-exact prompt, decoding fields, and backend id.
Digest cache_key(const TeacherRequest& request, std::string_view backend_id);

// Directory of {hex digest}.json exchange records.
class TeacherCache {
 public:
  explicit TeacherCache(std::filesystem::path dir);
  std::optional<std::vector<std::string>> get(const Digest& key) const;
  void put(const Digest& key, const TeacherRequest& request, std::string_view backend_id,
           const std::vector<std::string>& completions);

 private:
  std::filesystem::path dir_;
  mutable std::mutex mutex_;
};

struct TeacherTarget {
  std::string sample_id;
  std::optional<std::string> wrong_rationale;
};

struct TeacherExchange {
  TeacherRequest request;
  std::vector<std::string> completions;
  std::vector<RationaleRecord> retained;  // judged correct, deduplicated
  int num_success = 0;                    // correct completions before caps
  bool cached = false;
  bool failed = false;
  std::string error;
};

void to_json(nlohmann::json& j, const TeacherExchange& e);

struct CollectOptions {
  int n = 4;
  double temperature = 1.0;
  double top_p = 0.9;
  int max_tokens = 128;
  int max_in_flight = 4;
};

void to_json(nlohmann::json& j, const CollectOptions& c);
void from_json(const nlohmann::json& j, CollectOptions& c);

struct CollectReport {
  std::size_t num_requests = 0;
  std::size_t num_success = 0;
  std::size_t num_failed = 0;
  std::size_t num_cached = 0;
  std::size_t num_retained = 0;  // after store caps and dedup, set by the caller
};

void to_json(nlohmann::json& j, const CollectReport& r);
void from_json(const nlohmann::json& j, CollectReport& r);
CollectReport summarize(std::span<const TeacherExchange> exchanges);

// Renders, queries (cache first, then the backend with retries), and judges
// one request per target. Transport failures mark the exchange failed and the
// run continues. Exchanges come back in target order.
std::vector<TeacherExchange> collect(TeacherBackend& backend, const DatasetStore& store,
                                     const PromptTemplate& tmpl,
                                     std::span<const TeacherTarget> targets, int round,
                                     const CollectOptions& options, TeacherCache* cache,
                                     const Sleeper& sleep = real_sleep);

std::vector<RationaleRecord> retained_records(std::span<const TeacherExchange> exchanges);

}  // namespace mentor
