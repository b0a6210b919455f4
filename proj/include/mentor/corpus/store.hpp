#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "mentor/corpus/sample.hpp"

namespace mentor {

std::vector<Sample> load_samples_jsonl(const std::filesystem::path& path);
void write_samples_jsonl(const std::filesystem::path& path, std::span<const Sample> samples);
std::vector<RationaleRecord> load_rationales_jsonl(const std::filesystem::path& path);
void write_rationales_jsonl(const std::filesystem::path& path,
                            std::span<const RationaleRecord> records);

struct AppendStats {
  std::size_t added = 0;
  std::size_t duplicates = 0;
  std::size_t capped = 0;
};

// D_train (correct rationales) and D_neg (wrong ones) over a fixed sample set.
class DatasetStore {
 public:
  static constexpr std::size_t kDefaultCap = 4;

  DatasetStore() = default;
  explicit DatasetStore(std::vector<Sample> samples);

  const std::vector<Sample>& samples() const { return samples_; }
  bool has_sample(std::string_view id) const;
  // Throws LookupError for an unknown id.
  const Sample& sample(std::string_view id) const;
  RationaleRecord judge(std::string_view sample_id, std::string text, Source source,
                        int round) const;

  const std::vector<RationaleRecord>& train() const { return train_; }
  const std::vector<RationaleRecord>& neg() const { return neg_; }

  // Routes each record to D_train or D_neg by its (re-verified) correctness.
  // Exact duplicates per (sample_id, normalized text) are dropped, and at most
  // `cap` records are kept per (sample_id, source, round) in each pool.
  // Throws MergeError for an unknown sample and ContractError when a record's
  // correct flag disagrees with its text.
  AppendStats append(std::span<const RationaleRecord> records, std::size_t cap = kDefaultCap);

  std::size_t count(std::string_view sample_id, Source source, int round, bool correct) const;

  // train.jsonl and neg.jsonl under `dir`.
  void snapshot(const std::filesystem::path& dir) const;
  static DatasetStore load(std::vector<Sample> samples, const std::filesystem::path& dir);

  int round = 0;

 private:
  using CapKey = std::tuple<std::string, Source, int, bool>;

  std::vector<Sample> samples_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<RationaleRecord> train_;
  std::vector<RationaleRecord> neg_;
  std::set<std::pair<std::string, std::string>> seen_;
  std::map<CapKey, std::size_t> counts_;
};

}  // namespace mentor
