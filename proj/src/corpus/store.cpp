#include "mentor/corpus/store.hpp"

#include "mentor/common/error.hpp"
#include "mentor/common/io.hpp"

namespace mentor {
namespace {

template <class T>
std::vector<T> load_jsonl(const fs::path& path) {
  std::vector<T> out;
  read_jsonl(path, [&](std::size_t line, const Json& j) {
    try {
      out.push_back(j.get<T>());
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(line) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  });
  return out;
}

template <class T>
void write_jsonl(const fs::path& path, std::span<const T> items) {
  std::string out;
  for (const auto& item : items) out += Json(item).dump() + "\n";
  write_file(path, out);
}

}  // namespace

std::vector<Sample> load_samples_jsonl(const fs::path& path) { return load_jsonl<Sample>(path); }

void write_samples_jsonl(const fs::path& path, std::span<const Sample> samples) {
  write_jsonl(path, samples);
}

std::vector<RationaleRecord> load_rationales_jsonl(const fs::path& path) {
  return load_jsonl<RationaleRecord>(path);
}

void write_rationales_jsonl(const fs::path& path, std::span<const RationaleRecord> records) {
  write_jsonl(path, records);
}

DatasetStore::DatasetStore(std::vector<Sample> samples) : samples_(std::move(samples)) {
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    if (!index_.emplace(samples_[i].id, i).second) {
      throw ContractError("duplicate sample id " + samples_[i].id);
    }
  }
}

bool DatasetStore::has_sample(std::string_view id) const {
  return index_.contains(std::string(id));
}

const Sample& DatasetStore::sample(std::string_view id) const {
  const auto it = index_.find(std::string(id));
  if (it == index_.end()) throw LookupError("unknown sample id " + std::string(id));
  return samples_[it->second];
}

RationaleRecord DatasetStore::judge(std::string_view sample_id, std::string text, Source source,
                                    int round_tag) const {
  return mentor::judge(std::move(text), sample(sample_id), source, round_tag);
}

AppendStats DatasetStore::append(std::span<const RationaleRecord> records, std::size_t cap) {
  AppendStats stats;
  for (const auto& r : records) {
    if (!has_sample(r.sample_id)) throw MergeError("record for unknown sample " + r.sample_id);
    if (r.text.empty()) throw ContractError("empty rationale text for " + r.sample_id);
    const RationaleRecord check = judge(r.sample_id, r.text, r.source, r.round);
    if (check.correct != r.correct || check.extracted_answer != r.extracted_answer) {
      throw ContractError("record for " + r.sample_id + " disagrees with its judged correctness");
    }
    auto key = std::make_pair(r.sample_id, normalize_for_dedup(r.text));
    if (seen_.contains(key)) {
      ++stats.duplicates;
      continue;
    }
    auto& n = counts_[CapKey{r.sample_id, r.source, r.round, r.correct}];
    if (n >= cap) {
      ++stats.capped;
      continue;
    }
    ++n;
    seen_.insert(std::move(key));
    (r.correct ? train_ : neg_).push_back(r);
    ++stats.added;
  }
  if (stats.capped > 0) {
    log_debug("store: dropped " + std::to_string(stats.capped) + " records over the cap");
  }
  return stats;
}

std::size_t DatasetStore::count(std::string_view sample_id, Source source, int round_tag,
                                bool correct) const {
  const auto it = counts_.find(CapKey{std::string(sample_id), source, round_tag, correct});
  return it == counts_.end() ? 0 : it->second;
}

void DatasetStore::snapshot(const fs::path& dir) const {
  fs::create_directories(dir);
  write_rationales_jsonl(dir / "train.jsonl", train_);
  write_rationales_jsonl(dir / "neg.jsonl", neg_);
}

DatasetStore DatasetStore::load(std::vector<Sample> samples, const fs::path& dir) {
  DatasetStore store(std::move(samples));
  for (const char* name : {"train.jsonl", "neg.jsonl"}) {
    const auto records = load_rationales_jsonl(dir / name);
    // Snapshots were capped when written; reloading must not re-cap them.
    const auto stats = store.append(records, static_cast<std::size_t>(-1));
    if (stats.added != records.size()) {
      throw ParseError((dir / name).string() + " contains duplicate records");
    }
  }
  return store;
}

}  // namespace mentor
