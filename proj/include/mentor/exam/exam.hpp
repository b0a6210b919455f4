#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mentor/corpus/cot.hpp"
#include "mentor/corpus/store.hpp"
#include "mentor/model/inference.hpp"

namespace mentor {

struct ExamConfig {
  GenerationConfig gen = GenerationConfig::mistakes();
  int max_mistakes_per_question = 4;

  void validate() const;
};

void to_json(nlohmann::json& j, const ExamConfig& c);
void from_json(const nlohmann::json& j, ExamConfig& c);

struct QuestionResult {
  int num_correct = 0;  // sampled completions judged correct
  int num_wrong = 0;    // sampled completions judged wrong
  bool greedy_correct = false;
  bool skipped = false;  // prompt did not fit the context

  bool operator==(const QuestionResult&) const = default;
};

struct ExamResult {
  std::vector<RationaleRecord> new_negatives;
  // Percentage of questions whose greedy answer is wrong.
  double error_rate = 0.0;
  std::map<std::string, QuestionResult> per_question;
};

void to_json(nlohmann::json& j, const ExamResult& r);  // report only, no negatives
double error_rate_from(const std::map<std::string, QuestionResult>& per_question);

// Samples completions for every stored question and harvests the wrong ones,
// tagged with `round`. Sampling streams derive from (gen.seed, sample id,
// round), so the result is fixed for a given student and seed.
ExamResult run_exam(const Student& student, const DatasetStore& store,
                    std::span<const Demonstration> demos, const ExamConfig& config, int round);

// Appends the result's negatives; throws MergeError when a record names a
// sample outside the store.
AppendStats merge_exam(DatasetStore& store, const ExamResult& result,
                       std::size_t cap = DatasetStore::kDefaultCap);

}  // namespace mentor
