#include "mentor/exam/exam.hpp"

#include <set>

#include "mentor/common/error.hpp"
#include "mentor/common/io.hpp"
#include "mentor/common/rng.hpp"

namespace mentor {

void ExamConfig::validate() const {
  gen.validate();
  if (max_mistakes_per_question < 1) throw ConfigError("max_mistakes_per_question must be >= 1");
}

void to_json(nlohmann::json& j, const ExamConfig& c) {
  j = nlohmann::json{{"gen", c.gen}, {"max_mistakes_per_question", c.max_mistakes_per_question}};
}

void from_json(const nlohmann::json& j, ExamConfig& c) {
  c.gen = j.at("gen").get<GenerationConfig>();
  c.max_mistakes_per_question = j.at("max_mistakes_per_question").get<int>();
}

void to_json(nlohmann::json& j, const ExamResult& r) {
  j = nlohmann::json{{"error_rate", r.error_rate}, {"num_negatives", r.new_negatives.size()}};
  auto& pq = j["per_question"] = nlohmann::json::object();
  for (const auto& [id, q] : r.per_question) {
    pq[id] = {{"num_correct", q.num_correct},
              {"num_wrong", q.num_wrong},
              {"greedy_correct", q.greedy_correct},
              {"skipped", q.skipped}};
  }
}

double error_rate_from(const std::map<std::string, QuestionResult>& per_question) {
  if (per_question.empty()) return 0.0;
  std::size_t wrong = 0;
  for (const auto& [id, q] : per_question) wrong += !q.greedy_correct;
  return 100.0 * static_cast<double>(wrong) / static_cast<double>(per_question.size());
}

ExamResult run_exam(const Student& student, const DatasetStore& store,
                    std::span<const Demonstration> demos, const ExamConfig& config, int round) {
  config.validate();
  const auto& samples = store.samples();
  const auto n = samples.size();
  std::vector<std::vector<RationaleRecord>> mistakes(n);
  std::vector<QuestionResult> results(n);
  const GenerationConfig greedy = GenerationConfig::greedy(config.gen.max_new_tokens);

#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t i = 0; i < n; ++i) {
    const Sample& s = samples[i];
    const std::string prompt = render_cot(demos, s.question);
    GenerationConfig gen = config.gen;
    gen.seed = derive_seed(config.gen.seed, hash_string(s.id), static_cast<std::uint64_t>(round));
    auto& q = results[i];
    try {
      std::set<std::string> seen;
      for (auto& text : student.complete(prompt, gen)) {
        auto rec = judge(std::move(text), s, Source::student, round);
        if (rec.correct) {
          ++q.num_correct;
          continue;
        }
        ++q.num_wrong;
        if (rec.text.empty()) continue;
        if (static_cast<int>(mistakes[i].size()) >= config.max_mistakes_per_question) continue;
        if (seen.insert(normalize_for_dedup(rec.text)).second) mistakes[i].push_back(std::move(rec));
      }
      q.greedy_correct = judge(student.complete(prompt, greedy).at(0), s, Source::student, round).correct;
    } catch (const LengthError& e) {
      q = QuestionResult{};
      q.skipped = true;
      mistakes[i].clear();
      log_warn("exam: skipping " + s.id + ": " + e.what());
    }
  }

  ExamResult result;
  for (std::size_t i = 0; i < n; ++i) {
    result.per_question[samples[i].id] = results[i];
    for (auto& r : mistakes[i]) result.new_negatives.push_back(std::move(r));
  }
  result.error_rate = error_rate_from(result.per_question);
  return result;
}

AppendStats merge_exam(DatasetStore& store, const ExamResult& result, std::size_t cap) {
  for (const auto& r : result.new_negatives) {
    if (!store.has_sample(r.sample_id)) throw MergeError("exam result names unknown sample " + r.sample_id);
    if (r.correct) throw MergeError("exam negative for " + r.sample_id + " is judged correct");
  }
  return store.append(result.new_negatives, cap);
}

}  // namespace mentor
