#include <doctest.h>

#include <functional>

#include "helpers.hpp"
#include "mentor/common/error.hpp"
#include "mentor/exam/exam.hpp"

using namespace mentor;

namespace {

// Student driven by a function of (question, completion index, greedy?).
class ScriptedStudent final : public Student {
 public:
  using Script = std::function<std::string(const std::string& question, int index, bool greedy)>;
  explicit ScriptedStudent(Script s) : script_(std::move(s)) {}
  std::vector<std::string> complete(std::string_view prompt,
                                    const GenerationConfig& gen) const override {
    const auto q0 = prompt.rfind("Question: ") + 10;
    const auto q1 = prompt.find('\n', q0);
    const std::string question(prompt.substr(q0, q1 - q0));
    if (question == "too long") throw LengthError("prompt too long");
    const bool greedy = gen.mode == DecodeMode::greedy;
    const int n = greedy ? 1 : gen.num_return_sequences;
    std::vector<std::string> out;
    for (int i = 0; i < n; ++i) out.push_back(script_(question, i, greedy));
    return out;
  }

 private:
  Script script_;
};

std::vector<Sample> ten_questions() {
  std::vector<Sample> s;
  for (int i = 0; i < 10; ++i) {
    s.push_back({"s" + std::to_string(i), "q" + std::to_string(i), std::to_string(i + 10),
                 TaskType::numeric});
  }
  return s;
}

std::string gold_of(const std::string& q) { return std::to_string(std::stoi(q.substr(1)) + 10); }

}  // namespace

TEST_CASE("perfect student has no mistakes") {
  DatasetStore store(ten_questions());
  ScriptedStudent st([](const std::string& q, int i, bool) {
    return " step " + std::to_string(i) + ".\nAnswer: " + gold_of(q);
  });
  const auto r = run_exam(st, store, {}, ExamConfig{}, 1);
  CHECK(r.new_negatives.empty());
  CHECK(r.error_rate == 0.0);
  CHECK(r.per_question.size() == 10);
  for (const auto& [id, q] : r.per_question) CHECK(q.num_correct == 4);
}

TEST_CASE("four distinct wrong completions per question") {
  DatasetStore store(ten_questions());
  ScriptedStudent st([](const std::string& q, int i, bool greedy) {
    return " guess.\nAnswer: " + std::to_string(std::stoi(gold_of(q)) + (greedy ? 100 : i + 1));
  });
  const auto r = run_exam(st, store, {}, ExamConfig{}, 2);
  CHECK(r.new_negatives.size() == 40);
  CHECK(r.error_rate == 100.0);
  CHECK(error_rate_from(r.per_question) == r.error_rate);
  for (const auto& rec : r.new_negatives) {
    CHECK_FALSE(rec.correct);
    CHECK(rec.round == 2);
    CHECK(rec.source == Source::student);
    CHECK_FALSE(judge(rec.text, store.sample(rec.sample_id), rec.source, rec.round).correct);
  }
}

TEST_CASE("mistake cap, dedup and greedy error rate") {
  DatasetStore store(ten_questions());
  ExamConfig cfg;
  cfg.gen.num_return_sequences = 6;
  cfg.max_mistakes_per_question = 4;
  // Sampled: 6 wrong (two share a text); greedy: right on even questions.
  ScriptedStudent st([](const std::string& q, int i, bool greedy) {
    const int g = std::stoi(gold_of(q));
    if (greedy) return " x.\nAnswer: " + std::to_string(g % 2 == 0 ? g : g + 1);
    return " x.\nAnswer: " + std::to_string(g + 1 + (i == 5 ? 0 : i));
  });
  const auto r = run_exam(st, store, {}, cfg, 1);
  CHECK(r.new_negatives.size() == 40);
  CHECK(r.error_rate == 50.0);
  for (const auto& [id, q] : r.per_question) CHECK(q.num_wrong == 6);

  ExamResult five;
  for (int i = 0; i < 5; ++i) {
    five.new_negatives.push_back(
        judge(" w" + std::to_string(i) + ".\nAnswer: 1", store.sample("s0"), Source::student, 1));
  }
  DatasetStore s2(ten_questions());
  CHECK(merge_exam(s2, five).added == 4);
  CHECK(s2.neg().size() == 4);
}

TEST_CASE("merge is idempotent and validates samples") {
  DatasetStore store(ten_questions());
  ScriptedStudent st([](const std::string& q, int i, bool) {
    return " w.\nAnswer: " + std::to_string(std::stoi(gold_of(q)) + i + 1);
  });
  const auto r = run_exam(st, store, {}, ExamConfig{}, 1);
  merge_exam(store, ExamResult{});
  CHECK(store.neg().empty());
  merge_exam(store, r);
  const auto once = store.neg();
  merge_exam(store, r);
  CHECK(store.neg() == once);
  CHECK(store.train().empty());

  ExamResult foreign;
  foreign.new_negatives.push_back(judge(" a.\nAnswer: 1", Sample{"zz", "q", "2", TaskType::numeric},
                                        Source::student, 1));
  CHECK_THROWS_AS(merge_exam(store, foreign), MergeError);
  ExamResult right;
  right.new_negatives.push_back(judge(" a.\nAnswer: 10", store.sample("s0"), Source::student, 1));
  CHECK_THROWS_AS(merge_exam(store, right), MergeError);
}

TEST_CASE("over-length prompts are skipped") {
  auto samples = ten_questions();
  samples[3].question = "too long";
  DatasetStore store(samples);
  ScriptedStudent st([](const std::string&, int, bool) { return " w.\nAnswer: 0"; });
  const auto r = run_exam(st, store, {}, ExamConfig{}, 1);
  CHECK(r.per_question.at("s3").skipped);
  CHECK(r.new_negatives.size() == 9);
}

TEST_CASE("exam with the transformer student is deterministic") {
  const std::vector<std::string> texts = {"Question: q1 q2\nReasoning: 1 + 2 = 3.\nAnswer:"};
  const auto tok = Tokenizer::build(texts);
  auto cfg = mentor::testing::micro_config(tok.size());
  cfg.context_length = 64;
  const auto m = init_model(cfg);
  TransformerStudent st(m, tok);
  DatasetStore store({{"a", "q1", "3", TaskType::numeric}, {"b", "q2", "3", TaskType::numeric}});
  ExamConfig ec;
  ec.gen.max_new_tokens = 12;
  const auto r1 = run_exam(st, store, {}, ec, 1);
  const auto r2 = run_exam(st, store, {}, ec, 1);
  CHECK(r1.new_negatives == r2.new_negatives);
  CHECK(r1.per_question == r2.per_question);
  const auto r3 = run_exam(st, store, {}, ec, 2);
  CHECK(r3.per_question.size() == 2);
  nlohmann::json j = r1;
  CHECK(j.contains("error_rate"));
  CHECK(j.contains("per_question"));
  CHECK_FALSE(j.contains("new_negatives"));
}
