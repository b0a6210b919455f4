#include <doctest.h>

#include <fstream>
#include <set>

#include "helpers.hpp"
#include "mentor/common/error.hpp"
#include "mentor/corpus/cot.hpp"
#include "mentor/corpus/sample.hpp"
#include "mentor/corpus/store.hpp"
#include "mentor/corpus/synthetic.hpp"

using namespace mentor;
using mentor::testing::TempDir;

namespace {

Sample numeric(const std::string& id, const std::string& gold) {
  return Sample{id, "Q " + id, canonical_answer(gold, TaskType::numeric), TaskType::numeric};
}

RationaleRecord rec(const Sample& s, const std::string& text, Source src = Source::teacher,
                    int round = 1) {
  return judge(text, s, src, round);
}

}  // namespace

TEST_CASE("answer extraction") {
  CHECK(extract_answer("He has 6 boxes of 8, so 48 in all.\nAnswer: 48", TaskType::numeric) ==
        "48");
  CHECK(extract_answer("It can fly. Answer: Yes", TaskType::yes_no) == "yes");
  CHECK(extract_answer("no marker at all 12", TaskType::numeric) == std::nullopt);
  CHECK(extract_answer("Answer: 3 then Answer: -12.50 later", TaskType::numeric) == "-12.5");
  CHECK(extract_answer("Answer: none", TaskType::numeric) == std::nullopt);
  CHECK(extract_answer("Answer: I think (C) rather than a", TaskType::multiple_choice) == "c");
  CHECK(extract_answer("Answer: b", TaskType::multiple_choice) == "b");
  CHECK(extract_answer("Answer: maybe", TaskType::yes_no) == std::nullopt);
}

TEST_CASE("canonical numeric equality") {
  CHECK(canonical_decimal("12.0") == "12");
  CHECK(canonical_decimal("0012.500") == "12.5");
  CHECK(canonical_decimal("-0") == "0");
  CHECK(canonical_decimal("+7") == "7");
  CHECK(canonical_decimal(".5") == "0.5");
  CHECK(canonical_decimal("1e5") == std::nullopt);
  CHECK(canonical_decimal("") == std::nullopt);
  CHECK_THROWS_AS(canonical_answer("abc", TaskType::numeric), ParseError);
  CHECK_THROWS_AS(canonical_answer("(f)", TaskType::multiple_choice), ParseError);
  CHECK(canonical_answer("(B)", TaskType::multiple_choice) == "b");
  CHECK(canonical_answer("Yes", TaskType::yes_no) == "yes");

  const Sample s = numeric("a", "150");
  CHECK(judge("x\nAnswer: 150", s, Source::student, 1).correct);
  CHECK(judge("x\nAnswer: 150.00", s, Source::student, 1).correct);
  const auto none = judge("no answer here", s, Source::student, 1);
  CHECK_FALSE(none.correct);
  CHECK_FALSE(none.extracted_answer.has_value());
  CHECK(judge("x\nAnswer: 12.0", numeric("b", "12"), Source::student, 1).correct);
}

TEST_CASE("split_rationale and dedup normalization") {
  const auto [r, a] = split_rationale("  3 + 4 = 7.\nAnswer: 7 ");
  CHECK(r == "3 + 4 = 7.");
  CHECK(a == "7");
  CHECK(split_rationale("just text").second.empty());
  CHECK(normalize_for_dedup("  A  b\n\tC ") == "a b c");
}

TEST_CASE("render_cot golden strings") {
  const std::vector<Demonstration> none;
  CHECK(render_cot(none, "Tom has 3 pens.") == "Question: Tom has 3 pens.\nReasoning:");
  CHECK(render_cot(none, "Q?", std::string("r1.\nAnswer: 5")) ==
        "Question: Q?\nReasoning: r1.\nAnswer: 5");
  const std::vector<Demonstration> demos = {{"A?", "1 + 1 = 2.", "2"},
                                            {"B?", "2 + 2 = 4.", "4"},
                                            {"C?", "3 + 3 = 6.", "6"}};
  const std::string expected =
      "Question: A?\nReasoning: 1 + 1 = 2.\nAnswer: 2\n\n"
      "Question: B?\nReasoning: 2 + 2 = 4.\nAnswer: 4\n\n"
      "Question: C?\nReasoning: 3 + 3 = 6.\nAnswer: 6\n\n"
      "Question: D?\nReasoning:";
  CHECK(render_cot(demos, "D?") == expected);
  CHECK(render_cot(std::span(demos).first(2), "D?") != render_cot(demos, "D?"));
  CHECK(render_cot(demos, "D?") != render_cot(demos, "E?"));
}

TEST_CASE("encode_cot segment tags") {
  const std::vector<Demonstration> demos = {{"A b?", "1 + 1 = 2.", "2"}};
  std::vector<std::string> texts = {render_cot(demos, "C d?", std::string("3 + 1 = 4.\nAnswer: 4"))};
  const auto tok = Tokenizer::build(texts);
  const auto seq = encode_cot(tok, demos, "C d?", std::string("3 + 1 = 4.\nAnswer: 4"));
  REQUIRE(seq.ids.size() == seq.tags.size());
  CHECK(seq.tags.front() == Segment::demo);
  CHECK(seq.ids.back() == Tokenizer::kEos);
  CHECK(seq.tags.back() == Segment::answer);
  CHECK(tok.decode(seq.ids) == texts[0]);
  std::set<Segment> seen(seq.tags.begin(), seq.tags.end());
  CHECK(seen.size() == 4);
  // Tags never go backwards.
  for (std::size_t i = 1; i < seq.tags.size(); ++i) CHECK(seq.tags[i] >= seq.tags[i - 1]);

  const auto infer = encode_cot(tok, demos, "C d?");
  CHECK(tok.decode(infer.ids) == render_cot(demos, "C d?"));
  CHECK(infer.tags.back() == Segment::question);

  const auto path = encode_path(tok, "C d?", "3 + 1 = 4.\nAnswer: 4");
  CHECK(path.tags.front() == Segment::question);
  CHECK(path.ids.back() != Tokenizer::kEos);
}

TEST_CASE("synthetic generator") {
  CHECK(chain_rationale(3, {{'+', 4}, {'-', 2}}) == "3 + 4 = 7. 7 - 2 = 5.");

  SyntheticTaskSpec spec;
  spec.size = 100;
  spec.seed = 7;
  spec.rationale_variants = 6;
  const auto a = generate_synthetic(spec);
  const auto b = generate_synthetic(spec);
  CHECK(a.train.size() == 70);
  CHECK(a.test.size() == 30);
  CHECK(a.bank == b.bank);
  REQUIRE(a.train.size() == b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) CHECK(a.train[i].question == b.train[i].question);
  CHECK(a.demos.size() == 3);

  std::set<std::string> questions;
  for (const auto* split : {&a.train, &a.test}) {
    for (const auto& s : *split) {
      CHECK(questions.insert(s.question).second);
      const auto& texts = a.bank.at(s.id);
      CHECK(texts.size() == 6);
      CHECK(std::set<std::string>(texts.begin(), texts.end()).size() == 6);
      for (const auto& t : texts) CHECK(judge(t, s, Source::teacher, 0).correct);
      CHECK(std::stoll(s.gold_answer) >= 0);
    }
  }
  for (const auto& d : a.demos) CHECK(!questions.contains(d.question));

  spec.num_steps = {1, 1};
  spec.rationale_variants = 1;
  const auto single = generate_synthetic(spec);
  for (const auto& s : single.train) {
    const auto& t = single.bank.at(s.id).front();
    CHECK(std::count(t.begin(), t.end(), '=') == 1);
  }

  SyntheticTaskSpec bad;
  bad.value_range = {5, 1};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = SyntheticTaskSpec{};
  bad.rationale_variants = 7;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("bank and sample files round trip") {
  TempDir dir("corpus");
  SyntheticTaskSpec spec;
  spec.size = 20;
  const auto c = generate_synthetic(spec);
  write_bank_jsonl((dir / "bank.jsonl").string(), c.bank);
  CHECK(load_bank_jsonl((dir / "bank.jsonl").string()) == c.bank);
  write_samples_jsonl(dir / "train.jsonl", c.train);
  const auto back = load_samples_jsonl(dir / "train.jsonl");
  REQUIRE(back.size() == c.train.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].id == c.train[i].id);
    CHECK(back[i].gold_answer == c.train[i].gold_answer);
  }
}

TEST_CASE("malformed JSONL names the line") {
  TempDir dir("corpus_bad");
  {
    std::ofstream f(dir / "s.jsonl");
    f << R"({"id":"a","question":"q","answer":"1","task_type":"numeric"})" << "\n"
      << "\n"
      << "{not json\n";
  }
  try {
    load_samples_jsonl(dir / "s.jsonl");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":3") != std::string::npos);
  }
  {
    std::ofstream f(dir / "t.jsonl");
    f << R"({"id":"a","question":"q","answer":"x","task_type":"numeric"})" << "\n";
  }
  CHECK_THROWS_AS(load_samples_jsonl(dir / "t.jsonl"), ParseError);
}

TEST_CASE("dataset store dedup, caps and routing") {
  const Sample s1 = numeric("s1", "5");
  const Sample s2 = numeric("s2", "7");
  DatasetStore store({s1, s2});
  CHECK_THROWS_AS(DatasetStore({s1, s1}), ContractError);

  auto st = store.append(std::vector{rec(s1, "2 + 3 = 5.\nAnswer: 5")});
  CHECK(st.added == 1);
  st = store.append(std::vector{rec(s1, "2  +  3 = 5.\nANSWER: 5"), rec(s1, "2 + 3 = 5.\nAnswer: 5")});
  CHECK(st.duplicates == 2);
  CHECK(store.train().size() == 1);

  std::vector<RationaleRecord> six;
  for (int i = 0; i < 6; ++i) six.push_back(rec(s2, "step " + std::to_string(i) + "\nAnswer: 7"));
  st = store.append(six);
  CHECK(st.added == 4);
  CHECK(st.capped == 2);
  CHECK(store.count("s2", Source::teacher, 1, true) == 4);

  // The cap is per round and per pool.
  store.append(std::vector{rec(s2, "later\nAnswer: 7", Source::teacher, 2)});
  store.append(std::vector{rec(s2, "wrong\nAnswer: 8", Source::student, 1)});
  CHECK(store.count("s2", Source::teacher, 2, true) == 1);
  CHECK(store.neg().size() == 1);
  CHECK_FALSE(store.neg().front().correct);

  CHECK_THROWS_AS(store.append(std::vector{rec(numeric("zz", "1"), "x\nAnswer: 1")}), MergeError);
  auto liar = rec(s1, "1 + 1 = 2.\nAnswer: 2");
  liar.correct = true;
  CHECK_THROWS_AS(store.append(std::vector{liar}), ContractError);
  auto empty = rec(s1, "");
  CHECK_THROWS_AS(store.append(std::vector{empty}), ContractError);
  CHECK_THROWS_AS(store.sample("zz"), LookupError);

  // Store invariant: correctness re-derives from text, no duplicate keys.
  std::set<std::pair<std::string, std::string>> keys;
  for (const auto* pool : {&store.train(), &store.neg()}) {
    for (const auto& r : *pool) {
      CHECK(judge(r.text, store.sample(r.sample_id), r.source, r.round).correct == r.correct);
      CHECK(keys.insert({r.sample_id, normalize_for_dedup(r.text)}).second);
    }
  }
}

TEST_CASE("store snapshot round trip") {
  TempDir dir("store");
  const Sample s1 = numeric("s1", "5");
  DatasetStore store({s1});
  store.append(std::vector{rec(s1, "a\nAnswer: 5"), rec(s1, "b\nAnswer: 6", Source::student),
                           rec(s1, "c\nAnswer: 5", Source::teacher, 2)});
  store.snapshot(dir.path());
  const auto back = DatasetStore::load({s1}, dir.path());
  CHECK(back.train() == store.train());
  CHECK(back.neg() == store.neg());
}
