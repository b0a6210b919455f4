#include "mentor/corpus/synthetic.hpp"

#include <array>
#include <cstdio>
#include <numeric>
#include <set>

#include "mentor/common/error.hpp"
#include "mentor/common/io.hpp"
#include "mentor/common/rng.hpp"

namespace mentor {
namespace {

struct Person {
  const char* name;
  bool female;
};

constexpr std::array<Person, 8> kPeople{{{"Tom", false},
                                         {"Sam", false},
                                         {"Ben", false},
                                         {"Max", false},
                                         {"Anna", true},
                                         {"Lily", true},
                                         {"Mia", true},
                                         {"Emma", true}}};
constexpr std::array<const char*, 6> kObjects{"apples", "pens", "books", "coins", "cards", "shells"};
constexpr int kRationaleStyles = 6;

struct Problem {
  Person person;
  std::vector<Person> others;
  std::string object;
  long long start = 0;
  std::vector<ArithmeticStep> steps;
  long long answer = 0;
  std::string question;
};

std::string num(long long v) { return std::to_string(v); }

std::string equation(long long lhs, const ArithmeticStep& s) {
  const long long rhs = s.op == '+' ? lhs + s.operand : lhs - s.operand;
  return num(lhs) + " " + s.op + " " + num(s.operand) + " = " + num(rhs);
}

std::string step_sentence(const Problem& p, const ArithmeticStep& s, Rng& rng) {
  const std::string pronoun = p.person.female ? "She" : "He";
  const std::string object_pronoun = p.person.female ? "her" : "him";
  const std::string b = num(s.operand);
  std::vector<std::string> options;
  if (s.op == '+') {
    options = {pronoun + " buys " + b + " more.", pronoun + " finds " + b + " more."};
    for (const auto& o : p.others) options.push_back(std::string(o.name) + " gives " + object_pronoun + " " + b + " more.");
  } else {
    options = {pronoun + " loses " + b + ".", pronoun + " uses " + b + "."};
    for (const auto& o : p.others) options.push_back(pronoun + " gives " + b + " to " + o.name + ".");
  }
  return options[rng.below(options.size())];
}

Problem make_problem(const SyntheticTaskSpec& spec, Rng& rng) {
  Problem p;
  std::vector<std::size_t> order(kPeople.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(std::span(order));
  const auto entities = static_cast<std::size_t>(rng.between(spec.num_entities.lo, spec.num_entities.hi));
  p.person = kPeople[order[0]];
  for (std::size_t i = 1; i < entities && i < order.size(); ++i) p.others.push_back(kPeople[order[i]]);
  p.object = kObjects[rng.below(kObjects.size())];
  const auto [lo, hi] = spec.value_range;
  p.start = rng.between(lo, hi);
  const auto n_steps = rng.between(spec.num_steps.lo, spec.num_steps.hi);
  long long cur = p.start;
  for (long long i = 0; i < n_steps; ++i) {
    ArithmeticStep s;
    s.op = rng.uniform() < 0.5 ? '+' : '-';
    if (s.op == '-' && cur < lo) s.op = '+';
    s.operand = s.op == '+' ? rng.between(lo, hi) : rng.between(lo, std::min(hi, cur));
    cur = s.op == '+' ? cur + s.operand : cur - s.operand;
    p.steps.push_back(s);
  }
  p.answer = cur;
  const std::string opener = rng.uniform() < 0.5 ? " has " : " starts with ";
  p.question = std::string(p.person.name) + opener + num(p.start) + " " + p.object + ".";
  for (const auto& s : p.steps) p.question += " " + step_sentence(p, s, rng);
  p.question += " How many " + p.object + " does " + p.person.name + " have now?";
  return p;
}

std::string styled_rationale(const Problem& p, int style) {
  const std::string chain = chain_rationale(p.start, p.steps);
  const std::string name = p.person.name;
  switch (style) {
    case 1:
      return name + " starts with " + num(p.start) + ". " + chain;
    case 2: {
      std::string out;
      long long cur = p.start;
      for (std::size_t i = 0; i < p.steps.size(); ++i) {
        out += (i == 0 ? "First, " : " Then, ") + equation(cur, p.steps[i]) + ".";
        cur = p.steps[i].op == '+' ? cur + p.steps[i].operand : cur - p.steps[i].operand;
      }
      return out;
    }
    case 3:
      return chain + " So " + name + " has " + num(p.answer) + " " + p.object + " now.";
    case 4:
      return "We start with " + num(p.start) + " " + p.object + ". " + chain;
    case 5:
      return chain + " The total is " + num(p.answer) + ".";
    default:
      return chain;
  }
}

void check_range(const IntRange& r, const char* name, long long min_lo) {
  if (r.lo > r.hi || r.lo < min_lo) {
    throw ConfigError(std::string("invalid range for ") + name + ": [" + num(r.lo) + ", " +
                      num(r.hi) + "]");
  }
}

void range_to_json(nlohmann::json& j, const IntRange& r) { j = nlohmann::json::array({r.lo, r.hi}); }
IntRange range_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) throw ConfigError("range must be [lo, hi]");
  return {j[0].get<long long>(), j[1].get<long long>()};
}

}  // namespace

void SyntheticTaskSpec::validate() const {
  check_range(num_entities, "num_entities", 1);
  check_range(num_steps, "num_steps", 1);
  check_range(value_range, "value_range", 0);
  if (num_entities.hi > static_cast<long long>(kPeople.size())) {
    throw ConfigError("num_entities above " + num(static_cast<long long>(kPeople.size())));
  }
  if (size < 2) throw ConfigError("synthetic size must be >= 2");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must be in (0, 1)");
  if (rationale_variants < 1 || rationale_variants > kRationaleStyles) {
    throw ConfigError("rationale_variants must be in [1, " + num(kRationaleStyles) + "]");
  }
  if (demo_count < 0) throw ConfigError("demo_count must be >= 0");
}

void to_json(nlohmann::json& j, const SyntheticTaskSpec& s) {
  j = nlohmann::json::object();
  range_to_json(j["num_entities"], s.num_entities);
  range_to_json(j["num_steps"], s.num_steps);
  range_to_json(j["value_range"], s.value_range);
  j["seed"] = s.seed;
  j["size"] = s.size;
  j["train_fraction"] = s.train_fraction;
  j["rationale_variants"] = s.rationale_variants;
  j["demo_count"] = s.demo_count;
}

void from_json(const nlohmann::json& j, SyntheticTaskSpec& s) {
  s.num_entities = range_from_json(j.at("num_entities"));
  s.num_steps = range_from_json(j.at("num_steps"));
  s.value_range = range_from_json(j.at("value_range"));
  s.seed = j.at("seed").get<std::uint64_t>();
  s.size = j.at("size").get<int>();
  s.train_fraction = j.at("train_fraction").get<double>();
  s.rationale_variants = j.at("rationale_variants").get<int>();
  s.demo_count = j.at("demo_count").get<int>();
}

std::string chain_rationale(long long start, const std::vector<ArithmeticStep>& steps) {
  std::string out;
  long long cur = start;
  for (const auto& s : steps) {
    if (!out.empty()) out += " ";
    out += equation(cur, s) + ".";
    cur = s.op == '+' ? cur + s.operand : cur - s.operand;
  }
  return out;
}

SyntheticCorpus generate_synthetic(const SyntheticTaskSpec& spec) {
  spec.validate();
  SyntheticCorpus corpus;
  Rng rng(derive_seed(spec.seed, hash_string("synthetic")));
  Rng demo_rng(derive_seed(spec.seed, hash_string("demos")));
  Rng style_rng(derive_seed(spec.seed, hash_string("styles")));

  std::set<std::string> seen;
  const int train_count = std::max(1, std::min(spec.size - 1, static_cast<int>(spec.size * spec.train_fraction + 0.5)));
  constexpr int kMaxAttempts = 1000;
  for (int i = 0; i < spec.size; ++i) {
    Problem p;
    int attempts = 0;
    do {
      if (++attempts > kMaxAttempts) {
        throw ConfigError("synthetic spec too narrow for " + num(spec.size) + " distinct questions");
      }
      p = make_problem(spec, rng);
    } while (!seen.insert(p.question).second);

    char id[64];
    std::snprintf(id, sizeof id, "syn-%llu-%04d", static_cast<unsigned long long>(spec.seed), i);
    Sample s{id, p.question, num(p.answer), TaskType::numeric};

    std::vector<int> styles(kRationaleStyles);
    std::iota(styles.begin(), styles.end(), 0);
    style_rng.shuffle(std::span(styles));
    auto& texts = corpus.bank[s.id];
    for (int v = 0; v < spec.rationale_variants; ++v) {
      texts.push_back(styled_rationale(p, styles[static_cast<std::size_t>(v)]) + "\nAnswer: " + s.gold_answer);
    }
    (i < train_count ? corpus.train : corpus.test).push_back(std::move(s));
  }
  for (int d = 0; d < spec.demo_count; ++d) {
    Problem p;
    do {
      p = make_problem(spec, demo_rng);
    } while (!seen.insert(p.question).second);
    corpus.demos.push_back({p.question, chain_rationale(p.start, p.steps), num(p.answer)});
  }
  return corpus;
}

RationaleBank load_bank_jsonl(const std::string& path) {
  RationaleBank bank;
  read_jsonl(path, [&](std::size_t, const Json& j) {
    bank[j.at("sample_id").get<std::string>()] = j.at("texts").get<std::vector<std::string>>();
  });
  return bank;
}

void write_bank_jsonl(const std::string& path, const RationaleBank& bank) {
  std::string out;
  for (const auto& [id, texts] : bank) out += Json{{"sample_id", id}, {"texts", texts}}.dump() + "\n";
  write_file(path, out);
}

}  // namespace mentor
