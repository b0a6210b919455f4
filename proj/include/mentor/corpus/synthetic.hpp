#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mentor/corpus/cot.hpp"
#include "mentor/corpus/sample.hpp"

namespace mentor {

struct IntRange {
  long long lo = 0;
  long long hi = 0;
};

struct SyntheticTaskSpec {
  IntRange num_entities{1, 2};
  IntRange num_steps{1, 2};
  IntRange value_range{1, 9};
  std::uint64_t seed = 42;
  int size = 200;
  double train_fraction = 0.7;
  int rationale_variants = 4;  // oracle rationales generated per sample
  int demo_count = 3;          // held-out problems rendered as demonstrations

  void validate() const;
};

void to_json(nlohmann::json& j, const SyntheticTaskSpec& s);
void from_json(const nlohmann::json& j, SyntheticTaskSpec& s);

struct ArithmeticStep {
  char op = '+';  // '+' or '-'
  long long operand = 0;
};

// "3 + 4 = 7. 7 - 2 = 5."
std::string chain_rationale(long long start, const std::vector<ArithmeticStep>& steps);

// Sample id -> correct record texts ("<rationale>\nAnswer: <y>").
using RationaleBank = std::map<std::string, std::vector<std::string>>;

struct SyntheticCorpus {
  std::vector<Sample> train;
  std::vector<Sample> test;
  RationaleBank bank;
  std::vector<Demonstration> demos;
};

// Deterministic per spec. Every intermediate value stays non-negative.
SyntheticCorpus generate_synthetic(const SyntheticTaskSpec& spec);

RationaleBank load_bank_jsonl(const std::string& path);
void write_bank_jsonl(const std::string& path, const RationaleBank& bank);

}  // namespace mentor
