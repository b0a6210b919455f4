#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "mentor/common/rng.hpp"
#include "mentor/model/model.hpp"
#include "mentor/model/tokenizer.hpp"
#include "mentor/model/transformer.hpp"

namespace mentor {

struct ForwardOutput {
  int length = 0;
  int vocab_size = 0;
  int hidden_dim = 0;
  std::vector<double> logits;         // [length, vocab_size]
  std::vector<double> hidden_states;  // [length, hidden_dim], final layernorm output

  std::span<const double> logits_row(int t) const;
  std::span<const double> hidden_row(int t) const;
};

ForwardOutput forward(const ModelState& model, const TokenSequence& input);

template <class T>
ForwardOutput to_output(const Trace<T>& trace, const ModelConfig& config);

// Final-position hidden state: the representation of a whole reasoning path.
std::vector<double> path_representation(const ForwardOutput& output);

struct LogLikelihood {
  double total = 0.0;
  double mean = 0.0;
  std::size_t count = 0;
};

// Sum of log P(token_t | tokens_<t) over positions t >= 1 whose tag is in
// `scored`. Throws ContractError when nothing is scored.
LogLikelihood sequence_log_likelihood(const ModelState& model, const TokenSequence& seq,
                                      const std::set<Segment>& scored);
template <class T>
LogLikelihood sequence_log_likelihood(const Engine<T>& engine, const TokenSequence& seq,
                                      const std::set<Segment>& scored);

enum class DecodeMode { greedy, sample };

struct GenerationConfig {
  DecodeMode mode = DecodeMode::sample;
  double temperature = 1.0;
  std::optional<int> top_k = 50;
  std::optional<double> top_p;
  int max_new_tokens = 128;
  int num_return_sequences = 4;
  std::uint64_t seed = 42;

  // Student mistake harvesting defaults.
  static GenerationConfig mistakes() { return GenerationConfig{}; }
  static GenerationConfig greedy(int max_new_tokens = 128) {
    GenerationConfig g;
    g.mode = DecodeMode::greedy;
    g.top_k.reset();
    g.max_new_tokens = max_new_tokens;
    g.num_return_sequences = 1;
    return g;
  }
  void validate() const;
};

void to_json(nlohmann::json& j, const GenerationConfig& g);
void from_json(const nlohmann::json& j, GenerationConfig& g);

// Picks the next token from one logits row. Greedy breaks ties toward the
// lower id.
int select_token(std::span<const double> logits, const GenerationConfig& gen, Rng& rng);

// Each output is the prompt plus at most max_new_tokens tokens, ending early
// at `eos` (included) or when the context is full. Greedy returns exactly one
// sequence; sampling returns num_return_sequences, each with its own stream
// derived from gen.seed.
template <class T>
std::vector<TokenSequence> generate(const Engine<T>& engine, const TokenSequence& prompt,
                                    const GenerationConfig& gen,
                                    std::optional<int> eos = Tokenizer::kEos);
std::vector<TokenSequence> generate(const ModelState& model, const TokenSequence& prompt,
                                    const GenerationConfig& gen,
                                    std::optional<int> eos = Tokenizer::kEos);

// The pluggable student contract used by exams and evaluation: text in,
// continuations out.
class Student {
 public:
  virtual ~Student() = default;
  // Throws LengthError when the prompt does not fit the context.
  virtual std::vector<std::string> complete(std::string_view prompt,
                                            const GenerationConfig& gen) const = 0;
};

class TransformerStudent final : public Student {
 public:
  TransformerStudent(const ModelState& model, const Tokenizer& tokenizer,
                     Precision precision = Precision::f32);
  std::vector<std::string> complete(std::string_view prompt,
                                    const GenerationConfig& gen) const override;

 private:
  const Tokenizer* tokenizer_;
  std::variant<Engine<float>, Engine<double>> engine_;
};

}  // namespace mentor
