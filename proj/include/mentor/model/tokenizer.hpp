#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mentor {

enum class Segment : std::uint8_t { demo, question, rationale, answer };

struct TokenSequence {
  std::vector<int> ids;
  std::vector<Segment> tags;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
  void append(int id, Segment tag) {
    ids.push_back(id);
    tags.push_back(tag);
  }
  void append(std::span<const int> more, Segment tag) {
    for (int id : more) append(id, tag);
  }
};

// Closed-vocabulary word tokenizer. Digits are split into single tokens,
// punctuation is split off, and the CoT markers are atomic tokens.
class Tokenizer {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kEos = 2;
  static constexpr int kNewline = 3;
  static constexpr int kQuestion = 4;
  static constexpr int kReasoning = 5;
  static constexpr int kAnswer = 6;

  // Reserved tokens, then digits, then the sorted distinct words of `texts`.
  static Tokenizer build(std::span<const std::string> texts);
  static Tokenizer from_vocab(std::vector<std::string> vocab);

  std::vector<int> encode(std::string_view text) const;
  std::string decode(std::span<const int> ids) const;
  // decode(encode(text)); generated and stored text is kept in this form.
  std::string canonical(std::string_view text) const { return decode(encode(text)); }

  int size() const { return static_cast<int>(vocab_.size()); }
  const std::vector<std::string>& vocab() const { return vocab_; }
  int id(std::string_view token) const;

  // Splits text into surface pieces without vocabulary lookup.
  static std::vector<std::string> pieces(std::string_view text);

 private:
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace mentor
