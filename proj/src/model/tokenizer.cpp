#include "mentor/model/tokenizer.hpp"

#include <algorithm>
#include <array>
#include <set>

#include "mentor/common/error.hpp"

namespace mentor {
namespace {

constexpr std::array<std::string_view, 7> kReserved = {
    "<pad>", "<unk>", "<eos>", "\n", "Question:", "Reasoning:", "Answer:"};
constexpr std::array<std::string_view, 3> kMarkers = {"Question:", "Reasoning:", "Answer:"};
constexpr std::string_view kPunct = ".,?!:;()+-*/=%$'\"";
constexpr std::string_view kAttachLeft = ".,?!:;)%'";
constexpr std::string_view kNoSpaceAfter = "($'";

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_punct(char c) { return kPunct.find(c) != std::string_view::npos; }

}  // namespace

std::vector<std::string> Tokenizer::pieces(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (is_space(c)) {
      ++i;
      continue;
    }
    if (c == '\n') {
      out.emplace_back("\n");
      ++i;
      continue;
    }
    if (is_digit(c) || is_punct(c)) {
      out.emplace_back(1, c);
      ++i;
      continue;
    }
    bool matched = false;
    for (std::string_view m : kMarkers) {
      if (text.substr(i, m.size()) == m) {
        out.emplace_back(m);
        i += m.size();
        matched = true;
        break;
      }
    }
    if (matched) continue;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j]) && text[j] != '\n' && !is_digit(text[j]) &&
           !is_punct(text[j])) {
      ++j;
    }
    out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

Tokenizer Tokenizer::build(std::span<const std::string> texts) {
  std::set<std::string> words;
  for (const auto& t : texts) {
    for (auto& p : pieces(t)) words.insert(std::move(p));
  }
  std::vector<std::string> vocab(kReserved.begin(), kReserved.end());
  for (char d = '0'; d <= '9'; ++d) vocab.emplace_back(1, d);
  const std::set<std::string> taken(vocab.begin(), vocab.end());
  for (const auto& w : words) {
    if (!taken.contains(w)) vocab.push_back(w);
  }
  return from_vocab(std::move(vocab));
}

Tokenizer Tokenizer::from_vocab(std::vector<std::string> vocab) {
  if (vocab.size() < kReserved.size() ||
      !std::equal(kReserved.begin(), kReserved.end(), vocab.begin())) {
    throw ConfigError("vocabulary must start with the reserved tokens");
  }
  Tokenizer tok;
  tok.vocab_ = std::move(vocab);
  for (std::size_t i = 0; i < tok.vocab_.size(); ++i) {
    if (!tok.index_.emplace(tok.vocab_[i], static_cast<int>(i)).second) {
      throw ConfigError("duplicate vocabulary entry: " + tok.vocab_[i]);
    }
  }
  return tok;
}

int Tokenizer::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

std::vector<int> Tokenizer::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& p : pieces(text)) ids.push_back(id(p));
  return ids;
}

std::string Tokenizer::decode(std::span<const int> ids) const {
  std::string out;
  std::string_view prev;
  for (int id : ids) {
    if (id == kEos || id == kPad) continue;
    const std::string_view tok =
        (id >= 0 && id < size()) ? std::string_view(vocab_[static_cast<std::size_t>(id)])
                                 : std::string_view("<unk>");
    bool space = !out.empty() && prev != "\n";
    if (space && tok.size() == 1) {
      if (tok == "\n" || kAttachLeft.find(tok[0]) != std::string_view::npos) space = false;
      if (is_digit(tok[0]) && prev.size() == 1 && is_digit(prev[0])) space = false;
    }
    if (space && prev.size() == 1 && kNoSpaceAfter.find(prev[0]) != std::string_view::npos) {
      space = false;
    }
    if (space) out.push_back(' ');
    out.append(tok);
    prev = tok;
  }
  return out;
}

}  // namespace mentor
