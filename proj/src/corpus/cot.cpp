#include "mentor/corpus/cot.hpp"

#include "mentor/corpus/sample.hpp"

namespace mentor {
namespace {

std::string prompt_head(std::string_view question) {
  return "Question: " + std::string(question) + "\nReasoning:";
}

std::string demo_section(std::span<const Demonstration> demos) {
  std::string out;
  for (const auto& d : demos) out += render_block(d.question, d.rationale, d.answer) + "\n\n";
  return out;
}

void append_target(TokenSequence& seq, const Tokenizer& tok, std::string_view question,
                   std::string_view record_text) {
  const auto [rationale, answer] = split_rationale(record_text);
  seq.append(tok.encode(prompt_head(question)), Segment::question);
  seq.append(tok.encode(rationale), Segment::rationale);
  seq.append(tok.encode("\nAnswer: " + answer), Segment::answer);
}

}  // namespace

void to_json(nlohmann::json& j, const Demonstration& d) {
  j = nlohmann::json{{"question", d.question}, {"rationale", d.rationale}, {"answer", d.answer}};
}

void from_json(const nlohmann::json& j, Demonstration& d) {
  d.question = j.at("question").get<std::string>();
  d.rationale = j.at("rationale").get<std::string>();
  d.answer = j.at("answer").get<std::string>();
}

std::string render_block(std::string_view question, std::string_view rationale,
                         std::string_view answer) {
  return prompt_head(question) + " " + std::string(rationale) + "\nAnswer: " +
         std::string(answer);
}

std::string render_cot(std::span<const Demonstration> demos, std::string_view question,
                       const std::optional<std::string>& record_text) {
  std::string out = demo_section(demos) + prompt_head(question);
  if (record_text) {
    const auto [rationale, answer] = split_rationale(*record_text);
    out += " " + rationale + "\nAnswer: " + answer;
  }
  return out;
}

TokenSequence encode_cot(const Tokenizer& tok, std::span<const Demonstration> demos,
                         std::string_view question, const std::optional<std::string>& record_text) {
  TokenSequence seq;
  seq.append(tok.encode(demo_section(demos)), Segment::demo);
  if (!record_text) {
    seq.append(tok.encode(prompt_head(question)), Segment::question);
    return seq;
  }
  append_target(seq, tok, question, *record_text);
  seq.append(Tokenizer::kEos, Segment::answer);
  return seq;
}

TokenSequence encode_path(const Tokenizer& tok, std::string_view question,
                          std::string_view record_text) {
  TokenSequence seq;
  append_target(seq, tok, question, record_text);
  return seq;
}

}  // namespace mentor
