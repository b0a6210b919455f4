#include "mentor/teacher/prompt.hpp"

#include "mentor/common/error.hpp"
#include "mentor/common/io.hpp"

namespace mentor {
namespace {

std::string flatten(std::string_view text) {
  std::string out(text);
  for (char& c : out) {
    if (c == '\n') c = ' ';
  }
  return out;
}

std::string render_block(const PromptTemplate& tmpl, std::string_view question,
                         const std::optional<std::string>& wrong, std::string_view answer) {
  const bool feedback = tmpl.include_feedback && wrong.has_value();
  std::string out = "Question: " + std::string(question) + "\n";
  if (feedback) out += "Wrong Solution: " + flatten(*wrong) + "\n";
  out += (feedback ? tmpl.correction_instruction : tmpl.plain_instruction) + "\n";
  out += "Hint: " + tmpl.hint_line(answer) + "\n";
  out += "Reasoning:";
  return out;
}

}  // namespace

PromptTemplate PromptTemplate::load(const fs::path& path) {
  const Json j = read_json(path);
  PromptTemplate t;
  try {
    t.hint_format = j.value("hint_format", t.hint_format);
    t.correction_instruction = j.value("correction_instruction", t.correction_instruction);
    t.plain_instruction = j.value("plain_instruction", t.plain_instruction);
    for (const auto& b : j.at("blocks")) {
      t.demo_blocks.push_back({b.at("question").get<std::string>(),
                               b.at("wrong_solution").get<std::string>(),
                               b.at("answer").get<std::string>(),
                               b.at("better_reasoning").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  if (t.hint_format.find("{answer}") == std::string::npos) {
    throw ConfigError(path.string() + ": hint_format lacks an {answer} slot");
  }
  return t;
}

std::string PromptTemplate::hint_line(std::string_view answer) const {
  std::string out = hint_format;
  const auto pos = out.find("{answer}");
  if (pos != std::string::npos) out.replace(pos, 8, answer);
  return out;
}

std::string render_feedback_prompt(const PromptTemplate& tmpl, const Sample& sample,
                                   const std::optional<std::string>& wrong_rationale) {
  std::string out;
  for (const auto& b : tmpl.demo_blocks) {
    out += render_block(tmpl, b.question, b.wrong_solution, b.answer);
    out += " " + b.better_reasoning + "\nAnswer: " + b.answer + "\n\n";
  }
  out += render_block(tmpl, sample.question, wrong_rationale, sample.gold_answer);
  return out;
}

std::string_view target_block(std::string_view prompt) {
  const auto pos = prompt.rfind("\n\n");
  return pos == std::string_view::npos ? prompt : prompt.substr(pos + 2);
}

}  // namespace mentor
