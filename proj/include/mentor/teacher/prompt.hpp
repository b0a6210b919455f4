#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mentor/corpus/sample.hpp"

namespace mentor {

struct FeedbackExemplar {
  std::string question;
  std::string wrong_solution;
  std::string answer;
  std::string better_reasoning;
};

struct PromptTemplate {
  std::vector<FeedbackExemplar> demo_blocks;
  bool include_feedback = true;
  std::string hint_format = "The final answer should be {answer}.";
  std::string correction_instruction =
      "The solution above has a mistake. Find it and write a corrected solution.";
  std::string plain_instruction = "Write a step by step solution.";

  // Reads a per-task exemplar fixture (JSON).
  static PromptTemplate load(const std::filesystem::path& path);
  std::string hint_line(std::string_view answer) const;
};

// Exemplar blocks, then the target: question, the wrong solution when one is
// given and feedback is enabled, the instruction, the hint, and a
// "Reasoning:" completion cue. Blocks are separated by a blank line.
std::string render_feedback_prompt(const PromptTemplate& tmpl, const Sample& sample,
                                   const std::optional<std::string>& wrong_rationale);

// Final block of a rendered prompt (text after the last blank line).
std::string_view target_block(std::string_view prompt);

}  // namespace mentor
