#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mentor/model/tokenizer.hpp"

namespace mentor {

struct Demonstration {
  std::string question;
  std::string rationale;
  std::string answer;
};

void to_json(nlohmann::json& j, const Demonstration& d);
void from_json(const nlohmann::json& j, Demonstration& d);

// One "Question / Reasoning / Answer" block.
std::string render_block(std::string_view question, std::string_view rationale,
                         std::string_view answer);

// Demonstrations, then the target question. With a rationale the target is a
// full training text; without one it ends at "Reasoning:" for inference.
std::string render_cot(std::span<const Demonstration> demos, std::string_view question,
                       const std::optional<std::string>& record_text = std::nullopt);

// Segment-tagged encoding of render_cot. Training sequences end with EOS,
// tagged as answer.
TokenSequence encode_cot(const Tokenizer& tok, std::span<const Demonstration> demos,
                         std::string_view question,
                         const std::optional<std::string>& record_text = std::nullopt);

// Demonstration-free encoding of one reasoning path (no EOS); its final
// hidden state represents the path.
TokenSequence encode_path(const Tokenizer& tok, std::string_view question,
                          std::string_view record_text);

}  // namespace mentor
