#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace mentor {

enum class TaskType { numeric, multiple_choice, yes_no };

TaskType parse_task_type(std::string_view name);
std::string to_string(TaskType t);

struct Sample {
  std::string id;
  std::string question;
  std::string gold_answer;  // canonical for task_type
  TaskType task_type = TaskType::numeric;
};

enum class Source { student, teacher };

std::string to_string(Source s);
Source parse_source(std::string_view name);

// One reasoning path. `text` is the full completion, "<rationale>\nAnswer: <y>"
// when well formed, so correctness can be re-derived from the text alone.
struct RationaleRecord {
  std::string sample_id;
  std::string text;
  std::optional<std::string> extracted_answer;
  bool correct = false;
  Source source = Source::student;
  int round = 0;

  bool operator==(const RationaleRecord&) const = default;
};

void to_json(nlohmann::json& j, const Sample& s);
void from_json(const nlohmann::json& j, Sample& s);
void to_json(nlohmann::json& j, const RationaleRecord& r);
void from_json(const nlohmann::json& j, RationaleRecord& r);

// Canonical decimal string ("12.50" -> "12.5", "-0" -> "0"), or nullopt
// when `text` is not a plain signed decimal literal.
std::optional<std::string> canonical_decimal(std::string_view text);

// Canonical form of a gold answer for its task type; throws ParseError when
// the value is not valid for the type.
std::string canonical_answer(std::string_view value, TaskType type);

// Reads the answer following the last "Answer:" marker.
std::optional<std::string> extract_answer(std::string_view text, TaskType type);

// Judges `text` against the sample's gold answer.
RationaleRecord judge(std::string text, const Sample& sample, Source source, int round);

// (rationale, answer text) around the last "Answer:" marker. Without a
// marker the whole text is the rationale and the answer is empty.
std::pair<std::string, std::string> split_rationale(std::string_view text);

// Lowercase + whitespace collapse, used for deduplication.
std::string normalize_for_dedup(std::string_view text);

}  // namespace mentor
