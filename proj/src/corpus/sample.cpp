#include "mentor/corpus/sample.hpp"

#include <cctype>

#include "mentor/common/error.hpp"

namespace mentor {
namespace {

constexpr std::string_view kAnswerMarker = "Answer:";

bool is_digit(char c) { return c >= '0' && c <= '9'; }
char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

// Text after the last answer marker, or nullopt.
std::optional<std::string_view> after_marker(std::string_view text) {
  const auto pos = text.rfind(kAnswerMarker);
  if (pos == std::string_view::npos) return std::nullopt;
  return text.substr(pos + kAnswerMarker.size());
}

// Alphabetic words, lowercased, in order.
std::vector<std::string> words(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (std::isalpha(static_cast<unsigned char>(c))) {
      cur.push_back(lower(c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace

TaskType parse_task_type(std::string_view name) {
  if (name == "numeric") return TaskType::numeric;
  if (name == "multiple_choice") return TaskType::multiple_choice;
  if (name == "yes_no") return TaskType::yes_no;
  throw ParseError("unknown task_type " + std::string(name));
}

std::string to_string(TaskType t) {
  switch (t) {
    case TaskType::numeric:
      return "numeric";
    case TaskType::multiple_choice:
      return "multiple_choice";
    case TaskType::yes_no:
      return "yes_no";
  }
  return "numeric";
}

std::string to_string(Source s) { return s == Source::student ? "student" : "teacher"; }

Source parse_source(std::string_view name) {
  if (name == "student") return Source::student;
  if (name == "teacher") return Source::teacher;
  throw ParseError("unknown source " + std::string(name));
}

void to_json(nlohmann::json& j, const Sample& s) {
  j = nlohmann::json{{"id", s.id},
                     {"question", s.question},
                     {"answer", s.gold_answer},
                     {"task_type", to_string(s.task_type)}};
}

void from_json(const nlohmann::json& j, Sample& s) {
  s.id = j.at("id").get<std::string>();
  s.question = j.at("question").get<std::string>();
  s.task_type = parse_task_type(j.at("task_type").get<std::string>());
  const auto& a = j.at("answer");
  s.gold_answer = canonical_answer(a.is_string() ? a.get<std::string>() : a.dump(), s.task_type);
}

void to_json(nlohmann::json& j, const RationaleRecord& r) {
  j = nlohmann::json{{"sample_id", r.sample_id},
                     {"text", r.text},
                     {"correct", r.correct},
                     {"source", to_string(r.source)},
                     {"round", r.round}};
  j["extracted_answer"] = r.extracted_answer ? nlohmann::json(*r.extracted_answer) : nlohmann::json();
}

void from_json(const nlohmann::json& j, RationaleRecord& r) {
  r.sample_id = j.at("sample_id").get<std::string>();
  r.text = j.at("text").get<std::string>();
  const auto& e = j.at("extracted_answer");
  r.extracted_answer = e.is_null() ? std::nullopt : std::optional(e.get<std::string>());
  r.correct = j.at("correct").get<bool>();
  r.source = parse_source(j.at("source").get<std::string>());
  r.round = j.at("round").get<int>();
}

std::optional<std::string> canonical_decimal(std::string_view text) {
  std::size_t i = 0;
  bool negative = false;
  if (i < text.size() && (text[i] == '-' || text[i] == '+')) negative = text[i++] == '-';
  const std::size_t int_begin = i;
  while (i < text.size() && is_digit(text[i])) ++i;
  std::string_view int_part = text.substr(int_begin, i - int_begin);
  std::string_view frac_part;
  if (i < text.size() && text[i] == '.') {
    const std::size_t fb = ++i;
    while (i < text.size() && is_digit(text[i])) ++i;
    frac_part = text.substr(fb, i - fb);
  }
  if (i != text.size() || (int_part.empty() && frac_part.empty())) return std::nullopt;
  while (int_part.size() > 1 && int_part.front() == '0') int_part.remove_prefix(1);
  while (!frac_part.empty() && frac_part.back() == '0') frac_part.remove_suffix(1);
  std::string out = int_part.empty() ? "0" : std::string(int_part);
  if (!frac_part.empty()) out += "." + std::string(frac_part);
  if (negative && out != "0") out.insert(out.begin(), '-');
  return out;
}

std::string canonical_answer(std::string_view value, TaskType type) {
  const std::string v = trim(value);
  switch (type) {
    case TaskType::numeric: {
      auto c = canonical_decimal(v);
      if (!c) throw ParseError("numeric answer expected, got '" + v + "'");
      return *c;
    }
    case TaskType::multiple_choice: {
      std::string s;
      for (char c : v) {
        if (c != '(' && c != ')') s.push_back(lower(c));
      }
      if (s.size() != 1 || s[0] < 'a' || s[0] > 'e') {
        throw ParseError("choice answer must be a letter a-e, got '" + v + "'");
      }
      return s;
    }
    case TaskType::yes_no: {
      std::string s;
      for (char c : v) s.push_back(lower(c));
      if (s != "yes" && s != "no") throw ParseError("yes/no answer expected, got '" + v + "'");
      return s;
    }
  }
  return v;
}

std::optional<std::string> extract_answer(std::string_view text, TaskType type) {
  const auto tail = after_marker(text);
  if (!tail) return std::nullopt;
  const std::string_view s = *tail;
  switch (type) {
    case TaskType::numeric: {
      for (std::size_t i = 0; i < s.size(); ++i) {
        std::size_t start = i;
        if ((s[i] == '-' || s[i] == '+') && i + 1 < s.size() && is_digit(s[i + 1])) {
          ++i;
        } else if (!is_digit(s[i])) {
          continue;
        }
        while (i < s.size() && is_digit(s[i])) ++i;
        if (i + 1 < s.size() && s[i] == '.' && is_digit(s[i + 1])) {
          ++i;
          while (i < s.size() && is_digit(s[i])) ++i;
        }
        return canonical_decimal(s.substr(start, i - start));
      }
      return std::nullopt;
    }
    case TaskType::multiple_choice: {
      // A parenthesized letter wins; otherwise the first standalone letter.
      for (std::size_t i = 0; i + 2 < s.size(); ++i) {
        const char c = lower(s[i + 1]);
        if (s[i] == '(' && s[i + 2] == ')' && c >= 'a' && c <= 'e') return std::string(1, c);
      }
      for (const auto& w : words(s)) {
        if (w.size() == 1 && w[0] >= 'a' && w[0] <= 'e') return w;
      }
      return std::nullopt;
    }
    case TaskType::yes_no: {
      for (const auto& w : words(s)) {
        if (w == "yes" || w == "no") return w;
      }
      return std::nullopt;
    }
  }
  return std::nullopt;
}

RationaleRecord judge(std::string text, const Sample& sample, Source source, int round) {
  RationaleRecord r;
  r.sample_id = sample.id;
  r.extracted_answer = extract_answer(text, sample.task_type);
  r.correct = r.extracted_answer.has_value() && *r.extracted_answer == sample.gold_answer;
  r.text = std::move(text);
  r.source = source;
  r.round = round;
  return r;
}

std::pair<std::string, std::string> split_rationale(std::string_view text) {
  const auto pos = text.rfind(kAnswerMarker);
  if (pos == std::string_view::npos) return {trim(text), {}};
  return {trim(text.substr(0, pos)), trim(text.substr(pos + kAnswerMarker.size()))};
}

std::string normalize_for_dedup(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(lower(c));
  }
  return out;
}

}  // namespace mentor
