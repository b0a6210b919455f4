#include "mentor/rounds/config.hpp"

#include "mentor/common/digest.hpp"
#include "mentor/common/error.hpp"

namespace mentor {

void StopPolicy::validate() const {
  if (max_rounds < 1) throw ConfigError("max_rounds must be >= 1");
  if (min_new_data < 0) throw ConfigError("min_new_data must be >= 0");
}

void ExperimentConfig::validate() const {
  if (profile != "desk" && profile != "paper") throw ConfigError("profile must be desk or paper");
  if (model.vocab_size != 0) model.validate();
  if (data.source == "synthetic") {
    data.synthetic.validate();
  } else if (data.source == "files") {
    if (data.train_path.empty() || data.test_path.empty()) {
      throw ConfigError("data.train_path and data.test_path are required for file datasets");
    }
  } else {
    throw ConfigError("data.source must be synthetic or files");
  }
  if (demos.shots < 0) throw ConfigError("demos.shots must be >= 0");
  exam.validate();
  if (eval_max_new_tokens < 1) throw ConfigError("eval_max_new_tokens must be >= 1");
  if (teacher.backend != "oracle" && teacher.backend != "http") {
    throw ConfigError("teacher.backend must be oracle or http");
  }
  teacher.oracle.validate();
  if (teacher.request.max_in_flight < 1) throw ConfigError("teacher.max_in_flight must be >= 1");
  loss.validate();
  optimizer.validate();
  rounds.stop.validate();
}

void to_json(nlohmann::json& j, const StopPolicy& p) {
  j = nlohmann::json{{"min_accuracy_gain", p.min_accuracy_gain},
                     {"max_rounds", p.max_rounds},
                     {"min_new_data", p.min_new_data}};
}

void from_json(const nlohmann::json& j, StopPolicy& p) {
  p.min_accuracy_gain = j.at("min_accuracy_gain").get<double>();
  p.max_rounds = j.at("max_rounds").get<int>();
  p.min_new_data = j.at("min_new_data").get<int>();
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json{
      {"seed", c.seed},
      {"profile", c.profile},
      {"precision", to_string(c.precision)},
      {"model", c.model},
      {"data",
       {{"source", c.data.source},
        {"synthetic", c.data.synthetic},
        {"train_path", c.data.train_path},
        {"test_path", c.data.test_path},
        {"bank_path", c.data.bank_path}}},
      {"demos", {{"shots", c.demos.shots}, {"fixture", c.demos.fixture}}},
      {"exam", c.exam},
      {"eval_max_new_tokens", c.eval_max_new_tokens},
      {"teacher",
       {{"backend", c.teacher.backend},
        {"base_url", c.teacher.base_url},
        {"model", c.teacher.model},
        {"timeout_ms", c.teacher.timeout_ms},
        {"oracle", c.teacher.oracle},
        {"feedback_enabled", c.teacher.feedback_enabled},
        {"request", c.teacher.request},
        {"prompt_fixture", c.teacher.prompt_fixture},
        {"cache_dir", c.teacher.cache_dir}}},
      {"loss", c.loss},
      {"optimizer", c.optimizer},
      {"rounds",
       {{"stop", c.rounds.stop},
        {"exam_in_first_round", c.rounds.exam_in_first_round},
        {"latest_negatives_only", c.rounds.latest_negatives_only}}}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  try {
    c.seed = j.at("seed").get<std::uint64_t>();
    c.profile = j.at("profile").get<std::string>();
    c.precision = parse_precision(j.at("precision").get<std::string>());
    c.model = j.at("model").get<ModelConfig>();
    const auto& d = j.at("data");
    c.data.source = d.at("source").get<std::string>();
    c.data.synthetic = d.at("synthetic").get<SyntheticTaskSpec>();
    c.data.train_path = d.at("train_path").get<std::string>();
    c.data.test_path = d.at("test_path").get<std::string>();
    c.data.bank_path = d.at("bank_path").get<std::string>();
    c.demos.shots = j.at("demos").at("shots").get<int>();
    c.demos.fixture = j.at("demos").at("fixture").get<std::string>();
    c.exam = j.at("exam").get<ExamConfig>();
    c.eval_max_new_tokens = j.at("eval_max_new_tokens").get<int>();
    const auto& t = j.at("teacher");
    c.teacher.backend = t.at("backend").get<std::string>();
    c.teacher.base_url = t.at("base_url").get<std::string>();
    c.teacher.model = t.at("model").get<std::string>();
    c.teacher.timeout_ms = t.at("timeout_ms").get<int>();
    c.teacher.oracle = t.at("oracle").get<OracleTeacherConfig>();
    c.teacher.feedback_enabled = t.at("feedback_enabled").get<bool>();
    c.teacher.request = t.at("request").get<CollectOptions>();
    c.teacher.prompt_fixture = t.at("prompt_fixture").get<std::string>();
    c.teacher.cache_dir = t.at("cache_dir").get<std::string>();
    c.loss = j.at("loss").get<LossConfig>();
    c.optimizer = j.at("optimizer").get<OptimizerConfig>();
    const auto& r = j.at("rounds");
    c.rounds.stop = r.at("stop").get<StopPolicy>();
    c.rounds.exam_in_first_round = r.at("exam_in_first_round").get<bool>();
    c.rounds.latest_negatives_only = r.at("latest_negatives_only").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("resolved config: ") + e.what());
  }
}

std::string resolved_config_hash(const ExperimentConfig& c) {
  return to_hex(sha256(nlohmann::json(c).dump()));
}

}  // namespace mentor
