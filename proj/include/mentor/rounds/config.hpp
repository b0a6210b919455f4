#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "mentor/corpus/synthetic.hpp"
#include "mentor/exam/exam.hpp"
#include "mentor/model/model.hpp"
#include "mentor/tailor/loss.hpp"
#include "mentor/tailor/optimizer.hpp"
#include "mentor/teacher/backend.hpp"
#include "mentor/teacher/collect.hpp"

namespace mentor {

struct DataConfig {
  std::string source = "synthetic";  // "synthetic" | "files"
  SyntheticTaskSpec synthetic;
  std::string train_path, test_path, bank_path;  // used when source = "files"
};

struct DemoConfig {
  int shots = 1;
  std::string fixture;  // JSON list of demonstrations; synthetic data ships its own
};

struct TeacherConfig {
  std::string backend = "oracle";  // "oracle" | "http"
  std::string base_url;            // TEACHER_BASE_URL overrides
  std::string model = "gpt-3.5-turbo";
  int timeout_ms = 60000;
  OracleTeacherConfig oracle;
  bool feedback_enabled = true;
  CollectOptions request;
  std::string prompt_fixture = "data/teacher/arithmetic_exemplars.json";
  std::string cache_dir;  // empty: <experiment>/teacher_cache
};

struct StopPolicy {
  double min_accuracy_gain = 1.0;
  int max_rounds = 4;
  int min_new_data = 1;

  void validate() const;
};

struct RoundsConfig {
  StopPolicy stop;
  bool exam_in_first_round = true;
  bool latest_negatives_only = false;
};

struct ExperimentConfig {
  std::uint64_t seed = 42;
  std::string profile = "desk";
  Precision precision = Precision::f32;
  ModelConfig model;  // vocab_size 0 resolves to the built vocabulary
  DataConfig data;
  DemoConfig demos;
  ExamConfig exam;
  int eval_max_new_tokens = 128;
  TeacherConfig teacher;
  LossConfig loss;
  OptimizerConfig optimizer;
  RoundsConfig rounds;

  void validate() const;
};

void to_json(nlohmann::json& j, const StopPolicy& p);
void from_json(const nlohmann::json& j, StopPolicy& p);
// Credentials are not part of the config and never serialized.
void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

std::string resolved_config_hash(const ExperimentConfig& c);

}  // namespace mentor
