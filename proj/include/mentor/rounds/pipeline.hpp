#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mentor/exam/exam.hpp"
#include "mentor/metrics/metrics.hpp"
#include "mentor/rounds/experiment.hpp"
#include "mentor/tailor/train.hpp"
#include "mentor/teacher/collect.hpp"

namespace mentor {

struct RoundMetrics {
  int round = 0;
  double test_accuracy = 0.0;
  double accuracy_gain = 0.0;  // against the previous round
  double train_error_rate = 0.0;
  std::size_t num_train_rationales = 0;
  std::size_t num_new_train_rationales = 0;
  std::size_t num_negatives = 0;
  std::size_t num_new_negatives = 0;
  std::size_t num_requests = 0;
  std::size_t num_success = 0;
  double final_lm = 0.0;
  std::string checkpoint_digest;

  bool operator==(const RoundMetrics&) const = default;
};

void to_json(nlohmann::json& j, const RoundMetrics& m);
void from_json(const nlohmann::json& j, RoundMetrics& m);

struct StopDecision {
  bool stop = false;
  std::string reason;  // triggered rules joined by ","
};

// Pure function of the completed rounds (round 0 excluded or included).
StopDecision should_stop(std::span<const RoundMetrics> history, const StopPolicy& policy);

// Round 0: initial checkpoint and its evaluation.
RoundMetrics init_round_zero(Experiment& exp);

// Stages of round k >= 1; each reads the artifacts of earlier stages.
ExamResult exam_stage(Experiment& exp, int round);
std::vector<TeacherExchange> collect_stage(Experiment& exp, int round,
                                           std::optional<bool> feedback = std::nullopt,
                                           const Sleeper& sleep = real_sleep);
// Store for round k: round k-1 snapshot + round k negatives + teacher data.
DatasetStore assemble_store(const Experiment& exp, int round);
TrainResult train_stage(Experiment& exp, int round, std::optional<double> lambda = std::nullopt);
RoundMetrics eval_stage(Experiment& exp, int round);

RoundMetrics run_round(Experiment& exp, int round);
// Bootstraps if needed, then runs rounds until the stop policy fires;
// completed rounds are reloaded rather than recomputed.
std::vector<RoundMetrics> run_pipeline(Experiment& exp);
std::vector<RoundMetrics> load_history(const Experiment& exp);

struct SweepRow {
  double lambda = 0.0;
  double accuracy = 0.0;
  double final_lm = 0.0;
  double distance = 0.0;
  double preference = 0.0;
};

// Initial-round training from the round-0 checkpoint for each lambda on the
// same round-1 data; writes lambda_sweep.csv under the experiment.
std::vector<SweepRow> sweep_lambda(Experiment& exp, std::span<const double> lambdas);
const std::vector<double>& default_sweep_lambdas();

struct ReportRow {
  int round = 0;
  std::size_t num_data = 0;
  double error_rate = 0.0;
  double accuracy = 0.0;
  double delta = 0.0;
  std::size_t num_requests = 0;
  std::size_t num_success = 0;
  bool matches_recorded = true;
};

// Recomputes ER, accuracy and gains from per-sample artifacts.
std::vector<ReportRow> build_report(const std::filesystem::path& experiment_dir);
std::string render_report(std::span<const ReportRow> rows);

}  // namespace mentor
