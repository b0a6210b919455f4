// mentorloop: stage-per-command driver for multi-round rationale distillation.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mentor/cli/config_file.hpp"
#include "mentor/common/error.hpp"
#include "mentor/common/io.hpp"
#include "mentor/rounds/pipeline.hpp"

using namespace mentor;

namespace {

struct Options {
  std::string config;
  std::string experiment_dir = "experiment";
  int round = 1;
  std::optional<std::uint64_t> seed;
  bool no_feedback = false;
  std::optional<double> lambda;
  std::optional<std::string> profile;
  std::vector<double> lambdas;
  bool json = false;
  bool verbose = false;
};

// --lambda changes the resolved config only for `run`; `train --lambda` is a
// per-stage override.
ExperimentConfig resolve_config(const Options& o, bool with_lambda) {
  ExperimentConfig c = load_config_file(o.config);
  if (o.profile) apply_profile(c, *o.profile);
  if (o.seed) c.seed = *o.seed;
  if (with_lambda && o.lambda) c.loss.lambda = *o.lambda;
  c.validate();
  return c;
}

// With --config the experiment is created (or checked against it);
// otherwise it must already exist.
Experiment experiment(const Options& o, bool run_command) {
  if (!o.config.empty()) return Experiment::create(o.experiment_dir, resolve_config(o, run_command));
  if (o.seed || o.profile || (run_command && o.lambda)) {
    throw ConfigError("--seed, --profile and run --lambda need --config (they change the resolved config)");
  }
  return Experiment::open(o.experiment_dir);
}

void print_metrics(const RoundMetrics& m) { std::cout << Json(m).dump(2) << "\n"; }

int dispatch(const std::string& command, const Options& o) {
  if (command == "report") {
    const auto rows = build_report(o.experiment_dir);
    if (o.json) {
      Json out = Json::array();
      for (const auto& r : rows) {
        out.push_back({{"round", r.round}, {"num_data", r.num_data}, {"error_rate", r.error_rate},
                       {"accuracy", r.accuracy}, {"delta", r.delta}, {"num_requests", r.num_requests},
                       {"num_success", r.num_success}, {"matches_recorded", r.matches_recorded}});
      }
      std::cout << out.dump(2) << "\n";
    } else {
      std::cout << render_report(rows);
    }
    for (const auto& r : rows) {
      if (!r.matches_recorded) throw ContractError("report differs from recorded metrics");
    }
    return 0;
  }

  Experiment exp = experiment(o, command == "run");
  const ExperimentLock lock(exp.dir());
  if (command == "gen-data") {
    std::cout << "experiment data written to " << exp.dir().string() << " (vocabulary "
              << exp.tokenizer().size() << ", train " << exp.train_samples().size() << ", test "
              << exp.test_samples().size() << ")\n";
  } else if (command == "bootstrap") {
    print_metrics(init_round_zero(exp));
    if (!fs::exists(exp.round_dir(1) / "exam_negatives.jsonl")) exam_stage(exp, 1);
    collect_stage(exp, 1, o.no_feedback ? std::optional(false) : std::nullopt);
  } else if (command == "exam") {
    const auto r = exam_stage(exp, o.round);
    std::cout << "negatives " << r.new_negatives.size() << ", error rate " << r.error_rate << "\n";
  } else if (command == "collect") {
    const auto ex = collect_stage(exp, o.round, o.no_feedback ? std::optional(false) : std::nullopt);
    std::cout << Json(summarize(ex)).dump(2) << "\n";
  } else if (command == "train") {
    const auto r = train_stage(exp, o.round, o.lambda);
    std::cout << "steps " << r.curve.size() << ", final L_lm " << r.final_lm << "\n";
  } else if (command == "eval") {
    print_metrics(eval_stage(exp, o.round));
  } else if (command == "round") {
    print_metrics(run_round(exp, o.round));
  } else if (command == "run") {
    const auto history = run_pipeline(exp);
    std::cout << render_report(build_report(exp.dir()));
    (void)history;
  } else if (command == "sweep-lambda") {
    const auto rows = sweep_lambda(exp, o.lambdas.empty() ? default_sweep_lambdas() : o.lambdas);
    std::printf("%8s %10s %10s %10s %10s\n", "lambda", "accuracy", "final_lm", "distance", "preference");
    for (const auto& r : rows) {
      std::printf("%8.3f %10.2f %10.4f %10.4f %10.2f\n", r.lambda, r.accuracy, r.final_lm,
                  r.distance, r.preference);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-round reasoning distillation driver"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub, bool needs_round) {
    sub->add_option("--config", o.config, "Experiment TOML file");
    sub->add_option("--experiment-dir", o.experiment_dir, "Experiment directory")->capture_default_str();
    sub->add_option("--seed", o.seed, "Override the experiment seed");
    sub->add_option("--profile", o.profile, "Training profile")->check(CLI::IsMember({"desk", "paper"}));
    sub->add_flag("-v,--verbose", o.verbose, "Debug logging");
    if (needs_round) sub->add_option("--round", o.round, "Round number (>= 1)")->check(CLI::PositiveNumber);
  };

  const std::vector<std::pair<std::string, std::string>> commands{
      {"gen-data", "Generate or import data and build the vocabulary"},
      {"bootstrap", "Initialize round 0 and collect round-1 teacher rationales"},
      {"exam", "Harvest student mistakes for a round"},
      {"collect", "Query the teacher for a round"},
      {"train", "Train a round's student"},
      {"eval", "Evaluate a round's student"},
      {"round", "Run exam, collect, train and eval for one round"},
      {"run", "Run rounds until the stop policy fires"},
      {"sweep-lambda", "Initial-round training across lambda values"},
      {"report", "Render the round history from stored artifacts"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    const bool per_round = name == "exam" || name == "collect" || name == "train" ||
                           name == "eval" || name == "round";
    add_common(sub, per_round);
    if (name == "collect" || name == "bootstrap") {
      sub->add_flag("--no-feedback", o.no_feedback, "Omit the student's wrong solution from prompts");
    }
    if (name == "run") {
      sub->add_flag("--no-feedback", o.no_feedback, "Disable feedback prompts for the whole run");
    }
    if (name == "train" || name == "run") sub->add_option("--lambda", o.lambda, "Self-reflection weight");
    if (name == "sweep-lambda") sub->add_option("--lambdas", o.lambdas, "Lambda values")->delimiter(',');
    if (name == "report") sub->add_flag("--json", o.json, "Emit JSON");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  set_log_level(o.verbose ? LogLevel::debug : LogLevel::info);
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (command == "run" && o.no_feedback) {
      if (o.config.empty()) throw ConfigError("run --no-feedback needs --config");
      ExperimentConfig c = resolve_config(o, true);
      c.teacher.feedback_enabled = false;
      Experiment exp = Experiment::create(o.experiment_dir, c);
      const ExperimentLock lock(exp.dir());
      run_pipeline(exp);
      std::cout << render_report(build_report(exp.dir()));
      return 0;
    }
    return dispatch(command, o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 5;
  }
}
