#include "mentor/rounds/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "mentor/common/error.hpp"
#include "mentor/common/io.hpp"
#include "mentor/common/rng.hpp"

namespace mentor {
namespace {

constexpr const char* kExamNegatives = "exam_negatives.jsonl";
constexpr const char* kExchanges = "teacher_exchanges.jsonl";

fs::path need(const fs::path& path, const std::string& stage) {
  if (!fs::exists(path)) throw ResumeError("missing " + path.string() + " (run " + stage + " first)");
  return path;
}

std::vector<RationaleRecord> read_retained(const fs::path& path) {
  std::vector<RationaleRecord> out;
  read_jsonl(path, [&](std::size_t, const Json& j) {
    for (const auto& r : j.at("retained")) out.push_back(r.get<RationaleRecord>());
  });
  return out;
}

TrainOptions train_options(const Experiment& exp, int round) {
  const auto& c = exp.config();
  TrainOptions o;
  o.loss = c.loss;
  o.optimizer = c.optimizer;
  o.learning_rate = round <= 1 ? c.optimizer.learning_rate : c.optimizer.later_round_lr;
  o.seed = derive_seed(c.seed, hash_string("train"), static_cast<std::uint64_t>(round));
  o.precision = c.precision;
  if (c.rounds.latest_negatives_only) o.negative_round = round;
  o.demos.assign(exp.demos().begin(), exp.demos().end());
  return o;
}

ExamConfig exam_config(const Experiment& exp) {
  ExamConfig e = exp.config().exam;
  e.gen.seed = derive_seed(exp.config().seed, hash_string("exam"), e.gen.seed);
  return e;
}

std::size_t count_round(std::span<const RationaleRecord> records, int round, Source source) {
  return static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [&](const auto& r) {
    return r.round == round && r.source == source;
  }));
}

RoundMetrics read_metrics(const Experiment& exp, int round) {
  return read_json(exp.round_dir(round) / "metrics.json").get<RoundMetrics>();
}

double error_rate_of(const EvalReport& train_eval) { return 100.0 - train_eval.accuracy; }

// Greedy evaluations of a round's model, written next to its checkpoint.
std::pair<EvalReport, EvalReport> evaluate_round(Experiment& exp, const ModelState& model,
                                                 int round) {
  const TransformerStudent student(model, exp.tokenizer(), exp.config().precision);
  const int max_new = exp.config().eval_max_new_tokens;
  EvalReport test = evaluate(student, exp.test_samples(), exp.demos(), max_new);
  EvalReport train = evaluate(student, exp.train_samples(), exp.demos(), max_new);
  write_json(exp.round_dir(round) / "eval_report.json", test);
  write_json(exp.round_dir(round) / "train_eval.json", train);
  return {std::move(test), std::move(train)};
}

}  // namespace

void to_json(nlohmann::json& j, const RoundMetrics& m) {
  j = nlohmann::json{{"round", m.round},
                     {"test_accuracy", m.test_accuracy},
                     {"accuracy_gain", m.accuracy_gain},
                     {"train_error_rate", m.train_error_rate},
                     {"num_train_rationales", m.num_train_rationales},
                     {"num_new_train_rationales", m.num_new_train_rationales},
                     {"num_negatives", m.num_negatives},
                     {"num_new_negatives", m.num_new_negatives},
                     {"num_requests", m.num_requests},
                     {"num_success", m.num_success},
                     {"final_lm", m.final_lm},
                     {"checkpoint_digest", m.checkpoint_digest}};
}

void from_json(const nlohmann::json& j, RoundMetrics& m) {
  m.round = j.at("round").get<int>();
  m.test_accuracy = j.at("test_accuracy").get<double>();
  m.accuracy_gain = j.at("accuracy_gain").get<double>();
  m.train_error_rate = j.at("train_error_rate").get<double>();
  m.num_train_rationales = j.at("num_train_rationales").get<std::size_t>();
  m.num_new_train_rationales = j.at("num_new_train_rationales").get<std::size_t>();
  m.num_negatives = j.at("num_negatives").get<std::size_t>();
  m.num_new_negatives = j.at("num_new_negatives").get<std::size_t>();
  m.num_requests = j.at("num_requests").get<std::size_t>();
  m.num_success = j.at("num_success").get<std::size_t>();
  m.final_lm = j.at("final_lm").get<double>();
  m.checkpoint_digest = j.at("checkpoint_digest").get<std::string>();
}

StopDecision should_stop(std::span<const RoundMetrics> history, const StopPolicy& policy) {
  StopDecision d;
  if (history.empty() || history.back().round < 1) return d;
  const auto& last = history.back();
  std::vector<std::string> reasons;
  if (last.round >= policy.max_rounds) reasons.push_back("max_rounds");
  if (static_cast<long long>(last.num_new_train_rationales) < policy.min_new_data) {
    reasons.push_back("min_new_data");
  }
  if (last.accuracy_gain < policy.min_accuracy_gain) reasons.push_back("min_accuracy_gain");
  d.stop = !reasons.empty();
  for (const auto& r : reasons) d.reason += (d.reason.empty() ? "" : ",") + r;
  return d;
}

RoundMetrics init_round_zero(Experiment& exp) {
  if (exp.round_complete(0)) return read_metrics(exp, 0);
  const fs::path dir = exp.round_dir(0);
  fs::create_directories(dir);
  const ModelState model = init_model(exp.config().model);
  write_file(dir / "checkpoint.bin", save_checkpoint(model));
  exp.load_store(0).snapshot(dir);
  const auto [test, train] = evaluate_round(exp, model, 0);
  RoundMetrics m;
  m.test_accuracy = test.accuracy;
  m.train_error_rate = error_rate_of(train);
  m.checkpoint_digest = checkpoint_digest(model);
  write_json(dir / "metrics.json", m);
  log_info("round 0: test accuracy " + std::to_string(m.test_accuracy) + ", train ER " +
           std::to_string(m.train_error_rate));
  return m;
}

ExamResult exam_stage(Experiment& exp, int round) {
  if (round < 1) throw ContractError("exam runs in rounds >= 1");
  const fs::path dir = exp.round_dir(round);
  fs::create_directories(dir);
  const DatasetStore store = exp.load_store(round - 1);
  ExamResult result;
  if (round > 1 || exp.config().rounds.exam_in_first_round) {
    const ModelState model = exp.load_model(round - 1);
    const TransformerStudent student(model, exp.tokenizer(), exp.config().precision);
    result = run_exam(student, store, exp.demos(), exam_config(exp), round);
  }
  write_rationales_jsonl(dir / kExamNegatives, result.new_negatives);
  write_json(dir / "exam_report.json", result);
  log_info("round " + std::to_string(round) + " exam: " + std::to_string(result.new_negatives.size()) +
           " negatives, error rate " + std::to_string(result.error_rate));
  return result;
}

std::vector<TeacherExchange> collect_stage(Experiment& exp, int round, std::optional<bool> feedback,
                                           const Sleeper& sleep) {
  if (round < 1) throw ContractError("collection runs in rounds >= 1");
  const fs::path dir = exp.round_dir(round);
  ExamResult exam;
  exam.new_negatives = load_rationales_jsonl(need(dir / kExamNegatives, "exam"));
  DatasetStore store = exp.load_store(round - 1);
  const std::size_t before = store.neg().size();
  merge_exam(store, exam);

  std::vector<TeacherTarget> targets;
  if (round == 1) {
    for (const auto& s : store.samples()) targets.push_back({s.id, std::nullopt});
  } else {
    for (std::size_t i = before; i < store.neg().size(); ++i) {
      targets.push_back({store.neg()[i].sample_id, store.neg()[i].text});
    }
  }
  const bool with_feedback = feedback.value_or(exp.config().teacher.feedback_enabled);
  const auto exchanges = collect(exp.backend(), store, exp.prompt_template(with_feedback), targets,
                                 round, exp.config().teacher.request, &exp.cache(), sleep);

  std::string lines;
  for (const auto& e : exchanges) lines += Json(e).dump() + "\n";
  write_file(dir / kExchanges, lines);
  CollectReport report = summarize(exchanges);
  report.num_retained = store.append(retained_records(exchanges)).added;
  write_json(dir / "teacher_report.json", Json(report));
  log_info("round " + std::to_string(round) + " teacher: " + std::to_string(report.num_requests) +
           " requests, " + std::to_string(report.num_success) + " successes, " +
           std::to_string(report.num_retained) + " retained");
  if (round == 1) {
    const auto empty = std::count_if(exchanges.begin(), exchanges.end(),
                                     [](const auto& e) { return e.retained.empty(); });
    if (empty > 0) log_info("round 1: " + std::to_string(empty) + " questions got no correct rationale");
    if (report.num_retained == 0) {
      if (report.num_failed == report.num_requests) {
        throw TransportError("bootstrap: every teacher request failed");
      }
      throw TrainingError("bootstrap: the teacher returned no correct rationale");
    }
  }
  return exchanges;
}

DatasetStore assemble_store(const Experiment& exp, int round) {
  const fs::path dir = exp.round_dir(round);
  DatasetStore store = exp.load_store(round - 1);
  ExamResult exam;
  exam.new_negatives = load_rationales_jsonl(need(dir / kExamNegatives, "exam"));
  merge_exam(store, exam);
  store.append(read_retained(need(dir / kExchanges, "collect")));
  store.round = round;
  return store;
}

TrainResult train_stage(Experiment& exp, int round, std::optional<double> lambda) {
  const fs::path dir = exp.round_dir(round);
  const DatasetStore store = assemble_store(exp, round);
  if (store.train().empty()) {
    throw TrainingError("round " + std::to_string(round) + " has no correct rationales to train on");
  }
  store.snapshot(dir);
  ModelState model = exp.load_model(round - 1);
  TrainOptions opt = train_options(exp, round);
  if (lambda) opt.loss.lambda = *lambda;
  const TrainResult result = train(model, store, exp.tokenizer(), opt);
  write_file(dir / "checkpoint.bin", save_checkpoint(model));
  write_losses_csv(dir / "losses.csv", result.curve);
  write_json(dir / "train_summary.json",
             Json{{"final_lm", result.final_lm}, {"steps", result.curve.size()},
                  {"lambda", opt.loss.lambda}, {"learning_rate", opt.learning_rate}});
  log_info("round " + std::to_string(round) + " train: " + std::to_string(result.curve.size()) +
           " steps, final L_lm " + std::to_string(result.final_lm));
  return result;
}

RoundMetrics eval_stage(Experiment& exp, int round) {
  const fs::path dir = exp.round_dir(round);
  const ModelState model = exp.load_model(round);
  const DatasetStore store = exp.load_store(round);
  const auto [test, train] = evaluate_round(exp, model, round);

  const auto groups = path_groups(store);
  if (!groups.empty()) {
    const auto diag = reflection_diagnostics(model, exp.tokenizer(), groups);
    write_json(dir / "diagnostics.json", Json(diag));
    write_projection_csv(dir / "projection.csv", project_2d(diag.representations, diag.labels));
  }

  const CollectReport teacher = read_json(need(dir / "teacher_report.json", "collect")).get<CollectReport>();
  RoundMetrics m;
  m.round = round;
  m.test_accuracy = test.accuracy;
  m.accuracy_gain = test.accuracy - read_metrics(exp, round - 1).test_accuracy;
  m.train_error_rate = error_rate_of(train);
  m.num_train_rationales = store.train().size();
  m.num_new_train_rationales = count_round(store.train(), round, Source::teacher);
  m.num_negatives = store.neg().size();
  m.num_new_negatives = count_round(store.neg(), round, Source::student);
  m.num_requests = teacher.num_requests;
  m.num_success = teacher.num_success;
  m.final_lm = read_json(need(dir / "train_summary.json", "train")).at("final_lm").get<double>();
  m.checkpoint_digest = checkpoint_digest(model);
  write_json(dir / "metrics.json", m);
  log_info("round " + std::to_string(round) + ": test accuracy " + std::to_string(m.test_accuracy) +
           ", train ER " + std::to_string(m.train_error_rate));
  return m;
}

RoundMetrics run_round(Experiment& exp, int round) {
  if (exp.round_complete(round)) {
    throw ResumeError("round " + std::to_string(round) + " is already complete");
  }
  if (!exp.round_complete(round - 1)) {
    throw ResumeError("round " + std::to_string(round - 1) + " is not complete");
  }
  exam_stage(exp, round);
  collect_stage(exp, round);
  train_stage(exp, round);
  return eval_stage(exp, round);
}

std::vector<RoundMetrics> load_history(const Experiment& exp) {
  std::vector<RoundMetrics> out;
  for (int k = 0; exp.round_complete(k); ++k) out.push_back(read_metrics(exp, k));
  return out;
}

std::vector<RoundMetrics> run_pipeline(Experiment& exp) {
  std::vector<RoundMetrics> history{init_round_zero(exp)};
  for (int k = 1;; ++k) {
    history.push_back(exp.round_complete(k) ? read_metrics(exp, k) : run_round(exp, k));
    const StopDecision d = should_stop(history, exp.config().rounds.stop);
    if (d.stop) {
      write_json(exp.dir() / "stop.json", Json{{"round", k}, {"reason", d.reason}});
      log_info("stopping after round " + std::to_string(k) + ": " + d.reason);
      break;
    }
  }
  return history;
}

const std::vector<double>& default_sweep_lambdas() {
  static const std::vector<double> l{0.0, 0.1, 0.25, 0.5, 1.0, 2.0};
  return l;
}

std::vector<SweepRow> sweep_lambda(Experiment& exp, std::span<const double> lambdas) {
  std::vector<double> values(lambdas.begin(), lambdas.end());
  if (std::find(values.begin(), values.end(), 0.0) == values.end()) values.insert(values.begin(), 0.0);
  if (values.size() < 2) throw ConfigError("lambda sweep needs at least 2 values");
  init_round_zero(exp);
  const fs::path dir = exp.round_dir(1);
  if (!fs::exists(dir / kExamNegatives)) exam_stage(exp, 1);
  if (!fs::exists(dir / kExchanges)) collect_stage(exp, 1);
  const DatasetStore store = assemble_store(exp, 1);
  const auto groups = path_groups(store);

  std::vector<SweepRow> rows;
  for (double lambda : values) {
    ModelState model = exp.load_model(0);
    TrainOptions opt = train_options(exp, 1);
    opt.loss.lambda = lambda;
    const TrainResult tr = train(model, store, exp.tokenizer(), opt);
    const TransformerStudent student(model, exp.tokenizer(), exp.config().precision);
    SweepRow row;
    row.lambda = lambda;
    row.accuracy = evaluate(student, exp.test_samples(), exp.demos(), exp.config().eval_max_new_tokens).accuracy;
    row.final_lm = tr.final_lm;
    if (!groups.empty()) {
      const auto diag = reflection_diagnostics(model, exp.tokenizer(), groups);
      row.distance = diag.distance;
      row.preference = diag.preference;
    }
    log_info("sweep lambda " + std::to_string(lambda) + ": accuracy " + std::to_string(row.accuracy) +
             ", final L_lm " + std::to_string(row.final_lm));
    rows.push_back(row);
  }
  std::string csv = "lambda,accuracy,final_lm,distance,preference\n";
  char line[200];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g,%.17g\n", r.lambda, r.accuracy,
                  r.final_lm, r.distance, r.preference);
    csv += line;
  }
  write_file(exp.dir() / "lambda_sweep.csv", csv);
  return rows;
}

std::vector<ReportRow> build_report(const fs::path& experiment_dir) {
  const Experiment exp = Experiment::open(experiment_dir);
  std::vector<ReportRow> rows;
  for (int k = 0; exp.round_complete(k); ++k) {
    const fs::path dir = exp.round_dir(k);
    const RoundMetrics recorded = read_metrics(exp, k);
    const auto test = read_json(need(dir / "eval_report.json", "eval")).get<EvalReport>();
    const auto train = read_json(need(dir / "train_eval.json", "eval")).get<EvalReport>();
    ReportRow row;
    row.round = k;
    row.accuracy = accuracy_from(test.per_sample);
    row.error_rate = 100.0 - accuracy_from(train.per_sample);
    row.delta = k == 0 ? 0.0 : row.accuracy - rows.back().accuracy;
    row.num_data = load_rationales_jsonl(need(dir / "train.jsonl", "train")).size();
    if (k > 0) {
      const auto teacher = read_json(need(dir / "teacher_report.json", "collect")).get<CollectReport>();
      row.num_requests = teacher.num_requests;
      row.num_success = teacher.num_success;
    }
    row.matches_recorded = row.accuracy == recorded.test_accuracy &&
                           row.error_rate == recorded.train_error_rate &&
                           row.delta == recorded.accuracy_gain &&
                           row.num_data == recorded.num_train_rationales &&
                           row.num_requests == recorded.num_requests &&
                           row.num_success == recorded.num_success;
    rows.push_back(row);
  }
  if (rows.empty()) throw ResumeError("no completed rounds under " + experiment_dir.string());
  return rows;
}

std::string render_report(std::span<const ReportRow> rows) {
  std::ostringstream out;
  char line[200];
  std::snprintf(line, sizeof line, "%-6s %8s %8s %8s %8s\n", "Round", "#Data", "ER", "Acc", "Delta");
  out << line;
  for (const auto& r : rows) {
    if (r.round == 0) {
      std::snprintf(line, sizeof line, "%-6s %8s %8.2f %8.2f %8s\n", "init", "-", r.error_rate,
                    r.accuracy, "-");
    } else {
      std::snprintf(line, sizeof line, "%-6d %8zu %8.2f %8.2f %+8.2f\n", r.round, r.num_data,
                    r.error_rate, r.accuracy, r.delta);
    }
    out << line;
  }
  out << "\n";
  std::snprintf(line, sizeof line, "%-6s %10s %10s\n", "Round", "#Request", "#Success");
  out << line;
  for (const auto& r : rows) {
    if (r.round == 0) continue;
    std::snprintf(line, sizeof line, "%-6d %10zu %10zu\n", r.round, r.num_requests, r.num_success);
    out << line;
  }
  bool all_match = true;
  for (const auto& r : rows) all_match = all_match && r.matches_recorded;
  if (!all_match) out << "\nwarning: recomputed values differ from recorded metrics.json\n";
  return out.str();
}

}  // namespace mentor
