#include "mentor/metrics/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include <Eigen/Dense>

#include "mentor/common/error.hpp"
#include "mentor/common/io.hpp"

namespace mentor {

void to_json(nlohmann::json& j, const EvalReport& r) {
  j = nlohmann::json{{"accuracy", r.accuracy}, {"n", r.n}};
  auto& ps = j["per_sample"] = nlohmann::json::array();
  for (const auto& s : r.per_sample) {
    ps.push_back({{"id", s.id},
                  {"extracted", s.extracted ? nlohmann::json(*s.extracted) : nlohmann::json()},
                  {"gold", s.gold},
                  {"correct", s.correct}});
  }
}

void from_json(const nlohmann::json& j, EvalReport& r) {
  r.accuracy = j.at("accuracy").get<double>();
  r.n = j.at("n").get<std::size_t>();
  r.per_sample.clear();
  for (const auto& s : j.at("per_sample")) {
    SampleOutcome o;
    o.id = s.at("id").get<std::string>();
    if (!s.at("extracted").is_null()) o.extracted = s.at("extracted").get<std::string>();
    o.gold = s.at("gold").get<std::string>();
    o.correct = s.at("correct").get<bool>();
    r.per_sample.push_back(std::move(o));
  }
}

double accuracy_from(std::span<const SampleOutcome> outcomes) {
  if (outcomes.empty()) return 0.0;
  std::size_t ok = 0;
  for (const auto& o : outcomes) ok += o.correct;
  return 100.0 * static_cast<double>(ok) / static_cast<double>(outcomes.size());
}

EvalReport evaluate(const Student& student, std::span<const Sample> samples,
                    std::span<const Demonstration> demos, int max_new_tokens) {
  if (samples.empty()) throw ContractError("evaluation needs a non-empty sample set");
  const GenerationConfig greedy = GenerationConfig::greedy(max_new_tokens);
  EvalReport report;
  report.per_sample.resize(samples.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    auto& o = report.per_sample[i];
    o.id = s.id;
    o.gold = s.gold_answer;
    try {
      const auto rec = judge(student.complete(render_cot(demos, s.question), greedy).at(0), s,
                             Source::student, 0);
      o.extracted = rec.extracted_answer;
      o.correct = rec.correct;
    } catch (const LengthError& e) {
      log_warn("eval: " + s.id + " counted wrong: " + e.what());
    }
  }
  report.n = samples.size();
  report.accuracy = accuracy_from(report.per_sample);
  return report;
}

std::vector<PathGroup> path_groups(const DatasetStore& store, std::optional<int> wrong_round) {
  std::map<std::string, PathGroup> by_id;
  for (const auto& r : store.train()) by_id[r.sample_id].correct.push_back(r.text);
  for (const auto& r : store.neg()) {
    if (!wrong_round || r.round == *wrong_round) by_id[r.sample_id].wrong.push_back(r.text);
  }
  std::vector<PathGroup> out;
  for (auto& [id, g] : by_id) {
    if (g.correct.empty() || g.wrong.empty()) continue;
    g.sample_id = id;
    g.question = store.sample(id).question;
    out.push_back(std::move(g));
  }
  return out;
}

void to_json(nlohmann::json& j, const ReflectionDiagnostics& d) {
  j = nlohmann::json{{"distance", d.distance},
                     {"preference", d.preference},
                     {"mean_likelihood_ratio", d.mean_likelihood_ratio},
                     {"num_pairs", d.num_pairs},
                     {"num_paths", d.representations.size()}};
}

double preference_from(std::span<const double> diffs) {
  if (diffs.empty()) throw ContractError("preference needs at least one pair");
  double wins = 0.0;
  for (double d : diffs) wins += d > 0.0 ? 1.0 : (d == 0.0 ? 0.5 : 0.0);
  return 100.0 * wins / static_cast<double>(diffs.size());
}

double centroid_distance(std::span<const std::vector<double>> a,
                         std::span<const std::vector<double>> b) {
  if (a.empty() || b.empty()) throw ContractError("centroid of an empty set");
  const std::size_t d = a.front().size();
  std::vector<double> ca(d, 0.0), cb(d, 0.0);
  for (const auto& v : a) {
    for (std::size_t i = 0; i < d; ++i) ca[i] += v[i];
  }
  for (const auto& v : b) {
    for (std::size_t i = 0; i < d; ++i) cb[i] += v[i];
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double diff = ca[i] / static_cast<double>(a.size()) - cb[i] / static_cast<double>(b.size());
    sq += diff * diff;
  }
  return std::sqrt(sq);
}

ReflectionDiagnostics reflection_diagnostics(const ModelState& model, const Tokenizer& tok,
                                             std::span<const PathGroup> groups) {
  const Engine<double> engine(model);
  const std::set<Segment> scored{Segment::rationale, Segment::answer};
  struct Scored {
    std::vector<double> rep;
    double mean_ll;
  };
  auto score = [&](const std::string& question, const std::string& text) {
    const TokenSequence seq = encode_path(tok, question, text);
    const auto tr = engine.forward(seq.ids);
    const auto D = static_cast<std::size_t>(model.config.hidden_dim);
    Scored s;
    s.rep.assign(tr.hidden.end() - static_cast<std::ptrdiff_t>(D), tr.hidden.end());
    s.mean_ll = sequence_log_likelihood(engine, seq, scored).mean;
    return s;
  };

  ReflectionDiagnostics d;
  std::vector<std::vector<double>> correct_reps, wrong_reps;
  std::vector<double> diffs;
  double ratio_sum = 0.0;
  for (const auto& g : groups) {
    std::vector<Scored> c, w;
    for (const auto& t : g.correct) c.push_back(score(g.question, t));
    for (const auto& t : g.wrong) w.push_back(score(g.question, t));
    for (const auto& a : c) {
      for (const auto& b : w) {
        diffs.push_back(a.mean_ll - b.mean_ll);
        ratio_sum += std::exp(a.mean_ll - b.mean_ll);
      }
    }
    for (auto& s : c) {
      correct_reps.push_back(s.rep);
      d.representations.push_back(std::move(s.rep));
      d.labels.push_back(1);
    }
    for (auto& s : w) {
      wrong_reps.push_back(s.rep);
      d.representations.push_back(std::move(s.rep));
      d.labels.push_back(0);
    }
  }
  if (diffs.empty()) throw ContractError("reflection diagnostics need a question with both path kinds");
  d.num_pairs = diffs.size();
  d.preference = preference_from(diffs);
  d.mean_likelihood_ratio = ratio_sum / static_cast<double>(diffs.size());
  d.distance = centroid_distance(correct_reps, wrong_reps);
  return d;
}

Projection project_2d(std::span<const std::vector<double>> points, std::span<const int> labels) {
  if (points.size() < 2) throw ContractError("projection needs at least 2 points");
  if (labels.size() != points.size()) throw ContractError("projection labels do not match points");
  const auto n = static_cast<Eigen::Index>(points.size());
  const auto d = static_cast<Eigen::Index>(points.front().size());
  Eigen::MatrixXd X(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(points[static_cast<std::size_t>(i)].size()) != d) {
      throw ContractError("projection points differ in dimension");
    }
    for (Eigen::Index k = 0; k < d; ++k) X(i, k) = points[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
  }
  X.rowwise() -= X.colwise().mean();
  Projection p;
  p.labels.assign(labels.begin(), labels.end());
  p.x.assign(points.size(), 0.0);
  p.y.assign(points.size(), 0.0);
  if (X.squaredNorm() == 0.0) {
    log_warn("projection: all points identical, emitting zeros");
    return p;
  }
  const Eigen::MatrixXd cov = X.transpose() * X / static_cast<double>(n);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::Index comps = std::min<Eigen::Index>(2, d);
  for (Eigen::Index c = 0; c < comps; ++c) {
    Eigen::VectorXd v = eig.eigenvectors().col(d - 1 - c);  // eigenvalues ascend
    if (eig.eigenvalues()(d - 1 - c) <= 0.0) continue;
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    const Eigen::VectorXd coords = X * v;
    auto& dst = c == 0 ? p.x : p.y;
    for (Eigen::Index i = 0; i < n; ++i) dst[static_cast<std::size_t>(i)] = coords(i);
  }
  return p;
}

void write_projection_csv(const fs::path& path, const Projection& p) {
  std::string out = "x,y,label\n";
  char line[96];
  for (std::size_t i = 0; i < p.x.size(); ++i) {
    std::snprintf(line, sizeof line, "%.17g,%.17g,%d\n", p.x[i], p.y[i], p.labels[i]);
    out += line;
  }
  write_file(path, out);
}

}  // namespace mentor
