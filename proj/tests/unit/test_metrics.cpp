#include <doctest.h>

#include <cmath>
#include <fstream>

#include "helpers.hpp"
#include "mentor/common/error.hpp"
#include "mentor/metrics/metrics.hpp"

using namespace mentor;
using mentor::testing::TempDir;

namespace {

class EchoStudent final : public Student {
 public:
  explicit EchoStudent(std::map<std::string, std::string> answers) : answers_(std::move(answers)) {}
  std::vector<std::string> complete(std::string_view prompt, const GenerationConfig&) const override {
    const auto q0 = prompt.rfind("Question: ") + 10;
    const std::string q(prompt.substr(q0, prompt.find('\n', q0) - q0));
    return {" r.\nAnswer: " + answers_.at(q)};
  }

 private:
  std::map<std::string, std::string> answers_;
};

double dist(double ax, double ay, double bx, double by) { return std::hypot(ax - bx, ay - by); }

double silhouette(const Projection& p) {
  const std::size_t n = p.x.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double in = 0.0, out = 0.0;
    int ni = 0, no = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double d = dist(p.x[i], p.y[i], p.x[j], p.y[j]);
      if (p.labels[j] == p.labels[i]) {
        in += d;
        ++ni;
      } else {
        out += d;
        ++no;
      }
    }
    const double a = in / ni, b = out / no;
    total += (b - a) / std::max(a, b);
  }
  return total / static_cast<double>(n);
}

}  // namespace

TEST_CASE("evaluate accuracy is recomputable") {
  std::vector<Sample> samples;
  std::map<std::string, std::string> answers;
  for (int i = 0; i < 8; ++i) {
    samples.push_back({"e" + std::to_string(i), "q" + std::to_string(i), std::to_string(i), TaskType::numeric});
    answers["q" + std::to_string(i)] = std::to_string(i < 6 ? i : i + 1);
  }
  const auto r = evaluate(EchoStudent(answers), samples, {}, 16);
  CHECK(r.n == 8);
  CHECK(r.accuracy == 75.0);
  CHECK(accuracy_from(r.per_sample) == r.accuracy);
  nlohmann::json j = r;
  EvalReport back = j.get<EvalReport>();
  CHECK(back.accuracy == r.accuracy);
  CHECK(back.per_sample.size() == 8);

  for (auto& [q, a] : answers) a = std::to_string(std::stoi(q.substr(1)));
  CHECK(evaluate(EchoStudent(answers), samples, {}, 16).accuracy == 100.0);
  CHECK_THROWS_AS(evaluate(EchoStudent(answers), std::span<const Sample>(), {}, 16), ContractError);
}

TEST_CASE("constant yes/no student scores the base rate") {
  std::vector<Sample> samples;
  std::map<std::string, std::string> answers;
  for (int i = 0; i < 40; ++i) {
    samples.push_back({"y" + std::to_string(i), "w" + std::to_string(i), i % 2 ? "yes" : "no", TaskType::yes_no});
    answers["w" + std::to_string(i)] = "Yes";
  }
  CHECK(evaluate(EchoStudent(answers), samples, {}, 3).accuracy == 50.0);
}

TEST_CASE("diagnostics degenerate symmetry") {
  const std::vector<std::string> texts = {"Question: a b c d\nReasoning: 1 + 2 = 3. Answer: 3 4"};
  const auto tok = Tokenizer::build(texts);
  const auto m = init_model(mentor::testing::micro_config(tok.size()));
  std::vector<PathGroup> same = {{"g1", "a b", {"1 + 2 = 3.\nAnswer: 3", "2 + 1 = 3.\nAnswer: 3"},
                                  {"1 + 2 = 3.\nAnswer: 3", "2 + 1 = 3.\nAnswer: 3"}}};
  const auto d = reflection_diagnostics(m, tok, same);
  CHECK(d.distance == 0.0);
  CHECK(d.num_pairs == 4);
  // Two of the four pairs compare a path with itself.
  std::vector<PathGroup> mirrored = {{"g1", "a b", {"1 + 2 = 3.\nAnswer: 3"}, {"1 + 2 = 3.\nAnswer: 3"}}};
  const auto d2 = reflection_diagnostics(m, tok, mirrored);
  CHECK(d2.preference == 50.0);
  CHECK(d2.distance == 0.0);
  CHECK(d2.mean_likelihood_ratio == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(d.representations.size() == 4);
  CHECK(d.labels == std::vector<int>{1, 1, 0, 0});
  CHECK_THROWS_AS(reflection_diagnostics(m, tok, std::span<const PathGroup>()), ContractError);
}

TEST_CASE("preference and distance helpers") {
  CHECK(preference_from(std::vector<double>{0.3}) == 100.0);
  CHECK(preference_from(std::vector<double>{-0.3}) == 0.0);
  CHECK(preference_from(std::vector<double>{0.0, 0.0}) == 50.0);
  CHECK(preference_from(std::vector<double>{1.0, -1.0, 0.0, 2.0}) == 62.5);
  // Only the sign of each difference matters.
  CHECK(preference_from(std::vector<double>{1e-9, -5.0, 7.0}) ==
        preference_from(std::vector<double>{100.0, -1e-9, 0.1}));

  Rng rng(3);
  std::vector<std::vector<double>> a;
  for (int i = 0; i < 5; ++i) a.push_back(mentor::testing::random_vector(rng, 6));
  CHECK(centroid_distance(a, a) == 0.0);
  std::vector<std::vector<double>> p = {{0, 0}, {2, 0}}, q = {{3, 4}, {5, 4}};
  CHECK(centroid_distance(p, q) == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("store path groups") {
  const Sample s{"a", "qa", "5", TaskType::numeric}, t{"b", "qb", "2", TaskType::numeric};
  DatasetStore store({s, t});
  store.append(std::vector{judge("x\nAnswer: 5", s, Source::teacher, 1),
                           judge("y\nAnswer: 4", s, Source::student, 1),
                           judge("z\nAnswer: 3", s, Source::student, 2),
                           judge("w\nAnswer: 2", t, Source::teacher, 1)});
  const auto g = path_groups(store);
  REQUIRE(g.size() == 1);
  CHECK(g[0].sample_id == "a");
  CHECK(g[0].wrong.size() == 2);
  CHECK(path_groups(store, 2)[0].wrong.size() == 1);
  CHECK(path_groups(store, 3).empty());
}

TEST_CASE("2-D projection") {
  SUBCASE("axis-aligned 2-D points keep pairwise distances") {
    std::vector<std::vector<double>> pts = {{0, 0}, {4, 0}, {0, 1}, {4, 1}, {2, 0.5}};
    const auto p = project_2d(pts, std::vector<int>{0, 1, 0, 1, 0});
    for (std::size_t i = 0; i < pts.size(); ++i) {
      for (std::size_t j = 0; j < pts.size(); ++j) {
        const double orig = std::hypot(pts[i][0] - pts[j][0], pts[i][1] - pts[j][1]);
        CHECK(dist(p.x[i], p.y[i], p.x[j], p.y[j]) == doctest::Approx(orig).epsilon(1e-12));
      }
    }
  }
  SUBCASE("separated clusters") {
    Rng rng(12);
    std::vector<std::vector<double>> pts;
    std::vector<int> labels;
    for (int i = 0; i < 60; ++i) {
      auto v = mentor::testing::random_vector(rng, 10, 0.5);
      const int label = i % 2;
      for (auto& x : v) x += label ? 3.0 : -3.0;
      pts.push_back(v);
      labels.push_back(label);
    }
    const auto p = project_2d(pts, labels);
    CHECK(silhouette(p) > 0.5);
    double c0 = 0, c1 = 0;
    for (std::size_t i = 0; i < p.x.size(); ++i) (labels[i] ? c1 : c0) += p.x[i];
    CHECK(c0 != c1);
    // Deterministic sign convention.
    const auto again = project_2d(pts, labels);
    CHECK(again.x == p.x);
    CHECK(again.y == p.y);
    TempDir dir("proj");
    write_projection_csv(dir / "p.csv", p);
    std::ifstream f(dir / "p.csv");
    std::string header;
    std::getline(f, header);
    CHECK(header == "x,y,label");
  }
  SUBCASE("identical points project to zeros") {
    std::vector<std::vector<double>> pts(4, std::vector<double>{1.5, -2.0, 3.0});
    const auto p = project_2d(pts, std::vector<int>{0, 0, 1, 1});
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(p.x[i] == 0.0);
      CHECK(p.y[i] == 0.0);
    }
  }
  CHECK_THROWS_AS(project_2d(std::vector<std::vector<double>>{{1.0}}, std::vector<int>{0}), ContractError);
}
