#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mentor/corpus/cot.hpp"
#include "mentor/corpus/store.hpp"
#include "mentor/model/inference.hpp"

namespace mentor {

struct SampleOutcome {
  std::string id;
  std::optional<std::string> extracted;
  std::string gold;
  bool correct = false;
};

struct EvalReport {
  double accuracy = 0.0;  // percent
  std::size_t n = 0;
  std::vector<SampleOutcome> per_sample;
};

void to_json(nlohmann::json& j, const EvalReport& r);
void from_json(const nlohmann::json& j, EvalReport& r);
double accuracy_from(std::span<const SampleOutcome> outcomes);

// One greedy completion per sample. Throws ContractError on an empty set.
EvalReport evaluate(const Student& student, std::span<const Sample> samples,
                    std::span<const Demonstration> demos, int max_new_tokens);

// Correct and wrong reasoning paths (record texts) for one question.
struct PathGroup {
  std::string sample_id;
  std::string question;
  std::vector<std::string> correct;
  std::vector<std::string> wrong;
};

// Groups from a store; only questions with both kinds are kept.
std::vector<PathGroup> path_groups(const DatasetStore& store,
                                   std::optional<int> wrong_round = std::nullopt);

struct ReflectionDiagnostics {
  double distance = 0.0;    // Euclidean distance between the two centroids
  double preference = 0.0;  // percent of pairs won by the correct path, ties 0.5
  double mean_likelihood_ratio = 0.0;  // mean exp(mean-ll(correct) - mean-ll(wrong))
  std::size_t num_pairs = 0;
  std::vector<std::vector<double>> representations;
  std::vector<int> labels;  // 1 correct, 0 wrong, aligned with representations
};

void to_json(nlohmann::json& j, const ReflectionDiagnostics& d);  // no vectors

// Path representations and length-normalized log-likelihoods (over the
// rationale and answer tokens) of demo-free path sequences.
ReflectionDiagnostics reflection_diagnostics(const ModelState& model, const Tokenizer& tok,
                                             std::span<const PathGroup> groups);

// Pairwise win share from per-pair mean log-likelihood differences.
double preference_from(std::span<const double> correct_minus_wrong);
double centroid_distance(std::span<const std::vector<double>> a,
                         std::span<const std::vector<double>> b);

struct Projection {
  std::vector<double> x, y;
  std::vector<int> labels;
};

// Mean-centered PCA to two components with each component's
// largest-magnitude loading made positive.
Projection project_2d(std::span<const std::vector<double>> points, std::span<const int> labels);
void write_projection_csv(const std::filesystem::path& path, const Projection& p);

}  // namespace mentor
