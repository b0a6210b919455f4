#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "mentor/common/rng.hpp"
#include "mentor/corpus/cot.hpp"
#include "mentor/corpus/store.hpp"
#include "mentor/model/model.hpp"
#include "mentor/model/tokenizer.hpp"
#include "mentor/tailor/loss.hpp"
#include "mentor/tailor/optimizer.hpp"

namespace mentor {

// Same-question positive/negative pools over a store's D_train and D_neg.
class TripletSampler {
 public:
  // `negative_round` restricts negatives to one round's mistakes.
  explicit TripletSampler(const DatasetStore& store,
                          std::optional<int> negative_round = std::nullopt);

  struct Draw {
    std::size_t positive = 0;               // index into store.train()
    std::optional<std::size_t> negative;    // index into store.neg()
  };
  // Positive uniform over the anchor's correct pool (the anchor included),
  // negative uniform over its wrong pool.
  Draw draw(std::size_t anchor, Rng& rng) const;

 private:
  const DatasetStore* store_;
  std::unordered_map<std::string, std::vector<std::size_t>> positives_, negatives_;
};

struct TripletBatch {
  std::vector<TokenSequence> anchors, positives, negatives;
  std::vector<bool> skip_mask;  // true when the anchor's question has no negative
  std::vector<std::size_t> positive_index, negative_index;
};

// One draw per anchor (indices into store.train()), seeded per (seed, anchor).
TripletBatch build_triplets(const DatasetStore& store, const Tokenizer& tok,
                            std::span<const std::size_t> anchors, std::uint64_t seed,
                            std::optional<int> negative_round = std::nullopt);

struct TrainOptions {
  LossConfig loss;
  OptimizerConfig optimizer;
  double learning_rate = 3e-4;  // base rate for this call
  std::uint64_t seed = 42;
  Precision precision = Precision::f32;
  std::optional<int> negative_round;
  std::vector<Demonstration> demos;
};

struct StepRecord {
  std::uint64_t step = 0;  // 1-based within this call
  double lm = 0.0;
  double cl = 0.0;  // NaN when no anchor in the batch had a triplet
  double lr = 0.0;
  std::size_t triplets = 0;
};

struct TrainResult {
  std::vector<StepRecord> curve;
  double final_lm = 0.0;  // mean L_lm over the last epoch
};

// Epochs of shuffled minibatches over D_train under the joint objective.
// Optimizer state starts fresh; model.step_count advances once per update.
// Throws TrainingError on a non-finite loss or gradient.
TrainResult train(ModelState& model, const DatasetStore& store, const Tokenizer& tok,
                  const TrainOptions& options);

void write_losses_csv(const std::filesystem::path& path, std::span<const StepRecord> curve);
std::vector<StepRecord> read_losses_csv(const std::filesystem::path& path);

}  // namespace mentor
