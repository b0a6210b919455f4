#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace mentor {

struct OptimizerConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
  int warmup_steps = 100;
  int epochs = 10;
  int batch_size = 16;
  double later_round_lr = 2.1e-4;
  double max_grad_norm = 1.0;  // 0 disables clipping

  void validate() const;

  // Random-init micro model.
  static OptimizerConfig desk();
  // Learning rates used for pre-trained large students.
  static OptimizerConfig paper();
  static OptimizerConfig profile(const std::string& name);
};

void to_json(nlohmann::json& j, const OptimizerConfig& c);
void from_json(const nlohmann::json& j, OptimizerConfig& c);

// base * min(1, step / warmup) for the 1-based step.
double warmup_lr(double base, std::uint64_t step, int warmup_steps);

// Decoupled weight decay Adam; decay applies where mask is nonzero.
class AdamW {
 public:
  AdamW(std::size_t size, const OptimizerConfig& config);

  // One update at learning rate `lr`; increments the step counter first.
  void step(std::span<double> params, std::span<const double> grads, double lr,
            std::span<const std::uint8_t> decay_mask);
  std::uint64_t steps() const { return t_; }

 private:
  OptimizerConfig config_;
  std::vector<double> m_, v_;
  std::uint64_t t_ = 0;
};

}  // namespace mentor
