#include "mentor/tailor/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "mentor/common/error.hpp"

namespace mentor {

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0) || !(later_round_lr > 0.0)) throw ConfigError("learning rates must be positive");
  if (later_round_lr > learning_rate) throw ConfigError("later_round_lr must not exceed learning_rate");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("betas must be in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (warmup_steps < 0) throw ConfigError("warmup_steps must be non-negative");
  if (epochs < 1 || batch_size < 1) throw ConfigError("epochs and batch_size must be >= 1");
  if (!(max_grad_norm >= 0.0)) throw ConfigError("max_grad_norm must be non-negative");
}

OptimizerConfig OptimizerConfig::desk() { return OptimizerConfig{}; }

OptimizerConfig OptimizerConfig::paper() {
  OptimizerConfig c;
  c.learning_rate = 1e-6;
  c.later_round_lr = 7e-7;
  return c;
}

OptimizerConfig OptimizerConfig::profile(const std::string& name) {
  if (name == "desk") return desk();
  if (name == "paper") return paper();
  throw ConfigError("unknown training profile " + name);
}

void to_json(nlohmann::json& j, const OptimizerConfig& c) {
  j = nlohmann::json{{"learning_rate", c.learning_rate}, {"betas", {c.beta1, c.beta2}},
                     {"epsilon", c.epsilon},             {"weight_decay", c.weight_decay},
                     {"warmup_steps", c.warmup_steps},   {"epochs", c.epochs},
                     {"batch_size", c.batch_size},       {"later_round_lr", c.later_round_lr},
                     {"max_grad_norm", c.max_grad_norm}};
}

void from_json(const nlohmann::json& j, OptimizerConfig& c) {
  c.learning_rate = j.at("learning_rate").get<double>();
  const auto& b = j.at("betas");
  c.beta1 = b.at(0).get<double>();
  c.beta2 = b.at(1).get<double>();
  c.epsilon = j.at("epsilon").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.warmup_steps = j.at("warmup_steps").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.later_round_lr = j.at("later_round_lr").get<double>();
  c.max_grad_norm = j.at("max_grad_norm").get<double>();
}

double warmup_lr(double base, std::uint64_t step, int warmup_steps) {
  if (warmup_steps <= 0) return base;
  return base * std::min(1.0, static_cast<double>(step) / warmup_steps);
}

AdamW::AdamW(std::size_t size, const OptimizerConfig& config)
    : config_(config), m_(size, 0.0), v_(size, 0.0) {}

void AdamW::step(std::span<double> params, std::span<const double> grads, double lr,
                 std::span<const std::uint8_t> decay_mask) {
  if (params.size() != m_.size() || grads.size() != m_.size() || decay_mask.size() != m_.size()) {
    throw ContractError("AdamW buffers do not match parameter count");
  }
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    if (decay_mask[i]) params[i] -= lr * config_.weight_decay * params[i];
    m_[i] = b1 * m_[i] + (1.0 - b1) * g;
    v_[i] = b2 * v_[i] + (1.0 - b2) * g * g;
    params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + config_.epsilon);
  }
}

}  // namespace mentor
