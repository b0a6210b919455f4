#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "mentor/model/model.hpp"
#include "mentor/model/tokenizer.hpp"
#include "mentor/model/transformer.hpp"

namespace mentor {

struct LossConfig {
  double rho = 1.0;
  double lambda = 0.5;
  double demo_weight = 0.1;

  void validate() const;
};

void to_json(nlohmann::json& j, const LossConfig& c);
void from_json(const nlohmann::json& j, LossConfig& c);

// Throws NumericError when either vector has zero norm.
double cosine(std::span<const double> a, std::span<const double> b);

// max(0, rho - cos(a, p) + cos(a, n)).
double triplet_loss(std::span<const double> anchor, std::span<const double> positive,
                    std::span<const double> negative, double rho);

struct TripletGradient {
  double value = 0.0;
  std::vector<double> d_anchor, d_positive, d_negative;
};
TripletGradient triplet_loss_grad(std::span<const double> anchor,
                                  std::span<const double> positive,
                                  std::span<const double> negative, double rho);

// Weight of each next-token target: position t (t >= 1) weighs demo_weight
// when tags[t] is demo, else 1. Index 0 is always 0.
std::vector<double> lm_weights(const TokenSequence& seq, double demo_weight);

// Records forward traces and the cotangents of scalar terms attached to them,
// then backpropagates the accumulated objective in one pass per trace.
template <class T>
class LossGraph {
 public:
  explicit LossGraph(const Engine<T>& engine) : engine_(&engine) {}

  const Engine<T>& engine() const { return *engine_; }

  std::size_t add_sequence(const TokenSequence& seq);
  const Trace<T>& trace(std::size_t node) const { return nodes_.at(node).trace; }
  std::vector<double> representation(std::size_t node) const;

  // Adds scale * (weighted mean cross-entropy of node) to output `out` and
  // returns the unscaled term.
  double add_lm_term(std::size_t node, std::span<const double> weights, double scale,
                     std::size_t out = 0);
  // Adds scale * triplet_loss over the final hidden states of three nodes
  // (anchor and positive may be the same node) and returns the unscaled term.
  double add_triplet_term(std::size_t anchor, std::size_t positive, std::size_t negative,
                          double rho, double scale, std::size_t out = 0);
  void add_constant(double value, std::size_t out = 0);

  const std::vector<double>& outputs() const { return outputs_; }
  // The single scalar objective; ContractError when outputs are not scalar.
  double value() const;
  // Accumulates d(value)/d(params) into grads.
  void backward(std::span<T> grads) const;

 private:
  struct Node {
    Trace<T> trace;
    std::vector<T> dlogits;
    std::vector<T> dhidden;
  };
  double& output(std::size_t out);

  const Engine<T>* engine_;
  std::vector<Node> nodes_;
  std::vector<double> outputs_;
};

extern template class LossGraph<float>;
extern template class LossGraph<double>;

// Gradient of a scalar graph as a named buffer in the model's layout.
template <class T>
Gradients gradients(const ModelState& model, const LossGraph<T>& graph);

double lm_loss(const ModelState& model, const TokenSequence& seq, double demo_weight);

struct TripletPaths {
  TokenSequence anchor, positive, negative;
};
// L_lm(seq) + lambda * L_cl(paths); exactly L_lm when lambda = 0 or no triplet.
double joint_loss(const ModelState& model, const TokenSequence& seq,
                  const std::optional<TripletPaths>& triplet, const LossConfig& config);

// Builds the joint objective for one anchor into a fresh graph.
template <class T>
LossGraph<T> joint_graph(const Engine<T>& engine, const TokenSequence& seq,
                         const std::optional<TripletPaths>& triplet, const LossConfig& config);

}  // namespace mentor
