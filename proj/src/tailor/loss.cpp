#include "mentor/tailor/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mentor/common/error.hpp"

namespace mentor {
namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void check_dims(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw ContractError("cosine of mismatched or empty vectors");
}

// d cos(a, b) / d a, accumulated with factor `scale`.
void add_cosine_grad(std::span<const double> a, std::span<const double> b, double scale,
                     std::vector<double>& da) {
  const double na = std::sqrt(dot(a, a));
  const double nb = std::sqrt(dot(b, b));
  const double c = dot(a, b) / (na * nb);
  for (std::size_t i = 0; i < a.size(); ++i) {
    da[i] += scale * (b[i] / (na * nb) - c * a[i] / (na * na));
  }
}

}  // namespace

void LossConfig::validate() const {
  if (!(rho > 0.0)) throw ConfigError("rho must be positive");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  if (!(demo_weight >= 0.0)) throw ConfigError("demo_weight must be non-negative");
}

void to_json(nlohmann::json& j, const LossConfig& c) {
  j = nlohmann::json{{"rho", c.rho}, {"lambda", c.lambda}, {"demo_weight", c.demo_weight}};
}

void from_json(const nlohmann::json& j, LossConfig& c) {
  c.rho = j.at("rho").get<double>();
  c.lambda = j.at("lambda").get<double>();
  c.demo_weight = j.at("demo_weight").get<double>();
}

double cosine(std::span<const double> a, std::span<const double> b) {
  check_dims(a, b);
  const double na = std::sqrt(dot(a, a));
  const double nb = std::sqrt(dot(b, b));
  if (na == 0.0 || nb == 0.0) throw NumericError("cosine of a zero-norm vector");
  return dot(a, b) / (na * nb);
}

double triplet_loss(std::span<const double> anchor, std::span<const double> positive,
                    std::span<const double> negative, double rho) {
  return std::max(0.0, rho - cosine(anchor, positive) + cosine(anchor, negative));
}

TripletGradient triplet_loss_grad(std::span<const double> anchor,
                                  std::span<const double> positive,
                                  std::span<const double> negative, double rho) {
  TripletGradient g;
  g.value = triplet_loss(anchor, positive, negative, rho);
  const std::size_t d = anchor.size();
  g.d_anchor.assign(d, 0.0);
  g.d_positive.assign(d, 0.0);
  g.d_negative.assign(d, 0.0);
  if (g.value <= 0.0) return g;
  add_cosine_grad(anchor, positive, -1.0, g.d_anchor);
  add_cosine_grad(anchor, negative, 1.0, g.d_anchor);
  add_cosine_grad(positive, anchor, -1.0, g.d_positive);
  add_cosine_grad(negative, anchor, 1.0, g.d_negative);
  return g;
}

std::vector<double> lm_weights(const TokenSequence& seq, double demo_weight) {
  std::vector<double> w(seq.size(), 0.0);
  for (std::size_t t = 1; t < seq.size(); ++t) {
    w[t] = seq.tags[t] == Segment::demo ? demo_weight : 1.0;
  }
  return w;
}

template <class T>
std::size_t LossGraph<T>::add_sequence(const TokenSequence& seq) {
  Node n;
  n.trace = engine_->forward(seq.ids);
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

template <class T>
std::vector<double> LossGraph<T>::representation(std::size_t node) const {
  const auto& tr = trace(node);
  if (tr.length < 1) throw ContractError("representation of an empty trace");
  const auto D = static_cast<std::size_t>(engine_->config().hidden_dim);
  const auto first = tr.hidden.begin() + static_cast<std::ptrdiff_t>((tr.length - 1) * D);
  return {first, first + static_cast<std::ptrdiff_t>(D)};
}

template <class T>
double& LossGraph<T>::output(std::size_t out) {
  if (outputs_.size() <= out) outputs_.resize(out + 1, 0.0);
  return outputs_[out];
}

template <class T>
double LossGraph<T>::add_lm_term(std::size_t node, std::span<const double> weights, double scale,
                                 std::size_t out) {
  Node& n = nodes_.at(node);
  const auto L = static_cast<std::size_t>(n.trace.length);
  if (L < 2) throw ContractError("LM loss needs at least 2 tokens");
  if (weights.size() != L) throw ContractError("LM weights do not match sequence length");
  double total_w = 0.0;
  for (std::size_t t = 1; t < L; ++t) total_w += weights[t];
  if (!(total_w > 0.0)) throw ContractError("LM loss weights are all zero");

  const auto V = static_cast<std::size_t>(engine_->config().vocab_size);
  if (n.dlogits.empty()) n.dlogits.assign(L * V, T(0));
  std::vector<double> p(V);
  double loss = 0.0;
  for (std::size_t t = 1; t < L; ++t) {
    if (weights[t] == 0.0) continue;
    const T* row = n.trace.logits.data() + (t - 1) * V;
    double maxv = -std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < V; ++v) maxv = std::max(maxv, static_cast<double>(row[v]));
    double sum = 0.0;
    for (std::size_t v = 0; v < V; ++v) sum += p[v] = std::exp(static_cast<double>(row[v]) - maxv);
    const auto target = static_cast<std::size_t>(n.trace.tokens[t]);
    loss += weights[t] * -(static_cast<double>(row[target]) - maxv - std::log(sum));
    const double g = scale * weights[t] / total_w;
    T* drow = n.dlogits.data() + (t - 1) * V;
    for (std::size_t v = 0; v < V; ++v) {
      drow[v] += static_cast<T>(g * (p[v] / sum - (v == target ? 1.0 : 0.0)));
    }
  }
  loss /= total_w;
  output(out) += scale * loss;
  return loss;
}

template <class T>
double LossGraph<T>::add_triplet_term(std::size_t anchor, std::size_t positive,
                                      std::size_t negative, double rho, double scale,
                                      std::size_t out) {
  const auto a = representation(anchor);
  const auto p = representation(positive);
  const auto n = representation(negative);
  const TripletGradient g = triplet_loss_grad(a, p, n, rho);
  const auto D = a.size();
  auto add = [&](std::size_t node, const std::vector<double>& d) {
    Node& nd = nodes_.at(node);
    const auto L = static_cast<std::size_t>(nd.trace.length);
    if (nd.dhidden.empty()) nd.dhidden.assign(L * D, T(0));
    T* row = nd.dhidden.data() + (L - 1) * D;
    for (std::size_t i = 0; i < D; ++i) row[i] += static_cast<T>(scale * d[i]);
  };
  add(anchor, g.d_anchor);
  add(positive, g.d_positive);
  add(negative, g.d_negative);
  output(out) += scale * g.value;
  return g.value;
}

template <class T>
void LossGraph<T>::add_constant(double value, std::size_t out) {
  output(out) += value;
}

template <class T>
double LossGraph<T>::value() const {
  if (outputs_.size() != 1) throw ContractError("loss graph does not have a scalar output");
  return outputs_[0];
}

template <class T>
void LossGraph<T>::backward(std::span<T> grads) const {
  value();
  for (const auto& n : nodes_) {
    if (n.dlogits.empty() && n.dhidden.empty()) continue;
    engine_->backward(n.trace, n.dlogits, n.dhidden, grads);
  }
}

template class LossGraph<float>;
template class LossGraph<double>;

template <class T>
Gradients gradients(const ModelState& model, const LossGraph<T>& graph) {
  if (graph.engine().layout().total() != model.layout.total() ||
      config_hash(graph.engine().config()) != config_hash(model.config)) {
    throw ContractError("loss graph was built for a different model");
  }
  std::vector<T> buf(model.layout.total(), T(0));
  graph.backward(buf);
  return Gradients{model.layout, std::vector<double>(buf.begin(), buf.end())};
}
template Gradients gradients(const ModelState&, const LossGraph<float>&);
template Gradients gradients(const ModelState&, const LossGraph<double>&);

template <class T>
LossGraph<T> joint_graph(const Engine<T>& engine, const TokenSequence& seq,
                         const std::optional<TripletPaths>& triplet, const LossConfig& config) {
  LossGraph<T> graph(engine);
  const auto node = graph.add_sequence(seq);
  graph.add_lm_term(node, lm_weights(seq, config.demo_weight), 1.0);
  if (triplet && config.lambda != 0.0) {
    const auto a = graph.add_sequence(triplet->anchor);
    const auto p = triplet->positive.ids == triplet->anchor.ids ? a : graph.add_sequence(triplet->positive);
    const auto n = graph.add_sequence(triplet->negative);
    graph.add_triplet_term(a, p, n, config.rho, config.lambda);
  }
  return graph;
}
template LossGraph<float> joint_graph(const Engine<float>&, const TokenSequence&,
                                      const std::optional<TripletPaths>&, const LossConfig&);
template LossGraph<double> joint_graph(const Engine<double>&, const TokenSequence&,
                                       const std::optional<TripletPaths>&, const LossConfig&);

double lm_loss(const ModelState& model, const TokenSequence& seq, double demo_weight) {
  Engine<double> engine(model);
  LossGraph<double> graph(engine);
  const auto node = graph.add_sequence(seq);
  return graph.add_lm_term(node, lm_weights(seq, demo_weight), 1.0);
}

double joint_loss(const ModelState& model, const TokenSequence& seq,
                  const std::optional<TripletPaths>& triplet, const LossConfig& config) {
  config.validate();
  Engine<double> engine(model);
  return joint_graph(engine, seq, triplet, config).value();
}

}  // namespace mentor
