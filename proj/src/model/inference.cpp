#include "mentor/model/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mentor/common/error.hpp"
#include "mentor/common/rng.hpp"

namespace mentor {

std::span<const double> ForwardOutput::logits_row(int t) const {
  return std::span<const double>(logits).subspan(static_cast<std::size_t>(t) * vocab_size,
                                                 static_cast<std::size_t>(vocab_size));
}

std::span<const double> ForwardOutput::hidden_row(int t) const {
  return std::span<const double>(hidden_states)
      .subspan(static_cast<std::size_t>(t) * hidden_dim, static_cast<std::size_t>(hidden_dim));
}

template <class T>
ForwardOutput to_output(const Trace<T>& trace, const ModelConfig& config) {
  ForwardOutput out;
  out.length = trace.length;
  out.vocab_size = config.vocab_size;
  out.hidden_dim = config.hidden_dim;
  out.logits.assign(trace.logits.begin(), trace.logits.end());
  out.hidden_states.assign(trace.hidden.begin(), trace.hidden.end());
  return out;
}
template ForwardOutput to_output(const Trace<float>&, const ModelConfig&);
template ForwardOutput to_output(const Trace<double>&, const ModelConfig&);

ForwardOutput forward(const ModelState& model, const TokenSequence& input) {
  Engine<double> engine(model);
  return to_output(engine.forward(input.ids), model.config);
}

std::vector<double> path_representation(const ForwardOutput& output) {
  if (output.length < 1) throw ContractError("path representation of an empty sequence");
  auto row = output.hidden_row(output.length - 1);
  return {row.begin(), row.end()};
}

namespace {

// log softmax(row)[target] computed stably in double.
template <class T>
double log_prob(std::span<const T> row, int target) {
  double maxv = -std::numeric_limits<double>::infinity();
  for (T v : row) maxv = std::max(maxv, static_cast<double>(v));
  double sum = 0.0;
  for (T v : row) sum += std::exp(static_cast<double>(v) - maxv);
  return static_cast<double>(row[static_cast<std::size_t>(target)]) - maxv - std::log(sum);
}

}  // namespace

template <class T>
LogLikelihood sequence_log_likelihood(const Engine<T>& engine, const TokenSequence& seq,
                                      const std::set<Segment>& scored) {
  if (seq.size() < 2) throw ContractError("log-likelihood needs at least 2 tokens");
  if (seq.tags.size() != seq.ids.size()) throw ContractError("tags and ids differ in length");
  const Trace<T> tr = engine.forward(seq.ids);
  const auto V = static_cast<std::size_t>(engine.config().vocab_size);
  LogLikelihood ll;
  for (std::size_t t = 1; t < seq.size(); ++t) {
    if (!scored.contains(seq.tags[t])) continue;
    std::span<const T> row(tr.logits.data() + (t - 1) * V, V);
    ll.total += log_prob(row, seq.ids[t]);
    ++ll.count;
  }
  if (ll.count == 0) throw ContractError("no scored positions in sequence");
  ll.mean = ll.total / static_cast<double>(ll.count);
  return ll;
}
template LogLikelihood sequence_log_likelihood(const Engine<float>&, const TokenSequence&,
                                               const std::set<Segment>&);
template LogLikelihood sequence_log_likelihood(const Engine<double>&, const TokenSequence&,
                                               const std::set<Segment>&);

LogLikelihood sequence_log_likelihood(const ModelState& model, const TokenSequence& seq,
                                      const std::set<Segment>& scored) {
  return sequence_log_likelihood(Engine<double>(model), seq, scored);
}

void GenerationConfig::validate() const {
  if (max_new_tokens < 1) throw ConfigError("max_new_tokens must be >= 1");
  if (mode == DecodeMode::greedy) return;
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (top_k && *top_k < 1) throw ConfigError("top_k must be positive");
  if (top_p && !(*top_p > 0.0 && *top_p <= 1.0)) throw ConfigError("top_p must be in (0, 1]");
  if (num_return_sequences < 1) throw ConfigError("num_return_sequences must be >= 1");
}

void to_json(nlohmann::json& j, const GenerationConfig& g) {
  j = nlohmann::json{{"mode", g.mode == DecodeMode::greedy ? "greedy" : "sample"},
                     {"temperature", g.temperature},
                     {"max_new_tokens", g.max_new_tokens},
                     {"num_return_sequences", g.num_return_sequences},
                     {"seed", g.seed}};
  j["top_k"] = g.top_k ? nlohmann::json(*g.top_k) : nlohmann::json(nullptr);
  j["top_p"] = g.top_p ? nlohmann::json(*g.top_p) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, GenerationConfig& g) {
  const auto mode = j.at("mode").get<std::string>();
  if (mode != "greedy" && mode != "sample") throw ConfigError("unknown decode mode " + mode);
  g.mode = mode == "greedy" ? DecodeMode::greedy : DecodeMode::sample;
  g.temperature = j.at("temperature").get<double>();
  g.max_new_tokens = j.at("max_new_tokens").get<int>();
  g.num_return_sequences = j.at("num_return_sequences").get<int>();
  g.seed = j.at("seed").get<std::uint64_t>();
  g.top_k = j.at("top_k").is_null() ? std::nullopt : std::optional<int>(j.at("top_k").get<int>());
  g.top_p = j.at("top_p").is_null() ? std::nullopt
                                    : std::optional<double>(j.at("top_p").get<double>());
}

int select_token(std::span<const double> logits, const GenerationConfig& gen, Rng& rng) {
  const std::size_t V = logits.size();
  if (gen.mode == DecodeMode::greedy) {
    return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  }
  // Candidates ordered by (logit desc, id asc) so truncation is deterministic.
  std::vector<int> order(V);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return logits[static_cast<std::size_t>(a)] > logits[static_cast<std::size_t>(b)];
  });
  std::size_t keep = V;
  if (gen.top_k) keep = std::min(keep, static_cast<std::size_t>(*gen.top_k));
  std::vector<double> probs(keep);
  const double maxv = logits[static_cast<std::size_t>(order[0])] / gen.temperature;
  double sum = 0.0;
  for (std::size_t i = 0; i < keep; ++i) {
    probs[i] = std::exp(logits[static_cast<std::size_t>(order[i])] / gen.temperature - maxv);
    sum += probs[i];
  }
  for (auto& p : probs) p /= sum;
  if (gen.top_p && *gen.top_p < 1.0) {
    double cum = 0.0;
    std::size_t n = 0;
    while (n < keep) {
      cum += probs[n++];
      if (cum >= *gen.top_p) break;
    }
    keep = n;
    probs.resize(keep);
    sum = std::accumulate(probs.begin(), probs.end(), 0.0);
    for (auto& p : probs) p /= sum;
  }
  const double u = rng.uniform();
  double cum = 0.0;
  for (std::size_t i = 0; i < keep; ++i) {
    cum += probs[i];
    if (u < cum) return order[i];
  }
  return order[keep - 1];
}

template <class T>
std::vector<TokenSequence> generate(const Engine<T>& engine, const TokenSequence& prompt,
                                    const GenerationConfig& gen, std::optional<int> eos) {
  gen.validate();
  if (prompt.empty()) throw ContractError("generation needs a non-empty prompt");
  const int ctx = engine.config().context_length;
  if (static_cast<int>(prompt.size()) > ctx) {
    throw LengthError("prompt of " + std::to_string(prompt.size()) +
                      " tokens exceeds context_length " + std::to_string(ctx));
  }
  const auto V = static_cast<std::size_t>(engine.config().vocab_size);
  KVCache<T> prefix = engine.new_cache();
  std::vector<T> row(V);
  for (int id : prompt.ids) engine.step(prefix, id, row);
  const std::vector<T> prefix_logits = row;

  const int returns = gen.mode == DecodeMode::greedy ? 1 : gen.num_return_sequences;
  std::vector<TokenSequence> outputs;
  outputs.reserve(static_cast<std::size_t>(returns));
  std::vector<double> logits(V);
  for (int r = 0; r < returns; ++r) {
    Rng rng(derive_seed(gen.seed, static_cast<std::uint64_t>(r)));
    KVCache<T> cache = returns == 1 ? std::move(prefix) : prefix;
    std::vector<T> cur = prefix_logits;
    TokenSequence out = prompt;
    for (int n = 0; n < gen.max_new_tokens; ++n) {
      std::copy(cur.begin(), cur.end(), logits.begin());
      const int next = select_token(logits, gen, rng);
      out.append(next, Segment::rationale);
      if (eos && next == *eos) break;
      if (static_cast<int>(out.size()) >= ctx) break;
      if (n + 1 < gen.max_new_tokens) engine.step(cache, next, cur);
    }
    outputs.push_back(std::move(out));
  }
  return outputs;
}
template std::vector<TokenSequence> generate(const Engine<float>&, const TokenSequence&,
                                             const GenerationConfig&, std::optional<int>);
template std::vector<TokenSequence> generate(const Engine<double>&, const TokenSequence&,
                                             const GenerationConfig&, std::optional<int>);

std::vector<TokenSequence> generate(const ModelState& model, const TokenSequence& prompt,
                                    const GenerationConfig& gen, std::optional<int> eos) {
  return generate(Engine<double>(model), prompt, gen, eos);
}

namespace {
std::variant<Engine<float>, Engine<double>> make_engine(const ModelState& m, Precision p) {
  if (p == Precision::f32) return Engine<float>(m);
  return Engine<double>(m);
}
}  // namespace

TransformerStudent::TransformerStudent(const ModelState& model, const Tokenizer& tokenizer,
                                       Precision precision)
    : tokenizer_(&tokenizer), engine_(make_engine(model, precision)) {
  if (tokenizer.size() != model.config.vocab_size) {
    throw ConfigError("tokenizer size " + std::to_string(tokenizer.size()) +
                      " does not match model vocab_size " +
                      std::to_string(model.config.vocab_size));
  }
}

std::vector<std::string> TransformerStudent::complete(std::string_view prompt,
                                                      const GenerationConfig& gen) const {
  TokenSequence seq;
  seq.append(tokenizer_->encode(prompt), Segment::question);
  const auto outs = std::visit([&](const auto& e) { return generate(e, seq, gen); }, engine_);
  std::vector<std::string> texts;
  texts.reserve(outs.size());
  for (const auto& o : outs) {
    std::span<const int> added(o.ids.data() + seq.size(), o.size() - seq.size());
    texts.push_back(tokenizer_->decode(added));
  }
  return texts;
}

}  // namespace mentor
