#include "mentor/tailor/train.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "mentor/common/error.hpp"
#include "mentor/common/io.hpp"
#include "mentor/corpus/cot.hpp"
#include "mentor/model/transformer.hpp"

namespace mentor {

TripletSampler::TripletSampler(const DatasetStore& store, std::optional<int> negative_round)
    : store_(&store) {
  for (std::size_t i = 0; i < store.train().size(); ++i) {
    positives_[store.train()[i].sample_id].push_back(i);
  }
  for (std::size_t i = 0; i < store.neg().size(); ++i) {
    const auto& r = store.neg()[i];
    if (!negative_round || r.round == *negative_round) negatives_[r.sample_id].push_back(i);
  }
}

TripletSampler::Draw TripletSampler::draw(std::size_t anchor, Rng& rng) const {
  const auto& id = store_->train().at(anchor).sample_id;
  Draw d;
  const auto& pos = positives_.at(id);
  d.positive = pos[rng.below(pos.size())];
  if (const auto it = negatives_.find(id); it != negatives_.end()) {
    d.negative = it->second[rng.below(it->second.size())];
  }
  return d;
}

namespace {

Rng anchor_rng(std::uint64_t seed, std::size_t anchor) {
  return Rng(derive_seed(seed, hash_string("triplet"), anchor));
}

TokenSequence path_of(const DatasetStore& store, const Tokenizer& tok, const RationaleRecord& r) {
  return encode_path(tok, store.sample(r.sample_id).question, r.text);
}

bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

template <class T>
TrainResult train_impl(ModelState& model, const DatasetStore& store, const Tokenizer& tok,
                       const TrainOptions& opt) {
  opt.loss.validate();
  opt.optimizer.validate();
  const auto& train = store.train();
  const int ctx = model.config.context_length;

  // Pre-encode every sequence once; anchors too long for the context are
  // left out of the epoch mix.
  std::vector<TokenSequence> lm_seqs(train.size()), pos_paths(train.size());
  std::vector<std::size_t> anchors;
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto& s = store.sample(train[i].sample_id);
    lm_seqs[i] = encode_cot(tok, opt.demos, s.question, train[i].text);
    pos_paths[i] = encode_path(tok, s.question, train[i].text);
    if (static_cast<int>(lm_seqs[i].size()) <= ctx) {
      anchors.push_back(i);
    } else {
      log_warn("train: skipping over-length sequence for " + train[i].sample_id);
    }
  }
  if (anchors.empty()) throw TrainingError("no trainable sequences in D_train");
  std::vector<TokenSequence> neg_paths(store.neg().size());
  for (std::size_t i = 0; i < store.neg().size(); ++i) {
    neg_paths[i] = path_of(store, tok, store.neg()[i]);
  }

  const bool reflect = opt.loss.lambda != 0.0;
  const TripletSampler sampler(store, opt.negative_round);
  std::vector<std::uint8_t> decay(model.layout.total(), 0);
  for (const auto& t : model.layout.tensors()) {
    if (t.decay) std::fill_n(decay.begin() + static_cast<std::ptrdiff_t>(t.offset), t.size, 1);
  }

  AdamW adam(model.layout.total(), opt.optimizer);
  const auto B = static_cast<std::size_t>(opt.optimizer.batch_size);
  const auto P = model.layout.total();
  std::vector<std::vector<T>> buffers(B, std::vector<T>(P));
  std::vector<double> grads(P);
  TrainResult result;
  Rng shuffle_rng(derive_seed(opt.seed, hash_string("shuffle")));
  std::uint64_t step = 0;
  double epoch_lm = 0.0;

  for (int epoch = 0; epoch < opt.optimizer.epochs; ++epoch) {
    std::vector<std::size_t> order = anchors;
    shuffle_rng.shuffle(std::span(order));
    epoch_lm = 0.0;
    std::size_t epoch_steps = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += B) {
      ++step;
      const std::size_t n = std::min(B, order.size() - begin);
      const std::uint64_t step_seed = derive_seed(opt.seed, hash_string("step"), step);
      std::vector<TripletSampler::Draw> draws(n);
      std::size_t valid = 0;
      if (reflect) {
        for (std::size_t i = 0; i < n; ++i) {
          auto rng = anchor_rng(step_seed, order[begin + i]);
          draws[i] = sampler.draw(order[begin + i], rng);
          valid += draws[i].negative.has_value();
        }
      }

      const Engine<T> engine(model);
      std::vector<double> lm(n, 0.0), cl(n, 0.0);
#pragma omp parallel for schedule(dynamic, 1)
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t a = order[begin + i];
        LossGraph<T> graph(engine);
        const auto node = graph.add_sequence(lm_seqs[a]);
        lm[i] = graph.add_lm_term(node, lm_weights(lm_seqs[a], opt.loss.demo_weight),
                                  1.0 / static_cast<double>(n));
        if (reflect && draws[i].negative) {
          const auto an = graph.add_sequence(pos_paths[a]);
          const auto pn = draws[i].positive == a ? an : graph.add_sequence(pos_paths[draws[i].positive]);
          const auto nn = graph.add_sequence(neg_paths[*draws[i].negative]);
          cl[i] = graph.add_triplet_term(an, pn, nn, opt.loss.rho,
                                         opt.loss.lambda / static_cast<double>(valid));
        }
        std::fill(buffers[i].begin(), buffers[i].end(), T(0));
        graph.backward(buffers[i]);
      }

      // Fixed-order reduction keeps updates independent of thread count.
      std::fill(grads.begin(), grads.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < P; ++k) grads[k] += static_cast<double>(buffers[i][k]);
      }
      StepRecord rec;
      rec.step = step;
      rec.lm = std::accumulate(lm.begin(), lm.end(), 0.0) / static_cast<double>(n);
      rec.cl = valid == 0 ? std::numeric_limits<double>::quiet_NaN()
                          : std::accumulate(cl.begin(), cl.end(), 0.0) / static_cast<double>(valid);
      rec.triplets = valid;
      if (!std::isfinite(rec.lm) || (valid > 0 && !std::isfinite(rec.cl)) || !all_finite(grads)) {
        throw TrainingError("non-finite loss or gradient at step " + std::to_string(step) +
                            " (L_lm=" + std::to_string(rec.lm) + ")");
      }
      if (opt.optimizer.max_grad_norm > 0.0) {
        double sq = 0.0;
        for (double g : grads) sq += g * g;
        const double norm = std::sqrt(sq);
        if (norm > opt.optimizer.max_grad_norm) {
          const double s = opt.optimizer.max_grad_norm / norm;
          for (double& g : grads) g *= s;
        }
      }
      rec.lr = warmup_lr(opt.learning_rate, step, opt.optimizer.warmup_steps);
      adam.step(model.values, grads, rec.lr, decay);
      ++model.step_count;
      epoch_lm += rec.lm;
      ++epoch_steps;
      result.curve.push_back(rec);
    }
    epoch_lm /= static_cast<double>(epoch_steps);
  }
  result.final_lm = epoch_lm;
  return result;
}

}  // namespace

TripletBatch build_triplets(const DatasetStore& store, const Tokenizer& tok,
                            std::span<const std::size_t> anchors, std::uint64_t seed,
                            std::optional<int> negative_round) {
  const TripletSampler sampler(store, negative_round);
  TripletBatch batch;
  for (std::size_t a : anchors) {
    auto rng = anchor_rng(seed, a);
    const auto d = sampler.draw(a, rng);
    batch.anchors.push_back(path_of(store, tok, store.train()[a]));
    batch.positives.push_back(path_of(store, tok, store.train()[d.positive]));
    batch.positive_index.push_back(d.positive);
    batch.skip_mask.push_back(!d.negative.has_value());
    if (d.negative) {
      batch.negatives.push_back(path_of(store, tok, store.neg()[*d.negative]));
      batch.negative_index.push_back(*d.negative);
    } else {
      batch.negatives.emplace_back();
      batch.negative_index.push_back(0);
    }
  }
  return batch;
}

TrainResult train(ModelState& model, const DatasetStore& store, const Tokenizer& tok,
                  const TrainOptions& options) {
  if (tok.size() != model.config.vocab_size) throw ConfigError("tokenizer does not match model vocabulary");
  if (options.precision == Precision::f32) return train_impl<float>(model, store, tok, options);
  return train_impl<double>(model, store, tok, options);
}

void write_losses_csv(const fs::path& path, std::span<const StepRecord> curve) {
  std::string out = "step,L_lm,L_cl,effective_lr\n";
  char line[160];
  for (const auto& r : curve) {
    std::snprintf(line, sizeof line, "%llu,%.17g,%.17g,%.17g\n",
                  static_cast<unsigned long long>(r.step), r.lm, r.cl, r.lr);
    out += line;
  }
  write_file(path, out);
}

std::vector<StepRecord> read_losses_csv(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::getline(in, line);
  std::vector<StepRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    StepRecord r;
    unsigned long long step = 0;
    char cl[64];
    if (std::sscanf(line.c_str(), "%llu,%lf,%63[^,],%lf", &step, &r.lm, cl, &r.lr) != 4) {
      throw ParseError(path.string() + ": malformed losses row '" + line + "'");
    }
    r.step = step;
    r.cl = std::strtod(cl, nullptr);
    out.push_back(r);
  }
  return out;
}

}  // namespace mentor
