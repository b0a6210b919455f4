#pragma once

#include <span>
#include <vector>

#include "mentor/model/kernels.hpp"
#include "mentor/model/model.hpp"

namespace mentor {

template <class T>
struct LayerActivations {
  std::vector<T> input;  // residual stream entering the block
  std::vector<T> ln1, ln1_mean, ln1_rstd;
  std::vector<T> qkv;
  std::vector<T> att;  // [heads, L, L] softmax probabilities
  std::vector<T> atty;
  std::vector<T> mid;  // residual after attention
  std::vector<T> ln2, ln2_mean, ln2_rstd;
  std::vector<T> fch, fch_gelu;
};

// Activations kept from a forward pass for the matching backward pass.
template <class T>
struct Trace {
  std::vector<int> tokens;
  int length = 0;
  std::vector<LayerActivations<T>> layers;
  std::vector<T> residual;  // stream after the last block
  std::vector<T> hidden;    // final layernorm output, [L, D]
  std::vector<T> lnf_mean, lnf_rstd;
  std::vector<T> logits;  // [L, V]
};

template <class T>
struct KVCache {
  std::vector<std::vector<T>> keys, values;  // per layer, [context, D]
  int length = 0;
};

// Compute engine over a fixed copy of the parameters in precision T.
// Immutable after construction, so concurrent forward/step calls are safe.
template <class T>
class Engine {
 public:
  explicit Engine(const ModelState& state,
                  kernels::KernelMode mode = kernels::KernelMode::parallel);

  const ModelConfig& config() const { return config_; }
  const ParameterLayout& layout() const { return layout_; }
  std::span<const T> params() const { return params_; }

  // Throws LengthError past context_length and ContractError on a token
  // outside the vocabulary.
  Trace<T> forward(std::span<const int> tokens) const;

  // Accumulates parameter gradients into `grads` (layout order). Either
  // cotangent may be empty; otherwise dlogits is [L, V] and dhidden [L, D].
  void backward(const Trace<T>& trace, std::span<const T> dlogits, std::span<const T> dhidden,
                std::span<T> grads) const;

  KVCache<T> new_cache() const;
  // Appends one token and writes the next-token logits.
  void step(KVCache<T>& cache, int token, std::span<T> logits) const;

 private:
  void check_tokens(std::span<const int> tokens) const;

  ModelConfig config_;
  ParameterLayout layout_;
  std::vector<T> params_;
  kernels::KernelMode mode_;
};

extern template class Engine<float>;
extern template class Engine<double>;

}  // namespace mentor
