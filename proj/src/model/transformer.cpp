#include "mentor/model/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mentor/common/error.hpp"

namespace mentor {
namespace {

using kernels::KernelMode;

// Kernel dispatch on the engine's mode.
#define MENTOR_KERNEL(mode, name, ...)                  \
  do {                                                  \
    if ((mode) == KernelMode::reference) {              \
      kernels::reference::name(__VA_ARGS__);            \
    } else {                                            \
      kernels::parallel::name(__VA_ARGS__);             \
    }                                                   \
  } while (false)

template <class T>
std::size_t sz(T v) {
  return static_cast<std::size_t>(v);
}

}  // namespace

template <class T>
Engine<T>::Engine(const ModelState& state, KernelMode mode)
    : config_(state.config), layout_(state.layout), mode_(mode) {
  params_.assign(state.values.begin(), state.values.end());
}

template <class T>
void Engine<T>::check_tokens(std::span<const int> tokens) const {
  if (tokens.size() > sz(config_.context_length)) {
    throw LengthError("sequence of " + std::to_string(tokens.size()) +
                      " tokens exceeds context_length " + std::to_string(config_.context_length));
  }
  for (int id : tokens) {
    if (id < 0 || id >= config_.vocab_size) {
      throw ContractError("token id " + std::to_string(id) + " outside vocabulary");
    }
  }
}

template <class T>
Trace<T> Engine<T>::forward(std::span<const int> tokens) const {
  check_tokens(tokens);
  const int L = static_cast<int>(tokens.size());
  const int D = config_.hidden_dim;
  const int V = config_.vocab_size;
  const int M = config_.mlp_dim();
  const int H = config_.num_heads;
  const T* p = params_.data();

  Trace<T> tr;
  tr.tokens.assign(tokens.begin(), tokens.end());
  tr.length = L;
  std::vector<T> x(sz(L) * D);
  for (int t = 0; t < L; ++t) {
    const T* te = p + layout_.wte + sz(tokens[sz(t)]) * D;
    const T* pe = p + layout_.wpe + sz(t) * D;
    for (int i = 0; i < D; ++i) x[sz(t) * D + i] = te[i] + pe[i];
  }

  tr.layers.resize(sz(config_.num_layers));
  for (int l = 0; l < config_.num_layers; ++l) {
    const LayerOffsets& o = layout_.layers[sz(l)];
    LayerActivations<T>& a = tr.layers[sz(l)];
    a.input = x;
    a.ln1.resize(sz(L) * D);
    a.ln1_mean.resize(sz(L));
    a.ln1_rstd.resize(sz(L));
    a.qkv.resize(sz(L) * 3 * D);
    a.att.resize(sz(H) * L * L);
    a.atty.resize(sz(L) * D);
    a.mid.resize(sz(L) * D);
    a.ln2.resize(sz(L) * D);
    a.ln2_mean.resize(sz(L));
    a.ln2_rstd.resize(sz(L));
    a.fch.resize(sz(L) * M);
    a.fch_gelu.resize(sz(L) * M);

    MENTOR_KERNEL(mode_, layernorm_forward, a.ln1.data(), a.ln1_mean.data(), a.ln1_rstd.data(),
                  a.input.data(), p + o.ln1_g, p + o.ln1_b, L, D);
    MENTOR_KERNEL(mode_, matmul_forward, a.qkv.data(), a.ln1.data(), p + o.qkv_w, p + o.qkv_b, L,
                  D, 3 * D);
    MENTOR_KERNEL(mode_, attention_forward, a.atty.data(), a.att.data(), a.qkv.data(), L, D, H);
    MENTOR_KERNEL(mode_, matmul_forward, a.mid.data(), a.atty.data(), p + o.attn_proj_w,
                  p + o.attn_proj_b, L, D, D);
    for (std::size_t i = 0; i < a.mid.size(); ++i) a.mid[i] += a.input[i];
    MENTOR_KERNEL(mode_, layernorm_forward, a.ln2.data(), a.ln2_mean.data(), a.ln2_rstd.data(),
                  a.mid.data(), p + o.ln2_g, p + o.ln2_b, L, D);
    MENTOR_KERNEL(mode_, matmul_forward, a.fch.data(), a.ln2.data(), p + o.fc_w, p + o.fc_b, L, D,
                  M);
    MENTOR_KERNEL(mode_, gelu_forward, a.fch_gelu.data(), a.fch.data(), a.fch.size());
    MENTOR_KERNEL(mode_, matmul_forward, x.data(), a.fch_gelu.data(), p + o.mlp_proj_w,
                  p + o.mlp_proj_b, L, M, D);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += a.mid[i];
  }

  tr.residual = std::move(x);
  tr.hidden.resize(sz(L) * D);
  tr.lnf_mean.resize(sz(L));
  tr.lnf_rstd.resize(sz(L));
  tr.logits.resize(sz(L) * V);
  MENTOR_KERNEL(mode_, layernorm_forward, tr.hidden.data(), tr.lnf_mean.data(),
                tr.lnf_rstd.data(), tr.residual.data(), p + layout_.lnf_g, p + layout_.lnf_b, L,
                D);
  MENTOR_KERNEL(mode_, matmul_forward, tr.logits.data(), tr.hidden.data(), p + layout_.head_w,
                p + layout_.head_b, L, D, V);
  return tr;
}

template <class T>
void Engine<T>::backward(const Trace<T>& tr, std::span<const T> dlogits,
                         std::span<const T> dhidden, std::span<T> grads) const {
  const int L = tr.length;
  const int D = config_.hidden_dim;
  const int V = config_.vocab_size;
  const int M = config_.mlp_dim();
  const int H = config_.num_heads;
  if (grads.size() != params_.size()) throw ContractError("gradient buffer has wrong size");
  if (!dlogits.empty() && dlogits.size() != sz(L) * V) throw ContractError("dlogits shape");
  if (!dhidden.empty() && dhidden.size() != sz(L) * D) throw ContractError("dhidden shape");
  const T* p = params_.data();
  T* g = grads.data();

  std::vector<T> dh(sz(L) * D, T(0));
  if (!dhidden.empty()) std::copy(dhidden.begin(), dhidden.end(), dh.begin());
  if (!dlogits.empty()) {
    MENTOR_KERNEL(mode_, matmul_backward, dh.data(), g + layout_.head_w, g + layout_.head_b,
                  dlogits.data(), tr.hidden.data(), p + layout_.head_w, L, D, V);
  }
  std::vector<T> dx(sz(L) * D, T(0));
  MENTOR_KERNEL(mode_, layernorm_backward, dx.data(), g + layout_.lnf_g, g + layout_.lnf_b,
                dh.data(), tr.residual.data(), p + layout_.lnf_g, tr.lnf_mean.data(),
                tr.lnf_rstd.data(), L, D);

  std::vector<T> dfch_gelu(sz(L) * M), dfch(sz(L) * M), dln(sz(L) * D), datty(sz(L) * D),
      dqkv(sz(L) * 3 * D);
  for (int l = config_.num_layers - 1; l >= 0; --l) {
    const LayerOffsets& o = layout_.layers[sz(l)];
    const LayerActivations<T>& a = tr.layers[sz(l)];

    // dx is the gradient w.r.t. the block output; it also flows straight
    // through both residual connections.
    std::vector<T> dmid = dx;
    std::fill(dfch_gelu.begin(), dfch_gelu.end(), T(0));
    MENTOR_KERNEL(mode_, matmul_backward, dfch_gelu.data(), g + o.mlp_proj_w, g + o.mlp_proj_b,
                  dx.data(), a.fch_gelu.data(), p + o.mlp_proj_w, L, M, D);
    std::fill(dfch.begin(), dfch.end(), T(0));
    MENTOR_KERNEL(mode_, gelu_backward, dfch.data(), a.fch.data(), dfch_gelu.data(), dfch.size());
    std::fill(dln.begin(), dln.end(), T(0));
    MENTOR_KERNEL(mode_, matmul_backward, dln.data(), g + o.fc_w, g + o.fc_b, dfch.data(),
                  a.ln2.data(), p + o.fc_w, L, D, M);
    MENTOR_KERNEL(mode_, layernorm_backward, dmid.data(), g + o.ln2_g, g + o.ln2_b, dln.data(),
                  a.mid.data(), p + o.ln2_g, a.ln2_mean.data(), a.ln2_rstd.data(), L, D);

    dx = dmid;
    std::fill(datty.begin(), datty.end(), T(0));
    MENTOR_KERNEL(mode_, matmul_backward, datty.data(), g + o.attn_proj_w, g + o.attn_proj_b,
                  dmid.data(), a.atty.data(), p + o.attn_proj_w, L, D, D);
    std::fill(dqkv.begin(), dqkv.end(), T(0));
    MENTOR_KERNEL(mode_, attention_backward, dqkv.data(), datty.data(), a.qkv.data(),
                  a.att.data(), L, D, H);
    std::fill(dln.begin(), dln.end(), T(0));
    MENTOR_KERNEL(mode_, matmul_backward, dln.data(), g + o.qkv_w, g + o.qkv_b, dqkv.data(),
                  a.ln1.data(), p + o.qkv_w, L, D, 3 * D);
    MENTOR_KERNEL(mode_, layernorm_backward, dx.data(), g + o.ln1_g, g + o.ln1_b, dln.data(),
                  a.input.data(), p + o.ln1_g, a.ln1_mean.data(), a.ln1_rstd.data(), L, D);
  }

  for (int t = 0; t < L; ++t) {
    T* dte = g + layout_.wte + sz(tr.tokens[sz(t)]) * D;
    T* dpe = g + layout_.wpe + sz(t) * D;
    for (int i = 0; i < D; ++i) {
      dte[i] += dx[sz(t) * D + i];
      dpe[i] += dx[sz(t) * D + i];
    }
  }
}

template <class T>
KVCache<T> Engine<T>::new_cache() const {
  KVCache<T> c;
  const std::size_t n = sz(config_.context_length) * config_.hidden_dim;
  c.keys.assign(sz(config_.num_layers), std::vector<T>(n));
  c.values.assign(sz(config_.num_layers), std::vector<T>(n));
  return c;
}

template <class T>
void Engine<T>::step(KVCache<T>& cache, int token, std::span<T> logits) const {
  if (cache.length >= config_.context_length) {
    throw LengthError("KV cache full at context_length " + std::to_string(config_.context_length));
  }
  if (token < 0 || token >= config_.vocab_size) {
    throw ContractError("token id " + std::to_string(token) + " outside vocabulary");
  }
  const int D = config_.hidden_dim;
  const int M = config_.mlp_dim();
  const int H = config_.num_heads;
  const int hs = D / H;
  const int pos = cache.length;
  const T* p = params_.data();
  const T scale = T(1) / std::sqrt(static_cast<T>(hs));

  std::vector<T> x(sz(D)), ln(sz(D)), qkv(sz(3 * D)), atty(sz(D)), mid(sz(D)), fch(sz(M)),
      fg(sz(M)), scores(sz(pos + 1));
  T mean = 0, rstd = 0;
  for (int i = 0; i < D; ++i) x[sz(i)] = p[layout_.wte + sz(token) * D + i] + p[layout_.wpe + sz(pos) * D + i];

  for (int l = 0; l < config_.num_layers; ++l) {
    const LayerOffsets& o = layout_.layers[sz(l)];
    MENTOR_KERNEL(mode_, layernorm_forward, ln.data(), &mean, &rstd, x.data(), p + o.ln1_g,
                  p + o.ln1_b, 1, D);
    MENTOR_KERNEL(mode_, matmul_forward, qkv.data(), ln.data(), p + o.qkv_w, p + o.qkv_b, 1, D,
                  3 * D);
    T* kc = cache.keys[sz(l)].data();
    T* vc = cache.values[sz(l)].data();
    std::copy(qkv.begin() + D, qkv.begin() + 2 * D, kc + sz(pos) * D);
    std::copy(qkv.begin() + 2 * D, qkv.end(), vc + sz(pos) * D);
    for (int h = 0; h < H; ++h) {
      const T* q = qkv.data() + h * hs;
      T maxv = -std::numeric_limits<T>::infinity();
      for (int u = 0; u <= pos; ++u) {
        const T* k = kc + sz(u) * D + h * hs;
        T s = 0;
        for (int i = 0; i < hs; ++i) s += q[i] * k[i];
        scores[sz(u)] = s * scale;
        maxv = std::max(maxv, scores[sz(u)]);
      }
      T sum = 0;
      for (int u = 0; u <= pos; ++u) {
        scores[sz(u)] = std::exp(scores[sz(u)] - maxv);
        sum += scores[sz(u)];
      }
      T* y = atty.data() + h * hs;
      std::fill(y, y + hs, T(0));
      for (int u = 0; u <= pos; ++u) {
        const T w = scores[sz(u)] / sum;
        const T* v = vc + sz(u) * D + h * hs;
        for (int i = 0; i < hs; ++i) y[i] += w * v[i];
      }
    }
    MENTOR_KERNEL(mode_, matmul_forward, mid.data(), atty.data(), p + o.attn_proj_w,
                  p + o.attn_proj_b, 1, D, D);
    for (int i = 0; i < D; ++i) mid[sz(i)] += x[sz(i)];
    MENTOR_KERNEL(mode_, layernorm_forward, ln.data(), &mean, &rstd, mid.data(), p + o.ln2_g,
                  p + o.ln2_b, 1, D);
    MENTOR_KERNEL(mode_, matmul_forward, fch.data(), ln.data(), p + o.fc_w, p + o.fc_b, 1, D, M);
    MENTOR_KERNEL(mode_, gelu_forward, fg.data(), fch.data(), fch.size());
    MENTOR_KERNEL(mode_, matmul_forward, x.data(), fg.data(), p + o.mlp_proj_w, p + o.mlp_proj_b,
                  1, M, D);
    for (int i = 0; i < D; ++i) x[sz(i)] += mid[sz(i)];
  }
  cache.length = pos + 1;
  MENTOR_KERNEL(mode_, layernorm_forward, ln.data(), &mean, &rstd, x.data(), p + layout_.lnf_g,
                p + layout_.lnf_b, 1, D);
  if (logits.size() != sz(config_.vocab_size)) throw ContractError("logits buffer size");
  MENTOR_KERNEL(mode_, matmul_forward, logits.data(), ln.data(), p + layout_.head_w,
                p + layout_.head_b, 1, D, config_.vocab_size);
}

template class Engine<float>;
template class Engine<double>;

}  // namespace mentor
