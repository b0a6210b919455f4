// Dense kernels for the micro transformer, batch size 1, row-major.
//
// Two implementations with identical signatures:
//   reference::  plain loops, the ground truth for tests
//   parallel::   OpenMP over independent rows/heads, multi-accumulator dots
//
// Weight matrices are stored [in, out], so y = x W + b. Backward kernels
// accumulate (+=) into their gradient outputs.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

namespace mentor::kernels {

template <class T>
inline constexpr T kGeluScale = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)

namespace reference {

template <class T>
void matmul_forward(T* out, const T* inp, const T* w, const T* bias, int rows, int in,
                    int out_dim) {
  for (int t = 0; t < rows; ++t) {
    for (int o = 0; o < out_dim; ++o) {
      T acc = bias ? bias[o] : T(0);
      for (int c = 0; c < in; ++c) acc += inp[t * in + c] * w[c * out_dim + o];
      out[t * out_dim + o] = acc;
    }
  }
}

template <class T>
void matmul_backward(T* dinp, T* dw, T* dbias, const T* dout, const T* inp, const T* w,
                     int rows, int in, int out_dim) {
  for (int t = 0; t < rows; ++t) {
    for (int c = 0; c < in; ++c) {
      T acc = 0;
      for (int o = 0; o < out_dim; ++o) acc += dout[t * out_dim + o] * w[c * out_dim + o];
      if (dinp) dinp[t * in + c] += acc;
      for (int o = 0; o < out_dim; ++o) dw[c * out_dim + o] += inp[t * in + c] * dout[t * out_dim + o];
    }
    if (dbias) {
      for (int o = 0; o < out_dim; ++o) dbias[o] += dout[t * out_dim + o];
    }
  }
}

template <class T>
void layernorm_forward(T* out, T* mean, T* rstd, const T* inp, const T* gain, const T* bias,
                       int rows, int dim) {
  constexpr T eps = static_cast<T>(1e-5);
  for (int t = 0; t < rows; ++t) {
    const T* x = inp + t * dim;
    T m = 0;
    for (int i = 0; i < dim; ++i) m += x[i];
    m /= dim;
    T v = 0;
    for (int i = 0; i < dim; ++i) v += (x[i] - m) * (x[i] - m);
    v /= dim;
    const T s = T(1) / std::sqrt(v + eps);
    for (int i = 0; i < dim; ++i) out[t * dim + i] = (x[i] - m) * s * gain[i] + bias[i];
    mean[t] = m;
    rstd[t] = s;
  }
}

template <class T>
void layernorm_backward(T* dinp, T* dgain, T* dbias, const T* dout, const T* inp,
                        const T* gain, const T* mean, const T* rstd, int rows, int dim) {
  for (int t = 0; t < rows; ++t) {
    const T* dy = dout + t * dim;
    const T* x = inp + t * dim;
    T dnorm_mean = 0;
    T dnorm_norm_mean = 0;
    for (int i = 0; i < dim; ++i) {
      const T norm = (x[i] - mean[t]) * rstd[t];
      const T dnorm = gain[i] * dy[i];
      dnorm_mean += dnorm;
      dnorm_norm_mean += dnorm * norm;
    }
    dnorm_mean /= dim;
    dnorm_norm_mean /= dim;
    for (int i = 0; i < dim; ++i) {
      const T norm = (x[i] - mean[t]) * rstd[t];
      const T dnorm = gain[i] * dy[i];
      dbias[i] += dy[i];
      dgain[i] += norm * dy[i];
      dinp[t * dim + i] += (dnorm - dnorm_mean - norm * dnorm_norm_mean) * rstd[t];
    }
  }
}

// qkv is [rows, 3*dim] laid out as (q | k | v); att is [heads, rows, rows].
template <class T>
void attention_forward(T* out, T* att, const T* qkv, int rows, int dim, int heads) {
  const int hs = dim / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(hs));
  const int stride = 3 * dim;
  for (int h = 0; h < heads; ++h) {
    for (int t = 0; t < rows; ++t) {
      const T* q = qkv + t * stride + h * hs;
      T* a = att + (static_cast<std::size_t>(h) * rows + t) * rows;
      T maxv = -std::numeric_limits<T>::infinity();
      for (int u = 0; u <= t; ++u) {
        const T* k = qkv + u * stride + dim + h * hs;
        T s = 0;
        for (int i = 0; i < hs; ++i) s += q[i] * k[i];
        s *= scale;
        a[u] = s;
        maxv = std::max(maxv, s);
      }
      T sum = 0;
      for (int u = 0; u <= t; ++u) {
        a[u] = std::exp(a[u] - maxv);
        sum += a[u];
      }
      for (int u = 0; u <= t; ++u) a[u] /= sum;
      for (int u = t + 1; u < rows; ++u) a[u] = 0;
      T* y = out + t * dim + h * hs;
      for (int i = 0; i < hs; ++i) y[i] = 0;
      for (int u = 0; u <= t; ++u) {
        const T* v = qkv + u * stride + 2 * dim + h * hs;
        for (int i = 0; i < hs; ++i) y[i] += a[u] * v[i];
      }
    }
  }
}

template <class T>
void attention_backward(T* dqkv, const T* dout, const T* qkv, const T* att, int rows, int dim,
                        int heads) {
  const int hs = dim / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(hs));
  const int stride = 3 * dim;
  std::vector<T> datt(static_cast<std::size_t>(rows));
  for (int h = 0; h < heads; ++h) {
    for (int t = 0; t < rows; ++t) {
      const T* a = att + (static_cast<std::size_t>(h) * rows + t) * rows;
      const T* dy = dout + t * dim + h * hs;
      T dot = 0;
      for (int u = 0; u <= t; ++u) {
        const T* v = qkv + u * stride + 2 * dim + h * hs;
        T* dv = dqkv + u * stride + 2 * dim + h * hs;
        T d = 0;
        for (int i = 0; i < hs; ++i) {
          d += dy[i] * v[i];
          dv[i] += a[u] * dy[i];
        }
        datt[u] = d;
        dot += a[u] * d;
      }
      const T* q = qkv + t * stride + h * hs;
      T* dq = dqkv + t * stride + h * hs;
      for (int u = 0; u <= t; ++u) {
        const T dpre = a[u] * (datt[u] - dot) * scale;
        const T* k = qkv + u * stride + dim + h * hs;
        T* dk = dqkv + u * stride + dim + h * hs;
        for (int i = 0; i < hs; ++i) {
          dq[i] += dpre * k[i];
          dk[i] += dpre * q[i];
        }
      }
    }
  }
}

template <class T>
void gelu_forward(T* out, const T* inp, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const T x = inp[i];
    out[i] = T(0.5) * x * (T(1) + std::tanh(kGeluScale<T> * (x + T(0.044715) * x * x * x)));
  }
}

template <class T>
void gelu_backward(T* dinp, const T* inp, const T* dout, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const T x = inp[i];
    const T u = kGeluScale<T> * (x + T(0.044715) * x * x * x);
    const T th = std::tanh(u);
    const T sech2 = T(1) - th * th;
    const T du = kGeluScale<T> * (T(1) + T(3) * T(0.044715) * x * x);
    dinp[i] += dout[i] * (T(0.5) * (T(1) + th) + T(0.5) * x * sech2 * du);
  }
}

}  // namespace reference

namespace parallel {

// Eight independent partial sums; the compiler vectorizes this without
// needing -ffast-math.
template <class T>
inline T dot(const T* a, const T* b, int n) {
  T acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  int i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
  }
  T s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

template <class T>
void matmul_forward(T* out, const T* inp, const T* w, const T* bias, int rows, int in,
                    int out_dim) {
#pragma omp parallel for schedule(static) if (rows > 4)
  for (int t = 0; t < rows; ++t) {
    T* y = out + static_cast<std::size_t>(t) * out_dim;
    if (bias) {
      for (int o = 0; o < out_dim; ++o) y[o] = bias[o];
    } else {
      for (int o = 0; o < out_dim; ++o) y[o] = 0;
    }
    const T* x = inp + static_cast<std::size_t>(t) * in;
    for (int c = 0; c < in; ++c) {
      const T xc = x[c];
      const T* wr = w + static_cast<std::size_t>(c) * out_dim;
      for (int o = 0; o < out_dim; ++o) y[o] += xc * wr[o];
    }
  }
}

template <class T>
void matmul_backward(T* dinp, T* dw, T* dbias, const T* dout, const T* inp, const T* w,
                     int rows, int in, int out_dim) {
  if (dinp) {
#pragma omp parallel for schedule(static) if (rows > 4)
    for (int t = 0; t < rows; ++t) {
      const T* dy = dout + static_cast<std::size_t>(t) * out_dim;
      for (int c = 0; c < in; ++c) {
        dinp[static_cast<std::size_t>(t) * in + c] +=
            dot(dy, w + static_cast<std::size_t>(c) * out_dim, out_dim);
      }
    }
  }
#pragma omp parallel for schedule(static) if (in > 4)
  for (int c = 0; c < in; ++c) {
    T* dwr = dw + static_cast<std::size_t>(c) * out_dim;
    for (int t = 0; t < rows; ++t) {
      const T xc = inp[static_cast<std::size_t>(t) * in + c];
      if (xc == T(0)) continue;
      const T* dy = dout + static_cast<std::size_t>(t) * out_dim;
      for (int o = 0; o < out_dim; ++o) dwr[o] += xc * dy[o];
    }
  }
  if (dbias) {
    for (int t = 0; t < rows; ++t) {
      const T* dy = dout + static_cast<std::size_t>(t) * out_dim;
      for (int o = 0; o < out_dim; ++o) dbias[o] += dy[o];
    }
  }
}

template <class T>
void layernorm_forward(T* out, T* mean, T* rstd, const T* inp, const T* gain, const T* bias,
                       int rows, int dim) {
#pragma omp parallel for schedule(static) if (rows > 16)
  for (int t = 0; t < rows; ++t) {
    reference::layernorm_forward(out + static_cast<std::size_t>(t) * dim, mean + t, rstd + t,
                                 inp + static_cast<std::size_t>(t) * dim, gain, bias, 1, dim);
  }
}

template <class T>
void layernorm_backward(T* dinp, T* dgain, T* dbias, const T* dout, const T* inp,
                        const T* gain, const T* mean, const T* rstd, int rows, int dim) {
  // Parameter gradients are reductions over rows; keep them serial so the
  // summation order matches the reference.
  reference::layernorm_backward(dinp, dgain, dbias, dout, inp, gain, mean, rstd, rows, dim);
}

template <class T>
void attention_forward(T* out, T* att, const T* qkv, int rows, int dim, int heads) {
  const int hs = dim / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(hs));
  const int stride = 3 * dim;
#pragma omp parallel for collapse(2) schedule(static) if (rows > 8)
  for (int h = 0; h < heads; ++h) {
    for (int t = 0; t < rows; ++t) {
      const T* q = qkv + static_cast<std::size_t>(t) * stride + h * hs;
      T* a = att + (static_cast<std::size_t>(h) * rows + t) * rows;
      T maxv = -std::numeric_limits<T>::infinity();
      for (int u = 0; u <= t; ++u) {
        const T s = dot(q, qkv + static_cast<std::size_t>(u) * stride + dim + h * hs, hs) * scale;
        a[u] = s;
        maxv = std::max(maxv, s);
      }
      T sum = 0;
      for (int u = 0; u <= t; ++u) {
        a[u] = std::exp(a[u] - maxv);
        sum += a[u];
      }
      const T inv = T(1) / sum;
      for (int u = 0; u <= t; ++u) a[u] *= inv;
      for (int u = t + 1; u < rows; ++u) a[u] = 0;
      T* y = out + static_cast<std::size_t>(t) * dim + h * hs;
      for (int i = 0; i < hs; ++i) y[i] = 0;
      for (int u = 0; u <= t; ++u) {
        const T* v = qkv + static_cast<std::size_t>(u) * stride + 2 * dim + h * hs;
        const T au = a[u];
        for (int i = 0; i < hs; ++i) y[i] += au * v[i];
      }
    }
  }
}

template <class T>
void attention_backward(T* dqkv, const T* dout, const T* qkv, const T* att, int rows, int dim,
                        int heads) {
  // Heads write disjoint column ranges of dqkv.
#pragma omp parallel for schedule(static) if (rows > 8)
  for (int h = 0; h < heads; ++h) {
    const int hs = dim / heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(hs));
    const int stride = 3 * dim;
    std::vector<T> datt(static_cast<std::size_t>(rows));
    for (int t = 0; t < rows; ++t) {
      const T* a = att + (static_cast<std::size_t>(h) * rows + t) * rows;
      const T* dy = dout + static_cast<std::size_t>(t) * dim + h * hs;
      T s = 0;
      for (int u = 0; u <= t; ++u) {
        const std::size_t base = static_cast<std::size_t>(u) * stride + h * hs;
        const T* v = qkv + base + 2 * dim;
        T* dv = dqkv + base + 2 * dim;
        const T au = a[u];
        for (int i = 0; i < hs; ++i) dv[i] += au * dy[i];
        datt[u] = dot(dy, v, hs);
        s += au * datt[u];
      }
      const T* q = qkv + static_cast<std::size_t>(t) * stride + h * hs;
      T* dq = dqkv + static_cast<std::size_t>(t) * stride + h * hs;
      for (int u = 0; u <= t; ++u) {
        const T dpre = a[u] * (datt[u] - s) * scale;
        if (dpre == T(0)) continue;
        const std::size_t base = static_cast<std::size_t>(u) * stride + dim + h * hs;
        const T* k = qkv + base;
        T* dk = dqkv + base;
        for (int i = 0; i < hs; ++i) {
          dq[i] += dpre * k[i];
          dk[i] += dpre * q[i];
        }
      }
    }
  }
}

template <class T>
void gelu_forward(T* out, const T* inp, std::size_t n) {
#pragma omp parallel for schedule(static) if (n > 4096)
  for (std::size_t i = 0; i < n; ++i) {
    const T x = inp[i];
    out[i] = T(0.5) * x * (T(1) + std::tanh(kGeluScale<T> * (x + T(0.044715) * x * x * x)));
  }
}

template <class T>
void gelu_backward(T* dinp, const T* inp, const T* dout, std::size_t n) {
#pragma omp parallel for schedule(static) if (n > 4096)
  for (std::size_t i = 0; i < n; ++i) {
    reference::gelu_backward(dinp + i, inp + i, dout + i, 1);
  }
}

}  // namespace parallel

enum class KernelMode { reference, parallel };

}  // namespace mentor::kernels
