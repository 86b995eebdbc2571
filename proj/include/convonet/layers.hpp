#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "convonet/tensor.hpp"

namespace convonet {

enum class Activation { relu, identity };
enum class Mode { train, eval };

// F filters of spatial extent g x h spanning the full embedding depth z.
template <typename T>
struct Conv2DLayer {
  TensorT<T> kernels;  // rank-4, F x g x h x z
  TensorT<T> biases;   // rank-1, F

  std::size_t filters() const { return kernels.shape()[0]; }
  std::size_t kh() const { return kernels.shape()[1]; }
  std::size_t kw() const { return kernels.shape()[2]; }
  std::size_t depth() const { return kernels.shape()[3]; }
};

template <typename T>
struct DenseLayer {
  TensorT<T> weights;  // rank-2, u x r
  TensorT<T> biases;   // rank-1, r
  Activation activation = Activation::identity;

  std::size_t in_width() const { return weights.shape()[0]; }
  std::size_t out_width() const { return weights.shape()[1]; }
};

// Valid cross-correlation, stride 1, summing the g x h window over all z
// channels plus a per-filter bias. Output is (m-g+1) x (n-h+1) x F.
template <typename T>
TensorT<T> conv2d_forward(const Conv2DLayer<T>& layer,
                          const TensorT<T>& input) {
  if (input.rank() != 3)
    throw std::invalid_argument("conv2d: input must be rank-3 m x n x z");
  const std::size_t m = input.shape()[0], n = input.shape()[1],
                    z = input.shape()[2];
  const std::size_t F = layer.filters(), g = layer.kh(), h = layer.kw();
  if (layer.depth() != z)
    throw std::invalid_argument("conv2d: kernel depth " +
                                std::to_string(layer.depth()) +
                                " != input depth " + std::to_string(z));
  if (g > m || h > n)
    throw std::invalid_argument(
        "conv2d: kernel (" + std::to_string(g) + "," + std::to_string(h) +
        ") larger than input (" + std::to_string(m) + "," +
        std::to_string(n) + ")");
  const std::size_t p = m - g + 1, q = n - h + 1;
  TensorT<T> out({p, q, F}, T(0));
  for (std::size_t om = 0; om < p; ++om) {
    for (std::size_t on = 0; on < q; ++on) {
      for (std::size_t f = 0; f < F; ++f) {
        T acc = layer.biases[f];
        for (std::size_t gi = 0; gi < g; ++gi) {
          const T* in_row = input.data() + ((om + gi) * n + on) * z;
          const T* k_row = layer.kernels.data() + ((f * g + gi) * h) * z;
          for (std::size_t hi = 0; hi < h; ++hi)
            for (std::size_t k = 0; k < z; ++k)
              acc += in_row[hi * z + k] * k_row[hi * z + k];
        }
        out.at3(om, on, f) = acc;
      }
    }
  }
  ensure_finite(out, "conv2d_forward");
  return out;
}

template <typename T>
struct Conv2DGrads {
  TensorT<T> input;
  TensorT<T> kernels;
  TensorT<T> biases;
};

template <typename T>
Conv2DGrads<T> conv2d_backward(const Conv2DLayer<T>& layer,
                               const TensorT<T>& input,
                               const TensorT<T>& upstream) {
  const std::size_t m = input.shape()[0], n = input.shape()[1],
                    z = input.shape()[2];
  const std::size_t F = layer.filters(), g = layer.kh(), h = layer.kw();
  const std::size_t p = m - g + 1, q = n - h + 1;
  if (upstream.shape() != std::vector<std::size_t>{p, q, F})
    throw std::invalid_argument("conv2d_backward: upstream shape " +
                                shape_str(upstream.shape()) + " != " +
                                shape_str({p, q, F}));
  Conv2DGrads<T> grads{TensorT<T>({m, n, z}, T(0)),
                       TensorT<T>(layer.kernels.shape(), T(0)),
                       TensorT<T>({F}, T(0))};
  for (std::size_t om = 0; om < p; ++om) {
    for (std::size_t on = 0; on < q; ++on) {
      for (std::size_t f = 0; f < F; ++f) {
        const T u = upstream.at3(om, on, f);
        if (u == T(0)) continue;
        grads.biases[f] += u;
        for (std::size_t gi = 0; gi < g; ++gi) {
          const T* in_row = input.data() + ((om + gi) * n + on) * z;
          T* gin_row = grads.input.data() + ((om + gi) * n + on) * z;
          const T* k_row = layer.kernels.data() + ((f * g + gi) * h) * z;
          T* gk_row = grads.kernels.data() + ((f * g + gi) * h) * z;
          for (std::size_t hi = 0; hi < h; ++hi) {
            for (std::size_t k = 0; k < z; ++k) {
              gk_row[hi * z + k] += u * in_row[hi * z + k];
              gin_row[hi * z + k] += u * k_row[hi * z + k];
            }
          }
        }
      }
    }
  }
  return grads;
}

template <typename T>
TensorT<T> relu_forward(const TensorT<T>& x) {
  TensorT<T> out = x;
  for (T& v : out.vec())
    if (v < T(0)) v = T(0);
  return out;
}

// Subgradient at exactly 0 is 0.
template <typename T>
TensorT<T> relu_backward(const TensorT<T>& forward_input,
                         const TensorT<T>& upstream) {
  if (!forward_input.same_shape(upstream))
    throw std::invalid_argument("relu_backward: shape mismatch");
  TensorT<T> out = upstream;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (!(forward_input[i] > T(0))) out[i] = T(0);
  return out;
}

template <typename T>
struct PoolResult {
  TensorT<T> values;                // rank-1, F
  std::vector<std::size_t> argmax;  // flat spatial index per channel
};

// Per-channel max over all spatial positions; ties keep the lowest flat index.
template <typename T>
PoolResult<T> global_max_pool(const TensorT<T>& input) {
  if (input.rank() != 3)
    throw std::invalid_argument("global_max_pool: input must be rank-3");
  const std::size_t p = input.shape()[0], q = input.shape()[1],
                    F = input.shape()[2];
  PoolResult<T> res{TensorT<T>({F}, T(0)), std::vector<std::size_t>(F, 0)};
  for (std::size_t f = 0; f < F; ++f) {
    T best = input.at3(0, 0, f);
    std::size_t best_pos = 0;
    for (std::size_t pos = 1; pos < p * q; ++pos) {
      T v = input[pos * F + f];
      if (v > best) {
        best = v;
        best_pos = pos;
      }
    }
    res.values[f] = best;
    res.argmax[f] = best_pos;
  }
  return res;
}

// Routes each channel's upstream to the recorded argmax position.
template <typename T>
TensorT<T> global_max_pool_backward(const TensorT<T>& upstream,
                                    const std::vector<std::size_t>& argmax,
                                    std::size_t p, std::size_t q) {
  const std::size_t F = upstream.shape()[0];
  if (argmax.size() != F)
    throw std::invalid_argument("max_pool_backward: cache/upstream mismatch");
  TensorT<T> out({p, q, F}, T(0));
  for (std::size_t f = 0; f < F; ++f)
    out[argmax[f] * F + f] = upstream[f];
  return out;
}

template <typename T>
TensorT<T> concat(const std::vector<TensorT<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no parts");
  std::size_t total = 0;
  for (const auto& part : parts) {
    if (part.rank() != 1)
      throw std::invalid_argument("concat: parts must be rank-1");
    total += part.size();
  }
  TensorT<T> out({total}, T(0));
  std::size_t off = 0;
  for (const auto& part : parts) {
    for (std::size_t i = 0; i < part.size(); ++i) out[off + i] = part[i];
    off += part.size();
  }
  return out;
}

template <typename T>
std::vector<TensorT<T>> concat_backward(
    const TensorT<T>& upstream, const std::vector<std::size_t>& part_sizes) {
  std::vector<TensorT<T>> out;
  std::size_t off = 0;
  for (std::size_t sz : part_sizes) {
    TensorT<T> part({sz}, T(0));
    for (std::size_t i = 0; i < sz; ++i) part[i] = upstream[off + i];
    off += sz;
    out.push_back(std::move(part));
  }
  if (off != upstream.size())
    throw std::invalid_argument("concat_backward: size mismatch");
  return out;
}

// activation(W^T x + b); the pre-activation comes along for backward.
template <typename T>
struct DenseResult {
  TensorT<T> out;
  TensorT<T> preact;
};

template <typename T>
DenseResult<T> dense_forward(const DenseLayer<T>& layer, const TensorT<T>& x) {
  if (x.rank() != 1 || x.shape()[0] != layer.in_width())
    throw std::invalid_argument(
        "dense: input length " + shape_str(x.shape()) + " != weights " +
        shape_str(layer.weights.shape()));
  TensorT<T> pre = matvec(layer.weights, x);
  for (std::size_t j = 0; j < pre.size(); ++j) pre[j] += layer.biases[j];
  ensure_finite(pre, "dense_forward");
  TensorT<T> out =
      layer.activation == Activation::relu ? relu_forward(pre) : pre;
  return {std::move(out), std::move(pre)};
}

template <typename T>
struct DenseGrads {
  TensorT<T> input;
  TensorT<T> weights;
  TensorT<T> biases;
};

template <typename T>
DenseGrads<T> dense_backward(const DenseLayer<T>& layer, const TensorT<T>& x,
                             const TensorT<T>& preact,
                             const TensorT<T>& upstream) {
  const std::size_t u = layer.in_width(), r = layer.out_width();
  TensorT<T> dpre = upstream;
  if (layer.activation == Activation::relu)
    for (std::size_t j = 0; j < r; ++j)
      if (!(preact[j] > T(0))) dpre[j] = T(0);
  DenseGrads<T> grads{TensorT<T>({u}, T(0)), TensorT<T>({u, r}, T(0)),
                      dpre};
  for (std::size_t i = 0; i < u; ++i) {
    const T xi = x[i];
    const T* wrow = layer.weights.data() + i * r;
    T* gwrow = grads.weights.data() + i * r;
    T acc = T(0);
    for (std::size_t j = 0; j < r; ++j) {
      gwrow[j] = xi * dpre[j];
      acc += wrow[j] * dpre[j];
    }
    grads.input[i] = acc;
  }
  return grads;
}

template <typename T>
struct DropoutResult {
  TensorT<T> out;
  TensorT<T> mask;  // 0 for dropped units, 1/(1-rate) for survivors
};

// Inverted dropout: scaling at train time keeps inference a plain identity.
template <typename T>
DropoutResult<T> dropout(const TensorT<T>& x, double rate, Mode mode,
                         std::mt19937& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw std::invalid_argument("dropout: rate must lie in [0, 1)");
  DropoutResult<T> res{x, TensorT<T>(x.shape(), T(1))};
  if (mode == Mode::eval || rate == 0.0) return res;
  const T scale = T(1.0 / (1.0 - rate));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (unit(rng) < rate) {
      res.mask[i] = T(0);
      res.out[i] = T(0);
    } else {
      res.mask[i] = scale;
      res.out[i] = x[i] * scale;
    }
  }
  return res;
}

template <typename T>
TensorT<T> dropout_backward(const TensorT<T>& mask, const TensorT<T>& upstream) {
  return elementwise(upstream, mask, ElemOp::mul);
}

// One logit -> sigmoid; several -> softmax with max subtraction.
template <typename T>
TensorT<T> classify(const TensorT<T>& logits) {
  if (logits.rank() != 1 || logits.size() == 0)
    throw std::invalid_argument("classify: logits must be rank-1, non-empty");
  TensorT<T> out = logits;
  if (logits.size() == 1) {
    const T t = logits[0];
    out[0] = t >= T(0) ? T(1) / (T(1) + std::exp(-t))
                       : std::exp(t) / (T(1) + std::exp(t));
  } else {
    T mx = logits[0];
    for (std::size_t i = 1; i < logits.size(); ++i)
      mx = std::max(mx, logits[i]);
    T sum = T(0);
    for (std::size_t i = 0; i < logits.size(); ++i) {
      out[i] = std::exp(logits[i] - mx);
      sum += out[i];
    }
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] /= sum;
  }
  ensure_finite(out, "classify");
  return out;
}

}  // namespace convonet
