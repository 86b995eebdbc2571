#include <doctest.h>

#include <cmath>
#include <random>

#include "convonet/layers.hpp"

using namespace convonet;

namespace {

using T64 = TensorT<double>;

std::mt19937 g_rng(2024);

double uniform(double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(g_rng);
}

T64 random_tensor(std::vector<std::size_t> shape, double lo = -1.0,
                  double hi = 1.0) {
  T64 t(std::move(shape), 0.0);
  for (auto& v : t.vec()) v = uniform(lo, hi);
  return t;
}

// scalar objective: sum of weights * layer output
double weighted_sum(const T64& out, const T64& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * w[i];
  return s;
}

constexpr double kStep = 1e-5;
constexpr double kTol = 1e-6;

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

}  // namespace

TEST_CASE("conv2d forward examples") {
  SUBCASE("identity kernel passes input through") {
    Conv2DLayer<double> layer{T64({1, 1, 1, 1}, {1.0}), T64({1}, {0.0})};
    T64 input({2, 3, 1}, {1, 2, 3, 4, 5, 6});
    T64 out = conv2d_forward(layer, input);
    CHECK(out.shape() == std::vector<std::size_t>{2, 3, 1});
    for (std::size_t i = 0; i < 6; ++i) CHECK(out[i] == input[i]);
  }
  SUBCASE("1x2 ones kernel") {
    Conv2DLayer<double> layer{T64({1, 1, 2, 1}, {1.0, 1.0}), T64({1}, {0.0})};
    T64 input({2, 3, 1}, {1, 2, 3, 4, 5, 6});
    T64 out = conv2d_forward(layer, input);
    CHECK(out.shape() == std::vector<std::size_t>{2, 2, 1});
    CHECK(out.at3(0, 0, 0) == 3.0);
    CHECK(out.at3(0, 1, 0) == 5.0);
    CHECK(out.at3(1, 0, 0) == 9.0);
    CHECK(out.at3(1, 1, 0) == 11.0);
  }
  SUBCASE("2x2 ones kernel with bias") {
    Conv2DLayer<double> layer{T64({1, 2, 2, 1}, {1, 1, 1, 1}),
                              T64({1}, {1.0})};
    T64 input({2, 2, 1}, {1, 2, 3, 4});
    T64 out = conv2d_forward(layer, input);
    CHECK(out.shape() == std::vector<std::size_t>{1, 1, 1});
    CHECK(out[0] == 11.0);
  }
  SUBCASE("kernel larger than input names the extents") {
    Conv2DLayer<double> layer{T64({1, 3, 1, 1}, 0.0), T64({1}, 0.0)};
    T64 input({2, 2, 1}, 0.0);
    try {
      conv2d_forward(layer, input);
      FAIL("expected throw");
    } catch (const std::invalid_argument& e) {
      std::string msg = e.what();
      CHECK(msg.find("3") != std::string::npos);
      CHECK(msg.find("2") != std::string::npos);
    }
  }
}

TEST_CASE("conv2d backward examples") {
  Conv2DLayer<double> ones{T64({1, 1, 2, 1}, {1.0, 1.0}), T64({1}, {0.0})};
  T64 input({2, 3, 1}, {1, 2, 3, 4, 5, 6});

  SUBCASE("zero upstream, zero gradients") {
    Conv2DGrads<double> g = conv2d_backward(ones, input, T64({2, 2, 1}, 0.0));
    for (double v : g.input.vec()) CHECK(v == 0.0);
    for (double v : g.kernels.vec()) CHECK(v == 0.0);
    CHECK(g.biases[0] == 0.0);
  }
  SUBCASE("identity kernel routes upstream through") {
    Conv2DLayer<double> id{T64({1, 1, 1, 1}, {1.0}), T64({1}, {0.0})};
    T64 up = random_tensor({2, 3, 1});
    Conv2DGrads<double> g = conv2d_backward(id, input, up);
    for (std::size_t i = 0; i < up.size(); ++i) CHECK(g.input[i] == up[i]);
  }
  SUBCASE("ones upstream accumulates windows into the kernel grad") {
    Conv2DGrads<double> g = conv2d_backward(ones, input, T64({2, 2, 1}, 1.0));
    CHECK(g.kernels[0] == 12.0);  // 1+2+4+5
    CHECK(g.kernels[1] == 16.0);  // 2+3+5+6
    CHECK(g.biases[0] == 4.0);
  }
}

TEST_CASE("conv2d matches finite differences (randomized)") {
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t m = 2 + g_rng() % 3, n = 2 + g_rng() % 4;
    const std::size_t g = 1 + g_rng() % 2, h = 1 + g_rng() % 2;
    const std::size_t z = 1 + g_rng() % 3, F = 1 + g_rng() % 3;
    Conv2DLayer<double> layer{random_tensor({F, g, h, z}),
                              random_tensor({F})};
    T64 input = random_tensor({m, n, z});
    T64 w = random_tensor({m - g + 1, n - h + 1, F});

    Conv2DGrads<double> grads = conv2d_backward(layer, input, w);

    auto objective = [&] { return weighted_sum(conv2d_forward(layer, input), w); };
    // a handful of coordinates from each gradient
    for (int probe = 0; probe < 4; ++probe) {
      std::size_t ki = g_rng() % layer.kernels.size();
      double saved = layer.kernels[ki];
      layer.kernels[ki] = saved + kStep;
      double up = objective();
      layer.kernels[ki] = saved - kStep;
      double down = objective();
      layer.kernels[ki] = saved;
      CHECK(rel_err(grads.kernels[ki], (up - down) / (2 * kStep)) < kTol);

      std::size_t ii = g_rng() % input.size();
      saved = input[ii];
      input[ii] = saved + kStep;
      up = objective();
      input[ii] = saved - kStep;
      down = objective();
      input[ii] = saved;
      CHECK(rel_err(grads.input[ii], (up - down) / (2 * kStep)) < kTol);

      std::size_t bi = g_rng() % F;
      saved = layer.biases[bi];
      layer.biases[bi] = saved + kStep;
      up = objective();
      layer.biases[bi] = saved - kStep;
      down = objective();
      layer.biases[bi] = saved;
      CHECK(rel_err(grads.biases[bi], (up - down) / (2 * kStep)) < kTol);
    }
  }
}

TEST_CASE("conv output extent algebra") {
  for (std::size_t m = 1; m <= 5; ++m)
    for (std::size_t n = 1; n <= 5; ++n)
      for (std::size_t g = 1; g <= m; ++g)
        for (std::size_t h = 1; h <= n; ++h) {
          Conv2DLayer<double> layer{T64({1, g, h, 1}, 0.5), T64({1}, 0.0)};
          T64 out = conv2d_forward(layer, T64({m, n, 1}, 1.0));
          CHECK(out.shape()[0] == m - g + 1);
          CHECK(out.shape()[1] == n - h + 1);
        }
}

TEST_CASE("relu forward and backward") {
  T64 x({3}, {-1.0, 0.0, 2.0});
  T64 out = relu_forward(x);
  CHECK(out[0] == 0.0);
  CHECK(out[1] == 0.0);
  CHECK(out[2] == 2.0);

  T64 pos({3}, {0.5, 1.0, 7.0});
  T64 same = relu_forward(pos);
  for (std::size_t i = 0; i < 3; ++i) CHECK(same[i] == pos[i]);

  T64 neg({2}, {-3.0, -0.1});
  T64 clipped = relu_forward(neg);
  for (double v : clipped.vec()) CHECK(v == 0.0);

  T64 up({2}, {5.0, 5.0});
  T64 gate = relu_backward(T64({2}, {-1.0, 2.0}), up);
  CHECK(gate[0] == 0.0);
  CHECK(gate[1] == 5.0);
  // subgradient convention at the origin
  CHECK(relu_backward(T64({1}, {0.0}), T64({1}, {5.0}))[0] == 0.0);
}

TEST_CASE("relu matches finite differences away from the kink") {
  for (int trial = 0; trial < 25; ++trial) {
    T64 x = random_tensor({6});
    for (auto& v : x.vec())
      if (std::abs(v) < 1e-4) v = 0.3;  // stay off the kink
    T64 w = random_tensor({6});
    T64 analytic = relu_backward(x, w);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double saved = x[i];
      x[i] = saved + kStep;
      double up = weighted_sum(relu_forward(x), w);
      x[i] = saved - kStep;
      double down = weighted_sum(relu_forward(x), w);
      x[i] = saved;
      CHECK(rel_err(analytic[i], (up - down) / (2 * kStep)) < kTol);
    }
  }
}

TEST_CASE("global max pool") {
  SUBCASE("single position is identity per channel") {
    T64 x({1, 1, 3}, {4.0, -2.0, 0.5});
    PoolResult<double> r = global_max_pool(x);
    for (std::size_t f = 0; f < 3; ++f) {
      CHECK(r.values[f] == x[f]);
      CHECK(r.argmax[f] == 0);
    }
  }
  SUBCASE("argmax routing") {
    T64 x({2, 2, 1}, {1.0, 3.0, 2.0, 0.0});
    PoolResult<double> r = global_max_pool(x);
    CHECK(r.values[0] == 3.0);
    CHECK(r.argmax[0] == 1);  // position (0,1)
    T64 grad = global_max_pool_backward(T64({1}, {7.0}), r.argmax, 2, 2);
    CHECK(grad.at3(0, 1, 0) == 7.0);
    CHECK(grad.at3(0, 0, 0) == 0.0);
    CHECK(grad.at3(1, 0, 0) == 0.0);
    CHECK(grad.at3(1, 1, 0) == 0.0);
  }
  SUBCASE("ties break to the lowest flat index") {
    T64 x({2, 2, 1}, {5.0, 5.0, 5.0, 5.0});
    PoolResult<double> r = global_max_pool(x);
    CHECK(r.argmax[0] == 0);
    T64 grad = global_max_pool_backward(T64({1}, {1.0}), r.argmax, 2, 2);
    CHECK(grad.at3(0, 0, 0) == 1.0);
  }
  SUBCASE("backward is one-hot per channel") {
    for (int trial = 0; trial < 20; ++trial) {
      std::size_t p = 1 + g_rng() % 3, q = 1 + g_rng() % 3,
                  F = 1 + g_rng() % 4;
      T64 x = random_tensor({p, q, F});
      PoolResult<double> r = global_max_pool(x);
      T64 grad = global_max_pool_backward(random_tensor({F}), r.argmax, p, q);
      for (std::size_t f = 0; f < F; ++f) {
        std::size_t nonzero = 0;
        for (std::size_t pos = 0; pos < p * q; ++pos)
          if (grad[pos * F + f] != 0.0) ++nonzero;
        CHECK(nonzero <= 1);
      }
    }
  }
}

TEST_CASE("max pool matches finite differences with a clear margin") {
  for (int trial = 0; trial < 25; ++trial) {
    std::size_t p = 2 + g_rng() % 2, q = 2 + g_rng() % 2, F = 1 + g_rng() % 3;
    T64 x = random_tensor({p, q, F}, -1.0, 1.0);
    // enforce a unique max per channel
    for (std::size_t f = 0; f < F; ++f) x[(g_rng() % (p * q)) * F + f] += 3.0;
    T64 w = random_tensor({F});
    PoolResult<double> r = global_max_pool(x);
    T64 analytic = global_max_pool_backward(w, r.argmax, p, q);
    for (int probe = 0; probe < 6; ++probe) {
      std::size_t i = g_rng() % x.size();
      const double saved = x[i];
      x[i] = saved + kStep;
      double up = weighted_sum(global_max_pool(x).values, w);
      x[i] = saved - kStep;
      double down = weighted_sum(global_max_pool(x).values, w);
      x[i] = saved;
      CHECK(rel_err(analytic[i], (up - down) / (2 * kStep)) < kTol);
    }
  }
}

TEST_CASE("concat") {
  T64 a({2}, {1.0, 2.0}), b({1}, {3.0});
  T64 joined = concat<double>({a, b});
  CHECK(joined.shape() == std::vector<std::size_t>{3});
  CHECK(joined[0] == 1.0);
  CHECK(joined[2] == 3.0);

  T64 single = concat<double>({a});
  CHECK(single.size() == 2);
  CHECK(single[1] == 2.0);

  auto parts = concat_backward(T64({3}, 1.0), {2, 1});
  REQUIRE(parts.size() == 2);
  CHECK(parts[0].size() == 2);
  CHECK(parts[0][0] == 1.0);
  CHECK(parts[1][0] == 1.0);

  CHECK_THROWS_AS(concat<double>({}), std::invalid_argument);
}

TEST_CASE("dense forward examples") {
  SUBCASE("identity") {
    DenseLayer<double> layer{T64({2, 2}, {1, 0, 0, 1}), T64({2}, 0.0),
                             Activation::identity};
    T64 x({2}, {3.0, -4.0});
    DenseResult<double> r = dense_forward(layer, x);
    CHECK(r.out[0] == 3.0);
    CHECK(r.out[1] == -4.0);
  }
  SUBCASE("relu dense") {
    DenseLayer<double> layer{T64({2, 1}, {2.0, 3.0}), T64({1}, {1.0}),
                             Activation::relu};
    CHECK(dense_forward(layer, T64({2}, {1.0, 1.0})).out[0] == 6.0);
    DenseResult<double> r = dense_forward(layer, T64({2}, {-1.0, -1.0}));
    CHECK(r.out[0] == 0.0);
    CHECK(r.preact[0] == -4.0);
  }
  SUBCASE("length mismatch") {
    DenseLayer<double> layer{T64({2, 1}, 0.0), T64({1}, 0.0),
                             Activation::identity};
    CHECK_THROWS_AS(dense_forward(layer, T64({3}, 0.0)),
                    std::invalid_argument);
  }
}

TEST_CASE("dense matches finite differences away from relu kinks") {
  for (int trial = 0; trial < 25; ++trial) {
    std::size_t u = 2 + g_rng() % 4, r = 1 + g_rng() % 4;
    DenseLayer<double> layer{random_tensor({u, r}), random_tensor({r}),
                             Activation::relu};
    T64 x = random_tensor({u});
    DenseResult<double> fwd = dense_forward(layer, x);
    bool near_kink = false;
    for (double v : fwd.preact.vec())
      if (std::abs(v) < 1e-4) near_kink = true;
    if (near_kink) continue;

    T64 w = random_tensor({r});
    DenseGrads<double> grads = dense_backward(layer, x, fwd.preact, w);
    auto objective = [&] {
      return weighted_sum(dense_forward(layer, x).out, w);
    };
    for (int probe = 0; probe < 4; ++probe) {
      std::size_t wi = g_rng() % layer.weights.size();
      double saved = layer.weights[wi];
      layer.weights[wi] = saved + kStep;
      double up = objective();
      layer.weights[wi] = saved - kStep;
      double down = objective();
      layer.weights[wi] = saved;
      CHECK(rel_err(grads.weights[wi], (up - down) / (2 * kStep)) < kTol);

      std::size_t xi = g_rng() % x.size();
      saved = x[xi];
      x[xi] = saved + kStep;
      up = objective();
      x[xi] = saved - kStep;
      down = objective();
      x[xi] = saved;
      CHECK(rel_err(grads.input[xi], (up - down) / (2 * kStep)) < kTol);

      std::size_t bi = g_rng() % r;
      saved = layer.biases[bi];
      layer.biases[bi] = saved + kStep;
      up = objective();
      layer.biases[bi] = saved - kStep;
      down = objective();
      layer.biases[bi] = saved;
      CHECK(rel_err(grads.biases[bi], (up - down) / (2 * kStep)) < kTol);
    }
  }
}

TEST_CASE("dropout") {
  std::mt19937 rng(99);
  T64 x = random_tensor({20});

  SUBCASE("rate 0 is identity in both modes") {
    for (Mode mode : {Mode::train, Mode::eval}) {
      DropoutResult<double> r = dropout(x, 0.0, mode, rng);
      for (std::size_t i = 0; i < x.size(); ++i) CHECK(r.out[i] == x[i]);
    }
  }
  SUBCASE("eval mode is identity at any rate") {
    DropoutResult<double> r = dropout(x, 0.7, Mode::eval, rng);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(r.out[i] == x[i]);
  }
  SUBCASE("rate >= 1 is rejected") {
    CHECK_THROWS_AS(dropout(x, 1.0, Mode::train, rng), std::invalid_argument);
  }
  SUBCASE("inverted scaling keeps the expectation (Monte Carlo)") {
    T64 ones({4}, 1.0);
    const int draws = 10000;
    std::vector<double> mean(4, 0.0);
    for (int d = 0; d < draws; ++d) {
      DropoutResult<double> r = dropout(ones, 0.5, Mode::train, rng);
      for (std::size_t i = 0; i < 4; ++i) mean[i] += r.out[i];
    }
    for (std::size_t i = 0; i < 4; ++i)
      CHECK(mean[i] / draws == doctest::Approx(1.0).epsilon(0.05));
  }
  SUBCASE("backward uses the cached mask") {
    DropoutResult<double> r = dropout(x, 0.5, Mode::train, rng);
    T64 up({20}, 1.0);
    T64 g = dropout_backward(r.mask, up);
    for (std::size_t i = 0; i < 20; ++i) CHECK(g[i] == r.mask[i]);
  }
}

TEST_CASE("classify") {
  SUBCASE("sigmoid midpoint") {
    CHECK(classify(T64({1}, {0.0}))[0] == doctest::Approx(0.5));
  }
  SUBCASE("softmax symmetry") {
    T64 p = classify(T64({2}, {0.0, 0.0}));
    CHECK(p[0] == doctest::Approx(0.5));
    CHECK(p[1] == doctest::Approx(0.5));
  }
  SUBCASE("softmax stays finite on huge logits") {
    T64 p = classify(T64({2}, {1000.0, 0.0}));
    CHECK(p[0] == doctest::Approx(1.0));
    CHECK(p[1] == doctest::Approx(0.0));
  }
  SUBCASE("softmax sums to one on random logits") {
    for (int trial = 0; trial < 30; ++trial) {
      std::size_t c = 2 + g_rng() % 6;
      T64 p = classify(random_tensor({c}, -30.0, 30.0));
      double sum = 0.0;
      for (double v : p.vec()) sum += v;
      CHECK(std::abs(sum - 1.0) < 1e-6);
    }
  }
  SUBCASE("sigmoid output lies in (0,1) short of rounding saturation") {
    for (double t : {-30.0, -3.0, 0.1, 12.0, 30.0}) {
      double p = classify(T64({1}, {t}))[0];
      CHECK(p > 0.0);
      CHECK(p < 1.0);
    }
    // beyond ~37 the positive side rounds to 1.0; the negative side stays
    // a tiny positive number thanks to the exp(t)/(1+exp(t)) form
    CHECK(classify(T64({1}, {500.0}))[0] == 1.0);
    double tiny = classify(T64({1}, {-500.0}))[0];
    CHECK(tiny > 0.0);
    CHECK(tiny < 1e-200);
  }
}
