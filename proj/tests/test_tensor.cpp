#include <doctest.h>

#include <limits>
#include <random>

#include "convonet/tensor.hpp"

using namespace convonet;

TEST_CASE("tensor_new fills and shapes") {
  Tensor zeros = tensor_new<float>({2, 2}, 0.0f);
  CHECK(zeros.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(zeros[i] == 0.0f);

  Tensor c = tensor_new<float>({3}, 1.5f);
  CHECK(c.size() == 3);
  CHECK(c[0] == 1.5f);
  CHECK(c[2] == 1.5f);
}

TEST_CASE("row-major strides") {
  Tensor t = tensor_new<float>({2, 3, 4}, 0.0f);
  CHECK(t.size() == 24);
  CHECK(t.strides() == std::vector<std::size_t>{12, 4, 1});
}

TEST_CASE("construction rejects empty and zero-extent shapes") {
  CHECK_THROWS_AS(tensor_new<float>({}, 0.0f), std::invalid_argument);
  CHECK_THROWS_AS(tensor_new<float>({2, 0}, 0.0f), std::invalid_argument);
}

TEST_CASE("elementwise add/sub/mul") {
  Tensor a({2}, {1.0f, 2.0f});
  Tensor b({2}, {3.0f, 4.0f});
  Tensor sum = elementwise(a, b, ElemOp::add);
  CHECK(sum[0] == 4.0f);
  CHECK(sum[1] == 6.0f);

  Tensor x({2}, {2.0f, 3.0f});
  Tensor zero = tensor_new<float>({2}, 0.0f);
  Tensor prod = elementwise(x, zero, ElemOp::mul);
  CHECK(prod[0] == 0.0f);
  CHECK(prod[1] == 0.0f);

  Tensor d = elementwise(Tensor({2}, {2.0f, 3.0f}), Tensor({2}, {5.0f, 7.0f}),
                         ElemOp::sub);
  CHECK(d[0] == -3.0f);
  CHECK(d[1] == -4.0f);
}

TEST_CASE("elementwise rejects shape mismatch, names both shapes") {
  Tensor a = tensor_new<float>({2, 2}, 1.0f);
  Tensor b = tensor_new<float>({4}, 1.0f);
  try {
    elementwise(a, b, ElemOp::add);
    FAIL("expected throw");
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    CHECK(msg.find("(2,2)") != std::string::npos);
    CHECK(msg.find("(4)") != std::string::npos);
  }
}

TEST_CASE("elementwise add commutes on random inputs") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<float> dist(-10.0f, 10.0f);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor a = tensor_new<float>({3, 5}, 0.0f);
    Tensor b = tensor_new<float>({3, 5}, 0.0f);
    for (auto& v : a.vec()) v = dist(rng);
    for (auto& v : b.vec()) v = dist(rng);
    Tensor ab = elementwise(a, b, ElemOp::add);
    Tensor ba = elementwise(b, a, ElemOp::add);
    for (std::size_t i = 0; i < ab.size(); ++i) CHECK(ab[i] == ba[i]);
  }
}

TEST_CASE("matvec") {
  SUBCASE("identity") {
    Tensor eye({2, 2}, {1.0f, 0.0f, 0.0f, 1.0f});
    Tensor x({2}, {3.0f, 4.0f});
    Tensor out = matvec(eye, x);
    CHECK(out[0] == 3.0f);
    CHECK(out[1] == 4.0f);
  }
  SUBCASE("diagonal") {
    Tensor w({2, 2}, {1.0f, 0.0f, 0.0f, 2.0f});
    Tensor out = matvec(w, Tensor({2}, {5.0f, 6.0f}));
    CHECK(out[0] == 5.0f);
    CHECK(out[1] == 12.0f);
  }
  SUBCASE("dot product") {
    Tensor w({2, 1}, {1.0f, 1.0f});
    Tensor out = matvec(w, Tensor({2}, {2.0f, 3.0f}));
    CHECK(out.size() == 1);
    CHECK(out[0] == 5.0f);
  }
  SUBCASE("dimension mismatch") {
    Tensor w = tensor_new<float>({3, 2}, 1.0f);
    CHECK_THROWS_AS(matvec(w, tensor_new<float>({2}, 1.0f)),
                    std::invalid_argument);
  }
}

TEST_CASE("matvec with random identity returns input exactly") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<float> dist(-5.0f, 5.0f);
  for (int trial = 0; trial < 20; ++trial) {
    std::size_t n = 1 + static_cast<std::size_t>(rng() % 8);
    Tensor eye = tensor_new<float>({n, n}, 0.0f);
    for (std::size_t i = 0; i < n; ++i) eye.at2(i, i) = 1.0f;
    Tensor x = tensor_new<float>({n}, 0.0f);
    for (auto& v : x.vec()) v = dist(rng);
    Tensor out = matvec(eye, x);
    for (std::size_t i = 0; i < n; ++i) CHECK(out[i] == x[i]);
  }
}

TEST_CASE("reshape round-trips bit-exactly") {
  std::mt19937 rng(3);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  Tensor t = tensor_new<float>({4, 6}, 0.0f);
  for (auto& v : t.vec()) v = dist(rng);
  Tensor back = t.reshaped({2, 3, 4}).reshaped({4, 6});
  CHECK(back.shape() == t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(back[i] == t[i]);

  CHECK_THROWS_AS(t.reshaped({5, 5}), std::invalid_argument);
}

TEST_CASE("non-finite results are rejected, not propagated") {
  const float big = std::numeric_limits<float>::max();
  Tensor a({1}, {big});
  Tensor b({1}, {big});
  CHECK_THROWS_AS(elementwise(a, b, ElemOp::add), std::runtime_error);

  Tensor w({1, 1}, {big});
  Tensor x({1}, {big});
  CHECK_THROWS_AS(matvec(w, x), std::runtime_error);
}
