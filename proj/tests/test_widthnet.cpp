#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "fedgreen/error.hpp"
#include "fedgreen/widthnet.hpp"
#include "oracles.hpp"

using namespace fedgreen;
using namespace fedgreen::widthnet;

namespace {

Matrix random_batch(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix m(rows, cols);
  for (auto &v : m.data()) v = g(rng);
  return m;
}

std::vector<int> random_labels(std::size_t n, int classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> d(0, classes - 1);
  std::vector<int> y(n);
  for (auto &v : y) v = d(rng);
  return y;
}

// Pointer to the k-th scalar parameter (weights of each layer, then biases).
double &param_at(Model &m, std::size_t k) {
  for (auto &l : m.layers) {
    if (k < l.weight.size()) return l.weight.data()[k];
    k -= l.weight.size();
    if (k < l.bias.size()) return l.bias[k];
    k -= l.bias.size();
  }
  throw std::out_of_range("param index");
}

const double &param_at(const Model &m, std::size_t k) {
  return param_at(const_cast<Model &>(m), k);
}

}  // namespace

TEST_CASE("init_model shapes and determinism") {
  const std::vector<std::size_t> hidden{4};
  const auto a = init_model(2, hidden, 3, 7);
  REQUIRE(a.layers.size() == 2);
  CHECK(a.layers[0].shape == LayerShape{2, 4, LayerKind::hidden});
  CHECK(a.layers[1].shape == LayerShape{4, 3, LayerKind::output});
  for (const auto &l : a.layers) {
    for (double b : l.bias) CHECK(b == 0.0);
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.shape.in_dim));
    for (double w : l.weight.data()) {
      CHECK(std::isfinite(w));
      CHECK(std::abs(w) <= bound);
    }
  }
  CHECK(init_model(2, hidden, 3, 7) == a);
  CHECK_FALSE(init_model(2, hidden, 3, 8) == a);
}

TEST_CASE("init_model parameter count") {
  const std::vector<std::size_t> hidden{32, 32};
  // 784*32+32 + 32*32+32 + 32*10+10
  CHECK(init_model(784, hidden, 10, 1).parameter_count() == 26506);
}

TEST_CASE("init_model rejects zero dimensions") {
  const std::vector<std::size_t> ok{4}, zero{4, 0}, none{};
  CHECK_THROWS_AS(init_model(0, ok, 3, 1), Error);
  CHECK_THROWS_AS(init_model(2, ok, 0, 1), Error);
  CHECK_THROWS_AS(init_model(2, zero, 3, 1), Error);
  CHECK_THROWS_AS(init_model(2, none, 3, 1), Error);
}

TEST_CASE("scaling rate range") {
  CHECK_THROWS_AS(ScalingRate(0.0), Error);
  CHECK_THROWS_AS(ScalingRate(1.0000001), Error);
  CHECK_THROWS_AS(ScalingRate(std::nan("")), Error);
  CHECK(ScalingRate(1.0).value() == 1.0);
}

TEST_CASE("kept width ceil rule") {
  CHECK(kept_width(ScalingRate(0.3), 5) == 2);
  CHECK(kept_width(ScalingRate(0.5), 8) == 4);
  CHECK(kept_width(ScalingRate(0.01), 8) == 1);
  CHECK(kept_width(ScalingRate(0.7), 10) == 7);
  CHECK(kept_width(ScalingRate(0.6), 5) == 3);
  // Enumerate p = k/100 against exact integer arithmetic ceil(k*K/100).
  for (std::size_t K = 1; K <= 64; ++K) {
    for (int k = 1; k <= 100; ++k) {
      const std::size_t exact = std::max<std::size_t>(1, (k * K + 99) / 100);
      CHECK(kept_width(ScalingRate(k / 100.0), K) == exact);
    }
  }
}

TEST_CASE("extract_submodel") {
  const std::vector<std::size_t> hidden{8, 8};
  const auto m = init_model(3, hidden, 4, 11);

  SUBCASE("p = 1 is the identity") {
    const auto s = extract_submodel(m, ScalingRate(1.0));
    CHECK(s.model == m);
    CHECK(s.kept == std::vector<std::size_t>{8, 8});
  }
  SUBCASE("p = 0.5 halves widths, hidden block scales by p^2") {
    const auto s = extract_submodel(m, ScalingRate(0.5));
    CHECK(s.kept == std::vector<std::size_t>{4, 4});
    CHECK(s.model.input_dim == 3);
    CHECK(s.model.class_count == 4);
    CHECK(m.layers[1].weight.size() == 64);
    CHECK(s.model.layers[1].weight.size() == 16);
    CHECK(static_cast<double>(s.model.layers[1].weight.size()) /
              static_cast<double>(m.layers[1].weight.size()) ==
          0.25);
    for (std::size_t k = 0; k < m.layers.size(); ++k) {
      const auto &sl = s.model.layers[k];
      for (std::size_t r = 0; r < sl.shape.out_dim; ++r) {
        for (std::size_t c = 0; c < sl.shape.in_dim; ++c)
          CHECK(sl.weight(r, c) == m.layers[k].weight(r, c));
        CHECK(sl.bias[r] == m.layers[k].bias[r]);
      }
    }
    validate(s.model);
  }
  SUBCASE("ceil rule on width 5") {
    const std::vector<std::size_t> h5{5};
    const auto s = extract_submodel(init_model(2, h5, 2, 1), ScalingRate(0.3));
    CHECK(s.kept == std::vector<std::size_t>{2});
    CHECK(s.model.layers[1].shape.in_dim == 2);
  }
}

TEST_CASE("embed_submodel") {
  const std::vector<std::size_t> hidden{4};
  const auto parent = init_model(3, hidden, 2, 5);

  SUBCASE("round trip on a p grid") {
    for (int k = 1; k <= 10; ++k) {
      const ScalingRate p(k / 10.0);
      CHECK(embed_submodel(parent, extract_submodel(parent, p)) == parent);
    }
  }
  SUBCASE("overwrites the prefix only") {
    auto sub = extract_submodel(parent, ScalingRate(0.5));
    for (auto &l : sub.model.layers) {
      for (auto &w : l.weight.data()) w = 9.0;
      for (auto &b : l.bias) b = 9.0;
    }
    const auto out = embed_submodel(parent, sub);
    const auto &h = out.layers[0];
    for (std::size_t r = 0; r < 4; ++r) {
      for (std::size_t c = 0; c < 3; ++c)
        CHECK(h.weight(r, c) == (r < 2 ? 9.0 : parent.layers[0].weight(r, c)));
      CHECK(h.bias[r] == (r < 2 ? 9.0 : parent.layers[0].bias[r]));
    }
    const auto &o = out.layers[1];
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t c = 0; c < 4; ++c)
        CHECK(o.weight(r, c) == (c < 2 ? 9.0 : parent.layers[1].weight(r, c)));
  }
  SUBCASE("p = 1 overwrites everything") {
    auto sub = extract_submodel(parent, ScalingRate(1.0));
    for (auto &w : sub.model.layers[0].weight.data()) w += 1.0;
    CHECK(embed_submodel(parent, sub) == sub.model);
  }
  SUBCASE("shape mismatch") {
    auto sub = extract_submodel(parent, ScalingRate(0.5));
    sub.origin_p = ScalingRate(1.0);
    CHECK_THROWS_AS(embed_submodel(parent, sub), Error);
    const std::vector<std::size_t> other{6};
    const auto wrong = extract_submodel(init_model(3, other, 2, 5), ScalingRate(0.5));
    try {
      (void)embed_submodel(parent, wrong);
      FAIL("expected incompatible-submodel error");
    } catch (const Error &e) {
      CHECK(e.kind() == ErrorKind::incompatible_submodel);
    }
  }
}

TEST_CASE("nesting property on random architectures") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    std::uniform_int_distribution<std::size_t> dim(1, 12), depth(1, 3);
    std::vector<std::size_t> hidden(depth(rng));
    for (auto &h : hidden) h = dim(rng);
    const auto m = init_model(dim(rng), hidden, dim(rng), rng());
    std::uniform_real_distribution<double> pr(0.01, 1.0);
    double p1 = pr(rng), p2 = pr(rng);
    if (p1 > p2) std::swap(p1, p2);
    const auto small = extract_submodel(m, ScalingRate(p1));
    const auto big = extract_submodel(m, ScalingRate(p2));
    for (std::size_t k = 0; k < m.layers.size(); ++k) {
      const auto &s = small.model.layers[k];
      const auto &b = big.model.layers[k];
      REQUIRE(s.shape.out_dim <= b.shape.out_dim);
      REQUIRE(s.shape.in_dim <= b.shape.in_dim);
      for (std::size_t r = 0; r < s.shape.out_dim; ++r) {
        for (std::size_t c = 0; c < s.shape.in_dim; ++c) REQUIRE(s.weight(r, c) == b.weight(r, c));
        REQUIRE(s.bias[r] == b.bias[r]);
      }
    }
  }
}

TEST_CASE("hidden-to-hidden block scales as ceil(pK)^2") {
  const std::vector<std::size_t> hidden{20, 20, 20};
  const auto m = init_model(4, hidden, 3, 3);
  for (int k = 1; k <= 10; ++k) {
    const ScalingRate p(k / 10.0);
    const auto s = extract_submodel(m, p);
    const std::size_t w = kept_width(p, 20);
    CHECK(s.model.layers[1].weight.size() == w * w);
    CHECK(s.model.layers[2].weight.size() == w * w);
  }
}

TEST_CASE("forward") {
  SUBCASE("zero model gives zero scores") {
    const std::vector<std::size_t> hidden{5};
    auto m = init_model(3, hidden, 4, 1);
    for (auto &l : m.layers) std::fill(l.weight.data().begin(), l.weight.data().end(), 0.0);
    const auto out = forward(m, random_batch(6, 3, 1));
    for (double v : out.data()) CHECK(v == 0.0);
  }
  SUBCASE("single linear layer with identity weights") {
    Model m;
    m.input_dim = 3;
    m.class_count = 3;
    Layer l{{3, 3, LayerKind::output}, Matrix(3, 3), std::vector<double>(3, 0.0)};
    for (std::size_t i = 0; i < 3; ++i) l.weight(i, i) = 1.0;
    m.layers.push_back(l);
    const auto x = random_batch(5, 3, 2);
    CHECK(forward(m, x) == x);
  }
  SUBCASE("matches independent matrix arithmetic") {
    const std::vector<std::size_t> hidden{7};
    const auto m = init_model(4, hidden, 3, 21);
    const auto x = random_batch(9, 4, 3);
    const auto got = forward(m, x);
    const auto want = oracle::forward(m, x);
    for (std::size_t i = 0; i < got.size(); ++i)
      CHECK(got.data()[i] == doctest::Approx(want.data()[i]).epsilon(1e-12));
  }
  SUBCASE("dimension mismatch") {
    const std::vector<std::size_t> hidden{2};
    const auto m = init_model(4, hidden, 3, 21);
    CHECK_THROWS_AS(forward(m, random_batch(2, 5, 1)), Error);
  }
}

TEST_CASE("sgd_step") {
  const std::vector<std::size_t> hidden{6, 5};
  const auto m = init_model(4, hidden, 3, 8);
  const auto x = random_batch(10, 4, 4);
  const auto y = random_labels(10, 3, 4);

  SUBCASE("lr = 0 leaves parameters unchanged") {
    const auto r = sgd_step(m, x, y, 0.0);
    CHECK(r.model == m);
    CHECK(r.loss == doctest::Approx(loss(m, x, y)));
  }
  SUBCASE("step moves against the gradient and lowers the loss") {
    const auto r = sgd_step(m, x, y, 0.05);
    CHECK(loss(r.model, x, y) < r.loss);
  }
  SUBCASE("labels out of range") {
    auto bad = y;
    bad[0] = 3;
    CHECK_THROWS_AS(sgd_step(m, x, bad, 0.1), Error);
  }
  SUBCASE("non-finite loss aborts") {
    auto blown = m;
    blown.layers.back().weight(0, 0) = 1e308;
    blown.layers.back().weight(1, 0) = -1e308;
    Matrix big(1, 4, 1e300);
    try {
      (void)sgd_step(blown, big, std::vector<int>{0}, 0.1);
      FAIL("expected numerical failure");
    } catch (const Error &e) {
      CHECK(e.kind() == ErrorKind::numerical_failure);
    }
  }
}

TEST_CASE("analytic gradient matches central finite differences") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 10; ++trial) {
    std::uniform_int_distribution<std::size_t> dim(2, 8), depth(0, 3);
    std::vector<std::size_t> hidden(depth(rng) + 1);
    for (auto &h : hidden) h = dim(rng);
    const std::size_t in = dim(rng), classes = dim(rng);
    auto m = init_model(in, hidden, classes, rng());
    for (auto &l : m.layers)
      for (auto &b : l.bias) b = std::uniform_real_distribution<double>(-0.1, 0.1)(rng);
    const auto x = random_batch(7, in, rng());
    const auto y = random_labels(7, static_cast<int>(classes), rng());
    const auto lg = loss_and_gradient(m, x, y);
    const std::size_t n = m.parameter_count();
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (int s = 0; s < 20; ++s) {
      const std::size_t k = pick(rng);
      const double fd = oracle::central_difference(m, x, y, k, 1e-5);
      const double an = param_at(lg.gradient, k);
      CHECK(oracle::rel_err(an, fd) <= 1e-4);
    }
  }
}

TEST_CASE("separable batch with large margin has tiny loss and gradient") {
  // Scale a model until its own decision regions have a wide margin, then
  // label a batch with its own predictions.
  const std::vector<std::size_t> hidden{6};
  auto m = init_model(3, hidden, 3, 17);
  for (auto &l : m.layers)
    for (auto &w : l.weight.data()) w *= 10.0;
  const auto x = random_batch(12, 3, 9);
  const auto scores = forward(m, x);
  std::vector<int> y;
  std::vector<std::size_t> keep;
  for (std::size_t b = 0; b < x.rows(); ++b) {
    auto row = scores.row(b);
    std::vector<double> s(row.begin(), row.end());
    const auto best = argmax(s);
    std::sort(s.begin(), s.end());
    if (s.back() - s[s.size() - 2] > 12.0) {
      keep.push_back(b);
      y.push_back(static_cast<int>(best));
    }
  }
  REQUIRE(keep.size() >= 3);
  Matrix xb(keep.size(), 3);
  for (std::size_t i = 0; i < keep.size(); ++i)
    for (std::size_t c = 0; c < 3; ++c) xb(i, c) = x(keep[i], c);
  const auto lg = loss_and_gradient(m, xb, y);
  double norm2 = 0.0;
  for (std::size_t k = 0; k < m.parameter_count(); ++k) {
    const double g = param_at(lg.gradient, k);
    norm2 += g * g;
  }
  CHECK(lg.loss < 1e-3);
  CHECK(std::sqrt(norm2) < 1e-2);
}

TEST_CASE("evaluate") {
  SUBCASE("perfect predictions") {
    Model m;
    m.input_dim = 2;
    m.class_count = 2;
    Layer l{{2, 2, LayerKind::output}, Matrix(2, 2), {0.0, 0.0}};
    l.weight(0, 0) = 1.0;
    l.weight(1, 1) = 1.0;
    m.layers.push_back(l);
    LabeledDataset d;
    d.class_count = 2;
    d.features = Matrix(4, 2);
    d.features(0, 0) = 1;
    d.features(1, 1) = 1;
    d.features(2, 0) = 3;
    d.features(3, 1) = 2;
    d.labels = {0, 1, 0, 1};
    CHECK(evaluate(m, d) == 1.0);
  }
  SUBCASE("all-zero model falls back to class 0") {
    const std::vector<std::size_t> hidden{3};
    auto m = init_model(2, hidden, 10, 1);
    for (auto &l : m.layers) std::fill(l.weight.data().begin(), l.weight.data().end(), 0.0);
    LabeledDataset d;
    d.class_count = 10;
    d.features = random_batch(50, 2, 5);
    for (int i = 0; i < 50; ++i) d.labels.push_back(i % 10);
    CHECK(evaluate(m, d) == doctest::Approx(0.1));
  }
  SUBCASE("matches a per-item argmax count") {
    const std::vector<std::size_t> hidden{5};
    const auto m = init_model(3, hidden, 4, 31);
    LabeledDataset d;
    d.class_count = 4;
    d.features = random_batch(40, 3, 6);
    d.labels = random_labels(40, 4, 6);
    const auto scores = oracle::forward(m, d.features);
    std::size_t correct = 0;
    for (std::size_t b = 0; b < 40; ++b) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < 4; ++c)
        if (scores(b, c) > scores(b, best)) best = c;
      if (static_cast<int>(best) == d.labels[b]) ++correct;
    }
    CHECK(evaluate(m, d) == static_cast<double>(correct) / 40.0);
  }
  SUBCASE("empty dataset") {
    const std::vector<std::size_t> hidden{5};
    LabeledDataset d;
    d.class_count = 4;
    d.features = Matrix(0, 3);
    CHECK_THROWS_AS(evaluate(init_model(3, hidden, 4, 31), d), Error);
  }
}

TEST_CASE("training is deterministic") {
  const std::vector<std::size_t> hidden{6};
  const auto x = random_batch(16, 4, 1);
  const auto y = random_labels(16, 3, 1);
  auto run = [&] {
    auto m = init_model(4, hidden, 3, 5);
    for (int t = 0; t < 20; ++t) m = sgd_step(m, x, y, 0.1).model;
    return m;
  };
  CHECK(run() == run());
}
