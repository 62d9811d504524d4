#include <doctest.h>

#include "pulseclust/tensor_ops.hpp"
#include "testutil.hpp"

using namespace pulseclust;

namespace {

TensorD randu(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  RandomSource rng(seed);
  TensorD t = TensorD::zeros(std::move(shape));
  for (Eigen::Index i = 0; i < t.numel(); ++i) t.value()[i] = rng.uniform(lo, hi);
  return t;
}

/// Random-weighted scalar reduction so gradients are non-uniform; the weight
/// pattern is a pure function of the output shape and seed.
TensorD pin(const TensorD& t, std::uint64_t seed = 99) {
  RandomSource rng(seed);
  TensorD w = TensorD::zeros(t.shape());
  for (Eigen::Index i = 0; i < w.numel(); ++i) w.value()[i] = rng.uniform(-1.0, 1.0);
  return sum_all(mul(t, w));
}

}  // namespace

TEST_CASE("elementwise forward semantics") {
  TensorD a = TensorD::from_flat({2, 2}, [] {
    TensorD::Storage s(4);
    s << 1.0, -2.0, 3.0, -4.0;
    return s;
  }());
  TensorD b = TensorD::filled({2, 2}, 0.5);

  CHECK(add(a, b).value()[1] == doctest::Approx(-1.5));
  CHECK(sub(a, b).value()[0] == doctest::Approx(0.5));
  CHECK(mul(a, b).value()[2] == doctest::Approx(1.5));
  CHECK(scale(a, 2.0).value()[3] == doctest::Approx(-8.0));

  TensorD r = relu(a);
  CHECK(r.value()[0] == 1.0);
  CHECK(r.value()[1] == 0.0);
  CHECK(r.value()[2] == 3.0);
  CHECK(r.value()[3] == 0.0);

  CHECK_THROWS_AS(add(a, TensorD::zeros({3, 2})), ShapeError);
  CHECK_THROWS_AS(mul(a, TensorD::zeros({4, 4})), ShapeError);
}

TEST_CASE("shape errors list both shapes") {
  try {
    matmul(TensorD::zeros({2, 3}), TensorD::zeros({4, 5}));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[4,5]") != std::string::npos);
  }
}

TEST_CASE("softmax rows sum to one") {
  TensorD x = randu({7, 9}, 3, -4.0, 4.0);
  TensorD y = softmax(x);
  for (Eigen::Index r = 0; r < 7; ++r) {
    double s = 0.0;
    for (Eigen::Index c = 0; c < 9; ++c) s += y.value()[r * 9 + c];
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
  // axis variant normalizes over the chosen dimension
  TensorD y0 = softmax(x, 0);
  for (Eigen::Index c = 0; c < 9; ++c) {
    double s = 0.0;
    for (Eigen::Index r = 0; r < 7; ++r) s += y0.value()[r * 9 + c];
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
}

TEST_CASE("mean gradient is uniform 1/n") {
  TensorD x = randu({3, 5}, 4);
  x.set_requires_grad(true);
  TensorD m = mean_all(x);
  m.backward();
  for (Eigen::Index i = 0; i < x.numel(); ++i)
    CHECK(x.grad()[i] == doctest::Approx(1.0 / 15.0));
}

TEST_CASE("matmul forward values") {
  TensorD a = TensorD::from_flat({2, 2}, [] {
    TensorD::Storage s(4);
    s << 1, 2, 3, 4;
    return s;
  }());
  TensorD b = TensorD::from_flat({2, 2}, [] {
    TensorD::Storage s(4);
    s << 5, 6, 7, 8;
    return s;
  }());
  TensorD c = matmul(a, b);
  CHECK(c.value()[0] == doctest::Approx(19));
  CHECK(c.value()[1] == doctest::Approx(22));
  CHECK(c.value()[2] == doctest::Approx(43));
  CHECK(c.value()[3] == doctest::Approx(50));
}

TEST_CASE("transpose and reshape round trips") {
  TensorD x = randu({2, 3, 4}, 5);
  TensorD t = transpose(x, 1, 2);
  CHECK(t.shape() == Shape{2, 4, 3});
  CHECK(t.value()[(0 * 4 + 1) * 3 + 2] == x.value()[(0 * 3 + 2) * 4 + 1]);
  TensorD back = transpose(t, 1, 2);
  CHECK((back.value() - x.value()).abs().maxCoeff() == 0.0);

  TensorD r = reshape(x, {6, 4});
  CHECK(r.shape() == Shape{6, 4});
  CHECK((r.value() - x.value()).abs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(reshape(x, {5, 5}), ShapeError);
}

TEST_CASE("slice and concat are inverse") {
  TensorD x = randu({3, 8}, 6);
  TensorD left = slice(x, 1, 0, 3);
  TensorD right = slice(x, 1, 3, 5);
  TensorD glued = concat(std::vector<TensorD>{left, right}, 1);
  CHECK((glued.value() - x.value()).abs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(slice(x, 1, 6, 4), ShapeError);
}

TEST_CASE("gradient checks for core ops over random shapes") {
  RandomSource shape_rng(1000);
  auto dim = [&](Eigen::Index lo, Eigen::Index hi) { return shape_rng.uniform_int(lo, hi); };

  for (int trial = 0; trial < 20; ++trial) {
    const std::uint64_t s = 5000 + trial;
    const Eigen::Index m = dim(2, 5), k = dim(2, 5), n = dim(2, 5);

    CHECK(testutil::gradcheck(
              [](std::vector<TensorD>& in) { return pin(add(in[0], in[1])); },
              {randu({m, n}, s), randu({m, n}, s + 1)}) < 1e-4);
    CHECK(testutil::gradcheck(
              [](std::vector<TensorD>& in) { return pin(mul(in[0], in[1])); },
              {randu({m, n}, s + 2), randu({m, n}, s + 3)}) < 1e-4);
    CHECK(testutil::gradcheck(
              [](std::vector<TensorD>& in) { return pin(matmul(in[0], in[1])); },
              {randu({m, k}, s + 4), randu({k, n}, s + 5)}) < 1e-4);
    CHECK(testutil::gradcheck(
              [](std::vector<TensorD>& in) { return pin(matmul(in[0], in[1])); },
              {randu({2, m, k}, s + 6), randu({2, k, n}, s + 7)}) < 1e-4);
    CHECK(testutil::gradcheck(
              [](std::vector<TensorD>& in) { return pin(relu(in[0])); },
              {randu({m, n}, s + 8)}) < 1e-4);
    CHECK(testutil::gradcheck(
              [](std::vector<TensorD>& in) { return pin(softmax(in[0])); },
              {randu({m, n}, s + 9, -2.0, 2.0)}) < 1e-4);
    CHECK(testutil::gradcheck(
              [](std::vector<TensorD>& in) { return pin(exp(in[0])); },
              {randu({m, n}, s + 10)}) < 1e-4);
    CHECK(testutil::gradcheck(
              [](std::vector<TensorD>& in) { return pin(log(in[0])); },
              {randu({m, n}, s + 11, 0.5, 3.0)}) < 1e-4);
    CHECK(testutil::gradcheck(
              [](std::vector<TensorD>& in) { return mean_all(in[0]); },
              {randu({m, n}, s + 12)}) < 1e-4);
    CHECK(testutil::gradcheck(
              [](std::vector<TensorD>& in) { return pin(mean_axis(in[0], 1)); },
              {randu({m, k, n}, s + 13)}) < 1e-4);
    CHECK(testutil::gradcheck(
              [n, m](std::vector<TensorD>& in) {
                return pin(concat(std::vector<TensorD>{in[0], in[1]}, 0));
              },
              {randu({m, n}, s + 14), randu({2, n}, s + 15)}) < 1e-4);
    CHECK(testutil::gradcheck(
              [m, n](std::vector<TensorD>& in) { return pin(slice(in[0], 1, 1, n - 1)); },
              {randu({m, n}, s + 16)}) < 1e-4);
    CHECK(testutil::gradcheck(
              [](std::vector<TensorD>& in) { return pin(transpose(in[0], 0, 2)); },
              {randu({m, k, n}, s + 17)}) < 1e-4);
    CHECK(testutil::gradcheck(
              [](std::vector<TensorD>& in) { return pin(l2_normalize_rows(in[0])); },
              {randu({m, n}, s + 18, 0.3, 2.0)}) < 1e-4);
    CHECK(testutil::gradcheck(
              [](std::vector<TensorD>& in) { return pin(div(in[0], in[1])); },
              {randu({m, n}, s + 19), randu({m, n}, s + 20, 0.5, 2.0)}) < 1e-4);
    // bias-style broadcast over the last dimension
    CHECK(testutil::gradcheck(
              [](std::vector<TensorD>& in) { return pin(add(in[0], in[1])); },
              {randu({m, n}, s + 21), randu({n}, s + 22)}) < 1e-4);
  }
}

TEST_CASE("cross entropy with logits matches a direct evaluation") {
  TensorD logits = randu({4, 3}, 88, -2.0, 2.0);
  std::vector<int> targets = {2, 0, 1, 2};
  TensorD loss = cross_entropy_with_logits(logits, targets);

  double expect = 0.0;
  for (int r = 0; r < 4; ++r) {
    double z = 0.0;
    for (int c = 0; c < 3; ++c) z += std::exp(logits.value()[r * 3 + c]);
    expect += std::log(z) - logits.value()[r * 3 + targets[r]];
  }
  CHECK(loss.item() == doctest::Approx(expect / 4.0).epsilon(1e-12));

  CHECK(testutil::gradcheck(
            [&](std::vector<TensorD>& in) { return cross_entropy_with_logits(in[0], targets); },
            {logits}) < 1e-4);

  // row weights and custom normalizer
  std::vector<double> w = {1.0, 0.0, 1.0, 0.0};
  TensorD weighted = cross_entropy_with_logits(logits, targets, w, 8);
  CHECK(weighted.item() > 0.0);
  CHECK(testutil::gradcheck(
            [&](std::vector<TensorD>& in) {
              return cross_entropy_with_logits(in[0], targets, w, 8);
            },
            {logits}) < 1e-4);
}

TEST_CASE("backward of a sum of losses equals the sum of backwards") {
  TensorD x = randu({3, 4}, 17);
  auto loss_a = [](const TensorD& t) { return mean_all(relu(t)); };
  auto loss_b = [](const TensorD& t) { return pin(softmax(t), 5); };

  TensorD xa = x.detach();
  xa.set_requires_grad(true);
  add(loss_a(xa), loss_b(xa)).backward();

  TensorD xb = x.detach();
  xb.set_requires_grad(true);
  loss_a(xb).backward();
  loss_b(xb).backward();  // accumulates

  CHECK((xa.grad() - xb.grad()).abs().maxCoeff() < 1e-12);
}

TEST_CASE("no NaN or Inf on bounded random inputs") {
  for (int trial = 0; trial < 10; ++trial) {
    TensorD x = randu({4, 6}, 2000 + trial, -3.0, 3.0);
    x.set_requires_grad(true);
    TensorD y = pin(softmax(matmul(transpose(x, 0, 1), relu(x))));
    y.backward();
    CHECK(y.value().isFinite().all());
    CHECK(x.grad().isFinite().all());
  }
}

TEST_CASE("detach cuts the graph") {
  TensorD x = randu({2, 2}, 30);
  x.set_requires_grad(true);
  TensorD d = x.detach();
  CHECK_FALSE(d.requires_grad());
  TensorD y = mean_all(mul(x, d));
  y.backward();
  // gradient flows only through the non-detached path
  for (Eigen::Index i = 0; i < 4; ++i)
    CHECK(x.grad()[i] == doctest::Approx(d.value()[i] / 4.0));
}
