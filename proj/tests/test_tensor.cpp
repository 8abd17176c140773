#include <cmath>

#include "ccnet/gradcheck.hpp"
#include "ccnet/ops.hpp"
#include "doctest.h"
#include "support/oracles.hpp"

using namespace ccnet;
using TD = Tensor<double>;

namespace {

std::vector<double> vals(const TD& t) { return oracle::to_vec(t); }

// Weighted sum with fixed random weights: a scalar whose gradient touches every
// output element with a different coefficient.
TD weighted_sum(const TD& y, std::uint64_t seed) {
  return sum_all(mul(y, oracle::random_tensor(y.shape(), seed)));
}

}  // namespace

TEST_CASE("matmul examples") {
  auto id = TD::from({2, 2}, {1, 0, 0, 1});
  auto b = TD::from({2, 2}, {5, 6, 7, 8});
  CHECK(vals(matmul(id, b)) == std::vector<double>{5, 6, 7, 8});
  CHECK(matmul(TD::from({1, 2}, {1, 2}), TD::from({2, 1}, {3, 4})).item() == 11);

  auto a = oracle::random_tensor({3, 4}, 1);
  auto c = oracle::random_tensor({4, 2}, 2);
  CHECK(oracle::max_abs_diff(matmul(a, c), oracle::matmul(vals(a), vals(c), 3, 4, 2)) < 1e-12);
}

TEST_CASE("matmul batches and broadcasts a shared matrix") {
  auto a = oracle::random_tensor({2, 3, 4}, 3);
  auto b = oracle::random_tensor({4, 5}, 4);
  auto y = matmul(a, b);
  CHECK(y.shape() == Shape{2, 3, 5});
  auto first = slice(reshape(y, {6, 5}), 0, 3, 3);
  auto second = oracle::matmul(vals(slice(reshape(a, {6, 4}), 0, 3, 3)), vals(b), 3, 4, 5);
  CHECK(oracle::max_abs_diff(first, second) < 1e-12);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  try {
    matmul(TD::zeros({2, 3}), TD::zeros({2, 3}));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2, 3]") != std::string::npos);
  }
  CHECK_THROWS_AS(matmul(TD::zeros({2, 2, 3}), TD::zeros({3, 3, 1})), DimensionError);
}

TEST_CASE("conv2d examples") {
  auto x = oracle::random_tensor({1, 4, 5}, 5);
  auto unit = TD::from({1, 1, 1, 1}, {1});
  CHECK(vals(conv2d(x, unit, TD::zeros({1}))) == vals(x));

  auto ones = TD::full({1, 3, 3}, 1.0);
  auto box = TD::full({1, 1, 3, 3}, 1.0);
  auto y = conv2d(ones, box, TD(), Conv2dOptions{{1, 1}, {1, 1}, 1});
  CHECK(y.shape() == Shape{1, 3, 3});
  CHECK(y.at({0, 1, 1}) == 9);
  CHECK(y.at({0, 0, 0}) == 4);

  auto xr = oracle::random_tensor({2, 5, 5}, 6);
  auto w = oracle::random_tensor({3, 2, 3, 3}, 7);
  auto bias = oracle::random_tensor({3}, 8);
  auto ref = oracle::conv2d(vals(xr), vals(w), vals(bias), 2, 5, 5, 3, 3, 3, 0, 0, 1, 1, 1);
  CHECK(oracle::max_abs_diff(conv2d(xr, w, bias), ref) < 1e-12);
}

TEST_CASE("conv2d strides, padding and groups match the loop reference") {
  auto x = oracle::random_tensor({4, 7, 6}, 9);
  auto w = oracle::random_tensor({6, 2, 3, 2}, 10);
  auto b = oracle::random_tensor({6}, 11);
  auto y = conv2d(x, w, b, Conv2dOptions{{1, 2}, {2, 1}, 2});
  auto ref = oracle::conv2d(vals(x), vals(w), vals(b), 4, 7, 6, 6, 3, 2, 1, 2, 2, 1, 2);
  CHECK(y.shape() == Shape{6, 4, 9});
  CHECK(oracle::max_abs_diff(y, ref) < 1e-12);
}

TEST_CASE("conv2d errors") {
  CHECK_THROWS_AS(conv2d(TD::zeros({3, 4, 4}), TD::zeros({2, 1, 1, 1}), TD(), Conv2dOptions{{0, 0}, {1, 1}, 2}),
                  DimensionError);
  CHECK_THROWS_AS(conv2d(TD::zeros({1, 2, 2}), TD::zeros({1, 1, 3, 3}), TD()), DimensionError);
  CHECK_NOTHROW(conv2d(TD::zeros({1, 2, 2}), TD::zeros({1, 1, 3, 3}), TD(), Conv2dOptions{{1, 1}, {1, 1}, 1}));
}

TEST_CASE("conv3d examples") {
  auto vol = oracle::random_tensor({1, 2, 3, 4}, 12);
  CHECK(vals(conv3d(vol, TD::from({1, 1, 1, 1, 1}, {1}), TD())) == vals(vol));

  auto pair = TD::from({1, 1, 1, 2}, {2.5, -1.0});
  auto y = conv3d(pair, TD::full({1, 1, 1, 1, 2}, 1.0), TD());
  CHECK(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y.item() == 1.5);

  auto x = oracle::random_tensor({2, 3, 4, 4}, 13);
  auto w = oracle::random_tensor({2, 2, 3, 3, 3}, 14);
  auto b = oracle::random_tensor({2}, 15);
  auto ref = oracle::conv3d(vals(x), vals(w), vals(b), 2, 3, 4, 4, 2, 3, 3, 3, 1, 1, 1);
  CHECK(oracle::max_abs_diff(conv3d(x, w, b, Conv3dOptions{{1, 1, 1}}), ref) < 1e-12);
}

TEST_CASE("conv3d batch axis folds into independent volumes") {
  auto x = oracle::random_tensor({2, 1, 3, 3, 2}, 16);
  auto w = oracle::random_tensor({1, 1, 3, 3, 2}, 17);
  auto y = conv3d(x, w, TD::zeros({1}), Conv3dOptions{{1, 1, 0}});
  CHECK(y.shape() == Shape{2, 1, 3, 3, 1});
  for (Index n = 0; n < 2; ++n) {
    auto one = reshape(slice(x, 0, n, 1), {1, 3, 3, 2});
    auto ref = oracle::conv3d(vals(one), vals(w), {}, 1, 3, 3, 2, 1, 3, 3, 2, 1, 1, 0);
    CHECK(oracle::max_abs_diff(reshape(slice(y, 0, n, 1), {1, 3, 3, 1}), ref) < 1e-12);
  }
}

TEST_CASE("softmax examples and invariants") {
  auto u = softmax_lastdim(TD::zeros({3}));
  for (double v : vals(u)) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  auto big = softmax_lastdim(TD::from({2}, {1000, 1000}));
  CHECK(vals(big) == std::vector<double>{0.5, 0.5});

  auto r = oracle::random_tensor({5}, 18, -3, 3);
  CHECK(oracle::max_abs_diff(softmax_lastdim(r), oracle::softmax(vals(r))) < 1e-12);

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto s = softmax_lastdim(oracle::random_tensor({4, 7}, 100 + seed, -20, 20));
    for (Index row = 0; row < 4; ++row) {
      double total = 0;
      for (Index j = 0; j < 7; ++j) {
        const double v = s.at({row, j});
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        total += v;
      }
      CHECK(std::abs(total - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("elementwise examples") {
  CHECK(sigmoid(TD::zeros({1})).item() == 0.5);
  CHECK(ccnet::tanh(TD::zeros({1})).item() == 0.0);
  auto x = oracle::random_tensor({9}, 19, -3, 3);
  auto g = gelu(x);
  for (Index i = 0; i < 9; ++i) CHECK(std::abs(g.values()[i] - oracle::gelu(x.values()[i])) < 1e-10);
}

TEST_CASE("abs has subgradient zero at zero") {
  TD x({3}, Buffer<double>::Zero(3), true);
  backward(sum_all(ccnet::abs(x)));
  CHECK(vals(TD({3}, x.grad())) == std::vector<double>{0, 0, 0});
}

TEST_CASE("div refuses tiny denominators unless clamping") {
  auto a = TD::from({3}, {1, 2, 3});
  auto b = TD::from({3}, {1, 0, 1e-13});
  try {
    div(a, b);
    FAIL("expected DivisionByZeroError");
  } catch (const DivisionByZeroError& e) {
    CHECK(e.positions() == std::vector<Index>{1, 2});
  }
  auto y = div(a, b, DivOptions{true});
  CHECK(y.values()[1] == doctest::Approx(2e12));
}

TEST_CASE("broadcasting binary ops") {
  auto a = TD::from({2, 3}, {1, 2, 3, 4, 5, 6});
  auto b = TD::from({3}, {10, 20, 30});
  CHECK(vals(add(a, b)) == std::vector<double>{11, 22, 33, 14, 25, 36});
  auto col = TD::from({2, 1}, {2, 3});
  CHECK(vals(mul(a, col)) == std::vector<double>{2, 4, 6, 12, 15, 18});
  CHECK_THROWS_AS(add(a, TD::zeros({2})), DimensionError);
}

TEST_CASE("reduce examples") {
  CHECK(mean(TD::from({3}, {2, 4, 6}), 0).item() == 4);
  TD x = TD::from({3}, {1, 5, 5}).clone();
  TD leaf(x.shape(), x.values(), true);
  auto m = max(leaf, 0);
  CHECK(m.item() == 5);
  backward(m);
  CHECK(vals(TD({3}, leaf.grad())) == std::vector<double>{0, 1, 0});

  auto r = oracle::random_tensor({3, 4}, 20);
  auto col_mean = mean(r, 0);
  CHECK(col_mean.shape() == Shape{4});
  for (Index j = 0; j < 4; ++j) {
    const double ref = (r.at({0, j}) + r.at({1, j}) + r.at({2, j})) / 3.0;
    CHECK(std::abs(col_mean.values()[j] - ref) < 1e-12);
  }
}

TEST_CASE("backward examples") {
  auto x = oracle::random_tensor({2, 3}, 21, -1, 1, true);
  backward(sum_all(x));
  CHECK((x.grad() == 1.0).all());

  auto y = oracle::random_tensor({4}, 22, -1, 1, true);
  backward(sum_all(mul(y, y)));
  CHECK(((y.grad() - 2.0 * y.values()).abs() < 1e-15).all());

  auto diamond = [](const TD& v) { return sum_all(add(ccnet::tanh(v), mul(sigmoid(v), v))); };
  CHECK(grad_check(diamond, oracle::random_tensor({6}, 23)) < 1e-8);
}

TEST_CASE("backward error paths") {
  CHECK_THROWS_AS(backward(oracle::random_tensor({2}, 1, -1, 1, true)), GraphError);
  CHECK_THROWS_AS(backward(sum_all(TD::zeros({2}))), GraphError);
}

TEST_CASE("a tensor consumed twice receives the sum of both consumers") {
  auto x0 = oracle::random_tensor({5}, 24);
  auto grad_of_loss = [&](int which) {
    TD x(x0.shape(), x0.values(), true);
    TD f = sum_all(ccnet::tanh(x));
    TD g = sum_all(mul(x, x));
    backward(which == 0 ? f : which == 1 ? g : add(f, g));
    return Buffer<double>(x.grad());
  };
  const auto both = grad_of_loss(2);
  const Buffer<double> summed = grad_of_loss(0) + grad_of_loss(1);
  CHECK(((both - summed).abs() < 1e-15).all());
}

TEST_CASE("tape is topologically ordered") {
  auto x = oracle::random_tensor({3}, 25, -1, 1, true);
  auto a = ccnet::tanh(x);
  auto root = sum_all(add(a, mul(a, x)));
  auto tape = record_tape(root);
  REQUIRE(tape.nodes.back() == root.node().get());
  for (std::size_t i = 0; i < tape.nodes.size(); ++i) {
    for (const auto& in : tape.nodes[i]->inputs) {
      auto pos = std::find(tape.nodes.begin(), tape.nodes.end(), in.get());
      CHECK(pos - tape.nodes.begin() < static_cast<std::ptrdiff_t>(i));
    }
  }
  CHECK(tape.nodes.size() == 5);  // x, tanh, mul, add, sum
}

TEST_CASE("NoGradGuard suppresses recording") {
  auto x = oracle::random_tensor({3}, 26, -1, 1, true);
  NoGradGuard guard;
  CHECK_FALSE(ccnet::tanh(x).requires_grad());
}

TEST_CASE("grad_check examples") {
  CHECK(grad_check([](const TD& v) { return sum_all(v); }, oracle::random_tensor({7}, 27)) < 1e-10);
  auto constant = [](const TD& v) { return sum_all(mul(v, TD::zeros(v.shape()))); };
  auto r = grad_check_report(constant, oracle::random_tensor({4}, 28));
  CHECK(r.max_rel_error == 0.0);
  CHECK(r.checked == 4);
}

TEST_CASE("every op passes finite differences over 20 seeds") {
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::uint64_t s = 1000 + 17 * seed;
    auto check = [&](auto&& fn, const Shape& shape) {
      auto f = [&](const TD& v) { return weighted_sum(fn(v), s + 1); };
      worst = std::max(worst, grad_check(f, oracle::random_tensor(shape, s)));
    };
    auto w4 = oracle::random_tensor({3, 4}, s + 2);
    auto k2 = oracle::random_tensor({4, 2, 3, 3}, s + 3);
    auto k3 = oracle::random_tensor({2, 2, 3, 3, 2}, s + 4);
    auto bias = oracle::random_tensor({4}, s + 5);
    check([&](const TD& v) { return matmul(v, w4); }, {2, 5, 3});
    check([&](const TD& v) { return matmul(w4, v); }, {4, 2});
    check([&](const TD& v) { return conv2d(v, k2, bias, Conv2dOptions{{1, 1}, {1, 1}, 1}); }, {2, 5, 4});
    check([&](const TD& v) { return conv2d(v, k2, bias, Conv2dOptions{{1, 0}, {2, 1}, 2}); }, {4, 5, 6});
    check([&](const TD& v) { return conv2d(k2, v, TD(), Conv2dOptions{{1, 1}, {1, 1}, 1}); }, {3, 2, 3, 3});
    check([&](const TD& v) { return conv3d(v, k3, TD(), Conv3dOptions{{1, 1, 0}}); }, {2, 4, 4, 3});
    check([&](const TD& v) { return conv3d(reshape(k3, {2, 2, 3, 3, 2}), v, TD::zeros({2})); }, {2, 2, 1, 1, 2});
    check([](const TD& v) { return softmax_lastdim(v); }, {3, 5});
    check([](const TD& v) { return sigmoid(v); }, {6});
    check([](const TD& v) { return ccnet::tanh(v); }, {6});
    check([](const TD& v) { return gelu(v); }, {6});
    check([](const TD& v) { return ccnet::exp(v); }, {6});
    check([&](const TD& v) { return div(v, add_scalar(ccnet::abs(w4), 0.5)); }, {3, 4});
    check([&](const TD& v) { return div(w4, add_scalar(mul(v, v), 0.5)); }, {3, 4});
    check([&](const TD& v) { return sub(mul(v, reshape(bias, {4, 1})), v); }, {4, 3});
    check([](const TD& v) { return mean(v, 1); }, {3, 4, 2});
    check([](const TD& v) { return sum(v, 0); }, {3, 4});
    check([](const TD& v) { return max(v, 1); }, {3, 4, 2});
    check([](const TD& v) { return permute(v, {2, 0, 1}); }, {2, 3, 4});
    check([](const TD& v) { return pad(v, 1, 2, 3, PadMode::Reflect); }, {2, 3, 2});
    check([](const TD& v) { return pad(v, 0, 1, 2, PadMode::Replicate); }, {3, 2});
    check([](const TD& v) { return pad(v, 1, 1, 1, PadMode::Zero); }, {2, 3});
    check([](const TD& v) {
      auto parts = split(v, 1, {1, 3});
      return concat(std::vector<TD>{parts[1], v, parts[0]}, 1);
    }, {2, 4});
    check([&](const TD& v) { return layer_norm(v, add_scalar(bias, 1.0), bias); }, {3, 4});
    check([&](const TD& g) { return layer_norm(w4, g, TD::zeros({4})); }, {4});
    check([](const TD& v) { return l2_normalize(v, 1); }, {2, 5, 3});
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("shape ops round trip bit-exactly") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto x = oracle::random_tensor({2, 3, 4}, 300 + seed);
    CHECK(vals(reshape(reshape(x, {4, 6}), {2, 3, 4})) == vals(x));
    CHECK(vals(permute(permute(x, {1, 2, 0}), {2, 0, 1})) == vals(x));
    auto parts = split(x, 2, {1, 2, 1});
    CHECK(vals(concat(parts, 2)) == vals(x));
    CHECK(vals(slice(pad(x, 1, 2, 1, PadMode::Reflect), 1, 2, 3)) == vals(x));
  }
}

TEST_CASE("pad modes") {
  auto x = TD::from({3}, {1, 2, 3});
  CHECK(vals(pad(x, 0, 2, 2, PadMode::Reflect)) == std::vector<double>{3, 2, 1, 2, 3, 2, 1});
  CHECK(vals(pad(x, 0, 1, 2, PadMode::Replicate)) == std::vector<double>{1, 1, 2, 3, 3, 3});
  CHECK(vals(pad(x, 0, 1, 1, PadMode::Zero)) == std::vector<double>{0, 1, 2, 3, 0});
  CHECK(vals(pad(TD::from({1}, {7}), 0, 0, 3, PadMode::Reflect)) == std::vector<double>{7, 7, 7, 7});
  CHECK(vals(pad(TD::from({2}, {1, 2}), 0, 0, 4, PadMode::Reflect)) == std::vector<double>{1, 2, 1, 2, 1, 2});
}

TEST_CASE("layer_norm normalizes the last axis") {
  auto x = oracle::random_tensor({5, 6}, 31, -4, 4);
  auto y = layer_norm(x, TD::full({6}, 1.0), TD::zeros({6}));
  for (Index r = 0; r < 5; ++r) {
    double m = 0, v = 0;
    for (Index c = 0; c < 6; ++c) m += y.at({r, c});
    m /= 6;
    for (Index c = 0; c < 6; ++c) v += (y.at({r, c}) - m) * (y.at({r, c}) - m);
    CHECK(std::abs(m) < 1e-12);
    CHECK(v / 6 == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("l2_normalize guards zero vectors") {
  auto y = l2_normalize(TD::from({2, 2}, {3, 0, 4, 0}), 0);
  CHECK(oracle::max_abs_diff(y, {0.6, 0, 0.8, 0}) < 1e-15);
  CHECK(y.at({0, 1}) == 0.0);
  CHECK(y.at({1, 1}) == 0.0);
}

TEST_CASE("float path agrees with double path") {
  auto xd = oracle::random_tensor({2, 5, 5}, 40);
  auto wd = oracle::random_tensor({3, 2, 3, 3}, 41);
  Tensor<float> xf(xd.shape(), xd.values().cast<float>());
  Tensor<float> wf(wd.shape(), wd.values().cast<float>());
  auto yd = conv2d(xd, wd, TD());
  auto yf = conv2d(xf, wf, Tensor<float>());
  CHECK(((yd.values() - yf.values().cast<double>()).abs() < 1e-5).all());
}
