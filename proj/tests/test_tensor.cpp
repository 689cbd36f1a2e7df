#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "f2net/grad_check.hpp"
#include "f2net/ops.hpp"
#include "f2net/optim.hpp"
#include "test_util.hpp"

using namespace f2net;
using f2test::conv_oracle;
using f2test::max_abs_diff;
using f2test::param;
using f2test::random_tensor;
using T = Tensor<double>;

namespace {

// Weighted-sum loss so each output element gets a distinct upstream gradient.
T weighted(const T& y, std::uint64_t seed) {
  return sum(mul(y, f2test::probe_weights(y.shape(), seed)));
}

double upsample_oracle(const T& x, std::size_t factor, std::size_t oy, std::size_t ox, std::size_t c) {
  auto coord = [&](std::size_t o, std::size_t in, std::size_t& lo, std::size_t& hi) {
    double s = (o + 0.5) / factor - 0.5;
    s = std::clamp(s, 0.0, double(in - 1));
    lo = static_cast<std::size_t>(std::floor(s));
    hi = std::min(lo + 1, in - 1);
    return s - lo;
  };
  std::size_t y0, y1, x0, x1;
  const double wy = coord(oy, x.dim(0), y0, y1);
  const double wx = coord(ox, x.dim(1), x0, x1);
  return (1 - wy) * ((1 - wx) * x.at(y0, x0, c) + wx * x.at(y0, x1, c)) +
         wy * ((1 - wx) * x.at(y1, x0, c) + wx * x.at(y1, x1, c));
}

}  // namespace

TEST(Tensor, DataLengthMustMatchShape) {
  EXPECT_THROW(T::from({2, 3}, std::vector<double>(5)), DimensionError);
  const auto t = T::zeros({2, 3, 4});
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(t.rank(), 3u);
  EXPECT_FALSE(t.has_grad());
  EXPECT_TRUE(T::zeros({2}, true).has_grad());
}

TEST(Tensor, CloneIsDeep) {
  auto a = T::from({2}, {1, 2});
  auto b = a.clone();
  b.mutable_data()[0] = 7;
  EXPECT_EQ(a[0], 1);
  EXPECT_EQ(b[0], 7);
}

TEST(Matmul, IdentityAndHandArithmetic) {
  std::mt19937_64 rng(1);
  const auto b = random_tensor({2, 3}, rng);
  const auto id = T::from({2, 2}, {1, 0, 0, 1});
  EXPECT_EQ(matmul(id, b).values(), b.values());
  const auto y = matmul(T::from({2, 2}, {1, 2, 3, 4}), T::from({2, 1}, {1, 1}));
  EXPECT_EQ(y.shape(), (Shape{2, 1}));
  EXPECT_EQ(y.values(), (std::vector<double>{3, 7}));
}

TEST(Matmul, MismatchNamesBothShapes) {
  try {
    matmul(T::zeros({2, 3}), T::zeros({4, 2}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2x3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("4x2"), std::string::npos) << msg;
  }
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    auto a = param({3, 4}, rng);
    auto b = param({4, 2}, rng);
    EXPECT_LT(grad_check<double>([&] { return weighted(matmul(a, b), seed); }, {a, b}, 1e-3), 1e-6);
  }
}

TEST(Transpose, SwapsAxesAndBackpropagates) {
  std::mt19937_64 rng(3);
  auto a = param({2, 3}, rng);
  const auto t = transpose(a);
  EXPECT_EQ(t.shape(), (Shape{3, 2}));
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(t[j * 2 + i], a[i * 3 + j]);
  EXPECT_LT(grad_check<double>([&] { return weighted(transpose(a), 9); }, {a}, 1e-3), 1e-8);
}

TEST(Softmax, ClosedForms) {
  const auto eq = softmax(T::full({4}, 2.5), 0);
  for (double v : eq.values()) EXPECT_NEAR(v, 0.25, 1e-15);
  const auto two = softmax(T::from({2}, {0, std::log(3.0)}), 0);
  EXPECT_NEAR(two[0], 0.25, 1e-15);
  EXPECT_NEAR(two[1], 0.75, 1e-15);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  std::mt19937_64 rng(4);
  for (std::size_t axis = 0; axis < 3; ++axis) {
    const auto x = random_tensor({3, 4, 5}, rng, -5, 5);
    const auto y = softmax(x, axis);
    std::vector<double> shifted(x.values());
    // Add a constant that varies across the other axes but not along `axis`.
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        for (std::size_t k = 0; k < 5; ++k) {
          const std::size_t idx[3] = {i, j, k};
          double c = 0;
          for (std::size_t a = 0; a < 3; ++a)
            if (a != axis) c += 1.7 * static_cast<double>(idx[a]) + 3;
          shifted[(i * 4 + j) * 5 + k] += c;
        }
    const auto ys = softmax(T::from({3, 4, 5}, shifted), axis);
    EXPECT_LT(max_abs_diff(y, ys), 1e-9);
    const std::size_t dims[3] = {3, 4, 5};
    for (std::size_t i = 0; i < 60; ++i) EXPECT_GT(y[i], 0);
    std::vector<double> totals(60 / dims[axis], 0);
    std::size_t n = 0;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        for (std::size_t k = 0; k < 5; ++k) {
          const std::size_t idx[3] = {i, j, k};
          std::size_t key = 0;
          for (std::size_t a = 0; a < 3; ++a)
            if (a != axis) key = key * dims[a] + idx[a];
          totals[key] += y[n++];
        }
    for (double t : totals) EXPECT_NEAR(t, 1.0, 1e-9);
  }
}

TEST(Softmax, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    auto v = param({5}, rng, 2);
    EXPECT_LT(grad_check<double>([&] { return weighted(softmax(v, 0), seed); }, {v}, 1e-3), 1e-6);
    auto m = param({3, 4}, rng, 2);
    EXPECT_LT(grad_check<double>([&] { return weighted(softmax(m, 1), seed + 1); }, {m}, 1e-3), 1e-6);
  }
}

TEST(Conv2d, HandCountedOnes) {
  const auto y = conv2d(T::full({3, 3, 1}, 1), T::full({3, 3, 1, 1}, 1), {1, 1, 1});
  EXPECT_EQ(y.shape(), (Shape{3, 3, 1}));
  EXPECT_EQ(y.at(1, 1, 0), 9);
  EXPECT_EQ(y.at(0, 0, 0), 4);
  EXPECT_EQ(y.at(0, 1, 0), 6);
}

TEST(Conv2d, PointwiseKernelMixesChannels) {
  std::mt19937_64 rng(5);
  const auto x = random_tensor({4, 4, 2}, rng);
  const auto k = T::from({1, 1, 2, 2}, {0, 1, 1, 0});  // swap channels
  const auto y = conv2d(x, k);
  for (std::size_t p = 0; p < 16; ++p) {
    EXPECT_EQ(y[p * 2], x[p * 2 + 1]);
    EXPECT_EQ(y[p * 2 + 1], x[p * 2]);
  }
}

TEST(Conv2d, MatchesNestedLoopOracleExactly) {
  struct G { std::size_t k, stride, pad, dil; };
  const G geoms[] = {{3, 1, 1, 1}, {3, 2, 1, 1}, {3, 1, 0, 1}, {3, 1, 2, 2}, {1, 1, 0, 1}, {2, 2, 0, 1}, {3, 3, 1, 1}};
  std::mt19937_64 rng(6);
  for (const auto& g : geoms) {
    const auto x = random_tensor({5, 5, 2}, rng);
    const auto k = random_tensor({g.k, g.k, 2, 3}, rng);
    const auto y = conv2d(x, k, {g.stride, g.pad, g.dil});
    const auto ref = conv_oracle(x, k, g.stride, g.pad, g.dil);
    ASSERT_EQ(y.size(), ref.size());
    EXPECT_EQ(y.dim(0), conv_output_size(5, g.k, {g.stride, g.pad, g.dil}));
    EXPECT_LT(max_abs_diff(y.values(), ref), 1e-13);
  }
}

TEST(Conv2d, OutputSizeFormulaAndGeometryErrors) {
  EXPECT_EQ(conv_output_size(64, 3, {2, 1, 1}), 32u);
  EXPECT_EQ(conv_output_size(5, 3, {1, 0, 2}), 1u);
  EXPECT_THROW(conv_output_size(2, 3, {1, 0, 1}), GeometryError);
  EXPECT_THROW(conv_output_size(5, 3, {0, 0, 1}), GeometryError);
  EXPECT_THROW(conv2d(T::zeros({2, 2, 1}), T::zeros({5, 5, 1, 1})), GeometryError);
  EXPECT_THROW(conv2d(T::zeros({4, 4, 2}), T::zeros({3, 3, 1, 1})), DimensionError);
}

TEST(Conv2d, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    auto x = param({5, 5, 2}, rng);
    auto k = param({3, 3, 2, 3}, rng);
    const Conv2dGeometry geom{1 + seed % 2, 1, seed % 3 == 2 ? 2u : 1u};
    EXPECT_LT(grad_check<double>([&] { return weighted(conv2d(x, k, geom), seed); }, {x, k}, 1e-3), 1e-6);
  }
}

TEST(Elementwise, BasicIdentities) {
  EXPECT_EQ(sigmoid(T::scalar(0)).item(), 0.5);
  std::mt19937_64 rng(7);
  const auto a = random_tensor({2, 3, 4}, rng);
  EXPECT_EQ(mul(a, T::full({2, 3, 4}, 1)).values(), a.values());
  const auto r = relu(T::from({3}, {-1, 0, 2}));
  EXPECT_EQ(r.values(), (std::vector<double>{0, 0, 2}));
  EXPECT_EQ(scale(T::from({2}, {1, -2}), 3.0).values(), (std::vector<double>{3, -6}));
}

TEST(Elementwise, ChannelBroadcastBothSides) {
  const auto x = T::from({1, 2, 2}, {1, 2, 3, 4});
  const auto b = T::from({1, 1, 2}, {10, 20});
  EXPECT_EQ(add(x, b).values(), (std::vector<double>{11, 22, 13, 24}));
  EXPECT_EQ(add(b, x).values(), (std::vector<double>{11, 22, 13, 24}));
  EXPECT_EQ(mul(x, b).values(), (std::vector<double>{10, 40, 30, 80}));
  EXPECT_THROW(add(x, T::zeros({1, 2, 1})), DimensionError);
  EXPECT_THROW(add(x, T::zeros({2, 2})), DimensionError);
}

TEST(Elementwise, MulMapScalesEveryChannel) {
  const auto x = T::from({1, 2, 2}, {1, 2, 3, 4});
  const auto m = T::from({1, 2, 1}, {2, -1});
  EXPECT_EQ(mul_map(x, m).values(), (std::vector<double>{2, 4, -3, -4}));
  EXPECT_THROW(mul_map(x, T::zeros({1, 2, 2})), DimensionError);
}

TEST(Elementwise, GradientsMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    auto a = param({2, 3, 4}, rng, 2);
    auto b = param({2, 3, 4}, rng, 2);
    auto c = param({1, 1, 4}, rng, 2);
    auto m = param({2, 3, 1}, rng, 2);
    EXPECT_LT(grad_check<double>([&] { return weighted(sigmoid(a), seed); }, {a}, 1e-3), 1e-6);
    EXPECT_LT(grad_check<double>([&] { return weighted(add(a, b), seed); }, {a, b}, 1e-3), 1e-6);
    EXPECT_LT(grad_check<double>([&] { return weighted(mul(a, b), seed); }, {a, b}, 1e-3), 1e-6);
    EXPECT_LT(grad_check<double>([&] { return weighted(add(a, c), seed); }, {a, c}, 1e-3), 1e-6);
    EXPECT_LT(grad_check<double>([&] { return weighted(mul(c, a), seed); }, {a, c}, 1e-3), 1e-6);
    EXPECT_LT(grad_check<double>([&] { return weighted(mul_map(a, m), seed); }, {a, m}, 1e-3), 1e-6);
    EXPECT_LT(grad_check<double>([&] { return weighted(scale(a, -1.5), seed); }, {a}, 1e-3), 1e-6);
  }
}

TEST(Elementwise, ReluGradientAwayFromKink) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    auto a = param({3, 3, 2}, rng);
    for (auto& v : a.mutable_data())
      if (std::abs(v) < 0.01) v = 0.5;
    EXPECT_LT(grad_check<double>([&] { return weighted(relu(a), seed); }, {a}, 1e-3), 1e-6);
  }
}

TEST(Structural, ConcatAndSlice) {
  std::mt19937_64 rng(8);
  const auto a = random_tensor({2, 2, 1}, rng);
  const auto b = random_tensor({2, 2, 3}, rng);
  const auto c = concat<double>({a, b}, 2);
  EXPECT_EQ(c.shape(), (Shape{2, 2, 4}));
  EXPECT_EQ(slice(c, 2, 0, 1).values(), a.values());
  EXPECT_EQ(slice(c, 2, 1, 4).values(), b.values());
  const auto rows = concat<double>({a, a}, 0);
  EXPECT_EQ(rows.shape(), (Shape{4, 2, 1}));
  EXPECT_EQ(slice(rows, 0, 2, 4).values(), a.values());
  EXPECT_THROW(concat<double>({a, T::zeros({3, 2, 1})}, 2), DimensionError);
  EXPECT_THROW(slice(c, 2, 3, 5), DimensionError);
}

TEST(Structural, GradientsMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    auto a = param({2, 3, 2}, rng);
    auto b = param({2, 3, 3}, rng);
    EXPECT_LT(grad_check<double>([&] { return weighted(concat<double>({a, b}, 2), seed); }, {a, b}, 1e-3), 1e-6);
    EXPECT_LT(grad_check<double>([&] { return weighted(slice(b, 2, 1, 3), seed); }, {b}, 1e-3), 1e-6);
    EXPECT_LT(grad_check<double>([&] { return weighted(reshape(b, {6, 3}), seed); }, {b}, 1e-3), 1e-6);
  }
}

TEST(GlobalAvgPool, ClosedForms) {
  const auto c = global_avg_pool(T::full({3, 2, 2}, 1.5));
  EXPECT_EQ(c.shape(), (Shape{1, 1, 2}));
  EXPECT_EQ(c.values(), (std::vector<double>{1.5, 1.5}));
  EXPECT_EQ(global_avg_pool(T::from({2, 2, 1}, {1, 2, 3, 4})).item(), 2.5);
}

TEST(GlobalAvgPool, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    auto x = param({3, 4, 2}, rng);
    EXPECT_LT(grad_check<double>([&] { return weighted(global_avg_pool(x), seed); }, {x}, 1e-3), 1e-6);
  }
}

TEST(FullyConnected, IdentityAndZeroWeights) {
  std::mt19937_64 rng(9);
  const auto x = random_tensor({1, 1, 3}, rng);
  const auto id = T::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  EXPECT_EQ(fully_connected(x, id, T::zeros({1, 1, 3})).values(), x.values());
  const auto bias = T::from({1, 1, 2}, {0.5, -2});
  EXPECT_EQ(fully_connected(x, T::zeros({3, 2}), bias).values(), bias.values());
  EXPECT_THROW(fully_connected(x, T::zeros({2, 2}), bias), DimensionError);
}

TEST(FullyConnected, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    auto x = param({1, 1, 4}, rng);
    auto w = param({4, 3}, rng);
    auto b = param({1, 1, 3}, rng);
    EXPECT_LT(grad_check<double>([&] { return weighted(fully_connected(x, w, b), seed); }, {x, w, b}, 1e-3), 1e-6);
  }
}

TEST(BilinearUpsample, ConstantAndReplicated) {
  const auto c = bilinear_upsample(T::full({3, 2, 2}, 0.7), 4);
  EXPECT_EQ(c.shape(), (Shape{12, 8, 2}));
  for (double v : c.values()) EXPECT_NEAR(v, 0.7, 1e-15);
  const auto one = bilinear_upsample(T::from({1, 1, 2}, {3, -1}), 8);
  for (std::size_t p = 0; p < 64; ++p) {
    EXPECT_EQ(one[p * 2], 3);
    EXPECT_EQ(one[p * 2 + 1], -1);
  }
}

TEST(BilinearUpsample, MatchesScalarInterpolation) {
  const auto ramp = T::from({2, 2, 1}, {0, 1, 2, 3});
  const auto up = bilinear_upsample(ramp, 2);
  // Hand-computed align_corners=false grid for the 2x2 ramp.
  const std::vector<double> expected = {0,   0.25, 0.75, 1,   0.5, 0.75, 1.25, 1.5,
                                        1.5, 1.75, 2.25, 2.5, 2,   2.25, 2.75, 3};
  EXPECT_LT(max_abs_diff(up.values(), expected), 1e-15);
  std::mt19937_64 rng(10);
  for (std::size_t factor : {2u, 4u, 8u}) {
    const auto x = random_tensor({3, 4, 2}, rng);
    const auto y = bilinear_upsample(x, factor);
    for (std::size_t oy = 0; oy < y.dim(0); ++oy)
      for (std::size_t ox = 0; ox < y.dim(1); ++ox)
        for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(y.at(oy, ox, c), upsample_oracle(x, factor, oy, ox, c), 1e-14);
  }
}

TEST(BilinearUpsample, RejectsUnsupportedFactor) {
  EXPECT_THROW(bilinear_upsample(T::zeros({2, 2, 1}), 3), std::invalid_argument);
  EXPECT_THROW(bilinear_upsample(T::zeros({2, 2, 1}), 1), std::invalid_argument);
}

TEST(BilinearUpsample, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    auto x = param({3, 2, 2}, rng);
    const std::size_t factor = std::size_t{2} << (seed % 3);
    EXPECT_LT(grad_check<double>([&] { return weighted(bilinear_upsample(x, factor), seed); }, {x}, 1e-3), 1e-6);
  }
}

TEST(Backward, SumAndSquare) {
  auto x = T::from({3}, {1, 2, 3}, true);
  backward(sum(x));
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), (std::vector<double>{1, 1, 1}));
  auto s = T::scalar(3, true);
  backward(mul(s, s));
  EXPECT_EQ(s.grad()[0], 6);
}

TEST(Backward, ErrorsOnMisuse) {
  auto x = T::from({2}, {1, 2}, true);
  EXPECT_THROW(backward(mul(x, x)), GraphError);
  const auto loss = sum(mul(x, x));
  backward(loss);
  EXPECT_THROW(backward(loss), GraphError);
  EXPECT_THROW(backward(sum(T::from({2}, {1, 2}))), GraphError);
}

TEST(Backward, AccumulatesAcrossConsumersAndCalls) {
  std::mt19937_64 rng(11);
  auto x = param({2, 2, 2}, rng);
  // x feeds three consumers.
  auto f = [&] { return sum(add(mul(x, x), add(sigmoid(x), scale(x, 2.0)))); };
  EXPECT_LT(grad_check<double>(f, {x}, 1e-3), 1e-7);
  backward(sum(x));
  backward(sum(x));
  for (double g : x.grad()) EXPECT_EQ(g, 2);
}

TEST(Backward, ComposedChainMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    auto x = param({6, 6, 2}, rng);
    auto k = param({3, 3, 2, 4}, rng, 0.5);
    // Keep every pre-activation clear of the ReLU kink so the finite
    // differences never straddle it.
    while (true) {
      const auto pre = conv2d(x, k, {1, 1, 1});
      if (std::all_of(pre.data().begin(), pre.data().end(), [](double v) { return std::abs(v) > 5e-3; })) break;
      k = param({3, 3, 2, 4}, rng, 0.5);
    }
    auto w = param({4, 3}, rng);
    auto b = param({1, 1, 3}, rng);
    auto f = [&] {
      return weighted(fully_connected(global_avg_pool(relu(conv2d(x, k, {1, 1, 1}))), w, b), seed);
    };
    EXPECT_LT(grad_check<double>(f, {x, k, w, b}, 1e-3), 1e-4);
  }
}

TEST(GradCheck, ExactOnPolynomials) {
  std::mt19937_64 rng(12);
  auto x = param({5}, rng);
  const auto c = random_tensor({5}, rng);
  EXPECT_LT(grad_check<double>([&](const T& v) { return sum(mul(v, c)); }, x, 1e-3), 1e-10);
  EXPECT_LT(grad_check<double>([&](const T& v) { return sum(mul(v, v)); }, x, 1e-3), 1e-8);
}

TEST(Sgd, UpdateRule) {
  auto p = T::scalar(1, true);
  p.mutable_grad()[0] = 2;
  std::vector<T> ps{p};
  sgd_step<double>(ps, 0.5);
  EXPECT_EQ(p.item(), 0);
  EXPECT_EQ(p.grad()[0], 0);

  auto q = T::from({2}, {1, 2}, true);
  q.mutable_grad()[0] = 5;
  std::vector<T> qs{q};
  sgd_step<double>(qs, 0.0);
  EXPECT_EQ(q.values(), (std::vector<double>{1, 2}));

  std::vector<T> missing{T::from({1}, {1})};
  EXPECT_THROW(sgd_step<double>(missing, 0.1), GraphError);
}

TEST(Sgd, TwoStepsEqualOneSummedStep) {
  auto a = T::from({2}, {1, -1}, true);
  auto b = T::from({2}, {1, -1}, true);
  const std::vector<double> g1 = {0.3, -0.2}, g2 = {1.1, 0.4};
  std::vector<T> as{a}, bs{b};
  for (const auto* g : {&g1, &g2}) {
    for (std::size_t i = 0; i < 2; ++i) a.mutable_grad()[i] = (*g)[i];
    sgd_step<double>(as, 0.25);
  }
  for (std::size_t i = 0; i < 2; ++i) b.mutable_grad()[i] = g1[i] + g2[i];
  sgd_step<double>(bs, 0.25);
  EXPECT_LT(max_abs_diff(a.values(), b.values()), 1e-15);
}

TEST(Sgd, ClipGradNormRescales) {
  auto a = T::from({2}, {0, 0}, true);
  a.mutable_grad()[0] = 3;
  a.mutable_grad()[1] = 4;
  std::vector<T> ps{a};
  EXPECT_DOUBLE_EQ(clip_grad_norm<double>(ps, 1.0), 5.0);
  EXPECT_NEAR(a.grad()[0], 0.6, 1e-15);
  EXPECT_NEAR(a.grad()[1], 0.8, 1e-15);
  EXPECT_NEAR(clip_grad_norm<double>(ps, 10.0), 1.0, 1e-15);
  EXPECT_NEAR(a.grad()[0], 0.6, 1e-15);
}

TEST(Determinism, ForwardBackwardBitIdentical) {
  auto run = [] {
    std::mt19937_64 rng(13);
    auto x = param({6, 6, 3}, rng);
    auto k = param({3, 3, 3, 4}, rng);
    backward(weighted(softmax(conv2d(x, k, {2, 1, 1}), 2), 3));
    std::vector<double> out(k.grad().begin(), k.grad().end());
    out.insert(out.end(), x.grad().begin(), x.grad().end());
    return out;
  };
  EXPECT_EQ(run(), run());
}
