#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "wcc/gradcheck.hpp"
#include "wcc/ops.hpp"

using namespace wcc;

namespace {

// Direct six-nested-loop correlation, the independent reference for conv2d.
template <typename T>
Tensor<T> conv_oracle(const Tensor<T>& x, const Tensor<T>& w, long stride, long pad) {
  const Shape xs = x.shape(), ws = w.shape();
  const long oh = (xs.h + 2 * pad - ws.h) / stride + 1;
  const long ow = (xs.w + 2 * pad - ws.w) / stride + 1;
  Tensor<T> out = Tensor<T>::zeros({xs.n, ws.n, oh, ow});
  for (long n = 0; n < xs.n; ++n)
    for (long co = 0; co < ws.n; ++co)
      for (long y = 0; y < oh; ++y)
        for (long z = 0; z < ow; ++z) {
          T acc = 0;
          for (long ci = 0; ci < xs.c; ++ci)
            for (long kh = 0; kh < ws.h; ++kh)
              for (long kw = 0; kw < ws.w; ++kw) {
                const long ih = y * stride - pad + kh;
                const long iw = z * stride - pad + kw;
                if (ih >= 0 && ih < xs.h && iw >= 0 && iw < xs.w)
                  acc += x.at(n, ci, ih, iw) * w.at(co, ci, kh, kw);
              }
          out.at(n, co, y, z) = acc;
        }
  return out;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  EXPECT_EQ(a.shape().str(), b.shape().str());
  double m = 0;
  for (long i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(double(a.data()[i]) - double(b.data()[i])));
  return m;
}

}  // namespace

TEST(Conv2d, ScalarKernelScales) {
  Tensor<float> x = Tensor<float>::full({1, 1, 2, 2}, 1.0f);
  Tensor<float> k = Tensor<float>::full({1, 1, 1, 1}, 2.0f);
  Tensor<float> y = conv2d(x, k, 1, 0);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  for (float v : y.data()) EXPECT_FLOAT_EQ(v, 2.0f);
}

TEST(Conv2d, DeltaKernelIsIdentity) {
  Rng rng(1);
  Tensor<float> x = Tensor<float>::randn({1, 1, 5, 5}, rng);
  Tensor<float> k = Tensor<float>::zeros({1, 1, 3, 3});
  k.at(0, 0, 1, 1) = 1.0f;
  Tensor<float> y = conv2d(x, k, 1, 1);
  EXPECT_LT(max_abs_diff(x, y), 1e-7);
}

TEST(Conv2d, MatchesLoopOracle) {
  Rng rng(2);
  Tensor<float> x = Tensor<float>::randn({2, 3, 8, 8}, rng);
  Tensor<float> k = Tensor<float>::randn({4, 3, 3, 3}, rng);
  EXPECT_LT(max_abs_diff(conv2d(x, k, 1, 0), conv_oracle(x, k, 1, 0)), 1e-6);
  EXPECT_LT(max_abs_diff(conv2d(x, k, 1, 1), conv_oracle(x, k, 1, 1)), 1e-6);
  EXPECT_LT(max_abs_diff(conv2d(x, k, 2, 1), conv_oracle(x, k, 2, 1)), 1e-6);
}

TEST(Conv2d, OracleAcrossShapes) {
  Rng rng(3);
  for (int trial = 0; trial < 12; ++trial) {
    const long n = 1 + rng.next_below(2), cin = 1 + rng.next_below(4);
    const long cout = 1 + rng.next_below(4);
    const long h = 3 + rng.next_below(6), w = 3 + rng.next_below(6);
    const long k = 1 + 2 * rng.next_below(2);  // 1 or 3
    const long stride = 1 + rng.next_below(2), pad = rng.next_below(2);
    if (h + 2 * pad < k || w + 2 * pad < k) continue;
    Tensor<float> x = Tensor<float>::randn({n, cin, h, w}, rng);
    Tensor<float> kr = Tensor<float>::randn({cout, cin, k, k}, rng);
    EXPECT_LT(max_abs_diff(conv2d(x, kr, stride, pad), conv_oracle(x, kr, stride, pad)), 1e-6);
  }
}

TEST(Conv2d, CompositionLinearity) {
  Rng rng(4);
  Tensor<float> x = Tensor<float>::randn({1, 2, 6, 6}, rng);
  Tensor<float> k = Tensor<float>::randn({3, 2, 3, 3}, rng);
  Tensor<float> lhs = conv2d(mul_const(x, 2.5f), k, 1, 1);
  Tensor<float> rhs = mul_const(conv2d(x, k, 1, 1), 2.5f);
  EXPECT_LT(max_abs_diff(lhs, rhs), 1e-5);
}

TEST(Conv2d, RejectsChannelMismatch) {
  Tensor<float> x = Tensor<float>::zeros({1, 2, 4, 4});
  Tensor<float> k = Tensor<float>::zeros({1, 3, 3, 3});
  EXPECT_THROW(conv2d(x, k, 1, 1), ShapeError);
  Tensor<float> big = Tensor<float>::zeros({1, 2, 5, 5});
  EXPECT_THROW(conv2d(Tensor<float>::zeros({1, 2, 2, 2}), Tensor<float>::zeros({1, 2, 3, 3}), 1, 0),
               ShapeError);
}

TEST(Conv2d, GradCheck) {
  Rng rng(5);
  Tensor<double> x = Tensor<double>::randn({1, 2, 5, 5}, rng);
  Tensor<double> k = Tensor<double>::randn({3, 2, 3, 3}, rng);
  Tensor<double> wrt[] = {x, k};
  const double err = gradcheck([&]() { return sum_all(conv2d(x, k, 2, 1)); }, wrt);
  EXPECT_LT(err, 1e-8);
}

TEST(BatchNorm, TwoPointNormalization) {
  Tensor<float> x = Tensor<float>::from({2, 1, 1, 1}, {1.0f, 3.0f});
  Tensor<float> alpha = Tensor<float>::full({1, 1, 1, 1}, 1.0f);
  Tensor<float> beta = Tensor<float>::zeros({1, 1, 1, 1});
  Tensor<float> y = batchnorm2d(x, alpha, beta, 1e-8f);
  EXPECT_NEAR(y.data()[0], -1.0f, 1e-4);
  EXPECT_NEAR(y.data()[1], 1.0f, 1e-4);
}

TEST(BatchNorm, AffineCollapse) {
  Rng rng(6);
  Tensor<float> x = Tensor<float>::randn({2, 3, 4, 4}, rng);
  Tensor<float> alpha = Tensor<float>::zeros({1, 3, 1, 1});
  Tensor<float> beta = Tensor<float>::full({1, 3, 1, 1}, 5.0f);
  Tensor<float> y = batchnorm2d(x, alpha, beta, 1e-5f);
  for (float v : y.data()) EXPECT_FLOAT_EQ(v, 5.0f);
}

TEST(BatchNorm, StatisticsRecomputation) {
  Rng rng(7);
  Tensor<float> x = Tensor<float>::randn({4, 2, 4, 4}, rng, 2.0f, 0.7f);
  Tensor<float> alpha = Tensor<float>::full({1, 2, 1, 1}, 1.0f);
  Tensor<float> beta = Tensor<float>::zeros({1, 2, 1, 1});
  Tensor<float> y = batchnorm2d(x, alpha, beta, 1e-6f);
  const long plane = 16, m = 4 * plane;
  for (long c = 0; c < 2; ++c) {
    double sum = 0, sq = 0;
    for (long n = 0; n < 4; ++n)
      for (long i = 0; i < plane; ++i) {
        const double v = y.data()[(n * 2 + c) * plane + i];
        sum += v;
        sq += v * v;
      }
    const double mean = sum / m;
    const double std = std::sqrt(sq / m - mean * mean);
    EXPECT_LE(std::abs(mean), 1e-5);
    EXPECT_NEAR(std, 1.0, 1e-3);
  }
}

TEST(BatchNorm, ZeroVarianceStabilized) {
  Tensor<float> x = Tensor<float>::full({2, 1, 2, 2}, 4.0f);
  Tensor<float> alpha = Tensor<float>::full({1, 1, 1, 1}, 1.0f);
  Tensor<float> beta = Tensor<float>::zeros({1, 1, 1, 1});
  Tensor<float> y = batchnorm2d(x, alpha, beta, 1e-5f);
  EXPECT_TRUE(y.all_finite());
  for (float v : y.data()) EXPECT_NEAR(v, 0.0f, 1e-5);
}

TEST(BatchNorm, RunningStatsAndEvalMode) {
  Rng rng(8);
  Tensor<float> alpha = Tensor<float>::full({1, 2, 1, 1}, 1.0f);
  Tensor<float> beta = Tensor<float>::zeros({1, 2, 1, 1});
  Tensor<float> rm = Tensor<float>::zeros({1, 2, 1, 1});
  Tensor<float> rv = Tensor<float>::full({1, 2, 1, 1}, 1.0f);
  Tensor<float> x = Tensor<float>::randn({4, 2, 4, 4}, rng, 1.0f, 2.0f);
  for (int i = 0; i < 50; ++i) batchnorm2d(x, alpha, beta, 1e-5f, true, &rm, &rv, 0.1f);
  EXPECT_NEAR(rm.data()[0], 2.0f, 0.2f);
  Tensor<float> y = batchnorm2d(x, alpha, beta, 1e-5f, false, &rm, &rv);
  EXPECT_TRUE(y.all_finite());
}

TEST(BatchNorm, GradCheck) {
  Rng rng(9);
  Tensor<double> x = Tensor<double>::randn({2, 2, 3, 3}, rng);
  Tensor<double> alpha = Tensor<double>::full({1, 2, 1, 1}, 0.8);
  Tensor<double> beta = Tensor<double>::full({1, 2, 1, 1}, -0.2);
  Tensor<double> wrt[] = {x, alpha, beta};
  const double err =
      gradcheck([&]() { return sum_all(leaky_relu(batchnorm2d(x, alpha, beta, 1e-5), 0.1)); }, wrt);
  EXPECT_LT(err, 1e-6);
}

TEST(LeakyRelu, PointValuesAndOracle) {
  Tensor<float> x = Tensor<float>::from({1, 1, 1, 2}, {2.0f, -2.0f});
  Tensor<float> y = leaky_relu(x, 0.1f);
  EXPECT_FLOAT_EQ(y.data()[0], 2.0f);
  EXPECT_FLOAT_EQ(y.data()[1], -0.2f);
  Rng rng(10);
  Tensor<float> r = Tensor<float>::randn({2, 3, 4, 4}, rng);
  Tensor<float> out = leaky_relu(r, 0.3f);
  for (long i = 0; i < r.numel(); ++i) {
    const float e = r.data()[i] >= 0 ? r.data()[i] : 0.3f * r.data()[i];
    EXPECT_FLOAT_EQ(out.data()[i], e);
  }
  EXPECT_THROW(leaky_relu(x, 1.5f), UsageError);
  EXPECT_THROW(leaky_relu(x, 0.0f), UsageError);
}

TEST(SoftmaxWindow, UniformAndSaturated) {
  std::vector<float> uniform(9, 3.0f);
  auto w = softmax_window<float>(uniform);
  for (float v : w) EXPECT_NEAR(v, 1.0f / 9.0f, 1e-6);

  std::vector<float> sat(9, 0.0f);
  sat[0] = 1000.0f;
  auto s = softmax_window<float>(sat);
  EXPECT_NEAR(s[0], 1.0f, 1e-6);
  for (int i = 1; i < 9; ++i) EXPECT_NEAR(s[i], 0.0f, 1e-6);
  for (float v : s) EXPECT_TRUE(std::isfinite(v));
}

TEST(SoftmaxWindow, HighPrecisionOracleAndInvariance) {
  Rng rng(11);
  std::vector<double> logits(9);
  for (auto& v : logits) v = rng.uniform(-4, 4);
  auto w = softmax_window<double>(logits);
  // exp-normalize reference in long double
  long double denom = 0;
  for (double v : logits) denom += expl((long double)v);
  double sum = 0;
  for (int i = 0; i < 9; ++i) {
    EXPECT_NEAR(w[i], double(expl((long double)logits[i]) / denom), 1e-7);
    sum += w[i];
  }
  EXPECT_NEAR(sum, 1.0, 1e-6);

  std::vector<double> shifted = logits;
  for (auto& v : shifted) v += 123.0;
  auto w2 = softmax_window<double>(shifted);
  for (int i = 0; i < 9; ++i) EXPECT_NEAR(w[i], w2[i], 1e-9);
}

TEST(ConcatChannels, LayoutAndRoundTrip) {
  Tensor<float> a = Tensor<float>::full({1, 2, 2, 2}, 1.0f);
  Tensor<float> b = Tensor<float>::zeros({1, 3, 2, 2});
  Tensor<float> y = concat_channels(a, b);
  EXPECT_EQ(y.shape(), (Shape{1, 5, 2, 2}));
  for (long c = 0; c < 2; ++c)
    for (long i = 0; i < 4; ++i) EXPECT_FLOAT_EQ(y.data()[c * 4 + i], 1.0f);

  Rng rng(12);
  Tensor<float> r1 = Tensor<float>::randn({2, 2, 3, 3}, rng);
  Tensor<float> r2 = Tensor<float>::randn({2, 4, 3, 3}, rng);
  Tensor<float> cat = concat_channels(r1, r2);
  EXPECT_LT(max_abs_diff(slice_channels(cat, 0, 2), r1), 1e-7);
  EXPECT_LT(max_abs_diff(slice_channels(cat, 2, 6), r2), 1e-7);
  // element indexing reference
  for (long n = 0; n < 2; ++n)
    for (long h = 0; h < 3; ++h)
      for (long w = 0; w < 3; ++w) {
        for (long c = 0; c < 2; ++c) EXPECT_FLOAT_EQ(cat.at(n, c, h, w), r1.at(n, c, h, w));
        for (long c = 0; c < 4; ++c) EXPECT_FLOAT_EQ(cat.at(n, 2 + c, h, w), r2.at(n, c, h, w));
      }

  EXPECT_THROW(concat_channels(r1, Tensor<float>::zeros({2, 1, 4, 4})), ShapeError);
}

TEST(ConcatSlice, GradCheck) {
  Rng rng(13);
  Tensor<double> a = Tensor<double>::randn({1, 2, 3, 3}, rng);
  Tensor<double> b = Tensor<double>::randn({1, 1, 3, 3}, rng);
  Tensor<double> wrt[] = {a, b};
  const double err = gradcheck(
      [&]() { return sum_all(slice_channels(concat_channels(a, b), 1, 3)); }, wrt);
  EXPECT_LT(err, 1e-9);
}

TEST(SymmetricPad, DefinitionalExamples) {
  Tensor<float> row = Tensor<float>::from({1, 1, 1, 3}, {1, 2, 3});
  Tensor<float> p1 = symmetric_pad(row, Axis::kW, 1, 1);
  const std::vector<float> want1 = {1, 1, 2, 3, 3};
  for (int i = 0; i < 5; ++i) EXPECT_FLOAT_EQ(p1.data()[i], want1[i]);

  Tensor<float> same = symmetric_pad(row, Axis::kW, 0, 0);
  EXPECT_LT(max_abs_diff(same, row), 1e-9);

  Tensor<float> row4 = Tensor<float>::from({1, 1, 1, 4}, {1, 2, 3, 4});
  Tensor<float> p2 = symmetric_pad(row4, Axis::kW, 2, 2);
  const std::vector<float> want2 = {2, 1, 1, 2, 3, 4, 4, 3};
  for (int i = 0; i < 8; ++i) EXPECT_FLOAT_EQ(p2.data()[i], want2[i]);

  EXPECT_THROW(symmetric_pad(row, Axis::kW, 4, 0), ShapeError);
}

TEST(SymmetricPad, PadThenCropIsIdentity) {
  Rng rng(14);
  Tensor<float> x = Tensor<float>::randn({1, 2, 5, 4}, rng);
  Tensor<float> padded = symmetric_pad(symmetric_pad(x, Axis::kH, 2, 1), Axis::kW, 1, 2);
  Tensor<float> crop = Tensor<float>::zeros(x.shape());
  for (long n = 0; n < 1; ++n)
    for (long c = 0; c < 2; ++c)
      for (long h = 0; h < 5; ++h)
        for (long w = 0; w < 4; ++w) crop.at(n, c, h, w) = padded.at(n, c, h + 2, w + 1);
  EXPECT_LT(max_abs_diff(crop, x), 1e-9);
}

TEST(SymmetricPad, GradCheck) {
  Rng rng(15);
  Tensor<double> x = Tensor<double>::randn({1, 1, 3, 4}, rng);
  Tensor<double> wrt[] = {x};
  const double err = gradcheck(
      [&]() { return sum_all(mse_loss(symmetric_pad(x, Axis::kW, 2, 1), Tensor<double>::zeros({1, 1, 3, 7}))); },
      wrt);
  EXPECT_LT(err, 1e-8);
}

TEST(BilinearSample, PointRules) {
  Tensor<float> row = Tensor<float>::from({1, 1, 1, 4}, {0, 1, 2, 3});
  EXPECT_FLOAT_EQ(bilinear_sample(row, 0, 0, 0.0f, 2.0f), 2.0f);   // integer coordinate
  EXPECT_FLOAT_EQ(bilinear_sample(row, 0, 0, 0.0f, 1.5f), 1.5f);   // linear ramp
  EXPECT_FLOAT_EQ(bilinear_sample(row, 0, 0, 0.0f, 3.5f), 1.5f);   // zero extension
  EXPECT_FLOAT_EQ(bilinear_sample(row, 0, 0, 0.0f, -1.0f), 0.0f);  // fully outside
  EXPECT_FLOAT_EQ(bilinear_sample(row, 0, 0, -0.5f, 1.0f), 0.5f);  // half off the top
}

TEST(GlobalAvgPoolLinear, GradCheck) {
  Rng rng(16);
  Tensor<double> x = Tensor<double>::randn({2, 3, 4, 4}, rng);
  Tensor<double> w = Tensor<double>::randn({5, 3, 1, 1}, rng);
  std::vector<long> labels = {1, 4};
  Tensor<double> wrt[] = {x, w};
  const double err = gradcheck(
      [&]() { return cross_entropy(linear(global_avg_pool(x), w), std::span<const long>(labels)); },
      wrt);
  EXPECT_LT(err, 1e-7);
}

TEST(CrossEntropy, KnownValuesAndStability) {
  Tensor<float> logits = Tensor<float>::from({1, 2, 1, 1}, {0.0f, 0.0f});
  std::vector<long> labels = {0};
  EXPECT_NEAR(cross_entropy(logits, std::span<const long>(labels)).item(), std::log(2.0f), 1e-6);
  Tensor<float> big = Tensor<float>::from({1, 2, 1, 1}, {1000.0f, 0.0f});
  EXPECT_NEAR(cross_entropy(big, std::span<const long>(labels)).item(), 0.0f, 1e-6);
}

TEST(MseLoss, ValueAndGrad) {
  Tensor<float> a = Tensor<float>::from({1, 1, 1, 2}, {1.0f, 3.0f});
  Tensor<float> b = Tensor<float>::from({1, 1, 1, 2}, {0.0f, 1.0f});
  EXPECT_NEAR(mse_loss(a, b).item(), (1.0f + 4.0f) / 2.0f, 1e-6);
  Rng rng(17);
  Tensor<double> x = Tensor<double>::randn({1, 2, 3, 3}, rng);
  Tensor<double> t = Tensor<double>::randn({1, 2, 3, 3}, rng);
  Tensor<double> wrt[] = {x};
  EXPECT_LT(gradcheck([&]() { return mse_loss(x, t); }, wrt), 1e-8);
}
