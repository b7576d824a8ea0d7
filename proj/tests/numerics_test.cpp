#include <boost/rational.hpp>
#include <cmath>
#include <random>

#include "gtest/gtest.h"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"
#include "vtc/numerics/ops.hpp"
#include "vtc/numerics/tape.hpp"

namespace vtc {
namespace {

using testing::gradient_error;
using testing::random_tensor;
using testing::rational_downsample;
using Rational = boost::rational<long long>;

Tensor triple_loop(const Tensor& a, const Tensor& b) {
  Tensor c({a.dim(0), b.dim(1)});
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < b.dim(1); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.dim(1); ++p) s += a(i, p) * b(p, j);
      c(i, j) = s;
    }
  return c;
}

TEST(Matmul, IdentityTimesIdentity) {
  Tensor i2 = Tensor::matrix({{1, 0}, {0, 1}});
  EXPECT_EQ(matmul(i2, i2), i2);
}

TEST(Matmul, HandComputedColumn) {
  Tensor out = matmul(Tensor::matrix({{1, 2}, {3, 4}}), Tensor::matrix({{0}, {1}}));
  EXPECT_EQ(out, Tensor::matrix({{2}, {4}}));
}

TEST(Matmul, MatchesTripleLoop) {
  std::mt19937_64 rng(11);
  Tensor a = random_tensor({5, 7}, rng), b = random_tensor({7, 3}, rng);
  Tensor got = matmul(a, b), want = triple_loop(a, b);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
}

TEST(Matmul, RejectsMismatch) {
  EXPECT_THROW(matmul(Tensor({2, 3}), Tensor({2, 3})), DimensionError);
}

TEST(Softmax, SymmetricInputIsUniform) {
  Tensor p = softmax(Tensor::vector({0, 0, 0}));
  for (double v : p.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
  Tensor p = softmax(Tensor::vector({1000, 0}));
  EXPECT_TRUE(std::isfinite(p[0]) && std::isfinite(p[1]));
  EXPECT_NEAR(p[0], 1.0, 1e-15);
  EXPECT_NEAR(p[1], 0.0, 1e-15);
}

TEST(Softmax, LowTemperatureMatchesExtendedPrecision) {
  Tensor p = softmax(Tensor::vector({1, 0}), 0.03);
  const long double e0 = 1.0L, e1 = std::exp(-1.0L / 0.03L);
  EXPECT_NEAR(p[0], static_cast<double>(e0 / (e0 + e1)), 1e-15);
  EXPECT_NEAR(p[1], static_cast<double>(e1 / (e0 + e1)), 1e-25);
}

TEST(Softmax, RowsAreProbabilityVectors) {
  std::mt19937_64 rng(3);
  Tensor p = softmax(random_tensor({6, 9}, rng, 4.0), 0.5);
  for (std::size_t r = 0; r < 6; ++r) {
    double s = 0.0;
    for (double v : p.row(r)) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Softmax, RejectsNonPositiveTemperature) {
  EXPECT_THROW(softmax(Tensor::vector({1, 2}), 0.0), ParameterError);
  EXPECT_THROW(softmax(Tensor::vector({1, 2}), -1.0), ParameterError);
}

TEST(BilinearDownsample, FactorOneIsIdentity) {
  std::mt19937_64 rng(5);
  Grid2D g(random_tensor({6, 4, 3}, rng));
  EXPECT_EQ(bilinear_downsample(g, 1), g);
}

TEST(BilinearDownsample, PreservesConstants) {
  for (std::size_t s : {1u, 2u, 4u}) {
    Grid2D g(8, 8, 2, 3.25);
    Grid2D out = bilinear_downsample(g, s);
    EXPECT_EQ(out.height(), 8 / s);
    for (double v : out.values().data()) EXPECT_DOUBLE_EQ(v, 3.25);
  }
}

TEST(BilinearDownsample, FourByFourMatchesRationalOracle) {
  Grid2D g(4, 4, 1);
  std::vector<Rational> exact;
  for (int i = 0; i < 16; ++i) {
    g.values()[i] = i;
    exact.emplace_back(i);
  }
  Grid2D out = bilinear_downsample(g, 2);
  auto want = rational_downsample(exact, 4, 4, 1, 2);
  ASSERT_EQ(out.values().size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) {
    EXPECT_NEAR(out.values()[i], boost::rational_cast<double>(want[i]), 1e-12);
  }
  // Half-pixel centres at s=2 average each 2x2 block: (0+1+4+5)/4.
  EXPECT_DOUBLE_EQ(out.values()[0], 2.5);
}

TEST(BilinearDownsample, RandomIntegerGridsMatchRationalOracle) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> val(-50, 50);
  for (auto [h, w, s] : {std::tuple{8, 8, 4}, std::tuple{12, 6, 3}, std::tuple{6, 10, 2}}) {
    Grid2D g(h, w, 2);
    std::vector<Rational> exact;
    for (double& v : g.values().data()) {
      v = val(rng);
      exact.emplace_back(static_cast<long long>(v));
    }
    auto want = rational_downsample(exact, h, w, 2, s);
    Grid2D out = bilinear_downsample(g, s);
    for (std::size_t i = 0; i < want.size(); ++i) {
      EXPECT_NEAR(out.values()[i], boost::rational_cast<double>(want[i]), 1e-12);
    }
  }
}

TEST(BilinearDownsample, IsLinear) {
  std::mt19937_64 rng(23);
  Grid2D a(random_tensor({8, 8, 3}, rng)), b(random_tensor({8, 8, 3}, rng));
  const double alpha = 0.7, beta = -1.3;
  Tensor mix({8, 8, 3});
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = alpha * a.values()[i] + beta * b.values()[i];
  Grid2D lhs = bilinear_downsample(Grid2D(mix), 2);
  Grid2D fa = bilinear_downsample(a, 2), fb = bilinear_downsample(b, 2);
  for (std::size_t i = 0; i < lhs.values().size(); ++i) {
    EXPECT_NEAR(lhs.values()[i], alpha * fa.values()[i] + beta * fb.values()[i], 1e-10);
  }
}

TEST(BilinearDownsample, OutputWithinInputRange) {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 20; ++trial) {
    Grid2D g(random_tensor({8, 8, 1}, rng));
    const auto [lo, hi] = std::minmax_element(g.values().data().begin(), g.values().data().end());
    for (std::size_t s : {2u, 4u}) {
      const Grid2D out = bilinear_downsample(g, s);
      for (double v : out.values().data()) {
        EXPECT_GE(v, *lo - 1e-15);
        EXPECT_LE(v, *hi + 1e-15);
      }
    }
  }
}

TEST(BilinearDownsample, RejectsNonDivisibleGrid) {
  Grid2D g(6, 8, 1);
  try {
    bilinear_downsample(g, 4);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("not divisible"), std::string::npos);
  }
}

TEST(L2Normalize, Cases) {
  EXPECT_EQ(l2_normalize(Tensor::vector({1, 0, 0})), Tensor::vector({1, 0, 0}));
  Tensor v = l2_normalize(Tensor::vector({3, 4}));
  EXPECT_NEAR(v[0], 0.6, 1e-15);
  EXPECT_NEAR(v[1], 0.8, 1e-15);
  std::mt19937_64 rng(31);
  EXPECT_NEAR(l2_norm(l2_normalize(random_tensor({32}, rng)).data()), 1.0, 1e-9);
}

TEST(L2Normalize, ZeroVectorIsDegenerate) {
  EXPECT_THROW(l2_normalize(Tensor({4})), DegenerateInputError);
}

class OpGradients : public ::testing::Test {
 protected:
  std::mt19937_64 rng{101};
  static constexpr double kTol = 1e-4;
};

TEST_F(OpGradients, Matmul) {
  auto f = [](Tape&, const std::vector<Var>& v) { return ad::matmul(v[0], v[1]); };
  EXPECT_LT(gradient_error({random_tensor({3, 4}, rng), random_tensor({4, 5}, rng)}, f), kTol);
}

TEST_F(OpGradients, Linear) {
  auto f = [](Tape&, const std::vector<Var>& v) { return ad::linear(v[0], v[1], v[2]); };
  EXPECT_LT(gradient_error({random_tensor({3, 4}, rng), random_tensor({4, 2}, rng), random_tensor({2}, rng)}, f),
            kTol);
}

TEST_F(OpGradients, LayerNormAndGelu) {
  auto f = [](Tape&, const std::vector<Var>& v) { return ad::gelu(ad::layer_norm(v[0], v[1], v[2])); };
  EXPECT_LT(gradient_error({random_tensor({4, 6}, rng), random_tensor({6}, rng), random_tensor({6}, rng)}, f), kTol);
}

TEST_F(OpGradients, CausalAttention) {
  auto f = [](Tape&, const std::vector<Var>& v) { return ad::causal_attention(v[0], 2); };
  EXPECT_LT(gradient_error({random_tensor({5, 12}, rng)}, f), kTol);
}

TEST_F(OpGradients, BilinearDownsample) {
  auto f = [](Tape&, const std::vector<Var>& v) { return ad::bilinear_downsample(v[0], 4, 4, 2); };
  EXPECT_LT(gradient_error({random_tensor({16, 3}, rng)}, f), kTol);
}

TEST_F(OpGradients, GatherConcatSliceNormalize) {
  auto f = [](Tape&, const std::vector<Var>& v) {
    Var rows = ad::concat_rows({ad::gather_rows(v[0], {2, 0, 2}), v[1]});
    return ad::l2_normalize(ad::take_row(ad::slice_rows(rows, 1, 3), 2));
  };
  EXPECT_LT(gradient_error({random_tensor({4, 5}, rng), random_tensor({2, 5}, rng)}, f), kTol);
}

TEST_F(OpGradients, CrossEntropy) {
  auto f = [](Tape&, const std::vector<Var>& v) { return ad::cross_entropy(v[0], {1, 0, 3}, {true, false, true}); };
  EXPECT_LT(gradient_error({random_tensor({3, 5}, rng)}, f), kTol);
}

TEST(AttentionProbabilities, RowsAreCausalDistributions) {
  std::mt19937_64 rng(41);
  Tensor qkv = random_tensor({7, 24}, rng, 2.0);
  for (std::size_t h = 0; h < 2; ++h) {
    auto p = ad::causal_attention_probs(qkv, 2, h);
    for (std::size_t i = 0; i < 7; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 7; ++j) {
        if (j > i) {
          EXPECT_EQ(p[i * 7 + j], 0.0);
        }
        EXPECT_GE(p[i * 7 + j], 0.0);
        s += p[i * 7 + j];
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(TapeBasics, SharedInputAccumulates) {
  Tape tape;
  Var x = tape.leaf(Tensor::matrix({{2.0}}));
  Var y = ad::matmul(x, x);  // x^2
  tape.backward(y);
  EXPECT_DOUBLE_EQ(tape.gradient(x)[0], 4.0);
}

}  // namespace
}  // namespace vtc
