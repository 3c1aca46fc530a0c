#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "aligncap/grad_check.hpp"
#include "aligncap/nn.hpp"
#include "aligncap/ops.hpp"
#include "aligncap/rng.hpp"
#include "aligncap/tensor.hpp"

using namespace aligncap;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, bool requires_grad = false,
                     double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

std::vector<double> to_vec(std::span<const double> s) { return {s.begin(), s.end()}; }

}  // namespace

TEST(Rng, SameSeedSameStream) {
  Rng a(7), b(7);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  Rng c(8);
  EXPECT_NE(Rng(7).next_u64(), c.next_u64());
}

TEST(Rng, SplitIsIndependentOfParentPosition) {
  Rng a(11);
  const Rng child1 = a.split("dropout");
  a.next_u64();
  const Rng child2 = a.split("dropout");
  Rng x = child1, y = child2;
  EXPECT_EQ(x.next_u64(), y.next_u64());
  EXPECT_NE(Rng(11).split("a").next_u64(), Rng(11).split("b").next_u64());
}

TEST(Rng, UniformRange) {
  Rng r(3);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(r.below(7), 7u);
  }
}

TEST(Tensor, ConstructionChecksElementCount) {
  EXPECT_THROW(Tensor({2, 3}, {1, 2, 3}), ShapeError);
  const Tensor t = Tensor::zeros({0, 4});
  EXPECT_EQ(t.rows(), 0u);
  EXPECT_EQ(t.cols(), 4u);
}

TEST(Matmul, IdentityCase) {
  const Tensor a = random_tensor({3, 3}, 1);
  const Tensor eye = Tensor::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  EXPECT_EQ(to_vec(matmul(a, eye).data()), to_vec(a.data()));
}

TEST(Matmul, ZeroAnnihilator) {
  const Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
  const Tensor z = Tensor::zeros({2, 2});
  EXPECT_EQ(to_vec(matmul(a, z).data()), std::vector<double>(4, 0.0));
}

TEST(Matmul, MatchesTripleLoopOracle) {
  const Tensor a = random_tensor({4, 5}, 2);
  const Tensor b = random_tensor({5, 3}, 3);
  const Tensor c = matmul(a, b);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < 5; ++p) s += a.at(i, p) * b.at(p, j);
      EXPECT_NEAR(c.at(i, j), s, 1e-12);
    }
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2}));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos);
    EXPECT_NE(msg.find("[4,2]"), std::string::npos);
  }
}

TEST(LayerNorm, ConstantRowMapsToBias) {
  const Tensor x = Tensor::matrix({{5, 5, 5, 5}});
  const Tensor y = layer_norm(x, Tensor::full({4}, 1.0), Tensor::zeros({4}), 1e-5);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, AlreadyNormalizedRow) {
  const Tensor y =
      layer_norm(Tensor::matrix({{1, -1}}), Tensor::full({2}, 1.0), Tensor::zeros({2}), 1e-12);
  EXPECT_NEAR(y.at(0, 0), 1.0, 1e-9);
  EXPECT_NEAR(y.at(0, 1), -1.0, 1e-9);
}

TEST(LayerNorm, RowMomentsMatchDirectRecomputation) {
  // Wide inputs: the eps term biases the variance by eps / var.
  const Tensor x = random_tensor({3, 8}, 5, false, -20.0, 20.0);
  const Tensor y = layer_norm(x, Tensor::full({8}, 1.0), Tensor::zeros({8}), 1e-5);
  for (std::size_t i = 0; i < 3; ++i) {
    double mu = 0.0, var = 0.0;
    for (std::size_t j = 0; j < 8; ++j) mu += y.at(i, j);
    mu /= 8.0;
    for (std::size_t j = 0; j < 8; ++j) var += (y.at(i, j) - mu) * (y.at(i, j) - mu);
    var /= 8.0;
    EXPECT_LE(std::abs(mu), 1e-12);
    EXPECT_NEAR(var, 1.0, 1e-6);
  }
}

TEST(LayerNorm, EmptyDimensionRejected) {
  EXPECT_THROW(layer_norm(Tensor::zeros({2, 0}), Tensor::zeros({0}), Tensor::zeros({0}), 1e-5),
               ShapeError);
}

TEST(Softmax, Symmetry) {
  const Tensor y = softmax(Tensor::matrix({{0, 0}}));
  EXPECT_EQ(y.at(0, 0), 0.5);
  EXPECT_EQ(y.at(0, 1), 0.5);
}

TEST(Softmax, NoOverflow) {
  const Tensor y = softmax(Tensor::matrix({{1000, 0}}));
  EXPECT_NEAR(y.at(0, 0), 1.0, 1e-15);
  EXPECT_GE(y.at(0, 1), 0.0);
  EXPECT_LT(y.at(0, 1), 1e-300);
}

TEST(Softmax, MatchesExtendedPrecisionOracle) {
  const Tensor x = random_tensor({2, 5}, 9, false, -4.0, 4.0);
  const Tensor y = softmax(x);
  for (std::size_t i = 0; i < 2; ++i) {
    long double z = 0.0L;
    for (std::size_t j = 0; j < 5; ++j) z += std::exp(static_cast<long double>(x.at(i, j)));
    for (std::size_t j = 0; j < 5; ++j) {
      const long double expected = std::exp(static_cast<long double>(x.at(i, j))) / z;
      EXPECT_NEAR(y.at(i, j), static_cast<double>(expected), 1e-12);
    }
  }
}

TEST(Softmax, CausalMaskZeroesFutureColumns) {
  const Tensor y = softmax(Tensor::matrix({{1, 2, 3}, {1, 2, 3}}), std::size_t{0});
  EXPECT_EQ(y.at(0, 0), 1.0);
  EXPECT_EQ(y.at(0, 1), 0.0);
  EXPECT_EQ(y.at(1, 2), 0.0);
  EXPECT_NEAR(y.at(1, 0) + y.at(1, 1), 1.0, 1e-15);
}

TEST(Silu, KnownValues) {
  EXPECT_EQ(silu(Tensor::scalar(0.0)).item(), 0.0);
  EXPECT_NEAR(silu(Tensor::scalar(20.0)).item(), 20.0, 1e-7);
  EXPECT_NEAR(silu(Tensor::scalar(-1.0)).item(), -0.26894142136999512075, 1e-15);
}

TEST(Softplus, KnownValuesAndStability) {
  EXPECT_NEAR(softplus(0.0), 0.69314718055994530942, 1e-15);
  EXPECT_EQ(softplus(1000.0), 1000.0);
  EXPECT_TRUE(std::isfinite(softplus(1e6)));
  EXPECT_EQ(softplus(-1e6), 0.0);
  EXPECT_NEAR(softplus(-20.0), 2.0611536203143807e-9, 1e-22);
}

TEST(Dropout, ZeroProbabilityIsIdentity) {
  const Tensor x = random_tensor({4, 4}, 1);
  Rng rng(1);
  EXPECT_EQ(to_vec(dropout(x, 0.0, rng, true).data()), to_vec(x.data()));
}

TEST(Dropout, EvalModeIsIdentity) {
  const Tensor x = random_tensor({4, 4}, 1);
  Rng rng(1);
  EXPECT_EQ(to_vec(dropout(x, 0.5, rng, false).data()), to_vec(x.data()));
}

TEST(Dropout, EmpiricalKeepRateAndMean) {
  const std::size_t n = 100000;
  const Tensor x = random_tensor({n}, 4, false, 0.5, 1.5);
  Rng rng(42);
  const Tensor y = dropout(x, 0.5, rng, true);
  std::size_t kept = 0;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (y.data()[i] != 0.0) ++kept;
    mx += x.data()[i];
    my += y.data()[i];
  }
  EXPECT_NEAR(static_cast<double>(kept) / n, 0.5, 0.01);
  EXPECT_NEAR(my / mx, 1.0, 0.02);
}

TEST(Dropout, InvalidProbability) {
  Rng rng(1);
  EXPECT_THROW(dropout(Tensor::zeros({2}), 1.0, rng, true), PreconditionError);
}

TEST(Dropout, SameSeedSameMask) {
  const Tensor x = random_tensor({64}, 2);
  Rng a(5), b(5);
  EXPECT_EQ(to_vec(dropout(x, 0.3, a, true).data()), to_vec(dropout(x, 0.3, b, true).data()));
}

TEST(Backward, SumGivesOnes) {
  Tensor x = random_tensor({2, 2}, 1, true);
  sum(x).backward();
  EXPECT_EQ(to_vec(x.grad()), std::vector<double>(4, 1.0));
}

TEST(Backward, HalfSquareGivesIdentity) {
  Tensor x = random_tensor({2, 2}, 1, true);
  scale(sum(mul(x, x)), 0.5).backward();
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(x.grad()[i], x.data()[i]);
}

TEST(Backward, NonScalarRejected) {
  Tensor x = random_tensor({2, 2}, 1, true);
  EXPECT_THROW(x.backward(), ShapeError);
}

TEST(Backward, AccumulatesExactlyAcrossUses) {
  Tensor x = random_tensor({3, 4}, 8, true);
  auto f = [](const Tensor& t) { return sum(tanh(matmul(t, transpose(t)))); };
  f(x).backward();
  const auto single = to_vec(x.grad());
  x.zero_grad();
  add(f(x), f(x)).backward();
  for (std::size_t i = 0; i < single.size(); ++i) EXPECT_EQ(x.grad()[i], 2.0 * single[i]);
}

TEST(Backward, Linearity) {
  Tensor x = random_tensor({3, 3}, 12, true);
  auto f = [](const Tensor& t) { return sum(silu(t)); };
  auto g = [](const Tensor& t) { return mean(softplus(matmul(t, t))); };
  f(x).backward();
  const auto gf = to_vec(x.grad());
  x.zero_grad();
  g(x).backward();
  const auto gg = to_vec(x.grad());
  x.zero_grad();
  const double a = 0.7, b = -2.5;
  add(scale(f(x), a), scale(g(x), b)).backward();
  for (std::size_t i = 0; i < gf.size(); ++i) EXPECT_NEAR(x.grad()[i], a * gf[i] + b * gg[i], 1e-12);
}

TEST(Backward, FrozenLeafPassesGradientThrough) {
  Tensor w = random_tensor({3, 3}, 1, false);
  Tensor x = random_tensor({2, 3}, 2, true);
  sum(matmul(x, w)).backward();
  EXPECT_FALSE(w.has_grad());
  EXPECT_TRUE(x.has_grad());
}

TEST(FiniteDiff, ExactQuadratic) {
  Tensor x({3}, {1, 2, 3}, true);
  const auto r = finite_diff_check([](const Tensor& t) { return scale(sum(mul(t, t)), 0.5); }, x);
  EXPECT_LE(r.max_rel_error, 1e-8);
}

TEST(FiniteDiff, LayerNormThenSum) {
  Tensor x = random_tensor({2, 4}, 21, true);
  const Tensor gain = random_tensor({4}, 22);
  const Tensor bias = random_tensor({4}, 23);
  // Weighted sum so the gradient is not identically zero.
  const Tensor w = random_tensor({2, 4}, 24);
  const auto r = finite_diff_check(
      [&](const Tensor& t) { return sum(mul(layer_norm(t, gain, bias, 1e-5), w)); }, x);
  EXPECT_LE(r.max_rel_error, 1e-5);
  const auto plain =
      finite_diff_check([&](const Tensor& t) { return sum(layer_norm(t, gain, bias, 1e-5)); }, x);
  EXPECT_LE(plain.max_rel_error, 1e-5);
}

TEST(FiniteDiff, ConstantComposite) {
  Tensor x = random_tensor({2, 3}, 31, true);
  const auto r = finite_diff_check([](const Tensor& t) { return sum(softmax(t)); }, x);
  EXPECT_LE(r.max_rel_error, 1e-6);
  for (double g : x.grad()) EXPECT_NEAR(g, 0.0, 1e-15);
}

TEST(FiniteDiff, DetectsNonDeterminism) {
  Tensor x = random_tensor({4}, 3, true);
  Rng rng(1);
  EXPECT_THROW(finite_diff_check([&](const Tensor& t) { return sum(dropout(t, 0.5, rng, true)); },
                                 x),
               GradCheckError);
}

// Gradient soundness for every primitive on seeded inputs.
TEST(FiniteDiff, EveryPrimitive) {
  const Tensor w = random_tensor({3, 4}, 99);
  const Tensor row = random_tensor({4}, 98);
  struct Case {
    const char* name;
    std::function<Tensor(const Tensor&)> f;
  };
  const std::vector<Case> cases = {
      {"matmul", [&](const Tensor& t) { return sum(mul(matmul(t, transpose(w)), matmul(t, transpose(w)))); }},
      {"add_row", [&](const Tensor& t) { return sum(mul(add(t, row), w)); }},
      {"mul", [&](const Tensor& t) { return sum(mul(mul(t, t), w)); }},
      {"sub", [&](const Tensor& t) { return sum(mul(sub(w, t), sub(t, w))); }},
      {"exp", [&](const Tensor& t) { return sum(mul(exp(t), w)); }},
      {"tanh", [&](const Tensor& t) { return sum(mul(tanh(t), w)); }},
      {"sigmoid", [&](const Tensor& t) { return sum(mul(sigmoid(t), w)); }},
      {"silu", [&](const Tensor& t) { return sum(mul(silu(t), w)); }},
      {"softplus", [&](const Tensor& t) { return sum(mul(softplus(t), w)); }},
      {"softmax", [&](const Tensor& t) { return sum(mul(softmax(t), w)); }},
      {"causal_softmax", [&](const Tensor& t) { return sum(mul(softmax(t, std::size_t{1}), w)); }},
      {"layer_norm", [&](const Tensor& t) { return sum(mul(layer_norm(t, row, row, 1e-5), w)); }},
      {"mean_rows", [&](const Tensor& t) { return sum(mul(mean_rows(t), mean_rows(w))); }},
      {"slices", [&](const Tensor& t) {
         const Tensor parts[] = {slice_cols(t, 2, 4), slice_cols(t, 0, 2)};
         return sum(mul(concat_cols(parts), w));
       }},
      {"rows", [&](const Tensor& t) {
         const Tensor parts[] = {slice_rows(t, 1, 3), slice_rows(t, 0, 1)};
         return sum(mul(concat_rows(parts), w));
       }},
      {"gather", [&](const Tensor& t) {
         const std::size_t ids[] = {2, 0, 2};
         return sum(mul(gather_rows(t, ids), w));
       }},
      {"mix_rows", [&](const Tensor& t) {
         RowMix mix;
         mix.terms = {{{0, 0.25}, {2, 0.75}}, {{1, 1.0}}, {{0, -0.5}, {1, 0.5}}};
         return sum(mul(mix_rows(t, mix), w));
       }},
      {"cross_entropy", [&](const Tensor& t) {
         const std::size_t tg[] = {1, 3, 0};
         return cross_entropy(t, tg);
       }},
      {"stack", [&](const Tensor& t) {
         const Tensor s[] = {sum(t), mean(mul(t, t))};
         return sum(mul(stack_scalars(s, {2}), Tensor({2}, {1.5, -0.5})));
       }},
  };
  for (const auto& c : cases) {
    Tensor x = random_tensor({3, 4}, 77, true);
    const auto r = finite_diff_check(c.f, x);
    EXPECT_LE(r.max_rel_error, 1e-5) << c.name;
  }
}

TEST(FiniteChecks, DetectNonFiniteWhenEnabled) {
  const bool previous = finite_checks_enabled();
  set_finite_checks(true);
  EXPECT_THROW(exp(Tensor::scalar(1e6)), NumericError);
  set_finite_checks(false);
  EXPECT_NO_THROW(exp(Tensor::scalar(1e6)));
  set_finite_checks(previous);
}

TEST(Attention, SingleKeyReturnsItsValue) {
  const Tensor q = random_tensor({3, 4}, 1);
  const Tensor k = random_tensor({1, 4}, 2);
  const Tensor v = random_tensor({1, 4}, 3);
  const Tensor out = attend(q, k, v, 2);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(out.at(i, j), v.at(0, j));
}
