#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "aligncap/model.hpp"
#include "aligncap/ops.hpp"

using namespace aligncap;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, double bound = 1.0) {
  Rng rng(seed);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return Tensor(std::move(shape), std::move(v));
}

Tensor row(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor({1, n}, std::move(v));
}

void fill(Tensor t, double value) {
  for (double& x : t.mutable_data()) x = value;
}

const double kLn2 = std::log(2.0);

}  // namespace

// ---- tagging loss -------------------------------------------------------------

TEST(TaggingLossTest, ZeroLogitsGiveLn2) {
  EXPECT_NEAR(tagging_loss(row({0, 0, 0, 0}), row({1, 0, 0, 1})).item(), kLn2, 1e-15);
  EXPECT_NEAR(tagging_loss(row({0, 0, 0}), row({0, 0, 0})).item(), kLn2, 1e-15);
}

TEST(TaggingLossTest, SaturatedCorrectIsNearZero) {
  EXPECT_LE(tagging_loss(row({20, -20, -20, 20}), row({1, 0, 0, 1})).item(), 1e-8);
}

TEST(TaggingLossTest, MatchesElementwiseOracle) {
  const Tensor logits = random_tensor({1, 64}, 3, 5.0);
  Rng rng(4);
  std::vector<double> y(64);
  for (double& v : y) v = rng.bernoulli(0.1) ? 1.0 : 0.0;
  double expected = 0.0;
  for (std::size_t v = 0; v < 64; ++v) {
    const double l = logits.data()[v];
    const double p = 1.0 / (1.0 + std::exp(-l));
    expected += -(y[v] * std::log(p) + (1.0 - y[v]) * std::log(1.0 - p));
  }
  expected /= 64.0;
  EXPECT_NEAR(tagging_loss(logits, row(y)).item(), expected, 1e-12);
}

TEST(TaggingLossTest, ShapeMismatch) {
  EXPECT_THROW(tagging_loss(row({0, 0}), row({0, 0, 0})), ShapeError);
}

// ---- captioning loss -------------------------------------------------------------

class CaptioningLossTest : public ::testing::Test {
 protected:
  ParameterStore store{5};
  LLMStub llm{store, Vocabulary::with_filler(std::vector<std::string>{"a", "dog"}, 40), 8, 2};
  Tensor prefix = random_tensor({3, 8}, 9);
};

TEST_F(CaptioningLossTest, UniformDecoderGivesLnV) {
  fill(store.at("frozen-llm/head.weight"), 0.0);
  fill(store.at("frozen-llm/head.bias"), 0.0);
  const auto tokens = llm.tokenize("a dog a");
  EXPECT_NEAR(captioning_loss(prefix, tokens, llm).item(), std::log(40.0), 1e-12);
}

TEST_F(CaptioningLossTest, SaturatedTargetIsNearZero) {
  fill(store.at("frozen-llm/head.weight"), 0.0);
  fill(store.at("frozen-llm/head.bias"), 0.0);
  store.at("frozen-llm/head.bias").mutable_data()[5] = 30.0;
  const std::vector<TokenId> tokens{Vocabulary::kBos, 5, 5, 5};
  EXPECT_LE(captioning_loss(prefix, tokens, llm).item(), 1e-8);
}

TEST_F(CaptioningLossTest, MatchesLogSoftmaxOracle) {
  const auto tokens = llm.tokenize("a dog a dog");
  const std::vector<TokenId> inputs(tokens.begin(), tokens.end() - 1);
  const Tensor logits = llm.decode_logits(prefix, inputs);
  double expected = 0.0;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < logits.cols(); ++v) m = std::max(m, logits.at(t, v));
    double z = 0.0;
    for (std::size_t v = 0; v < logits.cols(); ++v) z += std::exp(logits.at(t, v) - m);
    expected += m + std::log(z) - logits.at(t, tokens[t + 1]);
  }
  expected /= static_cast<double>(inputs.size());
  EXPECT_NEAR(captioning_loss(prefix, tokens, llm).item(), expected, 1e-10);
}

TEST_F(CaptioningLossTest, EmptyCaptionRejected) {
  EXPECT_THROW(captioning_loss(prefix, llm.tokenize(""), llm), PreconditionError);
}

TEST_F(CaptioningLossTest, GradientReachesPrefixOnly) {
  Tensor p = random_tensor({3, 8}, 10);
  p.set_requires_grad(true);
  captioning_loss(p, llm.tokenize("a dog"), llm).backward();
  ASSERT_TRUE(p.has_grad());
  double norm = 0.0;
  for (double g : p.grad()) norm += g * g;
  EXPECT_GT(norm, 0.0);
  EXPECT_FALSE(store.at("frozen-llm/head.weight").has_grad());
}

// ---- total loss -------------------------------------------------------------------

TEST(TotalLossTest, WorkedCases) {
  const Tensor a = Tensor::scalar(0.5), b = Tensor::scalar(1.0), c = Tensor::scalar(0.25),
               d = Tensor::scalar(0.25);
  EXPECT_EQ(total_loss(a, b, c, d, LossWeights{1, 1, 1, 1}).item(), 2.0);
  EXPECT_EQ(total_loss(a, b, c, d, LossWeights{0, 0, 0, 0}).item(), 0.0);
  EXPECT_EQ(total_loss(a, b, c, d, LossWeights{1, 0, 0, 0}).item(), 0.5);
}

TEST(TotalLossTest, MatchesHandSumOnRandomDraws) {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    double comp[4], w[4];
    for (int i = 0; i < 4; ++i) {
      comp[i] = rng.uniform(0.0, 10.0);
      w[i] = rng.uniform(0.0, 2.0);
    }
    const double expected = w[0] * comp[0] + w[1] * comp[1] + w[2] * comp[2] + w[3] * comp[3];
    const double got = total_loss(Tensor::scalar(comp[0]), Tensor::scalar(comp[1]),
                                  Tensor::scalar(comp[2]), Tensor::scalar(comp[3]),
                                  LossWeights{w[0], w[1], w[2], w[3]})
                           .item();
    EXPECT_NEAR(got, expected, 1e-12);
  }
}

TEST(TotalLossTest, Linearity) {
  const LossWeights w{0.3, 1.7, 0.9, 2.1};
  const double c[4] = {0.7, 3.1, 1.3, 0.4};
  const double k = 2.5;
  auto total = [&](double s) {
    return total_loss(Tensor::scalar(s * c[0]), Tensor::scalar(s * c[1]), Tensor::scalar(s * c[2]),
                      Tensor::scalar(s * c[3]), w)
        .item();
  };
  EXPECT_NEAR(total(k), k * total(1.0), 1e-12);
}

TEST(TotalLossTest, NonFiniteComponentNamed) {
  const Tensor ok = Tensor::scalar(1.0);
  const Tensor bad = Tensor::scalar(std::numeric_limits<double>::quiet_NaN());
  try {
    total_loss(ok, ok, bad, ok, LossWeights{});
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("l_cond"), std::string::npos) << e.what();
  }
  EXPECT_THROW(total_loss(ok, Tensor::scalar(INFINITY), ok, ok, LossWeights{}), NumericError);
}

TEST(TotalLossTest, GradientIsTheWeights) {
  Tensor parts[4] = {Tensor::scalar(1.0, true), Tensor::scalar(2.0, true),
                     Tensor::scalar(3.0, true), Tensor::scalar(4.0, true)};
  total_loss(parts[0], parts[1], parts[2], parts[3], LossWeights{0.5, 0.0, 2.0, 1.5}).backward();
  EXPECT_EQ(parts[0].grad()[0], 0.5);
  EXPECT_EQ(parts[1].grad()[0], 0.0);
  EXPECT_EQ(parts[2].grad()[0], 2.0);
  EXPECT_EQ(parts[3].grad()[0], 1.5);
}

// ---- full model ---------------------------------------------------------------------

class AlignCapModelTest : public ::testing::Test {
 protected:
  static TrainingConfig config() {
    TrainingConfig c = TrainingConfig::minimized();
    c.dropout_p = 0.2;
    return c;
  }
  std::vector<SyntheticExample> data(const AlignCapModel& m) const {
    return make_synthetic_dataset(3, 2, m.config().dims.grid, m.config().dims.channels, m.tags());
  }
};

TEST_F(AlignCapModelTest, ForwardIsDeterministic) {
  AlignCapModel a(config()), b(config());
  const auto batch = data(a);
  const LossValues x = a.forward(batch, Rng(5), true).values();
  const LossValues y = b.forward(batch, Rng(5), true).values();
  EXPECT_EQ(x.l_tag, y.l_tag);
  EXPECT_EQ(x.l_cap, y.l_cap);
  EXPECT_EQ(x.l_cond, y.l_cond);
  EXPECT_EQ(x.l_multi, y.l_multi);
  EXPECT_EQ(x.total, y.total);
}

TEST_F(AlignCapModelTest, ComponentsNonNegativeAndSummed) {
  AlignCapModel m(config());
  const LossValues v = m.forward(data(m), Rng(1), true).values();
  EXPECT_GE(v.l_tag, 0.0);
  EXPECT_GE(v.l_cap, 0.0);
  EXPECT_GE(v.l_cond, 0.0);
  EXPECT_GE(v.l_multi, 0.0);
  EXPECT_NEAR(v.total, v.l_tag + v.l_cap + v.l_cond + v.l_multi, 1e-12);
}

TEST_F(AlignCapModelTest, EvalIgnoresDropoutSeed) {
  AlignCapModel m(config());
  const auto batch = data(m);
  // Eval views are picked deterministically and dropout is off, so only the
  // GOD candidate pool depends on the rng; with no detections it is fixed.
  std::vector<SyntheticExample> plain = batch;
  for (auto& ex : plain) ex.detections.clear();
  EXPECT_EQ(m.forward(plain, Rng(1), false).values().total,
            m.forward(plain, Rng(2), false).values().total);
}

TEST_F(AlignCapModelTest, EmptyBatchRejected) {
  AlignCapModel m(config());
  EXPECT_THROW(m.forward({}, Rng(1), true), PreconditionError);
}

TEST_F(AlignCapModelTest, GradientsReachEveryModuleButNotFrozen) {
  AlignCapModel m(config());
  m.forward(data(m), Rng(1), true).total.backward();
  for (const char* name : {"spatial-awareness/latent.bank", "latent-refinement/adapter.weight",
                           "semantic-alignment/fusion_proj.weight", "losses-training/tag_head.weight",
                           "latent-refinement/sigmoid.tau_log", "semantic-alignment/sigmoid.bias"}) {
    const Parameter* p = m.parameters().find(name);
    ASSERT_NE(p, nullptr) << name;
    ASSERT_TRUE(p->tensor.has_grad()) << name;
    double norm = 0.0;
    for (double g : p->tensor.grad()) norm += std::abs(g);
    EXPECT_GT(norm, 0.0) << name;
  }
  for (const Parameter& p : m.parameters().all()) {
    if (!p.trainable) EXPECT_FALSE(p.tensor.has_grad()) << p.name;
  }
}

TEST_F(AlignCapModelTest, GatingZeroesSimilarityHeads) {
  TrainingConfig c = config();
  c.weights.gamma = 0.0;
  c.weights.lambda = 0.0;
  AlignCapModel m(c);
  m.forward(data(m), Rng(1), true).total.backward();
  std::size_t checked = 0;
  for (const Parameter& p : m.parameters().all()) {
    const bool head = p.name.starts_with("latent-refinement/head.") ||
                      p.name.starts_with("semantic-alignment/head.") ||
                      p.name.find("/sigmoid.") != std::string::npos;
    if (!head) continue;
    ++checked;
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) ASSERT_EQ(g, 0.0) << p.name;
  }
  EXPECT_GT(checked, 10u);
}

TEST_F(AlignCapModelTest, ViewsForTrainingAndInference) {
  AlignCapModel m(config());
  const auto ex = data(m)[0];
  Rng r1(3), r2(3);
  const auto train_views = m.views_for(ex.target, ex.detections, ex.scene, r1, true);
  EXPECT_EQ(train_views.size(), m.config().god.j);
  EXPECT_TRUE(train_views.front().is_target);
  const auto eval_views = m.views_for(ex.target, ex.detections, ex.scene, r2, false);
  ASSERT_EQ(eval_views.size(), 2u);
  EXPECT_TRUE(eval_views.front().is_target);
}

TEST_F(AlignCapModelTest, CaptionTokensInVocabulary) {
  AlignCapModel m(config());
  const auto ex = data(m)[0];
  const CaptionPrediction p = m.caption(ex.scene, ex.target, ex.detections, 3, 20, Rng(4));
  EXPECT_EQ(p.tags.size(), 3u);
  EXPECT_LE(p.tokens.size(), 20u);
  for (TokenId id : p.tokens) {
    EXPECT_LT(id, m.llm().vocab_size());
    EXPECT_GE(id, Vocabulary::kReserved);
  }
  const CaptionPrediction again = m.caption(ex.scene, ex.target, ex.detections, 3, 20, Rng(4));
  EXPECT_EQ(p.tokens, again.tokens);
  EXPECT_EQ(p.tags, again.tags);
}

TEST_F(AlignCapModelTest, CaptionRejectsWrongSceneShape) {
  AlignCapModel m(config());
  const SceneInput wrong = SceneInput::from_values(2, 4, std::vector<double>(16, 0.0));
  EXPECT_THROW(m.caption(wrong, BBox::full(), {}, 3, 5, Rng(1)), ShapeError);
}

TEST_F(AlignCapModelTest, InvalidConfigRejected) {
  TrainingConfig c = config();
  c.dims.h = 3;
  EXPECT_THROW(AlignCapModel{c}, ValidationError);
}
