#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "dupdist/model.hpp"
#include "dupdist/topic_head.hpp"
#include "test_support.hpp"

namespace dupdist {
namespace {

using test_util::random_tensor;
using test_util::random_vector;

TopicAttentionParams random_topic(std::size_t g, Rng& rng) {
  TopicAttentionParams p = TopicAttentionParams::zeros(g);
  for (double& v : p.w.data()) v = uniform(rng, -1.0, 1.0);
  p.b[0] = uniform(rng, -0.5, 0.5);
  return p;
}

TEST(SelfAttention, ZeroParamsGiveUniform) {
  Rng rng(1);
  const auto att = self_attention(random_tensor({4, 6}, rng), TopicAttentionParams::zeros(3));
  for (double a : att.alpha) EXPECT_DOUBLE_EQ(a, 0.25);
}

TEST(SelfAttention, SingleWordGetsEverything) {
  Rng rng(2);
  const auto att = self_attention(random_tensor({1, 6}, rng), random_topic(3, rng));
  ASSERT_EQ(att.alpha.size(), 1u);
  EXPECT_EQ(att.alpha[0], 1.0);
}

TEST(SelfAttention, EqualRowsEqualWeights) {
  Rng rng(3);
  Tensor h = random_tensor({4, 6}, rng);
  for (std::size_t j = 0; j < 6; ++j) h.at(3, j) = h.at(1, j);
  const auto att = self_attention(h, random_topic(3, rng));
  EXPECT_EQ(att.alpha[1], att.alpha[3]);
}

TEST(SelfAttention, NormalizedAndMatchesDirectFormula) {
  Rng rng(4);
  const Tensor h = random_tensor({7, 6}, rng);
  const auto p = random_topic(3, rng);
  const auto att = self_attention(h, p);
  double total = 0.0, denom = 0.0;
  for (std::size_t i = 0; i < 7; ++i) denom += std::exp(std::tanh(dot(p.w.data(), h.row(i)) + p.b[0]));
  for (std::size_t i = 0; i < 7; ++i) {
    total += att.alpha[i];
    EXPECT_NEAR(att.alpha[i], std::exp(std::tanh(dot(p.w.data(), h.row(i)) + p.b[0])) / denom, 1e-14);
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(SelfAttention, ShiftedScoresGiveSameWeights) {
  Rng rng(5);
  const auto z = random_vector(6, rng);
  const auto base = softmax_over_positions(z);
  for (double c : {-3.0, 0.25, 100.0}) {
    auto shifted = z;
    for (double& v : shifted) v += c;
    const auto a = softmax_over_positions(shifted);
    for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(a[i], base[i], 1e-12);
  }
}

TEST(SelfAttention, Errors) {
  EXPECT_THROW(self_attention(Tensor::matrix(0, 6), TopicAttentionParams::zeros(3)), Error);
  EXPECT_THROW(self_attention(Tensor::matrix(2, 4), TopicAttentionParams::zeros(3)), Error);
}

TEST(SelfAttention, BackwardMatchesFiniteDifferences) {
  Rng rng(6);
  Tensor h = random_tensor({5, 6}, rng);
  auto p = random_topic(3, rng);
  const auto weights = random_vector(5, rng);
  auto loss = [&] { return dot(self_attention(h, p).alpha, weights); };
  TopicAttentionParams grad = TopicAttentionParams::zeros(3);
  Tensor dh = Tensor::matrix(5, 6);
  self_attention_backward(h, self_attention(h, p), weights, p, grad, dh);
  std::vector<NamedTensor> named = {{"w", &p.w}, {"b", &p.b}, {"h", &h}};
  const auto numeric = finite_diff_gradient(loss, named, 1e-6);
  const Tensor* analytic[] = {&grad.w, &grad.b, &dh};
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t i = 0; i < numeric[t].size(); ++i) {
      EXPECT_TRUE(grad_close((*analytic[t])[i], numeric[t][i], 1e-9, 1e-5)) << named[t].name << i;
    }
  }
}

TEST(TopicVector, Examples) {
  Tensor one({1, 4}, std::vector<double>{0.1, 0.2, -0.3, 0.4});
  const std::vector<double> a1 = {1.0};
  EXPECT_EQ(topic_vector(a1, one), (std::vector<double>{0.1, 0.2, -0.3, 0.4}));

  Tensor opposite({2, 2}, std::vector<double>{0.5, -0.25, -0.5, 0.25});
  const std::vector<double> uniform2 = {0.5, 0.5};
  EXPECT_EQ(topic_vector(uniform2, opposite), (std::vector<double>{0.0, 0.0}));

  Rng rng(7);
  const Tensor t = random_tensor({3, 4}, rng);
  const std::vector<double> a = {0.2, 0.5, 0.3};
  const auto theta = topic_vector(a, t);
  for (std::size_t j = 0; j < 4; ++j) {
    EXPECT_NEAR(theta[j], 0.2 * t.at(0, j) + 0.5 * t.at(1, j) + 0.3 * t.at(2, j), 1e-15);
  }
  EXPECT_THROW(topic_vector(uniform2, t), Error);
}

TEST(SimilarityLoss, Examples) {
  const std::vector<double> v = {0.3, -0.4, 1.2};
  const ClassWeights unit{1.0, 1.0};
  EXPECT_NEAR(similarity_loss(v, v, 1, false, unit), -1.0, 1e-12);
  const std::vector<double> x = {1.0, 0.0}, y = {0.0, 1.0};
  EXPECT_EQ(similarity_loss(x, y, 0, true, unit), 0.0);
  Rng rng(8);
  for (int i = 0; i < 10; ++i) {
    const auto a = random_vector(6, rng), b = random_vector(6, rng);
    EXPECT_EQ(similarity_loss(a, b, 0, false, {3.0, 7.0}), 0.0);
  }
  EXPECT_THROW(similarity_loss(v, v, 2, false, unit), Error);
}

TEST(SimilarityLoss, CoefficientsBothSigns) {
  const ClassWeights w{3.571, 0.581};
  EXPECT_EQ(similarity_coefficient(1, false, w, SimSign::corrected), -3.571);
  EXPECT_EQ(similarity_coefficient(1, true, w, SimSign::corrected), -3.571);
  EXPECT_EQ(similarity_coefficient(0, true, w, SimSign::corrected), 0.581);
  EXPECT_EQ(similarity_coefficient(0, false, w, SimSign::corrected), 0.0);
  EXPECT_EQ(similarity_coefficient(1, false, w, SimSign::literal), 3.571);
  EXPECT_EQ(similarity_coefficient(0, true, w, SimSign::literal), -0.581);
  EXPECT_EQ(similarity_coefficient(0, false, w, SimSign::literal), 0.0);
}

// Minimizing the corrected loss pulls duplicates together and pushes
// topic-disjoint non-duplicates apart.
TEST(SimilarityLoss, GradientDirection) {
  Rng rng(9);
  const auto a = random_vector(4, rng), b = random_vector(4, rng);
  std::vector<double> du(4, 0.0), dv(4, 0.0);
  cosine_similarity_backward(a, b, 1.0, du, dv);
  auto step = [&](double coef) {
    auto a2 = a;
    for (std::size_t j = 0; j < 4; ++j) a2[j] -= 1e-3 * coef * du[j];
    return cosine_similarity(a2, b) - cosine_similarity(a, b);
  };
  EXPECT_GT(step(similarity_coefficient(1, false, {1.0, 1.0}, SimSign::corrected)), 0.0);
  EXPECT_LT(step(similarity_coefficient(0, true, {1.0, 1.0}, SimSign::corrected)), 0.0);
}

// Through the full model: the topic-loss gradient on the attention parameters
// matches finite differences of lambda * L_sim alone.
TEST(TopicBranch, ModelGradientOfSimilarityTermOnly) {
  HyperConfig cfg = test_util::tiny_config();
  cfg.lambda = 1.0;
  ModelParams m = ModelParams::init(cfg, 10, 5);
  Rng rng(10);
  test_util::randomize_params(m, rng);
  const std::vector<TokenId> p = {2, 3, 4}, q = {5, 6};
  const std::vector<PairInput> batch = {{p, q, 0, true}};
  const auto r = test_util::check_model_gradient(m, batch, {1.0, 0.7});
  EXPECT_EQ(r.mismatches, 0u) << r.worst;
  const auto pass = forward_pair(m, batch[0], {1.0, 0.7}, nullptr);
  EXPECT_NEAR(pass.loss, 0.7 * cosine_similarity(pass.p.theta, pass.q.theta), 1e-12);
}

TEST(TopicBranch, CaseThreeContributesNothing) {
  HyperConfig cfg = test_util::tiny_config();
  cfg.lambda = 1.0;
  ModelParams m = ModelParams::init(cfg, 10, 6);
  const std::vector<TokenId> p = {2, 3, 4}, q = {3, 6};
  const auto pass = forward_pair(m, {p, q, 0, false}, {2.0, 0.5}, nullptr);
  EXPECT_EQ(pass.loss, 0.0);
  ModelGrads g = ModelGrads::zeros(cfg);
  backward_pair(m, pass, 1.0, g);
  EXPECT_EQ(g.squared_norm(), 0.0);
}

}  // namespace
}  // namespace dupdist
