#include <sstream>

#include <gtest/gtest.h>

#include "dupdist/embeddings.hpp"
#include "dupdist/model.hpp"
#include "dupdist/trainer.hpp"
#include "test_support.hpp"

namespace dupdist {
namespace {

TEST(RandomEmbeddings, BoundsAndPadding) {
  const auto t = random_embeddings(50, 7, 3);
  EXPECT_EQ(t.vocab_size(), 50u);
  EXPECT_EQ(t.dim(), 7u);
  for (double v : t.matrix.row(kPadId)) EXPECT_EQ(v, 0.0);
  for (std::size_t r = 1; r < 50; ++r) {
    for (double v : t.matrix.row(r)) {
      EXPECT_GE(v, -0.05);
      EXPECT_LE(v, 0.05);
    }
  }
  const auto again = random_embeddings(50, 7, 3);
  EXPECT_EQ(std::vector<double>(again.matrix.data().begin(), again.matrix.data().end()),
            std::vector<double>(t.matrix.data().begin(), t.matrix.data().end()));
}

TEST(LoadPretrained, FileValuesAndSeededMisses) {
  Vocabulary vocab({"crash", "login", "absent"});
  std::istringstream file(
      "crash 0.5 -1.25 2\n"
      "unrelated 9 9 9\n"
      "login 1e-3 0 -0.75\n");
  const auto t = load_pretrained(file, vocab, 3, 11);
  EXPECT_EQ(t.matrix.at(vocab.id("crash"), 0), 0.5);
  EXPECT_EQ(t.matrix.at(vocab.id("crash"), 1), -1.25);
  EXPECT_EQ(t.matrix.at(vocab.id("crash"), 2), 2.0);
  EXPECT_EQ(t.matrix.at(vocab.id("login"), 0), 1e-3);
  EXPECT_EQ(t.matrix.at(vocab.id("login"), 2), -0.75);
  const auto seeded = random_embeddings(vocab.size(), 3, 11);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_EQ(t.matrix.at(vocab.id("absent"), j), seeded.matrix.at(vocab.id("absent"), j));
    EXPECT_LE(std::abs(t.matrix.at(vocab.id("absent"), j)), 0.05);
    EXPECT_EQ(t.matrix.at(kPadId, j), 0.0);
  }
}

TEST(LoadPretrained, DimensionMismatchWithConfig) {
  Vocabulary vocab({"a"});
  std::istringstream file("a 1 2\n");
  EXPECT_THROW(load_pretrained(file, vocab, 3, 1), Error);
}

TEST(LoadPretrained, InconsistentLineIsNamed) {
  Vocabulary vocab({"a"});
  std::istringstream file("a 1 2\nb 1 2\nc 1\n");
  try {
    load_pretrained(file, vocab, 2, 1);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(LoadPretrained, PadWordInFileIgnored) {
  Vocabulary vocab({"a"});
  std::istringstream file("<pad> 1 1\n");
  const auto t = load_pretrained(file, vocab, 2, 1);
  EXPECT_EQ(t.matrix.at(kPadId, 0), 0.0);
}

TEST(Lookup, RowsAndErrors) {
  const auto t = random_embeddings(6, 4, 2);
  const std::vector<TokenId> ids = {0, 3, 3};
  const Tensor out = lookup(t, ids);
  EXPECT_EQ(out.rows(), 3u);
  EXPECT_EQ(out.cols(), 4u);
  for (std::size_t j = 0; j < 4; ++j) {
    EXPECT_EQ(out.at(0, j), 0.0);
    EXPECT_EQ(out.at(1, j), t.matrix.at(3, j));
    EXPECT_EQ(out.at(2, j), out.at(1, j));
  }
  const std::vector<TokenId> bad = {6};
  EXPECT_THROW(lookup(t, bad), Error);
  EXPECT_THROW(lookup(t, std::span<const TokenId>{}), Error);
}

TEST(Lookup, TypicalReportShape) {
  const auto t = random_embeddings(100, 300, 1);
  std::vector<TokenId> ids(14);
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<TokenId>(2 + i);
  const Tensor out = lookup(t, ids);
  EXPECT_EQ(out.rows(), 14u);
  EXPECT_EQ(out.cols(), 300u);
}

// Repeated ids accumulate; checked against central differences of a linear readout.
TEST(LookupBackward, RepeatedIdAccumulatesAndPadSkipped) {
  Rng rng(4);
  auto table = random_embeddings(5, 3, 4);
  const std::vector<TokenId> ids = {2, 0, 2, 4};
  const Tensor weights = test_util::random_tensor({4, 3}, rng);
  auto loss = [&] {
    const Tensor e = lookup(table, ids);
    double s = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) s += e[i] * weights[i];
    return s;
  };
  EmbeddingGrad g;
  lookup_backward(ids, weights, g);
  EXPECT_EQ(g.rows.count(kPadId), 0u);
  EXPECT_EQ(g.rows.count(1), 0u);
  std::vector<NamedTensor> named = {{"embedding", &table.matrix}};
  const auto numeric = finite_diff_gradient(loss, named, 1e-6);
  for (TokenId id : {2u, 4u}) {
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(g.rows.at(id)[j], numeric[0].at(id, j), 1e-8);
  }
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_NEAR(g.rows.at(2)[j], weights.at(0, j) + weights.at(2, j), 1e-15);
    EXPECT_NEAR(numeric[0].at(1, j), 0.0, 1e-12);
  }
}

TEST(PaddingRow, StaysZeroThroughAdamSteps) {
  HyperConfig cfg = test_util::tiny_config();
  ModelParams m = ModelParams::init(cfg, 10, 3);
  const std::vector<TokenId> p = {2, 0, 3, 0}, q = {0, 4, 5};
  ModelOptimizer opt(AdamOptions{0.05});
  for (int step = 0; step < 25; ++step) {
    const auto pass = forward_pair(m, {p, q, step % 2, true}, ClassWeights{}, nullptr);
    ModelGrads g = ModelGrads::zeros(cfg);
    backward_pair(m, pass, 1.0, g);
    EXPECT_EQ(g.embedding.rows.count(kPadId), 0u);
    opt.step(m, g);
    for (double v : m.embedding.matrix.row(kPadId)) ASSERT_EQ(v, 0.0);
  }
}

TEST(FrozenEmbeddings, AdamLeavesTableAlone) {
  HyperConfig cfg = test_util::tiny_config();
  cfg.freeze_embeddings = true;
  ModelParams m = ModelParams::init(cfg, 10, 3);
  const Tensor before = m.embedding.matrix;
  const std::vector<TokenId> p = {2, 3}, q = {4, 5};
  const auto pass = forward_pair(m, {p, q, 1, false}, ClassWeights{}, nullptr);
  ModelGrads g = ModelGrads::zeros(cfg);
  backward_pair(m, pass, 1.0, g);
  ModelOptimizer opt(AdamOptions{0.05});
  opt.step(m, g);
  for (std::size_t i = 0; i < before.size(); ++i) ASSERT_EQ(m.embedding.matrix[i], before[i]);
}

}  // namespace
}  // namespace dupdist
