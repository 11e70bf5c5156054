#include <cmath>

#include <gtest/gtest.h>

#include "dupdist/encoder.hpp"
#include "test_support.hpp"

namespace dupdist {
namespace {

using test_util::random_tensor;
using test_util::random_vector;

GruParams random_gru(std::size_t d, std::size_t g, Rng& rng, double bound = 0.8) {
  GruParams p = GruParams::zeros(d, g);
  p.for_each("", [&](const std::string&, Tensor& t) {
    for (double& v : t.data()) v = uniform(rng, -bound, bound);
  });
  return p;
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

TEST(GruCell, ZeroEverythingGivesZero) {
  const GruParams p = GruParams::zeros(3, 2);
  const std::vector<double> x = {0.0, 0.0, 0.0}, h = {0.0, 0.0};
  EXPECT_EQ(gru_cell(x, h, p), (std::vector<double>{0.0, 0.0}));
}

TEST(GruCell, ClosedGateCopiesState) {
  Rng rng(1);
  GruParams p = random_gru(3, 2, rng);
  for (double& b : p.b_z.data()) b = -50.0;
  const auto x = random_vector(3, rng);
  const std::vector<double> h = {0.4, -0.7};
  const auto out = gru_cell(x, h, p);
  EXPECT_NEAR(out[0], 0.4, 1e-12);
  EXPECT_NEAR(out[1], -0.7, 1e-12);
}

// Scalar unit written out by hand.
TEST(GruCell, ScalarHandComputation) {
  GruParams p = GruParams::zeros(1, 1);
  p.w_z[0] = 0.3, p.u_z[0] = -0.2, p.b_z[0] = 0.1;
  p.w_r[0] = -0.5, p.u_r[0] = 0.4, p.b_r[0] = 0.2;
  p.w_h[0] = 0.9, p.u_h[0] = 0.6, p.b_h[0] = -0.1;
  const double x = 0.7, h = -0.3;
  const double z = sig(0.3 * x - 0.2 * h + 0.1);
  const double r = sig(-0.5 * x + 0.4 * h + 0.2);
  const double c = std::tanh(0.9 * x + 0.6 * (r * h) - 0.1);
  const double expect = (1.0 - z) * h + z * c;
  const std::vector<double> xs = {x}, hs = {h};
  EXPECT_NEAR(gru_cell(xs, hs, p)[0], expect, 1e-15);
}

TEST(GruCell, StateStaysBounded) {
  Rng rng(2);
  const GruParams p = random_gru(4, 5, rng, 3.0);
  std::vector<double> h(5, 0.0);
  for (int t = 0; t < 50; ++t) {
    h = gru_cell(random_vector(4, rng, 10.0), h, p);
    for (double v : h) {
      ASSERT_GE(v, -1.0);  // tanh saturates to exactly +-1 in double
      ASSERT_LE(v, 1.0);
    }
  }
}

TEST(GruCell, ShapeMismatch) {
  const GruParams p = GruParams::zeros(3, 2);
  const std::vector<double> x = {0.0, 0.0}, h = {0.0, 0.0};
  EXPECT_THROW(gru_cell(x, h, p), Error);
}

TEST(GruCell, BackwardMatchesFiniteDifferences) {
  Rng rng(3);
  GruParams p = random_gru(3, 4, rng);
  Tensor x = random_tensor({3}, rng);
  Tensor h = random_tensor({4}, rng, 0.9);
  const auto readout = random_vector(4, rng);
  auto loss = [&] { return dot(gru_cell(x.data(), h.data(), p), readout); };

  GruParams grad = GruParams::zeros(3, 4);
  std::vector<double> dx(3, 0.0);
  const auto step = gru_cell_forward(x.data(), h.data(), p);
  const auto dh_prev = gru_cell_backward(x.data(), step, readout, p, grad, dx);

  std::vector<NamedTensor> named;
  p.for_each("p", [&](const std::string& n, Tensor& t) { named.push_back({n, &t}); });
  named.push_back({"x", &x});
  named.push_back({"h", &h});
  const auto numeric = finite_diff_gradient(loss, named, 1e-6);
  std::vector<const Tensor*> analytic;
  grad.for_each("g", [&](const std::string&, Tensor& t) { analytic.push_back(&t); });
  for (std::size_t t = 0; t < analytic.size(); ++t) {
    for (std::size_t i = 0; i < numeric[t].size(); ++i) {
      EXPECT_TRUE(grad_close((*analytic[t])[i], numeric[t][i], 1e-8, 1e-5)) << named[t].name << "[" << i << "]";
    }
  }
  for (std::size_t i = 0; i < 3; ++i) EXPECT_TRUE(grad_close(dx[i], numeric[9][i], 1e-8, 1e-5));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_TRUE(grad_close(dh_prev[i], numeric[10][i], 1e-8, 1e-5));
}

TEST(Encode, SingleWordDirectionsAgree) {
  Rng rng(4);
  const GruParams p = random_gru(3, 4, rng);
  const Tensor e = random_tensor({1, 3}, rng);
  const auto out = encode(e, p, p, 2);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(out.hidden.at(0, j), out.hidden.at(0, 4 + j));
}

TEST(Encode, Shapes) {
  Rng rng(5);
  const GruParams f = random_gru(300, 150, rng, 0.05), b = random_gru(300, 150, rng, 0.05);
  const auto out = encode(random_tensor({5, 300}, rng), f, b, 20);
  EXPECT_EQ(out.hidden.shape(), (std::vector<std::size_t>{5, 300}));
  EXPECT_EQ(out.topic.shape(), (std::vector<std::size_t>{5, 40}));
}

// Each direction is an independent recurrence run in its own order.
TEST(Encode, DirectionsFollowTheirOrder) {
  Rng rng(6);
  const GruParams f = random_gru(2, 3, rng), b = random_gru(2, 3, rng);
  const Tensor e = random_tensor({4, 2}, rng);
  const auto out = encode(e, f, b, 2);
  std::vector<double> h(3, 0.0);
  for (std::size_t i = 0; i < 4; ++i) {
    h = gru_cell(e.row(i), h, f);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(out.hidden.at(i, j), h[j]);
  }
  std::fill(h.begin(), h.end(), 0.0);
  for (std::size_t s = 0; s < 4; ++s) {
    const std::size_t i = 3 - s;
    h = gru_cell(e.row(i), h, b);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(out.hidden.at(i, 3 + j), h[j]);
  }
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(out.topic.at(i, 0), out.hidden.at(i, 0));
    EXPECT_EQ(out.topic.at(i, 1), out.hidden.at(i, 1));
    EXPECT_EQ(out.topic.at(i, 2), out.hidden.at(i, 3));
    EXPECT_EQ(out.topic.at(i, 3), out.hidden.at(i, 4));
  }
}

TEST(Encode, Errors) {
  const GruParams p = GruParams::zeros(2, 3);
  EXPECT_THROW(encode(Tensor::matrix(0, 2), p, p, 1), Error);
  EXPECT_THROW(encode(Tensor::matrix(2, 2), p, p, 0), Error);
  EXPECT_THROW(encode(Tensor::matrix(2, 2), p, p, 4), Error);
}

TEST(Encode, BackwardMatchesFiniteDifferences) {
  Rng rng(7);
  GruParams f = random_gru(3, 4, rng), b = random_gru(3, 4, rng);
  Tensor e = random_tensor({5, 3}, rng);
  const Tensor w = random_tensor({5, 8}, rng);
  auto loss = [&] {
    const auto out = encode(e, f, b, 2);
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * out.hidden[i];
    return s;
  };
  EncoderCache cache;
  encode(e, f, b, 2, &cache);
  GruParams gf = GruParams::zeros(3, 4), gb = GruParams::zeros(3, 4);
  const Tensor de = encode_backward(e, cache, w, f, b, gf, gb);

  std::vector<NamedTensor> named;
  f.for_each("f", [&](const std::string& n, Tensor& t) { named.push_back({n, &t}); });
  b.for_each("b", [&](const std::string& n, Tensor& t) { named.push_back({n, &t}); });
  named.push_back({"embedded", &e});
  const auto numeric = finite_diff_gradient(loss, named, 1e-6);
  std::vector<const Tensor*> analytic;
  gf.for_each("", [&](const std::string&, Tensor& t) { analytic.push_back(&t); });
  gb.for_each("", [&](const std::string&, Tensor& t) { analytic.push_back(&t); });
  analytic.push_back(&de);
  std::size_t checked = 0;
  for (std::size_t t = 0; t < analytic.size(); ++t) {
    for (std::size_t i = 0; i < numeric[t].size(); ++i, ++checked) {
      EXPECT_TRUE(grad_close((*analytic[t])[i], numeric[t][i], 1e-7, 1e-4))
          << named[t].name << "[" << i << "] " << (*analytic[t])[i] << " vs " << numeric[t][i];
    }
  }
  EXPECT_EQ(checked, 2u * (3 * 12 + 3 * 16 + 12) + 15u);
}

}  // namespace
}  // namespace dupdist
