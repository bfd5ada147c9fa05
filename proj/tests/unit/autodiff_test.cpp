#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "dynaware/autodiff.hpp"
#include "dynaware/checkpoint.hpp"
#include "dynaware/optim.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"

using namespace dynaware;
using dwtest::TapeD;
using dwtest::TensorD;

class OpGradient : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(OpGradient, MatchesCentralDifferences) {
  for (const auto& c : dwtest::op_cases(GetParam())) {
    const auto r = dwtest::check_gradients(c);
    EXPECT_LT(r.max_rel, 1e-4) << c.name << " (" << r.checked << " entries)";
    EXPECT_GT(r.checked, 0u) << c.name;
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, OpGradient, ::testing::Values(1, 2, 3, 4, 5));

TEST(Autodiff, SumGradientIsOnes) {
  TapeD t;
  auto x = t.variable(TensorD({2, 3}, 0.5));
  t.backward(ad::sum(x));
  for (double g : t.grad(x)->data) EXPECT_EQ(g, 1.0);
}

TEST(Autodiff, DetachedAndConstantLeavesGetNoGradient) {
  TapeD t;
  auto x = t.variable(TensorD({3}, 2.0));
  auto c = t.constant(TensorD({3}, 1.0));
  auto d = t.detach(x);
  t.backward(ad::sum(ad::add(ad::mul(d, x), c)));
  EXPECT_EQ(t.grad(c), nullptr);
  EXPECT_EQ(t.grad(d), nullptr);
  for (double g : t.grad(x)->data) EXPECT_EQ(g, 2.0);  // only through the non-detached path
}

TEST(Autodiff, BackwardNeedsScalarAndRunsOnce) {
  TapeD t;
  auto x = t.variable(TensorD({3}, 1.0));
  EXPECT_THROW(t.backward(x), ad::ShapeError);
  auto s = ad::sum(x);
  t.backward(s);
  EXPECT_THROW(t.backward(s), std::logic_error);
}

TEST(Autodiff, ShapeMismatchIsAnError) {
  TapeD t;
  auto a = t.variable(TensorD({2, 3}));
  auto b = t.variable(TensorD({3, 2}));
  EXPECT_THROW(ad::add(a, b), ad::ShapeError);
  EXPECT_THROW(ad::affine(a, b, t.constant(TensorD({2}))), ad::ShapeError);
  EXPECT_THROW(ad::conv2d(a, b, b, {}), ad::ShapeError);
}

TEST(Autodiff, NonFiniteValuesTripCheckedTape) {
  TapeD t(true);
  auto x = t.variable(TensorD({2}, 1e308));
  EXPECT_THROW(ad::scale(x, 10.0), ad::NonFiniteError);
  EXPECT_THROW(t.variable(TensorD({1}, std::nan(""))), ad::NonFiniteError);
}

TEST(Autodiff, ParameterGradientsAccumulate) {
  ad::Parameter<double> p("w", TensorD({2}, 3.0));
  for (int k = 0; k < 2; ++k) {
    TapeD t;
    t.backward(ad::sum(ad::mul(t.param(p), t.param(p))));
  }
  EXPECT_EQ(p.grad[0], 12.0);  // 2 * (2w)
  p.zero_grad();
  EXPECT_EQ(p.grad[1], 0.0);
}

TEST(Losses, SoftmaxXentReference) {
  const auto j = dwtest::load_json("scalar_values.json");
  TapeD t;
  const std::vector<int> target{2};
  auto l = ad::softmax_xent(t.constant(TensorD({1, 3}, {1.0, 2.0, 3.0})), std::span<const int>(target));
  EXPECT_NEAR(l.value()[0], j["xent_123_target2"].get<double>(), 1e-12);
  EXPECT_NEAR(l.value()[0], 0.40760596, 1e-8);

  const auto& r = j["xent_random"];
  const std::size_t rows = r["rows"], k = r["classes"];
  const auto targets = r["targets"].get<std::vector<int>>();
  auto l2 = ad::softmax_xent(t.constant(TensorD({rows, k}, r["logits"].get<std::vector<double>>())), std::span<const int>(targets));
  EXPECT_NEAR(l2.value()[0], r["loss"].get<double>(), 1e-12);
}

TEST(Losses, UniformIdentities) {
  TapeD t;
  for (std::size_t n : {2u, 8u, 64u}) {
    for (double beta : {0.1, 1.0, 7.0}) {
      std::vector<std::size_t> pos(3);
      for (std::size_t i = 0; i < 3; ++i) pos[i] = i % n;
      auto l = ad::infonce(t.constant(TensorD({3, n}, 0.37)), std::span<const std::size_t>(pos), beta);
      EXPECT_NEAR(l.value()[0], std::log(static_cast<double>(n)), 1e-9);
    }
  }
  const std::vector<int> target{7, 0};
  EXPECT_NEAR(ad::softmax_xent(t.constant(TensorD({2, 20}, -1.5)), std::span<const int>(target)).value()[0], std::log(20.0), 1e-9);
  const std::vector<double> one{1.0};
  EXPECT_NEAR(ad::sigmoid_bce(t.constant(TensorD({1}, 0.0)), std::span<const double>(one)).value()[0], std::log(2.0), 1e-9);
}

TEST(Losses, InfonceOracleAndShiftInvariance) {
  const auto j = dwtest::load_json("scalar_values.json")["infonce_random"];
  const std::size_t n = j["n"], d = j["d"];
  TapeD t;
  auto z = t.constant(TensorD({n, d}, j["z"].get<std::vector<double>>()));
  auto e = t.constant(TensorD({n, d}, j["e"].get<std::vector<double>>()));
  std::vector<std::size_t> diag(n);
  for (std::size_t i = 0; i < n; ++i) diag[i] = i;
  const double beta = j["beta"];
  auto l = ad::infonce(ad::matmul_nt(z, e), std::span<const std::size_t>(diag), beta);
  EXPECT_NEAR(l.value()[0], j["loss"].get<double>(), 1e-12);

  Rng rng(5);
  auto s = dwtest::random_tensor(rng, {4, 6}, -3, 3);
  auto shifted = s;
  for (std::size_t r = 0; r < 4; ++r) {
    const double c = rng.uniform(-10, 10);
    for (std::size_t k = 0; k < 6; ++k) shifted[r * 6 + k] += c;
  }
  const std::vector<std::size_t> pos{0, 5, 2, 2};
  const double a = ad::infonce(t.constant(s), std::span<const std::size_t>(pos), 1.0).value()[0];
  const double b = ad::infonce(t.constant(shifted), std::span<const std::size_t>(pos), 1.0).value()[0];
  EXPECT_NEAR(a, b, 1e-9);
  // not invariant to the temperature itself
  EXPECT_GT(std::abs(a - ad::infonce(t.constant(s), std::span<const std::size_t>(pos), 0.5).value()[0]), 1e-6);
}

TEST(Losses, SoftmaxRowsSumToOne) {
  Rng rng(6);
  const auto p = ad::softmax_rows(dwtest::random_tensor(rng, {5, 9}, -20, 20));
  for (std::size_t r = 0; r < 5; ++r) {
    double s = 0;
    for (std::size_t k = 0; k < 9; ++k) s += p[r * 9 + k];
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(Losses, StableForLargeLogits) {
  TapeD t;
  const std::vector<double> labels{1.0, 0.0};
  auto l = ad::sigmoid_bce(t.constant(TensorD({2}, {800.0, -800.0})), std::span<const double>(labels));
  EXPECT_NEAR(l.value()[0], 0.0, 1e-12);
}

TEST(Adam, HandComputedSteps) {
  const auto j = dwtest::load_json("scalar_values.json");
  ad::Parameter<double> w("w", TensorD({1}, 1.0));
  AdamState<double> st;
  const double lr = j["adam_w2_step1"]["lr"];
  for (int k = 0; k < 2; ++k) {
    w.grad[0] = 2.0 * w.value[0];  // f(w) = w^2
    adam_step(w, st, lr);
    if (k == 0) {
      EXPECT_NEAR(w.value[0], j["adam_w2_step1"]["w"].get<double>(), 1e-15);
      EXPECT_NEAR(st.m[0], j["adam_w2_step1"]["m"].get<double>(), 1e-15);
      EXPECT_NEAR(st.v[0], j["adam_w2_step1"]["v"].get<double>(), 1e-15);
    }
  }
  EXPECT_NEAR(w.value[0], j["adam_w2_step2"].get<double>(), 1e-15);
}

TEST(Adam, OptimizerDescendsQuadratic) {
  ad::Parameter<double> w("w", TensorD({3}, {1.0, -2.0, 0.5}));
  Adam<double> opt({&w});
  for (int k = 0; k < 500; ++k) {
    opt.zero_grad();
    for (std::size_t i = 0; i < 3; ++i) w.grad[i] = 2.0 * w.value[i];
    opt.step(0.05);
  }
  for (double v : w.value.data) EXPECT_LT(std::abs(v), 0.05);
  EXPECT_EQ(opt.steps(), 500);
}

TEST(CosineSchedule, EndpointsAndMidpoint) {
  for (std::int64_t n : {1, 2, 100, 2000}) {
    EXPECT_EQ(cosine_lr(0, n, 3e-4), 3e-4);
    EXPECT_EQ(cosine_lr(n, n, 3e-4), 0.0);
  }
  EXPECT_EQ(cosine_lr(1000, 2000, 3e-4), 1.5e-4);
  EXPECT_NEAR(cosine_lr(500, 2000, 1.0), (1 + std::cos(M_PI / 4)) / 2, 1e-15);
  EXPECT_THROW(cosine_lr(2001, 2000, 1.0), ScheduleError);
  EXPECT_THROW(cosine_lr(-1, 2000, 1.0), ScheduleError);
}

TEST(Determinism, SameInputsSameBits) {
  auto run = [] {
    Rng rng(9);
    ad::Tape<float> t(false);
    ad::Tensor<float> x({4, 3, 16, 16}), w({5, 3, 3, 3}), b({5});
    for (auto* p : {&x, &w, &b}) {
      for (auto& v : p->data) v = static_cast<float>(rng.uniform(-1, 1));
    }
    auto xv = t.variable(x), wv = t.variable(w);
    auto y = ad::mean_pool(ad::relu(ad::conv2d(xv, wv, t.constant(b), {2, 1})));
    t.backward(ad::sum(ad::mul(y, y)));
    return std::make_pair(y.value().data, t.grad(wv)->data);
  };
  EXPECT_EQ(run(), run());
}

TEST(CheckpointFile, RoundTripIsLossless) {
  Checkpoint c;
  c.metadata = "model.loss=handcrafted\n";
  Rng rng(1);
  for (const auto& [name, shape] : std::vector<std::pair<std::string, ad::Shape>>{{"a", {3, 4}}, {"b.w", {2, 2, 3, 3}}, {"c", {1}}}) {
    ad::Tensor<float> t(shape);
    for (auto& v : t.data) v = static_cast<float>(rng.uniform(-1, 1));
    c.tensors.push_back({name, t});
  }
  c.tensors[0].value[1] = -0.0f;
  c.tensors[0].value[2] = 1e-42f;  // subnormal survives
  std::stringstream ss;
  write_checkpoint(ss, c);
  const Checkpoint back = read_checkpoint(ss);
  EXPECT_EQ(back, c);
  EXPECT_TRUE(std::signbit(back.tensors[0].value[1]));
  ASSERT_NE(back.find("b.w"), nullptr);
  EXPECT_EQ(back.find("zzz"), nullptr);
}

TEST(CheckpointFile, RejectsCorruptInput) {
  std::stringstream bad("DWCX");
  EXPECT_THROW(read_checkpoint(bad), FormatError);
  Checkpoint c;
  c.tensors.push_back({"a", ad::Tensor<float>({8}, 1.0f)});
  std::stringstream ss;
  write_checkpoint(ss, c);
  std::stringstream cut(ss.str().substr(0, ss.str().size() - 3));
  EXPECT_THROW(read_checkpoint(cut), FormatError);
}
