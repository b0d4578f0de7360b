#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "dlstm/errors.hpp"
#include "dlstm/neural.hpp"
#include "oracles.hpp"

using namespace dlstm;

namespace {

std::vector<Sample> random_batch(int n, int s, int input_dim, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Sample> batch(n);
  for (auto& smp : batch) {
    smp.inputs.resize(s, input_dim);
    for (Eigen::Index i = 0; i < smp.inputs.size(); ++i) smp.inputs.data()[i] = u(rng);
    smp.target = u(rng);
  }
  return batch;
}

const MinMax kScale{20.0, 80.0};

}  // namespace

TEST(Neural, InitShapesAndSeeding) {
  const auto p = init_params(2, 10, 3);
  EXPECT_EQ(p.W.rows(), 40);
  EXPECT_EQ(p.W.cols(), 2);
  EXPECT_EQ(p.U.rows(), 40);
  EXPECT_EQ(p.U.cols(), 10);
  const auto views = p.tensors();
  ASSERT_EQ(views.size(), 14u);
  EXPECT_EQ(views[0].name, "W_i");
  EXPECT_EQ(views[0].rows, 10);
  EXPECT_EQ(views[0].cols, 2);
  EXPECT_EQ(views[4].name, "U_i");
  EXPECT_EQ(views[4].rows, 10);
  EXPECT_EQ(views[4].cols, 10);
  EXPECT_EQ(p.parameter_count(), 40 * 2 + 40 * 10 + 40 + 10 + 1);
  for (int j = 0; j < 10; ++j) {
    EXPECT_EQ(p.b(10 + j), 1.0);  // forget bias
    EXPECT_EQ(p.b(j), 0.0);
  }
  const double bound = std::sqrt(6.0 / (2 + 10));
  EXPECT_LE(p.W.cwiseAbs().maxCoeff(), bound);
  EXPECT_TRUE(p == init_params(2, 10, 3));
  EXPECT_FALSE(p == init_params(2, 10, 4));
}

TEST(Neural, ZeroParamsPredictZero) {
  const auto p = LstmParams::zeros(3, 5);
  RowMatrix x = RowMatrix::Random(7, 3);
  EXPECT_EQ(lstm_forward(p, x), 0.0);
}

TEST(Neural, SingleCellHandTrace) {
  auto p = LstmParams::zeros(1, 1);
  const double wi = 0.5, wf = -0.3, wo = 0.8, wg = 1.2;
  const double bi = 0.1, bf = 1.0, bo = -0.2, bg = 0.05;
  p.W << wi, wf, wo, wg;
  p.U << 0.7, 0.7, 0.7, 0.7;  // no effect on the first step (h0 = 0)
  p.b << bi, bf, bo, bg;
  p.w_y << 1.5;
  p.b_y = 0.25;
  const double x = 0.6;
  RowMatrix in(1, 1);
  in << x;

  const double i = oracle::sigmoid(wi * x + bi);
  const double o = oracle::sigmoid(wo * x + bo);
  const double g = std::tanh(wg * x + bg);
  const double c = i * g;
  const double h = o * std::tanh(c);
  EXPECT_NEAR(lstm_forward(p, in), 1.5 * h + 0.25, 1e-15);

  // second step exercises the recurrent weights and the forget gate
  RowMatrix in2(2, 1);
  in2 << x, -0.4;
  const double x2 = -0.4;
  const double i2 = oracle::sigmoid(wi * x2 + 0.7 * h + bi);
  const double f2 = oracle::sigmoid(wf * x2 + 0.7 * h + bf);
  const double o2 = oracle::sigmoid(wo * x2 + 0.7 * h + bo);
  const double g2 = std::tanh(wg * x2 + 0.7 * h + bg);
  const double c2 = f2 * c + i2 * g2;
  const double h2 = o2 * std::tanh(c2);
  EXPECT_NEAR(lstm_forward(p, in2), 1.5 * h2 + 0.25, 1e-15);
}

TEST(Neural, ActivationBounds) {
  std::mt19937_64 rng(17);
  for (int seed = 0; seed < 10; ++seed) {
    auto p = init_params(3, 6, seed);
    p.W *= 4.0;  // push gates toward saturation
    auto batch = random_batch(3, 12, 3, rng);
    for (const auto& s : batch) {
      ForwardCache cache;
      const double y = lstm_forward(p, s.inputs, &cache);
      EXPECT_TRUE(std::isfinite(y));
      const int H = 6;
      for (Eigen::Index t = 0; t < cache.gates.rows(); ++t) {
        for (int j = 0; j < 3 * H; ++j) {
          EXPECT_GT(cache.gates(t, j), 0.0);
          EXPECT_LT(cache.gates(t, j), 1.0);
        }
        for (int j = 3 * H; j < 4 * H; ++j) {
          EXPECT_GT(cache.gates(t, j), -1.0);
          EXPECT_LT(cache.gates(t, j), 1.0);
        }
        for (int j = 0; j < H; ++j) EXPECT_LT(std::abs(cache.tanh_c(t, j)), 1.0);
      }
    }
  }
}

TEST(Neural, ForwardErrors) {
  const auto p = init_params(2, 3, 1);
  RowMatrix wrong(4, 3);
  wrong.setZero();
  EXPECT_THROW(lstm_forward(p, wrong), std::invalid_argument);
  RowMatrix nan_in(4, 2);
  nan_in.setConstant(std::numeric_limits<double>::quiet_NaN());
  EXPECT_THROW(lstm_forward(p, nan_in), NumericError);
}

TEST(Neural, Mape) {
  std::vector<double> a{100, 100};
  EXPECT_EQ(mape(std::vector<double>{100, 100}, a), 0.0);
  EXPECT_DOUBLE_EQ(mape(std::vector<double>{110}, std::vector<double>{100}), 10.0);
  EXPECT_DOUBLE_EQ(mape(std::vector<double>{90, 110}, a), 10.0);
  EXPECT_THROW(mape(std::vector<double>{}, std::vector<double>{}), std::invalid_argument);
  EXPECT_THROW(mape(std::vector<double>{1}, a), std::invalid_argument);

  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> v(1.0, 150.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> p(5), q(5), ps(5), qs(5);
    for (int i = 0; i < 5; ++i) {
      p[i] = v(rng);
      q[i] = v(rng);
      ps[i] = 3.5 * p[i];
      qs[i] = 3.5 * q[i];
    }
    const double m = mape(p, q);
    EXPECT_GT(m, 0.0);
    EXPECT_NEAR(mape(ps, qs), m, 1e-9 * m);
  }
}

TEST(Neural, ZeroGradientAtPerfectFit) {
  std::mt19937_64 rng(2);
  const auto p = init_params(2, 4, 9);
  auto batch = random_batch(4, 5, 2, rng);
  for (auto& s : batch) s.target = lstm_forward(p, s.inputs);
  const auto r = backward(p, batch, kScale);
  EXPECT_EQ(r.loss, 0.0);
  for (const auto& t : r.grads.tensors())
    for (Eigen::Index i = 0; i < t.size(); ++i) EXPECT_EQ(t.data[i], 0.0);
}

TEST(Neural, BackwardLossMatchesBatchLoss) {
  std::mt19937_64 rng(12);
  const auto p = init_params(3, 5, 2);
  const auto batch = random_batch(6, 8, 3, rng);
  EXPECT_DOUBLE_EQ(backward(p, batch, kScale).loss, batch_loss(p, batch, kScale));
}

TEST(Neural, DuplicatedBatchKeepsMeanGradient) {
  std::mt19937_64 rng(13);
  const auto p = init_params(2, 4, 5);
  const auto batch = random_batch(3, 6, 2, rng);
  auto doubled = batch;
  doubled.insert(doubled.end(), batch.begin(), batch.end());
  const auto a = backward(p, batch, kScale);
  const auto b = backward(p, doubled, kScale);
  const auto ta = a.grads.tensors();
  const auto tb = b.grads.tensors();
  for (std::size_t k = 0; k < ta.size(); ++k)
    for (Eigen::Index i = 0; i < ta[k].size(); ++i)
      EXPECT_NEAR(ta[k].data[i], tb[k].data[i], 1e-12 * (1.0 + std::abs(ta[k].data[i])));
}

TEST(Neural, GradCheckTinyModel) {
  std::mt19937_64 rng(7);
  const auto p = init_params(2, 3, 7);
  const auto batch = random_batch(2, 4, 2, rng);
  const auto rep = grad_check(p, batch, kScale);
  EXPECT_LT(rep.max_rel_error, 1e-4) << rep.worst_tensor << "[" << rep.worst_index << "]";
}

TEST(Neural, GradCheckRandomModels) {
  std::mt19937_64 rng(99);
  for (int seed = 0; seed < 10; ++seed) {
    const int H = 3 + seed % 4;
    const int I = 1 + seed % 3;
    const auto p = init_params(I, H, 100 + seed);
    const auto batch = random_batch(2 + seed % 3, 4 + seed % 5, I, rng);
    const auto rep = grad_check(p, batch, kScale);
    EXPECT_LT(rep.max_rel_error, 1e-4) << "seed " << seed << " " << rep.worst_tensor;
  }
}

TEST(Neural, GradCheckCatchesCorruptedGradient) {
  std::mt19937_64 rng(7);
  const auto p = init_params(2, 3, 7);
  const auto batch = random_batch(2, 4, 2, rng);
  auto r = backward(p, batch, kScale);
  auto views = r.grads.tensors();
  double* worst = nullptr;
  for (auto& t : views)
    for (Eigen::Index i = 0; i < t.size(); ++i)
      if (!worst || std::abs(t.data[i]) > std::abs(*worst)) worst = &t.data[i];
  *worst *= 2.0;
  const auto rep = compare_gradients(p, r.grads, batch, kScale, 1e-5);
  EXPECT_GT(rep.max_rel_error, 1e-2);
}

TEST(Neural, GradCheckStableUnderSmallerStep) {
  std::mt19937_64 rng(21);
  const auto p = init_params(2, 4, 21);
  const auto batch = random_batch(3, 5, 2, rng);
  const double e1 = grad_check(p, batch, kScale, 1e-5).max_rel_error;
  const double e2 = grad_check(p, batch, kScale, 5e-6).max_rel_error;
  EXPECT_LE(e2, 10.0 * std::max(e1, 1e-12));
}

TEST(Neural, AdaDeltaFirstStep) {
  std::vector<double> x{0.0}, g{1.0}, eg{0.0}, ed{0.0};
  adadelta_update(x, g, eg, ed, {0.95, 1e-6});
  EXPECT_NEAR(x[0], -4.4717e-3, 5e-7);  // -4.47209e-3 before rounding
  EXPECT_NEAR(x[0], -std::sqrt(1e-6) / std::sqrt(0.05 + 1e-6), 1e-15);
}

TEST(Neural, AdaDeltaMatchesReferenceTrace) {
  const auto ref = oracle::adadelta_reference(1.0, [](double x) { return 2.0 * x; }, 10, 0.95, 1e-6);
  std::vector<double> x{1.0}, eg{0.0}, ed{0.0};
  for (int i = 0; i < 10; ++i) {
    std::vector<double> g{2.0 * x[0]};
    adadelta_update(x, g, eg, ed, {0.95, 1e-6});
    EXPECT_NEAR(x[0], ref.x[i + 1], 1e-12);
  }
}

TEST(Neural, AdaDeltaZeroGradientDecaysAccumulators) {
  auto p = init_params(2, 3, 1);
  const auto before = p;
  auto opt = OptState::for_params(p);
  for (auto& t : opt.mean_sq_grad.tensors())
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data[i] = 0.5;
  for (auto& t : opt.mean_sq_delta.tensors())
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data[i] = 0.25;
  adadelta_step(opt, p, LstmParams::zeros(2, 3));
  EXPECT_TRUE(p == before);
  for (const auto& t : opt.mean_sq_grad.tensors())
    for (Eigen::Index i = 0; i < t.size(); ++i) EXPECT_DOUBLE_EQ(t.data[i], 0.95 * 0.5);
  for (const auto& t : opt.mean_sq_delta.tensors())
    for (Eigen::Index i = 0; i < t.size(); ++i) EXPECT_DOUBLE_EQ(t.data[i], 0.95 * 0.25);
}

TEST(Neural, AdaDeltaKeepsShapesAndNonNegativeState) {
  std::mt19937_64 rng(30);
  auto p = init_params(2, 4, 30);
  auto opt = OptState::for_params(p);
  const auto batch = random_batch(5, 6, 2, rng);
  for (int step = 0; step < 20; ++step) {
    adadelta_step(opt, p, backward(p, batch, kScale).grads);
    EXPECT_TRUE(p.same_shape(opt.mean_sq_grad));
    EXPECT_TRUE(p.same_shape(opt.mean_sq_delta));
    for (const auto* acc : {&opt.mean_sq_grad, &opt.mean_sq_delta})
      for (const auto& t : acc->tensors())
        for (Eigen::Index i = 0; i < t.size(); ++i) EXPECT_GE(t.data[i], 0.0);
  }
  EXPECT_THROW(adadelta_step(opt, p, LstmParams::zeros(3, 4)), std::invalid_argument);
}

TEST(Neural, CheckpointRoundTripIsExact) {
  std::mt19937_64 rng(40);
  auto p = init_params(3, 4, 40);
  auto opt = OptState::for_params(p);
  adadelta_step(opt, p, backward(p, random_batch(3, 5, 3, rng), kScale).grads);
  std::stringstream ss;
  write_checkpoint(ss, p, &opt);
  const auto ck = read_checkpoint(ss);
  EXPECT_TRUE(ck.params == p);
  ASSERT_TRUE(ck.optimizer.has_value());
  EXPECT_TRUE(ck.optimizer->mean_sq_grad == opt.mean_sq_grad);
  EXPECT_TRUE(ck.optimizer->mean_sq_delta == opt.mean_sq_delta);

  std::stringstream bare;
  write_checkpoint(bare, p);
  EXPECT_FALSE(read_checkpoint(bare).optimizer.has_value());

  std::istringstream junk("{\"format\": \"something else\"}");
  EXPECT_THROW(read_checkpoint(junk), ParseError);
}
