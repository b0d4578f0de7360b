#include "dlstm/neural.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "dlstm/errors.hpp"

namespace dlstm {
namespace {

const char* const kGateSuffix[kGateCount] = {"i", "f", "o", "g"};

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

template <typename View, typename Params>
std::vector<View> make_views(Params& p) {
  const Eigen::Index H = p.hidden_dim;
  const Eigen::Index I = p.input_dim;
  std::vector<View> out;
  out.reserve(3 * kGateCount + 2);
  for (int g = 0; g < kGateCount; ++g) {
    out.push_back(View{std::string("W_") + kGateSuffix[g], p.W.data() + g * H * I, H, I});
  }
  for (int g = 0; g < kGateCount; ++g) {
    out.push_back(View{std::string("U_") + kGateSuffix[g], p.U.data() + g * H * H, H, H});
  }
  for (int g = 0; g < kGateCount; ++g) {
    out.push_back(View{std::string("b_") + kGateSuffix[g], p.b.data() + g * H, H, 1});
  }
  out.push_back(View{"W_y", p.w_y.data(), 1, H});
  out.push_back(View{"b_y", &p.b_y, 1, 1});
  return out;
}

void require_same_shape(const LstmParams& a, const LstmParams& b, const char* what) {
  if (!a.same_shape(b)) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

}  // namespace

LstmParams LstmParams::zeros(int input_dim, int hidden_dim) {
  if (input_dim < 1 || hidden_dim < 1) throw std::invalid_argument("LSTM dims must be >= 1");
  LstmParams p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  p.W = RowMatrix::Zero(kGateCount * hidden_dim, input_dim);
  p.U = RowMatrix::Zero(kGateCount * hidden_dim, hidden_dim);
  p.b = Eigen::VectorXd::Zero(kGateCount * hidden_dim);
  p.w_y = Eigen::RowVectorXd::Zero(hidden_dim);
  p.b_y = 0.0;
  return p;
}

std::vector<TensorView> LstmParams::tensors() { return make_views<TensorView>(*this); }

std::vector<ConstTensorView> LstmParams::tensors() const {
  return make_views<ConstTensorView>(*this);
}

Eigen::Index LstmParams::parameter_count() const {
  return W.size() + U.size() + b.size() + w_y.size() + 1;
}

bool LstmParams::same_shape(const LstmParams& o) const noexcept {
  return input_dim == o.input_dim && hidden_dim == o.hidden_dim && W.rows() == o.W.rows() &&
         W.cols() == o.W.cols() && U.rows() == o.U.rows() && U.cols() == o.U.cols() &&
         b.size() == o.b.size() && w_y.size() == o.w_y.size();
}

bool LstmParams::all_finite() const {
  return W.allFinite() && U.allFinite() && b.allFinite() && w_y.allFinite() &&
         std::isfinite(b_y);
}

bool LstmParams::operator==(const LstmParams& o) const {
  return same_shape(o) && W == o.W && U == o.U && b == o.b && w_y == o.w_y && b_y == o.b_y;
}

LstmParams init_params(int input_dim, int hidden_dim, std::uint64_t seed) {
  LstmParams p = LstmParams::zeros(input_dim, hidden_dim);
  std::mt19937_64 rng(seed);
  auto fill = [&rng](double* data, Eigen::Index count, double fan_in, double fan_out) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (Eigen::Index i = 0; i < count; ++i) data[i] = limit * dist(rng);
  };
  for (auto& t : p.tensors()) {
    if (t.name[0] == 'b') continue;
    fill(t.data, t.size(), static_cast<double>(t.cols), static_cast<double>(t.rows));
  }
  p.b.segment(static_cast<int>(Gate::Forget) * hidden_dim, hidden_dim).setOnes();
  return p;
}

double lstm_forward(const LstmParams& p, const RowMatrix& inputs, ForwardCache* cache) {
  if (inputs.cols() != p.input_dim) {
    throw std::invalid_argument("input width " + std::to_string(inputs.cols()) +
                                " does not match LSTM input_dim " + std::to_string(p.input_dim));
  }
  const Eigen::Index H = p.hidden_dim;
  const Eigen::Index steps = inputs.rows();
  if (cache) {
    cache->gates.resize(steps, kGateCount * H);
    cache->c.setZero(steps + 1, H);
    cache->tanh_c.resize(steps, H);
    cache->h.setZero(steps + 1, H);
  }

  Eigen::VectorXd h = Eigen::VectorXd::Zero(H);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(H);
  Eigen::VectorXd z(kGateCount * H);
  for (Eigen::Index t = 0; t < steps; ++t) {
    z.noalias() = p.W * inputs.row(t).transpose();
    z.noalias() += p.U * h;
    z += p.b;
    for (Eigen::Index j = 0; j < 3 * H; ++j) z(j) = logistic(z(j));
    for (Eigen::Index j = 3 * H; j < 4 * H; ++j) z(j) = std::tanh(z(j));
    c = z.segment(H, H).cwiseProduct(c) + z.segment(0, H).cwiseProduct(z.segment(3 * H, H));
    const Eigen::VectorXd tc = c.array().tanh();
    h = z.segment(2 * H, H).cwiseProduct(tc);
    if (cache) {
      cache->gates.row(t) = z.transpose();
      cache->c.row(t + 1) = c.transpose();
      cache->tanh_c.row(t) = tc.transpose();
      cache->h.row(t + 1) = h.transpose();
    }
  }
  const double y = p.w_y.dot(h) + p.b_y;
  if (!std::isfinite(y) || !c.allFinite()) {
    throw NumericError("non-finite value in LSTM forward pass");
  }
  if (cache) cache->prediction = y;
  return y;
}

double mape(std::span<const double> preds, std::span<const double> actuals) {
  if (preds.empty()) throw std::invalid_argument("mape of empty input");
  if (preds.size() != actuals.size()) throw std::invalid_argument("mape length mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    sum += std::abs(preds[i] - actuals[i]) / std::max(actuals[i], kMapeFloor);
  }
  return 100.0 * sum / static_cast<double>(preds.size());
}

double batch_loss(const LstmParams& p, std::span<const Sample> batch, const MinMax& scale) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  double sum = 0.0;
  for (const auto& s : batch) {
    const double pred = scale.denormalize(lstm_forward(p, s.inputs));
    const double actual = scale.denormalize(s.target);
    sum += std::abs(pred - actual) / std::max(actual, kMapeFloor);
  }
  return 100.0 * sum / static_cast<double>(batch.size());
}

BackwardResult backward(const LstmParams& p, std::span<const Sample> batch, const MinMax& scale) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const Eigen::Index H = p.hidden_dim;
  const double n = static_cast<double>(batch.size());
  BackwardResult out{LstmParams::zeros(p.input_dim, p.hidden_dim), 0.0};
  LstmGrads& g = out.grads;

  ForwardCache cache;
  Eigen::VectorXd dh(H), dc(H), dz(kGateCount * H);
  double loss_sum = 0.0;
  for (const auto& sample : batch) {
    const double y = lstm_forward(p, sample.inputs, &cache);
    const double pred = scale.denormalize(y);
    const double actual = scale.denormalize(sample.target);
    const double denom = std::max(actual, kMapeFloor);
    loss_sum += std::abs(pred - actual) / denom;
    const double sign = pred > actual ? 1.0 : (pred < actual ? -1.0 : 0.0);
    const double dy = 100.0 / n * sign / denom * (scale.max - scale.min);
    if (dy == 0.0) continue;

    const Eigen::Index steps = sample.inputs.rows();
    g.w_y += dy * cache.h.row(steps);
    g.b_y += dy;
    dh = dy * p.w_y.transpose();
    dc.setZero();
    for (Eigen::Index t = steps - 1; t >= 0; --t) {
      const auto gates = cache.gates.row(t);
      const auto i = gates.segment(0, H).transpose();
      const auto f = gates.segment(H, H).transpose();
      const auto o = gates.segment(2 * H, H).transpose();
      const auto gg = gates.segment(3 * H, H).transpose();
      const auto tc = cache.tanh_c.row(t).transpose();
      const auto c_prev = cache.c.row(t).transpose();

      dc.array() += dh.array() * o.array() * (1.0 - tc.array().square());
      dz.segment(0, H).array() = dc.array() * gg.array() * i.array() * (1.0 - i.array());
      dz.segment(H, H).array() = dc.array() * c_prev.array() * f.array() * (1.0 - f.array());
      dz.segment(2 * H, H).array() = dh.array() * tc.array() * o.array() * (1.0 - o.array());
      dz.segment(3 * H, H).array() = dc.array() * i.array() * (1.0 - gg.array().square());

      g.W.noalias() += dz * sample.inputs.row(t);
      g.U.noalias() += dz * cache.h.row(t);
      g.b += dz;
      dh.noalias() = p.U.transpose() * dz;
      dc.array() *= f.array();
    }
  }
  out.loss = 100.0 * loss_sum / n;
  if (!g.all_finite()) throw NumericError("non-finite gradient");
  return out;
}

OptState OptState::for_params(const LstmParams& p, AdaDeltaConfig config) {
  if (!(config.rho >= 0.0 && config.rho < 1.0) || !(config.eps > 0.0)) {
    throw std::invalid_argument("AdaDelta needs 0 <= rho < 1 and eps > 0");
  }
  return OptState{config, LstmParams::zeros(p.input_dim, p.hidden_dim),
                  LstmParams::zeros(p.input_dim, p.hidden_dim)};
}

void adadelta_update(std::span<double> x, std::span<const double> grad,
                     std::span<double> mean_sq_grad, std::span<double> mean_sq_delta,
                     const AdaDeltaConfig& config) {
  if (grad.size() != x.size() || mean_sq_grad.size() != x.size() ||
      mean_sq_delta.size() != x.size()) {
    throw std::invalid_argument("adadelta_update: buffer length mismatch");
  }
  const double rho = config.rho;
  const double eps = config.eps;
  for (std::size_t j = 0; j < x.size(); ++j) {
    mean_sq_grad[j] = rho * mean_sq_grad[j] + (1.0 - rho) * grad[j] * grad[j];
    const double dx = -std::sqrt(mean_sq_delta[j] + eps) / std::sqrt(mean_sq_grad[j] + eps) * grad[j];
    mean_sq_delta[j] = rho * mean_sq_delta[j] + (1.0 - rho) * dx * dx;
    x[j] += dx;
  }
}

void adadelta_step(OptState& opt, LstmParams& p, const LstmGrads& grads) {
  require_same_shape(p, grads, "adadelta_step");
  require_same_shape(p, opt.mean_sq_grad, "adadelta_step");
  require_same_shape(p, opt.mean_sq_delta, "adadelta_step");
  auto xs = p.tensors();
  const auto gs = grads.tensors();
  auto eg = opt.mean_sq_grad.tensors();
  auto ed = opt.mean_sq_delta.tensors();
  for (std::size_t t = 0; t < xs.size(); ++t) {
    const auto len = static_cast<std::size_t>(xs[t].size());
    adadelta_update({xs[t].data, len}, {gs[t].data, len}, {eg[t].data, len}, {ed[t].data, len},
                    opt.config);
  }
  if (!p.all_finite()) throw NumericError("non-finite parameter after AdaDelta update");
}

GradCheckReport compare_gradients(const LstmParams& p, const LstmGrads& analytic,
                                  std::span<const Sample> batch, const MinMax& scale,
                                  double fd_step) {
  require_same_shape(p, analytic, "compare_gradients");
  if (!(fd_step > 0.0)) throw std::invalid_argument("fd_step must be positive");
  LstmParams probe = p;
  auto xs = probe.tensors();
  const auto as = analytic.tensors();
  GradCheckReport report;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    for (Eigen::Index j = 0; j < xs[t].size(); ++j) {
      double& x = xs[t].data[j];
      const double saved = x;
      x = saved + fd_step;
      const double up = batch_loss(probe, batch, scale);
      x = saved - fd_step;
      const double down = batch_loss(probe, batch, scale);
      x = saved;
      const double numeric = (up - down) / (2.0 * fd_step);
      const double a = as[t].data[j];
      const double err =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      if (err > report.max_rel_error || report.worst_tensor.empty()) {
        report = GradCheckReport{err, xs[t].name, j, a, numeric};
      }
    }
  }
  return report;
}

GradCheckReport grad_check(const LstmParams& p, std::span<const Sample> batch,
                           const MinMax& scale, double fd_step) {
  const auto grads = backward(p, batch, scale).grads;
  return compare_gradients(p, grads, batch, scale, fd_step);
}

}  // namespace dlstm
