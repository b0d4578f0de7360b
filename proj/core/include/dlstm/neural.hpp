#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dlstm/ingest.hpp"

namespace dlstm {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Gate blocks are stacked row-wise in this order inside W, U and b.
enum class Gate : int { Input = 0, Forget = 1, Output = 2, Cell = 3 };
inline constexpr int kGateCount = 4;

// Named contiguous row-major slice of a parameter tensor.
struct TensorView {
  std::string name;
  double* data;
  Eigen::Index rows;
  Eigen::Index cols;

  Eigen::Index size() const noexcept { return rows * cols; }
};

struct ConstTensorView {
  std::string name;
  const double* data;
  Eigen::Index rows;
  Eigen::Index cols;

  Eigen::Index size() const noexcept { return rows * cols; }
};

// Single-layer LSTM (forget gate, no peepholes) with a scalar linear head.
//   W: (4H x I) input weights, U: (4H x H) recurrent weights, b: (4H) biases,
//   w_y: (1 x H) output weights, b_y: output bias.
// Gradients and AdaDelta accumulators reuse this type.
struct LstmParams {
  int input_dim = 0;
  int hidden_dim = 0;
  RowMatrix W;
  RowMatrix U;
  Eigen::VectorXd b;
  Eigen::RowVectorXd w_y;
  double b_y = 0.0;

  static LstmParams zeros(int input_dim, int hidden_dim);

  // W_i, W_f, W_o, W_g, U_i, U_f, U_o, U_g, b_i, b_f, b_o, b_g, W_y, b_y.
  std::vector<TensorView> tensors();
  std::vector<ConstTensorView> tensors() const;

  Eigen::Index parameter_count() const;
  bool same_shape(const LstmParams& other) const noexcept;
  bool all_finite() const;

  bool operator==(const LstmParams& other) const;
};

using LstmGrads = LstmParams;

// Uniform(+-sqrt(6 / (fan_in + fan_out))) per gate matrix, forget-gate bias 1,
// remaining biases 0. Deterministic in `seed`.
LstmParams init_params(int input_dim, int hidden_dim, std::uint64_t seed);

// One training instance: s rows of normalised features and the normalised
// target speed one step after the window.
struct Sample {
  RowMatrix inputs;
  double target = 0.0;
  std::string road_id;
  std::size_t time_index = 0;
};

// Per-step activations kept for backpropagation. Row t of each matrix
// belongs to step t; h and c carry one extra leading row for the zero state.
struct ForwardCache {
  RowMatrix gates;   // s x 4H, post-activation [i f o g]
  RowMatrix c;       // (s+1) x H
  RowMatrix tanh_c;  // s x H
  RowMatrix h;       // (s+1) x H
  double prediction = 0.0;
};

// Runs the recurrence from zero state and returns W_y h_s + b_y.
// Throws std::invalid_argument on width mismatch, NumericError on NaN/Inf.
double lstm_forward(const LstmParams& p, const RowMatrix& inputs, ForwardCache* cache = nullptr);

inline constexpr double kMapeFloor = 1e-3;  // km/h

// 100/N * sum |pred - actual| / max(actual, kMapeFloor). Throws
// std::invalid_argument on empty or mismatched input.
double mape(std::span<const double> preds, std::span<const double> actuals);

// Batch-mean MAPE of the model's denormalised predictions against the
// denormalised targets; `scale` is the target road's speed range.
double batch_loss(const LstmParams& p, std::span<const Sample> batch, const MinMax& scale);

struct BackwardResult {
  LstmGrads grads;
  double loss = 0.0;
};

// Exact gradient of batch_loss by backpropagation through time. The
// absolute value uses sign(pred - actual) with 0 at the kink. Samples are
// reduced in order, so results are bit-reproducible.
BackwardResult backward(const LstmParams& p, std::span<const Sample> batch, const MinMax& scale);

struct AdaDeltaConfig {
  double rho = 0.95;
  double eps = 1e-6;
};

struct OptState {
  AdaDeltaConfig config;
  LstmParams mean_sq_grad;   // E[g^2]
  LstmParams mean_sq_delta;  // E[dx^2]

  static OptState for_params(const LstmParams& p, AdaDeltaConfig config = {});
};

// Elementwise AdaDelta on flat buffers of equal length:
//   E[g^2]  <- rho E[g^2] + (1 - rho) g^2
//   dx      <- -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
//   E[dx^2] <- rho E[dx^2] + (1 - rho) dx^2
//   x       <- x + dx
void adadelta_update(std::span<double> x, std::span<const double> grad,
                     std::span<double> mean_sq_grad, std::span<double> mean_sq_delta,
                     const AdaDeltaConfig& config);

// Throws std::invalid_argument on shape mismatch, NumericError when the
// update produces a non-finite parameter.
void adadelta_step(OptState& opt, LstmParams& p, const LstmGrads& grads);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  Eigen::Index worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Central differences of batch_loss against `analytic` for every parameter;
// relative error |a - n| / max(|a|, |n|, 1e-8).
GradCheckReport compare_gradients(const LstmParams& p, const LstmGrads& analytic,
                                  std::span<const Sample> batch, const MinMax& scale,
                                  double fd_step);

GradCheckReport grad_check(const LstmParams& p, std::span<const Sample> batch,
                           const MinMax& scale, double fd_step = 1e-5);

// Versioned JSON container with every tensor and, optionally, the optimiser
// accumulators. Doubles are written in shortest round-trip form so a
// write/read cycle is exact.
struct Checkpoint {
  LstmParams params;
  std::optional<OptState> optimizer;
};

void write_checkpoint(std::ostream& out, const LstmParams& p, const OptState* opt = nullptr);
Checkpoint read_checkpoint(std::istream& in);

}  // namespace dlstm
