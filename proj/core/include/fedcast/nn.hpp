#pragma once

// Stacked stateless LSTM with a direct multi-horizon linear head, exact BPTT
// and Adam. Everything runs in double precision.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace fedcast::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// One input window: rows are time steps, columns are features.
using Window = Matrix;

/// Architecture of a ForecastModel. Window length is not part of the shape,
/// the same weights accept any T >= 1.
struct ModelShape {
  std::size_t features = 8;
  std::size_t hidden = 50;
  std::size_t layers = 3;
  std::size_t horizon = 24;

  /// Number of scalars in the canonical flat layout.
  std::size_t parameter_count() const;

  friend bool operator==(const ModelShape &, const ModelShape &) = default;
};

/// Gate blocks are stacked as (input, forget, cell, output) along the rows.
struct LstmLayerWeights {
  Matrix w_ih; // [4H x I]
  Matrix w_hh; // [4H x H]
  Vector bias; // [4H]

  std::size_t hidden() const { return static_cast<std::size_t>(w_hh.cols()); }
  std::size_t input() const { return static_cast<std::size_t>(w_ih.cols()); }
};

struct ForecastModel {
  std::vector<LstmLayerWeights> layers;
  Matrix head_w; // [horizon x H]
  Vector head_b; // [horizon]

  ModelShape shape() const;
  /// Throws ShapeError naming the first inconsistent layer.
  void validate() const;

  static ForecastModel zeros(const ModelShape &shape);
};

/// Flat parameter vector exchanged between clients and the server.
///
/// Layout: for each layer, w_ih (row-major), w_hh (row-major), bias; then
/// head_w (row-major), head_b.
struct ModelParams {
  std::vector<double> values;

  ModelParams() = default;
  explicit ModelParams(std::size_t n, double fill = 0.0) : values(n, fill) {}
  explicit ModelParams(std::vector<double> v) : values(std::move(v)) {}

  std::size_t size() const { return values.size(); }
  double &operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  std::span<const double> view() const { return values; }
  std::span<double> view() { return values; }

  friend bool operator==(const ModelParams &, const ModelParams &) = default;
};

ModelParams flatten(const ForecastModel &model);
/// Throws ShapeError when params.size() != shape.parameter_count().
ForecastModel unflatten(const ModelParams &params, const ModelShape &shape);
/// Writes params into an existing model of matching shape without reallocating.
void unflatten_into(const ModelParams &params, ForecastModel &model);

/// Uniform(-1/sqrt(H), 1/sqrt(H)) weights, forget-gate bias 1.0, zero head bias.
ForecastModel init_model(const ModelShape &shape, std::uint64_t seed);

/// Activations kept by the forward pass for backpropagation.
///
/// Per layer, column block [t*B, (t+1)*B) holds time step t for the B
/// windows of the batch.
struct ForwardCache {
  std::size_t batch = 0;
  std::size_t steps = 0;

  struct Layer {
    Eigen::MatrixXd input; // [I x T*B]
    Eigen::MatrixXd gates; // [4H x T*B], post-activation
    Eigen::MatrixXd cell;  // [H x T*B]
    Eigen::MatrixXd cell_tanh;
    Eigen::MatrixXd hidden;
  };
  std::vector<Layer> layers;
  Eigen::MatrixXd prediction; // [horizon x B]
};

/// Forward pass for a single window. Hidden and cell state start at zero.
Vector lstm_forward(const ForecastModel &model, const Window &window,
                    ForwardCache *cache = nullptr);

/// Batched forward pass; every window must share the same T and F.
/// Returns predictions as [horizon x B].
Eigen::MatrixXd lstm_forward_batch(const ForecastModel &model,
                                   std::span<const Window *const> windows,
                                   ForwardCache *cache = nullptr);

double mse_loss(std::span<const double> pred, std::span<const double> target);
double mse_loss(const Vector &pred, const Vector &target);

/// Proximal penalty (mu/2)*||w - anchor||^2 added to the MSE objective.
struct ProxTerm {
  double mu = 0.0;
  const ModelParams *anchor = nullptr;
};

struct LossGradient {
  double loss = 0.0; // MSE only, the prox term is not included
  ModelParams gradient;
};

/// Exact gradient of mean((pred - target)^2) over the batch and horizon,
/// plus mu*(w - anchor) when a prox term is given.
///
/// `targets` is [horizon x B]. `params` must be flatten(model) and is only
/// read when a prox term is supplied.
LossGradient backward_batch(const ForecastModel &model, const ForwardCache &cache,
                            const Eigen::MatrixXd &targets,
                            const std::optional<ProxTerm> &prox = std::nullopt,
                            const ModelParams *params = nullptr);

/// Single-window convenience wrapper around backward_batch.
ModelParams backward(const ForecastModel &model, const ForwardCache &cache,
                     const Vector &target,
                     const std::optional<ProxTerm> &prox = std::nullopt);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;
  AdamConfig config;

  static AdamState fresh(std::size_t n, AdamConfig config = {});
};

/// One bias-corrected Adam update in place. Throws NumericError on a
/// non-finite gradient entry, leaving params and state untouched.
void adam_step(ModelParams &params, const ModelParams &grad, AdamState &state);

} // namespace fedcast::nn
