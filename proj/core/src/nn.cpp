#include "fedcast/nn.hpp"

#include <cmath>
#include <string>

#include "fedcast/errors.hpp"
#include "fedcast/rng.hpp"

namespace fedcast::nn {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::string dims(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

void require_shape(const char *what, std::size_t layer, Eigen::Index rows,
                   Eigen::Index cols, Eigen::Index want_rows, Eigen::Index want_cols) {
  if (rows != want_rows || cols != want_cols) {
    throw ShapeError("layer " + std::to_string(layer) + " " + what + ": expected " +
                     dims(want_rows, want_cols) + ", got " + dims(rows, cols));
  }
}

template <typename Source>
std::size_t copy_out(const Source &src, std::vector<double> &out, std::size_t pos) {
  const auto n = static_cast<std::size_t>(src.size());
  std::copy(src.data(), src.data() + n, out.begin() + static_cast<std::ptrdiff_t>(pos));
  return pos + n;
}

template <typename Target>
std::size_t copy_in(const std::vector<double> &in, Target &dst, std::size_t pos) {
  const auto n = static_cast<std::size_t>(dst.size());
  std::copy(in.begin() + static_cast<std::ptrdiff_t>(pos),
            in.begin() + static_cast<std::ptrdiff_t>(pos + n), dst.data());
  return pos + n;
}

} // namespace

std::size_t ModelShape::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = l == 0 ? features : hidden;
    n += 4 * hidden * (in + hidden + 1);
  }
  return n + horizon * hidden + horizon;
}

ModelShape ForecastModel::shape() const {
  ModelShape s;
  s.layers = layers.size();
  s.hidden = layers.empty() ? static_cast<std::size_t>(head_w.cols()) : layers.front().hidden();
  s.features = layers.empty() ? 0 : layers.front().input();
  s.horizon = static_cast<std::size_t>(head_w.rows());
  return s;
}

void ForecastModel::validate() const {
  if (layers.empty()) {
    throw ShapeError("model has no LSTM layers");
  }
  const auto h = static_cast<Eigen::Index>(layers.front().hidden());
  const auto f = static_cast<Eigen::Index>(layers.front().input());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto &layer = layers[l];
    const Eigen::Index in = l == 0 ? f : h;
    require_shape("w_ih", l, layer.w_ih.rows(), layer.w_ih.cols(), 4 * h, in);
    require_shape("w_hh", l, layer.w_hh.rows(), layer.w_hh.cols(), 4 * h, h);
    require_shape("bias", l, layer.bias.rows(), 1, 4 * h, 1);
  }
  if (head_w.cols() != h || head_b.rows() != head_w.rows()) {
    throw ShapeError("head: expected [" + std::to_string(head_b.rows()) + " x " +
                     std::to_string(h) + "], got " + dims(head_w.rows(), head_w.cols()));
  }
}

ForecastModel ForecastModel::zeros(const ModelShape &shape) {
  const auto h = static_cast<Eigen::Index>(shape.hidden);
  ForecastModel m;
  for (std::size_t l = 0; l < shape.layers; ++l) {
    const auto in = static_cast<Eigen::Index>(l == 0 ? shape.features : shape.hidden);
    m.layers.push_back({Matrix::Zero(4 * h, in), Matrix::Zero(4 * h, h), Vector::Zero(4 * h)});
  }
  m.head_w = Matrix::Zero(static_cast<Eigen::Index>(shape.horizon), h);
  m.head_b = Vector::Zero(static_cast<Eigen::Index>(shape.horizon));
  return m;
}

ModelParams flatten(const ForecastModel &model) {
  ModelParams p(model.shape().parameter_count());
  std::size_t pos = 0;
  for (const auto &layer : model.layers) {
    pos = copy_out(layer.w_ih, p.values, pos);
    pos = copy_out(layer.w_hh, p.values, pos);
    pos = copy_out(layer.bias, p.values, pos);
  }
  pos = copy_out(model.head_w, p.values, pos);
  copy_out(model.head_b, p.values, pos);
  return p;
}

void unflatten_into(const ModelParams &params, ForecastModel &model) {
  const std::size_t expected = model.shape().parameter_count();
  if (params.size() != expected) {
    throw ShapeError("parameter vector length mismatch: expected " +
                     std::to_string(expected) + ", got " + std::to_string(params.size()));
  }
  std::size_t pos = 0;
  for (auto &layer : model.layers) {
    pos = copy_in(params.values, layer.w_ih, pos);
    pos = copy_in(params.values, layer.w_hh, pos);
    pos = copy_in(params.values, layer.bias, pos);
  }
  pos = copy_in(params.values, model.head_w, pos);
  copy_in(params.values, model.head_b, pos);
}

ForecastModel unflatten(const ModelParams &params, const ModelShape &shape) {
  auto model = ForecastModel::zeros(shape);
  unflatten_into(params, model);
  return model;
}

ForecastModel init_model(const ModelShape &shape, std::uint64_t seed) {
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(shape.hidden));
  auto model = ForecastModel::zeros(shape);
  auto fill = [&](auto &m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      m.data()[i] = rng.uniform(-bound, bound);
    }
  };
  const auto h = static_cast<Eigen::Index>(shape.hidden);
  for (auto &layer : model.layers) {
    fill(layer.w_ih);
    fill(layer.w_hh);
    fill(layer.bias);
    layer.bias.segment(h, h).setConstant(1.0);
  }
  fill(model.head_w);
  return model;
}

Eigen::MatrixXd lstm_forward_batch(const ForecastModel &model,
                                   std::span<const Window *const> windows,
                                   ForwardCache *cache) {
  if (windows.empty()) {
    throw ShapeError("forward: empty batch");
  }
  model.validate();
  const auto batch = static_cast<Eigen::Index>(windows.size());
  const Eigen::Index steps = windows.front()->rows();
  const Eigen::Index features = windows.front()->cols();
  if (steps < 1) {
    throw ShapeError("forward: window has no time steps");
  }
  if (model.layers.empty() ||
      features != static_cast<Eigen::Index>(model.layers.front().input())) {
    throw ShapeError("layer 0 w_ih: window has " + std::to_string(features) +
                     " features, layer expects " +
                     std::to_string(model.layers.empty() ? 0 : model.layers.front().input()));
  }

  ForwardCache local;
  ForwardCache &c = cache ? *cache : local;
  c.batch = static_cast<std::size_t>(batch);
  c.steps = static_cast<std::size_t>(steps);
  c.layers.resize(model.layers.size());

  Eigen::MatrixXd input(features, steps * batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const Window &w = *windows[static_cast<std::size_t>(b)];
    if (w.rows() != steps || w.cols() != features) {
      throw ShapeError("forward: window " + std::to_string(b) + " is " +
                       dims(w.rows(), w.cols()) + ", batch expects " + dims(steps, features));
    }
    for (Eigen::Index t = 0; t < steps; ++t) {
      input.col(t * batch + b) = w.row(t).transpose();
    }
  }

  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto &layer = model.layers[l];
    const auto h = static_cast<Eigen::Index>(layer.hidden());
    if (input.rows() != static_cast<Eigen::Index>(layer.input())) {
      throw ShapeError("layer " + std::to_string(l) + " w_ih: input has " +
                       std::to_string(input.rows()) + " rows, layer expects " +
                       std::to_string(layer.input()));
    }
    auto &lc = c.layers[l];
    lc.gates.noalias() = layer.w_ih * input;
    lc.gates.colwise() += layer.bias;
    lc.cell.resize(h, steps * batch);
    lc.cell_tanh.resize(h, steps * batch);
    lc.hidden.resize(h, steps * batch);

    for (Eigen::Index t = 0; t < steps; ++t) {
      auto z = lc.gates.middleCols(t * batch, batch);
      if (t > 0) {
        z.noalias() += layer.w_hh * lc.hidden.middleCols((t - 1) * batch, batch);
      }
      z.topRows(2 * h) = z.topRows(2 * h).unaryExpr(&sigmoid);
      z.middleRows(2 * h, h) = z.middleRows(2 * h, h).array().tanh();
      z.bottomRows(h) = z.bottomRows(h).unaryExpr(&sigmoid);

      auto cell = lc.cell.middleCols(t * batch, batch);
      cell = z.topRows(h).cwiseProduct(z.middleRows(2 * h, h));
      if (t > 0) {
        cell += z.middleRows(h, h).cwiseProduct(lc.cell.middleCols((t - 1) * batch, batch));
      }
      lc.cell_tanh.middleCols(t * batch, batch) = cell.array().tanh();
      lc.hidden.middleCols(t * batch, batch) =
          z.bottomRows(h).cwiseProduct(lc.cell_tanh.middleCols(t * batch, batch));
    }
    lc.input = std::move(input);
    input = lc.hidden;
  }

  const auto &top = c.layers.back().hidden;
  c.prediction.noalias() = model.head_w * top.rightCols(batch);
  c.prediction.colwise() += model.head_b;
  return c.prediction;
}

Vector lstm_forward(const ForecastModel &model, const Window &window, ForwardCache *cache) {
  const Window *ptr = &window;
  return lstm_forward_batch(model, std::span<const Window *const>(&ptr, 1), cache).col(0);
}

double mse_loss(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) {
    throw ShapeError("mse: length mismatch " + std::to_string(pred.size()) + " vs " +
                     std::to_string(target.size()));
  }
  if (pred.empty()) {
    throw ShapeError("mse: empty input");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    sum += d * d;
  }
  return sum / static_cast<double>(pred.size());
}

double mse_loss(const Vector &pred, const Vector &target) {
  return mse_loss(std::span<const double>(pred.data(), static_cast<std::size_t>(pred.size())),
                  std::span<const double>(target.data(), static_cast<std::size_t>(target.size())));
}

LossGradient backward_batch(const ForecastModel &model, const ForwardCache &cache,
                            const Eigen::MatrixXd &targets,
                            const std::optional<ProxTerm> &prox, const ModelParams *params) {
  const auto batch = static_cast<Eigen::Index>(cache.batch);
  const auto steps = static_cast<Eigen::Index>(cache.steps);
  if (cache.layers.size() != model.layers.size()) {
    throw ShapeError("backward: cache has " + std::to_string(cache.layers.size()) +
                     " layers, model has " + std::to_string(model.layers.size()));
  }
  if (targets.rows() != cache.prediction.rows() || targets.cols() != batch) {
    throw ShapeError("backward: targets are " + dims(targets.rows(), targets.cols()) +
                     ", predictions are " +
                     dims(cache.prediction.rows(), cache.prediction.cols()));
  }

  const Eigen::MatrixXd diff = cache.prediction - targets;
  const double count = static_cast<double>(diff.size());
  LossGradient out;
  out.loss = diff.squaredNorm() / count;
  const Eigen::MatrixXd d_pred = (2.0 / count) * diff;

  auto grad = ForecastModel::zeros(model.shape());
  const auto &top = cache.layers.back().hidden;
  grad.head_w.noalias() = d_pred * top.rightCols(batch).transpose();
  grad.head_b = d_pred.rowwise().sum();

  // Gradient w.r.t. the hidden output of the layer being processed, at every step.
  Eigen::MatrixXd d_hidden_in = Eigen::MatrixXd::Zero(top.rows(), steps * batch);
  d_hidden_in.rightCols(batch).noalias() = model.head_w.transpose() * d_pred;

  for (std::size_t li = model.layers.size(); li-- > 0;) {
    const auto &layer = model.layers[li];
    const auto &lc = cache.layers[li];
    const auto h = static_cast<Eigen::Index>(layer.hidden());

    Eigen::MatrixXd d_gates(4 * h, steps * batch);
    Eigen::MatrixXd d_h_next = Eigen::MatrixXd::Zero(h, batch);
    Eigen::MatrixXd d_c_next = Eigen::MatrixXd::Zero(h, batch);

    for (Eigen::Index t = steps; t-- > 0;) {
      const auto g = lc.gates.middleCols(t * batch, batch);
      const auto i_g = g.topRows(h).array();
      const auto f_g = g.middleRows(h, h).array();
      const auto c_g = g.middleRows(2 * h, h).array();
      const auto o_g = g.bottomRows(h).array();
      const auto tc = lc.cell_tanh.middleCols(t * batch, batch).array();

      const Eigen::ArrayXXd d_h = d_hidden_in.middleCols(t * batch, batch).array() + d_h_next.array();
      const Eigen::ArrayXXd d_c = d_c_next.array() + d_h * o_g * (1.0 - tc.square());

      auto dz = d_gates.middleCols(t * batch, batch);
      dz.topRows(h) = (d_c * c_g * i_g * (1.0 - i_g)).matrix();
      if (t > 0) {
        const auto c_prev = lc.cell.middleCols((t - 1) * batch, batch).array();
        dz.middleRows(h, h) = (d_c * c_prev * f_g * (1.0 - f_g)).matrix();
      } else {
        dz.middleRows(h, h).setZero();
      }
      dz.middleRows(2 * h, h) = (d_c * i_g * (1.0 - c_g.square())).matrix();
      dz.bottomRows(h) = (d_h * tc * o_g * (1.0 - o_g)).matrix();

      d_c_next = (d_c * f_g).matrix();
      d_h_next.noalias() = layer.w_hh.transpose() * dz;
    }

    auto &gl = grad.layers[li];
    gl.w_ih.noalias() = d_gates * lc.input.transpose();
    if (steps > 1) {
      gl.w_hh.noalias() = d_gates.rightCols((steps - 1) * batch) *
                          lc.hidden.leftCols((steps - 1) * batch).transpose();
    }
    gl.bias = d_gates.rowwise().sum();
    if (li > 0) {
      d_hidden_in.noalias() = layer.w_ih.transpose() * d_gates;
    }
  }

  out.gradient = flatten(grad);
  if (prox && prox->mu != 0.0) {
    if (prox->anchor == nullptr || prox->anchor->size() != out.gradient.size()) {
      throw ShapeError("backward: prox anchor length does not match the model");
    }
    ModelParams own;
    if (params == nullptr) {
      own = flatten(model);
      params = &own;
    }
    for (std::size_t k = 0; k < out.gradient.size(); ++k) {
      out.gradient[k] += prox->mu * ((*params)[k] - (*prox->anchor)[k]);
    }
  }
  return out;
}

ModelParams backward(const ForecastModel &model, const ForwardCache &cache, const Vector &target,
                     const std::optional<ProxTerm> &prox) {
  return backward_batch(model, cache, Eigen::MatrixXd(target), prox).gradient;
}

AdamState AdamState::fresh(std::size_t n, AdamConfig config) {
  AdamState s;
  s.m.assign(n, 0.0);
  s.v.assign(n, 0.0);
  s.config = config;
  return s;
}

void adam_step(ModelParams &params, const ModelParams &grad, AdamState &state) {
  const std::size_t n = params.size();
  if (grad.size() != n || state.m.size() != n || state.v.size() != n) {
    throw ShapeError("adam: length mismatch (params " + std::to_string(n) + ", grad " +
                     std::to_string(grad.size()) + ", state " + std::to_string(state.m.size()) +
                     ")");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(grad[i])) {
      throw NumericError("adam step " + std::to_string(state.t + 1) +
                         ": non-finite gradient at index " + std::to_string(i));
    }
  }
  const auto &cfg = state.config;
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

} // namespace fedcast::nn
