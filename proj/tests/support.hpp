#pragma once

// Seeded generators and independent oracles shared by the unit and
// acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "fedcast/data.hpp"
#include "fedcast/fed.hpp"
#include "fedcast/nn.hpp"
#include "fedcast/rng.hpp"

namespace fedcast::testing {

inline nn::ModelParams random_params(const nn::ModelShape &shape, Rng &rng, double scale = 0.5) {
  nn::ModelParams p(shape.parameter_count());
  for (auto &v : p.values) {
    v = rng.uniform(-scale, scale);
  }
  return p;
}

inline nn::Window random_window(std::size_t steps, std::size_t features, Rng &rng) {
  nn::Window w(static_cast<Eigen::Index>(steps), static_cast<Eigen::Index>(features));
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    for (Eigen::Index c = 0; c < w.cols(); ++c) {
      w(r, c) = rng.normal();
    }
  }
  return w;
}

inline nn::Vector random_vector(std::size_t n, Rng &rng) {
  nn::Vector v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    v(i) = rng.normal();
  }
  return v;
}

/// MSE over a batch plus (mu/2)||w - anchor||^2, evaluated from scratch.
inline double objective(const nn::ModelParams &params, const nn::ModelShape &shape,
                        const std::vector<nn::Window> &windows,
                        const std::vector<nn::Vector> &targets, double mu = 0.0,
                        const nn::ModelParams *anchor = nullptr) {
  const auto model = nn::unflatten(params, shape);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t b = 0; b < windows.size(); ++b) {
    const auto pred = nn::lstm_forward(model, windows[b]);
    for (Eigen::Index k = 0; k < pred.size(); ++k) {
      const double d = pred(k) - targets[b](k);
      sum += d * d;
      ++n;
    }
  }
  double prox = 0.0;
  if (anchor != nullptr) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double d = params[i] - (*anchor)[i];
      prox += d * d;
    }
  }
  return sum / static_cast<double>(n) + 0.5 * mu * prox;
}

struct GradientCheck {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
};

/// Central finite differences with step h over every coordinate.
inline GradientCheck finite_difference_check(const nn::ModelShape &shape, std::size_t steps,
                                             std::size_t batch, std::uint64_t seed,
                                             double mu = 0.0, double h = 1e-5) {
  Rng rng(seed);
  auto params = random_params(shape, rng);
  const auto anchor = random_params(shape, rng);
  std::vector<nn::Window> windows;
  std::vector<nn::Vector> targets;
  for (std::size_t b = 0; b < batch; ++b) {
    windows.push_back(random_window(steps, shape.features, rng));
    targets.push_back(random_vector(shape.horizon, rng));
  }

  const auto model = nn::unflatten(params, shape);
  std::vector<const nn::Window *> ptrs;
  Eigen::MatrixXd target_mat(static_cast<Eigen::Index>(shape.horizon),
                             static_cast<Eigen::Index>(batch));
  for (std::size_t b = 0; b < batch; ++b) {
    ptrs.push_back(&windows[b]);
    target_mat.col(static_cast<Eigen::Index>(b)) = targets[b];
  }
  nn::ForwardCache cache;
  nn::lstm_forward_batch(model, ptrs, &cache);
  std::optional<nn::ProxTerm> prox;
  if (mu > 0.0) {
    prox = nn::ProxTerm{mu, &anchor};
  }
  const auto analytic = nn::backward_batch(model, cache, target_mat, prox, &params).gradient;

  GradientCheck out;
  out.coordinates = params.size();
  const nn::ModelParams *a = mu > 0.0 ? &anchor : nullptr;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    const double up = objective(params, shape, windows, targets, mu, a);
    params[i] = saved - h;
    const double down = objective(params, shape, windows, targets, mu, a);
    params[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-7});
    const double rel = std::abs(numeric - analytic[i]) / denom;
    if (rel > out.max_relative_error) {
      out.max_relative_error = rel;
      out.worst_index = i;
    }
  }
  return out;
}

/// Scalar-loop weighted mean, independent of the library's aggregation code.
inline std::vector<double> fedavg_oracle(const std::vector<fed::ClientUpdate> &updates) {
  double total = 0.0;
  for (const auto &u : updates) {
    total += static_cast<double>(u.n_k);
  }
  std::vector<fed::ClientUpdate> sorted = updates;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto &a, const auto &b) { return a.client_id < b.client_id; });
  std::vector<double> out(sorted.front().params.size(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (const auto &u : sorted) {
      out[i] += static_cast<double>(u.n_k) / total * u.params[i];
    }
  }
  return out;
}

inline std::vector<double> fedmedian_oracle(const std::vector<fed::ClientUpdate> &updates) {
  std::vector<double> out(updates.front().params.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::vector<double> col;
    for (const auto &u : updates) {
      col.push_back(u.params[i]);
    }
    std::sort(col.begin(), col.end());
    const std::size_t k = col.size();
    out[i] = k % 2 == 1 ? col[k / 2] : (col[k / 2 - 1] + col[k / 2]) / 2.0;
  }
  return out;
}

inline std::vector<fed::ClientUpdate> random_updates(std::size_t clients, std::size_t length,
                                                     Rng &rng) {
  std::vector<fed::ClientUpdate> updates(clients);
  for (std::size_t c = 0; c < clients; ++c) {
    updates[c].client_id = static_cast<int>(c);
    updates[c].n_k = 1 + rng.below(500);
    updates[c].params = nn::ModelParams(length);
    for (auto &v : updates[c].params.values) {
      v = rng.normal() * 3.0;
    }
  }
  return updates;
}

/// y_0 = x_0, y_t = a x_t + (1 - a) y_{t-1}, a = 2 / (w + 1).
inline std::vector<double> ewma_oracle(const std::vector<double> &x, int window) {
  const double a = 2.0 / (static_cast<double>(window) + 1.0);
  std::vector<double> y(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) {
    y[t] = t == 0 ? x[0] : a * x[t] + (1.0 - a) * y[t - 1];
  }
  return y;
}

/// Small model so scenario tests stay fast.
inline nn::ModelShape tiny_shape() {
  nn::ModelShape s;
  s.hidden = 4;
  s.layers = 1;
  return s;
}

} // namespace fedcast::testing
