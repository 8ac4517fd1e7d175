#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fedcast/errors.hpp"
#include "fedcast/fed.hpp"
#include "fedcast/parallel.hpp"

namespace fedcast::fed {

double train_epoch(nn::ModelParams &params, nn::AdamState &adam, Rng &batch_rng,
                   std::span<const data::Sample> samples, const nn::ModelShape &shape,
                   std::size_t batch_size, const std::optional<nn::ProxTerm> &prox,
                   int owner_id) {
  if (samples.empty()) {
    throw std::invalid_argument("train_epoch: no training samples for " +
                                std::to_string(owner_id));
  }
  if (batch_size == 0) {
    throw std::invalid_argument("train_epoch: batch size must be >= 1");
  }
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  batch_rng.shuffle(order);

  auto model = nn::unflatten(params, shape);
  const auto horizon = static_cast<Eigen::Index>(shape.horizon);
  std::vector<const nn::Window *> inputs;
  Eigen::MatrixXd targets;
  nn::ForwardCache cache;
  double weighted_loss = 0.0;

  for (std::size_t start = 0, batch = 0; start < order.size(); start += batch_size, ++batch) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    const auto b = static_cast<Eigen::Index>(end - start);
    inputs.clear();
    targets.resize(horizon, b);
    for (std::size_t k = start; k < end; ++k) {
      const auto &s = samples[order[k]];
      inputs.push_back(&s.input);
      targets.col(static_cast<Eigen::Index>(k - start)) = s.target;
    }
    nn::unflatten_into(params, model);
    nn::lstm_forward_batch(model, inputs, &cache);
    auto lg = nn::backward_batch(model, cache, targets, prox, &params);
    if (!std::isfinite(lg.loss)) {
      throw NumericError("client " + std::to_string(owner_id) + " batch " +
                         std::to_string(batch) + ": non-finite loss");
    }
    nn::adam_step(params, lg.gradient, adam);
    weighted_loss += lg.loss * static_cast<double>(b);
  }
  return weighted_loss / static_cast<double>(samples.size());
}

Eigen::MatrixXd predict(const nn::ForecastModel &model, std::span<const data::Sample> samples) {
  constexpr std::size_t kChunk = 256;
  const auto horizon = model.head_b.rows();
  Eigen::MatrixXd out(horizon, static_cast<Eigen::Index>(samples.size()));
  std::vector<const nn::Window *> inputs;
  for (std::size_t start = 0; start < samples.size(); start += kChunk) {
    const std::size_t end = std::min(samples.size(), start + kChunk);
    inputs.clear();
    for (std::size_t k = start; k < end; ++k) {
      inputs.push_back(&samples[k].input);
    }
    out.middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(end - start)) =
        nn::lstm_forward_batch(model, inputs);
  }
  return out;
}

std::vector<double> forecast_kwh(const nn::ForecastModel &model, const data::UserSplit &split,
                                 const data::FeatureStats &stats) {
  const auto pred = predict(model, split.test);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(pred.size()));
  for (Eigen::Index w = 0; w < pred.cols(); ++w) {
    for (Eigen::Index k = 0; k < pred.rows(); ++k) {
      out.push_back(stats.restore_target(pred(k, w)));
    }
  }
  return out;
}

double test_mse_kwh(const nn::ForecastModel &model, const data::UserSplit &split,
                    const data::FeatureStats &stats) {
  return nn::mse_loss(forecast_kwh(model, split, stats), split.test_truth);
}

ClientState::ClientState(int client_id, data::UserSplit split, data::FeatureStats stats,
                         const nn::ModelShape &shape, TrainingConfig training,
                         std::uint64_t batch_seed)
    : client_id_(client_id), split_(std::move(split)), stats_(stats), shape_(shape),
      training_(training), adam_(nn::AdamState::fresh(shape.parameter_count(), training.adam)),
      batch_rng_(batch_seed) {
  if (split_.train.empty()) {
    throw std::invalid_argument("client " + std::to_string(client_id) +
                                " has no training windows");
  }
}

ClientUpdate ClientState::local_train(const nn::ModelParams &global, int epochs, double mu) {
  if (global.size() != shape_.parameter_count()) {
    throw ShapeError("client " + std::to_string(client_id_) + ": global model has " +
                     std::to_string(global.size()) + " parameters, expected " +
                     std::to_string(shape_.parameter_count()));
  }
  if (mu < 0.0) {
    throw std::invalid_argument("proximal weight mu must be >= 0");
  }
  ClientUpdate update;
  update.client_id = client_id_;
  update.n_k = split_.train.size();
  update.params = global;
  std::optional<nn::ProxTerm> prox;
  if (mu > 0.0) {
    prox = nn::ProxTerm{mu, &global};
  }
  for (int e = 0; e < epochs; ++e) {
    update.train_loss.push_back(train_epoch(update.params, adam_, batch_rng_, split_.train, shape_,
                                            training_.batch_size, prox, client_id_));
  }
  return update;
}

double ClientState::evaluate(const nn::ModelParams &params) const {
  return test_mse_kwh(nn::unflatten(params, shape_), split_, stats_);
}

nn::ModelParams initial_params(const nn::ModelShape &shape, std::uint64_t seed) {
  return nn::flatten(nn::init_model(shape, derive_seed(seed, "init")));
}

RoundReport run_round(ServerState &server, std::span<ClientState> clients,
                      const RoundOptions &options) {
  if (clients.empty()) {
    throw std::invalid_argument("run_round: no clients");
  }
  if (!(options.participation > 0.0 && options.participation <= 1.0)) {
    throw ConfigError("participation must lie in (0, 1]");
  }
  std::vector<ClientState *> ordered;
  for (auto &c : clients) {
    ordered.push_back(&c);
  }
  std::sort(ordered.begin(), ordered.end(),
            [](const auto *a, const auto *b) { return a->id() < b->id(); });

  std::vector<ClientState *> selected = ordered;
  if (options.participation < 1.0) {
    const auto k = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::lround(options.participation *
                                                static_cast<double>(ordered.size()))));
    Rng rng(derive_seed(options.seed, "participation", server.round + 1));
    rng.shuffle(selected);
    selected.resize(k);
    std::sort(selected.begin(), selected.end(),
              [](const auto *a, const auto *b) { return a->id() < b->id(); });
  }

  const double mu = server.strategy.client_mu();
  std::vector<ClientUpdate> updates(selected.size());
  parallel_for(selected.size(), options.threads, [&](std::size_t i) {
    updates[i] = selected[i]->local_train(server.global, options.local_epochs, mu);
  });

  RoundReport report;
  report.round = server.round + 1;
  for (const auto &u : updates) {
    report.participants.push_back(u.client_id);
    report.train_loss.push_back(u.train_loss);
  }
  if (options.local_epochs > 0) {
    server.global = aggregate(updates, server);
  }
  server.round += 1;

  report.client_ids.resize(ordered.size());
  report.test_mse.resize(ordered.size());
  parallel_for(ordered.size(), options.threads, [&](std::size_t i) {
    report.client_ids[i] = ordered[i]->id();
    report.test_mse[i] = ordered[i]->evaluate(server.global);
  });
  for (const double m : report.test_mse) {
    report.mean_test_mse += m;
  }
  report.mean_test_mse /= static_cast<double>(report.test_mse.size());
  if (options.local_epochs > 0) {
    for (const auto &trace : report.train_loss) {
      report.mean_train_loss += trace.back();
    }
    report.mean_train_loss /= static_cast<double>(report.train_loss.size());
  }
  return report;
}

SessionReport run_session(const SessionConfig &config, std::span<ClientState> clients) {
  if (config.rounds < 0 || config.local_epochs < 0) {
    throw ConfigError("rounds and local_epochs must be >= 0");
  }
  SessionReport report;
  report.initial = config.initial ? *config.initial : initial_params(config.shape, config.seed);
  auto server = ServerState::start(report.initial, config.strategy);
  const RoundOptions options{config.local_epochs, config.participation, config.seed,
                             config.threads};
  for (int r = 0; r < config.rounds; ++r) {
    report.rounds.push_back(run_round(server, clients, options));
    report.history.push_back(server.global);
  }
  report.final_params = server.global;
  return report;
}

} // namespace fedcast::fed
