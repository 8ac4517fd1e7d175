#include <algorithm>
#include <string>

#include "fedcast/errors.hpp"
#include "fedcast/eval.hpp"
#include "fedcast/parallel.hpp"

namespace fedcast::eval {
namespace {

data::SplitDescriptor descriptor(const data::UserSeries &user, const data::FeatureStats &stats,
                                 const ExperimentConfig &config) {
  data::SplitDescriptor d;
  d.train_rows = data::split_row(user.rows.size(), config.train_fraction);
  d.stats = stats;
  d.train_spec = config.window;
  d.test_spec = config.window;
  d.test_spec.stride = config.window.horizon;
  return d;
}

std::span<const data::FeatureRow> training_rows(const data::UserSeries &user,
                                                const ExperimentConfig &config) {
  return std::span<const data::FeatureRow>(user.rows)
      .first(data::split_row(user.rows.size(), config.train_fraction));
}

std::vector<int> ids_of(std::span<const data::UserSeries> users) {
  std::vector<int> ids;
  for (const auto &u : users) {
    ids.push_back(u.user_id);
  }
  return ids;
}

void require_users(std::span<const data::UserSeries> users) {
  if (users.empty()) {
    throw std::invalid_argument("scenario needs at least one user");
  }
  auto ids = ids_of(users);
  if (!std::is_sorted(ids.begin(), ids.end()) ||
      std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw std::invalid_argument("users must be ordered by strictly increasing user_id");
  }
}

double mean_of(const std::vector<double> &v) {
  double s = 0.0;
  for (const double x : v) {
    s += x;
  }
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

void finish(ScenarioReport &r) {
  for (const auto &row : r.test_mse) {
    r.mean_test_mse.push_back(mean_of(row));
  }
  for (const auto &row : r.train_loss) {
    r.mean_train_loss.push_back(mean_of(row));
  }
  if (!r.test_mse.empty()) {
    r.final_test_mse = r.test_mse.back();
    r.final_mean_test_mse = r.mean_test_mse.back();
  }
  if (!r.train_loss.empty() && !r.train_loss.back().empty()) {
    const auto [lo, hi] = std::minmax_element(r.train_loss.back().begin(), r.train_loss.back().end());
    r.loss_spread = *hi - *lo;
  }
}

std::uint64_t hash_training(std::span<const data::UserSplit> splits) {
  std::vector<data::Sample> all;
  for (const auto &s : splits) {
    all.insert(all.end(), s.train.begin(), s.train.end());
  }
  return data::window_multiset_hash(all);
}

} // namespace

void ExperimentConfig::validate() const {
  if (shape.layers < 1 || shape.hidden < 1 || shape.features != data::kFeatureCount ||
      shape.horizon < 1) {
    throw ConfigError("model: layers and hidden must be >= 1 and features must be 8");
  }
  if (window.input_hours < 1 || window.stride < 1 ||
      window.horizon != static_cast<int>(shape.horizon)) {
    throw ConfigError("window: input hours and stride must be >= 1, horizon must match the model");
  }
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("training.train_fraction must lie in (0, 1)");
  }
  if (rounds < 0 || local_epochs < 0) {
    throw ConfigError("training.rounds and training.local_epochs must be >= 0");
  }
  if (!(participation > 0.0 && participation <= 1.0)) {
    throw ConfigError("training.participation must lie in (0, 1]");
  }
  if (training.batch_size < 1) {
    throw ConfigError("training.batch_size must be >= 1");
  }
  if (!(training.adam.lr > 0.0) || !(training.adam.epsilon > 0.0) ||
      !(training.adam.beta1 >= 0.0 && training.adam.beta1 < 1.0) ||
      !(training.adam.beta2 >= 0.0 && training.adam.beta2 < 1.0)) {
    throw ConfigError("training: lr and epsilon must be > 0, betas in [0, 1)");
  }
  strategy.validate();
}

data::FeatureStats pooled_stats(std::span<const data::UserSeries> users,
                                const ExperimentConfig &config) {
  data::ColumnMoments pooled;
  for (const auto &u : users) {
    pooled.merge(data::ColumnMoments::of(training_rows(u, config)));
  }
  return data::FeatureStats::from_moments(pooled, config.standardize);
}

std::vector<data::FeatureStats> scenario_stats(std::span<const data::UserSeries> users,
                                               const ExperimentConfig &config) {
  if (config.stats_scope == StatsScope::pooled) {
    return std::vector<data::FeatureStats>(users.size(), pooled_stats(users, config));
  }
  std::vector<data::FeatureStats> out;
  for (const auto &u : users) {
    out.push_back(data::FeatureStats::fit(training_rows(u, config), config.standardize));
  }
  return out;
}

std::vector<data::UserSplit> prepare_splits(std::span<const data::UserSeries> users,
                                            std::span<const data::FeatureStats> stats,
                                            const ExperimentConfig &config) {
  if (stats.size() != 1 && stats.size() != users.size()) {
    throw std::invalid_argument("prepare_splits: need one shared or one per-user stats entry");
  }
  std::vector<data::UserSplit> splits(users.size());
  parallel_for(users.size(), config.threads, [&](std::size_t i) {
    const auto &st = stats.size() == 1 ? stats[0] : stats[i];
    splits[i] = data::make_split(users[i], descriptor(users[i], st, config));
  });
  return splits;
}

ScenarioReport run_standalone(std::span<const data::UserSeries> users,
                              const ExperimentConfig &config) {
  config.validate();
  require_users(users);
  ScenarioReport r;
  r.scenario = "standalone";
  r.kind = ScenarioKind::standalone;
  r.user_ids = ids_of(users);
  r.initial = fed::initial_params(config.shape, config.seed);

  const std::size_t n = users.size();
  r.stats = scenario_stats(users, config);
  const auto splits = prepare_splits(users, r.stats, config);
  r.data_hash = hash_training(splits);

  const auto rounds = static_cast<std::size_t>(config.rounds);
  r.test_mse.assign(rounds, std::vector<double>(n));
  r.train_loss.assign(rounds, std::vector<double>(n));
  r.models.assign(n, r.initial);

  parallel_for(n, config.threads, [&](std::size_t u) {
    auto &params = r.models[u];
    auto adam = nn::AdamState::fresh(params.size(), config.training.adam);
    Rng batch_rng(derive_seed(config.seed, "batch"));
    for (std::size_t e = 0; e < rounds; ++e) {
      r.train_loss[e][u] = fed::train_epoch(params, adam, batch_rng, splits[u].train, config.shape,
                                            config.training.batch_size, std::nullopt,
                                            r.user_ids[u]);
      r.test_mse[e][u] =
          fed::test_mse_kwh(nn::unflatten(params, config.shape), splits[u], r.stats[u]);
    }
  });
  finish(r);
  return r;
}

ScenarioReport run_centralized(std::span<const data::UserSeries> users,
                               const ExperimentConfig &config) {
  config.validate();
  require_users(users);
  ScenarioReport r;
  r.scenario = "centralized";
  r.kind = ScenarioKind::centralized;
  r.user_ids = ids_of(users);
  r.initial = fed::initial_params(config.shape, config.seed);
  r.stats = scenario_stats(users, config);
  const auto splits = prepare_splits(users, r.stats, config);
  r.data_hash = hash_training(splits);

  std::vector<data::Sample> pooled;
  for (const auto &s : splits) {
    pooled.insert(pooled.end(), s.train.begin(), s.train.end());
  }

  auto params = r.initial;
  auto adam = nn::AdamState::fresh(params.size(), config.training.adam);
  Rng batch_rng(derive_seed(config.seed, "batch"));
  for (int e = 0; e < config.rounds; ++e) {
    const double loss = fed::train_epoch(params, adam, batch_rng, pooled, config.shape,
                                         config.training.batch_size, std::nullopt, -1);
    r.train_loss.push_back({loss});
    const auto model = nn::unflatten(params, config.shape);
    std::vector<double> mse(users.size());
    parallel_for(users.size(), config.threads, [&](std::size_t u) {
      mse[u] = fed::test_mse_kwh(model, splits[u], r.stats[u]);
    });
    r.test_mse.push_back(std::move(mse));
    r.history.push_back(params);
  }
  r.models.push_back(std::move(params));
  finish(r);
  return r;
}

ScenarioReport run_federated(std::span<const data::UserSeries> users,
                             const ExperimentConfig &config) {
  config.validate();
  require_users(users);
  ScenarioReport r;
  r.scenario = config.strategy.name();
  r.kind = ScenarioKind::federated;
  r.user_ids = ids_of(users);
  r.stats = scenario_stats(users, config);
  auto splits = prepare_splits(users, r.stats, config);
  r.data_hash = hash_training(splits);

  std::vector<fed::ClientState> clients;
  clients.reserve(users.size());
  for (std::size_t u = 0; u < users.size(); ++u) {
    clients.emplace_back(users[u].user_id, std::move(splits[u]), r.stats[u], config.shape,
                         config.training, derive_seed(config.seed, "batch"));
  }

  fed::SessionConfig session;
  session.shape = config.shape;
  session.strategy = config.strategy;
  session.rounds = config.rounds;
  session.local_epochs = config.local_epochs;
  session.participation = config.participation;
  session.seed = config.seed;
  session.threads = config.threads;
  auto report = fed::run_session(session, clients);

  r.initial = std::move(report.initial);
  for (auto &round : report.rounds) {
    r.test_mse.push_back(std::move(round.test_mse));
    std::vector<double> last;
    for (const auto &trace : round.train_loss) {
      if (!trace.empty()) {
        last.push_back(trace.back());
      }
    }
    r.train_loss.push_back(std::move(last));
  }
  r.history = std::move(report.history);
  r.models.push_back(std::move(report.final_params));
  finish(r);
  return r;
}

std::vector<fed::AggregationStrategy> default_strategies(double prox_mu) {
  std::vector<fed::AggregationStrategy> out;
  for (const auto *name : {"fedavg", "fedmedian", "fedprox", "fedadam", "fedyogi"}) {
    auto s = fed::AggregationStrategy::parse(name);
    s.mu = prox_mu;
    out.push_back(s);
  }
  return out;
}

std::vector<ScenarioReport> compare_strategies(std::span<const data::UserSeries> users,
                                               const ExperimentConfig &config,
                                               std::span<const fed::AggregationStrategy> strategies) {
  if (strategies.empty()) {
    throw ConfigError("compare: no strategies given");
  }
  std::vector<ScenarioReport> out;
  for (const auto &s : strategies) {
    auto c = config;
    c.strategy = s;
    out.push_back(run_federated(users, c));
  }
  return out;
}

SurplusForecast community_surplus(std::span<const data::UserSplit> splits,
                                  std::span<const UserModel> models, const nn::ModelShape &shape) {
  if (splits.empty()) {
    throw std::invalid_argument("community_surplus: no users");
  }
  if (models.size() != 1 && models.size() != splits.size()) {
    throw std::invalid_argument("community_surplus: need one shared or one per-user model");
  }
  const std::size_t first = splits.front().test_begin_row;
  const std::size_t hours = splits.front().test_truth.size();
  for (const auto &s : splits) {
    if (s.test_begin_row != first || s.test_truth.size() != hours) {
      throw ShapeError("community_surplus: user " + std::to_string(s.user_id) +
                       " covers different hours than user " +
                       std::to_string(splits.front().user_id));
    }
  }

  SurplusForecast out;
  out.first_hour = first;
  out.per_user.resize(splits.size());
  nn::ForecastModel model;
  const nn::ModelParams *loaded = nullptr;
  for (std::size_t u = 0; u < splits.size(); ++u) {
    const auto &m = models.size() == 1 ? models[0] : models[u];
    if (m.params != loaded) {
      model = nn::unflatten(*m.params, shape);
      loaded = m.params;
    }
    out.per_user[u] = fed::forecast_kwh(model, splits[u], *m.stats);
    out.user_ids.push_back(splits[u].user_id);
  }
  out.predicted.assign(hours, 0.0);
  out.truth.assign(hours, 0.0);
  for (std::size_t u = 0; u < splits.size(); ++u) {
    for (std::size_t t = 0; t < hours; ++t) {
      out.predicted[t] += out.per_user[u][t];
      out.truth[t] += splits[u].test_truth[t];
    }
  }
  return out;
}

std::vector<CompositionResult> evaluate_compositions(const nn::ModelParams &params,
                                                     const data::FeatureStats &stats,
                                                     const data::ProfileBank &bank,
                                                     const SweepConfig &sweep,
                                                     const ExperimentConfig &config) {
  if (sweep.fractions.empty()) {
    throw ConfigError("evaluate: no consumer fractions given");
  }
  std::vector<CompositionResult> out;
  for (const double fraction : sweep.fractions) {
    data::LecConfig lec = sweep.train_lec;
    lec.n_users = sweep.test_users;
    lec.consumer_fraction = fraction;
    lec.seed = derive_seed(config.seed, "test-lec");
    const auto users = data::build_lec(lec, bank, config.threads);

    std::vector<data::FeatureStats> user_stats(users.size(), stats);
    if (config.stats_scope == StatsScope::per_user) {
      user_stats = scenario_stats(users, config);
    }
    std::vector<data::UserSplit> splits(users.size());
    std::vector<UserModel> models(users.size());
    parallel_for(users.size(), config.threads, [&](std::size_t i) {
      splits[i] = data::make_full_year(users[i], user_stats[i], config.window);
      models[i] = UserModel{&params, &user_stats[i]};
    });
    CompositionResult res;
    res.consumer_fraction = fraction;
    res.forecast = community_surplus(splits, models, config.shape);
    res.predicted_stats = seasonal_boxplot(res.forecast.predicted, res.forecast.first_hour);
    res.true_stats = seasonal_boxplot(res.forecast.truth, res.forecast.first_hour);
    for (const auto &user : users) {
      for (const auto &row : user.rows) {
        res.annual_true_surplus += row.sum_total_ewm_balance;
      }
    }
    const double winter = res.predicted_stats[0].iqr;
    res.spring_winter_iqr_ratio = winter > 0.0 ? res.predicted_stats[1].iqr / winter : 0.0;
    out.push_back(std::move(res));
  }
  return out;
}

SweepReport composition_sweep(const data::ProfileBank &bank, const SweepConfig &sweep,
                              const ExperimentConfig &config) {
  const auto users = data::build_lec(sweep.train_lec, bank, config.threads);
  SweepReport report;
  report.training = run_federated(users, config);
  report.compositions = evaluate_compositions(report.training.models.front(),
                                              report.training.stats.front(), bank, sweep, config);
  return report;
}

} // namespace fedcast::eval
