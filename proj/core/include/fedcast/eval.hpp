#pragma once

// Experiments: Stand-Alone / Centralized / Federated comparison, strategy
// comparison, community surplus forecasts and seasonal box-plot statistics.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedcast/data.hpp"
#include "fedcast/fed.hpp"
#include "fedcast/windows.hpp"

namespace fedcast::eval {

/// Where standardisation statistics come from.
enum class StatsScope {
  per_user, // each user's own training rows; identical windows in every scenario
  pooled,   // all users' training rows, merged from per-user moment summaries
};

struct ExperimentConfig {
  nn::ModelShape shape;
  fed::TrainingConfig training;
  /// Training windows; the test tiling always uses stride = horizon.
  data::WindowSpec window{24, 24, 24};
  double train_fraction = 0.8;
  bool standardize = true;
  StatsScope stats_scope = StatsScope::per_user;
  /// Federated rounds, and epochs for the stand-alone and centralized runs.
  int rounds = 10;
  int local_epochs = 1;
  double participation = 1.0;
  fed::AggregationStrategy strategy = fed::AggregationStrategy::parse("fedprox");
  std::uint64_t seed = 0;
  unsigned threads = 1;

  /// Throws ConfigError.
  void validate() const;
};

enum class ScenarioKind { standalone, centralized, federated };

struct ScenarioReport {
  std::string scenario; // standalone | centralized | <strategy name>
  ScenarioKind kind = ScenarioKind::standalone;
  std::vector<int> user_ids;
  std::vector<std::vector<double>> test_mse;   // [round][user], kWh^2
  std::vector<double> mean_test_mse;           // [round]
  std::vector<std::vector<double>> train_loss; // [round][trainer], standardised
  std::vector<double> mean_train_loss;         // [round]
  std::vector<double> final_test_mse;          // [user]
  double final_mean_test_mse = 0.0;
  /// Spread (max - min) of the last-round training loss across trainers.
  double loss_spread = 0.0;
  /// Multiset digest of every training window the scenario consumed.
  std::uint64_t data_hash = 0;
  nn::ModelParams initial;
  /// One model per user (stand-alone) or a single shared model.
  std::vector<nn::ModelParams> models;
  std::vector<data::FeatureStats> stats; // one per user
  /// Shared model after each round/epoch (centralized and federated only).
  std::vector<nn::ModelParams> history;

  friend bool operator==(const ScenarioReport &, const ScenarioReport &) = default;
};

/// Training statistics pooled across users from per-user moment summaries.
data::FeatureStats pooled_stats(std::span<const data::UserSeries> users,
                                const ExperimentConfig &config);

/// Standardisation for every user under `config.stats_scope`.
std::vector<data::FeatureStats> scenario_stats(std::span<const data::UserSeries> users,
                                               const ExperimentConfig &config);

/// Chronological splits, standardised with `stats` (one entry, or one per user).
std::vector<data::UserSplit> prepare_splits(std::span<const data::UserSeries> users,
                                            std::span<const data::FeatureStats> stats,
                                            const ExperimentConfig &config);

ScenarioReport run_standalone(std::span<const data::UserSeries> users,
                              const ExperimentConfig &config);
ScenarioReport run_centralized(std::span<const data::UserSeries> users,
                               const ExperimentConfig &config);
ScenarioReport run_federated(std::span<const data::UserSeries> users,
                             const ExperimentConfig &config);

/// One federated session per strategy, all from the same initial parameters.
std::vector<ScenarioReport> compare_strategies(std::span<const data::UserSeries> users,
                                               const ExperimentConfig &config,
                                               std::span<const fed::AggregationStrategy> strategies);

/// The five rules with default hyperparameters, in presentation order.
std::vector<fed::AggregationStrategy> default_strategies(double prox_mu = 0.01);

struct UserModel {
  const nn::ModelParams *params = nullptr;
  const data::FeatureStats *stats = nullptr;
};

struct SurplusForecast {
  std::size_t first_hour = 0; // absolute hour of index 0
  std::vector<int> user_ids;
  std::vector<std::vector<double>> per_user; // [user][hour], kWh
  std::vector<double> predicted;             // community sum per hour
  std::vector<double> truth;                 // community true net energy per hour

  std::size_t hours() const { return predicted.size(); }
};

/// Sums de-standardised per-user forecasts hour by hour, in user order.
/// `models` has one entry (shared model) or one per split. All splits must
/// tile the same hours.
SurplusForecast community_surplus(std::span<const data::UserSplit> splits,
                                  std::span<const UserModel> models, const nn::ModelShape &shape);

/// Linear interpolation between order statistics at position p*(n-1).
double quantile_sorted(std::span<const double> sorted, double p);

struct SeasonalStats {
  data::Season season = data::Season::winter;
  std::size_t count = 0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double iqr = 0.0;
  double lo_whisker = 0.0; // q1 - 1.5 iqr
  double hi_whisker = 0.0; // q3 + 1.5 iqr
  std::vector<double> outliers;
};

/// Groups `series` (index i is absolute hour first_hour + i) into the four
/// 84-day season blocks. Seasons without data report count 0. Throws
/// std::invalid_argument when the series runs past the end of the year.
std::array<SeasonalStats, data::kSeasons> seasonal_boxplot(std::span<const double> series,
                                                           std::size_t first_hour);

struct CompositionResult {
  double consumer_fraction = 0.0;
  SurplusForecast forecast;
  std::array<SeasonalStats, data::kSeasons> predicted_stats;
  std::array<SeasonalStats, data::kSeasons> true_stats;
  double annual_true_surplus = 0.0;
  double spring_winter_iqr_ratio = 0.0; // on the predicted series
};

struct SweepConfig {
  data::LecConfig train_lec{257, 0.5};
  int test_users = 100;
  std::vector<double> fractions{0.0, 0.25, 0.5, 0.75};
};

/// Whole-year community forecasts for a trained shared model on held-out
/// LECs, one per consumer fraction. Test LECs use seeds disjoint from the
/// training LEC. `stats` standardises every test user under pooled scope;
/// under per-user scope each test user is fitted on its own first
/// `train_fraction` of the year.
std::vector<CompositionResult> evaluate_compositions(const nn::ModelParams &params,
                                                     const data::FeatureStats &stats,
                                                     const data::ProfileBank &bank,
                                                     const SweepConfig &sweep,
                                                     const ExperimentConfig &config);

struct SweepReport {
  ScenarioReport training;
  std::vector<CompositionResult> compositions;
};

/// Trains once (federated) on the training LEC, then evaluates every fraction.
SweepReport composition_sweep(const data::ProfileBank &bank, const SweepConfig &sweep,
                              const ExperimentConfig &config);

} // namespace fedcast::eval
