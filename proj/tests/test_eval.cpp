#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "fedcast/errors.hpp"
#include "fedcast/eval.hpp"
#include "support.hpp"

using namespace fedcast;
using namespace fedcast::eval;

namespace {

const data::ProfileBank &bank() {
  static const auto b = data::generate_parametric_profiles(21);
  return b;
}

std::vector<data::UserSeries> community(int n, double consumers = 0.5, std::uint64_t seed = 4) {
  data::LecConfig c;
  c.n_users = n;
  c.consumer_fraction = consumers;
  c.seed = seed;
  return data::build_lec(c, bank());
}

ExperimentConfig small_config(int rounds = 2) {
  ExperimentConfig c;
  c.shape = fedcast::testing::tiny_shape();
  c.rounds = rounds;
  c.seed = 9;
  return c;
}

// Direct order-statistics oracle: h = (n - 1) p, linear between floor and ceil.
double quartile_oracle(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = static_cast<std::size_t>(std::ceil(h));
  return v[lo] + (h - std::floor(h)) * (v[hi] - v[lo]);
}

} // namespace

TEST(Quantile, OneToHundred) {
  std::vector<double> v(100);
  for (int i = 0; i < 100; ++i) {
    v[static_cast<std::size_t>(i)] = i + 1;
  }
  EXPECT_DOUBLE_EQ(quantile_sorted(v, 0.25), 25.75);
  EXPECT_DOUBLE_EQ(quantile_sorted(v, 0.75), 75.25);
  EXPECT_DOUBLE_EQ(quantile_sorted(v, 0.5), 50.5);
  EXPECT_THROW(quantile_sorted(std::vector<double>{}, 0.5), std::invalid_argument);
}

TEST(SeasonalBoxplot, MatchesOracleOnRandomSeries) {
  Rng rng(6);
  std::vector<double> series(data::kHoursPerYear);
  for (auto &v : series) {
    v = rng.normal() * (rng.bernoulli(0.02) ? 10.0 : 1.0);
  }
  const auto stats = seasonal_boxplot(series, 0);
  for (int s = 0; s < data::kSeasons; ++s) {
    const auto begin = series.begin() + s * data::kDaysPerSeason * 24;
    const std::vector<double> block(begin, begin + data::kDaysPerSeason * 24);
    const auto &st = stats[static_cast<std::size_t>(s)];
    EXPECT_EQ(st.count, block.size());
    EXPECT_EQ(st.q1, quartile_oracle(block, 0.25));
    EXPECT_EQ(st.median, quartile_oracle(block, 0.5));
    EXPECT_EQ(st.q3, quartile_oracle(block, 0.75));
    EXPECT_EQ(st.iqr, st.q3 - st.q1);
    EXPECT_EQ(st.lo_whisker, st.q1 - 1.5 * st.iqr);
    EXPECT_EQ(st.hi_whisker, st.q3 + 1.5 * st.iqr);
    std::vector<double> outliers;
    for (const double v : block) {
      if (v < st.lo_whisker || v > st.hi_whisker) {
        outliers.push_back(v);
      }
    }
    EXPECT_EQ(st.outliers, outliers);
    EXPECT_LE(st.q1, st.median);
    EXPECT_LE(st.median, st.q3);
  }
}

TEST(SeasonalBoxplot, ConstantAndInjectedOutlier) {
  std::vector<double> flat(24 * 84, 2.0);
  const auto st = seasonal_boxplot(flat, 0);
  EXPECT_EQ(st[0].iqr, 0.0);
  EXPECT_TRUE(st[0].outliers.empty());
  EXPECT_EQ(st[1].count, 0u);

  std::vector<double> ramp(24 * 84);
  for (std::size_t i = 0; i < ramp.size(); ++i) {
    ramp[i] = static_cast<double>(i % 50);
  }
  ramp[100] = 1e4;
  const auto r = seasonal_boxplot(ramp, 0);
  ASSERT_EQ(r[0].outliers.size(), 1u);
  EXPECT_EQ(r[0].outliers[0], 1e4);
}

TEST(SeasonalBoxplot, OffsetSeriesUsesAbsoluteHours) {
  // Starting at hour 24 * 80, the first 4 days are winter, the rest spring.
  std::vector<double> series(24 * 10, 1.0);
  const auto st = seasonal_boxplot(series, 24 * 80);
  EXPECT_EQ(st[0].count, 24u * 4u);
  EXPECT_EQ(st[1].count, 24u * 6u);
  const std::vector<double> year(8064, 0.0);
  EXPECT_EQ(seasonal_boxplot(year, 0)[3].count, 24u * 84u);
  EXPECT_THROW(seasonal_boxplot(year, 1), std::invalid_argument);
}

TEST(CommunitySurplus, SumIsExactAndSingleUserIsIdentity) {
  const auto users = community(4);
  const auto cfg = small_config();
  const auto stats = scenario_stats(users, cfg);
  const auto splits = prepare_splits(users, stats, cfg);
  const auto params = fed::initial_params(cfg.shape, 3);
  std::vector<UserModel> models;
  for (const auto &s : stats) {
    models.push_back({&params, &s});
  }
  const auto f = community_surplus(splits, models, cfg.shape);
  ASSERT_EQ(f.per_user.size(), 4u);
  for (std::size_t t = 0; t < f.hours(); ++t) {
    double sum = 0.0, truth = 0.0;
    for (std::size_t u = 0; u < 4; ++u) {
      sum += f.per_user[u][t];
      truth += splits[u].test_truth[t];
    }
    EXPECT_EQ(f.predicted[t], sum);
    EXPECT_EQ(f.truth[t], truth);
  }
  const auto one = community_surplus(std::span(splits).first(1), std::span(models).first(1), cfg.shape);
  EXPECT_EQ(one.predicted, one.per_user[0]);
  EXPECT_EQ(one.predicted, fed::forecast_kwh(nn::unflatten(params, cfg.shape), splits[0], stats[0]));
}

TEST(CommunitySurplus, AllConsumerTruthNeverPositive) {
  const auto users = community(5, 1.0);
  const auto cfg = small_config();
  const auto stats = scenario_stats(users, cfg);
  const auto splits = prepare_splits(users, stats, cfg);
  const auto params = fed::initial_params(cfg.shape, 1);
  const UserModel m{&params, &stats[0]};
  EXPECT_THROW(community_surplus(splits, std::span<const UserModel>(&m, 1).subspan(0, 0), cfg.shape),
               std::invalid_argument);
  std::vector<UserModel> models;
  for (const auto &s : stats) {
    models.push_back({&params, &s});
  }
  const auto f = community_surplus(splits, models, cfg.shape);
  for (const double v : f.truth) {
    EXPECT_LE(v, 0.0);
  }
}

TEST(Scenarios, SingleUserEquivalence) {
  const auto users = community(1, 0.0);
  auto cfg = small_config(3);
  cfg.strategy = fed::AggregationStrategy::parse("fedavg");
  const auto sa = run_standalone(users, cfg);
  const auto ce = run_centralized(users, cfg);
  const auto fe = run_federated(users, cfg);
  EXPECT_EQ(sa.models.front(), ce.models.front());
  EXPECT_EQ(ce.models.front(), fe.models.front());
  EXPECT_EQ(sa.test_mse, ce.test_mse);
  EXPECT_EQ(ce.test_mse, fe.test_mse);
}

TEST(Scenarios, DataParityAndShapes) {
  const auto users = community(4);
  const auto cfg = small_config();
  const auto sa = run_standalone(users, cfg);
  const auto ce = run_centralized(users, cfg);
  const auto fe = run_federated(users, cfg);
  EXPECT_EQ(ce.data_hash, fe.data_hash);
  EXPECT_EQ(sa.data_hash, fe.data_hash);
  EXPECT_EQ(sa.models.size(), 4u);
  EXPECT_EQ(ce.models.size(), 1u);
  EXPECT_EQ(sa.initial, fe.initial);
  for (const auto *r : {&sa, &ce, &fe}) {
    ASSERT_EQ(r->test_mse.size(), 2u);
    EXPECT_EQ(r->test_mse[0].size(), 4u);
    EXPECT_EQ(r->final_test_mse, r->test_mse.back());
    EXPECT_GE(r->loss_spread, 0.0);
  }
  EXPECT_EQ(fe.scenario, "fedprox");
  // Concatenated window count equals the per-user sum.
  const auto splits = prepare_splits(users, sa.stats, cfg);
  std::size_t total = 0;
  for (const auto &s : splits) {
    total += s.train.size();
  }
  EXPECT_EQ(total, 4 * data::window_count(data::split_row(8064, 0.8), cfg.window));
}

TEST(Scenarios, PooledScopeSharesOneStandardisation) {
  const auto users = community(3);
  auto cfg = small_config(1);
  cfg.stats_scope = StatsScope::pooled;
  const auto stats = scenario_stats(users, cfg);
  EXPECT_EQ(stats[0].mean, stats[2].mean);
  std::vector<data::FeatureRow> all;
  for (const auto &u : users) {
    all.insert(all.end(), u.rows.begin(), u.rows.begin() + data::split_row(8064, 0.8));
  }
  const auto direct = data::FeatureStats::fit(all);
  for (std::size_t c = 0; c < 8; ++c) {
    EXPECT_NEAR(stats[0].mean[c], direct.mean[c], 1e-10);
    EXPECT_NEAR(stats[0].scale[c], direct.scale[c], 1e-10);
  }
}

TEST(Scenarios, Deterministic) {
  const auto users = community(3);
  const auto cfg = small_config();
  EXPECT_EQ(run_federated(users, cfg), run_federated(users, cfg));
  auto threaded = cfg;
  threaded.threads = 3;
  EXPECT_EQ(run_standalone(users, cfg), run_standalone(users, threaded));
}

TEST(Scenarios, RejectsBadInput) {
  auto cfg = small_config();
  EXPECT_THROW(run_standalone({}, cfg), std::invalid_argument);
  cfg.window.horizon = 12;
  EXPECT_THROW(run_centralized(community(1), cfg), ConfigError);
}

TEST(CompareStrategies, SharedInitAndMuZeroReduction) {
  const auto users = community(3);
  const auto cfg = small_config();
  auto strategies = default_strategies(0.0);
  const auto reports = compare_strategies(users, cfg, strategies);
  ASSERT_EQ(reports.size(), 5u);
  for (const auto &r : reports) {
    EXPECT_EQ(r.initial, reports[0].initial);
    for (const double v : r.mean_test_mse) {
      EXPECT_TRUE(std::isfinite(v));
      EXPECT_GE(v, 0.0);
    }
  }
  EXPECT_EQ(reports[0].scenario, "fedavg");
  EXPECT_EQ(reports[2].scenario, "fedprox");
  EXPECT_EQ(reports[0].mean_test_mse, reports[2].mean_test_mse);
  EXPECT_EQ(reports[0].history, reports[2].history);
  EXPECT_THROW(compare_strategies(users, cfg, {}), ConfigError);
}

TEST(Compositions, FractionsAndSurplusMonotone) {
  const auto cfg = small_config(1);
  SweepConfig sweep;
  sweep.test_users = 8;
  sweep.fractions = {0.0, 0.5, 1.0};
  const auto params = fed::initial_params(cfg.shape, 2);
  const auto results =
      evaluate_compositions(params, data::FeatureStats::identity(), bank(), sweep, cfg);
  ASSERT_EQ(results.size(), 3u);
  for (std::size_t k = 1; k < results.size(); ++k) {
    EXPECT_LE(results[k].annual_true_surplus, results[k - 1].annual_true_surplus);
  }
  for (const auto &r : results) {
    EXPECT_EQ(r.forecast.user_ids.size(), 8u);
    EXPECT_EQ(r.forecast.first_hour, 24u);
    EXPECT_EQ(r.forecast.hours(), 8064u - 24u);
  }
  for (const double v : results[2].forecast.truth) {
    EXPECT_LE(v, 0.0);
  }
}
