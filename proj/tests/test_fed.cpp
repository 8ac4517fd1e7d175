#include <gtest/gtest.h>

#include <cmath>
#include <type_traits>

#include "fedcast/errors.hpp"
#include "fedcast/fed.hpp"
#include "support.hpp"

using namespace fedcast;
using fed::ClientUpdate;
using fedcast::testing::random_updates;
using fedcast::testing::tiny_shape;

namespace {

// Privacy boundary: every server-side rule consumes ClientUpdate values only.
static_assert(std::is_same_v<decltype(&fed::aggregate_fedavg),
                             nn::ModelParams (*)(std::span<const ClientUpdate>)>);
static_assert(std::is_same_v<decltype(&fed::aggregate_fedmedian),
                             nn::ModelParams (*)(std::span<const ClientUpdate>)>);
static_assert(std::is_same_v<decltype(&fed::aggregate_fedprox),
                             nn::ModelParams (*)(std::span<const ClientUpdate>)>);
static_assert(std::is_same_v<decltype(&fed::aggregate_fedadam),
                             nn::ModelParams (*)(std::span<const ClientUpdate>, fed::ServerState &)>);
static_assert(std::is_same_v<decltype(&fed::aggregate_fedyogi),
                             nn::ModelParams (*)(std::span<const ClientUpdate>, fed::ServerState &)>);
static_assert(!std::is_invocable_v<decltype(&fed::aggregate_fedavg), std::span<const data::UserSeries>>);
// ClientState exposes no accessor for its windows.
template <typename T>
concept ExposesWindows = requires(const T &c) { c.split(); } || requires(const T &c) { c.train(); };
static_assert(!ExposesWindows<fed::ClientState>);

ClientUpdate update(int id, std::size_t n, std::vector<double> p) {
  ClientUpdate u;
  u.client_id = id;
  u.n_k = n;
  u.params = nn::ModelParams(std::move(p));
  return u;
}

const std::vector<data::UserSeries> &users() {
  static const auto u = [] {
    const auto bank = data::generate_parametric_profiles(3);
    data::LecConfig c;
    c.n_users = 10;
    c.seed = 17;
    return data::build_lec(c, bank);
  }();
  return u;
}

data::FeatureStats stats_for(const data::UserSeries &u) {
  return data::FeatureStats::fit(
      std::span<const data::FeatureRow>(u.rows).first(data::split_row(u.rows.size(), 0.8)));
}

data::UserSplit split_for(const data::UserSeries &u, int stride = 24) {
  data::SplitDescriptor d;
  d.train_rows = data::split_row(u.rows.size(), 0.8);
  d.stats = stats_for(u);
  d.train_spec = {24, 24, stride};
  d.test_spec = {24, 24, 24};
  return data::make_split(u, d);
}

std::vector<fed::ClientState> clients(std::size_t n, std::uint64_t seed = 5,
                                      fed::TrainingConfig training = {}) {
  std::vector<fed::ClientState> out;
  for (std::size_t k = 0; k < n; ++k) {
    const auto &u = users()[k];
    out.emplace_back(u.user_id, split_for(u), stats_for(u), tiny_shape(), training,
                     derive_seed(seed, "batch"));
  }
  return out;
}

double distance(const nn::ModelParams &a, const nn::ModelParams &b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += (a[i] - b[i]) * (a[i] - b[i]);
  }
  return std::sqrt(s);
}

} // namespace

TEST(FedAvg, Examples) {
  const std::vector<ClientUpdate> same{update(0, 3, {1, 2}), update(1, 9, {1, 2})};
  EXPECT_EQ(fed::aggregate_fedavg(same).values, (std::vector<double>{1, 2}));
  const std::vector<ClientUpdate> two{update(0, 1, {0}), update(1, 3, {4})};
  EXPECT_EQ(fed::aggregate_fedavg(two).values, std::vector<double>{3});
  EXPECT_THROW(fed::aggregate_fedavg(std::vector<ClientUpdate>{}), std::invalid_argument);
  const std::vector<ClientUpdate> ragged{update(0, 1, {0}), update(1, 1, {1, 2})};
  EXPECT_THROW(fed::aggregate_fedavg(ragged), ShapeError);
  const std::vector<ClientUpdate> dup{update(2, 1, {0}), update(2, 1, {1})};
  EXPECT_THROW(fed::aggregate_fedavg(dup), std::invalid_argument);
}

TEST(FedAvg, MatchesOracleAndStaysWithinBounds) {
  Rng rng(101);
  for (int trial = 0; trial < 100; ++trial) {
    const auto ups = random_updates(10, 64, rng);
    const auto got = fed::aggregate_fedavg(ups);
    const auto want = fedcast::testing::fedavg_oracle(ups);
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_NEAR(got[i], want[i], 1e-12);
      double lo = 1e300, hi = -1e300;
      for (const auto &u : ups) {
        lo = std::min(lo, u.params[i]);
        hi = std::max(hi, u.params[i]);
      }
      EXPECT_LE(lo, got[i] + 1e-12);
      EXPECT_GE(hi, got[i] - 1e-12);
    }
  }
}

TEST(FedMedian, Examples) {
  const std::vector<ClientUpdate> three{update(0, 1, {1}), update(1, 1, {100}), update(2, 1, {2})};
  EXPECT_EQ(fed::aggregate_fedmedian(three).values, std::vector<double>{2});
  const std::vector<ClientUpdate> one{update(4, 7, {1.5, -2})};
  EXPECT_EQ(fed::aggregate_fedmedian(one).values, (std::vector<double>{1.5, -2}));
  const std::vector<ClientUpdate> even{update(0, 1, {1}), update(1, 1, {4}), update(2, 1, {2}),
                                       update(3, 1, {10})};
  EXPECT_EQ(fed::aggregate_fedmedian(even).values, std::vector<double>{3});
}

TEST(FedMedian, MatchesSortingOracle) {
  Rng rng(202);
  for (int trial = 0; trial < 100; ++trial) {
    const auto ups = random_updates(trial % 2 == 0 ? 10 : 7, 32, rng);
    EXPECT_EQ(fed::aggregate_fedmedian(ups).values, fedcast::testing::fedmedian_oracle(ups));
  }
}

TEST(FedProx, ServerRuleEqualsFedAvg) {
  Rng rng(303);
  for (int trial = 0; trial < 20; ++trial) {
    const auto ups = random_updates(10, 50, rng);
    EXPECT_EQ(fed::aggregate_fedprox(ups), fed::aggregate_fedavg(ups));
  }
}

TEST(FedAdam, FreshStateFixedPoint) {
  for (const char *name : {"fedadam", "fedyogi"}) {
    auto server = fed::ServerState::start(nn::ModelParams(std::vector<double>{0.5, -1.0}),
                                          fed::AggregationStrategy::parse(name));
    const std::vector<ClientUpdate> ups{update(0, 2, {0.5, -1.0}), update(1, 5, {0.5, -1.0})};
    EXPECT_EQ(fed::aggregate(ups, server), server.global) << name;
    EXPECT_EQ(server.m, (std::vector<double>{0.0, 0.0}));
  }
}

TEST(FedAdam, ScalarClosedForm) {
  fed::AggregationStrategy s = fed::AggregationStrategy::parse("fedadam");
  auto server = fed::ServerState::start(nn::ModelParams(std::vector<double>{1.0}), s);
  // Weighted mean of (1 x 0.5, 3 x 2.5) is 2.0, so delta = 1.0.
  const std::vector<ClientUpdate> ups{update(0, 1, {0.5}), update(1, 3, {2.5})};
  const auto next = fed::aggregate_fedadam(ups, server);
  const double m = 0.1 * 1.0;
  const double v = 0.99 * 1e-6 + 0.01 * 1.0;
  EXPECT_NEAR(server.m[0], m, 1e-15);
  EXPECT_NEAR(server.v[0], v, 1e-15);
  EXPECT_NEAR(next[0], 1.0 + 1e-2 * m / (std::sqrt(v) + 1e-3), 1e-15);
}

TEST(FedYogi, TwoCoordinateHandComputation) {
  const auto run = [](const char *name) {
    auto strategy = fed::AggregationStrategy::parse(name);
    strategy.tau = 0.5; // v0 = 0.25
    auto server = fed::ServerState::start(nn::ModelParams(std::vector<double>{0.0, 0.0}), strategy);
    // delta = (0.1, 2.0): delta^2 = 0.01 < v0 for the first, 4.0 > v0 for the second.
    const std::vector<ClientUpdate> ups{update(0, 1, {0.1, 2.0})};
    auto next = fed::aggregate(ups, server);
    return std::tuple(next, server.m, server.v);
  };
  const auto [adam_w, adam_m, adam_v] = run("fedadam");
  const auto [yogi_w, yogi_m, yogi_v] = run("fedyogi");
  EXPECT_EQ(adam_m, yogi_m);
  EXPECT_NEAR(adam_m[0], 0.01, 1e-16);
  EXPECT_NEAR(adam_m[1], 0.2, 1e-16);
  EXPECT_NEAR(adam_v[0], 0.99 * 0.25 + 0.01 * 0.01, 1e-15);
  EXPECT_NEAR(adam_v[1], 0.99 * 0.25 + 0.01 * 4.0, 1e-15);
  // Yogi: v - (1 - b2) d^2 sign(v - d^2).
  EXPECT_NEAR(yogi_v[0], 0.25 - 0.01 * 0.01, 1e-15);
  EXPECT_NEAR(yogi_v[1], 0.25 + 0.01 * 4.0, 1e-15);
  EXPECT_NEAR(yogi_w[0], 1e-2 * 0.01 / (std::sqrt(yogi_v[0]) + 0.5), 1e-15);
  EXPECT_NEAR(yogi_w[1], 1e-2 * 0.2 / (std::sqrt(yogi_v[1]) + 0.5), 1e-15);
  EXPECT_NE(adam_w, yogi_w);
}

TEST(Aggregation, PermutationInvariantForEveryRule) {
  Rng rng(404);
  auto ups = random_updates(9, 40, rng);
  auto shuffled = ups;
  rng.shuffle(shuffled);
  for (const char *s : {"fedavg", "fedmedian", "fedprox", "fedadam", "fedyogi"}) {
    auto a = fed::ServerState::start(nn::ModelParams(40, 0.1), fed::AggregationStrategy::parse(s));
    auto b = a;
    EXPECT_EQ(fed::aggregate(ups, a), fed::aggregate(shuffled, b)) << s;
    EXPECT_EQ(a.m, b.m);
    EXPECT_EQ(a.v, b.v);
  }
}

TEST(Strategy, ParseAndValidate) {
  EXPECT_EQ(fed::AggregationStrategy::parse("FedYogi").kind, fed::StrategyKind::fedyogi);
  EXPECT_THROW(fed::AggregationStrategy::parse("fedsgd"), ConfigError);
  auto s = fed::AggregationStrategy::parse("fedprox");
  EXPECT_EQ(s.client_mu(), 0.01);
  s.mu = -1;
  EXPECT_THROW(s.validate(), ConfigError);
  s = fed::AggregationStrategy::parse("fedadam");
  EXPECT_EQ(s.client_mu(), 0.0);
  s.tau = 0;
  EXPECT_THROW(fed::ServerState::start(nn::ModelParams(1), s), ConfigError);
}

TEST(LocalTrain, ZeroEpochsReturnsGlobal) {
  auto cs = clients(1);
  const auto global = fed::initial_params(tiny_shape(), 1);
  const auto u = cs[0].local_train(global, 0, 0.01);
  EXPECT_EQ(u.params, global);
  EXPECT_TRUE(u.train_loss.empty());
  EXPECT_EQ(u.n_k, cs[0].sample_count());
  EXPECT_THROW(cs[0].local_train(nn::ModelParams(3), 1, 0.0), ShapeError);
}

TEST(LocalTrain, ProxPullsTowardGlobal) {
  const auto global = fed::initial_params(tiny_shape(), 2);
  auto free_run = clients(1, 9);
  auto prox_run = clients(1, 9);
  const auto a = free_run[0].local_train(global, 3, 0.0);
  const auto b = prox_run[0].local_train(global, 3, 0.5);
  EXPECT_LE(distance(b.params, global), distance(a.params, global));
  EXPECT_EQ(a.train_loss.size(), 3u);
}

TEST(LocalTrain, SingleBatchStepMatchesAdamOnHandGradient) {
  fed::TrainingConfig training;
  training.batch_size = 1000; // one batch holds every window
  auto cs = clients(1, 4, training);
  const auto shape = tiny_shape();
  const auto global = fed::initial_params(shape, 3);
  const auto u = cs[0].local_train(global, 1, 0.0);

  const auto split = split_for(users()[0]);
  const auto model = nn::unflatten(global, shape);
  std::vector<const nn::Window *> inputs;
  Eigen::MatrixXd targets(24, static_cast<Eigen::Index>(split.train.size()));
  for (std::size_t k = 0; k < split.train.size(); ++k) {
    inputs.push_back(&split.train[k].input);
    targets.col(static_cast<Eigen::Index>(k)) = split.train[k].target;
  }
  nn::ForwardCache cache;
  nn::lstm_forward_batch(model, inputs, &cache);
  const auto g = nn::backward_batch(model, cache, targets).gradient;
  auto expected = global;
  auto adam = nn::AdamState::fresh(global.size());
  nn::adam_step(expected, g, adam);
  for (std::size_t i = 0; i < expected.size(); ++i) {
    EXPECT_NEAR(u.params[i], expected[i], 1e-12) << i;
  }
}

TEST(LocalTrain, NonFiniteLossNamesClientAndBatch) {
  auto split = split_for(users()[0]);
  split.train[3].target(0) = std::nan("");
  fed::TrainingConfig training;
  training.batch_size = 1;
  fed::ClientState c(42, split, stats_for(users()[0]), tiny_shape(), training, 1);
  try {
    c.local_train(fed::initial_params(tiny_shape(), 0), 1, 0.0);
    FAIL() << "expected NumericError";
  } catch (const NumericError &e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("client 42"), std::string::npos) << msg;
    EXPECT_NE(msg.find("batch"), std::string::npos) << msg;
  }
}

TEST(RunRound, SingleClientFedAvgEqualsPlainTraining) {
  const auto shape = tiny_shape();
  auto cs = clients(1, 6);
  fed::SessionConfig cfg;
  cfg.shape = shape;
  cfg.strategy = fed::AggregationStrategy::parse("fedavg");
  cfg.rounds = 3;
  cfg.seed = 6;
  const auto report = fed::run_session(cfg, cs);

  auto params = fed::initial_params(shape, 6);
  auto adam = nn::AdamState::fresh(params.size());
  Rng batch(derive_seed(6, "batch"));
  const auto split = split_for(users()[0]);
  for (int e = 0; e < 3; ++e) {
    fed::train_epoch(params, adam, batch, split.train, shape, 32, std::nullopt);
    EXPECT_EQ(report.history[static_cast<std::size_t>(e)], params) << "epoch " << e;
  }
}

TEST(RunRound, ClientOrderDoesNotMatter) {
  auto a = clients(4);
  auto b = clients(4);
  std::reverse(b.begin(), b.end());
  const auto init = fed::initial_params(tiny_shape(), 0);
  for (const char *name : {"fedavg", "fedmedian", "fedyogi"}) {
    auto sa = fed::ServerState::start(init, fed::AggregationStrategy::parse(name));
    auto sb = sa;
    const auto ra = fed::run_round(sa, a, {});
    const auto rb = fed::run_round(sb, b, {});
    EXPECT_EQ(sa.global, sb.global) << name;
    EXPECT_EQ(ra, rb) << name;
  }
}

TEST(RunSession, TenClientsTenRoundsTraces) {
  auto cs = clients(10);
  fed::SessionConfig cfg;
  cfg.shape = tiny_shape();
  cfg.strategy = fed::AggregationStrategy::parse("fedprox");
  const auto r = fed::run_session(cfg, cs);
  ASSERT_EQ(r.rounds.size(), 10u);
  EXPECT_EQ(r.history.size(), 10u);
  for (const auto &round : r.rounds) {
    ASSERT_EQ(round.train_loss.size(), 10u);
    ASSERT_EQ(round.test_mse.size(), 10u);
    for (const auto &trace : round.train_loss) {
      EXPECT_EQ(trace.size(), 1u);
      EXPECT_TRUE(std::isfinite(trace[0]));
    }
  }
  EXPECT_EQ(r.final_params, r.history.back());
}

TEST(RunSession, ZeroRoundsReturnsInitial) {
  auto cs = clients(2);
  fed::SessionConfig cfg;
  cfg.shape = tiny_shape();
  cfg.rounds = 0;
  const auto r = fed::run_session(cfg, cs);
  EXPECT_TRUE(r.rounds.empty());
  EXPECT_EQ(r.final_params, fed::initial_params(tiny_shape(), 0));
}

TEST(RunSession, DeterministicAcrossRunsAndThreads) {
  fed::SessionConfig cfg;
  cfg.shape = tiny_shape();
  cfg.strategy = fed::AggregationStrategy::parse("fedadam");
  cfg.rounds = 3;
  cfg.seed = 12;
  auto a = clients(5, 12);
  auto b = clients(5, 12);
  const auto ra = fed::run_session(cfg, a);
  cfg.threads = 4;
  const auto rb = fed::run_session(cfg, b);
  EXPECT_EQ(ra, rb);
}

TEST(RunSession, FedProxWithZeroMuIsFedAvg) {
  fed::SessionConfig cfg;
  cfg.shape = tiny_shape();
  cfg.rounds = 3;
  auto a = clients(4);
  auto b = clients(4);
  cfg.strategy = fed::AggregationStrategy::parse("fedavg");
  const auto avg = fed::run_session(cfg, a);
  cfg.strategy = fed::AggregationStrategy::parse("fedprox");
  cfg.strategy.mu = 0.0;
  const auto prox = fed::run_session(cfg, b);
  EXPECT_EQ(avg.history, prox.history);
}

TEST(RunRound, PartialParticipationIsSeeded) {
  auto a = clients(6);
  auto b = clients(6);
  const auto init = fed::initial_params(tiny_shape(), 0);
  auto sa = fed::ServerState::start(init, fed::AggregationStrategy::parse("fedavg"));
  auto sb = sa;
  fed::RoundOptions opt;
  opt.participation = 0.5;
  opt.seed = 77;
  const auto ra = fed::run_round(sa, a, opt);
  const auto rb = fed::run_round(sb, b, opt);
  EXPECT_EQ(ra.participants.size(), 3u);
  EXPECT_TRUE(std::is_sorted(ra.participants.begin(), ra.participants.end()));
  EXPECT_EQ(ra.participants, rb.participants);
  EXPECT_EQ(ra.test_mse.size(), 6u);
  opt.participation = 0.0;
  EXPECT_THROW(fed::run_round(sa, a, opt), ConfigError);
}
