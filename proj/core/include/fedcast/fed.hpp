#pragma once

// Federated orchestration: local training with an optional proximal term,
// five server aggregation rules and the round loop.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedcast/nn.hpp"
#include "fedcast/rng.hpp"
#include "fedcast/windows.hpp"

namespace fedcast::fed {

struct TrainingConfig {
  nn::AdamConfig adam;
  std::size_t batch_size = 32;
};

/// One pass of shuffled mini-batch Adam over `samples`, minimising
/// MSE + (mu/2)||w - anchor||^2 when a prox term is given. Returns the mean
/// pre-update batch MSE, weighted by batch size.
///
/// Throws NumericError naming `owner_id` and the batch index on a non-finite
/// loss.
double train_epoch(nn::ModelParams &params, nn::AdamState &adam, Rng &batch_rng,
                   std::span<const data::Sample> samples, const nn::ModelShape &shape,
                   std::size_t batch_size, const std::optional<nn::ProxTerm> &prox,
                   int owner_id = -1);

/// Standardised predictions, one column per sample ([horizon x N]).
Eigen::MatrixXd predict(const nn::ForecastModel &model, std::span<const data::Sample> samples);

/// De-standardised forecast for the tiled hours of `split.test`, in kWh.
std::vector<double> forecast_kwh(const nn::ForecastModel &model, const data::UserSplit &split,
                                 const data::FeatureStats &stats);

/// Test MSE in kWh^2 against the raw tiled targets.
double test_mse_kwh(const nn::ForecastModel &model, const data::UserSplit &split,
                    const data::FeatureStats &stats);

/// What a client sends to the server. Nothing else crosses that boundary.
struct ClientUpdate {
  int client_id = 0;
  std::size_t n_k = 0;
  nn::ModelParams params;
  std::vector<double> train_loss; // one entry per local epoch

  friend bool operator==(const ClientUpdate &, const ClientUpdate &) = default;
};

/// A federation member. Its windows are private; the server only sees
/// ClientUpdate values and scalar evaluation metrics.
class ClientState {
public:
  ClientState(int client_id, data::UserSplit split, data::FeatureStats stats,
              const nn::ModelShape &shape, TrainingConfig training, std::uint64_t batch_seed);

  int id() const { return client_id_; }
  std::size_t sample_count() const { return split_.train.size(); }

  /// Starts from `global`, runs `epochs` local epochs with prox weight `mu`
  /// anchored at `global`. Adam state and the batch generator persist across
  /// rounds.
  ClientUpdate local_train(const nn::ModelParams &global, int epochs, double mu);

  /// Test MSE (kWh^2) of `params` on this client's held-out windows.
  double evaluate(const nn::ModelParams &params) const;

private:
  int client_id_;
  data::UserSplit split_;
  data::FeatureStats stats_;
  nn::ModelShape shape_;
  TrainingConfig training_;
  nn::AdamState adam_;
  Rng batch_rng_;
};

enum class StrategyKind { fedavg, fedmedian, fedprox, fedadam, fedyogi };

struct AggregationStrategy {
  StrategyKind kind = StrategyKind::fedavg;
  double mu = 0.01;   // FedProx client penalty
  double eta = 1e-2;  // FedAdam/FedYogi server learning rate
  double beta1 = 0.9;
  double beta2 = 0.99;
  double tau = 1e-3;

  std::string name() const;
  /// Accepts fedavg, fedmedian, fedprox, fedadam, fedyogi (case-insensitive).
  static AggregationStrategy parse(std::string_view name);
  /// Throws ConfigError unless mu >= 0, eta > 0, tau > 0 and betas in [0, 1).
  void validate() const;
  /// Proximal weight clients use; zero for every rule except FedProx.
  double client_mu() const { return kind == StrategyKind::fedprox ? mu : 0.0; }
};

struct ServerState {
  nn::ModelParams global;
  std::size_t round = 0;
  AggregationStrategy strategy;
  std::vector<double> m; // FedAdam/FedYogi first moment, starts at 0
  std::vector<double> v; // second moment, starts at tau^2

  static ServerState start(nn::ModelParams initial, AggregationStrategy strategy);
};

/// sum_k (n_k / n) * params_k over updates sorted by client id.
nn::ModelParams aggregate_fedavg(std::span<const ClientUpdate> updates);
/// Coordinate-wise median; the mean of the two central values for even counts.
nn::ModelParams aggregate_fedmedian(std::span<const ClientUpdate> updates);
/// Server side of FedProx: the same weighted mean as FedAvg.
nn::ModelParams aggregate_fedprox(std::span<const ClientUpdate> updates);
/// Adaptive server step on the pseudo-gradient avg(params_k) - w^t.
/// Updates server.m and server.v; server.global is left unchanged.
nn::ModelParams aggregate_fedadam(std::span<const ClientUpdate> updates, ServerState &server);
nn::ModelParams aggregate_fedyogi(std::span<const ClientUpdate> updates, ServerState &server);

/// Dispatches on server.strategy.
nn::ModelParams aggregate(std::span<const ClientUpdate> updates, ServerState &server);

struct RoundOptions {
  int local_epochs = 1;
  double participation = 1.0;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct RoundReport {
  std::size_t round = 0; // 1-based
  std::vector<int> participants;
  std::vector<std::vector<double>> train_loss; // per participant, per epoch
  std::vector<int> client_ids;                 // all clients, ascending
  std::vector<double> test_mse;                // global model after the round
  double mean_test_mse = 0.0;
  double mean_train_loss = 0.0; // mean of the participants' last-epoch loss

  friend bool operator==(const RoundReport &, const RoundReport &) = default;
};

/// Broadcast, local training on participating clients (in parallel),
/// id-sorted aggregation, then evaluation of the new global model.
RoundReport run_round(ServerState &server, std::span<ClientState> clients,
                      const RoundOptions &options);

struct SessionConfig {
  nn::ModelShape shape;
  AggregationStrategy strategy;
  int rounds = 10;
  int local_epochs = 1;
  double participation = 1.0;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  /// Overrides the seeded initial model when set.
  std::optional<nn::ModelParams> initial;
};

struct SessionReport {
  nn::ModelParams initial;
  std::vector<RoundReport> rounds;
  std::vector<nn::ModelParams> history; // global parameters after each round
  nn::ModelParams final_params;

  friend bool operator==(const SessionReport &, const SessionReport &) = default;
};

/// Seeded initial model: init_model(shape, derive_seed(seed, "init")).
nn::ModelParams initial_params(const nn::ModelShape &shape, std::uint64_t seed);

SessionReport run_session(const SessionConfig &config, std::span<ClientState> clients);

} // namespace fedcast::fed
