#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "fedcast/errors.hpp"
#include "fedcast/fed.hpp"

namespace fedcast::fed {
namespace {

std::vector<const ClientUpdate *> canonical_order(std::span<const ClientUpdate> updates) {
  if (updates.empty()) {
    throw std::invalid_argument("aggregation needs at least one client update");
  }
  std::vector<const ClientUpdate *> order;
  order.reserve(updates.size());
  for (const auto &u : updates) {
    order.push_back(&u);
  }
  std::sort(order.begin(), order.end(),
            [](const auto *a, const auto *b) { return a->client_id < b->client_id; });
  const std::size_t n = order.front()->params.size();
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (order[i]->params.size() != n) {
      throw ShapeError("client " + std::to_string(order[i]->client_id) + " sent " +
                       std::to_string(order[i]->params.size()) + " parameters, expected " +
                       std::to_string(n));
    }
    if (i > 0 && order[i]->client_id == order[i - 1]->client_id) {
      throw std::invalid_argument("duplicate update from client " +
                                  std::to_string(order[i]->client_id));
    }
  }
  return order;
}

nn::ModelParams weighted_mean(const std::vector<const ClientUpdate *> &order) {
  double total = 0.0;
  for (const auto *u : order) {
    total += static_cast<double>(u->n_k);
  }
  if (!(total > 0.0)) {
    throw std::invalid_argument("aggregation: total sample count is zero");
  }
  nn::ModelParams out(order.front()->params.size());
  for (const auto *u : order) {
    const double w = static_cast<double>(u->n_k) / total;
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] += w * u->params[i];
    }
  }
  return out;
}

enum class SecondMoment { adam, yogi };

nn::ModelParams adaptive_step(std::span<const ClientUpdate> updates, ServerState &server,
                              SecondMoment rule) {
  const auto avg = weighted_mean(canonical_order(updates));
  const std::size_t n = avg.size();
  if (server.global.size() != n || server.m.size() != n || server.v.size() != n) {
    throw ShapeError("server state length does not match client updates (" +
                     std::to_string(server.global.size()) + " vs " + std::to_string(n) + ")");
  }
  const auto &s = server.strategy;
  nn::ModelParams next = server.global;
  for (std::size_t i = 0; i < n; ++i) {
    const double delta = avg[i] - server.global[i];
    const double d2 = delta * delta;
    server.m[i] = s.beta1 * server.m[i] + (1.0 - s.beta1) * delta;
    if (rule == SecondMoment::adam) {
      server.v[i] = s.beta2 * server.v[i] + (1.0 - s.beta2) * d2;
    } else {
      const double diff = server.v[i] - d2;
      const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
      server.v[i] = server.v[i] - (1.0 - s.beta2) * d2 * sign;
    }
    next[i] = server.global[i] + s.eta * server.m[i] / (std::sqrt(server.v[i]) + s.tau);
  }
  return next;
}

} // namespace

std::string AggregationStrategy::name() const {
  switch (kind) {
  case StrategyKind::fedavg: return "fedavg";
  case StrategyKind::fedmedian: return "fedmedian";
  case StrategyKind::fedprox: return "fedprox";
  case StrategyKind::fedadam: return "fedadam";
  case StrategyKind::fedyogi: return "fedyogi";
  }
  return "unknown";
}

AggregationStrategy AggregationStrategy::parse(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  AggregationStrategy s;
  if (lower == "fedavg") {
    s.kind = StrategyKind::fedavg;
  } else if (lower == "fedmedian") {
    s.kind = StrategyKind::fedmedian;
  } else if (lower == "fedprox") {
    s.kind = StrategyKind::fedprox;
  } else if (lower == "fedadam") {
    s.kind = StrategyKind::fedadam;
  } else if (lower == "fedyogi") {
    s.kind = StrategyKind::fedyogi;
  } else {
    throw ConfigError("unknown aggregation strategy '" + std::string(name) +
                      "' (expected fedavg, fedmedian, fedprox, fedadam or fedyogi)");
  }
  return s;
}

void AggregationStrategy::validate() const {
  if (!(mu >= 0.0)) {
    throw ConfigError("strategy mu must be >= 0");
  }
  if (!(eta > 0.0)) {
    throw ConfigError("strategy eta must be > 0");
  }
  if (!(tau > 0.0)) {
    throw ConfigError("strategy tau must be > 0");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("strategy beta1/beta2 must lie in [0, 1)");
  }
}

ServerState ServerState::start(nn::ModelParams initial, AggregationStrategy strategy) {
  strategy.validate();
  ServerState s;
  s.m.assign(initial.size(), 0.0);
  s.v.assign(initial.size(), strategy.tau * strategy.tau);
  s.global = std::move(initial);
  s.strategy = strategy;
  return s;
}

nn::ModelParams aggregate_fedavg(std::span<const ClientUpdate> updates) {
  return weighted_mean(canonical_order(updates));
}

nn::ModelParams aggregate_fedprox(std::span<const ClientUpdate> updates) {
  return weighted_mean(canonical_order(updates));
}

nn::ModelParams aggregate_fedmedian(std::span<const ClientUpdate> updates) {
  const auto order = canonical_order(updates);
  const std::size_t k = order.size();
  nn::ModelParams out(order.front()->params.size());
  std::vector<double> column(k);
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t c = 0; c < k; ++c) {
      column[c] = order[c]->params[i];
    }
    std::sort(column.begin(), column.end());
    out[i] = k % 2 == 1 ? column[k / 2] : 0.5 * (column[k / 2 - 1] + column[k / 2]);
  }
  return out;
}

nn::ModelParams aggregate_fedadam(std::span<const ClientUpdate> updates, ServerState &server) {
  return adaptive_step(updates, server, SecondMoment::adam);
}

nn::ModelParams aggregate_fedyogi(std::span<const ClientUpdate> updates, ServerState &server) {
  return adaptive_step(updates, server, SecondMoment::yogi);
}

nn::ModelParams aggregate(std::span<const ClientUpdate> updates, ServerState &server) {
  switch (server.strategy.kind) {
  case StrategyKind::fedavg: return aggregate_fedavg(updates);
  case StrategyKind::fedmedian: return aggregate_fedmedian(updates);
  case StrategyKind::fedprox: return aggregate_fedprox(updates);
  case StrategyKind::fedadam: return aggregate_fedadam(updates, server);
  case StrategyKind::fedyogi: return aggregate_fedyogi(updates, server);
  }
  throw std::logic_error("unhandled aggregation strategy");
}

} // namespace fedcast::fed
