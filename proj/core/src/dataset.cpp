#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>

#include "fedcast/data.hpp"
#include "fedcast/errors.hpp"
#include "fedcast/format.hpp"
#include "fedcast/parallel.hpp"
#include "fedcast/rng.hpp"

namespace fedcast::data {
namespace {

double median_of(std::vector<double> &values) {
  const std::size_t n = values.size();
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(values.begin(), mid, values.end());
  const double upper = *mid;
  if (n % 2 == 1) {
    return upper;
  }
  const double lower = *std::max_element(values.begin(), mid);
  return 0.5 * (lower + upper);
}

} // namespace

std::array<double, kFeatureCount> FeatureRow::as_array() const {
  return {static_cast<double>(day),    static_cast<double>(index), temperature_median,
          temperature_std,             static_cast<double>(season), static_cast<double>(type),
          static_cast<double>(type2),  sum_total_ewm_balance};
}

RawYear synthesize_user_year(const ProfileBank &bank, int archetype, std::uint64_t seed) {
  if (!bank.has_archetype(archetype)) {
    throw DataError("profile bank has no profiles for archetype " + std::to_string(archetype));
  }
  Rng rng(seed);
  RawYear raw;
  raw.production.reserve(kHoursPerYear);
  raw.consumption.reserve(kHoursPerYear);
  raw.temperature.reserve(kHoursPerYear);
  for (int d = 0; d < kDaysPerYear; ++d) {
    const Season season = season_of_day(d);
    const DayKind kind = rng.uniform() < 5.0 / 7.0 ? DayKind::weekday : DayKind::weekend_holiday;
    const auto &pool = bank.cell(season, kind, archetype);
    const auto pick = static_cast<std::size_t>(rng.below(pool.size()));
    const DayProfile &p = pool[pick];
    raw.production.insert(raw.production.end(), p.production.begin(), p.production.end());
    raw.consumption.insert(raw.consumption.end(), p.consumption.begin(), p.consumption.end());
    raw.temperature.insert(raw.temperature.end(), p.temperature.begin(), p.temperature.end());
    raw.day_season.push_back(season);
    raw.day_kind.push_back(kind);
    raw.day_profile.push_back(static_cast<int>(pick));
  }
  return raw;
}

std::vector<double> ewma(std::span<const double> series, int window) {
  if (window < 1) {
    throw std::invalid_argument("ewma window must be >= 1, got " + std::to_string(window));
  }
  if (series.empty()) {
    throw std::invalid_argument("ewma of an empty series");
  }
  const double alpha = 2.0 / (static_cast<double>(window) + 1.0);
  std::vector<double> out(series.size());
  out[0] = series[0];
  for (std::size_t t = 1; t < series.size(); ++t) {
    out[t] = alpha * series[t] + (1.0 - alpha) * out[t - 1];
  }
  return out;
}

std::vector<double> net_energy(std::span<const double> exported, std::span<const double> imported) {
  if (exported.size() != imported.size()) {
    throw std::invalid_argument("net_energy: length mismatch " + std::to_string(exported.size()) +
                                " vs " + std::to_string(imported.size()));
  }
  std::vector<double> out(exported.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (exported[i] < 0.0 || imported[i] < 0.0) {
      throw std::invalid_argument("net_energy: negative energy at hour " + std::to_string(i));
    }
    out[i] = exported[i] - imported[i];
  }
  return out;
}

UserSeries build_feature_rows(const RawYear &raw, UserArchetype archetype, int user_id,
                              int ewma_window_hours) {
  const std::size_t n = raw.production.size();
  const auto target =
      net_energy(ewma(raw.production, ewma_window_hours), ewma(raw.consumption, ewma_window_hours));

  UserSeries series;
  series.user_id = user_id;
  series.archetype = archetype;
  series.rows.resize(n);
  std::vector<double> scratch;
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t lo = t >= 12 ? t - 12 : 0;
    const std::size_t hi = std::min(n, t + 12);
    scratch.assign(raw.temperature.begin() + static_cast<std::ptrdiff_t>(lo),
                   raw.temperature.begin() + static_cast<std::ptrdiff_t>(hi));
    const double mean =
        std::accumulate(scratch.begin(), scratch.end(), 0.0) / static_cast<double>(scratch.size());
    double ss = 0.0;
    for (const double v : scratch) {
      ss += (v - mean) * (v - mean);
    }

    auto &row = series.rows[t];
    row.day = static_cast<int>(t / kHoursPerDay);
    row.index = static_cast<int>(t % kHoursPerDay);
    row.temperature_std = std::sqrt(ss / static_cast<double>(scratch.size()));
    row.temperature_median = median_of(scratch);
    row.season = static_cast<int>(season_of_day(row.day));
    row.type = archetype.is_consumer() ? 1 : 0;
    row.type2 = archetype.type_id;
    row.sum_total_ewm_balance = target[t];
  }
  return series;
}

void LecConfig::validate() const {
  if (n_users <= 0) {
    throw ConfigError("dataset.n_users must be > 0");
  }
  if (!(consumer_fraction >= 0.0 && consumer_fraction <= 1.0)) {
    throw ConfigError("dataset.consumer_fraction must lie in [0, 1]");
  }
  double sum = 0.0;
  for (const double w : mix_weights) {
    if (!(w >= 0.0)) {
      throw ConfigError("dataset.mix_weights must be non-negative");
    }
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError("dataset.mix_weights must sum to 1 (got " + format_number(sum) + ")");
  }
  if (ewma_window_hours < 1) {
    throw ConfigError("dataset.ewma_window_hours must be >= 1");
  }
  const int consumers = consumer_count();
  const int prosumers = n_users - consumers;
  if (consumers > 0 && mix_weights[3] + mix_weights[4] <= 0.0) {
    throw ConfigError("consumers requested but consumer archetype weights are zero");
  }
  if (prosumers > 0 && mix_weights[0] + mix_weights[1] + mix_weights[2] <= 0.0) {
    throw ConfigError("prosumers requested but prosumer archetype weights are zero");
  }
}

int LecConfig::consumer_count() const {
  return static_cast<int>(std::floor(static_cast<double>(n_users) * consumer_fraction + 1e-9));
}

std::vector<int> assign_archetypes(const LecConfig &config) {
  config.validate();
  const int consumers = config.consumer_count();
  const int prosumers = config.n_users - consumers;

  auto split = [&](int count, int first, int last) {
    std::vector<int> counts(static_cast<std::size_t>(last - first + 1), 0);
    if (count == 0) {
      return counts;
    }
    double total = 0.0;
    for (int a = first; a <= last; ++a) {
      total += config.mix_weights[static_cast<std::size_t>(a)];
    }
    std::vector<std::pair<double, int>> remainders;
    int assigned = 0;
    for (int a = first; a <= last; ++a) {
      const double exact = count * config.mix_weights[static_cast<std::size_t>(a)] / total;
      const int base = static_cast<int>(std::floor(exact));
      counts[static_cast<std::size_t>(a - first)] = base;
      assigned += base;
      remainders.emplace_back(exact - base, a);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto &x, const auto &y) { return x.first > y.first; });
    for (int i = 0; assigned < count; ++i, ++assigned) {
      counts[static_cast<std::size_t>(remainders[static_cast<std::size_t>(i)].second - first)]++;
    }
    return counts;
  };

  std::vector<int> types;
  types.reserve(static_cast<std::size_t>(config.n_users));
  const auto pro = split(prosumers, 0, 2);
  const auto con = split(consumers, 3, 4);
  for (int a = 0; a < 3; ++a) {
    types.insert(types.end(), static_cast<std::size_t>(pro[static_cast<std::size_t>(a)]), a);
  }
  for (int a = 0; a < 2; ++a) {
    types.insert(types.end(), static_cast<std::size_t>(con[static_cast<std::size_t>(a)]), a + 3);
  }
  return types;
}

std::vector<UserSeries> build_lec(const LecConfig &config, const ProfileBank &bank,
                                  unsigned threads) {
  const auto types = assign_archetypes(config);
  bank.validate();
  for (const int t : types) {
    if (!bank.has_archetype(t)) {
      throw DataError("profile bank has no profiles for archetype " + std::to_string(t));
    }
  }
  std::vector<UserSeries> users(types.size());
  parallel_for(types.size(), threads, [&](std::size_t u) {
    const auto seed = derive_seed(config.seed, "user", u);
    const auto raw = synthesize_user_year(bank, types[u], seed);
    users[u] = build_feature_rows(raw, UserArchetype::of(types[u]), static_cast<int>(u),
                                  config.ewma_window_hours);
  });
  return users;
}

void write_dataset_csv(std::span<const UserSeries> users, std::ostream &out) {
  out << "user_id";
  for (const auto name : kFeatureNames) {
    out << ',' << name;
  }
  out << '\n';
  std::string line;
  for (const auto &user : users) {
    const std::string id = std::to_string(user.user_id);
    for (const auto &r : user.rows) {
      line.clear();
      line += id;
      line += ',';
      line += std::to_string(r.day);
      line += ',';
      line += std::to_string(r.index);
      line += ',';
      line += format_number(r.temperature_median);
      line += ',';
      line += format_number(r.temperature_std);
      line += ',';
      line += std::to_string(r.season);
      line += ',';
      line += std::to_string(r.type);
      line += ',';
      line += std::to_string(r.type2);
      line += ',';
      line += format_number(r.sum_total_ewm_balance);
      line += '\n';
      out << line;
    }
  }
}

} // namespace fedcast::data
