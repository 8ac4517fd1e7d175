#include "fedcast/windows.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "fedcast/errors.hpp"

namespace fedcast::data {
namespace {

std::uint64_t fnv1a(const void *data, std::size_t bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto *p = static_cast<const unsigned char *>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

Sample make_sample(std::span<const FeatureRow> rows, std::size_t start, const FeatureStats &stats,
                   const WindowSpec &spec) {
  Sample s;
  s.first_row = start;
  s.input.resize(spec.input_hours, kFeatureCount);
  for (int t = 0; t < spec.input_hours; ++t) {
    const auto values = rows[start + static_cast<std::size_t>(t)].as_array();
    for (int c = 0; c < kFeatureCount; ++c) {
      s.input(t, c) = stats.standardize(c, values[static_cast<std::size_t>(c)]);
    }
  }
  s.target.resize(spec.horizon);
  const std::size_t first_target = start + static_cast<std::size_t>(spec.input_hours);
  for (int k = 0; k < spec.horizon; ++k) {
    s.target(k) = stats.standardize(
        kTargetColumn, rows[first_target + static_cast<std::size_t>(k)].sum_total_ewm_balance);
  }
  return s;
}

} // namespace

ColumnMoments ColumnMoments::of(std::span<const FeatureRow> rows) {
  ColumnMoments m;
  m.count = rows.size();
  if (rows.empty()) {
    return m;
  }
  for (const auto &r : rows) {
    const auto v = r.as_array();
    for (std::size_t c = 0; c < kFeatureCount; ++c) {
      m.mean[c] += v[c];
    }
  }
  for (auto &x : m.mean) {
    x /= static_cast<double>(rows.size());
  }
  for (const auto &r : rows) {
    const auto v = r.as_array();
    for (std::size_t c = 0; c < kFeatureCount; ++c) {
      const double d = v[c] - m.mean[c];
      m.m2[c] += d * d;
    }
  }
  return m;
}

void ColumnMoments::merge(const ColumnMoments &other) {
  if (other.count == 0) {
    return;
  }
  if (count == 0) {
    *this = other;
    return;
  }
  const double na = static_cast<double>(count);
  const double nb = static_cast<double>(other.count);
  const double n = na + nb;
  for (std::size_t c = 0; c < kFeatureCount; ++c) {
    const double delta = other.mean[c] - mean[c];
    mean[c] += delta * nb / n;
    m2[c] += other.m2[c] + delta * delta * na * nb / n;
  }
  count += other.count;
}

FeatureStats FeatureStats::identity() {
  FeatureStats s;
  s.enabled = false;
  s.mean.fill(0.0);
  s.scale.fill(1.0);
  return s;
}

FeatureStats FeatureStats::from_moments(const ColumnMoments &moments, bool enabled) {
  if (!enabled) {
    return identity();
  }
  if (moments.count == 0) {
    throw ShapeError("cannot fit standardisation on zero rows");
  }
  FeatureStats s;
  s.mean = moments.mean;
  for (std::size_t c = 0; c < kFeatureCount; ++c) {
    const double sd = std::sqrt(moments.m2[c] / static_cast<double>(moments.count));
    s.scale[c] = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

FeatureStats FeatureStats::fit(std::span<const FeatureRow> rows, bool enabled) {
  return from_moments(ColumnMoments::of(rows), enabled);
}

double FeatureStats::standardize(int column, double value) const {
  if (!enabled) {
    return value;
  }
  const auto c = static_cast<std::size_t>(column);
  return (value - mean[c]) / scale[c];
}

double FeatureStats::restore_target(double standardized) const {
  if (!enabled) {
    return standardized;
  }
  return standardized * scale[kTargetColumn] + mean[kTargetColumn];
}

std::size_t window_count(std::size_t rows, const WindowSpec &spec) {
  const auto need = static_cast<std::size_t>(spec.input_hours + spec.horizon);
  if (rows < need || spec.stride < 1) {
    return 0;
  }
  return (rows - need) / static_cast<std::size_t>(spec.stride) + 1;
}

std::vector<Sample> windowize(std::span<const FeatureRow> rows, const FeatureStats &stats,
                              const WindowSpec &spec) {
  if (spec.input_hours < 1 || spec.horizon < 1 || spec.stride < 1) {
    throw ShapeError("windowize: input_hours, horizon and stride must be >= 1");
  }
  const auto need = static_cast<std::size_t>(spec.input_hours + spec.horizon);
  if (rows.size() < need) {
    throw ShapeError("windowize: series has " + std::to_string(rows.size()) +
                     " rows, needs at least " + std::to_string(need));
  }
  const std::size_t n = window_count(rows.size(), spec);
  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(make_sample(rows, i * static_cast<std::size_t>(spec.stride), stats, spec));
  }
  return out;
}

std::size_t split_row(std::size_t rows, double train_fraction) {
  const std::size_t days = rows / kHoursPerDay;
  const auto train_days =
      static_cast<std::size_t>(std::floor(static_cast<double>(days) * train_fraction + 1e-9));
  return train_days * kHoursPerDay;
}

UserSplit make_split(const UserSeries &series, const SplitDescriptor &split) {
  const auto &rows = series.rows;
  const auto t_in = static_cast<std::size_t>(split.test_spec.input_hours);
  if (split.train_rows < t_in || split.train_rows >= rows.size()) {
    throw ShapeError("split: train_rows " + std::to_string(split.train_rows) +
                     " leaves no room for test windows in a series of " +
                     std::to_string(rows.size()) + " rows");
  }
  UserSplit out;
  out.user_id = series.user_id;
  std::span<const FeatureRow> all(rows);
  out.train = windowize(all.first(split.train_rows), split.stats, split.train_spec);
  const std::size_t ctx = split.train_rows - t_in;
  out.test = windowize(all.subspan(ctx), split.stats, split.test_spec);
  for (auto &s : out.test) {
    s.first_row += ctx;
  }
  out.test_begin_row = split.train_rows;
  const std::size_t covered = out.test.size() * static_cast<std::size_t>(split.test_spec.horizon);
  out.test_truth.reserve(covered);
  for (std::size_t k = 0; k < covered; ++k) {
    out.test_truth.push_back(rows[split.train_rows + k].sum_total_ewm_balance);
  }
  return out;
}

UserSplit make_full_year(const UserSeries &series, const FeatureStats &stats,
                         const WindowSpec &spec) {
  WindowSpec tiling = spec;
  tiling.stride = spec.horizon;
  UserSplit out;
  out.user_id = series.user_id;
  out.test = windowize(series.rows, stats, tiling);
  out.test_begin_row = static_cast<std::size_t>(spec.input_hours);
  const std::size_t covered = out.test.size() * static_cast<std::size_t>(spec.horizon);
  out.test_truth.reserve(covered);
  for (std::size_t k = 0; k < covered; ++k) {
    out.test_truth.push_back(series.rows[out.test_begin_row + k].sum_total_ewm_balance);
  }
  return out;
}

std::uint64_t window_multiset_hash(std::span<const Sample> samples) {
  std::vector<std::uint64_t> hashes;
  hashes.reserve(samples.size());
  for (const auto &s : samples) {
    auto h = fnv1a(s.input.data(), static_cast<std::size_t>(s.input.size()) * sizeof(double));
    h = fnv1a(s.target.data(), static_cast<std::size_t>(s.target.size()) * sizeof(double), h);
    hashes.push_back(h);
  }
  std::sort(hashes.begin(), hashes.end());
  return fnv1a(hashes.data(), hashes.size() * sizeof(std::uint64_t));
}

} // namespace fedcast::data
