#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "fedcast/eval.hpp"

namespace fedcast::eval {

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) {
    throw std::invalid_argument("quantile of an empty sample");
  }
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

std::array<SeasonalStats, data::kSeasons> seasonal_boxplot(std::span<const double> series,
                                                           std::size_t first_hour) {
  if (first_hour + series.size() > static_cast<std::size_t>(data::kHoursPerYear)) {
    throw std::invalid_argument("seasonal_boxplot: series runs past hour " +
                                std::to_string(data::kHoursPerYear));
  }
  std::array<std::vector<double>, data::kSeasons> groups;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto day = static_cast<int>((first_hour + i) / data::kHoursPerDay);
    const int season = day / data::kDaysPerSeason;
    groups[static_cast<std::size_t>(season)].push_back(series[i]);
  }

  std::array<SeasonalStats, data::kSeasons> out;
  for (std::size_t s = 0; s < out.size(); ++s) {
    auto &st = out[s];
    st.season = static_cast<data::Season>(s);
    auto &values = groups[s];
    st.count = values.size();
    if (values.empty()) {
      continue;
    }
    std::sort(values.begin(), values.end());
    st.q1 = quantile_sorted(values, 0.25);
    st.median = quantile_sorted(values, 0.5);
    st.q3 = quantile_sorted(values, 0.75);
    st.iqr = st.q3 - st.q1;
    st.lo_whisker = st.q1 - 1.5 * st.iqr;
    st.hi_whisker = st.q3 + 1.5 * st.iqr;
    // Outliers keep their chronological order.
    const auto &original = series;
    for (std::size_t i = 0; i < original.size(); ++i) {
      const auto day = static_cast<int>((first_hour + i) / data::kHoursPerDay);
      if (static_cast<std::size_t>(std::min(day / data::kDaysPerSeason, data::kSeasons - 1)) != s) {
        continue;
      }
      if (original[i] < st.lo_whisker || original[i] > st.hi_whisker) {
        st.outliers.push_back(original[i]);
      }
    }
  }
  return out;
}

} // namespace fedcast::eval
