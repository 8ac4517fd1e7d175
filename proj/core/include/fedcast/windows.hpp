#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "fedcast/data.hpp"
#include "fedcast/nn.hpp"

namespace fedcast::data {

/// Per-column count/mean/M2 accumulator. Merging follows Chan et al., so
/// clients can publish only these summaries and the server can pool them.
struct ColumnMoments {
  std::size_t count = 0;
  std::array<double, kFeatureCount> mean{};
  std::array<double, kFeatureCount> m2{};

  static ColumnMoments of(std::span<const FeatureRow> rows);
  void merge(const ColumnMoments &other);
};

/// Per-feature affine standardisation fitted on training rows.
struct FeatureStats {
  bool enabled = true;
  std::array<double, kFeatureCount> mean{};
  std::array<double, kFeatureCount> scale{}; // population std, 1 when degenerate

  static FeatureStats identity();
  static FeatureStats from_moments(const ColumnMoments &moments, bool enabled = true);
  static FeatureStats fit(std::span<const FeatureRow> rows, bool enabled = true);

  double standardize(int column, double value) const;
  double restore_target(double standardized) const;
  double target_scale() const { return enabled ? scale[kTargetColumn] : 1.0; }

  friend bool operator==(const FeatureStats &, const FeatureStats &) = default;
};

/// One training/evaluation example: T_in standardised feature rows and the
/// next `horizon` standardised targets.
struct Sample {
  nn::Window input;
  Eigen::VectorXd target;
  std::size_t first_row = 0; // source row of input(0, :)
};

struct WindowSpec {
  int input_hours = 24;
  int horizon = 24;
  int stride = 24;
};

/// Number of windows: floor((len - T_in - horizon) / stride) + 1.
std::size_t window_count(std::size_t rows, const WindowSpec &spec);

/// Sliding windows over `rows`; throws ShapeError when rows are too short.
std::vector<Sample> windowize(std::span<const FeatureRow> rows, const FeatureStats &stats,
                              const WindowSpec &spec);

/// Chronological per-user split at a day boundary.
struct SplitDescriptor {
  std::size_t train_rows = 0; // rows [0, train_rows) are training data
  FeatureStats stats;
  WindowSpec train_spec;
  WindowSpec test_spec;
};

/// Split row for `train_fraction` of the year, rounded down to whole days.
std::size_t split_row(std::size_t rows, double train_fraction);

struct UserSplit {
  int user_id = 0;
  std::vector<Sample> train;
  /// Stride-horizon tiling; the first window takes its inputs from the last
  /// T_in training hours so that targets start at the first test hour.
  std::vector<Sample> test;
  std::size_t test_begin_row = 0;
  std::vector<double> test_truth; // raw kWh targets for the tiled test hours
};

UserSplit make_split(const UserSeries &series, const SplitDescriptor &split);

/// Tiles the whole year with stride = horizon, starting at the first row that
/// has a full input window. Used to forecast held-out communities.
UserSplit make_full_year(const UserSeries &series, const FeatureStats &stats,
                         const WindowSpec &spec);

/// Order-independent digest of a window multiset.
std::uint64_t window_multiset_hash(std::span<const Sample> samples);

} // namespace fedcast::data
