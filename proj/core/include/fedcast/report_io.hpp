#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>

#include "fedcast/data.hpp"
#include "fedcast/eval.hpp"

namespace fedcast::io {

/// `round,scenario,client_id,mse`: test MSE per user per round, followed by a
/// `mean` row per round.
void write_mse_by_round(std::span<const eval::ScenarioReport> reports, std::ostream &out);

/// Rounds x strategies table of the mean test MSE (`metric` = "test_mse") or
/// the mean local training loss (`metric` = "train_loss").
void write_strategy_table(std::span<const eval::ScenarioReport> reports, std::string_view metric,
                          std::ostream &out);

/// `hour,true,predicted` for the first composition, then one
/// `true_c<pct>,predicted_c<pct>` column group per composition. Every
/// `plot_stride`-th hour is written (1 = all).
void write_surplus_hourly(std::span<const eval::CompositionResult> results, int plot_stride,
                          std::ostream &out);
/// Single community forecast: `hour,true,predicted`.
void write_surplus_hourly(const eval::SurplusForecast &forecast, int plot_stride,
                          std::ostream &out);

/// `season,q1,median,q3,iqr,lo_whisker,hi_whisker,n_outliers`.
void write_seasonal_stats(const std::array<eval::SeasonalStats, data::kSeasons> &stats,
                          std::ostream &out);

/// SHA-1 of "blob <size>\0<content>", as `git hash-object` computes it.
std::string git_blob_hash(std::string_view content);

/// git_blob_hash of the dataset CSV, computed without materialising it.
std::string dataset_content_hash(std::span<const data::UserSeries> users);

/// Writes via a temporary sibling and renames, so readers never observe a
/// partially written file. Throws std::runtime_error on I/O failure.
void write_file_atomic(const std::filesystem::path &path, std::string_view content);

} // namespace fedcast::io
