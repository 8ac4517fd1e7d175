#pragma once

// lec-fedcast command layer. Kept out of main() so tests can drive it.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fedcast/data.hpp"
#include "fedcast/eval.hpp"

namespace fedcast::cli {

namespace fs = std::filesystem;

struct RunConfig {
  std::uint64_t seed = 0;
  data::LecConfig dataset;
  /// Profile CSV; the parametric generator is used when unset.
  std::optional<fs::path> profiles;
  int profiles_per_cell = 8;
  eval::ExperimentConfig experiment;
  eval::ScenarioKind scenario = eval::ScenarioKind::federated;
  std::vector<std::string> compare_strategies{"fedavg", "fedmedian", "fedprox", "fedadam",
                                              "fedyogi"};
  int test_users = 100;
  std::vector<double> fractions{0.0, 0.25, 0.5, 0.75};
  /// Composition whose statistics go to seasonal_stats.csv.
  double stats_fraction = 0.5;
  std::optional<fs::path> checkpoint;
  fs::path out_dir = "out";
  int plot_stride = 1;

  /// Copies the master seed into the dataset and experiment. Call after
  /// every override.
  void resolve_seeds();
  /// Throws ConfigError.
  void validate() const;
};

/// Parses an INI document. Unknown sections or keys, malformed values and
/// missing referenced files throw ConfigError.
RunConfig parse_config(std::istream &in);
RunConfig load_config(const fs::path &path);

/// Every key with its effective value, loadable by parse_config.
std::string to_ini(const RunConfig &config);

struct SeedTable {
  std::uint64_t master = 0;
  std::uint64_t dataset = 0;
  std::uint64_t profiles = 0;
  std::uint64_t init = 0;
  std::uint64_t batch = 0;
  std::uint64_t test_lec = 0;
};
SeedTable seeds_of(std::uint64_t master);

/// Each writes into config.out_dir and returns the files it created.
std::vector<fs::path> cmd_synth(const RunConfig &config);
std::vector<fs::path> cmd_train(const RunConfig &config);
std::vector<fs::path> cmd_evaluate(const RunConfig &config);
std::vector<fs::path> cmd_compare(const RunConfig &config);

/// Full entry point. 0 success, 1 configuration error, 2 runtime failure.
int run(int argc, const char *const *argv, std::ostream &out, std::ostream &err);

} // namespace fedcast::cli
