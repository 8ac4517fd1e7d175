#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "fedcast/nn.hpp"
#include "fedcast/windows.hpp"

namespace fedcast::io {

/// A flat parameter vector (`<stem>.bin`, little-endian float64) plus a JSON
/// manifest (`<stem>.json`) carrying shape, standardisation and run metadata.
struct Checkpoint {
  nn::ModelParams params;
  nn::ModelShape shape;
  data::FeatureStats stats;
  nlohmann::json manifest;
};

nlohmann::json to_json(const nn::ModelShape &shape);
nn::ModelShape shape_from_json(const nlohmann::json &j);
nlohmann::json to_json(const data::FeatureStats &stats);
data::FeatureStats stats_from_json(const nlohmann::json &j);

/// Returns the manifest path. Shape, stats, length and a digest of the
/// binary are added to `checkpoint.manifest` before it is written.
std::filesystem::path save_checkpoint(const std::filesystem::path &dir, const std::string &stem,
                                      const Checkpoint &checkpoint);

/// Accepts the manifest path. Throws DataError on missing or inconsistent files.
Checkpoint load_checkpoint(const std::filesystem::path &manifest_path);

} // namespace fedcast::io
