#include "fedcast/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "fedcast/errors.hpp"
#include "fedcast/report_io.hpp"

namespace fedcast::io {
namespace {

std::string to_le_bytes(const std::vector<double> &values) {
  std::string bytes(values.size() * sizeof(double), '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (std::size_t b = 0; b < 8; ++b) {
      bytes[i * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xffU);
    }
  }
  return bytes;
}

std::vector<double> from_le_bytes(const std::string &bytes) {
  std::vector<double> values(bytes.size() / 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t bits = 0;
    for (std::size_t b = 0; b < 8; ++b) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i * 8 + b])) << (8 * b);
    }
    values[i] = std::bit_cast<double>(bits);
  }
  return values;
}

} // namespace

nlohmann::json to_json(const nn::ModelShape &shape) {
  return {{"features", shape.features},
          {"hidden", shape.hidden},
          {"layers", shape.layers},
          {"horizon", shape.horizon}};
}

nn::ModelShape shape_from_json(const nlohmann::json &j) {
  nn::ModelShape s;
  s.features = j.at("features").get<std::size_t>();
  s.hidden = j.at("hidden").get<std::size_t>();
  s.layers = j.at("layers").get<std::size_t>();
  s.horizon = j.at("horizon").get<std::size_t>();
  return s;
}

nlohmann::json to_json(const data::FeatureStats &stats) {
  return {{"enabled", stats.enabled}, {"mean", stats.mean}, {"scale", stats.scale}};
}

data::FeatureStats stats_from_json(const nlohmann::json &j) {
  data::FeatureStats s;
  s.enabled = j.at("enabled").get<bool>();
  s.mean = j.at("mean").get<std::array<double, data::kFeatureCount>>();
  s.scale = j.at("scale").get<std::array<double, data::kFeatureCount>>();
  return s;
}

std::filesystem::path save_checkpoint(const std::filesystem::path &dir, const std::string &stem,
                                      const Checkpoint &checkpoint) {
  if (checkpoint.params.size() != checkpoint.shape.parameter_count()) {
    throw ShapeError("checkpoint: parameter vector does not match its shape");
  }
  const auto bytes = to_le_bytes(checkpoint.params.values);
  auto manifest = checkpoint.manifest.is_object() ? checkpoint.manifest : nlohmann::json::object();
  manifest["params_file"] = stem + ".bin";
  manifest["params_length"] = checkpoint.params.size();
  manifest["params_sha1"] = git_blob_hash(bytes);
  manifest["shape"] = to_json(checkpoint.shape);
  manifest["stats"] = to_json(checkpoint.stats);
  write_file_atomic(dir / (stem + ".bin"), bytes);
  const auto path = dir / (stem + ".json");
  write_file_atomic(path, manifest.dump(2) + "\n");
  return path;
}

Checkpoint load_checkpoint(const std::filesystem::path &manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) {
    throw DataError("cannot open checkpoint manifest " + manifest_path.string());
  }
  Checkpoint c;
  try {
    c.manifest = nlohmann::json::parse(in);
    c.shape = shape_from_json(c.manifest.at("shape"));
    c.stats = stats_from_json(c.manifest.at("stats"));
    const auto bin = manifest_path.parent_path() /
                     c.manifest.at("params_file").get<std::string>();
    std::ifstream bin_in(bin, std::ios::binary);
    if (!bin_in) {
      throw DataError("cannot open checkpoint parameters " + bin.string());
    }
    const std::string bytes((std::istreambuf_iterator<char>(bin_in)),
                            std::istreambuf_iterator<char>());
    const auto expected = c.manifest.at("params_length").get<std::size_t>();
    if (bytes.size() != expected * 8 || expected != c.shape.parameter_count()) {
      throw DataError("checkpoint " + bin.string() + ": expected " + std::to_string(expected) +
                      " parameters, file holds " + std::to_string(bytes.size() / 8));
    }
    if (git_blob_hash(bytes) != c.manifest.at("params_sha1").get<std::string>()) {
      throw DataError("checkpoint " + bin.string() + ": digest mismatch");
    }
    c.params = nn::ModelParams(from_le_bytes(bytes));
  } catch (const nlohmann::json::exception &e) {
    throw DataError("checkpoint manifest " + manifest_path.string() + ": " + e.what());
  }
  return c;
}

} // namespace fedcast::io
