#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>

#include "fedcast/checkpoint.hpp"
#include "fedcast/errors.hpp"
#include "fedcast/format.hpp"
#include "fedcast/parallel.hpp"
#include "fedcast/report_io.hpp"
#include "fedcast/rng.hpp"

namespace fedcast::cli {
namespace {

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
    s.remove_prefix(1);
  }
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
    s.remove_suffix(1);
  }
  return std::string(s);
}

template <typename T> T number(std::string_view key, std::string_view text) {
  T v{};
  if (!parse_number(text, v)) {
    throw ConfigError(std::string(key) + ": '" + std::string(text) + "' is not a valid number");
  }
  return v;
}

std::size_t count(std::string_view key, std::string_view text) {
  const auto v = number<long long>(key, text);
  if (v < 0) {
    throw ConfigError(std::string(key) + " must be >= 0");
  }
  return static_cast<std::size_t>(v);
}

bool boolean(std::string_view key, std::string_view text) {
  const auto t = trim(text);
  if (t == "true" || t == "1" || t == "yes") {
    return true;
  }
  if (t == "false" || t == "0" || t == "no") {
    return false;
  }
  throw ConfigError(std::string(key) + ": expected true or false, got '" + t + "'");
}

std::vector<double> number_list(std::string_view key, std::string_view text) {
  std::vector<double> out;
  for (const auto field : split_fields(text)) {
    out.push_back(number<double>(key, field));
  }
  return out;
}

std::string join(const auto &values, auto &&format) {
  std::string out;
  for (const auto &v : values) {
    if (!out.empty()) {
      out += ',';
    }
    out += format(v);
  }
  return out;
}

std::string_view scenario_name(eval::ScenarioKind k) {
  switch (k) {
  case eval::ScenarioKind::standalone: return "standalone";
  case eval::ScenarioKind::centralized: return "centralized";
  case eval::ScenarioKind::federated: return "federated";
  }
  return "federated";
}

eval::ScenarioKind parse_scenario(std::string_view text) {
  const auto t = trim(text);
  if (t == "standalone") {
    return eval::ScenarioKind::standalone;
  }
  if (t == "centralized") {
    return eval::ScenarioKind::centralized;
  }
  if (t == "federated") {
    return eval::ScenarioKind::federated;
  }
  throw ConfigError("scenario.kind: expected standalone, centralized or federated, got '" + t +
                    "'");
}

std::string_view scope_name(eval::StatsScope s) {
  return s == eval::StatsScope::pooled ? "pooled" : "per_user";
}

eval::StatsScope parse_scope(std::string_view text) {
  const auto t = trim(text);
  if (t == "per_user") {
    return eval::StatsScope::per_user;
  }
  if (t == "pooled") {
    return eval::StatsScope::pooled;
  }
  throw ConfigError("training.stats_scope: expected per_user or pooled, got '" + t + "'");
}

struct Field {
  const char *section;
  const char *key;
  std::function<void(RunConfig &, const std::string &)> set;
  std::function<std::string(const RunConfig &)> get;
};

const std::vector<Field> &fields() {
  using C = RunConfig;
  static const std::vector<Field> table{
      {"run", "seed", [](C &c, const std::string &v) { c.seed = number<std::uint64_t>("run.seed", v); },
       [](const C &c) { return std::to_string(c.seed); }},

      {"dataset", "users",
       [](C &c, const std::string &v) { c.dataset.n_users = number<int>("dataset.users", v); },
       [](const C &c) { return std::to_string(c.dataset.n_users); }},
      {"dataset", "consumer_fraction",
       [](C &c, const std::string &v) {
         c.dataset.consumer_fraction = number<double>("dataset.consumer_fraction", v);
       },
       [](const C &c) { return format_number(c.dataset.consumer_fraction); }},
      {"dataset", "mix_weights",
       [](C &c, const std::string &v) {
         const auto w = number_list("dataset.mix_weights", v);
         if (w.size() != c.dataset.mix_weights.size()) {
           throw ConfigError("dataset.mix_weights: expected 5 comma-separated weights");
         }
         std::copy(w.begin(), w.end(), c.dataset.mix_weights.begin());
       },
       [](const C &c) { return join(c.dataset.mix_weights, format_number); }},
      {"dataset", "ewma_window",
       [](C &c, const std::string &v) {
         c.dataset.ewma_window_hours = number<int>("dataset.ewma_window", v);
       },
       [](const C &c) { return std::to_string(c.dataset.ewma_window_hours); }},
      {"dataset", "profiles",
       [](C &c, const std::string &v) {
         const auto t = trim(v);
         c.profiles = t.empty() ? std::nullopt : std::optional<fs::path>(t);
       },
       [](const C &c) { return c.profiles ? c.profiles->string() : std::string(); }},
      {"dataset", "profiles_per_cell",
       [](C &c, const std::string &v) {
         c.profiles_per_cell = number<int>("dataset.profiles_per_cell", v);
       },
       [](const C &c) { return std::to_string(c.profiles_per_cell); }},

      {"model", "layers",
       [](C &c, const std::string &v) { c.experiment.shape.layers = count("model.layers", v); },
       [](const C &c) { return std::to_string(c.experiment.shape.layers); }},
      {"model", "hidden",
       [](C &c, const std::string &v) { c.experiment.shape.hidden = count("model.hidden", v); },
       [](const C &c) { return std::to_string(c.experiment.shape.hidden); }},
      {"model", "input_hours",
       [](C &c, const std::string &v) {
         c.experiment.window.input_hours = number<int>("model.input_hours", v);
       },
       [](const C &c) { return std::to_string(c.experiment.window.input_hours); }},
      {"model", "horizon",
       [](C &c, const std::string &v) {
         c.experiment.shape.horizon = count("model.horizon", v);
         c.experiment.window.horizon = static_cast<int>(c.experiment.shape.horizon);
       },
       [](const C &c) { return std::to_string(c.experiment.shape.horizon); }},

      {"training", "lr",
       [](C &c, const std::string &v) { c.experiment.training.adam.lr = number<double>("training.lr", v); },
       [](const C &c) { return format_number(c.experiment.training.adam.lr); }},
      {"training", "beta1",
       [](C &c, const std::string &v) {
         c.experiment.training.adam.beta1 = number<double>("training.beta1", v);
       },
       [](const C &c) { return format_number(c.experiment.training.adam.beta1); }},
      {"training", "beta2",
       [](C &c, const std::string &v) {
         c.experiment.training.adam.beta2 = number<double>("training.beta2", v);
       },
       [](const C &c) { return format_number(c.experiment.training.adam.beta2); }},
      {"training", "epsilon",
       [](C &c, const std::string &v) {
         c.experiment.training.adam.epsilon = number<double>("training.epsilon", v);
       },
       [](const C &c) { return format_number(c.experiment.training.adam.epsilon); }},
      {"training", "batch_size",
       [](C &c, const std::string &v) {
         c.experiment.training.batch_size = count("training.batch_size", v);
       },
       [](const C &c) { return std::to_string(c.experiment.training.batch_size); }},
      {"training", "stride",
       [](C &c, const std::string &v) { c.experiment.window.stride = number<int>("training.stride", v); },
       [](const C &c) { return std::to_string(c.experiment.window.stride); }},
      {"training", "rounds",
       [](C &c, const std::string &v) { c.experiment.rounds = number<int>("training.rounds", v); },
       [](const C &c) { return std::to_string(c.experiment.rounds); }},
      {"training", "local_epochs",
       [](C &c, const std::string &v) {
         c.experiment.local_epochs = number<int>("training.local_epochs", v);
       },
       [](const C &c) { return std::to_string(c.experiment.local_epochs); }},
      {"training", "participation",
       [](C &c, const std::string &v) {
         c.experiment.participation = number<double>("training.participation", v);
       },
       [](const C &c) { return format_number(c.experiment.participation); }},
      {"training", "train_fraction",
       [](C &c, const std::string &v) {
         c.experiment.train_fraction = number<double>("training.train_fraction", v);
       },
       [](const C &c) { return format_number(c.experiment.train_fraction); }},
      {"training", "standardize",
       [](C &c, const std::string &v) { c.experiment.standardize = boolean("training.standardize", v); },
       [](const C &c) { return std::string(c.experiment.standardize ? "true" : "false"); }},
      {"training", "stats_scope",
       [](C &c, const std::string &v) { c.experiment.stats_scope = parse_scope(v); },
       [](const C &c) { return std::string(scope_name(c.experiment.stats_scope)); }},

      {"strategy", "name",
       [](C &c, const std::string &v) {
         c.experiment.strategy.kind = fed::AggregationStrategy::parse(trim(v)).kind;
       },
       [](const C &c) { return c.experiment.strategy.name(); }},
      {"strategy", "mu",
       [](C &c, const std::string &v) { c.experiment.strategy.mu = number<double>("strategy.mu", v); },
       [](const C &c) { return format_number(c.experiment.strategy.mu); }},
      {"strategy", "eta",
       [](C &c, const std::string &v) { c.experiment.strategy.eta = number<double>("strategy.eta", v); },
       [](const C &c) { return format_number(c.experiment.strategy.eta); }},
      {"strategy", "beta1",
       [](C &c, const std::string &v) {
         c.experiment.strategy.beta1 = number<double>("strategy.beta1", v);
       },
       [](const C &c) { return format_number(c.experiment.strategy.beta1); }},
      {"strategy", "beta2",
       [](C &c, const std::string &v) {
         c.experiment.strategy.beta2 = number<double>("strategy.beta2", v);
       },
       [](const C &c) { return format_number(c.experiment.strategy.beta2); }},
      {"strategy", "tau",
       [](C &c, const std::string &v) { c.experiment.strategy.tau = number<double>("strategy.tau", v); },
       [](const C &c) { return format_number(c.experiment.strategy.tau); }},

      {"scenario", "kind", [](C &c, const std::string &v) { c.scenario = parse_scenario(v); },
       [](const C &c) { return std::string(scenario_name(c.scenario)); }},

      {"compare", "strategies",
       [](C &c, const std::string &v) {
         c.compare_strategies.clear();
         for (const auto field : split_fields(v)) {
           c.compare_strategies.push_back(fed::AggregationStrategy::parse(trim(field)).name());
         }
       },
       [](const C &c) { return join(c.compare_strategies, [](const std::string &s) { return s; }); }},

      {"evaluate", "test_users",
       [](C &c, const std::string &v) { c.test_users = number<int>("evaluate.test_users", v); },
       [](const C &c) { return std::to_string(c.test_users); }},
      {"evaluate", "fractions",
       [](C &c, const std::string &v) { c.fractions = number_list("evaluate.fractions", v); },
       [](const C &c) { return join(c.fractions, format_number); }},
      {"evaluate", "stats_fraction",
       [](C &c, const std::string &v) {
         c.stats_fraction = number<double>("evaluate.stats_fraction", v);
       },
       [](const C &c) { return format_number(c.stats_fraction); }},
      {"evaluate", "checkpoint",
       [](C &c, const std::string &v) {
         const auto t = trim(v);
         c.checkpoint = t.empty() ? std::nullopt : std::optional<fs::path>(t);
       },
       [](const C &c) { return c.checkpoint ? c.checkpoint->string() : std::string(); }},

      {"output", "dir", [](C &c, const std::string &v) { c.out_dir = trim(v); },
       [](const C &c) { return c.out_dir.string(); }},
      {"output", "plot_stride",
       [](C &c, const std::string &v) { c.plot_stride = number<int>("output.plot_stride", v); },
       [](const C &c) { return std::to_string(c.plot_stride); }},
  };
  return table;
}

std::string pct_label(double fraction) {
  const double pct = fraction * 100.0;
  const double rounded = std::round(pct);
  return std::abs(pct - rounded) < 1e-9 ? std::to_string(static_cast<long long>(rounded))
                                         : format_number(pct);
}

data::ProfileBank profile_bank(const RunConfig &config) {
  if (config.profiles) {
    return data::load_profiles(*config.profiles);
  }
  return data::generate_parametric_profiles(seeds_of(config.seed).profiles,
                                            config.profiles_per_cell);
}

std::vector<data::UserSeries> community(const RunConfig &config, const data::ProfileBank &bank) {
  return data::build_lec(config.dataset, bank, config.experiment.threads);
}

std::string read_file(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::string render(auto &&write) {
  std::ostringstream out;
  write(out);
  return out.str();
}

/// Collects a run directory's files and writes the manifest last.
class RunWriter {
public:
  RunWriter(const RunConfig &config, std::string command)
      : config_(config), command_(std::move(command)) {
    std::error_code ec;
    fs::create_directories(config.out_dir, ec);
    if (ec || !fs::is_directory(config.out_dir)) {
      throw std::runtime_error("cannot create output directory " + config.out_dir.string());
    }
  }

  void file(const std::string &name, const std::string &content) {
    io::write_file_atomic(config_.out_dir / name, content);
    files_.push_back(config_.out_dir / name);
  }

  void checkpoint(const std::string &stem, const io::Checkpoint &ckpt) {
    const auto dir = config_.out_dir / "checkpoints";
    fs::create_directories(dir);
    const auto manifest = io::save_checkpoint(dir, stem, ckpt);
    files_.push_back(dir / (stem + ".bin"));
    files_.push_back(manifest);
  }

  nlohmann::json &extra() { return extra_; }

  std::vector<fs::path> finish() {
    const auto s = seeds_of(config_.seed);
    nlohmann::json m;
    m["tool"] = "lec-fedcast";
    m["command"] = command_;
    m["seeds"] = {{"master", s.master},     {"dataset", s.dataset}, {"profiles", s.profiles},
                  {"init", s.init},         {"batch", s.batch},     {"test_lec", s.test_lec}};
    m["config"] = to_ini(config_);
    for (const auto &[k, v] : extra_.items()) {
      m[k] = v;
    }
    auto outputs = nlohmann::json::array();
    for (const auto &f : files_) {
      outputs.push_back({{"file", fs::relative(f, config_.out_dir).generic_string()},
                         {"sha1", io::git_blob_hash(read_file(f))}});
    }
    m["outputs"] = outputs;
    io::write_file_atomic(config_.out_dir / "config.ini", to_ini(config_));
    io::write_file_atomic(config_.out_dir / "manifest.json", m.dump(2) + "\n");
    files_.push_back(config_.out_dir / "config.ini");
    files_.push_back(config_.out_dir / "manifest.json");
    return files_;
  }

private:
  const RunConfig &config_;
  std::string command_;
  nlohmann::json extra_ = nlohmann::json::object();
  std::vector<fs::path> files_;
};

nlohmann::json dataset_entry(const RunConfig &config, std::span<const data::UserSeries> users) {
  return {{"users", users.size()},
          {"rows", users.size() * static_cast<std::size_t>(data::kHoursPerYear)},
          {"profiles", config.profiles ? config.profiles->string() : "parametric"},
          {"content_sha1", io::dataset_content_hash(users)}};
}

io::Checkpoint make_checkpoint(const RunConfig &config, const nn::ModelParams &params,
                               const data::FeatureStats &stats, const std::string &scenario,
                               int round) {
  io::Checkpoint c;
  c.params = params;
  c.shape = config.experiment.shape;
  c.stats = stats;
  c.manifest = {{"scenario", scenario},
                {"round", round},
                {"seed", config.seed},
                {"stats_scope", scope_name(config.experiment.stats_scope)},
                {"input_hours", config.experiment.window.input_hours}};
  return c;
}

std::string round_stem(int round) {
  std::string digits = std::to_string(round);
  return "round_" + std::string(digits.size() < 2 ? 2 - digits.size() : 0, '0') + digits;
}

} // namespace

void RunConfig::resolve_seeds() {
  const auto s = seeds_of(seed);
  dataset.seed = s.dataset;
  experiment.seed = seed;
}

void RunConfig::validate() const {
  dataset.validate();
  experiment.validate();
  if (profiles_per_cell < 1) {
    throw ConfigError("dataset.profiles_per_cell must be >= 1");
  }
  if (profiles && !fs::is_regular_file(*profiles)) {
    throw ConfigError("dataset.profiles: file not found: " + profiles->string());
  }
  if (checkpoint && !fs::is_regular_file(*checkpoint)) {
    throw ConfigError("checkpoint not found: " + checkpoint->string());
  }
  if (compare_strategies.empty()) {
    throw ConfigError("compare.strategies must name at least one strategy");
  }
  if (test_users < 1) {
    throw ConfigError("evaluate.test_users must be >= 1");
  }
  if (fractions.empty()) {
    throw ConfigError("evaluate.fractions must list at least one consumer fraction");
  }
  for (const double f : fractions) {
    if (!(f >= 0.0 && f <= 1.0)) {
      throw ConfigError("evaluate.fractions must lie in [0, 1]");
    }
  }
  if (std::find(fractions.begin(), fractions.end(), stats_fraction) == fractions.end()) {
    throw ConfigError("evaluate.stats_fraction must be one of evaluate.fractions");
  }
  if (plot_stride < 1) {
    throw ConfigError("output.plot_stride must be >= 1");
  }
  if (out_dir.empty()) {
    throw ConfigError("output.dir must not be empty");
  }
}

RunConfig parse_config(std::istream &in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error &e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }
  RunConfig config;
  for (const auto &[section, body] : tree) {
    if (body.empty()) {
      throw ConfigError("key '" + section + "' appears outside a section");
    }
    bool known_section = false;
    for (const auto &[key, value] : body) {
      const auto &table = fields();
      const auto it = std::find_if(table.begin(), table.end(), [&](const Field &f) {
        return f.section == section && f.key == key;
      });
      known_section = known_section || std::any_of(table.begin(), table.end(), [&](const Field &f) {
                        return f.section == section;
                      });
      if (!known_section) {
        throw ConfigError("unknown section [" + section + "]");
      }
      if (it == table.end()) {
        throw ConfigError("unknown key '" + key + "' in [" + section + "]");
      }
      it->set(config, value.data());
    }
  }
  config.resolve_seeds();
  return config;
}

RunConfig load_config(const fs::path &path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config " + path.string());
  }
  return parse_config(in);
}

std::string to_ini(const RunConfig &config) {
  std::string out;
  std::string current;
  for (const auto &f : fields()) {
    if (current != f.section) {
      out += (current.empty() ? "[" : "\n[") + std::string(f.section) + "]\n";
      current = f.section;
    }
    out += std::string(f.key) + " = " + f.get(config) + "\n";
  }
  return out;
}

SeedTable seeds_of(std::uint64_t master) {
  SeedTable s;
  s.master = master;
  s.dataset = derive_seed(master, "dataset");
  s.profiles = derive_seed(master, "profiles");
  s.init = derive_seed(master, "init");
  s.batch = derive_seed(master, "batch");
  s.test_lec = derive_seed(master, "test-lec");
  return s;
}

std::vector<fs::path> cmd_synth(const RunConfig &config) {
  const auto bank = profile_bank(config);
  const auto users = community(config, bank);
  const auto csv = render([&](std::ostream &o) { data::write_dataset_csv(users, o); });

  RunWriter w(config, "synth");
  w.file("dataset.csv", csv);
  w.extra()["dataset"] = dataset_entry(config, users);
  w.extra()["generator"] = {{"profiles_per_cell", config.profiles_per_cell},
                            {"archetypes", data::assign_archetypes(config.dataset)}};
  return w.finish();
}

std::vector<fs::path> cmd_train(const RunConfig &config) {
  const auto bank = profile_bank(config);
  const auto users = community(config, bank);
  eval::ScenarioReport report;
  switch (config.scenario) {
  case eval::ScenarioKind::standalone: report = eval::run_standalone(users, config.experiment); break;
  case eval::ScenarioKind::centralized: report = eval::run_centralized(users, config.experiment); break;
  case eval::ScenarioKind::federated: report = eval::run_federated(users, config.experiment); break;
  }
  const auto csv = render([&](std::ostream &o) {
    io::write_mse_by_round(std::span<const eval::ScenarioReport>(&report, 1), o);
  });

  RunWriter w(config, "train");
  w.file("mse_by_round.csv", csv);
  if (report.kind == eval::ScenarioKind::standalone) {
    for (std::size_t u = 0; u < report.models.size(); ++u) {
      w.checkpoint("user_" + std::to_string(report.user_ids[u]),
                   make_checkpoint(config, report.models[u], report.stats[u], report.scenario,
                                   config.experiment.rounds));
    }
  } else {
    for (std::size_t r = 0; r < report.history.size(); ++r) {
      const int round = static_cast<int>(r) + 1;
      w.checkpoint(round_stem(round), make_checkpoint(config, report.history[r],
                                                      report.stats.front(), report.scenario, round));
    }
    w.checkpoint("final", make_checkpoint(config, report.models.front(), report.stats.front(),
                                          report.scenario, config.experiment.rounds));
  }
  w.extra()["dataset"] = dataset_entry(config, users);
  w.extra()["scenario"] = report.scenario;
  w.extra()["final_mean_test_mse"] = report.final_mean_test_mse;
  return w.finish();
}

std::vector<fs::path> cmd_evaluate(const RunConfig &config) {
  if (!config.checkpoint) {
    throw ConfigError("evaluate needs a checkpoint (--checkpoint or [evaluate] checkpoint)");
  }
  const auto ckpt = io::load_checkpoint(*config.checkpoint);
  auto experiment = config.experiment;
  experiment.shape = ckpt.shape;
  experiment.window.horizon = static_cast<int>(ckpt.shape.horizon);
  if (ckpt.manifest.contains("stats_scope")) {
    experiment.stats_scope = parse_scope(ckpt.manifest.at("stats_scope").get<std::string>());
  }
  if (ckpt.manifest.contains("input_hours")) {
    experiment.window.input_hours = ckpt.manifest.at("input_hours").get<int>();
  }
  const auto bank = profile_bank(config);
  eval::SweepConfig sweep;
  sweep.train_lec = config.dataset;
  sweep.test_users = config.test_users;
  sweep.fractions = config.fractions;
  const auto results = eval::evaluate_compositions(ckpt.params, ckpt.stats, bank, sweep, experiment);

  const auto surplus = render([&](std::ostream &o) {
    io::write_surplus_hourly(results, config.plot_stride, o);
  });
  std::vector<std::pair<std::string, std::string>> seasonal;
  for (const auto &r : results) {
    seasonal.emplace_back("seasonal_stats_c" + pct_label(r.consumer_fraction) + ".csv",
                          render([&](std::ostream &o) { io::write_seasonal_stats(r.predicted_stats, o); }));
  }
  const auto headline = std::find_if(results.begin(), results.end(), [&](const auto &r) {
    return r.consumer_fraction == config.stats_fraction;
  });
  seasonal.emplace_back("seasonal_stats.csv",
                        seasonal[static_cast<std::size_t>(headline - results.begin())].second);

  RunWriter w(config, "evaluate");
  w.file("surplus_hourly.csv", surplus);
  for (const auto &[name, content] : seasonal) {
    w.file(name, content);
  }
  auto summary = nlohmann::json::array();
  for (const auto &r : results) {
    summary.push_back({{"consumer_fraction", r.consumer_fraction},
                       {"annual_true_surplus_kwh", r.annual_true_surplus},
                       {"spring_winter_iqr_ratio", r.spring_winter_iqr_ratio}});
  }
  w.extra()["checkpoint"] = config.checkpoint->string();
  w.extra()["checkpoint_sha1"] = ckpt.manifest.at("params_sha1");
  w.extra()["compositions"] = summary;
  return w.finish();
}

std::vector<fs::path> cmd_compare(const RunConfig &config) {
  const auto bank = profile_bank(config);
  const auto users = community(config, bank);
  std::vector<fed::AggregationStrategy> strategies;
  for (const auto &name : config.compare_strategies) {
    auto s = config.experiment.strategy;
    s.kind = fed::AggregationStrategy::parse(name).kind;
    strategies.push_back(s);
  }
  const auto reports = eval::compare_strategies(users, config.experiment, strategies);

  RunWriter w(config, "compare");
  w.file("strategy_comparison.csv",
         render([&](std::ostream &o) { io::write_strategy_table(reports, "test_mse", o); }));
  w.file("strategy_train_loss.csv",
         render([&](std::ostream &o) { io::write_strategy_table(reports, "train_loss", o); }));
  w.file("mse_by_round.csv", render([&](std::ostream &o) { io::write_mse_by_round(reports, o); }));
  w.extra()["dataset"] = dataset_entry(config, users);
  return w.finish();
}

int run(int argc, const char *const *argv, std::ostream &out, std::ostream &err) {
  CLI::App app{"Federated LSTM forecasting of community net energy"};
  app.require_subcommand(1);
  std::optional<std::string> config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<int> plot_stride;
  std::optional<std::string> checkpoint;

  const std::map<std::string, std::function<std::vector<fs::path>(const RunConfig &)>> commands{
      {"synth", cmd_synth}, {"train", cmd_train}, {"evaluate", cmd_evaluate}, {"compare", cmd_compare}};
  const std::map<std::string, std::string> help{
      {"synth", "Generate a synthetic community dataset"},
      {"train", "Train one scenario and write per-round test MSE"},
      {"evaluate", "Forecast community surplus on held-out communities"},
      {"compare", "Compare aggregation strategies"}};
  for (const auto &[name, fn] : commands) {
    auto *sub = app.add_subcommand(name, help.at(name));
    sub->add_option("--config", config_path, "INI configuration file");
    sub->add_option("--seed", seed, "Master seed");
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_option("--plot-stride", plot_stride, "Write every n-th hour to surplus_hourly.csv");
    if (name == "evaluate") {
      sub->add_option("--checkpoint", checkpoint, "Checkpoint manifest (.json)");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    RunConfig config = config_path ? load_config(*config_path) : RunConfig{};
    if (seed) {
      config.seed = *seed;
    }
    if (out_dir) {
      config.out_dir = *out_dir;
    }
    if (plot_stride) {
      config.plot_stride = *plot_stride;
    }
    if (checkpoint) {
      config.checkpoint = *checkpoint;
    }
    config.resolve_seeds();
    config.experiment.threads = default_thread_count();
    config.validate();

    const auto *sub = app.get_subcommands().front();
    const auto files = commands.at(sub->get_name())(config);
    for (const auto &f : files) {
      out << f.string() << "\n";
    }
    return 0;
  } catch (const ConfigError &e) {
    err << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception &e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

} // namespace fedcast::cli
