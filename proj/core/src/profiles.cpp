#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <string>

#include "fedcast/data.hpp"
#include "fedcast/errors.hpp"
#include "fedcast/format.hpp"
#include "fedcast/rng.hpp"

namespace fedcast::data {
namespace {

constexpr std::string_view kProfileHeader =
    "season,day_kind,archetype,hour,production_kwh,consumption_kwh,temperature_c";

[[noreturn]] void fail_line(std::size_t line, const std::string &msg) {
  throw DataError("profile CSV line " + std::to_string(line) + ": " + msg);
}

struct SeasonClimate {
  double temp_mean;
  double temp_swing;
  double pv_peak_per_kwp;
  double sunrise;
  double sunset;
  double heating;
};

// Danish-like climate by season (winter, spring, summer, autumn).
constexpr std::array<SeasonClimate, kSeasons> kClimate = {{
    {1.5, 2.0, 0.16, 8.5, 15.5, 1.35},
    {8.0, 4.5, 0.62, 5.5, 20.5, 1.05},
    {16.5, 5.0, 0.72, 4.5, 21.5, 0.85},
    {10.0, 3.0, 0.30, 7.0, 18.0, 1.15},
}};

double bump(double hour, double centre, double width) {
  const double d = (hour - centre) / width;
  return std::exp(-0.5 * d * d);
}

DayProfile make_profile(Season season, DayKind kind, int archetype, Rng &rng) {
  const auto &cl = kClimate[static_cast<std::size_t>(season)];
  const bool weekend = kind == DayKind::weekend_holiday;
  DayProfile p;
  p.season = season;
  p.day_kind = kind;

  const double day_offset = rng.normal() * 2.0;
  for (int h = 0; h < kHoursPerDay; ++h) {
    const double hour = h + 0.5;
    p.temperature[static_cast<std::size_t>(h)] =
        cl.temp_mean + day_offset +
        cl.temp_swing * std::cos(2.0 * std::numbers::pi * (hour - 15.0) / 24.0) +
        0.4 * rng.normal();
  }

  // Household base load with morning and evening peaks.
  const double household = rng.uniform(0.8, 1.2);
  const double morning = weekend ? 9.5 : 7.5;
  for (int h = 0; h < kHoursPerDay; ++h) {
    const double hour = h + 0.5;
    double load = 0.25 + 0.55 * bump(hour, morning, weekend ? 2.0 : 1.2) +
                  0.95 * bump(hour, 18.5, 2.2);
    if (weekend && hour > 10.0 && hour < 16.0) {
      load += 0.3;
    }
    load *= household * cl.heating;
    load *= 1.0 + 0.08 * rng.normal();
    p.consumption[static_cast<std::size_t>(h)] = std::max(0.02, load);
  }

  // EV charging block, evenings on weekdays, anytime on weekends.
  if (archetype == 2 || archetype == 3) {
    const double charge_prob = weekend ? 0.45 : 0.7;
    if (rng.bernoulli(charge_prob)) {
      const int start = weekend ? 11 + static_cast<int>(rng.below(10))
                                : 18 + static_cast<int>(rng.below(3));
      const int length = 2 + static_cast<int>(rng.below(2));
      for (int h = start; h < std::min(kHoursPerDay, start + length); ++h) {
        p.consumption[static_cast<std::size_t>(h)] += 3.7;
      }
    }
  }

  // PV: half-sine between sunrise and sunset scaled by a per-day cloud factor.
  if (archetype <= 2) {
    const double kwp = archetype == 1 ? 6.0 : 5.0;
    const double cloud = rng.uniform(0.2, 1.0);
    for (int h = 0; h < kHoursPerDay; ++h) {
      const double hour = h + 0.5;
      double pv = 0.0;
      if (hour > cl.sunrise && hour < cl.sunset) {
        const double phase = (hour - cl.sunrise) / (cl.sunset - cl.sunrise);
        pv = kwp * cl.pv_peak_per_kwp * cloud * std::sin(std::numbers::pi * phase);
      }
      p.production[static_cast<std::size_t>(h)] = pv;
    }
  }

  // Storage: daytime surplus is charged (8 kWh, 90% round trip) and exported
  // from 17:00 onwards.
  if (archetype == 1) {
    double stored = 0.0;
    constexpr double capacity = 8.0;
    for (int h = 0; h < 17; ++h) {
      auto &prod = p.production[static_cast<std::size_t>(h)];
      const double surplus = prod - p.consumption[static_cast<std::size_t>(h)];
      if (surplus > 0.0) {
        const double take = std::min(surplus * 0.6, capacity - stored);
        stored += take;
        prod -= take;
      }
    }
    double available = stored * 0.9;
    for (int h = 17; h < kHoursPerDay && available > 0.0; ++h) {
      const double out = std::min(available, 1.5);
      p.production[static_cast<std::size_t>(h)] += out;
      available -= out;
    }
  }
  return p;
}

} // namespace

std::string_view to_string(Season s) {
  switch (s) {
  case Season::winter: return "winter";
  case Season::spring: return "spring";
  case Season::summer: return "summer";
  case Season::autumn: return "autumn";
  }
  return "?";
}

std::string_view to_string(DayKind k) {
  return k == DayKind::weekday ? "weekday" : "weekend_holiday";
}

Season parse_season(std::string_view s) {
  for (int i = 0; i < kSeasons; ++i) {
    if (to_string(static_cast<Season>(i)) == s) {
      return static_cast<Season>(i);
    }
  }
  throw DataError("unknown season '" + std::string(s) + "'");
}

DayKind parse_day_kind(std::string_view s) {
  if (s == "weekday") {
    return DayKind::weekday;
  }
  if (s == "weekend_holiday") {
    return DayKind::weekend_holiday;
  }
  throw DataError("unknown day kind '" + std::string(s) + "'");
}

std::string_view UserArchetype::description() const {
  switch (type_id) {
  case 0: return "prosumer with PV";
  case 1: return "prosumer with PV and energy storage";
  case 2: return "prosumer with PV and electric vehicle";
  case 3: return "consumer with electric vehicle";
  case 4: return "vanilla consumer";
  default: return "unknown";
  }
}

UserArchetype UserArchetype::of(int type_id) {
  if (type_id < 0 || type_id >= kArchetypes) {
    throw DataError("archetype id " + std::to_string(type_id) + " outside [0, 4]");
  }
  return UserArchetype{type_id};
}

std::size_t ProfileBank::index(Season season, DayKind kind, int archetype) {
  if (archetype < 0 || archetype >= kArchetypes) {
    throw DataError("archetype id " + std::to_string(archetype) + " outside [0, 4]");
  }
  return (static_cast<std::size_t>(archetype) * kSeasons + static_cast<std::size_t>(season)) *
             kDayKinds +
         static_cast<std::size_t>(kind);
}

void ProfileBank::add(int archetype, DayProfile profile) {
  for (int h = 0; h < kHoursPerDay; ++h) {
    const auto i = static_cast<std::size_t>(h);
    if (!(profile.production[i] >= 0.0) || !(profile.consumption[i] >= 0.0) ||
        !std::isfinite(profile.production[i]) || !std::isfinite(profile.consumption[i]) ||
        !std::isfinite(profile.temperature[i])) {
      throw DataError("profile hour " + std::to_string(h) +
                      ": production and consumption must be finite and non-negative");
    }
  }
  cells_[index(profile.season, profile.day_kind, archetype)].push_back(profile);
}

const std::vector<DayProfile> &ProfileBank::cell(Season season, DayKind kind,
                                                 int archetype) const {
  return cells_[index(season, kind, archetype)];
}

bool ProfileBank::has_archetype(int archetype) const {
  if (archetype < 0 || archetype >= kArchetypes) {
    return false;
  }
  for (int s = 0; s < kSeasons; ++s) {
    for (int k = 0; k < kDayKinds; ++k) {
      if (!cell(static_cast<Season>(s), static_cast<DayKind>(k), archetype).empty()) {
        return true;
      }
    }
  }
  return false;
}

std::vector<int> ProfileBank::archetypes() const {
  std::vector<int> out;
  for (int a = 0; a < kArchetypes; ++a) {
    if (has_archetype(a)) {
      out.push_back(a);
    }
  }
  return out;
}

std::size_t ProfileBank::profile_count() const {
  std::size_t n = 0;
  for (const auto &c : cells_) {
    n += c.size();
  }
  return n;
}

std::size_t ProfileBank::filled_cells() const {
  return static_cast<std::size_t>(
      std::count_if(cells_.begin(), cells_.end(), [](const auto &c) { return !c.empty(); }));
}

void ProfileBank::validate() const {
  const auto present = archetypes();
  if (present.empty()) {
    throw DataError("profile bank is empty");
  }
  for (const int a : present) {
    for (int s = 0; s < kSeasons; ++s) {
      for (int k = 0; k < kDayKinds; ++k) {
        const auto season = static_cast<Season>(s);
        const auto kind = static_cast<DayKind>(k);
        if (cell(season, kind, a).empty()) {
          throw DataError("profile bank has no profile for (" + std::string(to_string(season)) +
                          ", " + std::string(to_string(kind)) + ", archetype " +
                          std::to_string(a) + ")");
        }
      }
    }
  }
}

bool operator==(const ProfileBank &a, const ProfileBank &b) {
  for (std::size_t i = 0; i < a.cells_.size(); ++i) {
    const auto &x = a.cells_[i];
    const auto &y = b.cells_[i];
    if (x.size() != y.size()) {
      return false;
    }
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (x[j].season != y[j].season || x[j].day_kind != y[j].day_kind ||
          x[j].production != y[j].production || x[j].consumption != y[j].consumption ||
          x[j].temperature != y[j].temperature) {
        return false;
      }
    }
  }
  return true;
}

ProfileBank load_profiles(std::istream &in) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) {
    throw DataError("profile CSV is empty");
  }
  ++line_no;
  if (!line.empty() && line.back() == '\r') {
    line.pop_back();
  }
  if (line != kProfileHeader) {
    fail_line(line_no, "expected header '" + std::string(kProfileHeader) + "'");
  }

  ProfileBank bank;
  DayProfile current;
  int current_archetype = -1;
  int expected_hour = 0;
  std::size_t profile_start = 0;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.empty()) {
      continue;
    }
    const auto fields = split_fields(line);
    if (fields.size() != 7) {
      fail_line(line_no, "expected 7 fields, found " + std::to_string(fields.size()));
    }
    Season season;
    DayKind kind;
    try {
      season = parse_season(fields[0]);
      kind = parse_day_kind(fields[1]);
    } catch (const DataError &e) {
      fail_line(line_no, e.what());
    }
    int archetype = 0;
    int hour = 0;
    double prod = 0.0, cons = 0.0, temp = 0.0;
    if (!parse_number(fields[2], archetype) || archetype < 0 || archetype >= kArchetypes) {
      fail_line(line_no, "archetype must be an integer in [0, 4]");
    }
    if (!parse_number(fields[3], hour)) {
      fail_line(line_no, "hour must be an integer");
    }
    if (!parse_number(fields[4], prod) || !parse_number(fields[5], cons) ||
        !parse_number(fields[6], temp)) {
      fail_line(line_no, "non-numeric energy or temperature value");
    }
    if (!std::isfinite(prod) || !std::isfinite(cons) || !std::isfinite(temp)) {
      fail_line(line_no, "non-finite value");
    }
    if (prod < 0.0 || cons < 0.0) {
      fail_line(line_no, "production and consumption must be non-negative");
    }
    if (hour != expected_hour) {
      fail_line(line_no, "expected hour " + std::to_string(expected_hour) + ", found " +
                             std::to_string(hour));
    }
    if (hour == 0) {
      current = DayProfile{};
      current.season = season;
      current.day_kind = kind;
      current_archetype = archetype;
      profile_start = line_no;
    } else if (season != current.season || kind != current.day_kind ||
               archetype != current_archetype) {
      fail_line(line_no, "profile started on line " + std::to_string(profile_start) +
                             " changes season, day kind or archetype mid-day");
    }
    const auto h = static_cast<std::size_t>(hour);
    current.production[h] = prod;
    current.consumption[h] = cons;
    current.temperature[h] = temp;
    expected_hour = (hour + 1) % kHoursPerDay;
    if (expected_hour == 0) {
      bank.add(current_archetype, current);
    }
  }
  if (expected_hour != 0) {
    fail_line(line_no, "truncated profile starting on line " + std::to_string(profile_start));
  }
  bank.validate();
  return bank;
}

ProfileBank load_profiles(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open profile CSV " + path.string());
  }
  return load_profiles(in);
}

void save_profiles(const ProfileBank &bank, std::ostream &out) {
  out << kProfileHeader << '\n';
  for (int a = 0; a < kArchetypes; ++a) {
    for (int s = 0; s < kSeasons; ++s) {
      for (int k = 0; k < kDayKinds; ++k) {
        for (const auto &p : bank.cell(static_cast<Season>(s), static_cast<DayKind>(k), a)) {
          for (std::size_t h = 0; h < kHoursPerDay; ++h) {
            out << to_string(p.season) << ',' << to_string(p.day_kind) << ',' << a << ',' << h
                << ',' << format_number(p.production[h]) << ','
                << format_number(p.consumption[h]) << ',' << format_number(p.temperature[h])
                << '\n';
          }
        }
      }
    }
  }
}

ProfileBank generate_parametric_profiles(std::uint64_t seed, int profiles_per_cell) {
  if (profiles_per_cell < 1) {
    throw ConfigError("profiles_per_cell must be >= 1");
  }
  ProfileBank bank;
  for (int a = 0; a < kArchetypes; ++a) {
    for (int s = 0; s < kSeasons; ++s) {
      for (int k = 0; k < kDayKinds; ++k) {
        Rng rng(derive_seed(seed, "profile-cell",
                            static_cast<std::uint64_t>((a * kSeasons + s) * kDayKinds + k)));
        for (int i = 0; i < profiles_per_cell; ++i) {
          bank.add(a, make_profile(static_cast<Season>(s), static_cast<DayKind>(k), a, rng));
        }
      }
    }
  }
  return bank;
}

} // namespace fedcast::data
