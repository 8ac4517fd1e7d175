#pragma once

// Synthetic Local Energy Community users: day-profile banks, random day
// joining, EWMA smoothing, net-energy targets and the 8-column feature rows.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fedcast::data {

inline constexpr int kHoursPerDay = 24;
inline constexpr int kDaysPerYear = 336;
inline constexpr int kDaysPerSeason = 84;
inline constexpr int kHoursPerYear = kDaysPerYear * kHoursPerDay;
inline constexpr int kSeasons = 4;
inline constexpr int kDayKinds = 2;
inline constexpr int kArchetypes = 5;
inline constexpr int kFeatureCount = 8;
inline constexpr int kTargetColumn = 7;

enum class Season : int { winter = 0, spring = 1, summer = 2, autumn = 3 };
enum class DayKind : int { weekday = 0, weekend_holiday = 1 };

std::string_view to_string(Season s);
std::string_view to_string(DayKind k);
Season parse_season(std::string_view s);
DayKind parse_day_kind(std::string_view s);

/// Calendar season of a day index in [0, 335]: winter first, 84-day blocks.
inline Season season_of_day(int day) { return static_cast<Season>(day / kDaysPerSeason); }

struct DayProfile {
  Season season = Season::winter;
  DayKind day_kind = DayKind::weekday;
  std::array<double, kHoursPerDay> production{};  // kWh
  std::array<double, kHoursPerDay> consumption{}; // kWh
  std::array<double, kHoursPerDay> temperature{}; // degrees C
};

/// User types 0-2 are prosumers with PV (plain, +storage, +EV);
/// 3 is an EV consumer and 4 the "Vanilla" consumer.
struct UserArchetype {
  int type_id = 0;

  bool is_consumer() const { return type_id >= 3; }
  std::string_view description() const;

  /// Throws DataError for ids outside [0, 4].
  static UserArchetype of(int type_id);
  friend bool operator==(const UserArchetype &, const UserArchetype &) = default;
};

/// Day profiles indexed by (season, day kind, archetype).
class ProfileBank {
public:
  void add(int archetype, DayProfile profile);

  const std::vector<DayProfile> &cell(Season season, DayKind kind, int archetype) const;
  bool has_archetype(int archetype) const;
  std::vector<int> archetypes() const;
  std::size_t profile_count() const;
  std::size_t filled_cells() const;

  /// Every archetype that appears must have at least one profile in each of
  /// its 8 (season, day kind) cells. Throws DataError naming the empty cell.
  void validate() const;

  friend bool operator==(const ProfileBank &, const ProfileBank &);

private:
  static std::size_t index(Season season, DayKind kind, int archetype);
  std::array<std::vector<DayProfile>, kSeasons * kDayKinds * kArchetypes> cells_;
};

/// Profile CSV: header `season,day_kind,archetype,hour,production_kwh,
/// consumption_kwh,temperature_c`, 24 consecutive rows (hours 0..23) per
/// profile. Throws DataError with the offending line number.
ProfileBank load_profiles(std::istream &in);
ProfileBank load_profiles(const std::filesystem::path &path);
void save_profiles(const ProfileBank &bank, std::ostream &out);

/// Deterministic parametric stand-in for a measured profile collection.
ProfileBank generate_parametric_profiles(std::uint64_t seed, int profiles_per_cell = 8);

/// One synthetic year of raw hourly channels, plus the provenance of each day.
struct RawYear {
  std::vector<double> production;
  std::vector<double> consumption;
  std::vector<double> temperature;
  std::vector<Season> day_season;
  std::vector<DayKind> day_kind;
  std::vector<int> day_profile; // index into the source cell
};

/// Joins 336 randomly drawn days, 84 per season in calendar order.
/// Each day is a weekday with probability 5/7.
RawYear synthesize_user_year(const ProfileBank &bank, int archetype, std::uint64_t seed);

/// Span-based recursive EWMA: y0 = x0, y_t = a*x_t + (1-a)*y_{t-1}, a = 2/(window+1).
std::vector<double> ewma(std::span<const double> series, int window);

/// Hourly exported minus imported energy; positive means surplus.
std::vector<double> net_energy(std::span<const double> exported, std::span<const double> imported);

struct FeatureRow {
  int day = 0;   // [0, 335]
  int index = 0; // hour of day [0, 23]
  double temperature_median = 0.0;
  double temperature_std = 0.0;
  int season = 0;
  int type = 0;  // 0 prosumer, 1 consumer
  int type2 = 0; // archetype id
  double sum_total_ewm_balance = 0.0;

  /// Columns in dataset order; the target is the last one.
  std::array<double, kFeatureCount> as_array() const;
};

inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "day",    "index", "temperature_median", "temperature_std",
    "season", "type",  "type2",              "sum_total_ewm_balance"};

struct UserSeries {
  int user_id = 0;
  UserArchetype archetype;
  std::vector<FeatureRow> rows;
};

/// Feature rows for one user-year. Exported energy is the production channel
/// and imported energy the consumption channel; both are EWMA-smoothed before
/// differencing. Temperature median/std use a centred 24 h window
/// [t-12, t+12) clipped to the series.
UserSeries build_feature_rows(const RawYear &raw, UserArchetype archetype, int user_id,
                              int ewma_window_hours = 120);

struct LecConfig {
  int n_users = 10;
  double consumer_fraction = 0.5;
  /// Relative archetype weights; renormalised within the prosumer (0-2) and
  /// consumer (3-4) groups.
  std::array<double, kArchetypes> mix_weights{0.2, 0.2, 0.2, 0.2, 0.2};
  std::uint64_t seed = 0;
  int ewma_window_hours = 120;

  /// Throws ConfigError.
  void validate() const;
  /// floor(n_users * consumer_fraction), with a 1e-9 guard against
  /// representation error (100 * 0.29 is 28.999...).
  int consumer_count() const;
};

/// Archetype of every user id, prosumers first. Group counts are split by
/// largest remainder over the renormalised weights; ties go to the lower id.
std::vector<int> assign_archetypes(const LecConfig &config);

/// Builds the community. Every user derives its own generator from the
/// master seed and user id, so the result does not depend on `threads`.
std::vector<UserSeries> build_lec(const LecConfig &config, const ProfileBank &bank,
                                  unsigned threads = 1);

/// One row per user-hour: `user_id` followed by the 8 feature columns.
void write_dataset_csv(std::span<const UserSeries> users, std::ostream &out);

} // namespace fedcast::data
