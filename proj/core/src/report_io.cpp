#include "fedcast/report_io.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <streambuf>

#include <openssl/evp.h>

#include "fedcast/errors.hpp"
#include "fedcast/format.hpp"

namespace fedcast::io {
namespace {

std::string percent_label(double fraction) {
  const double pct = fraction * 100.0;
  const double rounded = std::round(pct);
  return std::abs(pct - rounded) < 1e-9 ? std::to_string(static_cast<long long>(rounded))
                                         : format_number(pct);
}

class Sha1 {
public:
  Sha1() : ctx_(EVP_MD_CTX_new()) {
    if (ctx_ == nullptr || EVP_DigestInit_ex(ctx_, EVP_sha1(), nullptr) != 1) {
      throw std::runtime_error("SHA-1 initialisation failed");
    }
  }
  ~Sha1() { EVP_MD_CTX_free(ctx_); }
  Sha1(const Sha1 &) = delete;
  Sha1 &operator=(const Sha1 &) = delete;

  void update(const char *data, std::size_t n) { EVP_DigestUpdate(ctx_, data, n); }

  std::string hex() {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_, digest, &len);
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) {
      os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
    }
    return os.str();
  }

private:
  EVP_MD_CTX *ctx_;
};

// Streambuf that either counts bytes or feeds them to a hash.
class DigestBuf : public std::streambuf {
public:
  explicit DigestBuf(Sha1 *sha) : sha_(sha) {}
  std::size_t bytes() const { return bytes_; }

protected:
  std::streamsize xsputn(const char *s, std::streamsize n) override {
    bytes_ += static_cast<std::size_t>(n);
    if (sha_) {
      sha_->update(s, static_cast<std::size_t>(n));
    }
    return n;
  }
  int_type overflow(int_type ch) override {
    if (ch != traits_type::eof()) {
      const char c = traits_type::to_char_type(ch);
      xsputn(&c, 1);
    }
    return ch;
  }

private:
  Sha1 *sha_;
  std::size_t bytes_ = 0;
};

} // namespace

void write_mse_by_round(std::span<const eval::ScenarioReport> reports, std::ostream &out) {
  out << "round,scenario,client_id,mse\n";
  for (const auto &r : reports) {
    for (std::size_t round = 0; round < r.test_mse.size(); ++round) {
      for (std::size_t u = 0; u < r.user_ids.size(); ++u) {
        out << round + 1 << ',' << r.scenario << ',' << r.user_ids[u] << ','
            << format_number(r.test_mse[round][u]) << '\n';
      }
      out << round + 1 << ',' << r.scenario << ",mean," << format_number(r.mean_test_mse[round])
          << '\n';
    }
  }
}

void write_strategy_table(std::span<const eval::ScenarioReport> reports, std::string_view metric,
                          std::ostream &out) {
  const bool test = metric == "test_mse";
  if (!test && metric != "train_loss") {
    throw std::invalid_argument("unknown metric '" + std::string(metric) + "'");
  }
  out << "round";
  std::size_t rounds = 0;
  for (const auto &r : reports) {
    out << ',' << r.scenario;
    rounds = std::max(rounds, r.mean_test_mse.size());
  }
  out << '\n';
  for (std::size_t round = 0; round < rounds; ++round) {
    out << round + 1;
    for (const auto &r : reports) {
      const auto &series = test ? r.mean_test_mse : r.mean_train_loss;
      out << ',';
      if (round < series.size()) {
        out << format_number(series[round]);
      }
    }
    out << '\n';
  }
}

void write_surplus_hourly(std::span<const eval::CompositionResult> results, int plot_stride,
                          std::ostream &out) {
  if (results.empty()) {
    throw std::invalid_argument("write_surplus_hourly: no compositions");
  }
  if (plot_stride < 1) {
    throw std::invalid_argument("plot stride must be >= 1");
  }
  out << "hour,true,predicted";
  for (const auto &r : results) {
    const auto label = percent_label(r.consumer_fraction);
    out << ",true_c" << label << ",predicted_c" << label;
  }
  out << '\n';
  const auto &first = results.front().forecast;
  for (std::size_t t = 0; t < first.hours(); t += static_cast<std::size_t>(plot_stride)) {
    out << first.first_hour + t << ',' << format_number(first.truth[t]) << ','
        << format_number(first.predicted[t]);
    for (const auto &r : results) {
      out << ',' << format_number(r.forecast.truth.at(t)) << ','
          << format_number(r.forecast.predicted.at(t));
    }
    out << '\n';
  }
}

void write_surplus_hourly(const eval::SurplusForecast &forecast, int plot_stride,
                          std::ostream &out) {
  if (plot_stride < 1) {
    throw std::invalid_argument("plot stride must be >= 1");
  }
  out << "hour,true,predicted\n";
  for (std::size_t t = 0; t < forecast.hours(); t += static_cast<std::size_t>(plot_stride)) {
    out << forecast.first_hour + t << ',' << format_number(forecast.truth[t]) << ','
        << format_number(forecast.predicted[t]) << '\n';
  }
}

void write_seasonal_stats(const std::array<eval::SeasonalStats, data::kSeasons> &stats,
                          std::ostream &out) {
  out << "season,q1,median,q3,iqr,lo_whisker,hi_whisker,n_outliers\n";
  for (const auto &s : stats) {
    out << data::to_string(s.season) << ',' << format_number(s.q1) << ','
        << format_number(s.median) << ',' << format_number(s.q3) << ',' << format_number(s.iqr)
        << ',' << format_number(s.lo_whisker) << ',' << format_number(s.hi_whisker) << ','
        << s.outliers.size() << '\n';
  }
}

std::string git_blob_hash(std::string_view content) {
  Sha1 sha;
  const std::string header = "blob " + std::to_string(content.size());
  sha.update(header.data(), header.size() + 1); // include the terminating NUL
  sha.update(content.data(), content.size());
  return sha.hex();
}

std::string dataset_content_hash(std::span<const data::UserSeries> users) {
  DigestBuf counter(nullptr);
  {
    std::ostream os(&counter);
    data::write_dataset_csv(users, os);
  }
  Sha1 sha;
  const std::string header = "blob " + std::to_string(counter.bytes());
  sha.update(header.data(), header.size() + 1);
  DigestBuf hasher(&sha);
  {
    std::ostream os(&hasher);
    data::write_dataset_csv(users, os);
  }
  return sha.hex();
}

void write_file_atomic(const std::filesystem::path &path, std::string_view content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw std::runtime_error("cannot write " + tmp.string());
    }
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) {
      throw std::runtime_error("write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw std::runtime_error("cannot rename into " + path.string());
  }
}

} // namespace fedcast::io
