#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "scvae/errors.hpp"
#include "scvae/random.hpp"

namespace scvae {

struct Standardization {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;  // constant columns carry sd = 1

  double to_model_units(double raw, int column) const { return (raw - mean[column]) / sd[column]; }
  double to_raw_units(double value, int column) const { return value * sd[column] + mean[column]; }
};

/// n observations of (region, covariates, outcome pair). Rows of X are
/// observations.
struct Dataset {
  Eigen::MatrixXd X;          // n x p
  Eigen::MatrixXi Y;          // n x 2, entries in {0, 1}
  std::vector<int> region;    // n, values in [0, num_regions)
  std::vector<std::string> feature_names;
  int num_regions = 0;
  std::optional<Standardization> standardization;

  int size() const { return static_cast<int>(X.rows()); }
  int num_features() const { return static_cast<int>(X.cols()); }

  int column_index(const std::string& name) const {
    auto it = std::find(feature_names.begin(), feature_names.end(), name);
    require(it != feature_names.end(), ErrorCode::UnknownColumn, "no covariate named '" + name + "'");
    return static_cast<int>(it - feature_names.begin());
  }

  /// Raw value of one cell, undoing standardization if applied.
  double raw_value(int row, int column) const {
    double v = X(row, column);
    return standardization ? standardization->to_raw_units(v, column) : v;
  }

  Dataset subset(const std::vector<int>& rows) const {
    Dataset out;
    out.X.resize(static_cast<Eigen::Index>(rows.size()), X.cols());
    out.Y.resize(static_cast<Eigen::Index>(rows.size()), 2);
    out.region.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out.X.row(static_cast<Eigen::Index>(i)) = X.row(rows[i]);
      out.Y.row(static_cast<Eigen::Index>(i)) = Y.row(rows[i]);
      out.region.push_back(region[rows[i]]);
    }
    out.feature_names = feature_names;
    out.num_regions = num_regions;
    out.standardization = standardization;
    return out;
  }

  void validate() const {
    require(Y.rows() == X.rows() && Y.cols() == 2, ErrorCode::DimensionMismatch, "Y shape");
    require(static_cast<Eigen::Index>(region.size()) == X.rows(), ErrorCode::DimensionMismatch,
            "region vector length");
    require(static_cast<Eigen::Index>(feature_names.size()) == X.cols(),
            ErrorCode::DimensionMismatch, "feature name count");
    require(X.allFinite(), ErrorCode::SchemaError, "non-finite covariate value");
    for (int i = 0; i < size(); ++i) {
      require(region[i] >= 0 && region[i] < num_regions, ErrorCode::SchemaError,
              "row " + std::to_string(i) + ": region " + std::to_string(region[i]) +
                  " outside [0, " + std::to_string(num_regions) + ")");
      for (int l = 0; l < 2; ++l) {
        require(Y(i, l) == 0 || Y(i, l) == 1, ErrorCode::SchemaError,
                "row " + std::to_string(i) + ": outcomes must be 0/1");
      }
    }
  }
};

/// Column means and standard deviations of X (population sd); constant
/// columns get sd = 1.
inline Standardization compute_standardization(const Eigen::MatrixXd& X) {
  Standardization s;
  const double n = static_cast<double>(X.rows());
  s.mean = X.colwise().mean().transpose();
  s.sd.resize(X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    double var = (X.col(j).array() - s.mean[j]).square().sum() / n;
    double sd = std::sqrt(var);
    s.sd[j] = (sd > 1e-12 && std::isfinite(sd)) ? sd : 1.0;
  }
  return s;
}

/// Maps raw covariates into model units. Applying to an already-standardized
/// dataset replaces stats only if they differ (composition would double-scale).
inline void apply_standardization(Dataset& data, const Standardization& stats) {
  require(stats.mean.size() == data.X.cols(), ErrorCode::DimensionMismatch, "standardization width");
  if (data.standardization) {
    // back to raw first
    for (Eigen::Index j = 0; j < data.X.cols(); ++j) {
      data.X.col(j) = data.X.col(j).array() * data.standardization->sd[j] +
                      data.standardization->mean[j];
    }
  }
  for (Eigen::Index j = 0; j < data.X.cols(); ++j) {
    data.X.col(j) = (data.X.col(j).array() - stats.mean[j]) / stats.sd[j];
  }
  data.standardization = stats;
}

inline void remove_standardization(Dataset& data) {
  if (!data.standardization) return;
  for (Eigen::Index j = 0; j < data.X.cols(); ++j) {
    data.X.col(j) = data.X.col(j).array() * data.standardization->sd[j] + data.standardization->mean[j];
  }
  data.standardization.reset();
}

struct SplitResult {
  Dataset train;
  Dataset test;
  std::vector<int> train_rows;
  std::vector<int> test_rows;
  std::vector<int> holdout_regions;
};

/// Random observation split plus a set of whole regions routed to test.
/// holdout_regions < 0 selects max(1, round(5% of L)). Standardization
/// statistics come from the train portion and are applied to both.
inline SplitResult split(const Dataset& data, double train_fraction, std::uint64_t seed,
                         int holdout_regions = -1) {
  require(data.size() >= 10, ErrorCode::InvalidArgument, "split needs at least 10 observations");
  require(train_fraction > 0.0 && train_fraction < 1.0, ErrorCode::InvalidArgument,
          "train_fraction must lie in (0, 1)");
  Dataset raw = data;
  remove_standardization(raw);
  const int num_regions = std::max(raw.num_regions, 1);
  if (holdout_regions < 0) {
    holdout_regions = std::max(1, static_cast<int>(std::lround(0.05 * num_regions)));
  }
  require(holdout_regions < num_regions, ErrorCode::TooFewRegions,
          "cannot hold out " + std::to_string(holdout_regions) + " of " +
              std::to_string(num_regions) + " regions");
  RandomStream rng = make_stream(seed, "split");
  std::vector<int> order(raw.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> regions(num_regions);
  std::iota(regions.begin(), regions.end(), 0);
  std::shuffle(regions.begin(), regions.end(), rng);
  std::set<int> held(regions.begin(), regions.begin() + holdout_regions);

  const int n_train = static_cast<int>(std::lround(train_fraction * raw.size()));
  SplitResult out;
  for (int i = 0; i < raw.size(); ++i) {
    const int row = order[i];
    if (i < n_train && !held.count(raw.region[row])) {
      out.train_rows.push_back(row);
    } else {
      out.test_rows.push_back(row);
    }
  }
  std::sort(out.train_rows.begin(), out.train_rows.end());
  std::sort(out.test_rows.begin(), out.test_rows.end());
  out.holdout_regions.assign(held.begin(), held.end());
  out.train = raw.subset(out.train_rows);
  out.test = raw.subset(out.test_rows);
  const Standardization stats = compute_standardization(out.train.X);
  apply_standardization(out.train, stats);
  apply_standardization(out.test, stats);
  return out;
}

// ---------------------------------------------------------------------------
// CSV: header `region_id,y1,y2,<feature names...>`

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

inline bool parse_double(const std::string& s, double& out) {
  std::string t = trim(s);
  if (t.empty()) return false;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

inline bool parse_int(const std::string& s, long long& out) {
  std::string t = trim(s);
  if (t.empty()) return false;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  return ec == std::errc() && ptr == t.data() + t.size();
}

}  // namespace detail

/// Shortest representation that round-trips a double exactly.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

/// Reads the dataset CSV. `num_regions` <= 0 infers L as max region + 1.
inline Dataset parse_dataset_csv(std::istream& in, int num_regions = 0) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::SchemaError, "empty dataset file");
  auto header = detail::split_csv_line(line);
  for (auto& h : header) h = detail::trim(h);
  require(header.size() >= 3 && header[0] == "region_id" && header[1] == "y1" && header[2] == "y2",
          ErrorCode::SchemaError, "header must start with region_id,y1,y2");
  Dataset d;
  d.feature_names.assign(header.begin() + 3, header.end());
  const std::size_t p = d.feature_names.size();
  std::vector<double> xs;
  std::vector<int> ys;
  int row = 0;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    ++row;
    auto f = detail::split_csv_line(line);
    const std::string where = "row " + std::to_string(row) + " (line " + std::to_string(line_no) + ")";
    require(f.size() == header.size(), ErrorCode::SchemaError,
            where + ": expected " + std::to_string(header.size()) + " fields, got " +
                std::to_string(f.size()));
    long long r = 0, y1 = 0, y2 = 0;
    require(detail::parse_int(f[0], r) && r >= 0, ErrorCode::SchemaError, where + ": bad region_id");
    require(detail::parse_int(f[1], y1) && (y1 == 0 || y1 == 1), ErrorCode::SchemaError,
            where + ": y1 must be 0 or 1");
    require(detail::parse_int(f[2], y2) && (y2 == 0 || y2 == 1), ErrorCode::SchemaError,
            where + ": y2 must be 0 or 1");
    d.region.push_back(static_cast<int>(r));
    ys.push_back(static_cast<int>(y1));
    ys.push_back(static_cast<int>(y2));
    for (std::size_t j = 0; j < p; ++j) {
      double v = 0.0;
      require(detail::parse_double(f[3 + j], v), ErrorCode::SchemaError,
              where + ": bad value for " + d.feature_names[j]);
      xs.push_back(v);
    }
  }
  const int n = static_cast<int>(d.region.size());
  d.X.resize(n, static_cast<Eigen::Index>(p));
  d.Y.resize(n, 2);
  for (int i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) d.X(i, static_cast<Eigen::Index>(j)) = xs[i * p + j];
    d.Y(i, 0) = ys[2 * i];
    d.Y(i, 1) = ys[2 * i + 1];
  }
  int max_region = -1;
  for (int r : d.region) max_region = std::max(max_region, r);
  d.num_regions = num_regions > 0 ? num_regions : max_region + 1;
  for (int i = 0; i < n; ++i) {
    require(d.region[i] < d.num_regions, ErrorCode::SchemaError,
            "row " + std::to_string(i + 1) + ": region " + std::to_string(d.region[i]) +
                " out of range for L=" + std::to_string(d.num_regions));
  }
  return d;
}

inline Dataset read_dataset_csv(const std::string& path, int num_regions = 0) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open dataset " + path);
  return parse_dataset_csv(in, num_regions);
}

/// Writes raw (unstandardized) values.
inline void write_dataset_csv(std::ostream& out, const Dataset& data) {
  out << "region_id,y1,y2";
  for (const auto& f : data.feature_names) out << "," << f;
  out << "\n";
  for (int i = 0; i < data.size(); ++i) {
    out << data.region[i] << "," << data.Y(i, 0) << "," << data.Y(i, 1);
    for (int j = 0; j < data.num_features(); ++j) out << "," << format_double(data.raw_value(i, j));
    out << "\n";
  }
}

}  // namespace scvae
