#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "scvae/dataset.hpp"
#include "scvae/gumbel_copula.hpp"
#include "scvae/model.hpp"
#include "scvae/random.hpp"

namespace scvae {

/// Monte Carlo draws shared between predictions; defaults per use site.
inline constexpr int kPredictionDraws = 200;
inline constexpr int kBootstrapDraws = 50;

struct JointPrediction {
  CellProbs cells;
  double p1 = 0.0;
  double p2 = 0.0;
  double c1_given_2 = 0.0;
  double c2_given_1 = 0.0;
  double c1_given_not2 = 0.0;
  double c2_given_not1 = 0.0;
  int samples = 0;
};

inline JointPrediction summarize_cells(const CellProbs& cells, int samples) {
  JointPrediction jp;
  jp.cells = cells;
  jp.p1 = cells.p11 + cells.p10;
  jp.p2 = cells.p11 + cells.p01;
  jp.c1_given_2 = cells.p11 / jp.p2;
  jp.c2_given_1 = cells.p11 / jp.p1;
  jp.c1_given_not2 = cells.p10 / (cells.p10 + cells.p00);
  jp.c2_given_not1 = cells.p01 / (cells.p01 + cells.p00);
  jp.samples = samples;
  return jp;
}

/// Fixed standard-normal draws (d x S) reused for every observation of one
/// prediction call; predictions are then a pure function of x.
inline Eigen::MatrixXd prediction_eps(int d, int samples, std::uint64_t seed) {
  RandomStream rng = make_stream(seed, "predict", static_cast<std::uint64_t>(samples));
  return draw_eps(d, samples, rng);
}

/// Cells averaged over S reparameterized draws for each column of x_cols.
inline std::vector<CellProbs> predict_cells(const Eigen::MatrixXd& x_cols, const ModelParams& params,
                                            const Eigen::MatrixXd& eps) {
  require(eps.rows() == params.latent_dim() && eps.cols() >= 1, ErrorCode::DimensionMismatch,
          "prediction eps shape");
  const int n = static_cast<int>(x_cols.cols());
  const int s_count = static_cast<int>(eps.cols());
  const double alpha = params.alpha();
  EncoderBatch enc = encode_batch(x_cols, params);
  std::vector<CellProbs> out(n);
  // chunk observations so the expanded z matrix stays small
  const int chunk = std::max(1, 65536 / s_count);
  for (int start = 0; start < n; start += chunk) {
    const int stop = std::min(n, start + chunk);
    const int m = stop - start;
    Eigen::MatrixXd z(params.latent_dim(), static_cast<Eigen::Index>(m) * s_count);
    for (int i = 0; i < m; ++i) {
      const Eigen::VectorXd sd = (0.5 * enc.kappa.col(start + i).array()).exp();
      for (int s = 0; s < s_count; ++s) {
        z.col(static_cast<Eigen::Index>(i) * s_count + s) =
            enc.beta.col(start + i).array() + sd.array() * eps.col(s).array();
      }
    }
    const Eigen::MatrixXd eta = params.predictor.forward(z);
    for (int i = 0; i < m; ++i) {
      CellProbs acc{0.0, 0.0, 0.0, 0.0};
      for (int s = 0; s < s_count; ++s) {
        const Eigen::Index c = static_cast<Eigen::Index>(i) * s_count + s;
        const CellProbs cell =
            cell_probs(probit_marginal(eta(0, c)), probit_marginal(eta(1, c)), alpha);
        acc.p11 += cell.p11;
        acc.p10 += cell.p10;
        acc.p01 += cell.p01;
        acc.p00 += cell.p00;
      }
      acc.p11 /= s_count;
      acc.p10 /= s_count;
      acc.p01 /= s_count;
      acc.p00 /= s_count;
      out[start + i] = acc;
    }
  }
  return out;
}

/// Posterior predictive joint for one observation using explicit eps (d x S).
inline JointPrediction predict_joint(const Eigen::VectorXd& x, const ModelParams& params,
                                     const Eigen::MatrixXd& eps) {
  require(x.size() == params.input_dim(), ErrorCode::DimensionMismatch, "x length");
  return summarize_cells(predict_cells(x, params, eps).front(), static_cast<int>(eps.cols()));
}

inline JointPrediction predict_joint(const Eigen::VectorXd& x, const ModelParams& params, int samples,
                                     RandomStream& rng) {
  require(samples >= 1, ErrorCode::InvalidArgument, "need at least one Monte Carlo draw");
  return predict_joint(x, params, draw_eps(params.latent_dim(), samples, rng));
}

inline Eigen::MatrixXd columns_of(const Dataset& data) { return data.X.transpose(); }

inline std::vector<JointPrediction> predict_dataset(const Dataset& data, const ModelParams& params,
                                                    int samples, std::uint64_t seed) {
  require(samples >= 1, ErrorCode::InvalidArgument, "need at least one Monte Carlo draw");
  require(data.num_features() == params.input_dim(), ErrorCode::DimensionMismatch,
          "dataset has " + std::to_string(data.num_features()) + " features, model expects " +
              std::to_string(params.input_dim()));
  const auto cells = predict_cells(columns_of(data), params, prediction_eps(params.latent_dim(), samples, seed));
  std::vector<JointPrediction> out;
  out.reserve(cells.size());
  for (const auto& c : cells) out.push_back(summarize_cells(c, samples));
  return out;
}

// ---------------------------------------------------------------------------
// Region table

inline constexpr std::array<const char*, 10> kRegionQuantities = {
    "p11", "p10", "p01", "p00", "p1", "p2", "p1_given_2", "p2_given_1", "p1_given_not2", "p2_given_not1"};

inline std::array<double, 10> quantities_of(const JointPrediction& jp) {
  return {jp.cells.p11, jp.cells.p10, jp.cells.p01, jp.cells.p00, jp.p1, jp.p2,
          jp.c1_given_2, jp.c2_given_1, jp.c1_given_not2, jp.c2_given_not1};
}

struct RegionRow {
  int region = 0;
  int n_obs = 0;
  std::array<double, 10> values{};  // order of kRegionQuantities
};

struct RegionTable {
  std::vector<RegionRow> rows;
  std::vector<int> empty_regions;  // regions in [0, L) without observations
};

/// Per-region means. Values are summed in sorted order so the table does
/// not depend on observation order.
inline RegionTable region_table(const Dataset& data, const std::vector<JointPrediction>& preds) {
  require(static_cast<int>(preds.size()) == data.size(), ErrorCode::DimensionMismatch,
          "prediction count vs dataset rows");
  std::map<int, std::array<std::vector<double>, 10>> buckets;
  for (int i = 0; i < data.size(); ++i) {
    auto& b = buckets[data.region[i]];
    const auto q = quantities_of(preds[i]);
    for (std::size_t k = 0; k < q.size(); ++k) b[k].push_back(q[k]);
  }
  RegionTable table;
  for (auto& [region, b] : buckets) {
    RegionRow row;
    row.region = region;
    row.n_obs = static_cast<int>(b[0].size());
    for (std::size_t k = 0; k < b.size(); ++k) {
      std::sort(b[k].begin(), b[k].end());
      double s = 0.0;
      for (double v : b[k]) s += v;
      row.values[k] = s / row.n_obs;
    }
    table.rows.push_back(row);
  }
  for (int j = 0; j < data.num_regions; ++j) {
    if (!buckets.count(j)) table.empty_regions.push_back(j);
  }
  return table;
}

inline RegionTable region_table(const Dataset& data, const ModelParams& params, int samples,
                                std::uint64_t seed) {
  return region_table(data, predict_dataset(data, params, samples, seed));
}

inline void write_region_table_csv(std::ostream& out, const RegionTable& table) {
  out << "region_id,n_obs";
  for (const char* q : kRegionQuantities) out << "," << q;
  out << "\n";
  for (const auto& r : table.rows) {
    out << r.region << "," << r.n_obs;
    for (double v : r.values) out << "," << format_double(v);
    out << "\n";
  }
}

inline void write_observation_csv(std::ostream& out, const Dataset& data,
                                  const std::vector<JointPrediction>& preds) {
  out << "obs_id,region_id";
  for (const char* q : kRegionQuantities) out << "," << q;
  out << ",cell_sum\n";
  for (int i = 0; i < data.size(); ++i) {
    out << i << "," << data.region[i];
    for (double v : quantities_of(preds[i])) out << "," << format_double(v);
    out << "," << format_double(preds[i].cells.sum()) << "\n";
  }
}

// ---------------------------------------------------------------------------
// Average covariate effects

struct OutcomePattern {
  int y1 = 1;
  int y2 = 1;

  std::string label() const { return std::to_string(y1) + std::to_string(y2); }
};

inline constexpr std::array<OutcomePattern, 4> kAllPatterns = {
    OutcomePattern{1, 1}, OutcomePattern{1, 0}, OutcomePattern{0, 1}, OutcomePattern{0, 0}};

struct AceEstimate {
  std::string covariate;
  std::string contrast;  // "level vs reference"
  OutcomePattern pattern;
  double estimate = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  bool reject_null = false;
  bool degenerate = false;  // level == reference
};

struct AceOptions {
  int samples = kPredictionDraws;  // Monte Carlo draws per prediction
  int bootstrap = 1000;            // B
  std::uint64_t seed = 1;
};

/// Predicted cells for every row with `column` overwritten by `value`
/// (model units). All rows share one eps matrix.
inline std::vector<CellProbs> intervention_cells(const Dataset& data, const ModelParams& params,
                                                 int column, double value, const Eigen::MatrixXd& eps) {
  Eigen::MatrixXd x = columns_of(data);
  x.row(column).setConstant(value);
  return predict_cells(x, params, eps);
}

namespace detail {

/// Type-7 sample quantile of sorted values.
inline double quantile_sorted(const std::vector<double>& v, double q) {
  if (v.empty()) return 0.0;
  const double h = q * (static_cast<double>(v.size()) - 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

/// Bootstrap index draws (B x n), shared across contrasts and grid points.
inline std::vector<std::vector<int>> bootstrap_indices(int n, int replicates, std::uint64_t seed) {
  std::vector<std::vector<int>> out(replicates, std::vector<int>(n));
  for (int b = 0; b < replicates; ++b) {
    RandomStream rng = make_stream(seed, "bootstrap", static_cast<std::uint64_t>(b));
    std::uniform_int_distribution<int> pick(0, n - 1);
    for (int i = 0; i < n; ++i) out[b][i] = pick(rng);
  }
  return out;
}

/// Estimate and percentile interval of mean(a) - mean(b) over observations.
/// The interval is widened to include the point estimate if the percentile
/// bounds happen to exclude it.
inline AceEstimate ace_from_values(const std::vector<double>& a, const std::vector<double>& b,
                                   const std::vector<std::vector<int>>& boot) {
  AceEstimate e;
  std::vector<double> diff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
  e.estimate = mean_of(a) - mean_of(b);
  std::vector<double> reps;
  reps.reserve(boot.size());
  for (const auto& idx : boot) {
    double s = 0.0;
    for (int i : idx) s += diff[i];
    reps.push_back(s / static_cast<double>(idx.size()));
  }
  std::sort(reps.begin(), reps.end());
  e.lower = std::min(quantile_sorted(reps, 0.025), e.estimate);
  e.upper = std::max(quantile_sorted(reps, 0.975), e.estimate);
  e.reject_null = !(e.lower <= 0.0 && 0.0 <= e.upper);
  return e;
}

inline void check_ace_inputs(const Dataset& data, const ModelParams& params, int column,
                             const AceOptions& opt) {
  require(column >= 0 && column < data.num_features(), ErrorCode::UnknownColumn,
          "covariate index " + std::to_string(column) + " out of range");
  require(opt.bootstrap >= 100, ErrorCode::InvalidArgument,
          "bootstrap count B must be >= 100, got " + std::to_string(opt.bootstrap));
  require(opt.samples >= 1, ErrorCode::InvalidArgument, "need at least one Monte Carlo draw");
  require(data.size() >= 1, ErrorCode::InvalidArgument, "ACE needs observations");
  require(data.num_features() == params.input_dim(), ErrorCode::DimensionMismatch,
          "dataset width vs model input");
}

inline double model_units(const Dataset& data, int column, double raw) {
  return data.standardization ? data.standardization->to_model_units(raw, column) : raw;
}

inline void check_observed_level(const Dataset& data, int column, double raw, const char* role) {
  for (int i = 0; i < data.size(); ++i) {
    if (std::abs(data.raw_value(i, column) - raw) <= 1e-9 * std::max(1.0, std::abs(raw))) return;
  }
  throw Error(ErrorCode::InvalidArgument, std::string("invalid level: ") + role + " " + std::to_string(raw) +
                                              " never observed in column '" + data.feature_names[column] + "'");
}

inline std::string format_level(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

}  // namespace detail

/// ACE of setting covariate `column` to `level` versus `reference` (raw
/// units) for every requested outcome pattern. Patterns share predictions
/// and bootstrap draws, so the four-pattern ACEs sum to zero.
inline std::vector<AceEstimate> ace_categorical_patterns(const Dataset& data, const ModelParams& params,
                                                         int column, double level, double reference,
                                                         const std::vector<OutcomePattern>& patterns,
                                                         const AceOptions& opt) {
  detail::check_ace_inputs(data, params, column, opt);
  detail::check_observed_level(data, column, level, "level");
  detail::check_observed_level(data, column, reference, "reference");
  const Eigen::MatrixXd eps = prediction_eps(params.latent_dim(), opt.samples, opt.seed);
  const auto cells_level =
      intervention_cells(data, params, column, detail::model_units(data, column, level), eps);
  const auto cells_ref =
      intervention_cells(data, params, column, detail::model_units(data, column, reference), eps);
  const auto boot = detail::bootstrap_indices(data.size(), opt.bootstrap, opt.seed);
  std::vector<AceEstimate> out;
  for (const auto& pat : patterns) {
    std::vector<double> a(data.size()), b(data.size());
    for (int i = 0; i < data.size(); ++i) {
      a[i] = cells_level[i].select(pat.y1, pat.y2);
      b[i] = cells_ref[i].select(pat.y1, pat.y2);
    }
    AceEstimate e = detail::ace_from_values(a, b, boot);
    e.covariate = data.feature_names[column];
    e.contrast = detail::format_level(level) + " vs " + detail::format_level(reference);
    e.pattern = pat;
    e.degenerate = level == reference;
    out.push_back(e);
  }
  return out;
}

inline AceEstimate ace_categorical(const Dataset& data, const ModelParams& params, int column,
                                   double level, double reference, OutcomePattern pattern,
                                   const AceOptions& opt) {
  return ace_categorical_patterns(data, params, column, level, reference, {pattern}, opt).front();
}

inline AceEstimate ace_categorical(const Dataset& data, const ModelParams& params,
                                   const std::string& column, double level, double reference,
                                   OutcomePattern pattern, const AceOptions& opt) {
  return ace_categorical(data, params, data.column_index(column), level, reference, pattern, opt);
}

/// ACE curve against the smallest observed value of the covariate; one
/// estimate per grid value (raw units) with bootstrap draws shared across the grid.
inline std::vector<AceEstimate> ace_curve(const Dataset& data, const ModelParams& params, int column,
                                          const std::vector<double>& grid, OutcomePattern pattern,
                                          const AceOptions& opt) {
  detail::check_ace_inputs(data, params, column, opt);
  require(!grid.empty(), ErrorCode::InvalidArgument, "ACE grid is empty");
  double ref_raw = data.raw_value(0, column);
  for (int i = 1; i < data.size(); ++i) ref_raw = std::min(ref_raw, data.raw_value(i, column));
  const Eigen::MatrixXd eps = prediction_eps(params.latent_dim(), opt.samples, opt.seed);
  const double ref_model = data.standardization ? data.X.col(column).minCoeff()
                                                : detail::model_units(data, column, ref_raw);
  const auto cells_ref = intervention_cells(data, params, column, ref_model, eps);
  const auto boot = detail::bootstrap_indices(data.size(), opt.bootstrap, opt.seed);
  std::vector<double> b(data.size());
  for (int i = 0; i < data.size(); ++i) b[i] = cells_ref[i].select(pattern.y1, pattern.y2);
  std::vector<AceEstimate> out;
  for (double g : grid) {
    const bool is_ref = g == ref_raw;
    const double value = is_ref ? ref_model : detail::model_units(data, column, g);
    const auto cells = intervention_cells(data, params, column, value, eps);
    std::vector<double> a(data.size());
    for (int i = 0; i < data.size(); ++i) a[i] = cells[i].select(pattern.y1, pattern.y2);
    AceEstimate e = detail::ace_from_values(a, b, boot);
    e.covariate = data.feature_names[column];
    e.contrast = detail::format_level(g) + " vs " + detail::format_level(ref_raw);
    e.pattern = pattern;
    e.degenerate = is_ref;
    out.push_back(e);
  }
  return out;
}

inline void write_ace_csv(std::ostream& out, const std::vector<AceEstimate>& rows) {
  out << "covariate,contrast,pattern,ace,lo,hi,reject\n";
  for (const auto& r : rows) {
    out << r.covariate << "," << r.contrast << "," << r.pattern.label() << ","
        << format_double(r.estimate) << "," << format_double(r.lower) << "," << format_double(r.upper)
        << "," << (r.reject_null ? "true" : "false") << "\n";
  }
}

}  // namespace scvae
