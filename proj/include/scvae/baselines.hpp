#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "scvae/dataset.hpp"
#include "scvae/errors.hpp"
#include "scvae/grad_engine.hpp"
#include "scvae/gumbel_copula.hpp"
#include "scvae/model.hpp"
#include "scvae/trainer.hpp"

namespace scvae {

// ---------------------------------------------------------------------------
// AUC

/// Mann-Whitney AUC: (concordant + 0.5 ties) / (positives * negatives).
inline double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  require(scores.size() == labels.size(), ErrorCode::DimensionMismatch, "scores vs labels");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum_pos = 0.0;
  double n_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]]) {
        rank_sum_pos += avg_rank;
        n_pos += 1.0;
      }
    }
    i = j + 1;
  }
  const double n_neg = static_cast<double>(n) - n_pos;
  require(n_pos > 0 && n_neg > 0, ErrorCode::SingleClass, "AUC needs both classes");
  return (rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

inline std::vector<int> outcome_column(const Dataset& data, int l) {
  std::vector<int> y(data.size());
  for (int i = 0; i < data.size(); ++i) y[i] = data.Y(i, l);
  return y;
}

// ---------------------------------------------------------------------------
// Logistic regression

struct LogisticFit {
  double intercept = 0.0;
  Eigen::VectorXd coef;
  int iterations = 0;
  bool converged = false;
  bool separation = false;  // diverging coefficients or single-class outcome
};

struct LogisticConfig {
  int max_iterations = 500;
  double tolerance = 1e-6;       // max-norm of the mean log-likelihood gradient
  double separation_bound = 1e3;
};

inline double logistic_loglik(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                              const Eigen::VectorXd& w) {
  const Eigen::VectorXd eta = design * w;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    // log sigma(eta) = -softplus(-eta), log(1 - sigma(eta)) = -softplus(eta)
    ll -= y[i] > 0.5 ? softplus(-eta[i]) : softplus(eta[i]);
  }
  return ll;
}

/// Newton-Raphson with step halving on the Bernoulli-logit likelihood.
inline LogisticFit fit_logistic(const Dataset& train, int outcome, const LogisticConfig& cfg = {}) {
  const int n = train.size(), p = train.num_features();
  require(n >= 1, ErrorCode::InvalidArgument, "logistic fit needs data");
  Eigen::MatrixXd design(n, p + 1);
  design.col(0).setOnes();
  if (p > 0) design.rightCols(p) = train.X;
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = train.Y(i, outcome);
  LogisticFit fit;
  fit.coef = Eigen::VectorXd::Zero(p);
  const double ybar = y.mean();
  if (ybar <= 0.0 || ybar >= 1.0) {
    fit.separation = true;
    return fit;
  }
  Eigen::VectorXd w = Eigen::VectorXd::Zero(p + 1);
  w[0] = std::log(ybar / (1.0 - ybar));
  double ll = logistic_loglik(design, y, w);
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    fit.iterations = it;
    const Eigen::VectorXd eta = design * w;
    Eigen::VectorXd mu(n), weight(n);
    for (int i = 0; i < n; ++i) {
      mu[i] = sigmoid(eta[i]);
      weight[i] = mu[i] * (1.0 - mu[i]);
    }
    const Eigen::VectorXd grad = design.transpose() * (y - mu);
    if ((grad / n).cwiseAbs().maxCoeff() < cfg.tolerance) {
      fit.converged = true;
      break;
    }
    const Eigen::MatrixXd hess = design.transpose() * weight.asDiagonal() * design;
    Eigen::VectorXd step = hess.ldlt().solve(grad);
    if (!step.allFinite()) step = grad / n;
    double scale = 1.0;
    Eigen::VectorXd candidate = w + step;
    double cand_ll = logistic_loglik(design, y, candidate);
    while (cand_ll < ll && scale > 1e-10) {
      scale *= 0.5;
      candidate = w + scale * step;
      cand_ll = logistic_loglik(design, y, candidate);
    }
    w = candidate;
    ll = cand_ll;
    if (w.cwiseAbs().maxCoeff() > cfg.separation_bound) {
      fit.separation = true;
      break;
    }
  }
  // A fit that classifies every row correctly proves the classes are linearly
  // separable, so the optimum lies at infinity even if the gradient test passed.
  const Eigen::VectorXd eta = design * w;
  bool all_correct = true;
  for (int i = 0; i < n && all_correct; ++i) all_correct = (2.0 * y[i] - 1.0) * eta[i] > 0.0;
  if (all_correct) fit.separation = true;
  fit.intercept = w[0];
  fit.coef = w.tail(p);
  return fit;
}

inline std::vector<double> predict_logistic(const LogisticFit& fit, const Dataset& data) {
  std::vector<double> out(data.size());
  for (int i = 0; i < data.size(); ++i) {
    const double eta = fit.intercept + (fit.coef.size() ? data.X.row(i).dot(fit.coef) : 0.0);
    out[i] = sigmoid(eta);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Independent feedforward network, probit likelihood per outcome

struct NnParams {
  Mlp net;  // x -> (eta1, eta2)

  template <class Visitor>
  void visit(Visitor&& v) {
    net.visit("predictor", v);
  }
  NnParams zeros_like() const {
    NnParams z = *this;
    z.net.set_zero();
    return z;
  }
};

/// -sum_l log Bernoulli(y_l; Phi(eta_l)) over the rows; fills d loss / d eta when asked.
inline double independent_probit_nll(const Eigen::MatrixXd& eta, const Dataset& data,
                                     const std::vector<int>& rows, Eigen::MatrixXd* d_eta) {
  double nll = 0.0;
  if (d_eta) d_eta->resize(2, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int l = 0; l < 2; ++l) {
      const double e = eta(l, static_cast<Eigen::Index>(i));
      const double phi = standard_normal_cdf(e);
      const double pr = clamp_prob(phi);
      const int y = data.Y(rows[i], l);
      nll -= y ? std::log(pr) : std::log(1.0 - pr);
      if (d_eta) {
        const double dp = (pr == phi) ? standard_normal_pdf(e) : 0.0;
        (*d_eta)(l, static_cast<Eigen::Index>(i)) = y ? -dp / pr : dp / (1.0 - pr);
      }
    }
  }
  return nll;
}

inline Eigen::MatrixXd gather_columns(const Dataset& data, const std::vector<int>& rows) {
  Eigen::MatrixXd x(data.num_features(), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) x.col(static_cast<Eigen::Index>(i)) = data.X.row(rows[i]).transpose();
  return x;
}

/// Same predictor widths as the VAE head, applied to x directly.
inline FitResult<NnParams> fit_independent_nn(const Dataset& train, const ModelConfig& model_config,
                                              const TrainConfig& cfg) {
  cfg.validate();
  require(train.num_features() == model_config.p, ErrorCode::DimensionMismatch, "dataset width vs p");
  RandomStream init_rng = make_stream(cfg.seed, "init");
  NnParams params{Mlp(chain_dims(model_config.p, model_config.predictor_hidden, 2))};
  params.net.initialize(init_rng);
  const ValidationSplit vs = validation_split(train.size(), cfg.validation_fraction, cfg.seed);
  const Eigen::MatrixXd x_val = gather_columns(train, vs.val_rows);
  const double n_fit = static_cast<double>(vs.fit_rows.size());
  const double val_scale = vs.val_rows.empty() ? 0.0 : n_fit / vs.val_rows.size();

  auto validate = [&](const NnParams& p) {
    if (vs.val_rows.empty()) return 0.0;
    return val_scale * independent_probit_nll(p.net.forward(x_val), train, vs.val_rows, nullptr);
  };
  auto step = [&](NnParams& p, NnParams& g, const std::vector<int>& rows, RandomStream&) {
    std::vector<LayerCache> caches;
    const Eigen::MatrixXd eta = p.net.forward(gather_columns(train, rows), &caches);
    Eigen::MatrixXd d_eta;
    EpochRecord rec;
    rec.nll_y = independent_probit_nll(eta, train, rows, &d_eta);
    g.net.set_zero();
    p.net.backward(caches, (n_fit / rows.size()) * d_eta, g.net);
    return rec;
  };
  auto annotate = [](const NnParams&, EpochRecord& rec) {
    rec.loss = rec.nll_y;
    rec.alpha = 1.0;
  };
  return run_epochs(std::move(params), vs.fit_rows, cfg, step, validate, annotate);
}

inline Eigen::MatrixXd predict_independent_nn(const NnParams& params, const Dataset& data) {
  const Eigen::MatrixXd eta = params.net.forward(data.X.transpose());
  Eigen::MatrixXd probs(data.size(), 2);
  for (int i = 0; i < data.size(); ++i) {
    probs(i, 0) = standard_normal_cdf(eta(0, i));
    probs(i, 1) = standard_normal_cdf(eta(1, i));
  }
  return probs;
}

// ---------------------------------------------------------------------------
// Result tables and benchmark summary

struct ResultRow {
  int cell_id = 0;
  std::string variant;
  std::uint64_t seed = 0;
  double auc_y1 = std::nan("");
  double auc_y2 = std::nan("");
  double alpha_hat = std::nan("");
  double tau_hat = std::nan("");
  double seconds = 0.0;
  bool failed = false;
  std::string error;
};

inline std::string csv_number(double v) { return std::isnan(v) ? "nan" : format_double(v); }

inline void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << "cell_id,variant,seed,auc_y1,auc_y2,alpha_hat,tau_hat,seconds\n";
  for (const auto& r : rows) {
    out << r.cell_id << "," << r.variant << "," << r.seed << "," << csv_number(r.auc_y1) << ","
        << csv_number(r.auc_y2) << "," << csv_number(r.alpha_hat) << "," << csv_number(r.tau_hat)
        << "," << csv_number(r.seconds) << "\n";
  }
}

/// Two-sided exact sign test; ties are dropped.
inline double sign_test_p(int wins, int losses) {
  const int m = wins + losses;
  if (m == 0) return 1.0;
  const int k = std::min(wins, losses);
  double tail = 0.0;
  double binom = 1.0;  // C(m, 0)
  for (int i = 0; i <= k; ++i) {
    if (i > 0) binom = binom * (m - i + 1) / i;
    tail += binom;
  }
  return std::min(1.0, 2.0 * tail / std::pow(2.0, m));
}

namespace detail {

inline double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  if (v.empty()) return std::nan("");
  const double h = q * (static_cast<double>(v.size()) - 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace detail

inline double median(std::vector<double> v) { return detail::quantile(std::move(v), 0.5); }

struct SummaryRow {
  int cell_id = 0;
  std::string variant;
  int outcome = 1;
  double median_auc = 0.0;
  double q1_auc = 0.0;
  double q3_auc = 0.0;
  int n_seeds = 0;
  double sign_test_p = 1.0;  // against the reference variant; 1 for the reference itself
  int wins = 0;              // seeds where the reference beats this variant
  int losses = 0;
};

/// Per (cell, variant, outcome) AUC quartiles and paired sign tests of
/// `reference` against each other variant across seeds.
inline std::vector<SummaryRow> benchmark_report(const std::vector<ResultRow>& rows,
                                                const std::string& reference = "vae_copula") {
  std::map<std::pair<int, std::string>, std::map<std::uint64_t, const ResultRow*>> groups;
  for (const auto& r : rows) {
    if (!r.failed) groups[{r.cell_id, r.variant}][r.seed] = &r;
  }
  require(!groups.empty(), ErrorCode::InsufficientSeeds, "no successful runs to summarize");
  std::vector<SummaryRow> out;
  for (const auto& [key, by_seed] : groups) {
    require(!by_seed.empty(), ErrorCode::InsufficientSeeds, "variant without seeds");
    for (int outcome = 1; outcome <= 2; ++outcome) {
      std::vector<double> aucs;
      for (const auto& [seed, r] : by_seed) aucs.push_back(outcome == 1 ? r->auc_y1 : r->auc_y2);
      SummaryRow s;
      s.cell_id = key.first;
      s.variant = key.second;
      s.outcome = outcome;
      s.median_auc = median(aucs);
      s.q1_auc = detail::quantile(aucs, 0.25);
      s.q3_auc = detail::quantile(aucs, 0.75);
      s.n_seeds = static_cast<int>(aucs.size());
      auto ref_it = groups.find({key.first, reference});
      if (key.second != reference && ref_it != groups.end()) {
        for (const auto& [seed, r] : by_seed) {
          auto m = ref_it->second.find(seed);
          if (m == ref_it->second.end()) continue;
          const double a = outcome == 1 ? m->second->auc_y1 : m->second->auc_y2;
          const double b = outcome == 1 ? r->auc_y1 : r->auc_y2;
          if (a > b) ++s.wins;
          else if (a < b) ++s.losses;
        }
        s.sign_test_p = sign_test_p(s.wins, s.losses);
      }
      out.push_back(s);
    }
  }
  return out;
}

inline void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << "cell_id,variant,outcome,median_auc,q1_auc,q3_auc,n_seeds,ref_wins,ref_losses,sign_test_p\n";
  for (const auto& s : rows) {
    out << s.cell_id << "," << s.variant << "," << s.outcome << "," << csv_number(s.median_auc) << ","
        << csv_number(s.q1_auc) << "," << csv_number(s.q3_auc) << "," << s.n_seeds << "," << s.wins
        << "," << s.losses << "," << csv_number(s.sign_test_p) << "\n";
  }
}

}  // namespace scvae
