#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "scvae/dataset.hpp"
#include "scvae/errors.hpp"
#include "scvae/grad_engine.hpp"
#include "scvae/gumbel_copula.hpp"
#include "scvae/random.hpp"
#include "scvae/spatial_graph.hpp"

namespace scvae {

inline constexpr double kTauMin = 1e-4;
inline constexpr double kTauMax = 1e4;

struct ModelConfig {
  int p = 0;  // covariate dimension
  int d = 5;  // latent dimension
  std::vector<int> encoder_hidden{60, 30, 20, 10};
  std::vector<int> decoder_hidden{10, 20, 30, 60};
  std::vector<int> predictor_hidden{10, 5, 3};
  double recon_weight = 1.0;  // lambda, fixed per run
  double tau_init = 1.0;
  double alpha_init = 1.5;
  double prior_z_variance = 1.0;
  /// false: outcomes independent given z (alpha pinned at exactly 1).
  bool copula = true;

  void validate() const {
    require(p >= 1 && d >= 1, ErrorCode::InvalidArgument, "p and d must be positive");
    require(recon_weight >= 0.0, ErrorCode::InvalidArgument, "recon_weight must be >= 0");
    require(tau_init > 0.0, ErrorCode::InvalidArgument, "tau_init must be positive");
    require(alpha_init >= 1.0, ErrorCode::InvalidArgument, "alpha_init must be >= 1");
    require(prior_z_variance > 0.0, ErrorCode::InvalidArgument, "prior_z_variance must be positive");
    for (int h : encoder_hidden) require(h >= 1, ErrorCode::InvalidArgument, "encoder width");
    for (int h : decoder_hidden) require(h >= 1, ErrorCode::InvalidArgument, "decoder width");
    for (int h : predictor_hidden) require(h >= 1, ErrorCode::InvalidArgument, "predictor width");
  }
};

/// All trainable state plus the fixed recon weight.
struct ModelParams {
  Mlp encoder;  // ReLU trunk, x -> h
  DenseLayer mean_head;
  DenseLayer logvar_head;
  Mlp decoder;    // z -> xhat
  Mlp predictor;  // z -> (eta1, eta2)
  Eigen::MatrixXd mu_table;  // L x d
  double raw_tau = 0.0;
  double raw_alpha = 0.0;
  double recon_weight = 1.0;
  bool copula = true;
  std::vector<char> seen_regions;  // 1 if the region had training data

  double tau() const { return std::exp(std::clamp(raw_tau, std::log(kTauMin), std::log(kTauMax))); }
  double dtau_draw() const {
    return (raw_tau <= std::log(kTauMin) || raw_tau >= std::log(kTauMax)) ? 0.0 : tau();
  }
  double alpha() const { return copula ? CopulaParam{raw_alpha}.alpha() : 1.0; }
  double dalpha_draw() const { return copula ? CopulaParam{raw_alpha}.dalpha_draw() : 0.0; }
  int latent_dim() const { return mean_head.out_dim(); }
  int input_dim() const { return encoder.in_dim(); }
  int num_regions() const { return static_cast<int>(mu_table.rows()); }

  template <class Visitor>
  void visit(Visitor&& v) {
    encoder.visit("encoder", v);
    v(std::string("encoder.mean.W"), mean_head.weights.data(), mean_head.weights.size());
    v(std::string("encoder.mean.b"), mean_head.biases.data(), mean_head.biases.size());
    v(std::string("encoder.logvar.W"), logvar_head.weights.data(), logvar_head.weights.size());
    v(std::string("encoder.logvar.b"), logvar_head.biases.data(), logvar_head.biases.size());
    decoder.visit("decoder", v);
    predictor.visit("predictor", v);
    v(std::string("mu_table"), mu_table.data(), mu_table.size());
    v(std::string("raw_tau"), &raw_tau, Eigen::Index{1});
    v(std::string("raw_alpha"), &raw_alpha, Eigen::Index{1});
  }

  /// Same architecture, every tensor zero (gradient accumulator).
  ModelParams zeros_like() const {
    ModelParams z = *this;
    z.visit([](const std::string&, double* data, Eigen::Index n) {
      Eigen::Map<Eigen::VectorXd>(data, n).setZero();
    });
    return z;
  }
};

inline std::vector<int> chain_dims(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> dims{in};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  if (out > 0) dims.push_back(out);
  return dims;
}

/// Random-initialized parameters for an L-region graph.
inline ModelParams init_params(const ModelConfig& config, int num_regions, RandomStream& rng) {
  config.validate();
  ModelParams m;
  m.encoder = Mlp(chain_dims(config.p, config.encoder_hidden, 0), Activation::relu);
  const int trunk_out = m.encoder.out_dim();
  m.mean_head = DenseLayer(trunk_out, config.d);
  m.logvar_head = DenseLayer(trunk_out, config.d);
  m.decoder = Mlp(chain_dims(config.d, config.decoder_hidden, config.p), Activation::identity);
  m.predictor = Mlp(chain_dims(config.d, config.predictor_hidden, 2), Activation::identity);
  m.encoder.initialize(rng);
  m.mean_head.initialize(rng);
  m.logvar_head.initialize(rng);
  m.decoder.initialize(rng);
  m.predictor.initialize(rng);
  m.mu_table = Eigen::MatrixXd::Zero(num_regions, config.d);
  m.raw_tau = std::log(config.tau_init);
  m.copula = config.copula;
  m.raw_alpha = config.copula && config.alpha_init > 1.0
                    ? CopulaParam::from_alpha(config.alpha_init).raw
                    : CopulaParam::from_alpha(kAlphaMin + 1e-9).raw;
  m.recon_weight = config.recon_weight;
  m.seen_regions.assign(num_regions, 1);
  return m;
}

// ---------------------------------------------------------------------------
// Forward components. Batched versions take one observation per column.

struct EncoderOutput {
  Eigen::VectorXd beta;   // variational mean
  Eigen::VectorXd kappa;  // log-variance
};

struct EncoderBatch {
  Eigen::MatrixXd beta;   // d x B
  Eigen::MatrixXd kappa;  // d x B
  Eigen::MatrixXd trunk;  // h x B
  std::vector<LayerCache> caches;
};

inline EncoderBatch encode_batch(const Eigen::MatrixXd& x_cols, const ModelParams& params,
                                 bool keep_caches = false) {
  EncoderBatch out;
  out.trunk = params.encoder.forward(x_cols, keep_caches ? &out.caches : nullptr);
  out.beta = dense_forward(params.mean_head, out.trunk, Activation::identity);
  out.kappa = dense_forward(params.logvar_head, out.trunk, Activation::identity);
  return out;
}

inline EncoderOutput encode(const Eigen::VectorXd& x, const ModelParams& params) {
  auto b = encode_batch(x, params);
  return {b.beta.col(0), b.kappa.col(0)};
}

inline Eigen::VectorXd reparameterize(const EncoderOutput& out, const Eigen::VectorXd& eps) {
  require(eps.size() == out.beta.size(), ErrorCode::DimensionMismatch, "eps length");
  return out.beta.array() + (0.5 * out.kappa.array()).exp() * eps.array();
}

inline Eigen::MatrixXd reparameterize_batch(const EncoderBatch& out, const Eigen::MatrixXd& eps) {
  require(eps.rows() == out.beta.rows() && eps.cols() == out.beta.cols(),
          ErrorCode::DimensionMismatch, "eps shape");
  return out.beta.array() + (0.5 * out.kappa.array()).exp() * eps.array();
}

inline Eigen::VectorXd decode(const Eigen::VectorXd& z, const ModelParams& params) {
  return params.decoder.forward(z).col(0);
}

inline std::pair<double, double> predict_heads(const Eigen::VectorXd& z, const ModelParams& params) {
  Eigen::MatrixXd eta = params.predictor.forward(z);
  return {eta(0, 0), eta(1, 0)};
}

inline double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double standard_normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

/// Phi(eta), clamped to the copula's admissible range.
inline double probit_marginal(double eta) { return clamp_prob(standard_normal_cdf(eta)); }

/// KL( N(beta, diag(exp(kappa))) || N(mu_row, prior_var I) ).
inline double kl_z(const EncoderOutput& out, const Eigen::VectorXd& mu_row, double prior_var) {
  require(prior_var > 0.0, ErrorCode::InvalidArgument, "prior_var must be positive");
  require(mu_row.size() == out.beta.size(), ErrorCode::DimensionMismatch, "mu_row length");
  double kl = 0.0;
  for (Eigen::Index k = 0; k < out.beta.size(); ++k) {
    const double diff = out.beta[k] - mu_row[k];
    kl += 0.5 * std::log(prior_var) - 0.5 * out.kappa[k] +
          (std::exp(out.kappa[k]) + diff * diff) / (2.0 * prior_var) - 0.5;
  }
  return kl;
}

/// tau- and mu-dependent part of -log p(mu): sum_k [ tau/2 mu_k' Q mu_k - L/2 log tau ].
inline double mu_prior_penalty(const Eigen::MatrixXd& mu_table, const SpatialGraph& graph, double tau) {
  require(mu_table.rows() == graph.num_regions(), ErrorCode::DimensionMismatch,
          "mu_table rows vs graph L");
  require(tau > 0.0, ErrorCode::InvalidArgument, "tau must be positive");
  const double half_l = 0.5 * graph.num_regions();
  double total = 0.0;
  for (Eigen::Index k = 0; k < mu_table.cols(); ++k) {
    total += 0.5 * tau * quadratic_form(mu_table.col(k), graph) - half_l * std::log(tau);
  }
  return total;
}

// ---------------------------------------------------------------------------
// ELBO

/// Positive loss-like components of the negated ELBO.
struct ElboComponents {
  double nll_y = 0.0;  // -sum log p(y | z)
  double nll_x = 0.0;  // -sum log p(x | z), unweighted
  double kl_z = 0.0;   // sum of per-observation KL
  double kl_mu = 0.0;  // mu_prior_penalty
};

struct ElboResult {
  double loss = 0.0;
  ElboComponents parts;
};

/// Rows to use from a dataset; the trainer passes mini-batch indices.
struct Batch {
  const Dataset* data = nullptr;
  std::vector<int> rows;

  int size() const { return static_cast<int>(rows.size()); }
};

inline Batch full_batch(const Dataset& data) {
  Batch b{&data, {}};
  b.rows.resize(data.size());
  for (int i = 0; i < data.size(); ++i) b.rows[i] = i;
  return b;
}

/// loss = data_scale * (nll_y + lambda nll_x + kl_z) + kl_mu. One eps column
/// per observation (d x B). When `grads` is non-null it receives d loss / d params.
inline ElboResult elbo_batch(const Batch& batch, const ModelParams& params, const SpatialGraph& graph,
                             const Eigen::MatrixXd& eps, const ModelConfig& config,
                             ModelParams* grads = nullptr, double data_scale = 1.0) {
  const Dataset& data = *batch.data;
  const int nb = batch.size();
  const int d = params.latent_dim();
  const int p = params.input_dim();
  require(data.num_features() == p, ErrorCode::DimensionMismatch, "dataset width vs model input");
  require(eps.rows() == d && eps.cols() == nb, ErrorCode::DimensionMismatch, "eps shape");
  require(params.num_regions() == graph.num_regions(), ErrorCode::DimensionMismatch,
          "mu_table rows vs graph");
  const bool want_grad = grads != nullptr;
  const double lambda = params.recon_weight;
  const double prior_var = config.prior_z_variance;

  Eigen::MatrixXd x(p, nb);
  for (int i = 0; i < nb; ++i) {
    const int r = batch.rows[i];
    require(data.region[r] >= 0 && data.region[r] < params.num_regions(), ErrorCode::UnknownRegion,
            "region " + std::to_string(data.region[r]) + " not in mu_table");
    x.col(i) = data.X.row(r).transpose();
  }

  EncoderBatch enc = encode_batch(x, params, want_grad);
  Eigen::MatrixXd sd = (0.5 * enc.kappa.array()).exp();
  Eigen::MatrixXd z = enc.beta.array() + sd.array() * eps.array();

  std::vector<LayerCache> dec_cache, pred_cache;
  Eigen::MatrixXd xhat = params.decoder.forward(z, want_grad ? &dec_cache : nullptr);
  Eigen::MatrixXd eta = params.predictor.forward(z, want_grad ? &pred_cache : nullptr);

  ElboResult res;
  const double alpha = params.alpha();
  Eigen::MatrixXd d_eta(2, nb);
  double d_alpha = 0.0;
  for (int i = 0; i < nb; ++i) {
    const int r = batch.rows[i];
    const double phi1 = standard_normal_cdf(eta(0, i));
    const double phi2 = standard_normal_cdf(eta(1, i));
    const double p1 = clamp_prob(phi1);
    const double p2 = clamp_prob(phi2);
    const CellLogGrad g = cell_log_grad(data.Y(r, 0), data.Y(r, 1), p1, p2, alpha);
    res.parts.nll_y -= g.log_prob;
    if (want_grad) {
      d_eta(0, i) = (p1 == phi1) ? -g.dp1 * standard_normal_pdf(eta(0, i)) : 0.0;
      d_eta(1, i) = (p2 == phi2) ? -g.dp2 * standard_normal_pdf(eta(1, i)) : 0.0;
      d_alpha -= g.dalpha;
    }
  }

  Eigen::MatrixXd resid = x - xhat;
  res.parts.nll_x = 0.5 * resid.squaredNorm() + 0.5 * p * nb * std::log(2.0 * std::numbers::pi);

  Eigen::MatrixXd mu_cols(d, nb);
  for (int i = 0; i < nb; ++i) mu_cols.col(i) = params.mu_table.row(data.region[batch.rows[i]]).transpose();
  Eigen::MatrixXd diff = enc.beta - mu_cols;
  Eigen::MatrixXd var_q = enc.kappa.array().exp();
  res.parts.kl_z = (0.5 * std::log(prior_var) - 0.5 * enc.kappa.array() +
                    (var_q.array() + diff.array().square()) / (2.0 * prior_var) - 0.5)
                       .sum();

  const double tau = params.tau();
  res.parts.kl_mu = mu_prior_penalty(params.mu_table, graph, tau);
  res.loss = data_scale * (res.parts.nll_y + lambda * res.parts.nll_x + res.parts.kl_z) + res.parts.kl_mu;

  auto check = [](double v, const char* what) {
    require(std::isfinite(v), ErrorCode::NonFiniteLoss, std::string("non-finite ") + what);
  };
  check(res.parts.nll_y, "nll_y");
  check(res.parts.nll_x, "nll_x");
  check(res.parts.kl_z, "kl_z");
  check(res.parts.kl_mu, "kl_mu");

  if (!want_grad) return res;

  ModelParams& g = *grads;
  // zero the accumulator in place
  g.visit([](const std::string&, double* data_ptr, Eigen::Index n) {
    Eigen::Map<Eigen::VectorXd>(data_ptr, n).setZero();
  });

  Eigen::MatrixXd dz = params.predictor.backward(pred_cache, data_scale * d_eta, g.predictor);
  dz += params.decoder.backward(dec_cache, (-data_scale * lambda) * resid, g.decoder);

  Eigen::MatrixXd d_beta = dz + (data_scale / prior_var) * diff;
  Eigen::MatrixXd d_kappa = (dz.array() * 0.5 * sd.array() * eps.array()) +
                            data_scale * (-0.5 + var_q.array() / (2.0 * prior_var));

  for (int i = 0; i < nb; ++i) {
    g.mu_table.row(data.region[batch.rows[i]]) -= (data_scale / prior_var) * diff.col(i).transpose();
  }
  for (Eigen::Index k = 0; k < params.mu_table.cols(); ++k) {
    g.mu_table.col(k) += tau * precision_times(params.mu_table.col(k), graph);
  }
  double quad_total = 0.0;
  for (Eigen::Index k = 0; k < params.mu_table.cols(); ++k) {
    quad_total += quadratic_form(params.mu_table.col(k), graph);
  }
  // d kl_mu / d tau * d tau / d raw
  const double dkl_dtau = 0.5 * quad_total - 0.5 * graph.num_regions() * d / tau;
  g.raw_tau = dkl_dtau * params.dtau_draw();
  g.raw_alpha = data_scale * d_alpha * params.dalpha_draw();

  g.mean_head.weights = d_beta * enc.trunk.transpose();
  g.mean_head.biases = d_beta.rowwise().sum();
  g.logvar_head.weights = d_kappa * enc.trunk.transpose();
  g.logvar_head.biases = d_kappa.rowwise().sum();
  Eigen::MatrixXd d_trunk = params.mean_head.weights.transpose() * d_beta +
                            params.logvar_head.weights.transpose() * d_kappa;
  params.encoder.backward(enc.caches, d_trunk, g.encoder);
  return res;
}

/// Standard-normal eps matrix (d x B) drawn column by column.
inline Eigen::MatrixXd draw_eps(int d, int count, RandomStream& rng) {
  Eigen::MatrixXd eps(d, count);
  for (int i = 0; i < count; ++i)
    for (int k = 0; k < d; ++k) eps(k, i) = standard_normal(rng);
  return eps;
}

/// mu_table with unseen regions replaced by the mean of their seen
/// neighbors' rows, or the mean over all seen regions if none.
inline Eigen::MatrixXd resolve_region_means(const ModelParams& params, const SpatialGraph& graph) {
  Eigen::MatrixXd out = params.mu_table;
  const int L = params.num_regions();
  Eigen::RowVectorXd global = Eigen::RowVectorXd::Zero(params.mu_table.cols());
  int seen = 0;
  for (int j = 0; j < L; ++j) {
    if (params.seen_regions[j]) {
      global += params.mu_table.row(j);
      ++seen;
    }
  }
  if (seen > 0) global /= seen;
  for (int j = 0; j < L; ++j) {
    if (params.seen_regions[j]) continue;
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(params.mu_table.cols());
    int count = 0;
    for (int nb : graph.neighbors(j)) {
      if (params.seen_regions[nb]) {
        acc += params.mu_table.row(nb);
        ++count;
      }
    }
    out.row(j) = count > 0 ? Eigen::RowVectorXd(acc / count) : global;
  }
  return out;
}

}  // namespace scvae
