#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "scvae/dataset.hpp"
#include "scvae/errors.hpp"
#include "scvae/gumbel_copula.hpp"
#include "scvae/random.hpp"
#include "scvae/spatial_graph.hpp"

namespace scvae {

enum class GraphKind { grid, random_geometric, edge_list };

struct SimConfig {
  int n = 5000;
  int d = 2;
  int p = 10;
  double rho = 0.9;
  double alpha_true = 2.0;
  double sigma2_z = 1.0;      // latent noise around the regional mean
  double sigma2_x = 1.0;      // covariate noise in X = P z + eps
  double noise_sigma2 = 0.0;  // post-hoc perturbation H = X + N(0, noise_sigma2)
  std::uint64_t seed = 1;
  GraphKind graph = GraphKind::grid;
  int grid_rows = 10;
  int grid_cols = 10;
  int rgg_regions = 126;
  double rgg_radius = 0.15;
  std::string adjacency_path;
  /// Shift added to the regional means of the first `hot_regions` regions
  /// of every latent dimension (0 disables).
  double hot_shift = 0.0;
  int hot_regions = 0;

  void validate() const {
    require(n >= 1 && d >= 1 && p >= 1, ErrorCode::InvalidArgument, "n, d, p must be positive");
    require(alpha_true >= 1.0, ErrorCode::InvalidArgument, "alpha_true must be >= 1");
    require(rho >= 0.0 && rho < 1.0, ErrorCode::InvalidArgument, "rho must lie in [0, 1)");
    require(sigma2_z > 0.0 && sigma2_x >= 0.0 && noise_sigma2 >= 0.0, ErrorCode::InvalidArgument,
            "variances must be nonnegative (sigma2_z positive)");
  }
};

inline SpatialGraph make_sim_graph(const SimConfig& cfg) {
  switch (cfg.graph) {
    case GraphKind::grid:
      return grid_graph(cfg.grid_rows, cfg.grid_cols, cfg.rho);
    case GraphKind::random_geometric: {
      RandomStream rng = make_stream(cfg.seed, "sim.graph");
      return random_geometric_graph(cfg.rgg_regions, cfg.rgg_radius, rng, cfg.rho);
    }
    case GraphKind::edge_list:
      return read_adjacency(cfg.adjacency_path, cfg.rho);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown graph kind");
}

struct GroundTruth {
  Eigen::MatrixXd mu;       // L x d regional means
  Eigen::MatrixXd z;        // n x d latent draws (after chaining)
  Eigen::MatrixXd eta;      // n x 2
  Eigen::MatrixXd pi;       // n x 2 logistic marginals
  Eigen::MatrixXd u;        // n x 2 copula draws
  Eigen::MatrixXd loading;  // p x d
  Eigen::VectorXd beta11, beta12, beta2;
  double alpha = 1.0;
};

struct SimResult {
  Dataset data;
  GroundTruth truth;
  SpatialGraph graph;
};

inline double logistic(double x) { return sigmoid(x); }

inline Eigen::VectorXd normal_vector(int size, RandomStream& rng) {
  Eigen::VectorXd v(size);
  for (int i = 0; i < size; ++i) v[i] = standard_normal(rng);
  return v;
}

/// Generative process: GMRF regional means, chained latent draws, linear
/// covariates, sin/linear logits, Gumbel-coupled binary outcomes. The
/// outcome coefficients depend on (seed, d) only and the loading on
/// (seed, p, d); neither depends on n.
inline SimResult generate(const SimConfig& cfg) {
  cfg.validate();
  SimResult out{{}, {}, make_sim_graph(cfg)};
  const SpatialGraph& graph = out.graph;
  const int L = graph.num_regions();
  require(cfg.n >= L, ErrorCode::InvalidArgument,
          "n=" + std::to_string(cfg.n) + " smaller than L=" + std::to_string(L));
  const int n = cfg.n, d = cfg.d, p = cfg.p;
  GroundTruth& t = out.truth;
  t.alpha = cfg.alpha_true;

  const PrecisionFactor factor = build_precision(graph);
  RandomStream mu_rng = make_stream(cfg.seed, "sim.mu");
  t.mu.resize(L, d);
  for (int k = 0; k < d; ++k) t.mu.col(k) = gmrf_sample(factor, 1.0, mu_rng);
  for (int j = 0; j < std::min(cfg.hot_regions, L); ++j) t.mu.row(j).array() += cfg.hot_shift;

  RandomStream coef_rng = make_stream(cfg.seed, "sim.coef");
  t.beta11 = normal_vector(d, coef_rng);
  t.beta12 = normal_vector(d, coef_rng);
  t.beta2 = normal_vector(d, coef_rng);
  RandomStream loading_rng = make_stream(cfg.seed, "sim.loading");
  t.loading.resize(p, d);
  for (int j = 0; j < d; ++j)
    for (int i = 0; i < p; ++i) t.loading(i, j) = standard_normal(loading_rng);

  // balanced region assignment: n_j = n / L up to one observation
  RandomStream region_rng = make_stream(cfg.seed, "sim.region");
  std::vector<int> region(n);
  for (int i = 0; i < n; ++i) region[i] = i % L;
  std::shuffle(region.begin(), region.end(), region_rng);

  RandomStream z_rng = make_stream(cfg.seed, "sim.z");
  RandomStream x_rng = make_stream(cfg.seed, "sim.x");
  RandomStream u_rng = make_stream(cfg.seed, "sim.copula");
  RandomStream h_rng = make_stream(cfg.seed, "sim.perturb");
  const double sz = std::sqrt(cfg.sigma2_z), sx = std::sqrt(cfg.sigma2_x);
  const double sh = std::sqrt(cfg.noise_sigma2);

  Dataset& data = out.data;
  data.X.resize(n, p);
  data.Y.resize(n, 2);
  data.region = region;
  data.num_regions = L;
  for (int j = 0; j < p; ++j) data.feature_names.push_back("x" + std::to_string(j + 1));
  t.z.resize(n, d);
  t.eta.resize(n, 2);
  t.pi.resize(n, 2);
  t.u.resize(n, 2);

  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd z(d);
    for (int k = 0; k < d; ++k) z[k] = t.mu(region[i], k) + sz * standard_normal(z_rng);
    for (int k = 1; k < d; ++k) z[k] += z[k - 1];
    Eigen::VectorXd x = t.loading * z;
    for (int j = 0; j < p; ++j) x[j] += sx * standard_normal(x_rng);
    const double eta1 = z.dot(t.beta11) + z.array().sin().matrix().dot(t.beta12);
    const double eta2 = z.dot(t.beta2);
    const double pi1 = logistic(eta1), pi2 = logistic(eta2);
    const auto [u1, u2] = sample_pair(cfg.alpha_true, u_rng);
    if (sh > 0.0) {
      for (int j = 0; j < p; ++j) x[j] += sh * standard_normal(h_rng);
    }
    data.X.row(i) = x.transpose();
    data.Y(i, 0) = u1 <= pi1 ? 1 : 0;
    data.Y(i, 1) = u2 <= pi2 ? 1 : 0;
    t.z.row(i) = z.transpose();
    t.eta(i, 0) = eta1;
    t.eta(i, 1) = eta2;
    t.pi(i, 0) = pi1;
    t.pi(i, 1) = pi2;
    t.u(i, 0) = u1;
    t.u(i, 1) = u2;
  }
  return out;
}

struct InjectedEffect {
  Dataset data;        // original columns plus the binary column "injected"
  GroundTruth truth;   // eta / pi updated with the shift
  int column = 0;
  /// Exact ACE of B = 1 vs B = 0 for patterns 11, 10, 01, 00 under the
  /// generating copula, averaged over observations.
  std::array<double, 4> true_ace{};
};

/// Appends B ~ Bernoulli(0.5) and regenerates outcomes with eta_l += delta * B,
/// reusing the stored copula draws so delta = 0 reproduces Y exactly.
inline InjectedEffect inject_known_effect(const Dataset& data, const GroundTruth& truth, double delta,
                                          RandomStream& rng) {
  require(truth.u.rows() == data.size(), ErrorCode::DimensionMismatch, "truth rows vs dataset");
  InjectedEffect out;
  Dataset raw = data;
  remove_standardization(raw);
  const int n = raw.size(), p = raw.num_features();
  out.data = raw;
  out.data.X.conservativeResize(n, p + 1);
  out.data.feature_names.push_back("injected");
  out.column = p;
  out.truth = truth;
  std::bernoulli_distribution coin(0.5);
  std::array<double, 4> ace{};
  for (int i = 0; i < n; ++i) {
    const int b = coin(rng) ? 1 : 0;
    out.data.X(i, p) = b;
    const double e1 = truth.eta(i, 0), e2 = truth.eta(i, 1);
    const double pi1 = logistic(e1 + delta * b), pi2 = logistic(e2 + delta * b);
    out.truth.eta(i, 0) = e1 + delta * b;
    out.truth.eta(i, 1) = e2 + delta * b;
    out.truth.pi(i, 0) = pi1;
    out.truth.pi(i, 1) = pi2;
    out.data.Y(i, 0) = truth.u(i, 0) <= pi1 ? 1 : 0;
    out.data.Y(i, 1) = truth.u(i, 1) <= pi2 ? 1 : 0;
    const CellProbs on = cell_probs(logistic(e1 + delta), logistic(e2 + delta), truth.alpha);
    const CellProbs off = cell_probs(logistic(e1), logistic(e2), truth.alpha);
    ace[0] += on.p11 - off.p11;
    ace[1] += on.p10 - off.p10;
    ace[2] += on.p01 - off.p01;
    ace[3] += on.p00 - off.p00;
  }
  for (auto& a : ace) a /= n;
  out.true_ace = ace;
  return out;
}

inline void write_ground_truth_csv(std::ostream& out, const Dataset& data, const GroundTruth& t) {
  out << "obs_id,region";
  for (Eigen::Index k = 0; k < t.z.cols(); ++k) out << ",z_" << (k + 1);
  out << ",pi1,pi2,eta1,eta2\n";
  for (int i = 0; i < data.size(); ++i) {
    out << i << "," << data.region[i];
    for (Eigen::Index k = 0; k < t.z.cols(); ++k) out << "," << format_double(t.z(i, k));
    out << "," << format_double(t.pi(i, 0)) << "," << format_double(t.pi(i, 1)) << ","
        << format_double(t.eta(i, 0)) << "," << format_double(t.eta(i, 1)) << "\n";
  }
}

}  // namespace scvae
