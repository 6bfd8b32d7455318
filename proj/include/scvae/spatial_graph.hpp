#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "scvae/errors.hpp"
#include "scvae/random.hpp"

namespace scvae {

/// Undirected region adjacency with CAR precision Q(rho) = D - rho * A.
class SpatialGraph {
 public:
  using Edge = std::pair<int, int>;

  SpatialGraph() = default;

  /// Edges are normalized to (min, max); self-loops, duplicates and
  /// out-of-range endpoints are rejected.
  SpatialGraph(int num_regions, std::vector<Edge> edges, double rho = 0.9)
      : num_regions_(num_regions), rho_(rho) {
    require(num_regions >= 1, ErrorCode::InvalidArgument, "region count must be positive");
    require(rho >= 0.0 && rho < 1.0, ErrorCode::InvalidArgument,
            "rho must lie in [0, 1), got " + std::to_string(rho));
    std::set<Edge> seen;
    degrees_.assign(num_regions, 0);
    neighbors_.assign(num_regions, {});
    for (auto [a, b] : edges) {
      require(a >= 0 && b >= 0 && a < num_regions && b < num_regions, ErrorCode::InvalidArgument,
              "edge endpoint out of range: " + std::to_string(a) + "-" + std::to_string(b));
      require(a != b, ErrorCode::InvalidArgument, "self-loop at region " + std::to_string(a));
      Edge e{std::min(a, b), std::max(a, b)};
      require(seen.insert(e).second, ErrorCode::InvalidArgument,
              "duplicate edge " + std::to_string(e.first) + "-" + std::to_string(e.second));
      edges_.push_back(e);
      ++degrees_[a];
      ++degrees_[b];
      neighbors_[a].push_back(b);
      neighbors_[b].push_back(a);
    }
    for (auto& nb : neighbors_) std::sort(nb.begin(), nb.end());
  }

  int num_regions() const noexcept { return num_regions_; }
  double rho() const noexcept { return rho_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const std::vector<int>& degrees() const noexcept { return degrees_; }
  const std::vector<int>& neighbors(int region) const { return neighbors_.at(region); }

  SpatialGraph with_rho(double rho) const { return SpatialGraph(num_regions_, edges_, rho); }

  Eigen::MatrixXd dense_precision() const {
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(num_regions_, num_regions_);
    for (int j = 0; j < num_regions_; ++j) q(j, j) = degrees_[j];
    for (auto [a, b] : edges_) {
      q(a, b) -= rho_;
      q(b, a) -= rho_;
    }
    return q;
  }

 private:
  int num_regions_ = 0;
  double rho_ = 0.9;
  std::vector<Edge> edges_;
  std::vector<int> degrees_;
  std::vector<std::vector<int>> neighbors_;
};

/// Cholesky factor of Q with its cached log-determinant. Immutable once built.
struct PrecisionFactor {
  Eigen::MatrixXd lower;
  double log_det = 0.0;

  int size() const { return static_cast<int>(lower.rows()); }
  Eigen::MatrixXd reconstruct() const { return lower * lower.transpose(); }
};

inline PrecisionFactor build_precision(const SpatialGraph& graph) {
  require(graph.num_regions() >= 2, ErrorCode::InvalidArgument, "need at least two regions");
  for (int j = 0; j < graph.num_regions(); ++j) {
    require(graph.degrees()[j] >= 1, ErrorCode::IsolatedRegion,
            "region " + std::to_string(j) + " has no neighbors");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(graph.dense_precision());
  require(llt.info() == Eigen::Success, ErrorCode::NotPositiveDefinite,
          "Cholesky factorization of Q failed");
  PrecisionFactor f;
  f.lower = llt.matrixL();
  f.log_det = 2.0 * f.lower.diagonal().array().log().sum();
  return f;
}

/// mu' Q mu evaluated edgewise.
inline double quadratic_form(const Eigen::Ref<const Eigen::VectorXd>& mu, const SpatialGraph& graph) {
  require(mu.size() == graph.num_regions(), ErrorCode::DimensionMismatch,
          "vector length " + std::to_string(mu.size()) + " vs L=" +
              std::to_string(graph.num_regions()));
  double diag = 0.0;
  for (int j = 0; j < graph.num_regions(); ++j) diag += graph.degrees()[j] * mu[j] * mu[j];
  double cross = 0.0;
  for (auto [a, b] : graph.edges()) cross += mu[a] * mu[b];
  return diag - 2.0 * graph.rho() * cross;
}

/// Q * mu evaluated edgewise (gradient of the quadratic form is 2 Q mu).
inline Eigen::VectorXd precision_times(const Eigen::Ref<const Eigen::VectorXd>& mu,
                                       const SpatialGraph& graph) {
  require(mu.size() == graph.num_regions(), ErrorCode::DimensionMismatch, "precision_times");
  Eigen::VectorXd out(mu.size());
  for (int j = 0; j < graph.num_regions(); ++j) out[j] = graph.degrees()[j] * mu[j];
  for (auto [a, b] : graph.edges()) {
    out[a] -= graph.rho() * mu[b];
    out[b] -= graph.rho() * mu[a];
  }
  return out;
}

/// Log-density of N(0, (tau Q)^{-1}) at mu.
inline double gmrf_logpdf(const Eigen::Ref<const Eigen::VectorXd>& mu, const PrecisionFactor& factor,
                          double tau) {
  require(mu.size() == factor.size(), ErrorCode::DimensionMismatch, "gmrf_logpdf length");
  require(tau > 0.0, ErrorCode::InvalidArgument, "tau must be positive");
  const double n = static_cast<double>(mu.size());
  Eigen::VectorXd lt_mu = factor.lower.transpose() * mu;
  return 0.5 * n * std::log(tau) + 0.5 * factor.log_det -
         0.5 * n * std::log(2.0 * std::numbers::pi) - 0.5 * tau * lt_mu.squaredNorm();
}

/// Draw with covariance (tau Q)^{-1} from explicit standard-normal noise:
/// solves L' x = noise and scales by tau^{-1/2}.
inline Eigen::VectorXd gmrf_sample_from_noise(const PrecisionFactor& factor, double tau,
                                              const Eigen::Ref<const Eigen::VectorXd>& noise) {
  require(noise.size() == factor.size(), ErrorCode::DimensionMismatch, "noise length");
  require(tau > 0.0, ErrorCode::InvalidArgument, "tau must be positive");
  Eigen::VectorXd x = factor.lower.transpose().triangularView<Eigen::Upper>().solve(noise);
  return x / std::sqrt(tau);
}

inline Eigen::VectorXd gmrf_sample(const PrecisionFactor& factor, double tau, RandomStream& rng) {
  Eigen::VectorXd noise(factor.size());
  for (int i = 0; i < noise.size(); ++i) noise[i] = standard_normal(rng);
  return gmrf_sample_from_noise(factor, tau, noise);
}

// ---------------------------------------------------------------------------
// Graph construction and I/O

inline SpatialGraph grid_graph(int rows, int cols, double rho = 0.9) {
  std::vector<SpatialGraph::Edge> edges;
  auto id = [cols](int r, int c) { return r * cols + c; };
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (c + 1 < cols) edges.emplace_back(id(r, c), id(r, c + 1));
      if (r + 1 < rows) edges.emplace_back(id(r, c), id(r + 1, c));
    }
  }
  return SpatialGraph(rows * cols, std::move(edges), rho);
}

inline SpatialGraph path_graph(int n, double rho = 0.9) {
  std::vector<SpatialGraph::Edge> edges;
  for (int i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
  return SpatialGraph(n, std::move(edges), rho);
}

/// Random geometric graph on the unit square. Nodes left isolated by the
/// radius rule are joined to their nearest neighbor so the CAR prior is proper.
inline SpatialGraph random_geometric_graph(int n, double radius, RandomStream& rng, double rho = 0.9) {
  std::vector<double> xs(n), ys(n);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    xs[i] = unif(rng);
    ys[i] = unif(rng);
  }
  auto dist2 = [&](int a, int b) {
    return (xs[a] - xs[b]) * (xs[a] - xs[b]) + (ys[a] - ys[b]) * (ys[a] - ys[b]);
  };
  std::set<SpatialGraph::Edge> edges;
  std::vector<int> degree(n, 0);
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      if (dist2(a, b) <= radius * radius) {
        edges.emplace(a, b);
        ++degree[a];
        ++degree[b];
      }
    }
  }
  for (int a = 0; a < n; ++a) {
    if (degree[a] > 0 || n < 2) continue;
    int best = a == 0 ? 1 : 0;
    for (int b = 0; b < n; ++b) {
      if (b != a && dist2(a, b) < dist2(a, best)) best = b;
    }
    edges.emplace(std::min(a, best), std::max(a, best));
    ++degree[a];
    ++degree[best];
  }
  return SpatialGraph(n, {edges.begin(), edges.end()}, rho);
}

/// Edge-list reader: one "i j" pair per line, '#' comments, optional
/// `L=<int>` header; otherwise L = max index + 1.
inline SpatialGraph parse_adjacency(std::istream& in, double rho = 0.9) {
  std::vector<SpatialGraph::Edge> edges;
  int declared = -1;
  int max_index = -1;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::string body = line.substr(first);
    while (!body.empty() && (body.back() == '\r' || body.back() == ' ' || body.back() == '\t')) {
      body.pop_back();
    }
    if (body.rfind("L=", 0) == 0) {
      try {
        std::size_t used = 0;
        declared = std::stoi(body.substr(2), &used);
        require(used == body.size() - 2, ErrorCode::ParseError, "");
      } catch (const std::exception&) {
        throw Error(ErrorCode::ParseError, "adjacency line " + std::to_string(line_no) +
                                               ": bad header '" + body + "'");
      }
      continue;
    }
    std::istringstream fields(body);
    long long a = 0, b = 0;
    std::string extra;
    if (!(fields >> a >> b) || (fields >> extra)) {
      throw Error(ErrorCode::ParseError,
                  "adjacency line " + std::to_string(line_no) + ": expected two indices");
    }
    require(a >= 0 && b >= 0, ErrorCode::ParseError,
            "adjacency line " + std::to_string(line_no) + ": negative index");
    edges.emplace_back(static_cast<int>(a), static_cast<int>(b));
    max_index = std::max<int>(max_index, static_cast<int>(std::max(a, b)));
  }
  int regions = declared > 0 ? declared : max_index + 1;
  require(regions >= 1, ErrorCode::ParseError, "adjacency file declares no regions");
  return SpatialGraph(regions, std::move(edges), rho);
}

inline SpatialGraph read_adjacency(const std::string& path, double rho = 0.9) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open adjacency file " + path);
  return parse_adjacency(in, rho);
}

inline void write_adjacency(std::ostream& out, const SpatialGraph& graph) {
  out << "L=" << graph.num_regions() << "\n";
  for (auto [a, b] : graph.edges()) out << a << " " << b << "\n";
}

}  // namespace scvae
