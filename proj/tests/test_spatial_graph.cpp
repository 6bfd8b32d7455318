#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "scvae/spatial_graph.hpp"
#include "test_support.hpp"

using namespace scvae;
using scvae::testing::random_connected_graph;

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

double morans_i(const Eigen::VectorXd& v, const SpatialGraph& g) {
  const double mean = v.mean();
  double num = 0.0, den = 0.0;
  for (auto [a, b] : g.edges()) num += 2.0 * (v[a] - mean) * (v[b] - mean);
  for (int i = 0; i < v.size(); ++i) den += (v[i] - mean) * (v[i] - mean);
  return (v.size() / (2.0 * g.edges().size())) * num / den;
}

}  // namespace

TEST(Precision, ThreeNodePathMatrix) {
  const auto g = path_graph(3, 0.9);
  Eigen::Matrix3d expected;
  expected << 1, -0.9, 0, -0.9, 2, -0.9, 0, -0.9, 1;
  EXPECT_LT((g.dense_precision() - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Precision, ZeroRhoIsDegreeDiagonal) {
  const auto g = grid_graph(3, 4, 0.0);
  const Eigen::MatrixXd q = g.dense_precision();
  for (int i = 0; i < g.num_regions(); ++i) {
    for (int j = 0; j < g.num_regions(); ++j) {
      EXPECT_EQ(q(i, j), i == j ? g.degrees()[i] : 0.0);
    }
  }
}

TEST(Precision, ThreeNodeLogDeterminant) {
  const auto f = build_precision(path_graph(3, 0.9));
  EXPECT_NEAR(f.log_det, std::log(0.38), 1e-12);
  EXPECT_NEAR(f.log_det, -0.96758402626170559, 1e-12);
}

TEST(Precision, FactorReconstructsQ) {
  RandomStream rng = make_stream(3, "test");
  for (int rep = 0; rep < 20; ++rep) {
    const auto g = random_connected_graph(2 + rep, rng, 0.95);
    const auto f = build_precision(g);
    const Eigen::MatrixXd q = g.dense_precision();
    EXPECT_LE((f.reconstruct() - q).norm(), 1e-10 * q.norm());
  }
}

TEST(Precision, IsolatedRegionRejected) {
  SpatialGraph g(3, {{0, 1}}, 0.5);
  try {
    build_precision(g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IsolatedRegion);
  }
}

TEST(Precision, SingleRegionRejected) { EXPECT_THROW(build_precision(SpatialGraph(1, {}, 0.5)), Error); }

TEST(Graph, RhoOutsideRangeRejected) {
  EXPECT_THROW(SpatialGraph(2, {{0, 1}}, 1.0), Error);
  EXPECT_THROW(SpatialGraph(2, {{0, 1}}, -0.1), Error);
}

TEST(Graph, BadEdgesRejected) {
  EXPECT_THROW(SpatialGraph(2, {{0, 0}}), Error);
  EXPECT_THROW(SpatialGraph(2, {{0, 2}}), Error);
  EXPECT_THROW(SpatialGraph(3, {{0, 1}, {1, 0}}), Error);
}

TEST(GmrfLogpdf, ZeroVectorThreeNodePath) {
  const auto f = build_precision(path_graph(3, 0.9));
  const Eigen::VectorXd mu = Eigen::VectorXd::Zero(3);
  // 0.5 log 0.38 - 1.5 log 2 pi
  EXPECT_NEAR(gmrf_logpdf(mu, f, 1.0), -3.2406076127448706, 1e-12);
}

TEST(GmrfLogpdf, UnitVectorSubtractsHalfQ00) {
  const auto f = build_precision(path_graph(3, 0.9));
  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(3);
  e1[0] = 1.0;
  EXPECT_NEAR(gmrf_logpdf(e1, f, 1.0), -3.7406076127448706, 1e-12);
}

TEST(GmrfLogpdf, TauScalingIdentity) {
  const auto g = grid_graph(3, 3, 0.9);
  const auto f = build_precision(g);
  RandomStream rng = make_stream(5, "test");
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::VectorXd mu(9);
    for (int i = 0; i < 9; ++i) mu[i] = standard_normal(rng);
    const double tau = 0.1 + 5.0 * open_uniform(rng);
    const double lhs = gmrf_logpdf(mu, f, tau) - gmrf_logpdf(mu, f, 1.0);
    const double rhs = 4.5 * std::log(tau) - 0.5 * (tau - 1.0) * quadratic_form(mu, g);
    EXPECT_NEAR(lhs, rhs, 1e-10);
  }
}

TEST(GmrfLogpdf, MatchesDenseClosedForm) {
  const auto g = grid_graph(2, 4, 0.7);
  const auto f = build_precision(g);
  Eigen::VectorXd mu = Eigen::VectorXd::LinSpaced(8, -1.0, 2.0);
  const Eigen::MatrixXd q = g.dense_precision();
  const double tau = 2.5;
  const double expected = 4.0 * std::log(tau) + 0.5 * std::log(q.determinant()) - 4.0 * kLog2Pi -
                          0.5 * tau * mu.dot(q * mu);
  EXPECT_NEAR(gmrf_logpdf(mu, f, tau), expected, 1e-10);
}

TEST(GmrfLogpdf, MaximizedAtZero) {
  const auto f = build_precision(grid_graph(4, 4, 0.9));
  RandomStream rng = make_stream(6, "test");
  const double at_zero = gmrf_logpdf(Eigen::VectorXd::Zero(16), f, 1.3);
  for (int rep = 0; rep < 1000; ++rep) {
    Eigen::VectorXd mu(16);
    for (int i = 0; i < 16; ++i) mu[i] = 0.5 * standard_normal(rng);
    EXPECT_GE(at_zero, gmrf_logpdf(mu, f, 1.3));
  }
}

TEST(GmrfLogpdf, LengthMismatch) {
  const auto f = build_precision(path_graph(3));
  try {
    gmrf_logpdf(Eigen::VectorXd::Zero(4), f, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(GmrfSample, FivePathCovariance) {
  const auto g = path_graph(5, 0.9);
  const auto f = build_precision(g);
  const Eigen::MatrixXd target = g.dense_precision().inverse();
  RandomStream rng = make_stream(11, "gmrf");
  const int draws = 50000;
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(5, 5);
  for (int i = 0; i < draws; ++i) {
    const Eigen::VectorXd x = gmrf_sample(f, 1.0, rng);
    acc += x * x.transpose();
  }
  acc /= draws;
  EXPECT_LE((acc - target).cwiseAbs().maxCoeff(), 0.05);
}

TEST(GmrfSample, TauFourHalvesTheDraw) {
  const auto f = build_precision(grid_graph(3, 3));
  RandomStream rng = make_stream(12, "test");
  Eigen::VectorXd noise(9);
  for (int i = 0; i < 9; ++i) noise[i] = standard_normal(rng);
  const Eigen::VectorXd a = gmrf_sample_from_noise(f, 1.0, noise);
  const Eigen::VectorXd b = gmrf_sample_from_noise(f, 4.0, noise);
  EXPECT_LT((b - 0.5 * a).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(GmrfSample, PositiveMoransIOnGrid) {
  const auto g = grid_graph(10, 10, 0.9);
  const auto f = build_precision(g);
  RandomStream rng = make_stream(13, "moran");
  std::vector<double> values;
  for (int rep = 0; rep < 100; ++rep) values.push_back(morans_i(gmrf_sample(f, 1.0, rng), g));
  std::nth_element(values.begin(), values.begin() + 50, values.end());
  EXPECT_GT(values[50], 0.2);
}

TEST(QuadraticForm, Examples) {
  const auto g = path_graph(3, 0.9);
  EXPECT_EQ(quadratic_form(Eigen::VectorXd::Zero(3), g), 0.0);
  EXPECT_NEAR(quadratic_form(Eigen::VectorXd::Ones(3), g), 0.4, 1e-15);
  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(3);
  e1[0] = 1.0;
  EXPECT_EQ(quadratic_form(e1, g), 1.0);
}

TEST(QuadraticForm, MatchesDenseOnRandomGraphs) {
  RandomStream rng = make_stream(14, "test");
  std::uniform_int_distribution<int> size(2, 50);
  for (int rep = 0; rep < 100; ++rep) {
    const auto g = random_connected_graph(size(rng), rng, 0.99 * open_uniform(rng));
    Eigen::VectorXd mu(g.num_regions());
    for (int i = 0; i < mu.size(); ++i) mu[i] = standard_normal(rng);
    const double dense = mu.dot(g.dense_precision() * mu);
    EXPECT_NEAR(quadratic_form(mu, g), dense, 1e-10 * std::max(1.0, std::abs(dense)));
    EXPECT_LT((precision_times(mu, g) - g.dense_precision() * mu).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(QuadraticForm, LengthMismatch) { EXPECT_THROW(quadratic_form(Eigen::VectorXd::Zero(2), path_graph(3)), Error); }

TEST(Precision, PositiveDefiniteForAllRho) {
  RandomStream rng = make_stream(15, "test");
  for (int rep = 0; rep < 40; ++rep) {
    const double rho = rep % 2 ? 0.999 : open_uniform(rng) * 0.999;
    const auto g = random_connected_graph(2 + rep % 19, rng, rho);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g.dense_precision());
    EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
  }
}

TEST(AdjacencyIo, ParsesHeaderCommentsAndEdges) {
  std::istringstream in("# comment\nL=4\n0 1\n  1 2\n\n2 3 \n");
  const auto g = parse_adjacency(in, 0.8);
  EXPECT_EQ(g.num_regions(), 4);
  EXPECT_EQ(g.edges().size(), 3u);
  EXPECT_DOUBLE_EQ(g.rho(), 0.8);
}

TEST(AdjacencyIo, InfersRegionCount) {
  std::istringstream in("0 1\n3 1\n2 3\n");
  EXPECT_EQ(parse_adjacency(in).num_regions(), 4);
}

TEST(AdjacencyIo, RejectsMalformedLines) {
  std::istringstream bad1("0 1 2\n"), bad2("0\n"), bad3("L=x\n0 1\n"), bad4("-1 2\n");
  EXPECT_THROW(parse_adjacency(bad1), Error);
  EXPECT_THROW(parse_adjacency(bad2), Error);
  EXPECT_THROW(parse_adjacency(bad3), Error);
  EXPECT_THROW(parse_adjacency(bad4), Error);
}

TEST(AdjacencyIo, RoundTrip) {
  const auto g = grid_graph(3, 5);
  std::stringstream buf;
  write_adjacency(buf, g);
  const auto h = parse_adjacency(buf);
  EXPECT_EQ(h.num_regions(), g.num_regions());
  EXPECT_EQ(h.edges(), g.edges());
}

TEST(RandomGeometric, NoIsolatedNodes) {
  RandomStream rng = make_stream(16, "rgg");
  const auto g = random_geometric_graph(126, 0.05, rng);
  for (int d : g.degrees()) EXPECT_GE(d, 1);
  EXPECT_NO_THROW(build_precision(g));
}
