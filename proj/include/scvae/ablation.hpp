#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "scvae/baselines.hpp"
#include "scvae/dataset.hpp"
#include "scvae/errors.hpp"
#include "scvae/inference.hpp"
#include "scvae/model.hpp"
#include "scvae/synthetic.hpp"
#include "scvae/trainer.hpp"

namespace scvae {

inline constexpr const char* kVariantCopulaVae = "vae_copula";
inline constexpr const char* kVariantIndependentVae = "vae_independent";
inline constexpr const char* kVariantShallowCopulaVae = "vae_copula_shallow";
inline constexpr const char* kVariantIndependentNn = "nn_independent";
inline constexpr const char* kVariantLogistic = "logistic";

inline const std::vector<std::string>& known_variants() {
  static const std::vector<std::string> v{kVariantCopulaVae, kVariantIndependentVae, kVariantShallowCopulaVae,
                                          kVariantIndependentNn, kVariantLogistic};
  return v;
}

/// Axes left empty take the base configuration's value; a grid with every
/// axis empty has no cells.
struct GridSpec {
  SimConfig sim;
  ModelConfig model;  // p is overwritten from sim.p
  TrainConfig train;
  std::vector<double> lambda;
  std::vector<int> n;
  std::vector<double> alpha;
  std::vector<double> noise_sigma2;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> variants{kVariantCopulaVae, kVariantIndependentVae, kVariantIndependentNn,
                                    kVariantLogistic};
  int jobs = 1;
  int prediction_samples = kBootstrapDraws;  // Monte Carlo draws for test marginals
};

struct GridCell {
  int cell_id = 0;
  double lambda = 1.0;
  int n = 0;
  double alpha = 1.0;
  double noise_sigma2 = 0.0;
};

inline std::vector<GridCell> grid_cells(const GridSpec& spec) {
  std::vector<GridCell> cells;
  if (spec.lambda.empty() && spec.n.empty() && spec.alpha.empty() && spec.noise_sigma2.empty() &&
      spec.seeds.empty()) {
    return cells;
  }
  const auto lambdas = spec.lambda.empty() ? std::vector<double>{spec.model.recon_weight} : spec.lambda;
  const auto ns = spec.n.empty() ? std::vector<int>{spec.sim.n} : spec.n;
  const auto alphas = spec.alpha.empty() ? std::vector<double>{spec.sim.alpha_true} : spec.alpha;
  const auto noises = spec.noise_sigma2.empty() ? std::vector<double>{spec.sim.noise_sigma2} : spec.noise_sigma2;
  int id = 0;
  for (double l : lambdas)
    for (int n : ns)
      for (double a : alphas)
        for (double s2 : noises) cells.push_back({id++, l, n, a, s2});
  return cells;
}

inline void write_cells_csv(std::ostream& out, const std::vector<GridCell>& cells) {
  out << "cell_id,lambda,n,alpha,noise_sigma2\n";
  for (const auto& c : cells) {
    out << c.cell_id << "," << format_double(c.lambda) << "," << c.n << "," << format_double(c.alpha) << ","
        << format_double(c.noise_sigma2) << "\n";
  }
}

namespace detail {

inline std::pair<double, double> test_aucs(const Dataset& test, const std::vector<double>& s1,
                                           const std::vector<double>& s2) {
  return {auc(s1, outcome_column(test, 0)), auc(s2, outcome_column(test, 1))};
}

/// Fits one variant on a prepared split and scores it on the test part.
inline ResultRow run_variant(const std::string& variant, const SplitResult& sp, const SpatialGraph& graph,
                             const ModelConfig& base_model, const TrainConfig& train, int samples) {
  ResultRow row;
  row.variant = variant;
  row.seed = train.seed;
  const auto t0 = std::chrono::steady_clock::now();
  if (variant == kVariantLogistic) {
    const LogisticFit f1 = fit_logistic(sp.train, 0), f2 = fit_logistic(sp.train, 1);
    std::tie(row.auc_y1, row.auc_y2) =
        test_aucs(sp.test, predict_logistic(f1, sp.test), predict_logistic(f2, sp.test));
  } else if (variant == kVariantIndependentNn) {
    const auto fr = fit_independent_nn(sp.train, base_model, train);
    const Eigen::MatrixXd probs = predict_independent_nn(fr.params, sp.test);
    std::vector<double> s1(probs.rows()), s2(probs.rows());
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
      s1[i] = probs(i, 0);
      s2[i] = probs(i, 1);
    }
    std::tie(row.auc_y1, row.auc_y2) = test_aucs(sp.test, s1, s2);
  } else {
    ModelConfig mc = base_model;
    if (variant == kVariantIndependentVae) mc.copula = false;
    else if (variant == kVariantCopulaVae) mc.copula = true;
    else if (variant == kVariantShallowCopulaVae) {
      mc.copula = true;
      mc.encoder_hidden.clear();
    } else {
      throw Error(ErrorCode::InvalidArgument, "unknown variant '" + variant + "'");
    }
    const auto fr = fit(sp.train, graph, mc, train);
    const auto preds = predict_dataset(sp.test, fr.params, samples, train.seed);
    std::vector<double> s1, s2;
    for (const auto& p : preds) {
      s1.push_back(p.p1);
      s2.push_back(p.p2);
    }
    std::tie(row.auc_y1, row.auc_y2) = test_aucs(sp.test, s1, s2);
    row.alpha_hat = fr.params.alpha();
    row.tau_hat = fr.params.tau();
  }
  row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return row;
}

}  // namespace detail

/// Rows ordered by cell, then seed, then variant. Per-cell failures are
/// recorded with `failed` set and do not stop the grid.
inline std::vector<ResultRow> run_ablation(const GridSpec& spec) {
  for (const auto& v : spec.variants) {
    bool ok = false;
    for (const auto& k : known_variants()) ok = ok || (k == v);
    require(ok, ErrorCode::InvalidArgument, "unknown variant '" + v + "'");
  }
  require(spec.jobs >= 1, ErrorCode::InvalidArgument, "jobs must be positive");
  const auto cells = grid_cells(spec);
  const auto seeds = spec.seeds.empty() ? std::vector<std::uint64_t>{spec.train.seed} : spec.seeds;
  const std::size_t nv = spec.variants.size();
  const std::size_t units = cells.size() * seeds.size();
  std::vector<ResultRow> rows(units * nv);

  auto run_unit = [&](std::size_t u) {
    const GridCell& cell = cells[u / seeds.size()];
    const std::uint64_t seed = seeds[u % seeds.size()];
    ResultRow* out = &rows[u * nv];
    for (std::size_t v = 0; v < nv; ++v) {
      out[v].cell_id = cell.cell_id;
      out[v].variant = spec.variants[v];
      out[v].seed = seed;
    }
    SimConfig sc = spec.sim;
    sc.n = cell.n;
    sc.alpha_true = cell.alpha;
    sc.noise_sigma2 = cell.noise_sigma2;
    sc.seed = seed;
    TrainConfig tc = spec.train;
    tc.seed = seed;
    ModelConfig mc = spec.model;
    mc.p = sc.p;
    mc.recon_weight = cell.lambda;
    std::optional<SimResult> sim;
    std::optional<SplitResult> sp;
    try {
      sim = generate(sc);
      sp = split(sim->data, tc.train_fraction, seed, tc.holdout_regions);
    } catch (const std::exception& e) {
      for (std::size_t v = 0; v < nv; ++v) {
        out[v].failed = true;
        out[v].error = e.what();
      }
      return;
    }
    for (std::size_t v = 0; v < nv; ++v) {
      try {
        ResultRow r = detail::run_variant(spec.variants[v], *sp, sim->graph, mc, tc, spec.prediction_samples);
        r.cell_id = cell.cell_id;
        out[v] = r;
      } catch (const std::exception& e) {
        out[v].failed = true;
        out[v].error = e.what();
      }
    }
  };

  const int workers = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(spec.jobs), units));
  if (workers <= 1) {
    for (std::size_t u = 0; u < units; ++u) run_unit(u);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t u = next++; u < units; u = next++) run_unit(u);
      });
    }
    for (auto& t : pool) t.join();
  }
  return rows;
}

}  // namespace scvae
