#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <vector>

#include "scvae/dataset.hpp"
#include "scvae/grad_engine.hpp"
#include "scvae/model.hpp"
#include "scvae/random.hpp"
#include "scvae/spatial_graph.hpp"

namespace scvae {

struct TrainConfig {
  int batch_size = 256;
  int max_epochs = 300;
  int patience = 20;
  double validation_fraction = 0.1;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
  double train_fraction = 0.8;
  int holdout_regions = -1;  // -1: 5% of L, at least one

  void validate() const {
    require(batch_size >= 1, ErrorCode::InvalidArgument, "batch_size must be positive");
    require(max_epochs >= 0, ErrorCode::InvalidArgument, "max_epochs must be >= 0");
    require(patience >= 1, ErrorCode::InvalidArgument, "patience must be positive");
    require(validation_fraction > 0.0 && validation_fraction < 1.0, ErrorCode::InvalidArgument,
            "validation_fraction must lie in (0, 1)");
    require(learning_rate > 0.0, ErrorCode::InvalidArgument, "learning_rate must be positive");
    require(train_fraction > 0.0 && train_fraction < 1.0, ErrorCode::InvalidArgument,
            "train_fraction must lie in (0, 1)");
  }
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double nll_y = 0.0;
  double nll_x = 0.0;
  double kl_z = 0.0;
  double kl_mu = 0.0;
  double tau = 0.0;
  double alpha = 0.0;
  double val_loss = 0.0;
};

using History = std::vector<EpochRecord>;

inline void write_history_csv(std::ostream& out, const History& history) {
  out << "epoch,loss,recon_y,recon_x,kl_z,kl_mu,tau,alpha\n";
  for (const auto& r : history) {
    out << r.epoch << "," << format_double(r.loss) << "," << format_double(r.nll_y) << ","
        << format_double(r.nll_x) << "," << format_double(r.kl_z) << "," << format_double(r.kl_mu)
        << "," << format_double(r.tau) << "," << format_double(r.alpha) << "\n";
  }
}

template <class Params>
struct FitResult {
  Params params;
  History history;
  int best_epoch = 0;  // 0: initial parameters were never beaten
  double best_val_loss = std::numeric_limits<double>::infinity();
  double initial_val_loss = 0.0;
};

/// Validation slice of the training rows; the remainder is used for gradient steps.
struct ValidationSplit {
  std::vector<int> fit_rows;
  std::vector<int> val_rows;
};

inline ValidationSplit validation_split(int n, double fraction, std::uint64_t seed) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  RandomStream rng = make_stream(seed, "validation");
  std::shuffle(order.begin(), order.end(), rng);
  int n_val = static_cast<int>(std::lround(fraction * n));
  n_val = std::clamp(n_val, n >= 2 ? 1 : 0, std::max(n - 1, 0));
  ValidationSplit s;
  s.val_rows.assign(order.begin(), order.begin() + n_val);
  s.fit_rows.assign(order.begin() + n_val, order.end());
  std::sort(s.val_rows.begin(), s.val_rows.end());
  std::sort(s.fit_rows.begin(), s.fit_rows.end());
  return s;
}

/// Shared mini-batch loop with early stopping on a validation objective.
/// `step(params, grads, rows, rng)` fills grads and returns an EpochRecord
/// of unscaled batch components; `validate(params)` returns the criterion;
/// `annotate(params, record)` fills parameter summaries after each epoch.
template <class Params, class StepFn, class ValFn, class AnnotateFn>
FitResult<Params> run_epochs(Params params, const std::vector<int>& fit_rows,
                             const TrainConfig& cfg, StepFn&& step, ValFn&& validate,
                             AnnotateFn&& annotate) {
  FitResult<Params> out;
  out.initial_val_loss = validate(params);
  out.best_val_loss = out.initial_val_loss;
  out.params = params;
  if (cfg.max_epochs == 0 || fit_rows.empty()) return out;

  AdamState adam;
  adam.config.learning_rate = cfg.learning_rate;
  Params grads = params.zeros_like();
  std::vector<int> order = fit_rows;
  int since_best = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    RandomStream shuffle_rng = make_stream(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch));
    RandomStream eps_rng = make_stream(cfg.seed, "eps", static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochRecord rec;
    rec.epoch = epoch;
    std::vector<int> rows;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      rows.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                  order.begin() + static_cast<std::ptrdiff_t>(stop));
      const EpochRecord part = step(params, grads, rows, eps_rng);
      rec.nll_y += part.nll_y;
      rec.nll_x += part.nll_x;
      rec.kl_z += part.kl_z;
      adam_update(params, grads, adam);
    }
    annotate(params, rec);
    rec.val_loss = validate(params);
    require(std::isfinite(rec.val_loss), ErrorCode::NonFiniteLoss,
            "validation loss at epoch " + std::to_string(epoch));
    if (out.initial_val_loss > 0.0 && rec.val_loss > 10.0 * out.initial_val_loss) {
      throw Error(ErrorCode::Diverged, "validation loss " + std::to_string(rec.val_loss) +
                                           " exceeds 10x initial " +
                                           std::to_string(out.initial_val_loss));
    }
    out.history.push_back(rec);
    if (rec.val_loss < out.best_val_loss) {
      out.best_val_loss = rec.val_loss;
      out.best_epoch = epoch;
      out.params = params;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return out;
}

/// Fits the spatial copula VAE on `train` (expected standardized).
inline FitResult<ModelParams> fit(const Dataset& train, const SpatialGraph& graph,
                                  const ModelConfig& model_config, const TrainConfig& cfg) {
  cfg.validate();
  model_config.validate();
  require(train.num_features() == model_config.p, ErrorCode::DimensionMismatch,
          "dataset has " + std::to_string(train.num_features()) + " features, config p=" +
              std::to_string(model_config.p));
  require(train.num_regions <= graph.num_regions(), ErrorCode::DimensionMismatch,
          "dataset regions exceed graph L");
  train.validate();

  RandomStream init_rng = make_stream(cfg.seed, "init");
  ModelParams params = init_params(model_config, graph.num_regions(), init_rng);
  params.seen_regions.assign(graph.num_regions(), 0);

  const ValidationSplit vs = validation_split(train.size(), cfg.validation_fraction, cfg.seed);
  for (int r : vs.fit_rows) params.seen_regions[train.region[r]] = 1;

  const int d = model_config.d;
  const Batch val_batch{&train, vs.val_rows};
  RandomStream val_rng = make_stream(cfg.seed, "val_eps");
  const Eigen::MatrixXd val_eps = draw_eps(d, val_batch.size(), val_rng);
  const double n_fit = static_cast<double>(vs.fit_rows.size());
  const double val_scale = val_batch.size() > 0 ? n_fit / val_batch.size() : 0.0;

  auto validate = [&](const ModelParams& p) {
    if (val_batch.size() == 0) return 0.0;
    ModelParams view = p;
    view.mu_table = resolve_region_means(p, graph);
    return elbo_batch(val_batch, view, graph, val_eps, model_config, nullptr, val_scale).loss;
  };
  auto step = [&](ModelParams& p, ModelParams& g, const std::vector<int>& rows, RandomStream& eps_rng) {
    const Batch b{&train, rows};
    const Eigen::MatrixXd eps = draw_eps(d, b.size(), eps_rng);
    const ElboResult r = elbo_batch(b, p, graph, eps, model_config, &g, n_fit / b.size());
    EpochRecord rec;
    rec.nll_y = r.parts.nll_y;
    rec.nll_x = r.parts.nll_x;
    rec.kl_z = r.parts.kl_z;
    return rec;
  };
  auto annotate = [&](const ModelParams& p, EpochRecord& rec) {
    rec.kl_mu = mu_prior_penalty(p.mu_table, graph, p.tau());
    rec.loss = rec.nll_y + p.recon_weight * rec.nll_x + rec.kl_z + rec.kl_mu;
    rec.tau = p.tau();
    rec.alpha = p.alpha();
  };
  return run_epochs(std::move(params), vs.fit_rows, cfg, step, validate, annotate);
}

}  // namespace scvae
