#pragma once

#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "scvae/ablation.hpp"
#include "scvae/baselines.hpp"
#include "scvae/checkpoint.hpp"
#include "scvae/config.hpp"
#include "scvae/dataset.hpp"
#include "scvae/inference.hpp"
#include "scvae/manifest.hpp"
#include "scvae/synthetic.hpp"
#include "scvae/trainer.hpp"

namespace scvae {

namespace detail {

using Clock = std::chrono::steady_clock;

inline std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec, ErrorCode::IoError, "cannot create directory " + dir + ": " + ec.message());
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::IoError, "cannot write " + path);
  return out;
}

template <class T>
std::string list_string(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    if constexpr (std::is_floating_point_v<T>) s += format_double(v[i]);
    else if constexpr (std::is_same_v<T, std::string>) s += v[i];
    else s += std::to_string(v[i]);
  }
  return s;
}

inline std::string graph_name(GraphKind g) {
  switch (g) {
    case GraphKind::grid: return "grid";
    case GraphKind::random_geometric: return "random_geometric";
    case GraphKind::edge_list: return "edge_list";
  }
  return "unknown";
}

inline void describe(RunManifest& m, const SimConfig& c, const std::string& prefix = "") {
  m.set(prefix + "n", std::to_string(c.n));
  m.set(prefix + "d", std::to_string(c.d));
  m.set(prefix + "p", std::to_string(c.p));
  m.set(prefix + "rho", format_double(c.rho));
  m.set(prefix + "alpha", format_double(c.alpha_true));
  m.set(prefix + "sigma2_z", format_double(c.sigma2_z));
  m.set(prefix + "sigma2_x", format_double(c.sigma2_x));
  m.set(prefix + "noise_sigma2", format_double(c.noise_sigma2));
  m.set(prefix + "seed", std::to_string(c.seed));
  m.set(prefix + "graph", graph_name(c.graph));
  if (c.graph == GraphKind::grid) {
    m.set(prefix + "grid_rows", std::to_string(c.grid_rows));
    m.set(prefix + "grid_cols", std::to_string(c.grid_cols));
  } else if (c.graph == GraphKind::random_geometric) {
    m.set(prefix + "L", std::to_string(c.rgg_regions));
    m.set(prefix + "radius", format_double(c.rgg_radius));
  } else {
    m.set(prefix + "adjacency", c.adjacency_path);
  }
  m.set(prefix + "hot_shift", format_double(c.hot_shift));
  m.set(prefix + "hot_regions", std::to_string(c.hot_regions));
}

inline void describe(RunManifest& m, const ModelConfig& c, const std::string& prefix = "") {
  m.set(prefix + "p", std::to_string(c.p));
  m.set(prefix + "d", std::to_string(c.d));
  m.set(prefix + "encoder_hidden", list_string(c.encoder_hidden));
  m.set(prefix + "decoder_hidden", list_string(c.decoder_hidden));
  m.set(prefix + "predictor_hidden", list_string(c.predictor_hidden));
  m.set(prefix + "lambda", format_double(c.recon_weight));
  m.set(prefix + "tau_init", format_double(c.tau_init));
  m.set(prefix + "alpha_init", format_double(c.alpha_init));
  m.set(prefix + "prior_z_variance", format_double(c.prior_z_variance));
  m.set(prefix + "copula", c.copula ? "true" : "false");
}

inline void describe(RunManifest& m, const TrainConfig& c, const std::string& prefix = "") {
  m.set(prefix + "batch_size", std::to_string(c.batch_size));
  m.set(prefix + "max_epochs", std::to_string(c.max_epochs));
  m.set(prefix + "patience", std::to_string(c.patience));
  m.set(prefix + "validation_fraction", format_double(c.validation_fraction));
  m.set(prefix + "learning_rate", format_double(c.learning_rate));
  m.set(prefix + "seed", std::to_string(c.seed));
  m.set(prefix + "train_fraction", format_double(c.train_fraction));
  m.set(prefix + "holdout_regions", std::to_string(c.holdout_regions));
}

inline KeyValueConfig load_config_or_empty(const std::string& path) {
  return path.empty() ? KeyValueConfig::parse_string("", "defaults") : KeyValueConfig::read(path);
}

inline double elapsed(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// Reorders nothing: the columns must match the checkpoint name for name.
inline void check_feature_names(const Dataset& data, const Checkpoint& ck) {
  require(data.num_features() == ck.config.p, ErrorCode::DimensionMismatch,
          "dataset has " + std::to_string(data.num_features()) + " features, checkpoint expects " +
              std::to_string(ck.config.p));
  for (int j = 0; j < data.num_features(); ++j) {
    require(data.feature_names[j] == ck.feature_names[j], ErrorCode::SchemaError,
            "column " + std::to_string(j + 4) + " is '" + data.feature_names[j] + "', checkpoint expects '" +
                ck.feature_names[j] + "'");
  }
}

inline Dataset load_for_checkpoint(const std::string& data_path, const Checkpoint& ck) {
  Dataset data = read_dataset_csv(data_path, ck.num_regions);
  check_feature_names(data, ck);
  if (ck.standardization) apply_standardization(data, *ck.standardization);
  return data;
}

}  // namespace detail

// ---------------------------------------------------------------------------

struct SimulateOutputs {
  std::string dataset, truth, coefficients, adjacency, manifest;
};

inline SimulateOutputs cmd_simulate(const std::string& config_path, const std::string& out_dir) {
  const auto t0 = detail::Clock::now();
  KeyValueConfig kv = KeyValueConfig::read(config_path);
  const SimConfig cfg = read_sim_config(kv);
  kv.finish();
  const SimResult sim = generate(cfg);
  detail::ensure_dir(out_dir);
  SimulateOutputs o{detail::join_path(out_dir, "data.csv"), detail::join_path(out_dir, "truth.csv"),
                    detail::join_path(out_dir, "coefficients.json"), detail::join_path(out_dir, "adjacency.txt"),
                    detail::join_path(out_dir, "manifest.json")};
  {
    auto out = detail::open_out(o.dataset);
    write_dataset_csv(out, sim.data);
  }
  {
    auto out = detail::open_out(o.truth);
    write_ground_truth_csv(out, sim.data, sim.truth);
  }
  {
    const GroundTruth& t = sim.truth;
    auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    auto rows = [](const Eigen::MatrixXd& m) {
      std::vector<std::vector<double>> r(static_cast<std::size_t>(m.rows()));
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(i)].push_back(m(i, j));
      return r;
    };
    nlohmann::json j = {{"alpha", t.alpha},     {"beta11", vec(t.beta11)}, {"beta12", vec(t.beta12)},
                        {"beta2", vec(t.beta2)}, {"loading", rows(t.loading)}, {"mu", rows(t.mu)}};
    auto out = detail::open_out(o.coefficients);
    out << j.dump(1) << "\n";
  }
  {
    auto out = detail::open_out(o.adjacency);
    write_adjacency(out, sim.graph);
  }
  RunManifest m;
  m.command = "simulate";
  detail::describe(m, cfg);
  m.seed = cfg.seed;
  m.add_input(config_path);
  if (cfg.graph == GraphKind::edge_list) m.add_input(cfg.adjacency_path);
  for (const auto& p : {o.dataset, o.truth, o.coefficients, o.adjacency}) m.add_output(p);
  m.seconds = detail::elapsed(t0);
  m.write(o.manifest);
  return o;
}

struct TrainOutputs {
  std::string checkpoint, history, test_data, manifest;
  double tau = 0.0, alpha = 0.0, lambda = 0.0, val_loss = 0.0;
  double test_auc_y1 = 0.0, test_auc_y2 = 0.0;
  int epochs = 0;
};

/// Splits, fits, saves; prints a one-line parameter summary to `log`.
inline TrainOutputs cmd_train(const std::string& data_path, const std::string& adjacency_path,
                              const std::string& config_path, const std::string& out_dir, std::ostream& log) {
  const auto t0 = detail::Clock::now();
  KeyValueConfig kv = detail::load_config_or_empty(config_path);
  const double rho = kv.get_double("rho", 0.9);
  const SpatialGraph graph = read_adjacency(adjacency_path, rho);
  const Dataset raw = read_dataset_csv(data_path, graph.num_regions());
  const ModelConfig mc = read_model_config(kv, raw.num_features());
  const TrainConfig tc = read_train_config(kv);
  kv.finish();
  raw.validate();

  const SplitResult sp = split(raw, tc.train_fraction, tc.seed, tc.holdout_regions);
  const FitResult<ModelParams> fr = fit(sp.train, graph, mc, tc);

  detail::ensure_dir(out_dir);
  TrainOutputs o;
  o.checkpoint = detail::join_path(out_dir, "checkpoint.json");
  o.history = detail::join_path(out_dir, "history.csv");
  o.test_data = detail::join_path(out_dir, "test.csv");
  o.manifest = detail::join_path(out_dir, "manifest.json");

  Checkpoint ck;
  ck.config = mc;
  ck.params = fr.params;
  ck.seed = tc.seed;
  ck.feature_names = raw.feature_names;
  ck.standardization = sp.train.standardization;
  ck.num_regions = graph.num_regions();
  ck.rho = graph.rho();
  ck.edges = graph.edges();
  save_checkpoint(ck, o.checkpoint);
  {
    auto out = detail::open_out(o.history);
    write_history_csv(out, fr.history);
  }
  {
    Dataset test_raw = sp.test;
    remove_standardization(test_raw);
    auto out = detail::open_out(o.test_data);
    write_dataset_csv(out, test_raw);
  }
  o.tau = fr.params.tau();
  o.alpha = fr.params.alpha();
  o.lambda = fr.params.recon_weight;
  o.val_loss = fr.best_val_loss;
  o.epochs = static_cast<int>(fr.history.size());
  const auto preds = predict_dataset(sp.test, fr.params, kBootstrapDraws, tc.seed);
  std::vector<double> s1, s2;
  for (const auto& p : preds) {
    s1.push_back(p.p1);
    s2.push_back(p.p2);
  }
  try {
    o.test_auc_y1 = auc(s1, outcome_column(sp.test, 0));
    o.test_auc_y2 = auc(s2, outcome_column(sp.test, 1));
  } catch (const Error&) {
    o.test_auc_y1 = o.test_auc_y2 = std::nan("");
  }
  log << "tau=" << format_double(o.tau) << " alpha=" << format_double(o.alpha)
      << " lambda=" << format_double(o.lambda) << " val_loss=" << format_double(o.val_loss)
      << " epochs=" << o.epochs << " best_epoch=" << fr.best_epoch << " test_auc_y1=" << csv_number(o.test_auc_y1)
      << " test_auc_y2=" << csv_number(o.test_auc_y2) << "\n";

  RunManifest m;
  m.command = "train";
  m.set("rho", format_double(rho));
  detail::describe(m, mc);
  detail::describe(m, tc);
  m.seed = tc.seed;
  m.add_input(data_path);
  m.add_input(adjacency_path);
  if (!config_path.empty()) m.add_input(config_path);
  for (const auto& p : {o.checkpoint, o.history, o.test_data}) m.add_output(p);
  m.seconds = detail::elapsed(t0);
  m.write(o.manifest);
  return o;
}

struct PredictOutputs {
  std::string region_table, observations, empty_regions, manifest;
  int regions = 0;
};

inline PredictOutputs cmd_predict(const std::string& checkpoint_path, const std::string& data_path,
                                  const std::string& out_dir, int samples = kPredictionDraws,
                                  std::uint64_t seed = 1) {
  const auto t0 = detail::Clock::now();
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  const Dataset data = detail::load_for_checkpoint(data_path, ck);
  const auto preds = predict_dataset(data, ck.params, samples, seed);
  const RegionTable table = region_table(data, preds);
  detail::ensure_dir(out_dir);
  PredictOutputs o{detail::join_path(out_dir, "region_table.csv"), detail::join_path(out_dir, "observations.csv"),
                   detail::join_path(out_dir, "empty_regions.csv"), detail::join_path(out_dir, "manifest.json"),
                   static_cast<int>(table.rows.size())};
  {
    auto out = detail::open_out(o.region_table);
    write_region_table_csv(out, table);
  }
  {
    auto out = detail::open_out(o.observations);
    write_observation_csv(out, data, preds);
  }
  {
    auto out = detail::open_out(o.empty_regions);
    out << "region_id\n";
    for (int r : table.empty_regions) out << r << "\n";
  }
  RunManifest m;
  m.command = "predict";
  m.set("samples", std::to_string(samples));
  m.set("seed", std::to_string(seed));
  m.seed = seed;
  m.add_input(checkpoint_path);
  m.add_input(data_path);
  for (const auto& p : {o.region_table, o.observations, o.empty_regions}) m.add_output(p);
  m.seconds = detail::elapsed(t0);
  m.write(o.manifest);
  return o;
}

struct AceOutputs {
  std::string ace, manifest;
  std::vector<AceEstimate> rows;
};

/// Spec keys: samples, bootstrap, seed, patterns (e.g. 11,10,01,00),
/// categorical.<column>.levels / .reference, continuous.<column>.grid.
inline AceOutputs cmd_ace(const std::string& checkpoint_path, const std::string& data_path,
                          const std::string& spec_path, const std::string& out_dir) {
  const auto t0 = detail::Clock::now();
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  const Dataset data = detail::load_for_checkpoint(data_path, ck);
  KeyValueConfig kv = KeyValueConfig::read(spec_path);
  AceOptions opt;
  opt.samples = static_cast<int>(kv.get_int("samples", opt.samples));
  opt.bootstrap = static_cast<int>(kv.get_int("bootstrap", opt.bootstrap));
  opt.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(opt.seed)));
  std::vector<OutcomePattern> patterns;
  for (const auto& s : kv.get_strings("patterns", {"11", "10", "01", "00"})) {
    require(s.size() == 2 && (s[0] == '0' || s[0] == '1') && (s[1] == '0' || s[1] == '1'),
            ErrorCode::ParseError, "pattern must be one of 11,10,01,00, got '" + s + "'");
    patterns.push_back({s[0] - '0', s[1] - '0'});
  }

  AceOutputs o;
  auto column_of = [](const std::string& key, const std::string& prefix, const std::string& suffix) {
    return key.substr(prefix.size(), key.size() - prefix.size() - suffix.size());
  };
  auto ends_with = [](const std::string& s, const std::string& suf) {
    return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
  };
  for (const auto& key : kv.keys_with_prefix("categorical.")) {
    if (!ends_with(key, ".levels")) continue;
    const std::string col = column_of(key, "categorical.", ".levels");
    const int column = data.column_index(col);
    const auto levels = kv.get_doubles(key, {});
    require(!levels.empty(), ErrorCode::ParseError, key + " is empty");
    const double reference = kv.require_double("categorical." + col + ".reference");
    for (double level : levels) {
      for (auto& e : ace_categorical_patterns(data, ck.params, column, level, reference, patterns, opt)) {
        o.rows.push_back(e);
      }
    }
  }
  for (const auto& key : kv.keys_with_prefix("continuous.")) {
    if (!ends_with(key, ".grid")) continue;
    const std::string col = column_of(key, "continuous.", ".grid");
    const int column = data.column_index(col);
    const auto grid = kv.get_doubles(key, {});
    for (const auto& pat : patterns) {
      for (auto& e : ace_curve(data, ck.params, column, grid, pat, opt)) o.rows.push_back(e);
    }
  }
  kv.finish();
  require(!o.rows.empty(), ErrorCode::ParseError, spec_path + ": no categorical or continuous covariates declared");

  detail::ensure_dir(out_dir);
  o.ace = detail::join_path(out_dir, "ace.csv");
  o.manifest = detail::join_path(out_dir, "manifest.json");
  {
    auto out = detail::open_out(o.ace);
    write_ace_csv(out, o.rows);
  }
  RunManifest m;
  m.command = "ace";
  for (const auto& [k, v] : kv.consumed_entries()) m.set(k, v);
  m.set("samples", std::to_string(opt.samples));
  m.set("bootstrap", std::to_string(opt.bootstrap));
  m.set("seed", std::to_string(opt.seed));
  m.seed = opt.seed;
  m.add_input(checkpoint_path);
  m.add_input(data_path);
  m.add_input(spec_path);
  m.add_output(o.ace);
  m.seconds = detail::elapsed(t0);
  m.write(o.manifest);
  return o;
}

struct BenchmarkOutputs {
  std::string results, summary, cells, failures, manifest;
  std::vector<ResultRow> rows;
  std::vector<SummaryRow> summary_rows;
};

/// Grid keys: lambda, n, alpha, noise_sigma2, seeds, variants, jobs, samples;
/// base settings under sim.*, model.*, train.*.
inline GridSpec read_grid_spec(KeyValueConfig& kv) {
  GridSpec g;
  g.sim = read_sim_config(kv, "sim.", false);
  g.model = read_model_config(kv, g.sim.p, "model.");
  g.train = read_train_config(kv, "train.");
  g.lambda = kv.get_doubles("lambda", {});
  g.n = kv.get_ints("n", {});
  g.alpha = kv.get_doubles("alpha", {});
  g.noise_sigma2 = kv.get_doubles("noise_sigma2", {});
  for (int s : kv.get_ints("seeds", {})) {
    require(s >= 0, ErrorCode::ParseError, "seeds must be nonnegative");
    g.seeds.push_back(static_cast<std::uint64_t>(s));
  }
  g.variants = kv.get_strings("variants", g.variants);
  g.jobs = static_cast<int>(kv.get_int("jobs", g.jobs));
  g.prediction_samples = static_cast<int>(kv.get_int("samples", g.prediction_samples));
  return g;
}

inline BenchmarkOutputs cmd_benchmark(const std::string& config_path, const std::string& out_dir) {
  const auto t0 = detail::Clock::now();
  KeyValueConfig kv = KeyValueConfig::read(config_path);
  const GridSpec spec = read_grid_spec(kv);
  kv.finish();
  BenchmarkOutputs o;
  o.rows = run_ablation(spec);
  detail::ensure_dir(out_dir);
  o.results = detail::join_path(out_dir, "results.csv");
  o.summary = detail::join_path(out_dir, "summary.csv");
  o.cells = detail::join_path(out_dir, "cells.csv");
  o.failures = detail::join_path(out_dir, "failures.csv");
  o.manifest = detail::join_path(out_dir, "manifest.json");
  {
    auto out = detail::open_out(o.results);
    write_results_csv(out, o.rows);
  }
  {
    auto out = detail::open_out(o.cells);
    write_cells_csv(out, grid_cells(spec));
  }
  {
    auto out = detail::open_out(o.failures);
    out << "cell_id,variant,seed,error\n";
    for (const auto& r : o.rows) {
      if (!r.failed) continue;
      std::string msg = r.error;
      for (char& c : msg)
        if (c == ',' || c == '\n') c = ';';
      out << r.cell_id << "," << r.variant << "," << r.seed << "," << msg << "\n";
    }
  }
  {
    auto out = detail::open_out(o.summary);
    bool any_ok = false;
    for (const auto& r : o.rows) any_ok = any_ok || !r.failed;
    if (any_ok) o.summary_rows = benchmark_report(o.rows);
    write_summary_csv(out, o.summary_rows);
  }
  RunManifest m;
  m.command = "benchmark";
  detail::describe(m, spec.sim, "sim.");
  detail::describe(m, spec.model, "model.");
  detail::describe(m, spec.train, "train.");
  m.set("lambda", detail::list_string(spec.lambda));
  m.set("n", detail::list_string(spec.n));
  m.set("alpha", detail::list_string(spec.alpha));
  m.set("noise_sigma2", detail::list_string(spec.noise_sigma2));
  m.set("seeds", detail::list_string(spec.seeds));
  m.set("variants", detail::list_string(spec.variants));
  m.set("jobs", std::to_string(spec.jobs));
  m.set("samples", std::to_string(spec.prediction_samples));
  m.seed = spec.train.seed;
  m.add_input(config_path);
  for (const auto& p : {o.results, o.summary, o.cells, o.failures}) m.add_output(p);
  m.seconds = detail::elapsed(t0);
  m.write(o.manifest);
  return o;
}

}  // namespace scvae
