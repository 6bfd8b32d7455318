// Acceptance suite: one PASS/FAIL line per criterion. Tolerances and run
// sizes are fixed here; nothing is tuned at run time.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

#include "scvae/ablation.hpp"
#include "scvae/commands.hpp"
#include "test_support.hpp"

using namespace scvae;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

template <class T>
std::string list(const std::vector<T>& v, int digits = 4) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(static_cast<double>(v[i]), digits);
  return s + "]";
}

// Simulation and training settings shared by criteria 5-9.
SimConfig acceptance_sim() {
  SimConfig s;
  s.n = 5000;
  s.d = 5;
  s.p = 50;
  s.alpha_true = 2.0;
  s.rho = 0.9;
  s.grid_rows = 10;
  s.grid_cols = 10;
  return s;
}

TrainConfig acceptance_train() {
  TrainConfig t;
  t.max_epochs = 1000;
  t.patience = 100;
  t.batch_size = 256;
  t.learning_rate = 1e-3;
  return t;
}

GridSpec acceptance_grid() {
  GridSpec g;
  g.sim = acceptance_sim();
  g.model.p = g.sim.p;
  g.model.d = 5;
  g.train = acceptance_train();
  g.variants = {kVariantCopulaVae};
  return g;
}

double mean_auc(const ResultRow& r) { return 0.5 * (r.auc_y1 + r.auc_y2); }

// Median over seeds of `metric`, per grid cell in cell order.
std::vector<double> cell_medians(const std::vector<ResultRow>& rows, const std::function<double(const ResultRow&)>& metric,
                                 const std::string& variant = kVariantCopulaVae) {
  std::map<int, std::vector<double>> by_cell;
  for (const auto& r : rows) {
    if (r.variant != variant) continue;
    if (r.failed) throw Error(ErrorCode::InvalidArgument, "fit failed: " + r.error);
    by_cell[r.cell_id].push_back(metric(r));
  }
  std::vector<double> out;
  for (auto& [c, v] : by_cell) out.push_back(median(v));
  return out;
}

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = 0.5 * static_cast<double>(i + j) + 1.0;
    i = j + 1;
  }
  return rank;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = average_ranks(a), rb = average_ranks(b);
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / ra.size();
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / rb.size();
  double num = 0, da = 0, db = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    da += (ra[i] - ma) * (ra[i] - ma);
    db += (rb[i] - mb) * (rb[i] - mb);
  }
  return (da == 0 || db == 0) ? 0.0 : num / std::sqrt(da * db);
}

// ---------------------------------------------------------------------------

Verdict criterion1() {
  const auto t0 = Clock::now();
  double indep = 0.0, sums = 0.0;
  for (int i = 1; i <= 99; ++i) {
    for (int j = 1; j <= 99; ++j) {
      const double p1 = i / 100.0, p2 = j / 100.0;
      indep = std::max(indep, std::abs(gumbel_cdf(p1, p2, 1.0) - p1 * p2));
      for (double a : {1.0, 1.5, 2.0, 5.0, 20.0}) sums = std::max(sums, std::abs(cell_probs(p1, p2, a).sum() - 1.0));
    }
  }
  RandomStream rng = make_stream(1, "acceptance.rect");
  const double alphas[] = {1.0, 1.5, 2.0, 5.0, 20.0};
  double worst_volume = 0.0;
  for (int k = 0; k < 10000; ++k) {
    double u1 = open_uniform(rng), u2 = open_uniform(rng), v1 = open_uniform(rng), v2 = open_uniform(rng);
    if (u1 > u2) std::swap(u1, u2);
    if (v1 > v2) std::swap(v1, v2);
    const double a = alphas[k % 5];
    const double vol = gumbel_cdf(u2, v2, a) - gumbel_cdf(u1, v2, a) - gumbel_cdf(u2, v1, a) + gumbel_cdf(u1, v1, a);
    worst_volume = std::min(worst_volume, vol);
  }
  const double secs = seconds_since(t0);
  const bool pass = indep <= 1e-12 && sums <= 1e-12 && worst_volume >= -1e-15 && secs < 5.0;
  return {pass, "max|C1-p1p2|=" + fmt(indep) + " max|sum-1|=" + fmt(sums) + " min rectangle volume=" +
                    fmt(worst_volume) + " time=" + fmt(secs, 3) + "s"};
}

Verdict criterion2() {
  const auto t0 = Clock::now();
  const double lam = std::abs(upper_tail_dependence(2.0) - (2.0 - std::sqrt(2.0)));
  const double tau = std::abs(kendall_tau(2.0) - 0.5);
  std::vector<double> errs;
  for (double a : {1.0, 2.0, 4.0}) {
    RandomStream rng = make_stream(2, "acceptance.kendall", static_cast<std::uint64_t>(a * 10));
    std::vector<std::pair<double, double>> uv(100000);
    for (auto& p : uv) p = sample_pair(a, rng);
    errs.push_back(std::abs(scvae::testing::kendall_tau_sample(uv) - (1.0 - 1.0 / a)));
  }
  const double secs = seconds_since(t0);
  const bool pass = lam <= 1e-12 && tau <= 1e-12 && *std::max_element(errs.begin(), errs.end()) <= 0.01 && secs < 20.0;
  return {pass, "lambda err=" + fmt(lam) + " tau err=" + fmt(tau) + " sampler |tau_hat-tau| at alpha 1,2,4=" +
                    list(errs) + " time=" + fmt(secs, 3) + "s"};
}

Verdict criterion3() {
  const auto t0 = Clock::now();
  ModelConfig c;
  c.p = 3;
  c.d = 2;
  c.encoder_hidden = {4, 3};
  c.decoder_hidden = {3, 4};
  c.predictor_hidden = {3};
  const SpatialGraph g = path_graph(3);
  double worst = 0.0;
  std::string worst_name;
  for (int draw = 0; draw < 20; ++draw) {
    RandomStream rng = make_stream(3, "acceptance.fd", static_cast<std::uint64_t>(draw));
    const Dataset d = scvae::testing::tiny_dataset(4, 3, 3, rng);
    ModelParams p = init_params(c, 3, rng);
    scvae::testing::perturb(p, rng, 0.1);
    const Eigen::MatrixXd eps = draw_eps(2, 4, rng);
    ModelParams grads = p.zeros_like();
    elbo_batch(full_batch(d), p, g, eps, c, &grads);
    auto loss = [&](const ModelParams& q) { return elbo_batch(full_batch(d), q, g, eps, c).loss; };
    for (const auto& e : scvae::testing::gradient_errors(p, grads, loss, 1e-6)) {
      if (e.relative > worst) {
        worst = e.relative;
        worst_name = e.name;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-4 && secs < 30.0,
          "worst per-tensor relative error=" + fmt(worst) + " (" + worst_name + ") time=" + fmt(secs, 3) + "s"};
}

Verdict criterion4() {
  const auto t0 = Clock::now();
  const SpatialGraph path = path_graph(5);
  const PrecisionFactor f = build_precision(path);
  const Eigen::MatrixXd cov = path.dense_precision().inverse();
  RandomStream rng = make_stream(4, "acceptance.gmrf");
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(5, 5);
  const int draws = 50000;
  for (int s = 0; s < draws; ++s) {
    const Eigen::VectorXd x = gmrf_sample(f, 1.0, rng);
    acc += x * x.transpose();
  }
  const double cov_err = (acc / draws - cov).cwiseAbs().maxCoeff();
  double quad_err = 0.0;
  std::uniform_int_distribution<int> size(2, 50);
  for (int rep = 0; rep < 100; ++rep) {
    const SpatialGraph g = scvae::testing::random_connected_graph(size(rng), rng, 0.99 * open_uniform(rng));
    Eigen::VectorXd mu(g.num_regions());
    for (int i = 0; i < mu.size(); ++i) mu[i] = standard_normal(rng);
    const double dense = mu.dot(g.dense_precision() * mu);
    quad_err = std::max(quad_err, std::abs(quadratic_form(mu, g) - dense));
  }
  const double secs = seconds_since(t0);
  return {cov_err <= 0.05 && quad_err <= 1e-10 && secs < 30.0,
          "max covariance error=" + fmt(cov_err) + " max quadratic-form error=" + fmt(quad_err) + " time=" +
              fmt(secs, 3) + "s"};
}

Verdict criterion5() {
  const auto t0 = Clock::now();
  GridSpec g = acceptance_grid();
  g.seeds = {1, 2, 3, 4, 5};
  g.variants = {kVariantCopulaVae, kVariantLogistic};
  const auto rows = run_ablation(g);
  auto y1 = [](const ResultRow& r) { return r.auc_y1; };
  const double vae = cell_medians(rows, y1, kVariantCopulaVae).at(0);
  const double logit = cell_medians(rows, y1, kVariantLogistic).at(0);
  std::map<std::uint64_t, std::pair<double, double>> paired;
  for (const auto& r : rows) (r.variant == kVariantCopulaVae ? paired[r.seed].first : paired[r.seed].second) = r.auc_y1;
  int wins = 0, losses = 0;
  std::vector<double> diffs;
  for (const auto& [s, ab] : paired) {
    diffs.push_back(ab.first - ab.second);
    if (ab.first > ab.second) ++wins;
    else if (ab.first < ab.second) ++losses;
  }
  const double p = sign_test_p(wins, losses);
  const double secs = seconds_since(t0);
  const bool pass = vae - logit >= 0.02 && p <= 0.0625 && secs < 15 * 60.0;
  return {pass, "median AUC y1 vae=" + fmt(vae) + " logistic=" + fmt(logit) + " gap=" + fmt(vae - logit) +
                    " per-seed gaps=" + list(diffs) + " wins=" + std::to_string(wins) + "/5 sign p=" + fmt(p) +
                    " time=" + fmt(secs, 4) + "s"};
}

Verdict criterion6() {
  const auto t0 = Clock::now();
  GridSpec g = acceptance_grid();
  g.alpha = {1.2, 2.0, 3.0};
  g.seeds = {1, 2, 3};
  const auto med = cell_medians(run_ablation(g), [](const ResultRow& r) { return r.alpha_hat; });
  const double secs = seconds_since(t0);
  const bool pass = med.size() == 3 && med[0] < med[1] && med[1] < med[2] && secs < 30 * 60.0;
  return {pass, "median alpha_hat at alpha 1.2,2,3=" + list(med) + " time=" + fmt(secs, 4) + "s"};
}

Verdict criterion7() {
  const auto t0 = Clock::now();
  GridSpec g = acceptance_grid();
  g.n = {1000, 2000, 4000};
  g.seeds = {1, 2, 3};
  const auto med = cell_medians(run_ablation(g), mean_auc);
  const double secs = seconds_since(t0);
  const bool overall = med.size() == 3 && med[2] >= med[0] - 0.01;
  const bool trend = med.size() == 3 && med[0] <= med[1] && med[1] <= med[2];
  return {overall && trend && secs < 20 * 60.0,
          "median mean AUC at n 1000,2000,4000=" + list(med) + " n4000>=n1000-0.01:" + (overall ? "yes" : "no") +
              " nondecreasing:" + (trend ? "yes" : "no") + " time=" + fmt(secs, 4) + "s"};
}

Verdict criterion8() {
  const auto t0 = Clock::now();
  GridSpec g = acceptance_grid();
  g.lambda = {0.0, 0.5, 1.0, 1.5};
  g.seeds = {1, 2, 3};
  const auto med = cell_medians(run_ablation(g), mean_auc);
  const double rho = spearman(g.lambda, med);
  const double secs = seconds_since(t0);
  return {rho <= 0.0 && secs < 30 * 60.0,
          "median mean AUC at lambda 0,0.5,1,1.5=" + list(med) + " spearman=" + fmt(rho) + " time=" + fmt(secs, 4) +
              "s"};
}

struct AceRun {
  AceEstimate e11;
  double pattern_sum = 0.0;
};

AceRun injected_ace(double delta, std::uint64_t seed) {
  SimConfig sc = acceptance_sim();
  sc.n = 2000;
  sc.p = 10;
  sc.seed = seed;
  const SimResult sim = generate(sc);
  RandomStream rng = make_stream(seed, "inject");
  const InjectedEffect inj = inject_known_effect(sim.data, sim.truth, delta, rng);
  const SplitResult sp = split(inj.data, 0.8, seed);
  ModelConfig mc;
  mc.p = sc.p + 1;
  mc.d = sc.d;
  TrainConfig tc = acceptance_train();
  tc.seed = seed;
  const auto fr = fit(sp.train, sim.graph, mc, tc);
  AceOptions opt;
  opt.seed = seed;
  const auto rows = ace_categorical_patterns(sp.test, fr.params, inj.column, 1.0, 0.0,
                                             {kAllPatterns.begin(), kAllPatterns.end()}, opt);
  AceRun out{rows[0], 0.0};
  for (const auto& r : rows) out.pattern_sum += r.estimate;
  return out;
}

Verdict criterion9() {
  const auto t0 = Clock::now();
  int detected = 0, covered = 0;
  double worst_sum = 0.0;
  std::vector<double> effects;
  for (std::uint64_t s = 1; s <= 5; ++s) {
    const AceRun r = injected_ace(1.0, s);
    effects.push_back(r.e11.estimate);
    detected += r.e11.estimate > 0.0 && r.e11.reject_null;
    worst_sum = std::max(worst_sum, std::abs(r.pattern_sum));
  }
  for (std::uint64_t s = 1; s <= 20; ++s) {
    const AceRun r = injected_ace(0.0, s);
    covered += r.e11.lower <= 0.0 && 0.0 <= r.e11.upper;
    worst_sum = std::max(worst_sum, std::abs(r.pattern_sum));
  }
  const double secs = seconds_since(t0);
  const bool pass = detected >= 4 && covered >= 18 && worst_sum <= 1e-10 && secs < 20 * 60.0;
  return {pass, "delta=1 detected " + std::to_string(detected) + "/5 (ACE11=" + list(effects) +
                    ") null coverage " + std::to_string(covered) + "/20 max|pattern sum|=" + fmt(worst_sum) +
                    " time=" + fmt(secs, 4) + "s"};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

// results.csv without its wall-clock column
std::string drop_last_column(const std::string& text) {
  std::istringstream in(text);
  std::string line, out;
  while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + "\n";
  return out;
}

Verdict criterion10() {
  const fs::path root = fs::temp_directory_path() / "scvae_acceptance_10";
  fs::remove_all(root);
  fs::create_directories(root);
  auto at = [&](const std::string& name) { return (root / name).string(); };
  std::vector<std::string> mismatched;
  auto same = [&](const std::string& label, const std::string& a, const std::string& b) {
    if (a != b || a.empty()) mismatched.push_back(label);
  };

  spit(at("sim.cfg"), "n = 600\nL = 9\nd = 2\np = 4\nalpha = 2\nseed = 10\n");
  spit(at("train.cfg"), "d = 2\nencoder_hidden = 8\ndecoder_hidden = 8\npredictor_hidden = 4\nmax_epochs = 5\n");
  const auto s1 = cmd_simulate(at("sim.cfg"), at("s1"));
  const auto s2 = cmd_simulate(at("sim.cfg"), at("s2"));
  same("simulate data", slurp(s1.dataset), slurp(s2.dataset));
  same("simulate truth", slurp(s1.truth), slurp(s2.truth));
  same("simulate coefficients", slurp(s1.coefficients), slurp(s2.coefficients));
  same("simulate adjacency", slurp(s1.adjacency), slurp(s2.adjacency));

  std::ostringstream log;
  const auto t1 = cmd_train(s1.dataset, s1.adjacency, at("train.cfg"), at("t1"), log);
  const auto t2 = cmd_train(s1.dataset, s1.adjacency, at("train.cfg"), at("t2"), log);
  same("train checkpoint", slurp(t1.checkpoint), slurp(t2.checkpoint));
  same("train history", slurp(t1.history), slurp(t2.history));
  same("train test split", slurp(t1.test_data), slurp(t2.test_data));

  const auto p1 = cmd_predict(t1.checkpoint, s1.dataset, at("p1"), 50, 3);
  const auto p2 = cmd_predict(t1.checkpoint, s1.dataset, at("p2"), 50, 3);
  same("predict region table", slurp(p1.region_table), slurp(p2.region_table));
  same("predict observations", slurp(p1.observations), slurp(p2.observations));

  spit(at("ace.cfg"), "samples = 20\nbootstrap = 200\ncontinuous.x1.grid = -1, 0, 1\n");
  const auto a1 = cmd_ace(t1.checkpoint, s1.dataset, at("ace.cfg"), at("a1"));
  const auto a2 = cmd_ace(t1.checkpoint, s1.dataset, at("ace.cfg"), at("a2"));
  same("ace table", slurp(a1.ace), slurp(a2.ace));

  spit(at("grid.cfg"),
       "sim.n = 400\nsim.L = 4\nsim.d = 2\nsim.p = 3\nmodel.d = 2\nmodel.encoder_hidden = 6\n"
       "model.decoder_hidden = 6\nmodel.predictor_hidden = 4\ntrain.max_epochs = 3\nseeds = 1, 2\n"
       "variants = vae_copula, vae_independent, nn_independent, logistic\njobs = 2\n");
  const auto b1 = cmd_benchmark(at("grid.cfg"), at("b1"));
  const auto b2 = cmd_benchmark(at("grid.cfg"), at("b2"));
  same("benchmark results", drop_last_column(slurp(b1.results)), drop_last_column(slurp(b2.results)));
  same("benchmark summary", slurp(b1.summary), slurp(b2.summary));

  // in-memory parameters against a saved and reloaded checkpoint
  const Checkpoint ck = load_checkpoint(t1.checkpoint);
  const Dataset data = detail::load_for_checkpoint(s1.dataset, ck);
  save_checkpoint(ck, at("round.json"));
  const Checkpoint back = load_checkpoint(at("round.json"));
  SimConfig sc;
  sc.n = 600;
  sc.grid_rows = sc.grid_cols = 3;
  sc.d = 2;
  sc.p = 4;
  const SimResult sim = generate(sc);
  const SplitResult sp = split(sim.data, 0.8, 1);
  ModelConfig mc;
  mc.p = 4;
  mc.d = 2;
  TrainConfig tc;
  tc.max_epochs = 3;
  const auto fr = fit(sp.train, sim.graph, mc, tc);
  Checkpoint fresh = ck;
  fresh.config = mc;
  fresh.params = fr.params;
  save_checkpoint(fresh, at("fresh.json"));
  const Checkpoint fresh_back = load_checkpoint(at("fresh.json"));
  double worst = 0.0;
  auto compare = [&](const ModelParams& a, const ModelParams& b, const Dataset& d) {
    const auto pa = predict_dataset(d, a, 200, 1), pb = predict_dataset(d, b, 200, 1);
    for (std::size_t i = 0; i < pa.size(); ++i) {
      const auto qa = quantities_of(pa[i]), qb = quantities_of(pb[i]);
      for (std::size_t k = 0; k < qa.size(); ++k) worst = std::max(worst, std::abs(qa[k] - qb[k]));
    }
  };
  compare(ck.params, back.params, data);
  compare(fr.params, fresh_back.params, sp.test);
  fs::remove_all(root);

  std::string detail = "byte-identical reruns: " + std::string(mismatched.empty() ? "all" : "MISMATCH in");
  for (const auto& m : mismatched) detail += " [" + m + "]";
  detail += " checkpoint round-trip max |dp|=" + fmt(worst);
  return {mismatched.empty() && worst <= 1e-15, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance"};
  std::vector<int> criteria;
  app.add_option("--criterion", criteria, "criterion number(s) 1-10; all when omitted")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);
  if (criteria.empty())
    for (int k = 1; k <= 10; ++k) criteria.push_back(k);

  const std::vector<std::function<Verdict()>> table = {criterion1, criterion2, criterion3, criterion4, criterion5,
                                                       criterion6, criterion7, criterion8, criterion9, criterion10};
  bool all = true;
  for (int k : criteria) {
    Verdict v;
    try {
      v = table[k - 1]();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    all = all && v.pass;
    std::cout << "criterion " << k << ": " << (v.pass ? "PASS" : "FAIL") << "  " << v.detail << std::endl;
  }
  return all ? 0 : 1;
}
