#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "scvae/commands.hpp"

namespace {

int exit_code(scvae::ErrorCode c) {
  switch (c) {
    case scvae::ErrorCode::ParseError:
    case scvae::ErrorCode::SchemaError:
    case scvae::ErrorCode::UnknownColumn:
      return 3;
    case scvae::ErrorCode::IoError:
      return 4;
    default:
      return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spatial copula VAE for paired binary outcomes"};
  app.require_subcommand(1);

  std::string config, out_dir, data, adjacency, checkpoint, spec;
  int samples = scvae::kPredictionDraws;
  std::uint64_t seed = 1;

  auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset with known truth");
  sim->add_option("--config", config, "key = value file")->required();
  sim->add_option("--out", out_dir, "output directory")->required();

  auto* train = app.add_subcommand("train", "fit the model and write a checkpoint");
  train->add_option("--data", data, "dataset CSV")->required();
  train->add_option("--adjacency", adjacency, "edge list")->required();
  train->add_option("--config", config, "model and training keys");
  train->add_option("--out", out_dir, "output directory")->required();

  auto* predict = app.add_subcommand("predict", "joint probabilities per observation and region");
  predict->add_option("--checkpoint", checkpoint)->required();
  predict->add_option("--data", data)->required();
  predict->add_option("--samples", samples, "Monte Carlo draws per observation")->check(CLI::PositiveNumber);
  predict->add_option("--seed", seed);
  predict->add_option("--out", out_dir)->required();

  auto* ace = app.add_subcommand("ace", "average covariate effects with bootstrap intervals");
  ace->add_option("--checkpoint", checkpoint)->required();
  ace->add_option("--data", data)->required();
  ace->add_option("--spec", spec, "covariate levels and grids")->required();
  ace->add_option("--out", out_dir)->required();

  auto* bench = app.add_subcommand("benchmark", "ablation grid over simulated data");
  bench->add_option("--config", config)->required();
  bench->add_option("--out", out_dir)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) {
      const auto o = scvae::cmd_simulate(config, out_dir);
      std::cout << "wrote " << o.dataset << "\n";
    } else if (*train) {
      const auto o = scvae::cmd_train(data, adjacency, config, out_dir, std::cout);
      std::cout << "wrote " << o.checkpoint << "\n";
    } else if (*predict) {
      const auto o = scvae::cmd_predict(checkpoint, data, out_dir, samples, seed);
      std::cout << "wrote " << o.region_table << " (" << o.regions << " regions)\n";
    } else if (*ace) {
      const auto o = scvae::cmd_ace(checkpoint, data, spec, out_dir);
      std::cout << "wrote " << o.ace << " (" << o.rows.size() << " rows)\n";
    } else if (*bench) {
      const auto o = scvae::cmd_benchmark(config, out_dir);
      std::size_t failed = 0;
      for (const auto& r : o.rows) failed += r.failed ? 1 : 0;
      std::cout << "wrote " << o.results << " (" << o.rows.size() << " rows, " << failed << " failed)\n";
    }
  } catch (const scvae::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
