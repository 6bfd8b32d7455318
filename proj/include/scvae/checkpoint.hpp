#pragma once

#include <json.hpp>

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "scvae/dataset.hpp"
#include "scvae/errors.hpp"
#include "scvae/grad_engine.hpp"
#include "scvae/model.hpp"
#include "scvae/spatial_graph.hpp"

namespace scvae {

inline constexpr const char* kCheckpointFormat = "scvae-checkpoint";
inline constexpr int kCheckpointVersion = 1;

/// Everything needed to predict on new data without the training run.
struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  std::uint64_t seed = 0;
  std::vector<std::string> feature_names;
  std::optional<Standardization> standardization;
  int num_regions = 0;
  double rho = 0.9;
  std::vector<std::pair<int, int>> edges;
};

namespace detail {

using nlohmann::json;

// Shortest round-trip decimal survives dump/parse bit-exactly.
inline json matrix_to_json(const Eigen::MatrixXd& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

inline Eigen::MatrixXd matrix_from_json(const json& j, const std::string& what) {
  try {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    require(rows >= 0 && cols >= 0 && static_cast<Eigen::Index>(data.size()) == rows * cols,
            ErrorCode::SchemaError, what + ": data length does not match shape");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = data[static_cast<std::size_t>(i * cols + c)];
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaError, what + ": " + e.what());
  }
}

inline json layer_to_json(const DenseLayer& l) {
  return {{"W", matrix_to_json(l.weights)}, {"b", std::vector<double>(l.biases.data(), l.biases.data() + l.biases.size())}};
}

inline DenseLayer layer_from_json(const json& j, const std::string& what) {
  DenseLayer l;
  l.weights = matrix_from_json(j.at("W"), what + ".W");
  const auto b = j.at("b").get<std::vector<double>>();
  require(static_cast<Eigen::Index>(b.size()) == l.weights.rows(), ErrorCode::SchemaError,
          what + ".b length does not match W rows");
  l.biases = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
  return l;
}

inline json mlp_to_json(const Mlp& m) {
  json layers = json::array();
  for (const auto& l : m.layers()) layers.push_back(layer_to_json(l));
  return {{"output_activation", m.output_activation() == Activation::relu ? "relu" : "identity"},
          {"layers", layers}};
}

inline Mlp mlp_from_json(const json& j, const std::string& what) {
  const auto& layers = j.at("layers");
  require(layers.is_array() && !layers.empty(), ErrorCode::SchemaError, what + ": no layers");
  std::vector<DenseLayer> parsed;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    parsed.push_back(layer_from_json(layers[i], what + "." + std::to_string(i)));
  }
  std::vector<int> dims{parsed.front().in_dim()};
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    require(parsed[i].in_dim() == dims.back(), ErrorCode::SchemaError, what + ": layer widths do not chain");
    dims.push_back(parsed[i].out_dim());
  }
  const std::string act = j.at("output_activation").get<std::string>();
  require(act == "relu" || act == "identity", ErrorCode::SchemaError, what + ": unknown activation " + act);
  Mlp m(dims, act == "relu" ? Activation::relu : Activation::identity);
  for (std::size_t i = 0; i < parsed.size(); ++i) m.layers()[i] = parsed[i];
  return m;
}

}  // namespace detail

inline nlohmann::json checkpoint_to_json(const Checkpoint& ck) {
  using nlohmann::json;
  const ModelConfig& c = ck.config;
  const ModelParams& p = ck.params;
  json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["config"] = {{"p", c.p},
                 {"d", c.d},
                 {"encoder_hidden", c.encoder_hidden},
                 {"decoder_hidden", c.decoder_hidden},
                 {"predictor_hidden", c.predictor_hidden},
                 {"recon_weight", c.recon_weight},
                 {"tau_init", c.tau_init},
                 {"alpha_init", c.alpha_init},
                 {"prior_z_variance", c.prior_z_variance},
                 {"copula", c.copula}};
  j["seed"] = ck.seed;
  j["feature_names"] = ck.feature_names;
  if (ck.standardization) {
    const auto& s = *ck.standardization;
    j["standardization"] = {{"mean", std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size())},
                            {"sd", std::vector<double>(s.sd.data(), s.sd.data() + s.sd.size())}};
  } else {
    j["standardization"] = nullptr;
  }
  json edges = json::array();
  for (const auto& [a, b] : ck.edges) edges.push_back({a, b});
  j["graph"] = {{"num_regions", ck.num_regions}, {"rho", ck.rho}, {"edges", edges}};
  j["params"] = {{"encoder", detail::mlp_to_json(p.encoder)},
                 {"mean_head", detail::layer_to_json(p.mean_head)},
                 {"logvar_head", detail::layer_to_json(p.logvar_head)},
                 {"decoder", detail::mlp_to_json(p.decoder)},
                 {"predictor", detail::mlp_to_json(p.predictor)},
                 {"mu_table", detail::matrix_to_json(p.mu_table)},
                 {"raw_tau", p.raw_tau},
                 {"raw_alpha", p.raw_alpha},
                 {"recon_weight", p.recon_weight},
                 {"copula", p.copula},
                 {"seen_regions", std::vector<int>(p.seen_regions.begin(), p.seen_regions.end())}};
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  using nlohmann::json;
  Checkpoint ck;
  try {
    require(j.at("format").get<std::string>() == kCheckpointFormat, ErrorCode::SchemaError,
            "not a checkpoint file");
    require(j.at("version").get<int>() == kCheckpointVersion, ErrorCode::SchemaError,
            "unsupported checkpoint version " + std::to_string(j.at("version").get<int>()));
    const auto& c = j.at("config");
    ck.config.p = c.at("p").get<int>();
    ck.config.d = c.at("d").get<int>();
    ck.config.encoder_hidden = c.at("encoder_hidden").get<std::vector<int>>();
    ck.config.decoder_hidden = c.at("decoder_hidden").get<std::vector<int>>();
    ck.config.predictor_hidden = c.at("predictor_hidden").get<std::vector<int>>();
    ck.config.recon_weight = c.at("recon_weight").get<double>();
    ck.config.tau_init = c.at("tau_init").get<double>();
    ck.config.alpha_init = c.at("alpha_init").get<double>();
    ck.config.prior_z_variance = c.at("prior_z_variance").get<double>();
    ck.config.copula = c.at("copula").get<bool>();
    ck.config.validate();
    ck.seed = j.at("seed").get<std::uint64_t>();
    ck.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    if (!j.at("standardization").is_null()) {
      const auto mean = j["standardization"].at("mean").get<std::vector<double>>();
      const auto sd = j["standardization"].at("sd").get<std::vector<double>>();
      require(mean.size() == sd.size(), ErrorCode::SchemaError, "standardization lengths differ");
      Standardization s;
      s.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
      s.sd = Eigen::Map<const Eigen::VectorXd>(sd.data(), static_cast<Eigen::Index>(sd.size()));
      ck.standardization = s;
    }
    const auto& g = j.at("graph");
    ck.num_regions = g.at("num_regions").get<int>();
    ck.rho = g.at("rho").get<double>();
    for (const auto& e : g.at("edges")) ck.edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());

    const auto& p = j.at("params");
    ModelParams& m = ck.params;
    m.encoder = detail::mlp_from_json(p.at("encoder"), "encoder");
    m.mean_head = detail::layer_from_json(p.at("mean_head"), "mean_head");
    m.logvar_head = detail::layer_from_json(p.at("logvar_head"), "logvar_head");
    m.decoder = detail::mlp_from_json(p.at("decoder"), "decoder");
    m.predictor = detail::mlp_from_json(p.at("predictor"), "predictor");
    m.mu_table = detail::matrix_from_json(p.at("mu_table"), "mu_table");
    m.raw_tau = p.at("raw_tau").get<double>();
    m.raw_alpha = p.at("raw_alpha").get<double>();
    m.recon_weight = p.at("recon_weight").get<double>();
    m.copula = p.at("copula").get<bool>();
    for (int v : p.at("seen_regions").get<std::vector<int>>()) m.seen_regions.push_back(v ? 1 : 0);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("checkpoint: ") + e.what());
  }
  const ModelParams& m = ck.params;
  require(m.input_dim() == ck.config.p && m.latent_dim() == ck.config.d, ErrorCode::SchemaError,
          "checkpoint tensors disagree with config");
  require(m.mean_head.in_dim() == m.encoder.out_dim() && m.logvar_head.in_dim() == m.encoder.out_dim() &&
              m.logvar_head.out_dim() == ck.config.d,
          ErrorCode::SchemaError, "encoder heads do not match the trunk");
  require(m.decoder.in_dim() == ck.config.d && m.decoder.out_dim() == ck.config.p, ErrorCode::SchemaError,
          "decoder shape disagrees with config");
  require(m.predictor.in_dim() == ck.config.d && m.predictor.out_dim() == 2, ErrorCode::SchemaError,
          "predictor shape disagrees with config");
  require(m.num_regions() == ck.num_regions && static_cast<int>(m.seen_regions.size()) == ck.num_regions &&
              m.mu_table.cols() == ck.config.d,
          ErrorCode::SchemaError, "mu_table shape disagrees with graph");
  require(static_cast<int>(ck.feature_names.size()) == ck.config.p, ErrorCode::SchemaError,
          "feature_names length disagrees with p");
  return ck;
}

inline SpatialGraph checkpoint_graph(const Checkpoint& ck) { return SpatialGraph(ck.num_regions, ck.edges, ck.rho); }

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::IoError, "cannot write checkpoint " + path);
  out << checkpoint_to_json(ck).dump(1) << "\n";
  require(static_cast<bool>(out), ErrorCode::IoError, "write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open checkpoint " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, path + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace scvae
