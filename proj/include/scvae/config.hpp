#pragma once

#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "scvae/dataset.hpp"
#include "scvae/errors.hpp"
#include "scvae/model.hpp"
#include "scvae/synthetic.hpp"
#include "scvae/trainer.hpp"

namespace scvae {

/// Flat `key = value` text with `#` comments. Every lookup marks its key
/// as consumed; finish() rejects keys nobody asked for.
class KeyValueConfig {
 public:
  struct Entry {
    std::string value;
    int line = 0;
  };

  static KeyValueConfig parse(std::istream& in, const std::string& source = "config") {
    KeyValueConfig cfg;
    cfg.source_ = source;
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
      ++line_no;
      const auto hash = raw.find('#');
      std::string line = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw Error(ErrorCode::ParseError, cfg.where(line_no) + ": expected key = value, got '" + line + "'");
      }
      const std::string key = detail::trim(line.substr(0, eq));
      const std::string value = detail::trim(line.substr(eq + 1));
      if (key.empty()) throw Error(ErrorCode::ParseError, cfg.where(line_no) + ": empty key");
      if (cfg.entries_.count(key)) {
        throw Error(ErrorCode::ParseError, cfg.where(line_no) + ": duplicate key '" + key + "' (first on line " +
                                               std::to_string(cfg.entries_[key].line) + ")");
      }
      cfg.entries_[key] = {value, line_no};
      cfg.order_.push_back(key);
    }
    return cfg;
  }

  static KeyValueConfig parse_string(const std::string& text, const std::string& source = "config") {
    std::istringstream in(text);
    return parse(in, source);
  }

  static KeyValueConfig read(const std::string& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorCode::IoError, "cannot open config " + path);
    return parse(in, path);
  }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  /// Keys starting with `prefix`, in file order.
  std::vector<std::string> keys_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& k : order_)
      if (k.rfind(prefix, 0) == 0) out.push_back(k);
    return out;
  }

  std::string get_string(const std::string& key, const std::string& fallback) {
    return lookup(key) ? current_->value : fallback;
  }
  std::string require_string(const std::string& key) {
    need(key);
    return current_->value;
  }

  double get_double(const std::string& key, double fallback) {
    return lookup(key) ? to_double(key, current_->value) : fallback;
  }
  double require_double(const std::string& key) {
    need(key);
    return to_double(key, current_->value);
  }

  long long get_int(const std::string& key, long long fallback) {
    return lookup(key) ? to_int(key, current_->value) : fallback;
  }
  long long require_int(const std::string& key) {
    need(key);
    return to_int(key, current_->value);
  }

  bool get_bool(const std::string& key, bool fallback) {
    if (!lookup(key)) return fallback;
    const std::string& v = current_->value;
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw Error(ErrorCode::ParseError, where(current_->line) + ": key '" + key + "' expects a boolean, got '" + v + "'");
  }

  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) {
    if (!lookup(key)) return fallback;
    std::vector<double> out;
    for (const auto& item : split_list(current_->value)) out.push_back(to_double(key, item));
    return out;
  }

  std::vector<int> get_ints(const std::string& key, const std::vector<int>& fallback) {
    if (!lookup(key)) return fallback;
    std::vector<int> out;
    for (const auto& item : split_list(current_->value)) out.push_back(static_cast<int>(to_int(key, item)));
    return out;
  }

  std::vector<std::string> get_strings(const std::string& key, const std::vector<std::string>& fallback) {
    return lookup(key) ? split_list(current_->value) : fallback;
  }

  /// Unknown keys are hard errors.
  void finish() const {
    for (const auto& k : order_) {
      if (!consumed_.count(k)) {
        throw Error(ErrorCode::ParseError,
                    where(entries_.at(k).line) + ": unknown key '" + k + "'");
      }
    }
  }

  /// Consumed keys with their values, in file order.
  std::vector<std::pair<std::string, std::string>> consumed_entries() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& k : order_)
      if (consumed_.count(k)) out.emplace_back(k, entries_.at(k).value);
    return out;
  }

 private:
  std::map<std::string, Entry> entries_;
  std::vector<std::string> order_;
  std::set<std::string> consumed_;
  const Entry* current_ = nullptr;
  std::string source_;

  std::string where(int line) const { return source_ + ":" + std::to_string(line); }

  bool lookup(const std::string& key) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return false;
    consumed_.insert(key);
    current_ = &it->second;
    return true;
  }

  void need(const std::string& key) {
    if (!lookup(key)) throw Error(ErrorCode::ParseError, source_ + ": missing required key '" + key + "'");
  }

  double to_double(const std::string& key, const std::string& v) const {
    double out = 0.0;
    if (!detail::parse_double(v, out)) {
      throw Error(ErrorCode::ParseError,
                  where(current_->line) + ": key '" + key + "' expects a number, got '" + v + "'");
    }
    return out;
  }

  long long to_int(const std::string& key, const std::string& v) const {
    long long out = 0;
    if (!detail::parse_int(v, out)) {
      throw Error(ErrorCode::ParseError,
                  where(current_->line) + ": key '" + key + "' expects an integer, got '" + v + "'");
    }
    return out;
  }

  static std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(v);
    while (std::getline(in, item, ',')) {
      item = detail::trim(item);
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Typed sections. `prefix` lets one file hold several sections.

inline SimConfig read_sim_config(KeyValueConfig& kv, const std::string& prefix = "", bool require_n = true) {
  SimConfig c;
  c.n = static_cast<int>(require_n ? kv.require_int(prefix + "n") : kv.get_int(prefix + "n", c.n));
  c.d = static_cast<int>(kv.get_int(prefix + "d", c.d));
  c.p = static_cast<int>(kv.get_int(prefix + "p", c.p));
  c.rho = kv.get_double(prefix + "rho", c.rho);
  c.alpha_true = kv.get_double(prefix + "alpha", c.alpha_true);
  c.sigma2_z = kv.get_double(prefix + "sigma2_z", c.sigma2_z);
  c.sigma2_x = kv.get_double(prefix + "sigma2_x", c.sigma2_x);
  c.noise_sigma2 = kv.get_double(prefix + "noise_sigma2", c.noise_sigma2);
  c.seed = static_cast<std::uint64_t>(kv.get_int(prefix + "seed", static_cast<long long>(c.seed)));
  const std::string graph = kv.get_string(prefix + "graph", "grid");
  if (graph == "grid") {
    c.graph = GraphKind::grid;
    if (kv.has(prefix + "L")) {
      // L alone: square grid when L is a perfect square, else a 1 x L chain
      const int L = static_cast<int>(kv.require_int(prefix + "L"));
      require(L >= 1, ErrorCode::InvalidArgument, "L must be positive");
      int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(L))));
      if (side * side == L) {
        c.grid_rows = c.grid_cols = side;
      } else {
        c.grid_rows = 1;
        c.grid_cols = L;
      }
    }
    c.grid_rows = static_cast<int>(kv.get_int(prefix + "grid_rows", c.grid_rows));
    c.grid_cols = static_cast<int>(kv.get_int(prefix + "grid_cols", c.grid_cols));
  } else if (graph == "random_geometric") {
    c.graph = GraphKind::random_geometric;
    c.rgg_regions = static_cast<int>(kv.get_int(prefix + "L", c.rgg_regions));
    c.rgg_radius = kv.get_double(prefix + "radius", c.rgg_radius);
  } else if (graph == "edge_list") {
    c.graph = GraphKind::edge_list;
    c.adjacency_path = kv.require_string(prefix + "adjacency");
  } else {
    throw Error(ErrorCode::ParseError, "graph must be grid, random_geometric or edge_list, got '" + graph + "'");
  }
  c.hot_shift = kv.get_double(prefix + "hot_shift", c.hot_shift);
  c.hot_regions = static_cast<int>(kv.get_int(prefix + "hot_regions", c.hot_regions));
  c.validate();
  return c;
}

/// `p` is taken from the data, not the file.
inline ModelConfig read_model_config(KeyValueConfig& kv, int p, const std::string& prefix = "") {
  ModelConfig c;
  c.p = p;
  c.d = static_cast<int>(kv.get_int(prefix + "d", c.d));
  c.encoder_hidden = kv.get_ints(prefix + "encoder_hidden", c.encoder_hidden);
  c.decoder_hidden = kv.get_ints(prefix + "decoder_hidden", c.decoder_hidden);
  c.predictor_hidden = kv.get_ints(prefix + "predictor_hidden", c.predictor_hidden);
  c.recon_weight = kv.get_double(prefix + "lambda", c.recon_weight);
  c.tau_init = kv.get_double(prefix + "tau_init", c.tau_init);
  c.alpha_init = kv.get_double(prefix + "alpha_init", c.alpha_init);
  c.prior_z_variance = kv.get_double(prefix + "prior_z_variance", c.prior_z_variance);
  c.copula = kv.get_bool(prefix + "copula", c.copula);
  c.validate();
  return c;
}

inline TrainConfig read_train_config(KeyValueConfig& kv, const std::string& prefix = "") {
  TrainConfig c;
  c.batch_size = static_cast<int>(kv.get_int(prefix + "batch_size", c.batch_size));
  c.max_epochs = static_cast<int>(kv.get_int(prefix + "max_epochs", c.max_epochs));
  c.patience = static_cast<int>(kv.get_int(prefix + "patience", c.patience));
  c.validation_fraction = kv.get_double(prefix + "validation_fraction", c.validation_fraction);
  c.learning_rate = kv.get_double(prefix + "learning_rate", c.learning_rate);
  c.seed = static_cast<std::uint64_t>(kv.get_int(prefix + "seed", static_cast<long long>(c.seed)));
  c.train_fraction = kv.get_double(prefix + "train_fraction", c.train_fraction);
  c.holdout_regions = static_cast<int>(kv.get_int(prefix + "holdout_regions", c.holdout_regions));
  c.validate();
  return c;
}

}  // namespace scvae
