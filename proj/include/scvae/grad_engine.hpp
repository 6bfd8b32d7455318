#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "scvae/errors.hpp"
#include "scvae/random.hpp"

namespace scvae {

enum class Activation { relu, identity };

/// Subgradient of ReLU at exactly zero.
inline constexpr double kReluGradAtZero = 0.0;

inline double relu_derivative(double pre_activation) {
  if (pre_activation > 0.0) return 1.0;
  if (pre_activation < 0.0) return 0.0;
  return kReluGradAtZero;
}

struct DenseLayer {
  Eigen::MatrixXd weights;  // out_dim x in_dim
  Eigen::VectorXd biases;   // out_dim

  DenseLayer() = default;
  DenseLayer(int in_dim, int out_dim)
      : weights(Eigen::MatrixXd::Zero(out_dim, in_dim)), biases(Eigen::VectorXd::Zero(out_dim)) {}

  int in_dim() const { return static_cast<int>(weights.cols()); }
  int out_dim() const { return static_cast<int>(weights.rows()); }

  /// Uniform +-sqrt(6 / (in + out)) weights, zero biases.
  void initialize(RandomStream& rng) {
    const double bound = std::sqrt(6.0 / (in_dim() + out_dim()));
    std::uniform_real_distribution<double> unif(-bound, bound);
    for (Eigen::Index j = 0; j < weights.cols(); ++j)
      for (Eigen::Index i = 0; i < weights.rows(); ++i) weights(i, j) = unif(rng);
    biases.setZero();
  }
};

/// Inputs and pre-activations retained by a forward call; columns are samples.
struct LayerCache {
  Eigen::MatrixXd input;
  Eigen::MatrixXd pre_activation;
  Activation activation = Activation::identity;
};

struct LayerGrads {
  Eigen::MatrixXd weights;
  Eigen::VectorXd biases;
};

inline Eigen::MatrixXd dense_forward(const DenseLayer& layer, const Eigen::MatrixXd& input,
                                     Activation activation, LayerCache* cache = nullptr) {
  require(input.rows() == layer.in_dim(), ErrorCode::DimensionMismatch,
          "layer expects input dim " + std::to_string(layer.in_dim()) + ", got " +
              std::to_string(input.rows()));
  Eigen::MatrixXd pre = layer.weights * input;
  pre.colwise() += layer.biases;
  Eigen::MatrixXd out = activation == Activation::relu ? Eigen::MatrixXd(pre.cwiseMax(0.0)) : pre;
  if (cache) {
    cache->input = input;
    cache->pre_activation = std::move(pre);
    cache->activation = activation;
  }
  return out;
}

/// Returns the input gradient; parameter gradients are written to `grads`
/// (overwritten, not accumulated).
inline Eigen::MatrixXd dense_backward(const DenseLayer& layer, const LayerCache& cache,
                                      const Eigen::MatrixXd& upstream, LayerGrads& grads) {
  require(upstream.rows() == cache.pre_activation.rows() &&
              upstream.cols() == cache.pre_activation.cols(),
          ErrorCode::DimensionMismatch, "upstream gradient shape does not match cache");
  Eigen::MatrixXd delta = upstream;
  if (cache.activation == Activation::relu) {
    delta = delta.cwiseProduct(cache.pre_activation.unaryExpr(&relu_derivative));
  }
  grads.weights = delta * cache.input.transpose();
  grads.biases = delta.rowwise().sum();
  return layer.weights.transpose() * delta;
}

/// Chain of dense layers: ReLU on hidden layers, configurable output activation.
class Mlp {
 public:
  Mlp() = default;

  /// dims = {in, h1, ..., out}; a single entry yields the identity network.
  explicit Mlp(const std::vector<int>& dims, Activation output = Activation::identity)
      : output_activation_(output) {
    require(!dims.empty(), ErrorCode::InvalidArgument, "Mlp needs at least an input dimension");
    in_dim_ = dims.front();
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) layers_.emplace_back(dims[i], dims[i + 1]);
  }

  int in_dim() const { return in_dim_; }
  int out_dim() const { return layers_.empty() ? in_dim_ : layers_.back().out_dim(); }
  std::size_t depth() const { return layers_.size(); }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  Activation output_activation() const { return output_activation_; }

  Activation activation_of(std::size_t i) const {
    return i + 1 == layers_.size() ? output_activation_ : Activation::relu;
  }

  void initialize(RandomStream& rng) {
    for (auto& l : layers_) l.initialize(rng);
  }

  void set_zero() {
    for (auto& l : layers_) {
      l.weights.setZero();
      l.biases.setZero();
    }
  }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& input, std::vector<LayerCache>* caches = nullptr) const {
    require(input.rows() == in_dim_, ErrorCode::DimensionMismatch,
            "network expects input dim " + std::to_string(in_dim_) + ", got " +
                std::to_string(input.rows()));
    if (caches) caches->resize(layers_.size());
    Eigen::MatrixXd h = input;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      h = dense_forward(layers_[i], h, activation_of(i), caches ? &(*caches)[i] : nullptr);
    }
    return h;
  }

  /// Accumulates parameter gradients into `grads` (same architecture) and
  /// returns the gradient with respect to the network input.
  Eigen::MatrixXd backward(const std::vector<LayerCache>& caches, const Eigen::MatrixXd& upstream,
                           Mlp& grads) const {
    require(caches.size() == layers_.size(), ErrorCode::DimensionMismatch, "cache depth mismatch");
    Eigen::MatrixXd g = upstream;
    LayerGrads lg;
    for (std::size_t k = layers_.size(); k-- > 0;) {
      g = dense_backward(layers_[k], caches[k], g, lg);
      grads.layers_[k].weights += lg.weights;
      grads.layers_[k].biases += lg.biases;
    }
    return g;
  }

  template <class Visitor>
  void visit(std::string_view prefix, Visitor&& v) {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      v(std::string(prefix) + ".W" + std::to_string(i), layers_[i].weights.data(),
        layers_[i].weights.size());
      v(std::string(prefix) + ".b" + std::to_string(i), layers_[i].biases.data(),
        layers_[i].biases.size());
    }
  }

 private:
  int in_dim_ = 0;
  Activation output_activation_ = Activation::identity;
  std::vector<DenseLayer> layers_;
};

// ---------------------------------------------------------------------------
// Adam

struct TensorRef {
  std::string name;
  double* data = nullptr;
  Eigen::Index size = 0;
};

/// Flattens any parameter container exposing `visit(visitor)` with a
/// visitor signature (name, double*, size).
template <class Params>
std::vector<TensorRef> tensors_of(Params& params) {
  std::vector<TensorRef> out;
  params.visit([&out](std::string name, double* data, Eigen::Index size) {
    out.push_back({std::move(name), data, size});
  });
  return out;
}

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<Eigen::VectorXd> first_moment;
  std::vector<Eigen::VectorXd> second_moment;
  long step = 0;
};

/// One Adam descent step on `params` given `grads` of the loss. Throws
/// NonFiniteGradient (naming the tensor) before touching any parameter.
template <class Params>
void adam_update(Params& params, Params& grads, AdamState& state) {
  auto p = tensors_of(params);
  auto g = tensors_of(grads);
  require(p.size() == g.size(), ErrorCode::DimensionMismatch, "gradient tensor count");
  for (std::size_t i = 0; i < p.size(); ++i) {
    require(p[i].size == g[i].size, ErrorCode::DimensionMismatch, "gradient shape for " + p[i].name);
    Eigen::Map<const Eigen::VectorXd> gi(g[i].data, g[i].size);
    require(gi.allFinite(), ErrorCode::NonFiniteGradient, "non-finite gradient in " + p[i].name);
  }
  if (state.first_moment.empty()) {
    for (auto& t : p) {
      state.first_moment.push_back(Eigen::VectorXd::Zero(t.size));
      state.second_moment.push_back(Eigen::VectorXd::Zero(t.size));
    }
  }
  require(state.first_moment.size() == p.size(), ErrorCode::DimensionMismatch, "Adam state shape");
  ++state.step;
  const auto& c = state.config;
  const double bias1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < p.size(); ++i) {
    Eigen::Map<Eigen::VectorXd> theta(p[i].data, p[i].size);
    Eigen::Map<const Eigen::VectorXd> gi(g[i].data, g[i].size);
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    m = c.beta1 * m + (1.0 - c.beta1) * gi;
    v = c.beta2 * v + (1.0 - c.beta2) * gi.cwiseAbs2();
    theta.array() -= c.learning_rate * (m.array() / bias1) /
                     ((v.array() / bias2).sqrt() + c.epsilon);
  }
}

}  // namespace scvae
