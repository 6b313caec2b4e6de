#pragma once

// Dense multilayer perceptron with exact reverse-mode gradients and minibatch SGD.
//
// Samples are stored column-wise: a batch of B inputs is a (d_in x B) matrix.
// Gradients returned by backward() are sums over the batch columns; callers
// scale the upstream gradient by 1/B to get minibatch averages.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gs2rs/errors.hpp"

namespace gs2rs::nn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Activation { relu, tanh, sigmoid, identity };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
    case Activation::identity: return "identity";
  }
  return "?";
}

inline Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "identity") return Activation::identity;
  throw ConfigError("unknown activation '" + s + "'");
}

inline void activate(Activation a, Matrix& z) {
  switch (a) {
    case Activation::relu: z = z.cwiseMax(0.0); break;
    case Activation::tanh: z = z.array().tanh().matrix(); break;
    case Activation::sigmoid: z = (1.0 / (1.0 + (-z.array()).exp())).matrix(); break;
    case Activation::identity: break;
  }
}

// d act / d z, expressed through the activation output a = act(z).
inline Matrix activation_derivative(Activation act, const Matrix& a) {
  switch (act) {
    case Activation::relu: return (a.array() > 0.0).cast<double>().matrix();
    case Activation::tanh: return (1.0 - a.array().square()).matrix();
    case Activation::sigmoid: return (a.array() * (1.0 - a.array())).matrix();
    case Activation::identity: break;
  }
  return Matrix::Ones(a.rows(), a.cols());
}

struct Layer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

class Mlp {
 public:
  Mlp() = default;

  // Seeded uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases.
  Mlp(std::vector<std::size_t> sizes, Activation hidden, Activation output, std::uint64_t seed)
      : sizes_(std::move(sizes)), hidden_(hidden), output_(output) {
    if (sizes_.size() < 2) throw ValidationError("an Mlp needs at least input and output sizes");
    for (auto s : sizes_)
      if (s == 0) throw ValidationError("layer sizes must be positive");
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
      std::uniform_real_distribution<double> dist(-bound, bound);
      Layer layer{Matrix(sizes_[l + 1], sizes_[l]), Vector(sizes_[l + 1])};
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c)
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) layer.weight(r, c) = dist(rng);
      for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = dist(rng);
      layers_.push_back(std::move(layer));
    }
  }

  static Mlp zeros(std::vector<std::size_t> sizes, Activation hidden, Activation output) {
    Mlp net(std::move(sizes), hidden, output, 0);
    for (auto& l : net.layers_) {
      l.weight.setZero();
      l.bias.setZero();
    }
    return net;
  }

  const std::vector<std::size_t>& sizes() const noexcept { return sizes_; }
  std::size_t input_dim() const { return sizes_.front(); }
  std::size_t output_dim() const { return sizes_.back(); }
  Activation hidden_activation() const noexcept { return hidden_; }
  Activation output_activation() const noexcept { return output_; }
  std::span<Layer> layers() noexcept { return layers_; }
  std::span<const Layer> layers() const noexcept { return layers_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) n += sizes_[l] * sizes_[l + 1] + sizes_[l + 1];
    return n;
  }

  Activation activation_of(std::size_t layer) const {
    return layer + 1 == layers_.size() ? output_ : hidden_;
  }

  friend bool operator==(const Mlp& a, const Mlp& b) {
    if (a.sizes_ != b.sizes_ || a.hidden_ != b.hidden_ || a.output_ != b.output_) return false;
    for (std::size_t l = 0; l < a.layers_.size(); ++l)
      if (a.layers_[l].weight != b.layers_[l].weight || a.layers_[l].bias != b.layers_[l].bias) return false;
    return true;
  }

 private:
  std::vector<std::size_t> sizes_;
  Activation hidden_ = Activation::relu;
  Activation output_ = Activation::sigmoid;
  std::vector<Layer> layers_;
};

// Per-layer activations of one forward pass; activations[0] is the input batch.
struct ForwardCache {
  std::vector<Matrix> activations;

  const Matrix& output() const { return activations.back(); }
  bool empty() const noexcept { return activations.empty(); }
};

struct Gradients {
  std::vector<Matrix> weight;
  std::vector<Vector> bias;
  Matrix input;  // d loss / d input, (d_in x B)

  static Gradients zeros_like(const Mlp& net) {
    Gradients g;
    for (const auto& l : net.layers()) {
      g.weight.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
      g.bias.push_back(Vector::Zero(l.bias.size()));
    }
    return g;
  }

  Gradients& operator+=(const Gradients& o) {
    for (std::size_t l = 0; l < weight.size(); ++l) {
      weight[l] += o.weight[l];
      bias[l] += o.bias[l];
    }
    return *this;
  }

  bool all_finite() const {
    for (std::size_t l = 0; l < weight.size(); ++l)
      if (!weight[l].allFinite() || !bias[l].allFinite()) return false;
    return true;
  }
};

inline ForwardCache forward_cached(const Mlp& net, const Matrix& x) {
  if (static_cast<std::size_t>(x.rows()) != net.input_dim())
    throw ValidationError("forward: input has " + std::to_string(x.rows()) + " rows, network expects " +
                          std::to_string(net.input_dim()));
  ForwardCache cache;
  cache.activations.reserve(net.layers().size() + 1);
  cache.activations.push_back(x);
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    const auto& layer = net.layers()[l];
    Matrix z = layer.weight * cache.activations.back();
    z.colwise() += layer.bias;
    activate(net.activation_of(l), z);
    cache.activations.push_back(std::move(z));
  }
  return cache;
}

inline Matrix forward(const Mlp& net, const Matrix& x) { return forward_cached(net, x).output(); }

inline Vector forward(const Mlp& net, const Vector& x) {
  return forward_cached(net, Matrix(x)).output().col(0);
}

inline Gradients backward(const Mlp& net, const ForwardCache& cache, const Matrix& upstream) {
  if (cache.activations.size() != net.layers().size() + 1)
    throw ValidationError("backward: no matching cached forward pass");
  if (static_cast<std::size_t>(upstream.rows()) != net.output_dim() ||
      upstream.cols() != cache.output().cols())
    throw ValidationError("backward: upstream gradient shape mismatch");
  Gradients g;
  const std::size_t L = net.layers().size();
  g.weight.resize(L);
  g.bias.resize(L);
  Matrix delta = upstream.cwiseProduct(activation_derivative(net.activation_of(L - 1), cache.activations[L]));
  for (std::size_t l = L; l-- > 0;) {
    g.weight[l] = delta * cache.activations[l].transpose();
    g.bias[l] = delta.rowwise().sum();
    Matrix back = net.layers()[l].weight.transpose() * delta;
    if (l == 0) {
      g.input = std::move(back);
    } else {
      delta = back.cwiseProduct(activation_derivative(net.activation_of(l - 1), cache.activations[l]));
    }
  }
  return g;
}

inline Gradients backward(const Mlp& net, const Vector& x, const Vector& upstream) {
  return backward(net, forward_cached(net, Matrix(x)), Matrix(upstream));
}

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t batch_size = 32;
  std::size_t epochs = 50;
  std::uint64_t seed = 42;

  void validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
      throw ValidationError("learning_rate must be > 0");
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  }
};

// theta <- theta - lr * grad. Gradients must already be minibatch averages.
inline void sgd_step(Mlp& net, const Gradients& grads, double learning_rate) {
  if (grads.weight.size() != net.layers().size()) throw ValidationError("sgd_step: gradient shape mismatch");
  if (!grads.all_finite()) throw NumericalError("sgd_step: non-finite gradient");
  for (std::size_t l = 0; l < grads.weight.size(); ++l) {
    auto& layer = net.layers()[l];
    if (grads.weight[l].rows() != layer.weight.rows() || grads.weight[l].cols() != layer.weight.cols() ||
        grads.bias[l].size() != layer.bias.size())
      throw ValidationError("sgd_step: gradient shape mismatch");
    layer.weight -= learning_rate * grads.weight[l];
    layer.bias -= learning_rate * grads.bias[l];
  }
}

inline Mlp sgd_step(Mlp net, const Gradients& grads, const TrainConfig& cfg) {
  cfg.validate();
  sgd_step(net, grads, cfg.learning_rate);
  return net;
}

inline constexpr double kProbabilityEpsilon = 1e-7;

inline double clamp_probability(double p) {
  return std::clamp(p, kProbabilityEpsilon, 1.0 - kProbabilityEpsilon);
}

struct BceTerms {
  double real_term;
  double fake_term;
};

// ln D(real) and ln D(fake) on clamped probabilities; callers compose signs.
inline BceTerms bce_terms(double d_real, double d_fake) {
  return {std::log(clamp_probability(d_real)), std::log(clamp_probability(d_fake))};
}

// Checkpoint: text header plus hex-float parameters, exact on round trip.
inline void write_mlp(const Mlp& net, std::ostream& out) {
  out << "gs2rs-mlp 1\n";
  out << "activations " << to_string(net.hidden_activation()) << ' ' << to_string(net.output_activation()) << '\n';
  out << "sizes " << net.sizes().size();
  for (auto s : net.sizes()) out << ' ' << s;
  out << '\n';
  char buf[40];
  auto put = [&](double v, char sep) {
    std::snprintf(buf, sizeof buf, "%a", v);
    out << buf << sep;
  };
  for (const auto& l : net.layers()) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) put(l.weight(r, c), c + 1 == l.weight.cols() ? '\n' : ' ');
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) put(l.bias(r), r + 1 == l.bias.size() ? '\n' : ' ');
  }
}

inline Mlp read_mlp(std::istream& in) {
  std::string word;
  int version = 0;
  if (!(in >> word >> version) || word != "gs2rs-mlp" || version != 1) throw ParseError("not an mlp checkpoint", 0);
  std::string hidden, output;
  if (!(in >> word >> hidden >> output) || word != "activations") throw ParseError("expected activations", 0);
  std::size_t n = 0;
  if (!(in >> word >> n) || word != "sizes" || n < 2) throw ParseError("expected sizes", 0);
  std::vector<std::size_t> sizes(n);
  for (auto& s : sizes)
    if (!(in >> s)) throw ParseError("truncated sizes", 0);
  Mlp net = Mlp::zeros(sizes, parse_activation(hidden), parse_activation(output));
  auto get = [&]() {
    std::string tok;
    if (!(in >> tok)) throw ParseError("truncated parameters", 0);
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end != tok.c_str() + tok.size()) throw ParseError("bad parameter '" + tok + "'", 0);
    return v;
  };
  for (auto& l : net.layers()) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = get();
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = get();
  }
  return net;
}

}  // namespace gs2rs::nn
