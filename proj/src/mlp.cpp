#include "gcp/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace gcp {

std::string to_string(Activation a) { return a == Activation::Relu ? "relu" : "tanh"; }

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "tanh") return Activation::Tanh;
  throw Error(ErrorCode::Config, "unknown activation '" + s + "'");
}

void MlpSpec::validate() const {
  if (input_dim == 0 || output_dim == 0) throw Error(ErrorCode::ShapeMismatch, "network dims must be >= 1");
  for (std::size_t h : hidden) {
    if (h == 0) throw Error(ErrorCode::ShapeMismatch, "hidden width must be >= 1");
  }
}

std::vector<std::size_t> MlpSpec::widths() const {
  std::vector<std::size_t> w{input_dim};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(output_dim);
  return w;
}

std::size_t MlpSpec::param_count() const {
  const auto w = widths();
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) n += w[l + 1] * w[l] + w[l + 1];
  return n;
}

Mlp::Mlp(MlpSpec spec) : Mlp(spec, std::vector<double>(spec.param_count(), 0.0)) {}

Mlp::Mlp(MlpSpec spec, std::vector<double> params) : spec_(std::move(spec)), params_(std::move(params)) {
  spec_.validate();
  if (params_.size() != spec_.param_count()) {
    throw Error(ErrorCode::ShapeMismatch, "parameter count " + std::to_string(params_.size()) +
                                              " != " + std::to_string(spec_.param_count()));
  }
  const auto w = spec_.widths();
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    offsets_.push_back(off);
    off += w[l + 1] * w[l] + w[l + 1];
  }
}

std::size_t Mlp::bias_offset(std::size_t layer) const {
  const auto w = spec_.widths();
  return offsets_.at(layer) + w[layer + 1] * w[layer];
}

Mlp Mlp::initialized(MlpSpec spec, std::uint64_t seed, bool zero_final_layer) {
  Mlp net(std::move(spec));
  std::mt19937_64 rng(seed);
  const auto w = net.spec_.widths();
  const std::size_t layers = w.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t count = w[l + 1] * w[l] + w[l + 1];
    if (zero_final_layer && l + 1 == layers) continue;
    const double bound = 1.0 / std::sqrt(static_cast<double>(w[l]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t i = 0; i < count; ++i) net.params_[net.offsets_[l] + i] = dist(rng);
  }
  return net;
}

std::vector<double> Mlp::forward(std::span<const double> x) const {
  if (x.size() != spec_.input_dim) throw Error(ErrorCode::ShapeMismatch, "network input width");
  const auto w = spec_.widths();
  std::vector<double> a(x.begin(), x.end());
  std::vector<double> next;
  const std::size_t layers = w.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const double* weight = params_.data() + offsets_[l];
    const double* bias = weight + w[l + 1] * w[l];
    next.assign(w[l + 1], 0.0);
    for (std::size_t o = 0; o < w[l + 1]; ++o) {
      double acc = bias[o];
      const double* row = weight + o * w[l];
      for (std::size_t i = 0; i < w[l]; ++i) acc += row[i] * a[i];
      if (l + 1 < layers) acc = spec_.activation == Activation::Relu ? std::max(acc, 0.0) : std::tanh(acc);
      next[o] = acc;
    }
    a.swap(next);
  }
  return a;
}

std::vector<Var> mlp_forward(const MlpSpec& spec, std::span<const Var> params, std::span<const Var> x) {
  spec.validate();
  if (params.size() != spec.param_count()) throw Error(ErrorCode::ShapeMismatch, "graph parameter count");
  if (x.size() != spec.input_dim) throw Error(ErrorCode::ShapeMismatch, "network input width");
  const auto w = spec.widths();
  const std::size_t layers = w.size() - 1;
  std::vector<Var> a(x.begin(), x.end());
  std::size_t off = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    std::vector<Var> next(w[l + 1]);
    const std::size_t bias = off + w[l + 1] * w[l];
    for (std::size_t o = 0; o < w[l + 1]; ++o) {
      Var acc = params[bias + o];
      for (std::size_t i = 0; i < w[l]; ++i) acc = acc + params[off + o * w[l] + i] * a[i];
      if (l + 1 < layers) acc = spec.activation == Activation::Relu ? relu(acc) : tanh(acc);
      next[o] = acc;
    }
    off = bias + w[l + 1];
    a = std::move(next);
  }
  return a;
}

void MlpTape::forward(const Mlp& net, std::span<const double> x) {
  const auto& spec = net.spec();
  if (x.size() != spec.input_dim) throw Error(ErrorCode::ShapeMismatch, "network input width");
  const auto w = spec.widths();
  const std::size_t layers = w.size() - 1;
  activations_.resize(w.size());
  activations_[0].assign(x.begin(), x.end());
  const auto params = net.params();
  for (std::size_t l = 0; l < layers; ++l) {
    const double* weight = params.data() + net.weight_offset(l);
    const double* bias = weight + w[l + 1] * w[l];
    const auto& in = activations_[l];
    auto& out = activations_[l + 1];
    out.resize(w[l + 1]);
    const bool hidden = l + 1 < layers;
    for (std::size_t o = 0; o < w[l + 1]; ++o) {
      double acc = bias[o];
      const double* row = weight + o * w[l];
      for (std::size_t i = 0; i < w[l]; ++i) acc += row[i] * in[i];
      if (hidden) acc = spec.activation == Activation::Relu ? std::max(acc, 0.0) : std::tanh(acc);
      out[o] = acc;
    }
  }
}

void MlpTape::backward(const Mlp& net, std::span<const double> d_output, std::span<double> grad) {
  const auto& spec = net.spec();
  const auto w = spec.widths();
  const std::size_t layers = w.size() - 1;
  if (d_output.size() != spec.output_dim) throw Error(ErrorCode::ShapeMismatch, "output gradient width");
  if (grad.size() != spec.param_count()) throw Error(ErrorCode::ShapeMismatch, "gradient buffer size");
  const auto params = net.params();
  delta_.assign(d_output.begin(), d_output.end());
  for (std::size_t l = layers; l-- > 0;) {
    const std::size_t in_w = w[l];
    const std::size_t out_w = w[l + 1];
    const double* weight = params.data() + net.weight_offset(l);
    double* g_weight = grad.data() + net.weight_offset(l);
    double* g_bias = g_weight + out_w * in_w;
    const auto& in = activations_[l];
    for (std::size_t o = 0; o < out_w; ++o) {
      const double d = delta_[o];
      g_bias[o] += d;
      if (d == 0.0) continue;
      double* g_row = g_weight + o * in_w;
      for (std::size_t i = 0; i < in_w; ++i) g_row[i] += d * in[i];
    }
    if (l == 0) break;
    delta_prev_.assign(in_w, 0.0);
    for (std::size_t o = 0; o < out_w; ++o) {
      const double d = delta_[o];
      if (d == 0.0) continue;
      const double* row = weight + o * in_w;
      for (std::size_t i = 0; i < in_w; ++i) delta_prev_[i] += row[i] * d;
    }
    // `in` holds post-activation values of hidden layer l
    for (std::size_t i = 0; i < in_w; ++i) {
      if (spec.activation == Activation::Relu) {
        if (!(in[i] > 0.0)) delta_prev_[i] = 0.0;
      } else {
        delta_prev_[i] *= 1.0 - in[i] * in[i];
      }
    }
    delta_.swap(delta_prev_);
  }
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr) {
  if (params.size() != grads.size()) throw Error(ErrorCode::ShapeMismatch, "adam gradient size");
  if (state.first_moment.size() != params.size()) {
    state.first_moment.assign(params.size(), 0.0);
    state.second_moment.assign(params.size(), 0.0);
    state.step = 0;
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * g;
    v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * g * g;
    params[i] -= lr * (m / c1) / (std::sqrt(v / c2) + kAdamEpsilon);
  }
}

double cosine_lr(double base_lr, std::size_t epoch, std::size_t total_epochs) {
  if (epoch > total_epochs) throw Error(ErrorCode::DomainError, "epoch beyond schedule");
  if (total_epochs == 0) return base_lr;
  const double t = static_cast<double>(epoch) / static_cast<double>(total_epochs);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

void TrainConfig::validate() const {
  if (epochs == 0) throw Error(ErrorCode::Config, "train.epochs must be positive");
  if (batch_size == 0) throw Error(ErrorCode::Config, "train.batch_size must be positive");
  if (!(lr_mean > 0.0)) throw Error(ErrorCode::Config, "train.lr_mean must be positive");
  if (!(lr_factor > 0.0)) throw Error(ErrorCode::Config, "train.lr_factor must be positive");
}

double TrainConfig::lr_at(double base, std::size_t epoch) const {
  return schedule == Schedule::Cosine ? cosine_lr(base, epoch, epochs) : base;
}

}  // namespace gcp
