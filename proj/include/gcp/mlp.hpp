#pragma once

// Feed-forward networks, Adam and the cosine learning-rate schedule.
//
// A network can be evaluated three ways: on plain doubles (inference), on a
// scalar Graph (used for gradient checks and small losses), or through
// MlpTape, a dense forward/backward pass used by the trainer. The dense pass is
// checked against the graph pass in the unit tests.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gcp/autodiff.hpp"

namespace gcp {

enum class Activation { Relu, Tanh };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct MlpSpec {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden;
  std::size_t output_dim = 1;
  Activation activation = Activation::Relu;

  void validate() const;
  /// input, hidden..., output
  std::vector<std::size_t> widths() const;
  std::size_t layer_count() const { return hidden.size() + 1; }
  std::size_t param_count() const;

  bool operator==(const MlpSpec&) const = default;
};

/// Network parameters, laid out per layer as W (out x in, row-major) then b.
class Mlp {
 public:
  Mlp() = default;
  /// All parameters zero.
  explicit Mlp(MlpSpec spec);
  Mlp(MlpSpec spec, std::vector<double> params);

  /// Uniform(+-1/sqrt(fan_in)) initialization. With zero_final_layer the last
  /// affine map starts at zero, so the initial output is exactly zero.
  static Mlp initialized(MlpSpec spec, std::uint64_t seed, bool zero_final_layer = false);

  const MlpSpec& spec() const noexcept { return spec_; }
  std::span<const double> params() const noexcept { return params_; }
  std::span<double> params() noexcept { return params_; }

  std::vector<double> forward(std::span<const double> x) const;

  /// Offset of layer l's weight block inside params().
  std::size_t weight_offset(std::size_t layer) const { return offsets_.at(layer); }
  std::size_t bias_offset(std::size_t layer) const;

 private:
  MlpSpec spec_;
  std::vector<double> params_;
  std::vector<std::size_t> offsets_;
};

/// Graph evaluation; params must hold spec.param_count() variables.
std::vector<Var> mlp_forward(const MlpSpec& spec, std::span<const Var> params, std::span<const Var> x);

/// Dense forward pass that keeps the activations needed by backward().
class MlpTape {
 public:
  void forward(const Mlp& net, std::span<const double> x);
  std::span<const double> output() const { return activations_.back(); }

  /// Accumulates d loss / d params into grad given d loss / d output.
  void backward(const Mlp& net, std::span<const double> d_output, std::span<double> grad);

 private:
  std::vector<std::vector<double>> activations_;  // [0] = input
  std::vector<double> delta_;
  std::vector<double> delta_prev_;
};

struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step = 0;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr);

/// base_lr * (1 + cos(pi * epoch / total)) / 2
double cosine_lr(double base_lr, std::size_t epoch, std::size_t total_epochs);

enum class Schedule { Cosine, Constant };

struct TrainConfig {
  std::size_t epochs = 250;
  std::size_t batch_size = 100;
  double lr_mean = 1e-4;
  double lr_factor = 5e-3;
  std::uint64_t seed = 0;
  Schedule schedule = Schedule::Cosine;

  void validate() const;
  double lr_at(double base, std::size_t epoch) const;
};

}  // namespace gcp
