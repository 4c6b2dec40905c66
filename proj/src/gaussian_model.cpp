#include "gcp/gaussian_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "gcp/random.hpp"

namespace gcp {

std::size_t factor_dim(std::size_t n) {
  std::size_t k = 0;
  while (factor_size(k) < n) ++k;
  if (n == 0 || factor_size(k) != n) {
    throw Error(ErrorCode::ShapeMismatch, "raw factor length " + std::to_string(n) + " is not triangular");
  }
  return k;
}

Prediction::Prediction(Vector mean, LowerTriangular factor) : mean_(std::move(mean)), factor_(std::move(factor)) {
  if (factor_.dim() != mean_.size()) throw Error(ErrorCode::ShapeMismatch, "factor and mean dimensions differ");
  lambda_ = gram_lower(factor_);
  const Matrix lambda_inv = spd_inverse(factor_);
  sigma_ = symmetrize(matmul(lambda_inv, lambda_inv));
}

double nll_loss(const Prediction& p, std::span<const double> y) {
  return nll_loss(std::span<const double>(p.mean()), p.factor(), y);
}

double masked_nll_loss(const Prediction& p, std::span<const double> y, std::span<const std::size_t> observed) {
  return masked_nll_loss(std::span<const double>(p.mean()), p.factor(), y, observed);
}

GaussianDensityModel::GaussianDensityModel(Mlp mean_net, Mlp factor_net)
    : mean_net_(std::move(mean_net)), factor_net_(std::move(factor_net)) {
  const auto& m = mean_net_.spec();
  const auto& f = factor_net_.spec();
  if (m.input_dim != f.input_dim) throw Error(ErrorCode::ShapeMismatch, "networks disagree on input width");
  if (f.output_dim != factor_size(m.output_dim)) {
    throw Error(ErrorCode::ShapeMismatch, "factor network must output k(k+1)/2 values");
  }
}

GaussianDensityModel GaussianDensityModel::create(std::size_t input_dim, std::size_t output_dim,
                                                  const NetworkConfig& config, std::uint64_t seed) {
  MlpSpec mean{input_dim, config.mean_hidden, output_dim, config.activation};
  MlpSpec factor{input_dim, config.factor_hidden, factor_size(output_dim), config.activation};
  auto rng = make_rng(seed, 0x6d6f64656c);
  const std::uint64_t mean_seed = rng();
  const std::uint64_t factor_seed = rng();
  return GaussianDensityModel(Mlp::initialized(mean, mean_seed), Mlp::initialized(factor, factor_seed, true));
}

Vector GaussianDensityModel::predict_mean(std::span<const double> x) const {
  if (x.size() != input_dim()) throw Error(ErrorCode::ShapeMismatch, "input width " + std::to_string(x.size()));
  return mean_net_.forward(x);
}

Prediction GaussianDensityModel::predict(std::span<const double> x) const {
  if (x.size() != input_dim()) throw Error(ErrorCode::ShapeMismatch, "input width " + std::to_string(x.size()));
  const auto raw = factor_net_.forward(x);
  return Prediction(mean_net_.forward(x), assemble_factor(std::span<const double>(raw)));
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr int kModelFormatVersion = 1;

nlohmann::json net_to_json(const Mlp& net) {
  const auto& s = net.spec();
  return {{"input_dim", s.input_dim},
          {"hidden", s.hidden},
          {"output_dim", s.output_dim},
          {"activation", to_string(s.activation)},
          {"params", std::vector<double>(net.params().begin(), net.params().end())}};
}

Mlp net_from_json(const nlohmann::json& j) {
  MlpSpec s;
  s.input_dim = j.at("input_dim").get<std::size_t>();
  s.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  s.output_dim = j.at("output_dim").get<std::size_t>();
  s.activation = activation_from_string(j.at("activation").get<std::string>());
  return Mlp(std::move(s), j.at("params").get<std::vector<double>>());
}

}  // namespace

nlohmann::json to_json(const GaussianDensityModel& model) {
  return {{"format", "gaussian-density-model"},
          {"version", kModelFormatVersion},
          {"output_dim", model.output_dim()},
          {"mean_net", net_to_json(model.mean_net())},
          {"factor_net", net_to_json(model.factor_net())}};
}

GaussianDensityModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "gaussian-density-model") {
      throw Error(ErrorCode::Config, "not a model file");
    }
    const int version = j.at("version").get<int>();
    if (version != kModelFormatVersion) {
      throw Error(ErrorCode::Config, "unsupported model version " + std::to_string(version));
    }
    GaussianDensityModel model(net_from_json(j.at("mean_net")), net_from_json(j.at("factor_net")));
    if (model.output_dim() != j.at("output_dim").get<std::size_t>()) {
      throw Error(ErrorCode::Config, "model output_dim disagrees with mean network");
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Config, std::string("malformed model: ") + e.what());
  }
}

void save_model(const GaussianDensityModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << to_json(model).dump(1) << '\n';
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

GaussianDensityModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Config, path.string() + ": " + e.what());
  }
  return model_from_json(j);
}

// ---------------------------------------------------------------------------
// Training

namespace {

bool updates_mean(TrainMode m) { return m != TrainMode::CovarianceOnly; }
bool updates_factor(TrainMode m) { return m != TrainMode::MeanOnly; }

Index all_indices(std::size_t k) {
  Index idx(k);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

/// Per-sample loss and gradients with respect to the mean and raw factor
/// outputs.
struct HeadResult {
  double loss = 0.0;
  Vector d_mean;
  Vector d_raw;
};

class LossHead {
 public:
  HeadResult squared_error(std::span<const double> mean, std::span<const double> y,
                           std::span<const std::size_t> observed) const {
    HeadResult out;
    out.d_mean.assign(mean.size(), 0.0);
    for (std::size_t j : observed) {
      const double r = mean[j] - y[j];
      out.loss += 0.5 * r * r;
      out.d_mean[j] = r;
    }
    return out;
  }

  HeadResult gaussian(std::span<const double> mean, std::span<const double> raw, std::span<const double> y,
                      std::span<const std::size_t> observed, bool full) {
    graph_.clear();
    const auto mu = graph_.variables(mean);
    const auto r = graph_.variables(raw);
    const auto a = assemble_factor(std::span<const Var>(r));
    const Var loss = full ? nll_loss(std::span<const Var>(mu), a, y)
                          : masked_nll_loss(std::span<const Var>(mu), a, y, observed);
    graph_.backward(loss);
    return {loss.value(), graph_.adjoints(mu), graph_.adjoints(r)};
  }

 private:
  Graph graph_;
};

Vector column_means(const Dataset& d) {
  const std::size_t k = d.response_dim();
  Vector sum(k, 0.0);
  std::vector<std::size_t> count(k, 0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      if (!d.is_observed(i, j)) continue;
      sum[j] += d.y(i, j);
      ++count[j];
    }
  }
  for (std::size_t j = 0; j < k; ++j) sum[j] = count[j] > 0 ? sum[j] / static_cast<double>(count[j]) : 0.0;
  return sum;
}

void check_inputs(const GaussianDensityModel& model, const Dataset& d, const TrainOptions& options,
                  const char* what) {
  if (d.feature_dim() != model.input_dim() || d.response_dim() != model.output_dim()) {
    throw Error(ErrorCode::ShapeMismatch, std::string(what) + " dimensions do not match the model");
  }
  if (options.missing == MissingMode::None && options.mode != TrainMode::MeanOnly && d.missing_count() > 0) {
    throw Error(ErrorCode::Config, std::string(what) + " has missing responses; choose an imputation or adapted mode");
  }
}

}  // namespace

double validation_loss(const GaussianDensityModel& model, const Dataset& data, const TrainOptions& options) {
  if (data.size() == 0) throw Error(ErrorCode::TooFewSamples, "empty validation set");
  const std::size_t k = model.output_dim();
  const Index full = all_indices(k);
  LossHead head;
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Index observed = data.has_mask() ? data.observed_index(i) : full;
    if (observed.empty()) continue;
    const auto x = data.x.row(i);
    const auto y = data.y.row(i);
    const auto mean = model.mean_net().forward(x);
    if (options.mode == TrainMode::MeanOnly) {
      total += head.squared_error(mean, y, observed).loss;
    } else {
      const auto raw = model.factor_net().forward(x);
      const auto a = assemble_factor(std::span<const double>(raw));
      total += observed.size() == k ? nll_loss(std::span<const double>(mean), a, y)
                                    : masked_nll_loss(std::span<const double>(mean), a, y, observed);
    }
    ++counted;
  }
  if (counted == 0) throw Error(ErrorCode::TooFewSamples, "validation set has no observed responses");
  return total / static_cast<double>(counted);
}

TrainResult train_model(GaussianDensityModel& model, const Dataset& train_data, const Dataset& val_data,
                  const TrainOptions& options) {
  const auto& cfg = options.config;
  cfg.validate();
  check_inputs(model, train_data, options, "training data");
  check_inputs(model, val_data, options, "validation data");
  if (train_data.size() == 0) throw Error(ErrorCode::TooFewSamples, "empty training set");

  const std::size_t k = model.output_dim();
  const Index full = all_indices(k);
  const Vector fill = column_means(train_data);
  const bool fit_mean = updates_mean(options.mode);
  const bool fit_factor = updates_factor(options.mode);

  Mlp& mean_net = model.mean_net();
  Mlp& factor_net = model.factor_net();
  Vector g_mean(mean_net.params().size());
  Vector g_factor(factor_net.params().size());
  AdamState adam_mean;
  AdamState adam_factor;
  MlpTape tape_mean;
  MlpTape tape_factor;
  LossHead head;

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train_data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  GaussianDensityModel best = model;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  Vector y_work(k);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const double lr_mean = cfg.lr_at(cfg.lr_mean, epoch);
    const double lr_factor = cfg.lr_at(cfg.lr_factor, epoch);
    double epoch_loss = 0.0;
    std::size_t epoch_count = 0;

    for (std::size_t start = 0, batch = 0; start < order.size(); start += cfg.batch_size, ++batch) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::fill(g_mean.begin(), g_mean.end(), 0.0);
      std::fill(g_factor.begin(), g_factor.end(), 0.0);
      double batch_loss = 0.0;
      std::size_t batch_count = 0;

      for (std::size_t p = start; p < stop; ++p) {
        const std::size_t i = order[p];
        const auto x = train_data.x.row(i);
        const auto y = train_data.y.row(i);
        const Index observed = train_data.has_mask() ? train_data.observed_index(i) : full;
        if (observed.empty()) continue;

        tape_mean.forward(mean_net, x);
        const auto mean = tape_mean.output();
        HeadResult h;
        if (options.mode == TrainMode::MeanOnly) {
          h = head.squared_error(mean, y, observed);
        } else {
          tape_factor.forward(factor_net, x);
          const bool complete = observed.size() == k;
          if (complete || options.missing == MissingMode::Adapted) {
            h = head.gaussian(mean, tape_factor.output(), y, observed, complete);
          } else {
            // imputed entries are treated as constants
            for (std::size_t j = 0; j < k; ++j) {
              y_work[j] = train_data.is_observed(i, j) ? y[j]
                          : options.imputation == Imputation::Predicted ? mean[j]
                                                                        : fill[j];
            }
            h = head.gaussian(mean, tape_factor.output(), y_work, full, true);
          }
          if (fit_factor) tape_factor.backward(factor_net, h.d_raw, g_factor);
        }
        if (fit_mean) tape_mean.backward(mean_net, h.d_mean, g_mean);
        batch_loss += h.loss;
        ++batch_count;
      }
      if (batch_count == 0) continue;
      if (!std::isfinite(batch_loss)) {
        throw Error(ErrorCode::NonFiniteLoss,
                    "non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch));
      }
      const double inv = 1.0 / static_cast<double>(batch_count);
      if (fit_mean) {
        for (double& g : g_mean) g *= inv;
        adam_step(mean_net.params(), g_mean, adam_mean, lr_mean);
      }
      if (fit_factor) {
        for (double& g : g_factor) g *= inv;
        adam_step(factor_net.params(), g_factor, adam_factor, lr_factor);
      }
      epoch_loss += batch_loss;
      epoch_count += batch_count;
    }

    const double val = validation_loss(model, val_data, options);
    if (!std::isfinite(val)) {
      throw Error(ErrorCode::NonFiniteLoss, "non-finite validation loss at epoch " + std::to_string(epoch));
    }
    result.history.push_back({epoch, epoch_count > 0 ? epoch_loss / static_cast<double>(epoch_count) : 0.0, val});
    if (val < result.best_val_loss) {
      result.best_val_loss = val;
      result.best_epoch = epoch;
      best = model;
    }
  }
  model = std::move(best);
  return result;
}

}  // namespace gcp
