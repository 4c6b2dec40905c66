#include "gcp/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "gcp/random.hpp"
#include "gcp/scores.hpp"

namespace gcp {

double marginal_coverage(const CalibratedPredictor& cp, const Matrix& x, const Matrix& y) {
  if (x.rows() == 0) throw Error(ErrorCode::TooFewSamples, "empty test set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < x.rows(); ++i) hits += covers(cp, x.row(i), y.row(i)) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(x.rows());
}

double full_section_coverage(const CalibratedPredictor& cp, const Matrix& x, const Matrix& y) {
  if (x.rows() == 0) throw Error(ErrorCode::TooFewSamples, "empty test set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto set = full_output_section(cp.model->predict(x.row(i)), cp.threshold);
    hits += set.contains(y.row(i)) ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(x.rows());
}

double mean_normalized_volume(const CalibratedPredictor& cp, const Matrix& x, const Matrix& y) {
  if (x.rows() == 0) throw Error(ErrorCode::TooFewSamples, "empty test set");
  double total = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto yi = y.rows() == x.rows() ? y.row(i) : std::span<const double>{};
    total += normalized_volume(predict_set(cp, x.row(i), yi));
  }
  return total / static_cast<double>(x.rows());
}

double conditional_coverage(const EllipsoidSet& set, const GeneratorSpec& generator, std::span<const double> x,
                            std::size_t m, std::uint64_t stream) {
  const Matrix ys = sample_conditional(generator, x, m, stream);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < m; ++i) hits += set.contains(ys.row(i)) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(m);
}

double conditional_coverage(const CalibratedPredictor& cp, const GeneratorSpec& generator,
                            std::span<const double> x, std::size_t m, std::uint64_t stream) {
  const Matrix ys = sample_conditional(generator, x, m, stream);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < m; ++i) hits += covers(cp, x, ys.row(i)) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(m);
}

std::vector<std::size_t> coverage_histogram(std::span<const double> values, std::size_t bins) {
  if (bins == 0) throw Error(ErrorCode::DomainError, "histogram needs at least one bin");
  std::vector<std::size_t> counts(bins, 0);
  for (double v : values) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::DomainError, "coverage value outside [0, 1]");
    const auto b = std::min(bins - 1, static_cast<std::size_t>(v * static_cast<double>(bins)));
    ++counts[b];
  }
  return counts;
}

double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev(std::span<const double> v) {
  if (v.empty()) return 0.0;
  const double m = mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

Aggregate aggregate_runs(std::span<const RunRecord> runs) {
  Aggregate out;
  std::vector<std::size_t> keep(runs.size());
  std::iota(keep.begin(), keep.end(), std::size_t{0});
  if (runs.size() >= 4) {
    const auto by_volume = [&](std::size_t a, std::size_t b) { return runs[a].volume < runs[b].volume; };
    const auto lo = *std::min_element(keep.begin(), keep.end(), by_volume);
    auto hi = *std::max_element(keep.begin(), keep.end(), by_volume);
    if (hi == lo) hi = lo == 0 ? 1 : 0;  // all volumes equal
    std::erase_if(keep, [&](std::size_t i) { return i == lo || i == hi; });
    out.trimmed = true;
  } else {
    out.warning = "fewer than 4 runs; extremes not discarded";
  }
  std::vector<double> cov;
  std::vector<double> vol;
  for (std::size_t i : keep) {
    cov.push_back(runs[i].coverage);
    vol.push_back(runs[i].volume);
  }
  out.runs_used = keep.size();
  out.coverage_mean = mean(cov);
  out.coverage_std = stddev(cov);
  out.volume_mean = mean(vol);
  out.volume_std = stddev(vol);
  return out;
}

FitResult fit_model(const Dataset& train, const Dataset& val, const FitOptions& options, std::uint64_t seed) {
  FitResult result;
  result.model = std::make_shared<GaussianDensityModel>(
      GaussianDensityModel::create(train.feature_dim(), train.response_dim(), options.network, seed));
  TrainOptions opts;
  opts.config = options.train;
  opts.missing = options.missing;
  opts.imputation = options.imputation;
  if (options.joint) {
    opts.mode = TrainMode::Joint;
    result.covariance_stage = train_model(*result.model, train, val, opts);
    return result;
  }
  opts.mode = TrainMode::MeanOnly;
  result.mean_stage = train_model(*result.model, train, val, opts);
  opts.mode = TrainMode::CovarianceOnly;
  result.covariance_stage = train_model(*result.model, train, val, opts);
  return result;
}

EcmState fit_ecm(const GaussianDensityModel& model, const Dataset& train) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < train.size(); ++i)
    if (train.fully_observed(i)) rows.push_back(i);
  Matrix residuals(rows.size(), train.response_dim());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto mu = model.predict_mean(train.x.row(rows[r]));
    for (std::size_t j = 0; j < train.response_dim(); ++j) residuals(r, j) = train.y(rows[r], j) - mu[j];
  }
  return ecm_fit(residuals);
}

void mask_random_outputs(Dataset& data, std::size_t lo, std::size_t hi, std::uint64_t seed) {
  const std::size_t k = data.response_dim();
  if (lo > hi || hi >= k + 1) throw Error(ErrorCode::Config, "invalid masking range");
  auto rng = make_rng(seed, 0x6d61736b);
  std::uniform_int_distribution<std::size_t> count(lo, hi);
  std::vector<std::size_t> cols(k);
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::iota(cols.begin(), cols.end(), std::size_t{0});
    std::shuffle(cols.begin(), cols.end(), rng);
    const std::size_t c = count(rng);
    for (std::size_t p = 0; p < c; ++p) data.mask_entry(i, cols[p]);
  }
}

}  // namespace gcp
