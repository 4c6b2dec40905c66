#pragma once

// Coverage and volume evaluation, plus the train-then-calibrate pipeline shared
// by the CLI and the experiment harnesses.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gcp/conformal.hpp"
#include "gcp/dataset.hpp"
#include "gcp/gaussian_model.hpp"
#include "gcp/synthetic.hpp"

namespace gcp {

/// Fraction of rows whose response lies in its conformal set (see covers()).
double marginal_coverage(const CalibratedPredictor& cp, const Matrix& x, const Matrix& y);

/// Coverage of the full-output section sets of a Missing-score predictor on
/// fully observed responses.
double full_section_coverage(const CalibratedPredictor& cp, const Matrix& x, const Matrix& y);

/// Mean normalized volume of the sets at the rows of x. y supplies revealed
/// values for the Revealed score and is otherwise unused.
double mean_normalized_volume(const CalibratedPredictor& cp, const Matrix& x, const Matrix& y);

/// Fraction of m draws of Y | x that fall in the set at x.
double conditional_coverage(const CalibratedPredictor& cp, const GeneratorSpec& generator,
                            std::span<const double> x, std::size_t m, std::uint64_t stream);
double conditional_coverage(const EllipsoidSet& set, const GeneratorSpec& generator, std::span<const double> x,
                            std::size_t m, std::uint64_t stream);

/// Counts over equal-width bins of [0, 1]; 1.0 falls in the last bin.
std::vector<std::size_t> coverage_histogram(std::span<const double> values, std::size_t bins = 20);

struct RunRecord {
  double coverage = 0.0;
  double volume = 0.0;
};

struct Aggregate {
  double coverage_mean = 0.0;
  double coverage_std = 0.0;
  double volume_mean = 0.0;
  double volume_std = 0.0;
  std::size_t runs_used = 0;
  bool trimmed = false;
  std::string warning;
};

/// With at least four runs, drops the runs with the largest and smallest
/// volume before taking means and (population) standard deviations.
Aggregate aggregate_runs(std::span<const RunRecord> runs);

double mean(std::span<const double> v);
/// Population standard deviation.
double stddev(std::span<const double> v);

// ---------------------------------------------------------------------------
// Pipeline

struct FitOptions {
  NetworkConfig network;
  TrainConfig train;
  /// Joint training of both networks; otherwise the mean network is first fit
  /// on squared error and then frozen while the covariance network trains.
  bool joint = false;
  MissingMode missing = MissingMode::None;
  Imputation imputation = Imputation::Predicted;
};

struct FitResult {
  std::shared_ptr<GaussianDensityModel> model;
  std::optional<TrainResult> mean_stage;
  TrainResult covariance_stage;
};

FitResult fit_model(const Dataset& train, const Dataset& val, const FitOptions& options, std::uint64_t seed);

/// Residual covariance of the model's mean on the (fully observed rows of the)
/// training data.
EcmState fit_ecm(const GaussianDensityModel& model, const Dataset& train);

/// Masks between lo and hi responses (inclusive, chosen uniformly) per row.
void mask_random_outputs(Dataset& data, std::size_t lo, std::size_t hi, std::uint64_t seed);

}  // namespace gcp
