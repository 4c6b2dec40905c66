#pragma once

// Dataset files, splits and the experiment configuration document.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "gcp/conformal.hpp"
#include "gcp/dataset.hpp"
#include "gcp/eval.hpp"
#include "gcp/synthetic.hpp"

namespace gcp {

/// CSV with a header row. Columns named x* are features and y* responses, in
/// file order. An empty response cell or NaN marks a missing response;
/// features must be present.
Dataset load_dataset(const std::filesystem::path& path);
Dataset parse_dataset(const std::string& text, const std::string& source = "<memory>");
void save_dataset(const Dataset& data, const std::filesystem::path& path);
std::string format_dataset(const Dataset& data);

/// Header-less numeric CSV (used for transform matrices and feature rows).
Matrix load_matrix_csv(const std::filesystem::path& path);
Matrix parse_matrix_csv(const std::string& text, const std::string& source = "<memory>");

/// Shortest decimal text that reads back to the same double.
std::string format_real(double v);

using Fractions = std::array<double, 4>;

struct Splits {
  Dataset train;
  Dataset val;
  Dataset cal;
  Dataset test;
};

/// Seeded shuffle, then contiguous blocks with boundaries at the rounded
/// cumulative fractions. Throws FractionSumError unless the fractions are
/// positive and sum to 1.
Splits split(const Dataset& data, const Fractions& fractions, std::uint64_t seed);

/// Full experiment configuration. Every field has a default; parsing rejects
/// unknown fields with their path.
struct ExperimentConfig {
  static constexpr int kVersion = 1;

  // data: either a CSV file or the synthetic generator
  std::optional<std::filesystem::path> data_path;
  GeneratorOptions generator;
  std::size_t synthetic_samples = 30000;
  Fractions fractions{0.7, 0.1, 0.1, 0.1};

  std::uint64_t seed = 0;
  double alpha = 0.1;

  ScoreKind score = ScoreKind::Mahalanobis;
  Index revealed;
  std::optional<std::filesystem::path> transform_path;
  std::optional<Matrix> transform;

  FitOptions fit;
  /// Number of responses masked per calibration/test row by `missing`.
  std::size_t mask_min = 1;
  std::size_t mask_max = 0;  // 0 means k - 1

  bool quantile_transform = false;

  std::size_t conditional_points = 100;
  std::size_t conditional_samples = 1000;
  std::size_t histogram_bins = 20;

  void validate() const;
};

/// `base` resolves relative paths (normally the config file's directory).
ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base = {});
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& config);

}  // namespace gcp
