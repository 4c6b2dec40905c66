#pragma once

// Split-conformal calibration and ellipsoidal prediction sets.

#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <string>

#include <json.hpp>

#include "gcp/gaussian_model.hpp"
#include "gcp/scores.hpp"

namespace gcp {

enum class ScoreKind { Mahalanobis, Hdp, Likelihood, Ecm, Missing, Revealed, LinearTransform };

std::string to_string(ScoreKind kind);
ScoreKind score_kind_from_string(const std::string& s);

/// A score together with the parameters fixed before calibration.
struct ScoreSpec {
  ScoreKind kind = ScoreKind::Mahalanobis;
  EcmState ecm;      // Ecm
  Index revealed;    // Revealed
  Matrix transform;  // LinearTransform (p x k)

  static ScoreSpec mahalanobis() { return {ScoreKind::Mahalanobis, {}, {}, {}}; }
  static ScoreSpec hdp() { return {ScoreKind::Hdp, {}, {}, {}}; }
  static ScoreSpec likelihood() { return {ScoreKind::Likelihood, {}, {}, {}}; }
  static ScoreSpec ecm_score(EcmState state) { return {ScoreKind::Ecm, std::move(state), {}, {}}; }
  static ScoreSpec missing() { return {ScoreKind::Missing, {}, {}, {}}; }
  static ScoreSpec revealed_outputs(Index idx) { return {ScoreKind::Revealed, {}, std::move(idx), {}}; }
  static ScoreSpec linear_transform(Matrix m) { return {ScoreKind::LinearTransform, {}, {}, std::move(m)}; }
};

/// Score of a labelled pair. Missing responses are NaN entries of y (used by
/// the Missing score only); the Revealed score conditions on y at the revealed
/// indices and scores the rest.
double score(const GaussianDensityModel& model, const ScoreSpec& spec, std::span<const double> x,
             std::span<const double> y);
double score(const Prediction& p, const ScoreSpec& spec, std::span<const double> y);

struct CalibratedPredictor {
  std::shared_ptr<const GaussianDensityModel> model;
  ScoreSpec spec;
  double threshold = 0.0;  // may be +infinity
  double alpha = 0.1;
  std::size_t calibration_size = 0;
};

/// Throws EmptyCalibration for an empty calibration set.
CalibratedPredictor calibrate(std::shared_ptr<const GaussianDensityModel> model, ScoreSpec spec,
                              const Matrix& x, const Matrix& y, double alpha);

/// {y : |W (y - center)| <= radius}. An infinite radius is the whole space;
/// `empty` marks a set with no points at all.
struct EllipsoidSet {
  Vector center;
  Whitener whitener;
  double radius = 0.0;
  bool empty = false;

  std::size_t dim() const noexcept { return center.size(); }
  bool whole_space() const noexcept { return !empty && std::isinf(radius); }
  bool contains(std::span<const double> y) const;
  Matrix shape() const { return whitener.shape(); }
};

/// Lebesgue volume V_k r^k / det W; throws InfiniteSet for the whole space.
double volume(const EllipsoidSet& set);
/// volume^{1/k}
double normalized_volume(const EllipsoidSet& set);

/// Set for the full response at x. For the Revealed score `y` must carry the
/// revealed values (other entries are ignored) and the set lives on the hidden
/// coordinates; for the Missing score this is the full-output section.
EllipsoidSet predict_set(const CalibratedPredictor& cp, std::span<const double> x,
                         std::span<const double> y = {});

/// Set with the Mahalanobis shape and radius sqrt(F^{-1}_{chi2(k)}(q)).
EllipsoidSet full_output_section(const Prediction& p, double threshold);

/// Section of the Mahalanobis set {y : s_mah <= threshold} at the revealed
/// values; empty when the revealed part alone exceeds the threshold.
EllipsoidSet mahalanobis_section(const Prediction& p, double threshold, std::span<const std::size_t> revealed,
                                 std::span<const double> revealed_values);

/// Whether the pair (x, y) lies in its conformal set. For the Missing score
/// this re-scores the observed part of y.
bool covers(const CalibratedPredictor& cp, std::span<const double> x, std::span<const double> y);

nlohmann::json set_to_json(const EllipsoidSet& set, const CalibratedPredictor& cp);
nlohmann::json to_json(const CalibratedPredictor& cp);
CalibratedPredictor predictor_from_json(const nlohmann::json& j);

}  // namespace gcp
