#include "gcp/conformal.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "gcp/json_util.hpp"
#include "gcp/stats.hpp"

namespace gcp {

namespace {

constexpr const char* kScoreNames[] = {"mahalanobis", "hdp", "likelihood", "ecm", "missing", "revealed",
                                       "linear_transform"};

Vector revealed_values(const ScoreSpec& spec, std::span<const double> y, std::size_t k) {
  if (y.size() != k) throw Error(ErrorCode::ShapeMismatch, "revealed score needs the full response vector");
  Vector v;
  for (std::size_t j : spec.revealed) v.push_back(y[j]);
  return v;
}

Vector hidden_values(const ConditionedGaussian& c, std::span<const double> y) {
  Vector v;
  for (std::size_t j : c.hidden) v.push_back(y[j]);
  return v;
}

EllipsoidSet whole_space(Vector center, Whitener w) { return {std::move(center), std::move(w), kInfinity, false}; }

EllipsoidSet empty_set(Vector center, Whitener w) { return {std::move(center), std::move(w), 0.0, true}; }

}  // namespace

std::string to_string(ScoreKind kind) { return kScoreNames[static_cast<int>(kind)]; }

ScoreKind score_kind_from_string(const std::string& s) {
  for (int i = 0; i < 7; ++i)
    if (s == kScoreNames[i]) return static_cast<ScoreKind>(i);
  throw Error(ErrorCode::Config, "unknown score '" + s + "'");
}

double score(const Prediction& p, const ScoreSpec& spec, std::span<const double> y) {
  switch (spec.kind) {
    case ScoreKind::Mahalanobis:
      return s_mah(p, y);
    case ScoreKind::Hdp:
      return s_hdp_gaussian(p, y);
    case ScoreKind::Likelihood:
      return s_nl(p, y);
    case ScoreKind::Ecm:
      return s_ecm(spec.ecm, difference(y, p.mean()));
    case ScoreKind::Missing: {
      if (y.size() != p.dim()) throw Error(ErrorCode::ShapeMismatch, "response length");
      return s_miss(p, y, observed_entries(y));
    }
    case ScoreKind::Revealed: {
      const auto c = condition(p, spec.revealed, revealed_values(spec, y, p.dim()));
      return s_revealed(c, hidden_values(c, y));
    }
    case ScoreKind::LinearTransform: {
      const auto t = transform_gaussian(p, spec.transform);
      if (y.size() != p.dim()) throw Error(ErrorCode::ShapeMismatch, "response length");
      return s_lin_trans(t, matvec(spec.transform, y));
    }
  }
  throw Error(ErrorCode::Config, "unhandled score kind");
}

double score(const GaussianDensityModel& model, const ScoreSpec& spec, std::span<const double> x,
             std::span<const double> y) {
  return score(model.predict(x), spec, y);
}

CalibratedPredictor calibrate(std::shared_ptr<const GaussianDensityModel> model, ScoreSpec spec,
                              const Matrix& x, const Matrix& y, double alpha) {
  if (!model) throw Error(ErrorCode::Config, "calibration needs a model");
  if (x.rows() == 0) throw Error(ErrorCode::EmptyCalibration, "calibration set is empty");
  if (x.rows() != y.rows()) throw Error(ErrorCode::ShapeMismatch, "calibration x and y row counts differ");
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::DomainError, "alpha must lie in (0, 1)");
  if (spec.kind == ScoreKind::Revealed) {
    validate_index(spec.revealed, model->output_dim());
    if (spec.revealed.size() == model->output_dim()) {
      throw Error(ErrorCode::EmptyIndexSet, "revealed indices leave no hidden response");
    }
  }
  std::vector<double> scores(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) scores[i] = score(*model, spec, x.row(i), y.row(i));
  CalibratedPredictor cp;
  cp.threshold = conformal_quantile(scores, alpha);
  cp.model = std::move(model);
  cp.spec = std::move(spec);
  cp.alpha = alpha;
  cp.calibration_size = x.rows();
  return cp;
}

bool EllipsoidSet::contains(std::span<const double> y) const {
  if (empty) return false;
  if (y.size() != dim()) throw Error(ErrorCode::ShapeMismatch, "point dimension differs from set");
  if (std::isinf(radius)) return true;
  return whitener.norm(difference(y, center)) <= radius;
}

double volume(const EllipsoidSet& set) {
  if (set.empty) return 0.0;
  if (set.whole_space()) throw Error(ErrorCode::InfiniteSet, "the set is the whole space");
  if (set.radius == 0.0) return 0.0;
  const int k = static_cast<int>(set.dim());
  return std::exp(std::log(unit_ball_volume(k)) + k * std::log(set.radius) - set.whitener.log_det());
}

double normalized_volume(const EllipsoidSet& set) {
  return std::pow(volume(set), 1.0 / static_cast<double>(set.dim()));
}

EllipsoidSet full_output_section(const Prediction& p, double threshold) {
  auto w = Whitener::precision_root(p.factor());
  if (threshold >= 1.0) return whole_space(p.mean(), std::move(w));
  if (threshold < 0.0) return empty_set(p.mean(), std::move(w));
  const double r2 = chi2_quantile(threshold, static_cast<int>(p.dim()));
  return {p.mean(), std::move(w), std::sqrt(r2), false};
}

EllipsoidSet mahalanobis_section(const Prediction& p, double threshold, std::span<const std::size_t> revealed,
                                 std::span<const double> revealed_values) {
  auto c = condition(p, revealed, revealed_values);
  if (std::isinf(threshold)) return whole_space(std::move(c.mean), std::move(c.whitener));
  const double rest = threshold * threshold - c.revealed_quadratic;
  if (rest < 0.0) return empty_set(std::move(c.mean), std::move(c.whitener));
  return {std::move(c.mean), std::move(c.whitener), std::sqrt(rest), false};
}

EllipsoidSet predict_set(const CalibratedPredictor& cp, std::span<const double> x, std::span<const double> y) {
  const Prediction p = cp.model->predict(x);
  const double q = cp.threshold;
  switch (cp.spec.kind) {
    case ScoreKind::Mahalanobis:
      return {p.mean(), Whitener::precision_root(p.factor()), q, false};
    case ScoreKind::Hdp:
    case ScoreKind::Missing:
      return full_output_section(p, q);
    case ScoreKind::Likelihood: {
      auto w = Whitener::precision_root(p.factor());
      if (q >= 0.0) return whole_space(p.mean(), std::move(w));
      // -exp(c - s^2/2) <= q  <=>  s^2 <= 2 (c - log(-q))
      const double r2 = 2.0 * (log_peak_density(p) - std::log(-q));
      if (r2 < 0.0) return empty_set(p.mean(), std::move(w));
      return {p.mean(), std::move(w), std::sqrt(r2), false};
    }
    case ScoreKind::Ecm:
      return {p.mean(), cp.spec.ecm.whitener, q, false};
    case ScoreKind::Revealed: {
      auto c = condition(p, cp.spec.revealed, revealed_values(cp.spec, y, p.dim()));
      return {std::move(c.mean), std::move(c.whitener), q, false};
    }
    case ScoreKind::LinearTransform: {
      auto t = transform_gaussian(p, cp.spec.transform);
      return {std::move(t.mean), std::move(t.whitener), q, false};
    }
  }
  throw Error(ErrorCode::Config, "unhandled score kind");
}

bool covers(const CalibratedPredictor& cp, std::span<const double> x, std::span<const double> y) {
  switch (cp.spec.kind) {
    case ScoreKind::Missing:
      return score(*cp.model, cp.spec, x, y) <= cp.threshold;
    case ScoreKind::Revealed: {
      const auto set = predict_set(cp, x, y);
      Vector hidden;
      for (std::size_t j : complement(cp.spec.revealed, y.size())) hidden.push_back(y[j]);
      return set.contains(hidden);
    }
    case ScoreKind::LinearTransform:
      return predict_set(cp, x).contains(matvec(cp.spec.transform, y));
    default:
      return predict_set(cp, x).contains(y);
  }
}

// ---------------------------------------------------------------------------
// JSON

nlohmann::json set_to_json(const EllipsoidSet& set, const CalibratedPredictor& cp) {
  const Matrix w = set.shape();
  std::vector<double> packed;
  for (std::size_t i = 0; i < w.rows(); ++i)
    for (std::size_t j = 0; j <= i; ++j) packed.push_back(w(i, j));
  return {{"score", to_string(cp.spec.kind)},
          {"alpha", cp.alpha},
          {"dim", set.dim()},
          {"center", set.center},
          {"shape_lower_packed", packed},
          {"radius", real_to_json(set.radius)},
          {"empty", set.empty}};
}

nlohmann::json to_json(const CalibratedPredictor& cp) {
  nlohmann::json score{{"kind", to_string(cp.spec.kind)}};
  switch (cp.spec.kind) {
    case ScoreKind::Ecm:
      score["covariance"] = matrix_to_json(cp.spec.ecm.covariance);
      break;
    case ScoreKind::Revealed:
      score["revealed"] = cp.spec.revealed;
      break;
    case ScoreKind::LinearTransform:
      score["transform"] = matrix_to_json(cp.spec.transform);
      break;
    default:
      break;
  }
  return {{"format", "calibrated-predictor"},
          {"version", 1},
          {"score", score},
          {"threshold", real_to_json(cp.threshold)},
          {"alpha", cp.alpha},
          {"calibration_size", cp.calibration_size},
          {"model", to_json(*cp.model)}};
}

CalibratedPredictor predictor_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "calibrated-predictor" || j.at("version").get<int>() != 1) {
      throw Error(ErrorCode::Config, "not a version-1 calibrated predictor");
    }
    CalibratedPredictor cp;
    const auto& s = j.at("score");
    cp.spec.kind = score_kind_from_string(s.at("kind").get<std::string>());
    if (cp.spec.kind == ScoreKind::Ecm) cp.spec.ecm = ecm_from_covariance(matrix_from_json(s.at("covariance")));
    if (cp.spec.kind == ScoreKind::Revealed) cp.spec.revealed = s.at("revealed").get<Index>();
    if (cp.spec.kind == ScoreKind::LinearTransform) cp.spec.transform = matrix_from_json(s.at("transform"));
    cp.threshold = real_from_json(j.at("threshold"));
    cp.alpha = j.at("alpha").get<double>();
    cp.calibration_size = j.at("calibration_size").get<std::size_t>();
    cp.model = std::make_shared<const GaussianDensityModel>(model_from_json(j.at("model")));
    return cp;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Config, std::string("malformed predictor: ") + e.what());
  }
}

}  // namespace gcp
