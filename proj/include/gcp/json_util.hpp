#pragma once

// JSON helpers shared by the model, predictor and CLI formats. Non-finite
// reals are written as the strings "inf", "-inf" and "nan".

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "gcp/error.hpp"
#include "gcp/linalg.hpp"

namespace gcp {

inline nlohmann::json real_to_json(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline double real_from_json(const nlohmann::json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw Error(ErrorCode::Config, "expected a number, got " + j.dump());
}

inline nlohmann::json matrix_to_json(const Matrix& m) {
  auto rows = nlohmann::json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto row = nlohmann::json::array();
    for (double v : m.row(i)) row.push_back(real_to_json(v));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw Error(ErrorCode::Config, "matrix must be an array of rows");
  const std::size_t r = j.size();
  const std::size_t c = r == 0 ? 0 : j.at(0).size();
  Matrix m(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    if (!j[i].is_array() || j[i].size() != c) throw Error(ErrorCode::Config, "ragged matrix rows");
    for (std::size_t k = 0; k < c; ++k) m(i, k) = real_from_json(j[i][k]);
  }
  return m;
}

}  // namespace gcp
