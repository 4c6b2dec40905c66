#include "gcp/dataset.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace gcp {

Dataset::Dataset(Matrix features, Matrix responses) : x(std::move(features)), y(std::move(responses)) {
  validate();
}

Dataset::Dataset(Matrix features, Matrix responses, std::vector<std::uint8_t> mask)
    : x(std::move(features)), y(std::move(responses)), observed(std::move(mask)) {
  validate();
}

void Dataset::validate() const {
  if (x.rows() != y.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "feature rows " + std::to_string(x.rows()) + " != response rows " +
                                              std::to_string(y.rows()));
  }
  if (!observed.empty() && observed.size() != y.rows() * y.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "mask size does not match responses");
  }
}

bool Dataset::fully_observed(std::size_t i) const {
  for (std::size_t j = 0; j < y.cols(); ++j)
    if (!is_observed(i, j)) return false;
  return true;
}

std::size_t Dataset::missing_count() const {
  std::size_t n = 0;
  for (auto flag : observed) n += flag == 0 ? 1 : 0;
  return n;
}

Index Dataset::observed_index(std::size_t i) const {
  Index idx;
  for (std::size_t j = 0; j < y.cols(); ++j)
    if (is_observed(i, j)) idx.push_back(j);
  return idx;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.x = Matrix(rows.size(), x.cols());
  out.y = Matrix(rows.size(), y.cols());
  if (has_mask()) out.observed.resize(rows.size() * y.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::size_t i = rows[r];
    if (i >= size()) throw Error(ErrorCode::IndexOutOfRange, "subset row " + std::to_string(i));
    for (std::size_t j = 0; j < x.cols(); ++j) out.x(r, j) = x(i, j);
    for (std::size_t j = 0; j < y.cols(); ++j) {
      out.y(r, j) = y(i, j);
      if (has_mask()) out.observed[r * y.cols() + j] = observed[i * y.cols() + j];
    }
  }
  return out;
}

void Dataset::mask_entry(std::size_t i, std::size_t j) {
  if (observed.empty()) observed.assign(y.rows() * y.cols(), 1);
  observed[i * y.cols() + j] = 0;
  y(i, j) = std::numeric_limits<double>::quiet_NaN();
}

}  // namespace gcp
