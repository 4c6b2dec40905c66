#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gcp/linalg.hpp"

namespace gcp {

/// Features x (n x d), responses y (n x k) and an optional observation mask.
/// Missing responses are stored as NaN in y and as 0 in the mask.
struct Dataset {
  Matrix x;
  Matrix y;
  std::vector<std::uint8_t> observed;  // empty, or n * k flags (row-major)

  Dataset() = default;
  Dataset(Matrix features, Matrix responses);
  Dataset(Matrix features, Matrix responses, std::vector<std::uint8_t> mask);

  std::size_t size() const noexcept { return x.rows(); }
  std::size_t feature_dim() const noexcept { return x.cols(); }
  std::size_t response_dim() const noexcept { return y.cols(); }
  bool has_mask() const noexcept { return !observed.empty(); }
  bool is_observed(std::size_t i, std::size_t j) const {
    return observed.empty() || observed[i * y.cols() + j] != 0;
  }
  bool fully_observed(std::size_t i) const;
  std::size_t missing_count() const;

  /// Observed response indices of row i (ascending).
  Index observed_index(std::size_t i) const;

  Dataset subset(std::span<const std::size_t> rows) const;

  /// Marks entries missing (sets mask 0 and y to NaN).
  void mask_entry(std::size_t i, std::size_t j);

  void validate() const;
};

}  // namespace gcp
