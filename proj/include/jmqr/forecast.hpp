#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "jmqr/tensor.hpp"

namespace jmqr {

/// Strictly increasing quantile levels in (0, 1).
class QuantileLevels {
 public:
  QuantileLevels() = default;
  explicit QuantileLevels(std::vector<double> levels);
  QuantileLevels(std::initializer_list<double> levels)
      : QuantileLevels(std::vector<double>(levels)) {}

  /// Parses "0.05,0.2,0.8,0.95".
  static QuantileLevels parse(const std::string& csv);

  std::size_t size() const { return levels_.size(); }
  bool empty() const { return levels_.empty(); }
  double operator[](std::size_t j) const { return levels_[j]; }
  const std::vector<double>& values() const { return levels_; }
  /// Index of a level, matched to 1e-9; throws if absent.
  std::size_t index_of(double tau) const;

  auto begin() const { return levels_.begin(); }
  auto end() const { return levels_.end(); }

 private:
  std::vector<double> levels_;
};

/// Mean prediction plus one quantile prediction per level.
/// mean has shape S; quantiles has shape S x J.
struct ForecastBundle {
  Tensor mean;
  Tensor quantiles;

  std::size_t levels() const { return quantiles.empty() ? 0 : quantiles.shape().back(); }
  /// Quantile slice j with the level axis removed (shape S).
  Tensor quantile(std::size_t j) const;
  void validate(std::size_t expected_levels) const;
};

/// Splits a [...] x (1 + J) head output into a bundle.
ForecastBundle split_heads(const Tensor& outputs);

}  // namespace jmqr
