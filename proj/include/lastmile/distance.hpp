#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "lastmile/geo.hpp"

namespace lastmile {

struct StopSet;

// Great-circle distance in meters on a sphere of radius kEarthRadiusM.
double haversine(const GeoPoint& a, const GeoPoint& b) noexcept;

// Dense symmetric matrix of meters; index 0 is the depot.
class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  // Throws kInvalidArgument unless the values are square, symmetric, finite,
  // non-negative and zero on the diagonal.
  DistanceMatrix(std::size_t n, std::vector<double> values);

  std::size_t size() const noexcept { return n_; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return d_[i * n_ + j]; }
  std::span<const double> values() const noexcept { return d_; }

  DistanceMatrix scaled(double factor) const;
  void write_csv(std::ostream& os) const;

 private:
  std::size_t n_ = 0;
  std::vector<double> d_;
};

inline constexpr double kDuplicateNodeThresholdM = 0.1;

// Haversine between every pair of {depot, stops...}.
DistanceMatrix build_matrix(const StopSet& stops);
DistanceMatrix build_matrix(std::span<const GeoPoint> nodes);

}  // namespace lastmile
