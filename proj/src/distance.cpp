#include "lastmile/distance.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "lastmile/error.hpp"
#include "lastmile/projection.hpp"
#include "lastmile/sampling.hpp"

namespace lastmile {

double haversine(const GeoPoint& a, const GeoPoint& b) noexcept {
  const double p1 = a.lat * kDegToRad;
  const double p2 = b.lat * kDegToRad;
  const double dp = p2 - p1;
  const double dl = b.lon * kDegToRad - a.lon * kDegToRad;
  const double s1 = std::sin(dp / 2);
  const double s2 = std::sin(dl / 2);
  const double h = s1 * s1 + std::cos(p1) * std::cos(p2) * s2 * s2;
  return 2.0 * kEarthRadiusM * std::asin(std::sqrt(std::min(1.0, h)));
}

DistanceMatrix::DistanceMatrix(std::size_t n, std::vector<double> values) : n_(n), d_(std::move(values)) {
  if (d_.size() != n_ * n_) throw Error(ErrorCode::kInvalidArgument, "matrix is not n x n");
  for (std::size_t i = 0; i < n_; ++i) {
    if (d_[i * n_ + i] != 0.0) throw Error(ErrorCode::kInvalidArgument, "non-zero diagonal");
    for (std::size_t j = 0; j < n_; ++j) {
      const double v = d_[i * n_ + j];
      if (!std::isfinite(v) || v < 0.0) throw Error(ErrorCode::kInvalidArgument, "entries must be finite and >= 0");
      if (v != d_[j * n_ + i]) throw Error(ErrorCode::kInvalidArgument, "matrix is not symmetric");
    }
  }
}

DistanceMatrix DistanceMatrix::scaled(double factor) const {
  std::vector<double> v(d_);
  for (auto& x : v) x *= factor;
  return DistanceMatrix(n_, std::move(v));
}

void DistanceMatrix::write_csv(std::ostream& os) const {
  const auto flags = os.flags();
  os << std::setprecision(17);
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = 0; j < n_; ++j) os << (j ? "," : "") << d_[i * n_ + j];
    os << '\n';
  }
  os.flags(flags);
}

DistanceMatrix build_matrix(std::span<const GeoPoint> nodes) {
  const std::size_t n = nodes.size();
  std::vector<double> d(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = haversine(nodes[i], nodes[j]);
      if (v < kDuplicateNodeThresholdM) {
        throw Error(ErrorCode::kDuplicateNodes,
                    "nodes " + std::to_string(i) + " and " + std::to_string(j) + " are within 0.1 m");
      }
      d[i * n + j] = v;
      d[j * n + i] = v;
    }
  }
  return DistanceMatrix(n, std::move(d));
}

DistanceMatrix build_matrix(const StopSet& s) {
  if (s.stops.empty()) throw Error(ErrorCode::kInvalidArgument, "stop set has no stops");
  std::vector<GeoPoint> nodes;
  nodes.reserve(s.stops.size() + 1);
  nodes.push_back(s.depot);
  nodes.insert(nodes.end(), s.stops.begin(), s.stops.end());
  return build_matrix(nodes);
}

}  // namespace lastmile
