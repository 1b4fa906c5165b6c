#pragma once

#include <cmath>
#include <random>

#include "mds/types.hpp"

namespace testing {

inline mds::LatentConfiguration gaussian_points(std::size_t n, std::size_t d, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, scale);
  mds::RowMatrix c(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    c.data()[i] = z(rng);
  }
  return mds::LatentConfiguration(std::move(c));
}

// Distances of `truth` plus |noise|, with roughly `missing` of the pairs masked.
inline mds::DissimilarityData noisy_data(const mds::LatentConfiguration& truth, double noise_sd, double missing,
                                         std::uint64_t seed) {
  const auto n = truth.size();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, noise_sd);
  std::bernoulli_distribution drop(missing);
  mds::RowMatrix y = mds::RowMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  mds::ObservationMask mask(n, true);
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      const double v = std::abs(truth.distance(i, j) + z(rng));
      y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
      y(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
      if (missing > 0.0 && drop(rng)) {
        mask.set(i, j, false);
      }
    }
  }
  return mds::DissimilarityData(std::move(y), std::move(mask));
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

}  // namespace testing
