#include "mds/likelihood.hpp"

#include <cmath>
#include <stdexcept>

#include "mds/normal.hpp"

namespace mds {

double pair_term(double y, double delta, double sigma2) {
  if (!std::isfinite(y) || !std::isfinite(delta) || !std::isfinite(sigma2)) {
    throw std::invalid_argument("pair_term: non-finite input");
  }
  if (sigma2 <= 0.0 || delta < 0.0) {
    throw std::invalid_argument("pair_term: requires sigma2 > 0 and delta >= 0");
  }
  const double residual = y - delta;
  return residual * residual / (2.0 * sigma2) + log_phi(delta / std::sqrt(sigma2));
}

double likelihood_constant(std::size_t observed_pairs, double sigma2) {
  return -0.5 * static_cast<double>(observed_pairs) * (kLogTwoPi + std::log(sigma2));
}

void check_dimensions(const DissimilarityData& data, const LatentConfiguration& x) {
  if (data.size() != x.size()) {
    throw std::invalid_argument("dissimilarity data and latent configuration disagree on item count");
  }
}

double log_likelihood_serial(const DissimilarityData& data, const LatentConfiguration& x, const MdsParams& params,
                             bool include_truncation) {
  check_dimensions(data, x);
  params.validate();
  const double sigma = params.sigma();
  const double half_precision = 0.5 / params.sigma2;
  const auto n = x.size();

  double sum = 0.0;
  std::size_t observed = 0;
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (!data.observed(i, j)) {
        continue;
      }
      ++observed;
      const double delta = x.distance(i, j);
      const double residual = data.value(i, j) - delta;
      double r = residual * residual * half_precision;
      if (include_truncation) {
        r += log_phi(delta / sigma);
      }
      sum += r;
    }
  }
  return likelihood_constant(observed, params.sigma2) - sum;
}

double truncation_sum_serial(const LatentConfiguration& x, const MdsParams& params, const ObservationMask& mask) {
  if (mask.size() != x.size()) {
    throw std::invalid_argument("mask and latent configuration disagree on item count");
  }
  params.validate();
  const double sigma = params.sigma();
  const auto n = x.size();
  double sum = 0.0;
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (mask.observed(i, j)) {
        sum += log_phi(x.distance(i, j) / sigma);
      }
    }
  }
  return sum;
}

GradientMatrix log_likelihood_gradient_serial(const DissimilarityData& data, const LatentConfiguration& x,
                                              const MdsParams& params) {
  check_dimensions(data, x);
  params.validate();
  const double sigma = params.sigma();
  const double precision = 1.0 / params.sigma2;
  const auto n = x.size();
  const auto& coords = x.coords();

  GradientMatrix grad{RowMatrix::Zero(coords.rows(), coords.cols()), 0};
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || !data.observed(i, j)) {
        continue;
      }
      const auto jj = static_cast<Eigen::Index>(j);
      const double delta = x.distance(i, j);
      if (delta == 0.0) {
        ++grad.coincident_pairs;
        continue;
      }
      const double coef = (delta - data.value(i, j)) * precision + inverse_mills(delta / sigma) / sigma;
      grad.values.row(ii) -= (coef / delta) * (coords.row(ii) - coords.row(jj));
    }
  }
  return grad;
}

}  // namespace mds
