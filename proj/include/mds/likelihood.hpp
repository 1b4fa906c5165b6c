#pragma once

// Scalar reference implementation of the truncated-normal MDS likelihood.
//
//   y_ij ~ N(delta_ij, sigma^2) I(y_ij > 0),  delta_ij = ||x_i - x_j||
//   log p(Y | X, sigma^2) = -(N_obs / 2) log(2 pi sigma^2) - sum_{i>j} r_ij
//   r_ij = (y_ij - delta_ij)^2 / (2 sigma^2) + log Phi(delta_ij / sigma)
//
// Every parallel engine is checked against these functions.

#include "mds/types.hpp"

namespace mds {

/// r_ij for a single pair. Throws std::invalid_argument on non-finite input,
/// sigma2 <= 0 or delta < 0.
double pair_term(double y, double delta, double sigma2);

/// -(n_obs / 2) log(2 pi sigma2).
double likelihood_constant(std::size_t observed_pairs, double sigma2);

/// Full log-likelihood, summed i-major over i > j. With
/// include_truncation = false the log Phi part of r_ij is dropped, so that
///   log_likelihood(.., false) == log_likelihood(.., true) + truncation_sum(..).
double log_likelihood_serial(const DissimilarityData& data, const LatentConfiguration& x, const MdsParams& params,
                             bool include_truncation = true);

/// sum over observed i > j of log Phi(delta_ij / sigma).
double truncation_sum_serial(const LatentConfiguration& x, const MdsParams& params, const ObservationMask& mask);

/// Row i = -sum_{j != i, observed} [(delta - y) / sigma2 + phi(delta/sigma) / (sigma Phi(delta/sigma))]
///         * (x_i - x_j) / delta.
/// Observed pairs with delta == 0 contribute nothing and are counted in
/// GradientMatrix::coincident_pairs.
GradientMatrix log_likelihood_gradient_serial(const DissimilarityData& data, const LatentConfiguration& x,
                                              const MdsParams& params);

/// Throws std::invalid_argument when data and x disagree on N.
void check_dimensions(const DissimilarityData& data, const LatentConfiguration& x);

}  // namespace mds
