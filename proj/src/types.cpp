#include "mds/types.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace mds {

ObservationMask::ObservationMask(std::size_t n, bool observed) : n_(n), bits_(n * n, observed ? 1 : 0) {
  for (std::size_t i = 0; i < n; ++i) {
    bits_[i * n + i] = 0;
  }
}

void ObservationMask::set(std::size_t i, std::size_t j, bool observed) {
  if (i == j) {
    return;
  }
  bits_[i * n_ + j] = observed ? 1 : 0;
  bits_[j * n_ + i] = observed ? 1 : 0;
}

std::size_t ObservationMask::observed_pairs() const {
  std::size_t count = 0;
  for (std::size_t i = 1; i < n_; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      count += bits_[i * n_ + j];
    }
  }
  return count;
}

DissimilarityData::DissimilarityData(RowMatrix values, ObservationMask mask, std::vector<std::string> labels)
    : values_(std::move(values)), mask_(std::move(mask)), labels_(std::move(labels)) {
  const auto n = mask_.size();
  if (static_cast<std::size_t>(values_.rows()) != n || static_cast<std::size_t>(values_.cols()) != n) {
    throw std::invalid_argument("dissimilarity matrix and mask sizes differ");
  }
  if (!labels_.empty() && labels_.size() != n) {
    throw std::invalid_argument("label count does not match matrix size");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (mask_.observed(i, i)) {
      throw std::invalid_argument("diagonal entries cannot be observed");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (mask_.observed(i, j) != mask_.observed(j, i)) {
        throw std::invalid_argument("observation mask is not symmetric");
      }
      if (values_(i, j) != values_(j, i)) {
        throw std::invalid_argument("dissimilarity matrix is not symmetric");
      }
      if (mask_.observed(i, j) && !(std::isfinite(values_(i, j)) && values_(i, j) >= 0.0)) {
        throw std::invalid_argument("observed dissimilarities must be finite and non-negative");
      }
    }
  }
}

DissimilarityData DissimilarityData::with_mask(ObservationMask mask) const {
  return DissimilarityData(values_, std::move(mask), labels_);
}

LatentConfiguration::LatentConfiguration(RowMatrix coords) : coords_(std::move(coords)) {
  if (!coords_.allFinite()) {
    throw std::invalid_argument("latent configuration has non-finite entries");
  }
}

double LatentConfiguration::distance(std::size_t i, std::size_t j) const {
  return (coords_.row(static_cast<Eigen::Index>(i)) - coords_.row(static_cast<Eigen::Index>(j))).norm();
}

double MdsParams::sigma() const { return std::sqrt(sigma2); }

void MdsParams::validate() const {
  if (!(std::isfinite(sigma2) && sigma2 > 0.0)) {
    throw std::invalid_argument("sigma2 must be positive and finite");
  }
}

}  // namespace mds
