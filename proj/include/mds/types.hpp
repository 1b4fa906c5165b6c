#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mds {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Symmetric N x N observation indicator; the diagonal is never observed.
class ObservationMask {
 public:
  ObservationMask() = default;
  /// All off-diagonal pairs observed (or none, if `observed` is false).
  explicit ObservationMask(std::size_t n, bool observed = true);

  std::size_t size() const { return n_; }
  bool observed(std::size_t i, std::size_t j) const { return bits_[i * n_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool observed);

  /// Number of observed pairs with i > j.
  std::size_t observed_pairs() const;

  /// Row-major 0/1 bytes; row i is contiguous.
  const std::uint8_t* row(std::size_t i) const { return bits_.data() + i * n_; }

  bool operator==(const ObservationMask&) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Observed dissimilarities y_ij with their mask.
///
/// Values are stored as a full symmetric row-major matrix so that for a fixed
/// item j the entries y_ij over i are contiguous.
class DissimilarityData {
 public:
  DissimilarityData() = default;
  /// Throws std::invalid_argument unless values are symmetric, finite and
  /// non-negative wherever observed.
  DissimilarityData(RowMatrix values, ObservationMask mask, std::vector<std::string> labels = {});

  std::size_t size() const { return mask_.size(); }
  double value(std::size_t i, std::size_t j) const { return values_(i, j); }
  bool observed(std::size_t i, std::size_t j) const { return mask_.observed(i, j); }
  const RowMatrix& values() const { return values_; }
  const ObservationMask& mask() const { return mask_; }
  const std::vector<std::string>& labels() const { return labels_; }
  std::size_t observed_pairs() const { return mask_.observed_pairs(); }

  /// Same values under a different mask (used for cross-validation folds).
  DissimilarityData with_mask(ObservationMask mask) const;

 private:
  RowMatrix values_;
  ObservationMask mask_;
  std::vector<std::string> labels_;
};

/// N x D latent locations; row i is x_i.
class LatentConfiguration {
 public:
  LatentConfiguration() = default;
  explicit LatentConfiguration(RowMatrix coords);
  LatentConfiguration(std::size_t n, std::size_t d) : coords_(RowMatrix::Zero(n, d)) {}

  std::size_t size() const { return static_cast<std::size_t>(coords_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(coords_.cols()); }
  const RowMatrix& coords() const { return coords_; }
  RowMatrix& coords() { return coords_; }

  double distance(std::size_t i, std::size_t j) const;

 private:
  RowMatrix coords_;
};

struct MdsParams {
  double sigma2 = 1.0;

  double sigma() const;
  void validate() const;
};

/// d log-likelihood / dX, plus the number of observed pairs skipped because
/// their latent locations coincide.
struct GradientMatrix {
  RowMatrix values;
  std::size_t coincident_pairs = 0;
};

}  // namespace mds
