#pragma once

// K-fold cross-validation over observed distance entries, scored by the
// log pointwise predictive density
//   lpd-hat = sum_f sum_{held-out ij} log (1/S) sum_s p(y_ij | X_s, sigma2_s).

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mds/types.hpp"

namespace mds {

struct ItemPair {
  std::size_t i = 0;  // i > j
  std::size_t j = 0;
  bool operator==(const ItemPair&) const = default;
};

struct FoldPlan {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::vector<ItemPair> pairs;  // observed pairs, i-major order
  std::vector<std::size_t> fold;  // fold of pairs[p]

  /// Observed pairs outside fold f.
  ObservationMask training_mask(std::size_t f, std::size_t n) const;
  std::vector<ItemPair> held_out(std::size_t f) const;
  std::vector<std::size_t> fold_sizes() const;
};

/// Fold index for each of `count` items: a seeded shuffle dealt round-robin,
/// so fold sizes differ by at most one. Throws std::invalid_argument unless
/// k >= 2 and count >= k.
std::vector<std::size_t> assign_folds(std::size_t count, std::size_t k, std::uint64_t seed);

FoldPlan make_folds(const DissimilarityData& data, std::size_t k, std::uint64_t seed);

/// Sidecar file: "k,seed" header line then "i,j,fold" rows.
void write_fold_plan(const FoldPlan& plan, const std::string& path);
FoldPlan read_fold_plan(const std::string& path);

/// -1/2 log(2 pi sigma2) - (y - delta)^2 / (2 sigma2) - log Phi(delta / sigma).
/// Throws std::invalid_argument for y < 0 or sigma2 <= 0.
double held_out_log_density(double y, double delta, double sigma2);

/// log of the mean of exp(values), shifted by the maximum.
double log_mean_exp(const std::vector<double>& values);

/// One posterior draw used for prediction.
struct PosteriorDraw {
  LatentConfiguration x;
  double sigma2 = 1.0;
};

struct LpdReport {
  std::vector<double> per_fold;
  std::vector<std::size_t> held_out_per_fold;
  double total = 0.0;
  /// Candidate dimension -> total, filled by cross_validate callers.
  std::map<std::size_t, double> per_dimension;

  std::size_t held_out_count() const;
  double per_pair_mean() const;
};

/// `draws[f]` are posterior draws trained without fold f. Throws
/// std::invalid_argument when a fold has no draws.
LpdReport lpd_hat(const FoldPlan& plan, const std::vector<std::vector<PosteriorDraw>>& draws,
                  const DissimilarityData& data);

/// Candidate with the largest lpd-hat.
std::size_t select_dimension(const std::map<std::size_t, double>& per_dimension);

}  // namespace mds
