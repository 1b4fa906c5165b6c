#pragma once

// Phylogenies and the Brownian-diffusion matrix-normal prior on X.
//
// Tips of each tree, plus any unsequenced items, map onto rows of X. The
// prior is X ~ MN(1 mu0^t, V_G, Sigma) where V_G is block diagonal:
//   v_ii = tau0 + d(root, i)
//   v_ij = tau0 + time from the root to the MRCA of i and j  (same tree)
//   v_ii = tau_e for unsequenced items, zero off the diagonal.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "mds/types.hpp"

namespace mds {

struct TreeNode {
  int parent = -1;
  std::vector<int> children;
  double branch_length = 0.0;  // to the parent; unused at the root
  std::string label;
};

/// Rooted bifurcating tree with positive branch lengths.
class Phylogeny {
 public:
  Phylogeny() = default;
  /// Validates structure; throws std::invalid_argument.
  Phylogeny(std::vector<TreeNode> nodes, int root);

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  int root() const { return root_; }
  bool is_tip(int node) const { return nodes_[static_cast<std::size_t>(node)].children.empty(); }

  /// Tip node ids in left-to-right order.
  const std::vector<int>& tips() const { return tips_; }
  std::size_t tip_count() const { return tips_.size(); }
  std::vector<std::string> tip_labels() const;

  /// Children before parents.
  const std::vector<int>& postorder() const { return postorder_; }

  /// Edge-weight sum from the root to every node.
  std::vector<double> root_distances() const;

 private:
  std::vector<TreeNode> nodes_;
  int root_ = -1;
  std::vector<int> tips_;
  std::vector<int> postorder_;
};

/// Parses one Newick tree. Branch lengths are mandatory on every non-root
/// edge. Throws IoError on malformed input.
Phylogeny parse_newick(std::string_view text);

/// Parses one tree per non-empty line.
std::vector<Phylogeny> parse_newick_lines(std::string_view text);
std::vector<Phylogeny> read_newick_file(const std::string& path);

std::string to_newick(const Phylogeny& tree);

/// Random bifurcating tree with `tips` tips labelled `prefix`0..: lineages
/// are joined backwards in time with exponential waiting times.
Phylogeny random_tree(std::size_t tips, double mean_branch, std::mt19937_64& rng, const std::string& prefix = "t");

/// Which rows of X the tips of each tree, and the unsequenced items, occupy.
struct TreeLayout {
  std::vector<Phylogeny> trees;
  std::vector<std::vector<std::size_t>> tip_rows;  // per tree, in Phylogeny::tips() order
  std::vector<std::size_t> unsequenced_rows;
  std::size_t n = 0;

  /// Tips of tree 1 first, then tree 2, ..., then `unsequenced` items.
  static TreeLayout in_order(std::vector<Phylogeny> trees, std::size_t unsequenced);

  /// Tips matched to item labels; items that match no tip are unsequenced.
  /// Throws std::invalid_argument for duplicate or unknown tip labels.
  static TreeLayout from_labels(std::vector<Phylogeny> trees, const std::vector<std::string>& labels);
};

struct DiffusionParams {
  Eigen::MatrixXd sigma_mat;  // D x D SPD
  Eigen::VectorXd mu0;        // D
  double tau0 = 1.0;
  double tau_e = 1.0;

  std::size_t dim() const { return static_cast<std::size_t>(sigma_mat.rows()); }
  void validate() const;
};

struct PriorHyperparams {
  double d0 = 3.0;          // Wishart degrees of freedom, > D - 1
  Eigen::MatrixXd t0_mat;   // Wishart rate matrix, D x D SPD
  double s0 = 1.0;          // Gamma shape for 1 / sigma^2
  double r0 = 1.0;          // Gamma rate for 1 / sigma^2

  void validate(std::size_t dim) const;
};

/// V_G in item order. `version` identifies the exact matrix so cached
/// factorizations can detect staleness.
struct TreeCovariance {
  Eigen::MatrixXd values;
  std::uint64_t version = 0;

  std::size_t size() const { return static_cast<std::size_t>(values.rows()); }
};

TreeCovariance build_tree_covariance(const TreeLayout& layout, double tau0, double tau_e);

/// Trees in order, followed by `unsequenced_count` unsequenced items.
TreeCovariance build_tree_covariance(const std::vector<Phylogeny>& trees, double tau0, double tau_e,
                                     std::size_t unsequenced_count);

/// Dense O(N^3) matrix-normal log density; the oracle for the pruning path.
/// Throws NumericError if V or Sigma is not SPD.
double matrix_normal_logpdf_dense(const LatentConfiguration& x, const TreeCovariance& v, const DiffusionParams& dp);

struct PruningStats {
  std::size_t merges = 0;
};

/// Linear-time post-order evaluation of the same density.
double matrix_normal_logpdf_pruning(const LatentConfiguration& x, const TreeLayout& layout, const DiffusionParams& dp,
                                    PruningStats* stats = nullptr);

/// Cholesky factor of V_G tied to the covariance version it came from.
class PriorFactor {
 public:
  explicit PriorFactor(const TreeCovariance& v);

  std::uint64_t version() const { return version_; }

  /// V^{-1} B.
  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const;

  /// (X - mu0)^t V^{-1} (X - mu0), the D x D scatter used by the Sigma update.
  Eigen::MatrixXd scatter(const LatentConfiguration& x, const Eigen::VectorXd& mu0) const;

 private:
  Eigen::LLT<Eigen::MatrixXd> llt_;
  std::uint64_t version_;
};

/// -V^{-1} (X - mu0) Sigma^{-1}. Throws std::logic_error if `factor` was
/// built from a different covariance than `v`.
GradientMatrix prior_gradient(const LatentConfiguration& x, const TreeCovariance& v, const PriorFactor& factor,
                              const DiffusionParams& dp);

/// Convenience overload that factors `v` itself.
GradientMatrix prior_gradient(const LatentConfiguration& x, const TreeCovariance& v, const DiffusionParams& dp);

/// Root ~ N(mu0, tau0 Sigma), child ~ N(parent, t Sigma); rows in tip order.
LatentConfiguration simulate_brownian_tips(const Phylogeny& tree, const DiffusionParams& dp, std::uint64_t seed);

/// Same process drawn from an existing generator.
LatentConfiguration simulate_brownian_tips(const Phylogeny& tree, const DiffusionParams& dp, std::mt19937_64& rng);

}  // namespace mds
