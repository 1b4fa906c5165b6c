#pragma once

// Random-scan Metropolis-within-Gibbs sampler for phylogenetic Bayesian MDS.
//
// Blocks:
//   X        Hamiltonian Monte Carlo on log p(Y | X, sigma^2) + log p(X | Sigma, G)
//   sigma^2  random-walk Metropolis on log sigma^2 (truncation breaks conjugacy)
//   Sigma    conjugate Wishart draw of Sigma^{-1}; rate-matrix convention,
//            E[Sigma^{-1}] = d0 T0^{-1} a priori
//   tree     mixture component drawn from its full conditional

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mds/engine.hpp"
#include "mds/tree.hpp"
#include "mds/types.hpp"

namespace mds {

/// A differentiable log density over N x D matrices.
class LogDensity {
 public:
  virtual ~LogDensity() = default;
  virtual double value(const LatentConfiguration& x) const = 0;
  virtual RowMatrix gradient(const LatentConfiguration& x) const = 0;
};

struct HmcConfig {
  double step_size = 0.01;
  int leapfrog_steps = 10;
  /// Per-element diagonal mass; empty means the identity.
  RowMatrix mass_diagonal;

  /// Throws ConfigError.
  void validate() const;
};

struct Trajectory {
  LatentConfiguration x;
  RowMatrix momentum;
  double delta_h = 0.0;  // H(end) - H(start)
  bool divergent = false;
};

/// L leapfrog steps from (x0, p0); H = -log pi(x) + p^t M^{-1} p / 2.
Trajectory leapfrog_trajectory(const LatentConfiguration& x0, const RowMatrix& p0, const HmcConfig& hmc,
                               const LogDensity& target);

struct HmcStep {
  bool accepted = false;
  bool divergent = false;
  double delta_h = 0.0;
  double accept_prob = 0.0;
};

/// Momentum ~ N(0, M), one trajectory, Metropolis accept on exp(-delta_h).
HmcStep hmc_transition(LatentConfiguration& x, const HmcConfig& hmc, const LogDensity& target, std::mt19937_64& rng);

/// Draw from Wishart(df, scale) by the Bartlett decomposition; E = df * scale.
Eigen::MatrixXd sample_wishart(double df, const Eigen::MatrixXd& scale, std::mt19937_64& rng);

/// Sigma from its full conditional: Sigma^{-1} ~ Wishart(d0 + n, (T0 + scatter)^{-1}),
/// scatter = (X - mu0)^t V^{-1} (X - mu0).
Eigen::MatrixXd gibbs_sigma_mat(const Eigen::MatrixXd& scatter, std::size_t n, const PriorHyperparams& hyper,
                                std::mt19937_64& rng);

struct MetropolisStep {
  double value = 0.0;
  bool accepted = false;
};

/// Random-walk Metropolis on u = log sigma^2 targeting
///   log_likelihood(sigma^2) + s0 log(1/sigma^2) - r0 / sigma^2,
/// i.e. the Gamma(s0, r0) prior on 1/sigma^2 with the log-scale Jacobian.
MetropolisStep mh_sigma2(double sigma2, const std::function<double(double)>& log_likelihood, double s0, double r0,
                         double proposal_sd, std::mt19937_64& rng);

struct SamplerState {
  LatentConfiguration x;
  double sigma2 = 1.0;
  Eigen::MatrixXd sigma_mat;
  std::size_t tree_index = 0;
  std::uint64_t iteration = 0;
  std::mt19937_64 rng;
};

/// Data, engine and prior structure shared by every block update.
class PosteriorModel {
 public:
  /// `mixture` lists the tree-mixture components; an empty mixture makes every
  /// item unsequenced.
  PosteriorModel(const DissimilarityData& data, const Engine& engine, std::vector<TreeLayout> mixture,
                 Eigen::VectorXd mu0, double tau0, double tau_e, PriorHyperparams hyper);

  /// With the likelihood disabled the X-block targets the prior alone.
  void set_likelihood_enabled(bool enabled) { likelihood_enabled_ = enabled; }
  bool likelihood_enabled() const { return likelihood_enabled_; }

  const DissimilarityData& data() const { return data_; }
  const Engine& engine() const { return engine_; }
  const PriorHyperparams& hyper() const { return hyper_; }
  const Eigen::VectorXd& mu0() const { return mu0_; }
  double tau0() const { return tau0_; }
  double tau_e() const { return tau_e_; }
  std::size_t mixture_size() const { return mixture_.size(); }
  const TreeLayout& layout(std::size_t k) const { return mixture_.at(k); }

  DiffusionParams diffusion(const Eigen::MatrixXd& sigma_mat) const;

  double log_likelihood(const LatentConfiguration& x, double sigma2) const;
  double log_prior_x(const LatentConfiguration& x, const Eigen::MatrixXd& sigma_mat, std::size_t tree) const;

  /// Covariance and factorization of component `tree`; rebuilt when the
  /// component changes.
  const TreeCovariance& covariance(std::size_t tree) const;
  const PriorFactor& factor(std::size_t tree) const;

  RowMatrix log_posterior_x_gradient(const SamplerState& state) const;

  /// Joint log density of (Y, X, Sigma^{-1}, 1/sigma^2) given the tree.
  double log_joint(const SamplerState& state) const;

 private:
  void refresh(std::size_t tree) const;

  const DissimilarityData& data_;
  const Engine& engine_;
  std::vector<TreeLayout> mixture_;
  Eigen::VectorXd mu0_;
  double tau0_;
  double tau_e_;
  PriorHyperparams hyper_;
  bool likelihood_enabled_ = true;

  mutable std::optional<std::size_t> cached_tree_;
  mutable std::optional<TreeCovariance> cached_cov_;
  mutable std::optional<PriorFactor> cached_factor_;
};

/// log p(Y | X, sigma^2) + log p(X | Sigma, G) at the state.
double log_posterior_x(const SamplerState& state, const PosteriorModel& model);

/// The X-block target with sigma^2, Sigma and the tree held fixed.
class LatentTarget : public LogDensity {
 public:
  LatentTarget(const PosteriorModel& model, double sigma2, Eigen::MatrixXd sigma_mat, std::size_t tree);
  double value(const LatentConfiguration& x) const override;
  RowMatrix gradient(const LatentConfiguration& x) const override;

 private:
  const PosteriorModel& model_;
  double sigma2_;
  Eigen::MatrixXd sigma_mat_;
  std::size_t tree_;
};

/// Draws the mixture component with probability proportional to
/// p(X | Sigma, G_k) (uniform mixture weights).
std::size_t gibbs_tree_index(const LatentConfiguration& x, const Eigen::MatrixXd& sigma_mat,
                             const PosteriorModel& model, std::mt19937_64& rng);

enum class Block { x = 0, sigma2 = 1, sigma_mat = 2, tree = 3 };

const char* to_string(Block block);

struct ScanWeights {
  double x = 0.8;
  double sigma2 = 0.1;
  double sigma_mat = 0.05;
  double tree = 0.05;
};

struct ChainSettings {
  std::uint64_t iterations = 1000;
  std::uint64_t thinning = 10;
  std::uint64_t warmup = 0;  // adaptation iterations, discarded
  ScanWeights weights;
  HmcConfig hmc;
  double sigma2_proposal_sd = 0.1;
  bool adapt_step_size = true;
  bool adapt_mass = false;
  double target_accept = 0.65;
  /// Each X transition uses step_size * U(1 - j, 1 + j).
  double step_jitter = 0.1;
};

struct ChainRecord {
  std::uint64_t iteration = 0;
  Block block = Block::x;
  bool accepted = false;
  double log_posterior = 0.0;
  double sigma2 = 0.0;
  Eigen::MatrixXd sigma_mat;
  std::size_t tree_index = 0;
};

struct BlockCounts {
  std::uint64_t attempts = 0;
  std::uint64_t accepts = 0;
  double rate() const { return attempts == 0 ? 0.0 : static_cast<double>(accepts) / static_cast<double>(attempts); }
};

struct ChainLog {
  std::vector<ChainRecord> records;              // every `thinning` iterations
  std::vector<LatentConfiguration> snapshots;    // X at the same iterations
  BlockCounts counts[4];
  double step_size = 0.0;                        // after warmup
  RowMatrix mass_diagonal;
};

/// Raised when a block update fails; carries the iteration and a state summary.
class ChainError : public std::runtime_error {
 public:
  ChainError(std::uint64_t iteration, const std::string& what);
  std::uint64_t iteration() const { return iteration_; }

 private:
  std::uint64_t iteration_;
};

/// Runs warmup then `iterations` random-scan iterations from `state`.
/// Throws ConfigError if all scan weights are zero.
ChainLog run_chain(SamplerState& state, const ChainSettings& settings, const PosteriorModel& model);

}  // namespace mds
