#include "mds/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "mds/error.hpp"

namespace mds {

void HmcConfig::validate() const {
  if (!(step_size > 0.0) || !std::isfinite(step_size)) {
    throw ConfigError("HMC step size must be positive");
  }
  if (leapfrog_steps < 1) {
    throw ConfigError("HMC needs at least one leapfrog step");
  }
  if (mass_diagonal.size() > 0 && !(mass_diagonal.array() > 0.0).all()) {
    throw ConfigError("diagonal mass entries must be positive");
  }
}

namespace {

// Divergence threshold on |delta H|.
constexpr double kMaxEnergyError = 1000.0;

double kinetic(const RowMatrix& p, const RowMatrix& mass) {
  if (mass.size() == 0) {
    return 0.5 * p.squaredNorm();
  }
  return 0.5 * (p.array().square() / mass.array()).sum();
}

}  // namespace

Trajectory leapfrog_trajectory(const LatentConfiguration& x0, const RowMatrix& p0, const HmcConfig& hmc,
                               const LogDensity& target) {
  hmc.validate();
  const bool unit_mass = hmc.mass_diagonal.size() == 0;
  if (!unit_mass && (hmc.mass_diagonal.rows() != p0.rows() || hmc.mass_diagonal.cols() != p0.cols())) {
    throw ConfigError("diagonal mass shape does not match X");
  }
  const double eps = hmc.step_size;
  const double h0 = -target.value(x0) + kinetic(p0, hmc.mass_diagonal);

  Trajectory out{x0, p0, 0.0, false};
  RowMatrix& x = out.x.coords();
  RowMatrix& p = out.momentum;
  p += 0.5 * eps * target.gradient(out.x);
  for (int step = 1; step <= hmc.leapfrog_steps; ++step) {
    if (unit_mass) {
      x += eps * p;
    } else {
      x.array() += eps * p.array() / hmc.mass_diagonal.array();
    }
    if (!x.allFinite()) {
      out.divergent = true;
      out.delta_h = std::numeric_limits<double>::infinity();
      return out;
    }
    const RowMatrix grad = target.gradient(out.x);
    p += (step == hmc.leapfrog_steps ? 0.5 * eps : eps) * grad;
  }
  const double h1 = -target.value(out.x) + kinetic(p, hmc.mass_diagonal);
  out.delta_h = h1 - h0;
  if (!std::isfinite(out.delta_h) || std::abs(out.delta_h) > kMaxEnergyError) {
    out.divergent = true;
  }
  return out;
}

HmcStep hmc_transition(LatentConfiguration& x, const HmcConfig& hmc, const LogDensity& target,
                       std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  RowMatrix p(x.coords().rows(), x.coords().cols());
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    p.data()[k] = normal(rng);
  }
  if (hmc.mass_diagonal.size() > 0) {
    p.array() *= hmc.mass_diagonal.array().sqrt();
  }
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);

  HmcStep step;
  Trajectory traj = leapfrog_trajectory(x, p, hmc, target);
  step.delta_h = traj.delta_h;
  step.divergent = traj.divergent;
  if (traj.divergent) {
    return step;
  }
  step.accept_prob = std::min(1.0, std::exp(-traj.delta_h));
  if (u < step.accept_prob) {
    x = std::move(traj.x);
    step.accepted = true;
  }
  return step;
}

Eigen::MatrixXd sample_wishart(double df, const Eigen::MatrixXd& scale, std::mt19937_64& rng) {
  const auto d = scale.rows();
  if (scale.cols() != d || !(df > static_cast<double>(d) - 1.0)) {
    throw std::invalid_argument("invalid Wishart parameters");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(scale);
  if (llt.info() != Eigen::Success) {
    throw NumericError("Wishart scale matrix is not positive definite");
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    std::chi_squared_distribution<double> chi2(df - static_cast<double>(i));
    a(i, i) = std::sqrt(chi2(rng));
    for (Eigen::Index j = 0; j < i; ++j) {
      a(i, j) = normal(rng);
    }
  }
  const Eigen::MatrixXd la = llt.matrixL() * a;
  return la * la.transpose();
}

Eigen::MatrixXd gibbs_sigma_mat(const Eigen::MatrixXd& scatter, std::size_t n, const PriorHyperparams& hyper,
                                std::mt19937_64& rng) {
  hyper.validate(static_cast<std::size_t>(scatter.rows()));
  const Eigen::MatrixXd rate = hyper.t0_mat + scatter;
  const Eigen::MatrixXd scale = rate.inverse();
  const Eigen::MatrixXd precision = sample_wishart(hyper.d0 + static_cast<double>(n), 0.5 * (scale + scale.transpose()), rng);
  Eigen::MatrixXd sigma = precision.inverse();
  return 0.5 * (sigma + sigma.transpose());
}

MetropolisStep mh_sigma2(double sigma2, const std::function<double(double)>& log_likelihood, double s0, double r0,
                         double proposal_sd, std::mt19937_64& rng) {
  if (!(proposal_sd > 0.0)) {
    throw std::invalid_argument("sigma2 proposal sd must be positive");
  }
  auto log_target = [&](double s2) {
    const double precision = 1.0 / s2;
    return log_likelihood(s2) + s0 * std::log(precision) - r0 * precision;
  };
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double proposal = sigma2 * std::exp(proposal_sd * normal(rng));
  const double u = unif(rng);
  const double log_ratio = log_target(proposal) - log_target(sigma2);
  if (std::isfinite(log_ratio) && std::log(u) < log_ratio) {
    return {proposal, true};
  }
  return {sigma2, false};
}

PosteriorModel::PosteriorModel(const DissimilarityData& data, const Engine& engine, std::vector<TreeLayout> mixture,
                               Eigen::VectorXd mu0, double tau0, double tau_e, PriorHyperparams hyper)
    : data_(data), engine_(engine), mixture_(std::move(mixture)), mu0_(std::move(mu0)), tau0_(tau0), tau_e_(tau_e),
      hyper_(std::move(hyper)) {
  if (mixture_.empty()) {
    mixture_.push_back(TreeLayout::in_order({}, data_.size()));
  }
  for (const auto& layout : mixture_) {
    if (layout.n != data_.size()) {
      throw std::invalid_argument("tree layout does not cover every item");
    }
  }
  hyper_.validate(static_cast<std::size_t>(mu0_.size()));
  if (!(tau0_ > 0.0) || !(tau_e_ > 0.0)) {
    throw std::invalid_argument("tau0 and tau_e must be positive");
  }
}

DiffusionParams PosteriorModel::diffusion(const Eigen::MatrixXd& sigma_mat) const {
  return DiffusionParams{sigma_mat, mu0_, tau0_, tau_e_};
}

double PosteriorModel::log_likelihood(const LatentConfiguration& x, double sigma2) const {
  if (!likelihood_enabled_) {
    return 0.0;
  }
  return engine_.log_likelihood(data_, x, MdsParams{sigma2});
}

double PosteriorModel::log_prior_x(const LatentConfiguration& x, const Eigen::MatrixXd& sigma_mat,
                                   std::size_t tree) const {
  return matrix_normal_logpdf_pruning(x, mixture_.at(tree), diffusion(sigma_mat));
}

void PosteriorModel::refresh(std::size_t tree) const {
  if (cached_tree_ == tree) {
    return;
  }
  cached_factor_.reset();
  cached_cov_ = build_tree_covariance(mixture_.at(tree), tau0_, tau_e_);
  cached_factor_.emplace(*cached_cov_);
  cached_tree_ = tree;
}

const TreeCovariance& PosteriorModel::covariance(std::size_t tree) const {
  refresh(tree);
  return *cached_cov_;
}

const PriorFactor& PosteriorModel::factor(std::size_t tree) const {
  refresh(tree);
  return *cached_factor_;
}

RowMatrix PosteriorModel::log_posterior_x_gradient(const SamplerState& state) const {
  const auto& cov = covariance(state.tree_index);
  RowMatrix grad = prior_gradient(state.x, cov, factor(state.tree_index), diffusion(state.sigma_mat)).values;
  if (likelihood_enabled_) {
    grad += engine_.gradient(data_, state.x, MdsParams{state.sigma2}).values;
  }
  return grad;
}

namespace {

double log_multivariate_gamma(double a, Eigen::Index d) {
  double out = 0.25 * static_cast<double>(d * (d - 1)) * std::log(std::numbers::pi);
  for (Eigen::Index j = 0; j < d; ++j) {
    out += std::lgamma(a - 0.5 * static_cast<double>(j));
  }
  return out;
}

// log Wishart(W; df, T^{-1}) with T the rate matrix.
double log_wishart_rate(const Eigen::MatrixXd& w, double df, const Eigen::MatrixXd& rate) {
  const auto d = w.rows();
  const double dd = static_cast<double>(d);
  Eigen::LLT<Eigen::MatrixXd> w_llt(w);
  Eigen::LLT<Eigen::MatrixXd> t_llt(rate);
  const double log_det_w = 2.0 * Eigen::MatrixXd(w_llt.matrixL()).diagonal().array().log().sum();
  const double log_det_t = 2.0 * Eigen::MatrixXd(t_llt.matrixL()).diagonal().array().log().sum();
  return 0.5 * (df - dd - 1.0) * log_det_w - 0.5 * (rate * w).trace() - 0.5 * df * dd * std::log(2.0) +
         0.5 * df * log_det_t - log_multivariate_gamma(0.5 * df, d);
}

}  // namespace

double PosteriorModel::log_joint(const SamplerState& state) const {
  const double precision = 1.0 / state.sigma2;
  const double log_gamma = hyper_.s0 * std::log(hyper_.r0) - std::lgamma(hyper_.s0) +
                           (hyper_.s0 - 1.0) * std::log(precision) - hyper_.r0 * precision;
  const Eigen::MatrixXd sigma_inv = state.sigma_mat.inverse();
  return log_posterior_x(state, *this) + log_wishart_rate(0.5 * (sigma_inv + sigma_inv.transpose()), hyper_.d0,
                                                          hyper_.t0_mat) +
         log_gamma;
}

double log_posterior_x(const SamplerState& state, const PosteriorModel& model) {
  return model.log_likelihood(state.x, state.sigma2) + model.log_prior_x(state.x, state.sigma_mat, state.tree_index);
}

LatentTarget::LatentTarget(const PosteriorModel& model, double sigma2, Eigen::MatrixXd sigma_mat, std::size_t tree)
    : model_(model), sigma2_(sigma2), sigma_mat_(std::move(sigma_mat)), tree_(tree) {}

double LatentTarget::value(const LatentConfiguration& x) const {
  return model_.log_likelihood(x, sigma2_) + model_.log_prior_x(x, sigma_mat_, tree_);
}

RowMatrix LatentTarget::gradient(const LatentConfiguration& x) const {
  const auto& cov = model_.covariance(tree_);
  RowMatrix grad = prior_gradient(x, cov, model_.factor(tree_), model_.diffusion(sigma_mat_)).values;
  if (model_.likelihood_enabled()) {
    grad += model_.engine().gradient(model_.data(), x, MdsParams{sigma2_}).values;
  }
  return grad;
}

std::size_t gibbs_tree_index(const LatentConfiguration& x, const Eigen::MatrixXd& sigma_mat,
                             const PosteriorModel& model, std::mt19937_64& rng) {
  const auto k = model.mixture_size();
  std::vector<double> log_w(k);
  for (std::size_t t = 0; t < k; ++t) {
    log_w[t] = model.log_prior_x(x, sigma_mat, t);
  }
  const double top = *std::max_element(log_w.begin(), log_w.end());
  std::vector<double> w(k);
  for (std::size_t t = 0; t < k; ++t) {
    w[t] = std::exp(log_w[t] - top);
  }
  std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
  return pick(rng);
}

const char* to_string(Block block) {
  switch (block) {
    case Block::x:
      return "x";
    case Block::sigma2:
      return "sigma2";
    case Block::sigma_mat:
      return "sigma_mat";
    case Block::tree:
      return "tree";
  }
  return "unknown";
}

ChainError::ChainError(std::uint64_t iteration, const std::string& what)
    : std::runtime_error("iteration " + std::to_string(iteration) + ": " + what), iteration_(iteration) {}

namespace {

// Step-size adaptation by dual averaging toward a target acceptance rate.
class DualAveraging {
 public:
  DualAveraging(double initial_step, double target) : mu_(std::log(10.0 * initial_step)), target_(target) {}

  double update(double accept_prob) {
    ++count_;
    const double t = static_cast<double>(count_);
    const double eta = 1.0 / (t + kT0);
    h_bar_ = (1.0 - eta) * h_bar_ + eta * (target_ - accept_prob);
    const double log_step = mu_ - std::sqrt(t) / kGamma * h_bar_;
    const double weight = std::pow(t, -kKappa);
    log_step_bar_ = weight * log_step + (1.0 - weight) * log_step_bar_;
    return std::exp(log_step);
  }

  double final_step() const { return std::exp(log_step_bar_); }

 private:
  static constexpr double kGamma = 0.05;
  static constexpr double kT0 = 10.0;
  static constexpr double kKappa = 0.75;
  double mu_;
  double target_;
  double h_bar_ = 0.0;
  double log_step_bar_ = 0.0;
  std::uint64_t count_ = 0;
};

std::string describe(const SamplerState& state) {
  std::ostringstream os;
  os.precision(10);
  os << "sigma2=" << state.sigma2 << " tr(Sigma)=" << state.sigma_mat.trace() << " tree=" << state.tree_index;
  return os.str();
}

}  // namespace

ChainLog run_chain(SamplerState& state, const ChainSettings& settings, const PosteriorModel& model) {
  const auto& w = settings.weights;
  const double weights[4] = {w.x, w.sigma2, w.sigma_mat, w.tree};
  double total_weight = 0.0;
  for (double v : weights) {
    if (!(v >= 0.0)) {
      throw ConfigError("scan weights must be non-negative");
    }
    total_weight += v;
  }
  if (!(total_weight > 0.0)) {
    throw ConfigError("at least one scan weight must be positive");
  }
  if (settings.thinning == 0) {
    throw ConfigError("thinning must be >= 1");
  }
  settings.hmc.validate();
  if (!(settings.step_jitter >= 0.0 && settings.step_jitter < 1.0)) {
    throw ConfigError("step jitter must be in [0, 1)");
  }

  ChainLog log;
  HmcConfig hmc = settings.hmc;
  std::discrete_distribution<int> pick_block(std::begin(weights), std::end(weights));
  std::optional<DualAveraging> adapt;
  if (settings.adapt_step_size && settings.warmup > 0) {
    adapt.emplace(hmc.step_size, settings.target_accept);
  }
  // Running per-element moments of X over the middle half of warmup. The
  // step size is re-adapted over the last quarter under the new mass.
  RowMatrix mean = RowMatrix::Zero(state.x.coords().rows(), state.x.coords().cols());
  RowMatrix m2 = mean;
  std::uint64_t moment_count = 0;
  const std::uint64_t mass_start = settings.warmup / 4;
  const std::uint64_t mass_end = settings.warmup - settings.warmup / 4;

  const std::uint64_t total = settings.warmup + settings.iterations;
  for (std::uint64_t it = 0; it < total; ++it) {
    const bool warming = it < settings.warmup;
    const auto block = static_cast<Block>(pick_block(state.rng));
    bool accepted = false;
    try {
      switch (block) {
        case Block::x: {
          LatentTarget target(model, state.sigma2, state.sigma_mat, state.tree_index);
          // Jittered step: a fixed eps * L can resonate with a direction of
          // the target and leave it nearly frozen.
          HmcConfig jittered = hmc;
          if (settings.step_jitter > 0.0) {
            std::uniform_real_distribution<double> u(1.0 - settings.step_jitter, 1.0 + settings.step_jitter);
            jittered.step_size *= u(state.rng);
          }
          const HmcStep step = hmc_transition(state.x, jittered, target, state.rng);
          accepted = step.accepted;
          if (warming && adapt) {
            hmc.step_size = adapt->update(step.divergent ? 0.0 : step.accept_prob);
          }
          break;
        }
        case Block::sigma2: {
          auto loglik = [&](double s2) { return model.log_likelihood(state.x, s2); };
          const auto step = mh_sigma2(state.sigma2, loglik, model.hyper().s0, model.hyper().r0,
                                      settings.sigma2_proposal_sd, state.rng);
          state.sigma2 = step.value;
          accepted = step.accepted;
          break;
        }
        case Block::sigma_mat: {
          const Eigen::MatrixXd scatter = model.factor(state.tree_index).scatter(state.x, model.mu0());
          state.sigma_mat = gibbs_sigma_mat(scatter, state.x.size(), model.hyper(), state.rng);
          accepted = true;
          break;
        }
        case Block::tree: {
          state.tree_index = gibbs_tree_index(state.x, state.sigma_mat, model, state.rng);
          accepted = true;
          break;
        }
      }
    } catch (const ChainError&) {
      throw;
    } catch (const std::exception& e) {
      throw ChainError(state.iteration, std::string(to_string(block)) + " update failed (" + e.what() +
                                            "); state: " + describe(state));
    }

    if (warming) {
      if (settings.adapt_mass && it >= mass_start && it < mass_end) {
        ++moment_count;
        const RowMatrix delta = state.x.coords() - mean;
        mean += delta / static_cast<double>(moment_count);
        m2.array() += delta.array() * (state.x.coords() - mean).array();
      }
      if (settings.adapt_mass && it + 1 == mass_end && moment_count > 2) {
        const RowMatrix var = m2 / static_cast<double>(moment_count - 1);
        // Rescale the step so the first proposals under the new mass move
        // about as far as before, then adapt afresh.
        const double old_scale = hmc.mass_diagonal.size() == 0 ? 1.0 : 1.0 / hmc.mass_diagonal.mean();
        hmc.mass_diagonal = (1.0 / var.array().max(1e-8)).matrix();
        hmc.step_size *= std::sqrt(old_scale / var.mean());
        if (adapt) {
          adapt.emplace(hmc.step_size, settings.target_accept);
        }
      }
      if (it + 1 == settings.warmup && adapt) {
        hmc.step_size = adapt->final_step();
      }
      continue;
    }

    ++state.iteration;
    auto& counts = log.counts[static_cast<int>(block)];
    ++counts.attempts;
    counts.accepts += accepted ? 1 : 0;
    if (state.iteration % settings.thinning == 0) {
      ChainRecord rec;
      rec.iteration = state.iteration;
      rec.block = block;
      rec.accepted = accepted;
      rec.log_posterior = model.log_joint(state);
      rec.sigma2 = state.sigma2;
      rec.sigma_mat = state.sigma_mat;
      rec.tree_index = state.tree_index;
      log.records.push_back(std::move(rec));
      log.snapshots.push_back(state.x);
    }
  }
  log.step_size = hmc.step_size;
  log.mass_diagonal = hmc.mass_diagonal;
  return log;
}

}  // namespace mds
