// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance                 run everything
//   acceptance engine prior    run the named criteria only
//
// Criteria that cannot be measured on this host print SKIP with the reason;
// they never print PASS. Exit status is 1 if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <omp.h>

#include "helpers.hpp"
#include "mds/commands.hpp"
#include "mds/likelihood.hpp"
#include "mds/sampler.hpp"

using namespace mds;
namespace fs = std::filesystem;

namespace {

enum class Verdict { pass, fail, skip };

struct Outcome {
  Verdict verdict = Verdict::fail;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

fs::path work_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / "mds_acceptance" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

RunConfig config_with(const std::vector<std::string>& overrides) {
  std::istringstream empty;
  return parse_config(empty, overrides);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// --- engine equivalence ----------------------------------------------------

Outcome engine_equivalence() {
  const std::size_t sizes[] = {16, 256, 1024, 4096};
  const std::size_t dims[] = {2, 6};
  const Backend backends[] = {Backend::vectorized, Backend::threaded, Backend::threaded_vectorized,
                              Backend::tiled_device};
  double worst_lik = 0.0;
  double worst_grad = 0.0;
  int instances = 0;
  for (int inst = 0; inst < 50; ++inst) {
    const std::size_t n = sizes[inst % 4];
    const std::size_t d = dims[(inst / 4) % 2];
    const auto seed = static_cast<std::uint64_t>(1000 + inst);
    const auto x = testing::gaussian_points(n, d, seed);
    const auto data = testing::noisy_data(testing::gaussian_points(n, d, seed + 7), 0.5, 0.1 * (inst % 3), seed);
    const MdsParams p{0.25 + 0.1 * (inst % 7)};
    const double ref = log_likelihood_serial(data, x, p);
    const auto gref = log_likelihood_gradient_serial(data, x, p).values;
    for (auto b : backends) {
      EngineConfig c;
      c.backend = b;
      c.thread_count = b == Backend::vectorized ? 1 : 1 + inst % 4;
      c.lane_width = 1 << (inst % 4);
      const Engine e(c);
      worst_lik = std::max(worst_lik, std::abs(e.log_likelihood(data, x, p) - ref) / std::abs(ref));
      const auto g = e.gradient(data, x, p).values;
      for (Eigen::Index i = 0; i < g.rows(); ++i) {
        const double norm = gref.row(i).norm();
        worst_grad = std::max(worst_grad, (g.row(i) - gref.row(i)).norm() / std::max(norm, 1e-300));
      }
    }
    ++instances;
  }
  const bool ok = worst_lik < 1e-9 && worst_grad < 1e-8;
  return {ok ? Verdict::pass : Verdict::fail,
          std::to_string(instances) + " instances x 4 backends; max likelihood rel err " + fmt("%.2e", worst_lik) +
              ", max gradient row rel err " + fmt("%.2e", worst_grad)};
}

// --- gradient vs finite differences -----------------------------------------

Outcome gradient_correctness() {
  double worst = 0.0;
  int used = 0;
  for (std::uint64_t seed = 1; used < 20; ++seed) {
    const std::size_t n = 8 + seed % 12;
    const std::size_t d = 1 + seed % 4;
    const auto x = testing::gaussian_points(n, d, seed);
    double min_delta = 1e300;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        min_delta = std::min(min_delta, x.distance(i, j));
      }
    }
    if (min_delta <= 1e-3) {
      continue;
    }
    const auto data = testing::noisy_data(testing::gaussian_points(n, d, seed + 99), 0.4, 0.2, seed);
    const MdsParams p{0.3 + 0.2 * static_cast<double>(seed % 5)};
    const auto g = log_likelihood_gradient_serial(data, x, p).values;
    RowMatrix fd(g.rows(), g.cols());
    const double h = 1e-5;
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      for (Eigen::Index k = 0; k < g.cols(); ++k) {
        RowMatrix up = x.coords();
        RowMatrix dn = x.coords();
        up(i, k) += h;
        dn(i, k) -= h;
        fd(i, k) = (log_likelihood_serial(data, LatentConfiguration(up), p) -
                    log_likelihood_serial(data, LatentConfiguration(dn), p)) /
                   (2 * h);
      }
    }
    worst = std::max(worst, (g - fd).norm() / fd.norm());
    ++used;
  }
  return {worst < 1e-6 ? Verdict::pass : Verdict::fail,
          "20 instances, max relative error " + fmt("%.2e", worst) + " (threshold 1e-6)"};
}

// --- pruning vs dense prior -------------------------------------------------

Outcome prior_oracle() {
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  std::size_t largest = 0;
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t d = 1 + rep % 4;
    const std::size_t tips = 2 + (static_cast<std::size_t>(rep) * 7) % 56;
    const std::size_t unsequenced = rep % 3 == 0 ? 0 : static_cast<std::size_t>(rep % 6);
    const auto tree = random_tree(tips, 0.3 + 0.1 * rep, rng);
    const auto layout = TreeLayout::in_order({tree}, unsequenced);
    std::normal_distribution<double> z;
    Eigen::MatrixXd a(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      a.data()[i] = z(rng);
    }
    DiffusionParams dp;
    dp.sigma_mat = a * a.transpose() + 0.5 * Eigen::MatrixXd::Identity(a.rows(), a.rows());
    dp.mu0 = Eigen::VectorXd::Constant(a.rows(), 0.5 * rep);
    dp.tau0 = 0.5 + rep;
    dp.tau_e = 2.0;
    // Latent points drawn from the prior itself: Brownian tips, then the
    // unsequenced items from their independent marginal.
    RowMatrix coords(static_cast<Eigen::Index>(layout.n), a.rows());
    const auto tips_x = simulate_brownian_tips(tree, dp, rng);
    for (std::size_t t = 0; t < tips; ++t) {
      coords.row(static_cast<Eigen::Index>(layout.tip_rows[0][t])) = tips_x.coords().row(static_cast<Eigen::Index>(t));
    }
    const Eigen::MatrixXd chol = dp.sigma_mat.llt().matrixL();
    for (auto r : layout.unsequenced_rows) {
      Eigen::VectorXd e(a.rows());
      for (Eigen::Index k = 0; k < e.size(); ++k) {
        e(k) = z(rng);
      }
      coords.row(static_cast<Eigen::Index>(r)) = (dp.mu0 + std::sqrt(dp.tau_e) * chol * e).transpose();
    }
    const LatentConfiguration x(coords);
    const double fast = matrix_normal_logpdf_pruning(x, layout, dp);
    const double dense = matrix_normal_logpdf_dense(x, build_tree_covariance(layout, dp.tau0, dp.tau_e), dp);
    worst = std::max(worst, std::abs(fast - dense));
    largest = std::max(largest, layout.n);
  }
  return {worst < 1e-8 ? Verdict::pass : Verdict::fail,
          "20 trees, N <= " + std::to_string(largest) + ", D <= 4; max abs diff " + fmt("%.2e", worst)};
}

// --- HMC validity ------------------------------------------------------------

class IsoGaussian : public LogDensity {
 public:
  explicit IsoGaussian(RowMatrix scale) : scale_(std::move(scale)) {}
  double value(const LatentConfiguration& x) const override {
    return -0.5 * (x.coords().array() / scale_.array()).square().sum();
  }
  RowMatrix gradient(const LatentConfiguration& x) const override {
    return -(x.coords().array() / scale_.array().square()).matrix();
  }

 private:
  RowMatrix scale_;
};

// Standard error of a mean from non-overlapping batch means.
double batch_se(const std::vector<double>& v, std::size_t batches = 100) {
  const std::size_t len = v.size() / batches;
  std::vector<double> means(batches, 0.0);
  for (std::size_t b = 0; b < batches; ++b) {
    for (std::size_t k = 0; k < len; ++k) {
      means[b] += v[b * len + k];
    }
    means[b] /= static_cast<double>(len);
  }
  double m = 0.0;
  for (double x : means) {
    m += x;
  }
  m /= static_cast<double>(batches);
  double ss = 0.0;
  for (double x : means) {
    ss += (x - m) * (x - m);
  }
  return std::sqrt(ss / static_cast<double>(batches - 1) / static_cast<double>(batches));
}

Outcome hmc_validity() {
  // (a) energy error under step halving at fixed trajectory length.
  RowMatrix scale(5, 2);
  scale << 1.0, 0.5, 2.0, 1.5, 0.8, 1.2, 3.0, 0.7, 1.1, 0.9;
  const IsoGaussian gauss(scale);
  double err[2] = {0.0, 0.0};
  for (int level = 0; level < 2; ++level) {
    HmcConfig hmc;
    hmc.step_size = 0.1 / (1 << level);
    hmc.leapfrog_steps = 10 * (1 << level);
    for (int rep = 0; rep < 500; ++rep) {
      const auto x0 = testing::gaussian_points(5, 2, 10 + static_cast<std::uint64_t>(rep));
      const RowMatrix p0 = testing::gaussian_points(5, 2, 5000 + static_cast<std::uint64_t>(rep)).coords();
      err[level] += std::abs(leapfrog_trajectory(x0, p0, hmc, gauss).delta_h);
    }
  }
  const double ratio = err[0] / err[1];
  const bool a_ok = ratio >= 3.5 && ratio <= 4.5;

  // (b) prior stationarity with the likelihood switched off.
  const auto tree = parse_newick("(((A:0.4,B:0.6):0.3,C:1.0):0.5,(D:0.8,E:0.2):0.7);");
  const std::vector<std::string> labels{"A", "B", "C", "D", "E", "U"};
  const auto layout = TreeLayout::from_labels({tree}, labels);
  RowMatrix y = RowMatrix::Ones(6, 6);
  y.diagonal().setZero();
  const DissimilarityData data(y, ObservationMask(6, true), labels);
  const Engine engine(EngineConfig{});
  PriorHyperparams hyper;
  hyper.d0 = 3.0;
  hyper.t0_mat = Eigen::Matrix2d::Identity();
  const Eigen::Vector2d mu0(1.0, -0.5);
  const double tau0 = 0.8;
  const double tau_e = 1.5;
  PosteriorModel model(data, engine, {layout}, mu0, tau0, tau_e, hyper);
  model.set_likelihood_enabled(false);
  Eigen::Matrix2d sigma;
  sigma << 1.0, 0.3, 0.3, 0.5;

  SamplerState state;
  state.x = LatentConfiguration(RowMatrix::Zero(6, 2));
  state.sigma2 = 1.0;
  state.sigma_mat = sigma;
  state.rng.seed(77);
  ChainSettings settings;
  settings.iterations = 100000;
  settings.thinning = 1;
  settings.warmup = 2000;
  settings.weights = {1.0, 0.0, 0.0, 0.0};
  settings.hmc.step_size = 0.2;
  settings.hmc.leapfrog_steps = 10;
  settings.adapt_mass = true;
  const auto log = run_chain(state, settings, model);

  const auto v = build_tree_covariance(layout, tau0, tau_e).values;
  int checks = 0;
  int within = 0;
  double worst_z = 0.0;
  for (Eigen::Index i = 0; i < 6; ++i) {
    for (Eigen::Index k = 0; k < 2; ++k) {
      std::vector<double> xs;
      std::vector<double> sq;
      xs.reserve(log.snapshots.size());
      for (const auto& s : log.snapshots) {
        const double val = s.coords()(i, k);
        xs.push_back(val);
        sq.push_back((val - mu0(k)) * (val - mu0(k)));
      }
      const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
      const double msq = std::accumulate(sq.begin(), sq.end(), 0.0) / static_cast<double>(sq.size());
      const double z_mean = std::abs(mean - mu0(k)) / batch_se(xs);
      const double z_var = std::abs(msq - v(i, i) * sigma(k, k)) / batch_se(sq);
      for (double z : {z_mean, z_var}) {
        ++checks;
        within += z < 3.0 ? 1 : 0;
        worst_z = std::max(worst_z, z);
      }
    }
  }
  const bool b_ok = within == checks;
  std::string detail = "(a) energy-error ratio " + fmt("%.3f", ratio) + (a_ok ? " ok" : " OUT OF [3.5, 4.5]") +
                       "; (b) " + std::to_string(within) + "/" + std::to_string(checks) +
                       " prior means/variances within 3 MC SE over " + std::to_string(log.snapshots.size()) +
                       " draws, max |z| " + fmt("%.2f", worst_z);
  return {a_ok && b_ok ? Verdict::pass : Verdict::fail, detail};
}

// --- posterior recovery ------------------------------------------------------

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

Outcome posterior_recovery() {
  const auto dir = work_dir("recovery");
  int covered = 0;
  double min_r = 1.0;
  std::ostringstream misses;
  for (int rep = 1; rep <= 20; ++rep) {
    const auto rep_dir = dir / ("rep" + std::to_string(rep));
    const auto sim = cmd_simulate(config_with({"output.directory=" + (rep_dir / "data").string(), "simulate.n=50",
                                               "simulate.dim=2", "simulate.sigma2=1", "simulate.sigma_diag=10",
                                               "simulate.tree_seed=1", "simulate.seed=" + std::to_string(rep)}));
    const auto log = cmd_fit(config_with({"output.directory=" + (rep_dir / "fit").string(),
                                          "data.distances=" + (rep_dir / "data" / "distances.csv").string(),
                                          "data.trees=" + (rep_dir / "data" / "tree.nwk").string(),
                                          "model.latent_dim=2", "sampler.iterations=20000", "sampler.warmup=2000",
                                          "sampler.thinning=10", "sampler.seed=" + std::to_string(rep)}));
    std::vector<double> s2;
    for (const auto& r : log.records) {
      s2.push_back(r.sigma2);
    }
    const auto q = summarize(s2);
    if (q.q05 <= 1.0 && 1.0 <= q.q95) {
      ++covered;
    } else {
      misses << " rep" << rep << "[" << fmt("%.3f", q.q05) << "," << fmt("%.3f", q.q95) << "]";
    }
    std::vector<double> truth;
    std::vector<double> fitted;
    for (std::size_t i = 0; i < 50; ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        truth.push_back(sim.truth.distance(i, j));
        double mean = 0.0;
        for (const auto& snap : log.snapshots) {
          mean += snap.distance(i, j);
        }
        fitted.push_back(mean / static_cast<double>(log.snapshots.size()));
      }
    }
    min_r = std::min(min_r, pearson(truth, fitted));
  }
  const bool ok = covered >= 17 && min_r > 0.9;
  std::string detail = "sigma2 90% intervals cover truth in " + std::to_string(covered) +
                       "/20 replicates; min distance correlation " + fmt("%.4f", min_r);
  if (!misses.str().empty()) {
    detail += "; misses:" + misses.str();
  }
  return {ok ? Verdict::pass : Verdict::fail, detail};
}

// --- dimension selection -----------------------------------------------------

Outcome dimension_selection() {
  const auto dir = work_dir("cv");
  cmd_simulate(config_with({"output.directory=" + (dir / "data").string(), "simulate.n=50", "simulate.dim=3",
                            "simulate.sigma2=0.25", "simulate.sigma_diag=10", "simulate.seed=1"}));
  const auto outcome =
      cmd_cv(config_with({"output.directory=" + (dir / "cv").string(),
                          "data.distances=" + (dir / "data" / "distances.csv").string(),
                          "data.trees=" + (dir / "data" / "tree.nwk").string(), "cv.folds=5", "cv.dims=2,3,4",
                          "sampler.iterations=5000", "sampler.warmup=1000", "sampler.thinning=10"}));
  std::string detail = "5-fold lpd:";
  for (const auto& [d, total] : outcome.per_dimension) {
    detail += " D=" + std::to_string(d) + " " + fmt("%.2f", total);
  }
  detail += "; selected D=" + std::to_string(outcome.selected);
  return {outcome.selected == 3 ? Verdict::pass : Verdict::fail, detail};
}

// --- scaling trends ----------------------------------------------------------

double median_ms(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

double time_likelihood(const Engine& e, const DissimilarityData& data, const LatentConfiguration& x, bool trunc,
                       int repeats) {
  std::vector<double> ms;
  volatile double sink = e.log_likelihood(data, x, MdsParams{1.0}, trunc);
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    sink = e.log_likelihood(data, x, MdsParams{1.0}, trunc);
    ms.push_back(seconds_since(t0) * 1e3);
  }
  (void)sink;
  return median_ms(ms);
}

DissimilarityData gaussian_distances(const LatentConfiguration& x) {
  const auto n = x.size();
  RowMatrix y(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = x.distance(i, j);
    }
  }
  return DissimilarityData(std::move(y), ObservationMask(n, true));
}

std::vector<Outcome> scaling_trends() {
  std::vector<Outcome> out;
  const int cores = std::max(1, omp_get_num_procs());
  const auto x4096 = testing::gaussian_points(4096, 6, 1);
  const auto data4096 = gaussian_distances(x4096);

  // (a) threaded scaling.
  if (cores < 2) {
    out.push_back({Verdict::skip, "(a) threaded scaling not verifiable: host reports " + std::to_string(cores) +
                                      " core; needs >= 2 (and 8 for the 3x speedup clause)"});
  } else {
    const int top = std::min(8, cores);
    std::vector<double> t;
    std::string series;
    for (int k = 1; k <= top; ++k) {
      EngineConfig c;
      c.backend = Backend::threaded;
      c.thread_count = k;
      t.push_back(time_likelihood(Engine(c), data4096, x4096, true, 7));
      series += " k=" + std::to_string(k) + ":" + fmt("%.1f", t.back()) + "ms";
    }
    bool decreasing = true;
    for (std::size_t k = 1; k < t.size(); ++k) {
      decreasing = decreasing && t[k] < t[k - 1];
    }
    const double speedup = t.front() / t.back();
    const bool speed_ok = top < 8 || speedup >= 3.0;
    out.push_back({decreasing && speed_ok ? Verdict::pass : Verdict::fail,
                   "(a) threaded likelihood N=4096:" + series + "; speedup " + fmt("%.2f", speedup) + "x" +
                       (top < 8 ? " (3x clause needs 8 cores; host has " + std::to_string(cores) + ")" : "")});
  }

  // (b) truncation share of serial likelihood time.
  const Engine serial(EngineConfig{});
  const double full = time_likelihood(serial, data4096, x4096, true, 7);
  const double ablated = time_likelihood(serial, data4096, x4096, false, 7);
  const double share = (full - ablated) / full;
  out.push_back({share > 0.5 ? Verdict::pass : Verdict::fail,
                 "(b) truncation term is " + fmt("%.1f", 100.0 * share) + "% of serial likelihood time at N=4096 (" +
                     fmt("%.1f", full) + " ms vs " + fmt("%.1f", ablated) + " ms without)"});

  // (c) quadratic growth in N.
  std::vector<double> lx;
  std::vector<double> ly;
  std::string series;
  for (std::size_t n : {512, 1024, 2048, 4096}) {
    const auto x = testing::gaussian_points(n, 6, n);
    const auto data = gaussian_distances(x);
    const double ms = time_likelihood(serial, data, x, true, 7);
    lx.push_back(std::log(static_cast<double>(n)));
    ly.push_back(std::log(ms));
    series += " " + std::to_string(n) + ":" + fmt("%.2f", ms) + "ms";
  }
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / 4.0;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / 4.0;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  const double slope = sxy / sxx;
  out.push_back({slope >= 1.8 && slope <= 2.2 ? Verdict::pass : Verdict::fail,
                 "(c) log-log slope of serial likelihood time vs N = " + fmt("%.3f", slope) + ";" + series});
  return out;
}

// --- effective distance ------------------------------------------------------

Outcome effective_distance_check() {
  const std::vector<TravelEdge> edges = {{0, 1, 0.5},  {1, 2, 0.9}, {2, 3, 0.3},  {3, 0, 0.6},
                                         {0, 2, 0.05}, {2, 0, 0.4}, {1, 3, 0.08}, {3, 1, 0.2}};
  const auto d = effective_distance(TravelNetwork({"A", "B", "C", "D"}, edges));
  // Floyd-Warshall on 1 - log p.
  const double inf = std::numeric_limits<double>::infinity();
  double fw[4][4];
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      fw[i][j] = i == j ? 0.0 : inf;
    }
  }
  for (const auto& e : edges) {
    fw[e.from][e.to] = std::min(fw[e.from][e.to], 1.0 - std::log(e.probability));
  }
  for (int k = 0; k < 4; ++k) {
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        fw[i][j] = std::min(fw[i][j], fw[i][k] + fw[k][j]);
      }
    }
  }
  int exact = 0;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      exact += d.value(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) == 0.5 * (fw[i][j] + fw[j][i]);
    }
  }
  const double one = effective_distance(TravelNetwork({"A", "B"}, {{0, 1, 1.0}, {1, 0, 1.0}})).value(0, 1);
  const double two =
      effective_distance(TravelNetwork({"A", "B"}, {{0, 1, std::exp(-1.0)}, {1, 0, std::exp(-1.0)}})).value(0, 1);
  const bool ok = exact == 16 && one == 1.0 && std::abs(two - 2.0) < 1e-15;
  return {ok ? Verdict::pass : Verdict::fail, std::to_string(exact) + "/16 entries equal the Floyd-Warshall oracle; p=1 -> " +
                                                  fmt("%.17g", one) + ", p=1/e -> " + fmt("%.17g", two)};
}

// --- reproducibility ---------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome reproducibility() {
  const auto dir = work_dir("repro");
  cmd_simulate(config_with({"output.directory=" + (dir / "data").string(), "simulate.n=30"}));
  std::string detail;
  bool ok = true;
  for (const char* backend : {"serial", "threaded_vectorized"}) {
    std::string logs[2];
    for (int run = 0; run < 2; ++run) {
      const auto out = dir / (std::string(backend) + std::to_string(run));
      cmd_fit(config_with({"output.directory=" + out.string(),
                           "data.distances=" + (dir / "data" / "distances.csv").string(),
                           "data.trees=" + (dir / "data" / "tree.nwk").string(), "sampler.iterations=2000",
                           "sampler.warmup=200", "sampler.seed=12345", std::string("engine.backend=") + backend,
                           "engine.threads=3"}));
      logs[run] = slurp(out / "samples.csv") + slurp(out / "x_samples.bin");
    }
    const bool same = !logs[0].empty() && logs[0] == logs[1];
    ok = ok && same;
    detail += std::string(detail.empty() ? "" : "; ") + backend + ": " + (same ? "identical" : "DIFFERENT") + " (" +
              std::to_string(logs[0].size()) + " bytes)";
  }
  return {ok ? Verdict::pass : Verdict::fail, "two runs, same seed: " + detail};
}

const char* label(Verdict v) {
  switch (v) {
    case Verdict::pass:
      return "PASS";
    case Verdict::fail:
      return "FAIL";
    case Verdict::skip:
      return "SKIP";
  }
  return "?";
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    const char* key;
    const char* title;
    std::function<std::vector<Outcome>()> run;
  };
  auto one = [](Outcome (*f)()) { return [f] { return std::vector<Outcome>{f()}; }; };
  const std::vector<Criterion> criteria = {
      {"engine", "engine equivalence", one(engine_equivalence)},
      {"gradient", "gradient correctness", one(gradient_correctness)},
      {"prior", "prior oracle", one(prior_oracle)},
      {"hmc", "HMC validity", one(hmc_validity)},
      {"recovery", "posterior recovery", one(posterior_recovery)},
      {"cv", "dimension selection", one(dimension_selection)},
      {"scaling", "scaling trends", scaling_trends},
      {"effective", "effective distance", one(effective_distance_check)},
      {"repro", "reproducibility", one(reproducibility)},
  };
  std::vector<std::string> wanted(argv + 1, argv + argc);
  int failures = 0;
  for (const auto& c : criteria) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.key) == wanted.end()) {
      continue;
    }
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<Outcome> outcomes;
    try {
      outcomes = c.run();
    } catch (const std::exception& e) {
      outcomes = {{Verdict::fail, std::string("threw: ") + e.what()}};
    }
    const double secs = seconds_since(t0);
    for (const auto& o : outcomes) {
      failures += o.verdict == Verdict::fail ? 1 : 0;
      std::cout << label(o.verdict) << "  " << c.title << ": " << o.detail << "  [" << fmt("%.1f", secs) << " s]"
                << std::endl;
    }
  }
  return failures == 0 ? 0 : 1;
}
