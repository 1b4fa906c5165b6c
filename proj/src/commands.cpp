#include "mds/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>

#include <omp.h>

#include "mds/error.hpp"

namespace mds {

namespace fs = std::filesystem;

namespace {

constexpr int kMaxRejections = 1000;

fs::path output_dir(const RunConfig& config) {
  fs::path dir(config.output_directory);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
  }
  return dir;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write '" + path.string() + "'");
  }
  return out;
}

void write_json(const nlohmann::json& j, const fs::path& path) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

DissimilarityData load_distances(const RunConfig& config) {
  if (config.distances.empty()) {
    throw ConfigError("data.distances is required (set it in the config or with --set data.distances=PATH)");
  }
  return read_distance_csv(config.distances);
}

std::vector<TreeLayout> mixture_for(const std::vector<Phylogeny>& trees, const DissimilarityData& data) {
  std::vector<TreeLayout> mixture;
  for (std::size_t k = 0; k < trees.size(); ++k) {
    try {
      mixture.push_back(TreeLayout::from_labels({trees[k]}, data.labels()));
    } catch (const std::invalid_argument& e) {
      throw ConfigError("tree " + std::to_string(k + 1) + " does not match the distance labels: " + e.what());
    }
  }
  return mixture;
}

double sample_mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) {
    return 0.0;
  }
  const double m = sample_mean(v);
  double ss = 0.0;
  for (double x : v) {
    ss += (x - m) * (x - m);
  }
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

double draw_truncated_distance(double delta, double sigma2, std::mt19937_64& rng) {
  if (!(delta >= 0.0) || !(sigma2 >= 0.0)) {
    throw std::invalid_argument("need delta >= 0 and sigma2 >= 0");
  }
  if (sigma2 == 0.0) {
    return delta;
  }
  std::normal_distribution<double> noise(delta, std::sqrt(sigma2));
  for (int attempt = 0; attempt < kMaxRejections; ++attempt) {
    const double y = noise(rng);
    if (y > 0.0) {
      return y;
    }
  }
  throw NumericError("truncated-normal rejection sampler stalled");
}

SimulatedDataset simulate_dataset(const RunConfig& config) {
  const auto& s = config.simulate;
  // Separate streams so a fixed tree seed gives the same tree for any data seed.
  std::seed_seq tree_seq{s.tree_seed, std::uint64_t{1}};
  std::seed_seq data_seq{s.seed, std::uint64_t{2}};
  std::mt19937_64 tree_rng(tree_seq);
  std::mt19937_64 rng(data_seq);
  SimulatedDataset out;
  out.tree = random_tree(s.n, s.mean_branch, tree_rng, "t");
  const auto d = static_cast<Eigen::Index>(s.dim);
  out.sigma_mat = s.sigma_diag * Eigen::MatrixXd::Identity(d, d);
  out.sigma2 = s.sigma2;
  const DiffusionParams dp{out.sigma_mat, Eigen::VectorXd::Constant(d, config.mu0), config.tau0, config.tau_e};
  out.truth = simulate_brownian_tips(out.tree, dp, rng);

  const auto n = s.n;
  RowMatrix values = RowMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  ObservationMask mask(n, true);
  std::bernoulli_distribution missing(s.missing_fraction);
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      const double y = draw_truncated_distance(out.truth.distance(i, j), s.sigma2, rng);
      values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = y;
      values(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = y;
      if (s.missing_fraction > 0.0 && missing(rng)) {
        mask.set(i, j, false);
      }
    }
  }
  out.data = DissimilarityData(std::move(values), std::move(mask), out.tree.tip_labels());
  return out;
}

LatentConfiguration classical_mds(const DissimilarityData& data, std::size_t dim) {
  const auto n = static_cast<Eigen::Index>(data.size());
  double observed_sum = 0.0;
  std::size_t observed = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) {
      if (data.observed(i, j)) {
        observed_sum += data.value(i, j);
        ++observed;
      }
    }
  }
  const double fill = observed == 0 ? 1.0 : observed_sum / static_cast<double>(observed);
  Eigen::MatrixXd sq(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double v = i == j ? 0.0 : (data.observed(i, j) ? data.value(i, j) : fill);
      sq(i, j) = v * v;
    }
  }
  const Eigen::VectorXd row_mean = sq.rowwise().mean();
  const double grand = sq.mean();
  Eigen::MatrixXd b = sq;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      b(i, j) = -0.5 * (sq(i, j) - row_mean(i) - row_mean(j) + grand);
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(b);
  if (eig.info() != Eigen::Success) {
    throw NumericError("classical scaling eigen-decomposition failed");
  }
  RowMatrix coords = RowMatrix::Zero(n, static_cast<Eigen::Index>(dim));
  for (std::size_t k = 0; k < dim && static_cast<Eigen::Index>(k) < n; ++k) {
    const Eigen::Index col = n - 1 - static_cast<Eigen::Index>(k);  // eigenvalues ascend
    const double scale = std::sqrt(std::max(eig.eigenvalues()(col), 0.0));
    Eigen::VectorXd v = eig.eigenvectors().col(col);
    // Fix the sign so the start does not depend on the solver's choice.
    Eigen::Index top = 0;
    v.cwiseAbs().maxCoeff(&top);
    if (v(top) < 0.0) {
      v = -v;
    }
    coords.col(static_cast<Eigen::Index>(k)) = scale * v;
  }
  return LatentConfiguration(std::move(coords));
}

std::vector<Phylogeny> load_trees(const RunConfig& config) {
  if (config.trees.empty()) {
    return {};
  }
  return read_newick_file(config.trees);
}

ChainLog fit_chain(const DissimilarityData& data, const std::vector<Phylogeny>& trees, const RunConfig& config,
                   std::size_t dim, std::uint64_t seed) {
  RunConfig local = config;
  local.latent_dim = dim;
  if (config.resolved.count("model.d0") != 0 && config.resolved.at("model.d0").empty()) {
    local.d0 = static_cast<double>(dim) + 1.0;
  }
  const Engine engine(config.engine);
  const PosteriorModel model(data, engine, mixture_for(trees, data), local.mu0_vector(), local.tau0, local.tau_e,
                             local.hyperparams());
  SamplerState state;
  state.x = classical_mds(data, dim);
  state.sigma2 = config.sigma2_init;
  state.sigma_mat = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  state.tree_index = 0;
  state.rng.seed(seed);
  return run_chain(state, config.chain, model);
}

Quantiles summarize(std::vector<double> values) {
  if (values.empty()) {
    throw std::invalid_argument("no values to summarize");
  }
  std::sort(values.begin(), values.end());
  auto q = [&](double p) {
    const double pos = p * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  return {sample_mean(values), q(0.05), q(0.5), q(0.95)};
}

SimulatedDataset cmd_simulate(const RunConfig& config) {
  const auto dir = output_dir(config);
  auto sim = simulate_dataset(config);
  write_distance_csv(sim.data, (dir / "distances.csv").string());
  write_latent_csv(sim.truth, sim.data.labels(), (dir / "truth_x.csv").string());
  {
    auto out = open_out(dir / "tree.nwk");
    out << to_newick(sim.tree) << '\n';
  }
  auto meta = config_metadata(config);
  meta["command"] = "simulate";
  meta["seed"] = config.simulate.seed;
  meta["truth"] = {{"n", config.simulate.n},
                   {"dim", config.simulate.dim},
                   {"sigma2", sim.sigma2},
                   {"sigma_diag", config.simulate.sigma_diag},
                   {"trace_sigma", sim.sigma_mat.trace()},
                   {"observed_pairs", sim.data.observed_pairs()}};
  write_json(meta, dir / "metadata.json");
  return sim;
}

ChainLog cmd_fit(const RunConfig& config) {
  const auto data = load_distances(config);
  const auto trees = load_trees(config);
  const auto dir = output_dir(config);
  auto log = fit_chain(data, trees, config, config.latent_dim, config.seed);

  write_sample_log(log, (dir / "samples.csv").string());
  write_snapshots(log, (dir / "x_samples.bin").string());

  std::vector<double> sigma2;
  std::vector<double> trace;
  for (const auto& r : log.records) {
    sigma2.push_back(r.sigma2);
    trace.push_back(r.sigma_mat.trace());
  }
  {
    auto out = open_out(dir / "summary.csv");
    out << "parameter,mean,q05,q50,q95\n";
    auto row = [&](const char* name, const Quantiles& q) {
      out << name << ',' << format_real(q.mean) << ',' << format_real(q.q05) << ',' << format_real(q.q50) << ','
          << format_real(q.q95) << '\n';
    };
    if (!log.records.empty()) {
      row("sigma2", summarize(sigma2));
      row("trace_sigma", summarize(trace));
    }
  }
  {
    auto out = open_out(dir / "locations.csv");
    out << "label,coordinate,mean,sd,q05,q95\n";
    for (std::size_t i = 0; i < data.size() && !log.snapshots.empty(); ++i) {
      for (std::size_t k = 0; k < config.latent_dim; ++k) {
        std::vector<double> v;
        for (const auto& s : log.snapshots) {
          v.push_back(s.coords()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)));
        }
        const auto q = summarize(v);
        out << (data.labels().empty() ? "item" + std::to_string(i) : data.labels()[i]) << ',' << (k + 1) << ','
            << format_real(q.mean) << ',' << format_real(sample_sd(v)) << ',' << format_real(q.q05) << ','
            << format_real(q.q95) << '\n';
      }
    }
  }

  auto meta = config_metadata(config);
  meta["command"] = "fit";
  meta["items"] = data.size();
  meta["observed_pairs"] = data.observed_pairs();
  meta["trees"] = trees.size();
  meta["kept_samples"] = log.records.size();
  meta["adapted_step_size"] = log.step_size;
  nlohmann::json rates;
  for (int b = 0; b < 4; ++b) {
    rates[to_string(static_cast<Block>(b))] = {{"attempts", log.counts[b].attempts},
                                               {"accepts", log.counts[b].accepts}};
  }
  meta["acceptance"] = rates;
  write_json(meta, dir / "metadata.json");
  return log;
}

CvOutcome cmd_cv(const RunConfig& config) {
  const auto data = load_distances(config);
  const auto trees = load_trees(config);
  const auto dir = output_dir(config);
  const auto& cv = config.cv;

  CvOutcome outcome;
  const fs::path fold_path = cv.fold_file.empty() ? dir / "folds.csv" : fs::path(cv.fold_file);
  if (fs::exists(fold_path)) {
    outcome.plan = read_fold_plan(fold_path.string());
    const auto fresh = make_folds(data, outcome.plan.k, outcome.plan.seed);
    if (outcome.plan.pairs != fresh.pairs) {
      throw ConfigError("fold plan '" + fold_path.string() + "' does not match the observed pairs of the data");
    }
    if (outcome.plan.k != cv.folds) {
      throw ConfigError("fold plan '" + fold_path.string() + "' has k=" + std::to_string(outcome.plan.k) +
                        " but cv.folds=" + std::to_string(cv.folds));
    }
  } else {
    outcome.plan = make_folds(data, cv.folds, cv.seed);
    write_fold_plan(outcome.plan, fold_path.string());
  }
  const auto& plan = outcome.plan;

  const std::size_t jobs = cv.dims.size() * plan.k;
  std::vector<std::vector<PosteriorDraw>> draws(jobs);
  std::vector<std::exception_ptr> failures(jobs);
#pragma omp parallel for schedule(dynamic) num_threads(cv.parallel_folds)
  for (std::size_t job = 0; job < jobs; ++job) {
    const auto dim = cv.dims[job / plan.k];
    const auto f = job % plan.k;
    try {
      const auto training = data.with_mask(plan.training_mask(f, data.size()));
      const auto log = fit_chain(training, trees, config, dim, config.seed + f);
      for (std::size_t s = 0; s < log.snapshots.size(); ++s) {
        draws[job].push_back({log.snapshots[s], log.records[s].sigma2});
      }
    } catch (...) {
      failures[job] = std::current_exception();
    }
  }
  for (const auto& e : failures) {
    if (e) {
      std::rethrow_exception(e);
    }
  }

  auto report_out = open_out(dir / "cv_report.csv");
  report_out << "dim,fold,held_out,lpd\n";
  for (std::size_t di = 0; di < cv.dims.size(); ++di) {
    const auto dim = cv.dims[di];
    std::vector<std::vector<PosteriorDraw>> per_fold(draws.begin() + static_cast<std::ptrdiff_t>(di * plan.k),
                                                     draws.begin() + static_cast<std::ptrdiff_t>((di + 1) * plan.k));
    auto report = lpd_hat(plan, per_fold, data);
    for (std::size_t f = 0; f < plan.k; ++f) {
      report_out << dim << ',' << f << ',' << report.held_out_per_fold[f] << ',' << format_real(report.per_fold[f])
                 << '\n';
    }
    report_out << dim << ",all," << report.held_out_count() << ',' << format_real(report.total) << '\n';
    outcome.per_dimension[dim] = report.total;
    outcome.reports[dim] = std::move(report);
  }
  outcome.selected = select_dimension(outcome.per_dimension);
  for (auto& [dim, report] : outcome.reports) {
    report.per_dimension = outcome.per_dimension;
  }

  auto summary = open_out(dir / "cv_summary.txt");
  summary << plan.k << "-fold cross-validation, fold seed " << plan.seed << "\n";
  for (const auto& [dim, total] : outcome.per_dimension) {
    const auto& r = outcome.reports.at(dim);
    summary << "D=" << dim << "  lpd=" << format_real(total) << "  per held-out pair=" << format_real(r.per_pair_mean())
            << '\n';
  }
  summary << "selected D=" << outcome.selected << '\n';
  return outcome;
}

BenchmarkRow benchmark_cell(std::size_t n, std::size_t dim, const EngineConfig& engine_config, int repeats,
                            std::uint64_t seed) {
  BenchmarkRow row;
  row.n = n;
  row.dim = dim;
  row.backend = engine_config.backend;
  row.threads = engine_config.thread_count;
  row.lane_width = engine_config.backend == Backend::vectorized || engine_config.backend == Backend::threaded_vectorized
                       ? engine_config.lane_width
                       : 1;
  row.host_cores = std::max(1, omp_get_num_procs());
  std::optional<Engine> engine;
  try {
    engine.emplace(engine_config);
  } catch (const CapabilityError& e) {
    row.status = std::string("unavailable: ") + e.what();
    return row;
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  RowMatrix coords(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < coords.size(); ++i) {
    coords.data()[i] = z(rng);
  }
  const LatentConfiguration x(std::move(coords));
  RowMatrix y = RowMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = i == j ? 0.0 : x.distance(i, j);
    }
  }
  const DissimilarityData data(std::move(y), ObservationMask(n, true));
  const MdsParams params{1.0};

  volatile double sink = 0.0;
  auto time = [&](auto&& fn) {
    fn();  // warm caches and threads
    std::vector<double> ms;
    for (int r = 0; r < repeats; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      fn();
      ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    return std::pair{sample_mean(ms), sample_sd(ms)};
  };
  std::tie(row.likelihood_mean, row.likelihood_sd) = time([&] { sink = engine->log_likelihood(data, x, params); });
  std::tie(row.gradient_mean, row.gradient_sd) =
      time([&] { sink = engine->gradient(data, x, params).values(0, 0); });
  std::tie(row.no_truncation_mean, row.no_truncation_sd) =
      time([&] { sink = engine->log_likelihood(data, x, params, false); });
  (void)sink;
  return row;
}

std::vector<BenchmarkRow> cmd_benchmark(const RunConfig& config) {
  const auto& b = config.benchmark;
  std::vector<BenchmarkRow> rows;
  for (auto n : b.sizes) {
    for (auto dim : b.dims) {
      std::optional<BenchmarkRow> serial;
      std::vector<BenchmarkRow> cell;
      for (const auto& e : b.engines) {
        EngineConfig ec = config.engine;
        ec.backend = e.backend;
        ec.thread_count = e.threads;
        cell.push_back(benchmark_cell(n, dim, ec, b.repeats, b.seed));
        if (e.backend == Backend::serial && !serial) {
          serial = cell.back();
        }
      }
      if (!serial) {
        EngineConfig ec = config.engine;
        ec.backend = Backend::serial;
        ec.thread_count = 1;
        serial = benchmark_cell(n, dim, ec, b.repeats, b.seed);
      }
      for (auto& row : cell) {
        if (row.status == "ok") {
          row.likelihood_speedup = serial->likelihood_mean / row.likelihood_mean;
          row.gradient_speedup = serial->gradient_mean / row.gradient_mean;
          row.no_truncation_speedup = serial->no_truncation_mean / row.no_truncation_mean;
        }
        rows.push_back(row);
      }
    }
  }
  const auto dir = output_dir(config);
  auto out = open_out(dir / "benchmark.csv");
  write_benchmark_csv(rows, out);
  return rows;
}

void write_benchmark_csv(const std::vector<BenchmarkRow>& rows, std::ostream& out) {
  out << "n,dim,backend,threads,lane_width,host_cores,status,likelihood_ms,likelihood_sd_ms,gradient_ms,"
         "gradient_sd_ms,no_truncation_ms,no_truncation_sd_ms,likelihood_speedup,gradient_speedup,"
         "no_truncation_speedup\n";
  for (const auto& r : rows) {
    out << r.n << ',' << r.dim << ',' << to_string(r.backend) << ',' << r.threads << ',' << r.lane_width << ','
        << r.host_cores << ',' << r.status << ',' << r.likelihood_mean << ',' << r.likelihood_sd << ','
        << r.gradient_mean << ',' << r.gradient_sd << ',' << r.no_truncation_mean << ',' << r.no_truncation_sd << ','
        << r.likelihood_speedup << ',' << r.gradient_speedup << ',' << r.no_truncation_speedup << '\n';
  }
}

DissimilarityData cmd_effective_distance(const std::string& network_path, const std::string& groups_path,
                                         GroupAggregation how, const std::string& out_path) {
  const auto network = read_travel_network(network_path);
  DissimilarityData d;
  try {
    d = effective_distance(network);
  } catch (const std::invalid_argument& e) {
    throw NumericError(e.what());
  }
  if (!groups_path.empty()) {
    d = aggregate_by_group(d, read_group_file(groups_path, network.nodes()), how);
  }
  write_distance_csv(d, out_path);
  return d;
}

}  // namespace mds
