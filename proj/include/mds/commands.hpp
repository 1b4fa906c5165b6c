#pragma once

// Command implementations behind the mdsctl tool. Each writes its artifacts
// under config.output_directory and returns the in-memory result so tests can
// inspect it without re-reading files.

#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mds/config.hpp"
#include "mds/io.hpp"
#include "mds/model_selection.hpp"
#include "mds/sampler.hpp"
#include "mds/tree.hpp"

namespace mds {

/// y ~ N(delta, sigma2) restricted to y > 0, by rejection. sigma2 == 0 returns
/// delta exactly. Throws NumericError if 1000 proposals are all rejected.
double draw_truncated_distance(double delta, double sigma2, std::mt19937_64& rng);

struct SimulatedDataset {
  DissimilarityData data;
  LatentConfiguration truth;
  Phylogeny tree;
  Eigen::MatrixXd sigma_mat;
  double sigma2 = 0.0;
};

/// Random tree, Brownian tips along it, then truncated-normal distances.
SimulatedDataset simulate_dataset(const RunConfig& config);

/// Torgerson scaling with unobserved entries imputed by the observed mean.
LatentConfiguration classical_mds(const DissimilarityData& data, std::size_t dim);

/// Trees named by data.trees, or none.
std::vector<Phylogeny> load_trees(const RunConfig& config);

/// One chain in `dim` dimensions from the classical-scaling start.
ChainLog fit_chain(const DissimilarityData& data, const std::vector<Phylogeny>& trees, const RunConfig& config,
                   std::size_t dim, std::uint64_t seed);

struct Quantiles {
  double mean = 0.0;
  double q05 = 0.0;
  double q50 = 0.0;
  double q95 = 0.0;
};

/// Linear-interpolation quantiles.
Quantiles summarize(std::vector<double> values);

/// distances.csv, truth_x.csv, tree.nwk, metadata.json.
SimulatedDataset cmd_simulate(const RunConfig& config);

/// samples.csv, x_samples.bin, summary.csv, locations.csv, metadata.json.
ChainLog cmd_fit(const RunConfig& config);

struct CvOutcome {
  std::map<std::size_t, LpdReport> reports;
  std::map<std::size_t, double> per_dimension;
  std::size_t selected = 0;
  FoldPlan plan;
};

/// folds.csv (unless cv.fold_file points elsewhere), cv_report.csv,
/// cv_summary.txt.
CvOutcome cmd_cv(const RunConfig& config);

struct BenchmarkRow {
  std::size_t n = 0;
  std::size_t dim = 0;
  Backend backend = Backend::serial;
  int threads = 1;
  int lane_width = 1;
  int host_cores = 1;
  std::string status = "ok";  // or the capability error
  // Wall time per evaluation in milliseconds.
  double likelihood_mean = 0.0;
  double likelihood_sd = 0.0;
  double gradient_mean = 0.0;
  double gradient_sd = 0.0;
  double no_truncation_mean = 0.0;
  double no_truncation_sd = 0.0;
  double likelihood_speedup = 0.0;
  double gradient_speedup = 0.0;
  double no_truncation_speedup = 0.0;
};

/// Times one (N, D, engine) cell on standard-normal points.
BenchmarkRow benchmark_cell(std::size_t n, std::size_t dim, const EngineConfig& engine, int repeats,
                            std::uint64_t seed);

/// benchmark.csv; speedups are relative to the serial engine at the same N, D.
std::vector<BenchmarkRow> cmd_benchmark(const RunConfig& config);

void write_benchmark_csv(const std::vector<BenchmarkRow>& rows, std::ostream& out);

/// Reads the network (and optional node,group file), writes the distance CSV.
DissimilarityData cmd_effective_distance(const std::string& network_path, const std::string& groups_path,
                                         GroupAggregation how, const std::string& out_path);

}  // namespace mds
