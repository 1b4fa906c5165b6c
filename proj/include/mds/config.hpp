#pragma once

// Run configuration: an INI file of [section] key=value lines. Every key has a
// default (see config_keys()); unknown sections or keys are rejected so that
// typos fail loudly instead of silently using a default.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mds/engine.hpp"
#include "mds/sampler.hpp"
#include "mds/tree.hpp"

namespace mds {

struct ConfigKey {
  const char* name;           // "section.key"
  const char* default_value;
  const char* help;
};

/// All recognised keys in documentation order.
const std::vector<ConfigKey>& config_keys();

struct SimulateSettings {
  std::size_t n = 50;
  std::size_t dim = 2;
  double sigma2 = 1.0;
  double sigma_diag = 1.0;     // Sigma = sigma_diag * I
  double mean_branch = 0.5;
  double missing_fraction = 0.0;
  std::uint64_t seed = 1;
  std::uint64_t tree_seed = 1;
};

struct CvSettings {
  std::size_t folds = 5;
  std::vector<std::size_t> dims;
  std::uint64_t seed = 1;
  int parallel_folds = 1;
  std::string fold_file;
};

/// One benchmark engine: backend plus thread count.
struct BenchmarkEngine {
  Backend backend = Backend::serial;
  int threads = 1;
};

struct BenchmarkSettings {
  std::vector<std::size_t> sizes;
  std::vector<std::size_t> dims;
  std::vector<BenchmarkEngine> engines;
  int repeats = 10;
  std::uint64_t seed = 1;
};

struct RunConfig {
  std::string distances;
  std::string trees;

  std::size_t latent_dim = 2;
  double mu0 = 0.0;
  double tau0 = 10.0;
  double tau_e = 10.0;
  double d0 = 3.0;
  double t0 = 1.0;
  double s0 = 1.0;
  double r0 = 1.0;

  ChainSettings chain;
  std::uint64_t seed = 1;
  double sigma2_init = 1.0;

  EngineConfig engine;
  std::string output_directory = "out";

  SimulateSettings simulate;
  CvSettings cv;
  BenchmarkSettings benchmark;

  /// Every key with its resolved value, as text.
  std::map<std::string, std::string> resolved;

  PriorHyperparams hyperparams() const;
  Eigen::VectorXd mu0_vector() const;

  /// FNV-1a over the resolved key=value lines.
  std::uint64_t hash() const;
};

/// Parses INI text, applies "section.key=value" overrides, then validates.
/// Throws ConfigError with the offending key.
RunConfig parse_config(std::istream& in, const std::vector<std::string>& overrides = {},
                       const std::string& source = "<config>");

/// Reads `path`; relative data paths resolve against the config file's
/// directory. An empty path means all defaults.
RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});

std::uint64_t fnv1a(const std::string& text);

/// Seed, hash, resolved config, defaults and the model conventions.
nlohmann::json config_metadata(const RunConfig& config);

}  // namespace mds
