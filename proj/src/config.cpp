#include "mds/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <omp.h>

#include "mds/error.hpp"

namespace mds {

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"data.distances", "", "distance matrix CSV"},
      {"data.trees", "", "Newick file, one tree per line; each line is a mixture component"},
      {"model.latent_dim", "2", "latent dimension D"},
      {"model.mu0", "0", "prior root mean, same value in every dimension"},
      {"model.tau0", "10", "root variance scale"},
      {"model.tau_e", "10", "prior variance scale of items missing from the trees"},
      {"model.d0", "", "Wishart degrees of freedom; empty means D + 1"},
      {"model.t0", "1", "Wishart rate matrix T0 = t0 * I"},
      {"model.s0", "1", "Gamma shape of 1/sigma2"},
      {"model.r0", "1", "Gamma rate of 1/sigma2"},
      {"sampler.iterations", "1000", "post-warmup iterations"},
      {"sampler.thinning", "10", "keep every k-th iteration"},
      {"sampler.warmup", "500", "adaptation iterations, discarded"},
      {"sampler.seed", "1", "chain seed"},
      {"sampler.step_size", "0.01", "initial leapfrog step size"},
      {"sampler.leapfrog_steps", "10", "leapfrog steps per trajectory"},
      {"sampler.adapt_step_size", "true", "dual averaging during warmup"},
      {"sampler.adapt_mass", "true", "diagonal mass from warmup variances"},
      {"sampler.target_accept", "0.65", "dual-averaging target acceptance"},
      {"sampler.step_jitter", "0.1", "each HMC step size is drawn from step_size * U(1 - j, 1 + j)"},
      {"sampler.sigma2_init", "1", "initial sigma2"},
      {"sampler.sigma2_proposal_sd", "0.1", "random-walk sd on log sigma2"},
      {"sampler.weight_x", "0.8", "scan weight of the X block"},
      {"sampler.weight_sigma2", "0.1", "scan weight of the sigma2 block"},
      {"sampler.weight_sigma", "0.05", "scan weight of the Sigma block"},
      {"sampler.weight_tree", "0.05", "scan weight of the tree block"},
      {"engine.backend", "serial", "serial, vectorized, threaded, threaded_vectorized or tiled_device"},
      {"engine.threads", "1", "worker threads; 0 means all cores"},
      {"engine.lane_width", "4", "packet width 1, 2, 4 or 8"},
      {"engine.tile_b", "16", "likelihood tile edge"},
      {"engine.tile_b_gradient", "128", "gradient tile width"},
      {"engine.device", "emulated", "emulated or accelerator"},
      {"output.directory", "out", "where artifacts are written"},
      {"simulate.n", "50", "items"},
      {"simulate.dim", "2", "latent dimension of the truth"},
      {"simulate.sigma2", "1", "observation variance; 0 gives exact distances"},
      {"simulate.sigma_diag", "1", "true Sigma = sigma_diag * I"},
      {"simulate.mean_branch", "0.5", "mean branch length of the random tree"},
      {"simulate.missing_fraction", "0", "fraction of pairs left unobserved"},
      {"simulate.seed", "1", "seed of X and the distances"},
      {"simulate.tree_seed", "", "seed of the random tree; empty means simulate.seed"},
      {"cv.folds", "5", "number of folds"},
      {"cv.dims", "2,3,4", "candidate latent dimensions"},
      {"cv.seed", "1", "fold assignment seed"},
      {"cv.parallel_folds", "1", "fold fits run concurrently"},
      {"cv.fold_file", "", "fold plan sidecar; reused when it exists"},
      {"benchmark.sizes", "256,1024", "item counts N"},
      {"benchmark.dims", "2,6", "latent dimensions"},
      {"benchmark.engines", "serial,vectorized,threaded,threaded_vectorized,tiled_device",
       "backend[:threads] list; threads default to all cores"},
      {"benchmark.repeats", "10", "timed evaluations per cell"},
      {"benchmark.seed", "1", "seed of the synthetic points"},
  };
  return keys;
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) {
    return {};
  }
  return s.substr(first, s.find_last_not_of(" \t\r") - first + 1);
}

class Reader {
 public:
  explicit Reader(const std::map<std::string, std::string>& values) : values_(values) {}

  const std::string& text(const std::string& key) const { return values_.at(key); }

  double real(const std::string& key) const {
    const auto& s = text(key);
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v)) {
      throw ConfigError(key + ": expected a number, got '" + s + "'");
    }
    return v;
  }

  std::uint64_t count(const std::string& key) const {
    const auto& s = text(key);
    std::uint64_t v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
      throw ConfigError(key + ": expected a non-negative integer, got '" + s + "'");
    }
    return v;
  }

  bool flag(const std::string& key) const {
    const auto& s = text(key);
    if (s == "true" || s == "1" || s == "yes" || s == "on") {
      return true;
    }
    if (s == "false" || s == "0" || s == "no" || s == "off") {
      return false;
    }
    throw ConfigError(key + ": expected true or false, got '" + s + "'");
  }

  std::vector<std::string> list(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(text(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) {
        out.push_back(item);
      }
    }
    return out;
  }

  std::vector<std::size_t> counts(const std::string& key) const {
    std::vector<std::size_t> out;
    for (const auto& item : list(key)) {
      std::size_t v = 0;
      const auto r = std::from_chars(item.data(), item.data() + item.size(), v);
      if (r.ec != std::errc() || r.ptr != item.data() + item.size()) {
        throw ConfigError(key + ": '" + item + "' is not a non-negative integer");
      }
      out.push_back(v);
    }
    return out;
  }

 private:
  const std::map<std::string, std::string>& values_;
};

int host_threads() { return std::max(1, omp_get_num_procs()); }

void require(bool ok, const std::string& message) {
  if (!ok) {
    throw ConfigError(message);
  }
}

DeviceTarget parse_device(const std::string& s) {
  if (s == "emulated") {
    return DeviceTarget::emulated;
  }
  if (s == "accelerator") {
    return DeviceTarget::accelerator;
  }
  throw ConfigError("engine.device: expected emulated or accelerator, got '" + s + "'");
}

RunConfig build(const std::map<std::string, std::string>& values) {
  Reader r(values);
  RunConfig c;
  c.resolved = values;
  c.distances = r.text("data.distances");
  c.trees = r.text("data.trees");

  c.latent_dim = r.count("model.latent_dim");
  require(c.latent_dim >= 1, "model.latent_dim must be >= 1");
  c.mu0 = r.real("model.mu0");
  c.tau0 = r.real("model.tau0");
  c.tau_e = r.real("model.tau_e");
  require(c.tau0 > 0.0, "model.tau0 must be positive");
  require(c.tau_e > 0.0, "model.tau_e must be positive");
  c.d0 = r.text("model.d0").empty() ? static_cast<double>(c.latent_dim) + 1.0 : r.real("model.d0");
  c.t0 = r.real("model.t0");
  c.s0 = r.real("model.s0");
  c.r0 = r.real("model.r0");
  require(c.d0 > static_cast<double>(c.latent_dim) - 1.0, "model.d0 must exceed latent_dim - 1");
  require(c.t0 > 0.0, "model.t0 must be positive");
  require(c.s0 > 0.0 && c.r0 > 0.0, "model.s0 and model.r0 must be positive");

  auto& ch = c.chain;
  ch.iterations = r.count("sampler.iterations");
  require(ch.iterations >= 1, "sampler.iterations must be >= 1");
  ch.thinning = r.count("sampler.thinning");
  require(ch.thinning >= 1, "sampler.thinning must be >= 1");
  ch.warmup = r.count("sampler.warmup");
  c.seed = r.count("sampler.seed");
  ch.hmc.step_size = r.real("sampler.step_size");
  require(ch.hmc.step_size > 0.0, "sampler.step_size must be positive");
  const auto steps = r.count("sampler.leapfrog_steps");
  require(steps >= 1 && steps <= 10000, "sampler.leapfrog_steps must be in [1, 10000]");
  ch.hmc.leapfrog_steps = static_cast<int>(steps);
  ch.adapt_step_size = r.flag("sampler.adapt_step_size");
  ch.adapt_mass = r.flag("sampler.adapt_mass");
  ch.target_accept = r.real("sampler.target_accept");
  require(ch.target_accept > 0.0 && ch.target_accept < 1.0, "sampler.target_accept must be in (0, 1)");
  ch.step_jitter = r.real("sampler.step_jitter");
  require(ch.step_jitter >= 0.0 && ch.step_jitter < 1.0, "sampler.step_jitter must be in [0, 1)");
  c.sigma2_init = r.real("sampler.sigma2_init");
  require(c.sigma2_init > 0.0, "sampler.sigma2_init must be positive");
  ch.sigma2_proposal_sd = r.real("sampler.sigma2_proposal_sd");
  require(ch.sigma2_proposal_sd > 0.0, "sampler.sigma2_proposal_sd must be positive");
  ch.weights = {r.real("sampler.weight_x"), r.real("sampler.weight_sigma2"), r.real("sampler.weight_sigma"),
                r.real("sampler.weight_tree")};
  const auto& w = ch.weights;
  require(w.x >= 0.0 && w.sigma2 >= 0.0 && w.sigma_mat >= 0.0 && w.tree >= 0.0, "scan weights must be >= 0");
  require(w.x + w.sigma2 + w.sigma_mat + w.tree > 0.0, "at least one sampler.weight_* must be positive");

  c.engine.backend = parse_backend(r.text("engine.backend"));
  const auto threads = r.count("engine.threads");
  c.engine.thread_count = threads == 0 ? host_threads() : static_cast<int>(threads);
  c.engine.lane_width = static_cast<int>(r.count("engine.lane_width"));
  c.engine.likelihood_tile = static_cast<int>(r.count("engine.tile_b"));
  c.engine.gradient_tile = static_cast<int>(r.count("engine.tile_b_gradient"));
  c.engine.device = parse_device(r.text("engine.device"));
  c.engine.validate();

  c.output_directory = r.text("output.directory");
  require(!c.output_directory.empty(), "output.directory must not be empty");

  auto& s = c.simulate;
  s.n = r.count("simulate.n");
  require(s.n >= 2, "simulate.n must be >= 2");
  s.dim = r.count("simulate.dim");
  require(s.dim >= 1, "simulate.dim must be >= 1");
  s.sigma2 = r.real("simulate.sigma2");
  require(s.sigma2 >= 0.0, "simulate.sigma2 must be >= 0");
  s.sigma_diag = r.real("simulate.sigma_diag");
  require(s.sigma_diag > 0.0, "simulate.sigma_diag must be positive");
  s.mean_branch = r.real("simulate.mean_branch");
  require(s.mean_branch > 0.0, "simulate.mean_branch must be positive");
  s.missing_fraction = r.real("simulate.missing_fraction");
  require(s.missing_fraction >= 0.0 && s.missing_fraction < 1.0, "simulate.missing_fraction must be in [0, 1)");
  s.seed = r.count("simulate.seed");
  s.tree_seed = r.text("simulate.tree_seed").empty() ? s.seed : r.count("simulate.tree_seed");

  auto& cv = c.cv;
  cv.folds = r.count("cv.folds");
  require(cv.folds >= 2, "cv.folds must be >= 2");
  cv.dims = r.counts("cv.dims");
  require(!cv.dims.empty(), "cv.dims must list at least one dimension");
  for (auto d : cv.dims) {
    require(d >= 1, "cv.dims entries must be >= 1");
  }
  cv.seed = r.count("cv.seed");
  cv.parallel_folds = static_cast<int>(r.count("cv.parallel_folds"));
  require(cv.parallel_folds >= 1, "cv.parallel_folds must be >= 1");
  cv.fold_file = r.text("cv.fold_file");

  auto& b = c.benchmark;
  b.sizes = r.counts("benchmark.sizes");
  require(!b.sizes.empty(), "benchmark.sizes must not be empty");
  for (auto n : b.sizes) {
    require(n >= 2, "benchmark.sizes entries must be >= 2");
  }
  b.dims = r.counts("benchmark.dims");
  require(!b.dims.empty(), "benchmark.dims must not be empty");
  for (const auto& item : r.list("benchmark.engines")) {
    BenchmarkEngine e;
    const auto colon = item.find(':');
    e.backend = parse_backend(item.substr(0, colon));
    e.threads = e.backend == Backend::serial || e.backend == Backend::vectorized ? 1 : host_threads();
    if (colon != std::string::npos) {
      const auto t = item.substr(colon + 1);
      const auto res = std::from_chars(t.data(), t.data() + t.size(), e.threads);
      require(res.ec == std::errc() && res.ptr == t.data() + t.size() && e.threads >= 1,
              "benchmark.engines: bad thread count in '" + item + "'");
    }
    b.engines.push_back(e);
  }
  require(!b.engines.empty(), "benchmark.engines must not be empty");
  b.repeats = static_cast<int>(r.count("benchmark.repeats"));
  require(b.repeats >= 1, "benchmark.repeats must be >= 1");
  b.seed = r.count("benchmark.seed");
  return c;
}

void assign(std::map<std::string, std::string>& values, const std::string& key, const std::string& value,
            const std::string& where) {
  const auto it = values.find(key);
  if (it == values.end()) {
    throw ConfigError(where + ": unknown key '" + key + "'");
  }
  it->second = trim(value);
}

}  // namespace

PriorHyperparams RunConfig::hyperparams() const {
  const auto d = static_cast<Eigen::Index>(latent_dim);
  return PriorHyperparams{d0, t0 * Eigen::MatrixXd::Identity(d, d), s0, r0};
}

Eigen::VectorXd RunConfig::mu0_vector() const {
  return Eigen::VectorXd::Constant(static_cast<Eigen::Index>(latent_dim), mu0);
}

std::uint64_t RunConfig::hash() const {
  std::string text;
  for (const auto& [k, v] : resolved) {
    text += k + "=" + v + "\n";
  }
  return fnv1a(text);
}

RunConfig parse_config(std::istream& in, const std::vector<std::string>& overrides, const std::string& source) {
  std::map<std::string, std::string> values;
  for (const auto& key : config_keys()) {
    values[key.name] = key.default_value;
  }
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(source + ": " + e.message() + " at line " + std::to_string(e.line()));
  }
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError(source + ": key '" + section + "' must sit inside a [section]");
    }
    for (const auto& [key, value] : body) {
      assign(values, section + "." + key, value.data(), source);
    }
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("override '" + o + "' is not section.key=value");
    }
    assign(values, trim(o.substr(0, eq)), o.substr(eq + 1), "override");
  }
  return build(values);
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  if (path.empty()) {
    std::istringstream empty;
    return parse_config(empty, overrides, "<defaults>");
  }
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open config '" + path + "'");
  }
  RunConfig c = parse_config(in, overrides, path);
  const auto base = std::filesystem::path(path).parent_path();
  auto rebase = [&](std::string& p, const char* key) {
    if (!p.empty() && std::filesystem::path(p).is_relative()) {
      p = (base / p).lexically_normal().string();
      c.resolved[key] = p;
    }
  };
  rebase(c.distances, "data.distances");
  rebase(c.trees, "data.trees");
  return c;
}

nlohmann::json config_metadata(const RunConfig& config) {
  nlohmann::json meta;
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config.hash()));
  meta["config_hash_fnv1a"] = hash;
  meta["seed"] = config.seed;
  meta["config"] = config.resolved;
  nlohmann::json defaults;
  for (const auto& key : config_keys()) {
    defaults[key.name] = key.default_value;
  }
  meta["defaults"] = defaults;
  meta["resolved_hyperparameters"] = {{"mu0", config.mu0}, {"tau0", config.tau0}, {"tau_e", config.tau_e},
                                      {"d0", config.d0},   {"T0", "t0 * I"},       {"t0", config.t0},
                                      {"s0", config.s0},   {"r0", config.r0}};
  meta["engine"] = {{"backend", std::string(to_string(config.engine.backend))},
                    {"threads", config.engine.thread_count},
                    {"lane_width", config.engine.lane_width},
                    {"tile_b", config.engine.likelihood_tile},
                    {"tile_b_gradient", config.engine.gradient_tile},
                    {"host_cores", host_threads()}};
  meta["conventions"] = {
      {"likelihood", "y_ij ~ N(delta_ij, sigma2) truncated to y > 0"},
      {"wishart", "Sigma^-1 ~ Wishart(d0, T0) with T0 a rate matrix: E[Sigma^-1] = d0 T0^-1"},
      {"sigma2_prior", "1/sigma2 ~ Gamma(shape s0, rate r0)"},
      {"tree_prior", "X ~ MN(1 mu0^T, V_G, Sigma), V_G = tau0 J + tree covariance; unsequenced items tau_e"},
      {"tree_update", "mixture component drawn from its full conditional"},
      {"scan_weights", {{"x", config.chain.weights.x},
                        {"sigma2", config.chain.weights.sigma2},
                        {"sigma", config.chain.weights.sigma_mat},
                        {"tree", config.chain.weights.tree}}}};
  return meta;
}

}  // namespace mds
