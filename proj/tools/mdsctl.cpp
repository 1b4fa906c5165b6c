// mdsctl: simulate, fit, cv, benchmark, effective-distance.
//
// Exit codes: 0 ok, 1 other failure, 2 config, 3 I/O, 4 numeric, 5 capability.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mds/commands.hpp"
#include "mds/error.hpp"

namespace {

struct CommonOptions {
  std::string config;
  std::vector<std::string> overrides;
  std::string output;
  std::string seed;
  std::string backend;
  std::string threads;
  const char* seed_key = "sampler.seed";
};

void add_common(CLI::App* cmd, CommonOptions& o, const char* seed_key) {
  o.seed_key = seed_key;
  cmd->add_option("-c,--config", o.config, "INI run configuration");
  cmd->add_option("-s,--set", o.overrides, "override a key: section.key=value (repeatable)");
  cmd->add_option("-o,--output", o.output, "output directory (output.directory)");
  cmd->add_option("--seed", o.seed, std::string("seed (") + seed_key + ")");
  cmd->add_option("--backend", o.backend, "engine backend (engine.backend)");
  cmd->add_option("--threads", o.threads, "engine threads (engine.threads)");
}

mds::RunConfig resolve(const CommonOptions& o, std::vector<std::string> extra = {}) {
  auto overrides = o.overrides;
  auto put = [&](const char* key, const std::string& v) {
    if (!v.empty()) {
      overrides.push_back(std::string(key) + "=" + v);
    }
  };
  put("output.directory", o.output);
  put(o.seed_key, o.seed);
  put("engine.backend", o.backend);
  put("engine.threads", o.threads);
  overrides.insert(overrides.end(), extra.begin(), extra.end());
  return mds::load_config(o.config, overrides);
}

int run(int argc, char** argv) {
  CLI::App app{"Bayesian multidimensional scaling with a phylogenetic prior"};
  app.require_subcommand(1);

  CommonOptions sim_opts, fit_opts, cv_opts, bench_opts;
  auto* sim = app.add_subcommand("simulate", "simulate a dataset along a random tree");
  add_common(sim, sim_opts, "simulate.seed");
  auto* fit = app.add_subcommand("fit", "run one MCMC chain");
  add_common(fit, fit_opts, "sampler.seed");
  auto* cv = app.add_subcommand("cv", "cross-validate candidate latent dimensions");
  add_common(cv, cv_opts, "sampler.seed");
  std::string dims;
  std::string folds;
  cv->add_option("--dims", dims, "candidate dimensions, e.g. 2,3,4 (cv.dims)");
  cv->add_option("--folds", folds, "number of folds (cv.folds)");
  auto* bench = app.add_subcommand("benchmark", "time likelihood and gradient engines");
  add_common(bench, bench_opts, "benchmark.seed");

  auto* eff = app.add_subcommand("effective-distance", "distances from a travel network");
  std::string network, groups, out, aggregate = "min";
  eff->add_option("network", network, "CSV with from,to,probability")->required();
  eff->add_option("--groups", groups, "CSV with node,group rows");
  eff->add_option("--aggregate", aggregate, "group aggregation")->check(CLI::IsMember({"min", "mean"}));
  eff->add_option("--out", out, "output distance CSV")->required();

  CLI11_PARSE(app, argc, argv);

  if (sim->parsed()) {
    const auto config = resolve(sim_opts);
    const auto result = mds::cmd_simulate(config);
    std::cout << "simulated " << result.data.size() << " items, " << result.data.observed_pairs()
              << " observed pairs -> " << config.output_directory << "\n";
  } else if (fit->parsed()) {
    const auto config = resolve(fit_opts);
    const auto log = mds::cmd_fit(config);
    std::cout << "kept " << log.records.size() << " samples; step size " << log.step_size << "; X acceptance "
              << log.counts[0].rate() << " -> " << config.output_directory << "\n";
  } else if (cv->parsed()) {
    std::vector<std::string> extra;
    if (!dims.empty()) {
      extra.push_back("cv.dims=" + dims);
    }
    if (!folds.empty()) {
      extra.push_back("cv.folds=" + folds);
    }
    const auto config = resolve(cv_opts, extra);
    const auto outcome = mds::cmd_cv(config);
    for (const auto& [d, total] : outcome.per_dimension) {
      std::cout << "D=" << d << " lpd=" << total << "\n";
    }
    std::cout << "selected D=" << outcome.selected << "\n";
  } else if (bench->parsed()) {
    const auto config = resolve(bench_opts);
    mds::write_benchmark_csv(mds::cmd_benchmark(config), std::cout);
  } else if (eff->parsed()) {
    const auto how = aggregate == "mean" ? mds::GroupAggregation::mean : mds::GroupAggregation::minimum;
    const auto d = mds::cmd_effective_distance(network, groups, how, out);
    std::cout << "wrote " << d.size() << " x " << d.size() << " distances to " << out << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const mds::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const mds::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 3;
  } catch (const mds::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const mds::ChainError& e) {
    std::cerr << "numeric error at iteration " << e.iteration() << ": " << e.what() << "\n";
    return 4;
  } catch (const mds::CapabilityError& e) {
    std::cerr << "capability error: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
