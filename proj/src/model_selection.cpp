#include "mds/model_selection.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "mds/error.hpp"
#include "mds/normal.hpp"

namespace mds {

ObservationMask FoldPlan::training_mask(std::size_t f, std::size_t n) const {
  ObservationMask mask(n, false);
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    if (fold[p] != f) {
      mask.set(pairs[p].i, pairs[p].j, true);
    }
  }
  return mask;
}

std::vector<ItemPair> FoldPlan::held_out(std::size_t f) const {
  std::vector<ItemPair> out;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    if (fold[p] == f) {
      out.push_back(pairs[p]);
    }
  }
  return out;
}

std::vector<std::size_t> FoldPlan::fold_sizes() const {
  std::vector<std::size_t> sizes(k, 0);
  for (auto f : fold) {
    ++sizes[f];
  }
  return sizes;
}

std::vector<std::size_t> assign_folds(std::size_t count, std::size_t k, std::uint64_t seed) {
  if (k < 2) {
    throw std::invalid_argument("cross-validation needs k >= 2");
  }
  if (count < k) {
    throw std::invalid_argument("fewer observed pairs than folds");
  }
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> fold(count);
  for (std::size_t pos = 0; pos < count; ++pos) {
    fold[order[pos]] = pos % k;
  }
  return fold;
}

FoldPlan make_folds(const DissimilarityData& data, std::size_t k, std::uint64_t seed) {
  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  for (std::size_t i = 1; i < data.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (data.observed(i, j)) {
        plan.pairs.push_back({i, j});
      }
    }
  }
  plan.fold = assign_folds(plan.pairs.size(), k, seed);
  return plan;
}

void write_fold_plan(const FoldPlan& plan, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write fold plan '" + path + "'");
  }
  out << "k,seed\n" << plan.k << ',' << plan.seed << "\ni,j,fold\n";
  for (std::size_t p = 0; p < plan.pairs.size(); ++p) {
    out << plan.pairs[p].i << ',' << plan.pairs[p].j << ',' << plan.fold[p] << '\n';
  }
}

FoldPlan read_fold_plan(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open fold plan '" + path + "'");
  }
  FoldPlan plan;
  std::string line;
  char comma = 0;
  if (!std::getline(in, line) || line != "k,seed" || !std::getline(in, line)) {
    throw IoError("fold plan '" + path + "' has a malformed header");
  }
  {
    std::istringstream header(line);
    if (!(header >> plan.k >> comma >> plan.seed) || comma != ',') {
      throw IoError("fold plan '" + path + "' has a malformed header");
    }
  }
  if (!std::getline(in, line) || line != "i,j,fold") {
    throw IoError("fold plan '" + path + "' is missing the pair header");
  }
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    std::istringstream row(line);
    ItemPair p;
    std::size_t f = 0;
    char c1 = 0;
    char c2 = 0;
    if (!(row >> p.i >> c1 >> p.j >> c2 >> f) || c1 != ',' || c2 != ',' || f >= plan.k || p.i <= p.j) {
      throw IoError("fold plan '" + path + "' has a malformed row: " + line);
    }
    plan.pairs.push_back(p);
    plan.fold.push_back(f);
  }
  return plan;
}

double held_out_log_density(double y, double delta, double sigma2) {
  if (!(sigma2 > 0.0)) {
    throw std::invalid_argument("sigma2 must be positive");
  }
  if (!(y >= 0.0)) {
    throw std::invalid_argument("held-out observation must be non-negative");
  }
  const double residual = y - delta;
  return -0.5 * (kLogTwoPi + std::log(sigma2)) - residual * residual / (2.0 * sigma2) -
         log_phi(delta / std::sqrt(sigma2));
}

double log_mean_exp(const std::vector<double>& values) {
  if (values.empty()) {
    throw std::invalid_argument("log_mean_exp of an empty set");
  }
  const double top = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(top)) {
    return top;
  }
  double sum = 0.0;
  for (double v : values) {
    sum += std::exp(v - top);
  }
  return top + std::log(sum / static_cast<double>(values.size()));
}

std::size_t LpdReport::held_out_count() const {
  return std::accumulate(held_out_per_fold.begin(), held_out_per_fold.end(), std::size_t{0});
}

double LpdReport::per_pair_mean() const {
  const auto count = held_out_count();
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

LpdReport lpd_hat(const FoldPlan& plan, const std::vector<std::vector<PosteriorDraw>>& draws,
                  const DissimilarityData& data) {
  if (draws.size() != plan.k) {
    throw std::invalid_argument("need one set of posterior draws per fold");
  }
  LpdReport report;
  std::vector<double> per_draw;
  for (std::size_t f = 0; f < plan.k; ++f) {
    const auto& fold_draws = draws[f];
    if (fold_draws.empty()) {
      throw std::invalid_argument("fold " + std::to_string(f) + " has no posterior draws");
    }
    double fold_sum = 0.0;
    const auto held = plan.held_out(f);
    for (const auto& pair : held) {
      per_draw.clear();
      for (const auto& draw : fold_draws) {
        per_draw.push_back(
            held_out_log_density(data.value(pair.i, pair.j), draw.x.distance(pair.i, pair.j), draw.sigma2));
      }
      fold_sum += log_mean_exp(per_draw);
    }
    report.per_fold.push_back(fold_sum);
    report.held_out_per_fold.push_back(held.size());
  }
  report.total = std::accumulate(report.per_fold.begin(), report.per_fold.end(), 0.0);
  return report;
}

std::size_t select_dimension(const std::map<std::size_t, double>& per_dimension) {
  if (per_dimension.empty()) {
    throw std::invalid_argument("no candidate dimensions");
  }
  return std::max_element(per_dimension.begin(), per_dimension.end(),
                          [](const auto& a, const auto& b) { return a.second < b.second; })
      ->first;
}

}  // namespace mds
