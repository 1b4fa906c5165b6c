#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "mds/likelihood.hpp"
#include "mds/normal.hpp"

using namespace mds;

namespace {

double brute_force(const DissimilarityData& data, const LatentConfiguration& x, double sigma2) {
  // Straight from the density: sum of log truncated-normal pdfs over i > j.
  const double sigma = std::sqrt(sigma2);
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (!data.observed(i, j)) {
        continue;
      }
      const double d = x.distance(i, j);
      const double z = (data.value(i, j) - d) / sigma;
      total += -0.5 * z * z - 0.5 * std::log(2 * M_PI) - std::log(sigma) - log_phi(d / sigma);
    }
  }
  return total;
}

}  // namespace

TEST_CASE("serial likelihood equals the per-pair density sum") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto x = testing::gaussian_points(30, 3, seed);
    const auto data = testing::noisy_data(testing::gaussian_points(30, 3, seed + 100), 0.5, 0.2, seed);
    for (double s2 : {0.1, 1.0, 7.5}) {
      CHECK(log_likelihood_serial(data, x, MdsParams{s2}) ==
            doctest::Approx(brute_force(data, x, s2)).epsilon(1e-12));
    }
  }
}

TEST_CASE("dropping truncation adds back the truncation sum") {
  const auto x = testing::gaussian_points(25, 2, 3);
  const auto data = testing::noisy_data(x, 0.3, 0.1, 4);
  const MdsParams p{0.8};
  const double with = log_likelihood_serial(data, x, p, true);
  const double without = log_likelihood_serial(data, x, p, false);
  CHECK(without == doctest::Approx(with + truncation_sum_serial(x, p, data.mask())).epsilon(1e-13));
}

TEST_CASE("likelihood is invariant to rigid motions and relabelling") {
  const auto x = testing::gaussian_points(20, 3, 9);
  const auto data = testing::noisy_data(x, 0.2, 0.0, 10);
  const MdsParams p{0.5};
  const double base = log_likelihood_serial(data, x, p);

  SUBCASE("translation") {
    RowMatrix c = x.coords();
    c.rowwise() += Eigen::RowVector3d(3.0, -1.0, 0.5);
    CHECK(log_likelihood_serial(data, LatentConfiguration(c), p) == doctest::Approx(base).epsilon(1e-12));
  }
  SUBCASE("rotation") {
    const Eigen::Matrix3d q = Eigen::AngleAxisd(0.7, Eigen::Vector3d(1, 2, 3).normalized()).toRotationMatrix();
    const RowMatrix c = x.coords() * q;
    CHECK(log_likelihood_serial(data, LatentConfiguration(c), p) == doctest::Approx(base).epsilon(1e-12));
  }
  SUBCASE("permutation") {
    const std::size_t n = x.size();
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) {
      perm[i] = (i * 7 + 3) % n;
    }
    RowMatrix c(x.coords().rows(), x.coords().cols());
    RowMatrix y(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      c.row(static_cast<Eigen::Index>(i)) = x.coords().row(static_cast<Eigen::Index>(perm[i]));
      for (std::size_t j = 0; j < n; ++j) {
        y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = data.value(perm[i], perm[j]);
      }
    }
    const DissimilarityData permuted(y, ObservationMask(n, true));
    CHECK(log_likelihood_serial(permuted, LatentConfiguration(c), p) == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("gradient matches central finite differences") {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const auto x = testing::gaussian_points(12, 3, seed);
    const auto data = testing::noisy_data(testing::gaussian_points(12, 3, seed + 50), 0.4, 0.15, seed);
    const MdsParams p{0.6};
    const auto g = log_likelihood_gradient_serial(data, x, p);
    CHECK(g.coincident_pairs == 0);
    const double h = 1e-5;
    for (Eigen::Index i = 0; i < x.coords().rows(); ++i) {
      for (Eigen::Index k = 0; k < x.coords().cols(); ++k) {
        RowMatrix up = x.coords();
        RowMatrix dn = x.coords();
        up(i, k) += h;
        dn(i, k) -= h;
        const double fd = (log_likelihood_serial(data, LatentConfiguration(up), p) -
                           log_likelihood_serial(data, LatentConfiguration(dn), p)) /
                          (2 * h);
        CHECK(g.values(i, k) == doctest::Approx(fd).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("coincident points contribute nothing and are counted") {
  RowMatrix c(3, 2);
  c << 0, 0, 0, 0, 1, 1;
  const LatentConfiguration x(c);
  RowMatrix y(3, 3);
  y << 0, 0.5, 1, 0.5, 0, 1, 1, 1, 0;
  const DissimilarityData data(y, ObservationMask(3, true));
  const auto g = log_likelihood_gradient_serial(data, x, MdsParams{1.0});
  CHECK(g.coincident_pairs == 2);  // (0,1) seen from both rows
  CHECK(g.values.allFinite());
}

TEST_CASE("unobserved pairs do not enter") {
  const auto x = testing::gaussian_points(6, 2, 1);
  auto data = testing::noisy_data(x, 0.1, 0.0, 2);
  ObservationMask mask = data.mask();
  mask.set(4, 1, false);
  RowMatrix y = data.values();
  y(4, 1) = y(1, 4) = 1e6;
  const DissimilarityData a(data.values(), mask);
  const DissimilarityData b(y, mask);
  CHECK(log_likelihood_serial(a, x, MdsParams{1.0}) == log_likelihood_serial(b, x, MdsParams{1.0}));
}

TEST_CASE("input validation") {
  RowMatrix y(2, 2);
  y << 0, 1, 2, 0;
  CHECK_THROWS_AS(DissimilarityData(y, ObservationMask(2, true)), std::invalid_argument);
  y << 0, -1, -1, 0;
  CHECK_THROWS_AS(DissimilarityData(y, ObservationMask(2, true)), std::invalid_argument);
  y << 0, 1, 1, 0;
  const DissimilarityData data(y, ObservationMask(2, true));
  CHECK_THROWS(log_likelihood_serial(data, testing::gaussian_points(3, 2, 1), MdsParams{1.0}));
  CHECK_THROWS(log_likelihood_serial(data, testing::gaussian_points(2, 2, 1), MdsParams{0.0}));
}
