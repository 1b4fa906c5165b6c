#include <doctest.h>

#include <cmath>
#include <limits>

#include "mds/likelihood.hpp"
#include "mds/normal.hpp"

using namespace mds;

// Reference values from 50-digit mpmath.
TEST_CASE("log_phi matches high-precision values across the range") {
  struct Case {
    double x;
    double expected;
  };
  const Case cases[] = {
      {0.0, -0.69314718055994531},     {1.0, -0.17275377902344989},   {-1.0, -1.8410216450092635},
      {2.0, -0.023012909328963488},    {-5.0, -15.064998393988726},   {-20.0, -203.91715537109726},
      {-30.0, -454.32124395634320},    {-37.5, -707.66898931750719},  {-38.0, -726.55721601882013},
      {5.0, -2.8665161296376359e-7},   {8.0, -6.2209605742717861e-16}, {-1.5, -2.7059444008238898},
      {-0.5, -1.1759117615936186},     {0.3, -0.48141016158848121},   {-10.0, -53.231285150512471},
      {-25.0, -316.63940800802026},
  };
  for (const auto& c : cases) {
    CAPTURE(c.x);
    CHECK(std::abs(log_phi(c.x) - c.expected) <= 1e-13 * std::abs(c.expected));
  }
}

TEST_CASE("log_phi is finite and monotone deep in the lower tail") {
  double prev = -std::numeric_limits<double>::infinity();
  for (double x = -200.0; x <= 10.0; x += 0.25) {
    const double v = log_phi(x);
    REQUIRE(std::isfinite(v));
    CHECK(v > prev);
    prev = v;
  }
}

TEST_CASE("inverse Mills ratio") {
  CHECK(inverse_mills(1.0) == doctest::Approx(0.28759997093917836).epsilon(1e-14));
  CHECK(inverse_mills(0.0) == doctest::Approx(kSqrtTwoOverPi).epsilon(1e-14));
  // Asymptotically phi/Phi ~ -x for x -> -inf.
  CHECK(inverse_mills(-40.0) == doctest::Approx(40.024968847207264).epsilon(1e-13));
  CHECK(std::isfinite(inverse_mills(-500.0)));
}

TEST_CASE("inverse Mills ratio equals the derivative of log_phi") {
  for (double x : {-30.0, -8.0, -2.5, -1.0, -0.2, 0.0, 0.7, 3.0}) {
    const double h = 1e-5;
    const double fd = (log_phi(x + h) - log_phi(x - h)) / (2 * h);
    CAPTURE(x);
    CHECK(inverse_mills(x) == doctest::Approx(fd).epsilon(1e-7));
  }
}

TEST_CASE("pair term") {
  CHECK(pair_term(2.0, 1.0, 4.0) == doctest::Approx(-0.24394641528865639).epsilon(1e-14));
  CHECK_THROWS_AS(pair_term(1.0, 1.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(pair_term(1.0, -1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(pair_term(std::nan(""), 1.0, 1.0), std::invalid_argument);
}

TEST_CASE("two-item log-likelihood") {
  // y = 1 with coincident points: -log(2 pi)/2 - 1/2 - log(1/2).
  RowMatrix y(2, 2);
  y << 0, 1, 1, 0;
  const DissimilarityData data(y, ObservationMask(2, true));
  const LatentConfiguration x(RowMatrix::Zero(2, 2));
  CHECK(log_likelihood_serial(data, x, MdsParams{1.0}) == doctest::Approx(-0.72579135264472743).epsilon(1e-14));
  CHECK(truncation_sum_serial(x, MdsParams{1.0}, data.mask()) == doctest::Approx(-0.69314718055994531));
}

TEST_CASE("two-item gradient") {
  RowMatrix y(2, 2);
  y << 0, 1, 1, 0;
  const DissimilarityData data(y, ObservationMask(2, true));
  RowMatrix c(2, 2);
  c << 0, 0, 1, 0;
  const auto g = log_likelihood_gradient_serial(data, LatentConfiguration(c), MdsParams{1.0}).values;
  CHECK(g(0, 0) == doctest::Approx(0.28759997093917836).epsilon(1e-14));
  CHECK(g(0, 1) == 0.0);
  CHECK(g(1, 0) == -g(0, 0));
}
