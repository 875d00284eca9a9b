#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <random>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "gpca/numerics.hpp"
#include "gpca/oracles.hpp"

using namespace gpca;

TEST_CASE("digamma known values") {
  CHECK(std::abs(digamma(1.0) - -0.5772156649015329) < 1e-14);
  CHECK(std::abs(digamma(0.5) - -1.9635100260214235) < 1e-14);
  CHECK(std::abs(digamma(2.0) - (digamma(1.0) + 1.0)) < 1e-14);
}

TEST_CASE("trigamma known values") {
  CHECK(std::abs(trigamma(1.0) - 1.6449340668482264) < 1e-14);
  CHECK(std::abs(trigamma(0.5) - 4.934802200544679) < 1e-13);
  CHECK(std::abs(trigamma(2.0) - (trigamma(1.0) - 1.0)) < 1e-14);
}

TEST_CASE("digamma and trigamma recurrences on random arguments") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(1e-3, 100.0);
  for (int i = 0; i < 10000; ++i) {
    const double x = u(rng);
    REQUIRE(std::abs(digamma(x + 1.0) - digamma(x) - 1.0 / x) < 1e-12);
    // trigamma grows like 1/x^2 near zero; the bound is relative there
    REQUIRE(std::abs(trigamma(x + 1.0) - trigamma(x) + 1.0 / (x * x)) < 1e-12 * std::max(1.0, trigamma(x)));
  }
}

TEST_CASE("special functions against boost over (0, 1e6]") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> log_x(std::log(0.01), std::log(1e6));
  for (int i = 0; i < 2000; ++i) {
    const double x = std::exp(log_x(rng));
    REQUIRE(std::abs(digamma(x) - boost::math::digamma(x)) < 1e-12);
    REQUIRE(std::abs(trigamma(x) - boost::math::trigamma(x)) < 1e-12 * std::max(1.0, trigamma(x)));
    REQUIRE(std::abs(log_gamma(x) - std::lgamma(x)) < 1e-12 * std::max(1.0, std::abs(std::lgamma(x))));
  }
}

TEST_CASE("special function domain errors") {
  CHECK_THROWS_AS(digamma(0.0), DomainError);
  CHECK_THROWS_AS(digamma(-1.0), DomainError);
  CHECK_THROWS_AS(digamma(std::numeric_limits<double>::infinity()), DomainError);
  CHECK_THROWS_AS(digamma(std::nan("")), DomainError);
  CHECK_THROWS_AS(trigamma(0.0), DomainError);
  CHECK_THROWS_AS(log_gamma(-2.0), DomainError);
}

TEST_CASE("sigmoid") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(std::abs(sigmoid(-3.7) - (1.0 - sigmoid(3.7))) < 1e-15);
  const double s50 = sigmoid(50.0);
  CHECK(1.0 - s50 < 1e-20);
  CHECK(s50 <= 1.0);
  CHECK(std::isfinite(sigmoid(-700.0)));
  CHECK(sigmoid(-700.0) >= 0.0);
  CHECK(sigmoid(700.0) == 1.0);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-40.0, 40.0);
  double prev_x = -50.0;
  double prev = sigmoid(prev_x);
  for (int i = 0; i < 5000; ++i) {
    const double x = u(rng);
    REQUIRE(std::abs(sigmoid(x) + sigmoid(-x) - 1.0) <= 1e-15);
  }
  for (double x = -49.0; x <= 50.0; x += 0.5) {
    REQUIRE(sigmoid(x) >= prev);
    prev = sigmoid(x);
  }
  CHECK(std::abs(log_sigmoid(-800.0) - -800.0) < 1e-12);
  CHECK(std::abs(log_sigmoid(2.0) - std::log(sigmoid(2.0))) < 1e-15);
}

TEST_CASE("standard normal cdf") {
  CHECK(std_normal_cdf(0.0) == 0.5);
  CHECK(std::abs(std_normal_cdf(1.959963985) - 0.975) < 1e-9);
  // slope matching of the probit approximation at zero
  const double lambda = std::sqrt(8.0 / kPi);
  CHECK(std::abs(std_normal_pdf(0.0) - 0.25 * lambda) < 1e-15);
  CHECK(std::abs(std_normal_pdf(0.0) - 1.0 / std::sqrt(2.0 * kPi)) < 1e-15);
}

TEST_CASE("spd_solve small systems") {
  const Vector b = (Vector(3) << 1, 2, 3).finished();
  CHECK((spd_solve(Matrix::Identity(3, 3), b) - b).norm() == 0.0);
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 2;
  d(1, 1) = 4;
  const Vector x = spd_solve(d, Vector((Vector(2) << 2, 4).finished()));
  CHECK(x[0] == doctest::Approx(1.0));
  CHECK(x[1] == doctest::Approx(1.0));
}

TEST_CASE("spd_solve matches Gaussian elimination on a random 8x8 system") {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix g(8, 8);
  for (Index i = 0; i < 8; ++i)
    for (Index j = 0; j < 8; ++j) g(i, j) = n(rng);
  const Matrix a = g.transpose() * g + Matrix::Identity(8, 8);
  Vector b(8);
  for (Index i = 0; i < 8; ++i) b[i] = n(rng);

  oracle::Dense dense(8, std::vector<double>(8));
  std::vector<double> rhs(8);
  for (Index i = 0; i < 8; ++i) {
    rhs[static_cast<std::size_t>(i)] = b[i];
    for (Index j = 0; j < 8; ++j) dense[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = a(i, j);
  }
  const auto expected = oracle::gaussian_elimination(dense, rhs);
  const Vector x = spd_solve(a, b);
  for (Index i = 0; i < 8; ++i) {
    CHECK(std::abs(x[i] - expected[static_cast<std::size_t>(i)]) < 1e-10);
  }
}

TEST_CASE("spd_solve residual bound up to 512x512") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (Index size : {2, 17, 64, 200, 512}) {
    Matrix g(size, size);
    for (Index i = 0; i < size; ++i)
      for (Index j = 0; j < size; ++j) g(i, j) = n(rng);
    const Matrix a = g.transpose() * g + Matrix::Identity(size, size);
    Matrix b(size, 3);
    for (Index i = 0; i < size; ++i)
      for (Index j = 0; j < 3; ++j) b(i, j) = n(rng);
    const Matrix x = spd_solve(a, b);
    const double residual = (a * x - b).cwiseAbs().maxCoeff() / b.cwiseAbs().maxCoeff();
    INFO("size = " << size);
    CHECK(residual < 1e-10);
  }
}

TEST_CASE("spd_solve rejects non-SPD input") {
  Matrix a(2, 2);
  a << 1, 2, 2, 1;  // indefinite
  CHECK_THROWS_AS(spd_solve(a, Vector(Vector::Ones(2))), NotSpdError);
  Matrix asym(2, 2);
  asym << 2, 1, 0, 2;
  CHECK_THROWS_AS(spd_solve(asym, Vector(Vector::Ones(2))), NotSpdError);
  CHECK_THROWS_AS(spd_solve(Matrix::Identity(2, 3), Vector(Vector::Ones(2))), NotSpdError);
}

TEST_CASE("integrate basics") {
  QuadratureSpec spec{0.0, 1.0, 1e-12, 200};
  CHECK(integrate([](double) { return 1.0; }, spec).value == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::abs(integrate([](double x) { return x * x; }, spec).value - 1.0 / 3.0) < 1e-10);

  QuadratureSpec normal{-8.0, 8.0, 1e-11, 500};
  const double mass = integrate([](double x) { return std_normal_pdf(x); }, normal).value;
  // erf oracle: 1 - 2 Phi(-8)
  CHECK(std::abs(mass - std::erf(8.0 / std::sqrt(2.0))) < 1e-10);
  CHECK(std::abs(mass - 1.0) < 1e-9);
}

TEST_CASE("integrate is exact on polynomials within the rule's degree") {
  const QuadratureSpec spec{-0.3, 1.7, 1e-9, 50};
  for (int degree = 0; degree <= 22; ++degree) {
    auto f = [degree](double x) { return std::pow(x, degree); };
    const double exact = (std::pow(1.7, degree + 1) - std::pow(-0.3, degree + 1)) / (degree + 1);
    const auto r = integrate(f, spec);
    INFO("degree " << degree);
    CHECK(std::abs(r.value - exact) < 1e-12 * std::max(1.0, std::abs(exact)));
  }
}

TEST_CASE("integrate handles endpoint singularities and infinite ranges") {
  QuadratureSpec spec{0.0, 1.0, 1e-10, 2000};
  const auto r = integrate([](double x) { return 1.0 / std::sqrt(x); }, spec);
  CHECK(std::abs(r.value - 2.0) < 1e-8);

  QuadratureSpec inf{-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(), 1e-12,
                     2000};
  CHECK(std::abs(integrate([](double x) { return std_normal_pdf(x); }, inf).value - 1.0) < 1e-11);
  QuadratureSpec half{0.0, std::numeric_limits<double>::infinity(), 1e-12, 2000};
  CHECK(std::abs(integrate([](double x) { return std::exp(-x); }, half).value - 1.0) < 1e-11);
  QuadratureSpec lower{-std::numeric_limits<double>::infinity(), 0.0, 1e-12, 2000};
  CHECK(std::abs(integrate([](double x) { return std::exp(x); }, lower).value - 1.0) < 1e-11);
}

TEST_CASE("integrate errors") {
  CHECK_THROWS_AS(integrate([](double) { return 1.0; }, QuadratureSpec{1.0, 0.0, 1e-8, 10}), DomainError);
  CHECK_THROWS_AS(integrate([](double) { return 1.0; }, QuadratureSpec{0.0, 1.0, 0.0, 10}), DomainError);
  // 1/x on (0, 1] diverges: the budget runs out
  CHECK_THROWS_AS(integrate([](double x) { return 1.0 / x; }, QuadratureSpec{0.0, 1.0, 1e-10, 30}),
                  NonConvergenceError);
}
