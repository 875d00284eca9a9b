#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "gpca/beta_approx.hpp"

using namespace gpca;
using namespace gpca::beta;

namespace {

const double kGrid[] = {0.5, 1.0, 2.0, 5.0};

double logit(double v) { return std::log(v) - std::log1p(-v); }

}  // namespace

TEST_CASE("beta_pdf closed forms") {
  CHECK(beta_pdf(0.3, {1, 1}) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(beta_pdf(0.5, {2, 2}) == doctest::Approx(1.5).epsilon(1e-14));
  CHECK_THROWS_AS(beta_pdf(0.0, {2, 2}), DomainError);
  CHECK_THROWS_AS(beta_pdf(1.0, {2, 2}), DomainError);
  CHECK_THROWS_AS(beta_pdf(0.5, {0.0, 2}), DomainError);
}

TEST_CASE("beta_pdf reflection symmetry") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> unit(1e-6, 1.0 - 1e-6);
  std::uniform_real_distribution<double> par(0.1, 20.0);
  for (int i = 0; i < 500; ++i) {
    const double x = unit(rng);
    const double a = par(rng);
    const double b = par(rng);
    REQUIRE(beta_pdf(x, {a, b}) == doctest::Approx(beta_pdf(1.0 - x, {b, a})).epsilon(1e-10));
  }
}

TEST_CASE("beta_pdf integrates to one on the grid") {
  for (double a : kGrid) {
    for (double b : kGrid) {
      const UnitIntervalDensity p(ApproxKind::TrueBeta, BetaSpec{a, b});
      // logit domain: integrand p(v) v (1 - v)
      QuadratureSpec spec{-INFINITY, INFINITY, 1e-11, 4000};
      const double mass = integrate(
                              [&](double u) { return std::exp(p.log_pdf_at_logit(u) + log_sigmoid(u) + log_sigmoid(-u)); },
                              spec)
                              .value;
      INFO(a << "," << b);
      CHECK(std::abs(mass - 1.0) < 1e-8);
    }
  }
}

TEST_CASE("match_moments closed forms") {
  const GaussSpec uniform = match_moments({1, 1});
  CHECK(uniform.mu == 0.0);
  CHECK(std::abs(uniform.sigma2 - 3.2898681336964524) < 1e-13);
  const GaussSpec skew = match_moments({2, 1});
  CHECK(std::abs(skew.mu - 1.0) < 1e-13);
  CHECK(std::abs(skew.sigma2 - 2.2898681336964524) < 1e-13);
  CHECK_THROWS_AS(match_moments({-1, 1}), DomainError);
}

TEST_CASE("sigmoid_gaussian_pdf") {
  CHECK(std::abs(sigmoid_gaussian_pdf(0.5, {0, 1}) - 1.5957691216057308) < 1e-14);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> unit(1e-4, 1.0 - 1e-4);
  for (int i = 0; i < 200; ++i) {
    const double v = unit(rng);
    REQUIRE(sigmoid_gaussian_pdf(v, {0, 2.5}) == doctest::Approx(sigmoid_gaussian_pdf(1.0 - v, {0, 2.5})).epsilon(1e-9));
  }
  CHECK_THROWS_AS(sigmoid_gaussian_pdf(0.0, {0, 1}), DomainError);
  CHECK_THROWS_AS(sigmoid_gaussian_pdf(1.0, {0, 1}), DomainError);
  CHECK_THROWS_AS(sigmoid_gaussian_pdf(0.5, {0, 0}), DomainError);
}

TEST_CASE("sigmoid_gaussian_pdf normalization over random parameters") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> mu(-5.0, 5.0);
  std::uniform_real_distribution<double> log_s2(std::log(0.01), std::log(25.0));
  for (int i = 0; i < 50; ++i) {
    const GaussSpec g{mu(rng), std::exp(log_s2(rng))};
    // v-domain integral, split where the spike lives so no panel straddles it
    const double sd = std::sqrt(g.sigma2);
    std::vector<double> cuts{0.0};
    for (int k = -12; k <= 12; ++k) {
      const double v = sigmoid(g.mu + k * sd);
      if (v > cuts.back() && v < 1.0) cuts.push_back(v);
    }
    cuts.push_back(1.0);
    double mass = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
      mass += integrate([&](double v) { return v > 0.0 && v < 1.0 ? sigmoid_gaussian_pdf(v, g) : 0.0; },
                        QuadratureSpec{cuts[i], cuts[i + 1], 1e-11, 20000})
                  .value;
    }
    INFO(g.mu << " " << g.sigma2);
    REQUIRE(std::abs(mass - 1.0) < 1e-6);
  }
}

TEST_CASE("sample_sigmoid_gaussian") {
  const auto degenerate = sample_sigmoid_gaussian(GaussSpec{2.0, 0.0}, std::uint64_t{1}, 3);
  for (double v : degenerate) {
    CHECK(v == sigmoid(2.0));
  }
  CHECK(std::abs(degenerate[0] - 0.8807970779778823) < 1e-15);

  const auto a = sample_sigmoid_gaussian(GaussSpec{0.5, 2.0}, std::uint64_t{99}, 1000);
  const auto b = sample_sigmoid_gaussian(GaussSpec{0.5, 2.0}, std::uint64_t{99}, 1000);
  CHECK(a == b);

  const std::size_t n = 1000000;
  const auto s = sample_sigmoid_gaussian(GaussSpec{0.5, 2.0}, std::uint64_t{2024}, n);
  double mean = 0.0;
  for (double v : s) {
    REQUIRE(v > 0.0);
    REQUIRE(v < 1.0);
    mean += logit(v);
  }
  mean /= static_cast<double>(n);
  CHECK(std::abs(mean - 0.5) < 3.0 * std::sqrt(2.0 / static_cast<double>(n)));

  const auto wide = sample_sigmoid_gaussian(GaussSpec{0.0, 1e6}, std::uint64_t{3}, 10000);
  for (double v : wide) {
    REQUIRE(v > 0.0);
    REQUIRE(v < 1.0);
  }
}

TEST_CASE("build_approximation parameters") {
  const auto g = build_approximation({2, 2}, ApproxKind::GaussianApprox);
  CHECK(std::get<GaussSpec>(g.params()).mu == doctest::Approx(0.5));
  CHECK(std::get<GaussSpec>(g.params()).sigma2 == doctest::Approx(0.05));

  const auto l = build_approximation({2, 2}, ApproxKind::LaplaceApprox);
  CHECK(std::get<GaussSpec>(l.params()).mu == 0.5);
  CHECK(std::get<GaussSpec>(l.params()).sigma2 == doctest::Approx(0.125));

  const auto s = build_approximation({5, 1}, ApproxKind::SigmoidGaussian);
  CHECK(std::abs(std::get<GaussSpec>(s.params()).mu - (1.0 + 0.5 + 1.0 / 3 + 0.25)) < 1e-13);

  const auto c = build_approximation({2, 1}, ApproxKind::ConcreteApprox);
  CHECK(std::get<ConcreteSpec>(c.params()).location == doctest::Approx(std::log(2.0)));
  CHECK(std::get<ConcreteSpec>(c.params()).temperature == 1.0);

  CHECK_THROWS_AS(build_approximation({1, 2}, ApproxKind::LaplaceApprox), LaplaceUndefinedError);
  CHECK_THROWS_AS(build_approximation({0.5, 5}, ApproxKind::LaplaceApprox), LaplaceUndefinedError);
}

TEST_CASE("densities integrate to one on (0,1); real-line kinds report leaked mass") {
  for (double a : kGrid) {
    for (double b : kGrid) {
      for (ApproxKind kind : {ApproxKind::SigmoidGaussian, ApproxKind::ConcreteApprox, ApproxKind::GaussianApprox,
                              ApproxKind::LaplaceApprox}) {
        if (kind == ApproxKind::LaplaceApprox && !(a > 1 && b > 1)) {
          continue;
        }
        const auto q = build_approximation({a, b}, kind);
        const double mass = integrate(
                                [&](double u) {
                                  return std::exp(q.log_pdf_at_logit(u) + log_sigmoid(u) + log_sigmoid(-u));
                                },
                                QuadratureSpec{-INFINITY, INFINITY, 1e-11, 4000})
                                .value;
        INFO(a << "," << b << " " << to_string(kind));
        CHECK(std::abs(mass + q.leaked_mass() - 1.0) < 1e-8);
        CHECK(q.leaked_mass() >= 0.0);
      }
    }
  }
}

TEST_CASE("concrete at temperature one is exactly uniform for alpha = beta") {
  const auto c = build_approximation({1, 1}, ApproxKind::ConcreteApprox);
  for (double v : {0.01, 0.3, 0.5, 0.77, 0.999}) {
    CHECK(c.pdf(v) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("kl_divergence") {
  const BetaSpec p{2, 2};
  const auto self = build_approximation(p, ApproxKind::TrueBeta);
  CHECK(std::abs(kl_divergence(self, p, 1e-10).raw) < 1e-8);

  // mpmath oracle, 25 digits
  const auto s = kl_divergence(build_approximation(p, ApproxKind::SigmoidGaussian), p, 1e-10);
  CHECK(std::abs(s.value - 0.0035553585398901298) < 1e-8);
  const auto g = kl_divergence(build_approximation(p, ApproxKind::GaussianApprox), p, 1e-10);
  CHECK(std::abs(g.value - 0.021749322352827749) < 1e-8);
  CHECK(s.value < g.value);
  CHECK(build_approximation(p, ApproxKind::GaussianApprox).leaked_mass() ==
        doctest::Approx(0.025347318677468264).epsilon(1e-10));

  for (double a : kGrid) {
    for (double b : kGrid) {
      for (ApproxKind kind : {ApproxKind::SigmoidGaussian, ApproxKind::ConcreteApprox, ApproxKind::GaussianApprox}) {
        const auto r = kl_divergence(build_approximation({a, b}, kind), {a, b}, 1e-9);
        REQUIRE(r.raw >= -1e-8);
        REQUIRE(r.value >= 0.0);
      }
    }
  }
}

TEST_CASE("comparison rows") {
  const ComparisonRow bell = compare_approximations({2, 2}, 1e-9);
  CHECK(bell.laplace_defined());
  CHECK(bell.sigmoid_gaussian_is_best());

  const ComparisonRow u = compare_approximations({0.5, 0.5}, 1e-9);
  CHECK_FALSE(u.laplace_defined());
  CHECK(std::isnan(u.leaked_mass_laplace));
  CHECK(u.sigmoid_gaussian_is_best());

  // The temperature-one concrete reproduces the uniform target exactly.
  const ComparisonRow flat = compare_approximations({1, 1}, 1e-9);
  CHECK(flat.kl_concrete < 1e-8);
  CHECK_FALSE(flat.sigmoid_gaussian_is_best());
}
