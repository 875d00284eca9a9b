#include "gpca/beta_approx.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gpca::beta {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double normal_log_pdf(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (std::log(2.0 * kPi * var) + d * d / var);
}

double logistic_log_pdf(double x, double location, double scale) {
  const double z = (x - location) / scale;
  // -z - log(s) - 2 log(1 + e^-z), written symmetric in z
  return -std::abs(z) - std::log(scale) - 2.0 * std::log1p(std::exp(-std::abs(z)));
}

bool is_real_line(ApproxKind kind) {
  return kind == ApproxKind::GaussianApprox || kind == ApproxKind::LaplaceApprox;
}

}  // namespace

std::string_view to_string(ApproxKind kind) {
  switch (kind) {
    case ApproxKind::TrueBeta:
      return "true_beta";
    case ApproxKind::SigmoidGaussian:
      return "sigmoid_gaussian";
    case ApproxKind::GaussianApprox:
      return "gaussian";
    case ApproxKind::LaplaceApprox:
      return "laplace";
    case ApproxKind::ConcreteApprox:
      return "concrete";
  }
  return "unknown";
}

void validate(const BetaSpec& spec) {
  if (!(spec.alpha > 0.0) || !(spec.beta > 0.0) || !std::isfinite(spec.alpha) ||
      !std::isfinite(spec.beta)) {
    throw DomainError("beta parameters must be positive and finite");
  }
}

void validate(const GaussSpec& spec) {
  if (!std::isfinite(spec.mu) || !std::isfinite(spec.sigma2) || spec.sigma2 < 0.0) {
    throw DomainError("gaussian parameters must be finite with sigma2 >= 0");
  }
}

double log_beta_function(double alpha, double beta) {
  return log_gamma(alpha) + log_gamma(beta) - log_gamma(alpha + beta);
}

double beta_log_pdf(double x, const BetaSpec& spec) {
  validate(spec);
  if (!(x > 0.0 && x < 1.0)) {
    throw DomainError("beta_pdf: x must lie in (0, 1)");
  }
  return (spec.alpha - 1.0) * std::log(x) + (spec.beta - 1.0) * std::log1p(-x) -
         log_beta_function(spec.alpha, spec.beta);
}

double beta_pdf(double x, const BetaSpec& spec) { return std::exp(beta_log_pdf(x, spec)); }

GaussSpec match_moments(const BetaSpec& spec) {
  validate(spec);
  return {digamma(spec.alpha) - digamma(spec.beta), trigamma(spec.alpha) + trigamma(spec.beta)};
}

double sigmoid_gaussian_pdf(double v, const GaussSpec& spec) {
  validate(spec);
  if (!(spec.sigma2 > 0.0)) {
    throw DomainError("sigmoid_gaussian_pdf: sigma2 must be positive");
  }
  if (!(v > 0.0 && v < 1.0)) {
    throw DomainError("sigmoid_gaussian_pdf: v must lie in (0, 1)");
  }
  const double u = std::log(v) - std::log1p(-v);
  return std::exp(normal_log_pdf(u, spec.mu, spec.sigma2)) / (v * (1.0 - v));
}

std::vector<double> sample_sigmoid_gaussian(const GaussSpec& spec, std::mt19937_64& rng, std::size_t n) {
  validate(spec);
  std::normal_distribution<double> standard(0.0, 1.0);
  const double sd = std::sqrt(spec.sigma2);
  constexpr double kTiny = std::numeric_limits<double>::denorm_min();
  const double below_one = std::nextafter(1.0, 0.0);
  std::vector<double> out(n);
  for (double& v : out) {
    const double z = standard(rng);
    v = std::clamp(sigmoid(spec.mu + sd * z), kTiny, below_one);
  }
  return out;
}

std::vector<double> sample_sigmoid_gaussian(const GaussSpec& spec, std::uint64_t seed, std::size_t n) {
  std::mt19937_64 rng(seed);
  return sample_sigmoid_gaussian(spec, rng, n);
}

// ---------------------------------------------------------------------------

UnitIntervalDensity::UnitIntervalDensity(ApproxKind kind, Params params)
    : kind_(kind), params_(std::move(params)) {
  switch (kind_) {
    case ApproxKind::TrueBeta:
      validate(std::get<BetaSpec>(params_));
      break;
    case ApproxKind::SigmoidGaussian:
    case ApproxKind::GaussianApprox:
    case ApproxKind::LaplaceApprox: {
      const auto& g = std::get<GaussSpec>(params_);
      validate(g);
      if (!(g.sigma2 > 0.0)) {
        throw DomainError("approximation needs a positive variance");
      }
      break;
    }
    case ApproxKind::ConcreteApprox: {
      const auto& c = std::get<ConcreteSpec>(params_);
      if (!std::isfinite(c.location) || !(c.temperature > 0.0)) {
        throw DomainError("concrete approximation needs finite location and positive temperature");
      }
      break;
    }
  }
}

double UnitIntervalDensity::log_pdf_at_logit(double u) const {
  const double log_v = log_sigmoid(u);
  const double log_1mv = log_sigmoid(-u);
  switch (kind_) {
    case ApproxKind::TrueBeta: {
      const auto& b = std::get<BetaSpec>(params_);
      return (b.alpha - 1.0) * log_v + (b.beta - 1.0) * log_1mv - log_beta_function(b.alpha, b.beta);
    }
    case ApproxKind::SigmoidGaussian: {
      const auto& g = std::get<GaussSpec>(params_);
      return normal_log_pdf(u, g.mu, g.sigma2) - log_v - log_1mv;
    }
    case ApproxKind::GaussianApprox:
    case ApproxKind::LaplaceApprox: {
      const auto& g = std::get<GaussSpec>(params_);
      return normal_log_pdf(sigmoid(u), g.mu, g.sigma2);
    }
    case ApproxKind::ConcreteApprox: {
      const auto& c = std::get<ConcreteSpec>(params_);
      return logistic_log_pdf(u, c.location / c.temperature, 1.0 / c.temperature) - log_v - log_1mv;
    }
  }
  return kNaN;
}

double UnitIntervalDensity::log_pdf(double v) const {
  if (is_real_line(kind_)) {
    const auto& g = std::get<GaussSpec>(params_);
    return normal_log_pdf(v, g.mu, g.sigma2);
  }
  if (!(v > 0.0 && v < 1.0)) {
    throw DomainError("density is only defined on (0, 1)");
  }
  return log_pdf_at_logit(std::log(v) - std::log1p(-v));
}

double UnitIntervalDensity::pdf(double v) const { return std::exp(log_pdf(v)); }

double UnitIntervalDensity::leaked_mass() const {
  if (!is_real_line(kind_)) {
    return 0.0;
  }
  const auto& g = std::get<GaussSpec>(params_);
  const double sd = std::sqrt(g.sigma2);
  return std_normal_cdf(-g.mu / sd) + std_normal_cdf((g.mu - 1.0) / sd);
}

double UnitIntervalDensity::log_interior_mass() const {
  if (!is_real_line(kind_)) {
    return 0.0;
  }
  const auto& g = std::get<GaussSpec>(params_);
  const double sd = std::sqrt(g.sigma2);
  return std::log(std_normal_cdf((1.0 - g.mu) / sd) - std_normal_cdf(-g.mu / sd));
}

UnitIntervalDensity build_approximation(const BetaSpec& target, ApproxKind kind,
                                        double concrete_temperature) {
  validate(target);
  const double a = target.alpha;
  const double b = target.beta;
  switch (kind) {
    case ApproxKind::TrueBeta:
      return {kind, target};
    case ApproxKind::SigmoidGaussian:
      return {kind, match_moments(target)};
    case ApproxKind::GaussianApprox: {
      const double s = a + b;
      return {kind, GaussSpec{a / s, a * b / (s * s * (s + 1.0))}};
    }
    case ApproxKind::LaplaceApprox: {
      if (!(a > 1.0 && b > 1.0)) {
        throw LaplaceUndefinedError("laplace approximation needs alpha > 1 and beta > 1");
      }
      const double mode = (a - 1.0) / (a + b - 2.0);
      const double curvature = (a - 1.0) / (mode * mode) + (b - 1.0) / ((1.0 - mode) * (1.0 - mode));
      return {kind, GaussSpec{mode, 1.0 / curvature}};
    }
    case ApproxKind::ConcreteApprox:
      return {kind, ConcreteSpec{std::log(a / b), concrete_temperature}};
  }
  throw DomainError("unknown approximation kind");
}

KlDivergence kl_divergence(const UnitIntervalDensity& q, const BetaSpec& p, double abs_tol,
                           std::size_t max_subdivisions) {
  validate(p);
  const UnitIntervalDensity target(ApproxKind::TrueBeta, p);
  const double log_mass = q.log_interior_mass();
  auto integrand = [&](double u) {
    const double log_q = q.log_pdf_at_logit(u) - log_mass;
    const double log_jacobian = log_sigmoid(u) + log_sigmoid(-u);
    const double weight = std::exp(log_q + log_jacobian);
    if (weight == 0.0) {
      return 0.0;
    }
    return weight * (log_q - target.log_pdf_at_logit(u));
  };
  QuadratureSpec spec;
  spec.lower = -std::numeric_limits<double>::infinity();
  spec.upper = std::numeric_limits<double>::infinity();
  spec.abs_tol = abs_tol;
  spec.max_subdivisions = max_subdivisions;
  const QuadratureResult r = integrate(integrand, spec);
  return {std::max(r.value, 0.0), r.value, r.abs_error};
}

bool ComparisonRow::laplace_defined() const { return !std::isnan(kl_laplace); }

bool ComparisonRow::sigmoid_gaussian_is_best() const {
  if (kl_sigmoid_gaussian > kl_gaussian || kl_sigmoid_gaussian > kl_concrete) {
    return false;
  }
  return !laplace_defined() || kl_sigmoid_gaussian <= kl_laplace;
}

ComparisonRow compare_approximations(const BetaSpec& target, double abs_tol, double concrete_temperature) {
  ComparisonRow row;
  row.target = target;
  auto kl = [&](ApproxKind kind) {
    return kl_divergence(build_approximation(target, kind, concrete_temperature), target, abs_tol).value;
  };
  row.kl_sigmoid_gaussian = kl(ApproxKind::SigmoidGaussian);
  const auto gaussian = build_approximation(target, ApproxKind::GaussianApprox);
  row.kl_gaussian = kl_divergence(gaussian, target, abs_tol).value;
  row.leaked_mass_gaussian = gaussian.leaked_mass();
  if (target.alpha > 1.0 && target.beta > 1.0) {
    const auto laplace = build_approximation(target, ApproxKind::LaplaceApprox);
    row.kl_laplace = kl_divergence(laplace, target, abs_tol).value;
    row.leaked_mass_laplace = laplace.leaked_mass();
  } else {
    row.kl_laplace = kNaN;
    row.leaked_mass_laplace = kNaN;
  }
  row.kl_concrete = kl(ApproxKind::ConcreteApprox);
  return row;
}

}  // namespace gpca::beta
