#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <variant>
#include <vector>

#include "gpca/numerics.hpp"

namespace gpca::beta {

struct BetaSpec {
  double alpha = 1.0;
  double beta = 1.0;
};

struct GaussSpec {
  double mu = 0.0;
  double sigma2 = 1.0;
};

/// Binary concrete (Gumbel-sigmoid) with logit(v) ~ Logistic(location, temperature).
struct ConcreteSpec {
  double location = 0.0;
  double temperature = 1.0;
};

enum class ApproxKind { TrueBeta, SigmoidGaussian, GaussianApprox, LaplaceApprox, ConcreteApprox };

std::string_view to_string(ApproxKind kind);

void validate(const BetaSpec& spec);
void validate(const GaussSpec& spec);

double log_beta_function(double alpha, double beta);

double beta_log_pdf(double x, const BetaSpec& spec);
double beta_pdf(double x, const BetaSpec& spec);

/// (mu, sigma^2) of logit(v) for v ~ Beta(alpha, beta).
GaussSpec match_moments(const BetaSpec& spec);

/// Density of v = sigmoid(u), u ~ N(mu, sigma^2).
double sigmoid_gaussian_pdf(double v, const GaussSpec& spec);

std::vector<double> sample_sigmoid_gaussian(const GaussSpec& spec, std::mt19937_64& rng, std::size_t n);
std::vector<double> sample_sigmoid_gaussian(const GaussSpec& spec, std::uint64_t seed, std::size_t n);

class LaplaceUndefinedError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// A density on the unit interval. Gaussian and Laplace approximations live
/// on the real line; their mass outside (0, 1) is reported by leaked_mass().
class UnitIntervalDensity {
 public:
  using Params = std::variant<BetaSpec, GaussSpec, ConcreteSpec>;

  UnitIntervalDensity(ApproxKind kind, Params params);

  ApproxKind kind() const { return kind_; }
  const Params& params() const { return params_; }

  double pdf(double v) const;
  double log_pdf(double v) const;

  /// log pdf at v = sigmoid(u). Stable for |u| large where v rounds to 0 or 1.
  double log_pdf_at_logit(double u) const;

  double leaked_mass() const;

  /// log of the mass inside (0, 1); the divisor used when the density is
  /// truncated to the unit interval.
  double log_interior_mass() const;

 private:
  ApproxKind kind_;
  Params params_;
};

UnitIntervalDensity build_approximation(const BetaSpec& target, ApproxKind kind,
                                        double concrete_temperature = 1.0);

struct KlDivergence {
  double value = 0.0;  // max(raw, 0)
  double raw = 0.0;
  double abs_error = 0.0;
};

/// KL(q || p) over (0, 1). Real-line approximations are truncated to the
/// unit interval and renormalized before comparison. The integral is taken
/// in the logit domain, where every integrand here is smooth.
KlDivergence kl_divergence(const UnitIntervalDensity& q, const BetaSpec& p, double abs_tol = 1e-10,
                           std::size_t max_subdivisions = 4000);

struct ComparisonRow {
  BetaSpec target;
  double kl_sigmoid_gaussian = 0.0;
  double kl_gaussian = 0.0;
  double kl_laplace = 0.0;  // NaN when the target has no interior mode
  double kl_concrete = 0.0;
  double leaked_mass_gaussian = 0.0;
  double leaked_mass_laplace = 0.0;  // NaN when undefined

  bool laplace_defined() const;
  /// Sigmoid-Gaussian KL is no larger than every defined competitor.
  bool sigmoid_gaussian_is_best() const;
};

ComparisonRow compare_approximations(const BetaSpec& target, double abs_tol = 1e-10,
                                     double concrete_temperature = 1.0);

}  // namespace gpca::beta
