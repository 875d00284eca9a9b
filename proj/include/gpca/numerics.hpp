#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace gpca {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class NotSpdError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonConvergenceError : public std::runtime_error {
 public:
  NonConvergenceError(const std::string& what, double partial, double error)
      : std::runtime_error(what), partial_value(partial), error_estimate(error) {}
  double partial_value;
  double error_estimate;
};

inline constexpr double kPi = 3.14159265358979323846;

// ---------------------------------------------------------------------------
// Special functions

/// psi(x) = d/dx ln Gamma(x) for x > 0.
double digamma(double x);

/// psi_1(x) = d^2/dx^2 ln Gamma(x) for x > 0.
double trigamma(double x);

/// ln Gamma(x) for x > 0 (Lanczos, g = 7).
double log_gamma(double x);

double sigmoid(double x);

/// ln sigmoid(x), stable for large |x|.
double log_sigmoid(double x);

double std_normal_pdf(double x);
double std_normal_cdf(double x);

// ---------------------------------------------------------------------------
// Linear algebra

/// Solves A x = b for symmetric positive definite A through a Cholesky
/// factor. Throws NotSpdError on asymmetry (relative 1e-10) or a
/// non-positive pivot.
Matrix spd_solve(const Matrix& a, const Matrix& b);
Vector spd_solve(const Matrix& a, const Vector& b);

// ---------------------------------------------------------------------------
// Quadrature

struct QuadratureSpec {
  double lower = 0.0;
  double upper = 1.0;
  double abs_tol = 1e-10;
  std::size_t max_subdivisions = 4000;
};

struct QuadratureResult {
  double value = 0.0;
  double abs_error = 0.0;  // estimated
  std::size_t subdivisions = 0;
  bool converged = false;
};

/// Globally adaptive Gauss-Kronrod (7/15) quadrature. Nodes are interior,
/// so integrable endpoint singularities are never evaluated. Infinite
/// limits are mapped onto (-1, 1) with u = t / (1 - t^2).
///
/// Throws NonConvergenceError when the subdivision budget runs out before
/// the error estimate drops below abs_tol.
QuadratureResult integrate(const std::function<double(double)>& f, const QuadratureSpec& spec);

}  // namespace gpca
