#pragma once

#include <functional>
#include <string>

#include "gpca/gp_attention.hpp"

namespace gpca {

struct GpcaGradients {
  FeatureMap d_input;
  Eigen::Vector4d d_theta_tilde = Eigen::Vector4d::Zero();
};

struct BackwardOptions {
  /// Propagate through the mask V (and from there into K and theta). When
  /// false only the identity path of y_c = V_c x_c is followed.
  bool mask_path = true;
  bool theta = true;
};

/// Reverse pass of gpca_forward for the adjoint d_output of y.
GpcaGradients gpca_backward(const AttentionCache& cache, const FeatureMap& d_output,
                            const BackwardOptions& options = {});

/// Adjoint of the block-level posterior given adjoints of its mean (A) and
/// raw variance (B). Accumulates into d_input rows of the block members and
/// into d_theta_tilde.
void gp_block_backward(const GpBlock& block, const FeatureMap& input, const KernelParams& params,
                       const Vector& d_mean, const Vector& d_variance, FeatureMap& d_input,
                       Eigen::Vector4d& d_theta_tilde, bool want_theta = true);

inline constexpr double kFiniteDiffStep = 1e-5;

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  Index worst_coordinate = -1;
  std::string worst_label;
  double step = kFiniteDiffStep;
  Vector numeric;
};

/// Central differences with h_i = step * (1 + |x_i|). The loss may be
/// returned in extended precision so the difference is not rounded first.
Vector central_differences(const std::function<long double(const Vector&)>& f, const Vector& point,
                           double step = kFiniteDiffStep);

/// Compares `analytic` against central differences of f at `point`; the
/// relative error uses max(|analytic|, |numeric|, 1e-8) as denominator.
FiniteDiffReport finite_diff_check(const std::function<long double(const Vector&)>& f, const Vector& point,
                                   const Vector& analytic, double step = kFiniteDiffStep);

}  // namespace gpca
