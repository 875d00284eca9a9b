#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "gpca/numerics.hpp"

namespace gpca {

/// One sample's channel stack: row c is channel x_c flattened to W*H values.
using FeatureMap = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kDefaultNoisePrecision = 1e6;

/// sqrt(8 / pi): sigmoid(lambda x) matches the probit slope at 0.
inline constexpr double kProbitLambda = 1.5957691216057308;

/// Arguments of exp(-theta1 * d^2) beyond this are treated as exact zeros.
inline constexpr double kGaussianUnderflow = 700.0;

class DegenerateInputError : public DomainError {
 public:
  using DomainError::DomainError;
};

class CacheMismatchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Kernel weights theta_i = exp(theta_tilde_i) of
///   k(x, x') = theta0 exp(-theta1 |x - x'|^2) + theta2 + theta3 <x, x'>
/// plus the noise precision delta. A theta_tilde of -inf encodes theta_i = 0.
struct KernelParams {
  Eigen::Vector4d theta_tilde = Eigen::Vector4d::Zero();
  double delta = kDefaultNoisePrecision;

  // Scalar exp: the vectorized one maps -inf to a denormal instead of 0.
  Eigen::Vector4d theta() const {
    return {std::exp(theta_tilde[0]), std::exp(theta_tilde[1]), std::exp(theta_tilde[2]), std::exp(theta_tilde[3])};
  }
  static KernelParams from_theta(const Eigen::Vector4d& theta, double delta = kDefaultNoisePrecision);
  void validate() const;
};

Matrix gram_matrix(const FeatureMap& x, const KernelParams& params);

/// Leave-one-out regression weights a_c = K[c, -c] (K[-c, -c] + I / delta)^-1,
/// length C - 1, entry i belonging to the i-th channel other than c.
Vector channel_correlations(const Matrix& gram, Index c, double delta);

struct PosteriorMoments {
  Vector mean;      // A
  Vector variance;  // B, unclamped
};

/// `correlation_rows` is C x (C - 1) with row c holding a_c.
PosteriorMoments posterior_mean_var(const Matrix& gram, const Matrix& correlation_rows);

/// E[sigmoid(u)], u ~ N(mean, variance), by the probit approximation.
/// Negative variances are clamped to zero.
double mask_value(double mean, double variance, double lambda = kProbitLambda);
Vector attention_mask(const Vector& mean, const Vector& variance);

enum class Variant { Full, Local, MHA };

struct VariantSpec {
  Variant kind = Variant::Full;
  Index group_size = 16;  // MHA
  double gamma = 2.0;     // Local
  double b = 1.0;         // Local
};

struct ForwardOptions {
  double padding = 0.0;  // value placed at the self position of each padded row
  int threads = 1;
};

/// A Gaussian-process problem over a subset of channels.
struct GpBlock {
  std::vector<Index> channels;
  Index center = -1;  // Local windows only contribute this member's mask

  Matrix sq_dist;       // |x_i - x_j|^2
  Matrix inner;         // <x_i, x_j>
  Matrix gaussian;      // exp(-theta1 |x_i - x_j|^2), zero past the underflow guard
  Matrix gram;
  Matrix precision;     // (gram + I / delta)^-1
  Matrix correlations;  // padded rows: entry (i, j) weights channel j when regressing i
  Vector mean;
  Vector variance;

  Index size() const { return static_cast<Index>(channels.size()); }
};

struct AttentionCache {
  FeatureMap input;
  KernelParams params;
  VariantSpec variant;
  double padding = 0.0;
  std::vector<GpBlock> blocks;

  Vector mean;      // A, per channel
  Vector variance;  // B before clamping, per channel
  Vector mask;      // V

  Index channels() const { return input.rows(); }
  /// Full Gram matrix; only for single-block (Full) caches.
  const Matrix& gram() const;
  /// a_c for single-block caches.
  Vector correlation_row(Index c) const;
};

struct GpcaOutput {
  FeatureMap output;
  AttentionCache cache;
};

GpcaOutput gpca_forward(const FeatureMap& x, const KernelParams& params, const VariantSpec& variant = {},
                        const ForwardOptions& options = {});

/// Nearest odd integer to log2(C)/gamma + b/gamma, ties upward, at least 1.
Index local_neighborhood_size(Index channels, double gamma = 2.0, double b = 1.0);

/// Circular window of `size` channels centered at c.
std::vector<Index> local_window(Index channels, Index c, Index size);

/// Consecutive groups; a trailing single channel joins the previous group.
std::vector<std::vector<Index>> mha_groups(Index channels, Index group_size);

GpcaOutput gpca_local_forward(const FeatureMap& x, const KernelParams& params, double gamma = 2.0,
                              double b = 1.0, const ForwardOptions& options = {});
GpcaOutput gpca_mha_forward(const FeatureMap& x, const KernelParams& params, Index group_size = 16,
                            const ForwardOptions& options = {});

struct FeatureSpacePosterior {
  Vector correlations;  // a_c
  double variance = 0.0;  // B_c
};

/// Weight-space GP posterior with the explicit feature map
/// phi(x) = [sqrt(theta2); sqrt(theta3) x]. Exists only when theta0 = 0.
FeatureSpacePosterior feature_space_oracle(const FeatureMap& x, const KernelParams& params, Index c);

}  // namespace gpca
