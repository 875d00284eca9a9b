#include "gpca/grad.hpp"

#include <algorithm>
#include <cmath>

namespace gpca {

void gp_block_backward(const GpBlock& block, const FeatureMap& input, const KernelParams& params,
                       const Vector& d_mean, const Vector& d_variance, FeatureMap& d_input,
                       Eigen::Vector4d& d_theta_tilde, bool want_theta) {
  const Index n = block.size();
  const Matrix& p = block.precision;
  const Eigen::Vector4d theta = params.theta();

  // mean_j = sum_{i != j} corr(i, j) / (n - 1), corr(i, j) = -P_ij / P_ii
  // variance_i = 1 / P_ii - 1 / delta
  Matrix d_p = Matrix::Zero(n, n);
  const double inv = 1.0 / static_cast<double>(n - 1);
  for (Index i = 0; i < n; ++i) {
    const double pii = p(i, i);
    double diag = -d_variance[i] / (pii * pii);
    for (Index j = 0; j < n; ++j) {
      if (j == i) {
        continue;
      }
      const double d_corr = d_mean[j] * inv;
      d_p(i, j) = -d_corr / pii;
      diag += d_corr * p(i, j) / (pii * pii);
    }
    d_p(i, i) = diag;
  }
  // P = M^-1  =>  dL/dM = -P^T (dL/dP) P^T; M = K + I / delta.
  const Matrix d_gram = -p.transpose() * d_p * p.transpose();

  if (want_theta) {
    const Matrix weighted_gauss = d_gram.cwiseProduct(block.gaussian);
    const double gauss_sum = weighted_gauss.sum();
    d_theta_tilde[0] += theta[0] * gauss_sum;
    d_theta_tilde[1] -= theta[1] * theta[0] * weighted_gauss.cwiseProduct(block.sq_dist).sum();
    d_theta_tilde[2] += theta[2] * d_gram.sum();
    d_theta_tilde[3] += theta[3] * d_gram.cwiseProduct(block.inner).sum();
  }

  // Input adjoint through the linear and Gaussian kernel terms.
  FeatureMap x(n, input.cols());
  for (Index i = 0; i < n; ++i) {
    x.row(i) = input.row(block.channels[static_cast<std::size_t>(i)]);
  }
  const Matrix sym = d_gram + d_gram.transpose();
  Matrix w = (theta[0] * theta[1]) * d_gram.cwiseProduct(block.gaussian);
  const Matrix w_sym = w + w.transpose();
  FeatureMap dx = theta[3] * (sym * x);
  dx -= 2.0 * (w_sym.rowwise().sum().asDiagonal() * x - w_sym * x);
  for (Index i = 0; i < n; ++i) {
    d_input.row(block.channels[static_cast<std::size_t>(i)]) += dx.row(i);
  }
}

GpcaGradients gpca_backward(const AttentionCache& cache, const FeatureMap& d_output,
                            const BackwardOptions& options) {
  const Index c = cache.channels();
  if (d_output.rows() != cache.input.rows() || d_output.cols() != cache.input.cols()) {
    throw CacheMismatchError("gpca_backward: d_output shape does not match the cached input");
  }
  if (cache.mask.size() != c || cache.mean.size() != c || cache.variance.size() != c) {
    throw CacheMismatchError("gpca_backward: cache vectors do not match the channel count");
  }

  GpcaGradients g;
  g.d_input = cache.mask.asDiagonal() * d_output;
  if (!options.mask_path) {
    return g;
  }

  // V = sigmoid(A / s), s = sqrt(1 + pi/8 max(B, 0))
  Vector d_mean(c);
  Vector d_variance(c);
  for (Index i = 0; i < c; ++i) {
    const double v = cache.mask[i];
    const double d_v = d_output.row(i).dot(cache.input.row(i));
    const double d_t = d_v * v * (1.0 - v);
    const double b = cache.variance[i];
    const double s = std::sqrt(1.0 + std::max(b, 0.0) / (kProbitLambda * kProbitLambda));
    d_mean[i] = d_t / s;
    d_variance[i] = b > 0.0 ? -d_t * cache.mean[i] / (s * s * s) * 0.5 / (kProbitLambda * kProbitLambda) : 0.0;
  }

  for (const GpBlock& block : cache.blocks) {
    const Index n = block.size();
    Vector block_mean = Vector::Zero(n);
    Vector block_var = Vector::Zero(n);
    for (Index i = 0; i < n; ++i) {
      if (block.center >= 0 && i != block.center) {
        continue;
      }
      const Index ch = block.channels[static_cast<std::size_t>(i)];
      block_mean[i] = d_mean[ch];
      block_var[i] = d_variance[ch];
    }
    gp_block_backward(block, cache.input, cache.params, block_mean, block_var, g.d_input, g.d_theta_tilde,
                      options.theta);
  }
  return g;
}

Vector central_differences(const std::function<long double(const Vector&)>& f, const Vector& point, double step) {
  Vector numeric(point.size());
  Vector probe = point;
  for (Index i = 0; i < point.size(); ++i) {
    const double h = step * (1.0 + std::abs(point[i]));
    probe[i] = point[i] + h;
    const double hi = probe[i];
    const long double up = f(probe);
    probe[i] = point[i] - h;
    const double lo = probe[i];
    const long double down = f(probe);
    probe[i] = point[i];
    // divide by the step actually taken after rounding
    numeric[i] = static_cast<double>((up - down) / (static_cast<long double>(hi) - lo));
  }
  return numeric;
}

FiniteDiffReport finite_diff_check(const std::function<long double(const Vector&)>& f, const Vector& point,
                                   const Vector& analytic, double step) {
  if (!(step > 0.0)) {
    throw DomainError("finite_diff_check: step must be positive");
  }
  if (analytic.size() != point.size()) {
    throw DomainError("finite_diff_check: analytic gradient has the wrong length");
  }
  FiniteDiffReport report;
  report.step = step;
  report.numeric = central_differences(f, point, step);
  for (Index i = 0; i < point.size(); ++i) {
    const double a = analytic[i];
    const double n = report.numeric[i];
    const double denom = std::max({std::abs(a), std::abs(n), 1e-8});
    const double rel = std::abs(a - n) / denom;
    if (rel > report.max_rel_error || report.worst_coordinate < 0) {
      report.max_rel_error = rel;
      report.worst_coordinate = i;
    }
  }
  return report;
}

}  // namespace gpca
