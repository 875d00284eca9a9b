#include "gpca/gp_attention.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "gpca/parallel.hpp"

namespace gpca {

KernelParams KernelParams::from_theta(const Eigen::Vector4d& theta, double delta) {
  KernelParams p;
  for (int i = 0; i < 4; ++i) {
    if (theta[i] < 0.0 || !std::isfinite(theta[i])) {
      throw DomainError("kernel weights must be finite and nonnegative");
    }
    p.theta_tilde[i] = theta[i] == 0.0 ? -std::numeric_limits<double>::infinity() : std::log(theta[i]);
  }
  p.delta = delta;
  p.validate();
  return p;
}

void KernelParams::validate() const {
  for (int i = 0; i < 4; ++i) {
    if (std::isnan(theta_tilde[i]) || theta_tilde[i] == std::numeric_limits<double>::infinity()) {
      throw DomainError("theta_tilde entries must be finite or -inf");
    }
  }
  if (!(delta > 0.0) || !std::isfinite(delta)) {
    throw DomainError("noise precision delta must be positive and finite");
  }
}

namespace {

void check_finite(const FeatureMap& x) {
  if (!x.allFinite()) {
    throw DomainError("feature map contains non-finite entries");
  }
}

// Fills the pairwise pieces of the kernel for the given rows of x.
void fill_kernel(const FeatureMap& x, const std::vector<Index>& rows, const Eigen::Vector4d& theta,
                 GpBlock& block) {
  const Index n = static_cast<Index>(rows.size());
  block.sq_dist.resize(n, n);
  block.inner.resize(n, n);
  block.gaussian.resize(n, n);
  block.gram.resize(n, n);
  for (Index i = 0; i < n; ++i) {
    const auto xi = x.row(rows[i]);
    for (Index j = i; j < n; ++j) {
      const auto xj = x.row(rows[j]);
      const double d2 = i == j ? 0.0 : (xi - xj).squaredNorm();
      const double dot = xi.dot(xj);
      const double arg = theta[1] * d2;
      const double g = arg > kGaussianUnderflow ? 0.0 : std::exp(-arg);
      const double k = theta[0] * g + theta[2] + theta[3] * dot;
      block.sq_dist(i, j) = block.sq_dist(j, i) = d2;
      block.inner(i, j) = block.inner(j, i) = dot;
      block.gaussian(i, j) = block.gaussian(j, i) = g;
      block.gram(i, j) = block.gram(j, i) = k;
    }
  }
}

// Leave-one-out posterior for every member from one factorization of
// M = K + I / delta. With P = M^-1 the block-inverse identities give
//   a_i[j] = -P_ij / P_ii   and   B_i = 1 / P_ii - 1 / delta.
void solve_block(GpBlock& block, double delta, double padding) {
  const Index n = block.size();
  if (n < 2) {
    throw DegenerateInputError("a Gaussian-process block needs at least two channels");
  }
  Matrix m = block.gram;
  m.diagonal().array() += 1.0 / delta;
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) {
    throw NotSpdError("gram matrix plus noise is not positive definite");
  }
  // P = L^-T L^-1: one triangular inverse and a symmetric rank-n product.
  Matrix l_inv = Matrix::Identity(n, n);
  llt.matrixL().solveInPlace(l_inv);
  block.precision.setZero(n, n);
  block.precision.selfadjointView<Eigen::Lower>().rankUpdate(l_inv.transpose());
  block.precision.triangularView<Eigen::StrictlyUpper>() = block.precision.transpose();

  block.correlations.resize(n, n);
  block.variance.resize(n);
  for (Index i = 0; i < n; ++i) {
    const double pii = block.precision(i, i);
    for (Index j = 0; j < n; ++j) {
      block.correlations(i, j) = i == j ? padding : -block.precision(i, j) / pii;
    }
    block.variance[i] = 1.0 / pii - 1.0 / delta;
  }
  // Column means over the off-diagonal entries: the padding never enters.
  block.mean.resize(n);
  const double inv = 1.0 / static_cast<double>(n - 1);
  for (Index j = 0; j < n; ++j) {
    double sum = 0.0;
    for (Index i = 0; i < n; ++i) {
      if (i != j) {
        sum += block.correlations(i, j);
      }
    }
    block.mean[j] = sum * inv;
  }
}

GpBlock make_block(const FeatureMap& x, std::vector<Index> channels, Index center, const KernelParams& params,
                   double padding) {
  GpBlock block;
  block.channels = std::move(channels);
  block.center = center;
  fill_kernel(x, block.channels, params.theta(), block);
  solve_block(block, params.delta, padding);
  return block;
}

std::vector<Index> all_channels(Index c) {
  std::vector<Index> out(static_cast<std::size_t>(c));
  for (Index i = 0; i < c; ++i) {
    out[static_cast<std::size_t>(i)] = i;
  }
  return out;
}

GpcaOutput assemble(const FeatureMap& x, const KernelParams& params, const VariantSpec& variant,
                    double padding, std::vector<GpBlock> blocks) {
  GpcaOutput out;
  AttentionCache& cache = out.cache;
  const Index c = x.rows();
  cache.input = x;
  cache.params = params;
  cache.variant = variant;
  cache.padding = padding;
  cache.mean.resize(c);
  cache.variance.resize(c);
  for (const GpBlock& block : blocks) {
    for (Index i = 0; i < block.size(); ++i) {
      if (block.center >= 0 && i != block.center) {
        continue;
      }
      const Index ch = block.channels[static_cast<std::size_t>(i)];
      cache.mean[ch] = block.mean[i];
      cache.variance[ch] = block.variance[i];
    }
  }
  cache.blocks = std::move(blocks);
  cache.mask = attention_mask(cache.mean, cache.variance);
  out.output = cache.mask.asDiagonal() * x;
  return out;
}

GpcaOutput forward_full(const FeatureMap& x, const KernelParams& params, const VariantSpec& variant,
                        double padding) {
  std::vector<GpBlock> blocks;
  blocks.push_back(make_block(x, all_channels(x.rows()), -1, params, padding));
  return assemble(x, params, variant, padding, std::move(blocks));
}

void check_input(const FeatureMap& x, const KernelParams& params) {
  params.validate();
  check_finite(x);
  if (x.rows() < 2) {
    throw DegenerateInputError("GPCA needs at least two channels");
  }
}

}  // namespace

Matrix gram_matrix(const FeatureMap& x, const KernelParams& params) {
  params.validate();
  check_finite(x);
  GpBlock block;
  fill_kernel(x, all_channels(x.rows()), params.theta(), block);
  return block.gram;
}

Vector channel_correlations(const Matrix& gram, Index c, double delta) {
  const Index n = gram.rows();
  if (gram.cols() != n || c < 0 || c >= n) {
    throw DomainError("channel_correlations: bad gram shape or channel index");
  }
  if (n < 2) {
    throw DegenerateInputError("channel_correlations: needs at least two channels");
  }
  Matrix rest(n - 1, n - 1);
  Vector cross(n - 1);
  for (Index i = 0, ri = 0; i < n; ++i) {
    if (i == c) {
      continue;
    }
    cross[ri] = gram(c, i);
    for (Index j = 0, rj = 0; j < n; ++j) {
      if (j == c) {
        continue;
      }
      rest(ri, rj++) = gram(i, j);
    }
    ++ri;
  }
  rest.diagonal().array() += 1.0 / delta;
  // a_c M = K[c, -c]  <=>  M a_c^T = K[-c, c] for symmetric M.
  return spd_solve(rest, cross);
}

PosteriorMoments posterior_mean_var(const Matrix& gram, const Matrix& correlation_rows) {
  const Index n = gram.rows();
  if (n < 2) {
    throw DegenerateInputError("posterior_mean_var: needs at least two channels");
  }
  if (correlation_rows.rows() != n || correlation_rows.cols() != n - 1) {
    throw DomainError("posterior_mean_var: correlation rows must be C x (C - 1)");
  }
  PosteriorMoments out{Vector::Zero(n), Vector::Zero(n)};
  for (Index c = 0; c < n; ++c) {
    double explained = 0.0;
    for (Index i = 0, ri = 0; i < n; ++i) {
      if (i == c) {
        continue;
      }
      explained += correlation_rows(c, ri) * gram(c, i);
      // row c's entry for channel i feeds the mean of channel i
      out.mean[i] += correlation_rows(c, ri);
      ++ri;
    }
    out.variance[c] = gram(c, c) - explained;
  }
  out.mean /= static_cast<double>(n - 1);
  return out;
}

double mask_value(double mean, double variance, double lambda) {
  const double b = std::max(variance, 0.0);
  return sigmoid(mean / std::sqrt(1.0 + b / (lambda * lambda)));
}

Vector attention_mask(const Vector& mean, const Vector& variance) {
  if (mean.size() != variance.size()) {
    throw DomainError("attention_mask: mean and variance lengths differ");
  }
  Vector v(mean.size());
  for (Index i = 0; i < mean.size(); ++i) {
    v[i] = mask_value(mean[i], variance[i]);
  }
  return v;
}

const Matrix& AttentionCache::gram() const {
  if (blocks.size() != 1) {
    throw CacheMismatchError("gram(): cache holds more than one block");
  }
  return blocks.front().gram;
}

Vector AttentionCache::correlation_row(Index c) const {
  if (blocks.size() != 1) {
    throw CacheMismatchError("correlation_row(): cache holds more than one block");
  }
  const Matrix& full = blocks.front().correlations;
  const Index n = full.rows();
  Vector row(n - 1);
  for (Index j = 0, r = 0; j < n; ++j) {
    if (j != c) {
      row[r++] = full(c, j);
    }
  }
  return row;
}

Index local_neighborhood_size(Index channels, double gamma, double b) {
  if (channels < 2 || !(gamma > 0.0)) {
    throw DomainError("local_neighborhood_size: needs C >= 2 and gamma > 0");
  }
  const double target = std::log2(static_cast<double>(channels)) / gamma + b / gamma;
  auto k = static_cast<Index>(std::floor(target));
  if (k % 2 == 0) {
    ++k;
  }
  return std::max<Index>(k, 1);
}

std::vector<Index> local_window(Index channels, Index c, Index size) {
  const Index half = size / 2;
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(size));
  for (Index o = -half; o <= half; ++o) {
    out.push_back(((c + o) % channels + channels) % channels);
  }
  return out;
}

std::vector<std::vector<Index>> mha_groups(Index channels, Index group_size) {
  if (group_size < 2) {
    throw DomainError("mha_groups: group size must be at least 2");
  }
  std::vector<std::vector<Index>> groups;
  for (Index start = 0; start < channels; start += group_size) {
    const Index end = std::min(channels, start + group_size);
    std::vector<Index> g;
    for (Index i = start; i < end; ++i) {
      g.push_back(i);
    }
    groups.push_back(std::move(g));
  }
  if (groups.size() > 1 && groups.back().size() == 1) {
    groups[groups.size() - 2].push_back(groups.back().front());
    groups.pop_back();
  }
  return groups;
}

GpcaOutput gpca_local_forward(const FeatureMap& x, const KernelParams& params, double gamma, double b,
                              const ForwardOptions& options) {
  check_input(x, params);
  const Index c = x.rows();
  VariantSpec variant{Variant::Local, 16, gamma, b};
  const Index k = local_neighborhood_size(c, gamma, b);
  // A window must leave at least two training channels.
  const Index width = std::max<Index>(k, 3);
  if (k >= c - 1 || width >= c) {
    return forward_full(x, params, variant, options.padding);
  }
  std::vector<GpBlock> blocks(static_cast<std::size_t>(c));
  parallel_for(static_cast<std::size_t>(c), options.threads, [&](std::size_t i) {
    blocks[i] = make_block(x, local_window(c, static_cast<Index>(i), width), width / 2, params, options.padding);
  });
  return assemble(x, params, variant, options.padding, std::move(blocks));
}

GpcaOutput gpca_mha_forward(const FeatureMap& x, const KernelParams& params, Index group_size,
                            const ForwardOptions& options) {
  check_input(x, params);
  VariantSpec variant{Variant::MHA, group_size, 2.0, 1.0};
  auto groups = mha_groups(x.rows(), group_size);
  std::vector<GpBlock> blocks(groups.size());
  parallel_for(groups.size(), options.threads, [&](std::size_t i) {
    blocks[i] = make_block(x, std::move(groups[i]), -1, params, options.padding);
  });
  return assemble(x, params, variant, options.padding, std::move(blocks));
}

GpcaOutput gpca_forward(const FeatureMap& x, const KernelParams& params, const VariantSpec& variant,
                        const ForwardOptions& options) {
  switch (variant.kind) {
    case Variant::Full:
      check_input(x, params);
      return forward_full(x, params, variant, options.padding);
    case Variant::Local:
      return gpca_local_forward(x, params, variant.gamma, variant.b, options);
    case Variant::MHA:
      return gpca_mha_forward(x, params, variant.group_size, options);
  }
  throw DomainError("unknown GPCA variant");
}

FeatureSpacePosterior feature_space_oracle(const FeatureMap& x, const KernelParams& params, Index c) {
  params.validate();
  const Eigen::Vector4d theta = params.theta();
  if (theta[0] != 0.0) {
    throw DomainError("feature_space_oracle: needs theta0 = 0 (no finite feature map otherwise)");
  }
  const Index n = x.rows();
  const Index s = x.cols();
  if (n < 2 || c < 0 || c >= n) {
    throw DegenerateInputError("feature_space_oracle: needs C >= 2 and a valid channel");
  }
  auto features = [&](Index i) {
    Vector phi(s + 1);
    phi[0] = std::sqrt(theta[2]);
    phi.tail(s) = std::sqrt(theta[3]) * x.row(i).transpose();
    return phi;
  };
  Matrix others(s + 1, n - 1);
  for (Index i = 0, r = 0; i < n; ++i) {
    if (i != c) {
      others.col(r++) = features(i);
    }
  }
  const Vector phi_c = features(c);
  Matrix kappa = params.delta * others * others.transpose();
  kappa.diagonal().array() += 1.0;
  const Eigen::LDLT<Matrix> ldlt(kappa);
  const Vector y = ldlt.solve(phi_c);
  return {params.delta * others.transpose() * y, phi_c.dot(y)};
}

}  // namespace gpca
