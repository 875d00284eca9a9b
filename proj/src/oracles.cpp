#include "gpca/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <utility>

namespace gpca::oracle {

namespace {

template <class T>
T plain_sigmoid(T z) {
  return T(1) / (T(1) + std::exp(-z));
}

template <class T>
using DenseT = std::vector<std::vector<T>>;

template <class T>
std::vector<T> eliminate(DenseT<T> a, std::vector<T> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    }
    if (a[pivot][col] == T(0)) throw std::runtime_error("naive oracle: singular system");
    std::swap(a[col], a[pivot]);
    std::swap(b[col], b[pivot]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const T f = a[r][col] / a[col][col];
      for (std::size_t k = col; k < n; ++k) a[r][k] -= f * a[col][k];
      b[r] -= f * b[col];
    }
  }
  std::vector<T> x(n);
  for (std::size_t i = n; i-- > 0;) {
    T sum = b[i];
    for (std::size_t k = i + 1; k < n; ++k) sum -= a[i][k] * x[k];
    x[i] = sum / a[i][i];
  }
  return x;
}

template <class T>
struct BlockResult {
  DenseT<T> gram;
  DenseT<T> correlation_rows;
  std::vector<T> mean;
  std::vector<T> variance;
};

// Algorithm 1 steps 1-8 on the channels listed in `members`, one channel at a time.
template <class T>
BlockResult<T> naive_block(const FeatureMap& x, const std::vector<Index>& members, const KernelParams& params,
                           T padding) {
  const std::size_t c = members.size();
  const auto s = static_cast<std::size_t>(x.cols());
  T theta[4];
  for (int i = 0; i < 4; ++i) theta[i] = std::exp(static_cast<T>(params.theta_tilde[i]));
  const T noise = T(1) / static_cast<T>(params.delta);
  BlockResult<T> out;

  out.gram.assign(c, std::vector<T>(c));
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      T d2 = 0;
      T dot = 0;
      for (std::size_t k = 0; k < s; ++k) {
        const T xi = x(members[i], static_cast<Index>(k));
        const T xj = x(members[j], static_cast<Index>(k));
        d2 += (xi - xj) * (xi - xj);
        dot += xi * xj;
      }
      const T arg = theta[1] * d2;
      const T g = arg > T(kGaussianUnderflow) ? T(0) : std::exp(-arg);
      out.gram[i][j] = theta[0] * g + theta[2] + theta[3] * dot;
    }
  }

  out.correlation_rows.assign(c, std::vector<T>(c - 1));
  out.variance.assign(c, T(0));
  for (std::size_t ch = 0; ch < c; ++ch) {
    DenseT<T> system;
    std::vector<T> rhs;
    for (std::size_t i = 0; i < c; ++i) {
      if (i == ch) continue;
      std::vector<T> row;
      for (std::size_t j = 0; j < c; ++j) {
        if (j != ch) row.push_back(out.gram[i][j] + (i == j ? noise : T(0)));
      }
      system.push_back(std::move(row));
      rhs.push_back(out.gram[ch][i]);
    }
    out.correlation_rows[ch] = eliminate(system, rhs);
    T explained = 0;
    for (std::size_t i = 0; i + 1 < c; ++i) explained += out.correlation_rows[ch][i] * rhs[i];
    out.variance[ch] = out.gram[ch][ch] - explained;
  }

  DenseT<T> padded(c, std::vector<T>(c));
  for (std::size_t r = 0; r < c; ++r) {
    for (std::size_t i = 0; i < c; ++i) {
      if (i < r) {
        padded[r][i] = out.correlation_rows[r][i];
      } else if (i == r) {
        padded[r][i] = padding;
      } else {
        padded[r][i] = out.correlation_rows[r][i - 1];
      }
    }
  }
  out.mean.assign(c, T(0));
  for (std::size_t ch = 0; ch < c; ++ch) {
    T sum = 0;
    for (std::size_t r = 0; r < c; ++r) {
      if (r != ch) sum += padded[r][ch];
    }
    out.mean[ch] = sum / static_cast<T>(c - 1);
  }
  return out;
}

template <class T>
T probit_mask(T mean, T variance) {
  const T b = variance > T(0) ? variance : T(0);
  const T pi = std::acos(T(-1));
  return plain_sigmoid(mean / std::sqrt(T(1) + pi / T(8) * b));
}

std::vector<Index> iota_channels(Index c) {
  std::vector<Index> all;
  for (Index i = 0; i < c; ++i) all.push_back(i);
  return all;
}

}  // namespace

std::vector<double> gaussian_elimination(Dense a, std::vector<double> b) {
  return eliminate<double>(std::move(a), std::move(b));
}

NaiveGpca naive_gpca(const FeatureMap& x, const KernelParams& params, double padding) {
  const auto c = static_cast<std::size_t>(x.rows());
  const auto s = static_cast<std::size_t>(x.cols());
  if (c < 2) {
    throw std::invalid_argument("naive_gpca: needs at least two channels");
  }
  BlockResult<double> block = naive_block<double>(x, iota_channels(x.rows()), params, padding);
  NaiveGpca out;
  out.gram = std::move(block.gram);
  out.correlation_rows = std::move(block.correlation_rows);
  out.mean = std::move(block.mean);
  out.variance = std::move(block.variance);
  out.mask.assign(c, 0.0);
  out.output.assign(c, std::vector<double>(s));
  for (std::size_t ch = 0; ch < c; ++ch) {
    out.mask[ch] = probit_mask(out.mean[ch], out.variance[ch]);
    for (std::size_t k = 0; k < s; ++k) {
      out.output[ch][k] = out.mask[ch] * x(static_cast<Index>(ch), static_cast<Index>(k));
    }
  }
  return out;
}

std::vector<NaiveBlockLayout> naive_layout(Index channels, const VariantSpec& variant) {
  std::vector<NaiveBlockLayout> layout;
  if (variant.kind == Variant::MHA) {
    for (auto& g : mha_groups(channels, variant.group_size)) layout.push_back({std::move(g), -1});
    return layout;
  }
  if (variant.kind == Variant::Local) {
    const Index k = local_neighborhood_size(channels, variant.gamma, variant.b);
    const Index width = std::max<Index>(k, 3);
    if (k < channels - 1 && width < channels) {
      for (Index c = 0; c < channels; ++c) layout.push_back({local_window(channels, c, width), width / 2});
      return layout;
    }
  }
  layout.push_back({iota_channels(channels), -1});
  return layout;
}

long double naive_weighted_output(const FeatureMap& x, const KernelParams& params, const VariantSpec& variant,
                                  const FeatureMap& weights, double padding) {
  using T = long double;
  const Index c = x.rows();
  std::vector<T> mean(static_cast<std::size_t>(c));
  std::vector<T> variance(static_cast<std::size_t>(c));
  for (const NaiveBlockLayout& b : naive_layout(c, variant)) {
    const BlockResult<T> r = naive_block<T>(x, b.members, params, static_cast<T>(padding));
    for (std::size_t i = 0; i < b.members.size(); ++i) {
      if (b.center >= 0 && static_cast<Index>(i) != b.center) continue;
      mean[static_cast<std::size_t>(b.members[i])] = r.mean[i];
      variance[static_cast<std::size_t>(b.members[i])] = r.variance[i];
    }
  }
  T total = 0;
  for (Index ch = 0; ch < c; ++ch) {
    const T v = probit_mask(mean[static_cast<std::size_t>(ch)], variance[static_cast<std::size_t>(ch)]);
    for (Index k = 0; k < x.cols(); ++k) {
      total += static_cast<T>(weights(ch, k)) * v * static_cast<T>(x(ch, k));
    }
  }
  return total;
}

double sigmoid_gaussian_expectation(double mean, double variance) {
  if (variance <= 0.0) {
    return plain_sigmoid(mean);
  }
  const double sd = std::sqrt(variance);
  const double lo = mean - 12.0 * sd;
  const double hi = mean + 12.0 * sd;
  const int panels = 4000;  // even
  const double h = (hi - lo) / panels;
  auto f = [&](double u) {
    const double z = (u - mean) / sd;
    return plain_sigmoid(u) * std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * kPi));
  };
  double sum = f(lo) + f(hi);
  for (int i = 1; i < panels; ++i) {
    sum += (i % 2 == 1 ? 4.0 : 2.0) * f(lo + i * h);
  }
  return sum * h / 3.0;
}

FeatureMap random_feature_map(Index channels, Index spatial, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  FeatureMap x(channels, spatial);
  for (Index i = 0; i < channels; ++i) {
    for (Index j = 0; j < spatial; ++j) {
      x(i, j) = normal(rng);
    }
  }
  return x;
}

}  // namespace gpca::oracle
