#pragma once

// Reference implementations used to check the library. Everything here is
// written as plain loops over std::vector and shares no code path with the
// Eigen-based routines it is compared against.

#include <cstdint>
#include <vector>

#include "gpca/gp_attention.hpp"

namespace gpca::oracle {

using Dense = std::vector<std::vector<double>>;

/// Gaussian elimination with partial pivoting.
std::vector<double> gaussian_elimination(Dense a, std::vector<double> b);

struct NaiveGpca {
  Dense gram;
  Dense correlation_rows;  // row c: a_c, length C - 1
  std::vector<double> mean;
  std::vector<double> variance;
  std::vector<double> mask;
  Dense output;
};

/// Algorithm 1 executed step by step: Gram matrix, one linear system per
/// channel, padded rows, column averages, probit mask, channel scaling.
NaiveGpca naive_gpca(const FeatureMap& x, const KernelParams& params, double padding = 0.0);

struct NaiveBlockLayout {
  std::vector<Index> members;
  Index center = -1;  // only this member's mask is kept; -1 keeps all
};

/// Block structure of a variant over `channels` channels.
std::vector<NaiveBlockLayout> naive_layout(Index channels, const VariantSpec& variant);

/// sum(weights .* y) for any variant, with every step of the naive loop
/// carried out in extended precision.
long double naive_weighted_output(const FeatureMap& x, const KernelParams& params, const VariantSpec& variant,
                                  const FeatureMap& weights, double padding = 0.0);

/// Integral of sigmoid(u) N(u; mean, variance) du by composite Simpson on
/// +-12 standard deviations.
double sigmoid_gaussian_expectation(double mean, double variance);

/// Random feature map with entries drawn from N(0, scale^2).
FeatureMap random_feature_map(Index channels, Index spatial, std::uint64_t seed, double scale = 1.0);

}  // namespace gpca::oracle
