#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gpca/gp_attention.hpp"

namespace gpca::bench {

struct ScalingSpec {
  std::vector<Index> channels{64, 128, 256, 512};
  Index spatial = 16;
  int repetitions = 11;
  int warmups = 3;
  std::vector<VariantSpec> variants{{Variant::Full}, {Variant::Local}, {Variant::MHA, 16}};
  std::uint64_t seed = 0;
  int threads = 1;

  /// Throws std::invalid_argument: fewer than 3 distinct channel counts,
  /// fewer than 11 repetitions, or an empty variant list.
  void validate() const;
};

struct Timing {
  Index channels = 0;
  std::string variant;
  double median_ns = 0.0;
};

struct VariantSlope {
  std::string variant;
  double slope = 0.0;
};

struct ScalingResult {
  std::vector<Timing> rows;
  std::vector<VariantSlope> slopes;

  double slope(const std::string& variant) const;
  double median_ns(const std::string& variant, Index channels) const;
};

std::string variant_name(const VariantSpec& v);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

/// Median wall time of gpca forward passes on a steady clock.
ScalingResult run_scaling(const ScalingSpec& spec);

}  // namespace gpca::bench
