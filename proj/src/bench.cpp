#include "gpca/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <stdexcept>

#include "gpca/oracles.hpp"

namespace gpca::bench {

void ScalingSpec::validate() const {
  const std::set<Index> distinct(channels.begin(), channels.end());
  if (distinct.size() < 3) throw std::invalid_argument("need at least 3 distinct channel counts to fit a slope");
  if (*distinct.begin() < 2) throw std::invalid_argument("channel counts must be at least 2");
  if (spatial < 1) throw std::invalid_argument("spatial size must be positive");
  if (repetitions < 11) throw std::invalid_argument("at least 11 repetitions are required");
  if (warmups < 0) throw std::invalid_argument("warmups must be nonnegative");
  if (variants.empty()) throw std::invalid_argument("no variants to benchmark");
}

double ScalingResult::slope(const std::string& variant) const {
  for (const VariantSlope& s : slopes) {
    if (s.variant == variant) return s.slope;
  }
  throw std::out_of_range("no slope for " + variant);
}

double ScalingResult::median_ns(const std::string& variant, Index channels) const {
  for (const Timing& t : rows) {
    if (t.variant == variant && t.channels == channels) return t.median_ns;
  }
  throw std::out_of_range("no timing for " + variant + " at C=" + std::to_string(channels));
}

std::string variant_name(const VariantSpec& v) {
  switch (v.kind) {
    case Variant::Full:
      return "Full";
    case Variant::Local:
      return "Local";
    case Variant::MHA:
      return "MHA";
  }
  return "?";
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("loglog_slope: need matching sizes >= 2");
  const double n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

ScalingResult run_scaling(const ScalingSpec& spec) {
  spec.validate();
  using Clock = std::chrono::steady_clock;
  ScalingResult result;
  for (const VariantSpec& v : spec.variants) {
    std::vector<double> xs;
    std::vector<double> ys;
    for (Index c : spec.channels) {
      const FeatureMap x = oracle::random_feature_map(c, spec.spatial, spec.seed + static_cast<std::uint64_t>(c));
      KernelParams params;
      params.theta_tilde << 0.0, -2.0, -1.0, -1.0;
      const ForwardOptions opts{0.0, spec.threads};
      double sink = 0.0;
      for (int i = 0; i < spec.warmups; ++i) sink += gpca_forward(x, params, v, opts).cache.mask[0];
      std::vector<double> ns;
      for (int i = 0; i < spec.repetitions; ++i) {
        const auto t0 = Clock::now();
        sink += gpca_forward(x, params, v, opts).cache.mask[0];
        ns.push_back(std::chrono::duration<double, std::nano>(Clock::now() - t0).count());
      }
      if (!std::isfinite(sink)) throw std::runtime_error("benchmark produced a non-finite mask");
      std::nth_element(ns.begin(), ns.begin() + static_cast<std::ptrdiff_t>(ns.size() / 2), ns.end());
      const double median = ns[ns.size() / 2];
      result.rows.push_back({c, variant_name(v), median});
      xs.push_back(static_cast<double>(c));
      ys.push_back(median);
    }
    result.slopes.push_back({variant_name(v), loglog_slope(xs, ys)});
  }
  return result;
}

}  // namespace gpca::bench
