#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "gpca/grad.hpp"
#include "gpca/oracles.hpp"

using namespace gpca;

namespace {

struct Problem {
  FeatureMap x;
  KernelParams params;
  VariantSpec variant;
  FeatureMap weights;  // loss = sum(weights .* y)
};

Problem make_problem(int seed, Variant kind) {
  std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
  const Index channels[] = {3, 6, 12};
  const Index spatial[] = {2, 8};
  std::uniform_int_distribution<int> pick3(0, 2);
  std::uniform_int_distribution<int> pick2(0, 1);
  std::uniform_real_distribution<double> tt(-1.0, 0.5);
  Problem p;
  const Index c = channels[pick3(rng)];
  const Index s = spatial[pick2(rng)];
  for (int i = 0; i < 4; ++i) p.params.theta_tilde[i] = tt(rng);
  p.x = oracle::random_feature_map(c, s, 7000 + static_cast<std::uint64_t>(seed), 0.5);
  p.weights = oracle::random_feature_map(c, s, 9000 + static_cast<std::uint64_t>(seed));
  p.variant.kind = kind;
  p.variant.group_size = 4;
  return p;
}

Vector pack(const Problem& p) {
  Vector v(p.x.size() + 4);
  v.head(p.x.size()) = Eigen::Map<const Vector>(p.x.data(), p.x.size());
  v.tail(4) = p.params.theta_tilde;
  return v;
}

// Loss through the extended-precision naive loop: an independent path whose
// rounding noise sits far below the finite-difference truncation error.
long double loss_at(const Problem& base, const Vector& point) {
  KernelParams params = base.params;
  params.theta_tilde = point.tail(4);
  const FeatureMap x = Eigen::Map<const FeatureMap>(point.data(), base.x.rows(), base.x.cols());
  return oracle::naive_weighted_output(x, params, base.variant, base.weights);
}

double double_loss_at(const Problem& base, const Vector& point) {
  KernelParams params = base.params;
  params.theta_tilde = point.tail(4);
  const FeatureMap x = Eigen::Map<const FeatureMap>(point.data(), base.x.rows(), base.x.cols());
  return gpca_forward(x, params, base.variant).output.cwiseProduct(base.weights).sum();
}

Vector analytic(const Problem& p) {
  const GpcaOutput out = gpca_forward(p.x, p.params, p.variant);
  const GpcaGradients g = gpca_backward(out.cache, p.weights);
  Vector v(p.x.size() + 4);
  v.head(p.x.size()) = Eigen::Map<const Vector>(g.d_input.data(), g.d_input.size());
  v.tail(4) = g.d_theta_tilde;
  return v;
}

}  // namespace

TEST_CASE("zero adjoint gives zero gradients") {
  const Problem p = make_problem(1, Variant::Full);
  const GpcaOutput out = gpca_forward(p.x, p.params);
  const GpcaGradients g = gpca_backward(out.cache, FeatureMap::Zero(p.x.rows(), p.x.cols()));
  CHECK(g.d_input.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.d_theta_tilde.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("severed mask path leaves the channel scaling") {
  const Problem p = make_problem(2, Variant::Full);
  const GpcaOutput out = gpca_forward(p.x, p.params);
  const GpcaGradients g = gpca_backward(out.cache, p.weights, BackwardOptions{false, true});
  for (Index c = 0; c < p.x.rows(); ++c) {
    CHECK(g.d_input.row(c) == out.cache.mask[c] * p.weights.row(c));
  }
  CHECK(g.d_theta_tilde.isZero(0.0));
}

TEST_CASE("shape mismatch is rejected") {
  const Problem p = make_problem(3, Variant::Full);
  const GpcaOutput out = gpca_forward(p.x, p.params);
  CHECK_THROWS_AS(gpca_backward(out.cache, FeatureMap::Zero(p.x.rows() + 1, p.x.cols())), CacheMismatchError);
}

TEST_CASE("analytic gradients match central differences") {
  for (Variant kind : {Variant::Full, Variant::Local, Variant::MHA}) {
    for (int seed = 0; seed < 20; ++seed) {
      const Problem p = make_problem(seed, kind);
      const FiniteDiffReport r =
          finite_diff_check([&](const Vector& v) { return loss_at(p, v); }, pack(p), analytic(p));
      INFO("variant " << static_cast<int>(kind) << " seed " << seed << " C=" << p.x.rows() << " S=" << p.x.cols()
                      << " worst " << r.worst_coordinate);
      CHECK(r.max_rel_error < 1e-5);
    }
  }
}

TEST_CASE("plain sum loss on C=6, spatial 4") {
  Problem p = make_problem(5, Variant::Full);
  p.x = oracle::random_feature_map(6, 4, 64, 0.5);
  p.weights = FeatureMap::Ones(6, 4);
  const FiniteDiffReport r = finite_diff_check([&](const Vector& v) { return loss_at(p, v); }, pack(p), analytic(p));
  CHECK(r.max_rel_error < 1e-5);
}

TEST_CASE("extended-precision oracle agrees with the library forward") {
  for (Variant kind : {Variant::Full, Variant::Local, Variant::MHA}) {
    for (int seed = 0; seed < 20; ++seed) {
      const Problem p = make_problem(seed, kind);
      const long double wide = loss_at(p, pack(p));
      const double narrow = double_loss_at(p, pack(p));
      CHECK(std::abs(static_cast<double>(wide) - narrow) < 1e-9 * (1.0 + std::abs(narrow)));
    }
  }
}

TEST_CASE("padding receives no gradient") {
  const Problem p = make_problem(4, Variant::Full);
  auto loss = [&](double eps) {
    return gpca_forward(p.x, p.params, p.variant, ForwardOptions{eps, 1}).output.cwiseProduct(p.weights).sum();
  };
  CHECK(loss(0.0) == loss(1.0));
  CHECK(loss(0.0) == loss(-1e3));
}

TEST_CASE("backward is deterministic") {
  const Problem p = make_problem(6, Variant::MHA);
  const GpcaOutput out = gpca_forward(p.x, p.params, p.variant);
  const GpcaGradients a = gpca_backward(out.cache, p.weights);
  const GpcaGradients b = gpca_backward(out.cache, p.weights);
  CHECK(a.d_input == b.d_input);
  CHECK(a.d_theta_tilde == b.d_theta_tilde);
}

TEST_CASE("finite_diff_check basics") {
  const Vector three = Vector::Constant(1, 3.0);
  const Vector d = central_differences([](const Vector& v) { return v[0] * v[0]; }, three, 1e-5);
  CHECK(std::abs(d[0] - 6.0) < 1e-9);
  const Vector flat = central_differences([](const Vector&) { return 4.2; }, Vector::Ones(3));
  CHECK(flat.cwiseAbs().maxCoeff() == 0.0);
  const FiniteDiffReport r =
      finite_diff_check([](const Vector& v) { return v.squaredNorm(); }, Vector::Ones(2), Vector::Constant(2, 2.0));
  CHECK(r.max_rel_error < 1e-9);
  CHECK_THROWS_AS(finite_diff_check([](const Vector&) { return 0.0; }, three, three, 0.0), DomainError);
}
