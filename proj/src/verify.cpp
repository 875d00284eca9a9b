#include "gpca/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "gpca/beta_approx.hpp"
#include "gpca/grad.hpp"
#include "gpca/nn/model.hpp"
#include "gpca/oracles.hpp"

namespace gpca::verify {

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool passed = true;
  std::ostringstream detail;  // summary shown on success
  std::vector<std::string> failures;

  void fail(const std::string& what) {
    passed = false;
    failures.push_back(what);
  }

  std::string text() const {
    if (passed) return detail.str();
    std::string s = failures.front();
    for (std::size_t i = 1; i < std::min<std::size_t>(failures.size(), 3); ++i) s += "; " + failures[i];
    if (failures.size() > 3) s += "; " + std::to_string(failures.size() - 3) + " more";
    return s;
  }
};

double rel_diff(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

KernelParams theta_params(double t0, double t1, double t2, double t3) {
  return KernelParams::from_theta(Eigen::Vector4d(t0, t1, t2, t3));
}

// Random problem shared by several structural properties.
struct RandomInput {
  FeatureMap x;
  KernelParams params;
};

RandomInput random_input(std::uint64_t seed, Index min_c = 2, Index max_c = 12) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> ch(min_c, max_c);
  std::uniform_int_distribution<Index> sp(4, 16);
  std::uniform_real_distribution<double> tt(-1.5, 0.5);
  RandomInput r;
  const Index c = ch(rng);
  const Index s = sp(rng);
  for (int i = 0; i < 4; ++i) r.params.theta_tilde[i] = tt(rng);
  r.x = oracle::random_feature_map(c, s, seed + 100000, 0.7);
  return r;
}

// --- beta / Sigmoid-Gaussian --------------------------------------------------

void normalization(const Options&, Outcome& out) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> mu(-5.0, 5.0);
  std::uniform_real_distribution<double> log_s2(std::log(0.01), std::log(25.0));
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const beta::GaussSpec g{mu(rng), std::exp(log_s2(rng))};
    const double sd = std::sqrt(g.sigma2);
    std::vector<double> cuts{0.0};
    for (int k = -12; k <= 12; ++k) {
      const double v = sigmoid(g.mu + k * sd);
      if (v > cuts.back() && v < 1.0) cuts.push_back(v);
    }
    cuts.push_back(1.0);
    double mass = 0.0;
    for (std::size_t j = 0; j + 1 < cuts.size(); ++j) {
      mass += integrate([&](double v) { return v > 0.0 && v < 1.0 ? beta::sigmoid_gaussian_pdf(v, g) : 0.0; },
                        QuadratureSpec{cuts[j], cuts[j + 1], 1e-11, 20000})
                  .value;
    }
    worst = std::max(worst, std::abs(mass - 1.0));
    if (std::abs(mass - 1.0) >= 1e-6) {
      std::ostringstream s;
      s << "mass " << mass << " at mu=" << g.mu << " sigma2=" << g.sigma2;
      out.fail(s.str());
    }
  }
  out.detail << "50 draws, max |mass - 1| = " << worst;
}

struct Moments {
  double mean = 0.0;
  double var = 0.0;
  double se_mean = 0.0;
  double se_var = 0.0;
};

Moments sample_moments(const std::vector<double>& u) {
  const double n = static_cast<double>(u.size());
  Moments m;
  m.mean = std::accumulate(u.begin(), u.end(), 0.0) / n;
  double m2 = 0.0;
  double m4 = 0.0;
  for (double x : u) {
    const double d = (x - m.mean) * (x - m.mean);
    m2 += d;
    m4 += d * d;
  }
  m.var = m2 / (n - 1.0);
  m4 /= n;
  m.se_mean = std::sqrt(m.var / n);
  m.se_var = std::sqrt(std::max(m4 - m.var * m.var, 0.0) / n);
  return m;
}

void moment_matching(const Options&, Outcome& out) {
  constexpr std::size_t n = 1000000;
  const double grid[] = {0.5, 1.0, 2.0, 5.0};
  double worst = 0.0;
  std::uint64_t seed = 31;
  for (double a : grid) {
    for (double b : grid) {
      const beta::BetaSpec spec{a, b};
      const beta::GaussSpec g = beta::match_moments(spec);
      // logit of a Beta(a, b) draw is log G_a - log G_b for independent gammas
      std::mt19937_64 rng(++seed);
      std::gamma_distribution<double> ga(a, 1.0);
      std::gamma_distribution<double> gb(b, 1.0);
      std::vector<double> u(n);
      for (double& x : u) x = std::log(ga(rng)) - std::log(gb(rng));
      const Moments beta_side = sample_moments(u);

      const std::vector<double> v = beta::sample_sigmoid_gaussian(g, ++seed, n);
      for (std::size_t i = 0; i < n; ++i) u[i] = std::log(v[i]) - std::log1p(-v[i]);
      const Moments sg_side = sample_moments(u);

      for (const Moments* m : {&beta_side, &sg_side}) {
        const double zm = std::abs(m->mean - g.mu) / m->se_mean;
        const double zv = std::abs(m->var - g.sigma2) / m->se_var;
        worst = std::max({worst, zm, zv});
        if (zm > 4.0 || zv > 4.0) {
          std::ostringstream s;
          s << (m == &beta_side ? "beta" : "sigmoid-gaussian") << " samples at (" << a << "," << b
            << "): z_mean=" << zm << " z_var=" << zv;
          out.fail(s.str());
        }
      }
    }
  }
  out.detail << "16 grid points x 2 samplers, 1e6 draws each, max z = " << worst;
}

void mask_grid(const Options& opt, Outcome& out) {
  double worst = 0.0;
  double worst_a = 0.0;
  double worst_b = 0.0;
  for (int i = 0; i <= 20; ++i) {
    for (int j = 0; j <= 20; ++j) {
      const double a = -5.0 + 0.5 * i;
      const double b = 0.5 * j;
      const double err = std::abs(mask_value(a, b, opt.lambda) - oracle::sigmoid_gaussian_expectation(a, b));
      if (err > worst) {
        worst = err;
        worst_a = a;
        worst_b = b;
      }
    }
  }
  if (worst >= 0.02) {
    std::ostringstream s;
    s << "error " << worst << " at A=" << worst_a << " B=" << worst_b;
    out.fail(s.str());
  }
  for (double b : {0.0, 1.0, 10.0}) {
    const double closed = mask_value(0.0, b, opt.lambda);
    const double truth = oracle::sigmoid_gaussian_expectation(0.0, b);
    if (closed != 0.5 || std::abs(truth - 0.5) > 1e-12) {
      std::ostringstream s;
      s << "A=0, B=" << b << ": closed " << closed << " quadrature " << truth;
      out.fail(s.str());
    }
  }
  out.detail << "21x21 grid, max error " << worst << " at A=" << worst_a << " B=" << worst_b;
}

// --- GP attention -------------------------------------------------------------

void feature_space(const Options&, Outcome& out) {
  double worst = 0.0;
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed) + 4242);
    std::uniform_real_distribution<double> tt(-1.0, 1.0);
    std::uniform_int_distribution<Index> ch(3, 6);
    const Index c = ch(rng);
    const KernelParams p = theta_params(0.0, 1.0, std::exp(tt(rng)), std::exp(tt(rng)));
    const FeatureMap x = oracle::random_feature_map(c, 6, 6000 + static_cast<std::uint64_t>(seed));
    const GpcaOutput fast = gpca_forward(x, p);
    for (Index i = 0; i < c; ++i) {
      const FeatureSpacePosterior fs = feature_space_oracle(x, p, i);
      const Vector a = fast.cache.correlation_row(i);
      const double ea = (fs.correlations - a).cwiseAbs().maxCoeff() / a.cwiseAbs().maxCoeff();
      const double eb = rel_diff(fs.variance, fast.cache.variance[i]);
      worst = std::max({worst, ea, eb});
      if (ea > 1e-8 || eb > 1e-8) {
        std::ostringstream s;
        s << "seed " << seed << " channel " << i << ": a error " << ea << ", B error " << eb;
        out.fail(s.str());
      }
    }
  }
  out.detail << "20 configurations, max relative error " << worst;
}

void oracle_equivalence(const Options& opt, Outcome& out) {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const RandomInput in = random_input(seed);
    const GpcaOutput fast = gpca_forward(in.x, in.params, {}, ForwardOptions{0.0, opt.threads});
    const oracle::NaiveGpca slow = oracle::naive_gpca(in.x, in.params);
    double diff = 0.0;
    double scale = 0.0;
    for (Index i = 0; i < in.x.rows(); ++i) {
      for (Index j = 0; j < in.x.cols(); ++j) {
        const double ref = slow.output[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        diff = std::max(diff, std::abs(fast.output(i, j) - ref));
        scale = std::max(scale, std::abs(ref));
      }
    }
    const double rel = diff / scale;
    worst = std::max(worst, rel);
    if (!(rel < 1e-12)) {
      std::ostringstream s;
      s << "seed " << seed << " (C=" << in.x.rows() << ", S=" << in.x.cols() << "): relative error " << rel;
      out.fail(s.str());
    }
  }
  out.detail << "50 inputs, max relative error " << worst;
}

// --- gradients ------------------------------------------------------------------

struct GradProblem {
  FeatureMap x;
  KernelParams params;
  VariantSpec variant;
  FeatureMap weights;
};

GradProblem grad_problem(int seed, Variant kind) {
  std::mt19937_64 rng(static_cast<std::uint64_t>(seed) + 555);
  const Index channels[] = {3, 6, 12};
  const Index spatial[] = {2, 8};
  std::uniform_int_distribution<int> pick3(0, 2);
  std::uniform_int_distribution<int> pick2(0, 1);
  std::uniform_real_distribution<double> tt(-1.0, 0.5);
  GradProblem p;
  const Index c = channels[pick3(rng)];
  const Index s = spatial[pick2(rng)];
  for (int i = 0; i < 4; ++i) p.params.theta_tilde[i] = tt(rng);
  p.x = oracle::random_feature_map(c, s, 17000 + static_cast<std::uint64_t>(seed), 0.5);
  p.weights = oracle::random_feature_map(c, s, 19000 + static_cast<std::uint64_t>(seed));
  p.variant.kind = kind;
  p.variant.group_size = 4;
  return p;
}

void gradient_gp(const Options&, Outcome& out) {
  double worst = 0.0;
  for (Variant kind : {Variant::Full, Variant::Local, Variant::MHA}) {
    for (int seed = 0; seed < 20; ++seed) {
      const GradProblem p = grad_problem(seed, kind);
      const GpcaOutput fwd = gpca_forward(p.x, p.params, p.variant);
      const GpcaGradients g = gpca_backward(fwd.cache, p.weights);
      Vector point(p.x.size() + 4);
      Vector analytic(p.x.size() + 4);
      point.head(p.x.size()) = Eigen::Map<const Vector>(p.x.data(), p.x.size());
      point.tail(4) = p.params.theta_tilde;
      analytic.head(p.x.size()) = Eigen::Map<const Vector>(g.d_input.data(), g.d_input.size());
      analytic.tail(4) = g.d_theta_tilde;
      // The finite-difference side runs the extended-precision per-channel loop.
      auto loss = [&](const Vector& v) {
        KernelParams params = p.params;
        params.theta_tilde = v.tail(4);
        const FeatureMap x = Eigen::Map<const FeatureMap>(v.data(), p.x.rows(), p.x.cols());
        return oracle::naive_weighted_output(x, params, p.variant, p.weights);
      };
      const FiniteDiffReport rep = finite_diff_check(loss, point, analytic);
      worst = std::max(worst, rep.max_rel_error);
      if (!(rep.max_rel_error < 1e-5)) {
        std::ostringstream s;
        s << "variant " << static_cast<int>(kind) << " seed " << seed << ": " << rep.max_rel_error << " at coordinate "
          << rep.worst_coordinate;
        out.fail(s.str());
      }
    }
  }
  out.detail << "20 configurations x 3 variants, max relative error " << worst;
}

void gradient_cnn(const Options& opt, Outcome& out) {
  using namespace nn;
  Dataset d;
  d.channels = 1;
  d.height = 8;
  d.width = 8;
  d.num_classes = 3;
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  d.pixels.resize(2 * 64);
  for (float& px : d.pixels) px = u(rng);
  d.labels = {0, 2};
  const std::vector<std::size_t> batch{0, 1};
  double worst = 0.0;
  for (AttentionSlot slot : {AttentionSlot::None, AttentionSlot::GPCA_Full, AttentionSlot::GPCA_Local,
                             AttentionSlot::GPCA_MHA, AttentionSlot::GPCA_NoPrior, AttentionSlot::GPCA_FixedTheta}) {
    TinyCnnConfig c;
    c.conv_layers = {{4, 3, 1}, {6, 3, 2}};
    c.input_shape = {1, 8, 8};
    c.num_classes = 3;
    c.attention_slot = slot;
    c.mha_group_size = 3;
    Model m = build_model(c, 5);
    if (m.theta_tilde) m.params.segment(m.theta_tilde->offset, 4) << -0.3, -1.0, -0.5, -0.2;
    if (m.mu) {
      m.params.segment(m.mu->offset, 6).setLinSpaced(-0.5, 0.7);
      m.params.segment(m.sigma_tilde->offset, 6).setLinSpaced(-1.0, 0.5);
    }
    const BatchResult r = loss_and_gradient(m, d, batch, opt.threads);
    auto loss = [&](const Vector& p) {
      Model probe = m;
      probe.params = p;
      return static_cast<long double>(batch_loss(probe, d, batch));
    };
    const FiniteDiffReport rep = finite_diff_check(loss, m.params, r.gradient);
    worst = std::max(worst, rep.max_rel_error);
    if (!(rep.max_rel_error < 1e-4)) {
      std::ostringstream s;
      s << to_string(slot) << ": " << rep.max_rel_error;
      out.fail(s.str());
    }
  }
  out.detail << "6 slots, 2-sample batch, max relative error " << worst;
}

// --- structural -----------------------------------------------------------------

const VariantSpec kVariants[] = {{Variant::Full}, {Variant::Local}, {Variant::MHA, 4}};

void mask_range(const Options& opt, Outcome& out) {
  std::size_t checked = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const RandomInput in = random_input(seed + 7000, 2, 24);
    for (const VariantSpec& v : kVariants) {
      const Vector mask = gpca_forward(in.x, in.params, v, ForwardOptions{0.0, opt.threads}).cache.mask;
      checked += static_cast<std::size_t>(mask.size());
      if (!(mask.minCoeff() > 0.0 && mask.maxCoeff() < 1.0)) {
        std::ostringstream s;
        s << "seed " << seed << " variant " << static_cast<int>(v.kind) << ": range [" << mask.minCoeff() << ", "
          << mask.maxCoeff() << "]";
        out.fail(s.str());
      }
    }
  }
  out.detail << checked << " mask values strictly inside (0, 1)";
}

void variance_clamp(const Options&, Outcome& out) {
  // Random inputs plus rank-deficient stacks where cancellation can push the
  // raw Schur complement below zero.
  std::vector<FeatureMap> inputs;
  std::vector<KernelParams> params;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const RandomInput in = random_input(seed + 8000);
    inputs.push_back(in.x);
    params.push_back(in.params);
  }
  for (int k = 0; k < 5; ++k) {
    FeatureMap x(6, 3);
    for (Index i = 0; i < 6; ++i) x.row(i) << 0.3 + k, -1.2, 0.8 * (i % 2 ? 1.0 : 1.0 + 1e-9);
    inputs.push_back(x);
    params.push_back(KernelParams{});
  }
  double most_negative = 0.0;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    const GpcaOutput o = gpca_forward(inputs[t], params[t]);
    for (Index c = 0; c < o.cache.channels(); ++c) {
      const double raw = o.cache.variance[c];
      most_negative = std::min(most_negative, raw);
      const double clamped = std::max(raw, 0.0);
      const double expect = mask_value(o.cache.mean[c], clamped);
      if (o.cache.mask[c] != expect || !std::isfinite(o.cache.mask[c])) {
        std::ostringstream s;
        s << "input " << t << " channel " << c << ": mask " << o.cache.mask[c] << " vs clamped form " << expect;
        out.fail(s.str());
      }
    }
  }
  out.detail << inputs.size() << " inputs, masks use max(B, 0); most negative raw B " << most_negative;
}

void permutation(const Options&, Outcome& out) {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const RandomInput in = random_input(seed + 9000);
    const Index c = in.x.rows();
    std::vector<Index> perm(static_cast<std::size_t>(c));
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    FeatureMap xp(c, in.x.cols());
    for (Index i = 0; i < c; ++i) xp.row(i) = in.x.row(perm[static_cast<std::size_t>(i)]);
    const Vector v = gpca_forward(in.x, in.params).cache.mask;
    const Vector vp = gpca_forward(xp, in.params).cache.mask;
    for (Index i = 0; i < c; ++i) worst = std::max(worst, std::abs(vp[i] - v[perm[static_cast<std::size_t>(i)]]));
  }
  if (!(worst < 1e-12)) {
    std::ostringstream s;
    s << "max mask difference under permutation " << worst;
    out.fail(s.str());
  }
  out.detail << "20 random permutations, max mask difference " << worst;
}

void padding_independence(const Options&, Outcome& out) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const RandomInput in = random_input(seed + 10000, 4, 12);
    const FeatureMap w = oracle::random_feature_map(in.x.rows(), in.x.cols(), seed + 11000);
    for (const VariantSpec& v : kVariants) {
      const double eps = 0.37;
      const double h = 1e-3;
      const double up = gpca_forward(in.x, in.params, v, ForwardOptions{eps + h, 1}).output.cwiseProduct(w).sum();
      const double down = gpca_forward(in.x, in.params, v, ForwardOptions{eps - h, 1}).output.cwiseProduct(w).sum();
      const double far = gpca_forward(in.x, in.params, v, ForwardOptions{1e6, 1}).output.cwiseProduct(w).sum();
      if ((up - down) / (2 * h) != 0.0 || far != up) {
        std::ostringstream s;
        s << "seed " << seed << " variant " << static_cast<int>(v.kind) << ": d loss / d padding = " << (up - down) / (2 * h);
        out.fail(s.str());
      }
    }
  }
  out.detail << "10 inputs x 3 variants, loss bitwise identical for padding 0.37 +- 1e-3 and 1e6";
}

double max_abs(const FeatureMap& a, const FeatureMap& b) { return (a - b).cwiseAbs().maxCoeff(); }

void degeneration(const Options&, Outcome& out) {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    // Local falls back to Full once the window would cover every channel.
    for (Index c : {2, 3}) {
      RandomInput in = random_input(seed + 12000);
      in.x = oracle::random_feature_map(c, in.x.cols(), seed + 12500, 0.7);
      const FeatureMap full = gpca_forward(in.x, in.params).output;
      const FeatureMap local = gpca_local_forward(in.x, in.params).output;
      worst = std::max(worst, max_abs(full, local));
    }
    // A single MHA group is the Full variant.
    const RandomInput in = random_input(seed + 13000);
    const Index c = in.x.rows();
    const FeatureMap full = gpca_forward(in.x, in.params).output;
    worst = std::max(worst, max_abs(full, gpca_mha_forward(in.x, in.params, c).output));
    worst = std::max(worst, max_abs(full, gpca_mha_forward(in.x, in.params, c + 5).output));
    // Each MHA group is a Full problem on its own channels.
    const Index g = 3;
    const FeatureMap mha = gpca_mha_forward(in.x, in.params, g).output;
    for (const auto& members : mha_groups(c, g)) {
      FeatureMap sub(static_cast<Index>(members.size()), in.x.cols());
      for (std::size_t i = 0; i < members.size(); ++i) sub.row(static_cast<Index>(i)) = in.x.row(members[i]);
      const FeatureMap alone = gpca_forward(sub, in.params).output;
      for (std::size_t i = 0; i < members.size(); ++i) {
        worst = std::max(worst, (alone.row(static_cast<Index>(i)) - mha.row(members[i])).cwiseAbs().maxCoeff());
      }
    }
  }
  if (worst > 1e-12) {
    std::ostringstream s;
    s << "max output difference " << worst;
    out.fail(s.str());
  }
  out.detail << "Local(C<=3)=Full, MHA(one group)=Full, MHA groups independent; max difference " << worst;
}

Property make(std::string name, std::string summary, void (*body)(const Options&, Outcome&)) {
  auto run = [name, body](const Options& opt) {
    Result r;
    r.name = name;
    const auto t0 = Clock::now();
    Outcome out;
    try {
      body(opt, out);
    } catch (const std::exception& e) {
      out.fail(std::string("exception: ") + e.what());
    }
    r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    r.passed = out.passed;
    r.detail = out.text();
    return r;
  };
  return Property{name, std::move(summary), run};
}

}  // namespace

const std::vector<Property>& properties() {
  static const std::vector<Property> all = {
      make("sigmoid_gaussian_normalization", "Sigmoid-Gaussian density integrates to 1 (50 random parameter sets)",
           normalization),
      make("moment_matching_monte_carlo", "digamma/trigamma moments agree with 1e6-sample logit moments",
           moment_matching),
      make("mask_expectation_grid", "closed-form mask within 0.02 of quadrature on the 21x21 grid; 0.5 at A=0",
           mask_grid),
      make("feature_space_oracle", "kernel-trick (a_c, B_c) equal the weight-space posterior when theta0 = 0",
           feature_space),
      make("gradient_check_gp", "attention backward matches central differences (20 configs x 3 variants)",
           gradient_gp),
      make("gradient_check_cnn", "tiny CNN loss gradient matches central differences for every slot", gradient_cnn),
      make("oracle_equivalence", "vectorized forward equals the per-channel loop on 50 random inputs",
           oracle_equivalence),
      make("mask_in_unit_interval", "every mask value lies strictly inside (0, 1)", mask_range),
      make("variance_clamp", "masks are computed from max(B, 0)", variance_clamp),
      make("permutation_equivariance", "permuting channels permutes the masks", permutation),
      make("padding_independence", "the self-position padding value never changes the loss", padding_independence),
      make("variant_degeneration", "Local and MHA reduce to Full where they should", degeneration),
  };
  return all;
}

Result run(const std::string& name, const Options& options) {
  for (const Property& p : properties()) {
    if (p.name == name) return p.run(options);
  }
  throw std::out_of_range("unknown property: " + name);
}

std::vector<Result> run_all(const Options& options) {
  std::vector<Result> out;
  for (const Property& p : properties()) out.push_back(p.run(options));
  return out;
}

}  // namespace gpca::verify
