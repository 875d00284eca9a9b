#include "gpca/numerics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <queue>
#include <vector>

namespace gpca {

namespace {

void require_positive_finite(double x, const char* fn) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw DomainError(std::string(fn) + ": argument must be positive and finite");
  }
}

// Arguments are shifted above this before the asymptotic series is used.
constexpr double kAsymptoticThreshold = 10.0;

}  // namespace

double digamma(double x) {
  require_positive_finite(x, "digamma");
  double shift = 0.0;
  while (x < kAsymptoticThreshold) {
    shift += 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // -sum B_2k / (2k x^2k), k = 1..7
  const double series =
      inv2 * (1.0 / 12 -
              inv2 * (1.0 / 120 -
                      inv2 * (1.0 / 252 -
                              inv2 * (1.0 / 240 -
                                      inv2 * (1.0 / 132 - inv2 * (691.0 / 32760 - inv2 / 12.0))))));
  return std::log(x) - 0.5 * inv - series - shift;
}

double trigamma(double x) {
  require_positive_finite(x, "trigamma");
  double shift = 0.0;
  while (x < kAsymptoticThreshold) {
    shift += 1.0 / (x * x);
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // sum B_2k / x^(2k+1), k = 1..7
  const double series =
      inv * inv2 *
      (1.0 / 6 -
       inv2 * (1.0 / 30 -
               inv2 * (1.0 / 42 -
                       inv2 * (1.0 / 30 - inv2 * (5.0 / 66 - inv2 * (691.0 / 2730 - inv2 * 7.0 / 6))))));
  return inv + 0.5 * inv2 + series + shift;
}

double log_gamma(double x) {
  require_positive_finite(x, "log_gamma");
  if (x < 0.5) {
    return log_gamma(x + 1.0) - std::log(x);
  }
  static constexpr std::array<double, 9> kLanczos = {
      0.99999999999980993,  676.5203681218851,     -1259.1392167224028,
      771.32342877765313,   -176.61502916214059,   12.507343278686905,
      -0.13857109526572012, 9.9843695780195716e-6, 1.5056327351493116e-7};
  constexpr double kG = 7.0;
  const double z = x - 1.0;
  double sum = kLanczos[0];
  for (std::size_t i = 1; i < kLanczos.size(); ++i) {
    sum += kLanczos[i] / (z + static_cast<double>(i));
  }
  const double t = z + kG + 0.5;
  return 0.5 * std::log(2.0 * kPi) + (z + 0.5) * std::log(t) - t + std::log(sum);
}

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sigmoid(double x) {
  // -softplus(-x)
  if (x >= 0.0) {
    return -std::log1p(std::exp(-x));
  }
  return x - std::log1p(std::exp(x));
}

double std_normal_pdf(double x) {
  static const double kInvSqrt2Pi = 1.0 / std::sqrt(2.0 * kPi);
  return kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

double std_normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

// ---------------------------------------------------------------------------

namespace {

Eigen::LLT<Matrix> factor_spd(const Matrix& a) {
  if (a.rows() != a.cols()) {
    throw NotSpdError("spd_solve: matrix is not square");
  }
  const double scale = a.cwiseAbs().maxCoeff();
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw NotSpdError("spd_solve: matrix is not symmetric");
  }
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) {
    throw NotSpdError("spd_solve: non-positive pivot in Cholesky factorization");
  }
  return llt;
}

}  // namespace

Matrix spd_solve(const Matrix& a, const Matrix& b) {
  if (b.rows() != a.rows()) {
    throw DomainError("spd_solve: right-hand side has the wrong number of rows");
  }
  return factor_spd(a).solve(b);
}

Vector spd_solve(const Matrix& a, const Vector& b) {
  if (b.size() != a.rows()) {
    throw DomainError("spd_solve: right-hand side has the wrong length");
  }
  return factor_spd(a).solve(b);
}

// ---------------------------------------------------------------------------

namespace {

// Kronrod abscissae for the 15-point rule; odd indices are the 7-point
// Gauss nodes.
constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr std::array<double, 4> kWg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Segment {
  double a;
  double b;
  double value;
  double error;
  bool operator<(const Segment& o) const { return error < o.error; }
};

Segment gauss_kronrod_15(const std::function<double(double)>& f, double a, double b) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double fc = f(center);
  double kronrod = fc * kWgk[7];
  double gauss = fc * kWg[3];
  for (std::size_t j = 0; j < 7; ++j) {
    const double dx = half * kXgk[j];
    const double pair = f(center - dx) + f(center + dx);
    kronrod += kWgk[j] * pair;
    if (j % 2 == 1) {
      gauss += kWg[j / 2] * pair;
    }
  }
  return {a, b, kronrod * half, std::abs((kronrod - gauss) * half)};
}

}  // namespace

QuadratureResult integrate(const std::function<double(double)>& f, const QuadratureSpec& spec) {
  if (!(spec.lower < spec.upper)) {
    throw DomainError("integrate: lower limit must be below upper limit");
  }
  if (!(spec.abs_tol > 0.0)) {
    throw DomainError("integrate: abs_tol must be positive");
  }

  std::function<double(double)> g = f;
  double lo = spec.lower;
  double hi = spec.upper;
  const bool inf_lo = std::isinf(lo);
  const bool inf_hi = std::isinf(hi);
  if (inf_lo && inf_hi) {
    g = [&f](double t) {
      const double d = 1.0 - t * t;
      return f(t / d) * (1.0 + t * t) / (d * d);
    };
    lo = -1.0;
    hi = 1.0;
  } else if (inf_hi) {
    // u = lower + t / (1 - t), t in (0, 1)
    const double base = spec.lower;
    g = [&f, base](double t) {
      const double d = 1.0 - t;
      return f(base + t / d) / (d * d);
    };
    lo = 0.0;
    hi = 1.0;
  } else if (inf_lo) {
    const double base = spec.upper;
    g = [&f, base](double t) {
      const double d = 1.0 - t;
      return f(base - t / d) / (d * d);
    };
    lo = 0.0;
    hi = 1.0;
  }

  std::priority_queue<Segment> heap;
  Segment first = gauss_kronrod_15(g, lo, hi);
  double total = first.value;
  double error = first.error;
  heap.push(first);
  std::size_t subdivisions = 0;

  while (error > spec.abs_tol) {
    if (subdivisions >= spec.max_subdivisions) {
      throw NonConvergenceError("integrate: subdivision budget exhausted", total, error);
    }
    const Segment worst = heap.top();
    heap.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    const Segment left = gauss_kronrod_15(g, worst.a, mid);
    const Segment right = gauss_kronrod_15(g, mid, worst.b);
    total += left.value + right.value - worst.value;
    error += left.error + right.error - worst.error;
    heap.push(left);
    heap.push(right);
    ++subdivisions;
    // Incremental updates drift; resum once the estimate looks converged.
    if (error <= spec.abs_tol) {
      total = 0.0;
      error = 0.0;
      std::vector<Segment> all;
      all.reserve(heap.size());
      while (!heap.empty()) {
        all.push_back(heap.top());
        heap.pop();
      }
      std::sort(all.begin(), all.end(), [](const Segment& x, const Segment& y) { return x.a < y.a; });
      for (const Segment& s : all) {
        total += s.value;
        error += s.error;
      }
      for (const Segment& s : all) {
        heap.push(s);
      }
    }
  }
  if (!std::isfinite(total)) {
    throw NonConvergenceError("integrate: integrand produced a non-finite value", total, error);
  }
  return {total, error, subdivisions, true};
}

}  // namespace gpca
