#include "gpca/nn/model.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "gpca/grad.hpp"
#include "gpca/parallel.hpp"

namespace gpca::nn {

namespace {

struct SlotName {
  AttentionSlot slot;
  const char* name;
};

constexpr SlotName kSlotNames[] = {{AttentionSlot::None, "None"},
                                   {AttentionSlot::GPCA_Full, "GPCA_Full"},
                                   {AttentionSlot::GPCA_Local, "GPCA_Local"},
                                   {AttentionSlot::GPCA_MHA, "GPCA_MHA"},
                                   {AttentionSlot::GPCA_NoPrior, "GPCA_NoPrior"},
                                   {AttentionSlot::GPCA_FixedTheta, "GPCA_FixedTheta"}};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const Matrix>;
using MutMap = Eigen::Map<Matrix>;

ConstMap view(const Vector& v, const ParamBlock& b) { return ConstMap(v.data() + b.offset, b.rows, b.cols); }
MutMap view(Vector& v, const ParamBlock& b) { return MutMap(v.data() + b.offset, b.rows, b.cols); }

// Column (oy, ox) of the result holds the receptive field of output pixel
// (oy, ox); row (ci * k + ky) * k + kx.
RowMatrix im2col(const FeatureMap& in, const ConvLayer& l) {
  const Index k = l.kernel;
  RowMatrix cols = RowMatrix::Zero(l.in_channels * k * k, l.out_h * l.out_w);
  for (Index ci = 0; ci < l.in_channels; ++ci) {
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        const Index row = (ci * k + ky) * k + kx;
        for (Index oy = 0; oy < l.out_h; ++oy) {
          const Index iy = oy * l.stride - l.pad + ky;
          if (iy < 0 || iy >= l.in_h) continue;
          for (Index ox = 0; ox < l.out_w; ++ox) {
            const Index ix = ox * l.stride - l.pad + kx;
            if (ix < 0 || ix >= l.in_w) continue;
            cols(row, oy * l.out_w + ox) = in(ci, iy * l.in_w + ix);
          }
        }
      }
    }
  }
  return cols;
}

FeatureMap col2im(const RowMatrix& cols, const ConvLayer& l) {
  const Index k = l.kernel;
  FeatureMap out = FeatureMap::Zero(l.in_channels, l.in_h * l.in_w);
  for (Index ci = 0; ci < l.in_channels; ++ci) {
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        const Index row = (ci * k + ky) * k + kx;
        for (Index oy = 0; oy < l.out_h; ++oy) {
          const Index iy = oy * l.stride - l.pad + ky;
          if (iy < 0 || iy >= l.in_h) continue;
          for (Index ox = 0; ox < l.out_w; ++ox) {
            const Index ix = ox * l.stride - l.pad + kx;
            if (ix < 0 || ix >= l.in_w) continue;
            out(ci, iy * l.in_w + ix) += cols(row, oy * l.out_w + ox);
          }
        }
      }
    }
  }
  return out;
}

struct Trace {
  std::vector<RowMatrix> cols;        // per conv layer
  std::vector<FeatureMap> pre;        // pre-activation per conv layer
  FeatureMap features;                // last activation, attention input
  FeatureMap attended;
  std::optional<AttentionCache> cache;
  Vector noprior_variance;
  Vector mask;
  Vector pooled;
  Vector logits;
};

VariantSpec slot_variant(const TinyCnnConfig& c) {
  VariantSpec v;
  v.group_size = c.mha_group_size;
  v.gamma = c.local_gamma;
  v.b = c.local_b;
  switch (c.attention_slot) {
    case AttentionSlot::GPCA_Local: v.kind = Variant::Local; break;
    case AttentionSlot::GPCA_MHA: v.kind = Variant::MHA; break;
    default: v.kind = Variant::Full; break;
  }
  return v;
}

Trace run_forward(const Model& m, const float* image) {
  const TinyCnnConfig& cfg = m.config;
  Trace t;
  FeatureMap act(cfg.input_shape[0], cfg.input_shape[1] * cfg.input_shape[2]);
  for (Index i = 0; i < act.size(); ++i) {
    act.data()[i] = static_cast<double>(image[i]) - cfg.input_shift;
  }
  for (const ConvLayer& l : m.convs) {
    t.cols.push_back(im2col(act, l));
    FeatureMap z = view(m.params, l.weight) * t.cols.back();
    z.colwise() += view(m.params, l.bias).col(0);
    act = z.cwiseMax(0.0);
    t.pre.push_back(std::move(z));
  }
  t.features = act;

  switch (cfg.attention_slot) {
    case AttentionSlot::None:
      t.attended = act;
      break;
    case AttentionSlot::GPCA_NoPrior: {
      const auto mu = view(m.params, *m.mu).col(0);
      const auto st = view(m.params, *m.sigma_tilde).col(0);
      t.noprior_variance = st.array().exp() * cfg.noprior_scale;
      t.mask = attention_mask(mu, t.noprior_variance);
      t.attended = t.mask.asDiagonal() * act;
      break;
    }
    default: {
      GpcaOutput out = gpca_forward(act, m.kernel_params(), slot_variant(cfg));
      t.attended = std::move(out.output);
      t.mask = out.cache.mask;
      t.cache = std::move(out.cache);
      break;
    }
  }
  t.pooled = t.attended.rowwise().mean();
  t.logits = view(m.params, m.linear_weight) * t.pooled + view(m.params, m.linear_bias).col(0);
  return t;
}

double cross_entropy(const Vector& logits, int label, Vector* d_logits) {
  const double top = logits.maxCoeff();
  const Vector shifted = (logits.array() - top).matrix();
  const double lse = std::log(shifted.array().exp().sum());
  if (d_logits != nullptr) {
    *d_logits = (shifted.array() - lse).exp().matrix();
    (*d_logits)[label] -= 1.0;
  }
  return lse - shifted[label];
}

// Gradient of one sample's loss, written into `grad` (zeroed by the caller).
void run_backward(const Model& m, const Trace& t, const Vector& d_logits, Vector& grad) {
  const TinyCnnConfig& cfg = m.config;
  view(grad, m.linear_weight) += d_logits * t.pooled.transpose();
  view(grad, m.linear_bias).col(0) += d_logits;
  const Vector d_pooled = view(m.params, m.linear_weight).transpose() * d_logits;
  const Index spatial = t.attended.cols();
  FeatureMap d_attended = (d_pooled / static_cast<double>(spatial)).replicate(1, spatial);

  FeatureMap d_act;
  switch (cfg.attention_slot) {
    case AttentionSlot::None:
      d_act = std::move(d_attended);
      break;
    case AttentionSlot::GPCA_NoPrior: {
      d_act = t.mask.asDiagonal() * d_attended;
      const auto mu = view(m.params, *m.mu).col(0);
      auto g_mu = view(grad, *m.mu).col(0);
      auto g_st = view(grad, *m.sigma_tilde).col(0);
      const double lam2 = kProbitLambda * kProbitLambda;
      for (Index c = 0; c < t.mask.size(); ++c) {
        const double v = t.mask[c];
        const double d_t = d_attended.row(c).dot(t.features.row(c)) * v * (1.0 - v);
        const double var = t.noprior_variance[c];
        const double s = std::sqrt(1.0 + var / lam2);
        g_mu[c] += d_t / s;
        // d var / d sigma_tilde = var
        g_st[c] += -d_t * mu[c] / (s * s * s) * 0.5 / lam2 * var;
      }
      break;
    }
    default: {
      BackwardOptions opts;
      opts.theta = cfg.attention_slot != AttentionSlot::GPCA_FixedTheta;
      GpcaGradients g = gpca_backward(*t.cache, d_attended, opts);
      d_act = std::move(g.d_input);
      if (m.theta_tilde) {
        view(grad, *m.theta_tilde).col(0) += g.d_theta_tilde;
      }
      break;
    }
  }

  for (std::size_t li = m.convs.size(); li-- > 0;) {
    const ConvLayer& l = m.convs[li];
    const FeatureMap d_pre = (t.pre[li].array() > 0.0).select(d_act, 0.0);
    view(grad, l.weight) += d_pre * t.cols[li].transpose();
    view(grad, l.bias).col(0) += d_pre.rowwise().sum();
    if (li > 0) {
      d_act = col2im(RowMatrix(view(m.params, l.weight).transpose() * d_pre), l);
    }
  }
}

void pairwise_sum(std::vector<Vector>& parts, std::size_t lo, std::size_t hi) {
  if (hi - lo <= 1) return;
  const std::size_t mid = lo + (hi - lo) / 2;
  pairwise_sum(parts, lo, mid);
  pairwise_sum(parts, mid, hi);
  parts[lo] += parts[mid];
}

}  // namespace

std::string to_string(AttentionSlot slot) {
  for (const SlotName& s : kSlotNames) {
    if (s.slot == slot) return s.name;
  }
  throw ConfigError("unknown attention slot");
}

AttentionSlot parse_slot(const std::string& name) {
  for (const SlotName& s : kSlotNames) {
    if (name == s.name) return s.slot;
  }
  throw ConfigError("unknown attention slot '" + name +
                    "' (expected None, GPCA_Full, GPCA_Local, GPCA_MHA, GPCA_NoPrior or GPCA_FixedTheta)");
}

void TinyCnnConfig::validate() const {
  if (conv_layers.empty()) throw ConfigError("model needs at least one conv layer");
  for (const ConvSpec& c : conv_layers) {
    if (c.out_channels < 1 || c.kernel_size < 1 || c.kernel_size % 2 == 0 || c.stride < 1) {
      throw ConfigError("conv layers need out_channels >= 1, an odd kernel size and stride >= 1");
    }
  }
  if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
  for (Index d : input_shape) {
    if (d < 1) throw ConfigError("input_shape entries must be positive");
  }
  if (attention_slot != AttentionSlot::None && conv_layers.back().out_channels < 2) {
    throw ConfigError("an attention slot needs at least 2 channels after the last conv");
  }
  if (!(delta > 0.0) || !std::isfinite(delta)) throw ConfigError("delta must be positive");
  if (mha_group_size < 2) throw ConfigError("mha_group_size must be at least 2");
  if (!(local_gamma > 0.0)) throw ConfigError("local_gamma must be positive");
  if (!(fixed_theta1 > 0.0) || !std::isfinite(fixed_theta1)) throw ConfigError("fixed_theta1 must be positive");
  if (!std::isfinite(input_shift)) throw ConfigError("input_shift must be finite");
  if (!(noprior_scale > 0.0) || !std::isfinite(noprior_scale)) throw ConfigError("noprior_scale must be positive");
}

std::vector<ParamBlock> Model::blocks() const {
  std::vector<ParamBlock> out;
  for (const ConvLayer& l : convs) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  out.push_back(linear_weight);
  out.push_back(linear_bias);
  for (const auto* b : {&theta_tilde, &mu, &sigma_tilde}) {
    if (*b) out.push_back(**b);
  }
  return out;
}

bool Model::has_gpca() const {
  return config.attention_slot == AttentionSlot::GPCA_Full || config.attention_slot == AttentionSlot::GPCA_Local ||
         config.attention_slot == AttentionSlot::GPCA_MHA || config.attention_slot == AttentionSlot::GPCA_FixedTheta;
}

KernelParams Model::kernel_params() const {
  KernelParams p;
  p.delta = config.delta;
  if (config.attention_slot == AttentionSlot::GPCA_FixedTheta) {
    p.theta_tilde = Eigen::Vector4d(0.0, std::log(config.fixed_theta1), -std::numeric_limits<double>::infinity(), 0.0);
  } else if (theta_tilde) {
    p.theta_tilde = params.segment(theta_tilde->offset, 4);
  }
  return p;
}

Model build_model(const TinyCnnConfig& config, std::uint64_t seed) {
  config.validate();
  Model m;
  m.config = config;
  Index offset = 0;
  auto block = [&](const std::string& name, Index rows, Index cols) {
    ParamBlock b{name, offset, rows, cols};
    offset += rows * cols;
    return b;
  };
  Index channels = config.input_shape[0];
  Index h = config.input_shape[1];
  Index w = config.input_shape[2];
  for (std::size_t i = 0; i < config.conv_layers.size(); ++i) {
    const ConvSpec& spec = config.conv_layers[i];
    ConvLayer l;
    l.in_channels = channels;
    l.kernel = spec.kernel_size;
    l.stride = spec.stride;
    l.pad = spec.kernel_size / 2;
    l.in_h = h;
    l.in_w = w;
    l.out_h = (h + 2 * l.pad - l.kernel) / l.stride + 1;
    l.out_w = (w + 2 * l.pad - l.kernel) / l.stride + 1;
    const std::string name = "conv" + std::to_string(i + 1);
    l.weight = block(name + ".weight", spec.out_channels, channels * l.kernel * l.kernel);
    l.bias = block(name + ".bias", spec.out_channels, 1);
    m.convs.push_back(l);
    channels = spec.out_channels;
    h = l.out_h;
    w = l.out_w;
  }
  m.linear_weight = block("linear.weight", config.num_classes, channels);
  m.linear_bias = block("linear.bias", config.num_classes, 1);
  switch (config.attention_slot) {
    case AttentionSlot::GPCA_Full:
    case AttentionSlot::GPCA_Local:
    case AttentionSlot::GPCA_MHA:
      m.theta_tilde = block("attention.theta_tilde", 4, 1);
      break;
    case AttentionSlot::GPCA_NoPrior:
      m.mu = block("attention.mu", channels, 1);
      m.sigma_tilde = block("attention.sigma_tilde", channels, 1);
      break;
    default:
      break;
  }
  m.params = Vector::Zero(offset);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto he = [&](const ParamBlock& b) {
    const double scale = std::sqrt(2.0 / static_cast<double>(b.cols));
    for (Index i = 0; i < b.size(); ++i) m.params[b.offset + i] = scale * normal(rng);
  };
  for (const ConvLayer& l : m.convs) he(l.weight);
  he(m.linear_weight);
  return m;
}

SampleResult forward_sample(const Model& model, const float* image, int label) {
  Trace t = run_forward(model, image);
  SampleResult r;
  r.loss = label >= 0 ? cross_entropy(t.logits, label, nullptr) : 0.0;
  r.logits = std::move(t.logits);
  r.mask = std::move(t.mask);
  return r;
}

BatchResult loss_and_gradient(const Model& model, const Dataset& data, const std::vector<std::size_t>& indices,
                              int threads) {
  if (indices.empty()) throw DatasetError("loss_and_gradient: empty batch");
  const std::size_t n = indices.size();
  std::vector<Vector> grads(n);
  std::vector<double> losses(n);
  std::vector<char> hits(n);
  parallel_for(n, threads, [&](std::size_t i) {
    const std::size_t idx = indices[i];
    const int label = data.labels[idx];
    const Trace t = run_forward(model, data.image(idx));
    Vector d_logits;
    losses[i] = cross_entropy(t.logits, label, &d_logits);
    Index best = 0;
    t.logits.maxCoeff(&best);
    hits[i] = best == label;
    grads[i] = Vector::Zero(model.params.size());
    run_backward(model, t, d_logits, grads[i]);
  });
  pairwise_sum(grads, 0, n);
  BatchResult r;
  r.gradient = grads[0] / static_cast<double>(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    total += losses[i];
    r.correct += hits[i];
  }
  r.loss = total / static_cast<double>(n);
  return r;
}

double batch_loss(const Model& model, const Dataset& data, const std::vector<std::size_t>& indices) {
  double total = 0.0;
  for (std::size_t idx : indices) {
    total += forward_sample(model, data.image(idx), data.labels[idx]).loss;
  }
  return total / static_cast<double>(indices.size());
}

}  // namespace gpca::nn
