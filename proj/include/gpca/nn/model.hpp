#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gpca/gp_attention.hpp"
#include "gpca/nn/dataset.hpp"

namespace gpca::nn {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class AttentionSlot { None, GPCA_Full, GPCA_Local, GPCA_MHA, GPCA_NoPrior, GPCA_FixedTheta };

std::string to_string(AttentionSlot slot);
AttentionSlot parse_slot(const std::string& name);

struct ConvSpec {
  Index out_channels = 8;
  Index kernel_size = 3;
  Index stride = 1;
};

struct TinyCnnConfig {
  std::vector<ConvSpec> conv_layers{{8, 3, 1}, {16, 3, 1}, {16, 3, 2}};
  AttentionSlot attention_slot = AttentionSlot::None;
  Index num_classes = 10;
  std::array<Index, 3> input_shape{1, 28, 28};  // channels, height, width
  double input_shift = 0.5;  // subtracted from every pixel before the first conv

  double delta = kDefaultNoisePrecision;
  Index mha_group_size = 16;
  double local_gamma = 2.0;
  double local_b = 1.0;
  double fixed_theta1 = 64.0;  // FixedTheta: theta = (1, fixed_theta1, 0, 1)
  double noprior_scale = 1.0;  // NoPrior: sigma^2 = exp(sigma_tilde) * scale

  void validate() const;
};

/// A contiguous slice of the flat parameter vector.
struct ParamBlock {
  std::string name;
  Index offset = 0;
  Index rows = 0;
  Index cols = 0;
  Index size() const { return rows * cols; }
};

struct ConvLayer {
  ParamBlock weight;  // out x (in * k * k)
  ParamBlock bias;
  Index in_channels = 0;
  Index kernel = 3;
  Index stride = 1;
  Index pad = 1;
  Index in_h = 0;
  Index in_w = 0;
  Index out_h = 0;
  Index out_w = 0;
};

/// Convolutions with ReLU, one attention slot after the last activation,
/// global average pooling and a linear classifier. All trainable values live
/// in `params`; the layer records index into it.
struct Model {
  TinyCnnConfig config;
  Vector params;
  std::vector<ConvLayer> convs;
  ParamBlock linear_weight;  // classes x C
  ParamBlock linear_bias;
  std::optional<ParamBlock> theta_tilde;  // GPCA_Full / Local / MHA
  std::optional<ParamBlock> mu;           // NoPrior
  std::optional<ParamBlock> sigma_tilde;  // NoPrior

  Index attention_channels() const { return convs.back().weight.rows; }
  Index spatial() const { return convs.back().out_h * convs.back().out_w; }
  std::vector<ParamBlock> blocks() const;
  /// Kernel parameters seen by a GPCA slot (fixed for FixedTheta).
  KernelParams kernel_params() const;
  bool has_gpca() const;
  bool has_attention() const { return config.attention_slot != AttentionSlot::None; }
};

/// He-normal weights (std sqrt(2 / fan_in)), zero biases, theta_tilde = 0,
/// NoPrior (mu, sigma_tilde) = (0, 0). Deterministic in the seed.
Model build_model(const TinyCnnConfig& config, std::uint64_t seed);

struct SampleResult {
  Vector logits;
  double loss = 0.0;
  Vector mask;  // empty without an attention slot
};

/// Forward pass of one image.
SampleResult forward_sample(const Model& model, const float* image, int label = -1);

struct BatchResult {
  double loss = 0.0;  // mean cross-entropy
  Index correct = 0;
  Vector gradient;    // d loss / d params
};

/// Mean softmax cross-entropy over `indices` and its gradient. Per-sample
/// gradients are reduced by pairwise summation in index order, so the result
/// does not depend on `threads`.
BatchResult loss_and_gradient(const Model& model, const Dataset& data, const std::vector<std::size_t>& indices,
                              int threads = 1);

double batch_loss(const Model& model, const Dataset& data, const std::vector<std::size_t>& indices);

}  // namespace gpca::nn
