#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include "gpca/nn/model.hpp"

namespace gpca::nn {

struct SgdConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int epochs = 10;
  int batch_size = 16;
  std::vector<int> lr_decay_epochs{7};
  double lr_decay_factor = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
  /// Rate used during 1-based `epoch`: decayed once per listed epoch already completed.
  double rate_at(int epoch) const;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int epoch, const std::string& what) : std::runtime_error(what), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  double final_test_acc() const { return epochs.empty() ? 0.0 : epochs.back().test_acc; }
};

/// Fisher-Yates permutation of [0, n) from a 64-bit Mersenne Twister.
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed);

/// SGD with momentum (v <- m v + g + wd w; w <- w - lr v). Weight decay
/// touches convolution and classifier parameters only, never the attention
/// parameters. Throws DivergenceError on a non-finite loss.
TrainReport train(Model& model, const Dataset& train_set, const Dataset& test_set, const SgdConfig& sgd,
                  int threads = 1, const std::function<void(const EpochRecord&)>& on_epoch = {});

double accuracy(const Model& model, const Dataset& data, int threads = 1);

struct MaskStatistics {
  Vector mean;           // per channel over all samples
  Vector stddev;         // per channel
  Matrix class_means;    // classes x channels
  std::vector<std::size_t> class_counts;
  /// Equal bins on [0, 1]; each mask value adds 1 / channels, so the total
  /// mass equals the sample count.
  std::vector<double> histogram;
  std::size_t samples = 0;
  /// Spread of the channel means: stddev over channels of `mean`.
  double dispersion() const;
};

MaskStatistics mask_statistics(const Model& model, const Dataset& data, int bins = 20, int threads = 1);

/// Throws ConfigError when the dataset does not fit the model input.
void check_compatible(const Model& model, const Dataset& data);

}  // namespace gpca::nn
