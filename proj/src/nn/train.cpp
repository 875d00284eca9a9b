#include "gpca/nn/train.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "gpca/parallel.hpp"

namespace gpca::nn {

void SgdConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be finite and nonnegative");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be nonnegative");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(lr_decay_factor > 0.0)) throw ConfigError("lr_decay_factor must be positive");
}

double SgdConfig::rate_at(int epoch) const {
  double lr = learning_rate;
  for (int d : lr_decay_epochs) {
    if (epoch > d) lr *= lr_decay_factor;
  }
  return lr;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::swap(idx[i - 1], idx[rng() % i]);
  }
  return idx;
}

void check_compatible(const Model& model, const Dataset& data) {
  const auto& s = model.config.input_shape;
  if (data.channels != s[0] || data.height != s[1] || data.width != s[2]) {
    throw ConfigError("dataset images are " + std::to_string(data.channels) + "x" + std::to_string(data.height) +
                      "x" + std::to_string(data.width) + " but the model expects " + std::to_string(s[0]) + "x" +
                      std::to_string(s[1]) + "x" + std::to_string(s[2]));
  }
  if (data.num_classes > static_cast<std::uint32_t>(model.config.num_classes)) {
    throw ConfigError("dataset has more classes than the model");
  }
}

double accuracy(const Model& model, const Dataset& data, int threads) {
  if (data.size() == 0) return 0.0;
  std::vector<char> hits(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    Index best = 0;
    forward_sample(model, data.image(i)).logits.maxCoeff(&best);
    hits[i] = best == data.labels[i];
  });
  std::size_t correct = 0;
  for (char h : hits) correct += static_cast<std::size_t>(h);
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainReport train(Model& model, const Dataset& train_set, const Dataset& test_set, const SgdConfig& sgd, int threads,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  sgd.validate();
  check_compatible(model, train_set);
  if (test_set.size() > 0) check_compatible(model, test_set);
  if (train_set.size() == 0) throw DatasetError("training set is empty");

  // Weight decay mask: every block except the attention parameters.
  Vector decay = Vector::Zero(model.params.size());
  for (const ParamBlock& b : model.blocks()) {
    if (b.name.rfind("attention.", 0) != 0) decay.segment(b.offset, b.size()).setOnes();
  }
  Vector velocity = Vector::Zero(model.params.size());
  TrainReport report;
  for (int epoch = 1; epoch <= sgd.epochs; ++epoch) {
    const double lr = sgd.rate_at(epoch);
    const auto order = shuffled_indices(train_set.size(), sgd.seed * 1000003ULL + static_cast<std::uint64_t>(epoch));
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(sgd.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(sgd.batch_size));
      const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(end));
      const BatchResult r = loss_and_gradient(model, train_set, batch, threads);
      if (!std::isfinite(r.loss) || !r.gradient.allFinite()) {
        throw DivergenceError(epoch, "training diverged in epoch " + std::to_string(epoch));
      }
      loss_sum += r.loss * static_cast<double>(batch.size());
      correct += static_cast<std::size_t>(r.correct);
      const Vector step = r.gradient + sgd.weight_decay * decay.cwiseProduct(model.params);
      velocity = sgd.momentum * velocity + step;
      model.params -= lr * velocity;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(train_set.size());
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(train_set.size());
    rec.test_acc = accuracy(model, test_set, threads);
    report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return report;
}

double MaskStatistics::dispersion() const {
  if (mean.size() == 0) return 0.0;
  const double m = mean.mean();
  return std::sqrt((mean.array() - m).square().mean());
}

MaskStatistics mask_statistics(const Model& model, const Dataset& data, int bins, int threads) {
  if (!model.has_attention()) throw ConfigError("mask statistics need an active attention slot");
  if (bins < 1) throw ConfigError("histogram needs at least one bin");
  check_compatible(model, data);
  const Index c = model.attention_channels();
  std::vector<Vector> masks(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) { masks[i] = forward_sample(model, data.image(i)).mask; });

  MaskStatistics s;
  s.samples = data.size();
  s.mean = Vector::Zero(c);
  s.stddev = Vector::Zero(c);
  s.class_means = Matrix::Zero(model.config.num_classes, c);
  s.class_counts.assign(static_cast<std::size_t>(model.config.num_classes), 0);
  s.histogram.assign(static_cast<std::size_t>(bins), 0.0);
  const double weight = 1.0 / static_cast<double>(c);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Vector& v = masks[i];
    s.mean += v;
    s.class_means.row(data.labels[i]) += v.transpose();
    ++s.class_counts[data.labels[i]];
    for (Index k = 0; k < c; ++k) {
      const auto bin = std::min<std::size_t>(static_cast<std::size_t>(v[k] * bins), static_cast<std::size_t>(bins - 1));
      s.histogram[bin] += weight;
    }
  }
  if (data.size() == 0) return s;
  s.mean /= static_cast<double>(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    s.stddev += (masks[i] - s.mean).cwiseAbs2();
  }
  s.stddev = (s.stddev / static_cast<double>(data.size())).cwiseSqrt();
  for (Index k = 0; k < s.class_means.rows(); ++k) {
    const auto n = s.class_counts[static_cast<std::size_t>(k)];
    if (n > 0) s.class_means.row(k) /= static_cast<double>(n);
  }
  return s;
}

}  // namespace gpca::nn
