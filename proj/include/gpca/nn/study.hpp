#pragma once

#include <functional>
#include <vector>

#include "gpca/nn/train.hpp"

namespace gpca::nn {

/// The synthetic set behind --synthetic and the training acceptance check.
inline constexpr std::uint64_t kSyntheticSeed = 1;
inline constexpr int kSyntheticTrainPerClass = 300;
inline constexpr int kSyntheticTestPerClass = 100;

Split default_synthetic();

struct StudySpec {
  TinyCnnConfig model;  // attention_slot is overridden per run
  SgdConfig sgd;        // seed is overridden per run
  std::vector<AttentionSlot> slots{AttentionSlot::None, AttentionSlot::GPCA_Full};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  int threads = 1;
};

struct StudyRun {
  AttentionSlot slot = AttentionSlot::None;
  std::uint64_t seed = 0;
  TrainReport report;
  Model model;
  double seconds = 0.0;
};

struct SlotSummary {
  AttentionSlot slot = AttentionSlot::None;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation, 0 for a single run
  std::size_t runs = 0;
};

struct StudyResult {
  std::vector<StudyRun> runs;
  std::vector<SlotSummary> summary;

  const SlotSummary& of(AttentionSlot slot) const;
};

/// Trains one model per (slot, seed); model init and shuffling both use the
/// run seed. A DivergenceError from any run propagates.
StudyResult run_study(const StudySpec& spec, const Split& data,
                      const std::function<void(const StudyRun&)>& on_run = {});

}  // namespace gpca::nn
