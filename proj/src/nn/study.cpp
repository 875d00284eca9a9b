#include "gpca/nn/study.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace gpca::nn {

Split default_synthetic() {
  return make_synthetic(kSyntheticSeed, kSyntheticTrainPerClass, kSyntheticTestPerClass);
}

const SlotSummary& StudyResult::of(AttentionSlot slot) const {
  for (const SlotSummary& s : summary) {
    if (s.slot == slot) return s;
  }
  throw std::out_of_range("no runs for slot " + to_string(slot));
}

StudyResult run_study(const StudySpec& spec, const Split& data, const std::function<void(const StudyRun&)>& on_run) {
  if (spec.slots.empty() || spec.seeds.empty()) throw ConfigError("study needs at least one slot and one seed");
  StudyResult result;
  for (AttentionSlot slot : spec.slots) {
    std::vector<double> acc;
    for (std::uint64_t seed : spec.seeds) {
      TinyCnnConfig config = spec.model;
      config.attention_slot = slot;
      SgdConfig sgd = spec.sgd;
      sgd.seed = seed;
      StudyRun run;
      run.slot = slot;
      run.seed = seed;
      run.model = build_model(config, seed);
      const auto t0 = std::chrono::steady_clock::now();
      run.report = train(run.model, data.train, data.test, sgd, spec.threads);
      run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      acc.push_back(run.report.final_test_acc());
      if (on_run) on_run(run);
      result.runs.push_back(std::move(run));
    }
    SlotSummary s;
    s.slot = slot;
    s.runs = acc.size();
    for (double a : acc) s.mean += a;
    s.mean /= static_cast<double>(acc.size());
    if (acc.size() > 1) {
      double ss = 0.0;
      for (double a : acc) ss += (a - s.mean) * (a - s.mean);
      s.stddev = std::sqrt(ss / static_cast<double>(acc.size() - 1));
    }
    result.summary.push_back(s);
  }
  return result;
}

}  // namespace gpca::nn
