#include <array>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gpca/beta_approx.hpp"
#include "gpca/bench.hpp"
#include "gpca/nn/serialize.hpp"
#include "gpca/nn/study.hpp"
#include "gpca/verify.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;
using namespace gpca;

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// --- logging --------------------------------------------------------------------

enum class Level { error, warn, info, debug };
Level g_level = Level::info;

void log(Level level, const std::string& msg) {
  static const char* names[] = {"error", "warn", "info", "debug"};
  if (level <= g_level) std::cerr << "[" << names[static_cast<int>(level)] << "] " << msg << '\n';
}

void init_logging() {
  const char* env = std::getenv("GPCA_LOG");
  if (!env) return;
  const std::string v = env;
  if (v == "error") g_level = Level::error;
  else if (v == "warn") g_level = Level::warn;
  else if (v == "info") g_level = Level::info;
  else if (v == "debug") g_level = Level::debug;
  else log(Level::warn, "ignoring GPCA_LOG=" + v + " (expected error, warn, info or debug)");
}

// --- output helpers -------------------------------------------------------------

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

class Csv {
 public:
  explicit Csv(const std::vector<std::string>& header) { row(header); }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) text_ << (i ? "," : "") << cells[i];
    text_ << '\n';
  }

  void save(const fs::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text_.str();
    log(Level::debug, "wrote " + path.string());
  }

 private:
  std::ostringstream text_;
};

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "gpca_out";
  int threads = 1;
  bool synthetic = false;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "global seed (overrides the config)");
  sub->add_option("--out", c.out, "output directory")->capture_default_str();
  sub->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber)->capture_default_str();
}

json load_config(const Common& c, const std::set<std::string>& allowed) {
  if (c.config.empty()) return json::object();
  std::ifstream in(c.config);
  if (!in) throw UsageError("cannot open config " + c.config);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError(c.config + ": " + e.what());
  }
  if (!j.is_object()) throw UsageError(c.config + ": top level must be an object");
  for (const auto& item : j.items()) {
    if (item.key() != "seed" && !allowed.count(item.key())) {
      throw UsageError(c.config + ": unknown key '" + item.key() + "'");
    }
  }
  return j;
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw UsageError(std::string("bad value for '") + key + "'");
  }
}

std::uint64_t resolve_seed(const Common& c, const json& cfg) {
  return c.seed ? *c.seed : get_or<std::uint64_t>(cfg, "seed", 0);
}

fs::path prepare_out(const Common& c, json resolved, const std::string& command) {
  const fs::path dir(c.out);
  fs::create_directories(dir);
  resolved["command"] = command;
  resolved["threads"] = c.threads;
  std::ofstream f(dir / "resolved_config.json");
  if (!f) throw std::runtime_error("cannot write " + (dir / "resolved_config.json").string());
  f << resolved.dump(2) << '\n';
  return dir;
}

// --- approx-study ---------------------------------------------------------------

int cmd_approx_study(const Common& c) {
  const json cfg = load_config(c, {"grid", "abs_tol", "concrete_temperature"});
  std::vector<std::array<double, 2>> grid;
  if (cfg.contains("grid")) {
    grid = get_or<std::vector<std::array<double, 2>>>(cfg, "grid", {});
  } else {
    for (double a : {0.5, 1.0, 2.0, 5.0}) {
      for (double b : {0.5, 1.0, 2.0, 5.0}) grid.push_back({a, b});
    }
  }
  if (grid.empty()) throw UsageError("approx-study: the (alpha, beta) grid is empty");
  const double abs_tol = get_or(cfg, "abs_tol", 1e-8);
  const double temperature = get_or(cfg, "concrete_temperature", 1.0);
  for (const auto& g : grid) beta::validate(beta::BetaSpec{g[0], g[1]});

  const fs::path dir = prepare_out(c,
                                   {{"seed", resolve_seed(c, cfg)},
                                    {"grid", grid},
                                    {"abs_tol", abs_tol},
                                    {"concrete_temperature", temperature}},
                                   "approx-study");
  Csv lng({"alpha", "beta", "approximation", "kl", "leaked_mass", "is_min"});
  Csv wide({"alpha", "beta", "kl_sigmoid_gaussian", "kl_gaussian", "kl_laplace", "kl_concrete",
            "leaked_mass_gaussian", "leaked_mass_laplace", "sigmoid_gaussian_is_best"});
  std::vector<std::string> failures;
  for (const auto& g : grid) {
    log(Level::debug, "approx-study (" + num(g[0]) + ", " + num(g[1]) + ")");
    const beta::ComparisonRow r = beta::compare_approximations({g[0], g[1]}, abs_tol, temperature);
    const bool best = r.sigmoid_gaussian_is_best();
    double lowest = std::min({r.kl_sigmoid_gaussian, r.kl_gaussian, r.kl_concrete});
    if (r.laplace_defined()) lowest = std::min(lowest, r.kl_laplace);
    const std::string a = num(g[0]);
    const std::string b = num(g[1]);
    auto add = [&](const char* kind, double kl, double leaked) {
      lng.row({a, b, kind, num(kl), num(leaked), std::isnan(kl) ? "nan" : (kl == lowest ? "1" : "0")});
    };
    add("sigmoid_gaussian", r.kl_sigmoid_gaussian, 0.0);
    add("gaussian", r.kl_gaussian, r.leaked_mass_gaussian);
    add("laplace", r.kl_laplace, r.leaked_mass_laplace);
    add("concrete", r.kl_concrete, 0.0);
    wide.row({a, b, num(r.kl_sigmoid_gaussian), num(r.kl_gaussian), num(r.kl_laplace), num(r.kl_concrete),
              num(r.leaked_mass_gaussian), num(r.leaked_mass_laplace), best ? "1" : "0"});
    if (!best) {
      failures.push_back("(" + a + ", " + b + "): sigmoid-gaussian KL " + num(r.kl_sigmoid_gaussian) +
                         " exceeds the row minimum " + num(lowest));
    }
  }
  lng.save(dir / "approx_study.csv");
  wide.save(dir / "approx_study_wide.csv");
  for (const std::string& f : failures) log(Level::error, "ordering fails at " + f);
  std::cout << grid.size() - failures.size() << "/" << grid.size() << " grid points with the sigmoid-gaussian KL minimal\n";
  return failures.empty() ? 0 : 1;
}

// --- bench ----------------------------------------------------------------------

int cmd_bench(const Common& c) {
  const json cfg = load_config(c, {"channels", "spatial", "repetitions", "warmups", "variants", "mha_group_size",
                                   "local_gamma", "local_b"});
  bench::ScalingSpec spec;
  spec.seed = resolve_seed(c, cfg);
  spec.threads = c.threads;
  spec.channels = get_or(cfg, "channels", spec.channels);
  spec.spatial = get_or(cfg, "spatial", spec.spatial);
  spec.repetitions = get_or(cfg, "repetitions", spec.repetitions);
  spec.warmups = get_or(cfg, "warmups", spec.warmups);
  const auto names = get_or<std::vector<std::string>>(cfg, "variants", {"Full", "Local", "MHA"});
  VariantSpec base;
  base.group_size = get_or(cfg, "mha_group_size", base.group_size);
  base.gamma = get_or(cfg, "local_gamma", base.gamma);
  base.b = get_or(cfg, "local_b", base.b);
  spec.variants.clear();
  for (const std::string& n : names) {
    VariantSpec v = base;
    if (n == "Full") v.kind = Variant::Full;
    else if (n == "Local") v.kind = Variant::Local;
    else if (n == "MHA") v.kind = Variant::MHA;
    else throw UsageError("unknown variant '" + n + "' (expected Full, Local or MHA)");
    spec.variants.push_back(v);
  }
  spec.validate();
  const fs::path dir = prepare_out(c,
                                   {{"seed", spec.seed},
                                    {"channels", spec.channels},
                                    {"spatial", spec.spatial},
                                    {"repetitions", spec.repetitions},
                                    {"warmups", spec.warmups},
                                    {"variants", names},
                                    {"mha_group_size", base.group_size},
                                    {"local_gamma", base.gamma},
                                    {"local_b", base.b}},
                                   "bench");
  const bench::ScalingResult r = bench::run_scaling(spec);
  Csv csv({"channels", "variant", "median_ns", "fitted_slope"});
  for (const bench::Timing& t : r.rows) {
    csv.row({std::to_string(t.channels), t.variant, num(t.median_ns), num(r.slope(t.variant))});
  }
  csv.save(dir / "bench.csv");
  for (const bench::VariantSlope& s : r.slopes) {
    std::cout << s.variant << " slope " << std::fixed << std::setprecision(3) << s.slope << '\n';
  }
  return 0;
}

// --- datasets -------------------------------------------------------------------

nn::Dataset read_existing(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("dataset file not found: " + path);
  return nn::read_dataset(path);
}

struct DataChoice {
  bool synthetic = false;
  std::string train;
  std::string test;
};

DataChoice resolve_data(const Common& c, const json& cfg, bool need_train) {
  DataChoice d;
  const json ds = cfg.value("dataset", json::object());
  if (!ds.is_object()) throw UsageError("'dataset' must be an object");
  for (const auto& item : ds.items()) {
    if (item.key() != "train" && item.key() != "test" && item.key() != "synthetic") {
      throw UsageError("dataset: unknown key '" + item.key() + "'");
    }
  }
  d.synthetic = c.synthetic || get_or(ds, "synthetic", false);
  d.train = get_or<std::string>(ds, "train", "");
  d.test = get_or<std::string>(ds, "test", "");
  if (!d.synthetic) {
    if (need_train && d.train.empty()) throw UsageError("no dataset: pass --synthetic or set dataset.train");
    if (!need_train && d.test.empty()) throw UsageError("no dataset: pass --synthetic or set dataset.test");
  }
  return d;
}

json data_json(const DataChoice& d) {
  if (d.synthetic) {
    return {{"synthetic", true},
            {"synthetic_seed", nn::kSyntheticSeed},
            {"train_per_class", nn::kSyntheticTrainPerClass},
            {"test_per_class", nn::kSyntheticTestPerClass}};
  }
  return {{"train", d.train}, {"test", d.test}};
}

nn::Split load_split(const DataChoice& d) {
  if (d.synthetic) return nn::default_synthetic();
  nn::Split s;
  if (!d.train.empty()) s.train = read_existing(d.train);
  if (!d.test.empty()) s.test = read_existing(d.test);
  return s;
}

// --- masks ----------------------------------------------------------------------

void write_mask_stats(const nn::MaskStatistics& s, const fs::path& table, const fs::path& hist) {
  std::vector<std::string> header{"channel", "mean", "stddev"};
  for (Index k = 0; k < s.class_means.rows(); ++k) header.push_back("class_" + std::to_string(k) + "_mean");
  Csv t(header);
  for (Index c = 0; c < s.mean.size(); ++c) {
    std::vector<std::string> row{std::to_string(c), num(s.mean[c]), num(s.stddev[c])};
    for (Index k = 0; k < s.class_means.rows(); ++k) {
      row.push_back(s.class_counts[static_cast<std::size_t>(k)] ? num(s.class_means(k, c)) : "nan");
    }
    t.row(row);
  }
  t.save(table);
  Csv h({"bin_lower", "bin_upper", "mass"});
  const double bins = static_cast<double>(s.histogram.size());
  for (std::size_t i = 0; i < s.histogram.size(); ++i) {
    h.row({num(static_cast<double>(i) / bins), num(static_cast<double>(i + 1) / bins), num(s.histogram[i])});
  }
  h.save(hist);
}

int cmd_masks(const Common& c, const std::string& model_flag) {
  const json cfg = load_config(c, {"model", "dataset", "bins"});
  const std::string model_path = model_flag.empty() ? get_or<std::string>(cfg, "model", "") : model_flag;
  if (model_path.empty()) throw UsageError("masks: no model file (pass --model or set 'model')");
  if (!fs::exists(model_path)) throw UsageError("model file not found: " + model_path);
  const int bins = get_or(cfg, "bins", 20);
  const DataChoice d = resolve_data(c, cfg, false);
  const nn::Model model = nn::load_model(model_path);
  if (!model.has_attention()) throw UsageError("masks: the model has no attention slot");
  const fs::path dir = prepare_out(
      c, {{"seed", resolve_seed(c, cfg)}, {"model", model_path}, {"dataset", data_json(d)}, {"bins", bins}}, "masks");
  const nn::Split split = load_split(d);
  const nn::MaskStatistics s = nn::mask_statistics(model, split.test, bins, c.threads);
  write_mask_stats(s, dir / "masks.csv", dir / "mask_hist.csv");
  std::cout << "samples " << s.samples << ", mask dispersion " << num(s.dispersion()) << '\n';
  return 0;
}

// --- train ----------------------------------------------------------------------

int cmd_train(const Common& c) {
  const json cfg = load_config(c, {"repeats", "slots", "model", "sgd", "dataset", "mask_bins"});
  nn::StudySpec spec;
  spec.threads = c.threads;
  spec.model = nn::config_from_json(cfg.value("model", json::object()));
  spec.sgd = nn::sgd_from_json(cfg.value("sgd", json::object()));
  const auto slot_names = get_or<std::vector<std::string>>(cfg, "slots", {"None", "GPCA_Full"});
  if (slot_names.empty()) throw UsageError("train: 'slots' is empty");
  spec.slots.clear();
  for (const std::string& n : slot_names) spec.slots.push_back(nn::parse_slot(n));
  const int repeats = get_or(cfg, "repeats", 3);
  if (repeats < 1) throw UsageError("train: 'repeats' must be at least 1");
  const std::uint64_t seed = resolve_seed(c, cfg);
  spec.seeds.clear();
  for (int i = 0; i < repeats; ++i) spec.seeds.push_back(seed + static_cast<std::uint64_t>(i));
  const int bins = get_or(cfg, "mask_bins", 20);
  if (bins < 1) throw UsageError("train: 'mask_bins' must be positive");
  const DataChoice d = resolve_data(c, cfg, true);
  const nn::Split split = load_split(d);
  if (!d.synthetic && d.test.empty()) log(Level::warn, "no test set given; test accuracy is reported as 0");

  const fs::path dir = prepare_out(c,
                                   {{"seed", seed},
                                    {"repeats", repeats},
                                    {"slots", slot_names},
                                    {"model", nn::config_to_json(spec.model)},
                                    {"sgd", nn::sgd_to_json(spec.sgd)},
                                    {"dataset", data_json(d)},
                                    {"mask_bins", bins}},
                                   "train");
  std::vector<double> dispersion_sum(spec.slots.size(), 0.0);
  std::size_t slot_index = 0;
  std::size_t done = 0;
  auto on_run = [&](const nn::StudyRun& run) {
    const std::string tag = nn::to_string(run.slot) + "_seed" + std::to_string(run.seed);
    Csv epochs({"epoch", "lr", "train_loss", "train_acc", "test_acc"});
    for (const nn::EpochRecord& e : run.report.epochs) {
      epochs.row({std::to_string(e.epoch), num(e.lr), num(e.train_loss), num(e.train_acc), num(e.test_acc)});
    }
    epochs.save(dir / ("train_" + tag + ".csv"));
    nn::save_model(run.model, (dir / ("model_" + tag + ".json")).string());
    if (run.model.has_attention() && split.test.size() > 0) {
      const nn::MaskStatistics s = nn::mask_statistics(run.model, split.test, bins, c.threads);
      write_mask_stats(s, dir / ("masks_" + tag + ".csv"), dir / ("mask_hist_" + tag + ".csv"));
      dispersion_sum[slot_index] += s.dispersion();
    }
    std::ostringstream msg;
    msg << tag << ": test accuracy " << std::fixed << std::setprecision(4) << run.report.final_test_acc() << " ("
        << std::setprecision(1) << run.seconds << " s)";
    log(Level::info, msg.str());
    if (++done % spec.seeds.size() == 0) ++slot_index;
  };
  nn::StudyResult result;
  try {
    result = nn::run_study(spec, split, on_run);
  } catch (const nn::DivergenceError& e) {
    log(Level::error, e.what());
    return 1;
  }
  Csv summary({"slot", "runs", "mean_test_acc", "std_test_acc", "mean_mask_dispersion"});
  for (std::size_t i = 0; i < result.summary.size(); ++i) {
    const nn::SlotSummary& s = result.summary[i];
    const bool masks = s.slot != nn::AttentionSlot::None && split.test.size() > 0;
    summary.row({nn::to_string(s.slot), std::to_string(s.runs), num(s.mean), num(s.stddev),
                 masks ? num(dispersion_sum[i] / static_cast<double>(s.runs)) : "nan"});
    std::cout << std::left << std::setw(16) << nn::to_string(s.slot) << std::fixed << std::setprecision(4) << s.mean
              << " +- " << s.stddev << '\n';
  }
  summary.save(dir / "summary.csv");
  return 0;
}

// --- verify ---------------------------------------------------------------------

int cmd_verify(const Common& c, bool list, const std::vector<std::string>& only, std::optional<double> lambda) {
  if (list) {
    for (const verify::Property& p : verify::properties()) std::cout << p.name << "  " << p.summary << '\n';
    return 0;
  }
  verify::Options opt;
  opt.threads = c.threads;
  if (lambda) opt.lambda = *lambda;
  std::vector<std::string> names = only;
  if (names.empty()) {
    for (const verify::Property& p : verify::properties()) names.push_back(p.name);
  }
  int failed = 0;
  for (const std::string& n : names) {
    const verify::Result r = verify::run(n, opt);
    failed += r.passed ? 0 : 1;
    std::cout << (r.passed ? "PASS " : "FAIL ") << std::left << std::setw(32) << r.name << std::right << std::fixed
              << std::setprecision(2) << std::setw(7) << r.seconds << " s  " << r.detail << std::endl;
  }
  std::cout << (failed ? "verify: " + std::to_string(failed) + " of " + std::to_string(names.size()) + " failed"
                       : "verify: all " + std::to_string(names.size()) + " properties passed")
            << '\n';
  return failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  init_logging();
  CLI::App app{"Gaussian-process channel attention toolkit"};
  app.require_subcommand(1);
  Common common;

  auto* approx = app.add_subcommand("approx-study", "KL divergence of beta approximations over an (alpha, beta) grid");
  add_common(approx, common);

  auto* bench = app.add_subcommand("bench", "attention forward time against channel count");
  add_common(bench, common);

  auto* train = app.add_subcommand("train", "train the tiny CNN for each slot and seed");
  add_common(train, common);
  train->add_flag("--synthetic", common.synthetic, "use the built-in synthetic dataset");

  std::string model_path;
  auto* masks = app.add_subcommand("masks", "attention mask statistics of a trained model");
  add_common(masks, common);
  masks->add_flag("--synthetic", common.synthetic, "use the built-in synthetic dataset");
  masks->add_option("--model", model_path, "model file written by train");

  bool list = false;
  std::vector<std::string> only;
  std::optional<double> lambda;
  auto* ver = app.add_subcommand("verify", "run the property suite");
  add_common(ver, common);
  ver->add_flag("--list", list, "print property names and exit");
  ver->add_option("--property", only, "run only the named properties");
  ver->add_option("--perturb-lambda", lambda)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*approx) return cmd_approx_study(common);
    if (*bench) return cmd_bench(common);
    if (*train) return cmd_train(common);
    if (*masks) return cmd_masks(common, model_path);
    if (*ver) return cmd_verify(common, list, only, lambda);
  } catch (const std::logic_error& e) {
    log(Level::error, e.what());
    return 2;
  } catch (const json::exception& e) {
    log(Level::error, e.what());
    return 2;
  } catch (const std::exception& e) {
    log(Level::error, e.what());
    return 1;
  }
  return 2;
}
