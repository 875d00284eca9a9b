#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "json.hpp"

#include "gpca/nn/dataset.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gpca_cli_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Run run_cli(const std::string& args, const std::string& env = "") {
  const fs::path dir = scratch("io");
  const std::string cmd = env + " '" + GPCA_CLI + "' " + args + " > '" + (dir / "o").string() + "' 2> '" +
                          (dir / "e").string() + "'";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(dir / "o");
  r.err = slurp(dir / "e");
  return r;
}

void write_json(const fs::path& p, const json& j) { std::ofstream(p) << j.dump(); }

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream s(text);
  for (std::string l; std::getline(s, l);) out.push_back(l);
  return out;
}

gpca::nn::Dataset tiny_images(std::size_t n, std::uint64_t seed) {
  gpca::nn::Dataset d;
  d.channels = 1;
  d.height = 8;
  d.width = 8;
  d.num_classes = 3;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (std::size_t i = 0; i < n; ++i) {
    for (int p = 0; p < 64; ++p) d.pixels.push_back(u(rng));
    d.labels.push_back(static_cast<std::uint16_t>(i % 3));
  }
  return d;
}

json tiny_train_config(const fs::path& train, const fs::path& test) {
  return {{"slots", {"None", "GPCA_Full"}},
          {"repeats", 1},
          {"model",
           {{"conv_layers", {{{"out_channels", 4}, {"kernel_size", 3}, {"stride", 1}},
                             {{"out_channels", 6}, {"kernel_size", 3}, {"stride", 2}}}},
            {"input_shape", {1, 8, 8}},
            {"num_classes", 3}}},
          {"sgd", {{"epochs", 2}, {"batch_size", 4}, {"lr_decay_epochs", {1}}}},
          {"dataset", {{"train", train.string()}, {"test", test.string()}}}};
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run_cli("").code == 2);
  CHECK(run_cli("frobnicate").code == 2);
  CHECK(run_cli("verify --threads 0").code == 2);
  CHECK(run_cli("verify --property no_such_property").code == 2);
  CHECK(run_cli("--help").code == 0);
}

TEST_CASE("verify lists properties without running them") {
  const Run r = run_cli("verify --list");
  CHECK(r.code == 0);
  CHECK(lines(r.out).size() == 12);
  CHECK(r.out.find("mask_expectation_grid") != std::string::npos);
  CHECK(r.out.find("PASS") == std::string::npos);
}

TEST_CASE("verify passes selected properties and catches a perturbed lambda") {
  const Run ok = run_cli("verify --property mask_expectation_grid --property variant_degeneration");
  CHECK(ok.code == 0);
  CHECK(lines(ok.out).size() == 3);
  CHECK(ok.out.find("PASS mask_expectation_grid") != std::string::npos);
  const Run bad = run_cli("verify --property mask_expectation_grid --perturb-lambda 1.2");
  CHECK(bad.code == 1);
  CHECK(bad.out.find("FAIL mask_expectation_grid") != std::string::npos);
}

TEST_CASE("approx-study writes long and wide tables") {
  const fs::path dir = scratch("approx");
  write_json(dir / "c.json", {{"grid", {{2, 2}}}});
  const Run r = run_cli("approx-study --config '" + (dir / "c.json").string() + "' --out '" + (dir / "o").string() + "'");
  CHECK(r.code == 0);
  const auto rows = lines(slurp(dir / "o" / "approx_study.csv"));
  REQUIRE(rows.size() == 5);
  CHECK(rows[0] == "alpha,beta,approximation,kl,leaked_mass,is_min");
  CHECK(rows[1].rfind("2,2,sigmoid_gaussian,", 0) == 0);
  CHECK(rows[1].substr(rows[1].size() - 2) == ",1");
  // full precision: 0.0035553585398883677 has 17 significant digits
  CHECK(rows[1].find("0.00355535853988") != std::string::npos);
  CHECK(lines(slurp(dir / "o" / "approx_study_wide.csv")).size() == 2);
  const json resolved = json::parse(slurp(dir / "o" / "resolved_config.json"));
  CHECK(resolved["command"] == "approx-study");
  CHECK(resolved["abs_tol"] == 1e-8);
}

TEST_CASE("approx-study on the uniform target") {
  const fs::path dir = scratch("approx_uniform");
  write_json(dir / "c.json", {{"grid", {{1, 1}}}});
  const Run r = run_cli("approx-study --config '" + (dir / "c.json").string() + "' --out '" + (dir / "o").string() + "'");
  // The concrete approximation is the uniform density itself here, so the
  // ordering property fails and the point is named.
  CHECK(r.code == 1);
  CHECK(r.err.find("(1, 1)") != std::string::npos);
  for (const std::string& row : lines(slurp(dir / "o" / "approx_study.csv"))) {
    if (row.rfind("alpha", 0) == 0 || row.find("laplace") != std::string::npos) continue;
    std::vector<std::string> cells;
    std::istringstream s(row);
    for (std::string c; std::getline(s, c, ',');) cells.push_back(c);
    CHECK(std::stod(cells[3]) >= 0.0);
  }
}

TEST_CASE("approx-study config errors") {
  const fs::path dir = scratch("approx_bad");
  write_json(dir / "empty.json", {{"grid", json::array()}});
  CHECK(run_cli("approx-study --config '" + (dir / "empty.json").string() + "' --out '" + dir.string() + "'").code == 2);
  write_json(dir / "unknown.json", {{"gird", {{2, 2}}}});
  const Run r = run_cli("approx-study --config '" + (dir / "unknown.json").string() + "' --out '" + dir.string() + "'");
  CHECK(r.code == 2);
  CHECK(r.err.find("gird") != std::string::npos);
  write_json(dir / "neg.json", {{"grid", {{-1, 2}}}});
  CHECK(run_cli("approx-study --config '" + (dir / "neg.json").string() + "' --out '" + dir.string() + "'").code == 2);
  CHECK(run_cli("approx-study --config '" + (dir / "missing.json").string() + "'").code == 2);
}

TEST_CASE("bench writes one row per variant and channel count") {
  const fs::path dir = scratch("bench");
  write_json(dir / "c.json", {{"channels", {4, 8, 16}}, {"spatial", 3}, {"variants", {"Full", "MHA"}},
                              {"mha_group_size", 4}});
  const Run r = run_cli("bench --config '" + (dir / "c.json").string() + "' --out '" + (dir / "o").string() + "'");
  CHECK(r.code == 0);
  const auto rows = lines(slurp(dir / "o" / "bench.csv"));
  REQUIRE(rows.size() == 7);
  CHECK(rows[0] == "channels,variant,median_ns,fitted_slope");
  CHECK(rows[1].rfind("4,Full,", 0) == 0);
  write_json(dir / "two.json", {{"channels", {4, 8}}});
  CHECK(run_cli("bench --config '" + (dir / "two.json").string() + "' --out '" + dir.string() + "'").code == 2);
  write_json(dir / "var.json", {{"variants", {"Diagonal"}}});
  CHECK(run_cli("bench --config '" + (dir / "var.json").string() + "' --out '" + dir.string() + "'").code == 2);
}

TEST_CASE("train needs a dataset") {
  const fs::path dir = scratch("train_missing");
  CHECK(run_cli("train --out '" + dir.string() + "'").code == 2);
  write_json(dir / "c.json", {{"dataset", {{"train", "/nonexistent/train.bin"}}}});
  const Run r = run_cli("train --config '" + (dir / "c.json").string() + "' --out '" + dir.string() + "'");
  CHECK(r.code == 2);
  CHECK(r.err.find("/nonexistent/train.bin") != std::string::npos);
}

TEST_CASE("train is deterministic and writes every artifact") {
  const fs::path dir = scratch("train");
  gpca::nn::write_dataset(tiny_images(24, 1), (dir / "train.bin").string());
  gpca::nn::write_dataset(tiny_images(9, 2), (dir / "test.bin").string());
  write_json(dir / "c.json", tiny_train_config(dir / "train.bin", dir / "test.bin"));
  const std::string base = "train --config '" + (dir / "c.json").string() + "' --seed 7 --out '";
  REQUIRE(run_cli(base + (dir / "a").string() + "'").code == 0);
  REQUIRE(run_cli(base + (dir / "b").string() + "' --threads 3").code == 0);
  for (const char* f : {"summary.csv", "train_None_seed7.csv", "train_GPCA_Full_seed7.csv", "masks_GPCA_Full_seed7.csv",
                        "mask_hist_GPCA_Full_seed7.csv", "model_GPCA_Full_seed7.json"}) {
    INFO(f);
    REQUIRE(fs::exists(dir / "a" / f));
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  }
  CHECK_FALSE(fs::exists(dir / "a" / "masks_None_seed7.csv"));
  const auto epochs = lines(slurp(dir / "a" / "train_None_seed7.csv"));
  REQUIRE(epochs.size() == 3);
  CHECK(epochs[0] == "epoch,lr,train_loss,train_acc,test_acc");
  const auto summary = lines(slurp(dir / "a" / "summary.csv"));
  REQUIRE(summary.size() == 3);
  CHECK(summary[0] == "slot,runs,mean_test_acc,std_test_acc,mean_mask_dispersion");
  CHECK(summary[1].rfind("None,1,", 0) == 0);
  const auto masks = lines(slurp(dir / "a" / "masks_GPCA_Full_seed7.csv"));
  CHECK(masks.size() == 7);  // header + 6 channels

  // the saved model feeds the masks command
  const fs::path mdir = dir / "m";
  write_json(dir / "m.json", {{"dataset", {{"test", (dir / "test.bin").string()}}}});
  const Run m = run_cli("masks --config '" + (dir / "m.json").string() + "' --model '" +
                     (dir / "a" / "model_GPCA_Full_seed7.json").string() + "' --out '" + mdir.string() + "'");
  CHECK(m.code == 0);
  CHECK(slurp(mdir / "masks.csv") == slurp(dir / "a" / "masks_GPCA_Full_seed7.csv"));
  const Run none = run_cli("masks --config '" + (dir / "m.json").string() + "' --model '" +
                        (dir / "a" / "model_None_seed7.json").string() + "' --out '" + mdir.string() + "'");
  CHECK(none.code == 2);
}

TEST_CASE("train reports divergence with exit 1") {
  const fs::path dir = scratch("train_diverge");
  gpca::nn::write_dataset(tiny_images(24, 1), (dir / "train.bin").string());
  json c = tiny_train_config(dir / "train.bin", dir / "train.bin");
  c["slots"] = {"None"};
  c["sgd"]["learning_rate"] = 1e200;
  write_json(dir / "c.json", c);
  const Run r = run_cli("train --config '" + (dir / "c.json").string() + "' --out '" + dir.string() + "'");
  CHECK(r.code == 1);
  CHECK(r.err.find("epoch 1") != std::string::npos);
}

TEST_CASE("unknown log level only warns") {
  const Run r = run_cli("verify --list", "GPCA_LOG=chatty");
  CHECK(r.code == 0);
  CHECK(r.err.find("GPCA_LOG") != std::string::npos);
}
