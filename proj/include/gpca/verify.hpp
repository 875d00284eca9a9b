#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gpca/gp_attention.hpp"

namespace gpca::verify {

struct Options {
  /// Slope used by the mask closed form. Anything but the probit value is a
  /// deliberate mutation and should make the accuracy-grid property fail.
  double lambda = kProbitLambda;
  int threads = 1;
};

struct Result {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct Property {
  std::string name;
  std::string summary;
  std::function<Result(const Options&)> run;
};

/// The full suite in a fixed order.
const std::vector<Property>& properties();

/// Throws std::out_of_range for an unknown name.
Result run(const std::string& name, const Options& options = {});

std::vector<Result> run_all(const Options& options = {});

}  // namespace gpca::verify
