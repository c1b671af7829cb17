#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace ces::checks {

struct Context {
  std::filesystem::path work_dir = "ces_checks";  // cached desk dataset and trained surrogate
  int workers = 0;
};

struct Outcome {
  bool passed = false;
  std::string detail;
};

struct Criterion {
  int id = 0;
  std::string name;
  double budget_s = 0.0;
  bool heavy = false;  // needs collection and training
  std::function<Outcome(const Context&)> run;
};

const std::vector<Criterion>& criteria();

struct Result {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
  double budget_s = 0.0;
};

/// Runs one criterion; exceptions and budget overruns count as failures.
Result run(const Criterion& criterion, const Context& context);
std::string format(const Result& result);

}  // namespace ces::checks
