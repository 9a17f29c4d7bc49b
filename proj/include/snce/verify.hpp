#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "snce/codebook.hpp"

namespace snce {

// One verification property: passed iff observed <= threshold.
struct CheckResult {
  std::string name;
  bool passed;
  double observed;
  double threshold;
  std::string detail;
};

struct VerifyOptions {
  std::uint64_t seed = 1;
  // Test hook: perturbs one analytic logit gradient so the finite-difference
  // check must fail. Exists to prove the suite can fail.
  bool break_gradient = false;
  // Codebook size for the large-vocabulary stability check.
  Index stability_k = 131072;
};

// Runs the whole property suite: finite-difference gradient checks (logit
// and MLP parameters), temperature limits, Monte Carlo / KL / policy-gradient
// equivalences, masked-objective unbiasedness, and large-codebook softmax
// stability. Deterministic per seed.
std::vector<CheckResult> run_verification(const VerifyOptions& opts);

bool all_passed(const std::vector<CheckResult>& results);

}  // namespace snce
