#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "snce/losses.hpp"

namespace snce {

// A partially masked sequence from the absorbing forward process at time t.
struct MaskedSequence {
  std::vector<Index> clean;   // original tokens y^0
  std::vector<bool> visible;  // true = token survives, false = masked
  double t = 1.0;             // in (0, 1]

  Index masked_count() const;
};

// Masks every position independently with probability t (SplitMix64 stream
// from `seed`).
MaskedSequence forward_mask(const std::vector<Index>& clean, double t,
                            std::uint64_t seed);

struct ElboReport {
  double loss;
  Eigen::MatrixXd grad;  // L x K; rows at visible positions are exactly zero
  Index masked_count;
};

// (1/t)-weighted masked soft cross entropy with per-token normalization:
//   loss = 1/(t*L) * sum over masked i of soft_xent(logits_i, targets_i).
// Gradient rows at masked positions carry the same 1/(t*L) factor; visible
// rows stay zero.
ElboReport elbo_snce_loss(const Eigen::Ref<const Eigen::MatrixXd>& logits,
                          const MaskedSequence& seq,
                          const std::vector<TargetSpec>& targets);

struct ElboExpectation {
  double mc_mean;
  double std_error;
  double analytic;
};

// Monte Carlo unbiasedness probe: averaging the (1/t)-weighted masked loss
// over (t, mask) draws must reproduce the plain per-position mean loss.
// Latents are taken to be the code vectors of the clean tokens, so targets
// are the neighbor distributions of those codes; per-position losses are
// precomputed once and the trials randomize (t, mask) only. t is drawn from
// Unif((1e-3, 1]) to bound the 1/t variance.
ElboExpectation elbo_expectation_check(
    const std::vector<Index>& clean,
    const Eigen::Ref<const Eigen::MatrixXd>& logits, const Codebook& cb,
    Temperature temp, long n_trials, std::uint64_t seed);

}  // namespace snce
