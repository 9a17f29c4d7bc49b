#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "snce/codebook.hpp"
#include "snce/neighbor.hpp"

namespace snce {

// A supervision target: one-hot, label-smoothed, or a stochastic-neighbor
// distribution. Every loss consumes targets through this type, so the three
// regimes share one code path.
class TargetSpec {
 public:
  enum class Kind { kOneHot, kSmoothed, kNeighbor };

  static TargetSpec one_hot(Index token);
  // w[token] = 1 - eps, w[j != token] = eps / (K - 1). eps in [0, 1).
  static TargetSpec smoothed(Index token, double epsilon);
  static TargetSpec neighbor(NeighborDistribution dist);

  Kind kind() const { return kind_; }
  Index token() const { return token_; }
  double epsilon() const { return epsilon_; }
  const NeighborDistribution& dist() const { return dist_; }

  // Dense supervision weights over k tokens; always a probability vector.
  Eigen::VectorXd materialize(Index k) const;

 private:
  TargetSpec() = default;
  Kind kind_ = Kind::kOneHot;
  Index token_ = 0;
  double epsilon_ = 0.0;
  NeighborDistribution dist_;
};

struct LossReport {
  double loss;                  // value to minimize
  Eigen::VectorXd grad_logits;  // d loss / d h = softmax(h) - w
};

// Soft cross entropy: loss = -sum_k w_k logSoftmax(h)_k, evaluated through a
// max-shifted log-sum-exp. The analytic gradient is softmax(h) - w (the
// maximization form of the objective negates both).
LossReport soft_xent(const Eigen::Ref<const Eigen::VectorXd>& logits,
                     const TargetSpec& target);
LossReport soft_xent(const Eigen::Ref<const Eigen::VectorXd>& logits,
                     const Eigen::Ref<const Eigen::VectorXd>& weights);

// Neighbor target for one latent; thin composition over
// neighbor_distribution so callers never recompute distances.
TargetSpec snce_target(const Codebook& cb,
                       const Eigen::Ref<const Eigen::VectorXd>& z,
                       Temperature temp);

// One training sequence. `latents` is only consulted for kNeighbor targets
// and must then have one row per position.
struct SequenceBatch {
  std::vector<Index> tokens;
  Eigen::MatrixXd latents;  // L x D
  TargetSpec::Kind target_kind = TargetSpec::Kind::kOneHot;
  double smoothing_epsilon = 0.0;
};

struct SequenceLossReport {
  double loss;                  // mean over positions
  Eigen::MatrixXd grad_logits;  // L x K, rows are per-position grads / L
};

// Scores per-position logits against the batch targets and averages over
// positions. The model producing the logits is the caller's business; this
// layer only ever sees scores.
SequenceLossReport ar_sequence_loss(
    const Eigen::Ref<const Eigen::MatrixXd>& logits, const SequenceBatch& batch,
    const Codebook& cb, Temperature temp);

struct McEstimate {
  double estimate;
  double std_error;
};

// Draws n_samples tokens i.i.d. from q (inverse CDF over the dense vector,
// SplitMix64 stream) and averages the one-hot cross entropies. In
// expectation this equals soft_xent against q itself.
McEstimate mc_snce_estimate(const Eigen::Ref<const Eigen::VectorXd>& logits,
                            const Eigen::Ref<const Eigen::VectorXd>& q,
                            long n_samples, std::uint64_t seed);

struct KlDecomposition {
  double kl;             // D_KL(q || softmax(h))
  double cross_entropy;  // H(q, softmax(h))
  double entropy;        // H(q)
};

// All three terms are accumulated independently so kl == xent - entropy is a
// genuine floating-point identity check, not a tautology. Terms with q_k = 0
// contribute 0.
KlDecomposition kl_decomposition_check(
    const Eigen::Ref<const Eigen::VectorXd>& logits,
    const Eigen::Ref<const Eigen::VectorXd>& q);

// Computes sum_a q_a * grad_h log p(a) term by term (the on-policy gradient
// with reward q_a / p_a) and compares it against the negated soft_xent
// gradient. Returns the max absolute deviation between the two routes.
double policy_gradient_check(const Eigen::Ref<const Eigen::VectorXd>& logits,
                             const Eigen::Ref<const Eigen::VectorXd>& q);

}  // namespace snce
