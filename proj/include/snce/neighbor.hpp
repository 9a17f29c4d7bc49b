#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <vector>

#include "snce/codebook.hpp"

namespace snce {

// Bandwidth of the neighbor softmax. tau is the authoritative parameter; the
// divisor 2*tau^2 is fixed at construction so both parameterizations seen in
// practice (tau, or 2tau^2 directly) are representable exactly.
class Temperature {
 public:
  explicit Temperature(double tau)
      : tau_(tau), two_tau_sq_(2.0 * tau * tau) {
    if (!(tau > 0.0) || !std::isfinite(tau)) {
      throw std::invalid_argument("Temperature: tau must be positive");
    }
  }

  static Temperature from_two_tau_sq(double two_tau_sq) {
    if (!(two_tau_sq > 0.0) || !std::isfinite(two_tau_sq)) {
      throw std::invalid_argument("Temperature: 2*tau^2 must be positive");
    }
    Temperature t(std::sqrt(two_tau_sq / 2.0), 0.0);
    t.two_tau_sq_ = two_tau_sq;
    return t;
  }

  double tau() const { return tau_; }
  double two_tau_sq() const { return two_tau_sq_; }

 private:
  Temperature(double tau, double two_tau_sq)
      : tau_(tau), two_tau_sq_(two_tau_sq) {}
  double tau_;
  double two_tau_sq_;
};

// Probability vector over K tokens. Dense when `indices` is empty; otherwise
// sparse, with strictly increasing indices aligned with probs.
struct NeighborDistribution {
  Eigen::VectorXd probs;
  std::vector<Index> indices;

  bool is_sparse() const { return !indices.empty(); }

  // Scatter to a dense length-k vector (identity for dense input).
  Eigen::VectorXd dense(Index k) const;
};

struct BandwidthResult {
  double sigma;
  double achieved_perplexity;
  int iterations;
};

namespace detail {

template <typename Derived>
Eigen::VectorXd neg_scaled_logits(const Eigen::MatrixBase<Derived>& dists,
                                  Temperature temp) {
  static_assert(Derived::ColsAtCompileTime == 1 ||
                    Derived::RowsAtCompileTime == 1,
                "distances must be a vector");
  if (dists.size() == 0) {
    throw std::invalid_argument("softmax_from_distances: empty input");
  }
  Eigen::VectorXd logits =
      (-dists.template cast<double>().array() / temp.two_tau_sq())
          .matrix()
          .reshaped();
  if (!logits.allFinite()) {
    throw std::invalid_argument("softmax_from_distances: non-finite distance");
  }
  return logits;
}

}  // namespace detail

// softmax_k(-d_k / 2tau^2), max-shifted before exponentiation so nothing
// overflows for |d| up to ~1e6 at any tau; the partition sum accumulates in
// double. Templated on the expression so Eigen blocks/maps bind directly.
template <typename Derived>
Eigen::VectorXd softmax_from_distances(const Eigen::MatrixBase<Derived>& dists,
                                       Temperature temp) {
  Eigen::VectorXd logits = detail::neg_scaled_logits(dists, temp);
  const double shift = logits.maxCoeff();
  Eigen::VectorXd w = (logits.array() - shift).exp();
  w /= w.sum();
  return w;
}

// Element-wise log of softmax_from_distances, without ever exponentiating
// un-shifted values.
template <typename Derived>
Eigen::VectorXd log_softmax_from_distances(
    const Eigen::MatrixBase<Derived>& dists, Temperature temp) {
  Eigen::VectorXd logits = detail::neg_scaled_logits(dists, temp);
  const double shift = logits.maxCoeff();
  const double log_z = shift + std::log((logits.array() - shift).exp().sum());
  return logits.array() - log_z;
}

// Direct two-pass evaluation (exp each term, then normalize, no shift).
// This is the independent reference route used by verify/bench; it can
// overflow where the stable path does not, which is the point.
template <typename Derived>
Eigen::VectorXd softmax_from_distances_direct(
    const Eigen::MatrixBase<Derived>& dists, Temperature temp) {
  Eigen::VectorXd logits = detail::neg_scaled_logits(dists, temp);
  Eigen::VectorXd w = logits.array().exp();
  w /= w.sum();
  return w;
}

// Dense neighbor target q(z) over the K tokens.
Eigen::VectorXd neighbor_distribution(
    const Codebook& cb, const Eigen::Ref<const Eigen::VectorXd>& z,
    Temperature temp);

Eigen::VectorXd log_neighbor_distribution(
    const Codebook& cb, const Eigen::Ref<const Eigen::VectorXd>& z,
    Temperature temp);

// Sparse target over the m nearest codes (ties by lowest index), with the
// surviving weights renormalized to sum to 1. m == K reproduces the dense
// result.
NeighborDistribution neighbor_distribution_topk(
    const Codebook& cb, const Eigen::Ref<const Eigen::VectorXd>& z,
    Temperature temp, Index m);

// t-SNE style bandwidth calibration: binary search over sigma so that the
// perplexity 2^H (H in bits) of softmax(-d / 2 sigma^2) matches the target.
// `distances` must already exclude the self term. Offered as an offline
// utility; training uses a fixed Temperature instead.
BandwidthResult calibrate_bandwidth(
    const Eigen::Ref<const Eigen::VectorXd>& distances,
    double target_perplexity, double tol, int max_iter);

}  // namespace snce
