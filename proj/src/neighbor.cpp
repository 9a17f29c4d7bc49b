#include "snce/neighbor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace snce {

Eigen::VectorXd NeighborDistribution::dense(Index k) const {
  if (!is_sparse()) {
    if (probs.size() != k) {
      throw std::invalid_argument("NeighborDistribution: dense size mismatch");
    }
    return probs;
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(k);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= k) {
      throw std::invalid_argument(
          "NeighborDistribution: sparse index out of range");
    }
    out[indices[i]] = probs[static_cast<Index>(i)];
  }
  return out;
}

Eigen::VectorXd neighbor_distribution(
    const Codebook& cb, const Eigen::Ref<const Eigen::VectorXd>& z,
    Temperature temp) {
  return softmax_from_distances(distances(cb, z), temp);
}

Eigen::VectorXd log_neighbor_distribution(
    const Codebook& cb, const Eigen::Ref<const Eigen::VectorXd>& z,
    Temperature temp) {
  return log_softmax_from_distances(distances(cb, z), temp);
}

NeighborDistribution neighbor_distribution_topk(
    const Codebook& cb, const Eigen::Ref<const Eigen::VectorXd>& z,
    Temperature temp, Index m) {
  const Index k_total = cb.size();
  if (m < 1 || m > k_total) {
    throw std::invalid_argument("neighbor_distribution_topk: m out of range");
  }
  const Eigen::VectorXd d = distances(cb, z);

  std::vector<Index> order(static_cast<std::size_t>(k_total));
  std::iota(order.begin(), order.end(), Index{0});
  const auto closer = [&d](Index a, Index b) {
    return d[a] < d[b] || (d[a] == d[b] && a < b);
  };
  std::nth_element(order.begin(), order.begin() + (m - 1), order.end(),
                   closer);
  order.resize(static_cast<std::size_t>(m));
  std::sort(order.begin(), order.end());

  Eigen::VectorXd kept(m);
  for (Index i = 0; i < m; ++i) kept[i] = d[order[static_cast<std::size_t>(i)]];

  NeighborDistribution out;
  out.probs = softmax_from_distances(kept, temp);
  out.indices = std::move(order);
  return out;
}

namespace {

double perplexity_at_sigma(const Eigen::Ref<const Eigen::VectorXd>& distances,
                           double sigma) {
  const Eigen::VectorXd p = softmax_from_distances(
      distances, Temperature::from_two_tau_sq(2.0 * sigma * sigma));
  double entropy_bits = 0.0;
  for (Index i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) entropy_bits -= p[i] * std::log2(p[i]);
  }
  return std::exp2(entropy_bits);
}

}  // namespace

BandwidthResult calibrate_bandwidth(
    const Eigen::Ref<const Eigen::VectorXd>& distances,
    double target_perplexity, double tol, int max_iter) {
  const Index n = distances.size();
  if (n < 2) {
    throw std::invalid_argument("calibrate_bandwidth: need >= 2 distances");
  }
  if (!distances.allFinite()) {
    throw std::invalid_argument("calibrate_bandwidth: non-finite distance");
  }
  if (!(target_perplexity > 1.0) ||
      target_perplexity > static_cast<double>(n)) {
    throw std::invalid_argument(
        "calibrate_bandwidth: target perplexity must lie in (1, count]");
  }
  if (!(tol > 0.0) || max_iter < 1) {
    throw std::invalid_argument("calibrate_bandwidth: bad tol or max_iter");
  }

  double sigma = 1.0;
  double achieved = perplexity_at_sigma(distances, sigma);
  int iterations = 0;
  if (std::abs(achieved - target_perplexity) <= tol) {
    return {sigma, achieved, iterations};
  }

  // Perplexity grows monotonically with sigma: bracket, then bisect.
  double lo = sigma;
  double hi = sigma;
  if (achieved < target_perplexity) {
    while (iterations < max_iter) {
      hi *= 2.0;
      ++iterations;
      if (perplexity_at_sigma(distances, hi) >= target_perplexity) break;
    }
  } else {
    while (iterations < max_iter) {
      lo *= 0.5;
      ++iterations;
      if (perplexity_at_sigma(distances, lo) <= target_perplexity) break;
    }
  }

  while (iterations < max_iter) {
    sigma = 0.5 * (lo + hi);
    achieved = perplexity_at_sigma(distances, sigma);
    ++iterations;
    if (std::abs(achieved - target_perplexity) <= tol) break;
    if (achieved < target_perplexity) {
      lo = sigma;
    } else {
      hi = sigma;
    }
  }
  return {sigma, achieved, iterations};
}

}  // namespace snce
