#include "snce/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "snce/rng.hpp"

namespace snce {

namespace {

constexpr double kDistributionTol = 1e-9;

void check_distribution(const Eigen::Ref<const Eigen::VectorXd>& w,
                        const char* who) {
  if (w.size() == 0) {
    throw std::invalid_argument(std::string(who) + ": empty weight vector");
  }
  if (!w.allFinite() || w.minCoeff() < 0.0) {
    throw std::invalid_argument(std::string(who) +
                                ": weights must be finite and nonnegative");
  }
  if (std::abs(w.sum() - 1.0) > kDistributionTol) {
    throw std::invalid_argument(std::string(who) +
                                ": weights must sum to 1");
  }
}

Eigen::VectorXd log_softmax(const Eigen::Ref<const Eigen::VectorXd>& h) {
  const double shift = h.maxCoeff();
  const double log_z = shift + std::log((h.array() - shift).exp().sum());
  return h.array() - log_z;
}

}  // namespace

TargetSpec TargetSpec::one_hot(Index token) {
  if (token < 0) throw std::invalid_argument("TargetSpec: negative token");
  TargetSpec t;
  t.kind_ = Kind::kOneHot;
  t.token_ = token;
  return t;
}

TargetSpec TargetSpec::smoothed(Index token, double epsilon) {
  if (token < 0) throw std::invalid_argument("TargetSpec: negative token");
  if (!(epsilon >= 0.0) || epsilon >= 1.0) {
    throw std::invalid_argument("TargetSpec: epsilon must lie in [0, 1)");
  }
  TargetSpec t;
  t.kind_ = Kind::kSmoothed;
  t.token_ = token;
  t.epsilon_ = epsilon;
  return t;
}

TargetSpec TargetSpec::neighbor(NeighborDistribution dist) {
  if (dist.is_sparse()) {
    if (dist.probs.size() != static_cast<Index>(dist.indices.size())) {
      throw std::invalid_argument(
          "TargetSpec: sparse probs/indices size mismatch");
    }
    for (std::size_t i = 1; i < dist.indices.size(); ++i) {
      if (dist.indices[i] <= dist.indices[i - 1]) {
        throw std::invalid_argument(
            "TargetSpec: sparse indices must be strictly increasing");
      }
    }
  }
  check_distribution(dist.probs, "TargetSpec::neighbor");
  TargetSpec t;
  t.kind_ = Kind::kNeighbor;
  t.dist_ = std::move(dist);
  return t;
}

Eigen::VectorXd TargetSpec::materialize(Index k) const {
  if (k < 1) throw std::invalid_argument("TargetSpec: k must be positive");
  switch (kind_) {
    case Kind::kOneHot: {
      if (token_ >= k) {
        throw std::invalid_argument("TargetSpec: token out of range");
      }
      Eigen::VectorXd w = Eigen::VectorXd::Zero(k);
      w[token_] = 1.0;
      return w;
    }
    case Kind::kSmoothed: {
      if (token_ >= k) {
        throw std::invalid_argument("TargetSpec: token out of range");
      }
      if (epsilon_ > 0.0 && k < 2) {
        throw std::invalid_argument(
            "TargetSpec: smoothing needs K >= 2 tokens");
      }
      Eigen::VectorXd w =
          Eigen::VectorXd::Constant(k, k > 1 ? epsilon_ / double(k - 1) : 0.0);
      w[token_] = 1.0 - epsilon_;
      return w;
    }
    case Kind::kNeighbor:
      return dist_.dense(k);
  }
  throw std::logic_error("TargetSpec: unreachable");
}

LossReport soft_xent(const Eigen::Ref<const Eigen::VectorXd>& logits,
                     const Eigen::Ref<const Eigen::VectorXd>& weights) {
  if (logits.size() != weights.size()) {
    throw std::invalid_argument("soft_xent: logits/target length mismatch");
  }
  if (!logits.allFinite()) {
    throw std::invalid_argument("soft_xent: logits must be finite");
  }
  check_distribution(weights, "soft_xent");

  const Eigen::VectorXd log_p = log_softmax(logits);
  LossReport report;
  report.loss = -weights.dot(log_p);
  report.grad_logits = log_p.array().exp().matrix() - weights;
  return report;
}

LossReport soft_xent(const Eigen::Ref<const Eigen::VectorXd>& logits,
                     const TargetSpec& target) {
  return soft_xent(logits, target.materialize(logits.size()));
}

TargetSpec snce_target(const Codebook& cb,
                       const Eigen::Ref<const Eigen::VectorXd>& z,
                       Temperature temp) {
  NeighborDistribution dist;
  dist.probs = neighbor_distribution(cb, z, temp);
  return TargetSpec::neighbor(std::move(dist));
}

SequenceLossReport ar_sequence_loss(
    const Eigen::Ref<const Eigen::MatrixXd>& logits, const SequenceBatch& batch,
    const Codebook& cb, Temperature temp) {
  const Index length = logits.rows();
  const Index k = logits.cols();
  if (length < 1) {
    throw std::invalid_argument("ar_sequence_loss: empty sequence");
  }
  const bool wants_neighbor = batch.target_kind == TargetSpec::Kind::kNeighbor;
  if (wants_neighbor) {
    if (batch.latents.rows() != length || batch.latents.cols() != cb.dim()) {
      throw std::invalid_argument(
          "ar_sequence_loss: neighbor targets need an L x D latent matrix");
    }
  } else {
    if (static_cast<Index>(batch.tokens.size()) != length) {
      throw std::invalid_argument(
          "ar_sequence_loss: tokens length must match logits rows");
    }
  }

  SequenceLossReport report;
  report.grad_logits.resize(length, k);
  double total = 0.0;
  for (Index i = 0; i < length; ++i) {
    TargetSpec target = TargetSpec::one_hot(0);
    switch (batch.target_kind) {
      case TargetSpec::Kind::kOneHot:
        target = TargetSpec::one_hot(batch.tokens[i]);
        break;
      case TargetSpec::Kind::kSmoothed:
        target = TargetSpec::smoothed(batch.tokens[i], batch.smoothing_epsilon);
        break;
      case TargetSpec::Kind::kNeighbor:
        target = snce_target(cb, batch.latents.row(i).transpose(), temp);
        break;
    }
    const LossReport r = soft_xent(logits.row(i).transpose(), target);
    total += r.loss;
    report.grad_logits.row(i) =
        r.grad_logits.transpose() / static_cast<double>(length);
  }
  report.loss = total / static_cast<double>(length);
  return report;
}

McEstimate mc_snce_estimate(const Eigen::Ref<const Eigen::VectorXd>& logits,
                            const Eigen::Ref<const Eigen::VectorXd>& q,
                            long n_samples, std::uint64_t seed) {
  if (n_samples < 1) {
    throw std::invalid_argument("mc_snce_estimate: need n_samples >= 1");
  }
  if (logits.size() != q.size()) {
    throw std::invalid_argument("mc_snce_estimate: logits/q length mismatch");
  }
  check_distribution(q, "mc_snce_estimate");

  const Eigen::VectorXd log_p = log_softmax(logits);
  const Index k = q.size();
  Eigen::VectorXd cdf(k);
  double acc = 0.0;
  Index last_support = 0;
  for (Index i = 0; i < k; ++i) {
    acc += q[i];
    cdf[i] = acc;
    if (q[i] > 0.0) last_support = i;
  }

  SplitMix64 rng(seed);
  double mean = 0.0;
  double m2 = 0.0;
  for (long s = 0; s < n_samples; ++s) {
    const double u = rng.next_double();
    const double* begin = cdf.data();
    const double* it = std::upper_bound(begin, begin + k, u);
    Index token = static_cast<Index>(it - begin);
    if (token >= k) token = last_support;  // u beyond the rounded total mass
    const double x = -log_p[token];
    const double delta = x - mean;
    mean += delta / static_cast<double>(s + 1);
    m2 += delta * (x - mean);
  }

  McEstimate out;
  out.estimate = mean;
  out.std_error =
      n_samples > 1
          ? std::sqrt(m2 / (static_cast<double>(n_samples - 1) *
                            static_cast<double>(n_samples)))
          : 0.0;
  return out;
}

KlDecomposition kl_decomposition_check(
    const Eigen::Ref<const Eigen::VectorXd>& logits,
    const Eigen::Ref<const Eigen::VectorXd>& q) {
  if (logits.size() != q.size()) {
    throw std::invalid_argument(
        "kl_decomposition_check: logits/q length mismatch");
  }
  check_distribution(q, "kl_decomposition_check");

  const Eigen::VectorXd log_p = log_softmax(logits);
  KlDecomposition out{0.0, 0.0, 0.0};
  for (Index i = 0; i < q.size(); ++i) {
    out.cross_entropy -= q[i] * log_p[i];
    if (q[i] > 0.0) {
      const double log_q = std::log(q[i]);
      out.entropy -= q[i] * log_q;
      out.kl += q[i] * (log_q - log_p[i]);
    }
  }
  return out;
}

double policy_gradient_check(const Eigen::Ref<const Eigen::VectorXd>& logits,
                             const Eigen::Ref<const Eigen::VectorXd>& q) {
  if (logits.size() != q.size()) {
    throw std::invalid_argument(
        "policy_gradient_check: logits/q length mismatch");
  }
  check_distribution(q, "policy_gradient_check");

  const Index k = logits.size();
  const Eigen::VectorXd p = log_softmax(logits).array().exp();

  // Route 1: expectation of the score function, one action at a time.
  Eigen::VectorXd policy_grad = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd score(k);
  for (Index a = 0; a < k; ++a) {
    score = -p;
    score[a] += 1.0;  // grad_h log p(a) = e_a - p
    policy_grad += q[a] * score;
  }

  // Route 2: the analytic soft cross-entropy gradient.
  const LossReport r = soft_xent(logits, q);
  return (policy_grad + r.grad_logits).cwiseAbs().maxCoeff();
}

}  // namespace snce
