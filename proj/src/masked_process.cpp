#include "snce/masked_process.hpp"

#include <cmath>

#include "snce/rng.hpp"

namespace snce {

namespace {

constexpr double kMinTime = 1e-3;  // lower cutoff for sampled t

void check_time(double t) {
  if (!(t > 0.0) || t > 1.0 || !std::isfinite(t)) {
    throw std::invalid_argument("masked process: t must lie in (0, 1]");
  }
}

}  // namespace

Index MaskedSequence::masked_count() const {
  Index count = 0;
  for (bool v : visible) {
    if (!v) ++count;
  }
  return count;
}

MaskedSequence forward_mask(const std::vector<Index>& clean, double t,
                            std::uint64_t seed) {
  check_time(t);
  if (clean.empty()) {
    throw std::invalid_argument("forward_mask: empty sequence");
  }
  MaskedSequence seq;
  seq.clean = clean;
  seq.t = t;
  seq.visible.resize(clean.size());
  SplitMix64 rng(seed);
  for (std::size_t i = 0; i < clean.size(); ++i) {
    seq.visible[i] = !rng.next_bernoulli(t);
  }
  return seq;
}

ElboReport elbo_snce_loss(const Eigen::Ref<const Eigen::MatrixXd>& logits,
                          const MaskedSequence& seq,
                          const std::vector<TargetSpec>& targets) {
  check_time(seq.t);
  const Index length = static_cast<Index>(seq.clean.size());
  if (length == 0) {
    throw std::invalid_argument("elbo_snce_loss: empty sequence");
  }
  if (logits.rows() != length ||
      static_cast<Index>(seq.visible.size()) != length ||
      static_cast<Index>(targets.size()) != length) {
    throw std::invalid_argument(
        "elbo_snce_loss: logits, mask and targets must agree on L");
  }

  const double scale = 1.0 / (seq.t * static_cast<double>(length));
  ElboReport report;
  report.grad = Eigen::MatrixXd::Zero(length, logits.cols());
  report.masked_count = 0;
  double total = 0.0;
  for (Index i = 0; i < length; ++i) {
    if (seq.visible[i]) continue;
    ++report.masked_count;
    const LossReport r = soft_xent(logits.row(i).transpose(), targets[i]);
    total += r.loss;
    report.grad.row(i) = r.grad_logits.transpose() * scale;
  }
  report.loss = total * scale;
  return report;
}

ElboExpectation elbo_expectation_check(
    const std::vector<Index>& clean,
    const Eigen::Ref<const Eigen::MatrixXd>& logits, const Codebook& cb,
    Temperature temp, long n_trials, std::uint64_t seed) {
  if (clean.empty()) {
    throw std::invalid_argument("elbo_expectation_check: empty sequence");
  }
  if (n_trials < 1) {
    throw std::invalid_argument("elbo_expectation_check: need n_trials >= 1");
  }
  const Index length = static_cast<Index>(clean.size());
  if (logits.rows() != length) {
    throw std::invalid_argument(
        "elbo_expectation_check: logits rows must match sequence length");
  }
  for (Index tok : clean) {
    if (tok < 0 || tok >= cb.size()) {
      throw std::invalid_argument("elbo_expectation_check: token out of range");
    }
  }

  // Per-position losses against the neighbor targets of the clean codes.
  Eigen::VectorXd position_loss(length);
  for (Index i = 0; i < length; ++i) {
    const Eigen::VectorXd z = cb.code(clean[i]);
    position_loss[i] =
        soft_xent(logits.row(i).transpose(), snce_target(cb, z, temp)).loss;
  }
  const double analytic = position_loss.mean();

  const SplitMix64 root(seed);
  double mean = 0.0;
  double m2 = 0.0;
  for (long trial = 0; trial < n_trials; ++trial) {
    SplitMix64 rng = root.fork(static_cast<std::uint64_t>(trial));
    const double t = kMinTime + (1.0 - kMinTime) * rng.next_double();
    double loss = 0.0;
    for (Index i = 0; i < length; ++i) {
      if (rng.next_bernoulli(t)) loss += position_loss[i];
    }
    loss /= t * static_cast<double>(length);
    const double delta = loss - mean;
    mean += delta / static_cast<double>(trial + 1);
    m2 += delta * (loss - mean);
  }

  ElboExpectation out;
  out.mc_mean = mean;
  out.analytic = analytic;
  out.std_error =
      n_trials > 1
          ? std::sqrt(m2 / (static_cast<double>(n_trials - 1) *
                            static_cast<double>(n_trials)))
          : 0.0;
  return out;
}

}  // namespace snce
