#include "snce/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "snce/losses.hpp"
#include "snce/masked_process.hpp"
#include "snce/neighbor.hpp"
#include "snce/rng.hpp"
#include "snce/toy_lab.hpp"

namespace snce {

namespace {

Eigen::VectorXd random_logits(Index k, SplitMix64& rng, double scale = 2.0) {
  Eigen::VectorXd h(k);
  for (Index i = 0; i < k; ++i) h[i] = scale * rng.next_gaussian();
  return h;
}

Eigen::VectorXd random_uniform(Index k, SplitMix64& rng, double lo, double hi) {
  Eigen::VectorXd v(k);
  for (Index i = 0; i < k; ++i) v[i] = lo + (hi - lo) * rng.next_double();
  return v;
}

// Random proper distribution built from a neighbor softmax over random
// distances.
Eigen::VectorXd random_distribution(Index k, SplitMix64& rng) {
  return softmax_from_distances(random_uniform(k, rng, 0.0, 10.0),
                                Temperature(0.71));
}

// Max-norm relative deviation between the analytic logit gradient and
// central finite differences with step 1e-5.
double logit_gradient_fd_deviation(const Eigen::VectorXd& h,
                                   const TargetSpec& target, bool sabotage) {
  LossReport analytic = soft_xent(h, target);
  if (sabotage) analytic.grad_logits[0] += 1e-3;

  const double step = 1e-5;
  Eigen::VectorXd probe = h;
  Eigen::VectorXd fd(h.size());
  for (Index i = 0; i < h.size(); ++i) {
    probe[i] = h[i] + step;
    const double up = soft_xent(probe, target).loss;
    probe[i] = h[i] - step;
    const double down = soft_xent(probe, target).loss;
    probe[i] = h[i];
    fd[i] = (up - down) / (2.0 * step);
  }
  const double scale =
      std::max(analytic.grad_logits.cwiseAbs().maxCoeff(), 1e-12);
  return (fd - analytic.grad_logits).cwiseAbs().maxCoeff() / scale;
}

}  // namespace

bool all_passed(const std::vector<CheckResult>& results) {
  return std::all_of(results.begin(), results.end(),
                     [](const CheckResult& r) { return r.passed; });
}

std::vector<CheckResult> run_verification(const VerifyOptions& opts) {
  std::vector<CheckResult> results;
  const SplitMix64 root(opts.seed);
  const auto add = [&results](std::string name, double observed,
                              double threshold, std::string detail = "") {
    results.push_back(CheckResult{std::move(name), observed <= threshold,
                                  observed, threshold, std::move(detail)});
  };

  // --- logit gradients vs central finite differences (step 1e-5) ---
  {
    SplitMix64 rng = root.fork(1);
    double worst_sum = 0.0;
    bool sabotage = opts.break_gradient;
    for (Index k : {Index{2}, Index{10}, Index{2500}}) {
      const Eigen::VectorXd h = random_logits(k, rng);
      const Index token = static_cast<Index>(rng.next_below(k));
      NeighborDistribution nd;
      nd.probs = random_distribution(k, rng);
      const std::pair<const char*, TargetSpec> cases[] = {
          {"onehot", TargetSpec::one_hot(token)},
          {"smoothed", TargetSpec::smoothed(token, 0.1)},
          {"neighbor", TargetSpec::neighbor(nd)},
      };
      for (const auto& [label, target] : cases) {
        const double dev = logit_gradient_fd_deviation(h, target, sabotage);
        sabotage = false;  // hook breaks exactly one case
        add("logit_grad_fd_k" + std::to_string(k) + "_" + label, dev, 1e-5);
        worst_sum = std::max(
            worst_sum, std::abs(soft_xent(h, target).grad_logits.sum()));
      }
    }
    add("logit_grad_sum_zero", worst_sum, 1e-9);
  }

  // --- temperature limits ---
  {
    SplitMix64 rng = root.fork(2);
    Eigen::VectorXd d = random_uniform(200, rng, 0.0, 50.0);
    Index nearest;
    d.minCoeff(&nearest);
    d[nearest] -= 0.1;  // make the minimum unique by a margin

    Eigen::VectorXd sharp = softmax_from_distances(d, Temperature(1e-3));
    Eigen::VectorXd onehot = Eigen::VectorXd::Zero(d.size());
    onehot[nearest] = 1.0;
    add("tau_to_zero_onehot", (sharp - onehot).cwiseAbs().maxCoeff(), 1e-6);

    Eigen::VectorXd flat = softmax_from_distances(d, Temperature(1e6));
    add("tau_to_inf_uniform",
        (flat.array() - 1.0 / static_cast<double>(d.size()))
            .abs()
            .maxCoeff(),
        1e-6);

    const Eigen::VectorXd h = random_logits(d.size(), rng);
    const double ce = soft_xent(h, TargetSpec::one_hot(nearest)).loss;
    NeighborDistribution nd;
    nd.probs = sharp;
    const double snce_loss = soft_xent(h, TargetSpec::neighbor(nd)).loss;
    add("snce_ce_limit", std::abs(snce_loss - ce), 1e-5);
  }

  // --- Monte Carlo estimate of the soft objective ---
  {
    SplitMix64 rng = root.fork(3);
    double worst_sigmas = 0.0;
    const auto run_case = [&](const Eigen::VectorXd& h,
                              const Eigen::VectorXd& q, std::uint64_t seed) {
      const double exact = soft_xent(h, q).loss;
      const McEstimate mc = mc_snce_estimate(h, q, 100000, seed);
      worst_sigmas =
          std::max(worst_sigmas, std::abs(mc.estimate - exact) /
                                     std::max(mc.std_error, 1e-300));
    };
    Eigen::Vector3d three_code_d(0.0, 1.0, 4.0);
    run_case(Eigen::Vector3d(1.0, 0.0, -1.0),
             softmax_from_distances(three_code_d,
                                    Temperature::from_two_tau_sq(1.0)),
             rng.next_u64());
    run_case(random_logits(100, rng), random_distribution(100, rng),
             rng.next_u64());
    add("mc_equivalence", worst_sigmas, 3.0, "units of one standard error");
  }

  // --- KL decomposition identity ---
  {
    SplitMix64 rng = root.fork(4);
    double worst_identity = 0.0;
    double worst_xent = 0.0;
    const auto run_case = [&](const Eigen::VectorXd& h,
                              const Eigen::VectorXd& q) {
      const KlDecomposition kd = kl_decomposition_check(h, q);
      worst_identity = std::max(
          worst_identity, std::abs(kd.kl - (kd.cross_entropy - kd.entropy)));
      worst_xent =
          std::max(worst_xent, std::abs(kd.cross_entropy - soft_xent(h, q).loss));
    };
    const Eigen::VectorXd h = random_logits(1000, rng);
    run_case(h, random_distribution(1000, rng));
    run_case(Eigen::Vector3d(1.0, 0.0, -1.0),
             softmax_from_distances(Eigen::Vector3d(0.0, 1.0, 4.0),
                                    Temperature::from_two_tau_sq(1.0)));
    // q equal to the model distribution: KL must vanish.
    const Eigen::VectorXd h2 = random_logits(64, rng);
    const Eigen::VectorXd p2 =
        (h2.array() - h2.maxCoeff()).exp() /
        (h2.array() - h2.maxCoeff()).exp().sum();
    const KlDecomposition kd = kl_decomposition_check(h2, p2);
    worst_identity =
        std::max(worst_identity, std::abs(kd.kl - (kd.cross_entropy - kd.entropy)));
    add("kl_identity", worst_identity, 1e-9);
    add("kl_xent_matches_soft_xent", worst_xent, 1e-12);
    add("kl_zero_at_fixed_point", std::abs(kd.kl), 1e-12);
  }

  // --- policy-gradient identity ---
  {
    SplitMix64 rng = root.fork(5);
    double worst = policy_gradient_check(Eigen::Vector2d(0.0, 0.0),
                                         Eigen::Vector2d(1.0, 0.0));
    worst = std::max(
        worst, policy_gradient_check(
                   Eigen::Vector3d(1.0, 0.0, -1.0),
                   softmax_from_distances(Eigen::Vector3d(0.0, 1.0, 4.0),
                                          Temperature::from_two_tau_sq(1.0))));
    worst = std::max(worst, policy_gradient_check(
                                random_logits(100, rng),
                                random_distribution(100, rng)));
    add("policy_gradient_identity", worst, 1e-10);
  }

  // --- masked-objective unbiasedness ---
  {
    SplitMix64 rng = root.fork(6);
    const Codebook cb = grid_codebook(-5.0, 5.0, 10);
    const Index length = 8;
    std::vector<Index> clean(length);
    for (Index& tok : clean) {
      tok = static_cast<Index>(rng.next_below(cb.size()));
    }
    Eigen::MatrixXd logits(length, cb.size());
    for (Index i = 0; i < length; ++i) {
      logits.row(i) = random_logits(cb.size(), rng).transpose();
    }
    const ElboExpectation e = elbo_expectation_check(
        clean, logits, cb, Temperature::from_two_tau_sq(1.0), 20000,
        rng.next_u64());
    add("elbo_unbiasedness", std::abs(e.mc_mean - e.analytic),
        3.0 * e.std_error, "threshold is 3 standard errors");
  }

  // --- large-codebook stability and exactness ---
  {
    SplitMix64 rng = root.fork(7);
    const Temperature temp(0.71);
    Eigen::VectorXd d = random_uniform(opts.stability_k, rng, 0.0, 1e4);
    const Eigen::VectorXd q = softmax_from_distances(d, temp);
    const bool finite = q.allFinite() && q.minCoeff() >= 0.0;
    add("stability_large_k_sum",
        finite ? std::abs(q.sum() - 1.0)
               : std::numeric_limits<double>::infinity(),
        1e-6, "K = " + std::to_string(opts.stability_k));

    Eigen::VectorXd d_small = random_uniform(4096, rng, 0.0, 1e4);
    const Eigen::VectorXd stable = softmax_from_distances(d_small, temp);
    const Eigen::VectorXd direct =
        softmax_from_distances_direct(d_small, temp);
    add("stable_vs_direct_k4096",
        (stable - direct).cwiseAbs().maxCoeff(), 1e-6);

    CodeMatrix vectors(4096, 16);
    for (Index i = 0; i < vectors.size(); ++i) {
      *(vectors.data() + i) = static_cast<float>(rng.next_gaussian());
    }
    const Codebook cb(std::move(vectors), Metric::kL2Squared);
    Eigen::VectorXd z(16);
    for (Index i = 0; i < z.size(); ++i) z[i] = rng.next_gaussian();
    const Eigen::VectorXd dense = neighbor_distribution(cb, z, temp);
    const NeighborDistribution sparse =
        neighbor_distribution_topk(cb, z, temp, cb.size());
    add("topk_full_matches_dense",
        (sparse.dense(cb.size()) - dense).cwiseAbs().maxCoeff(), 1e-12);
  }

  // --- MLP parameter gradients (full 10-layer configuration) ---
  {
    ToyConfig cfg;
    cfg.objective = Objective::kSnce;
    cfg.seed = root.fork(8).next_u64();
    add("mlp_grad_fd", gradient_check_mlp(cfg, 30), 1e-4);
  }

  return results;
}

}  // namespace snce
