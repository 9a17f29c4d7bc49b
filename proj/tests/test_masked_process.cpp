#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "snce/masked_process.hpp"
#include "snce/rng.hpp"

using namespace snce;

namespace {

Eigen::MatrixXd random_logit_rows(Index rows, Index cols, std::uint64_t seed) {
  SplitMix64 rng(seed);
  Eigen::MatrixXd m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) {
    *(m.data() + i) = 2.0 * rng.next_gaussian();
  }
  return m;
}

std::vector<TargetSpec> onehot_targets(const std::vector<Index>& tokens) {
  std::vector<TargetSpec> targets;
  targets.reserve(tokens.size());
  for (Index t : tokens) targets.push_back(TargetSpec::one_hot(t));
  return targets;
}

}  // namespace

TEST_CASE("forward mask extremes") {
  const std::vector<Index> clean{3, 1, 4, 1, 5, 9, 2, 6};

  const MaskedSequence all = forward_mask(clean, 1.0, 42);
  CHECK(all.masked_count() == static_cast<Index>(clean.size()));

  const MaskedSequence none = forward_mask(clean, 1e-12, 42);
  CHECK(none.masked_count() == 0);

  CHECK_THROWS_AS(forward_mask(clean, 0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(forward_mask(clean, 1.5, 1), std::invalid_argument);
  CHECK_THROWS_AS(forward_mask({}, 0.5, 1), std::invalid_argument);
}

TEST_CASE("forward mask concentrates at rate t") {
  const std::vector<Index> clean(1000000, 0);
  const double t = 0.3;
  const MaskedSequence seq = forward_mask(clean, t, 7);
  const double fraction =
      static_cast<double>(seq.masked_count()) / static_cast<double>(clean.size());
  const double sigma = std::sqrt(t * (1.0 - t) / static_cast<double>(clean.size()));
  CHECK(std::abs(fraction - t) <= 3.0 * sigma);
}

TEST_CASE("forward mask is deterministic per seed") {
  const std::vector<Index> clean{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  const MaskedSequence a = forward_mask(clean, 0.4, 123);
  const MaskedSequence b = forward_mask(clean, 0.4, 123);
  const MaskedSequence c = forward_mask(clean, 0.4, 124);
  CHECK(a.visible == b.visible);
  CHECK(a.visible != c.visible);  // overwhelmingly likely for L=10
}

TEST_CASE("elbo loss with no masked positions is zero") {
  const std::vector<Index> clean{1, 2, 3};
  MaskedSequence seq;
  seq.clean = clean;
  seq.visible = {true, true, true};
  seq.t = 0.5;
  const Eigen::MatrixXd logits = random_logit_rows(3, 5, 1);
  const ElboReport r = elbo_snce_loss(logits, seq, onehot_targets(clean));
  CHECK(r.loss == 0.0);
  CHECK(r.grad.cwiseAbs().maxCoeff() == 0.0);
  CHECK(r.masked_count == 0);
}

TEST_CASE("fully masked at t=1 equals mean cross entropy") {
  const Codebook cb = grid_codebook(-5.0, 5.0, 7);
  const std::vector<Index> clean{0, 10, 20, 30};
  MaskedSequence seq;
  seq.clean = clean;
  seq.visible = {false, false, false, false};
  seq.t = 1.0;
  const Eigen::MatrixXd logits = random_logit_rows(4, cb.size(), 2);
  const ElboReport r = elbo_snce_loss(logits, seq, onehot_targets(clean));

  SequenceBatch batch;
  batch.tokens = clean;
  batch.target_kind = TargetSpec::Kind::kOneHot;
  const SequenceLossReport ar =
      ar_sequence_loss(logits, batch, cb, Temperature(0.71));
  CHECK(r.loss == doctest::Approx(ar.loss).epsilon(1e-14));
  CHECK((r.grad - ar.grad_logits).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("masked positions follow the appendix-style formula exactly") {
  const Codebook cb = grid_codebook(-5.0, 5.0, 50);
  const Temperature temp = Temperature::from_two_tau_sq(1.0);
  const Index length = 4;
  const double t = 0.5;

  SplitMix64 rng(8);
  Eigen::MatrixXd latents(length, 2);
  for (Index i = 0; i < length; ++i) {
    latents(i, 0) = 4.0 * rng.next_double() - 2.0;
    latents(i, 1) = 4.0 * rng.next_double() - 2.0;
  }
  const Eigen::MatrixXd logits = random_logit_rows(length, cb.size(), 3);

  MaskedSequence seq;
  seq.t = t;
  seq.visible = {true, false, true, false};  // positions 1 and 3 masked
  std::vector<TargetSpec> targets;
  for (Index i = 0; i < length; ++i) {
    seq.clean.push_back(quantize(cb, latents.row(i).transpose()));
    targets.push_back(snce_target(cb, latents.row(i).transpose(), temp));
  }
  const ElboReport r = elbo_snce_loss(logits, seq, targets);
  CHECK(r.masked_count == 2);

  // position-by-position oracle: (1/(t L)) sum over masked soft_xent
  double oracle = 0.0;
  for (Index i : {Index{1}, Index{3}}) {
    const Eigen::VectorXd q =
        neighbor_distribution(cb, latents.row(i).transpose(), temp);
    oracle += soft_xent(logits.row(i).transpose(), q).loss;
  }
  oracle /= t * static_cast<double>(length);
  CHECK(std::abs(r.loss - oracle) <= 1e-10);

  // gradient support is exactly the masked set
  CHECK(r.grad.row(0).cwiseAbs().maxCoeff() == 0.0);
  CHECK(r.grad.row(2).cwiseAbs().maxCoeff() == 0.0);
  CHECK(r.grad.row(1).cwiseAbs().maxCoeff() > 0.0);
  CHECK(r.grad.row(3).cwiseAbs().maxCoeff() > 0.0);

  // masked rows carry the 1/(tL) scaling of the per-position gradient
  const LossReport single = soft_xent(logits.row(1).transpose(), targets[1]);
  CHECK((r.grad.row(1).transpose() -
         single.grad_logits / (t * static_cast<double>(length)))
            .cwiseAbs()
            .maxCoeff() <= 1e-15);
}

TEST_CASE("shape mismatches are rejected") {
  MaskedSequence seq;
  seq.clean = {0, 1};
  seq.visible = {false, false};
  seq.t = 0.5;
  const Eigen::MatrixXd logits = random_logit_rows(3, 4, 4);
  CHECK_THROWS_AS(elbo_snce_loss(logits, seq, onehot_targets({0, 1})),
                  std::invalid_argument);
}

TEST_CASE("elbo expectation check") {
  const Codebook cb = grid_codebook(-5.0, 5.0, 10);
  const Temperature temp = Temperature::from_two_tau_sq(1.0);

  SUBCASE("model equal to target: both sides are the mean target entropy") {
    const std::vector<Index> clean{5, 17, 42};
    Eigen::MatrixXd logits(3, cb.size());
    double mean_entropy = 0.0;
    for (Index i = 0; i < 3; ++i) {
      const Eigen::VectorXd q =
          neighbor_distribution(cb, cb.code(clean[i]), temp);
      logits.row(i) = q.array().log().matrix().transpose();
      double entropy = 0.0;
      for (Index k = 0; k < q.size(); ++k) {
        if (q[k] > 0.0) entropy -= q[k] * std::log(q[k]);
      }
      mean_entropy += entropy;
    }
    mean_entropy /= 3.0;
    const ElboExpectation e =
        elbo_expectation_check(clean, logits, cb, temp, 2000, 9);
    CHECK(e.analytic == doctest::Approx(mean_entropy).epsilon(1e-9));
    CHECK(std::abs(e.mc_mean - e.analytic) <= 3.0 * e.std_error + 1e-12);
  }

  SUBCASE("single position: analytic equals soft_xent exactly") {
    const std::vector<Index> clean{33};
    const Eigen::MatrixXd logits = random_logit_rows(1, cb.size(), 5);
    const ElboExpectation e =
        elbo_expectation_check(clean, logits, cb, temp, 50, 10);
    const double direct =
        soft_xent(logits.row(0).transpose(),
                  snce_target(cb, cb.code(33), temp))
            .loss;
    CHECK(e.analytic == doctest::Approx(direct).epsilon(1e-14));
  }

  SUBCASE("L=8 monte carlo agrees within three standard errors") {
    SplitMix64 rng(31);
    std::vector<Index> clean(8);
    for (Index& tok : clean) {
      tok = static_cast<Index>(rng.next_below(cb.size()));
    }
    const Eigen::MatrixXd logits = random_logit_rows(8, cb.size(), 6);
    const ElboExpectation e =
        elbo_expectation_check(clean, logits, cb, temp, 20000, 11);
    CHECK(e.std_error > 0.0);
    CHECK(std::abs(e.mc_mean - e.analytic) <= 3.0 * e.std_error);
  }
}
