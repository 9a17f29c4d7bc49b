#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "snce/losses.hpp"
#include "snce/rng.hpp"

using namespace snce;

namespace {

Eigen::VectorXd random_logits(Index k, SplitMix64& rng, double scale = 2.0) {
  Eigen::VectorXd h(k);
  for (Index i = 0; i < k; ++i) h[i] = scale * rng.next_gaussian();
  return h;
}

Eigen::VectorXd random_distribution(Index k, SplitMix64& rng) {
  Eigen::VectorXd d(k);
  for (Index i = 0; i < k; ++i) d[i] = 10.0 * rng.next_double();
  return softmax_from_distances(d, Temperature(0.71));
}

// Central finite differences on the loss, step 1e-5; max-norm relative
// deviation from the analytic gradient.
double fd_gradient_deviation(const Eigen::VectorXd& h, const TargetSpec& t) {
  const LossReport analytic = soft_xent(h, t);
  const double step = 1e-5;
  Eigen::VectorXd probe = h;
  double worst_abs = 0.0;
  for (Index i = 0; i < h.size(); ++i) {
    probe[i] = h[i] + step;
    const double up = soft_xent(probe, t).loss;
    probe[i] = h[i] - step;
    const double down = soft_xent(probe, t).loss;
    probe[i] = h[i];
    worst_abs = std::max(
        worst_abs,
        std::abs((up - down) / (2.0 * step) - analytic.grad_logits[i]));
  }
  return worst_abs / std::max(analytic.grad_logits.cwiseAbs().maxCoeff(),
                              1e-12);
}

const Eigen::Vector3d kThreeCodeQ(0.72139918427396865, 0.26538792877224193,
                                  0.013212886953789414);

Codebook grid10() { return grid_codebook(-5.0, 5.0, 10); }

}  // namespace

TEST_CASE("uniform logits against a one-hot target") {
  Eigen::VectorXd h = Eigen::VectorXd::Zero(2);
  const LossReport r = soft_xent(h, TargetSpec::one_hot(0));
  CHECK(r.loss == doctest::Approx(0.69314718055994529).epsilon(1e-14));
  CHECK(r.grad_logits[0] == doctest::Approx(-0.5).epsilon(1e-14));
  CHECK(r.grad_logits[1] == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("target equal to the model distribution is a fixed point") {
  SplitMix64 rng(42);
  const Eigen::VectorXd h = random_logits(20, rng);
  Eigen::VectorXd p = (h.array() - h.maxCoeff()).exp();
  p /= p.sum();
  const LossReport r = soft_xent(h, p);
  CHECK(r.grad_logits.cwiseAbs().maxCoeff() <= 1e-12);
  double entropy = 0.0;
  for (Index i = 0; i < p.size(); ++i) entropy -= p[i] * std::log(p[i]);
  CHECK(r.loss == doctest::Approx(entropy).epsilon(1e-12));
}

TEST_CASE("three-code neighbor target: loss and gradient frozen oracle") {
  Eigen::Vector3d h(1.0, 0.0, -1.0);
  NeighborDistribution nd;
  nd.probs = kThreeCodeQ;
  const LossReport r = soft_xent(h, TargetSpec::neighbor(nd));
  // Direct-summation oracle values
  CHECK(r.loss == doctest::Approx(0.69941966712420112).epsilon(1e-12));
  CHECK(r.grad_logits[0] ==
        doctest::Approx(-0.056158228499146756).epsilon(1e-10));
  CHECK(r.grad_logits[1] ==
        doctest::Approx(-0.020659457717444291).epsilon(1e-10));
  CHECK(r.grad_logits[2] ==
        doctest::Approx(0.076817686216591019).epsilon(1e-10));
  CHECK(fd_gradient_deviation(h, TargetSpec::neighbor(nd)) < 1e-5);
}

TEST_CASE("label smoothing materialization") {
  const Eigen::VectorXd w = TargetSpec::smoothed(1, 0.1).materialize(4);
  CHECK(w[0] == doctest::Approx(0.033333333333333333).epsilon(1e-15));
  CHECK(w[1] == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(w[2] == doctest::Approx(0.033333333333333333).epsilon(1e-15));
  CHECK(w[3] == doctest::Approx(0.033333333333333333).epsilon(1e-15));
  CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-12));

  const Eigen::VectorXd w5 = TargetSpec::smoothed(0, 0.05).materialize(4);
  CHECK(w5[0] == doctest::Approx(0.95).epsilon(1e-15));
  CHECK(w5[1] == doctest::Approx(0.05 / 3.0).epsilon(1e-15));

  CHECK_THROWS_AS(TargetSpec::smoothed(0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(TargetSpec::smoothed(0, 0.1).materialize(1),
                  std::invalid_argument);
}

TEST_CASE("gradient matches finite differences across sizes and targets") {
  SplitMix64 rng(7);
  for (Index k : {Index{2}, Index{10}, Index{2500}}) {
    const Eigen::VectorXd h = random_logits(k, rng);
    const Index token = static_cast<Index>(rng.next_below(k));
    NeighborDistribution nd;
    nd.probs = random_distribution(k, rng);

    CHECK(fd_gradient_deviation(h, TargetSpec::one_hot(token)) < 1e-5);
    CHECK(fd_gradient_deviation(h, TargetSpec::smoothed(token, 0.1)) < 1e-5);
    CHECK(fd_gradient_deviation(h, TargetSpec::neighbor(nd)) < 1e-5);
  }
}

TEST_CASE("gradient components sum to zero and follow the sign structure") {
  SplitMix64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const Index k = 2 + static_cast<Index>(rng.next_below(100));
    const Eigen::VectorXd h = random_logits(k, rng);
    const Index token = static_cast<Index>(rng.next_below(k));
    const Eigen::VectorXd q = random_distribution(k, rng);

    const LossReport onehot = soft_xent(h, TargetSpec::one_hot(token));
    CHECK(std::abs(onehot.grad_logits.sum()) <= 1e-9);
    CHECK(onehot.grad_logits[token] < 0.0);
    for (Index i = 0; i < k; ++i) {
      if (i != token) CHECK(onehot.grad_logits[i] > 0.0);
    }

    const LossReport soft = soft_xent(h, q);
    CHECK(std::abs(soft.grad_logits.sum()) <= 1e-9);
    const Eigen::VectorXd p = soft.grad_logits + q;  // softmax(h)
    for (Index i = 0; i < k; ++i) {
      // minimized-loss gradient is negative exactly where q_i > p_i
      if (q[i] > p[i]) {
        CHECK(soft.grad_logits[i] < 0.0);
      } else if (q[i] < p[i]) {
        CHECK(soft.grad_logits[i] > 0.0);
      }
    }

    const LossReport smooth = soft_xent(h, TargetSpec::smoothed(token, 0.1));
    const double floor = 0.1 / static_cast<double>(k - 1);
    for (Index i = 0; i < k; ++i) {
      if (i == token) continue;
      CHECK(smooth.grad_logits[i] == doctest::Approx(p[i] - floor)
                                         .epsilon(1e-9));
    }
  }
}

TEST_CASE("snce loss at tiny tau equals one-hot cross entropy") {
  const Codebook cb = grid10();
  SplitMix64 rng(3);
  Eigen::VectorXd z(2);
  z << 1.3, -2.2;
  const Eigen::VectorXd h = random_logits(cb.size(), rng);
  const TargetSpec sharp = snce_target(cb, z, Temperature(1e-3));
  const TargetSpec hard = TargetSpec::one_hot(quantize(cb, z));
  CHECK(std::abs(soft_xent(h, sharp).loss - soft_xent(h, hard).loss) < 1e-5);
}

TEST_CASE("snce_target composes neighbor_distribution") {
  const Codebook cb = grid10();
  Eigen::VectorXd z(2);
  z << 0.4, 0.8;
  const TargetSpec t = snce_target(cb, z, Temperature(0.71));
  const Eigen::VectorXd direct =
      neighbor_distribution(cb, z, Temperature(0.71));
  CHECK((t.materialize(cb.size()) - direct).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("validation errors") {
  Eigen::VectorXd h = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd bad = Eigen::VectorXd::Constant(3, 0.5);  // sums to 1.5
  CHECK_THROWS_AS(soft_xent(h, bad), std::invalid_argument);
  Eigen::VectorXd wrong_len = Eigen::VectorXd::Constant(2, 0.5);
  CHECK_THROWS_AS(soft_xent(h, wrong_len), std::invalid_argument);
  Eigen::VectorXd nan_logits = h;
  nan_logits[0] = std::numeric_limits<double>::quiet_NaN();
  Eigen::VectorXd ok = Eigen::VectorXd::Constant(3, 1.0 / 3.0);
  CHECK_THROWS_AS(soft_xent(nan_logits, ok), std::invalid_argument);
  CHECK_THROWS_AS(TargetSpec::one_hot(5).materialize(3),
                  std::invalid_argument);
}

TEST_CASE("ar sequence loss") {
  const Codebook cb = grid10();
  const Temperature temp = Temperature::from_two_tau_sq(1.0);
  SplitMix64 rng(11);

  SUBCASE("single position reduces to soft_xent") {
    Eigen::MatrixXd logits(1, cb.size());
    logits.row(0) = random_logits(cb.size(), rng).transpose();
    SequenceBatch batch;
    batch.tokens = {12};
    batch.target_kind = TargetSpec::Kind::kOneHot;
    const SequenceLossReport seq = ar_sequence_loss(logits, batch, cb, temp);
    const LossReport single =
        soft_xent(logits.row(0).transpose(), TargetSpec::one_hot(12));
    CHECK(seq.loss == doctest::Approx(single.loss).epsilon(1e-15));
    CHECK((seq.grad_logits.row(0).transpose() - single.grad_logits)
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }

  SUBCASE("one-hot targets equal mean token-level cross entropy") {
    const Index length = 5;
    Eigen::MatrixXd logits(length, cb.size());
    SequenceBatch batch;
    for (Index i = 0; i < length; ++i) {
      logits.row(i) = random_logits(cb.size(), rng).transpose();
      batch.tokens.push_back(static_cast<Index>(rng.next_below(cb.size())));
    }
    batch.target_kind = TargetSpec::Kind::kOneHot;
    const SequenceLossReport seq = ar_sequence_loss(logits, batch, cb, temp);
    double mean_ce = 0.0;
    for (Index i = 0; i < length; ++i) {
      mean_ce += soft_xent(logits.row(i).transpose(),
                           TargetSpec::one_hot(batch.tokens[i]))
                     .loss;
    }
    mean_ce /= static_cast<double>(length);
    CHECK(seq.loss == doctest::Approx(mean_ce).epsilon(1e-12));
  }

  SUBCASE("neighbor targets match a per-position oracle") {
    const Index length = 3;
    Eigen::MatrixXd logits(length, cb.size());
    Eigen::MatrixXd latents(length, 2);
    for (Index i = 0; i < length; ++i) {
      logits.row(i) = random_logits(cb.size(), rng).transpose();
      latents(i, 0) = 4.0 * rng.next_double() - 2.0;
      latents(i, 1) = 4.0 * rng.next_double() - 2.0;
    }
    SequenceBatch batch;
    batch.latents = latents;
    batch.target_kind = TargetSpec::Kind::kNeighbor;
    const SequenceLossReport seq = ar_sequence_loss(logits, batch, cb, temp);

    double oracle = 0.0;
    for (Index i = 0; i < length; ++i) {
      const Eigen::VectorXd q =
          neighbor_distribution(cb, latents.row(i).transpose(), temp);
      oracle += soft_xent(logits.row(i).transpose(), q).loss;
    }
    oracle /= static_cast<double>(length);
    CHECK(std::abs(seq.loss - oracle) <= 1e-10);
  }

  SUBCASE("shape mismatch") {
    Eigen::MatrixXd logits(2, cb.size());
    logits.setZero();
    SequenceBatch batch;
    batch.tokens = {0};
    CHECK_THROWS_AS(ar_sequence_loss(logits, batch, cb, temp),
                    std::invalid_argument);
  }
}

TEST_CASE("monte carlo estimate of the soft objective") {
  SUBCASE("one-hot q is exact with zero standard error") {
    Eigen::Vector3d h(0.3, -0.2, 1.4);
    Eigen::Vector3d q(0.0, 1.0, 0.0);
    const McEstimate mc = mc_snce_estimate(h, q, 1000, 77);
    CHECK(mc.estimate == soft_xent(h, q).loss);
    CHECK(mc.std_error == 0.0);
  }

  SUBCASE("1e5 samples agree within three standard errors") {
    Eigen::Vector3d h(1.0, 0.0, -1.0);
    const Eigen::VectorXd q = kThreeCodeQ;
    const McEstimate mc = mc_snce_estimate(h, q, 100000, 2027);
    const double exact = soft_xent(h, q).loss;
    CHECK(mc.std_error > 0.0);
    CHECK(std::abs(mc.estimate - exact) <= 3.0 * mc.std_error);
  }

  SUBCASE("same seed gives identical estimates") {
    SplitMix64 rng(5);
    const Eigen::VectorXd h = random_logits(50, rng);
    const Eigen::VectorXd q = random_distribution(50, rng);
    const McEstimate a = mc_snce_estimate(h, q, 5000, 99);
    const McEstimate b = mc_snce_estimate(h, q, 5000, 99);
    CHECK(a.estimate == b.estimate);
    CHECK(a.std_error == b.std_error);
  }

  SUBCASE("invalid inputs") {
    Eigen::Vector2d h(0.0, 0.0);
    Eigen::Vector2d q(0.7, 0.2);  // not a distribution
    CHECK_THROWS_AS(mc_snce_estimate(h, q, 10, 1), std::invalid_argument);
    Eigen::Vector2d ok(0.5, 0.5);
    CHECK_THROWS_AS(mc_snce_estimate(h, ok, 0, 1), std::invalid_argument);
  }
}

TEST_CASE("kl decomposition") {
  SplitMix64 rng(13);

  SUBCASE("q equal to softmax(h) gives zero kl") {
    const Eigen::VectorXd h = random_logits(30, rng);
    Eigen::VectorXd p = (h.array() - h.maxCoeff()).exp();
    p /= p.sum();
    const KlDecomposition kd = kl_decomposition_check(h, p);
    CHECK(std::abs(kd.kl) <= 1e-12);
    CHECK(kd.cross_entropy == doctest::Approx(kd.entropy).epsilon(1e-12));
  }

  SUBCASE("one-hot q has zero entropy") {
    Eigen::Vector3d h(2.0, 1.0, 0.0);
    Eigen::Vector3d q(1.0, 0.0, 0.0);
    const KlDecomposition kd = kl_decomposition_check(h, q);
    CHECK(kd.entropy == 0.0);
    CHECK(kd.kl == doctest::Approx(kd.cross_entropy).epsilon(1e-15));
  }

  SUBCASE("identity holds on random inputs") {
    for (int trial = 0; trial < 20; ++trial) {
      const Index k = 2 + static_cast<Index>(rng.next_below(500));
      const Eigen::VectorXd h = random_logits(k, rng);
      const Eigen::VectorXd q = random_distribution(k, rng);
      const KlDecomposition kd = kl_decomposition_check(h, q);
      CHECK(std::abs(kd.kl - (kd.cross_entropy - kd.entropy)) <= 1e-9);
      CHECK(std::abs(kd.cross_entropy - soft_xent(h, q).loss) <= 1e-12);
      CHECK(kd.kl >= -1e-12);
    }
  }
}

TEST_CASE("policy gradient identity") {
  CHECK(policy_gradient_check(Eigen::Vector2d(0.0, 0.0),
                              Eigen::Vector2d(1.0, 0.0)) <= 1e-12);
  CHECK(policy_gradient_check(Eigen::Vector3d(1.0, 0.0, -1.0), kThreeCodeQ) <
        1e-10);
  SplitMix64 rng(21);
  const Eigen::VectorXd h = random_logits(100, rng);
  const Eigen::VectorXd q = random_distribution(100, rng);
  CHECK(policy_gradient_check(h, q) < 1e-10);
}
