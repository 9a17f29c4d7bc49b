#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "snce/codebook.hpp"
#include "snce/mlp.hpp"
#include "snce/neighbor.hpp"

namespace snce {

// Isotropic Gaussian mixture in the plane.
struct MixtureSpec {
  Eigen::Matrix<double, Eigen::Dynamic, 2> centers;
  double variance = 0.25;
  Eigen::VectorXd weights;

  // Two components at (-2,0) and (2,0), variance 0.25, equal weights.
  static MixtureSpec two_gaussians();
  void validate() const;
};

struct GridSpec {
  double lo = -5.0;
  double hi = 5.0;
  int n_per_axis = 50;
};

enum class Objective { kL2Regression, kCrossEntropy, kSnce };
const char* objective_name(Objective o);

struct MlpSpec {
  int depth = 10;
  int hidden_width = 256;
  Activation activation = Activation::kRelu;
};

struct OptimizerSpec {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
};

struct ToyConfig {
  MixtureSpec mixture = MixtureSpec::two_gaussians();
  GridSpec grid;
  int n_samples = 100;
  Objective objective = Objective::kSnce;
  Temperature temp = Temperature::from_two_tau_sq(1.0);
  double label_smoothing = 0.0;  // cross-entropy only; 0 disables
  int steps = 2000;
  int batch_size = 0;  // 0 = full batch
  MlpSpec mlp;
  OptimizerSpec optimizer;
  std::uint64_t seed = 1;

  void validate() const;
};

struct ToyMetrics {
  double kl_to_truth;      // KL(truth || learned), learned floored at 1e-12
  double tv_to_truth;      // half L1
  Index support_size_at_threshold;
  double support_threshold;
  double empirical_fit_mass;  // learned mass on the distinct training tokens
};

struct ToyRunReport {
  Objective objective;
  Eigen::VectorXd learned;        // probs over K; for L2, one-hot at the
                                  // quantized output point
  Eigen::Vector2d learned_point;  // L2 output (zero otherwise)
  Eigen::Vector2d data_mean;      // empirical mean of the training samples
  ToyMetrics metrics;
  std::vector<std::pair<int, double>> loss_curve;  // (step, loss)
  std::vector<Index> train_tokens;                 // distinct, sorted
};

// n i.i.d. draws: component by weight, then an isotropic Gaussian around its
// center. Normals come from Box-Muller over the SplitMix64 stream.
Eigen::MatrixXd sample_mixture(const MixtureSpec& spec, int n,
                               std::uint64_t seed);

// Ground-truth token distribution P(quantize(Z) = k) for Z ~ mixture:
// per-cell product of 1D Gaussian CDF differences, clipped to the grid box
// and renormalized.
Eigen::VectorXd discretized_truth(const MixtureSpec& spec,
                                  const GridSpec& grid);

// Trains the fixed-input MLP by manual backprop under the configured
// objective and reports the learned distribution plus divergence metrics.
// Deterministic per (config, seed); a non-finite loss raises NumericError.
ToyRunReport train_toy(const ToyConfig& config);

// Central finite differences (step 1e-4) on n_params_probed randomly chosen
// parameters of one full-batch loss evaluation. Returns
// max_p |fd_p - analytic_p| / max(||analytic||_inf, 1e-12).
double gradient_check_mlp(const ToyConfig& config, int n_params_probed);

struct RunSpec {
  std::string label;
  ToyConfig config;
};

struct RunRecord {
  std::string label;
  std::uint64_t seed;
  ToyRunReport report;
};

struct AggregateRow {
  std::string label;
  int runs;
  double mean_kl;
  double mean_tv;
  double mean_support;
  double mean_fit_mass;
};

// Base rows for the requested objectives plus optional snce tau and
// cross-entropy label-smoothing sweeps.
std::vector<RunSpec> expand_comparison(
    const ToyConfig& base, const std::vector<Objective>& objectives,
    const std::vector<double>& tau_grid,
    const std::vector<double>& label_smoothing_grid);

// Runs every (spec, seed) pair; independent runs may execute in parallel.
std::vector<RunRecord> compare_objectives(
    const std::vector<RunSpec>& specs,
    const std::vector<std::uint64_t>& seeds, int threads);

std::vector<AggregateRow> aggregate_records(
    const std::vector<RunRecord>& records);

}  // namespace snce
