#include "snce/toy_lab.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>

#include "snce/errors.hpp"
#include "snce/losses.hpp"
#include "snce/parallel.hpp"
#include "snce/rng.hpp"

namespace snce {

namespace {

// Stream tags fanned out from the run seed.
constexpr std::uint64_t kDataStream = 1;
constexpr std::uint64_t kInitStream = 2;
constexpr std::uint64_t kBatchStream = 3;
constexpr std::uint64_t kProbeStream = 4;

constexpr double kSupportThreshold = 1e-4;
constexpr double kKlFloor = 1e-12;

double gaussian_cdf(double x, double mean, double sd) {
  return 0.5 * std::erfc(-(x - mean) / (sd * std::numbers::sqrt2));
}

// Everything train_toy and gradient_check_mlp share: data, tokenization,
// cached per-sample targets, and the freshly initialized model.
struct ToySetup {
  Codebook codebook;
  Eigen::MatrixXd data;            // n x 2
  std::vector<Index> tokens;       // quantized data
  std::vector<Index> train_tokens; // distinct, sorted
  Eigen::MatrixXd targets;         // n x K (empty for L2 regression)
  MlpModel model;
};

ToySetup build_setup(const ToyConfig& cfg) {
  const SplitMix64 root(cfg.seed);
  Codebook cb = grid_codebook(cfg.grid.lo, cfg.grid.hi, cfg.grid.n_per_axis);
  const Index k = cb.size();

  Eigen::MatrixXd data = sample_mixture(cfg.mixture, cfg.n_samples,
                                        root.fork(kDataStream).next_u64());

  std::vector<Index> tokens(cfg.n_samples);
  for (int i = 0; i < cfg.n_samples; ++i) {
    tokens[i] = quantize(cb, data.row(i).transpose());
  }
  std::set<Index> distinct(tokens.begin(), tokens.end());

  Eigen::MatrixXd targets;
  if (cfg.objective != Objective::kL2Regression) {
    targets.resize(cfg.n_samples, k);
    for (int i = 0; i < cfg.n_samples; ++i) {
      if (cfg.objective == Objective::kSnce) {
        targets.row(i) =
            neighbor_distribution(cb, data.row(i).transpose(), cfg.temp)
                .transpose();
      } else if (cfg.label_smoothing > 0.0) {
        targets.row(i) =
            TargetSpec::smoothed(tokens[i], cfg.label_smoothing)
                .materialize(k)
                .transpose();
      } else {
        targets.row(i) = TargetSpec::one_hot(tokens[i]).materialize(k)
                             .transpose();
      }
    }
  }

  const Index out_dim = cfg.objective == Objective::kL2Regression ? 2 : k;
  MlpModel model(cfg.mlp.depth, cfg.mlp.hidden_width,
                 static_cast<int>(out_dim), cfg.mlp.activation,
                 root.fork(kInitStream).next_u64());

  return ToySetup{std::move(cb), std::move(data), std::move(tokens),
                  std::vector<Index>(distinct.begin(), distinct.end()),
                  std::move(targets), std::move(model)};
}

// Mean supervision over the batch rows: weight vector for CE/SNCE, the mean
// point and mean squared norm for L2.
struct BatchTarget {
  Eigen::VectorXd mean_weights;
  Eigen::Vector2d mean_point = Eigen::Vector2d::Zero();
  double mean_sq_norm = 0.0;
};

BatchTarget batch_target(const ToyConfig& cfg, const ToySetup& setup,
                         const std::vector<int>& batch) {
  BatchTarget t;
  const double inv = 1.0 / static_cast<double>(batch.size());
  if (cfg.objective == Objective::kL2Regression) {
    for (int i : batch) {
      t.mean_point += setup.data.row(i).transpose();
      t.mean_sq_norm += setup.data.row(i).squaredNorm();
    }
    t.mean_point *= inv;
    t.mean_sq_norm *= inv;
  } else {
    t.mean_weights = Eigen::VectorXd::Zero(setup.targets.cols());
    for (int i : batch) t.mean_weights += setup.targets.row(i).transpose();
    t.mean_weights *= inv;
  }
  return t;
}

// Loss and dLoss/dOutput for the current model output.
double batch_loss(const ToyConfig& cfg, const BatchTarget& target,
                  const Eigen::VectorXd& output, Eigen::VectorXd* grad_out) {
  if (cfg.objective == Objective::kL2Regression) {
    const double loss = output.squaredNorm() -
                        2.0 * output.dot(target.mean_point) +
                        target.mean_sq_norm;
    if (grad_out) *grad_out = 2.0 * (output - target.mean_point);
    return loss;
  }
  const LossReport r = soft_xent(output, target.mean_weights);
  if (grad_out) *grad_out = r.grad_logits;
  return r.loss;
}

Eigen::VectorXd softmax_of(const Eigen::VectorXd& logits) {
  const double shift = logits.maxCoeff();
  Eigen::VectorXd p = (logits.array() - shift).exp();
  p /= p.sum();
  return p;
}

std::string format_trimmed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace

MixtureSpec MixtureSpec::two_gaussians() {
  MixtureSpec spec;
  spec.centers.resize(2, 2);
  spec.centers << -2.0, 0.0, 2.0, 0.0;
  spec.variance = 0.25;
  spec.weights = Eigen::VectorXd::Constant(2, 0.5);
  return spec;
}

void MixtureSpec::validate() const {
  if (centers.rows() < 1) {
    throw std::invalid_argument("mixture.centers: need at least one center");
  }
  if (!centers.allFinite()) {
    throw std::invalid_argument("mixture.centers: must be finite");
  }
  if (!(variance > 0.0) || !std::isfinite(variance)) {
    throw std::invalid_argument("mixture.variance: must be positive");
  }
  if (weights.size() != centers.rows()) {
    throw std::invalid_argument(
        "mixture.weights: one weight per center required");
  }
  if (weights.minCoeff() < 0.0 || std::abs(weights.sum() - 1.0) > 1e-9) {
    throw std::invalid_argument("mixture.weights: must be a distribution");
  }
}

const char* objective_name(Objective o) {
  switch (o) {
    case Objective::kL2Regression:
      return "l2";
    case Objective::kCrossEntropy:
      return "ce";
    case Objective::kSnce:
      return "snce";
  }
  return "unknown";
}

void ToyConfig::validate() const {
  mixture.validate();
  if (!(grid.lo < grid.hi)) {
    throw std::invalid_argument("grid.lo/grid.hi: need lo < hi");
  }
  if (grid.n_per_axis < 2) {
    throw std::invalid_argument("grid.n_per_axis: must be >= 2");
  }
  if (n_samples < 1) throw std::invalid_argument("n_samples: must be >= 1");
  if (steps < 1) throw std::invalid_argument("steps: must be >= 1");
  if (batch_size < 0 || batch_size > n_samples) {
    throw std::invalid_argument("batch_size: must lie in [0, n_samples]");
  }
  if (mlp.depth < 1) throw std::invalid_argument("mlp.depth: must be >= 1");
  if (mlp.hidden_width < 1) {
    throw std::invalid_argument("mlp.hidden_width: must be >= 1");
  }
  if (label_smoothing < 0.0 || label_smoothing >= 1.0) {
    throw std::invalid_argument("label_smoothing: must lie in [0, 1)");
  }
  if (label_smoothing > 0.0 && objective != Objective::kCrossEntropy) {
    throw std::invalid_argument(
        "label_smoothing: only valid for the ce objective");
  }
  if (!(optimizer.learning_rate > 0.0)) {
    throw std::invalid_argument("optimizer.learning_rate: must be positive");
  }
}

Eigen::MatrixXd sample_mixture(const MixtureSpec& spec, int n,
                               std::uint64_t seed) {
  spec.validate();
  if (n < 1) throw std::invalid_argument("sample_mixture: need n >= 1");

  const double sd = std::sqrt(spec.variance);
  Eigen::VectorXd cum(spec.weights.size());
  double acc = 0.0;
  for (Index c = 0; c < spec.weights.size(); ++c) {
    acc += spec.weights[c];
    cum[c] = acc;
  }

  SplitMix64 rng(seed);
  Eigen::MatrixXd out(n, 2);
  for (int i = 0; i < n; ++i) {
    const double u = rng.next_double();
    Index c = 0;
    while (c + 1 < cum.size() && u >= cum[c]) ++c;
    out(i, 0) = spec.centers(c, 0) + sd * rng.next_gaussian();
    out(i, 1) = spec.centers(c, 1) + sd * rng.next_gaussian();
  }
  return out;
}

Eigen::VectorXd discretized_truth(const MixtureSpec& spec,
                                  const GridSpec& grid) {
  spec.validate();
  if (!(grid.lo < grid.hi) || grid.n_per_axis < 2) {
    throw std::invalid_argument("discretized_truth: invalid grid");
  }

  const Index n = grid.n_per_axis;
  const double step = (grid.hi - grid.lo) / static_cast<double>(n - 1);
  Eigen::VectorXd axis(n);
  for (Index i = 0; i < n; ++i) {
    axis[i] = (i == n - 1) ? grid.hi : grid.lo + step * static_cast<double>(i);
  }
  // Voronoi boundaries of the axis values, clipped to [lo, hi].
  Eigen::VectorXd bounds(n + 1);
  bounds[0] = grid.lo;
  bounds[n] = grid.hi;
  for (Index i = 1; i < n; ++i) bounds[i] = 0.5 * (axis[i - 1] + axis[i]);

  const double sd = std::sqrt(spec.variance);
  const Index components = spec.centers.rows();
  Eigen::MatrixXd px(components, n), py(components, n);
  for (Index c = 0; c < components; ++c) {
    for (Index i = 0; i < n; ++i) {
      px(c, i) = gaussian_cdf(bounds[i + 1], spec.centers(c, 0), sd) -
                 gaussian_cdf(bounds[i], spec.centers(c, 0), sd);
      py(c, i) = gaussian_cdf(bounds[i + 1], spec.centers(c, 1), sd) -
                 gaussian_cdf(bounds[i], spec.centers(c, 1), sd);
    }
  }

  Eigen::VectorXd out(n * n);
  for (Index iy = 0; iy < n; ++iy) {
    for (Index ix = 0; ix < n; ++ix) {
      double mass = 0.0;
      for (Index c = 0; c < components; ++c) {
        mass += spec.weights[c] * px(c, ix) * py(c, iy);
      }
      out[iy * n + ix] = mass;
    }
  }
  out /= out.sum();
  return out;
}

ToyRunReport train_toy(const ToyConfig& cfg) {
  cfg.validate();
  ToySetup setup = build_setup(cfg);
  const int batch_size = cfg.batch_size == 0 ? cfg.n_samples : cfg.batch_size;

  std::vector<int> full_batch(cfg.n_samples);
  for (int i = 0; i < cfg.n_samples; ++i) full_batch[i] = i;
  const BatchTarget full_target = batch_target(cfg, setup, full_batch);

  SplitMix64 batch_rng = SplitMix64(cfg.seed).fork(kBatchStream);
  Optimizer optimizer(cfg.optimizer.kind, cfg.optimizer.learning_rate,
                      cfg.optimizer.beta1, cfg.optimizer.beta2);

  ToyRunReport report;
  report.objective = cfg.objective;
  report.loss_curve.reserve(cfg.steps);
  report.data_mean = setup.data.colwise().mean().transpose();
  report.train_tokens = setup.train_tokens;

  std::vector<Eigen::MatrixXd> grad_w;
  std::vector<Eigen::VectorXd> grad_b;
  std::vector<int> batch;
  Eigen::VectorXd grad_out;
  for (int step = 1; step <= cfg.steps; ++step) {
    const BatchTarget* target = &full_target;
    BatchTarget sampled;
    if (batch_size < cfg.n_samples) {
      batch.resize(batch_size);
      for (int& idx : batch) {
        idx = static_cast<int>(batch_rng.next_below(cfg.n_samples));
      }
      sampled = batch_target(cfg, setup, batch);
      target = &sampled;
    }

    const Eigen::VectorXd& output = setup.model.forward();
    const double loss = batch_loss(cfg, *target, output, &grad_out);
    if (!std::isfinite(loss)) {
      throw NumericError("train_toy: non-finite loss at step " +
                             std::to_string(step),
                         step);
    }
    setup.model.backward(grad_out, grad_w, grad_b);
    optimizer.step(setup.model.weights(), setup.model.biases(), grad_w,
                   grad_b);
    report.loss_curve.emplace_back(step, loss);
  }

  const Eigen::VectorXd& output = setup.model.forward();
  const Eigen::VectorXd truth = discretized_truth(cfg.mixture, cfg.grid);
  if (cfg.objective == Objective::kL2Regression) {
    report.learned_point = output;
    report.learned = Eigen::VectorXd::Zero(setup.codebook.size());
    report.learned[quantize(setup.codebook, output)] = 1.0;
  } else {
    report.learned_point.setZero();
    report.learned = softmax_of(output);
  }

  ToyMetrics& m = report.metrics;
  m.support_threshold = kSupportThreshold;
  m.kl_to_truth = 0.0;
  for (Index k = 0; k < truth.size(); ++k) {
    if (truth[k] > 0.0) {
      m.kl_to_truth +=
          truth[k] *
          (std::log(truth[k]) - std::log(std::max(report.learned[k], kKlFloor)));
    }
  }
  m.tv_to_truth = 0.5 * (truth - report.learned).lpNorm<1>();
  m.support_size_at_threshold =
      (report.learned.array() > kSupportThreshold).count();
  m.empirical_fit_mass = 0.0;
  for (Index tok : setup.train_tokens) m.empirical_fit_mass += report.learned[tok];
  return report;
}

double gradient_check_mlp(const ToyConfig& cfg, int n_params_probed) {
  cfg.validate();
  if (n_params_probed < 1) {
    throw std::invalid_argument("gradient_check_mlp: need >= 1 probe");
  }
  ToySetup setup = build_setup(cfg);

  std::vector<int> full_batch(cfg.n_samples);
  for (int i = 0; i < cfg.n_samples; ++i) full_batch[i] = i;
  const BatchTarget target = batch_target(cfg, setup, full_batch);

  Eigen::VectorXd grad_out;
  batch_loss(cfg, target, setup.model.forward(), &grad_out);
  std::vector<Eigen::MatrixXd> grad_w;
  std::vector<Eigen::VectorXd> grad_b;
  setup.model.backward(grad_out, grad_w, grad_b);

  double grad_scale = 0.0;
  for (const auto& g : grad_w) {
    grad_scale = std::max(grad_scale, g.cwiseAbs().maxCoeff());
  }
  for (const auto& g : grad_b) {
    grad_scale = std::max(grad_scale, g.cwiseAbs().maxCoeff());
  }
  grad_scale = std::max(grad_scale, 1e-12);

  const double h = 1e-4;
  SplitMix64 probe_rng = SplitMix64(cfg.seed).fork(kProbeStream);
  const Index total = setup.model.parameter_count();
  double worst = 0.0;
  int probed = 0;
  int attempts = 0;
  while (probed < n_params_probed && attempts < 50 * n_params_probed) {
    ++attempts;
    const Index flat =
        static_cast<Index>(probe_rng.next_below(static_cast<std::uint64_t>(total)));
    const double original = setup.model.get_parameter(flat);

    setup.model.set_parameter(flat, original + h);
    const double up = batch_loss(cfg, target, setup.model.forward(), nullptr);
    const std::uint64_t sig_up = setup.model.activation_signature();
    setup.model.set_parameter(flat, original - h);
    const double down = batch_loss(cfg, target, setup.model.forward(), nullptr);
    const std::uint64_t sig_down = setup.model.activation_signature();
    setup.model.set_parameter(flat, original);

    // A relu unit flipping inside the probe window makes the central
    // difference ill-posed (the loss is only piecewise smooth); resample.
    if (sig_up != sig_down) continue;

    const double fd = (up - down) / (2.0 * h);
    const double analytic = MlpModel::gradient_entry(grad_w, grad_b, flat);
    worst = std::max(worst, std::abs(fd - analytic) / grad_scale);
    ++probed;
  }
  if (probed < n_params_probed) {
    throw NumericError("gradient_check_mlp: could not find enough smooth "
                       "probe points",
                       0);
  }
  return worst;
}

std::vector<RunSpec> expand_comparison(
    const ToyConfig& base, const std::vector<Objective>& objectives,
    const std::vector<double>& tau_grid,
    const std::vector<double>& label_smoothing_grid) {
  std::vector<RunSpec> specs;
  for (Objective obj : objectives) {
    ToyConfig cfg = base;
    cfg.objective = obj;
    cfg.label_smoothing = 0.0;
    specs.push_back({objective_name(obj), cfg});
  }
  for (double tau : tau_grid) {
    ToyConfig cfg = base;
    cfg.objective = Objective::kSnce;
    cfg.label_smoothing = 0.0;
    cfg.temp = Temperature(tau);
    specs.push_back({"snce_tau" + format_trimmed(tau), cfg});
  }
  for (double eps : label_smoothing_grid) {
    ToyConfig cfg = base;
    cfg.objective = Objective::kCrossEntropy;
    cfg.label_smoothing = eps;
    specs.push_back({"ce_ls" + format_trimmed(eps), cfg});
  }
  return specs;
}

std::vector<RunRecord> compare_objectives(
    const std::vector<RunSpec>& specs, const std::vector<std::uint64_t>& seeds,
    int threads) {
  if (specs.empty() || seeds.empty()) {
    throw std::invalid_argument(
        "compare_objectives: need at least one spec and one seed");
  }
  std::vector<RunRecord> records(specs.size() * seeds.size());
  parallel_for(static_cast<std::int64_t>(records.size()), threads,
               [&](std::int64_t flat) {
                 const std::size_t s = flat / seeds.size();
                 const std::size_t j = flat % seeds.size();
                 ToyConfig cfg = specs[s].config;
                 cfg.seed = seeds[j];
                 records[flat] =
                     RunRecord{specs[s].label, seeds[j], train_toy(cfg)};
               });
  return records;
}

std::vector<AggregateRow> aggregate_records(
    const std::vector<RunRecord>& records) {
  std::vector<AggregateRow> rows;
  for (const RunRecord& rec : records) {
    auto it = std::find_if(rows.begin(), rows.end(), [&](const AggregateRow& r) {
      return r.label == rec.label;
    });
    if (it == rows.end()) {
      rows.push_back({rec.label, 0, 0.0, 0.0, 0.0, 0.0});
      it = rows.end() - 1;
    }
    ++it->runs;
    it->mean_kl += rec.report.metrics.kl_to_truth;
    it->mean_tv += rec.report.metrics.tv_to_truth;
    it->mean_support +=
        static_cast<double>(rec.report.metrics.support_size_at_threshold);
    it->mean_fit_mass += rec.report.metrics.empirical_fit_mass;
  }
  for (AggregateRow& r : rows) {
    r.mean_kl /= r.runs;
    r.mean_tv /= r.runs;
    r.mean_support /= r.runs;
    r.mean_fit_mass /= r.runs;
  }
  return rows;
}

}  // namespace snce
