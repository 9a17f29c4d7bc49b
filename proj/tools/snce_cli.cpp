// Command-line front end: toy experiment runner, neighbor-distribution
// inspector, property verification suite, and large-codebook benchmark.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "snce/codebook.hpp"
#include "snce/config_json.hpp"
#include "snce/errors.hpp"
#include "snce/losses.hpp"
#include "snce/manifest.hpp"
#include "snce/neighbor.hpp"
#include "snce/parallel.hpp"
#include "snce/rng.hpp"
#include "snce/toy_lab.hpp"
#include "snce/verify.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitVerificationFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_grid_csv(const fs::path& path, const Eigen::VectorXd& probs,
                    int n_per_axis) {
  std::ofstream f(path);
  if (!f) throw snce::IoError("cannot open " + path.string());
  for (int iy = 0; iy < n_per_axis; ++iy) {
    for (int ix = 0; ix < n_per_axis; ++ix) {
      if (ix) f << ',';
      f << format_double(probs[static_cast<snce::Index>(iy) * n_per_axis + ix]);
    }
    f << '\n';
  }
}

// ---------------------------------------------------------------- toy ----

struct ToyCliOptions {
  std::string config_path;
  std::string out_dir = "toy_out";
  std::vector<std::uint64_t> seeds;
  int threads = 1;
  bool json_output = false;
};

int run_toy(const ToyCliOptions& opts) {
  std::ifstream config_file(opts.config_path);
  if (!config_file) {
    throw snce::IoError("cannot open config " + opts.config_path);
  }
  json config_json;
  try {
    config_json = json::parse(config_file);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config: not valid JSON (" +
                                std::string(e.what()) + ")");
  }

  snce::ToyRunPlan plan = snce::parse_toy_plan(config_json);
  if (!opts.seeds.empty()) plan.seeds = opts.seeds;

  snce::RunManifest manifest;
  manifest.command = "toy";
  manifest.config_hash = snce::fnv1a64_hex(config_json.dump());
  manifest.seed = plan.base.seed;
  manifest.started_at = snce::iso8601_utc_now();

  fs::create_directories(opts.out_dir);
  const fs::path out(opts.out_dir);

  const Eigen::VectorXd truth =
      snce::discretized_truth(plan.base.mixture, plan.base.grid);
  write_grid_csv(out / "truth_grid.csv", truth, plan.base.grid.n_per_axis);
  manifest.outputs.push_back("truth_grid.csv");

  const std::vector<snce::RunSpec> specs = snce::expand_comparison(
      plan.base, plan.objectives, plan.tau_grid, plan.label_smoothing_grid);
  const std::vector<snce::RunRecord> records =
      snce::compare_objectives(specs, plan.seeds, opts.threads);

  for (const snce::RunRecord& record : records) {
    const auto spec =
        std::find_if(specs.begin(), specs.end(), [&](const snce::RunSpec& s) {
          return s.label == record.label;
        });
    snce::ToyConfig cfg = spec->config;
    cfg.seed = record.seed;

    const std::string run_dir_name =
        record.label + "_seed" + std::to_string(record.seed);
    fs::create_directories(out / run_dir_name);
    {
      std::ofstream f(out / run_dir_name / "report.json");
      if (!f) throw snce::IoError("cannot write report.json");
      f << snce::run_record_to_json(record, cfg).dump(2) << "\n";
    }
    write_grid_csv(out / run_dir_name / "learned_grid.csv",
                   record.report.learned, cfg.grid.n_per_axis);
    manifest.outputs.push_back(run_dir_name + "/report.json");
    manifest.outputs.push_back(run_dir_name + "/learned_grid.csv");
  }

  const std::vector<snce::AggregateRow> aggregates =
      snce::aggregate_records(records);
  {
    std::ofstream f(out / "summary.csv");
    if (!f) throw snce::IoError("cannot write summary.csv");
    f << "label,seed,kl_to_truth,tv_to_truth,support_size,empirical_fit_mass\n";
    for (const snce::RunRecord& r : records) {
      f << r.label << ',' << r.seed << ','
        << format_double(r.report.metrics.kl_to_truth) << ','
        << format_double(r.report.metrics.tv_to_truth) << ','
        << r.report.metrics.support_size_at_threshold << ','
        << format_double(r.report.metrics.empirical_fit_mass) << '\n';
    }
    for (const snce::AggregateRow& a : aggregates) {
      f << a.label << ",mean," << format_double(a.mean_kl) << ','
        << format_double(a.mean_tv) << ',' << format_double(a.mean_support)
        << ',' << format_double(a.mean_fit_mass) << '\n';
    }
  }
  manifest.outputs.push_back("summary.csv");

  manifest.finished_at = snce::iso8601_utc_now();
  snce::write_manifest(manifest, out);

  if (opts.json_output) {
    json doc = json::array();
    for (const snce::AggregateRow& a : aggregates) {
      doc.push_back({{"label", a.label},
                     {"runs", a.runs},
                     {"mean_kl_to_truth", a.mean_kl},
                     {"mean_tv_to_truth", a.mean_tv},
                     {"mean_support_size", a.mean_support},
                     {"mean_empirical_fit_mass", a.mean_fit_mass}});
    }
    std::cout << doc.dump(2) << "\n";
  } else {
    for (const snce::AggregateRow& a : aggregates) {
      std::printf("%-14s runs=%d  mean_kl=%.4f  mean_tv=%.4f  "
                  "mean_support=%.1f  mean_fit_mass=%.4f\n",
                  a.label.c_str(), a.runs, a.mean_kl, a.mean_tv,
                  a.mean_support, a.mean_fit_mass);
    }
  }
  return kExitOk;
}

// ----------------------------------------------------------- neighbor ----

struct NeighborCliOptions {
  std::string codebook_path;
  std::vector<double> grid;  // lo hi n
  std::vector<double> z;
  double tau = 0.0;          // 0 = unset
  double two_tau_sq = 0.0;   // 0 = unset
  snce::Index topk = 0;      // 0 = dense
  int top_print = 10;
  std::string csv_path;
  std::string write_codebook_path;
  std::string out_dir = ".";
  bool json_output = false;
};

int run_neighbor(const NeighborCliOptions& opts) {
  std::optional<snce::Codebook> cb;
  if (!opts.codebook_path.empty()) {
    cb = snce::load_codebook(opts.codebook_path);
  } else if (!opts.grid.empty()) {
    if (opts.grid.size() != 3) {
      throw std::invalid_argument("--grid needs lo,hi,n_per_axis");
    }
    cb = snce::grid_codebook(opts.grid[0], opts.grid[1],
                             static_cast<int>(opts.grid[2]));
  } else {
    throw std::invalid_argument("give one of --codebook or --grid");
  }
  if (!opts.write_codebook_path.empty()) {
    snce::save_codebook(*cb, opts.write_codebook_path);
  }

  if (opts.tau > 0.0 && opts.two_tau_sq > 0.0) {
    throw std::invalid_argument("give at most one of --tau and --two-tau-sq");
  }
  const snce::Temperature temp =
      opts.two_tau_sq > 0.0
          ? snce::Temperature::from_two_tau_sq(opts.two_tau_sq)
          : snce::Temperature(opts.tau > 0.0 ? opts.tau : 0.71);

  const Eigen::VectorXd z =
      Eigen::Map<const Eigen::VectorXd>(opts.z.data(),
                                        static_cast<snce::Index>(opts.z.size()));
  const Eigen::VectorXd dists = snce::distances(*cb, z);

  // (token, distance, prob) rows, dense or top-M truncated.
  std::vector<std::tuple<snce::Index, double, double>> rows;
  if (opts.topk > 0) {
    const snce::NeighborDistribution sparse =
        snce::neighbor_distribution_topk(*cb, z, temp, opts.topk);
    for (std::size_t i = 0; i < sparse.indices.size(); ++i) {
      const snce::Index token = sparse.indices[i];
      rows.emplace_back(token, dists[token],
                        sparse.probs[static_cast<snce::Index>(i)]);
    }
  } else {
    const Eigen::VectorXd q = snce::neighbor_distribution(*cb, z, temp);
    rows.reserve(q.size());
    for (snce::Index k = 0; k < q.size(); ++k) {
      rows.emplace_back(k, dists[k], q[k]);
    }
  }

  if (!opts.csv_path.empty()) {
    std::ofstream f(opts.csv_path);
    if (!f) throw snce::IoError("cannot open " + opts.csv_path);
    f << "token,distance,prob\n";
    for (const auto& [token, dist, prob] : rows) {
      f << token << ',' << format_double(dist) << ',' << format_double(prob)
        << '\n';
    }
  }

  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    if (std::get<2>(a) != std::get<2>(b)) {
      return std::get<2>(a) > std::get<2>(b);
    }
    return std::get<0>(a) < std::get<0>(b);
  });
  const std::size_t shown =
      std::min<std::size_t>(rows.size(),
                            static_cast<std::size_t>(std::max(opts.top_print, 1)));
  if (opts.json_output) {
    json doc = json::array();
    for (std::size_t i = 0; i < shown; ++i) {
      doc.push_back({{"token", std::get<0>(rows[i])},
                     {"distance", std::get<1>(rows[i])},
                     {"prob", std::get<2>(rows[i])}});
    }
    std::cout << doc.dump(2) << "\n";
  } else {
    for (std::size_t i = 0; i < shown; ++i) {
      json line{{"token", std::get<0>(rows[i])},
                {"distance", std::get<1>(rows[i])},
                {"prob", std::get<2>(rows[i])}};
      std::cout << line.dump() << "\n";
    }
  }

  json effective{{"codebook", opts.codebook_path},
                 {"grid", opts.grid},
                 {"z", opts.z},
                 {"tau", temp.tau()},
                 {"topk", opts.topk}};
  snce::RunManifest manifest;
  manifest.command = "neighbor";
  manifest.config_hash = snce::fnv1a64_hex(effective.dump());
  manifest.seed = 0;
  manifest.started_at = manifest.finished_at = snce::iso8601_utc_now();
  if (!opts.csv_path.empty()) manifest.outputs.push_back(opts.csv_path);
  fs::create_directories(opts.out_dir);
  snce::write_manifest(manifest, opts.out_dir);
  return kExitOk;
}

// ------------------------------------------------------------- verify ----

struct VerifyCliOptions {
  std::uint64_t seed = 1;
  bool break_gradient = false;
  bool json_output = false;
  std::string out_dir = ".";
};

int run_verify(const VerifyCliOptions& opts) {
  snce::VerifyOptions vopts;
  vopts.seed = opts.seed;
  vopts.break_gradient = opts.break_gradient;
  const std::vector<snce::CheckResult> results = snce::run_verification(vopts);

  if (opts.json_output) {
    json doc = json::array();
    for (const snce::CheckResult& r : results) {
      doc.push_back({{"name", r.name},
                     {"passed", r.passed},
                     {"observed", r.observed},
                     {"threshold", r.threshold},
                     {"detail", r.detail}});
    }
    std::cout << doc.dump(2) << "\n";
  } else {
    for (const snce::CheckResult& r : results) {
      std::printf("[%s] %-32s observed=%-12.4g threshold=%-12.4g %s\n",
                  r.passed ? "PASS" : "FAIL", r.name.c_str(), r.observed,
                  r.threshold, r.detail.c_str());
    }
  }

  json effective{{"seed", opts.seed}, {"break_gradient", opts.break_gradient}};
  snce::RunManifest manifest;
  manifest.command = "verify";
  manifest.config_hash = snce::fnv1a64_hex(effective.dump());
  manifest.seed = opts.seed;
  manifest.started_at = manifest.finished_at = snce::iso8601_utc_now();
  fs::create_directories(opts.out_dir);
  snce::write_manifest(manifest, opts.out_dir);

  if (!snce::all_passed(results)) {
    std::fprintf(stderr, "verification failed:");
    for (const snce::CheckResult& r : results) {
      if (!r.passed) std::fprintf(stderr, " %s", r.name.c_str());
    }
    std::fprintf(stderr, "\n");
    return kExitVerificationFailure;
  }
  return kExitOk;
}

// -------------------------------------------------------------- bench ----

struct BenchCliOptions {
  snce::Index k = 4096;
  snce::Index d = 64;
  snce::Index l = 256;
  snce::Index topk = 0;
  int threads = 1;
  std::uint64_t seed = 1;
  std::string metric = "l2";
  double tau = 0.71;
  std::string out_dir = ".";
  bool json_output = false;
};

int run_bench(const BenchCliOptions& opts) {
  if (opts.k < 1 || opts.d < 1 || opts.l < 1) {
    throw std::invalid_argument("bench: k, d, l must be positive");
  }
  const double bytes = static_cast<double>(opts.k) * opts.d * 4.0 +
                       static_cast<double>(opts.threads + 1) * opts.k * 8.0;
  if (bytes > 6e9) {
    throw std::invalid_argument("bench: requested sizes exceed memory budget");
  }
  snce::Metric metric = snce::Metric::kL2Squared;
  if (opts.metric == "neg_dot") {
    metric = snce::Metric::kNegDot;
  } else if (opts.metric == "neg_cosine") {
    metric = snce::Metric::kNegCosine;
  } else if (opts.metric != "l2") {
    throw std::invalid_argument("bench: metric must be l2, neg_dot or neg_cosine");
  }

  const snce::SplitMix64 root(opts.seed);
  snce::SplitMix64 cb_rng = root.fork(1);
  snce::CodeMatrix vectors(opts.k, opts.d);
  for (snce::Index i = 0; i < vectors.size(); ++i) {
    *(vectors.data() + i) = static_cast<float>(cb_rng.next_gaussian());
  }
  const snce::Codebook cb(std::move(vectors), metric);

  snce::SplitMix64 z_rng = root.fork(2);
  Eigen::MatrixXd latents(opts.l, opts.d);
  for (snce::Index i = 0; i < latents.size(); ++i) {
    *(latents.data() + i) = z_rng.next_gaussian();
  }

  const snce::Temperature temp(opts.tau);
  Eigen::VectorXd sum_dev(opts.l);
  Eigen::VectorXd naive_dev =
      Eigen::VectorXd::Constant(opts.l, -1.0);  // -1 = not evaluated
  std::vector<char> finite(opts.l, 0);

  const bool check_naive = opts.k <= 4096;
  const auto dense_start = std::chrono::steady_clock::now();
  snce::parallel_for(opts.l, opts.threads, [&](std::int64_t i) {
    const Eigen::VectorXd z = latents.row(i).transpose();
    const Eigen::VectorXd q = snce::neighbor_distribution(cb, z, temp);
    sum_dev[i] = std::abs(q.sum() - 1.0);
    finite[i] = q.allFinite() && q.minCoeff() >= 0.0;
    if (check_naive) {
      const Eigen::VectorXd direct =
          snce::softmax_from_distances_direct(snce::distances(cb, z), temp);
      naive_dev[i] = (q - direct).cwiseAbs().maxCoeff();
    }
  });
  const double dense_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                    dense_start)
          .count();

  bool ok = true;
  for (snce::Index i = 0; i < opts.l; ++i) ok = ok && finite[i];
  const double max_sum_dev = sum_dev.maxCoeff();
  ok = ok && max_sum_dev <= 1e-6;
  const double max_naive_dev = check_naive ? naive_dev.maxCoeff() : -1.0;
  if (check_naive) ok = ok && max_naive_dev < 1e-6;

  json doc{{"k", opts.k},
           {"d", opts.d},
           {"l", opts.l},
           {"metric", snce::metric_name(metric)},
           {"tau", opts.tau},
           {"threads", opts.threads},
           {"dense_seconds", dense_seconds},
           {"dense_tokens_per_sec",
            static_cast<double>(opts.l) / std::max(dense_seconds, 1e-12)},
           {"max_sum_deviation", max_sum_dev},
           {"all_finite", ok}};
  if (check_naive) doc["naive_max_deviation"] = max_naive_dev;

  if (opts.topk > 0) {
    Eigen::VectorXd sparse_dev(opts.l);
    const auto topk_start = std::chrono::steady_clock::now();
    snce::parallel_for(opts.l, opts.threads, [&](std::int64_t i) {
      const snce::NeighborDistribution nd = snce::neighbor_distribution_topk(
          cb, latents.row(i).transpose(), temp, opts.topk);
      sparse_dev[i] = std::abs(nd.probs.sum() - 1.0);
    });
    const double topk_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                      topk_start)
            .count();
    const double max_sparse_dev = sparse_dev.maxCoeff();
    ok = ok && max_sparse_dev <= 1e-9;
    doc["topk"] = {{"m", opts.topk},
                   {"seconds", topk_seconds},
                   {"tokens_per_sec",
                    static_cast<double>(opts.l) / std::max(topk_seconds, 1e-12)},
                   {"max_sum_deviation", max_sparse_dev}};
  }

  if (opts.json_output) {
    std::cout << doc.dump(2) << "\n";
  } else {
    std::printf("K=%lld D=%lld L=%lld metric=%s threads=%d\n",
                static_cast<long long>(opts.k), static_cast<long long>(opts.d),
                static_cast<long long>(opts.l), snce::metric_name(metric),
                opts.threads);
    std::printf("dense: %.3fs  %.1f tokens/s  max|sum-1|=%.3g\n",
                dense_seconds,
                static_cast<double>(opts.l) / std::max(dense_seconds, 1e-12),
                max_sum_dev);
    if (check_naive) {
      std::printf("dense vs naive reference: max deviation %.3g\n",
                  max_naive_dev);
    }
    if (opts.topk > 0) {
      std::printf("topk m=%lld: %.3fs  max|sum-1|=%.3g\n",
                  static_cast<long long>(opts.topk),
                  doc["topk"]["seconds"].get<double>(),
                  doc["topk"]["max_sum_deviation"].get<double>());
    }
  }

  json effective{{"k", opts.k},       {"d", opts.d},
                 {"l", opts.l},       {"topk", opts.topk},
                 {"seed", opts.seed}, {"metric", opts.metric},
                 {"tau", opts.tau}};
  snce::RunManifest manifest;
  manifest.command = "bench";
  manifest.config_hash = snce::fnv1a64_hex(effective.dump());
  manifest.seed = opts.seed;
  manifest.started_at = manifest.finished_at = snce::iso8601_utc_now();
  fs::create_directories(opts.out_dir);
  snce::write_manifest(manifest, opts.out_dir);

  if (!ok) {
    std::fprintf(stderr, "bench: exactness checks failed\n");
    return kExitVerificationFailure;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stochastic neighbor cross entropy toolkit"};
  app.require_subcommand(1);

  ToyCliOptions toy_opts;
  CLI::App* toy = app.add_subcommand(
      "toy", "train the Gaussian-mixture model under l2/ce/snce and compare");
  toy->add_option("--config", toy_opts.config_path, "JSON config file")
      ->required();
  toy->add_option("--out", toy_opts.out_dir, "output directory");
  toy->add_option("--seeds", toy_opts.seeds, "comma-separated seed list")
      ->delimiter(',');
  toy->add_option("--threads", toy_opts.threads, "worker cap for parallel runs");
  toy->add_flag("--json", toy_opts.json_output, "print aggregate JSON");

  NeighborCliOptions nb_opts;
  CLI::App* neighbor = app.add_subcommand(
      "neighbor", "inspect the neighbor distribution of a latent");
  neighbor->add_option("--codebook", nb_opts.codebook_path, "codebook file");
  neighbor->add_option("--grid", nb_opts.grid,
                       "lo,hi,n_per_axis for a synthetic grid codebook")
      ->delimiter(',');
  neighbor->add_option("--z", nb_opts.z, "latent coordinates (comma-separated)")
      ->delimiter(',')
      ->required();
  neighbor->add_option("--tau", nb_opts.tau, "temperature (default 0.71)");
  neighbor->add_option("--two-tau-sq", nb_opts.two_tau_sq,
                       "softmax divisor 2*tau^2");
  neighbor->add_option("--topk", nb_opts.topk,
                       "truncate to the m nearest codes and renormalize");
  neighbor->add_option("--top", nb_opts.top_print,
                       "how many entries to print (default 10)");
  neighbor->add_option("--csv", nb_opts.csv_path, "write full CSV dump here");
  neighbor->add_option("--write-codebook", nb_opts.write_codebook_path,
                       "also save the codebook to this path");
  neighbor->add_option("--out", nb_opts.out_dir, "manifest directory");
  neighbor->add_flag("--json", nb_opts.json_output, "print one JSON document");

  VerifyCliOptions verify_opts;
  CLI::App* verify =
      app.add_subcommand("verify", "run the full property/oracle suite");
  verify->add_option("--seed", verify_opts.seed, "suite seed");
  verify->add_flag("--json", verify_opts.json_output, "machine-readable output");
  verify->add_option("--out", verify_opts.out_dir, "manifest directory");
  verify->add_flag("--break-gradient", verify_opts.break_gradient, "")
      ->group("");  // test hook, hidden from help

  BenchCliOptions bench_opts;
  CLI::App* bench = app.add_subcommand(
      "bench", "time dense/top-m target computation on a random codebook");
  bench->add_option("--k", bench_opts.k, "codebook size");
  bench->add_option("--d", bench_opts.d, "latent dimension");
  bench->add_option("--l", bench_opts.l, "number of latents");
  bench->add_option("--topk", bench_opts.topk, "also time top-m targets");
  bench->add_option("--threads", bench_opts.threads, "worker cap");
  bench->add_option("--seed", bench_opts.seed, "generator seed");
  bench->add_option("--metric", bench_opts.metric, "l2, neg_dot or neg_cosine");
  bench->add_option("--tau", bench_opts.tau, "temperature");
  bench->add_option("--out", bench_opts.out_dir, "manifest directory");
  bench->add_flag("--json", bench_opts.json_output, "print JSON results");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (toy->parsed()) return run_toy(toy_opts);
    if (neighbor->parsed()) return run_neighbor(nb_opts);
    if (verify->parsed()) return run_verify(verify_opts);
    if (bench->parsed()) return run_bench(bench_opts);
  } catch (const snce::NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kExitNumeric;
  } catch (const snce::FormatError& e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return kExitUsage;
  } catch (const snce::IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
  return kExitUsage;
}
