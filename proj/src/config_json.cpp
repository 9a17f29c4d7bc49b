#include "snce/config_json.hpp"

#include <set>
#include <string>

namespace snce {

namespace {

using nlohmann::json;

void expect_object(const json& j, const std::string& ctx) {
  if (!j.is_object()) {
    throw std::invalid_argument("config: " + ctx + " must be an object");
  }
}

void expect_keys(const json& j, const std::set<std::string>& allowed,
                 const std::string& ctx) {
  for (const auto& item : j.items()) {
    if (!allowed.contains(item.key())) {
      throw std::invalid_argument("config: unknown field " + ctx + "." +
                                  item.key());
    }
  }
}

double get_number(const json& j, const char* key, double fallback,
                  const std::string& ctx) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) {
    throw std::invalid_argument("config: " + ctx + "." + key +
                                " must be a number");
  }
  return j[key].get<double>();
}

std::int64_t get_integer(const json& j, const char* key, std::int64_t fallback,
                         const std::string& ctx) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number_integer() && !j[key].is_number_unsigned()) {
    throw std::invalid_argument("config: " + ctx + "." + key +
                                " must be an integer");
  }
  return j[key].get<std::int64_t>();
}

Objective parse_objective(const std::string& name) {
  if (name == "l2") return Objective::kL2Regression;
  if (name == "ce") return Objective::kCrossEntropy;
  if (name == "snce") return Objective::kSnce;
  throw std::invalid_argument(
      "config: objectives entries must be one of l2, ce, snce (got " + name +
      ")");
}

MixtureSpec parse_mixture(const json& j) {
  MixtureSpec spec = MixtureSpec::two_gaussians();
  expect_object(j, "mixture");
  expect_keys(j, {"centers", "variance", "weights"}, "mixture");
  if (j.contains("centers")) {
    const json& centers = j["centers"];
    if (!centers.is_array() || centers.empty()) {
      throw std::invalid_argument(
          "config: mixture.centers must be a non-empty array of [x,y] pairs");
    }
    spec.centers.resize(static_cast<Index>(centers.size()), 2);
    for (std::size_t i = 0; i < centers.size(); ++i) {
      if (!centers[i].is_array() || centers[i].size() != 2 ||
          !centers[i][0].is_number() || !centers[i][1].is_number()) {
        throw std::invalid_argument(
            "config: mixture.centers entries must be [x,y] number pairs");
      }
      spec.centers(static_cast<Index>(i), 0) = centers[i][0].get<double>();
      spec.centers(static_cast<Index>(i), 1) = centers[i][1].get<double>();
    }
    // default weights: uniform over the provided centers
    spec.weights = Eigen::VectorXd::Constant(
        spec.centers.rows(), 1.0 / static_cast<double>(spec.centers.rows()));
  }
  spec.variance = get_number(j, "variance", spec.variance, "mixture");
  if (j.contains("weights")) {
    const json& weights = j["weights"];
    if (!weights.is_array()) {
      throw std::invalid_argument(
          "config: mixture.weights must be an array of numbers");
    }
    spec.weights.resize(static_cast<Index>(weights.size()));
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (!weights[i].is_number()) {
        throw std::invalid_argument(
            "config: mixture.weights entries must be numbers");
      }
      spec.weights[static_cast<Index>(i)] = weights[i].get<double>();
    }
  }
  return spec;
}

}  // namespace

ToyRunPlan parse_toy_plan(const json& j) {
  expect_object(j, "(root)");
  expect_keys(j,
              {"mixture", "grid", "n_samples", "tau", "two_tau_sq", "steps",
               "batch_size", "mlp", "optimizer", "seed", "objectives",
               "tau_grid", "label_smoothing_grid", "seeds"},
              "(root)");

  ToyRunPlan plan;
  ToyConfig& cfg = plan.base;

  if (j.contains("mixture")) cfg.mixture = parse_mixture(j["mixture"]);
  if (j.contains("grid")) {
    const json& g = j["grid"];
    expect_object(g, "grid");
    expect_keys(g, {"lo", "hi", "n_per_axis"}, "grid");
    cfg.grid.lo = get_number(g, "lo", cfg.grid.lo, "grid");
    cfg.grid.hi = get_number(g, "hi", cfg.grid.hi, "grid");
    cfg.grid.n_per_axis = static_cast<int>(
        get_integer(g, "n_per_axis", cfg.grid.n_per_axis, "grid"));
    if (cfg.grid.n_per_axis < 2) {
      throw std::invalid_argument("config: grid.n_per_axis must be >= 2");
    }
    if (!(cfg.grid.lo < cfg.grid.hi)) {
      throw std::invalid_argument("config: grid.lo must be < grid.hi");
    }
  }

  cfg.n_samples =
      static_cast<int>(get_integer(j, "n_samples", cfg.n_samples, "(root)"));
  if (cfg.n_samples < 1) {
    throw std::invalid_argument("config: n_samples must be >= 1");
  }

  if (j.contains("tau") && j.contains("two_tau_sq")) {
    throw std::invalid_argument(
        "config: give exactly one of tau and two_tau_sq");
  }
  if (j.contains("tau")) {
    cfg.temp = Temperature(get_number(j, "tau", 0.71, "(root)"));
  } else if (j.contains("two_tau_sq")) {
    cfg.temp = Temperature::from_two_tau_sq(
        get_number(j, "two_tau_sq", 1.0, "(root)"));
  }

  cfg.steps = static_cast<int>(get_integer(j, "steps", cfg.steps, "(root)"));
  if (cfg.steps < 1) throw std::invalid_argument("config: steps must be >= 1");
  cfg.batch_size = static_cast<int>(
      get_integer(j, "batch_size", cfg.batch_size, "(root)"));

  if (j.contains("mlp")) {
    const json& m = j["mlp"];
    expect_object(m, "mlp");
    expect_keys(m, {"depth", "hidden_width", "activation"}, "mlp");
    cfg.mlp.depth =
        static_cast<int>(get_integer(m, "depth", cfg.mlp.depth, "mlp"));
    cfg.mlp.hidden_width = static_cast<int>(
        get_integer(m, "hidden_width", cfg.mlp.hidden_width, "mlp"));
    if (m.contains("activation")) {
      const std::string act = m["activation"].get<std::string>();
      if (act == "relu") {
        cfg.mlp.activation = Activation::kRelu;
      } else if (act == "tanh") {
        cfg.mlp.activation = Activation::kTanh;
      } else {
        throw std::invalid_argument(
            "config: mlp.activation must be relu or tanh");
      }
    }
    if (cfg.mlp.depth < 1) {
      throw std::invalid_argument("config: mlp.depth must be >= 1");
    }
    if (cfg.mlp.hidden_width < 1) {
      throw std::invalid_argument("config: mlp.hidden_width must be >= 1");
    }
  }

  if (j.contains("optimizer")) {
    const json& o = j["optimizer"];
    expect_object(o, "optimizer");
    expect_keys(o, {"kind", "learning_rate", "beta1", "beta2"}, "optimizer");
    if (o.contains("kind")) {
      const std::string kind = o["kind"].get<std::string>();
      if (kind == "adam") {
        cfg.optimizer.kind = OptimizerKind::kAdam;
      } else if (kind == "sgd") {
        cfg.optimizer.kind = OptimizerKind::kSgd;
      } else {
        throw std::invalid_argument(
            "config: optimizer.kind must be adam or sgd");
      }
    }
    cfg.optimizer.learning_rate = get_number(
        o, "learning_rate", cfg.optimizer.learning_rate, "optimizer");
    cfg.optimizer.beta1 =
        get_number(o, "beta1", cfg.optimizer.beta1, "optimizer");
    cfg.optimizer.beta2 =
        get_number(o, "beta2", cfg.optimizer.beta2, "optimizer");
  }

  cfg.seed = static_cast<std::uint64_t>(
      get_integer(j, "seed", static_cast<std::int64_t>(cfg.seed), "(root)"));

  plan.objectives = {Objective::kL2Regression, Objective::kCrossEntropy,
                     Objective::kSnce};
  if (j.contains("objectives")) {
    if (!j["objectives"].is_array() || j["objectives"].empty()) {
      throw std::invalid_argument(
          "config: objectives must be a non-empty array");
    }
    plan.objectives.clear();
    for (const json& entry : j["objectives"]) {
      plan.objectives.push_back(parse_objective(entry.get<std::string>()));
    }
  }

  if (j.contains("tau_grid")) {
    for (const json& entry : j["tau_grid"]) {
      if (!entry.is_number()) {
        throw std::invalid_argument("config: tau_grid entries must be numbers");
      }
      plan.tau_grid.push_back(entry.get<double>());
    }
  }
  if (j.contains("label_smoothing_grid")) {
    for (const json& entry : j["label_smoothing_grid"]) {
      if (!entry.is_number()) {
        throw std::invalid_argument(
            "config: label_smoothing_grid entries must be numbers");
      }
      plan.label_smoothing_grid.push_back(entry.get<double>());
    }
  }

  plan.seeds = {cfg.seed};
  if (j.contains("seeds")) {
    if (!j["seeds"].is_array() || j["seeds"].empty()) {
      throw std::invalid_argument("config: seeds must be a non-empty array");
    }
    plan.seeds.clear();
    for (const json& entry : j["seeds"]) {
      if (!entry.is_number_integer() && !entry.is_number_unsigned()) {
        throw std::invalid_argument("config: seeds entries must be integers");
      }
      plan.seeds.push_back(entry.get<std::uint64_t>());
    }
  }

  // Surface invalid combinations now rather than mid-run.
  for (Objective obj : plan.objectives) {
    ToyConfig probe = cfg;
    probe.objective = obj;
    probe.validate();
  }
  for (double tau : plan.tau_grid) Temperature{tau};
  for (double eps : plan.label_smoothing_grid) {
    ToyConfig probe = cfg;
    probe.objective = Objective::kCrossEntropy;
    probe.label_smoothing = eps;
    probe.validate();
  }
  return plan;
}

nlohmann::json toy_config_to_json(const ToyConfig& cfg) {
  json centers = json::array();
  for (Index c = 0; c < cfg.mixture.centers.rows(); ++c) {
    centers.push_back({cfg.mixture.centers(c, 0), cfg.mixture.centers(c, 1)});
  }
  json weights = json::array();
  for (Index c = 0; c < cfg.mixture.weights.size(); ++c) {
    weights.push_back(cfg.mixture.weights[c]);
  }
  return json{
      {"mixture",
       {{"centers", centers},
        {"variance", cfg.mixture.variance},
        {"weights", weights}}},
      {"grid",
       {{"lo", cfg.grid.lo},
        {"hi", cfg.grid.hi},
        {"n_per_axis", cfg.grid.n_per_axis}}},
      {"n_samples", cfg.n_samples},
      {"objective", objective_name(cfg.objective)},
      {"tau", cfg.temp.tau()},
      {"two_tau_sq", cfg.temp.two_tau_sq()},
      {"label_smoothing", cfg.label_smoothing},
      {"steps", cfg.steps},
      {"batch_size", cfg.batch_size},
      {"mlp",
       {{"depth", cfg.mlp.depth},
        {"hidden_width", cfg.mlp.hidden_width},
        {"activation",
         cfg.mlp.activation == Activation::kRelu ? "relu" : "tanh"}}},
      {"optimizer",
       {{"kind", cfg.optimizer.kind == OptimizerKind::kAdam ? "adam" : "sgd"},
        {"learning_rate", cfg.optimizer.learning_rate},
        {"beta1", cfg.optimizer.beta1},
        {"beta2", cfg.optimizer.beta2}}},
      {"seed", cfg.seed}};
}

nlohmann::json run_record_to_json(const RunRecord& record,
                                  const ToyConfig& cfg) {
  const ToyRunReport& r = record.report;
  json loss_curve = json::array();
  for (const auto& [step, loss] : r.loss_curve) {
    loss_curve.push_back({step, loss});
  }
  json out{
      {"label", record.label},
      {"seed", record.seed},
      {"objective", objective_name(r.objective)},
      {"config", toy_config_to_json(cfg)},
      {"metrics",
       {{"kl_to_truth", r.metrics.kl_to_truth},
        {"tv_to_truth", r.metrics.tv_to_truth},
        {"support_size_at_threshold", r.metrics.support_size_at_threshold},
        {"support_threshold", r.metrics.support_threshold},
        {"empirical_fit_mass", r.metrics.empirical_fit_mass}}},
      {"data_mean", {r.data_mean[0], r.data_mean[1]}},
      {"train_token_count", r.train_tokens.size()},
      {"loss_curve", loss_curve}};
  if (r.objective == Objective::kL2Regression) {
    out["learned_point"] = {r.learned_point[0], r.learned_point[1]};
  }
  return out;
}

}  // namespace snce
