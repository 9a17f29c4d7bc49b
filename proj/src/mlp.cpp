#include "snce/mlp.hpp"

#include <cmath>
#include <stdexcept>

#include "snce/rng.hpp"

namespace snce {

MlpModel::MlpModel(int depth, int hidden_width, int output_dim,
                   Activation activation, std::uint64_t init_seed)
    : activation_(activation) {
  if (depth < 1) throw std::invalid_argument("MlpModel: depth must be >= 1");
  if (hidden_width < 1 || output_dim < 1) {
    throw std::invalid_argument("MlpModel: widths must be positive");
  }
  input_ = Eigen::VectorXd::Ones(hidden_width);

  SplitMix64 rng(init_seed);
  weights_.reserve(depth);
  biases_.reserve(depth);
  for (int l = 0; l < depth; ++l) {
    const Index rows = (l == depth - 1) ? output_dim : hidden_width;
    const Index cols = hidden_width;
    // He scaling in front of the nonlinearity, plain 1/fan_in for the head.
    const double gain = (l == depth - 1 || activation_ == Activation::kTanh)
                            ? 1.0
                            : 2.0;
    const double stddev = std::sqrt(gain / static_cast<double>(cols));
    Eigen::MatrixXd w(rows, cols);
    for (Index i = 0; i < w.size(); ++i) {
      *(w.data() + i) = stddev * rng.next_gaussian();
    }
    weights_.push_back(std::move(w));
    biases_.push_back(Eigen::VectorXd::Zero(rows));
  }
  pre_.resize(depth);
  post_.resize(depth);
}

double MlpModel::activate(double x) const {
  return activation_ == Activation::kRelu ? (x > 0.0 ? x : 0.0) : std::tanh(x);
}

double MlpModel::activate_derivative(double pre) const {
  if (activation_ == Activation::kRelu) return pre > 0.0 ? 1.0 : 0.0;
  const double t = std::tanh(pre);
  return 1.0 - t * t;
}

const Eigen::VectorXd& MlpModel::forward() {
  const int n = depth();
  const Eigen::VectorXd* current = &input_;
  for (int l = 0; l < n; ++l) {
    pre_[l].noalias() = weights_[l] * (*current);
    pre_[l] += biases_[l];
    if (l == n - 1) {
      post_[l] = pre_[l];
    } else {
      post_[l] = pre_[l].unaryExpr([this](double x) { return activate(x); });
    }
    current = &post_[l];
  }
  return post_.back();
}

void MlpModel::backward(const Eigen::Ref<const Eigen::VectorXd>& grad_output,
                        std::vector<Eigen::MatrixXd>& grad_w,
                        std::vector<Eigen::VectorXd>& grad_b) const {
  const int n = depth();
  if (grad_output.size() != post_.back().size()) {
    throw std::invalid_argument("MlpModel::backward: grad size mismatch");
  }
  grad_w.resize(n);
  grad_b.resize(n);

  Eigen::VectorXd delta = grad_output;
  for (int l = n - 1; l >= 0; --l) {
    const Eigen::VectorXd& in = (l == 0) ? input_ : post_[l - 1];
    grad_w[l].noalias() = delta * in.transpose();
    grad_b[l] = delta;
    if (l > 0) {
      Eigen::VectorXd upstream = weights_[l].transpose() * delta;
      delta = upstream.cwiseProduct(pre_[l - 1].unaryExpr(
          [this](double x) { return activate_derivative(x); }));
    }
  }
}

std::uint64_t MlpModel::activation_signature() const {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  const int n = depth();
  for (int l = 0; l + 1 < n; ++l) {
    for (Index i = 0; i < pre_[l].size(); ++i) {
      hash ^= static_cast<std::uint64_t>(pre_[l][i] > 0.0);
      hash *= 0x100000001b3ULL;
    }
  }
  return hash;
}

Index MlpModel::parameter_count() const {
  Index total = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    total += weights_[l].size() + biases_[l].size();
  }
  return total;
}

double MlpModel::get_parameter(Index flat) const {
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    if (flat < weights_[l].size()) return *(weights_[l].data() + flat);
    flat -= weights_[l].size();
    if (flat < biases_[l].size()) return biases_[l][flat];
    flat -= biases_[l].size();
  }
  throw std::out_of_range("MlpModel: parameter index out of range");
}

void MlpModel::set_parameter(Index flat, double value) {
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    if (flat < weights_[l].size()) {
      *(weights_[l].data() + flat) = value;
      return;
    }
    flat -= weights_[l].size();
    if (flat < biases_[l].size()) {
      biases_[l][flat] = value;
      return;
    }
    flat -= biases_[l].size();
  }
  throw std::out_of_range("MlpModel: parameter index out of range");
}

double MlpModel::gradient_entry(const std::vector<Eigen::MatrixXd>& grad_w,
                                const std::vector<Eigen::VectorXd>& grad_b,
                                Index flat) {
  for (std::size_t l = 0; l < grad_w.size(); ++l) {
    if (flat < grad_w[l].size()) return *(grad_w[l].data() + flat);
    flat -= grad_w[l].size();
    if (flat < grad_b[l].size()) return grad_b[l][flat];
    flat -= grad_b[l].size();
  }
  throw std::out_of_range("MlpModel: gradient index out of range");
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate, double beta1,
                     double beta2, double epsilon)
    : kind_(kind), lr_(learning_rate), beta1_(beta1), beta2_(beta2),
      eps_(epsilon) {
  if (!(lr_ > 0.0)) throw std::invalid_argument("Optimizer: lr must be > 0");
  if (kind_ == OptimizerKind::kAdam &&
      (beta1_ < 0.0 || beta1_ >= 1.0 || beta2_ < 0.0 || beta2_ >= 1.0)) {
    throw std::invalid_argument("Optimizer: betas must lie in [0, 1)");
  }
}

void Optimizer::step(std::vector<Eigen::MatrixXd>& w,
                     std::vector<Eigen::VectorXd>& b,
                     const std::vector<Eigen::MatrixXd>& grad_w,
                     const std::vector<Eigen::VectorXd>& grad_b) {
  if (kind_ == OptimizerKind::kSgd) {
    for (std::size_t l = 0; l < w.size(); ++l) {
      w[l] -= lr_ * grad_w[l];
      b[l] -= lr_ * grad_b[l];
    }
    return;
  }

  if (m_w_.empty()) {
    for (std::size_t l = 0; l < w.size(); ++l) {
      m_w_.push_back(Eigen::MatrixXd::Zero(w[l].rows(), w[l].cols()));
      v_w_.push_back(Eigen::MatrixXd::Zero(w[l].rows(), w[l].cols()));
      m_b_.push_back(Eigen::VectorXd::Zero(b[l].size()));
      v_b_.push_back(Eigen::VectorXd::Zero(b[l].size()));
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t l = 0; l < w.size(); ++l) {
    m_w_[l] = beta1_ * m_w_[l] + (1.0 - beta1_) * grad_w[l];
    v_w_[l] = beta2_ * v_w_[l] + (1.0 - beta2_) * grad_w[l].cwiseAbs2();
    w[l].array() -= lr_ * (m_w_[l].array() / bc1) /
                    ((v_w_[l].array() / bc2).sqrt() + eps_);

    m_b_[l] = beta1_ * m_b_[l] + (1.0 - beta1_) * grad_b[l];
    v_b_[l] = beta2_ * v_b_[l] + (1.0 - beta2_) * grad_b[l].cwiseAbs2();
    b[l].array() -= lr_ * (m_b_[l].array() / bc1) /
                    ((v_b_[l].array() / bc2).sqrt() + eps_);
  }
}

}  // namespace snce
