#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "snce/codebook.hpp"

namespace snce {

enum class Activation { kRelu, kTanh };

// Fixed-input MLP: `depth` affine layers driven by a constant all-ones input
// of width `hidden_width`. depth == 1 is a single linear map; deeper models
// put `activation` between consecutive affine layers and keep the head
// linear. He-style seeded initialization, zero biases.
class MlpModel {
 public:
  MlpModel(int depth, int hidden_width, int output_dim, Activation activation,
           std::uint64_t init_seed);

  int depth() const { return static_cast<int>(weights_.size()); }
  Index output_dim() const { return weights_.back().rows(); }

  // Recomputes the forward pass (caching activations for backward) and
  // returns the output.
  const Eigen::VectorXd& forward();

  // Parameter gradients for the cached forward pass, given dLoss/dOutput.
  void backward(const Eigen::Ref<const Eigen::VectorXd>& grad_output,
                std::vector<Eigen::MatrixXd>& grad_w,
                std::vector<Eigen::VectorXd>& grad_b) const;

  // Hash of the sign pattern of all hidden pre-activations from the last
  // forward pass. Finite-difference probes are only well-posed while the
  // pattern stays fixed across the probe window (relu is piecewise smooth).
  std::uint64_t activation_signature() const;

  std::vector<Eigen::MatrixXd>& weights() { return weights_; }
  std::vector<Eigen::VectorXd>& biases() { return biases_; }

  // Flat parameter addressing (layer by layer, weights column-major then
  // bias), used by the finite-difference probe.
  Index parameter_count() const;
  double get_parameter(Index flat) const;
  void set_parameter(Index flat, double value);
  static double gradient_entry(const std::vector<Eigen::MatrixXd>& grad_w,
                               const std::vector<Eigen::VectorXd>& grad_b,
                               Index flat);

 private:
  double activate(double x) const;
  double activate_derivative(double pre) const;

  Activation activation_;
  Eigen::VectorXd input_;  // constant all-ones
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::VectorXd> biases_;
  // forward cache
  std::vector<Eigen::VectorXd> pre_;   // pre-activations per layer
  std::vector<Eigen::VectorXd> post_;  // activations per layer (last = output)
};

enum class OptimizerKind { kAdam, kSgd };

class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate, double beta1,
            double beta2, double epsilon = 1e-8);

  void step(std::vector<Eigen::MatrixXd>& w, std::vector<Eigen::VectorXd>& b,
            const std::vector<Eigen::MatrixXd>& grad_w,
            const std::vector<Eigen::VectorXd>& grad_b);

 private:
  OptimizerKind kind_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Eigen::MatrixXd> m_w_, v_w_;
  std::vector<Eigen::VectorXd> m_b_, v_b_;
};

}  // namespace snce
