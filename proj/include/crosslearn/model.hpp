#pragma once

#include <cstddef>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "crosslearn/core.hpp"
#include "crosslearn/data.hpp"

namespace crosslearn {

/// Raised when a loss or a parameter becomes non-finite.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Predictor family f(x, theta) with all weights flattened into theta.
class Model {
 public:
  virtual ~Model() = default;

  virtual std::size_t input_dim() const = 0;
  virtual std::size_t output_dim() const = 0;
  virtual std::size_t param_count() const = 0;

  virtual void forward(std::span<const double> theta, std::span<const double> x,
                       std::span<double> out) const = 0;
  /// Accumulates scale * d(loss)/d(theta) into grad_theta given d(loss)/d(out).
  virtual void backward(std::span<const double> theta, std::span<const double> x,
                        std::span<const double> grad_out, double scale,
                        std::span<double> grad_theta) const = 0;

  virtual std::vector<double> initial_params(std::mt19937_64& rng) const = 0;
  /// Short descriptor such as "linear(5->3)", used to validate checkpoints.
  virtual std::string describe() const = 0;
};

/// Affine map: Q rows of (P weights, bias), row-major.
class LinearModel final : public Model {
 public:
  LinearModel(std::size_t input_dim, std::size_t output_dim);

  std::size_t input_dim() const override { return in_; }
  std::size_t output_dim() const override { return out_; }
  std::size_t param_count() const override { return out_ * (in_ + 1); }

  void forward(std::span<const double> theta, std::span<const double> x,
               std::span<double> out) const override;
  void backward(std::span<const double> theta, std::span<const double> x,
                std::span<const double> grad_out, double scale,
                std::span<double> grad_theta) const override;
  /// Zeros.
  std::vector<double> initial_params(std::mt19937_64& rng) const override;
  std::string describe() const override;

 private:
  std::size_t in_;
  std::size_t out_;
};

/// One tanh hidden layer. Layout: W1 (H x P), b1 (H), W2 (Q x H), b2 (Q).
class MLPModel final : public Model {
 public:
  MLPModel(std::size_t input_dim, std::size_t hidden, std::size_t output_dim);

  std::size_t input_dim() const override { return in_; }
  std::size_t output_dim() const override { return out_; }
  std::size_t hidden() const noexcept { return hidden_; }
  std::size_t param_count() const override;

  void forward(std::span<const double> theta, std::span<const double> x,
               std::span<double> out) const override;
  void backward(std::span<const double> theta, std::span<const double> x,
                std::span<const double> grad_out, double scale,
                std::span<double> grad_theta) const override;
  /// Weights uniform in +-1/sqrt(fan_in), biases zero.
  std::vector<double> initial_params(std::mt19937_64& rng) const override;
  std::string describe() const override;

 private:
  std::size_t in_;
  std::size_t hidden_;
  std::size_t out_;
};

class Loss {
 public:
  virtual ~Loss() = default;
  virtual double value(std::span<const double> pred, const Sample& sample) const = 0;
  /// Writes d(loss)/d(pred) into grad and returns the loss.
  virtual double gradient(std::span<const double> pred, const Sample& sample,
                          std::span<double> grad) const = 0;
  virtual std::string name() const = 0;
};

/// sum_q (pred_q - y_q)^2
class SquaredError final : public Loss {
 public:
  double value(std::span<const double> pred, const Sample& sample) const override;
  double gradient(std::span<const double> pred, const Sample& sample,
                  std::span<double> grad) const override;
  std::string name() const override { return "squared_error"; }
};

/// Softmax cross-entropy against a class index, log-sum-exp stabilised.
class CrossEntropy final : public Loss {
 public:
  double value(std::span<const double> pred, const Sample& sample) const override;
  double gradient(std::span<const double> pred, const Sample& sample,
                  std::span<double> grad) const override;
  std::string name() const override { return "cross_entropy"; }
};

std::unique_ptr<Loss> make_loss(const std::string& name);

struct BatchGradient {
  std::vector<double> gradient;
  double loss = 0.0;
};

/// Batch-averaged loss gradient by backpropagation.
BatchGradient batch_gradient(const Model& model, const Loss& loss, std::span<const double> theta,
                             const std::vector<const Sample*>& batch);

ParamVector stochastic_gradient(const Model& model, const Loss& loss, const ParamVector& theta,
                                std::span<const Sample> batch);

/// Accuracy (classification) or mean squared error (regression) over a dataset.
double evaluate(const Model& model, std::span<const double> theta, const TaskDataset& dataset);

/// Mean loss over a dataset.
double mean_loss(const Model& model, const Loss& loss, std::span<const double> theta,
                 const TaskDataset& dataset);

}  // namespace crosslearn
