#include "crosslearn/model.hpp"

#include <algorithm>
#include <cmath>

namespace crosslearn {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

}  // namespace

LinearModel::LinearModel(std::size_t input_dim, std::size_t output_dim)
    : in_(input_dim), out_(output_dim) {
  if (out_ == 0) throw std::invalid_argument("LinearModel needs at least one output");
}

void LinearModel::forward(std::span<const double> theta, std::span<const double> x,
                          std::span<double> out) const {
  require(theta.size() == param_count(), "linear: parameter count mismatch");
  require(x.size() == in_, "linear: input dimension mismatch");
  require(out.size() == out_, "linear: output dimension mismatch");
  const std::size_t stride = in_ + 1;
  for (std::size_t q = 0; q < out_; ++q) {
    const double* row = theta.data() + q * stride;
    double acc = row[in_];
    for (std::size_t p = 0; p < in_; ++p) acc += row[p] * x[p];
    out[q] = acc;
  }
}

void LinearModel::backward(std::span<const double> theta, std::span<const double> x,
                           std::span<const double> grad_out, double scale,
                           std::span<double> grad_theta) const {
  require(theta.size() == param_count() && grad_theta.size() == param_count(),
          "linear: parameter count mismatch");
  require(x.size() == in_ && grad_out.size() == out_, "linear: dimension mismatch");
  const std::size_t stride = in_ + 1;
  for (std::size_t q = 0; q < out_; ++q) {
    const double g = scale * grad_out[q];
    double* row = grad_theta.data() + q * stride;
    for (std::size_t p = 0; p < in_; ++p) row[p] += g * x[p];
    row[in_] += g;
  }
}

std::vector<double> LinearModel::initial_params(std::mt19937_64&) const {
  return std::vector<double>(param_count(), 0.0);
}

std::string LinearModel::describe() const {
  return "linear(" + std::to_string(in_) + "->" + std::to_string(out_) + ")";
}

MLPModel::MLPModel(std::size_t input_dim, std::size_t hidden, std::size_t output_dim)
    : in_(input_dim), hidden_(hidden), out_(output_dim) {
  if (in_ == 0 || hidden_ == 0 || out_ == 0) {
    throw std::invalid_argument("MLPModel dimensions must be positive");
  }
}

std::size_t MLPModel::param_count() const { return hidden_ * in_ + hidden_ + out_ * hidden_ + out_; }

void MLPModel::forward(std::span<const double> theta, std::span<const double> x,
                       std::span<double> out) const {
  require(theta.size() == param_count(), "mlp: parameter count mismatch");
  require(x.size() == in_ && out.size() == out_, "mlp: dimension mismatch");
  const double* w1 = theta.data();
  const double* b1 = w1 + hidden_ * in_;
  const double* w2 = b1 + hidden_;
  const double* b2 = w2 + out_ * hidden_;
  std::vector<double> h(hidden_);
  for (std::size_t k = 0; k < hidden_; ++k) {
    double acc = b1[k];
    for (std::size_t p = 0; p < in_; ++p) acc += w1[k * in_ + p] * x[p];
    h[k] = std::tanh(acc);
  }
  for (std::size_t q = 0; q < out_; ++q) {
    double acc = b2[q];
    for (std::size_t k = 0; k < hidden_; ++k) acc += w2[q * hidden_ + k] * h[k];
    out[q] = acc;
  }
}

void MLPModel::backward(std::span<const double> theta, std::span<const double> x,
                        std::span<const double> grad_out, double scale,
                        std::span<double> grad_theta) const {
  require(theta.size() == param_count() && grad_theta.size() == param_count(),
          "mlp: parameter count mismatch");
  require(x.size() == in_ && grad_out.size() == out_, "mlp: dimension mismatch");
  const double* w1 = theta.data();
  const double* b1 = w1 + hidden_ * in_;
  const double* w2 = b1 + hidden_;
  double* gw1 = grad_theta.data();
  double* gb1 = gw1 + hidden_ * in_;
  double* gw2 = gb1 + hidden_;
  double* gb2 = gw2 + out_ * hidden_;

  std::vector<double> h(hidden_);
  for (std::size_t k = 0; k < hidden_; ++k) {
    double acc = b1[k];
    for (std::size_t p = 0; p < in_; ++p) acc += w1[k * in_ + p] * x[p];
    h[k] = std::tanh(acc);
  }
  std::vector<double> grad_h(hidden_, 0.0);
  for (std::size_t q = 0; q < out_; ++q) {
    const double g = scale * grad_out[q];
    gb2[q] += g;
    for (std::size_t k = 0; k < hidden_; ++k) {
      gw2[q * hidden_ + k] += g * h[k];
      grad_h[k] += g * w2[q * hidden_ + k];
    }
  }
  for (std::size_t k = 0; k < hidden_; ++k) {
    const double g = grad_h[k] * (1.0 - h[k] * h[k]);
    gb1[k] += g;
    for (std::size_t p = 0; p < in_; ++p) gw1[k * in_ + p] += g * x[p];
  }
}

std::vector<double> MLPModel::initial_params(std::mt19937_64& rng) const {
  std::vector<double> theta(param_count(), 0.0);
  std::uniform_real_distribution<double> first(-1.0, 1.0);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(in_));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden_));
  std::size_t idx = 0;
  for (std::size_t i = 0; i < hidden_ * in_; ++i) theta[idx++] = s1 * first(rng);
  idx += hidden_;
  for (std::size_t i = 0; i < out_ * hidden_; ++i) theta[idx++] = s2 * first(rng);
  return theta;
}

std::string MLPModel::describe() const {
  return "mlp(" + std::to_string(in_) + "->" + std::to_string(hidden_) + "->" +
         std::to_string(out_) + ")";
}

double SquaredError::value(std::span<const double> pred, const Sample& sample) const {
  if (sample.y.size() != pred.size()) throw DimensionError("squared error: target size mismatch");
  double total = 0.0;
  for (std::size_t q = 0; q < pred.size(); ++q) {
    const double d = pred[q] - sample.y[q];
    total += d * d;
  }
  return total;
}

double SquaredError::gradient(std::span<const double> pred, const Sample& sample,
                              std::span<double> grad) const {
  if (sample.y.size() != pred.size()) throw DimensionError("squared error: target size mismatch");
  double total = 0.0;
  for (std::size_t q = 0; q < pred.size(); ++q) {
    const double d = pred[q] - sample.y[q];
    grad[q] = 2.0 * d;
    total += d * d;
  }
  return total;
}

double CrossEntropy::value(std::span<const double> pred, const Sample& sample) const {
  if (sample.label < 0 || static_cast<std::size_t>(sample.label) >= pred.size()) {
    throw DimensionError("cross entropy: label out of range");
  }
  const double top = *std::max_element(pred.begin(), pred.end());
  double sum = 0.0;
  for (double v : pred) sum += std::exp(v - top);
  return top + std::log(sum) - pred[static_cast<std::size_t>(sample.label)];
}

double CrossEntropy::gradient(std::span<const double> pred, const Sample& sample,
                              std::span<double> grad) const {
  if (sample.label < 0 || static_cast<std::size_t>(sample.label) >= pred.size()) {
    throw DimensionError("cross entropy: label out of range");
  }
  const double top = *std::max_element(pred.begin(), pred.end());
  double sum = 0.0;
  for (std::size_t q = 0; q < pred.size(); ++q) {
    grad[q] = std::exp(pred[q] - top);
    sum += grad[q];
  }
  for (std::size_t q = 0; q < pred.size(); ++q) grad[q] /= sum;
  const auto label = static_cast<std::size_t>(sample.label);
  grad[label] -= 1.0;
  return top + std::log(sum) - pred[label];
}

std::unique_ptr<Loss> make_loss(const std::string& name) {
  if (name == "squared_error") return std::make_unique<SquaredError>();
  if (name == "cross_entropy") return std::make_unique<CrossEntropy>();
  throw std::invalid_argument("unknown loss '" + name + "'");
}

BatchGradient batch_gradient(const Model& model, const Loss& loss, std::span<const double> theta,
                             const std::vector<const Sample*>& batch) {
  if (batch.empty()) throw std::invalid_argument("batch must not be empty");
  if (theta.size() != model.param_count()) throw DimensionError("parameter count mismatch");
  BatchGradient result;
  result.gradient.assign(model.param_count(), 0.0);
  std::vector<double> pred(model.output_dim());
  std::vector<double> grad_out(model.output_dim());
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const Sample* sample : batch) {
    model.forward(theta, sample->x, pred);
    const double l = loss.gradient(pred, *sample, grad_out);
    if (!std::isfinite(l)) throw DivergenceError("non-finite loss in batch gradient");
    result.loss += scale * l;
    model.backward(theta, sample->x, grad_out, scale, result.gradient);
  }
  return result;
}

ParamVector stochastic_gradient(const Model& model, const Loss& loss, const ParamVector& theta,
                                std::span<const Sample> batch) {
  std::vector<const Sample*> ptrs;
  ptrs.reserve(batch.size());
  for (const Sample& s : batch) ptrs.push_back(&s);
  auto result = batch_gradient(model, loss, theta.values(), ptrs);
  for (double g : result.gradient) {
    if (!std::isfinite(g)) throw DivergenceError("non-finite gradient");
  }
  return ParamVector(std::move(result.gradient));
}

double evaluate(const Model& model, std::span<const double> theta, const TaskDataset& dataset) {
  if (dataset.samples.empty()) throw std::invalid_argument("cannot evaluate on an empty dataset");
  std::vector<double> pred(model.output_dim());
  double total = 0.0;
  for (const Sample& s : dataset.samples) {
    model.forward(theta, s.x, pred);
    if (dataset.kind == TaskKind::kClassification) {
      const auto best = std::max_element(pred.begin(), pred.end()) - pred.begin();
      total += (best == s.label) ? 1.0 : 0.0;
    } else {
      for (std::size_t q = 0; q < pred.size(); ++q) total += (pred[q] - s.y[q]) * (pred[q] - s.y[q]);
    }
  }
  return total / static_cast<double>(dataset.samples.size());
}

double mean_loss(const Model& model, const Loss& loss, std::span<const double> theta,
                 const TaskDataset& dataset) {
  if (dataset.samples.empty()) throw std::invalid_argument("cannot evaluate on an empty dataset");
  std::vector<double> pred(model.output_dim());
  double total = 0.0;
  for (const Sample& s : dataset.samples) {
    model.forward(theta, s.x, pred);
    total += loss.value(pred, s);
  }
  return total / static_cast<double>(dataset.samples.size());
}

}  // namespace crosslearn
