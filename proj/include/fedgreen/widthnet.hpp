#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fedgreen/dataset.hpp"
#include "fedgreen/tensor.hpp"

// A width-scalable multilayer perceptron with ordered-dropout submodels.
//
// Hidden layers use a rectifier, the output layer is linear and softmax only
// appears inside the loss. A submodel at scaling rate p keeps the first
// ceil(p*K) channels of every hidden layer (at least one); the input and the
// class dimension never scale.
namespace fedgreen::widthnet {

// Fraction of hidden channels kept, in (0, 1].
class ScalingRate {
 public:
  explicit ScalingRate(double p);

  double value() const noexcept { return p_; }
  auto operator<=>(const ScalingRate &) const = default;

 private:
  double p_;
};

// Number of channels kept out of `full` at rate p: ceil(p * full), min 1.
// A relative slack of 1e-9 absorbs binary rounding (0.7 * 10 -> 7, not 8).
std::size_t kept_width(ScalingRate p, std::size_t full);

enum class LayerKind { hidden, output };

struct LayerShape {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  LayerKind kind = LayerKind::hidden;

  bool operator==(const LayerShape &) const = default;
};

struct Layer {
  LayerShape shape;
  Matrix weight;              // [out_dim x in_dim]
  std::vector<double> bias;   // [out_dim]

  bool operator==(const Layer &) const = default;
};

struct Model {
  std::size_t input_dim = 0;
  std::size_t class_count = 0;
  std::vector<Layer> layers;

  std::size_t parameter_count() const;
  std::vector<std::size_t> hidden_widths() const;

  bool operator==(const Model &) const = default;
};

// Throws invalid_shape on any structural violation, numerical_failure on a
// non-finite parameter.
void validate(const Model &model);

struct Submodel {
  Model model;
  ScalingRate origin_p{1.0};
  std::vector<std::size_t> kept;  // kept channels per hidden layer

  bool operator==(const Submodel &) const = default;
};

Model init_model(std::size_t input_dim, std::span<const std::size_t> hidden_widths,
                 std::size_t class_count, std::uint64_t seed);

// Same shapes as `reference`, every entry zero. Used as a gradient buffer.
Model zeros_like(const Model &reference);

Submodel extract_submodel(const Model &model, ScalingRate p);

// Copy of `parent` with the prefix channels overwritten by `sub`.
Model embed_submodel(const Model &parent, const Submodel &sub);

// Class scores [B x class_count].
Matrix forward(const Model &model, const Matrix &batch);

// Mean softmax cross-entropy over the batch.
double loss(const Model &model, const Matrix &batch, std::span<const int> labels);

struct LossGradient {
  double loss = 0.0;
  Model gradient;  // same shapes as the model
};

LossGradient loss_and_gradient(const Model &model, const Matrix &batch,
                               std::span<const int> labels);

struct StepResult {
  Model model;
  double loss = 0.0;
};

// One full-batch gradient step. Throws numerical_failure if the loss or any
// updated parameter is non-finite.
StepResult sgd_step(const Model &model, const Matrix &batch, std::span<const int> labels,
                    double lr);

// Index of the largest score, lowest index on ties.
std::size_t argmax(std::span<const double> scores);

// Fraction of argmax-correct predictions.
double evaluate(const Model &model, const LabeledDataset &data);

}  // namespace fedgreen::widthnet
