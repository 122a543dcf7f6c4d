#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "arks/tape.hpp"
#include "arks/tensor.hpp"

namespace arks {

enum class ModelFamily { linear_regression, logistic, mlp };
enum class Activation { elu, relu };
enum class LossFamily { least_squares, cross_entropy };

std::string to_string(ModelFamily f);
std::string to_string(Activation a);
std::string to_string(LossFamily f);
ModelFamily parse_model_family(const std::string& s);
Activation parse_activation(const std::string& s);
LossFamily parse_loss_family(const std::string& s);

// Architecture of a parametric model. For mlp, `widths` lists every layer
// width including input and output, e.g. {2, 32, 32, 2}. Linear and logistic
// models ignore `widths`.
struct ModelSpec {
  ModelFamily family = ModelFamily::linear_regression;
  std::vector<std::size_t> widths;
  Activation activation = Activation::elu;
  std::size_t input_dim = 1;
  std::size_t output_dim = 1;

  void validate() const;
  // Full width list, input to output, for every family.
  std::vector<std::size_t> layer_widths() const;
  std::size_t param_count() const;
  bool is_classifier() const { return output_dim >= 2; }
};

struct LossKind {
  LossFamily family = LossFamily::least_squares;
  // Added to every loss value so the loss stays strictly positive.
  double eps_pos = 1e-3;
};

// One data point. `y` is the regression target or, for classifiers, the class
// index stored as a double. Only `x` is ever perturbed.
struct Sample {
  Vector x;
  double y = 0.0;
  friend bool operator==(const Sample&, const Sample&) = default;
};

void validate_compatible(const ModelSpec& spec, const LossKind& kind);
void validate_sample(const ModelSpec& spec, const Sample& sample);

// Weights drawn uniformly from [-1, 1] / sqrt(fan_in); biases start at zero.
Vector init_params(const ModelSpec& spec, std::uint64_t seed);

// Differentiable l(theta, x; y) for a fixed architecture. Holds a recorded
// tape plus evaluation buffers, so an instance is cheap to call repeatedly but
// must not be shared across threads. Copies get their own buffers.
class ModelLoss {
 public:
  ModelLoss(ModelSpec spec, LossKind kind);
  ModelLoss(const ModelLoss& other);
  ModelLoss& operator=(const ModelLoss& other);
  ModelLoss(ModelLoss&&) noexcept = default;
  ModelLoss& operator=(ModelLoss&&) noexcept = default;
  ~ModelLoss();

  const ModelSpec& spec() const { return spec_; }
  const LossKind& kind() const { return kind_; }
  const Tape& tape() const { return *tape_; }

  double value(std::span<const double> params, std::span<const double> x, double y);

  // Either gradient span may be empty to skip it. Throws NumericalError when
  // the loss is not finite.
  double value_and_grad(std::span<const double> params, std::span<const double> x, double y,
                        std::span<double> grad_params, std::span<double> grad_x);

  // Raw network output (logits for classifiers, prediction for regression).
  Vector predict(std::span<const double> params, std::span<const double> x);
  std::size_t predict_class(std::span<const double> params, std::span<const double> x);

 private:
  struct Layer {
    NodeId weight;
    NodeId bias;
    std::size_t offset = 0;  // into the flat parameter vector
    std::size_t rows = 0;
    std::size_t cols = 0;
  };

  void build();
  void bind(std::span<const double> params, std::span<const double> x, double y);

  ModelSpec spec_;
  LossKind kind_;
  std::shared_ptr<Tape> tape_;
  std::vector<Layer> layers_;
  NodeId x_leaf_{};
  NodeId y_leaf_{};
  NodeId output_{};
  std::unique_ptr<Workspace> ws_;
};

// One-shot evaluation of l(theta, sample).
double loss(const ModelSpec& spec, const LossKind& kind, std::span<const double> params, const Sample& sample);

// Robust least squares with scalar uncertainty: ||(A0 + xi*A1) theta - b||^2.
struct RlsProblem {
  Tensor a0;
  Tensor a1;
  Vector b;

  void validate() const;
  std::size_t dim() const { return a0.shape().at(1); }
};

struct RlsEval {
  double value = 0.0;
  Vector grad_theta;
  double grad_xi = 0.0;
};

double rls_loss(std::span<const double> theta, double xi, const Tensor& a0, const Tensor& a1, std::span<const double> b);
RlsEval rls_loss_grad(std::span<const double> theta, double xi, const RlsProblem& problem);

}  // namespace arks
