#include "arks/models.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "arks/errors.hpp"
#include "arks/random.hpp"

namespace arks {

std::string to_string(ModelFamily f) {
  switch (f) {
    case ModelFamily::linear_regression: return "linear-regression";
    case ModelFamily::logistic: return "logistic";
    case ModelFamily::mlp: return "mlp";
  }
  return "?";
}

std::string to_string(Activation a) { return a == Activation::elu ? "elu" : "relu"; }

std::string to_string(LossFamily f) { return f == LossFamily::least_squares ? "least-squares" : "cross-entropy"; }

ModelFamily parse_model_family(const std::string& s) {
  if (s == "linear-regression") return ModelFamily::linear_regression;
  if (s == "logistic") return ModelFamily::logistic;
  if (s == "mlp") return ModelFamily::mlp;
  throw ConfigError("unknown model family '" + s + "'");
}

Activation parse_activation(const std::string& s) {
  if (s == "elu") return Activation::elu;
  if (s == "relu") return Activation::relu;
  throw ConfigError("unknown activation '" + s + "'");
}

LossFamily parse_loss_family(const std::string& s) {
  if (s == "least-squares") return LossFamily::least_squares;
  if (s == "cross-entropy") return LossFamily::cross_entropy;
  throw ConfigError("unknown loss family '" + s + "'");
}

// ---------------------------------------------------------------------------

void ModelSpec::validate() const {
  if (input_dim == 0) throw ConfigError("model input dim must be positive");
  if (output_dim == 0) throw ConfigError("model output dim must be >= 1");
  switch (family) {
    case ModelFamily::linear_regression:
      if (output_dim != 1) throw ConfigError("linear-regression has output dim 1");
      break;
    case ModelFamily::logistic:
      if (output_dim < 2) throw ConfigError("logistic output dim is the number of classes and must be >= 2");
      break;
    case ModelFamily::mlp:
      if (widths.size() < 2) throw ConfigError("mlp widths must list at least input and output layers");
      if (std::find(widths.begin(), widths.end(), std::size_t{0}) != widths.end()) {
        throw ConfigError("mlp widths must be positive");
      }
      if (widths.front() != input_dim || widths.back() != output_dim) {
        throw ConfigError("mlp widths must start at the input dim and end at the output dim");
      }
      break;
  }
}

std::vector<std::size_t> ModelSpec::layer_widths() const {
  if (family == ModelFamily::mlp) return widths;
  return {input_dim, output_dim};
}

std::size_t ModelSpec::param_count() const {
  const auto w = layer_widths();
  std::size_t n = 0;
  for (std::size_t i = 0; i + 1 < w.size(); ++i) n += w[i] * w[i + 1] + w[i + 1];
  return n;
}

void validate_compatible(const ModelSpec& spec, const LossKind& kind) {
  spec.validate();
  if (!(kind.eps_pos >= 0.0) || !std::isfinite(kind.eps_pos)) throw ConfigError("eps_pos must be finite and >= 0");
  if (kind.family == LossFamily::least_squares && spec.output_dim != 1) {
    throw ConfigError("least-squares loss needs output dim 1");
  }
  if (kind.family == LossFamily::cross_entropy && spec.output_dim < 2) {
    throw ConfigError("cross-entropy loss needs at least 2 output classes");
  }
}

void validate_sample(const ModelSpec& spec, const Sample& sample) {
  if (sample.x.size() != spec.input_dim) {
    throw ShapeError("sample has " + std::to_string(sample.x.size()) + " features, model expects " +
                     std::to_string(spec.input_dim));
  }
  if (spec.is_classifier()) {
    if (!(sample.y >= 0.0) || sample.y != std::floor(sample.y) || sample.y >= static_cast<double>(spec.output_dim)) {
      throw DomainError("class label " + std::to_string(sample.y) + " out of range");
    }
  }
}

Vector init_params(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  const auto w = spec.layer_widths();
  Vector params;
  params.reserve(spec.param_count());
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(w[l]));
    for (std::size_t i = 0; i < w[l] * w[l + 1]; ++i) params.push_back(scale * rng.uniform(-1.0, 1.0));
    params.insert(params.end(), w[l + 1], 0.0);
  }
  return params;
}

// ---------------------------------------------------------------------------
// ModelLoss

ModelLoss::ModelLoss(ModelSpec spec, LossKind kind) : spec_(std::move(spec)), kind_(kind) {
  validate_compatible(spec_, kind_);
  build();
}

ModelLoss::ModelLoss(const ModelLoss& other)
    : spec_(other.spec_),
      kind_(other.kind_),
      tape_(other.tape_),
      layers_(other.layers_),
      x_leaf_(other.x_leaf_),
      y_leaf_(other.y_leaf_),
      output_(other.output_),
      ws_(std::make_unique<Workspace>(*tape_)) {}

ModelLoss& ModelLoss::operator=(const ModelLoss& other) {
  if (this != &other) {
    ModelLoss tmp(other);
    *this = std::move(tmp);
  }
  return *this;
}

ModelLoss::~ModelLoss() = default;

void ModelLoss::build() {
  tape_ = std::make_shared<Tape>();
  Tape& t = *tape_;
  const auto w = spec_.layer_widths();
  x_leaf_ = t.input("x", Shape{spec_.input_dim});
  y_leaf_ = t.input("y", Shape{});
  NodeId h = x_leaf_;
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    Layer layer;
    layer.rows = w[l + 1];
    layer.cols = w[l];
    layer.offset = offset;
    layer.weight = t.parameter("W" + std::to_string(l), Shape{layer.rows, layer.cols});
    layer.bias = t.parameter("b" + std::to_string(l), Shape{layer.rows});
    offset += layer.rows * layer.cols + layer.rows;
    h = t.add(t.matmul(layer.weight, h), layer.bias);
    const bool hidden = l + 2 < w.size();
    if (hidden) h = spec_.activation == Activation::elu ? t.elu(h) : t.relu(h);
    layers_.push_back(layer);
  }
  output_ = h;
  NodeId l = kind_.family == LossFamily::least_squares ? t.sq_norm(t.sub(h, y_leaf_)) : t.softmax_xent(h, y_leaf_);
  NodeId total = t.add(l, t.constant(kind_.eps_pos));
  t.set_output(total);
  ws_ = std::make_unique<Workspace>(t);
}

void ModelLoss::bind(std::span<const double> params, std::span<const double> x, double y) {
  if (params.size() != spec_.param_count()) {
    throw ShapeError("model expects " + std::to_string(spec_.param_count()) + " parameters, got " +
                     std::to_string(params.size()));
  }
  for (const auto& layer : layers_) {
    ws_->bind(layer.weight, params.subspan(layer.offset, layer.rows * layer.cols));
    ws_->bind(layer.bias, params.subspan(layer.offset + layer.rows * layer.cols, layer.rows));
  }
  ws_->bind(x_leaf_, x);
  ws_->bind(y_leaf_, y);
}

namespace {

std::string describe(std::span<const double> x, double y) {
  std::ostringstream os;
  os << "x=[";
  for (std::size_t i = 0; i < x.size(); ++i) os << (i ? "," : "") << x[i];
  os << "] y=" << y;
  return os.str();
}

}  // namespace

double ModelLoss::value(std::span<const double> params, std::span<const double> x, double y) {
  bind(params, x, y);
  const double v = ws_->forward();
  if (!std::isfinite(v)) throw NumericalError("non-finite loss at sample " + describe(x, y));
  return v;
}

double ModelLoss::value_and_grad(std::span<const double> params, std::span<const double> x, double y,
                                 std::span<double> grad_params, std::span<double> grad_x) {
  const double v = value(params, x, y);
  if (grad_params.empty() && grad_x.empty()) return v;
  ws_->backward();
  if (!grad_params.empty()) {
    if (grad_params.size() != params.size()) throw ShapeError("parameter gradient buffer has wrong length");
    for (const auto& layer : layers_) {
      auto gw = ws_->grad(layer.weight);
      auto gb = ws_->grad(layer.bias);
      std::copy(gw.begin(), gw.end(), grad_params.begin() + static_cast<std::ptrdiff_t>(layer.offset));
      std::copy(gb.begin(), gb.end(), grad_params.begin() + static_cast<std::ptrdiff_t>(layer.offset + gw.size()));
    }
  }
  if (!grad_x.empty()) {
    if (grad_x.size() != x.size()) throw ShapeError("input gradient buffer has wrong length");
    auto gx = ws_->grad(x_leaf_);
    std::copy(gx.begin(), gx.end(), grad_x.begin());
  }
  return v;
}

Vector ModelLoss::predict(std::span<const double> params, std::span<const double> x) {
  bind(params, x, 0.0);
  ws_->forward();
  auto out = ws_->value(output_);
  return Vector(out.begin(), out.end());
}

std::size_t ModelLoss::predict_class(std::span<const double> params, std::span<const double> x) {
  const Vector out = predict(params, x);
  return static_cast<std::size_t>(std::max_element(out.begin(), out.end()) - out.begin());
}

double loss(const ModelSpec& spec, const LossKind& kind, std::span<const double> params, const Sample& sample) {
  validate_sample(spec, sample);
  ModelLoss ml(spec, kind);
  return ml.value(params, sample.x, sample.y);
}

// ---------------------------------------------------------------------------
// Robust least squares

void RlsProblem::validate() const {
  if (a0.rank() != 2 || a1.shape() != a0.shape()) {
    throw ShapeError("rls: A0 and A1 must be matrices of equal shape, got " + shape_str(a0.shape()) + " and " +
                     shape_str(a1.shape()));
  }
  if (b.size() != a0.shape()[0]) throw ShapeError("rls: b length must equal the row count of A0");
}

double rls_loss(std::span<const double> theta, double xi, const Tensor& a0, const Tensor& a1, std::span<const double> b) {
  RlsProblem p{a0, a1, Vector(b.begin(), b.end())};
  return rls_loss_grad(theta, xi, p).value;
}

RlsEval rls_loss_grad(std::span<const double> theta, double xi, const RlsProblem& problem) {
  problem.validate();
  const std::size_t m = problem.a0.shape()[0];
  const std::size_t n = problem.a0.shape()[1];
  if (theta.size() != n) {
    throw ShapeError("rls: theta has length " + std::to_string(theta.size()) + ", expected " + std::to_string(n));
  }
  RlsEval out;
  out.grad_theta.assign(n, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    double a1theta = 0.0;
    double resid = -problem.b[r];
    for (std::size_t c = 0; c < n; ++c) {
      const double a = problem.a0.at(r, c) + xi * problem.a1.at(r, c);
      resid += a * theta[c];
      a1theta += problem.a1.at(r, c) * theta[c];
    }
    out.value += resid * resid;
    out.grad_xi += 2.0 * resid * a1theta;
    for (std::size_t c = 0; c < n; ++c) {
      out.grad_theta[c] += 2.0 * resid * (problem.a0.at(r, c) + xi * problem.a1.at(r, c));
    }
  }
  return out;
}

}  // namespace arks
