#include "arks/kernels.hpp"

#include <cmath>

#include "arks/errors.hpp"

namespace arks {

std::string to_string(CostFamily f) {
  switch (f) {
    case CostFamily::sq_l2_half: return "sq-l2-half";
    case CostFamily::sq_l2: return "sq-l2";
    case CostFamily::l2: return "l2";
    case CostFamily::l1: return "l1";
  }
  return "?";
}

CostFamily parse_cost_family(const std::string& s) {
  if (s == "sq-l2-half" || s == "gaussian") return CostFamily::sq_l2_half;
  if (s == "sq-l2") return CostFamily::sq_l2;
  if (s == "l2") return CostFamily::l2;
  if (s == "l1") return CostFamily::l1;
  throw ConfigError("unknown cost family '" + s + "'");
}

void KernelSpec::validate() const {
  if (!(sigma > 0.0)) throw DomainError("kernel bandwidth sigma must be positive, got " + std::to_string(sigma));
}

namespace {

void check_dims(std::span<const double> u, std::span<const double> x) {
  if (u.size() != x.size()) {
    throw ShapeError("cost: dimension mismatch " + std::to_string(u.size()) + " vs " + std::to_string(x.size()));
  }
}

}  // namespace

double cost(const CostSpec& spec, std::span<const double> u, std::span<const double> x) {
  check_dims(u, x);
  double s = 0.0;
  switch (spec.family) {
    case CostFamily::sq_l2_half:
    case CostFamily::sq_l2:
    case CostFamily::l2:
      for (std::size_t i = 0; i < u.size(); ++i) s += (u[i] - x[i]) * (u[i] - x[i]);
      if (spec.family == CostFamily::sq_l2_half) return 0.5 * s;
      if (spec.family == CostFamily::l2) return std::sqrt(s);
      return s;
    case CostFamily::l1:
      for (std::size_t i = 0; i < u.size(); ++i) s += std::abs(u[i] - x[i]);
      return s;
  }
  return s;
}

void cost_grad(const CostSpec& spec, std::span<const double> u, std::span<const double> x, std::span<double> grad) {
  check_dims(u, x);
  if (grad.size() != u.size()) throw ShapeError("cost_grad: gradient buffer has wrong length");
  switch (spec.family) {
    case CostFamily::sq_l2_half:
      for (std::size_t i = 0; i < u.size(); ++i) grad[i] = u[i] - x[i];
      break;
    case CostFamily::sq_l2:
      for (std::size_t i = 0; i < u.size(); ++i) grad[i] = 2.0 * (u[i] - x[i]);
      break;
    case CostFamily::l2: {
      const double r = cost(spec, u, x);
      for (std::size_t i = 0; i < u.size(); ++i) grad[i] = r > 0.0 ? (u[i] - x[i]) / r : 0.0;
      break;
    }
    case CostFamily::l1:
      for (std::size_t i = 0; i < u.size(); ++i) {
        const double d = u[i] - x[i];
        grad[i] = static_cast<double>((d > 0.0) - (d < 0.0));
      }
      break;
  }
}

double kernel(const KernelSpec& spec, std::span<const double> u, std::span<const double> x) {
  spec.validate();
  return std::exp(-cost(spec.cost, u, x) / spec.sigma);
}

double kernel_grad(const KernelSpec& spec, std::span<const double> u, std::span<const double> x, std::span<double> grad) {
  const double k = kernel(spec, u, x);
  cost_grad(spec.cost, u, x, grad);
  for (double& g : grad) g *= -k / spec.sigma;
  return k;
}

double kernel_distance_sq(const KernelSpec& spec, std::span<const double> u, std::span<const double> x) {
  return 2.0 - 2.0 * kernel(spec, u, x);
}

Tensor gram(const std::vector<Vector>& points, const KernelSpec& spec) {
  const std::size_t n = points.size();
  Tensor k(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) {
    k.at(i, i) = kernel(spec, points[i], points[i]);
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = kernel(spec, points[i], points[j]);
      k.at(i, j) = v;
      k.at(j, i) = v;
    }
  }
  return k;
}

double mmd(const std::vector<Vector>& xs, const std::vector<Vector>& ys, const KernelSpec& spec) {
  if (xs.empty() || ys.empty()) throw DomainError("mmd: both point sets must be non-empty");
  auto mean_k = [&](const std::vector<Vector>& a, const std::vector<Vector>& b) {
    double s = 0.0;
    for (const auto& p : a) {
      for (const auto& q : b) s += kernel(spec, p, q);
    }
    return s / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
  };
  const double sq = mean_k(xs, xs) - 2.0 * mean_k(xs, ys) + mean_k(ys, ys);
  return std::sqrt(std::max(sq, 0.0));
}

}  // namespace arks
