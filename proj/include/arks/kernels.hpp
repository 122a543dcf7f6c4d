#pragma once

#include <span>
#include <string>
#include <vector>

#include "arks/tensor.hpp"

namespace arks {

// Transport costs c(u, x):
//   sq_l2_half  ||u - x||^2 / 2
//   sq_l2       ||u - x||^2
//   l2          ||u - x||
//   l1          ||u - x||_1
enum class CostFamily { sq_l2_half, sq_l2, l2, l1 };

std::string to_string(CostFamily f);
CostFamily parse_cost_family(const std::string& s);

struct CostSpec {
  CostFamily family = CostFamily::sq_l2_half;
};

// c-exponential kernel k(u, x) = exp(-c(u, x) / sigma). With the sq_l2_half
// cost this is the Gaussian exp(-||u - x||^2 / (2 sigma)); sigma is a squared
// length scale.
struct KernelSpec {
  CostSpec cost;
  double sigma = 1.0;

  void validate() const;
};

double cost(const CostSpec& spec, std::span<const double> u, std::span<const double> x);
// Gradient in u. The non-smooth costs return 0 where u == x.
void cost_grad(const CostSpec& spec, std::span<const double> u, std::span<const double> x, std::span<double> grad);

double kernel(const KernelSpec& spec, std::span<const double> u, std::span<const double> x);
// Writes d k / d u into `grad` and returns k(u, x).
double kernel_grad(const KernelSpec& spec, std::span<const double> u, std::span<const double> x, std::span<double> grad);

// Squared RKHS distance between feature maps, 2 - 2 k(u, x) for a normalized kernel.
double kernel_distance_sq(const KernelSpec& spec, std::span<const double> u, std::span<const double> x);

// Gram matrix K_ij = k(p_i, p_j).
Tensor gram(const std::vector<Vector>& points, const KernelSpec& spec);

// Biased (V-statistic) MMD estimate between two point sets.
double mmd(const std::vector<Vector>& xs, const std::vector<Vector>& ys, const KernelSpec& spec);

}  // namespace arks
