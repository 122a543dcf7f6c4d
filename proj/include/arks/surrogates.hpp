#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "arks/kernels.hpp"
#include "arks/tensor.hpp"

namespace arks {

// A differentiable scalar function of u. Returns f(u); when `grad` is
// non-empty it also receives the gradient.
using DiffFn = std::function<double(std::span<const double> u, std::span<double> grad)>;

// Axis-aligned box [lo, hi] per coordinate.
struct Box {
  Vector lo;
  Vector hi;

  static Box uniform(std::size_t dim, double lo, double hi) { return Box{Vector(dim, lo), Vector(dim, hi)}; }
  void validate() const;
  bool bounded() const;
  bool contains(std::span<const double> u, double slack = 0.0) const;
  void project(std::span<double> u) const;
  std::size_t dim() const { return lo.size(); }
};

struct InnerSolverConfig {
  int steps = 15;
  double step_size = 0.1;
  int restarts = 0;
  double restart_radius = 0.1;
  std::optional<Box> box;
  // Ascend ln l(u) - c(u, x) / sigma instead of l(u) k(u, x).
  bool log_scale = true;
  std::uint64_t seed = 0;
  // Stop a run early once the gradient norm falls below this (0 disables).
  double grad_tol = 0.0;
  // Objective values above this are treated as an unbounded supremum.
  double ceiling = 1e12;
  // Points per dimension for grid searches (worst_case_sup, d <= 2).
  std::size_t grid_points = 401;

  void validate() const;
};

struct SurrogateResult {
  double value = 0.0;
  Vector maximizer;
  // Objective along the run started at x, in the ascended scale (log scale
  // when log_scale is set).
  Vector trace;
  bool converged = false;
};

// l^k(x) = sup_u l(u) k(u, x). The starting point u = x is always a candidate,
// so the result never drops below l(x).
SurrogateResult k_transform(const DiffFn& loss_at, std::span<const double> x, const KernelSpec& kspec,
                            const InnerSolverConfig& cfg);

// Same supremum computed as exp sup_u { ln l(u) - c(u, x) / sigma }.
SurrogateResult k_transform_log(const DiffFn& loss_at, std::span<const double> x, const KernelSpec& kspec,
                                const InnerSolverConfig& cfg);

// Moreau-type envelope sup_u { l(u) - y c(u, x) }. Throws DivergenceError when
// the objective exceeds cfg.ceiling, including along a doubling probe in the
// ascent direction after the run (unboxed problems only).
SurrogateResult c_transform(const DiffFn& loss_at, std::span<const double> x, double y, const CostSpec& cost,
                            const InnerSolverConfig& cfg);

// sup_u { l(u) - (y / 2) ||phi(u) - phi(x)||^2_H } with the penalty written as
// (y / 2)(2 - 2 k(u, x)).
SurrogateResult kernel_distance_envelope(const DiffFn& loss_at, std::span<const double> x, double y,
                                         const KernelSpec& kspec, const InnerSolverConfig& cfg);

struct EnvelopeResult {
  double value = 0.0;
  double maximizer = 0.0;
  // Maximizer sits on the grid boundary with the objective still rising
  // outward, so the true envelope may be infinite.
  bool possibly_unbounded = false;
};

// sup over grid points u of l(u) - y |u - x| (1-d).
EnvelopeResult pasch_hausdorff(std::span<const double> grid, std::span<const double> loss_values, double x, double y);

// The same envelope evaluated at every grid point.
Vector pasch_hausdorff_envelope(std::span<const double> grid, std::span<const double> loss_values, double y);

// sup of l over a bounded box: dense grid (cfg.grid_points per axis) followed
// by projected ascent from the best grid point for d <= 2, multi-start
// projected ascent otherwise.
SurrogateResult worst_case_sup(const DiffFn& loss_at, const std::optional<Box>& domain, const InnerSolverConfig& cfg);

// sup_u l(u) (1/N) sum_i k(xi_i, u), with ascent started from every data point.
SurrogateResult empirical_smoothed_sup(const DiffFn& loss_at, const std::vector<Vector>& data, const KernelSpec& kspec,
                                       const InnerSolverConfig& cfg);

// Bandwidth threshold below which every stationary point of l(u) k(u, x) is a
// maximum (1-d Gaussian kernel). delta = u* - x.
double sigma_star(double delta, double l_at_ustar, double ddl_at_ustar);

// sqrt(l^T (K + ridge I)^{-1} l) via a Cholesky solve.
double idro_regularizer(std::span<const double> loss_values, const Tensor& gram, double ridge);

// max over the listed grid points of l(u) k(u, x).
double brute_force_k_transform(const std::vector<Vector>& grid, std::span<const double> loss_values,
                               std::span<const double> x, const KernelSpec& kspec);

// Points lo, lo + step, ..., hi (the last point snapped to hi).
Vector grid_1d(double lo, double hi, double step);
// Tensor-product grid over a box with `points_per_dim` points per axis.
std::vector<Vector> grid_points(const Box& box, std::size_t points_per_dim);

}  // namespace arks
