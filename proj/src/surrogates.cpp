#include "arks/surrogates.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "arks/errors.hpp"
#include "arks/random.hpp"

namespace arks {

// ---------------------------------------------------------------------------
// Box / config

void Box::validate() const {
  if (lo.size() != hi.size()) throw ConfigError("box lo and hi have different lengths");
  for (std::size_t i = 0; i < lo.size(); ++i) {
    if (!(lo[i] <= hi[i])) throw ConfigError("box lo > hi at coordinate " + std::to_string(i));
  }
}

bool Box::bounded() const {
  if (lo.empty()) return false;
  for (std::size_t i = 0; i < lo.size(); ++i) {
    if (!std::isfinite(lo[i]) || !std::isfinite(hi[i])) return false;
  }
  return true;
}

bool Box::contains(std::span<const double> u, double slack) const {
  if (u.size() != lo.size()) return false;
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (u[i] < lo[i] - slack || u[i] > hi[i] + slack) return false;
  }
  return true;
}

void Box::project(std::span<double> u) const {
  if (u.size() != lo.size()) {
    throw ShapeError("box has dimension " + std::to_string(lo.size()) + ", point has " + std::to_string(u.size()));
  }
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = std::clamp(u[i], lo[i], hi[i]);
}

void InnerSolverConfig::validate() const {
  if (steps < 1) throw ConfigError("inner solver steps must be >= 1");
  if (!(step_size > 0.0)) throw ConfigError("inner solver step size must be positive");
  if (restarts < 0) throw ConfigError("inner solver restarts must be >= 0");
  if (!(restart_radius >= 0.0)) throw ConfigError("inner solver restart radius must be >= 0");
  if (!(grad_tol >= 0.0)) throw ConfigError("inner solver grad_tol must be >= 0");
  if (!(ceiling > 0.0)) throw ConfigError("inner solver ceiling must be positive");
  if (grid_points < 2) throw ConfigError("grid resolution must be at least 2 points per axis");
  if (box) box->validate();
}

// ---------------------------------------------------------------------------
// Projected gradient ascent

namespace {

constexpr double kImprovementTol = 1e-9;

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

struct AscentRun {
  double best = -std::numeric_limits<double>::infinity();
  Vector best_u;
  Vector trace;
  bool converged = false;
};

struct Guard {
  const char* what;
  std::optional<double> ceiling;

  void check(double f, int step) const {
    if (!std::isfinite(f)) {
      throw NumericalError(std::string(what) + ": non-finite objective at step " + std::to_string(step));
    }
    if (ceiling && f > *ceiling) {
      throw DivergenceError(std::string(what) + ": objective exceeded ceiling " + std::to_string(*ceiling) +
                            " at step " + std::to_string(step) + "; the supremum looks unbounded");
    }
  }
};

AscentRun ascend(const DiffFn& obj, Vector u, const InnerSolverConfig& cfg, const Guard& guard) {
  AscentRun run;
  Vector g(u.size());
  double f = obj(u, g);
  guard.check(f, 0);
  run.best = f;
  run.best_u = u;
  run.trace.push_back(f);
  double prev = f;
  bool small_step = false;
  for (int step = 1; step <= cfg.steps; ++step) {
    if (cfg.grad_tol > 0.0 && norm2(g) < cfg.grad_tol) {
      run.converged = true;
      return run;
    }
    for (std::size_t i = 0; i < u.size(); ++i) u[i] += cfg.step_size * g[i];
    if (cfg.box) cfg.box->project(u);
    f = obj(u, g);
    guard.check(f, step);
    run.trace.push_back(f);
    if (f > run.best) {
      run.best = f;
      run.best_u = u;
    }
    small_step = std::abs(f - prev) < kImprovementTol;
    prev = f;
  }
  run.converged = small_step;
  return run;
}

// Run from x, then from cfg.restarts jittered copies of x; keep the best.
AscentRun ascend_with_restarts(const DiffFn& obj, std::span<const double> x, const InnerSolverConfig& cfg,
                               const Guard& guard) {
  AscentRun best = ascend(obj, Vector(x.begin(), x.end()), cfg, guard);
  for (int r = 1; r <= cfg.restarts; ++r) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(r)));
    Vector start(x.begin(), x.end());
    for (double& v : start) v += cfg.restart_radius * rng.normal();
    if (cfg.box) cfg.box->project(start);
    AscentRun run = ascend(obj, std::move(start), cfg, guard);
    if (run.best > best.best) {
      best.best = run.best;
      best.best_u = std::move(run.best_u);
      best.converged = run.converged;
    }
  }
  return best;
}

// Doubling walk away from the maximizer; an objective passing the ceiling
// (or overflowing) means the supremum is unbounded.
void probe_divergence(const DiffFn& obj, std::span<const double> x, const AscentRun& run, const InnerSolverConfig& cfg,
                      const char* what) {
  if (cfg.box && cfg.box->bounded()) return;
  Vector dir(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) dir[i] = run.best_u[i] - x[i];
  if (norm2(dir) == 0.0) {
    obj(run.best_u, dir);
  }
  const double n = norm2(dir);
  if (!(n > 0.0) || !std::isfinite(n)) return;
  for (double& d : dir) d /= n;
  Vector u(x.size());
  Vector no_grad;
  for (int k = 0; k <= 60; ++k) {
    const double t = std::ldexp(1.0, k);
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = run.best_u[i] + t * dir[i];
    const double f = obj(u, no_grad);
    if (std::isnan(f)) return;
    if (f > cfg.ceiling) {
      throw DivergenceError(std::string(what) + ": objective exceeds ceiling " + std::to_string(cfg.ceiling) +
                            " along the ascent direction; the supremum is unbounded");
    }
  }
}

void check_point(std::span<const double> x, const InnerSolverConfig& cfg) {
  if (x.empty()) throw ShapeError("surrogate evaluated at an empty point");
  if (cfg.box && cfg.box->dim() != x.size()) {
    throw ShapeError("inner box has dimension " + std::to_string(cfg.box->dim()) + ", point has " +
                     std::to_string(x.size()));
  }
}

SurrogateResult to_result(AscentRun&& run, double value) {
  SurrogateResult r;
  r.value = value;
  r.maximizer = std::move(run.best_u);
  r.trace = std::move(run.trace);
  r.converged = run.converged;
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// k-transform

SurrogateResult k_transform(const DiffFn& loss_at, std::span<const double> x, const KernelSpec& kspec,
                            const InnerSolverConfig& cfg) {
  cfg.validate();
  kspec.validate();
  check_point(x, cfg);
  const std::size_t d = x.size();
  Vector gl(d);
  Vector gc(d);
  const Vector anchor(x.begin(), x.end());

  if (cfg.log_scale) {
    DiffFn obj = [&](std::span<const double> u, std::span<double> g) {
      const double l = loss_at(u, g.empty() ? std::span<double>() : std::span<double>(gl));
      if (!(l > 0.0)) {
        throw DomainError("log-scale k-transform needs a strictly positive loss, got " + std::to_string(l));
      }
      const double c = cost(kspec.cost, u, anchor);
      if (!g.empty()) {
        cost_grad(kspec.cost, u, anchor, gc);
        for (std::size_t i = 0; i < d; ++i) g[i] = gl[i] / l - gc[i] / kspec.sigma;
      }
      return std::log(l) - c / kspec.sigma;
    };
    AscentRun run = ascend_with_restarts(obj, x, cfg, Guard{"k_transform", std::nullopt});
    const double value = std::exp(run.best);
    return to_result(std::move(run), value);
  }

  DiffFn obj = [&](std::span<const double> u, std::span<double> g) {
    const double l = loss_at(u, g.empty() ? std::span<double>() : std::span<double>(gl));
    if (l < 0.0) throw DomainError("k-transform needs a nonnegative loss, got " + std::to_string(l));
    if (g.empty()) return l * kernel(kspec, u, anchor);
    const double k = kernel_grad(kspec, u, anchor, gc);
    for (std::size_t i = 0; i < d; ++i) g[i] = k * gl[i] + l * gc[i];
    return l * k;
  };
  AscentRun run = ascend_with_restarts(obj, x, cfg, Guard{"k_transform", std::nullopt});
  const double value = run.best;
  return to_result(std::move(run), value);
}

SurrogateResult k_transform_log(const DiffFn& loss_at, std::span<const double> x, const KernelSpec& kspec,
                                const InnerSolverConfig& cfg) {
  InnerSolverConfig log_cfg = cfg;
  log_cfg.log_scale = true;
  return k_transform(loss_at, x, kspec, log_cfg);
}

// ---------------------------------------------------------------------------
// c-transform and kernel-distance envelope

SurrogateResult c_transform(const DiffFn& loss_at, std::span<const double> x, double y, const CostSpec& cost_spec,
                            const InnerSolverConfig& cfg) {
  cfg.validate();
  check_point(x, cfg);
  if (!(y > 0.0)) throw DomainError("c_transform: multiplier y must be positive");
  const std::size_t d = x.size();
  Vector gl(d);
  Vector gc(d);
  const Vector anchor(x.begin(), x.end());
  DiffFn obj = [&](std::span<const double> u, std::span<double> g) {
    const double l = loss_at(u, g.empty() ? std::span<double>() : std::span<double>(gl));
    if (!g.empty()) {
      cost_grad(cost_spec, u, anchor, gc);
      for (std::size_t i = 0; i < d; ++i) g[i] = gl[i] - y * gc[i];
    }
    return l - y * cost(cost_spec, u, anchor);
  };
  AscentRun run = ascend_with_restarts(obj, x, cfg, Guard{"c_transform", cfg.ceiling});
  probe_divergence(obj, x, run, cfg, "c_transform");
  const double value = run.best;
  return to_result(std::move(run), value);
}

SurrogateResult kernel_distance_envelope(const DiffFn& loss_at, std::span<const double> x, double y,
                                         const KernelSpec& kspec, const InnerSolverConfig& cfg) {
  cfg.validate();
  kspec.validate();
  check_point(x, cfg);
  if (!(y > 0.0)) throw DomainError("kernel_distance_envelope: multiplier y must be positive");
  const std::size_t d = x.size();
  Vector gl(d);
  Vector gk(d);
  const Vector anchor(x.begin(), x.end());
  DiffFn obj = [&](std::span<const double> u, std::span<double> g) {
    const double l = loss_at(u, g.empty() ? std::span<double>() : std::span<double>(gl));
    const double k = kernel_grad(kspec, u, anchor, gk);
    if (!g.empty()) {
      // penalty (y/2)(2 - 2k) = y (1 - k)
      for (std::size_t i = 0; i < d; ++i) g[i] = gl[i] + y * gk[i];
    }
    return l - y * (1.0 - k);
  };
  AscentRun run = ascend_with_restarts(obj, x, cfg, Guard{"kernel_distance_envelope", cfg.ceiling});
  probe_divergence(obj, x, run, cfg, "kernel_distance_envelope");
  const double value = run.best;
  return to_result(std::move(run), value);
}

// ---------------------------------------------------------------------------
// Pasch-Hausdorff envelope

namespace {

void check_grid(std::span<const double> grid, std::span<const double> values) {
  if (grid.empty()) throw DomainError("envelope grid is empty");
  if (grid.size() != values.size()) throw ShapeError("grid and loss values differ in length");
}

}  // namespace

EnvelopeResult pasch_hausdorff(std::span<const double> grid, std::span<const double> loss_values, double x, double y) {
  check_grid(grid, loss_values);
  if (!(y > 0.0)) throw DomainError("pasch_hausdorff: Lipschitz constant y must be positive");
  const std::size_t n = grid.size();
  Vector f(n);
  std::size_t arg = 0;
  for (std::size_t i = 0; i < n; ++i) {
    f[i] = loss_values[i] - y * std::abs(grid[i] - x);
    if (f[i] > f[arg]) arg = i;
  }
  EnvelopeResult r{f[arg], grid[arg], false};
  if (n >= 2) {
    const double tol = 1e-12 * std::max(1.0, std::abs(f[arg]));
    // Ties resolve to the first index, so also look at the last point.
    if (f[0] > f[1] + tol && f[0] >= f[arg] - tol) r.possibly_unbounded = true;
    if (f[n - 1] > f[n - 2] + tol && f[n - 1] >= f[arg] - tol) r.possibly_unbounded = true;
  }
  return r;
}

Vector pasch_hausdorff_envelope(std::span<const double> grid, std::span<const double> loss_values, double y) {
  check_grid(grid, loss_values);
  Vector out(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) out[i] = pasch_hausdorff(grid, loss_values, grid[i], y).value;
  return out;
}

// ---------------------------------------------------------------------------
// Worst case and empirical smoothing

SurrogateResult worst_case_sup(const DiffFn& loss_at, const std::optional<Box>& domain, const InnerSolverConfig& cfg) {
  cfg.validate();
  if (!domain || !domain->bounded()) throw ConfigError("worst_case_sup needs a bounded box domain");
  domain->validate();
  InnerSolverConfig boxed = cfg;
  boxed.box = *domain;
  const Guard guard{"worst_case_sup", std::nullopt};
  const std::size_t d = domain->dim();

  if (d <= 2) {
    Vector no_grad;
    double best = -std::numeric_limits<double>::infinity();
    Vector best_u;
    for (const Vector& u : grid_points(*domain, cfg.grid_points)) {
      const double f = loss_at(u, no_grad);
      guard.check(f, 0);
      if (f > best) {
        best = f;
        best_u = u;
      }
    }
    AscentRun polish = ascend(loss_at, best_u, boxed, guard);
    SurrogateResult r;
    r.value = std::max(best, polish.best);
    r.maximizer = polish.best > best ? polish.best_u : best_u;
    r.trace = std::move(polish.trace);
    r.converged = polish.converged;
    return r;
  }

  Vector center(d);
  for (std::size_t i = 0; i < d; ++i) center[i] = 0.5 * (domain->lo[i] + domain->hi[i]);
  AscentRun best = ascend(loss_at, center, boxed, guard);
  const int starts = std::max(cfg.restarts, 8);
  for (int r = 1; r <= starts; ++r) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(r)));
    Vector start(d);
    for (std::size_t i = 0; i < d; ++i) start[i] = rng.uniform(domain->lo[i], domain->hi[i]);
    AscentRun run = ascend(loss_at, std::move(start), boxed, guard);
    if (run.best > best.best) {
      best.best = run.best;
      best.best_u = std::move(run.best_u);
      best.converged = run.converged;
    }
  }
  const double value = best.best;
  return to_result(std::move(best), value);
}

SurrogateResult empirical_smoothed_sup(const DiffFn& loss_at, const std::vector<Vector>& data, const KernelSpec& kspec,
                                       const InnerSolverConfig& cfg) {
  cfg.validate();
  kspec.validate();
  if (data.empty()) throw DomainError("empirical_smoothed_sup: data must be non-empty");
  const std::size_t d = data.front().size();
  for (const auto& p : data) check_point(p, cfg);
  const std::size_t n = data.size();
  Vector gl(d);
  Vector gc(d);
  Vector logk(n);

  DiffFn obj;
  if (cfg.log_scale) {
    // ln l(u) + ln (1/N) sum_i exp(-c_i(u) / sigma), the sum via log-sum-exp
    obj = [&](std::span<const double> u, std::span<double> g) {
      const double l = loss_at(u, g.empty() ? std::span<double>() : std::span<double>(gl));
      if (!(l > 0.0)) {
        throw DomainError("log-scale smoothing needs a strictly positive loss, got " + std::to_string(l));
      }
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n; ++i) {
        logk[i] = -cost(kspec.cost, u, data[i]) / kspec.sigma;
        m = std::max(m, logk[i]);
      }
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += std::exp(logk[i] - m);
      const double lse = m + std::log(s);
      if (!g.empty()) {
        for (std::size_t j = 0; j < d; ++j) g[j] = gl[j] / l;
        for (std::size_t i = 0; i < n; ++i) {
          const double w = std::exp(logk[i] - lse);
          cost_grad(kspec.cost, u, data[i], gc);
          for (std::size_t j = 0; j < d; ++j) g[j] -= w * gc[j] / kspec.sigma;
        }
      }
      return std::log(l) + lse - std::log(static_cast<double>(n));
    };
  } else {
    obj = [&](std::span<const double> u, std::span<double> g) {
      const double l = loss_at(u, g.empty() ? std::span<double>() : std::span<double>(gl));
      if (l < 0.0) throw DomainError("kernel smoothing needs a nonnegative loss, got " + std::to_string(l));
      double mk = 0.0;
      if (!g.empty()) std::fill(g.begin(), g.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        if (g.empty()) {
          mk += kernel(kspec, u, data[i]);
          continue;
        }
        mk += kernel_grad(kspec, u, data[i], gc);
        for (std::size_t j = 0; j < d; ++j) g[j] += l * gc[j];
      }
      mk /= static_cast<double>(n);
      if (!g.empty()) {
        for (std::size_t j = 0; j < d; ++j) g[j] = g[j] / static_cast<double>(n) + mk * gl[j];
      }
      return l * mk;
    };
  }

  const Guard guard{"empirical_smoothed_sup", std::nullopt};
  AscentRun best;
  for (std::size_t i = 0; i < n; ++i) {
    InnerSolverConfig per_point = cfg;
    per_point.seed = derive_seed(cfg.seed, i);
    AscentRun run = ascend_with_restarts(obj, data[i], per_point, guard);
    if (i == 0) {
      best = std::move(run);
    } else if (run.best > best.best) {
      best.best = run.best;
      best.best_u = std::move(run.best_u);
      best.converged = run.converged;
    }
  }
  const double value = cfg.log_scale ? std::exp(best.best) : best.best;
  return to_result(std::move(best), value);
}

// ---------------------------------------------------------------------------
// Closed forms

double sigma_star(double delta, double l_at_ustar, double ddl_at_ustar) {
  if (delta == 0.0 || !std::isfinite(delta)) {
    throw DomainError("sigma_star: u* must differ from x (delta = 0 makes the threshold undefined)");
  }
  if (!(l_at_ustar > 0.0)) throw DomainError("sigma_star: the loss at u* must be positive");
  if (!(ddl_at_ustar > 0.0)) {
    throw DomainError("sigma_star: loss curvature at u* is not positive; a concave loss needs no bandwidth threshold");
  }
  const double d2 = delta * delta;
  return 2.0 * d2 / (std::sqrt(1.0 + 4.0 * d2 * ddl_at_ustar / l_at_ustar) - 1.0);
}

double idro_regularizer(std::span<const double> loss_values, const Tensor& gram, double ridge) {
  const std::size_t n = loss_values.size();
  if (gram.rank() != 2 || gram.shape()[0] != n || gram.shape()[1] != n) {
    throw ShapeError("idro_regularizer: gram must be " + std::to_string(n) + "x" + std::to_string(n) + ", got " +
                     shape_str(gram.shape()));
  }
  if (!(ridge >= 0.0)) throw DomainError("idro_regularizer: ridge must be >= 0");
  Eigen::MatrixXd k(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (std::abs(gram.at(i, j) - gram.at(j, i)) > 1e-12 * std::max(1.0, std::abs(gram.at(i, j)))) {
        throw DomainError("idro_regularizer: gram matrix is not symmetric");
      }
      k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = gram.at(i, j);
    }
  }
  k.diagonal().array() += ridge;
  const Eigen::Map<const Eigen::VectorXd> l(loss_values.data(), static_cast<Eigen::Index>(n));
  if (l.squaredNorm() == 0.0) return 0.0;
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("idro_regularizer: K + ridge*I is not positive definite; increase the ridge");
  }
  const Eigen::VectorXd z = llt.solve(l);
  const double quad = l.dot(z);
  if (!std::isfinite(quad)) throw NumericalError("idro_regularizer: solve produced a non-finite value; increase the ridge");
  return std::sqrt(std::max(quad, 0.0));
}

double brute_force_k_transform(const std::vector<Vector>& grid, std::span<const double> loss_values,
                               std::span<const double> x, const KernelSpec& kspec) {
  if (grid.empty()) throw DomainError("brute_force_k_transform: grid is empty");
  if (grid.size() != loss_values.size()) throw ShapeError("grid and loss values differ in length");
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grid.size(); ++i) best = std::max(best, loss_values[i] * kernel(kspec, grid[i], x));
  return best;
}

Vector grid_1d(double lo, double hi, double step) {
  if (!(step > 0.0) || !(lo <= hi)) throw DomainError("grid_1d needs lo <= hi and a positive step");
  const auto n = static_cast<std::size_t>(std::llround((hi - lo) / step)) + 1;
  Vector g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = lo + static_cast<double>(i) * step;
  if (n >= 2) g.back() = hi;
  return g;
}

std::vector<Vector> grid_points(const Box& box, std::size_t points_per_dim) {
  box.validate();
  if (!box.bounded()) throw ConfigError("grid over an unbounded box");
  if (points_per_dim < 2) throw ConfigError("grid needs at least 2 points per axis");
  const std::size_t d = box.dim();
  std::vector<Vector> axes(d);
  for (std::size_t i = 0; i < d; ++i) {
    axes[i].resize(points_per_dim);
    for (std::size_t k = 0; k < points_per_dim; ++k) {
      const double t = static_cast<double>(k) / static_cast<double>(points_per_dim - 1);
      axes[i][k] = box.lo[i] + t * (box.hi[i] - box.lo[i]);
    }
  }
  std::size_t total = 1;
  for (std::size_t i = 0; i < d; ++i) total *= points_per_dim;
  std::vector<Vector> pts;
  pts.reserve(total);
  std::vector<std::size_t> idx(d, 0);
  for (std::size_t c = 0; c < total; ++c) {
    Vector p(d);
    for (std::size_t i = 0; i < d; ++i) p[i] = axes[i][idx[i]];
    pts.push_back(std::move(p));
    for (std::size_t i = d; i-- > 0;) {
      if (++idx[i] < points_per_dim) break;
      idx[i] = 0;
    }
  }
  return pts;
}

}  // namespace arks
