#include "arks/robusteval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "arks/errors.hpp"
#include "arks/random.hpp"

namespace arks {

std::string to_string(AttackKind k) { return k == AttackKind::pgd ? "pgd" : "fgsm"; }
std::string to_string(AttackMode m) { return m == AttackMode::white_box ? "white-box" : "black-box"; }
std::string to_string(ShiftKind k) { return k == ShiftKind::scale ? "scale" : "uniform"; }

AttackKind parse_attack_kind(const std::string& s) {
  if (s == "pgd") return AttackKind::pgd;
  if (s == "fgsm") return AttackKind::fgsm;
  throw ConfigError("unknown attack kind '" + s + "'");
}

AttackMode parse_attack_mode(const std::string& s) {
  if (s == "white-box") return AttackMode::white_box;
  if (s == "black-box") return AttackMode::black_box;
  throw ConfigError("unknown attack mode '" + s + "'");
}

ShiftKind parse_shift_kind(const std::string& s) {
  if (s == "scale") return ShiftKind::scale;
  if (s == "uniform") return ShiftKind::uniform;
  throw ConfigError("unknown shift kind '" + s + "'");
}

void AttackConfig::validate() const {
  if (!(delta >= 0.0) || !std::isfinite(delta)) throw ConfigError("attack budget must be finite and >= 0");
  if (kind == AttackKind::pgd) {
    if (steps < 1) throw ConfigError("pgd needs at least one step");
    if (!(step_size > 0.0)) throw ConfigError("pgd step size must be positive");
  }
  if (clip && !(clip->lo <= clip->hi)) throw ConfigError("clip range has lo > hi");
}

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Feasible set: the Delta-box around x intersected with the clip range.
struct Feasible {
  Vector lo, hi;

  Feasible(std::span<const double> x, const AttackConfig& cfg) : lo(x.size()), hi(x.size()) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      lo[i] = x[i] - cfg.delta;
      hi[i] = x[i] + cfg.delta;
      if (cfg.clip) {
        lo[i] = std::max(lo[i], cfg.clip->lo);
        hi[i] = std::min(hi[i], cfg.clip->hi);
      }
      if (lo[i] > hi[i]) {
        throw DomainError("feature " + std::to_string(i) + " lies farther than Delta from the clip range");
      }
    }
  }

  void project(Vector& u) const {
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = std::clamp(u[i], lo[i], hi[i]);
  }
};

void assert_feasible(std::span<const double> x, std::span<const double> u, const AttackConfig& cfg) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    const bool in_box = std::abs(u[i] - x[i]) <= cfg.delta + 1e-12;
    const bool in_clip = !cfg.clip || (u[i] >= cfg.clip->lo && u[i] <= cfg.clip->hi);
    if (!in_box || !in_clip) throw NumericalError("attack output violates its constraints at feature " + std::to_string(i));
  }
}

void input_gradient(ModelLoss& model, std::span<const double> params, const Vector& u, double y, Vector& g) {
  model.value_and_grad(params, u, y, {}, g);
  for (double v : g) {
    if (!std::isfinite(v)) throw NumericalError("non-finite input gradient during attack");
  }
}

}  // namespace

Sample attack(ModelLoss& model, std::span<const double> params, const Sample& sample, const AttackConfig& cfg,
              std::uint64_t sample_index) {
  cfg.validate();
  const Feasible feas(sample.x, cfg);
  Vector u = sample.x;
  Vector g(u.size());

  if (cfg.kind == AttackKind::fgsm) {
    input_gradient(model, params, u, sample.y, g);
    for (std::size_t i = 0; i < u.size(); ++i) u[i] += cfg.delta * sign(g[i]);
    feas.project(u);
  } else {
    if (cfg.random_start) {
      Rng rng(derive_seed(cfg.seed, sample_index));
      for (double& v : u) v += rng.uniform(-cfg.delta, cfg.delta);
      feas.project(u);
    }
    for (int s = 0; s < cfg.steps; ++s) {
      input_gradient(model, params, u, sample.y, g);
      for (std::size_t i = 0; i < u.size(); ++i) u[i] += cfg.step_size * sign(g[i]);
      feas.project(u);
    }
  }
  assert_feasible(sample.x, u, cfg);
  return Sample{std::move(u), sample.y};
}

std::vector<Sample> perturb_dataset(ModelLoss& model, std::span<const double> params, const std::vector<Sample>& data,
                                    const AttackConfig& cfg) {
  std::vector<Sample> out;
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    try {
      out.push_back(attack(model, params, data[i], cfg, i));
    } catch (const Error&) {
      rethrow_with_context("attack on sample " + std::to_string(i));
    }
  }
  return out;
}

EvalStats evaluate(ModelLoss& model, std::span<const double> params, const std::vector<Sample>& data) {
  if (data.empty()) throw DomainError("cannot evaluate on an empty data set");
  const bool classify = model.spec().is_classifier();
  double err = 0.0, total = 0.0;
  for (const Sample& s : data) {
    total += model.value(params, s.x, s.y);
    if (classify) {
      err += static_cast<double>(model.predict_class(params, s.x)) != s.y ? 1.0 : 0.0;
    } else {
      const double r = model.predict(params, s.x)[0] - s.y;
      err += r * r;
    }
  }
  const auto n = static_cast<double>(data.size());
  return {err / n, total / n};
}

SweepResult sweep(ModelLoss& victim, std::span<const double> params, const std::vector<Sample>& test,
                  const std::vector<double>& deltas, const AttackConfig& cfg, const AttackSource* source,
                  const std::string& method, std::uint64_t seed) {
  if (test.empty()) throw DomainError("sweep needs a non-empty test set");
  if (deltas.empty()) throw ConfigError("sweep needs at least one Delta");
  const bool black = cfg.mode == AttackMode::black_box;
  if (black && (source == nullptr || source->model == nullptr)) {
    throw ConfigError("black-box sweep needs a source model");
  }
  SweepResult out;
  for (double d : deltas) {
    AttackConfig c = cfg;
    c.delta = d;
    const auto attacked = black ? perturb_dataset(*source->model, source->params, test, c)
                                : perturb_dataset(victim, params, test, c);
    const EvalStats st = evaluate(victim, params, attacked);
    out.rows.push_back({method, seed, to_string(cfg.kind), to_string(cfg.mode), d, st.error, st.mean_loss, test.size()});
  }
  return out;
}

Tensor shift_scale(const Tensor& x, double delta) {
  Vector v = x.values();
  for (double& e : v) e *= 1.0 + delta;
  return Tensor(x.shape(), std::move(v));
}

Tensor shift_uniform(const Tensor& x, double d, std::uint64_t seed) {
  if (!(d >= 0.0)) throw DomainError("uniform shift magnitude must be >= 0");
  Rng rng(seed);
  Vector v = x.values();
  for (double& e : v) e += d * rng.uniform(-1.0, 1.0);
  return Tensor(x.shape(), std::move(v));
}

std::vector<Sample> shift_scale(const std::vector<Sample>& data, double delta) {
  std::vector<Sample> out = data;
  for (Sample& s : out) {
    for (double& e : s.x) e *= 1.0 + delta;
  }
  return out;
}

std::vector<Sample> shift_uniform(const std::vector<Sample>& data, double d, std::uint64_t seed) {
  if (!(d >= 0.0)) throw DomainError("uniform shift magnitude must be >= 0");
  Rng rng(seed);
  std::vector<Sample> out = data;
  for (Sample& s : out) {
    for (double& e : s.x) e += d * rng.uniform(-1.0, 1.0);
  }
  return out;
}

SweepResult shift_sweep(ModelLoss& model, std::span<const double> params, const std::vector<Sample>& test,
                        const std::vector<double>& amounts, ShiftKind kind, const std::string& method,
                        std::uint64_t seed) {
  if (test.empty()) throw DomainError("shift sweep needs a non-empty test set");
  if (amounts.empty()) throw ConfigError("shift sweep needs at least one shift amount");
  SweepResult out;
  for (std::size_t j = 0; j < amounts.size(); ++j) {
    const auto shifted = kind == ShiftKind::scale ? shift_scale(test, amounts[j])
                                                  : shift_uniform(test, amounts[j], derive_seed(seed, j));
    const EvalStats st = evaluate(model, params, shifted);
    out.rows.push_back({method, seed, to_string(kind), "shift", amounts[j], st.error, st.mean_loss, test.size()});
  }
  return out;
}

CertificateReport certificate(double objective, double rho, double sigma, double eps_pos) {
  if (!(objective > 0.0) || !std::isfinite(objective)) throw DomainError("certificate needs a positive objective");
  if (!(rho >= 0.0)) throw DomainError("certificate needs rho >= 0");
  if (!(sigma > 0.0)) throw DomainError("certificate needs sigma > 0");
  return {objective, rho, sigma, eps_pos, std::log(objective) + rho / sigma};
}

// ---------------------------------------------------------------------------
// certificate_check

namespace {

double log_loss(const PointLoss& loss, std::size_t i, std::span<const double> u) {
  const double v = loss(i, u, {});
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw DomainError("certificate check needs a positive finite loss (sample " + std::to_string(i) + ")");
  }
  return std::log(v);
}

// sup_u ln l(u) - c(u, x) / sigma over the grid, the extra candidates, and a
// golden-section polish around the best 1-d grid point.
double grid_log_sup(const PointLoss& loss, std::size_t i, const Vector& x, const KernelSpec& kspec,
                    const std::vector<Vector>& grid, const std::vector<Vector>& extra, double step) {
  auto obj = [&](std::span<const double> u) { return log_loss(loss, i, u) - cost(kspec.cost, u, x) / kspec.sigma; };
  double best = -std::numeric_limits<double>::infinity();
  Vector arg;
  for (const auto* set : {&grid, &extra}) {
    for (const Vector& u : *set) {
      const double v = obj(u);
      if (v > best) {
        best = v;
        arg = u;
      }
    }
  }
  if (x.size() == 1) {
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = arg[0] - step, b = arg[0] + step;
    Vector p{0.0};
    auto f = [&](double t) {
      p[0] = t;
      return obj(p);
    };
    double c = b - invphi * (b - a), d = a + invphi * (b - a);
    double fc = f(c), fd = f(d);
    for (int it = 0; it < 60; ++it) {
      if (fc > fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - invphi * (b - a);
        fc = f(c);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + invphi * (b - a);
        fd = f(d);
      }
    }
    best = std::max({best, fc, fd});
  }
  return best;
}

}  // namespace

CertificateCheck certificate_check(const PointLoss& loss, const std::vector<Vector>& points, const KernelSpec& kspec,
                                   const std::vector<Vector>& shifts, const CertificateCheckConfig& cfg) {
  kspec.validate();
  if (points.empty()) throw DomainError("certificate check needs at least one point");
  if (shifts.size() != points.size()) throw ShapeError("one displacement per point is required");
  const std::size_t d = points[0].size();
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].size() != d || shifts[i].size() != d) throw ShapeError("point/displacement dimensions differ");
  }

  std::vector<Vector> grid;
  if (cfg.mode == SupremumMode::grid_oracle) {
    if (d > 2) throw ConfigError("grid-oracle suprema support at most 2 dimensions");
    if (!(cfg.grid_step > 0.0) || !(cfg.grid_lo < cfg.grid_hi)) throw ConfigError("invalid oracle grid");
    const Vector axis = grid_1d(cfg.grid_lo, cfg.grid_hi, cfg.grid_step);
    grid = grid_points(Box::uniform(d, cfg.grid_lo, cfg.grid_hi), axis.size());
  } else {
    cfg.inner.validate();
  }

  const auto n = static_cast<double>(points.size());
  double rho = 0.0, lhs = 0.0;
  Vector logs(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    Vector moved = points[i];
    for (std::size_t j = 0; j < d; ++j) moved[j] += shifts[i][j];
    rho += cost(kspec.cost, moved, points[i]);
    lhs += log_loss(loss, i, moved);

    if (cfg.mode == SupremumMode::grid_oracle) {
      logs[i] = grid_log_sup(loss, i, points[i], kspec, grid, {points[i], moved}, cfg.grid_step);
    } else {
      InnerSolverConfig inner = cfg.inner;
      inner.seed = derive_seed(cfg.inner.seed, i);
      DiffFn f = [&](std::span<const double> u, std::span<double> g) { return loss(i, u, g); };
      logs[i] = std::log(k_transform_log(f, points[i], kspec, inner).value);
    }
  }
  rho /= n;
  lhs /= n;

  const double top = *std::max_element(logs.begin(), logs.end());
  double acc = 0.0;
  for (double v : logs) acc += std::exp(v - top);
  const double log_obj = top + std::log(acc / n);

  CertificateCheck out;
  out.lhs = lhs;
  out.rho = rho;
  out.objective = std::exp(log_obj);
  out.rhs = log_obj + rho / kspec.sigma;
  out.pass = out.lhs <= out.rhs + 1e-9;
  out.mode = cfg.mode;
  return out;
}

CertificateCheck certificate_check(ModelLoss& model, std::span<const double> params, const std::vector<Sample>& data,
                                   const KernelSpec& kspec, const std::vector<Vector>& shifts,
                                   const CertificateCheckConfig& cfg) {
  std::vector<Vector> points;
  points.reserve(data.size());
  for (const Sample& s : data) points.push_back(s.x);
  PointLoss f = [&](std::size_t i, std::span<const double> u, std::span<double> g) {
    return model.value_and_grad(params, u, data[i].y, {}, g);
  };
  return certificate_check(f, points, kspec, shifts, cfg);
}

}  // namespace arks
