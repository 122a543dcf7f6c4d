#include "arks/trainers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "arks/errors.hpp"
#include "arks/random.hpp"

namespace arks {

std::string to_string(Method m) {
  switch (m) {
    case Method::erm: return "erm";
    case Method::arks: return "arks";
    case Method::wrm: return "wrm";
    case Method::pgd_at: return "pgd-at";
    case Method::ro: return "ro";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  if (s == "erm") return Method::erm;
  if (s == "arks") return Method::arks;
  if (s == "wrm") return Method::wrm;
  if (s == "pgd-at") return Method::pgd_at;
  if (s == "ro") return Method::ro;
  throw ConfigError("unknown training method '" + s + "'");
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be positive");
  if (!(lr_decay_factor > 0.0)) throw ConfigError("learning-rate decay factor must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be >= 0");
  if (swa_start < 0) throw ConfigError("swa start epoch must be >= 0");
  inner.validate();
  switch (method) {
    case Method::erm: break;
    case Method::arks:
      if (!(kernel.sigma > 0.0)) throw ConfigError("arks needs sigma > 0");
      break;
    case Method::wrm:
      if (!(wrm_y > 0.0)) throw ConfigError("wrm needs y > 0");
      break;
    case Method::pgd_at: pgd.validate(); break;
    case Method::ro:
      if (!ro_domain || !ro_domain->bounded()) throw ConfigError("ro needs a bounded domain");
      ro_domain->validate();
      break;
  }
}

double TrainConfig::lr_at(int epoch) const {
  double r = lr;
  for (int e : lr_decay_epochs) {
    if (epoch >= e) r *= lr_decay_factor;
  }
  return r;
}

Vector swa_average(const std::vector<Vector>& snapshots) {
  if (snapshots.empty()) throw DomainError("swa needs at least one snapshot");
  Vector out(snapshots[0].size(), 0.0);
  for (const Vector& s : snapshots) {
    if (s.size() != out.size()) throw ShapeError("swa snapshots differ in length");
    for (std::size_t i = 0; i < s.size(); ++i) out[i] += s[i];
  }
  for (double& v : out) v /= static_cast<double>(snapshots.size());
  return out;
}

namespace {

InnerSolverConfig inner_for(const TrainConfig& cfg, std::uint64_t stream) {
  InnerSolverConfig in = cfg.inner;
  in.seed = derive_seed(cfg.inner.seed ^ cfg.seed, stream);
  return in;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// Shared outer loop. `step(params, sample_index, stream)` returns the sample's
// objective and adds its theta-gradient into the accumulator.
template <class Step>
TrainReport run_loop(Vector params, std::size_t n, const TrainConfig& cfg, Step&& step) {
  TrainReport rep;
  rep.seed = cfg.seed;
  rep.config = cfg;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffler(derive_seed(cfg.seed, 0x5bd1e995ULL));
  std::vector<Vector> snapshots;
  Vector acc(params.size());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffler.below(i)]);
    const double lr = cfg.lr_at(epoch);
    double total = 0.0;
    std::size_t batch = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size, ++batch) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t p = start; p < stop; ++p) {
        const std::size_t idx = order[p];
        const std::uint64_t stream = static_cast<std::uint64_t>(epoch) * n + idx;
        try {
          total += step(params, idx, stream, acc);
        } catch (const Error&) {
          rethrow_with_context("epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) + ", sample " +
                               std::to_string(idx));
        }
      }
      const double inv = 1.0 / static_cast<double>(stop - start);
      Vector next = params;
      for (std::size_t j = 0; j < params.size(); ++j) {
        next[j] -= lr * (acc[j] * inv + cfg.weight_decay * params[j]);
      }
      if (!all_finite(next)) {
        throw TrainingAborted("non-finite parameter update at epoch " + std::to_string(epoch) + ", batch " +
                                  std::to_string(batch),
                              params);
      }
      params = std::move(next);
    }
    rep.objective.push_back(total / static_cast<double>(n));
    rep.epoch_seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    if (cfg.swa && epoch >= cfg.swa_start) snapshots.push_back(params);
  }
  if (cfg.swa && !snapshots.empty()) rep.swa_params = swa_average(snapshots);
  rep.params = std::move(params);
  return rep;
}

}  // namespace

// ---------------------------------------------------------------------------
// Parametric models

SampleStep sample_step(ModelLoss& model, std::span<const double> params, const Sample& sample,
                       const TrainConfig& cfg, std::uint64_t stream) {
  SampleStep out;
  out.grad.assign(params.size(), 0.0);
  DiffFn f = [&](std::span<const double> u, std::span<double> g) {
    return model.value_and_grad(params, u, sample.y, {}, g);
  };
  double scale = 1.0;

  switch (cfg.method) {
    case Method::erm: {
      out.maximizer = sample.x;
      break;
    }
    case Method::arks: {
      auto r = k_transform(f, sample.x, cfg.kernel, inner_for(cfg, stream));
      out.objective = r.value;
      out.maximizer = std::move(r.maximizer);
      if (cfg.scale_grad_by_kernel) scale = kernel(cfg.kernel, out.maximizer, sample.x);
      break;
    }
    case Method::wrm: {
      auto r = c_transform(f, sample.x, cfg.wrm_y, cfg.wrm_cost, inner_for(cfg, stream));
      out.objective = r.value;
      out.maximizer = std::move(r.maximizer);
      break;
    }
    case Method::pgd_at: {
      out.maximizer = attack(model, params, sample, cfg.pgd, stream).x;
      break;
    }
    case Method::ro: {
      auto r = worst_case_sup(f, cfg.ro_domain, inner_for(cfg, stream));
      out.objective = r.value;
      out.maximizer = std::move(r.maximizer);
      break;
    }
  }
  const double at_max = model.value_and_grad(params, out.maximizer, sample.y, out.grad, {});
  if (cfg.method == Method::erm || cfg.method == Method::pgd_at) out.objective = at_max;
  if (scale != 1.0) {
    for (double& g : out.grad) g *= scale;
  }
  return out;
}

double evaluate_objective(ModelLoss& model, std::span<const double> params, const std::vector<Sample>& data,
                          const TrainConfig& cfg) {
  if (data.empty()) throw DomainError("objective of an empty data set");
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) total += sample_step(model, params, data[i], cfg, i).objective;
  return total / static_cast<double>(data.size());
}

TrainReport train(const ModelSpec& spec, const LossKind& kind, const std::vector<Sample>& data,
                  const TrainConfig& cfg, std::optional<Vector> init) {
  spec.validate();
  validate_compatible(spec, kind);
  cfg.validate();
  if (data.empty()) throw DomainError("training data is empty");
  for (const Sample& s : data) validate_sample(spec, s);
  Vector params = init ? std::move(*init) : init_params(spec, cfg.seed);
  if (params.size() != spec.param_count()) throw ShapeError("initial parameters do not match the model");

  ModelLoss model(spec, kind);
  return run_loop(std::move(params), data.size(), cfg,
                  [&](const Vector& p, std::size_t idx, std::uint64_t stream, Vector& acc) {
                    const SampleStep st = sample_step(model, p, data[idx], cfg, stream);
                    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += st.grad[j];
                    return st.objective;
                  });
}

// ---------------------------------------------------------------------------
// Robust least squares

double rls_worst_grid_loss(const RlsProblem& problem, std::span<const double> theta, std::span<const double> grid,
                           const LossKind& kind) {
  if (grid.empty()) throw DomainError("empty xi grid");
  double best = -std::numeric_limits<double>::infinity();
  for (double xi : grid) best = std::max(best, rls_loss(theta, xi, problem.a0, problem.a1, problem.b));
  return best + kind.eps_pos;
}

RlsStep rls_sample_step(const RlsProblem& problem, std::span<const double> theta, double xi, const TrainConfig& cfg,
                        const LossKind& kind, std::uint64_t stream) {
  RlsStep out;
  DiffFn f = [&](std::span<const double> u, std::span<double> g) {
    if (g.empty()) return rls_loss(theta, u[0], problem.a0, problem.a1, problem.b) + kind.eps_pos;
    const RlsEval e = rls_loss_grad(theta, u[0], problem);
    g[0] = e.grad_xi;
    return e.value + kind.eps_pos;
  };
  const Vector x{xi};
  double scale = 1.0;
  switch (cfg.method) {
    case Method::erm: out.maximizer = xi; break;
    case Method::arks: {
      auto r = k_transform(f, x, cfg.kernel, inner_for(cfg, stream));
      out.objective = r.value;
      out.maximizer = r.maximizer[0];
      if (cfg.scale_grad_by_kernel) scale = kernel(cfg.kernel, r.maximizer, x);
      break;
    }
    case Method::wrm: {
      auto r = c_transform(f, x, cfg.wrm_y, cfg.wrm_cost, inner_for(cfg, stream));
      out.objective = r.value;
      out.maximizer = r.maximizer[0];
      break;
    }
    case Method::ro: {
      const auto grid = grid_points(*cfg.ro_domain, cfg.inner.grid_points);
      double best = -std::numeric_limits<double>::infinity();
      for (const Vector& u : grid) {
        const double v = f(u, {});
        if (v > best) {
          best = v;
          out.maximizer = u[0];
        }
      }
      out.objective = best;
      break;
    }
    case Method::pgd_at: {
      // Sign-gradient ascent on xi inside [xi - Delta, xi + Delta].
      double u = xi;
      Vector g(1);
      for (int s = 0; s < cfg.pgd.steps; ++s) {
        const Vector p{u};
        f(p, g);
        u += cfg.pgd.step_size * (g[0] > 0 ? 1.0 : (g[0] < 0 ? -1.0 : 0.0));
        u = std::clamp(u, xi - cfg.pgd.delta, xi + cfg.pgd.delta);
        if (cfg.pgd.clip) u = std::clamp(u, cfg.pgd.clip->lo, cfg.pgd.clip->hi);
      }
      out.maximizer = u;
      break;
    }
  }
  RlsEval e = rls_loss_grad(theta, out.maximizer, problem);
  if (cfg.method == Method::erm || cfg.method == Method::pgd_at) out.objective = e.value + kind.eps_pos;
  out.grad = std::move(e.grad_theta);
  if (scale != 1.0) {
    for (double& g : out.grad) g *= scale;
  }
  return out;
}

double rls_objective(const RlsProblem& problem, std::span<const double> theta, const std::vector<double>& xi,
                     const TrainConfig& cfg, const LossKind& kind) {
  if (xi.empty()) throw DomainError("rls objective needs at least one xi sample");
  if (cfg.method == Method::ro) return rls_sample_step(problem, theta, xi[0], cfg, kind, 0).objective;
  double total = 0.0;
  for (std::size_t i = 0; i < xi.size(); ++i) total += rls_sample_step(problem, theta, xi[i], cfg, kind, i).objective;
  return total / static_cast<double>(xi.size());
}

TrainReport train_rls(const RlsProblem& problem, const std::vector<double>& xi, const TrainConfig& cfg,
                      const LossKind& kind) {
  problem.validate();
  cfg.validate();
  if (xi.empty()) throw DomainError("rls training needs at least one xi sample");
  if (cfg.method == Method::ro && cfg.ro_domain->dim() != 1) throw ConfigError("rls ro domain must be 1-d");
  if (cfg.inner.box && cfg.inner.box->dim() != 1) throw ConfigError("rls inner box must be 1-d");

  // theta = 0 makes the loss constant in xi, so every xi ties as a maximizer
  Rng rng(derive_seed(cfg.seed, 1));
  Vector theta0(problem.dim());
  for (double& v : theta0) v = 0.1 * rng.normal();
  return run_loop(std::move(theta0), xi.size(), cfg,
                  [&](const Vector& th, std::size_t idx, std::uint64_t stream, Vector& acc) {
                    const RlsStep st = rls_sample_step(problem, th, xi[idx], cfg, kind, stream);
                    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += st.grad[j];
                    return st.objective;
                  });
}

}  // namespace arks
