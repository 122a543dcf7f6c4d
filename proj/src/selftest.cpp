#include <cmath>
#include <functional>
#include <sstream>

#include "arks/cli.hpp"
#include "arks/errors.hpp"
#include "arks/random.hpp"
#include "arks/surrogates.hpp"

namespace arks {

namespace {

class Suite {
 public:
  void check(const std::string& name, const std::function<std::string()>& body) {
    std::string problem;
    try {
      problem = body();
    } catch (const std::exception& e) {
      problem = std::string("threw: ") + e.what();
    }
    if (problem.empty()) {
      ++rep_.passed;
      rep_.lines.push_back("PASS " + name);
    } else {
      ++rep_.failed;
      rep_.lines.push_back("FAIL " + name + ": " + problem);
    }
  }
  SelftestReport report() const { return rep_; }

 private:
  SelftestReport rep_;
};

DiffFn quadratic(double a, double b, double c) {
  return [=](std::span<const double> u, std::span<double> g) {
    double v = c;
    for (std::size_t i = 0; i < u.size(); ++i) {
      v += a * (u[i] - b) * (u[i] - b);
      if (!g.empty()) g[i] = 2.0 * a * (u[i] - b);
    }
    return v;
  };
}

std::string fail_at(int trial, double got, double want) {
  std::ostringstream s;
  s.precision(17);
  s << "trial " << trial << ": got " << got << ", want " << want;
  return s.str();
}

}  // namespace

SelftestReport run_selftest() {
  Suite s;

  s.check("k-transform majorant", [] {
    Rng rng(1);
    for (int t = 0; t < 100; ++t) {
      const std::size_t d = 1 + rng.below(2);
      const DiffFn l = quadratic(rng.uniform(0.1, 2.0), rng.uniform(-1.0, 1.0), rng.uniform(0.01, 1.0));
      Vector x(d);
      for (double& v : x) v = rng.uniform(-2.0, 2.0);
      const KernelSpec k{{}, rng.uniform(0.05, 3.0)};
      InnerSolverConfig cfg;
      cfg.step_size = 0.5 * std::min(k.sigma, 1.0);
      cfg.seed = static_cast<std::uint64_t>(t);
      const double base = l(x, {});
      const double v = k_transform(l, x, k, cfg).value;
      if (v < base - 1e-12) return fail_at(t, v, base);
    }
    return std::string();
  });

  s.check("log and product paths agree", [] {
    Rng rng(2);
    for (int t = 0; t < 30; ++t) {
      const DiffFn l = quadratic(rng.uniform(0.1, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(0.5, 2.0));
      const Vector x{rng.uniform(-1.0, 1.0)};
      // small bandwidth keeps both objectives strictly concave
      const KernelSpec k{{}, rng.uniform(0.05, 0.3)};
      InnerSolverConfig cfg;
      cfg.steps = 20000;
      cfg.step_size = 0.05;
      cfg.grad_tol = 1e-12;
      InnerSolverConfig prod = cfg;
      prod.log_scale = false;
      const double a = k_transform(l, x, k, cfg).value;
      const double b = k_transform(l, x, k, prod).value;
      if (std::abs(a - b) > 1e-8 * std::abs(b)) return fail_at(t, a, b);
    }
    return std::string();
  });

  s.check("c-transform closed form", [] {
    InnerSolverConfig cfg;
    cfg.steps = 200;
    cfg.step_size = 0.1;
    const DiffFn sq = quadratic(1.0, 0.0, 0.0);
    const Vector x{1.0};
    const auto r = c_transform(sq, x, 2.0, CostSpec{CostFamily::sq_l2}, cfg);
    if (std::abs(r.value - 2.0) > 1e-6) return fail_at(0, r.value, 2.0);
    if (std::abs(r.maximizer[0] - 2.0) > 1e-4) return fail_at(0, r.maximizer[0], 2.0);
    try {
      c_transform(sq, x, 1.0, CostSpec{CostFamily::sq_l2}, cfg);
    } catch (const DivergenceError&) {
      return std::string();
    }
    return std::string("y = 1 did not diverge");
  });

  s.check("sigma* closed form", [] {
    if (sigma_star(1.0, 1.0, 2.0) != 1.0) return std::string("sigma*(1, 1, 2) != 1");
    const double want = 2.0 / (std::sqrt(5.0) - 1.0);
    if (std::abs(sigma_star(1.0, 2.0, 2.0) - want) > 1e-12) return fail_at(0, sigma_star(1.0, 2.0, 2.0), want);
    return std::string();
  });

  s.check("autodiff matches finite differences", [] {
    const ModelSpec spec{ModelFamily::mlp, {3, 5, 3}, Activation::elu, 3, 3};
    ModelLoss m(spec, LossKind{LossFamily::cross_entropy, 1e-3});
    for (int t = 0; t < 10; ++t) {
      const Vector p = init_params(spec, static_cast<std::uint64_t>(t));
      Rng rng(100 + static_cast<std::uint64_t>(t));
      const Vector x{rng.normal(), rng.normal(), rng.normal()};
      const double y = static_cast<double>(rng.below(3));
      Vector g(p.size());
      m.value_and_grad(p, x, y, g, {});
      const Vector fd = finite_diff_grad([&](std::span<const double> q) { return m.value(q, x, y); }, p, 1e-5);
      double num = 0.0, den = 1e-6;
      for (std::size_t i = 0; i < g.size(); ++i) {
        num += (g[i] - fd[i]) * (g[i] - fd[i]);
        den += fd[i] * fd[i];
      }
      if (std::sqrt(num / den) > 1e-4) return fail_at(t, std::sqrt(num / den), 0.0);
    }
    return std::string();
  });

  s.check("certificate check with grid-oracle suprema", [] {
    Rng rng(3);
    for (int t = 0; t < 20; ++t) {
      const double a = rng.uniform(0.1, 2.0), b = rng.uniform(-1.0, 1.0);
      PointLoss l = [=](std::size_t, std::span<const double> u, std::span<double>) {
        return 0.1 + a * (u[0] - b) * (u[0] - b);
      };
      std::vector<Vector> pts, shifts;
      for (int i = 0; i < 4; ++i) {
        pts.push_back({rng.uniform(-2.0, 2.0)});
        shifts.push_back({rng.uniform(-1.0, 1.0)});
      }
      CertificateCheckConfig cfg;
      cfg.grid_step = 1e-2;
      const auto c = certificate_check(l, pts, KernelSpec{{}, rng.uniform(0.1, 2.0)}, shifts, cfg);
      if (!c.pass) return fail_at(t, c.lhs, c.rhs);
    }
    return std::string();
  });

  s.check("attack outputs respect budget and clip", [] {
    const ModelSpec spec{ModelFamily::mlp, {2, 6, 2}, Activation::relu, 2, 2};
    ModelLoss m(spec, LossKind{LossFamily::cross_entropy, 1e-3});
    Rng rng(4);
    for (int t = 0; t < 500; ++t) {
      const Vector p = init_params(spec, static_cast<std::uint64_t>(t % 7));
      AttackConfig cfg;
      cfg.kind = t % 2 ? AttackKind::pgd : AttackKind::fgsm;
      cfg.delta = rng.uniform(0.0, 0.4);
      cfg.clip = ClipRange{0.0, 1.0};
      const Sample smp{{rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)}, static_cast<double>(rng.below(2))};
      const Sample adv = attack(m, p, smp, cfg);
      for (std::size_t i = 0; i < 2; ++i) {
        if (std::abs(adv.x[i] - smp.x[i]) > cfg.delta + 1e-12 || adv.x[i] < 0.0 || adv.x[i] > 1.0) {
          return fail_at(t, adv.x[i], smp.x[i]);
        }
      }
    }
    return std::string();
  });

  s.check("training is deterministic", [] {
    const auto data = make_two_moons(40, 0.1, 5);
    const ModelSpec spec{ModelFamily::mlp, {2, 4, 2}, Activation::elu, 2, 2};
    TrainConfig cfg;
    cfg.method = Method::arks;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    cfg.kernel.sigma = 0.2;
    cfg.inner.restarts = 2;
    const auto a = train(spec, LossKind{LossFamily::cross_entropy, 1e-3}, data, cfg);
    const auto b = train(spec, LossKind{LossFamily::cross_entropy, 1e-3}, data, cfg);
    if (a.objective != b.objective || a.params != b.params) return std::string("two runs differ");
    return std::string();
  });

  s.check("csv round trip", [] {
    const auto data = make_linear_regression(10, 3, 0.1, 6);
    if (parse_csv(format_csv(data)) != data) return std::string("samples changed");
    return std::string();
  });

  s.check("config echo round trip", [] {
    ExperimentConfig c;
    c.kind = ExperimentKind::train;
    c.synthetic = SyntheticSpec{};
    c.model = ModelSpec{ModelFamily::mlp, {2, 3, 2}, Activation::elu, 2, 2};
    c.loss = LossKind{LossFamily::cross_entropy, 1e-3};
    c.train.inner.box = Box::uniform(2, -1.0, 1.0);
    c.sigmas = {0.1, 0.7};
    const std::string once = config_to_json(c);
    if (config_to_json(parse_config(once)) != once) return std::string("echo differs after reload");
    return std::string();
  });

  return s.report();
}

}  // namespace arks
