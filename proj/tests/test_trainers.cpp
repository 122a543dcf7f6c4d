#include <cmath>
#include <cstring>

#include "arks/data.hpp"
#include "arks/errors.hpp"
#include "arks/random.hpp"
#include "arks/trainers.hpp"
#include "doctest.h"
#include "tape_gen.hpp"

using namespace arks;
using arks::testing::rel_error;

namespace {

ModelSpec linear(std::size_t d) { return ModelSpec{ModelFamily::linear_regression, {}, Activation::elu, d, 1}; }

double l2_dist(const Vector& a, const Vector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

RlsProblem one_d_rls() {
  // 2 x 1 system so theta is a scalar
  return RlsProblem{Tensor::matrix(2, 1, {1.0, 0.5}), Tensor::matrix(2, 1, {0.6, -0.2}), {1.0, -0.3}};
}

TrainConfig rls_cfg(Method m) {
  TrainConfig cfg;
  cfg.method = m;
  cfg.epochs = 300;
  cfg.batch_size = 64;
  cfg.lr = 0.1;
  cfg.inner.steps = 60;
  cfg.inner.restarts = 4;
  cfg.inner.restart_radius = 2.0;
  cfg.inner.box = Box::uniform(1, -1.0, 1.0);
  cfg.ro_domain = Box::uniform(1, -1.0, 1.0);
  cfg.inner.grid_points = 401;
  return cfg;
}

}  // namespace

TEST_CASE("zero epochs returns the initial parameters") {
  const auto data = make_linear_regression(10, 3, 0.0, 1);
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.seed = 42;
  const auto rep = train(linear(3), LossKind{}, data, cfg);
  CHECK(rep.params == init_params(linear(3), 42));
  CHECK(rep.objective.empty());
  CHECK(rep.seed == 42);
}

TEST_CASE("erm fits exactly linear data") {
  const auto data = make_linear_regression(40, 3, 0.0, 2);
  TrainConfig cfg;
  cfg.epochs = 500;
  cfg.batch_size = 8;
  cfg.lr = 0.05;
  const LossKind kind{LossFamily::least_squares, 1e-3};
  const auto rep = train(linear(3), kind, data, cfg);
  REQUIRE(rep.objective.size() == 500);
  ModelLoss m(linear(3), kind);
  CHECK(evaluate_objective(m, rep.params, data, cfg) < 1e-6 + kind.eps_pos);
}

TEST_CASE("arks with a tiny bandwidth lands on the erm solution") {
  const auto data = make_linear_regression(30, 2, 0.3, 3);
  const LossKind kind{LossFamily::least_squares, 1e-3};
  TrainConfig erm;
  erm.epochs = 200;
  erm.batch_size = 10;
  erm.lr = 0.05;
  erm.seed = 5;
  TrainConfig ark = erm;
  ark.method = Method::arks;
  ark.kernel.sigma = 1e-6;
  ark.inner.step_size = 0.5e-6;
  ark.inner.steps = 20;
  const auto a = train(linear(2), kind, data, erm);
  const auto b = train(linear(2), kind, data, ark);
  CHECK(l2_dist(a.params, b.params) < 1e-2);
}

TEST_CASE("training is deterministic") {
  const auto data = make_two_moons(60, 0.1, 4);
  const ModelSpec spec{ModelFamily::mlp, {2, 6, 2}, Activation::elu, 2, 2};
  const LossKind kind{LossFamily::cross_entropy, 1e-3};
  for (Method m : {Method::erm, Method::arks, Method::pgd_at}) {
    TrainConfig cfg;
    cfg.method = m;
    cfg.epochs = 5;
    cfg.batch_size = 7;
    cfg.seed = 9;
    cfg.kernel.sigma = 0.1;
    cfg.inner.step_size = 0.05;
    cfg.inner.restarts = 2;
    cfg.pgd.delta = 0.1;
    const auto a = train(spec, kind, data, cfg);
    const auto b = train(spec, kind, data, cfg);
    REQUIRE(a.objective.size() == 5);
    CHECK(std::memcmp(a.objective.data(), b.objective.data(), 5 * sizeof(double)) == 0);
    CHECK(a.params == b.params);
  }
}

TEST_CASE("arks objective is a majorant of the plain loss") {
  const auto data = make_two_moons(40, 0.1, 6);
  const ModelSpec spec{ModelFamily::mlp, {2, 6, 2}, Activation::elu, 2, 2};
  ModelLoss m(spec, LossKind{LossFamily::cross_entropy, 1e-3});
  const Vector p = init_params(spec, 3);
  TrainConfig cfg;
  cfg.method = Method::arks;
  cfg.kernel.sigma = 0.3;
  cfg.inner.step_size = 0.1;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto st = sample_step(m, p, data[i], cfg, i);
    CHECK(st.objective >= m.value(p, data[i].x, data[i].y));
  }
}

TEST_CASE("epoch objective is the mean of per-sample surrogate values") {
  // With lr tiny the parameters barely move, so one epoch's objective equals
  // the surrogate mean at the initial point.
  const auto data = make_linear_regression(12, 2, 0.5, 7);
  const LossKind kind{};
  TrainConfig cfg;
  cfg.method = Method::arks;
  cfg.epochs = 1;
  cfg.batch_size = 12;
  cfg.lr = 1e-300;
  cfg.kernel.sigma = 0.5;
  cfg.inner.step_size = 0.1;
  const auto rep = train(linear(2), kind, data, cfg);
  ModelLoss m(linear(2), kind);
  const Vector p0 = init_params(linear(2), 0);
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) total += sample_step(m, p0, data[i], cfg, i).objective;
  CHECK(rep.objective[0] == doctest::Approx(total / 12.0).epsilon(1e-12));
}

TEST_CASE("outer gradient matches finite differences at the fixed maximizer") {
  const RlsProblem prob = one_d_rls();
  const LossKind kind{};
  for (double sigma : {0.05, 0.2}) {
    TrainConfig cfg = rls_cfg(Method::arks);
    cfg.kernel.sigma = sigma;
    cfg.inner.step_size = 0.5 * sigma;
    cfg.inner.steps = 2000;
    cfg.inner.box.reset();
    cfg.inner.restarts = 0;
    for (double xi : {-0.4, 0.1, 0.3}) {
      for (double th0 : {0.3, 0.8}) {
        const Vector th{th0};
        // literal gradient: d/dtheta l(theta, u*)
        const auto st = rls_sample_step(prob, th, xi, cfg, kind, 0);
        auto at_fixed = [&](std::span<const double> t) { return rls_loss(t, st.maximizer, prob.a0, prob.a1, prob.b); };
        CHECK(rel_error(st.grad, finite_diff_grad(at_fixed, th, 1e-6)) < 1e-3);

        // scaled gradient: d/dtheta of the surrogate with u* held fixed, and
        // by the envelope theorem also of the re-solved surrogate.
        TrainConfig sc = cfg;
        sc.scale_grad_by_kernel = true;
        const auto ss = rls_sample_step(prob, th, xi, sc, kind, 0);
        const Vector u{ss.maximizer}, x{xi};
        const double k = kernel(sc.kernel, u, x);
        auto surrogate_fixed = [&](std::span<const double> t) {
          return (rls_loss(t, ss.maximizer, prob.a0, prob.a1, prob.b) + kind.eps_pos) * k;
        };
        CHECK(rel_error(ss.grad, finite_diff_grad(surrogate_fixed, th, 1e-6)) < 1e-3);
        auto surrogate = [&](std::span<const double> t) { return rls_sample_step(prob, t, xi, sc, kind, 0).objective; };
        CHECK(rel_error(ss.grad, finite_diff_grad(surrogate, th, 1e-5)) < 1e-3);
      }
    }
  }
}

TEST_CASE("swa_average") {
  const Vector v{1.5, -2.0, 0.25};
  CHECK(swa_average({v}) == v);
  CHECK(swa_average({v, Vector{-1.5, 2.0, -0.25}}) == Vector{0.0, 0.0, 0.0});
  CHECK(swa_average({{1.0, 3.0}, {3.0, 5.0}}) == Vector{2.0, 4.0});
  CHECK_THROWS_AS(swa_average({{1.0}, {1.0, 2.0}}), ShapeError);
  CHECK_THROWS_AS(swa_average({}), DomainError);
}

TEST_CASE("swa snapshots start at the configured epoch") {
  const auto data = make_linear_regression(20, 2, 0.1, 8);
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.batch_size = 5;
  cfg.lr = 0.05;
  const auto base = train(linear(2), LossKind{}, data, cfg);
  CHECK_FALSE(base.swa_params.has_value());
  cfg.swa = true;
  cfg.swa_start = 5;
  const auto last = train(linear(2), LossKind{}, data, cfg);
  REQUIRE(last.swa_params.has_value());
  CHECK(*last.swa_params == last.params);
}

TEST_CASE("config validation and method parameters") {
  const auto data = make_linear_regression(5, 2, 0.1, 1);
  TrainConfig cfg;
  cfg.batch_size = 0;
  CHECK_THROWS_AS(train(linear(2), LossKind{}, data, cfg), ConfigError);
  cfg.batch_size = 2;
  cfg.epochs = -1;
  CHECK_THROWS_AS(train(linear(2), LossKind{}, data, cfg), ConfigError);
  cfg.epochs = 1;
  cfg.method = Method::ro;
  CHECK_THROWS_AS(train(linear(2), LossKind{}, data, cfg), ConfigError);
  cfg.method = Method::wrm;
  cfg.wrm_y = 0.0;
  CHECK_THROWS_AS(train(linear(2), LossKind{}, data, cfg), ConfigError);
  cfg.method = Method::erm;
  CHECK_THROWS_AS(train(linear(2), LossKind{}, {}, cfg), DomainError);
  CHECK(parse_method("pgd-at") == Method::pgd_at);
  CHECK(to_string(Method::arks) == "arks");
  CHECK_THROWS_AS(parse_method("sgd"), ConfigError);
}

TEST_CASE("learning-rate decay schedule") {
  TrainConfig cfg;
  cfg.lr = 1.0;
  cfg.lr_decay_epochs = {2, 4};
  cfg.lr_decay_factor = 0.1;
  CHECK(cfg.lr_at(0) == 1.0);
  CHECK(cfg.lr_at(2) == doctest::Approx(0.1));
  CHECK(cfg.lr_at(5) == doctest::Approx(0.01));
}

TEST_CASE("non-finite update aborts with the last good parameters") {
  const auto data = make_linear_regression(10, 2, 0.1, 2);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 10;
  cfg.lr = 50.0;  // divergent
  try {
    train(linear(2), LossKind{}, data, cfg);
    FAIL("expected an abort");
  } catch (const TrainingAborted& e) {
    for (double v : e.last_good()) CHECK(std::isfinite(v));
    CHECK(e.last_good().size() == 3);
  } catch (const NumericalError& e) {
    // the loss itself overflowed before the parameters did
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("inner divergence carries epoch, batch and sample") {
  const auto data = make_linear_regression(6, 1, 0.1, 3);
  TrainConfig cfg;
  cfg.method = Method::wrm;
  cfg.wrm_y = 0.5;  // below the loss curvature, so the envelope is infinite
  cfg.epochs = 1;
  cfg.batch_size = 3;
  cfg.inner.step_size = 0.5;
  cfg.inner.steps = 50;
  Vector init{1.0, 0.0};
  CHECK_THROWS_WITH_AS(train(linear(1), LossKind{}, data, cfg, init), doctest::Contains("epoch 0, batch 0, sample"),
                       DivergenceError);
}

TEST_CASE("wrm with a heavy penalty tracks erm") {
  const auto data = make_linear_regression(30, 2, 0.3, 4);
  TrainConfig erm;
  erm.epochs = 50;
  erm.batch_size = 10;
  erm.lr = 0.05;
  TrainConfig w = erm;
  w.method = Method::wrm;
  w.wrm_y = 1e6;
  w.inner.step_size = 1e-7;
  const auto a = train(linear(2), LossKind{}, data, erm);
  const auto b = train(linear(2), LossKind{}, data, w);
  for (std::size_t e = 0; e < a.objective.size(); ++e) CHECK(std::abs(a.objective[e] - b.objective[e]) < 1e-3);
}

TEST_CASE("rls with no uncertainty: every method reaches least squares") {
  RlsProblem prob{Tensor::matrix(3, 2, {1.0, 0.2, -0.5, 1.0, 0.3, 0.4}), Tensor::matrix(3, 2, Vector(6, 0.0)),
                  {1.0, 0.5, -0.2}};
  const auto xi = sample_xi(20, 1);
  std::vector<Vector> sols;
  for (Method m : {Method::erm, Method::arks, Method::ro, Method::wrm}) {
    TrainConfig cfg = rls_cfg(m);
    cfg.epochs = 1500;
    cfg.kernel.sigma = 0.5;
    cfg.inner.step_size = 0.2;
    cfg.inner.steps = 5;
    cfg.wrm_y = 2.0;
    sols.push_back(train_rls(prob, xi, cfg).params);
  }
  for (std::size_t i = 1; i < sols.size(); ++i) CHECK(l2_dist(sols[0], sols[i]) < 1e-4);
}

TEST_CASE("rls arks objective majorizes erm at the erm solution") {
  const RlsProblem prob = make_rls_problem(4, 3, 0.5, 11);
  const auto xi = sample_xi(40, 2);
  const auto e = train_rls(prob, xi, rls_cfg(Method::erm));
  TrainConfig a = rls_cfg(Method::arks);
  a.kernel.sigma = 0.3;
  a.inner.step_size = 0.15;
  CHECK(rls_objective(prob, e.params, xi, a) >= rls_objective(prob, e.params, xi, rls_cfg(Method::erm)));
}

TEST_CASE("rls ro solution has the smaller worst-grid loss") {
  const RlsProblem prob = make_rls_problem(4, 3, 0.5, 12);
  const auto xi = sample_xi(40, 3);
  TrainConfig ec = rls_cfg(Method::erm);
  ec.lr = 0.01;
  ec.epochs = 1000;
  const auto e = train_rls(prob, xi, ec);
  TrainConfig rc = ec;
  rc.method = Method::ro;
  const auto r = train_rls(prob, xi, rc);
  const Vector grid = grid_1d(-1.0, 1.0, 2.0 / 400.0);
  CHECK(rls_worst_grid_loss(prob, r.params, grid) <= rls_worst_grid_loss(prob, e.params, grid));
}

TEST_CASE("arks with a huge bandwidth and a box tracks ro") {
  const RlsProblem prob = one_d_rls();
  const auto xi = sample_xi(30, 4);
  TrainConfig rc = rls_cfg(Method::ro);
  rc.epochs = 200;
  TrainConfig ac = rc;
  ac.method = Method::arks;
  ac.kernel.sigma = 1e8;
  ac.inner.step_size = 0.5;
  ac.inner.steps = 20;
  ac.inner.restarts = 16;
  const auto r = train_rls(prob, xi, rc);
  const auto a = train_rls(prob, xi, ac);
  for (std::size_t e = 0; e < r.objective.size(); ++e) {
    INFO("epoch " << e);
    CHECK(std::abs(r.objective[e] - a.objective[e]) < 1e-2);
  }
}
