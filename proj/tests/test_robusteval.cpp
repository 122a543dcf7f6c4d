#include <cmath>

#include "arks/data.hpp"
#include "arks/errors.hpp"
#include "arks/kernels.hpp"
#include "arks/random.hpp"
#include "arks/robusteval.hpp"
#include "arks/trainers.hpp"
#include "doctest.h"

using namespace arks;

namespace {

ModelSpec small_mlp() { return ModelSpec{ModelFamily::mlp, {2, 8, 2}, Activation::elu, 2, 2}; }
const LossKind xent{LossFamily::cross_entropy, 1e-3};

Vector trained_mlp(const std::vector<Sample>& data, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.epochs = 60;
  cfg.batch_size = 16;
  cfg.lr = 0.2;
  cfg.seed = seed;
  return train(small_mlp(), xent, data, cfg).params;
}

}  // namespace

TEST_CASE("attack with zero budget returns the input") {
  ModelLoss m(small_mlp(), xent);
  const Vector p = init_params(small_mlp(), 3);
  const Sample s{{0.3, -0.7}, 1.0};
  for (AttackKind k : {AttackKind::pgd, AttackKind::fgsm}) {
    AttackConfig cfg;
    cfg.kind = k;
    cfg.delta = 0.0;
    CHECK(attack(m, p, s, cfg) == s);
    cfg.random_start = true;
    CHECK(attack(m, p, s, cfg) == s);
  }
}

TEST_CASE("fgsm on a linear model moves by Delta along sign(w)") {
  ModelSpec spec{ModelFamily::linear_regression, {}, Activation::elu, 3, 1};
  ModelLoss m(spec, LossKind{LossFamily::least_squares, 1e-3});
  const Vector p{1.0, -2.0, 0.5, 0.0};  // w then b
  const Sample s{{0.2, 0.1, -0.4}, -5.0};  // residual w.x - y > 0
  AttackConfig cfg;
  cfg.kind = AttackKind::fgsm;
  cfg.delta = 0.25;
  const Sample adv = attack(m, p, s, cfg);
  CHECK(adv.x[0] == doctest::Approx(0.45));
  CHECK(adv.x[1] == doctest::Approx(-0.15));
  CHECK(adv.x[2] == doctest::Approx(-0.15));
  CHECK(adv.y == s.y);
}

TEST_CASE("pgd outputs satisfy budget and clip range on every coordinate") {
  ModelLoss m(small_mlp(), xent);
  Rng rng(17);
  std::size_t checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const Vector p = init_params(small_mlp(), static_cast<std::uint64_t>(trial));
    AttackConfig cfg;
    cfg.delta = rng.uniform(0.0, 0.5);
    cfg.step_size = rng.uniform(0.01, 0.3);
    cfg.steps = 1 + static_cast<int>(rng.below(20));
    cfg.random_start = trial % 3 == 0;
    cfg.seed = static_cast<std::uint64_t>(trial);
    if (trial % 2 == 0) cfg.clip = ClipRange{0.0, 1.0};
    const Sample s{{rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)}, static_cast<double>(rng.below(2))};
    const Sample adv = attack(m, p, s, cfg, static_cast<std::uint64_t>(trial));
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(std::abs(adv.x[i] - s.x[i]) <= cfg.delta + 1e-12);
      if (cfg.clip) {
        CHECK(adv.x[i] >= 0.0);
        CHECK(adv.x[i] <= 1.0);
      }
      ++checked;
    }
  }
  CHECK(checked == 400);
}

TEST_CASE("attack config validation") {
  AttackConfig cfg;
  cfg.delta = -0.1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.delta = 0.1;
  cfg.steps = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.kind = AttackKind::fgsm;
  CHECK_NOTHROW(cfg.validate());
  CHECK(parse_attack_kind("fgsm") == AttackKind::fgsm);
  CHECK(parse_attack_mode("black-box") == AttackMode::black_box);
  CHECK_THROWS_AS(parse_attack_mode("grey"), ConfigError);
}

TEST_CASE("sweep at Delta 0 reports the clean error") {
  const auto data = make_two_moons(80, 0.1, 5);
  const Vector p = trained_mlp(data, 1);
  ModelLoss m(small_mlp(), xent);
  AttackConfig cfg;
  const auto res = sweep(m, p, data, {0.0}, cfg, nullptr, "erm", 1);
  REQUIRE(res.rows.size() == 1);
  const EvalStats clean = evaluate(m, p, data);
  CHECK(res.rows[0].error == clean.error);
  CHECK(res.rows[0].mean_loss == clean.mean_loss);
  CHECK(res.rows[0].n == 80);
  CHECK(res.rows[0].mode == "white-box");
  CHECK(res.rows[0].seed == 1);
}

TEST_CASE("white-box pgd error grows with Delta up to slack") {
  const auto data = make_two_moons(200, 0.1, 8);
  const Vector p = trained_mlp(data, 2);
  ModelLoss m(small_mlp(), xent);
  AttackConfig cfg;
  const std::vector<double> deltas{0.0, 0.05, 0.1, 0.2, 0.3, 0.5};
  const auto res = sweep(m, p, data, deltas, cfg, nullptr, "erm", 2);
  for (std::size_t i = 1; i < res.rows.size(); ++i) {
    INFO("Delta " << res.rows[i].param);
    CHECK(res.rows[i].error >= res.rows[i - 1].error - 0.005);
  }
  CHECK(res.rows.back().error > res.rows.front().error);
}

TEST_CASE("black-box perturbations depend only on the source model") {
  const auto data = make_two_moons(60, 0.1, 9);
  ModelLoss src(small_mlp(), xent);
  const Vector ps = trained_mlp(data, 3);
  AttackConfig cfg;
  cfg.delta = 0.2;
  cfg.mode = AttackMode::black_box;
  const auto a = perturb_dataset(src, ps, data, cfg);
  const auto b = perturb_dataset(src, ps, data, cfg);
  CHECK(a == b);

  AttackSource source{&src, ps};
  ModelLoss v1(small_mlp(), xent), v2(small_mlp(), xent);
  const Vector p1 = init_params(small_mlp(), 40), p2 = trained_mlp(data, 41);
  const auto r1 = sweep(v1, p1, data, {0.2}, cfg, &source, "a", 0);
  const auto r2 = sweep(v2, p2, data, {0.2}, cfg, &source, "b", 0);
  CHECK(r1.rows[0].error == evaluate(v1, p1, a).error);
  CHECK(r2.rows[0].error == evaluate(v2, p2, a).error);
  CHECK_THROWS_AS(sweep(v1, p1, data, {0.2}, cfg, nullptr, "a", 0), ConfigError);
}

TEST_CASE("mmd between clean and attacked sets") {
  const auto data = make_two_moons(50, 0.1, 10);
  ModelLoss m(small_mlp(), xent);
  const Vector p = trained_mlp(data, 4);
  std::vector<Vector> clean;
  for (const auto& s : data) clean.push_back(s.x);
  const KernelSpec k{CostSpec{CostFamily::sq_l2_half}, 0.5};
  for (double delta : {0.0, 0.1, 0.3}) {
    AttackConfig cfg;
    cfg.delta = delta;
    std::vector<Vector> adv;
    for (const auto& s : perturb_dataset(m, p, data, cfg)) adv.push_back(s.x);
    const double d = mmd(clean, adv, k);
    if (delta == 0.0) {
      CHECK(d == 0.0);
    } else {
      CHECK(d > 0.0);
    }
  }
}

TEST_CASE("shift_scale") {
  const Tensor x = Tensor::matrix({{1.0, -2.0}, {0.5, 3.0}});
  CHECK(shift_scale(x, 0.0) == x);
  CHECK(shift_scale(x, 1.0) == Tensor::matrix({{2.0, -4.0}, {1.0, 6.0}}));
  const Tensor zeroed = shift_scale(x, -1.0);
  for (double v : zeroed.values()) CHECK(v == 0.0);
}

TEST_CASE("shift_uniform") {
  const Tensor x = Tensor::matrix({{1.0, -2.0, 0.0}, {0.5, 3.0, 7.0}});
  CHECK(shift_uniform(x, 0.0, 5) == x);
  const Tensor a = shift_uniform(x, 0.3, 5);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(a[i] - x[i]) <= 0.3);
  CHECK(a == shift_uniform(x, 0.3, 5));
  CHECK_FALSE(a == shift_uniform(x, 0.3, 6));
  CHECK_THROWS_AS(shift_uniform(x, -0.1, 5), DomainError);
}

TEST_CASE("shift sweep rows") {
  const auto data = make_linear_regression(30, 2, 0.0, 3);
  ModelSpec spec{ModelFamily::linear_regression, {}, Activation::elu, 2, 1};
  ModelLoss m(spec, LossKind{});
  const Vector p = init_params(spec, 1);
  const auto res = shift_sweep(m, p, data, {0.0, 0.5}, ShiftKind::uniform, "erm", 7);
  REQUIRE(res.rows.size() == 2);
  CHECK(res.rows[0].error == evaluate(m, p, data).error);
  CHECK(res.rows[1].protocol == "uniform");
  CHECK(res.rows[1].mode == "shift");
}

TEST_CASE("certificate arithmetic") {
  const auto r = certificate(std::exp(2.0), 0.5, 0.25);
  CHECK(r.bound == doctest::Approx(4.0).epsilon(1e-15));
  CHECK(certificate(3.7, 0.0, 0.1).bound == std::log(3.7));
  CHECK(certificate(2.0, 0.2, 1.0).bound < certificate(2.0, 0.3, 1.0).bound);
  CHECK(certificate(2.0, 0.2, 1.0).bound < certificate(2.0, 0.2, 0.5).bound);
  CHECK(certificate(2.0, 0.2, 1.0, 1e-3).eps_pos == 1e-3);
  CHECK_THROWS_AS(certificate(0.0, 0.1, 1.0), DomainError);
  CHECK_THROWS_AS(certificate(-1.0, 0.1, 1.0), DomainError);
  CHECK_THROWS_AS(certificate(1.0, -0.1, 1.0), DomainError);
  CHECK_THROWS_AS(certificate(1.0, 0.1, 0.0), DomainError);
}

namespace {

const PointLoss one_plus_sq = [](std::size_t, std::span<const double> u, std::span<double> g) {
  if (!g.empty()) g[0] = 2.0 * u[0];
  return 1.0 + u[0] * u[0];
};

}  // namespace

TEST_CASE("certificate check with zero displacement") {
  const std::vector<Vector> pts{{-1.0}, {0.0}, {1.0}};
  const std::vector<Vector> zero(3, Vector{0.0});
  CertificateCheckConfig cfg;
  const auto c = certificate_check(one_plus_sq, pts, KernelSpec{{}, 1.0}, zero, cfg);
  CHECK(c.rho == 0.0);
  CHECK(c.lhs == doctest::Approx((2.0 * std::log(2.0)) / 3.0));
  CHECK(c.pass);
  CHECK(c.lhs <= c.rhs);
}

TEST_CASE("certificate check on the 1-d example with +0.1 shifts") {
  const std::vector<Vector> pts{{-1.0}, {0.0}, {1.0}};
  const std::vector<Vector> shift(3, Vector{0.1});
  CertificateCheckConfig cfg;
  const auto c = certificate_check(one_plus_sq, pts, KernelSpec{{}, 1.0}, shift, cfg);
  CHECK(c.rho == doctest::Approx(0.005));
  CHECK(c.pass);

  cfg.mode = SupremumMode::ascent;
  cfg.inner.steps = 500;
  cfg.inner.step_size = 0.2;
  cfg.inner.restarts = 4;
  cfg.inner.restart_radius = 2.0;
  const auto a = certificate_check(one_plus_sq, pts, KernelSpec{{}, 1.0}, shift, cfg);
  CHECK(a.mode == SupremumMode::ascent);
  CHECK(a.rhs == doctest::Approx(c.rhs).epsilon(1e-4));
}

TEST_CASE("certificate check passes on random 1-d shifts with grid-oracle suprema") {
  Rng rng(99);
  int passes = 0;
  for (int t = 0; t < 100; ++t) {
    const double a = rng.uniform(0.1, 2.0), b = rng.uniform(-1.0, 1.0), c = rng.uniform(0.05, 1.0);
    PointLoss l = [=](std::size_t, std::span<const double> u, std::span<double>) {
      return c + a * (u[0] - b) * (u[0] - b) + 0.3 * std::sin(3.0 * u[0]) + 0.3;
    };
    const std::size_t n = 2 + rng.below(6);
    std::vector<Vector> pts, shifts;
    for (std::size_t i = 0; i < n; ++i) {
      pts.push_back({rng.uniform(-2.0, 2.0)});
      shifts.push_back({rng.uniform(-1.0, 1.0)});
    }
    const KernelSpec k{{}, rng.uniform(0.05, 2.0)};
    CertificateCheckConfig cfg;
    cfg.grid_step = 1e-2;
    if (certificate_check(l, pts, k, shifts, cfg).pass) ++passes;
  }
  CHECK(passes == 100);
}

TEST_CASE("certificate check errors") {
  const std::vector<Vector> pts{{0.0}};
  CertificateCheckConfig cfg;
  CHECK_THROWS_AS(certificate_check(one_plus_sq, pts, KernelSpec{{}, 1.0}, {}, cfg), ShapeError);
  PointLoss neg = [](std::size_t, std::span<const double>, std::span<double>) { return -1.0; };
  CHECK_THROWS_AS(certificate_check(neg, pts, KernelSpec{{}, 1.0}, {{0.0}}, cfg), DomainError);
  CHECK_THROWS_AS(certificate_check(one_plus_sq, pts, KernelSpec{{}, 0.0}, {{0.0}}, cfg), DomainError);
}
