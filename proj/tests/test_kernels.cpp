#include <Eigen/Eigenvalues>
#include <cmath>

#include "arks/errors.hpp"
#include "arks/kernels.hpp"
#include "arks/random.hpp"
#include "doctest.h"
#include "tape_gen.hpp"

using namespace arks;

namespace {

const CostFamily kAllCosts[] = {CostFamily::sq_l2_half, CostFamily::sq_l2, CostFamily::l2, CostFamily::l1};

Vector random_point(Rng& rng, std::size_t d, double scale = 1.0) {
  Vector v(d);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

}  // namespace

TEST_CASE("cost values") {
  const Vector u{1.0, 1.0};
  const Vector o{0.0, 0.0};
  for (CostFamily f : kAllCosts) CHECK(cost(CostSpec{f}, u, u) == 0.0);
  CHECK(cost(CostSpec{CostFamily::sq_l2_half}, u, o) == 1.0);
  CHECK(cost(CostSpec{CostFamily::sq_l2}, u, o) == 2.0);
  CHECK(cost(CostSpec{CostFamily::l2}, u, o) == doctest::Approx(std::sqrt(2.0)));
  const Vector w{1.0, -2.0};
  CHECK(cost(CostSpec{CostFamily::l1}, w, o) == 3.0);
  const Vector short_v{1.0};
  CHECK_THROWS_AS(cost(CostSpec{}, short_v, o), ShapeError);
}

TEST_CASE("non-smooth costs have zero subgradient at coincidence") {
  const Vector x{0.3, -0.7};
  Vector g(2, 99.0);
  cost_grad(CostSpec{CostFamily::l2}, x, x, g);
  CHECK(g == Vector{0.0, 0.0});
  cost_grad(CostSpec{CostFamily::l1}, x, x, g);
  CHECK(g == Vector{0.0, 0.0});
}

TEST_CASE("kernel values") {
  KernelSpec gauss{CostSpec{CostFamily::sq_l2_half}, 0.7};
  const Vector x{0.2, -0.4};
  CHECK(kernel(gauss, x, x) == 1.0);
  // ||u - x||^2 = 2 sigma
  const double r = std::sqrt(2.0 * gauss.sigma);
  const Vector u{x[0] + r, x[1]};
  CHECK(kernel(gauss, u, x) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  CHECK(std::exp(-1.0) == doctest::Approx(0.36788).epsilon(1e-5));

  KernelSpec wide{CostSpec{CostFamily::sq_l2_half}, 1e8};
  const Vector far{3.0, 1.0};
  CHECK(std::abs(kernel(wide, far, x) - 1.0) < 1e-6);

  CHECK_THROWS_AS(kernel(KernelSpec{CostSpec{}, 0.0}, x, x), DomainError);
  CHECK_THROWS_AS(kernel(KernelSpec{CostSpec{}, -1.0}, x, x), DomainError);
}

TEST_CASE("kernel distance") {
  KernelSpec gauss{CostSpec{CostFamily::sq_l2_half}, 1.0};
  const Vector x{0.0};
  CHECK(kernel_distance_sq(gauss, x, x) == 0.0);
  const Vector u{std::sqrt(2.0)};  // k = e^-1
  // <phi(u) - phi(x), phi(u) - phi(x)> = k(u,u) - 2k(u,x) + k(x,x)
  const double expanded = kernel(gauss, u, u) - 2.0 * kernel(gauss, u, x) + kernel(gauss, x, x);
  CHECK(kernel_distance_sq(gauss, u, x) == doctest::Approx(expanded).epsilon(1e-14));
  CHECK(kernel_distance_sq(gauss, u, x) == doctest::Approx(1.26424).epsilon(1e-5));
  const Vector far{50.0};
  CHECK(kernel_distance_sq(gauss, far, x) == doctest::Approx(2.0));
}

TEST_CASE("mmd") {
  KernelSpec gauss{CostSpec{CostFamily::sq_l2_half}, 0.5};
  const std::vector<Vector> xs{{0.0, 1.0}, {0.5, -0.2}, {1.5, 0.3}};
  CHECK(mmd(xs, xs, gauss) == doctest::Approx(0.0).epsilon(1e-12));
  const std::vector<Vector> a{{0.3}};
  const std::vector<Vector> b{{1.1}};
  CHECK(mmd(a, b, gauss) == doctest::Approx(std::sqrt(2.0 - 2.0 * kernel(gauss, a[0], b[0]))).epsilon(1e-14));
  CHECK_THROWS_AS(mmd({}, xs, gauss), DomainError);
}

TEST_CASE("kernel symmetry, sigma monotonicity and gradient") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 1 + rng.below(3);
    const Vector u = random_point(rng, d);
    const Vector x = random_point(rng, d);
    const CostFamily f = kAllCosts[trial % 4];
    const double s1 = rng.uniform(0.05, 3.0);
    const double s2 = s1 * rng.uniform(1.1, 5.0);
    KernelSpec k1{CostSpec{f}, s1};
    KernelSpec k2{CostSpec{f}, s2};
    CHECK(kernel(k1, u, x) == kernel(k1, x, u));
    CHECK(kernel(k1, u, x) < kernel(k2, u, x));
    CHECK(kernel(k1, u, x) > 0.0);
    CHECK(kernel(k1, u, x) <= 1.0);

    Vector g(d);
    kernel_grad(k1, u, x, g);
    auto kf = [&](std::span<const double> v) { return kernel(k1, v, x); };
    const Vector fd = finite_diff_grad(kf, u, 1e-5);
    CHECK(arks::testing::rel_error(g, fd, 1e-8) < 1e-4);
  }
}

TEST_CASE("gram matrices are positive semidefinite") {
  Rng rng(3);
  for (CostFamily f : {CostFamily::sq_l2_half, CostFamily::l1, CostFamily::l2}) {
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<Vector> pts;
      const std::size_t n = 5 + rng.below(20);
      for (std::size_t i = 0; i < n; ++i) pts.push_back(random_point(rng, 2));
      const Tensor k = gram(pts, KernelSpec{CostSpec{f}, rng.uniform(0.1, 2.0)});
      Eigen::MatrixXd m(n, n);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = k.at(i, j);
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
      CHECK(es.eigenvalues().minCoeff() >= -1e-8);
    }
  }
}
