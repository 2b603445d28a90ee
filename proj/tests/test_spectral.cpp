#include "fwspde/error.hpp"
#include "fwspde/spectral.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace fwspde;

namespace {

Eigen::VectorXd random_coeffs(int n, std::mt19937_64& gen, double scale = 1.0) {
  std::normal_distribution<double> nd;
  Eigen::VectorXd c(n);
  for (auto& x : c) x = scale * nd(gen);
  return c;
}

}  // namespace

TEST_CASE("dirichlet eigenvalues follow (k pi / L)^2") {
  const auto b = SpectralBasis::dirichlet_interval(5, 2.0);
  REQUIRE(b->n_modes() == 5);
  for (int k = 1; k <= 5; ++k) CHECK(b->eigenvalues()[k - 1] == doctest::Approx(std::pow(k * M_PI / 2.0, 2)));
}

TEST_CASE("torus basis: mode count, eigenvalues, divergence-free directions") {
  const auto b = SpectralBasis::fourier_torus(2);
  CHECK(b->n_modes() == 24);
  for (int m = 0; m < b->n_modes(); ++m) {
    const auto& k = b->mode_wavevectors()[m];
    CHECK(b->eigenvalues()[m] == doctest::Approx(k.norm2()));
    CHECK(std::abs(b->mode_direction(m).dot(Eigen::Vector2d(k.kx, k.ky))) < 1e-14);
    if (m > 0) CHECK(b->eigenvalues()[m] >= b->eigenvalues()[m - 1]);
  }
}

TEST_CASE("semigroup_apply examples") {
  const auto one = SpectralBasis::dirichlet_interval(1, M_PI);  // gamma = 1
  const SpectralField x = SpectralField::unit(one, 0, 1.0);
  CHECK(semigroup_apply(x, 0.0).coeffs[0] == 1.0);
  CHECK(semigroup_apply(x, std::log(2.0)).coeffs[0] == doctest::Approx(0.5).epsilon(1e-14));

  const auto unit = SpectralBasis::dirichlet_interval(3, 1.0);
  CHECK(semigroup_apply(SpectralField::unit(unit, 0, 1.0), 0.1).coeffs[0] ==
        doctest::Approx(std::exp(-0.1 * M_PI * M_PI)).epsilon(1e-14));
  CHECK_THROWS_AS(semigroup_apply(x, -1.0), ValidationError);
}

TEST_CASE("semigroup property, contractivity and tail bound on random fields") {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> ud(0.0, 2.0);
  const auto b = SpectralBasis::dirichlet_interval(12, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const SpectralField x(b, random_coeffs(12, gen));
    const double s = ud(gen), t = ud(gen);
    const Eigen::VectorXd a = semigroup_apply(semigroup_apply(x, s), t).coeffs;
    const Eigen::VectorXd c = semigroup_apply(x, s + t).coeffs;
    for (int k = 0; k < 12; ++k) CHECK(std::abs(a[k] - c[k]) <= 1e-12 * std::abs(c[k]) + 1e-300);
    CHECK(semigroup_apply(x, t).coeffs.norm() <= x.coeffs.norm());
    const int m = 4;
    const Eigen::VectorXd st = semigroup_apply(x, t).coeffs;
    for (int k = m; k < 12; ++k) CHECK(std::abs(st[k]) <= std::exp(-b->eigenvalues()[m - 1] * t) * x.coeffs.norm());
  }
}

TEST_CASE("eval_on_grid examples and round trip") {
  const auto b = SpectralBasis::dirichlet_interval(4, 1.0);
  CHECK(eval_on_grid(SpectralField::zero(b)).cwiseAbs().maxCoeff() == 0.0);

  const Eigen::VectorXd v = eval_on_grid(SpectralField::unit(b, 0, 1.0), 32);
  for (int j = 0; j < 32; ++j) CHECK(v[j] == doctest::Approx(std::sqrt(2.0) * std::sin(M_PI * j / 32.0)));

  std::mt19937_64 gen(2);
  const SpectralField x(b, random_coeffs(4, gen));
  const Collocation& g = b->grid(32);
  const Eigen::VectorXd vals = eval_on_grid(x, 32);
  const Eigen::VectorXd back = project_from_grid(*b, g, vals);
  CHECK((back - x.coeffs).norm() < 1e-12);
  CHECK((eval_on_grid(SpectralField(b, back), 32) - vals).cwiseAbs().maxCoeff() < 1e-10);

  CHECK_THROWS_AS(eval_on_grid(x, 8), ValidationError);  // below 4 n
}

TEST_CASE("single torus mode matches direct plane-wave evaluation") {
  const auto b = SpectralBasis::fourier_torus(2);
  const Collocation& g = b->grid();
  const int M = g.side;
  for (int m : {0, 5, 17}) {
    const Eigen::VectorXd v = eval_on_grid(SpectralField::unit(b, m, 1.0));
    const auto& k = b->mode_wavevectors()[m];
    const Eigen::Vector2d d = b->mode_direction(m);
    const double nrm = 1.0 / (M_PI * std::sqrt(2.0));
    for (int a = 0; a < M; ++a)
      for (int c = 0; c < M; ++c) {
        const double x = 2 * M_PI * a / M, y = 2 * M_PI * c / M;
        const double phase = k.kx * x + k.ky * y;
        const double s = nrm * (b->mode_is_sin()[m] ? std::sin(phase) : std::cos(phase));
        CHECK(v[a * M + c] == doctest::Approx(s * d[0]).epsilon(1e-12));
        CHECK(v[M * M + a * M + c] == doctest::Approx(s * d[1]).epsilon(1e-12));
      }
  }
}

TEST_CASE("norm examples") {
  const auto b = SpectralBasis::dirichlet_interval(3, 1.0);
  const NormReport z = norms(SpectralField::zero(b), {0.5, 1.0});
  CHECK(z.l2 == 0.0);
  CHECK(z.sup == 0.0);
  CHECK(z.l4 == 0.0);
  for (const auto& [d, v] : z.h_delta) CHECK(v == 0.0);

  const NormReport one = norms(SpectralField::unit(b, 1, -2.0), {1.0, -0.5});
  CHECK(one.l2 == doctest::Approx(2.0));
  CHECK(one.h_delta.at(1.0) == doctest::Approx(std::pow(b->eigenvalues()[1], 0.5) * 2.0));
  CHECK(one.h_delta.at(-0.5) == doctest::Approx(std::pow(b->eigenvalues()[1], -0.25) * 2.0));

  Eigen::VectorXd c(3);
  c << 3.0, 4.0, 0.0;
  CHECK(norms(SpectralField(b, c)).l2 == doctest::Approx(5.0));
  CHECK_THROWS_AS(h_delta_norm(SpectralField(b, c), 2.5), ValidationError);
}

TEST_CASE("Parseval: coefficient l2 equals grid quadrature") {
  std::mt19937_64 gen(3);
  const auto b = SpectralBasis::dirichlet_interval(8, 1.0);
  const SpectralField x(b, random_coeffs(8, gen));
  const Eigen::VectorXd v = eval_on_grid(x);
  CHECK(std::sqrt(b->grid().weight * v.squaredNorm()) == doctest::Approx(x.coeffs.norm()).epsilon(1e-8));
  const NormReport r = norms(x);
  CHECK(r.sup == doctest::Approx(v.cwiseAbs().maxCoeff()));

  const auto t = SpectralBasis::fourier_torus(2);
  const SpectralField y(t, random_coeffs(t->n_modes(), gen));
  const Eigen::VectorXd w = eval_on_grid(y);
  CHECK(std::sqrt(t->grid().weight * w.squaredNorm()) == doctest::Approx(y.coeffs.norm()).epsilon(1e-8));
}

TEST_CASE("state norm is sup on the interval and L2 on the torus") {
  std::mt19937_64 gen(4);
  const auto b = SpectralBasis::dirichlet_interval(4, 1.0);
  const SpectralField x(b, random_coeffs(4, gen));
  CHECK(state_norm(x) == doctest::Approx(eval_on_grid(x).cwiseAbs().maxCoeff()));
  const auto t = SpectralBasis::fourier_torus(1);
  const SpectralField y(t, random_coeffs(t->n_modes(), gen));
  CHECK(state_norm(y) == doctest::Approx(y.coeffs.norm()));
}

TEST_CASE("bad bases and mismatched fields are rejected") {
  CHECK_THROWS_AS(SpectralBasis::dirichlet_interval(0, 1.0), ValidationError);
  CHECK_THROWS_AS(SpectralBasis::dirichlet_interval(2, -1.0), ValidationError);
  CHECK_THROWS_AS(SpectralBasis::fourier_torus(0), ValidationError);
  const auto b = SpectralBasis::dirichlet_interval(2, 1.0);
  CHECK_THROWS_AS(SpectralField(b, Eigen::VectorXd::Zero(3)), ValidationError);
  const auto c = SpectralBasis::dirichlet_interval(2, 2.0);
  CHECK_THROWS(require_same_basis(SpectralField::zero(b), SpectralField::zero(c)));
}
