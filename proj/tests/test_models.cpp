#include "fwspde/error.hpp"
#include "fwspde/models.hpp"

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

ModelSpec interval_model(int n, DriftSpec drift, NoiseSpec noise) {
  ModelSpec m;
  m.basis = SpectralBasis::dirichlet_interval(n, 1.0);
  m.drift = std::move(drift);
  m.noise = std::move(noise);
  return m;
}

int find_mode(const SpectralBasis& b, int kx, int ky, bool sin_mode) {
  for (int m = 0; m < b.n_modes(); ++m) {
    const auto& k = b.mode_wavevectors()[m];
    if (((k.kx == kx && k.ky == ky) || (k.kx == -kx && k.ky == -ky)) && b.mode_is_sin()[m] == sin_mode) return m;
  }
  return -1;
}

// Direct trigonometric evaluation of a torus field and its gradient at (x, y).
void direct_eval(const SpectralField& f, double x, double y, Eigen::Vector2d& val, Eigen::Matrix2d& grad) {
  const auto& b = *f.basis;
  const double nrm = 1.0 / (M_PI * std::sqrt(2.0));
  val.setZero();
  grad.setZero();  // grad(i, j) = d_i f_j
  for (int m = 0; m < f.size(); ++m) {
    if (f.coeffs[m] == 0.0) continue;
    const auto& k = b.mode_wavevectors()[m];
    const Eigen::Vector2d d = b.mode_direction(m);
    const double ph = k.kx * x + k.ky * y;
    const bool s = b.mode_is_sin()[m];
    const double psi = s ? std::sin(ph) : std::cos(ph);
    const double dpsi = s ? std::cos(ph) : -std::sin(ph);
    val += f.coeffs[m] * nrm * psi * d;
    const Eigen::Vector2d kv(k.kx, k.ky);
    grad += f.coeffs[m] * nrm * dpsi * kv * d.transpose();
  }
}

}  // namespace

TEST_CASE("drift spec validation") {
  const auto b = SpectralBasis::dirichlet_interval(4, 1.0);
  CHECK_NOTHROW(DriftSpec::reaction({0, 1, 0, -1}).validate(*b));
  CHECK_THROWS_AS(DriftSpec::reaction({0, 1, -1}).validate(*b), ValidationError);      // even degree
  CHECK_THROWS_AS(DriftSpec::reaction({0, 1, 0, 1}).validate(*b), ValidationError);    // positive leading
  CHECK_THROWS_AS(DriftSpec::reaction({0, 0, 0, 0, 0, 0, 0, -1}).validate(*b), ValidationError);  // degree 7
  CHECK_THROWS_AS(DriftSpec::navier_stokes().validate(*b), ValidationError);
  CHECK_THROWS_AS(DriftSpec::reaction({0, -1}).validate(*SpectralBasis::fourier_torus(1)), ValidationError);
}

TEST_CASE("drift examples") {
  std::mt19937_64 gen(5);
  const ModelSpec none = interval_model(4, DriftSpec::none(), NoiseSpec::power_law(4, 1.0, 0.0));
  CHECK(drift_apply(none, SpectralField(none.basis, random_coeffs(4, gen))).coeffs.norm() == 0.0);

  const DriftSpec r = DriftSpec::reaction({0, 1, 0, -1});
  CHECK(r.b(2.0) == -6.0);
  CHECK(r.db(2.0) == -11.0);
}

TEST_CASE("reaction drift equals the projected pointwise polynomial") {
  std::mt19937_64 gen(6);
  const ModelSpec m = interval_model(6, DriftSpec::reaction({0, 1, 0, -1}), NoiseSpec::power_law(6, 1.0, 0.0));
  const SpectralField x(m.basis, random_coeffs(6, gen, 0.5));
  // oracle: fine midpoint quadrature of b(x(s)) e_k(s)
  const int Q = 20000;
  Eigen::VectorXd oracle = Eigen::VectorXd::Zero(6);
  for (int q = 0; q < Q; ++q) {
    const double s = (q + 0.5) / Q;
    double xs = 0;
    for (int k = 0; k < 6; ++k) xs += x.coeffs[k] * std::sqrt(2.0) * std::sin((k + 1) * M_PI * s);
    for (int k = 0; k < 6; ++k) oracle[k] += m.drift.b(xs) * std::sqrt(2.0) * std::sin((k + 1) * M_PI * s) / Q;
  }
  CHECK((drift_apply(m, x).coeffs - oracle).norm() < 1e-6);
}

TEST_CASE("drift Jacobian matches finite differences") {
  std::mt19937_64 gen(7);
  const ModelSpec m = interval_model(5, DriftSpec::reaction({0, 1, 0, -1}), NoiseSpec::power_law(5, 1.0, 0.0));
  const Eigen::VectorXd x = random_coeffs(5, gen, 0.5), v = random_coeffs(5, gen);
  const double h = 1e-6;
  const Eigen::VectorXd fd = (drift_coeffs(m, x + h * v) - drift_coeffs(m, x - h * v)) / (2 * h);
  CHECK((drift_jacobian_apply(m, x, v) - fd).norm() < 1e-7);
}

TEST_CASE("dissipativity bound holds on random fields") {
  std::mt19937_64 gen(8);
  const ModelSpec m = interval_model(6, DriftSpec::reaction({0.3, 2, 0.5, -1}), NoiseSpec::power_law(6, 1.0, 0.0));
  const auto [c1, c2] = m.drift.dissipativity_constants();
  const double L = m.basis->domain_length();
  for (int i = 0; i < 50; ++i) {
    const SpectralField x(m.basis, random_coeffs(6, gen, 2.0));
    CHECK(drift_apply(m, x).coeffs.dot(x.coeffs) <= c1 * x.coeffs.squaredNorm() + c2 * L + 1e-9);
  }
}

TEST_CASE("diffusion examples") {
  std::mt19937_64 gen(9);
  const ModelSpec id = interval_model(4, DriftSpec::none(), NoiseSpec::power_law(4, 1.0, 0.0));
  const SpectralField x(id.basis, random_coeffs(4, gen));
  for (int j = 0; j < 4; ++j) {
    Eigen::VectorXd h = Eigen::VectorXd::Zero(4);
    h[j] = 1.0;
    CHECK((diffusion_apply(id, x, h).coeffs - h).norm() < 1e-13);
  }

  ModelSpec zero = id;
  zero.noise.g_params = {0.0};
  CHECK(diffusion_apply(zero, x, random_coeffs(4, gen)).coeffs.norm() == 0.0);

  ModelSpec rat = id;
  rat.noise = NoiseSpec::power_law(4, 0.8, 0.0, GKind::BoundedRational, {1.0});
  CHECK(rat.noise.g_of_sq(1.0) == 0.5);
  CHECK(rat.noise.g_lipschitz() == doctest::Approx(3.0 * std::sqrt(3.0) / 8.0));
  // with x = 0, g = 1 everywhere and G h = Q h
  Eigen::VectorXd h = Eigen::VectorXd::Zero(4);
  h[0] = 1.0;
  CHECK(diffusion_apply(rat, SpectralField::zero(rat.basis), h).coeffs[0] == doctest::Approx(0.8));
}

TEST_CASE("diffusion equals the projection of g(x) Q h by independent quadrature") {
  std::mt19937_64 gen(10);
  ModelSpec m = interval_model(5, DriftSpec::none(), NoiseSpec::power_law(5, 1.0, 1.0, GKind::BoundedRational, {2.0}));
  m.basis = SpectralBasis::dirichlet_interval(5, 1.0, 512);  // g is not polynomial; refine against aliasing
  const SpectralField x(m.basis, random_coeffs(5, gen));
  const Eigen::VectorXd h = random_coeffs(5, gen);
  const int Q = 20000;
  Eigen::VectorXd oracle = Eigen::VectorXd::Zero(5);
  for (int q = 0; q < Q; ++q) {
    const double s = (q + 0.5) / Q;
    double xs = 0, qh = 0;
    for (int k = 0; k < 5; ++k) {
      const double e = std::sqrt(2.0) * std::sin((k + 1) * M_PI * s);
      xs += x.coeffs[k] * e;
      qh += m.noise.q_eigenvalues[k] * h[k] * e;
    }
    const double gx = 2.0 / (1.0 + xs * xs);
    for (int k = 0; k < 5; ++k) oracle[k] += gx * qh * std::sqrt(2.0) * std::sin((k + 1) * M_PI * s) / Q;
  }
  CHECK((diffusion_apply(m, x, h).coeffs - oracle).norm() < 1e-6);
}

TEST_CASE("diffusion transpose and state Jacobian are consistent") {
  std::mt19937_64 gen(11);
  const ModelSpec m =
      interval_model(5, DriftSpec::none(), NoiseSpec::power_law(5, 1.0, 1.0, GKind::BoundedRational, {1.0}));
  const Eigen::VectorXd x = random_coeffs(5, gen), h = random_coeffs(5, gen), p = random_coeffs(5, gen);
  CHECK(diffusion_coeffs(m, x, h).dot(p) == doctest::Approx(h.dot(diffusion_transpose_apply(m, x, p))));
  const Eigen::VectorXd v = random_coeffs(5, gen);
  const double eps = 1e-6;
  const Eigen::VectorXd fd = (diffusion_coeffs(m, x + eps * v, h) - diffusion_coeffs(m, x - eps * v, h)) / (2 * eps);
  CHECK((diffusion_state_jacobian_apply(m, x, h, v) - fd).norm() < 1e-7);
}

TEST_CASE("diffusion Lipschitz bound on random pairs") {
  std::mt19937_64 gen(12);
  const ModelSpec m =
      interval_model(6, DriftSpec::none(), NoiseSpec::power_law(6, 1.0, 1.5, GKind::BoundedRational, {1.0}));
  const double fsup = std::sqrt(2.0);
  for (int i = 0; i < 30; ++i) {
    const SpectralField x(m.basis, random_coeffs(6, gen)), y(m.basis, random_coeffs(6, gen));
    for (int k = 0; k < 6; ++k) {
      Eigen::VectorXd h = Eigen::VectorXd::Zero(6);
      h[k] = 1.0;
      const double lhs = (diffusion_apply(m, x, h).coeffs - diffusion_apply(m, y, h).coeffs).norm();
      // |(g(x) - g(y)) lambda_k f_k|_L2 <= Lip(g) lambda_k |f_k|_inf |x - y|_L2
      CHECK(lhs <= m.noise.g_lipschitz() * m.noise.q_eigenvalues[k] * fsup * (x.coeffs - y.coeffs).norm() + 1e-12);
    }
  }
}

TEST_CASE("noise spec validation") {
  const auto b = SpectralBasis::dirichlet_interval(3, 1.0);
  NoiseSpec ok = NoiseSpec::power_law(3, 1.0, 1.5);
  CHECK_NOTHROW(ok.validate(*b));
  NoiseSpec up = ok;
  up.q_eigenvalues = {1.0, 2.0, 0.1};
  CHECK_THROWS_AS(up.validate(*b), ValidationError);
  NoiseSpec too_many = NoiseSpec::power_law(4, 1.0, 0.0);
  CHECK_THROWS_AS(too_many.validate(*b), ValidationError);
  CHECK(ok.trace_q2() == doctest::Approx(1.0 + std::pow(2.0, -3.0) + std::pow(3.0, -3.0)));
}

TEST_CASE("trilinear form: zero, antisymmetry, b(u,v,v) = 0") {
  std::mt19937_64 gen(13);
  const auto b = SpectralBasis::fourier_torus(3);
  const SpectralField z = SpectralField::zero(b);
  CHECK(ns_trilinear(z, z, z) == 0.0);
  for (int i = 0; i < 200; ++i) {
    const SpectralField u(b, random_coeffs(b->n_modes(), gen)), v(b, random_coeffs(b->n_modes(), gen)),
        w(b, random_coeffs(b->n_modes(), gen));
    const double scale = u.coeffs.norm() * v.coeffs.norm() * w.coeffs.norm();
    CHECK(std::abs(ns_trilinear(u, v, v)) <= 1e-10);
    CHECK(std::abs(ns_trilinear(u, v, w) + ns_trilinear(u, w, v)) <= 1e-9 * scale);
  }
}

TEST_CASE("trilinear form matches brute-force 64^2 quadrature") {
  const auto b = SpectralBasis::fourier_torus(2);
  const int mu = find_mode(*b, 1, 0, false), mv = find_mode(*b, 0, 1, true), mw = find_mode(*b, 1, 1, false);
  REQUIRE(mu >= 0);
  REQUIRE(mv >= 0);
  REQUIRE(mw >= 0);
  Eigen::VectorXd cu = Eigen::VectorXd::Zero(b->n_modes()), cv = cu, cw = cu;
  cu[mu] = 1.0, cu[find_mode(*b, 0, 1, false)] = 0.4;
  cv[mv] = 0.7, cv[find_mode(*b, 1, 0, true)] = -0.3;
  cw[mw] = 1.3, cw[find_mode(*b, 1, -1, true)] = 0.5;
  const SpectralField u(b, cu), v(b, cv), w(b, cw);
  const int N = 64;
  const double h = 2 * M_PI / N;
  double oracle = 0;
  for (int a = 0; a < N; ++a)
    for (int c = 0; c < N; ++c) {
      Eigen::Vector2d U, V, W;
      Eigen::Matrix2d gu, gv, gw;
      direct_eval(u, a * h, c * h, U, gu);
      direct_eval(v, a * h, c * h, V, gv);
      direct_eval(w, a * h, c * h, W, gw);
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) oracle += h * h * U[i] * gv(i, j) * W[j];
    }
  CHECK(std::abs(oracle) > 1e-3);  // the configuration is not trivially zero
  CHECK(ns_trilinear(u, v, w) == doctest::Approx(oracle).epsilon(1e-10));
}

TEST_CASE("Leray projection examples") {
  std::mt19937_64 gen(14);
  const auto b = SpectralBasis::fourier_torus(2);
  const SpectralField x(b, random_coeffs(b->n_modes(), gen));
  CHECK((leray_project(to_raw(x)).coeffs - x.coeffs).norm() < 1e-13);

  // gradient field: coefficients parallel to k
  RawVectorField grad = RawVectorField::zero(b);
  for (std::size_t w = 0; w < grad.cos_part.size(); ++w) {
    const auto& k = b->wavevectors()[w];
    grad.cos_part[w] = Eigen::Vector2d(k.kx, k.ky) * 0.7;
    grad.sin_part[w] = Eigen::Vector2d(k.kx, k.ky) * -1.1;
  }
  CHECK(leray_project(grad).coeffs.norm() < 1e-13);

  RawVectorField one = RawVectorField::zero(b);
  std::size_t w11 = 0;
  for (; w11 < b->wavevectors().size(); ++w11) {
    const auto& k = b->wavevectors()[w11];
    if ((k.kx == 1 && k.ky == 1) || (k.kx == -1 && k.ky == -1)) break;
  }
  REQUIRE(w11 < b->wavevectors().size());
  one.cos_part[w11] = Eigen::Vector2d(1.0, 0.0);
  const RawVectorField p = leray_project_raw(one);
  CHECK(p.cos_part[w11][0] == doctest::Approx(0.5));
  CHECK(p.cos_part[w11][1] == doctest::Approx(-0.5));
}

TEST_CASE("Navier-Stokes drift of a single plane wave vanishes and drift is energy neutral") {
  std::mt19937_64 gen(15);
  ModelSpec m;
  m.basis = SpectralBasis::fourier_torus(2);
  m.drift = DriftSpec::navier_stokes();
  m.noise = NoiseSpec::power_law(m.basis->n_modes(), 1.0, 0.0);
  for (int mode : {0, 3, 11}) CHECK(drift_apply(m, SpectralField::unit(m.basis, mode, 2.0)).coeffs.norm() < 1e-12);
  for (int i = 0; i < 20; ++i) {
    const SpectralField x(m.basis, random_coeffs(m.basis->n_modes(), gen));
    CHECK(std::abs(drift_apply(m, x).coeffs.dot(x.coeffs)) < 1e-10);
    // drift = -P (x.grad) x, so <B(x), w> = -b(x, x, w)
    const SpectralField w(m.basis, random_coeffs(m.basis->n_modes(), gen));
    CHECK(drift_apply(m, x).coeffs.dot(w.coeffs) == doctest::Approx(-ns_trilinear(x, x, w)).epsilon(1e-10));
  }
}

TEST_CASE("trilinear L4-L4-H1 constant is stable across resolutions") {
  std::mt19937_64 gen(16);
  std::vector<double> kappas;
  for (int K : {2, 3, 4}) {
    const auto b = SpectralBasis::fourier_torus(K);
    double kappa = 0.0;
    for (int i = 0; i < 40; ++i) {
      const SpectralField u(b, random_coeffs(b->n_modes(), gen)), v(b, random_coeffs(b->n_modes(), gen)),
          w(b, random_coeffs(b->n_modes(), gen));
      const double denom = norms(u).l4 * norms(v).l4 * h_delta_norm(w, 1.0);
      kappa = std::max(kappa, std::abs(ns_trilinear(u, v, w)) / denom);
    }
    kappas.push_back(kappa);
  }
  for (double k : kappas) CHECK(std::isfinite(k));
  const double lo = *std::min_element(kappas.begin(), kappas.end());
  const double hi = *std::max_element(kappas.begin(), kappas.end());
  CHECK(hi <= 3.0 * lo);
}
