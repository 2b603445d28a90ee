#include "fwspde/error.hpp"
#include "fwspde/skeleton.hpp"
#include "fwspde/simulator.hpp"

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

// one mode on [0, pi]: gamma = 1, e_1 = sqrt(2/pi) sin
ModelSpec scalar_model(DriftSpec drift, TimeGrid grid) {
  ModelSpec m;
  m.basis = SpectralBasis::dirichlet_interval(1, M_PI);
  m.drift = std::move(drift);
  m.noise = NoiseSpec::power_law(1, 1.0, 0.0);
  m.grid = grid;
  return m;
}

ModelSpec reaction_model(int n, TimeGrid grid) {
  ModelSpec m;
  m.basis = SpectralBasis::dirichlet_interval(n, 1.0);
  m.drift = DriftSpec::reaction({0, 1, 0, -1});
  m.noise = NoiseSpec::power_law(n, 1.0, 1.0);
  m.grid = grid;
  return m;
}

// smooth deterministic control: u_j(t) = sin(2 pi t) / j
ControlPath smooth_control(const TimeGrid& g, int n_noise, double amp) {
  Eigen::MatrixXd v(n_noise, g.n_nodes());
  for (int i = 0; i < g.n_nodes(); ++i)
    for (int j = 0; j < n_noise; ++j) v(j, i) = amp * std::sin(2 * M_PI * g.node(i)) / (j + 1);
  return ControlPath(g, v);
}

// classical RK4 on a fine grid
double rk4(double (*f)(double), double y0, double t_end, int n) {
  const double h = t_end / n;
  double y = y0;
  for (int i = 0; i < n; ++i) {
    const double k1 = f(y), k2 = f(y + 0.5 * h * k1), k3 = f(y + 0.5 * h * k2), k4 = f(y + h * k3);
    y += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return y;
}

// projection of -sigma^3 onto e_1 for sigma = c e_1 on [0, pi] is -kappa c^3
const double kKappa = 3.0 / (2.0 * M_PI);
double surrogate_rhs(double v) { return -v - kKappa * std::pow(v + 1.0, 3); }

}  // namespace

TEST_CASE("time grid and control energy") {
  const TimeGrid g(2.0, 8);
  CHECK(g.node(0) == 0.0);
  CHECK(g.node(8) == 2.0);
  for (int i = 1; i <= 8; ++i) CHECK(g.node(i) > g.node(i - 1));
  CHECK_THROWS_AS(TimeGrid(-1.0, 4), ValidationError);
  CHECK_THROWS_AS(TimeGrid(1.0, 0), ValidationError);

  Eigen::VectorXd c(2);
  c << 1.0, 2.0;
  const ControlPath u = ControlPath::constant(g, c);
  CHECK(u.energy == doctest::Approx(0.5 * 5.0 * 2.0).epsilon(1e-12));
  CHECK(action_of_control(u) == doctest::Approx(5.0));
  CHECK(action_of_control(ControlPath::zero(g, 2)) == 0.0);

  Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(2, 9);
  bad(0, 3) = std::nan("");
  CHECK_THROWS_AS(ControlPath(g, bad), ValidationError);
}

TEST_CASE("cutoff examples and Lipschitz bound") {
  const auto t = SpectralBasis::fourier_torus(1);  // E-norm is L2 here
  const SpectralField big = SpectralField::unit(t, 2, 10.0);
  CHECK(cutoff(big, 5.0).coeffs[2] == doctest::Approx(5.0));
  const SpectralField half = SpectralField::unit(t, 1, 2.5);
  CHECK(cutoff(half, 5.0).coeffs == half.coeffs);

  std::mt19937_64 gen(21);
  const auto b = SpectralBasis::dirichlet_interval(6, 1.0);
  for (int i = 0; i < 200; ++i) {
    const SpectralField x(b, random_coeffs(6, gen, 2.0)), y(b, random_coeffs(6, gen, 2.0));
    const double R = 1.0 + i % 5;
    const SpectralField cx = cutoff(x, R), cy = cutoff(y, R);
    CHECK(state_norm(cx) <= R * (1 + 1e-12));
    const SpectralField diff(b, cx.coeffs - cy.coeffs), d0(b, x.coeffs - y.coeffs);
    CHECK(state_norm(diff) <= 3.0 * state_norm(d0) + 1e-12);
  }
}

TEST_CASE("apply_M trivial cases") {
  std::mt19937_64 gen(22);
  const TimeGrid g(1.0, 50);
  ModelSpec none = reaction_model(4, g);
  none.drift = DriftSpec::none();
  const Trajectory psi(none.basis, g, Eigen::MatrixXd::NullaryExpr(4, g.n_nodes(), [&] { return 0.3; }));
  CHECK((apply_M(psi, none).states - psi.states).norm() == 0.0);

  const ModelSpec r = reaction_model(4, g);
  const Trajectory zero(r.basis, g, Eigen::MatrixXd::Zero(4, g.n_nodes()));
  CHECK(apply_M(zero, r).states.norm() == 0.0);

  const Trajectory rnd(r.basis, g, 0.3 * Eigen::MatrixXd::Random(4, g.n_nodes()));
  CHECK(apply_M(rnd, r).states.col(0) == rnd.states.col(0));
}

TEST_CASE("apply_M matches an RK4 oracle on the cubic scalar surrogate") {
  const int n = 4000;
  const TimeGrid g(0.5, n);
  const ModelSpec m = scalar_model(DriftSpec::reaction({0, 0, 0, -1}), g);
  const Trajectory psi(m.basis, g, Eigen::MatrixXd::Ones(1, g.n_nodes()));
  const Trajectory phi = apply_M(psi, m);
  const double v_end = phi.terminal().coeffs[0] - 1.0;
  const double oracle = rk4(surrogate_rhs, 0.0, 0.5, 20000);
  // first-order scheme: error of order dt
  CHECK(std::abs(v_end - oracle) < 2.0 * g.dt());
  CHECK(phi.states(0, 0) == 1.0);
}

TEST_CASE("solve_skeleton: free flow and linear closed form") {
  std::mt19937_64 gen(23);
  const TimeGrid g(1.0, 40);
  ModelSpec free = reaction_model(5, g);
  free.drift = DriftSpec::none();
  const SpectralField x0(free.basis, random_coeffs(5, gen));
  const Trajectory x = solve_skeleton(free, x0, ControlPath::zero(g, 5));
  for (int i = 0; i < g.n_nodes(); ++i)
    CHECK((x.states.col(i) - semigroup_apply(x0, g.node(i)).coeffs).norm() < 1e-13);

  const TimeGrid fine(1.0, 4000);
  const ModelSpec lin = scalar_model(DriftSpec::none(), fine);
  const double c = 0.7, y0 = -0.4;
  const Trajectory y = solve_skeleton(lin, SpectralField::unit(lin.basis, 0, y0),
                                      ControlPath::constant(fine, Eigen::VectorXd::Constant(1, c)));
  for (int i = 0; i < fine.n_nodes(); i += 400) {
    const double t = fine.node(i);
    CHECK(std::abs(y.states(0, i) - (std::exp(-t) * y0 + c * (1 - std::exp(-t)))) < c * fine.dt());
  }
}

TEST_CASE("zero control reproduces the uncontrolled eps = 0 flow") {
  std::mt19937_64 gen(24);
  const TimeGrid g(1.0, 60);
  const ModelSpec m = reaction_model(4, g);
  const SpectralField x0(m.basis, random_coeffs(4, gen, 0.5));
  const Trajectory sk = solve_skeleton(m, x0, ControlPath::zero(g, 4));
  SimConfig cfg;
  cfg.eps = 0.0;
  cfg.grid = g;
  const Trajectory sim = simulate(m, x0, cfg).trajectory;
  CHECK((sk.states - sim.states).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("mild residual certifies solutions and detects perturbations") {
  std::mt19937_64 gen(25);
  const TimeGrid g(1.0, 80);
  const ModelSpec m = reaction_model(4, g);
  const SpectralField x0(m.basis, random_coeffs(4, gen, 0.5));
  const ControlPath u = smooth_control(g, 4, 1.0);
  SolverOptions opts;
  const Trajectory x = solve_skeleton(m, x0, u, opts);
  CHECK(mild_residual(x, m, &u) <= opts.picard_tol);

  Trajectory bad = x;
  bad.states(0, 40) += 0.1;
  CHECK(mild_residual(bad, m, &u) >= 0.05);

  // exact exponential-Euler recursion for the linear model
  ModelSpec lin = m;
  lin.drift = DriftSpec::none();
  Eigen::MatrixXd s(4, g.n_nodes());
  s.col(0) = x0.coeffs;
  const Eigen::VectorXd f = semigroup_factors(*lin.basis, g.dt());
  for (int i = 0; i < g.n_steps; ++i) {
    Eigen::VectorXd gu(4);
    for (int j = 0; j < 4; ++j) gu[j] = lin.noise.q_eigenvalues[j] * u.values(j, i);
    s.col(i + 1) = f.cwiseProduct(s.col(i) + g.dt() * gu);
  }
  CHECK(mild_residual(Trajectory(lin.basis, g, s), lin, &u) <= 1e-10);
}

TEST_CASE("grid convergence: successive halvings shrink the endpoint error") {
  std::mt19937_64 gen(26);
  const SpectralField x0(SpectralBasis::dirichlet_interval(4, 1.0), random_coeffs(4, gen, 0.5));
  std::vector<Eigen::VectorXd> ends;
  for (int n : {50, 100, 200, 400}) {
    const TimeGrid g(1.0, n);
    const ModelSpec m = reaction_model(4, g);
    ends.push_back(solve_skeleton(m, SpectralField(m.basis, x0.coeffs), smooth_control(g, 4, 1.0)).terminal().coeffs);
  }
  const double d1 = (ends[1] - ends[0]).norm(), d2 = (ends[2] - ends[1]).norm(), d3 = (ends[3] - ends[2]).norm();
  CHECK(d1 / d2 >= 1.8);
  CHECK(d2 / d3 >= 1.8);
}

TEST_CASE("M is Lipschitz in psi and grows under scaling") {
  std::mt19937_64 gen(27);
  std::vector<double> constants;
  for (int n : {40, 80}) {
    const TimeGrid g(1.0, n);
    const ModelSpec m = reaction_model(3, g);
    double c_max = 0.0;
    std::mt19937_64 local(28);
    for (int i = 0; i < 10; ++i) {
      Eigen::MatrixXd a(3, g.n_nodes()), b(3, g.n_nodes());
      const Eigen::VectorXd a0 = random_coeffs(3, local, 0.3), b0 = random_coeffs(3, local, 0.3);
      for (int k = 0; k < g.n_nodes(); ++k) {
        a.col(k) = a0 * std::cos(g.node(k));
        b.col(k) = b0 * std::cos(g.node(k));
      }
      const Trajectory pa(m.basis, g, a), pb(m.basis, g, b);
      const double num = apply_M(pa, m).sup_distance(apply_M(pb, m));
      c_max = std::max(c_max, num / pa.sup_distance(pb));
    }
    constants.push_back(c_max);
  }
  for (double c : constants) CHECK(std::isfinite(c));
  CHECK(constants[1] <= 1.5 * constants[0]);

  const TimeGrid g(1.0, 60);
  const ModelSpec m = reaction_model(3, g);
  const Eigen::VectorXd p0 = random_coeffs(3, gen, 0.4);
  double prev = 0.0;
  for (double c : {1.0, 1.5, 2.0, 3.0}) {
    Eigen::MatrixXd s(3, g.n_nodes());
    for (int k = 0; k < g.n_nodes(); ++k) s.col(k) = c * p0;
    const double sup = apply_M(Trajectory(m.basis, g, s), m).sup_state_norm();
    CHECK(sup >= prev);
    prev = sup;
  }
}

TEST_CASE("Navier-Stokes skeleton with zero control loses energy monotonically") {
  std::mt19937_64 gen(29);
  ModelSpec m;
  m.basis = SpectralBasis::fourier_torus(2);
  m.drift = DriftSpec::navier_stokes();
  m.noise = NoiseSpec::power_law(m.basis->n_modes(), 1.0, 1.0);
  m.grid = TimeGrid(0.5, 100);
  for (int trial = 0; trial < 5; ++trial) {
    const SpectralField x0(m.basis, random_coeffs(m.basis->n_modes(), gen, 0.5));
    const Trajectory x = solve_skeleton(m, x0, ControlPath::zero(m.grid, m.n_noise()));
    for (int i = 1; i < m.grid.n_nodes(); ++i) CHECK(x.states.col(i).norm() <= x.states.col(i - 1).norm() + 1e-12);
  }
}

TEST_CASE("control resampling preserves constants") {
  const TimeGrid a(1.0, 10), b(1.0, 40);
  const ControlPath u = ControlPath::constant(a, Eigen::VectorXd::Constant(2, 1.5));
  const ControlPath v = u.resampled(b);
  CHECK(v.values.cols() == b.n_nodes());
  CHECK((v.values.array() - 1.5).abs().maxCoeff() < 1e-14);
}
