#include "fwspde/error.hpp"
#include "fwspde/exit.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace fwspde;

namespace {

// modes on [0, pi]: gamma_k = k^2, unit additive noise
ModelSpec ou_model(int n, TimeGrid grid) {
  ModelSpec m;
  m.basis = SpectralBasis::dirichlet_interval(n, M_PI);
  m.drift = DriftSpec::none();
  m.noise = NoiseSpec::power_law(n, 1.0, 0.0);
  m.grid = grid;
  return m;
}

ExitProblem ou_problem(int n, double radius, std::vector<double> eps, std::int64_t n_paths, double dt = 0.01) {
  ExitProblem p;
  p.model = ou_model(n, TimeGrid(1.0, static_cast<int>(std::lround(1.0 / dt))));
  p.equilibrium = SpectralField::zero(p.model.basis);
  p.domain.center = p.equilibrium;
  p.domain.radius = radius;
  p.eps_list = std::move(eps);
  p.n_paths = n_paths;
  p.v_ref = radius * radius;  // gamma_1 r^2
  p.seed = 17;
  return p;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

}  // namespace

TEST_CASE("domain distance and membership") {
  const auto b = SpectralBasis::dirichlet_interval(2, M_PI);
  ExitDomain d;
  d.center = SpectralField::zero(b);
  d.radius = 1.0;
  CHECK(d.contains(Eigen::Vector2d(0.6, 0.6)));
  CHECK_FALSE(d.contains(Eigen::Vector2d(0.8, 0.8)));
  CHECK_FALSE(d.contains(Eigen::Vector2d(1.0, 0.0)));  // the boundary is outside the open ball
  d.norm = BallNorm::Sup;
  CHECK(d.distance(Eigen::Vector2d(1.0, 0.0)) == doctest::Approx(std::sqrt(2.0 / M_PI)).epsilon(1e-6));
}

TEST_CASE("attraction examples") {
  const ModelSpec m = ou_model(1, TimeGrid(1.0, 1000));
  ExitDomain d;
  d.center = SpectralField::zero(m.basis);
  const SpectralField O = d.center;
  const AttractionReport rep = verify_attraction(m, d, O, {O, SpectralField::unit(m.basis, 0, 0.9)}, 3.0, 0.1);
  CHECK(rep.equilibrium_residual == 0.0);
  REQUIRE(rep.probes.size() == 2);
  CHECK(rep.probes[0].final_distance == 0.0);
  CHECK(rep.probes[1].final_distance == doctest::Approx(0.9 * std::exp(-3.0)).epsilon(1e-9));
  CHECK(rep.probes[1].ok);
  CHECK(rep.violations == 0);

  ModelSpec unstable = m;
  unstable.drift = DriftSpec::reaction({0, 2, 0, -1});  // linear growth beats gamma_1 = 1
  const AttractionReport bad = verify_attraction(unstable, d, O, {SpectralField::unit(m.basis, 0, 0.1)}, 3.0, 0.1);
  CHECK(bad.violations == 1);
  CHECK_FALSE(bad.probes[0].ok);
}

TEST_CASE("problem validation") {
  ExitProblem p = ou_problem(1, 1.0, {0.4, 0.3}, 10);
  CHECK_NOTHROW(p.validate());
  p.v_ref = 0.0;
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p = ou_problem(1, 1.0, {0.3, 0.4}, 10);
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p = ou_problem(1, 1.0, {0.4}, 10);
  p.x0 = SpectralField::unit(p.model.basis, 0, 2.0);  // starts outside D
  CHECK_THROWS_AS(p.validate(), ValidationError);
}

TEST_CASE("large noise exits within the first block") {
  const ExitProblem p = ou_problem(1, 0.2, {1.0}, 1000);
  int exited = 0;
  for (int i = 0; i < 1000; ++i) {
    const ExitSample s = sample_exit(p, 1.0, derive_seed(3, i));
    if (!s.censored && s.tau <= p.model.grid.t_end) ++exited;
    if (!s.censored) {
      CHECK(s.overshoot >= 0.0);
      CHECK(std::abs(s.exit_point.coeffs[0]) >= 0.2);
    }
  }
  CHECK(exited >= 990);
}

TEST_CASE("zero noise never exits; samples are reproducible") {
  ExitProblem p = ou_problem(1, 1.0, {0.3}, 1);
  p.max_steps = 2000;
  p.x0 = SpectralField::unit(p.model.basis, 0, 0.5);
  const ExitSample s = sample_exit(p, 0.0, 1);
  CHECK(s.censored);
  CHECK(s.steps == 2000);

  const ExitSample a = sample_exit(p, 0.5, 99), b = sample_exit(p, 0.5, 99);
  CHECK(a.tau == b.tau);
  CHECK(a.exit_point.coeffs == b.exit_point.coeffs);
}

TEST_CASE("exit scaling on the OU benchmark") {
  ExitProblem p = ou_problem(1, 1.0, {0.4, 0.3, 0.22}, 200);
  p.eta = p.v_ref;  // window covers [1, e^{2V/eps}]
  const ExitScalingReport r = exit_scaling(p);
  REQUIRE(r.rows.size() == 3);
  CHECK(std::abs(r.extrapolated_limit - 1.0) <= 0.2);
  CHECK(r.rows[1].window_prob >= 0.95);
  for (const auto& row : r.rows) {
    CHECK(row.n == 200);
    CHECK(row.ci_lo <= row.mean_tau);
    CHECK(row.mean_tau <= row.ci_hi);
  }
  // median tau grows as eps shrinks
  std::vector<double> med;
  for (std::size_t e = 0; e < 3; ++e) {
    std::vector<double> taus;
    for (int i = 0; i < 200; ++i) taus.push_back(r.samples[e * 200 + i].tau);
    med.push_back(median(taus));
  }
  CHECK(med[1] >= med[0]);
  CHECK(med[2] >= med[1]);
}

TEST_CASE("window probability does not drop as eps decreases") {
  ExitProblem p = ou_problem(1, 0.8, {0.4, 0.25, 0.16}, 300);
  p.eta = 0.3;
  const ExitScalingReport r = exit_scaling(p);
  for (std::size_t i = 1; i < r.rows.size(); ++i) CHECK(r.rows[i].window_ci_hi >= r.rows[i - 1].window_ci_lo);
}

TEST_CASE("raising the step budget never lowers mean tau") {
  ExitProblem p = ou_problem(1, 1.0, {0.25}, 100);
  p.max_steps = 300;
  const ExitScalingReport a = exit_scaling(p);
  CHECK(a.rows[0].n_censored > 0);
  p.max_steps = 30000;
  const ExitScalingReport b = exit_scaling(p);
  CHECK(b.rows[0].mean_tau >= a.rows[0].mean_tau);
  CHECK(b.rows[0].n_censored <= a.rows[0].n_censored);
}

TEST_CASE("all-censored eps are excluded and flagged") {
  ExitProblem p = ou_problem(1, 1.0, {0.3, 0.05}, 20);
  p.max_steps = 100;
  p.x0 = SpectralField::zero(p.model.basis);
  const ExitScalingReport r = exit_scaling(p);
  CHECK(std::find(r.excluded_eps.begin(), r.excluded_eps.end(), 0.05) != r.excluded_eps.end());
}

TEST_CASE("exit-time budget guard") {
  ExitProblem p = ou_problem(1, 1.0, {0.05}, 100);
  p.max_steps = 1'000'000'000;
  CHECK_THROWS_AS(exit_scaling(p), BudgetError);
}

TEST_CASE("overshoot shrinks with the time step") {
  double prev = INFINITY;
  for (double dt : {0.02, 0.01, 0.005}) {
    const ExitProblem p = ou_problem(1, 0.5, {0.3}, 300, dt);
    const ExitScalingReport r = exit_scaling(p);
    CHECK(r.rows[0].mean_overshoot < prev);
    prev = r.rows[0].mean_overshoot;
  }
}

TEST_CASE("exit place: symmetric OU and empty cells") {
  const ExitProblem p = ou_problem(1, 0.7, {0.3}, 400);
  std::vector<ExitPlaceCell> cells = axis_cells(1, 1);
  REQUIRE(cells.size() == 2);
  cells.push_back({"empty", Eigen::VectorXd::Zero(1)});
  const std::vector<ExitPlaceRow> rows = exit_place_histogram(p, cells);
  REQUIRE(rows.size() == 3);
  const double se = std::sqrt(0.25 / rows[0].n_exited);
  CHECK(std::abs(rows[0].frequency - 0.5) <= 3 * se);
  CHECK(std::abs(rows[1].frequency - 0.5) <= 3 * se);
  CHECK(rows[0].count + rows[1].count == rows[0].n_exited);
  CHECK(rows[2].count == 0);
  CHECK(rows[2].frequency == 0.0);
}

TEST_CASE("exit place: two-mode model prefers the slow mode") {
  const ExitProblem p = ou_problem(2, 0.8, {0.5, 0.25}, 300);
  const std::vector<ExitPlaceCell> cells = axis_cells(2, 2);
  REQUIRE(cells.size() == 4);
  const std::vector<ExitPlaceRow> rows = exit_place_histogram(p, cells);
  auto mode2 = [&](double eps) {
    double f = 0;
    for (const auto& r : rows)
      if (r.eps == eps && (r.cell == cells[2].name || r.cell == cells[3].name)) f += r.frequency;
    return f;
  };
  CHECK(mode2(0.25) < mode2(0.5));
  CHECK(mode2(0.25) < 0.25);
}
