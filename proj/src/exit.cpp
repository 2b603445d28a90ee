#include "fwspde/exit.hpp"

#include "fwspde/error.hpp"
#include "fwspde/ldp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace fwspde {

double ExitDomain::distance(const Eigen::VectorXd& x) const {
  if (norm == BallNorm::L2) return (x - center.coeffs).norm();
  return state_norm(*center.basis, x - center.coeffs);
}

void ExitProblem::validate() const {
  model.validate();
  if (!domain.center.basis) throw schema_error("exit.domain.center", "domain center missing");
  if (!domain.center.basis->same_as(*model.basis) || !equilibrium.basis->same_as(*model.basis))
    throw schema_error("exit.domain", "basis mismatch");
  if (!(domain.radius > 0.0)) throw range_error("exit.domain.radius", "radius must be positive");
  if (!domain.contains(equilibrium.coeffs)) throw range_error("exit.equilibrium", "O must lie inside D");
  if (!domain.contains(start().coeffs)) throw range_error("exit.x0", "x0 must lie inside D");
  if (!(v_ref > 0.0)) throw range_error("exit.v_ref", "V(dD) must be positive (O strictly inside D)");
  if (n_paths < 1) throw range_error("exit.n_paths", "n_paths must be at least 1");
  if (max_steps < 1) throw range_error("exit.max_steps", "max_steps must be positive");
  if (!(eta > 0.0)) throw range_error("exit.eta", "eta must be positive");
  if (eps_list.empty()) throw range_error("exit.eps_list", "eps_list must not be empty");
  for (std::size_t i = 0; i < eps_list.size(); ++i) {
    if (!(eps_list[i] > 0.0)) throw range_error("exit.eps_list", "eps values must be positive");
    if (i > 0 && !(eps_list[i] < eps_list[i - 1])) throw range_error("exit.eps_list", "must be strictly decreasing");
  }
}

AttractionReport verify_attraction(const ModelSpec& model, const ExitDomain& domain, const SpectralField& equilibrium,
                                   const std::vector<SpectralField>& probes, double horizon, double rho) {
  if (!(horizon > 0.0)) throw range_error("verify.horizon", "horizon must be positive");
  if (!(rho > 0.0)) throw range_error("verify.rho", "rho must be positive");
  AttractionReport rep;
  const Eigen::VectorXd gam = model.basis->eigenvalues();
  rep.equilibrium_residual =
      (drift_coeffs(model, equilibrium.coeffs) - gam.cwiseProduct(equilibrium.coeffs)).norm();
  ModelSpec m = model;
  const double dt = model.grid.dt();
  m.grid = TimeGrid(horizon, std::max(1, static_cast<int>(std::lround(horizon / dt))));
  for (const auto& x0 : probes) {
    AttractionProbe p;
    p.x0 = x0;
    const Trajectory t = solve_skeleton(m, x0, ControlPath::zero(m.grid, m.n_noise()));
    for (int n = 0; n < t.states.cols(); ++n)
      if (!domain.contains(t.states.col(n))) p.stayed_in_domain = false;
    ExitDomain around_o{equilibrium, rho, domain.norm};
    p.final_distance = around_o.distance(t.states.col(t.grid.n_steps));
    p.ok = p.stayed_in_domain && p.final_distance < rho;
    rep.violations += !p.ok;
    rep.probes.push_back(std::move(p));
  }
  return rep;
}

ExitSample sample_exit(const ExitProblem& problem, double eps, std::uint64_t seed) {
  if (!(eps >= 0.0)) throw range_error("exit.eps", "eps must be nonnegative");
  const ModelSpec& m = problem.model;
  const double dt = m.grid.dt();
  const Stepper stepper(m, eps, dt, m.n_noise());
  NormalRng rng(seed);
  Eigen::VectorXd x = problem.start().coeffs;
  ExitSample s;
  // the horizon is extended in blocks of the base grid; the stream simply continues
  for (std::int64_t step = 1; step <= problem.max_steps; ++step) {
    stepper.step(x, nullptr, rng);
    if (!x.allFinite()) throw NumericalError("BlowUp", "non-finite state during exit sampling");
    const double d = problem.domain.distance(x);
    if (!(d < problem.domain.radius)) {
      s.tau = double(step) * dt;
      s.steps = step;
      s.overshoot = d - problem.domain.radius;
      s.exit_point = SpectralField(m.basis, x);
      return s;
    }
  }
  s.censored = true;
  s.steps = problem.max_steps;
  s.tau = double(problem.max_steps) * dt;
  s.exit_point = SpectralField(m.basis, x);
  return s;
}

namespace {

void check_budget(const ExitProblem& p) {
  double total = 0.0;
  // censoring caps the work of each path at max_steps
  for (double eps : p.eps_list)
    total += double(p.n_paths) * std::min(std::exp(p.v_ref / eps) / p.model.grid.dt(), double(p.max_steps));
  if (total > 1e9) {
    std::ostringstream os;
    os << "predicted " << total << " steps (sum over eps of n min(e^{V/eps} / dt, max_steps)) exceeds the 1e9 budget";
    throw BudgetError(os.str());
  }
}

std::vector<ExitSample> run_samples(const ExitProblem& p, double eps) {
  std::vector<ExitSample> out(static_cast<std::size_t>(p.n_paths));
  parallel_for(p.n_paths, p.threads, [&](std::int64_t i) {
    out[static_cast<std::size_t>(i)] = sample_exit(p, eps, derive_seed(p.seed, static_cast<std::uint64_t>(i)));
  });
  return out;
}

}  // namespace

ExitScalingReport exit_scaling(const ExitProblem& problem) {
  problem.validate();
  check_budget(problem);
  ExitScalingReport rep;
  rep.v_ref = problem.v_ref;
  rep.eta = problem.eta;
  for (double eps : problem.eps_list) {
    std::vector<ExitSample> samples = run_samples(problem, eps);
    ExitScalingRow row;
    row.eps = eps;
    row.n = problem.n_paths;
    std::vector<double> taus, uncensored, overshoot;
    const double lo_edge = std::exp((problem.v_ref - problem.eta) / eps);
    const double hi_edge = std::exp((problem.v_ref + problem.eta) / eps);
    std::int64_t in_window = 0;
    for (const auto& s : samples) {
      taus.push_back(s.tau);
      if (s.censored) {
        ++row.n_censored;
        continue;
      }
      uncensored.push_back(s.tau);
      overshoot.push_back(s.overshoot);
      in_window += s.tau >= lo_edge && s.tau <= hi_edge;
    }
    row.all_censored = row.n_censored == row.n;
    const BatchStatistics st = summarize(taus);
    row.mean_tau = st.mean;
    row.ci_lo = st.ci_lo;
    row.ci_hi = st.ci_hi;
    row.mean_tau_uncensored = uncensored.empty() ? NAN : summarize(uncensored).mean;
    row.mean_overshoot = overshoot.empty() ? NAN : summarize(overshoot).mean;
    std::vector<double> sorted = taus;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t h = sorted.size() / 2;
    row.median_tau = sorted.size() % 2 ? sorted[h] : 0.5 * (sorted[h - 1] + sorted[h]);
    row.eps_log_mean = eps * std::log(row.mean_tau);
    row.window_prob = double(in_window) / double(row.n);
    std::tie(row.window_ci_lo, row.window_ci_hi) = wilson_interval(in_window, row.n);
    if (row.all_censored) rep.excluded_eps.push_back(eps);
    rep.rows.push_back(row);
    for (auto& s : samples) rep.samples.push_back(std::move(s));
  }

  std::vector<double> x, y;
  for (const auto& r : rep.rows)
    if (!r.all_censored) x.push_back(r.eps), y.push_back(r.eps_log_mean);
  rep.strictly_increasing = y.size() >= 2;
  for (std::size_t i = 1; i < y.size(); ++i)
    if (!(y[i] > y[i - 1])) rep.strictly_increasing = false;
  if (x.size() >= 2) {
    const double n = double(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
    mx /= n, my /= n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) sxx += (x[i] - mx) * (x[i] - mx), sxy += (x[i] - mx) * (y[i] - my);
    rep.fit_slope = sxy / sxx;
    rep.extrapolated_limit = my - rep.fit_slope * mx;
  } else if (x.size() == 1) {
    rep.extrapolated_limit = y[0];
  } else {
    rep.extrapolated_limit = NAN;
  }
  return rep;
}

std::vector<ExitPlaceRow> exit_place_histogram(const ExitProblem& problem, const std::vector<ExitPlaceCell>& cells) {
  problem.validate();
  check_budget(problem);
  if (cells.empty()) throw range_error("exit.cells", "partition must contain at least one cell");
  for (const auto& c : cells)
    if (c.direction.size() != problem.model.n_modes())
      throw range_error("exit.cells", "cell direction has the wrong dimension");
  std::vector<ExitPlaceRow> out;
  for (double eps : problem.eps_list) {
    const std::vector<ExitSample> samples = run_samples(problem, eps);
    std::vector<std::int64_t> counts(cells.size(), 0);
    std::int64_t exited = 0;
    for (const auto& s : samples) {
      if (s.censored) continue;
      ++exited;
      const Eigen::VectorXd d = s.exit_point.coeffs - problem.equilibrium.coeffs;
      int best = -1;
      double best_dot = -INFINITY;
      for (std::size_t c = 0; c < cells.size(); ++c) {
        const double nrm = cells[c].direction.norm();
        if (nrm == 0.0) continue;  // empty cell
        const double v = d.dot(cells[c].direction) / nrm;
        if (v > best_dot) best_dot = v, best = static_cast<int>(c);
      }
      if (best >= 0) ++counts[best];
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      ExitPlaceRow r;
      r.eps = eps;
      r.cell = cells[c].name;
      r.count = counts[c];
      r.n_exited = exited;
      r.frequency = exited ? double(counts[c]) / double(exited) : 0.0;
      std::tie(r.ci_lo, r.ci_hi) = wilson_interval(counts[c], exited);
      out.push_back(r);
    }
  }
  return out;
}

std::vector<ExitPlaceCell> axis_cells(int n_modes, int n_axes) {
  if (n_axes < 1 || n_axes > n_modes) throw range_error("exit.cells", "axis count out of range");
  std::vector<ExitPlaceCell> cells;
  for (int k = 0; k < n_axes; ++k)
    for (double sign : {1.0, -1.0}) {
      Eigen::VectorXd d = Eigen::VectorXd::Zero(n_modes);
      d[k] = sign;
      cells.push_back({(sign > 0 ? "+e" : "-e") + std::to_string(k + 1), d});
    }
  return cells;
}

}  // namespace fwspde
