#include "fwspde/action.hpp"

#include "fwspde/error.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>

namespace fwspde {

Target Target::point(SpectralField y, double tol) {
  if (!(tol > 0.0)) throw range_error("target.tol", "target tolerance must be positive");
  Target t;
  t.points.push_back(std::move(y));
  t.tol = tol;
  return t;
}

Target Target::ball_boundary(const SpectralField& center, double radius, int n_directions, bool norm_is_sup) {
  if (!(radius > 0.0)) throw range_error("target.radius", "radius must be positive");
  Target t;
  t.tol = 1e-3 * radius;
  const int n = n_directions > 0 ? std::min(n_directions, center.size()) : center.size();
  for (int k = 0; k < n; ++k) {
    for (double sign : {1.0, -1.0}) {
      SpectralField e = SpectralField::unit(center.basis, k, 1.0);
      const double scale = norm_is_sup ? radius / state_norm(e) : radius;
      t.points.emplace_back(center.basis, center.coeffs + sign * scale * e.coeffs);
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// objective

namespace {

double tracking_weight(const ActionProblem& p, double mu) {
  if (!p.track) return 0.0;
  return p.track_weight * mu / p.penalty_weight;
}

double objective_value(const ActionProblem& p, const ControlPath& u, const Trajectory& traj, double mu,
                       int target_index) {
  const int N = traj.grid.n_steps;
  const Eigen::VectorXd& y = p.target.points.at(target_index).coeffs;
  double J = action_of_control(u) + 0.5 * mu * (traj.states.col(N) - y).squaredNorm();
  const double rho = tracking_weight(p, mu);
  if (rho > 0.0) {
    const double dt = traj.grid.dt();
    for (int n = 1; n <= N; ++n) J += 0.5 * rho * dt * (traj.states.col(n) - p.track->states.col(n)).squaredNorm();
  }
  return J;
}

Eigen::MatrixXd adjoint_gradient(const ActionProblem& p, const ControlPath& u, const Trajectory& traj,
                                 double mu, int target_index) {
  const ModelSpec& m = p.model;
  const TimeGrid& g = traj.grid;
  const int N = g.n_steps;
  const double dt = g.dt();
  const Eigen::VectorXd decay = semigroup_factors(*m.basis, dt);
  const Eigen::VectorXd w = trapezoid_weights(g);
  const double rho = tracking_weight(p, mu);
  const Eigen::VectorXd& y = p.target.points.at(target_index).coeffs;

  Eigen::MatrixXd grad(u.n_noise(), g.n_nodes());
  for (int n = 0; n <= N; ++n) grad.col(n) = w[n] * u.values.col(n);

  Eigen::VectorXd lam = mu * (traj.states.col(N) - y);
  if (rho > 0.0) lam += rho * dt * (traj.states.col(N) - p.track->states.col(N));
  for (int n = N - 1; n >= 0; --n) {
    const Eigen::VectorXd xn = traj.states.col(n);
    const Eigen::VectorXd q = decay.cwiseProduct(lam);
    grad.col(n) += dt * diffusion_transpose_apply(m, xn, q);
    Eigen::VectorXd next = q + dt * drift_jacobian_apply(m, xn, q);
    if (!m.noise.is_constant()) next += dt * diffusion_state_jacobian_apply(m, xn, u.values.col(n), q);
    if (rho > 0.0 && n >= 1) next += rho * dt * (xn - p.track->states.col(n));
    lam = std::move(next);
  }
  return grad;
}

}  // namespace

ObjectiveValue penalized_objective(const ActionProblem& problem, const ControlPath& u_in, double mu,
                                   int target_index, bool with_gradient, GradientMethod method) {
  const ControlPath u = u_in.resampled(problem.model.grid);
  ObjectiveValue out;
  out.trajectory = solve_skeleton(problem.model, problem.x0, u, problem.solver);
  out.value = objective_value(problem, u, out.trajectory, mu, target_index);
  if (!with_gradient) return out;

  if (method == GradientMethod::Auto)
    method = supports_adjoint(problem.model) ? GradientMethod::Adjoint : GradientMethod::FiniteDifference;
  if (method == GradientMethod::Adjoint) {
    if (!supports_adjoint(problem.model))
      throw schema_error("optimizer.gradient", "adjoint gradient unavailable for this model");
    out.gradient = adjoint_gradient(problem, u, out.trajectory, mu, target_index);
    return out;
  }
  out.gradient.resize(u.values.rows(), u.values.cols());
  const double h = 1e-6 * std::max(1.0, u.values.cwiseAbs().maxCoeff());
  for (Eigen::Index c = 0; c < u.values.cols(); ++c) {
    for (Eigen::Index r = 0; r < u.values.rows(); ++r) {
      Eigen::MatrixXd plus = u.values, minus = u.values;
      plus(r, c) += h;
      minus(r, c) -= h;
      const ControlPath up(u.grid, plus), um(u.grid, minus);
      const double fp = objective_value(problem, up, solve_skeleton(problem.model, problem.x0, up, problem.solver), mu, target_index);
      const double fm = objective_value(problem, um, solve_skeleton(problem.model, problem.x0, um, problem.solver), mu, target_index);
      out.gradient(r, c) = (fp - fm) / (2.0 * h);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// L-BFGS on the L^2-scaled control z_n = sqrt(w_n) u_n

namespace {

struct LbfgsOutcome {
  int iterations = 0;
  double grad_norm = 0.0;
  bool converged = false;
};

using ScaledObjective = std::function<double(const Eigen::VectorXd& z, Eigen::VectorXd& grad)>;

LbfgsOutcome lbfgs(Eigen::VectorXd& z, const ScaledObjective& f, const OptimizerOptions& opt) {
  LbfgsOutcome out;
  Eigen::VectorXd g;
  double fz = f(z, g);
  std::deque<Eigen::VectorXd> S, Y;
  std::deque<double> RHO;
  for (int it = 0; it < opt.max_iterations; ++it) {
    out.grad_norm = g.norm();
    if (out.grad_norm <= opt.grad_tol * (1.0 + z.norm())) {
      out.converged = true;
      return out;
    }
    // two-loop recursion
    Eigen::VectorXd d = -g;
    std::vector<double> alpha(S.size());
    for (int i = static_cast<int>(S.size()) - 1; i >= 0; --i) {
      alpha[i] = RHO[i] * S[i].dot(d);
      d -= alpha[i] * Y[i];
    }
    double gamma = 1.0;
    if (!S.empty()) gamma = S.back().dot(Y.back()) / Y.back().squaredNorm();
    d *= gamma;
    for (std::size_t i = 0; i < S.size(); ++i) {
      const double beta = RHO[i] * Y[i].dot(d);
      d += (alpha[i] - beta) * S[i];
    }
    double slope = g.dot(d);
    if (!(slope < 0.0)) {
      S.clear(), Y.clear(), RHO.clear();
      d = -g;
      slope = -g.squaredNorm();
    }
    double step = S.empty() ? std::min(1.0, 1.0 / std::max(1e-12, g.norm())) : 1.0;
    Eigen::VectorXd zn, gn;
    double fn = 0.0;
    bool accepted = false;
    for (int bt = 0; bt < 40; ++bt) {
      zn = z + step * d;
      fn = f(zn, gn);
      if (std::isfinite(fn) && fn <= fz + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    ++out.iterations;
    if (!accepted) {
      if (S.empty()) return out;  // steepest descent failed as well
      S.clear(), Y.clear(), RHO.clear();
      continue;
    }
    const Eigen::VectorXd s = zn - z, y = gn - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      S.push_back(s);
      Y.push_back(y);
      RHO.push_back(1.0 / sy);
      if (static_cast<int>(S.size()) > opt.memory) S.pop_front(), Y.pop_front(), RHO.pop_front();
    }
    const double df = fz - fn;
    z = std::move(zn);
    g = std::move(gn);
    fz = fn;
    if (df <= 1e-15 * (1.0 + std::abs(fz)) && g.norm() <= 1e3 * opt.grad_tol * (1.0 + z.norm())) {
      out.grad_norm = g.norm();
      out.converged = true;
      return out;
    }
  }
  out.grad_norm = g.norm();
  out.converged = out.grad_norm <= opt.grad_tol * (1.0 + z.norm());
  return out;
}

double max_path_gap(const Trajectory& traj, const Trajectory& track) {
  double gap = 0.0;
  for (int n = 0; n < traj.states.cols(); ++n)
    gap = std::max(gap, (traj.states.col(n) - track.states.col(n)).norm());
  return gap;
}

ActionResult minimize_single(const ActionProblem& p, int target_index) {
  const TimeGrid& g = p.model.grid;
  const int nn = p.model.n_noise();
  const Eigen::VectorXd w = trapezoid_weights(g);
  const Eigen::VectorXd sw = w.cwiseSqrt();
  const Eigen::Index dim = Eigen::Index(nn) * g.n_nodes();

  auto to_control = [&](const Eigen::VectorXd& z) {
    Eigen::MatrixXd v(nn, g.n_nodes());
    for (int n = 0; n < g.n_nodes(); ++n) v.col(n) = z.segment(Eigen::Index(n) * nn, nn) / sw[n];
    return ControlPath(g, std::move(v));
  };
  Eigen::VectorXd z = Eigen::VectorXd::Zero(dim);
  if (p.warm_start) {
    const ControlPath u0 = p.warm_start->resampled(g);
    for (int n = 0; n < g.n_nodes(); ++n) z.segment(Eigen::Index(n) * nn, nn) = sw[n] * u0.values.col(n);
  }

  ActionResult best;
  double mu = p.penalty_weight;
  int stagnant = 0;
  double prev_gap = INFINITY, prev_action = 0.0;
  int total_iters = 0;
  for (int stage = 0; stage < p.optimizer.max_stages; ++stage) {
    auto f = [&](const Eigen::VectorXd& zz, Eigen::VectorXd& grad) {
      const ObjectiveValue ov = penalized_objective(p, to_control(zz), mu, target_index, true, p.optimizer.gradient);
      grad.resize(dim);
      for (int n = 0; n < g.n_nodes(); ++n) grad.segment(Eigen::Index(n) * nn, nn) = ov.gradient.col(n) / sw[n];
      return ov.value;
    };
    const LbfgsOutcome lo = lbfgs(z, f, p.optimizer);
    total_iters += lo.iterations;

    ActionResult r;
    r.control = to_control(z);
    r.action = r.control.energy;
    r.trajectory = solve_skeleton(p.model, p.x0, r.control, p.solver);
    r.terminal_state = r.trajectory.terminal();
    r.terminal_gap = (r.terminal_state.coeffs - p.target.points[target_index].coeffs).norm();
    if (p.track) r.path_gap = max_path_gap(r.trajectory, *p.track);
    r.iterations = total_iters;
    r.stages = stage + 1;
    r.final_penalty = mu;
    r.gradient_norm = lo.grad_norm;
    r.target_index = target_index;
    const bool feasible = r.terminal_gap <= p.target.tol && (!p.track || r.path_gap <= p.track_tol);
    r.converged = lo.converged && feasible;
    best = r;
    if (r.converged) return best;

    const bool gap_flat = r.terminal_gap > 0.99 * prev_gap;
    const bool action_flat = r.action < 1.01 * prev_action + 1e-12;
    stagnant = (gap_flat && action_flat) ? stagnant + 1 : 0;
    if (stagnant >= 3 || (r.action > p.optimizer.action_ceiling && gap_flat)) {
      best.unreachable = true;
      return best;
    }
    prev_gap = r.terminal_gap;
    prev_action = r.action;
    if (feasible) continue;  // optimizer not yet converged at this penalty; keep mu
    mu *= 2.0;
  }
  return best;
}

void validate_problem(const ActionProblem& p) {
  p.model.validate();
  if (p.target.points.empty()) throw range_error("action.target", "no target points");
  if (!(p.target.tol > 0.0)) throw range_error("action.target.tol", "delta_y must be positive");
  if (!(p.penalty_weight > 0.0)) throw range_error("action.penalty_weight", "must be positive");
  if (!p.x0.basis->same_as(*p.model.basis)) throw schema_error("action.x0", "basis mismatch");
  for (const auto& y : p.target.points)
    if (!y.basis->same_as(*p.model.basis)) throw schema_error("action.target", "basis mismatch");
  if (p.track && (p.track->grid.n_steps != p.model.grid.n_steps))
    throw range_error("action.track", "tracked path must live on the model grid");
}

}  // namespace

ActionResult minimize_action(const ActionProblem& problem) {
  validate_problem(problem);
  ActionResult best;
  bool have = false;
  for (int i = 0; i < static_cast<int>(problem.target.points.size()); ++i) {
    ActionResult r = minimize_single(problem, i);
    const bool better = !have || (r.converged && !best.converged) ||
                        (r.converged == best.converged && r.action < best.action);
    if (better) {
      best = std::move(r);
      have = true;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------

QuasipotentialResult quasipotential(const ModelSpec& model, const SpectralField& origin, const Target& target,
                                    const std::vector<double>& horizons, const OptimizerOptions& opt,
                                    double penalty_weight) {
  if (horizons.empty()) throw range_error("quasipotential.horizons", "need at least one horizon");
  const double dt = model.grid.dt();
  QuasipotentialResult out;
  std::vector<std::optional<ControlPath>> warm(target.points.size());
  out.value = INFINITY;
  for (double T : horizons) {
    if (!(T > 0.0)) throw range_error("quasipotential.horizons", "horizons must be positive");
    ActionProblem p;
    p.model = model;
    p.model.grid = TimeGrid(T, std::max(1, static_cast<int>(std::lround(T / dt))));
    p.x0 = origin;
    p.penalty_weight = penalty_weight;
    p.optimizer = opt;
    ActionResult best;
    bool have = false;
    for (std::size_t i = 0; i < target.points.size(); ++i) {
      p.target = Target::point(target.points[i], target.tol);
      p.warm_start.reset();
      if (warm[i]) p.warm_start = warm[i]->rescaled(p.model.grid);
      ActionResult r = minimize_single(p, 0);
      r.target_index = static_cast<int>(i);
      warm[i] = r.control;
      if (!have || (r.converged && !best.converged) || (r.converged == best.converged && r.action < best.action)) {
        best = std::move(r);
        have = true;
      }
    }
    out.all_converged = out.all_converged && best.converged;
    out.per_horizon.emplace_back(T, best.action);
    if (best.action < out.value - 1e-9) {
      out.value = best.action;
      out.best_horizon = T;
    } else if (std::abs(best.action - out.value) <= 1e-9 && T < out.best_horizon) {
      out.best_horizon = T;
    }
    out.results.push_back(std::move(best));
  }
  out.monotone_flag = true;
  for (std::size_t i = 1; i < out.per_horizon.size(); ++i)
    if (out.per_horizon[i].second > out.per_horizon[i - 1].second * (1.0 + 1e-4) + 1e-9)
      out.monotone_flag = false;
  return out;
}

std::vector<LevelSetDecision> level_set_probe(const ModelSpec& model, const SpectralField& x0, double s,
                                              const std::vector<Trajectory>& candidates, double slack,
                                              double path_tol, const OptimizerOptions& opt) {
  if (!(s >= 0.0)) throw range_error("level_set.s", "level must be nonnegative");
  std::vector<LevelSetDecision> out;
  for (const Trajectory& phi : candidates) {
    if (phi.grid.n_steps != model.grid.n_steps || phi.grid.t_end != model.grid.t_end)
      throw range_error("level_set.candidates", "candidates must live on the model grid");
    ActionProblem p;
    p.model = model;
    p.x0 = x0;
    p.target = Target::point(phi.terminal(), path_tol);
    p.track = phi;
    p.track_weight = 10.0;
    p.track_tol = path_tol;
    p.optimizer = opt;
    const ActionResult r = minimize_action(p);
    LevelSetDecision d;
    d.action_upper_bound = r.action;
    d.path_gap = r.path_gap;
    d.slack = slack;
    if (r.unreachable) d.membership = Membership::NonMember;
    else if (!r.converged) d.membership = Membership::Unknown;
    else d.membership = r.action <= s + slack ? Membership::Member : Membership::NonMember;
    out.push_back(d);
  }
  return out;
}

}  // namespace fwspde
