#include "fwspde/skeleton.hpp"

#include "fwspde/error.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

namespace fwspde {

// ---------------------------------------------------------------------------
// paths

Eigen::VectorXd trapezoid_weights(const TimeGrid& g) {
  Eigen::VectorXd w = Eigen::VectorXd::Constant(g.n_nodes(), g.dt());
  w[0] *= 0.5;
  w[g.n_steps] *= 0.5;
  return w;
}

ControlPath::ControlPath(TimeGrid g, Eigen::MatrixXd v) : grid(g), values(std::move(v)) {
  if (values.cols() != grid.n_nodes()) throw range_error("control", "one control value per grid node required");
  if (!values.allFinite()) throw range_error("control", "control values must be finite");
  energy = action_of_control(*this);
}

ControlPath ControlPath::zero(const TimeGrid& g, int n_noise) {
  return ControlPath(g, Eigen::MatrixXd::Zero(n_noise, g.n_nodes()));
}

ControlPath ControlPath::constant(const TimeGrid& g, const Eigen::VectorXd& value) {
  return ControlPath(g, value.replicate(1, g.n_nodes()));
}

namespace {

Eigen::VectorXd sample_linear(const ControlPath& u, double t) {
  const double dt = u.grid.dt();
  const double pos = std::clamp(t / dt, 0.0, double(u.grid.n_steps));
  const int i = std::min(static_cast<int>(pos), u.grid.n_steps - 1);
  const double f = pos - i;
  return (1.0 - f) * u.values.col(i) + f * u.values.col(i + 1);
}

}  // namespace

ControlPath ControlPath::resampled(const TimeGrid& target) const {
  if (target.n_steps == grid.n_steps && target.t_end == grid.t_end) return *this;
  Eigen::MatrixXd v(n_noise(), target.n_nodes());
  for (int i = 0; i < target.n_nodes(); ++i) v.col(i) = sample_linear(*this, target.node(i));
  return ControlPath(target, std::move(v));
}

ControlPath ControlPath::rescaled(const TimeGrid& target) const {
  Eigen::MatrixXd v(n_noise(), target.n_nodes());
  const double scale = grid.t_end / target.t_end;
  for (int i = 0; i < target.n_nodes(); ++i) v.col(i) = sample_linear(*this, target.node(i) * scale);
  return ControlPath(target, std::move(v));
}

double action_of_control(const ControlPath& u) {
  const Eigen::VectorXd w = trapezoid_weights(u.grid);
  return 0.5 * (u.values.colwise().squaredNorm().transpose().cwiseProduct(w)).sum();
}

Trajectory::Trajectory(BasisPtr b, TimeGrid g, Eigen::MatrixXd s)
    : basis(std::move(b)), grid(g), states(std::move(s)) {
  if (states.cols() != grid.n_nodes() || states.rows() != basis->n_modes())
    throw range_error("trajectory", "state matrix shape must be n_modes x n_nodes");
}

double Trajectory::sup_l2() const { return states.colwise().norm().maxCoeff(); }

double Trajectory::sup_state_norm() const {
  double s = 0.0;
  for (int i = 0; i < states.cols(); ++i) s = std::max(s, state_norm(*basis, states.col(i)));
  return s;
}

double Trajectory::sup_distance(const Trajectory& other) const {
  if (other.states.cols() != states.cols()) throw range_error("trajectory", "grids differ");
  double s = 0.0;
  for (int i = 0; i < states.cols(); ++i)
    s = std::max(s, state_norm(*basis, states.col(i) - other.states.col(i)));
  return s;
}

// ---------------------------------------------------------------------------
// cutoff

Eigen::VectorXd cutoff(const SpectralBasis& basis, const Eigen::VectorXd& x, double R) {
  if (R < 0.0) throw range_error("R", "cutoff radius must be nonnegative");
  const double n = state_norm(basis, x);
  if (n <= R) return x;
  return (R / n) * x;
}

SpectralField cutoff(const SpectralField& x, double R) {
  return SpectralField(x.basis, cutoff(*x.basis, x.coeffs, R));
}

// ---------------------------------------------------------------------------
// Picard machinery

namespace {

// Rough Lipschitz constant of x -> B(x) + G(x)u near the ball of E-radius r.
double lipschitz_estimate(const ModelSpec& model, double r, double u_sup) {
  double lip = 0.0;
  switch (model.drift.kind) {
  case DriftKind::None: break;
  case DriftKind::ReactionPolynomial: lip = model.drift.local_lipschitz(r); break;
  case DriftKind::NavierStokes: lip = 2.0 * model.basis->max_wavenumber() * r * model.basis->max_basis_sup(); break;
  }
  if (!model.noise.q_eigenvalues.empty())
    lip += model.noise.g_lipschitz() * model.noise.q_eigenvalues.front() * u_sup *
           model.basis->max_basis_sup();
  return lip;
}

int nodes_per_subinterval(const ModelSpec& model, const SolverOptions& opts, double r, double u_sup) {
  const TimeGrid& g = model.grid;
  double len = opts.subinterval_len;
  if (len <= 0.0) {
    const double lip = lipschitz_estimate(model, r, u_sup);
    len = lip > 0.0 ? 0.5 / lip : g.t_end;
  }
  len = std::clamp(len, g.dt(), g.t_end);
  return std::max(1, static_cast<int>(std::lround(len / g.dt())));
}

[[noreturn]] void picard_diverged(int node, const std::string& why) {
  throw NumericalError("PicardDiverged", "Picard iteration failed on subinterval starting at node " +
                                             std::to_string(node) + ": " + why +
                                             " (reduce cutoff radius or subinterval length)");
}

void check_options(const SolverOptions& opts) {
  if (opts.picard_tol <= 0.0) throw range_error("solver.picard_tol", "must be positive");
  if (opts.max_picard_iters <= 0) throw range_error("solver.max_picard_iters", "must be positive");
  if (opts.cutoff_radius < 0.0) throw range_error("solver.cutoff_radius", "must be nonnegative");
  if (opts.subinterval_len < 0.0) throw range_error("solver.subinterval_len", "must be nonnegative");
}

}  // namespace

Trajectory apply_M(const Trajectory& psi, const ModelSpec& model, const SolverOptions& opts) {
  check_options(opts);
  model.validate();
  const TimeGrid& g = psi.grid;
  ModelSpec m = model;
  m.grid = g;
  const int n_modes = model.n_modes();
  const double dt = g.dt();
  const Eigen::VectorXd decay = semigroup_factors(*model.basis, dt);
  if (!psi.states.allFinite()) throw range_error("psi", "psi must be bounded");

  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(n_modes, g.n_nodes());
  const int block = nodes_per_subinterval(m, opts, 2.0 * psi.sup_state_norm() + 1.0, 0.0);

  for (int a = 0; a < g.n_steps; a += block) {
    const int b = std::min(a + block, g.n_steps);
    for (int n = a + 1; n <= b; ++n) v.col(n) = v.col(a);
    double prev_change = INFINITY;
    bool done = false;
    for (int it = 0; it < opts.max_picard_iters; ++it) {
      Eigen::VectorXd acc = v.col(a);
      double change = 0.0;
      Eigen::MatrixXd next(n_modes, b - a);
      for (int n = a; n < b; ++n) {
        const Eigen::VectorXd f = drift_coeffs(model, v.col(n) + psi.states.col(n));
        acc = decay.cwiseProduct(acc + dt * f);
        next.col(n - a) = acc;
        change = std::max(change, (acc - v.col(n + 1)).norm());
      }
      v.block(0, a + 1, n_modes, b - a) = next;
      if (!std::isfinite(change)) picard_diverged(a, "non-finite iterate");
      if (change <= opts.picard_tol) {
        done = true;
        break;
      }
      if (it > 3 && change > prev_change * 4.0) picard_diverged(a, "iterates growing");
      prev_change = change;
    }
    if (!done) picard_diverged(a, "no contraction within max_picard_iters");
  }
  return Trajectory(psi.basis, g, psi.states + v);
}

namespace {

struct SkeletonAttempt {
  Eigen::MatrixXd states;
  bool cutoff_touched = false;
};

SkeletonAttempt skeleton_picard(const ModelSpec& model, const Eigen::VectorXd& x0, const ControlPath& u,
                                const SolverOptions& opts, double R) {
  const TimeGrid& g = model.grid;
  const int n_modes = model.n_modes();
  const double dt = g.dt();
  const Eigen::VectorXd decay = semigroup_factors(*model.basis, dt);
  const bool controlled = u.values.cwiseAbs().maxCoeff() > 0.0;
  const double u_sup = u.values.colwise().norm().maxCoeff();
  const int block = nodes_per_subinterval(model, opts, R + state_norm(*model.basis, x0), u_sup);

  SkeletonAttempt out;
  Eigen::MatrixXd& X = out.states;
  X.resize(n_modes, g.n_nodes());
  X.col(0) = x0;
  // Committed accumulators at the current subinterval start:
  // lin = S(t)x0, conv = unclipped int S(t-s) G(X) u ds, v = int S(t-s) B(X) ds.
  Eigen::VectorXd lin = x0;
  Eigen::VectorXd conv = Eigen::VectorXd::Zero(n_modes);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(n_modes);

  Eigen::MatrixXd next(n_modes, block + 1);
  for (int a = 0; a < g.n_steps; a += block) {
    const int b = std::min(a + block, g.n_steps);
    for (int n = a + 1; n <= b; ++n) X.col(n) = X.col(a);
    Eigen::VectorXd lin_end, conv_end, v_end;
    double prev_change = INFINITY;
    bool done = false;
    for (int it = 0; it < opts.max_picard_iters; ++it) {
      Eigen::VectorXd l = lin, c = conv, w = v;
      double change = 0.0;
      bool touched = false;
      for (int n = a; n < b; ++n) {
        const Eigen::VectorXd xn = X.col(n);
        w = decay.cwiseProduct(w + dt * drift_coeffs(model, xn));
        if (controlled) c = decay.cwiseProduct(c + dt * diffusion_coeffs(model, xn, u.values.col(n)));
        else c = decay.cwiseProduct(c);
        l = decay.cwiseProduct(l);
        Eigen::VectorXd y = c;
        if (state_norm(*model.basis, c) > R) {
          y = cutoff(*model.basis, c, R);
          touched = true;
        }
        next.col(n + 1 - a) = l + y + w;
        change = std::max(change, (next.col(n + 1 - a) - X.col(n + 1)).norm());
      }
      X.block(0, a + 1, n_modes, b - a) = next.block(0, 1, n_modes, b - a);
      lin_end = l;
      conv_end = c;
      v_end = w;
      out.cutoff_touched = out.cutoff_touched || touched;
      if (!std::isfinite(change)) picard_diverged(a, "non-finite iterate");
      if (change <= opts.picard_tol) {
        done = true;
        break;
      }
      if (it > 3 && change > prev_change * 4.0) picard_diverged(a, "iterates growing");
      prev_change = change;
    }
    if (!done) picard_diverged(a, "no contraction within max_picard_iters");
    lin = lin_end;
    conv = conv_end;
    v = v_end;
  }
  return out;
}

}  // namespace

Trajectory solve_skeleton(const ModelSpec& model, const SpectralField& x0, const ControlPath& u_in,
                          const SolverOptions& opts) {
  check_options(opts);
  model.validate();
  if (!x0.basis->same_as(*model.basis)) throw schema_error("x0", "initial condition basis mismatch");
  if (u_in.n_noise() != model.n_noise()) throw range_error("control", "control dimension must equal n_noise_modes");
  const ControlPath u = u_in.resampled(model.grid);

  double R = opts.cutoff_radius;
  if (R <= 0.0) {
    // |int S G u|_E <= sup g * lambda_1 * sup|f_j| * sqrt(n) * int |u|
    const Eigen::VectorXd w = trapezoid_weights(u.grid);
    const double u_l1 = u.values.colwise().norm().transpose().dot(w);
    const double response = model.noise.g_sup() * model.noise.q_eigenvalues.front() *
                            model.basis->max_basis_sup() * std::sqrt(double(model.n_modes())) * u_l1;
    R = 4.0 * (state_norm(x0) + response + 1.0);
  }
  SkeletonAttempt r = skeleton_picard(model, x0.coeffs, u, opts, R);
  if (r.cutoff_touched) {
    r = skeleton_picard(model, x0.coeffs, u, opts, 2.0 * R);
    if (r.cutoff_touched)
      picard_diverged(0, "control convolution reached the cutoff radius twice");
  }
  return Trajectory(model.basis, model.grid, std::move(r.states));
}

double mild_residual(const Trajectory& traj, const ModelSpec& model, const ControlPath* u_in,
                     const NoiseRecord* noise, double sqrt_eps) {
  const TimeGrid& g = traj.grid;
  const int N = g.n_steps;
  const int n_modes = model.n_modes();
  const double dt = g.dt();
  std::optional<ControlPath> u;
  if (u_in) u = u_in->resampled(g);
  if (noise && (noise->cols() != N || noise->rows() != n_modes))
    throw range_error("noise", "noise record must be n_modes x n_steps");

  // f_m = B(X_m) + G(X_m) u_m, evaluated once per node
  Eigen::MatrixXd f(n_modes, N);
  for (int m = 0; m < N; ++m) {
    Eigen::VectorXd fm = drift_coeffs(model, traj.states.col(m));
    if (u) fm += diffusion_coeffs(model, traj.states.col(m), u->values.col(m));
    f.col(m) = fm;
  }
  const Eigen::VectorXd& gam = model.basis->eigenvalues();
  Eigen::MatrixXd powers(n_modes, N + 1);  // exp(-gamma_k j dt)
  for (int k = 0; k < n_modes; ++k)
    for (int j = 0; j <= N; ++j) powers(k, j) = std::exp(-gam[k] * j * dt);
  double worst = 0.0;
  Eigen::VectorXd pred(n_modes);
  for (int n = 0; n <= N; ++n) {
    for (int k = 0; k < n_modes; ++k) {
      double acc = std::exp(-gam[k] * g.node(n)) * traj.states(k, 0);
      for (int m = 0; m < n; ++m) {
        acc += powers(k, n - m) * dt * f(k, m);
        if (noise) acc += powers(k, n - m - 1) * sqrt_eps * (*noise)(k, m);
      }
      pred[k] = acc;
    }
    worst = std::max(worst, (traj.states.col(n) - pred).norm());
  }
  return worst;
}

}  // namespace fwspde
