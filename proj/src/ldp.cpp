#include "fwspde/ldp.hpp"

#include "fwspde/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace fwspde {

std::pair<double, double> wilson_interval(std::int64_t hits, std::int64_t n, double z) {
  if (n <= 0) return {0.0, 1.0};
  const double nn = double(n);
  const double p = double(hits) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half = z / denom * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
  // the bounds are exact at the extremes; avoid rounding residue there
  const double lo = hits == 0 ? 0.0 : std::max(0.0, center - half);
  const double hi = hits == n ? 1.0 : std::min(1.0, center + half);
  return {lo, hi};
}

namespace {

void validate_eps_list(const std::vector<double>& eps, const char* field) {
  if (eps.empty()) throw range_error(field, "eps_list must not be empty");
  for (std::size_t i = 0; i < eps.size(); ++i) {
    if (!(eps[i] > 0.0) || !std::isfinite(eps[i])) throw range_error(field, "eps values must be positive");
    if (i > 0 && !(eps[i] < eps[i - 1])) throw range_error(field, "eps_list must be strictly decreasing");
  }
}

double student_t975(int dof) {
  static const double table[] = {12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228};
  if (dof < 1) return INFINITY;
  if (dof <= 10) return table[dof - 1];
  return 1.959963984540054 + 2.4 / dof;
}

SlopeFit fit_slope(const std::vector<ProbabilityEstimate>& rows) {
  std::vector<double> x, y;
  for (const auto& r : rows)
    if (!r.zero_hits) {
      x.push_back(1.0 / r.eps);
      y.push_back(std::log(r.p_hat));
    }
  SlopeFit f;
  f.n_points = static_cast<int>(x.size());
  if (x.size() < 2) return f;
  const double n = double(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
  mx /= n, my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) sxx += (x[i] - mx) * (x[i] - mx), sxy += (x[i] - mx) * (y[i] - my);
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  if (x.size() >= 3) {
    double rss = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double e = y[i] - f.intercept - f.slope * x[i];
      rss += e * e;
    }
    const int dof = static_cast<int>(x.size()) - 2;
    const double se = std::sqrt(rss / dof / sxx);
    const double t = student_t975(dof);
    f.slope_ci_lo = f.slope - t * se;
    f.slope_ci_hi = f.slope + t * se;
  }
  return f;
}

ProbabilityEstimate from_hits(double eps, std::int64_t hits, std::int64_t n, double rate) {
  ProbabilityEstimate e;
  e.eps = eps;
  e.n = n;
  e.hits = hits;
  e.p_hat = double(hits) / double(n);
  std::tie(e.ci_lo, e.ci_hi) = wilson_interval(hits, n);
  e.zero_hits = hits == 0;
  e.eps_log_p = e.zero_hits ? -INFINITY : eps * std::log(e.p_hat);
  e.margin = e.eps_log_p + rate;
  return e;
}

}  // namespace

void TubeExperiment::validate() const {
  model.validate();
  if (!(delta > 0.0)) throw range_error("ldp.delta", "delta must be positive");
  if (n_paths < 1) throw range_error("ldp.n_paths", "n_paths must be at least 1");
  validate_eps_list(eps_list, "ldp.eps_list");
  if (reference.grid.n_steps != model.grid.n_steps || reference.grid.t_end != model.grid.t_end)
    throw range_error("ldp.reference", "reference path must live on the simulation grid");
  if (!(tolerance_margin >= 0.0)) throw range_error("ldp.tolerance_margin", "must be nonnegative");
}

TubeExperiment make_tube_experiment(const ModelSpec& model, const SpectralField& x0, const ControlPath& control,
                                    double delta, std::vector<double> eps_list, std::int64_t n_paths) {
  TubeExperiment e;
  e.model = model;
  e.x0 = x0;
  e.control = control.resampled(model.grid);
  e.reference = solve_skeleton(model, x0, e.control);
  e.reference_action = action_of_control(e.control);
  e.delta = delta;
  e.eps_list = std::move(eps_list);
  e.n_paths = n_paths;
  return e;
}

ProbabilityEstimate estimate_tube_probability(const TubeExperiment& exp, double eps) {
  if (exp.n_paths < 1) throw range_error("ldp.n_paths", "n_paths must be at least 1");
  if (!(eps > 0.0)) throw range_error("ldp.eps", "eps must be positive");
  SimConfig cfg;
  cfg.eps = eps;
  cfg.grid = exp.model.grid;
  cfg.seed = exp.seed;  // common random numbers across eps
  const BatchStatistics st = batch_simulate(exp.model, exp.x0, cfg, exp.n_paths,
                                            tube_indicator_functional(exp.reference, exp.delta), nullptr,
                                            exp.threads);
  std::int64_t hits = 0;
  for (double v : st.values) hits += v > 0.5;
  return from_hits(eps, hits, exp.n_paths, exp.reference_action);
}

LdpReport ldp_lower_bound_check(const TubeExperiment& exp) {
  exp.validate();
  if (!exp.reference_converged) throw NumericalError("NotConverged", "reference action did not converge");
  for (double eps : exp.eps_list) {
    const double expected = double(exp.n_paths) * std::exp(-exp.reference_action / eps);
    if (expected < 20.0) {
      std::ostringstream os;
      os << "expected hits n exp(-I/eps) = " << expected << " < 20 at eps = " << eps
         << "; raise eps or n_paths";
      throw BudgetError(os.str());
    }
  }
  LdpReport rep;
  rep.kind = "lower";
  rep.rate = exp.reference_action;
  rep.tolerance_margin = exp.tolerance_margin;
  for (double eps : exp.eps_list) rep.rows.push_back(estimate_tube_probability(exp, eps));
  rep.slope_fit = fit_slope(rep.rows);

  double lo = INFINITY;
  const ProbabilityEstimate* smallest = nullptr;
  for (const auto& r : rep.rows)
    if (!r.zero_hits) {
      lo = std::min(lo, r.margin);
      smallest = &r;
    }
  if (!smallest) throw NumericalError("InsufficientSamples", "no tube hits at any eps");
  rep.lower_bound_margin = lo;
  rep.decision_margin = smallest->margin;
  rep.pass = rep.decision_margin >= -exp.tolerance_margin;
  rep.note = "tube measured on grid nodes; a finite eps grid cannot certify the limit";
  return rep;
}

// ---------------------------------------------------------------------------
// level-set distance

namespace {

bool linear_diagonal(const ModelSpec& m) {
  return m.drift.kind == DriftKind::None && m.noise.is_constant();
}

}  // namespace

LevelSetDistance::LevelSetDistance(const ModelSpec& model, const SpectralField& x0, double s)
    : model_(&model), s_(s), exact_(linear_diagonal(model)) {
  const TimeGrid& g = model.grid;
  const int N = g.n_steps, nn = g.n_nodes();
  flow_ = solve_skeleton(model, x0, ControlPath::zero(g, model.n_noise())).states;
  if (!exact_ || s <= 0.0) return;

  weights_ = trapezoid_weights(g);
  const Eigen::VectorXd decay = semigroup_factors(*model.basis, g.dt());
  const double c = model.noise.g_of_sq(0.0);
  const Eigen::MatrixXd W = weights_.asDiagonal();
  const int nk = std::min(model.n_noise(), model.n_modes());
  for (int k = 0; k < nk; ++k) {
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(nn, nn);
    const double gain = g.dt() * c * model.noise.q_eigenvalues[k];
    for (int n = 1; n <= N; ++n)
      for (int m = 0; m < n; ++m) L(n, m) = std::pow(decay[k], n - m) * gain;
    response_.push_back(L);
  }
  mus_.push_back(0.0);
  for (double mu = 1e-2; mu <= 1e7; mu *= 2.0) mus_.push_back(mu);
  for (double mu : mus_) {
    std::vector<Eigen::MatrixXd> per_mode;
    for (const auto& L : response_) {
      const Eigen::MatrixXd LtW = L.transpose() * W;
      const Eigen::MatrixXd H = W + mu * LtW * L;
      per_mode.push_back(H.ldlt().solve(mu * LtW));
    }
    gain_.push_back(std::move(per_mode));
  }
}

double LevelSetDistance::operator()(const Trajectory& path) const {
  const Eigen::MatrixXd r = path.states - flow_;
  auto sup_dist = [&](const Eigen::MatrixXd& d) {
    double best = 0.0;
    for (int n = 0; n < d.cols(); ++n) best = std::max(best, state_norm(*model_->basis, d.col(n)));
    return best;
  };
  double best = sup_dist(r);
  if (!exact_ || s_ <= 0.0) return best;
  const int nk = static_cast<int>(response_.size());
  for (std::size_t i = 1; i < mus_.size(); ++i) {
    std::vector<Eigen::VectorXd> u(nk);
    double energy = 0.0;
    for (int k = 0; k < nk; ++k) {
      u[k] = gain_[i][k] * r.row(k).transpose();
      energy += 0.5 * u[k].dot(weights_.cwiseProduct(u[k]));
    }
    const double scale = energy > s_ ? std::sqrt(s_ / energy) : 1.0;
    Eigen::MatrixXd d = r;
    for (int k = 0; k < nk; ++k) d.row(k) -= scale * (response_[k] * u[k]).transpose();
    best = std::min(best, sup_dist(d));
  }
  return best;
}

void UpperBoundExperiment::validate() const {
  model.validate();
  if (!(s0 >= 0.0)) throw range_error("ldp.s0", "s0 must be nonnegative");
  if (!(delta > 0.0)) throw range_error("ldp.delta", "delta must be positive");
  if (n_paths < 1) throw range_error("ldp.n_paths", "n_paths must be at least 1");
  validate_eps_list(eps_list, "ldp.eps_list");
}

LdpReport ldp_upper_bound_check(const UpperBoundExperiment& exp) {
  exp.validate();
  const LevelSetDistance dist(exp.model, exp.x0, exp.s0);
  LdpReport rep;
  rep.kind = "upper";
  rep.rate = exp.s0;
  rep.tolerance_margin = exp.tolerance_margin;
  rep.surrogate = !dist.exact_family();
  const double delta = exp.delta;
  for (double eps : exp.eps_list) {
    SimConfig cfg;
    cfg.eps = eps;
    cfg.grid = exp.model.grid;
    cfg.seed = exp.seed;
    const BatchStatistics st = batch_simulate(
        exp.model, exp.x0, cfg, exp.n_paths,
        [&](const Trajectory& t) { return dist(t) >= delta ? 1.0 : 0.0; }, nullptr, exp.threads);
    std::int64_t hits = 0;
    for (double v : st.values) hits += v > 0.5;
    rep.rows.push_back(from_hits(eps, hits, exp.n_paths, exp.s0));
  }
  rep.slope_fit = fit_slope(rep.rows);
  double hi = -INFINITY;
  for (const auto& r : rep.rows)
    if (!r.zero_hits) hi = std::max(hi, r.margin);
  if (hi == -INFINITY) {
    rep.vacuous = true;
    rep.pass = true;
    rep.note = "no path left the delta-neighbourhood of the level set; check passes vacuously";
    return rep;
  }
  rep.upper_bound_margin = hi;
  rep.decision_margin = hi;
  rep.pass = hi <= exp.tolerance_margin;
  rep.note = rep.surrogate ? "SURROGATE: distance to the uncontrolled flow replaces the level-set distance"
                           : "level-set distance bounded above by a Tikhonov control family";
  return rep;
}

// ---------------------------------------------------------------------------

SweepReport uniform_sweep(const TubeExperiment& tmpl, double radius, int n_directions) {
  if (!(radius >= 0.0)) throw range_error("sweep.radius", "radius must be nonnegative");
  if (n_directions < 0 || n_directions > tmpl.x0.size())
    throw range_error("sweep.n_directions", "must be between 0 and the number of modes");
  SweepReport out;
  out.x0s.push_back(tmpl.x0);
  if (radius > 0.0)
    for (int k = 0; k < n_directions; ++k)
      for (double sign : {1.0, -1.0}) {
        SpectralField x = tmpl.x0;
        x.coeffs[k] += sign * radius;
        out.x0s.push_back(std::move(x));
      }

  for (std::size_t i = 0; i < out.x0s.size(); ++i) {
    TubeExperiment e = make_tube_experiment(tmpl.model, out.x0s[i], tmpl.control, tmpl.delta, tmpl.eps_list,
                                            tmpl.n_paths);
    e.tolerance_margin = tmpl.tolerance_margin;
    e.threads = tmpl.threads;
    e.reference_converged = tmpl.reference_converged;
    e.seed = derive_seed(tmpl.seed, i);
    out.reports.push_back(ldp_lower_bound_check(e));
  }
  out.centered_margin = out.reports[0].decision_margin;
  out.worst_margin = out.centered_margin;
  out.pass = true;
  for (std::size_t i = 0; i < out.reports.size(); ++i) {
    const double m = out.reports[i].decision_margin;
    if (m < out.worst_margin) {
      out.worst_margin = m;
      out.worst_index = static_cast<int>(i);
    }
    if (!out.reports[i].pass && out.pass) {
      out.pass = false;
      out.failing_index = static_cast<int>(i);
    }
  }
  const double c = out.centered_margin, w = out.worst_margin;
  out.within_factor_two = c >= 0.0 ? w >= 0.5 * c : std::abs(w) <= 2.0 * std::abs(c);
  out.note = "a finite probe grid can refute uniformity over bounded sets but never confirm it";
  return out;
}

}  // namespace fwspde
