#include "fwspde/simulator.hpp"

#include "fwspde/error.hpp"

#include <cmath>

namespace fwspde {

void SimConfig::validate(const ModelSpec& model) const {
  if (!(eps >= 0.0) || !std::isfinite(eps)) throw range_error("sim.eps", "eps must be nonnegative");
  if (noise_truncation < 0 || noise_truncation > model.n_noise())
    throw range_error("sim.noise_truncation", "must not exceed n_noise_modes");
  if (!(blowup_factor > 0.0)) throw range_error("sim.blowup_factor", "must be positive");
}

Stepper::Stepper(const ModelSpec& model, double eps, double dt, int truncation)
    : model_(model), dt_(dt), sqrt_eps_(std::sqrt(eps)), truncation_(truncation),
      drift_free_(model.drift.kind == DriftKind::None) {
  const Eigen::VectorXd& gam = model.basis->eigenvalues();
  decay_ = (-dt * gam.array()).exp().matrix();
  conv_sd_ = ((1.0 - (-2.0 * dt * gam.array()).exp()) / (2.0 * gam.array())).sqrt().matrix();
  additive_gain_ = Eigen::VectorXd::Zero(model.n_modes());
  if (model.noise.is_constant()) {
    const double c = model.noise.g_of_sq(0.0);
    for (int j = 0; j < truncation_; ++j) additive_gain_[j] = c * model.noise.q_eigenvalues[j] * conv_sd_[j];
  }
}

void Stepper::step(Eigen::VectorXd& x, const Eigen::VectorXd* u, NormalRng& rng,
                   Eigen::VectorXd* noise_out) const {
  const int n = static_cast<int>(x.size());
  Eigen::VectorXd forcing;
  bool forced = false;
  if (!drift_free_) {
    forcing = drift_coeffs(model_, x);
    forced = true;
  }
  if (u) {
    const Eigen::VectorXd gu = diffusion_coeffs(model_, x, *u);
    if (forced) forcing += gu;
    else forcing = gu;
    forced = true;
  }
  Eigen::VectorXd noise;
  if (sqrt_eps_ > 0.0 || noise_out) {
    if (model_.noise.is_constant()) {
      noise = Eigen::VectorXd::Zero(n);
      for (int j = 0; j < truncation_; ++j) noise[j] = additive_gain_[j] * rng();
    } else {
      Eigen::VectorXd xi = Eigen::VectorXd::Zero(model_.n_noise());
      for (int j = 0; j < truncation_; ++j) xi[j] = rng();
      noise = conv_sd_.cwiseProduct(diffusion_coeffs(model_, x, xi));
    }
  }
  if (forced) x += dt_ * forcing;
  x = decay_.cwiseProduct(x);
  if (sqrt_eps_ > 0.0) x += sqrt_eps_ * noise;
  if (noise_out) *noise_out = noise;
}

PathSample simulate_controlled(const ModelSpec& model, const SpectralField& x0, const ControlPath* u_in,
                               const SimConfig& cfg) {
  model.validate();
  cfg.validate(model);
  if (!x0.basis->same_as(*model.basis)) throw schema_error("x0", "initial condition basis mismatch");
  std::optional<ControlPath> u;
  if (u_in) {
    if (u_in->n_noise() != model.n_noise()) throw range_error("control", "control dimension mismatch");
    u = u_in->resampled(cfg.grid);
  }
  const TimeGrid& g = cfg.grid;
  const Stepper stepper(model, cfg.eps, g.dt(), cfg.truncation(model));
  NormalRng rng(cfg.seed);

  PathSample out;
  Eigen::MatrixXd states(model.n_modes(), g.n_nodes());
  if (cfg.record_noise) out.noise.resize(model.n_modes(), g.n_steps);
  Eigen::VectorXd x = x0.coeffs;
  states.col(0) = x;
  const double guard = cfg.blowup_factor * (x0.coeffs.norm() + 1.0);
  Eigen::VectorXd noise;
  for (int n = 0; n < g.n_steps; ++n) {
    Eigen::VectorXd un;
    if (u) un = u->values.col(n);
    stepper.step(x, u ? &un : nullptr, rng, cfg.record_noise ? &noise : nullptr);
    if (cfg.record_noise) out.noise.col(n) = noise;
    const double nx = x.norm();
    if (!(nx <= guard))
      throw NumericalError("BlowUp", "state norm exceeded the blow-up guard at step " + std::to_string(n + 1) +
                                         " (reduce the time step)");
    states.col(n + 1) = x;
  }
  out.trajectory = Trajectory(model.basis, g, std::move(states));
  out.rng_draws_consumed = rng.draws();
  return out;
}

PathSample simulate(const ModelSpec& model, const SpectralField& x0, const SimConfig& cfg) {
  return simulate_controlled(model, x0, nullptr, cfg);
}

PathFunctional endpoint_norm_functional() {
  return [](const Trajectory& t) { return t.states.col(t.grid.n_steps).norm(); };
}

PathFunctional sup_deviation_functional(Trajectory reference) {
  return [ref = std::move(reference)](const Trajectory& t) { return t.sup_distance(ref); };
}

PathFunctional tube_indicator_functional(Trajectory reference, double delta) {
  return [ref = std::move(reference), delta](const Trajectory& t) {
    // early exit on the first node outside the tube
    for (int i = 0; i < t.states.cols(); ++i)
      if (state_norm(*t.basis, t.states.col(i) - ref.states.col(i)) >= delta) return 0.0;
    return 1.0;
  };
}

namespace {

double pairwise_sum(const double* v, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += v[i];
    return s;
  }
  const std::size_t h = n / 2;
  return pairwise_sum(v, h) + pairwise_sum(v + h, n - h);
}

}  // namespace

BatchStatistics summarize(std::vector<double> values) {
  BatchStatistics s;
  s.n = static_cast<std::int64_t>(values.size());
  if (s.n == 0) return s;
  s.mean = pairwise_sum(values.data(), values.size()) / double(s.n);
  if (s.n > 1) {
    std::vector<double> sq(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) sq[i] = (values[i] - s.mean) * (values[i] - s.mean);
    s.variance = pairwise_sum(sq.data(), sq.size()) / double(s.n - 1);
    const double half = 1.959963984540054 * std::sqrt(s.variance / double(s.n));
    s.ci_lo = s.mean - half;
    s.ci_hi = s.mean + half;
    s.ci_defined = true;
  } else {
    s.ci_lo = s.ci_hi = s.mean;
  }
  s.values = std::move(values);
  return s;
}

BatchStatistics batch_simulate(const ModelSpec& model, const SpectralField& x0, const SimConfig& cfg,
                               std::int64_t n_paths, const PathFunctional& functional,
                               const ControlPath* u, int threads) {
  if (n_paths < 1) throw range_error("n_paths", "n_paths must be at least 1");
  std::vector<double> values(static_cast<std::size_t>(n_paths));
  parallel_for(n_paths, threads, [&](std::int64_t i) {
    SimConfig c = cfg;
    c.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(i));
    c.record_noise = false;
    values[static_cast<std::size_t>(i)] = functional(simulate_controlled(model, x0, u, c).trajectory);
  });
  return summarize(std::move(values));
}

double truncation_error(const NoiseSpec& noise, int truncation) {
  const double total = noise.trace_q2();
  if (total <= 0.0) return 0.0;
  double tail = 0.0;
  for (int j = truncation; j < noise.n_noise_modes(); ++j) tail += noise.q_eigenvalues[j] * noise.q_eigenvalues[j];
  return tail / total;
}

}  // namespace fwspde
