#include "fwspde/run.hpp"

#include "fwspde/error.hpp"
#include "fwspde/ldp.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <random>
#include <unistd.h>

namespace fwspde {

namespace fs = std::filesystem;

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr))
    throw IoError("SHA-256 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const fs::path target(path);
  const fs::path tmp = target.parent_path() / ("." + target.filename().string() + ".tmp." + std::to_string(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw IoError("write to '" + tmp.string() + "' failed");
    }
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move output into place at '" + path + "'");
  }
}

std::string csv_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

std::string num(double v) { return csv_number(v); }
std::string num(std::int64_t v) { return std::to_string(v); }
std::string num(int v) { return std::to_string(v); }

/// JSON number that stays valid JSON: non-finite values become null.
Json jnum(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Json field_json(const SpectralField& f) {
  return std::vector<double>(f.coeffs.data(), f.coeffs.data() + f.coeffs.size());
}

std::string trajectory_csv(const Trajectory& t) {
  std::vector<std::vector<std::string>> rows;
  for (int n = 0; n < t.states.cols(); ++n)
    for (int k = 0; k < t.states.rows(); ++k)
      rows.push_back({num(n), num(t.grid.node(n)), num(k + 1), num(t.states(k, n))});
  return csv_table({"node", "t", "mode", "coefficient"}, rows);
}

std::string control_csv(const ControlPath& u) {
  std::vector<std::vector<std::string>> rows;
  for (int n = 0; n < u.values.cols(); ++n)
    for (int k = 0; k < u.values.rows(); ++k)
      rows.push_back({num(n), num(u.grid.node(n)), num(k + 1), num(u.values(k, n))});
  return csv_table({"node", "t", "noise_mode", "value"}, rows);
}

Json action_json(const ActionResult& r) {
  return {{"action", r.action},
          {"terminal_gap", r.terminal_gap},
          {"path_gap", r.path_gap},
          {"converged", r.converged},
          {"unreachable", r.unreachable},
          {"iterations", r.iterations},
          {"stages", r.stages},
          {"final_penalty", r.final_penalty},
          {"gradient_norm", r.gradient_norm},
          {"target_index", r.target_index},
          {"terminal_state", field_json(r.terminal_state)}};
}

Json ldp_json(const LdpReport& r) {
  Json rows = Json::array();
  for (const auto& e : r.rows)
    rows.push_back({{"eps", e.eps},
                    {"n", e.n},
                    {"hits", e.hits},
                    {"p_hat", e.p_hat},
                    {"ci_lo", e.ci_lo},
                    {"ci_hi", e.ci_hi},
                    {"eps_log_p", jnum(e.eps_log_p)},
                    {"margin", jnum(e.margin)},
                    {"zero_hits", e.zero_hits}});
  return {{"kind", r.kind},
          {"rows", rows},
          {"rate", r.rate},
          {"slope_fit",
           {{"slope", r.slope_fit.slope},
            {"intercept", r.slope_fit.intercept},
            {"slope_ci_lo", jnum(r.slope_fit.slope_ci_lo)},
            {"slope_ci_hi", jnum(r.slope_fit.slope_ci_hi)},
            {"n_points", r.slope_fit.n_points}}},
          {"lower_bound_margin", jnum(r.lower_bound_margin)},
          {"upper_bound_margin", jnum(r.upper_bound_margin)},
          {"decision_margin", jnum(r.decision_margin)},
          {"tolerance_margin", r.tolerance_margin},
          {"pass", r.pass},
          {"vacuous", r.vacuous},
          {"surrogate", r.surrogate},
          {"note", r.note}};
}

std::string ldp_csv(const LdpReport& r) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& e : r.rows)
    rows.push_back({num(e.eps), num(e.n), num(e.hits), num(e.p_hat), num(e.ci_lo), num(e.ci_hi), num(e.eps_log_p),
                    num(e.margin)});
  return csv_table({"eps", "n", "hits", "p_hat", "ci_lo", "ci_hi", "eps_log_p", "margin"}, rows);
}

Json exit_json(const ExitScalingReport& r) {
  Json rows = Json::array();
  for (const auto& e : r.rows)
    rows.push_back({{"eps", e.eps},
                    {"n", e.n},
                    {"n_censored", e.n_censored},
                    {"mean_tau", e.mean_tau},
                    {"mean_tau_uncensored", jnum(e.mean_tau_uncensored)},
                    {"ci_lo", e.ci_lo},
                    {"ci_hi", e.ci_hi},
                    {"median_tau", e.median_tau},
                    {"eps_log_mean_tau", jnum(e.eps_log_mean)},
                    {"window_prob", e.window_prob},
                    {"window_ci_lo", e.window_ci_lo},
                    {"window_ci_hi", e.window_ci_hi},
                    {"mean_overshoot", jnum(e.mean_overshoot)},
                    {"all_censored", e.all_censored}});
  return {{"rows", rows},
          {"V_ref", r.v_ref},
          {"eta", r.eta},
          {"extrapolated_limit", jnum(r.extrapolated_limit)},
          {"fit_slope", r.fit_slope},
          {"strictly_increasing", r.strictly_increasing},
          {"excluded_eps", r.excluded_eps},
          {"note", "mean_tau counts censored samples at their censoring time and is then a lower bound"}};
}

/// Deterministic per-node moments: fixed 1024-path blocks, merged in block order.
struct Moments {
  Eigen::MatrixXd mean, m2;
  double count = 0.0;

  void add(const Eigen::MatrixXd& x) {
    count += 1.0;
    const Eigen::MatrixXd d = x - mean;
    mean += d / count;
    m2 += d.cwiseProduct(x - mean);
  }
  void merge(const Moments& o) {
    if (o.count == 0.0) return;
    const double n = count + o.count;
    const Eigen::MatrixXd d = o.mean - mean;
    mean += d * (o.count / n);
    m2 += o.m2 + d.cwiseProduct(d) * (count * o.count / n);
    count = n;
  }
};

class Outputs {
public:
  explicit Outputs(std::string dir) : dir_(std::move(dir)) {}
  void write(const std::string& name, const std::string& content) {
    write_file_atomic((fs::path(dir_) / name).string(), content);
    files_.push_back({name, sha256_hex(content), content.size()});
  }
  void write_json(const std::string& name, const Json& j) { write(name, j.dump(2) + "\n"); }
  std::vector<OutputFile> files() const { return files_; }

private:
  std::string dir_;
  std::vector<OutputFile> files_;
};

double origin_quasipotential(const BuiltModel& m, const ExitDomain& dom, const std::vector<double>& horizons,
                             const Json& v_ref) {
  if (!v_ref.is_null()) return v_ref.get<double>();
  const Target t = Target::ball_boundary(dom.center, dom.radius, 0, dom.norm == BallNorm::Sup);
  return quasipotential(m.model, dom.center, t, horizons).value;
}

ExitProblem exit_problem(const ExperimentConfig& c, const BuiltModel& m, int threads) {
  const Json& b = c.block;
  ExitProblem p;
  p.model = m.model;
  p.domain = build_domain(b.at("domain"), m);
  p.equilibrium = p.domain.center;
  p.x0 = m.x0;
  p.eps_list = b.at("eps_list").get<std::vector<double>>();
  p.n_paths = b.at("n_paths");
  p.max_steps = b.at("max_steps");
  p.eta = b.at("eta");
  p.seed = c.master_seed;
  p.threads = threads;
  p.v_ref = origin_quasipotential(m, p.domain, b.at("horizons").get<std::vector<double>>(), b.at("v_ref"));
  return p;
}

void run_simulate(const ExperimentConfig& c, const BuiltModel& m, int threads, Outputs& out) {
  const std::int64_t n_paths = c.block.at("n_paths");
  const bool write_paths = c.block.at("write_paths");
  const int nk = m.model.n_modes(), nn = m.model.grid.n_nodes();
  constexpr std::int64_t kBlock = 1024;
  const std::int64_t n_blocks = (n_paths + kBlock - 1) / kBlock;
  const std::int64_t n_checked = std::min<std::int64_t>(n_paths, 10);

  std::vector<Moments> blocks(static_cast<std::size_t>(n_blocks));
  std::vector<double> endpoint(static_cast<std::size_t>(n_paths)), residual(static_cast<std::size_t>(n_checked));
  std::vector<std::int64_t> draws(static_cast<std::size_t>(n_paths));
  std::vector<Eigen::MatrixXd> paths(write_paths ? static_cast<std::size_t>(n_paths) : 0);
  const double sqrt_eps = std::sqrt(m.sim.eps);

  parallel_for(n_blocks, threads, [&](std::int64_t b) {
    Moments& mom = blocks[static_cast<std::size_t>(b)];
    mom.mean = Eigen::MatrixXd::Zero(nk, nn);
    mom.m2 = Eigen::MatrixXd::Zero(nk, nn);
    for (std::int64_t i = b * kBlock; i < std::min(n_paths, (b + 1) * kBlock); ++i) {
      SimConfig cfg = m.sim;
      cfg.seed = derive_seed(c.master_seed, static_cast<std::uint64_t>(i));
      cfg.record_noise = i < n_checked;
      const PathSample s = simulate(m.model, m.x0, cfg);
      mom.add(s.trajectory.states);
      const auto idx = static_cast<std::size_t>(i);
      endpoint[idx] = s.trajectory.states.col(nn - 1).norm();
      draws[idx] = s.rng_draws_consumed;
      if (i < n_checked) residual[idx] = mild_residual(s.trajectory, m.model, nullptr, &s.noise, sqrt_eps);
      if (write_paths) paths[idx] = s.trajectory.states;
    }
  });
  Moments total = blocks[0];
  for (std::size_t b = 1; b < blocks.size(); ++b) total.merge(blocks[b]);

  std::vector<std::vector<std::string>> rows;
  for (int n = 0; n < nn; ++n)
    for (int k = 0; k < nk; ++k) {
      const double var = total.count > 1 ? total.m2(k, n) / (total.count - 1) : 0.0;
      rows.push_back({num(n), num(m.model.grid.node(n)), num(k + 1), num(total.mean(k, n)), num(var), num(n_paths)});
    }
  out.write("moments.csv", csv_table({"node", "t", "mode", "mean", "variance", "n"}, rows));
  if (write_paths) {
    std::string s = "path,node,t,mode,coefficient\n";
    for (std::int64_t i = 0; i < n_paths; ++i)
      for (int n = 0; n < nn; ++n)
        for (int k = 0; k < nk; ++k)
          s += num(i) + "," + num(n) + "," + num(m.model.grid.node(n)) + "," + num(k + 1) + "," +
               num(paths[static_cast<std::size_t>(i)](k, n)) + "\n";
    out.write("paths.csv", s);
  }
  const BatchStatistics st = summarize(endpoint);
  std::int64_t total_draws = 0;
  for (auto d : draws) total_draws += d;
  double max_res = 0.0;
  for (double r : residual) max_res = std::max(max_res, r);
  out.write_json("summary.json", {{"n_paths", n_paths},
                                  {"eps", m.sim.eps},
                                  {"endpoint_norm",
                                   {{"mean", st.mean},
                                    {"variance", st.variance},
                                    {"ci_lo", st.ci_lo},
                                    {"ci_hi", st.ci_hi},
                                    {"ci_defined", st.ci_defined}}},
                                  {"max_mild_residual", max_res},
                                  {"mild_residual_paths", n_checked},
                                  {"rng_draws", total_draws}});
}

void run_command(const ExperimentConfig& c, const BuiltModel& m, int threads, Outputs& out) {
  const Json& b = c.block;
  const std::string& cmd = c.command;
  if (cmd == "simulate") {
    run_simulate(c, m, threads, out);
  } else if (cmd == "skeleton") {
    const ControlPath u = build_control(b.at("control"), m.model, "skeleton.control");
    const Trajectory t = solve_skeleton(m.model, m.x0, u);
    out.write("trajectory.csv", trajectory_csv(t));
    out.write_json("skeleton.json", {{"action", u.energy},
                                     {"mild_residual", mild_residual(t, m.model, &u)},
                                     {"sup_state_norm", t.sup_state_norm()},
                                     {"terminal_state", field_json(t.terminal())}});
  } else if (cmd == "action") {
    ActionProblem p;
    p.model = m.model;
    p.x0 = m.x0;
    p.target = build_target(b.at("target"), m, "action.target");
    p.penalty_weight = b.at("optimizer").at("penalty_weight");
    p.optimizer = build_optimizer(b.at("optimizer"));
    const ActionResult r = minimize_action(p);
    out.write("control.csv", control_csv(r.control));
    out.write("trajectory.csv", trajectory_csv(r.trajectory));
    out.write_json("action.json", action_json(r));
  } else if (cmd == "quasipotential") {
    const Target t = build_target(b.at("target"), m, "quasipotential.target");
    const QuasipotentialResult q =
        quasipotential(m.model, m.x0, t, b.at("horizons").get<std::vector<double>>(),
                       build_optimizer(b.at("optimizer")), b.at("optimizer").at("penalty_weight"));
    std::vector<std::vector<std::string>> rows;
    Json per = Json::array();
    for (std::size_t i = 0; i < q.per_horizon.size(); ++i) {
      rows.push_back({num(q.per_horizon[i].first), num(q.per_horizon[i].second),
                      q.results[i].converged ? "true" : "false"});
      per.push_back({{"T", q.per_horizon[i].first}, {"action", q.per_horizon[i].second},
                     {"converged", q.results[i].converged}});
    }
    out.write("quasipotential.csv", csv_table({"T", "action", "converged"}, rows));
    out.write_json("quasipotential.json", {{"value", q.value},
                                           {"best_horizon", q.best_horizon},
                                           {"per_horizon", per},
                                           {"monotone_flag", q.monotone_flag},
                                           {"all_converged", q.all_converged}});
  } else if (cmd == "ldp-lower") {
    TubeExperiment e = make_tube_experiment(m.model, m.x0, build_control(b.at("control"), m.model, "ldp-lower.control"),
                                            b.at("delta"), b.at("eps_list").get<std::vector<double>>(),
                                            b.at("n_paths"));
    e.tolerance_margin = b.at("tolerance_margin");
    e.seed = c.master_seed;
    e.threads = threads;
    const LdpReport r = ldp_lower_bound_check(e);
    out.write("ldp_lower.csv", ldp_csv(r));
    out.write_json("ldp_lower.json", ldp_json(r));
  } else if (cmd == "ldp-upper") {
    UpperBoundExperiment e;
    e.model = m.model;
    e.x0 = m.x0;
    e.s0 = b.at("s0");
    e.delta = b.at("delta");
    e.eps_list = b.at("eps_list").get<std::vector<double>>();
    e.n_paths = b.at("n_paths");
    e.tolerance_margin = b.at("tolerance_margin");
    e.seed = c.master_seed;
    e.threads = threads;
    const LdpReport r = ldp_upper_bound_check(e);
    out.write("ldp_upper.csv", ldp_csv(r));
    out.write_json("ldp_upper.json", ldp_json(r));
  } else if (cmd == "sweep") {
    TubeExperiment e = make_tube_experiment(m.model, m.x0, build_control(b.at("control"), m.model, "sweep.control"),
                                            b.at("delta"), b.at("eps_list").get<std::vector<double>>(),
                                            b.at("n_paths"));
    e.tolerance_margin = b.at("tolerance_margin");
    e.seed = c.master_seed;
    e.threads = threads;
    const SweepReport s = uniform_sweep(e, b.at("radius"), b.at("n_directions"));
    std::vector<std::vector<std::string>> rows;
    Json reports = Json::array();
    for (std::size_t i = 0; i < s.reports.size(); ++i) {
      for (const auto& r : s.reports[i].rows)
        rows.push_back({num(static_cast<int>(i)), num(r.eps), num(r.p_hat), num(r.ci_lo), num(r.ci_hi),
                        num(r.eps_log_p), num(r.margin)});
      Json j = ldp_json(s.reports[i]);
      j["x0"] = field_json(s.x0s[i]);
      reports.push_back(j);
    }
    out.write("sweep.csv", csv_table({"x0_index", "eps", "p_hat", "ci_lo", "ci_hi", "eps_log_p", "margin"}, rows));
    out.write_json("sweep.json", {{"reports", reports},
                                  {"worst_index", s.worst_index},
                                  {"worst_margin", s.worst_margin},
                                  {"centered_margin", s.centered_margin},
                                  {"within_factor_two", s.within_factor_two},
                                  {"pass", s.pass},
                                  {"failing_index", s.failing_index},
                                  {"note", s.note}});
  } else if (cmd == "exit-scaling") {
    const ExitProblem p = exit_problem(c, m, threads);
    const ExitScalingReport r = exit_scaling(p);
    const Json j = exit_json(r);
    out.write("exit_scaling.csv", export_plotdata(j, "exit_scaling"));
    std::vector<std::string> header{"eps", "path", "seed", "tau", "censored"};
    for (int k = 0; k < m.model.n_modes(); ++k) header.push_back("x" + std::to_string(k + 1));
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < r.samples.size(); ++i) {
      const auto path = static_cast<std::int64_t>(i % static_cast<std::size_t>(p.n_paths));
      const auto& s = r.samples[i];
      std::vector<std::string> row{num(p.eps_list[i / static_cast<std::size_t>(p.n_paths)]), num(path),
                                   std::to_string(derive_seed(p.seed, static_cast<std::uint64_t>(path))),
                                   num(s.tau), s.censored ? "true" : "false"};
      for (int k = 0; k < m.model.n_modes(); ++k) row.push_back(num(s.exit_point.coeffs[k]));
      rows.push_back(std::move(row));
    }
    out.write("exit_samples.csv", csv_table(header, rows));
    out.write_json("exit_scaling.json", j);
  } else if (cmd == "exit-place") {
    const ExitProblem p = exit_problem(c, m, threads);
    const auto rows = exit_place_histogram(p, axis_cells(m.model.n_modes(), b.at("n_axes")));
    Json jr = Json::array();
    for (const auto& r : rows)
      jr.push_back({{"eps", r.eps}, {"cell", r.cell}, {"count", r.count}, {"n_exited", r.n_exited},
                    {"frequency", r.frequency}, {"ci_lo", r.ci_lo}, {"ci_hi", r.ci_hi}});
    const Json j{{"rows", jr}, {"V_ref", p.v_ref}};
    out.write("exit_place.csv", export_plotdata(j, "exit_place"));
    out.write_json("exit_place.json", j);
  } else if (cmd == "verify") {
    Json checks = Json::object();
    const double tol = b.at("mild_tol");
    const Trajectory flow = solve_skeleton(m.model, m.x0, ControlPath::zero(m.model.grid, m.model.n_noise()));
    const double r_skel = mild_residual(flow, m.model);
    checks["skeleton_mild_residual"] = {{"value", r_skel}, {"pass", r_skel <= tol}};
    SimConfig cfg = m.sim;
    cfg.seed = c.master_seed;
    cfg.record_noise = true;
    const PathSample s = simulate(m.model, m.x0, cfg);
    const double r_sim = mild_residual(s.trajectory, m.model, nullptr, &s.noise, std::sqrt(cfg.eps));
    checks["simulator_mild_residual"] = {{"value", r_sim}, {"pass", r_sim <= tol}};
    if (m.model.basis->kind() == BasisKind::FourierTorus2dDivFree) {
      std::mt19937_64 gen(c.master_seed);
      std::normal_distribution<double> nd;
      auto random_field = [&] {
        Eigen::VectorXd v(m.model.n_modes());
        for (auto& x : v) x = nd(gen);
        return SpectralField(m.model.basis, v);
      };
      double worst = 0.0, worst_leray = 0.0;
      for (int i = 0; i < b.at("n_random").get<int>(); ++i) {
        const SpectralField u = random_field(), v = random_field();
        worst = std::max(worst, std::abs(ns_trilinear(u, v, v)));
        const SpectralField p1 = leray_project(to_raw(v));
        worst_leray = std::max(worst_leray, (p1.coeffs - v.coeffs).norm());
      }
      checks["trilinear_antisymmetry"] = {{"value", worst}, {"pass", worst <= 1e-9}};
      checks["leray_idempotent"] = {{"value", worst_leray}, {"pass", worst_leray <= 1e-12}};
    }
    {
      const double radius = 1.0;
      const ExitDomain dom{m.x0, radius, BallNorm::L2};
      std::vector<SpectralField> probes{m.x0};
      for (int k = 0; k < m.model.n_modes(); ++k)
        for (double sgn : {1.0, -1.0}) {
          SpectralField x = m.x0;
          x.coeffs[k] += sgn * b.at("probe_radius").get<double>() * radius;
          probes.push_back(x);
        }
      const AttractionReport a = verify_attraction(m.model, dom, m.x0, probes, b.at("horizon"), b.at("rho"));
      checks["attraction"] = {{"equilibrium_residual", a.equilibrium_residual},
                              {"violations", a.violations},
                              {"probes", static_cast<int>(a.probes.size())}};
    }
    bool pass = true;
    for (auto it = checks.begin(); it != checks.end(); ++it)
      if (it->contains("pass")) pass = pass && (*it)["pass"].get<bool>();
    out.write_json("verify.json", {{"checks", checks}, {"pass", pass}});
  }
}

}  // namespace

std::string csv_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::string s;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) s += ',';
      s += csv_cell(cells[i]);
    }
    s += '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return s;
}

Json RunManifest::to_json() const {
  Json f = Json::array();
  for (const auto& o : files) f.push_back({{"name", o.name}, {"sha256", o.sha256}, {"bytes", o.bytes}});
  return {{"config_hash", config_hash},
          {"code_version", code_version},
          {"started_at", started_at},
          {"finished_at", finished_at},
          {"seeds", {{"master_seed", master_seed}, {"rule", seed_rule}}},
          {"threads", threads},
          {"files", f}};
}

RunManifest run(const ExperimentConfig& config, int threads) {
  if (threads <= 0) threads = default_threads();
  RunManifest man;
  man.started_at = utc_now();
  const std::string text = emit_config(config);
  man.config_hash = sha256_hex(text);
  man.code_version = FWSPDE_VERSION;
  man.master_seed = config.master_seed;
  man.seed_rule = "stream i uses splitmix64(master_seed ^ splitmix64(i)) with mt19937_64";
  man.threads = threads;

  std::error_code ec;
  fs::create_directories(config.output_dir, ec);
  if (ec || !fs::is_directory(config.output_dir))
    throw IoError("cannot create output directory '" + config.output_dir + "'");

  const BuiltModel m = build_model(config.model);
  Outputs out(config.output_dir);
  write_file_atomic((fs::path(config.output_dir) / "config.json").string(), text);
  run_command(config, m, threads, out);
  man.files = out.files();
  man.finished_at = utc_now();
  write_file_atomic((fs::path(config.output_dir) / "manifest.json").string(), man.to_json().dump(2) + "\n");
  return man;
}

std::string export_plotdata(const Json& report, const std::string& kind) {
  const Json rows = report.contains("rows") ? report.at("rows") : Json::array();
  auto cell = [](const Json& row, const char* key, bool neg_inf_if_null = false) -> std::string {
    if (!row.contains(key) || row.at(key).is_null()) return neg_inf_if_null ? "-inf" : "nan";
    const Json& v = row.at(key);
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
    return csv_number(v.get<double>());
  };
  std::vector<std::vector<std::string>> out;
  if (kind == "ldp") {
    for (const auto& r : rows) out.push_back({cell(r, "eps"), cell(r, "eps_log_p", true), cell(r, "margin", true)});
    return csv_table({"eps", "eps_log_p", "margin"}, out);
  }
  if (kind == "exit_scaling") {
    const std::string v = report.contains("V_ref") ? csv_number(report.at("V_ref").get<double>()) : "nan";
    for (const auto& r : rows)
      out.push_back({cell(r, "eps"), cell(r, "eps_log_mean_tau"), v, cell(r, "mean_tau"), cell(r, "n_censored")});
    return csv_table({"eps", "eps_log_mean_tau", "V_ref", "mean_tau", "n_censored"}, out);
  }
  if (kind == "quasipotential") {
    const Json per = report.contains("per_horizon") ? report.at("per_horizon") : Json::array();
    for (const auto& r : per) out.push_back({cell(r, "T"), cell(r, "action"), cell(r, "converged")});
    return csv_table({"T", "action", "converged"}, out);
  }
  if (kind == "exit_place") {
    for (const auto& r : rows)
      out.push_back({cell(r, "eps"), cell(r, "cell"), cell(r, "count"), cell(r, "frequency"), cell(r, "ci_lo"),
                     cell(r, "ci_hi")});
    return csv_table({"eps", "cell", "count", "frequency", "ci_lo", "ci_hi"}, out);
  }
  throw ValidationError("UnknownKind", "kind", "unknown plot kind '" + kind +
                                                   "' (expected ldp, exit_scaling, quasipotential, exit_place)");
}

Json error_report(const std::exception& e) {
  Json j{{"message", e.what()}};
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    j["error"] = err->code();
    j["exit_code"] = err->exit_code();
    if (const auto* v = dynamic_cast<const ValidationError*>(err)) j["field"] = v->field();
  } else {
    j["error"] = "InternalError";
    j["exit_code"] = 1;
  }
  return j;
}

}  // namespace fwspde
