#include "fwspde/config.hpp"

#include "fwspde/error.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace fwspde {

const std::vector<std::string>& valid_commands() {
  static const std::vector<std::string> cmds{"simulate",   "skeleton", "action", "quasipotential",
                                             "ldp-lower",  "ldp-upper", "sweep", "exit-scaling",
                                             "exit-place", "verify"};
  return cmds;
}

namespace {

std::string join(const std::string& a, const std::string& b) { return a.empty() ? b : a + "." + b; }

/// Reads one JSON object, writing the normalized copy into `out` and
/// rejecting keys nobody asked for.
class Reader {
public:
  Reader(const Json& in, std::string path) : in_(in), path_(std::move(path)), out(Json::object()) {
    if (!in_.is_null() && !in_.is_object()) throw schema_error(path_, "expected an object");
  }

  bool has(const std::string& key) const { return in_.is_object() && in_.contains(key) && !in_.at(key).is_null(); }
  std::string field(const std::string& key) const { return join(path_, key); }

  double num(const std::string& key, std::optional<double> def, const std::function<bool(double)>& ok,
             const char* constraint) {
    seen_.insert(key);
    double v;
    if (!has(key)) {
      if (!def) throw schema_error(field(key), "required field missing");
      v = *def;
    } else {
      const Json& j = in_.at(key);
      if (!j.is_number()) throw schema_error(field(key), "expected a number");
      v = j.get<double>();
    }
    if (!std::isfinite(v) || !ok(v)) throw range_error(field(key), std::string("must be ") + constraint);
    out[key] = v;
    return v;
  }

  std::int64_t integer(const std::string& key, std::optional<std::int64_t> def, std::int64_t lo, std::int64_t hi) {
    seen_.insert(key);
    std::int64_t v;
    if (!has(key)) {
      if (!def) throw schema_error(field(key), "required field missing");
      v = *def;
    } else {
      const Json& j = in_.at(key);
      if (!j.is_number_integer()) throw schema_error(field(key), "expected an integer");
      v = j.get<std::int64_t>();
    }
    if (v < lo || v > hi)
      throw range_error(field(key), "must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    out[key] = v;
    return v;
  }

  std::string choice(const std::string& key, std::optional<std::string> def, const std::vector<std::string>& allowed) {
    seen_.insert(key);
    std::string v;
    if (!has(key)) {
      if (!def) throw schema_error(field(key), "required field missing");
      v = *def;
    } else {
      if (!in_.at(key).is_string()) throw schema_error(field(key), "expected a string");
      v = in_.at(key).get<std::string>();
    }
    bool found = false;
    std::string list;
    for (const auto& a : allowed) {
      found = found || a == v;
      list += (list.empty() ? "" : ", ") + a;
    }
    if (!found) throw schema_error(field(key), "'" + v + "' is not one of: " + list);
    out[key] = v;
    return v;
  }

  std::vector<double> vec(const std::string& key, std::optional<std::vector<double>> def, int size,
                          const std::function<bool(double)>& ok, const char* constraint) {
    seen_.insert(key);
    std::vector<double> v;
    if (!has(key)) {
      if (!def) throw schema_error(field(key), "required field missing");
      v = *def;
    } else {
      const Json& j = in_.at(key);
      if (!j.is_array()) throw schema_error(field(key), "expected an array of numbers");
      for (const auto& e : j) {
        if (!e.is_number()) throw schema_error(field(key), "expected an array of numbers");
        v.push_back(e.get<double>());
      }
    }
    if (size >= 0 && static_cast<int>(v.size()) != size)
      throw range_error(field(key), "expected " + std::to_string(size) + " entries");
    for (double x : v)
      if (!std::isfinite(x) || !ok(x)) throw range_error(field(key), std::string("entries must be ") + constraint);
    out[key] = v;
    return v;
  }

  const Json& sub(const std::string& key) {
    seen_.insert(key);
    static const Json null_json;
    return has(key) ? in_.at(key) : null_json;
  }
  void put(const std::string& key, Json v) {
    seen_.insert(key);
    out[key] = std::move(v);
  }
  void mark(const std::string& key) { seen_.insert(key); }

  void finish() const {
    if (!in_.is_object()) return;
    for (auto it = in_.begin(); it != in_.end(); ++it)
      if (!seen_.count(it.key())) throw schema_error(field(it.key()), "unknown field");
  }

private:
  const Json& in_;
  std::string path_;
  std::set<std::string> seen_;

public:
  Json out;
};

const auto any = [](double) { return true; };
const auto positive = [](double v) { return v > 0.0; };
const auto nonneg = [](double v) { return v >= 0.0; };

int basis_modes(const Json& basis) {
  if (basis.at("kind") == "dirichlet_interval") return basis.at("n_modes").get<int>();
  const int K = basis.at("max_wavenumber").get<int>();
  return (2 * K + 1) * (2 * K + 1) - 1;
}

Json normalize_model(const Json& in) {
  Reader r(in, "model");
  {
    Reader b(r.sub("basis"), "model.basis");
    const std::string kind = b.choice("kind", "dirichlet_interval", {"dirichlet_interval", "fourier_torus"});
    if (kind == "dirichlet_interval") {
      b.integer("n_modes", 1, 1, 4096);
      b.num("length", M_PI, positive, "positive");
      b.integer("n_points", 0, 0, 1 << 20);
    } else {
      b.integer("max_wavenumber", 2, 1, 32);
      b.integer("grid_side", 0, 0, 1024);
    }
    b.finish();
    r.put("basis", b.out);
  }
  const int n = basis_modes(r.out["basis"]);
  {
    Reader d(r.sub("drift"), "model.drift");
    const std::string kind = d.choice("kind", "none", {"none", "reaction", "navier_stokes"});
    if (kind == "reaction") d.vec("coeffs", std::nullopt, -1, any, "finite");
    d.finish();
    r.put("drift", d.out);
  }
  {
    Reader q(r.sub("noise"), "model.noise");
    if (q.has("q_eigenvalues")) {
      q.vec("q_eigenvalues", std::nullopt, -1, nonneg, "nonnegative");
      q.num("decay", 0.0, nonneg, "nonnegative");
      if (q.has("lambda1") || q.has("n_modes"))
        throw schema_error("model.noise", "give either q_eigenvalues or lambda1/decay/n_modes");
    } else {
      Reader tmp(r.sub("noise"), "model.noise");
      const double l1 = tmp.num("lambda1", 1.0, positive, "positive");
      const double decay = tmp.num("decay", 0.0, nonneg, "nonnegative");
      const auto nq = tmp.integer("n_modes", n, 1, n);
      q.mark("lambda1"), q.mark("n_modes");
      std::vector<double> lam;
      for (int j = 1; j <= nq; ++j) lam.push_back(l1 * std::pow(double(j), -decay));
      q.put("q_eigenvalues", lam);
      q.put("decay", decay);
    }
    {
      Reader g(q.sub("g"), "model.noise.g");
      g.choice("kind", "constant", {"constant", "bounded_rational"});
      g.num("c", 1.0, positive, "positive");
      g.finish();
      q.put("g", g.out);
    }
    q.finish();
    r.put("noise", q.out);
  }
  {
    Reader g(r.sub("grid"), "model.grid");
    g.num("t_end", 1.0, positive, "positive");
    g.integer("n_steps", 100, 1, 100'000'000);
    g.finish();
    r.put("grid", g.out);
  }
  r.vec("x0", std::vector<double>(n, 0.0), n, any, "finite");
  {
    Reader s(r.sub("sim"), "model.sim");
    s.num("eps", 0.1, nonneg, "nonnegative");
    const int nq = static_cast<int>(r.out["noise"]["q_eigenvalues"].size());
    s.integer("noise_truncation", 0, 0, nq);
    s.num("blowup_factor", 1e3, positive, "positive");
    s.finish();
    r.put("sim", s.out);
  }
  r.finish();
  return r.out;
}

std::vector<double> eps_list(Reader& r, std::vector<double> def) {
  const auto v = r.vec("eps_list", def, -1, positive, "positive");
  if (v.empty()) throw range_error(r.field("eps_list"), "must not be empty");
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] < v[i - 1])) throw range_error(r.field("eps_list"), "must be strictly decreasing");
  return v;
}

Json normalize_control(const Json& in, const std::string& path, int n_noise) {
  Reader c(in, path);
  const std::string kind = c.choice("kind", "zero", {"zero", "constant"});
  if (kind == "constant") c.vec("value", std::nullopt, n_noise, any, "finite");
  c.finish();
  return c.out;
}

Json normalize_target(const Json& in, const std::string& path, int n, bool required) {
  if (required && in.is_null()) throw schema_error(path, "required field missing");
  Reader t(in, path);
  const std::string kind = t.choice("kind", "ball", {"point", "ball"});
  if (kind == "point") {
    t.vec("y", std::nullopt, n, any, "finite");
  } else {
    t.num("radius", 1.0, positive, "positive");
    t.choice("norm", "l2", {"l2", "sup"});
    t.integer("n_directions", 0, 0, n);
  }
  t.num("tol", 1e-3, positive, "positive");
  t.finish();
  return t.out;
}

Json normalize_optimizer(const Json& in, const std::string& path) {
  Reader o(in, path);
  o.integer("max_iterations", 400, 1, 1'000'000);
  o.num("grad_tol", 1e-7, positive, "positive");
  o.integer("memory", 12, 1, 100);
  o.integer("max_stages", 40, 1, 200);
  o.num("penalty_weight", 10.0, positive, "positive");
  o.num("action_ceiling", 1e6, positive, "positive");
  o.choice("gradient", "auto", {"auto", "adjoint", "finite_difference"});
  o.finish();
  return o.out;
}

Json normalize_domain(const Json& in, const std::string& path, const std::vector<double>& x0) {
  Reader d(in, path);
  d.num("radius", 1.0, positive, "positive");
  d.choice("norm", "l2", {"l2", "sup"});
  d.vec("center", x0, static_cast<int>(x0.size()), any, "finite");
  d.finish();
  return d.out;
}

Json normalize_block(const std::string& cmd, const Json& in, const Json& model) {
  const std::string path = cmd;
  Reader r(in, path);
  const int n = basis_modes(model["basis"]);
  const int nq = static_cast<int>(model["noise"]["q_eigenvalues"].size());
  const std::vector<double> x0 = model["x0"].get<std::vector<double>>();
  const auto n_paths = [&](std::int64_t def) { r.integer("n_paths", def, 1, 1'000'000'000); };

  if (cmd == "simulate") {
    n_paths(10);
    r.put("write_paths", r.has("write_paths") ? in.at("write_paths") : Json(true));
    if (!r.out["write_paths"].is_boolean()) throw schema_error(r.field("write_paths"), "expected a boolean");
  } else if (cmd == "skeleton") {
    r.put("control", normalize_control(r.sub("control"), join(path, "control"), nq));
  } else if (cmd == "action") {
    r.put("target", normalize_target(r.sub("target"), join(path, "target"), n, true));
    r.put("optimizer", normalize_optimizer(r.sub("optimizer"), join(path, "optimizer")));
  } else if (cmd == "quasipotential") {
    r.put("target", normalize_target(r.sub("target"), join(path, "target"), n, false));
    r.vec("horizons", std::vector<double>{2, 4, 8, 16}, -1, positive, "positive");
    if (r.out["horizons"].empty()) throw range_error(r.field("horizons"), "must not be empty");
    r.put("optimizer", normalize_optimizer(r.sub("optimizer"), join(path, "optimizer")));
  } else if (cmd == "ldp-lower" || cmd == "sweep") {
    r.put("control", normalize_control(r.sub("control"), join(path, "control"), nq));
    r.num("delta", 0.4, positive, "positive");
    eps_list(r, {0.5, 0.33, 0.25, 0.2});
    n_paths(100000);
    r.num("tolerance_margin", 0.35, nonneg, "nonnegative");
    if (cmd == "sweep") {
      r.num("radius", 1.0, nonneg, "nonnegative");
      r.integer("n_directions", std::min(2, n), 0, n);
    }
  } else if (cmd == "ldp-upper") {
    r.num("s0", 0.0, nonneg, "nonnegative");
    r.num("delta", 0.4, positive, "positive");
    eps_list(r, {0.5, 0.33, 0.25, 0.2});
    n_paths(10000);
    r.num("tolerance_margin", 0.15, nonneg, "nonnegative");
  } else if (cmd == "exit-scaling" || cmd == "exit-place") {
    r.put("domain", normalize_domain(r.sub("domain"), join(path, "domain"), x0));
    eps_list(r, {0.4, 0.3, 0.22});
    n_paths(200);
    r.integer("max_steps", 10'000'000, 1, 10'000'000'000LL);
    r.num("eta", 0.1, positive, "positive");
    if (r.has("v_ref")) r.num("v_ref", std::nullopt, positive, "positive (O strictly inside D)");
    else r.put("v_ref", nullptr);
    r.vec("horizons", std::vector<double>{2, 4, 8, 16}, -1, positive, "positive");
    if (cmd == "exit-place") r.integer("n_axes", n, 1, n);
  } else if (cmd == "verify") {
    r.num("mild_tol", 1e-8, positive, "positive");
    r.integer("n_random", 20, 1, 10000);
    r.num("horizon", 3.0, positive, "positive");
    r.num("rho", 0.1, positive, "positive");
    r.num("probe_radius", 0.9, positive, "positive");
  }
  r.finish();
  return r.out;
}

}  // namespace

ExperimentConfig parse_config(const Json& j) {
  if (!j.is_object()) throw schema_error("", "config must be a JSON object");
  ExperimentConfig c;
  std::set<std::string> known{"schema_version", "command", "model", "output_dir", "master_seed"};
  for (const auto& cmd : valid_commands()) known.insert(cmd);
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw schema_error(it.key(), "unknown field");

  if (!j.contains("schema_version") || !j["schema_version"].is_string())
    throw schema_error("schema_version", "required string field missing");
  c.schema_version = j["schema_version"].get<std::string>();
  if (c.schema_version != kSchemaVersion)
    throw schema_error("schema_version", "unrecognized version '" + c.schema_version + "' (expected \"1\")");

  std::string list;
  for (const auto& cmd : valid_commands()) list += (list.empty() ? "" : ", ") + cmd;
  if (!j.contains("command") || !j["command"].is_string())
    throw schema_error("command", "required; valid commands: " + list);
  c.command = j["command"].get<std::string>();
  bool valid = false;
  for (const auto& cmd : valid_commands()) valid = valid || cmd == c.command;
  if (!valid) throw schema_error("command", "unknown command '" + c.command + "'; valid commands: " + list);
  for (const auto& cmd : valid_commands())
    if (cmd != c.command && j.contains(cmd))
      throw schema_error(cmd, "block does not match command '" + c.command + "' (exactly one command block allowed)");

  if (j.contains("output_dir")) {
    if (!j["output_dir"].is_string() || j["output_dir"].get<std::string>().empty())
      throw schema_error("output_dir", "expected a nonempty path string");
    c.output_dir = j["output_dir"].get<std::string>();
  }
  if (j.contains("master_seed")) {
    if (!j["master_seed"].is_number_unsigned() && !(j["master_seed"].is_number_integer() && j["master_seed"] >= 0))
      throw range_error("master_seed", "must be an unsigned 64-bit integer");
    c.master_seed = j["master_seed"].get<std::uint64_t>();
  }
  c.model = normalize_model(j.contains("model") ? j["model"] : Json());
  c.block = normalize_block(c.command, j.contains(c.command) ? j[c.command] : Json(), c.model);
  build_model(c.model);  // library-level invariants (basis/drift/noise compatibility)
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  Json j;
  try {
    j = Json::parse(ss.str());
  } catch (const Json::parse_error& e) {
    throw ValidationError("ParseError", "", std::string("invalid JSON in '") + path + "': " + e.what());
  }
  return parse_config(j);
}

Json config_to_json(const ExperimentConfig& c) {
  Json j;
  j["schema_version"] = c.schema_version;
  j["command"] = c.command;
  j["master_seed"] = c.master_seed;
  j["output_dir"] = c.output_dir;
  j["model"] = c.model;
  j[c.command] = c.block;
  return j;
}

std::string emit_config(const ExperimentConfig& c) { return config_to_json(c).dump(2) + "\n"; }

// ---------------------------------------------------------------------------

BuiltModel build_model(const Json& m) {
  BuiltModel out;
  const Json& b = m.at("basis");
  if (b.at("kind") == "dirichlet_interval")
    out.model.basis = SpectralBasis::dirichlet_interval(b.at("n_modes"), b.at("length"), b.at("n_points"));
  else
    out.model.basis = SpectralBasis::fourier_torus(b.at("max_wavenumber"), b.at("grid_side"));

  const Json& d = m.at("drift");
  if (d.at("kind") == "reaction") out.model.drift = DriftSpec::reaction(d.at("coeffs").get<std::vector<double>>());
  else if (d.at("kind") == "navier_stokes") out.model.drift = DriftSpec::navier_stokes();

  const Json& q = m.at("noise");
  out.model.noise.q_eigenvalues = q.at("q_eigenvalues").get<std::vector<double>>();
  out.model.noise.decay = q.at("decay");
  out.model.noise.g_kind = q.at("g").at("kind") == "constant" ? GKind::Constant : GKind::BoundedRational;
  out.model.noise.g_params = {q.at("g").at("c").get<double>()};

  out.model.grid = TimeGrid(m.at("grid").at("t_end"), m.at("grid").at("n_steps"));
  out.model.validate();

  Eigen::VectorXd x0 = Eigen::Map<const Eigen::VectorXd>(m.at("x0").get<std::vector<double>>().data(),
                                                         out.model.n_modes());
  out.x0 = SpectralField(out.model.basis, x0);

  const Json& s = m.at("sim");
  out.sim.eps = s.at("eps");
  out.sim.grid = out.model.grid;
  out.sim.noise_truncation = s.at("noise_truncation");
  out.sim.blowup_factor = s.at("blowup_factor");
  out.sim.validate(out.model);
  return out;
}

ControlPath build_control(const Json& c, const ModelSpec& model, const std::string& path) {
  if (c.at("kind") == "zero") return ControlPath::zero(model.grid, model.n_noise());
  const auto v = c.at("value").get<std::vector<double>>();
  if (static_cast<int>(v.size()) != model.n_noise()) throw range_error(join(path, "value"), "wrong dimension");
  return ControlPath::constant(model.grid, Eigen::Map<const Eigen::VectorXd>(v.data(), model.n_noise()));
}

Target build_target(const Json& t, const BuiltModel& m, const std::string& path) {
  const double tol = t.at("tol");
  if (t.at("kind") == "point") {
    const auto y = t.at("y").get<std::vector<double>>();
    if (static_cast<int>(y.size()) != m.model.n_modes()) throw range_error(join(path, "y"), "wrong dimension");
    return Target::point(SpectralField(m.model.basis, Eigen::Map<const Eigen::VectorXd>(y.data(), y.size())), tol);
  }
  Target out = Target::ball_boundary(m.x0, t.at("radius"), t.at("n_directions"), t.at("norm") == "sup");
  out.tol = tol;
  return out;
}

OptimizerOptions build_optimizer(const Json& o) {
  OptimizerOptions opt;
  opt.max_iterations = o.at("max_iterations");
  opt.grad_tol = o.at("grad_tol");
  opt.memory = o.at("memory");
  opt.max_stages = o.at("max_stages");
  opt.action_ceiling = o.at("action_ceiling");
  const std::string g = o.at("gradient");
  opt.gradient = g == "adjoint" ? GradientMethod::Adjoint
                 : g == "finite_difference" ? GradientMethod::FiniteDifference
                                            : GradientMethod::Auto;
  return opt;
}

ExitDomain build_domain(const Json& d, const BuiltModel& m) {
  const auto c = d.at("center").get<std::vector<double>>();
  ExitDomain dom;
  dom.center = SpectralField(m.model.basis, Eigen::Map<const Eigen::VectorXd>(c.data(), c.size()));
  dom.radius = d.at("radius");
  dom.norm = d.at("norm") == "sup" ? BallNorm::Sup : BallNorm::L2;
  return dom;
}

}  // namespace fwspde
