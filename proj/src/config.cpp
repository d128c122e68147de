#include "seqtx/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "seqtx/errors.hpp"
#include "seqtx/grid.hpp"

namespace seqtx {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string fmt(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}
std::string fmt(std::uint64_t v) { return std::to_string(v); }
std::string fmt(int v) { return std::to_string(v); }
std::string fmt(const std::string& v) { return v; }
template <class T>
std::string fmt(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
  return s;
}

template <class T>
void parse_number(const std::string& key, const std::string& text, T& out) {
  const std::string t = trim(text);
  auto r = std::from_chars(t.data(), t.data() + t.size(), out);
  if (r.ec != std::errc() || r.ptr != t.data() + t.size())
    throw ConfigError("config: bad value '" + text + "' for " + key);
}
void parse_value(const std::string& key, const std::string& text, double& out) {
  parse_number(key, text, out);
}
void parse_value(const std::string& key, const std::string& text, std::uint64_t& out) {
  parse_number(key, text, out);
}
void parse_value(const std::string& key, const std::string& text, int& out) {
  parse_number(key, text, out);
}
void parse_value(const std::string&, const std::string& text, std::string& out) { out = trim(text); }
template <class T>
void parse_value(const std::string& key, const std::string& text, std::vector<T>& out) {
  out.clear();
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (trim(item).empty()) continue;
    T v{};
    parse_value(key, item, v);
    out.push_back(v);
  }
}

// One entry per key, in canonical order.
template <class C, class V>
void visit(C& c, V&& v) {
  v("map.family", c.map_family);
  v("map.m", c.map_m);
  v("map.beta", c.map_beta);
  v("seq.horizon", c.seq_horizon);
  v("seq.driving.angle", c.seq_driving_angle);
  v("seq.driving.amplitude", c.seq_driving_amplitude);
  v("potential.kind", c.potential_kind);
  v("potential.t", c.potential_t);
  v("observable.kind", c.observable_kind);
  v("alpha", c.alpha);
  v("grid", c.grid);
  v("depth", c.depth);
  v("radius", c.radius);
  v("r0", c.r0);
  v("cone.delta", c.cone_delta);
  v("cone.kappa", c.cone_kappa);
  v("cone.zeta", c.cone_zeta);
  v("cone.samples", c.cone_samples);
  v("cone.triples", c.cone_triples);
  v("spectral.n_max", c.spectral_n_max);
  v("spectral.t", c.spectral_t);
  v("spectral.norm_n_max", c.spectral_norm_n_max);
  v("stability.dbeta", c.stability_dbeta);
  v("seed", c.seed);
  v("sim.replicas", c.sim_replicas);
  v("sim.rungs", c.sim_rungs);
  v("sim.method", c.sim_method);
  v("h.k_max", c.h_k_max);
  v("h.t", c.h_t);
  v("mdp.replicas", c.mdp_replicas);
  v("mdp.gamma", c.mdp_gamma);
  v("mdp.x", c.mdp_x);
  v("coboundary.r", c.coboundary_r);
  v("tol.residual", c.tol_residual);
  v("tol.conformal", c.tol_conformal);
  v("tol.cov_hessian", c.tol_cov_hessian);
  v("tol.ks_ratio", c.tol_ks_ratio);
  v("tol.mdp_band", c.tol_mdp_band);
}

}  // namespace

void RunConfig::validate() const {
  if (map_family != "linear" && map_family != "mp")
    throw ConfigError("config: map.family must be linear or mp");
  if (map_family == "linear" && map_m < 2) throw ConfigError("config: map.m must be >= 2");
  if (map_family == "mp" && !(map_beta > 0.0 && map_beta < 1.0))
    throw ConfigError("config: map.beta must lie in (0,1)");
  if (seq_horizon < 1) throw ConfigError("config: seq.horizon must be >= 1");
  if (seq_driving_angle != 0.0 && map_family != "mp")
    throw ConfigError("config: driving is only defined for map.family = mp");
  if (potential_kind != "zero" && potential_kind != "cos" && potential_kind != "x")
    throw ConfigError("config: potential.kind must be zero, cos or x");
  if (observable_kind != "cos" && observable_kind != "sin" && observable_kind != "x" &&
      observable_kind != "one" && observable_kind != "cos-sin")
    throw ConfigError("config: unknown observable.kind '" + observable_kind + "'");
  if (coboundary_r != "cos" && coboundary_r != "sin" && coboundary_r != "x")
    throw ConfigError("config: coboundary.r must be cos, sin or x");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("config: alpha must lie in (0,1]");
  if (!is_power_of_two(grid) || grid < 16)
    throw ConfigError("config: grid must be a power of two >= 16");
  if (depth < 1) throw ConfigError("config: depth must be >= 1");
  for (double v : {radius, r0, cone_delta, tol_residual, tol_conformal, tol_cov_hessian,
                   tol_ks_ratio, tol_mdp_band, mdp_gamma})
    if (!(v > 0.0)) throw ConfigError("config: tolerances and radii must be positive");
  if (cone_kappa < 0.0 || cone_zeta < 0.0) throw ConfigError("config: negative cone parameter");
  if (sim_method != "auto" && sim_method != "forward" && sim_method != "reverse")
    throw ConfigError("config: sim.method must be auto, forward or reverse");
  if (sim_replicas < 2 || mdp_replicas < 2) throw ConfigError("config: too few replicas");
  if (sim_rungs.empty()) throw ConfigError("config: sim.rungs is empty");
  for (std::size_t i = 1; i < sim_rungs.size(); ++i)
    if (sim_rungs[i] <= sim_rungs[i - 1])
      throw ConfigError("config: sim.rungs must be strictly increasing");
  for (double t : spectral_t)
    if (!(t > 0.0 && t <= r0)) throw ConfigError("config: spectral.t entries must lie in (0, r0]");
  if (spectral_n_max < 1 || spectral_norm_n_max < 1 || h_k_max < 1)
    throw ConfigError("config: horizons must be >= 1");
}

std::string RunConfig::to_text() const {
  std::string out;
  visit(*this, [&](const char* key, const auto& v) { out += std::string(key) + " = " + fmt(v) + "\n"; });
  return out;
}

std::string RunConfig::section(const std::vector<std::string>& prefixes) const {
  std::string out;
  visit(*this, [&](const char* key, const auto& v) {
    const std::string k(key);
    for (const auto& p : prefixes)
      if (k.rfind(p, 0) == 0) {
        out += k + " = " + fmt(v) + "\n";
        break;
      }
  });
  return out;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  bool found = false;
  visit(*this, [&](const char* k, auto& v) {
    if (key == k) {
      parse_value(key, value, v);
      found = true;
    }
  });
  if (!found) throw ConfigError("config: unknown key '" + key + "'");
}

RunConfig RunConfig::parse(std::istream& in) {
  RunConfig c;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) + " has no '='");
    c.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  return parse(in);
}

ScalarFn named_function(const std::string& kind) {
  constexpr double tau = 2.0 * std::numbers::pi;
  if (kind == "cos") return [](double x) { return std::cos(tau * x); };
  if (kind == "sin") return [](double x) { return std::sin(tau * x); };
  if (kind == "x") return [](double x) { return x; };
  if (kind == "one") return [](double) { return 1.0; };
  if (kind == "zero") return [](double) { return 0.0; };
  throw ConfigError("config: unknown function kind '" + kind + "'");
}

SequentialSystem build_system(const RunConfig& cfg) {
  cfg.validate();
  ScalarFn phi = nullptr;
  if (cfg.potential_kind != "zero") {
    auto f = named_function(cfg.potential_kind);
    const double t = cfg.potential_t;
    phi = [f, t](double x) { return t * f(x); };
  }
  Observable u;
  if (cfg.observable_kind == "cos-sin")
    u.components = {named_function("cos"), named_function("sin")};
  else
    u = Observable::scalar(named_function(cfg.observable_kind));

  if (cfg.seq_driving_angle != 0.0) {
    const double b0 = cfg.map_beta, a = cfg.seq_driving_amplitude;
    auto beta = [b0, a](double w) { return b0 + a * std::sin(2.0 * std::numbers::pi * w); };
    return make_driven_mp_system(cfg.seq_driving_angle, beta, cfg.seq_horizon, phi, u)
        .with_alpha(cfg.alpha);
  }
  const MapModel map =
      cfg.map_family == "mp" ? make_mp_map(cfg.map_beta) : make_linear_expanding(cfg.map_m);
  return make_homogeneous(map, phi, u, cfg.alpha);
}

}  // namespace seqtx
