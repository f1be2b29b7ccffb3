#include "chns/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <set>
#include <sstream>

namespace chns {

ConfigError::ConfigError(const std::string& source, int line, const std::string& key, const std::string& what)
    : std::runtime_error(source + (line > 0 ? ":" + std::to_string(line) : std::string()) +
                         (key.empty() ? std::string() : ": " + key) + ": " + what),
      line_(line),
      key_(key),
      detail_(what) {}

const char* to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::EllipseTransport: return "ellipse_transport";
    case ScenarioKind::RisingBubbleControl: return "rising_bubble_control";
    case ScenarioKind::SinglePhaseNs: return "single_phase_ns";
    case ScenarioKind::Custom: return "custom";
  }
  return "custom";
}

ScenarioKind parse_scenario(const std::string& name) {
  for (auto k : {ScenarioKind::EllipseTransport, ScenarioKind::RisingBubbleControl, ScenarioKind::SinglePhaseNs,
                 ScenarioKind::Custom})
    if (name == to_string(k)) return k;
  throw std::invalid_argument("unknown scenario '" + name + "'");
}

ScenarioConfig preset(ScenarioKind kind) {
  ScenarioConfig c;
  c.scenario = kind;
  switch (kind) {
    case ScenarioKind::EllipseTransport:
      // desk scale: coarser root and a larger step than the reference run, same
      // physics; 160 instants carry the drop past its break-up near t = 0.0105
      c.mesh = {64, 32, {0.0, 0.0, 2.0, 1.0}, true, 2};
      c.steps = 160;
      c.phase.sigma = 1.0;
      c.phase.eps = 0.02;
      c.phase.mobility = {1.0, 0.0};
      c.phase.tau = 7.5e-5;
      c.initial = {{1.0, 0.5}, 0.35, 0.2};
      c.flow = {FlowKind::SplitVortex, 70.0};
      c.marking = {0.7, 0.01, 1500000};
      c.max_cycles = 3;
      c.output.stride = 40;
      break;
    case ScenarioKind::RisingBubbleControl:
      c.mesh = {32, 32, {0.0, 0.0, 1.0, 1.0}, false, 0};
      c.steps = 20;
      c.phase.sigma = 24.5 * 2.0 / std::numbers::pi;
      c.phase.eps = 0.02;
      c.phase.mobility = {1.0 / 25000.0, 0.0};
      c.phase.tau = 1.25e-3;
      c.fluid.rho1 = 1000.0;
      c.fluid.rho2 = 100.0;
      c.fluid.eta1 = 10.0;
      c.fluid.eta2 = 1.0;
      c.fluid.gravity = 0.981;
      c.potential = Potential::moreau_yosida(0.1);
      c.initial = {{0.5, 0.5}, 0.25, 0.25};
      c.marking = {0.7, 0.01, 60000};
      // the misfit gradient is tiny at this horizon, so stop on a relative decrease
      c.control.tol = 0.0;
      c.control.rel_tol = 0.1;
      c.control.max_iter = 8;
      c.output.stride = 10;
      break;
    case ScenarioKind::SinglePhaseNs:
      c.mesh = {8, 8, {0.0, 0.0, 1.0, 1.0}, false, 0};
      c.steps = 21;
      c.phase.tau = 0.05;
      c.fluid.Re = 20.0;
      c.flow = {FlowKind::Swirl, 10.0};
      c.pod.ells = {1, 2, 4};
      c.pod.joint = false;
      c.output.stride = 10;
      break;
    case ScenarioKind::Custom:
      c.phase.tau = 1e-3;
      break;
  }
  c.fluid.tau = c.phase.tau;
  return c;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double to_double(const std::string& v) {
  double x = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(x)) throw std::invalid_argument("expected a number");
  return x;
}

long to_long(const std::string& v) {
  long x = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) throw std::invalid_argument("expected an integer");
  return x;
}

int to_int(const std::string& v) {
  const long x = to_long(v);
  if (x < -2147483647L || x > 2147483647L) throw std::invalid_argument("integer out of range");
  return static_cast<int>(x);
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "on" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "off" || v == "no" || v == "0") return false;
  throw std::invalid_argument("expected true or false");
}

std::string of_bool(bool b) { return b ? "true" : "false"; }

template <class E>
E choose(const std::string& v, const std::vector<std::pair<const char*, E>>& options) {
  std::string names;
  for (const auto& [n, e] : options) {
    if (v == n) return e;
    names += names.empty() ? n : std::string(", ") + n;
  }
  throw std::invalid_argument("expected one of " + names);
}

template <class E>
std::string name_of(E e, const std::vector<std::pair<const char*, E>>& options) {
  for (const auto& [n, x] : options)
    if (x == e) return n;
  return "?";
}

const std::vector<std::pair<const char*, PotentialKind>> kPotentials{
    {"double_well", PotentialKind::DoubleWell},
    {"moreau_yosida", PotentialKind::MoreauYosida},
    {"relaxed_obstacle", PotentialKind::RelaxedObstacle},
    {"double_obstacle", PotentialKind::DoubleObstacle}};
const std::vector<std::pair<const char*, FlowKind>> kFlows{{"none", FlowKind::None},
                                                           {"split_vortex", FlowKind::SplitVortex},
                                                           {"channel_vortex", FlowKind::ChannelVortex},
                                                           {"swirl", FlowKind::Swirl}};
const std::vector<std::pair<const char*, TargetKind>> kTargets{
    {"two_squares", TargetKind::TwoSquares}, {"shifted", TargetKind::Shifted}, {"initial", TargetKind::Initial}};
const std::vector<std::pair<const char*, bool>> kAnsatz{{"bumps", false}, {"full", true}};
const std::vector<std::pair<const char*, bool>> kMethods{{"penalization", false}, {"descent", true}};
const std::vector<std::pair<const char*, bool>> kWeights{{"trapezoid", true}, {"uniform", false}};
const std::vector<std::pair<const char*, bool>> kBases{{"joint", true}, {"phase", false}};
const std::vector<std::pair<const char*, XSpace>> kXSpaces{
    {"L2", XSpace::L2}, {"H1", XSpace::H1}, {"H01", XSpace::H01}};

std::vector<int> to_int_list(const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(to_int(trim(item)));
  if (out.empty()) throw std::invalid_argument("expected a comma-separated list");
  return out;
}

std::string of_int_list(const std::vector<int>& v) {
  std::string s;
  for (std::size_t k = 0; k < v.size(); ++k) s += (k ? "," : "") + std::to_string(v[k]);
  return s;
}

struct Key {
  const char* section;
  const char* name;
  std::function<void(ScenarioConfig&, const std::string&)> set;
  std::function<std::string(const ScenarioConfig&)> get;
};

#define REAL(sec, key, field)                                                              \
  Key {                                                                                   \
    sec, key, [](ScenarioConfig& c, const std::string& v) { c.field = to_double(v); },   \
        [](const ScenarioConfig& c) { return fmt(c.field); }                              \
  }
#define INT(sec, key, field)                                                               \
  Key {                                                                                   \
    sec, key, [](ScenarioConfig& c, const std::string& v) { c.field = to_int(v); },      \
        [](const ScenarioConfig& c) { return std::to_string(c.field); }                   \
  }
#define BOOL(sec, key, field)                                                              \
  Key {                                                                                   \
    sec, key, [](ScenarioConfig& c, const std::string& v) { c.field = to_bool(v); },     \
        [](const ScenarioConfig& c) { return of_bool(c.field); }                          \
  }
#define ENUM(sec, key, field, table)                                                       \
  Key {                                                                                   \
    sec, key, [](ScenarioConfig& c, const std::string& v) { c.field = choose(v, table); }, \
        [](const ScenarioConfig& c) { return name_of(c.field, table); }                   \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> k{
      Key{"scenario", "name", [](ScenarioConfig&, const std::string&) {},
          [](const ScenarioConfig& c) { return std::string(to_string(c.scenario)); }},
      INT("mesh", "nx", mesh.nx),
      INT("mesh", "ny", mesh.ny),
      REAL("mesh", "x0", mesh.domain.x0),
      REAL("mesh", "y0", mesh.domain.y0),
      REAL("mesh", "x1", mesh.domain.x1),
      REAL("mesh", "y1", mesh.domain.y1),
      BOOL("mesh", "adapt", mesh.adapt),
      INT("mesh", "levels", mesh.levels),
      REAL("time", "tau", phase.tau),
      INT("time", "steps", steps),
      REAL("phase", "sigma", phase.sigma),
      REAL("phase", "eps", phase.eps),
      REAL("phase", "kappa", phase.kappa),
      REAL("phase", "mobility", phase.mobility.base),
      REAL("phase", "mobility_bulk", phase.mobility.bulk),
      BOOL("phase", "scaled", phase.scaled),
      REAL("fluid", "rho1", fluid.rho1),
      REAL("fluid", "rho2", fluid.rho2),
      REAL("fluid", "eta1", fluid.eta1),
      REAL("fluid", "eta2", fluid.eta2),
      REAL("fluid", "gravity", fluid.gravity),
      REAL("fluid", "re", fluid.Re),
      ENUM("potential", "kind", potential.kind, kPotentials),
      REAL("potential", "alpha", potential.alpha),
      REAL("potential", "r", potential.r),
      REAL("potential", "s", potential.s),
      REAL("potential", "lower", potential.lower),
      REAL("potential", "upper", potential.upper),
      REAL("initial", "cx", initial.center.x),
      REAL("initial", "cy", initial.center.y),
      REAL("initial", "rx", initial.rx),
      REAL("initial", "ry", initial.ry),
      ENUM("flow", "field", flow.field, kFlows),
      REAL("flow", "speed", flow.speed),
      ENUM("control", "ansatz", control.full, kAnsatz),
      INT("control", "bumps_x", control.bumps_x),
      INT("control", "bumps_y", control.bumps_y),
      REAL("control", "bump_rx", control.bump_rx),
      REAL("control", "bump_ry", control.bump_ry),
      REAL("control", "amplitude", control.amplitude),
      REAL("control", "xi", control.xi),
      ENUM("control", "target", control.target, kTargets),
      REAL("control", "target_dy", control.target_dy),
      ENUM("control", "method", control.descent_method, kMethods),
      REAL("control", "alpha0", control.alpha0),
      REAL("control", "alpha_factor", control.alpha_factor),
      INT("control", "max_levels", control.max_levels),
      REAL("control", "tol_c", control.tol_c),
      REAL("control", "tol", control.tol),
      REAL("control", "rel_tol", control.rel_tol),
      INT("control", "max_iter", control.max_iter),
      Key{"pod", "ells", [](ScenarioConfig& c, const std::string& v) { c.pod.ells = to_int_list(v); },
          [](const ScenarioConfig& c) { return of_int_list(c.pod.ells); }},
      ENUM("pod", "x", pod.x, kXSpaces),
      ENUM("pod", "weights", pod.trapezoid, kWeights),
      ENUM("pod", "basis", pod.joint, kBases),
      REAL("pod", "mu_share", pod.mu_share),
      BOOL("pod", "rom", pod.rom),
      REAL("marking", "theta_r", marking.theta_r),
      REAL("marking", "theta_c", marking.theta_c),
      Key{"marking", "a_max", [](ScenarioConfig& c, const std::string& v) { c.marking.a_max = to_long(v); },
          [](const ScenarioConfig& c) { return std::to_string(c.marking.a_max); }},
      INT("marking", "max_cycles", max_cycles),
      Key{"output", "dir", [](ScenarioConfig& c, const std::string& v) { c.output.dir = v; },
          [](const ScenarioConfig& c) { return c.output.dir; }},
      INT("output", "stride", output.stride),
      Key{"run", "seed",
          [](ScenarioConfig& c, const std::string& v) {
            const long s = to_long(v);
            if (s < 0) throw std::invalid_argument("seed must be non-negative");
            c.seed = static_cast<unsigned long>(s);
          },
          [](const ScenarioConfig& c) { return std::to_string(c.seed); }},
      INT("run", "threads", threads),
  };
  return k;
}

#undef REAL
#undef INT
#undef BOOL
#undef ENUM

const Key* find_key(const std::string& section, const std::string& name) {
  for (const auto& k : keys())
    if (section == k.section && name == k.name) return &k;
  return nullptr;
}

bool known_section(const std::string& s) {
  for (const auto& k : keys())
    if (s == k.section) return true;
  return false;
}

struct Entry {
  std::string section, key, value;
  int line;
};

}  // namespace

void ScenarioConfig::validate() const {
  const std::string src = "config";
  auto need = [&](bool ok, const char* key, const char* what) {
    if (!ok) throw ConfigError(src, 0, key, what);
  };
  need(mesh.nx >= 1 && mesh.ny >= 1, "mesh.nx", "mesh counts must be positive");
  need(mesh.domain.x1 > mesh.domain.x0 && mesh.domain.y1 > mesh.domain.y0, "mesh.x1", "empty domain");
  need(mesh.levels >= 0 && mesh.levels <= 8, "mesh.levels", "levels must lie in [0, 8]");
  need(steps >= 1, "time.steps", "need at least one instant");
  need(phase.tau > 0.0, "time.tau", "tau must be positive");
  need(phase.eps > 0.0, "phase.eps", "eps must be positive");
  need(phase.sigma > 0.0, "phase.sigma", "sigma must be positive");
  need(phase.mobility.base > 0.0 && phase.mobility.bulk >= 0.0, "phase.mobility", "mobility must be positive");
  need(fluid.rho1 > 0.0 && fluid.rho2 > 0.0, "fluid.rho1", "densities must be positive");
  need(fluid.eta1 > 0.0 && fluid.eta2 > 0.0, "fluid.eta1", "viscosities must be positive");
  need(fluid.Re > 0.0, "fluid.re", "Reynolds number must be positive");
  switch (potential.kind) {
    case PotentialKind::MoreauYosida: need(potential.alpha > 0.0, "potential.alpha", "alpha must be positive"); break;
    case PotentialKind::RelaxedObstacle:
      need(potential.r >= 2.0 && potential.s > 0.0, "potential.r", "need r >= 2 and s > 0");
      break;
    case PotentialKind::DoubleObstacle:
      need(potential.lower < 0.0 && 0.0 < potential.upper, "potential.lower", "need lower < 0 < upper");
      break;
    case PotentialKind::DoubleWell: break;
  }
  need(initial.rx > 0.0 && initial.ry > 0.0, "initial.rx", "semi-axes must be positive");
  need(control.bumps_x >= 1 && control.bumps_y >= 1, "control.bumps_x", "bump grid must be nonempty");
  need(control.bump_rx > 0.0 && control.bump_ry > 0.0, "control.bump_rx", "bump radii must be positive");
  need(control.xi > 0.0, "control.xi", "xi must be positive");
  need(control.alpha0 > 0.0, "control.alpha0", "alpha0 must be positive");
  need(control.alpha_factor > 0.0 && control.alpha_factor < 1.0, "control.alpha_factor", "factor must lie in (0,1)");
  need(control.max_levels >= 1 && control.max_iter >= 1, "control.max_iter", "iteration limits must be positive");
  need(control.tol >= 0.0 && control.rel_tol >= 0.0 && control.tol_c > 0.0, "control.tol", "tolerances out of range");
  for (int l : pod.ells) need(l >= 1, "pod.ells", "ranks must be positive");
  need(pod.mu_share > 0.0, "pod.mu_share", "share must be positive");
  need(marking.theta_r > 0.0 && marking.theta_r < 1.0, "marking.theta_r", "must lie in (0,1)");
  need(marking.theta_c > 0.0 && marking.theta_c < 1.0, "marking.theta_c", "must lie in (0,1)");
  need(marking.a_max >= 1, "marking.a_max", "budget must be positive");
  need(max_cycles >= 0, "marking.max_cycles", "must be non-negative");
  need(!output.dir.empty(), "output.dir", "empty output directory");
  need(output.stride >= 0, "output.stride", "must be non-negative");
  need(threads >= 1, "run.threads", "must be positive");
  need(fluid.tau == phase.tau, "time.tau", "phase and fluid steps differ");
}

ScenarioConfig parse_config(std::istream& is, const std::string& source) {
  std::vector<Entry> entries;
  std::set<std::string> seen;
  std::string section;
  int lineno = 0;
  for (std::string raw; std::getline(is, raw);) {
    ++lineno;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(source, lineno, "", "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!known_section(section)) throw ConfigError(source, lineno, section, "unknown section");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(source, lineno, "", "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) throw ConfigError(source, lineno, key, "key outside any section");
    const std::string full = section + "." + key;
    if (!find_key(section, key)) throw ConfigError(source, lineno, full, "unknown key");
    if (!seen.insert(full).second) throw ConfigError(source, lineno, full, "duplicate key");
    if (value.empty()) throw ConfigError(source, lineno, full, "empty value");
    entries.push_back({section, key, value, lineno});
  }

  ScenarioKind kind = ScenarioKind::Custom;
  for (const auto& e : entries)
    if (e.section == "scenario" && e.key == "name") {
      try {
        kind = parse_scenario(e.value);
      } catch (const std::exception& ex) {
        throw ConfigError(source, e.line, "scenario.name", ex.what());
      }
    }
  ScenarioConfig c = preset(kind);
  for (const auto& e : entries) {
    try {
      find_key(e.section, e.key)->set(c, e.value);
    } catch (const std::exception& ex) {
      throw ConfigError(source, e.line, e.section + "." + e.key, ex.what() + std::string(" (got '") + e.value + "')");
    }
  }
  c.fluid.tau = c.phase.tau;
  try {
    c.validate();
  } catch (const ConfigError& ex) {
    int line = 0;
    for (const auto& e : entries)
      if (e.section + "." + e.key == ex.key()) line = e.line;
    throw ConfigError(source, line, ex.key(), ex.detail());
  }
  return c;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError(path, 0, "", "cannot open file");
  return parse_config(is, path);
}

void write_config(std::ostream& os, const ScenarioConfig& c) {
  std::string section;
  for (const auto& k : keys()) {
    if (section != k.section) {
      section = k.section;
      os << (section == "scenario" ? "" : "\n") << '[' << section << "]\n";
    }
    os << k.name << " = " << k.get(c) << '\n';
  }
}

}  // namespace chns
