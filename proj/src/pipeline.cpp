#include "chns/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>

#include "chns/adaptivity.hpp"
#include "chns/assemble.hpp"
#include "chns/control.hpp"
#include "chns/coupled.hpp"
#include "chns/io.hpp"
#include "chns/rom.hpp"
#include "chns/scenario.hpp"

namespace chns {

namespace fs = std::filesystem;
using json = nlohmann::json;

const char* to_string(Command c) {
  switch (c) {
    case Command::Simulate: return "simulate";
    case Command::Control: return "control";
    case Command::Pod: return "pod";
    case Command::Adapt: return "adapt";
  }
  return "simulate";
}

Command parse_command(const std::string& name) {
  for (auto c : {Command::Simulate, Command::Control, Command::Pod, Command::Adapt})
    if (name == to_string(c)) return c;
  throw std::invalid_argument("unknown command '" + name + "'");
}

Model model_of(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::RisingBubbleControl: return Model::TwoPhaseFlow;
    case ScenarioKind::SinglePhaseNs: return Model::SinglePhaseFlow;
    default: return Model::Transport;
  }
}

bool Report::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

void Report::add(std::string name, bool ok, std::string detail) {
  checks.push_back({std::move(name), ok, std::move(detail)});
}

namespace {

constexpr double kMassTol = 1e-11;
constexpr double kEnergyTol = 1e-8;
constexpr double kBoundTol = 1e-10;

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string brief(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- reading

struct Table {
  std::string name;
  std::vector<std::string> cols;
  std::vector<std::vector<double>> rows;

  int col(const std::string& c) const {
    const auto it = std::find(cols.begin(), cols.end(), c);
    if (it == cols.end()) throw PipelineError(name + ": missing column '" + c + "'");
    return static_cast<int>(it - cols.begin());
  }
  std::vector<double> column(const std::string& c) const {
    const int k = col(c);
    std::vector<double> out;
    for (const auto& r : rows) out.push_back(r[k]);
    return out;
  }
  int size() const { return static_cast<int>(rows.size()); }
};

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string f; std::getline(ss, f, ',');) out.push_back(f);
  return out;
}

Table read_csv(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw PipelineError("missing artifact " + path.filename().string());
  Table t;
  t.name = path.filename().string();
  std::string line;
  if (!std::getline(is, line)) throw PipelineError(t.name + ": empty file");
  t.cols = split(line);
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = split(line);
    if (fields.size() != t.cols.size())
      throw PipelineError(t.name + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.cols.size()) +
                          " fields");
    std::vector<double> row;
    for (const auto& f : fields) {
      char* end = nullptr;
      const double v = std::strtod(f.c_str(), &end);
      if (f.empty() || end != f.c_str() + f.size())
        throw PipelineError(t.name + ":" + std::to_string(lineno) + ": bad number '" + f + "'");
      row.push_back(v);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

json read_manifest(const fs::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw PipelineError("missing artifact manifest.json");
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw PipelineError(std::string("manifest.json: ") + e.what());
  }
}

// ---------------------------------------------------------------- checks on artifacts

void check_mass(Report& rep, const Table& t, double area) {
  const auto mass = t.column("mass");
  double worst = 0.0;
  int at = -1;
  for (int i = 1; i < t.size(); ++i) {
    const double d = std::abs(mass[i] - mass[i - 1]);
    if (d > kMassTol * area && at < 0) at = static_cast<int>(t.rows[i][t.col("step")]);
    worst = std::max(worst, d);
  }
  rep.add("mass", at < 0,
          at < 0 ? "max change " + brief(worst) : "mass changes by more than 1e-11|Ω| at step " + std::to_string(at));
}

void check_bounds(Report& rep, const Table& t, const Potential& pot) {
  if (pot.kind != PotentialKind::DoubleObstacle) return;
  const int lo = t.col("phi_min"), hi = t.col("phi_max");
  for (const auto& r : t.rows)
    if (r[lo] < pot.lower - kBoundTol || r[hi] > pot.upper + kBoundTol) {
      rep.add("bounds", false, "phase leaves the obstacle at step " + std::to_string(static_cast<int>(r[0])));
      return;
    }
  rep.add("bounds", true);
}

// Energy law from the logged terms: lhs ≤ rhs at every step, and each step
// starts from the energy the previous one ended with.
void check_energy_terms(Report& rep, const Table& t, const std::vector<std::string>& lhs_terms,
                        const std::string& old_col, const std::string& work_col) {
  const int step = t.col("step"), e_new = t.col(lhs_terms.front()), e_old = t.col(old_col), work = t.col(work_col);
  std::vector<int> lhs;
  for (const auto& c : lhs_terms) lhs.push_back(t.col(c));
  double min_slack = std::numeric_limits<double>::infinity();
  for (int i = 0; i < t.size(); ++i) {
    const auto& r = t.rows[i];
    double l = 0.0;
    for (int k : lhs) l += r[k];
    const double scale = std::max(1.0, std::abs(r[e_old]));
    const double slack = (r[e_old] + r[work] - l) / scale;
    if (i > 0 || t.size() == 1) min_slack = std::min(min_slack, slack);  // row 0 is the initial state
    const int n = static_cast<int>(r[step]);
    if (slack < -kEnergyTol) {
      rep.add("energy", false, "energy inequality fails at step " + std::to_string(n) + " (relative slack " +
                                   brief(slack) + ")");
      return;
    }
    if (i > 0 && std::abs(r[e_old] - t.rows[i - 1][e_new]) > 1e-12 * scale) {
      rep.add("energy", false, "energy log is inconsistent at step " + std::to_string(n));
      return;
    }
  }
  rep.add("energy", true, "min relative slack " + brief(min_slack));
}

void check_transport_steps(Report& rep, const Table& t, const ScenarioConfig& cfg, bool monotone) {
  check_mass(rep, t, cfg.mesh.domain.area());
  check_bounds(rep, t, cfg.potential);
  if (!monotone) return;
  const auto e = t.column("energy");
  for (int i = 1; i < t.size(); ++i)
    if (e[i] > e[i - 1] + 1e-10 * std::max(1.0, std::abs(e[i - 1]))) {
      rep.add("energy", false, "energy increases at step " + std::to_string(i));
      return;
    }
  rep.add("energy", true, "non-increasing");
}

void check_two_phase_steps(Report& rep, const Table& t, const ScenarioConfig& cfg, const Potential& pot) {
  check_energy_terms(rep, t,
                     {"energy", "kinetic_increment", "gradient_increment", "viscous", "mobility", "kappa_increment"},
                     "energy_old", "work");
  check_mass(rep, t, cfg.mesh.domain.area());
  check_bounds(rep, t, pot);
}

void check_flow_steps(Report& rep, const Table& t) {
  check_energy_terms(rep, t, {"kinetic", "increment", "dissipation"}, "kinetic_old", "work");
  double worst = 0.0;
  for (double d : t.column("divergence")) worst = std::max(worst, d);
  rep.add("divergence", worst <= 1e-9, "max " + brief(worst));
}

void check_optimization(Report& rep, const Table& t, const ScenarioConfig& cfg) {
  if (t.size() == 0) {
    rep.add("objective", false, "empty optimization log");
    return;
  }
  const int lvl = t.col("level"), it = t.col("iteration"), obj = t.col("objective");
  for (int i = 1; i < t.size(); ++i)
    if (t.rows[i][lvl] == t.rows[i - 1][lvl] && t.rows[i][obj] > t.rows[i - 1][obj] * (1.0 + 1e-12)) {
      rep.add("objective", false,
              "objective increases at level " + std::to_string(static_cast<int>(t.rows[i][lvl])) + " iteration " +
                  std::to_string(static_cast<int>(t.rows[i][it])));
      return;
    }
  rep.add("objective", true, "non-increasing within every level");

  const auto& last = t.rows.back();
  if (cfg.control.descent_method) {
    const int cert = t.col("certificate"), h = t.col("measure");
    for (const auto& r : t.rows)
      if (r[cert] > 1e-10 * std::max(r[h] * r[h], std::numeric_limits<double>::min())) {
        rep.add("certificate", false, "descent certificate fails at iteration " + std::to_string(static_cast<int>(r[it])));
        return;
      }
    rep.add("certificate", true);
    rep.add("stationarity", last[h] <= cfg.control.tol, "final ‖h‖ " + brief(last[h]));
  } else {
    const double r1 = last[t.col("r1")], r2 = last[t.col("r2")];
    rep.add("stationarity", r1 <= cfg.control.tol_c && r2 <= cfg.control.tol_c,
            "r1 " + brief(r1) + ", r2 " + brief(r2) + ", tol_c " + brief(cfg.control.tol_c));
  }
}

void check_pod(Report& rep, const fs::path& dir) {
  const SnapshotSet s = [&] {
    try {
      return read_snapshots((dir / "snapshots.txt").string());
    } catch (const FormatError& e) {
      throw PipelineError(e.what());
    }
  }();
  const Table spectrum = read_csv(dir / "spectrum.csv");
  const Table identity = read_csv(dir / "identity.csv");
  const auto stored = spectrum.column("eigenvalue");
  const auto ells = identity.column("ell");
  int max_ell = 1;
  for (double l : ells) max_ell = std::max(max_ell, static_cast<int>(l));
  const PodBasis b = pod_basis(s, max_ell);

  bool ok = static_cast<long>(stored.size()) == b.eigenvalues.size();
  double worst = 0.0;
  if (ok) {
    for (std::size_t j = 0; j < stored.size(); ++j)
      worst = std::max(worst, std::abs(stored[j] - b.eigenvalues[static_cast<long>(j)]));
    ok = worst <= 1e-8 * std::abs(stored.front());
  }
  rep.add("spectrum", ok, ok ? "max deviation " + brief(worst) : "stored spectrum does not match the snapshots");

  for (double l : ells) {
    const int ell = static_cast<int>(l);
    double tail = 0.0;
    for (std::size_t j = ell; j < stored.size(); ++j) tail += stored[j];
    const double err = projection_error(s, b, ell);
    const bool good = std::abs(err - tail) <= 1e-8 * tail;
    rep.add("identity l=" + std::to_string(ell), good,
            "projection error " + brief(err) + ", eigenvalue tail " + brief(tail));
  }
}

void check_adapt(Report& rep, const Table& t, const ScenarioConfig& cfg) {
  const auto cells = t.column("cells");
  const bool ok = std::all_of(cells.begin(), cells.end(), [&](double c) { return c <= cfg.marking.a_max; });
  rep.add("budget", ok, std::to_string(t.size()) + " cycles within " + std::to_string(cfg.marking.a_max) + " cells");
}

// Checks every artifact the manifest names.
Report artifact_checks(const fs::path& dir, const json& manifest) {
  Report rep;
  rep.command = manifest.value("command", "");
  const ScenarioConfig cfg = [&] {
    try {
      return load_config((dir / "config.ini").string());
    } catch (const ConfigError& e) {
      throw PipelineError(e.what());
    }
  }();
  for (const auto& f : manifest.at("files")) {
    if (!fs::exists(dir / f.get<std::string>())) throw PipelineError("missing artifact " + f.get<std::string>());
  }
  const Command cmd = parse_command(rep.command);
  const Model model = model_of(cfg.scenario);

  if (cmd == Command::Control) {
    const Potential pot = cfg.control.descent_method ? cfg.potential : Potential::moreau_yosida(1.0);
    check_two_phase_steps(rep, read_csv(dir / "steps.csv"), cfg, pot);
    check_optimization(rep, read_csv(dir / "opt.csv"), cfg);
    return rep;
  }
  if (model == Model::TwoPhaseFlow)
    check_two_phase_steps(rep, read_csv(dir / "steps.csv"), cfg, cfg.potential);
  else if (model == Model::SinglePhaseFlow)
    check_flow_steps(rep, read_csv(dir / "steps.csv"));
  else
    check_transport_steps(rep, read_csv(dir / "steps.csv"), cfg,
                          cmd != Command::Adapt && !cfg.mesh.adapt && cfg.flow.field == FlowKind::None);
  if (cmd == Command::Pod) check_pod(rep, dir);
  if (cmd == Command::Adapt) check_adapt(rep, read_csv(dir / "adapt.csv"), cfg);
  return rep;
}

// ---------------------------------------------------------------- running

class Run {
 public:
  Run(const ScenarioConfig& cfg, fs::path stage, std::ostream* log) : cfg(cfg), stage_(std::move(stage)), log_(log) {}

  std::ofstream open(const std::string& name) {
    const fs::path p = stage_ / name;
    fs::create_directories(p.parent_path());
    std::ofstream os(p);
    if (!os) throw PipelineError("cannot write " + p.string());
    files.push_back(name);
    return os;
  }
  void say(const std::string& msg) const {
    if (log_) *log_ << msg << std::endl;
  }
  bool dump(int instant, int K) const {
    return cfg.output.stride > 0 && (instant % cfg.output.stride == 0 || instant == K - 1);
  }
  std::string vtk_name(int instant) const {
    char buf[32];
    std::snprintf(buf, sizeof buf, "vtk/instant_%04d.vtk", instant);
    return buf;
  }

  const ScenarioConfig& cfg;
  std::vector<std::string> files;
  json summary = json::object();
  json timings = json::object();

 private:
  fs::path stage_;
  std::ostream* log_;
};

ScalarFn initial_phase(const ScenarioConfig& c) {
  return ellipse_phase(c.initial.center, c.initial.rx, c.initial.ry, c.phase.eps);
}

VectorFn flow_field(const FlowConfig& f) {
  switch (f.field) {
    case FlowKind::SplitVortex: return split_vortex(f.speed);
    case FlowKind::ChannelVortex: return channel_vortex(f.speed);
    case FlowKind::Swirl: return swirl(f.speed);
    case FlowKind::None: break;
  }
  return [](const Point&) { return std::array<double, 2>{0.0, 0.0}; };
}

MeshPtr root_mesh(const ScenarioConfig& c) { return build_rect_mesh(c.mesh.nx, c.mesh.ny, c.mesh.domain); }

// ---- transport

void write_transport_steps(Run& run, const ChRun& ch) {
  auto os = run.open("steps.csv");
  os << "step,time,cells,mass,energy,phi_min,phi_max\n";
  for (int i = 0; i < static_cast<int>(ch.states.size()); ++i) {
    const Vec& phi = ch.states[i].phi.coeffs;
    os << i << ',' << num(i * run.cfg.tau()) << ',' << ch.states[i].phi.space->mesh()->n_cells() << ','
       << num(ch.mass[i]) << ',' << num(ch.energy[i]) << ',' << num(phi.minCoeff()) << ',' << num(phi.maxCoeff())
       << '\n';
  }
}

void dump_transport(Run& run, const ChRun& ch, const IndicatorVector* eta = nullptr) {
  const int K = static_cast<int>(ch.states.size());
  for (int i = 0; i < K; ++i) {
    if (!run.dump(i, K)) continue;
    VtkData d;
    d.point_fields = {{"phi", ch.states[i].phi}, {"mu", ch.states[i].mu}};
    if (eta) d.cell_fields = {{"eta", eta->eta[i]}};
    auto os = run.open(run.vtk_name(i));
    write_vtk(os, *ch.states[i].phi.space->mesh(), d);
  }
}

ChRun transport_run(Run& run) {
  const ScenarioConfig& c = run.cfg;
  const BandAdaptivity band{c.mesh.adapt ? c.mesh.levels : 0, 0.99, 0.9};
  run.say("transport run: " + std::to_string(c.steps) + " instants");
  const auto t0 = std::chrono::steady_clock::now();
  try {
    ChRun ch = run_cahn_hilliard(root_mesh(c), initial_phase(c), flow_field(c.flow), c.potential, c.phase, c.steps, band);
    run.timings["solve_seconds"] = seconds_since(t0);
    run.timings["seconds_per_step"] = ch.stats.seconds_per_step;
    run.summary["final_components"] = phase_components(ch.states.back().phi);
    run.summary["min_cells"] = ch.stats.min_cells;
    run.summary["max_cells"] = ch.stats.max_cells;
    return ch;
  } catch (const PipelineError&) {
    throw;
  } catch (const std::exception& e) {
    throw PipelineError(std::string("transport run failed: ") + e.what());
  }
}

// ---- two-phase flow

void write_two_phase_row0(std::ostream& os, const CoupledState& s, const ScenarioConfig& c, const Potential& pot) {
  EnergyReport r;
  r.energy_new = r.energy_old = total_energy(s, pot, c.phase, c.fluid);
  write_step_row(os, 0, 0.0, s, r);
}

void dump_two_phase(Run& run, int n, const CoupledState& s) {
  if (!run.dump(n, run.cfg.steps)) return;
  VtkData d;
  d.point_fields = {{"phi", s.phase.phi}, {"mu", s.phase.mu}, {"velocity", s.flow.v}, {"pressure", s.flow.p}};
  auto os = run.open(run.vtk_name(n));
  write_vtk(os, *s.phase.phi.space->mesh(), d);
}

void simulate_two_phase(Run& run) {
  const ScenarioConfig& c = run.cfg;
  const CoupledLayout L = CoupledLayout::create(root_mesh(c));
  const Field phi_a = interpolate(L.phase, initial_phase(c));
  const Vec force = Vec::Zero(L.nv);
  auto os = run.open("steps.csv");
  write_step_header(os);
  const auto t0 = std::chrono::steady_clock::now();
  CoupledState s;
  try {
    s = chns_init(phi_a, Field(L.velocity), c.potential, c.phase, c.fluid);
  } catch (const std::exception& e) {
    throw PipelineError(e.what(), 0);
  }
  write_two_phase_row0(os, s, c, c.potential);
  dump_two_phase(run, 0, s);
  for (int n = 1; n < c.steps; ++n) {
    CoupledState next;
    try {
      next = chns_step(s, force, c.potential, c.phase, c.fluid);
    } catch (const std::exception& e) {
      throw PipelineError(e.what(), n);
    }
    write_step_row(os, n, n * c.tau(), next, energy_step_check(s, next, force, c.potential, c.phase, c.fluid));
    dump_two_phase(run, n, next);
    s = std::move(next);
    run.say("  step " + std::to_string(n) + "/" + std::to_string(c.steps - 1));
  }
  run.timings["seconds_per_step"] = seconds_since(t0) / std::max(1, c.steps - 1);
}

// ---- single-phase flow

struct FlowRun {
  FlowSpaces fs;
  Vec force;
  std::vector<FlowState> states;
};

FlowRun flow_run(Run& run) {
  const ScenarioConfig& c = run.cfg;
  FlowRun r;
  r.fs = FlowSpaces::create(root_mesh(c));
  r.force = load_vector(*r.fs.velocity, flow_field(c.flow));
  FluidParams prm = c.fluid;
  FlowState s{Field(r.fs.velocity), Field(r.fs.pressure)};
  r.states.push_back(s);
  const auto t0 = std::chrono::steady_clock::now();
  for (int n = 1; n < c.steps; ++n) {
    try {
      s = ns_step(s, r.force, prm);
    } catch (const std::exception& e) {
      throw PipelineError(e.what(), n);
    }
    r.states.push_back(s);
  }
  run.timings["seconds_per_step"] = seconds_since(t0) / std::max(1, c.steps - 1);

  const SpMat M = mass_matrix(*r.fs.velocity);
  const SpMat A = stiffness_matrix(*r.fs.velocity);
  auto os = run.open("steps.csv");
  os << "step,time,kinetic,kinetic_old,increment,dissipation,work,divergence\n";
  const double tau = c.tau();
  for (int n = 0; n < c.steps; ++n) {
    const Vec& v = r.states[n].v.coeffs;
    const Vec& v0 = r.states[std::max(n - 1, 0)].v.coeffs;
    const Vec dv = v - v0;
    const double kin = 0.5 * v.dot(M * v), kin0 = 0.5 * v0.dot(M * v0);
    const double inc = 0.5 * dv.dot(M * dv);
    const double diss = n > 0 ? tau / c.fluid.Re * v.dot(A * v) : 0.0;
    const double work = n > 0 ? tau * r.force.dot(v) : 0.0;
    os << n << ',' << num(n * tau) << ',' << num(kin) << ',' << num(kin0) << ',' << num(inc) << ',' << num(diss)
       << ',' << num(work) << ',' << num(divergence_residual(r.fs, r.states[n].v)) << '\n';
    if (run.dump(n, c.steps)) {
      VtkData d;
      d.point_fields = {{"velocity", r.states[n].v}, {"pressure", r.states[n].p}};
      auto vo = run.open(run.vtk_name(n));
      write_vtk(vo, *r.fs.velocity->mesh(), d);
    }
  }
  return r;
}

// ---- control

ScalarFn target_phase(const ScenarioConfig& c) {
  const double eps = c.phase.eps;
  const Point m = c.initial.center;
  switch (c.control.target) {
    case TargetKind::TwoSquares:
      // two squares of side 0.24 left and right of the initial centre
      return [m, eps](const Point& p) {
        const double dx = std::abs(std::abs(p.x - m.x) - 0.18), dy = std::abs(p.y - m.y);
        const double d = std::max(dx, dy) - 0.12;
        return std::tanh(-d / (std::numbers::sqrt2 * eps));
      };
    case TargetKind::Shifted:
      return ellipse_phase({m.x, m.y + c.control.target_dy}, c.initial.rx, c.initial.ry, eps);
    case TargetKind::Initial: break;
  }
  return initial_phase(c);
}

ControlProblem control_problem(const ScenarioConfig& c) {
  ControlProblem prob;
  prob.layout = CoupledLayout::create(root_mesh(c));
  prob.K = c.steps;
  prob.chp = c.phase;
  prob.flp = c.fluid;
  prob.phi_a = interpolate(prob.layout.phase, initial_phase(c));
  prob.v_a = Field(prob.layout.velocity);
  const ControlConfig& cc = c.control;
  if (cc.full) {
    prob.basis = ControlBasis::full(prob.layout.velocity);
  } else {
    // bump centres spread over the central 80% of each direction
    const Rect& d = c.mesh.domain;
    std::vector<Bump> bumps;
    for (int i = 0; i < cc.bumps_x; ++i)
      for (int j = 0; j < cc.bumps_y; ++j)
        bumps.push_back({d.x0 + d.width() * (0.5 + (i - 0.5 * (cc.bumps_x - 1)) * 0.8 / cc.bumps_x),
                         d.y0 + (d.y1 - d.y0) * (0.5 + (j - 0.5 * (cc.bumps_y - 1)) * 0.8 / cc.bumps_y), cc.bump_rx,
                         cc.bump_ry, 1});
    prob.basis = ControlBasis::ansatz(prob.layout.velocity, bumps, cc.amplitude);
  }
  prob.objective.phi_d = interpolate(prob.layout.phase, target_phase(c));
  prob.objective.xi = cc.xi;
  prob.validate();
  return prob;
}

void run_control(Run& run) {
  const ScenarioConfig& c = run.cfg;
  const ControlConfig& cc = c.control;
  ControlProblem prob;
  try {
    prob = control_problem(c);
  } catch (const std::exception& e) {
    throw PipelineError(std::string("control setup: ") + e.what());
  }
  DescentOptions dopt;
  dopt.tol = cc.tol;
  dopt.rel_tol = cc.rel_tol;
  dopt.max_iter = cc.max_iter;

  ControlCoeffs u;
  Trajectory traj;
  std::vector<OptRecord> log;
  Potential pot = c.potential;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    if (cc.descent_method) {
      if (c.steps != 2 || c.potential.kind != PotentialKind::DoubleObstacle)
        throw PipelineError("the descent method needs steps = 2 and the double obstacle potential");
      run.say("descent method");
      const DescentMethodResult r = descent_method(prob, pot, prob.zero_control(), dopt);
      u = r.u;
      traj = r.traj;
      log = r.log;
      run.summary["converged"] = r.converged;
      run.summary["message"] = r.message;
    } else {
      PenalizationOptions popt;
      popt.alpha0 = cc.alpha0;
      popt.factor = cc.alpha_factor;
      popt.max_levels = cc.max_levels;
      popt.tol_c = cc.tol_c;
      popt.descent = dopt;
      run.say("penalization loop");
      const PenalizationResult r = penalization_loop(prob, prob.zero_control(), popt);
      u = r.u;
      traj = r.traj;
      log = r.log;
      pot = Potential::moreau_yosida(r.alphas.back());
      run.summary["converged"] = r.converged;
      run.summary["alphas"] = r.alphas;
    }
  } catch (const PipelineError&) {
    throw;
  } catch (const std::exception& e) {
    throw PipelineError(std::string("optimization failed: ") + e.what());
  }
  run.timings["optimization_seconds"] = seconds_since(t0);
  run.summary["objective"] = objective(prob, traj, u);
  run.summary["iterations"] = log.size();
  if (!cc.descent_method) run.summary["final_alpha"] = pot.alpha;

  {
    auto os = run.open("opt.csv");
    write_opt_header(os);
    for (const auto& r : log) write_opt_row(os, r);
  }
  {
    auto os = run.open("controls.csv");
    os << "instant,index,coefficient\n";
    for (int n = 0; n < u.rows(); ++n)
      for (int k = 0; k < u.cols(); ++k) os << n + 1 << ',' << k << ',' << num(u(n, k)) << '\n';
  }
  auto os = run.open("steps.csv");
  write_step_header(os);
  const CoupledState s0 = traj.state(prob.layout, 0);
  write_two_phase_row0(os, s0, c, pot);
  dump_two_phase(run, 0, s0);
  for (int n = 1; n < traj.size(); ++n) {
    const CoupledState a = traj.state(prob.layout, n - 1), b = traj.state(prob.layout, n);
    const Vec force = prob.basis.force(u.row(n - 1).transpose());
    write_step_row(os, n, n * c.tau(), b, energy_step_check(a, b, force, pot, c.phase, c.fluid));
    dump_two_phase(run, n, b);
  }
}

// ---- POD

std::vector<double> time_weights(const ScenarioConfig& c, int n) {
  return c.pod.trapezoid ? trapezoid_weights(n, c.tau()) : std::vector<double>(n, c.tau());
}

struct PodOut {
  SnapshotSet set;
  PodBasis basis;
  std::vector<int> ells;
};

PodOut write_pod(Run& run, SnapshotSet set) {
  PodOut out;
  int max_ell = 1;
  for (int l : run.cfg.pod.ells) max_ell = std::max(max_ell, l);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    out.basis = pod_basis(set, max_ell);
  } catch (const RankError& e) {
    out.basis = pod_basis(set, e.rank());
  }
  const int rank = numerical_rank(out.basis.eigenvalues);
  run.timings["pod_seconds"] = seconds_since(t0);
  for (int l : run.cfg.pod.ells)
    if (l < rank) out.ells.push_back(l);
  std::sort(out.ells.begin(), out.ells.end());
  out.ells.erase(std::unique(out.ells.begin(), out.ells.end()), out.ells.end());
  run.summary["snapshots"] = set.size();
  run.summary["rank"] = rank;

  {
    auto os = run.open("snapshots.txt");
    write_snapshots(os, set);
  }
  {
    auto os = run.open("spectrum.csv");
    os << "index,eigenvalue,normalized\n";
    const Vec& l = out.basis.eigenvalues;
    const Vec nrm = out.basis.normalized();
    for (int j = 0; j < l.size(); ++j) os << j + 1 << ',' << num(l[j]) << ',' << num(nrm[j]) << '\n';
  }
  {
    auto os = run.open("identity.csv");
    os << "ell,projection_error,tail,relative_difference\n";
    for (int l : out.ells) {
      const double err = projection_error(set, out.basis, l), tail = out.basis.tail(l);
      os << l << ',' << num(err) << ',' << num(tail) << ',' << num(std::abs(err - tail) / tail) << '\n';
    }
  }
  out.set = std::move(set);
  return out;
}

void pod_transport(Run& run) {
  const ScenarioConfig& c = run.cfg;
  const ChRun ch = transport_run(run);
  write_transport_steps(run, ch);
  const auto w = time_weights(c, static_cast<int>(ch.states.size()));
  SnapshotSet set = c.pod.joint ? phase_potential_snapshots(ch, c.pod.x, w, c.pod.mu_share)
                                : phase_snapshots(ch, c.pod.x, w);
  const PodOut pod = write_pod(run, std::move(set));
  if (!c.pod.rom) return;

  const PodBasis& b = pod.basis;
  const SpacePtr& space = b.space();
  const Field v = interpolate(FeSpace::create(space->mesh()->root_ptr(), 2, 2), flow_field(c.flow));
  const SpMat M = mass_matrix(*space);
  auto os = run.open("rom.csv");
  os << "ell,relative_error\n";
  json rom_time = json::object();
  for (int l : c.pod.ells) {
    if (l > b.ell) continue;
    const ChRom rom = ch_rom_build(b, l, c.phase, c.potential, v);
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<RomState> traj;
    try {
      traj = ch_rom_run(rom, ch.states[0].phi, c.steps);
    } catch (const std::exception& e) {
      throw PipelineError(std::string("reduced model with ") + std::to_string(l) + " modes failed: " + e.what());
    }
    rom_time[std::to_string(l)] = seconds_since(t0) / std::max(1, c.steps - 1);
    double num_sq = 0.0, den_sq = 0.0;
    for (int i = 0; i < c.steps; ++i) {
      const Vec y = prolongate(ch.states[i].phi, space->mesh()).coeffs;
      const Vec e = y - rom.expand(traj[i].c).coeffs;
      num_sq += w[i] * e.dot(M * e);
      den_sq += w[i] * y.dot(M * y);
    }
    os << l << ',' << num(std::sqrt(num_sq / den_sq)) << '\n';
  }
  run.timings["rom_seconds_per_step"] = rom_time;
}

void pod_flow(Run& run) {
  const ScenarioConfig& c = run.cfg;
  const FlowRun fr = flow_run(run);
  const auto w = time_weights(c, c.steps);
  SnapshotSet set;
  set.x = c.pod.x;
  for (int n = 0; n < c.steps; ++n) set.add(fr.states[n].v, w[n]);
  const PodOut pod = write_pod(run, std::move(set));
  if (!c.pod.rom) return;

  const SpMat M = mass_matrix(*fr.fs.velocity);
  auto os = run.open("rom.csv");
  os << "ell,relative_error\n";
  json rom_time = json::object();
  for (int l : c.pod.ells) {
    if (l > pod.basis.ell) continue;
    PodBasis b = pod.basis;
    b.modes.erase(b.modes.begin() + l, b.modes.end());
    b.ell = l;
    const Mat V = project_velocity_basis(b, fr.fs);
    NsRomParams prm;
    prm.Re = c.fluid.Re;
    prm.tau = c.tau();
    prm.steps = c.steps - 1;
    prm.force = fr.force;
    const auto t0 = std::chrono::steady_clock::now();
    NsRomTrajectory t;
    try {
      t = ns_rom_velocity(V, fr.fs, fr.states[0].v, prm);
    } catch (const std::exception& e) {
      throw PipelineError(std::string("velocity reduced model with ") + std::to_string(l) + " modes failed: " + e.what());
    }
    rom_time[std::to_string(l)] = seconds_since(t0) / std::max(1, c.steps - 1);
    double num_sq = 0.0, den_sq = 0.0;
    for (int n = 0; n < c.steps; ++n) {
      const Vec& y = fr.states[n].v.coeffs;
      const Vec e = y - V * t.velocity[n];
      num_sq += w[n] * e.dot(M * e);
      den_sq += w[n] * y.dot(M * y);
    }
    os << l << ',' << num(den_sq > 0.0 ? std::sqrt(num_sq / den_sq) : std::sqrt(num_sq)) << '\n';
  }
  run.timings["rom_seconds_per_step"] = rom_time;
}

// ---- adaptivity

void run_adapt(Run& run) {
  const ScenarioConfig& c = run.cfg;
  if (model_of(c.scenario) != Model::Transport) throw PipelineError("adapt drives the transport model only");
  const MeshPtr root = root_mesh(c);
  const ScalarFn phi_a = initial_phase(c);
  const VectorFn flow = flow_field(c.flow);
  const Field v = interpolate(FeSpace::create(root, 2, 2), flow);

  ChRun last;
  auto solve = [&](const std::vector<MeshPtr>& meshes) {
    try {
      last = run_cahn_hilliard(meshes, phi_a, flow, c.potential, c.phase);
    } catch (const std::exception& e) {
      throw PipelineError(std::string("transport run failed: ") + e.what());
    }
    IndicatorInput in;
    for (const auto& s : last.states) in.phi.push_back(s.phi);
    in.velocity = {v};
    in.tau = c.tau();
    IndicatorVector eta = compute_indicators(in);
    run.say("  cycle with " + std::to_string(eta.total_cells()) + " cells");
    return eta;
  };
  const auto t0 = std::chrono::steady_clock::now();
  const AdaptResult res = adapt_loop(std::vector<MeshPtr>(c.steps, root), solve, c.marking, c.max_cycles);
  run.timings["adapt_seconds"] = seconds_since(t0);
  const char* stop = res.stop == AdaptStop::Budget ? "budget" : res.stop == AdaptStop::Stalled ? "stalled" : "cycle limit";
  run.summary["stop"] = stop;
  run.summary["cycles"] = res.cycles.size();

  {
    auto os = run.open("adapt.csv");
    write_adapt_csv(os, res.cycles);
  }
  // final solve on the adapted meshes
  const IndicatorVector eta = solve(res.meshes);
  write_transport_steps(run, last);
  dump_transport(run, last, &eta);
  run.summary["final_cells"] = eta.total_cells();
}

// ---- staging

fs::path normalized(const fs::path& dir) {
  fs::path p = fs::absolute(dir).lexically_normal();
  if (p.filename().empty()) p = p.parent_path();
  return p;
}

void write_manifest(const fs::path& dir, const Run& run, const Report& rep, const std::string& command) {
  json m;
  m["format"] = "chns-run 1";
  m["command"] = command;
  m["scenario"] = to_string(run.cfg.scenario);
  m["seed"] = run.cfg.seed;
  m["threads"] = run.cfg.threads;
  m["files"] = run.files;
  m["summary"] = run.summary;
  m["timings"] = run.timings;
  json checks = json::array();
  for (const auto& c : rep.checks) checks.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  m["checks"] = checks;
  m["passed"] = rep.passed();
  std::ofstream os(dir / "manifest.json");
  os << m.dump(2) << '\n';
  if (!os) throw PipelineError("cannot write manifest.json");
}

}  // namespace

Report run_pipeline(Command cmd, const ScenarioConfig& cfg, const fs::path& dir_in, std::ostream* log) {
  cfg.validate();
  const fs::path dir = normalized(dir_in);
  if (fs::exists(dir) && !fs::is_empty(dir) && !fs::exists(dir / "manifest.json"))
    throw PipelineError("refusing to replace " + dir.string() + ": it is not a run directory");
  const fs::path stage = dir.parent_path() / ("." + dir.filename().string() + ".partial");
  fs::remove_all(stage);
  fs::create_directories(stage);

  Report rep;
  try {
    Run run(cfg, stage, log);
    {
      auto os = run.open("config.ini");
      write_config(os, cfg);
    }
    switch (cmd) {
      case Command::Simulate:
        switch (model_of(cfg.scenario)) {
          case Model::Transport: {
            const ChRun ch = transport_run(run);
            write_transport_steps(run, ch);
            dump_transport(run, ch);
            break;
          }
          case Model::TwoPhaseFlow: simulate_two_phase(run); break;
          case Model::SinglePhaseFlow: flow_run(run); break;
        }
        break;
      case Command::Control: run_control(run); break;
      case Command::Pod:
        if (model_of(cfg.scenario) == Model::SinglePhaseFlow)
          pod_flow(run);
        else if (model_of(cfg.scenario) == Model::Transport)
          pod_transport(run);
        else
          throw PipelineError("pod supports the transport and single-phase flow scenarios");
        break;
      case Command::Adapt: run_adapt(run); break;
    }
    json pre;
    pre["command"] = to_string(cmd);
    pre["files"] = run.files;
    rep = artifact_checks(stage, pre);
    rep.files = run.files;
    rep.files.push_back("manifest.json");
    write_manifest(stage, run, rep, to_string(cmd));
  } catch (...) {
    fs::remove_all(stage);
    throw;
  }
  fs::remove_all(dir);
  fs::rename(stage, dir);
  return rep;
}

Report verify_run(const fs::path& dir_in) {
  const fs::path dir = normalized(dir_in);
  if (!fs::is_directory(dir)) throw PipelineError("no run directory at " + dir.string());
  const json m = read_manifest(dir);
  if (m.value("format", "") != "chns-run 1") throw PipelineError("manifest.json: unknown format");
  try {
    return artifact_checks(dir, m);
  } catch (const json::exception& e) {
    throw PipelineError(std::string("manifest.json: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw PipelineError(std::string("manifest.json: ") + e.what());
  }
}

}  // namespace chns
