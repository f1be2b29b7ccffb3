#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "chns/adaptivity.hpp"
#include "chns/cahn_hilliard.hpp"
#include "chns/navier_stokes.hpp"
#include "chns/transfer.hpp"

namespace chns {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& source, int line, const std::string& key, const std::string& what);
  int line() const { return line_; }
  const std::string& key() const { return key_; }
  const std::string& detail() const { return detail_; }

 private:
  int line_;
  std::string key_;
  std::string detail_;
};

enum class ScenarioKind { EllipseTransport, RisingBubbleControl, SinglePhaseNs, Custom };

const char* to_string(ScenarioKind k);

struct MeshConfig {
  int nx = 32, ny = 32;
  Rect domain{0.0, 0.0, 1.0, 1.0};
  bool adapt = false;
  int levels = 0;  // band refinement depth for transport runs
};

struct InitialConfig {
  Point center{0.5, 0.5};
  double rx = 0.25, ry = 0.25;  // ellipse semi-axes; a circle when equal
};

enum class FlowKind { None, SplitVortex, ChannelVortex, Swirl };

struct FlowConfig {
  FlowKind field = FlowKind::None;
  double speed = 0.0;
};

enum class TargetKind { TwoSquares, Shifted, Initial };

struct ControlConfig {
  bool full = false;  // every interior velocity dof vs. a bump grid
  int bumps_x = 2, bumps_y = 4;
  double bump_rx = 0.15, bump_ry = 0.1;
  double amplitude = 1e4;
  double xi = 1e-11;
  TargetKind target = TargetKind::TwoSquares;
  double target_dy = 0.1;  // for Shifted
  bool descent_method = false;  // K = 2 obstacle descent instead of the penalization loop
  double alpha0 = 0.1;
  double alpha_factor = 0.1;
  int max_levels = 6;
  double tol_c = 1e-3;
  double tol = 1e-6;
  double rel_tol = 0.0;
  int max_iter = 50;
};

struct PodConfig {
  std::vector<int> ells{1, 5, 10, 20};
  XSpace x = XSpace::L2;
  bool trapezoid = true;  // time weights; uniform otherwise
  bool joint = true;      // phase plus chemical-potential snapshots
  double mu_share = 0.01;
  bool rom = true;
};

struct OutputConfig {
  std::string dir = "out";
  int stride = 0;  // VTK dump every `stride` instants, 0 for none
};

struct ScenarioConfig {
  ScenarioKind scenario = ScenarioKind::Custom;
  MeshConfig mesh;
  int steps = 10;  // K, number of time instants
  ChParams phase;
  FluidParams fluid;
  Potential potential;
  InitialConfig initial;
  FlowConfig flow;
  ControlConfig control;
  PodConfig pod;
  MarkParams marking;
  int max_cycles = 10;
  OutputConfig output;
  unsigned long seed = 0;
  int threads = 1;

  double tau() const { return phase.tau; }
  /// Throws ConfigError naming the offending key.
  void validate() const;
};

/// Defaults of a named scenario.
ScenarioConfig preset(ScenarioKind kind);
ScenarioKind parse_scenario(const std::string& name);

/// Sectioned key = value text. `scenario.name` (if present) selects the preset
/// the remaining keys override. Unknown sections or keys, duplicates and
/// malformed values are errors that name the line and key.
ScenarioConfig parse_config(std::istream& is, const std::string& source = "<config>");
ScenarioConfig load_config(const std::string& path);
/// Every key with its current value, in a form parse_config reads back.
void write_config(std::ostream& os, const ScenarioConfig& c);

}  // namespace chns
