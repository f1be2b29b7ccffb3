#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "chns/config.hpp"

namespace chns {

enum class Command { Simulate, Control, Pod, Adapt };

const char* to_string(Command c);
Command parse_command(const std::string& name);

/// Which solver a scenario drives.
enum class Model { Transport, TwoPhaseFlow, SinglePhaseFlow };
Model model_of(ScenarioKind kind);

/// A solver failure, tagged with the instant at which it happened (-1 if none).
class PipelineError : public std::runtime_error {
 public:
  PipelineError(const std::string& what, int step = -1)
      : std::runtime_error(step >= 0 ? "step " + std::to_string(step) + ": " + what : what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct Report {
  std::string command;
  std::vector<Check> checks;
  std::vector<std::string> files;  // relative to the run directory
  bool passed() const;
  void add(std::string name, bool ok, std::string detail = {});
};

/// Runs one pipeline into `dir`. Outputs are staged next to `dir` and moved
/// into place only once every artifact is written, so a failed run leaves
/// nothing behind. An existing `dir` is replaced only if it holds a previous run.
Report run_pipeline(Command cmd, const ScenarioConfig& cfg, const std::filesystem::path& dir,
                    std::ostream* log = nullptr);

/// Re-derives every invariant of a finished run from its files alone.
/// Throws PipelineError when an expected artifact is missing or unreadable.
Report verify_run(const std::filesystem::path& dir);

}  // namespace chns
