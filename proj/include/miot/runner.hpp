#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "miot/metrics.hpp"
#include "miot/params.hpp"
#include "miot/scenario.hpp"

namespace miot {

struct RunOptions {
  std::optional<Mode> mode;
  std::optional<std::uint64_t> seed;
  // Invariant-checker hook: plants a second cache entry for this node
  // at the given time, which the end-of-run scan must flag.
  std::optional<std::uint64_t> inject_duplicate_node;
  double inject_duplicate_at = 0.0;
};

struct RunOutput {
  Mode mode = Mode::Migration;
  std::uint64_t seed = 1;
  std::string transcript;
  std::string metrics;
  std::string registry;
  std::map<std::string, Counters> counters;
  std::vector<std::string> violations;
  bool clean() const { return violations.empty(); }
};

RunOutput run_scenario(const ScenarioSpec& spec, const RunOptions& opt = {});

/// Writes transcript.txt, metrics.txt, registry.txt, and violations.txt
/// under out_dir, creating it if needed. Throws std::runtime_error when
/// a file cannot be written.
void write_outputs(const RunOutput& out, const std::string& out_dir);

struct ModeComparison {
  RunOutput migration;
  RunOutput baseline;
  std::string report;
  // False when either run trips a checker, or when an adversary-free
  // scenario ends with a node's migration-mode full_auths differing
  // from its scripted join count.
  bool ok = true;
};

/// Runs the scenario in both modes on one seed. The file's own mode
/// field is ignored here.
ModeComparison compare_modes(const ScenarioSpec& spec,
                             std::optional<std::uint64_t> seed_override = {});

}  // namespace miot
