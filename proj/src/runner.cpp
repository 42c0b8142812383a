#include "miot/runner.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "miot/simnet.hpp"

namespace miot {

namespace {

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("short write to " + path.string());
}

std::uint64_t counter_of(const std::map<std::string, Counters>& m,
                         const std::string& label,
                         std::uint64_t Counters::*field) {
  auto it = m.find(label);
  return it == m.end() ? 0 : it->second.*field;
}

}  // namespace

RunOutput run_scenario(const ScenarioSpec& spec, const RunOptions& opt) {
  RunOutput out;
  out.mode = opt.mode.value_or(spec.mode);
  out.seed = opt.seed.value_or(spec.seed);
  World w(spec.params, out.mode, out.seed);
  apply_scenario(w, spec);
  if (opt.inject_duplicate_node) {
    w.schedule_duplicate_entry(opt.inject_duplicate_at,
                               *opt.inject_duplicate_node);
  }
  w.run(spec.duration);
  out.transcript = w.transcript_text();
  out.metrics = w.metrics_text();
  out.registry = w.ns().registry_dump();
  out.counters = w.counters_by_label();
  out.violations = w.violations();
  return out;
}

void write_outputs(const RunOutput& out, const std::string& out_dir) {
  const std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);
  write_file(dir / "transcript.txt", out.transcript);
  write_file(dir / "metrics.txt", out.metrics);
  write_file(dir / "registry.txt", out.registry);
  std::string v;
  for (const std::string& line : out.violations) {
    v += line;
    v += '\n';
  }
  write_file(dir / "violations.txt", v);
}

ModeComparison compare_modes(const ScenarioSpec& spec,
                             std::optional<std::uint64_t> seed_override) {
  ModeComparison c;
  RunOptions mig;
  mig.mode = Mode::Migration;
  mig.seed = seed_override;
  RunOptions base;
  base.mode = Mode::BaselineReauth;
  base.seed = seed_override;
  c.migration = run_scenario(spec, mig);
  c.baseline = run_scenario(spec, base);
  c.ok = c.migration.clean() && c.baseline.clean();

  std::ostringstream r;
  r << "scenario=" << (spec.name.empty() ? spec.origin : spec.name)
    << " seed=" << c.migration.seed << "\n";
  for (const ScenarioNode& n : spec.nodes) {
    const std::string label = "node:" + std::to_string(n.id);
    const std::uint64_t mig_fa =
        counter_of(c.migration.counters, label, &Counters::full_auths);
    const std::uint64_t base_fa =
        counter_of(c.baseline.counters, label, &Counters::full_auths);
    const std::size_t joins = spec.join_count(n.id);
    r << label << " full_auths migration=" << mig_fa
      << " baseline=" << base_fa << " joins=" << joins;
    if (!spec.has_adversary() && mig_fa != joins) {
      r << " VIOLATION: migration should authenticate once per join";
      c.ok = false;
    }
    r << "\n";
  }

  const double mig_e = c.migration.counters.count("global")
                           ? c.migration.counters.at("global").energy_proxy(spec.params)
                           : 0.0;
  const double base_e = c.baseline.counters.count("global")
                            ? c.baseline.counters.at("global").energy_proxy(spec.params)
                            : 0.0;
  const double saving = base_e > 0.0 ? (base_e - mig_e) / base_e * 100.0 : 0.0;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "energy_proxy migration=%.2f baseline=%.2f saving=%.1f%%", mig_e,
                base_e, saving);
  r << buf << "\n";
  r << "energy figures use the configured cost weights, not measured power\n";
  c.report = r.str();
  return c;
}

}  // namespace miot
