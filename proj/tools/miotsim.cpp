#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "miot/runner.hpp"
#include "miot/scenario.hpp"

namespace {

std::string out_dir_or_default(const std::optional<std::string>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("MIOTSIM_OUT")) return env;
  return "out";
}

const char* mode_word(miot::Mode m) {
  return m == miot::Mode::Migration ? "migration" : "baseline";
}

void print_global_line(const std::string& metrics) {
  const std::string tag = "entity=global";
  std::size_t pos = metrics.find(tag);
  if (pos == std::string::npos) return;
  std::size_t end = metrics.find('\n', pos);
  if (end == std::string::npos) end = metrics.size();
  std::cout << metrics.substr(pos, end - pos) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "simulated edge-authentication network: scripted runs, mode "
      "comparison, scenario checks"};
  app.require_subcommand(1);

  std::string run_file;
  std::optional<std::string> run_mode;
  std::optional<std::uint64_t> run_seed;
  std::optional<std::string> run_out;
  std::optional<std::uint64_t> dup_node;
  double dup_at = 0.0;
  CLI::App* run = app.add_subcommand(
      "run", "run one scenario; writes transcript, metrics, and registry");
  run->add_option("file", run_file, "scenario JSON file")->required();
  run->add_option("--mode", run_mode,
                  "migration or baseline (default: the file's mode)")
      ->check(CLI::IsMember({"migration", "baseline"}));
  run->add_option("--seed", run_seed, "override the scenario seed");
  run->add_option("--out", run_out,
                  "output directory (default: $MIOTSIM_OUT, then ./out)");
  run->add_option("--check-duplicate-entry", dup_node,
                  "checker hook: plant a duplicate cache entry for this node")
      ->group("");
  run->add_option("--check-duplicate-at", dup_at,
                  "time at which to plant the duplicate")
      ->group("");

  std::string cmp_file;
  std::optional<std::uint64_t> cmp_seed;
  std::optional<std::string> cmp_out;
  CLI::App* cmp = app.add_subcommand(
      "compare", "run both modes on one seed; reports auths and energy");
  cmp->add_option("file", cmp_file, "scenario JSON file")->required();
  cmp->add_option("--seed", cmp_seed, "override the scenario seed");
  cmp->add_option("--out", cmp_out,
                  "output directory (default: $MIOTSIM_OUT, then ./out)");

  std::string val_file;
  CLI::App* val =
      app.add_subcommand("validate", "parse and validate a scenario file");
  val->add_option("file", val_file, "scenario JSON file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      const miot::ScenarioSpec spec = miot::load_scenario(run_file);
      miot::RunOptions opt;
      if (run_mode) {
        opt.mode = *run_mode == "migration" ? miot::Mode::Migration
                                            : miot::Mode::BaselineReauth;
      }
      opt.seed = run_seed;
      opt.inject_duplicate_node = dup_node;
      opt.inject_duplicate_at = dup_at;
      const miot::RunOutput out = miot::run_scenario(spec, opt);
      const std::string dir = out_dir_or_default(run_out);
      miot::write_outputs(out, dir);
      std::cout << "mode=" << mode_word(out.mode) << " seed=" << out.seed
                << " out=" << dir << "\n";
      print_global_line(out.metrics);
      if (!out.clean()) {
        for (const std::string& v : out.violations) {
          std::cerr << "violation: " << v << "\n";
        }
        return 2;
      }
      return 0;
    }

    if (cmp->parsed()) {
      const miot::ScenarioSpec spec = miot::load_scenario(cmp_file);
      const miot::ModeComparison c = miot::compare_modes(spec, cmp_seed);
      const std::string dir = out_dir_or_default(cmp_out);
      miot::write_outputs(c.migration, dir + "/migration");
      miot::write_outputs(c.baseline, dir + "/baseline");
      std::ofstream report(dir + "/report.txt", std::ios::trunc);
      report << c.report;
      std::cout << c.report;
      if (!c.ok) {
        for (const std::string& v : c.migration.violations) {
          std::cerr << "violation (migration): " << v << "\n";
        }
        for (const std::string& v : c.baseline.violations) {
          std::cerr << "violation (baseline): " << v << "\n";
        }
        return 2;
      }
      return 0;
    }

    const miot::ScenarioSpec spec = miot::load_scenario(val_file);
    std::cout << "ok: " << val_file << " edges=" << spec.edges.size()
              << " nodes=" << spec.nodes.size()
              << " script=" << spec.script.size()
              << " adversary=" << spec.adversary.size()
              << " duration=" << spec.duration << " seed=" << spec.seed << "\n";
    return 0;
  } catch (const miot::ScenarioInvalid& e) {
    std::cerr << "scenario invalid: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
