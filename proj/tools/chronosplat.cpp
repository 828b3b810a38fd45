#include "chronosplat/harness.hpp"
#include "chronosplat/io.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

namespace cs = chronosplat;

namespace {

// Applies --config and --seed on top of the defaults.
cs::RunConfig load_config(const std::string& path, const std::optional<std::uint64_t>& seed) {
  cs::RunConfig cfg = path.empty() ? cs::default_config() : cs::config_from_json(cs::read_json(path));
  if (seed) cfg.apply_seed(*seed);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal alignment of unsynchronized multi-view video for dynamic Gaussian splatting"};
  app.require_subcommand(0, 1);
  bool print_config = false;
  app.add_flag("--print-config", print_config, "Print the default configuration and exit");
  app.set_version_flag("--version", std::string(cs::kToolVersion));

  std::string config_path, out_dir, data_dir, report_path, mode = "full";
  std::optional<std::uint64_t> seed;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Override the configured seed");
  };

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  add_common(synth);
  synth->add_option("--out", out_dir, "Output dataset directory")->required();

  auto* align = app.add_subcommand("align", "Estimate per-camera time offsets");
  add_common(align);
  align->add_option("--data", data_dir, "Dataset directory")->required();
  align->add_option("--mode", mode, "none, coarse, fine or full")
      ->check(CLI::IsMember({"none", "coarse", "fine", "full"}));
  align->add_option("--out", report_path, "Report path (JSON)")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Compare renders with and without the recovered offsets");
  add_common(evaluate);
  evaluate->add_option("--data", data_dir, "Dataset directory")->required();
  evaluate->add_option("--report", report_path, "Alignment report")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--out", out_dir, "Metrics path (JSON)")->required();

  auto* ablate = app.add_subcommand("ablate", "Run the method x offset range grid");
  add_common(ablate);
  ablate->add_option("--out", out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? cs::kExitOk : cs::kExitUsage;
  }

  if (print_config) {
    std::cout << cs::config_to_json(cs::default_config()).dump(2) << '\n';
    return cs::kExitOk;
  }
  if (app.get_subcommands().empty()) {
    std::cerr << app.help();
    return cs::kExitUsage;
  }

  cs::RunConfig cfg;
  try {
    cfg = load_config(config_path, seed);
  } catch (const cs::DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cs::kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cs::kExitUsage;
  }

  if (*synth) return cs::cmd_synth(cfg, out_dir, std::cerr);
  if (*align) return cs::cmd_align(cfg, data_dir, cs::parse_align_mode(mode), report_path, std::cerr);
  if (*evaluate) return cs::cmd_evaluate(cfg, data_dir, report_path, out_dir, std::cerr);
  return cs::cmd_ablate(cfg, out_dir, std::cerr);
}
