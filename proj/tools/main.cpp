#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "ssmrom/pipeline.hpp"

namespace {

ssmrom::Json load_config(const std::string& path, const std::string& out_override,
                         std::uint64_t seed, bool seed_set) {
  ssmrom::Json config = ssmrom::read_json_file(path);
  if (!out_override.empty()) config["outputs"]["dir"] = out_override;
  if (seed_set) config["seed"] = seed;
  return config;
}

void print_warnings(const std::vector<std::string>& warnings, bool verbose) {
  for (const auto& w : warnings)
    if (verbose)
      std::cerr << "warning: " << w << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Data-driven spectral-submanifold reduced-order modeling"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool verbose = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON configuration file")->required();
    cmd->add_option("--out", out_dir, "output directory (overrides config)");
    cmd->add_option("--seed", seed, "random seed (overrides config)");
    cmd->add_flag("--verbose", verbose, "print progress and warnings");
  };

  CLI::App* cmd_pipeline = app.add_subcommand(
      "pipeline", "embed, fit the manifold and normal form, run analytics");
  CLI::App* cmd_oracle = app.add_subcommand(
      "oracle-compare", "cross-validate the data-driven fit against the invariance solver");
  CLI::App* cmd_orderscan =
      app.add_subcommand("orderscan", "conjugacy error as a function of the normal-form order");
  CLI::App* cmd_simulate =
      app.add_subcommand("simulate", "generate trajectory CSV files from a synthetic system");
  CLI::App* cmd_frc = app.add_subcommand("frc", "forced response from a stored model file");
  for (CLI::App* cmd : {cmd_pipeline, cmd_oracle, cmd_orderscan, cmd_simulate, cmd_frc})
    add_common(cmd);

  CLI11_PARSE(app, argc, argv);

  try {
    const bool seed_set = app.count_all() && (cmd_pipeline->count("--seed") || cmd_oracle->count("--seed") ||
                                              cmd_orderscan->count("--seed") || cmd_simulate->count("--seed") ||
                                              cmd_frc->count("--seed"));
    const ssmrom::Json config = load_config(config_path, out_dir, seed, seed_set);

    if (cmd_pipeline->parsed()) {
      ssmrom::PipelineConfig cfg = ssmrom::parse_pipeline_config(config);
      cfg.verbose = verbose;
      const ssmrom::PipelineResult result = ssmrom::run_pipeline(cfg);
      print_warnings(result.warnings, verbose);
      std::printf("chart residual: %.6g\n", result.chart.residual);
      std::printf("conjugacy error per sample (train): %.6g\n", result.conjugacy_train);
      for (size_t i = 0; i < result.test_nmte.size(); ++i)
        std::printf("test NMTE [%zu]: %.4f%%\n", i, 100.0 * result.test_nmte[i]);
      std::printf("outputs written to %s\n", cfg.out_dir.c_str());
    } else if (cmd_oracle->parsed()) {
      ssmrom::PipelineConfig cfg = ssmrom::parse_pipeline_config(config);
      cfg.verbose = verbose;
      const ssmrom::OracleComparison cmp = ssmrom::run_oracle_compare(cfg);
      std::printf("alpha0 rel err: %.4f%%\n", 100.0 * cmp.alpha0_rel);
      std::printf("omega0 rel err: %.4f%%\n", 100.0 * cmp.omega0_rel);
      std::printf("alpha rho^2 rel err: %.4f%%\n", 100.0 * cmp.alpha2_rel);
      std::printf("omega rho^2 rel err: %.4f%%\n", 100.0 * cmp.omega2_rel);
      std::printf("%s\n", cmp.pass ? "PASS" : "FAIL");
      if (!cmp.pass) return 4;
    } else if (cmd_orderscan->parsed()) {
      ssmrom::PipelineConfig cfg = ssmrom::parse_pipeline_config(config);
      cfg.verbose = verbose;
      const auto rows = ssmrom::run_orderscan(cfg);
      for (const auto& row : rows)
        std::printf("N=%d train=%.6g test=%.6g\n", row.N, row.train_error, row.test_error);
    } else if (cmd_simulate->parsed()) {
      ssmrom::PipelineConfig cfg = ssmrom::parse_pipeline_config(config);
      cfg.verbose = verbose;
      ssmrom::run_simulate(cfg);
      std::printf("trajectories written to %s\n", cfg.out_dir.c_str());
    } else if (cmd_frc->parsed()) {
      ssmrom::run_frc(config);
      std::printf("FRC written\n");
    }
  } catch (const ssmrom::StageError& e) {
    std::cerr << "error [" << e.stage << "]: " << e.what() << "\n";
    return e.exit_code;
  } catch (const ssmrom::IoError& e) {
    std::cerr << "error [io]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
