// Command-line driver for the reduced-basis magnetostatics toolkit:
// mesh | truth | offline | online | verify | bench.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>

#include "rbms/driver.hpp"

namespace {

rbms::RunConfig load_cfg(const std::string& path, const std::string& seed_override,
                         int jobs_override) {
  rbms::RunConfig cfg = rbms::load_config(path);
  if (!seed_override.empty()) cfg.seed = std::stoull(seed_override);
  if (jobs_override >= 0) cfg.jobs = jobs_override;
  return cfg;
}

rbms::Vec parse_param(const std::string& s) {
  std::istringstream is(s);
  std::vector<double> vals;
  double x;
  while (is >> x) vals.push_back(x);
  rbms::Vec p(static_cast<rbms::Index>(vals.size()));
  for (std::size_t i = 0; i < vals.size(); ++i) p[static_cast<rbms::Index>(i)] = vals[i];
  return p;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Certified reduced-basis solver for geometrically parametrized "
               "nonlinear magnetostatics"};
  app.require_subcommand(1);

  std::string config_path, model_path, params_path, param_str, seed_override;
  int jobs_override = -1;
  bool export_fields = false;

  auto add_common = [&](CLI::App* cmd, bool needs_model) {
    cmd->add_option("--config", config_path, "run configuration file")->required();
    cmd->add_option("--seed", seed_override, "override the config seed");
    cmd->add_option("--jobs", jobs_override, "worker thread cap (0 = hardware)");
    if (needs_model) cmd->add_option("--model", model_path, "model container")->required();
  };

  auto* mesh = app.add_subcommand("mesh", "generate and export the fine mesh");
  add_common(mesh, false);

  auto* truth = app.add_subcommand("truth", "one finite-element truth solve");
  add_common(truth, false);
  truth->add_option("--param", param_str, "parameter values, e.g. \"18 4 7\"");
  truth->add_option("--params", params_path, "file with one parameter per line");

  auto* offline = app.add_subcommand("offline", "build the reduced model (two-stage pipeline)");
  add_common(offline, false);

  auto* online = app.add_subcommand("online", "batch of reduced solves with certificates");
  add_common(online, true);
  online->add_option("--params", params_path, "file with one parameter per line")->required();
  online->add_flag("--fields", export_fields, "export lifted solution fields");

  auto* verify = app.add_subcommand("verify", "truth-vs-reduced verification harness");
  add_common(verify, true);

  auto* bench = app.add_subcommand("bench", "timing comparison truth vs online");
  add_common(bench, true);

  CLI11_PARSE(app, argc, argv);

  try {
    const rbms::RunConfig cfg = load_cfg(config_path, seed_override, jobs_override);

    if (mesh->parsed()) {
      const std::string path = rbms::cmd_mesh(cfg);
      std::cout << "mesh written to " << path << "\n";
      return 0;
    }
    if (truth->parsed()) {
      std::vector<rbms::Vec> params;
      if (!param_str.empty()) params.push_back(parse_param(param_str));
      if (!params_path.empty()) {
        const auto decomp = rbms::config_geometry(cfg);
        const auto more = rbms::load_param_list(params_path, decomp.box.dims());
        params.insert(params.end(), more.begin(), more.end());
      }
      if (params.empty()) {
        std::cerr << "truth: provide --param or --params\n";
        return 1;
      }
      for (const auto& p : params) {
        const rbms::TruthSolution sol = rbms::cmd_truth(cfg, p);
        std::cout << "p =";
        for (rbms::Index i = 0; i < p.size(); ++i) std::cout << " " << p[i];
        std::cout << "  iterations " << sol.iterations << "  residual " << sol.residual_norm
                  << "\n";
      }
      return 0;
    }
    if (offline->parsed()) {
      const rbms::OfflineOutputs out = rbms::cmd_offline(cfg);
      const rbms::RbModel& m = out.pipeline.model;
      std::cout << "model written to " << out.model_path << "\n";
      std::cout << "N " << m.N() << "  M " << m.M() << "  Q_r " << m.Q_r() << "  converged "
                << (m.greedy_converged ? "yes" : "no") << "\n";
      return m.greedy_converged ? 0 : 3;
    }

    const rbms::RbModel model = rbms::load_model(model_path);
    if (online->parsed()) {
      const auto params = rbms::load_param_list(params_path, model.decomp.box.dims());
      const auto rows = rbms::cmd_online(cfg, model, params, export_fields);
      std::cout << rows.size() << " online solves written to " << cfg.output_dir
                << "/online.csv\n";
      return 0;
    }
    if (verify->parsed()) {
      const rbms::VerifyResult res = rbms::cmd_verify(cfg, model);
      std::cout << "test parameters " << res.params.size() << "\n";
      std::cout << "truth failures " << res.truth_failures << "\n";
      std::cout << "rigor violations " << res.rigor_violations << "\n";
      return 0;
    }
    if (bench->parsed()) {
      const rbms::BenchResult res = rbms::cmd_bench(cfg, model);
      std::printf("mean truth %.3f ms, online %.3f ms (x%.1f), with estimator %.3f ms (x%.1f)\n",
                  res.truth_ms, res.online_ms, res.speedup_plain, res.online_with_estimator_ms,
                  res.speedup_with_estimator);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
