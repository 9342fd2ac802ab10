#pragma once

#include <string>
#include <vector>

#include "rbms/config.hpp"
#include "rbms/rb_offline.hpp"
#include "rbms/rb_online.hpp"

namespace rbms {

// Command bodies shared by the CLI and the verification harness. Everything
// lands under cfg.output_dir; all outputs except timing reports are
// reproducible byte-for-byte for a fixed config and seed.

OfflineContext context_from_config(const RunConfig& cfg);
std::vector<Vec> train_params(const RunConfig& cfg, const ParameterBox& box);
std::vector<Vec> test_params(const RunConfig& cfg, const ParameterBox& box);
ReducedOptions reduced_options(const RunConfig& cfg);

struct OfflineOutputs {
  PipelineResult pipeline;
  std::string model_path;
  std::string snapshots_path;
};

// mesh generation -> truth solves -> stage-1 EIM -> greedy -> stage-2 EIM ->
// greedy; writes model.rbm, snapshots.bin, history CSVs, summary.txt and the
// resolved config copy.
OfflineOutputs cmd_offline(const RunConfig& cfg);

// One truth solve; optionally exports the nodal field as CSV.
TruthSolution cmd_truth(const RunConfig& cfg, const Vec& p, bool export_field = true);

// Writes the generated mesh in the plain-text node/element format.
std::string cmd_mesh(const RunConfig& cfg);

struct OnlineRow {
  Vec p;
  int N = 0, M = 0;
  int iterations = 0;
  ErrorCertificate cert;
  double solve_ms = 0.0;
};

std::vector<OnlineRow> cmd_online(const RunConfig& cfg, const RbModel& model,
                                  const std::vector<Vec>& params, bool export_fields = false);

struct VerifyRow {
  Vec p;
  double delta = 0.0, delta_rb = 0.0, delta_eim = 0.0;
  double true_err = 0.0, eta = 0.0;
  double c1 = 0.0, c2 = 0.0, delta_m = 0.0, nu_lb_used = 0.0;
  bool rigor_ok = true;
  bool eta_guard = false;
  int online_iterations = 0, truth_iterations = 0;
};

struct TruncRow {
  int N = 0, M = 0;
  double max_delta = 0.0, mean_delta = 0.0, mean_eta = 0.0, max_eta = 0.0;
};

struct VerifyResult {
  std::vector<VerifyRow> rows;        // full-model certificates vs truth
  std::vector<TruncRow> table1;       // across (N, M) truncations
  int rigor_violations = 0;
  int truth_failures = 0;
  std::vector<Vec> params;
};

// Truth solve + online solve + certificate for every test parameter; emits
// per-test, Table-1-shaped and convergence CSVs (all timing-free).
VerifyResult cmd_verify(const RunConfig& cfg, const RbModel& model);

struct BenchResult {
  int n_params = 0;
  double truth_ms = 0.0;
  double online_ms = 0.0;
  double online_with_estimator_ms = 0.0;
  double speedup_plain = 0.0;
  double speedup_with_estimator = 0.0;
};

BenchResult cmd_bench(const RunConfig& cfg, const RbModel& model);

// Parameter list file: one parameter per line, whitespace-separated.
std::vector<Vec> load_param_list(const std::string& path, Index dims);

}  // namespace rbms
