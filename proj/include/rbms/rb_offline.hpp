#pragma once

#include <Eigen/SparseCholesky>

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rbms/rb_model.hpp"
#include "rbms/rb_online.hpp"
#include "rbms/types.hpp"

namespace rbms {

// ---------------------------------------------------------------------------
// Snapshot store: (p, û, stats) records keyed by the parameter bytes.
// ---------------------------------------------------------------------------

struct SnapshotRecord {
  Vec p;
  Vec u;
  int iterations = 0;
  double residual_norm = 0.0;
};

class SnapshotStore {
 public:
  const SnapshotRecord* find(const Vec& p) const;
  void insert(SnapshotRecord rec);
  std::size_t size() const { return records_.size(); }
  const std::vector<SnapshotRecord>& records() const { return records_; }

  void save(const std::string& path) const;
  static SnapshotStore load(const std::string& path);

 private:
  std::vector<SnapshotRecord> records_;
};

// ---------------------------------------------------------------------------
// Offline context: the truth-side objects shared by the whole pipeline.
// ---------------------------------------------------------------------------

struct OfflineContext {
  MacroDecomposition decomp;
  int level = 0;
  bool all_dirichlet = false;
  Triangulation mesh;
  TruthSpace space;
  Materials materials;
  Sources sources;
  LoadExpansion load;
  std::shared_ptr<Eigen::SimplicialLDLT<SpMat>> Kfact;
  NewtonOptions newton;
  int jobs = 1;
  double max_s_seen = 0.0;  // largest |J^{-T} grad û| over all snapshots
};

OfflineContext make_offline_context(const MacroDecomposition& decomp, int level,
                                    bool all_dirichlet, const Materials& materials,
                                    const Sources& sources, const NewtonOptions& newton = {},
                                    int jobs = 1);

// Rebuilds the context a loaded model was trained with (verification mode).
OfflineContext context_for_model(const RbModel& model, int jobs = 1);

// Cached truth solve; tracks the flux range and re-certifies the curve when
// 2x the observed maximum exceeds the validated range.
TruthSolution offline_truth_solve(OfflineContext& ctx, const Vec& p,
                                  SnapshotStore* store = nullptr);

NonlinearityField nonlinearity_snapshot(const OfflineContext& ctx, const Vec& p,
                                        const Vec& u_free);

// ---------------------------------------------------------------------------
// Basis and tensor construction
// ---------------------------------------------------------------------------

// Appends the X̂-orthonormalized snapshot (two Gram-Schmidt passes). Returns
// false when the relative projection defect is below defect_tol (snapshot
// numerically in span).
bool gram_schmidt_insert(const SpMat& K, Mat& basis, const Vec& snapshot,
                         double defect_tol = 1e-10);

// Rebuilds all parameter-separable tensors and point data from the current
// basis and EIM approximation.
void rebuild_separable_tensors(RbModel& model, const OfflineContext& ctx);

// Raw residual piece vectors and their Riesz representatives, grown
// incrementally with the basis (columns ordered like residual_phi).
struct RieszWorkspace {
  Mat R;  // n_free x Q_r
  Mat Z;  // K^{-1} R
};

// Extends G_r from n_old to the current basis size (n_old = 0 also emits the
// load pieces). Entries are K^{-1}-weighted Gram products z_a' r_b, computed
// once per (a <= b) pair and mirrored.
void extend_residual_riesz(RbModel& model, const OfflineContext& ctx, RieszWorkspace& ws,
                           int n_old);

// Full Riesz rebuild (fresh workspace).
void assemble_residual_riesz(RbModel& model, const OfflineContext& ctx);

// ---------------------------------------------------------------------------
// Weak greedy
// ---------------------------------------------------------------------------

struct SweepResult {
  std::vector<ReducedSolution> solutions;
  std::vector<ErrorCertificate> certificates;
  double max_delta = 0.0;
  int argmax = -1;
};

// Online solves for all parameters (parallel), then one batched dual-norm
// evaluation; certificates in parameter order.
SweepResult estimator_sweep(const RbModel& model, const std::vector<Vec>& params, int jobs,
                            const ReducedOptions& reduced, NuLbTracker* tracker = nullptr);

struct GreedyOptions {
  double eps_rb = 1e-2;
  int n_max = 12;
  ReducedOptions reduced;
  NuLbMode nu_lb_mode = NuLbMode::certified_floor;
  double gs_defect_tol = 1e-10;
};

struct GreedyInfo {
  std::vector<double> eps_history;
  std::vector<Vec> selected;
  bool converged = false;
  std::vector<std::string> warnings;
};

// RB-Greedy: first snapshot at the box midpoint, then argmax of the online
// estimator over the training set until eps_rb or n_max. Truth failures skip
// the parameter (recorded); a span-rejected snapshot stops as stagnation.
RbModel greedy_build(OfflineContext& ctx, const std::vector<Vec>& train,
                     const EimApproximation& eim, const GreedyOptions& opts,
                     SnapshotStore& store, GreedyInfo* info = nullptr);

// ---------------------------------------------------------------------------
// Two-stage pipeline: truth-trained EIM -> greedy -> RB-trained EIM -> greedy.
// ---------------------------------------------------------------------------

struct StageSummary {
  std::vector<double> eim_history;
  std::vector<Vec> eim_params;
  std::vector<int> eim_magic;
  int eim_M = 0;
  bool eim_converged = false;
  GreedyInfo greedy;
  int N = 0;
  double final_sweep = 0.0;  // last recorded max-over-train estimator
};

struct PipelineOptions {
  std::vector<Vec> eim1_train;  // stage-1 EIM parameters (truth solves)
  std::vector<Vec> train;       // greedy / stage-2 EIM parameters
  double eps_eim = 0.5;
  int m_max = 30;
  GreedyOptions greedy;
};

struct PipelineResult {
  RbModel model;         // stage-2 model
  RbModel stage1_model;  // kept for stage-vs-stage comparisons
  StageSummary stage1, stage2;
};

PipelineResult run_offline_pipeline(OfflineContext& ctx, const PipelineOptions& opts,
                                    SnapshotStore& store);

}  // namespace rbms
