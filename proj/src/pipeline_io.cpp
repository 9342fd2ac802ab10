#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "rbms/driver.hpp"
#include "rbms/parallel.hpp"

namespace rbms {

namespace {

namespace fs = std::filesystem;

std::string g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string param_cols(const Vec& p) {
  std::ostringstream os;
  for (Index i = 0; i < p.size(); ++i) os << (i ? "," : "") << g17(p[i]);
  return os.str();
}

std::string param_header(Index dims) {
  std::ostringstream os;
  for (Index i = 0; i < dims; ++i) os << (i ? "," : "") << "p" << (i + 1);
  return os.str();
}

double ms_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

void write_eim_history(const std::string& path, const StageSummary& s, Index dims) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write '" + path + "'");
  f << "m,delta_max," << param_header(dims) << "\n";
  for (std::size_t k = 0; k < s.eim_history.size(); ++k) {
    f << k << "," << g17(s.eim_history[k]);
    if (k < s.eim_params.size())
      f << "," << param_cols(s.eim_params[k]);
    else
      for (Index i = 0; i < dims; ++i) f << ",";
    f << "\n";
  }
}

void write_greedy_history(const std::string& path, const StageSummary& s, Index dims) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write '" + path + "'");
  f << "N,eps," << param_header(dims) << "\n";
  for (std::size_t k = 0; k < s.greedy.eps_history.size(); ++k) {
    f << (k + 1) << "," << g17(s.greedy.eps_history[k]);
    if (k < s.greedy.selected.size())
      f << "," << param_cols(s.greedy.selected[k]);
    else
      for (Index i = 0; i < dims; ++i) f << ",";
    f << "\n";
  }
}

}  // namespace

OfflineContext context_from_config(const RunConfig& cfg) {
  cfg.validate();
  const MacroDecomposition decomp = config_geometry(cfg);
  const DecompositionReport report = validate_decomposition(decomp, box_corners(decomp.box));
  if (!report.pass) {
    std::string msg = "geometry '" + cfg.geometry + "' failed validation:";
    for (const auto& f : report.failures) msg += "\n  " + f;
    throw Error(msg);
  }
  NewtonOptions newton;
  newton.tol = cfg.truth_newton_tol;
  return make_offline_context(decomp, cfg.refinement_level, cfg.all_dirichlet,
                              config_materials(cfg), config_sources(cfg), newton, cfg.jobs);
}

std::vector<Vec> train_params(const RunConfig& cfg, const ParameterBox& box) {
  return regular_grid(box, cfg.train_grid);
}

std::vector<Vec> test_params(const RunConfig& cfg, const ParameterBox& box) {
  if (cfg.test_sampling == "regular") return regular_grid(box, cfg.test_grid);
  return stratified_grid(box, cfg.test_grid, cfg.seed);
}

ReducedOptions reduced_options(const RunConfig& cfg) {
  ReducedOptions opts;
  opts.tol = cfg.rb_newton_tol;
  opts.mode = config_jacobian_mode(cfg);
  return opts;
}

OfflineOutputs cmd_offline(const RunConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.output_dir);
  save_config(cfg, (fs::path(cfg.output_dir) / "config.resolved.cfg").string());

  OfflineContext ctx = context_from_config(cfg);

  PipelineOptions opts;
  opts.eim1_train = regular_grid(ctx.decomp.box, cfg.eim1_grid);
  opts.train = train_params(cfg, ctx.decomp.box);
  opts.eps_eim = cfg.eps_eim;
  opts.m_max = cfg.m_max;
  opts.greedy.eps_rb = cfg.eps_rb;
  opts.greedy.n_max = cfg.n_max;
  opts.greedy.reduced = reduced_options(cfg);
  opts.greedy.nu_lb_mode = config_nu_lb_mode(cfg);

  SnapshotStore store;
  PipelineResult pipeline = run_offline_pipeline(ctx, opts, store);

  OfflineOutputs out;
  out.model_path = (fs::path(cfg.output_dir) / "model.rbm").string();
  out.snapshots_path = (fs::path(cfg.output_dir) / "snapshots.bin").string();
  save_model(pipeline.model, out.model_path);
  store.save(out.snapshots_path);

  const Index dims = ctx.decomp.box.dims();
  write_eim_history((fs::path(cfg.output_dir) / "eim1_history.csv").string(), pipeline.stage1, dims);
  write_eim_history((fs::path(cfg.output_dir) / "eim2_history.csv").string(), pipeline.stage2, dims);
  write_greedy_history((fs::path(cfg.output_dir) / "greedy1_history.csv").string(),
                       pipeline.stage1, dims);
  write_greedy_history((fs::path(cfg.output_dir) / "greedy2_history.csv").string(),
                       pipeline.stage2, dims);

  std::ofstream sum((fs::path(cfg.output_dir) / "summary.txt").string());
  const RbModel& m = pipeline.model;
  sum << "n_free " << ctx.space.n_free << "\n";
  sum << "n_tris " << ctx.mesh.n_tris() << "\n";
  sum << "N " << m.N() << "\nM " << m.M() << "\nL1 " << m.L1() << "\nL2 " << m.L2() << "\n";
  sum << "Q_f " << m.Q_f() << "\nQ_r " << m.Q_r() << "\n";
  sum << "nu_lb_floor " << g17(m.nu_lb_floor()) << "\n";
  sum << "nu0_cert " << g17(m.materials.bounds.nu0) << "\n";
  sum << "s_max_validated " << g17(m.materials.bounds.s_max) << "\n";
  sum << "max_s_seen " << g17(ctx.max_s_seen) << "\n";
  sum << "stage1_N " << pipeline.stage1.N << "\nstage1_M " << pipeline.stage1.eim_M << "\n";
  sum << "stage1_final_sweep " << g17(pipeline.stage1.final_sweep) << "\n";
  sum << "stage1_converged " << (pipeline.stage1.greedy.converged ? 1 : 0) << "\n";
  sum << "stage2_final_sweep " << g17(pipeline.stage2.final_sweep) << "\n";
  sum << "stage2_converged " << (pipeline.stage2.greedy.converged ? 1 : 0) << "\n";
  for (const auto& w : pipeline.stage1.greedy.warnings) sum << "stage1_warning " << w << "\n";
  for (const auto& w : pipeline.stage2.greedy.warnings) sum << "stage2_warning " << w << "\n";

  out.pipeline = std::move(pipeline);
  return out;
}

TruthSolution cmd_truth(const RunConfig& cfg, const Vec& p, bool export_field) {
  OfflineContext ctx = context_from_config(cfg);
  if (!ctx.decomp.box.contains(p)) throw Error("cmd_truth: parameter outside the box");
  fs::create_directories(cfg.output_dir);
  const std::string store_path = (fs::path(cfg.output_dir) / "snapshots.bin").string();
  SnapshotStore store;
  if (fs::exists(store_path)) store = SnapshotStore::load(store_path);
  TruthSolution sol = offline_truth_solve(ctx, p, &store);
  store.save(store_path);
  if (export_field) {
    fs::create_directories(cfg.output_dir);
    std::ostringstream name;
    name << "truth";
    for (Index i = 0; i < p.size(); ++i) name << "_" << p[i];
    name << ".csv";
    save_field(ctx.mesh, ctx.space, sol.u, (fs::path(cfg.output_dir) / name.str()).string());
  }
  return sol;
}

std::string cmd_mesh(const RunConfig& cfg) {
  OfflineContext ctx = context_from_config(cfg);
  fs::create_directories(cfg.output_dir);
  const std::string path = (fs::path(cfg.output_dir) / "mesh.txt").string();
  save_mesh(ctx.mesh, path);
  return path;
}

std::vector<OnlineRow> cmd_online(const RunConfig& cfg, const RbModel& model,
                                  const std::vector<Vec>& params, bool export_fields) {
  fs::create_directories(cfg.output_dir);
  for (const auto& p : params)
    if (!model.decomp.box.contains(p))
      throw Error("cmd_online: parameter outside the box: " + param_cols(p));

  const ReducedOptions ropts = reduced_options(cfg);
  std::vector<OnlineRow> rows(params.size());
  NuLbTracker tracker;
  for (std::size_t j = 0; j < params.size(); ++j) {
    OnlineRow row;
    row.p = params[j];
    const ReducedSolution sol = reduced_newton(model, params[j], ropts);
    EstimateOptions eopts;
    eopts.skip_delta_m = cfg.skip_delta_m;
    eopts.tracker = model.nu_lb_mode == NuLbMode::heuristic ? &tracker : nullptr;
    row.cert = estimate_error(model, sol, eopts);
    row.N = model.N();
    row.M = model.M();
    row.iterations = sol.iterations;
    row.solve_ms = sol.solve_ms;
    rows[j] = row;
    if (export_fields) {
      OfflineContext ctx = context_from_config(cfg);
      std::ostringstream name;
      name << "online";
      for (Index i = 0; i < row.p.size(); ++i) name << "_" << row.p[i];
      name << ".csv";
      save_field(ctx.mesh, ctx.space, lift(model, sol.coeffs),
                 (fs::path(cfg.output_dir) / name.str()).string());
    }
  }

  std::ofstream f((fs::path(cfg.output_dir) / "online.csv").string());
  f << param_header(model.decomp.box.dims())
    << ",N,M,iterations,delta,delta_rb,delta_eim,delta_m,nu_lb_used,solve_ms,estimate_ms\n";
  for (const auto& row : rows) {
    f << param_cols(row.p) << "," << row.N << "," << row.M << "," << row.iterations << ","
      << g17(row.cert.delta) << "," << g17(row.cert.delta_rb) << "," << g17(row.cert.delta_eim)
      << "," << g17(row.cert.delta_m) << "," << g17(row.cert.nu_lb_used) << ","
      << g17(row.solve_ms) << "," << g17(row.cert.estimate_ms) << "\n";
  }
  return rows;
}

VerifyResult cmd_verify(const RunConfig& cfg, const RbModel& model) {
  fs::create_directories(cfg.output_dir);
  OfflineContext ctx = context_for_model(model, cfg.jobs);
  ctx.newton.tol = cfg.truth_newton_tol;
  const std::vector<Vec> params = test_params(cfg, model.decomp.box);
  const Index P = static_cast<Index>(params.size());
  const Index dims = model.decomp.box.dims();

  // truth solutions for every test parameter
  std::vector<TruthSolution> truths(static_cast<std::size_t>(P));
  std::vector<std::string> failures(static_cast<std::size_t>(P));
  parallel_for(P, ctx.jobs, [&](Index j) {
    try {
      const AffineMapSet maps = build_affine_maps(ctx.decomp, params[static_cast<std::size_t>(j)]);
      truths[static_cast<std::size_t>(j)] =
          newton_solve(ctx.mesh, ctx.space, maps, ctx.materials, ctx.sources, ctx.newton);
    } catch (const std::exception& e) {
      failures[static_cast<std::size_t>(j)] = e.what();
    }
  });

  VerifyResult out;
  out.params = params;

  // full-model certificates
  const SweepResult sweep = estimator_sweep(model, params, ctx.jobs, reduced_options(cfg));
  for (Index j = 0; j < P; ++j) {
    if (!failures[static_cast<std::size_t>(j)].empty()) {
      ++out.truth_failures;
      continue;
    }
    VerifyRow row;
    row.p = params[static_cast<std::size_t>(j)];
    const auto& cert = sweep.certificates[static_cast<std::size_t>(j)];
    const auto& sol = sweep.solutions[static_cast<std::size_t>(j)];
    row.delta = cert.delta;
    row.delta_rb = cert.delta_rb;
    row.delta_eim = cert.delta_eim;
    row.c1 = cert.c1;
    row.c2 = cert.c2;
    row.delta_m = cert.delta_m;
    row.nu_lb_used = cert.nu_lb_used;
    row.true_err =
        x_norm(ctx.space, truths[static_cast<std::size_t>(j)].u - lift(model, sol.coeffs));
    const Effectivity eff = effectivity(cert, row.true_err);
    row.eta = eff.eta;
    row.eta_guard = eff.exact_within_precision;
    row.rigor_ok = row.delta >= row.true_err;
    if (!row.rigor_ok) ++out.rigor_violations;
    row.online_iterations = sol.iterations;
    row.truth_iterations = truths[static_cast<std::size_t>(j)].iterations;
    out.rows.push_back(row);
  }

  // Table-1-shaped truncation sweep
  std::vector<std::pair<int, int>> truncs;
  for (int n = 2; n < model.N(); n += 2) truncs.emplace_back(n, model.M());
  truncs.emplace_back(model.N(), model.M());
  if (model.M() >= 3) {
    truncs.emplace_back(model.N(), std::max(1, (2 * model.M()) / 3));
    truncs.emplace_back(model.N(), std::max(1, model.M() / 3));
  }
  for (const auto& [n, m] : truncs) {
    const RbModel sub = truncate_model(model, n, m);
    const SweepResult s = estimator_sweep(sub, params, ctx.jobs, reduced_options(cfg));
    TruncRow row;
    row.N = n;
    row.M = m;
    double sum_delta = 0.0, sum_eta = 0.0;
    int n_eta = 0;
    for (Index j = 0; j < P; ++j) {
      if (!failures[static_cast<std::size_t>(j)].empty()) continue;
      const double delta = s.certificates[static_cast<std::size_t>(j)].delta;
      row.max_delta = std::max(row.max_delta, delta);
      sum_delta += delta;
      const double err = x_norm(
          ctx.space, truths[static_cast<std::size_t>(j)].u -
                         lift(sub, s.solutions[static_cast<std::size_t>(j)].coeffs));
      if (err >= 1e-14) {
        const double eta = delta / err;
        sum_eta += eta;
        row.max_eta = std::max(row.max_eta, eta);
        ++n_eta;
      }
    }
    const int n_ok = static_cast<int>(out.rows.size());
    row.mean_delta = n_ok ? sum_delta / n_ok : 0.0;
    row.mean_eta = n_eta ? sum_eta / n_eta : 0.0;
    out.table1.push_back(row);
  }

  // Fig-2-shaped convergence data
  std::vector<int> m_values;
  if (model.M() >= 3) m_values.push_back(std::max(1, model.M() / 3));
  if (model.M() >= 2) m_values.push_back(std::max(1, (2 * model.M()) / 3));
  m_values.push_back(model.M());
  std::ofstream conv((fs::path(cfg.output_dir) / "convergence.csv").string());
  conv << "M,N,max_delta\n";
  std::ofstream split((fs::path(cfg.output_dir) / "estimator_split.csv").string());
  split << "N,max_delta_rb,max_delta_eim\n";
  for (int mv : m_values) {
    for (int n = 1; n <= model.N(); ++n) {
      const RbModel sub = truncate_model(model, n, mv);
      const SweepResult s = estimator_sweep(sub, params, ctx.jobs, reduced_options(cfg));
      double maxd = 0.0, max_rb = 0.0, max_eim = 0.0;
      for (const auto& cert : s.certificates) {
        maxd = std::max(maxd, cert.delta);
        max_rb = std::max(max_rb, cert.delta_rb);
        max_eim = std::max(max_eim, cert.delta_eim);
      }
      conv << mv << "," << n << "," << g17(maxd) << "\n";
      if (mv == model.M()) split << n << "," << g17(max_rb) << "," << g17(max_eim) << "\n";
    }
  }

  // per-test CSV
  std::ofstream pt((fs::path(cfg.output_dir) / "verify_per_test.csv").string());
  pt << param_header(dims)
     << ",delta,delta_rb,delta_eim,true_err,eta,rigor_ok,online_iters,truth_iters\n";
  for (const auto& row : out.rows) {
    pt << param_cols(row.p) << "," << g17(row.delta) << "," << g17(row.delta_rb) << ","
       << g17(row.delta_eim) << "," << g17(row.true_err) << "," << g17(row.eta) << ","
       << (row.rigor_ok ? 1 : 0) << "," << row.online_iterations << "," << row.truth_iterations
       << "\n";
  }

  std::ofstream t1((fs::path(cfg.output_dir) / "verify_table1.csv").string());
  t1 << "N,M,max_delta,mean_delta,mean_eta,max_eta\n";
  for (const auto& row : out.table1)
    t1 << row.N << "," << row.M << "," << g17(row.max_delta) << "," << g17(row.mean_delta) << ","
       << g17(row.mean_eta) << "," << g17(row.max_eta) << "\n";

  std::ofstream vs((fs::path(cfg.output_dir) / "verify_summary.txt").string());
  vs << "test_params " << P << "\n";
  vs << "truth_failures " << out.truth_failures << "\n";
  vs << "rigor_violations " << out.rigor_violations << "\n";
  vs << "nu_lb_mode "
     << (model.nu_lb_mode == NuLbMode::certified_floor ? "certified_floor" : "heuristic") << "\n";
  return out;
}

BenchResult cmd_bench(const RunConfig& cfg, const RbModel& model) {
  fs::create_directories(cfg.output_dir);
  OfflineContext ctx = context_for_model(model, cfg.jobs);
  ctx.newton.tol = cfg.truth_newton_tol;
  std::vector<Vec> params = test_params(cfg, model.decomp.box);
  if (params.size() < 20) {
    const auto extra = regular_grid(model.decomp.box, {3, 3, 3});
    params.insert(params.end(), extra.begin(), extra.end());
  }
  if (params.size() > 20) params.resize(20);

  BenchResult out;
  out.n_params = static_cast<int>(params.size());
  const ReducedOptions ropts = reduced_options(cfg);

  for (const auto& p : params) {
    const auto t0 = std::chrono::steady_clock::now();
    const AffineMapSet maps = build_affine_maps(ctx.decomp, p);
    (void)newton_solve(ctx.mesh, ctx.space, maps, ctx.materials, ctx.sources, ctx.newton);
    out.truth_ms += ms_since(t0);

    const auto t1 = std::chrono::steady_clock::now();
    const ReducedSolution sol = reduced_newton(model, p, ropts);
    out.online_ms += ms_since(t1);

    const auto t2 = std::chrono::steady_clock::now();
    (void)estimate_error(model, sol);
    out.online_with_estimator_ms += ms_since(t2);
  }
  out.truth_ms /= out.n_params;
  out.online_ms /= out.n_params;
  out.online_with_estimator_ms = out.online_ms + out.online_with_estimator_ms / out.n_params;
  out.speedup_plain = out.truth_ms / out.online_ms;
  out.speedup_with_estimator = out.truth_ms / out.online_with_estimator_ms;

  std::ofstream f((fs::path(cfg.output_dir) / "bench.txt").string());
  f << "params " << out.n_params << "\n";
  f << "mean_truth_ms " << out.truth_ms << "\n";
  f << "mean_online_ms " << out.online_ms << "\n";
  f << "mean_online_with_estimator_ms " << out.online_with_estimator_ms << "\n";
  f << "speedup_plain " << out.speedup_plain << "\n";
  f << "speedup_with_estimator " << out.speedup_with_estimator << "\n";
  return out;
}

std::vector<Vec> load_param_list(const std::string& path, Index dims) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open parameter list '" + path + "'");
  std::vector<Vec> out;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream is(line);
    std::vector<double> vals;
    double x;
    while (is >> x) vals.push_back(x);
    if (vals.empty()) continue;
    if (static_cast<Index>(vals.size()) != dims)
      throw Error("parameter list '" + path + "', line " + std::to_string(lineno) +
                  ": expected " + std::to_string(dims) + " values");
    Vec p(dims);
    for (Index i = 0; i < dims; ++i) p[i] = vals[static_cast<std::size_t>(i)];
    out.push_back(p);
  }
  return out;
}

}  // namespace rbms
