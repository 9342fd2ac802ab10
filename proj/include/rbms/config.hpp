#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rbms/geometry.hpp"
#include "rbms/material.hpp"
#include "rbms/rb_model.hpp"
#include "rbms/types.hpp"

namespace rbms {

// Structured run configuration (INI-style text file, sections below).
// Grids, caps and tolerances default to the desk-scale benchmark.
struct RunConfig {
  // [run]
  std::string output_dir = "out";
  std::uint64_t seed = 1;
  int jobs = 0;  // 0 = hardware concurrency

  // [geometry]
  std::string geometry = "benchmark";  // "benchmark" or a geometry file path
  int refinement_level = 3;
  bool all_dirichlet = false;

  // [material]
  std::string curve = "analytic";  // analytic | bh_table
  double k1 = 120.0, k2 = 80.0, k3 = 2.0;
  double nu0 = 7.95e5;
  std::string bh_table;
  double s_validate = 1.5;
  double nu2_air = 7.95e5, nu2_magnet = 7.95e5, nu2_coil = 7.95e5;

  // [sources]
  double j_e_coil = 0.0;
  double h_pm1 = 0.0;
  double h_pm2 = 5e5;

  // [tolerances]
  double truth_newton_tol = 1e-4;
  double rb_newton_tol = 1e-5;
  double eps_eim = 0.5;
  double eps_rb = 1e-2;

  // [grids]
  std::vector<int> eim1_grid{3, 3, 3};
  std::vector<int> train_grid{5, 5, 5};
  std::vector<int> test_grid{4, 4, 4};
  std::string test_sampling = "stratified";  // stratified | regular

  // [caps]
  int n_max = 12;
  int m_max = 30;

  // [modes]
  std::string nu_lb_mode = "certified_floor";  // certified_floor | heuristic
  std::string jacobian_mode = "picard";        // picard | full
  bool skip_delta_m = false;

  void validate() const;  // throws on inconsistent values
};

RunConfig load_config(const std::string& path);
void save_config(const RunConfig& cfg, const std::string& path);

MacroDecomposition config_geometry(const RunConfig& cfg);
Materials config_materials(const RunConfig& cfg);  // validates the curve
Sources config_sources(const RunConfig& cfg);
NuLbMode config_nu_lb_mode(const RunConfig& cfg);
JacobianMode config_jacobian_mode(const RunConfig& cfg);

}  // namespace rbms
