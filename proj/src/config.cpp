#include "rbms/config.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace rbms {

void RunConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw Error(std::string("config: ") + name + " must be positive");
  };
  positive(truth_newton_tol, "truth_newton_tol");
  positive(rb_newton_tol, "rb_newton_tol");
  positive(eps_eim, "eps_eim");
  positive(eps_rb, "eps_rb");
  positive(nu0, "nu0");
  positive(s_validate, "s_validate");
  if (refinement_level < 0) throw Error("config: refinement_level must be >= 0");
  if (n_max < 1 || m_max < 1) throw Error("config: n_max and m_max must be >= 1");
  for (const auto* g : {&eim1_grid, &train_grid, &test_grid})
    for (int v : *g)
      if (v < 1) throw Error("config: grid dims must be >= 1");
  if (curve != "analytic" && curve != "bh_table")
    throw Error("config: curve must be analytic|bh_table");
  if (test_sampling != "stratified" && test_sampling != "regular")
    throw Error("config: test_sampling must be stratified|regular");
  if (nu_lb_mode != "certified_floor" && nu_lb_mode != "heuristic")
    throw Error("config: nu_lb_mode must be certified_floor|heuristic");
  if (jacobian_mode != "picard" && jacobian_mode != "full")
    throw Error("config: jacobian_mode must be picard|full");
}

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<int> parse_grid(const std::string& v, int lineno) {
  std::istringstream is(v);
  std::vector<int> out;
  int x;
  while (is >> x) out.push_back(x);
  if (out.empty())
    throw Error("config line " + std::to_string(lineno) + ": expected grid dimensions");
  return out;
}

bool parse_bool(const std::string& v, int lineno) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw Error("config line " + std::to_string(lineno) + ": expected true|false");
}

std::string g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open config file '" + path + "'");
  RunConfig cfg;
  std::string line, section;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw Error("config line " + std::to_string(lineno) + ": malformed section");
      section = line.substr(1, line.size() - 2);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    const std::string qual = section.empty() ? key : section + "." + key;

    auto as_double = [&]() {
      try {
        return std::stod(val);
      } catch (...) {
        throw Error("config line " + std::to_string(lineno) + ": bad number '" + val + "'");
      }
    };
    auto as_int = [&]() { return static_cast<int>(as_double()); };

    if (qual == "run.output_dir") cfg.output_dir = val;
    else if (qual == "run.seed") cfg.seed = static_cast<std::uint64_t>(std::stoull(val));
    else if (qual == "run.jobs") cfg.jobs = as_int();
    else if (qual == "geometry.file") cfg.geometry = val;
    else if (qual == "geometry.refinement_level") cfg.refinement_level = as_int();
    else if (qual == "geometry.all_dirichlet") cfg.all_dirichlet = parse_bool(val, lineno);
    else if (qual == "material.curve") cfg.curve = val;
    else if (qual == "material.k1") cfg.k1 = as_double();
    else if (qual == "material.k2") cfg.k2 = as_double();
    else if (qual == "material.k3") cfg.k3 = as_double();
    else if (qual == "material.nu0") cfg.nu0 = as_double();
    else if (qual == "material.bh_table") cfg.bh_table = val;
    else if (qual == "material.s_validate") cfg.s_validate = as_double();
    else if (qual == "material.nu2_air") cfg.nu2_air = as_double();
    else if (qual == "material.nu2_magnet") cfg.nu2_magnet = as_double();
    else if (qual == "material.nu2_coil") cfg.nu2_coil = as_double();
    else if (qual == "sources.j_e_coil") cfg.j_e_coil = as_double();
    else if (qual == "sources.h_pm1") cfg.h_pm1 = as_double();
    else if (qual == "sources.h_pm2") cfg.h_pm2 = as_double();
    else if (qual == "tolerances.truth_newton_tol") cfg.truth_newton_tol = as_double();
    else if (qual == "tolerances.rb_newton_tol") cfg.rb_newton_tol = as_double();
    else if (qual == "tolerances.eps_eim") cfg.eps_eim = as_double();
    else if (qual == "tolerances.eps_rb") cfg.eps_rb = as_double();
    else if (qual == "grids.eim1_grid") cfg.eim1_grid = parse_grid(val, lineno);
    else if (qual == "grids.train_grid") cfg.train_grid = parse_grid(val, lineno);
    else if (qual == "grids.test_grid") cfg.test_grid = parse_grid(val, lineno);
    else if (qual == "grids.test_sampling") cfg.test_sampling = val;
    else if (qual == "caps.n_max") cfg.n_max = as_int();
    else if (qual == "caps.m_max") cfg.m_max = as_int();
    else if (qual == "modes.nu_lb_mode") cfg.nu_lb_mode = val;
    else if (qual == "modes.jacobian_mode") cfg.jacobian_mode = val;
    else if (qual == "modes.skip_delta_m") cfg.skip_delta_m = parse_bool(val, lineno);
    else
      throw Error("config line " + std::to_string(lineno) + ": unknown key '" + qual + "'");
  }
  cfg.validate();
  return cfg;
}

void save_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write config file '" + path + "'");
  f << "[run]\n";
  f << "output_dir = " << cfg.output_dir << "\n";
  f << "seed = " << cfg.seed << "\n";
  f << "jobs = " << cfg.jobs << "\n";
  f << "[geometry]\n";
  f << "file = " << cfg.geometry << "\n";
  f << "refinement_level = " << cfg.refinement_level << "\n";
  f << "all_dirichlet = " << (cfg.all_dirichlet ? "true" : "false") << "\n";
  f << "[material]\n";
  f << "curve = " << cfg.curve << "\n";
  f << "k1 = " << g17(cfg.k1) << "\n";
  f << "k2 = " << g17(cfg.k2) << "\n";
  f << "k3 = " << g17(cfg.k3) << "\n";
  f << "nu0 = " << g17(cfg.nu0) << "\n";
  if (!cfg.bh_table.empty()) f << "bh_table = " << cfg.bh_table << "\n";
  f << "s_validate = " << g17(cfg.s_validate) << "\n";
  f << "nu2_air = " << g17(cfg.nu2_air) << "\n";
  f << "nu2_magnet = " << g17(cfg.nu2_magnet) << "\n";
  f << "nu2_coil = " << g17(cfg.nu2_coil) << "\n";
  f << "[sources]\n";
  f << "j_e_coil = " << g17(cfg.j_e_coil) << "\n";
  f << "h_pm1 = " << g17(cfg.h_pm1) << "\n";
  f << "h_pm2 = " << g17(cfg.h_pm2) << "\n";
  f << "[tolerances]\n";
  f << "truth_newton_tol = " << g17(cfg.truth_newton_tol) << "\n";
  f << "rb_newton_tol = " << g17(cfg.rb_newton_tol) << "\n";
  f << "eps_eim = " << g17(cfg.eps_eim) << "\n";
  f << "eps_rb = " << g17(cfg.eps_rb) << "\n";
  f << "[grids]\n";
  auto grid = [&f](const char* name, const std::vector<int>& g) {
    f << name << " =";
    for (int v : g) f << " " << v;
    f << "\n";
  };
  grid("eim1_grid", cfg.eim1_grid);
  grid("train_grid", cfg.train_grid);
  grid("test_grid", cfg.test_grid);
  f << "test_sampling = " << cfg.test_sampling << "\n";
  f << "[caps]\n";
  f << "n_max = " << cfg.n_max << "\n";
  f << "m_max = " << cfg.m_max << "\n";
  f << "[modes]\n";
  f << "nu_lb_mode = " << cfg.nu_lb_mode << "\n";
  f << "jacobian_mode = " << cfg.jacobian_mode << "\n";
  f << "skip_delta_m = " << (cfg.skip_delta_m ? "true" : "false") << "\n";
}

MacroDecomposition config_geometry(const RunConfig& cfg) {
  if (cfg.geometry == "benchmark") return benchmark_cell();
  return load_geometry(cfg.geometry);
}

Materials config_materials(const RunConfig& cfg) {
  Materials mat;
  if (cfg.curve == "analytic") {
    mat.curve = ReluctivityCurve::analytic(cfg.k1, cfg.k2, cfg.k3, cfg.nu0);
  } else {
    if (cfg.bh_table.empty()) throw Error("config: bh_table path required for curve=bh_table");
    mat.curve = ReluctivityCurve::from_bh_table(load_bh_table(cfg.bh_table), cfg.nu0);
  }
  mat.bounds = mat.curve.validate(cfg.s_validate);
  mat.nu2[static_cast<std::size_t>(Region::air)] = cfg.nu2_air;
  mat.nu2[static_cast<std::size_t>(Region::magnet)] = cfg.nu2_magnet;
  mat.nu2[static_cast<std::size_t>(Region::coil)] = cfg.nu2_coil;
  return mat;
}

Sources config_sources(const RunConfig& cfg) {
  Sources s;
  s.j_e[static_cast<std::size_t>(Region::coil)] = cfg.j_e_coil;
  s.h_pm[static_cast<std::size_t>(Region::magnet)] = {cfg.h_pm1, cfg.h_pm2};
  return s;
}

NuLbMode config_nu_lb_mode(const RunConfig& cfg) {
  return cfg.nu_lb_mode == "heuristic" ? NuLbMode::heuristic : NuLbMode::certified_floor;
}

JacobianMode config_jacobian_mode(const RunConfig& cfg) {
  return cfg.jacobian_mode == "full" ? JacobianMode::full : JacobianMode::picard;
}

}  // namespace rbms
