#include "rbms/rb_model.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace rbms {

Vec residual_phi(const RbModel& model, const AffineMapSet& maps, const Vec& coeffs,
                 const Vec& phi) {
  const int N = model.N(), M = model.M(), L1 = model.L1(), L2 = model.L2();
  if (coeffs.size() != N) throw Error("residual_phi: coefficient length mismatch");
  if (phi.size() != M) throw Error("residual_phi: EIM coefficient length mismatch");
  Vec out(model.Q_r());
  Index q = 0;
  for (int k = 0; k < model.Q_f(); ++k)
    out[q++] = load_phi(model.load_meta[static_cast<std::size_t>(k)], maps);
  for (int n = 0; n < N; ++n) {
    const double un = coeffs[n];
    for (int m = 0; m < M; ++m) out[q++] = -un * phi[m];
    for (int m = 0; m < M; ++m) {
      for (int a = 0; a < L1; ++a) {
        const auto& map = maps.maps[static_cast<std::size_t>(model.iron_d[static_cast<std::size_t>(a)])];
        for (int i = 0; i < 2; ++i)
          for (int j = 0; j < 2; ++j) {
            const double chi = map.adet * map.G(i, j) - (i == j ? 1.0 : 0.0);
            out[q++] = -un * phi[m] * chi;
          }
      }
    }
    for (int a = 0; a < L2; ++a) {
      const int d = model.other_d[static_cast<std::size_t>(a)];
      const auto& map = maps.maps[static_cast<std::size_t>(d)];
      const double nu2 =
          model.materials.nu2_of(model.decomp.triangles[static_cast<std::size_t>(d)].region);
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) out[q++] = -un * nu2 * map.adet * map.G(i, j);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Binary container
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'R', 'B', 'M', 'S', 'M', 'D', 'L', '1'};
constexpr std::uint32_t kVersion = 1;

struct Writer {
  std::ofstream f;
  explicit Writer(const std::string& path) : f(path, std::ios::binary) {
    if (!f) throw Error("cannot write model container '" + path + "'");
  }
  void raw(const void* p, std::size_t n) { f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void i64(std::int64_t v) { raw(&v, 8); }
  void f64(double v) { raw(&v, 8); }
  void vec(const Vec& v) {
    i64(v.size());
    raw(v.data(), static_cast<std::size_t>(v.size()) * 8);
  }
  void mat(const Mat& m) {  // row-major payload
    i64(m.rows());
    i64(m.cols());
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) f64(m(r, c));
  }
  void ints(const std::vector<int>& v) {
    i64(static_cast<std::int64_t>(v.size()));
    for (int x : v) i64(x);
  }
  void str(const std::string& s) {
    i64(static_cast<std::int64_t>(s.size()));
    raw(s.data(), s.size());
  }
};

struct Reader {
  std::ifstream f;
  explicit Reader(const std::string& path) : f(path, std::ios::binary) {
    if (!f) throw Error("cannot open model container '" + path + "'");
  }
  void raw(void* p, std::size_t n) {
    f.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (f.gcount() != static_cast<std::streamsize>(n))
      throw Error("model container: truncated or corrupt");
  }
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, 4);
    return v;
  }
  std::int64_t i64() {
    std::int64_t v;
    raw(&v, 8);
    return v;
  }
  double f64() {
    double v;
    raw(&v, 8);
    return v;
  }
  Vec vec() {
    const std::int64_t n = i64();
    if (n < 0 || n > (1ll << 40)) throw Error("model container: truncated or corrupt");
    Vec v(n);
    raw(v.data(), static_cast<std::size_t>(n) * 8);
    return v;
  }
  Mat mat() {
    const std::int64_t r = i64(), c = i64();
    if (r < 0 || c < 0 || r * c > (1ll << 40)) throw Error("model container: truncated or corrupt");
    Mat m(r, c);
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < c; ++j) m(i, j) = f64();
    return m;
  }
  std::vector<int> ints() {
    const std::int64_t n = i64();
    if (n < 0 || n > (1ll << 32)) throw Error("model container: truncated or corrupt");
    std::vector<int> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = static_cast<int>(i64());
    return v;
  }
  std::string str() {
    const std::int64_t n = i64();
    if (n < 0 || n > (1ll << 24)) throw Error("model container: truncated or corrupt");
    std::string s(static_cast<std::size_t>(n), '\0');
    raw(s.data(), s.size());
    return s;
  }
};

void write_decomp(Writer& w, const MacroDecomposition& g) {
  w.i64(g.box.dims());
  w.vec(g.box.lower);
  w.vec(g.box.upper);
  w.vec(g.ref_param);
  w.i64(static_cast<std::int64_t>(g.ref_vertices.size()));
  for (const auto& v : g.ref_vertices) {
    w.f64(v.x());
    w.f64(v.y());
  }
  for (const auto& fn : g.vertex_fn) {
    w.f64(fn.offset.x());
    w.f64(fn.offset.y());
    w.mat(fn.coeff);
  }
  w.i64(static_cast<std::int64_t>(g.triangles.size()));
  for (const auto& t : g.triangles) {
    w.i64(t.v[0]);
    w.i64(t.v[1]);
    w.i64(t.v[2]);
    w.i64(t.iron ? 1 : 0);
    w.i64(static_cast<int>(t.region));
  }
  w.i64(static_cast<std::int64_t>(g.boundary.size()));
  for (const auto& s : g.boundary) {
    w.str(s.tag);
    w.i64(s.v0);
    w.i64(s.v1);
  }
}

MacroDecomposition read_decomp(Reader& r) {
  MacroDecomposition g;
  const std::int64_t dims = r.i64();
  (void)dims;
  g.box.lower = r.vec();
  g.box.upper = r.vec();
  g.ref_param = r.vec();
  const std::int64_t nv = r.i64();
  for (std::int64_t i = 0; i < nv; ++i) {
    const double x = r.f64(), y = r.f64();
    g.ref_vertices.emplace_back(x, y);
  }
  for (std::int64_t i = 0; i < nv; ++i) {
    VertexFunction fn;
    fn.offset.x() = r.f64();
    fn.offset.y() = r.f64();
    fn.coeff = r.mat();
    g.vertex_fn.push_back(fn);
  }
  const std::int64_t nt = r.i64();
  for (std::int64_t i = 0; i < nt; ++i) {
    MacroTriangle t;
    t.v[0] = static_cast<int>(r.i64());
    t.v[1] = static_cast<int>(r.i64());
    t.v[2] = static_cast<int>(r.i64());
    t.iron = r.i64() != 0;
    t.region = static_cast<Region>(r.i64());
    g.triangles.push_back(t);
  }
  const std::int64_t nb = r.i64();
  for (std::int64_t i = 0; i < nb; ++i) {
    BoundarySegment s;
    s.tag = r.str();
    s.v0 = static_cast<int>(r.i64());
    s.v1 = static_cast<int>(r.i64());
    g.boundary.push_back(s);
  }
  return g;
}

void write_materials(Writer& w, const Materials& m) {
  w.i64(static_cast<int>(m.curve.kind()));
  w.f64(m.curve.clamp_nu0());
  const auto k = m.curve.analytic_params();
  w.f64(k[0]);
  w.f64(k[1]);
  w.f64(k[2]);
  w.i64(static_cast<std::int64_t>(m.curve.knots_b().size()));
  for (double b : m.curve.knots_b()) w.f64(b);
  for (double h : m.curve.knots_h()) w.f64(h);
  w.f64(m.bounds.nu_lb);
  w.f64(m.bounds.nu0);
  w.f64(m.bounds.lipschitz);
  w.f64(m.bounds.s_max);
  for (double v : m.nu2) w.f64(v);
}

Materials read_materials(Reader& r) {
  Materials m;
  const auto kind = static_cast<ReluctivityCurve::Kind>(r.i64());
  const double clamp = r.f64();
  const double k1 = r.f64(), k2 = r.f64(), k3 = r.f64();
  const std::int64_t nk = r.i64();
  std::vector<std::pair<double, double>> bh(static_cast<std::size_t>(nk));
  for (auto& p : bh) p.first = r.f64();
  for (auto& p : bh) p.second = r.f64();
  if (kind == ReluctivityCurve::Kind::analytic)
    m.curve = ReluctivityCurve::analytic(k1, k2, k3, clamp);
  else
    m.curve = ReluctivityCurve::from_bh_table(bh, clamp);
  m.bounds.nu_lb = r.f64();
  m.bounds.nu0 = r.f64();
  m.bounds.lipschitz = r.f64();
  m.bounds.s_max = r.f64();
  for (double& v : m.nu2) v = r.f64();
  return m;
}

}  // namespace

void save_model(const RbModel& model, const std::string& path) {
  Writer w(path);
  w.raw(kMagic, 8);
  w.u32(kVersion);
  write_decomp(w, model.decomp);
  w.i64(model.level);
  w.i64(model.all_dirichlet ? 1 : 0);
  write_materials(w, model.materials);
  for (double v : model.sources.j_e) w.f64(v);
  for (const auto& h : model.sources.h_pm) {
    w.f64(h[0]);
    w.f64(h[1]);
  }

  w.mat(model.basis);
  w.i64(static_cast<std::int64_t>(model.selected_params.size()));
  for (const auto& p : model.selected_params) w.vec(p);
  w.i64(static_cast<std::int64_t>(model.eps_history.size()));
  for (double e : model.eps_history) w.f64(e);
  w.i64(model.greedy_converged ? 1 : 0);

  w.mat(model.eim.q);
  w.mat(model.eim.B);
  w.ints(model.eim.magic);
  w.i64(static_cast<std::int64_t>(model.eim.params.size()));
  for (const auto& p : model.eim.params) w.vec(p);
  w.i64(static_cast<std::int64_t>(model.eim.history.size()));
  for (double e : model.eim.history) w.f64(e);
  w.i64(model.eim.converged ? 1 : 0);

  w.ints(model.magic_tri);
  w.ints(model.magic_macro);
  w.mat(model.magic_gradx);
  w.mat(model.magic_grady);
  w.ints(model.iron_macro);
  w.mat(model.iron_gradx);
  w.mat(model.iron_grady);

  w.ints(model.iron_d);
  w.ints(model.other_d);
  w.i64(static_cast<std::int64_t>(model.nl_blocks.size()));
  for (const auto& b : model.nl_blocks) w.mat(b);
  w.i64(static_cast<std::int64_t>(model.lin_blocks.size()));
  for (const auto& b : model.lin_blocks) w.mat(b);
  w.i64(static_cast<std::int64_t>(model.load_blocks.size()));
  for (const auto& b : model.load_blocks) w.vec(b);
  for (const auto& meta : model.load_meta) {
    w.i64(static_cast<int>(meta.kind));
    w.i64(meta.macro_d);
    w.i64(meta.i);
  }

  // G_r: symmetric, stored as the upper triangle
  w.i64(model.G_r.rows());
  for (Index i = 0; i < model.G_r.rows(); ++i)
    for (Index j = i; j < model.G_r.cols(); ++j) w.f64(model.G_r(i, j));

  w.i64(static_cast<int>(model.nu_lb_mode));
}

RbModel load_model(const std::string& path) {
  Reader r(path);
  char magic[8];
  r.raw(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) throw Error("model container: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    throw Error("model container: version " + std::to_string(version) + " unsupported");

  RbModel m;
  m.decomp = read_decomp(r);
  m.level = static_cast<int>(r.i64());
  m.all_dirichlet = r.i64() != 0;
  m.materials = read_materials(r);
  for (double& v : m.sources.j_e) v = r.f64();
  for (auto& h : m.sources.h_pm) {
    h[0] = r.f64();
    h[1] = r.f64();
  }

  m.basis = r.mat();
  const std::int64_t nsel = r.i64();
  for (std::int64_t i = 0; i < nsel; ++i) m.selected_params.push_back(r.vec());
  const std::int64_t neps = r.i64();
  for (std::int64_t i = 0; i < neps; ++i) m.eps_history.push_back(r.f64());
  m.greedy_converged = r.i64() != 0;

  m.eim.q = r.mat();
  m.eim.B = r.mat();
  m.eim.magic = r.ints();
  const std::int64_t nep = r.i64();
  for (std::int64_t i = 0; i < nep; ++i) m.eim.params.push_back(r.vec());
  const std::int64_t neh = r.i64();
  for (std::int64_t i = 0; i < neh; ++i) m.eim.history.push_back(r.f64());
  m.eim.converged = r.i64() != 0;

  m.magic_tri = r.ints();
  m.magic_macro = r.ints();
  m.magic_gradx = r.mat();
  m.magic_grady = r.mat();
  m.iron_macro = r.ints();
  m.iron_gradx = r.mat();
  m.iron_grady = r.mat();

  m.iron_d = r.ints();
  m.other_d = r.ints();
  const std::int64_t nnl = r.i64();
  for (std::int64_t i = 0; i < nnl; ++i) m.nl_blocks.push_back(r.mat());
  const std::int64_t nlin = r.i64();
  for (std::int64_t i = 0; i < nlin; ++i) m.lin_blocks.push_back(r.mat());
  const std::int64_t nload = r.i64();
  for (std::int64_t i = 0; i < nload; ++i) m.load_blocks.push_back(r.vec());
  for (std::int64_t i = 0; i < nload; ++i) {
    LoadPieceMeta meta;
    meta.kind = static_cast<LoadPieceMeta::Kind>(r.i64());
    meta.macro_d = static_cast<int>(r.i64());
    meta.i = static_cast<int>(r.i64());
    m.load_meta.push_back(meta);
  }

  const std::int64_t qr = r.i64();
  m.G_r = Mat(qr, qr);
  for (Index i = 0; i < qr; ++i)
    for (Index j = i; j < qr; ++j) {
      const double v = r.f64();
      m.G_r(i, j) = v;
      m.G_r(j, i) = v;
    }

  m.nu_lb_mode = static_cast<NuLbMode>(r.i64());
  return m;
}

RbModel truncate_model(const RbModel& model, int n_new, int m_new) {
  if (n_new < 1 || n_new > model.N() || m_new < 1 || m_new > model.M())
    throw Error("truncate_model: invalid target dimensions");
  if (n_new == model.N() && m_new == model.M()) return model;
  const int N = model.N(), M = model.M(), L1 = model.L1(), L2 = model.L2();

  RbModel out = model;
  out.basis = model.basis.leftCols(n_new);
  out.selected_params.assign(model.selected_params.begin(),
                             model.selected_params.begin() + n_new);
  out.eps_history.assign(model.eps_history.begin(),
                         model.eps_history.begin() +
                             std::min<std::size_t>(model.eps_history.size(),
                                                   static_cast<std::size_t>(n_new)));
  out.greedy_converged = (n_new == N) && model.greedy_converged;

  out.eim = eim_truncate(model.eim, m_new);
  out.magic_tri.assign(model.magic_tri.begin(), model.magic_tri.begin() + m_new);
  out.magic_macro.assign(model.magic_macro.begin(), model.magic_macro.begin() + m_new);
  out.magic_gradx = model.magic_gradx.topLeftCorner(m_new, n_new);
  out.magic_grady = model.magic_grady.topLeftCorner(m_new, n_new);
  out.iron_gradx = model.iron_gradx.leftCols(n_new);
  out.iron_grady = model.iron_grady.leftCols(n_new);

  out.nl_blocks.clear();
  for (int m = 0; m < m_new; ++m)
    for (int a = 0; a < L1; ++a)
      for (int k = 0; k < 4; ++k)
        out.nl_blocks.push_back(
            model.nl_blocks[static_cast<std::size_t>((m * L1 + a) * 4 + k)].topLeftCorner(n_new,
                                                                                          n_new));
  out.lin_blocks.clear();
  for (const auto& b : model.lin_blocks) out.lin_blocks.push_back(b.topLeftCorner(n_new, n_new));
  out.load_blocks.clear();
  for (const auto& b : model.load_blocks) out.load_blocks.push_back(b.head(n_new));

  // gather the surviving residual pieces
  std::vector<Index> keep;
  for (int q = 0; q < model.Q_f(); ++q) keep.push_back(q);
  const Index stride = model.pieces_per_basis();
  for (int n = 0; n < n_new; ++n) {
    const Index base = model.Q_f() + n * stride;
    for (int m = 0; m < m_new; ++m) keep.push_back(base + m);
    for (int m = 0; m < m_new; ++m)
      for (int k = 0; k < 4 * L1; ++k) keep.push_back(base + M + m * 4 * L1 + k);
    for (int k = 0; k < 4 * L2; ++k) keep.push_back(base + M + 4 * M * L1 + k);
  }
  Mat G(static_cast<Index>(keep.size()), static_cast<Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i)
    for (std::size_t j = 0; j < keep.size(); ++j)
      G(static_cast<Index>(i), static_cast<Index>(j)) = model.G_r(keep[i], keep[j]);
  out.G_r = std::move(G);
  return out;
}

}  // namespace rbms
