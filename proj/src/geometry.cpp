#include "rbms/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace rbms {

Region region_from_string(const std::string& s) {
  if (s == "air") return Region::air;
  if (s == "magnet") return Region::magnet;
  if (s == "coil") return Region::coil;
  if (s == "iron") return Region::iron;
  throw Error("unknown region tag '" + s + "'");
}

std::string to_string(Region r) {
  switch (r) {
    case Region::air: return "air";
    case Region::magnet: return "magnet";
    case Region::coil: return "coil";
    case Region::iron: return "iron";
  }
  return "?";
}

int MacroDecomposition::count_iron() const {
  int n = 0;
  for (const auto& t : triangles) n += t.iron ? 1 : 0;
  return n;
}

int MacroDecomposition::count_other() const {
  return static_cast<int>(triangles.size()) - count_iron();
}

std::vector<int> MacroDecomposition::iron_macros() const {
  std::vector<int> out;
  for (int d = 0; d < static_cast<int>(triangles.size()); ++d)
    if (triangles[static_cast<std::size_t>(d)].iron) out.push_back(d);
  return out;
}

std::vector<int> MacroDecomposition::other_macros() const {
  std::vector<int> out;
  for (int d = 0; d < static_cast<int>(triangles.size()); ++d)
    if (!triangles[static_cast<std::size_t>(d)].iron) out.push_back(d);
  return out;
}

std::pair<double, double> spd_eigenvalues(const Mat2& G) {
  const double mean = 0.5 * (G(0, 0) + G(1, 1));
  const double half_diff = 0.5 * (G(0, 0) - G(1, 1));
  const double disc = std::sqrt(half_diff * half_diff + G(0, 1) * G(0, 1));
  return {mean - disc, mean + disc};
}

namespace {

// 2x2 solve C * Eref = Ep via the adjugate. The term ordering is chosen so
// that Ep == Eref (bitwise) yields the exact identity matrix.
Mat2 solve_map_matrix(const Mat2& Eref, const Mat2& Ep, int d) {
  const double r00 = Eref(0, 0), r01 = Eref(0, 1), r10 = Eref(1, 0), r11 = Eref(1, 1);
  const double det = r00 * r11 - r01 * r10;
  if (det == 0.0)
    throw Error("build_affine_maps: degenerate reference triangle d=" + std::to_string(d));
  Mat2 C;
  C(0, 0) = (Ep(0, 0) * r11 - Ep(0, 1) * r10) / det;
  C(0, 1) = (Ep(0, 1) * r00 - Ep(0, 0) * r01) / det;
  C(1, 0) = (Ep(1, 0) * r11 - Ep(1, 1) * r10) / det;
  C(1, 1) = (Ep(1, 1) * r00 - Ep(1, 0) * r01) / det;
  return C;
}

Mat2 inverse2(const Mat2& C, double det) {
  Mat2 inv;
  inv(0, 0) = C(1, 1) / det;
  inv(0, 1) = -C(0, 1) / det;
  inv(1, 0) = -C(1, 0) / det;
  inv(1, 1) = C(0, 0) / det;
  return inv;
}

}  // namespace

AffineMapSet build_affine_maps(const MacroDecomposition& decomp, const Vec& p) {
  if (!decomp.box.contains(p))
    throw Error("build_affine_maps: parameter outside the box");
  AffineMapSet out;
  out.p = p;
  out.maps.resize(decomp.triangles.size());
  for (std::size_t d = 0; d < decomp.triangles.size(); ++d) {
    const auto& tri = decomp.triangles[d];
    const Vec2 r0 = decomp.ref_vertices[static_cast<std::size_t>(tri.v[0])];
    const Vec2 r1 = decomp.ref_vertices[static_cast<std::size_t>(tri.v[1])];
    const Vec2 r2 = decomp.ref_vertices[static_cast<std::size_t>(tri.v[2])];
    const Vec2 v0 = decomp.vertex_fn[static_cast<std::size_t>(tri.v[0])].at(p);
    const Vec2 v1 = decomp.vertex_fn[static_cast<std::size_t>(tri.v[1])].at(p);
    const Vec2 v2 = decomp.vertex_fn[static_cast<std::size_t>(tri.v[2])].at(p);
    Mat2 Eref, Ep;
    Eref.col(0) = r1 - r0;
    Eref.col(1) = r2 - r0;
    Ep.col(0) = v1 - v0;
    Ep.col(1) = v2 - v0;

    AffineMap& m = out.maps[d];
    m.C = solve_map_matrix(Eref, Ep, static_cast<int>(d));
    m.z = v0 - m.C * r0;
    const double det = m.C(0, 0) * m.C(1, 1) - m.C(0, 1) * m.C(1, 0);
    if (std::abs(det) <= 1e-14)
      throw Error("build_affine_maps: degenerate macro-triangle d=" + std::to_string(d) +
                  " (|det C| = " + std::to_string(std::abs(det)) + ")");
    m.adet = std::abs(det);
    m.Cinv = inverse2(m.C, det);
    m.G = m.Cinv * m.Cinv.transpose();
  }
  return out;
}

std::pair<double, double> geometric_constants(const AffineMapSet& maps) {
  double c1 = std::numeric_limits<double>::infinity();
  double c2 = 0.0;
  for (const auto& m : maps.maps) {
    const auto [lmin, lmax] = spd_eigenvalues(m.G);
    c1 = std::min(c1, lmin * m.adet);
    c2 = std::max(c2, lmax * m.adet);
  }
  return {c1, c2};
}

namespace {

std::string param_str(const Vec& p) {
  std::ostringstream os;
  os << "(";
  for (Index i = 0; i < p.size(); ++i) os << (i ? "," : "") << p[i];
  os << ")";
  return os.str();
}

double signed_area2(const Vec2& a, const Vec2& b, const Vec2& c) {
  return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

}  // namespace

DecompositionReport validate_decomposition(const MacroDecomposition& decomp,
                                           const std::vector<Vec>& samples) {
  DecompositionReport rep;
  auto fail = [&rep](const std::string& msg) {
    rep.pass = false;
    rep.failures.push_back(msg);
  };

  const int nv = static_cast<int>(decomp.ref_vertices.size());
  double scale = 0.0;
  for (const auto& v : decomp.ref_vertices) scale = std::max(scale, v.norm());
  if (scale == 0.0) scale = 1.0;

  // Edge conformity: every macro edge is shared by two triangles or is a
  // tagged boundary edge (and tagged edges are single-use).
  std::map<std::pair<int, int>, int> edge_use;
  for (std::size_t d = 0; d < decomp.triangles.size(); ++d) {
    const auto& t = decomp.triangles[d].v;
    for (int k = 0; k < 3; ++k) {
      int a = t[static_cast<std::size_t>(k)], b = t[static_cast<std::size_t>((k + 1) % 3)];
      if (a > b) std::swap(a, b);
      edge_use[{a, b}] += 1;
    }
  }
  std::map<std::pair<int, int>, std::string> tagged;
  for (const auto& s : decomp.boundary) {
    int a = s.v0, b = s.v1;
    if (a > b) std::swap(a, b);
    tagged[{a, b}] = s.tag;
  }
  for (const auto& [e, n] : edge_use) {
    if (n > 2)
      fail("edge (" + std::to_string(e.first) + "," + std::to_string(e.second) +
           ") used by " + std::to_string(n) + " triangles");
    if (n == 1 && tagged.find(e) == tagged.end())
      fail("boundary edge (" + std::to_string(e.first) + "," + std::to_string(e.second) +
           ") carries no tag");
    if (n == 2 && tagged.find(e) != tagged.end())
      fail("interior edge (" + std::to_string(e.first) + "," + std::to_string(e.second) +
           ") is tagged " + tagged[e]);
  }
  for (const auto& [e, tag] : tagged)
    if (edge_use.find(e) == edge_use.end())
      fail("tag " + tag + " names a non-existent edge (" + std::to_string(e.first) + "," +
           std::to_string(e.second) + ")");

  // Continuity: vertices coincident at the reference configuration must stay
  // coincident for every sampled parameter.
  std::vector<Vec> probe = samples;
  probe.push_back(decomp.ref_param);
  for (int i = 0; i < nv; ++i) {
    for (int j = i + 1; j < nv; ++j) {
      const double dref = (decomp.ref_vertices[static_cast<std::size_t>(i)] -
                           decomp.ref_vertices[static_cast<std::size_t>(j)])
                              .norm();
      if (dref > 1e-12 * scale) continue;
      for (const auto& p : probe) {
        const double dp = (decomp.vertex_fn[static_cast<std::size_t>(i)].at(p) -
                           decomp.vertex_fn[static_cast<std::size_t>(j)].at(p))
                              .norm();
        if (dp > 1e-12 * scale) {
          fail("vertices " + std::to_string(i) + " and " + std::to_string(j) +
               " coincide at the reference but separate at p=" + param_str(p));
          break;
        }
      }
    }
  }

  // Orientation and non-degeneracy at each sample.
  for (const auto& p : probe) {
    if (!decomp.box.contains(p)) {
      fail("sample parameter " + param_str(p) + " outside the box");
      continue;
    }
    for (std::size_t d = 0; d < decomp.triangles.size(); ++d) {
      const auto& t = decomp.triangles[d].v;
      const Vec2 a = decomp.vertex_fn[static_cast<std::size_t>(t[0])].at(p);
      const Vec2 b = decomp.vertex_fn[static_cast<std::size_t>(t[1])].at(p);
      const Vec2 c = decomp.vertex_fn[static_cast<std::size_t>(t[2])].at(p);
      const double s2 = signed_area2(a, b, c);
      const Vec2 ra = decomp.ref_vertices[static_cast<std::size_t>(t[0])];
      const Vec2 rb = decomp.ref_vertices[static_cast<std::size_t>(t[1])];
      const Vec2 rc = decomp.ref_vertices[static_cast<std::size_t>(t[2])];
      const double s2ref = std::abs(signed_area2(ra, rb, rc));
      if (s2 <= 1e-14 * std::max(s2ref, scale * scale))
        fail("triangle d=" + std::to_string(d) + " degenerate or flipped at p=" + param_str(p));
    }
  }

  return rep;
}

MacroDecomposition benchmark_cell() {
  MacroDecomposition g;
  g.box.lower = Vec(3);
  g.box.upper = Vec(3);
  g.box.lower << 18.0, 4.0, 7.0;
  g.box.upper << 19.0, 5.0, 8.0;
  g.ref_param = g.box.midpoint();

  const double W = 0.030, H = 0.020, cx = 0.015;
  const double mm = 1e-3;

  auto fixed = [](double x, double y) {
    VertexFunction f;
    f.offset = Vec2(x, y);
    f.coeff = Eigen::Matrix<double, 2, Eigen::Dynamic>::Zero(2, 3);
    return f;
  };
  auto moving = [](double ox, double oy, std::initializer_list<double> cx_,
                   std::initializer_list<double> cy_) {
    VertexFunction f;
    f.offset = Vec2(ox, oy);
    f.coeff = Eigen::Matrix<double, 2, Eigen::Dynamic>::Zero(2, 3);
    int i = 0;
    for (double c : cx_) f.coeff(0, i++) = c;
    i = 0;
    for (double c : cy_) f.coeff(1, i++) = c;
    return f;
  };

  // 0..3 outer corners, 4..7 magnet corners (A,B,C,D), 8 magnet center.
  g.vertex_fn.push_back(fixed(0.0, 0.0));
  g.vertex_fn.push_back(fixed(W, 0.0));
  g.vertex_fn.push_back(fixed(W, H));
  g.vertex_fn.push_back(fixed(0.0, H));
  g.vertex_fn.push_back(moving(cx, 0.0, {-0.5 * mm, 0, 0}, {0, 0, mm}));
  g.vertex_fn.push_back(moving(cx, 0.0, {+0.5 * mm, 0, 0}, {0, 0, mm}));
  g.vertex_fn.push_back(moving(cx, 0.0, {+0.5 * mm, 0, 0}, {0, mm, mm}));
  g.vertex_fn.push_back(moving(cx, 0.0, {-0.5 * mm, 0, 0}, {0, mm, mm}));
  g.vertex_fn.push_back(moving(cx, 0.0, {0, 0, 0}, {0, 0.5 * mm, mm}));

  for (const auto& f : g.vertex_fn) g.ref_vertices.push_back(f.at(g.ref_param));

  auto tri = [&g](int a, int b, int c, bool iron, Region r) {
    MacroTriangle t;
    t.v = {a, b, c};
    t.iron = iron;
    t.region = r;
    g.triangles.push_back(t);
  };
  // Iron pole pieces below and above the magnet; air barriers on the sides.
  tri(0, 1, 5, true, Region::iron);
  tri(0, 5, 4, true, Region::iron);
  tri(2, 3, 7, true, Region::iron);
  tri(2, 7, 6, true, Region::iron);
  tri(1, 2, 6, false, Region::air);
  tri(1, 6, 5, false, Region::air);
  tri(3, 0, 4, false, Region::air);
  tri(3, 4, 7, false, Region::air);
  tri(4, 5, 8, false, Region::magnet);
  tri(5, 6, 8, false, Region::magnet);
  tri(6, 7, 8, false, Region::magnet);
  tri(7, 4, 8, false, Region::magnet);

  g.boundary.push_back({"AB", 0, 1});
  g.boundary.push_back({"BC", 1, 2});
  g.boundary.push_back({"CD", 2, 3});
  g.boundary.push_back({"DA", 3, 0});
  return g;
}

// ---------------------------------------------------------------------------
// Geometry definition file
// ---------------------------------------------------------------------------

namespace {

struct LineReader {
  std::istream& in;
  int lineno = 0;
  std::string current;

  // Next non-empty, non-comment line; returns false at EOF.
  bool next() {
    std::string line;
    while (std::getline(in, line)) {
      ++lineno;
      const auto h = line.find('#');
      if (h != std::string::npos) line.erase(h);
      std::size_t a = line.find_first_not_of(" \t\r\n");
      if (a == std::string::npos) continue;
      std::size_t b = line.find_last_not_of(" \t\r\n");
      current = line.substr(a, b - a + 1);
      return true;
    }
    return false;
  }

  [[noreturn]] void error(const std::string& msg) const {
    throw Error("geometry file, line " + std::to_string(lineno) + ": " + msg);
  }
};

std::vector<double> parse_doubles(LineReader& r, std::size_t expected) {
  std::istringstream is(r.current);
  std::vector<double> vals;
  double x;
  while (is >> x) vals.push_back(x);
  if (vals.size() != expected)
    r.error("expected " + std::to_string(expected) + " numbers, got " +
            std::to_string(vals.size()));
  return vals;
}

std::string g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

MacroDecomposition load_geometry(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open geometry file '" + path + "'");
  LineReader r{f, 0, {}};
  MacroDecomposition g;
  bool have_box = false, have_vertices = false, have_functions = false, have_triangles = false;

  while (r.next()) {
    if (r.current == "[parameter_box]") {
      if (!r.next()) r.error("missing dimension count");
      const int dims = static_cast<int>(parse_doubles(r, 1)[0]);
      if (dims < 1) r.error("parameter dimension must be positive");
      g.box.lower = Vec(dims);
      g.box.upper = Vec(dims);
      for (int d = 0; d < dims; ++d) {
        if (!r.next()) r.error("missing bounds row");
        auto v = parse_doubles(r, 2);
        g.box.lower[d] = v[0];
        g.box.upper[d] = v[1];
      }
      g.box.validate();
      g.ref_param = g.box.midpoint();
      have_box = true;
    } else if (r.current == "[vertices]") {
      if (!have_box) r.error("[parameter_box] must precede [vertices]");
      if (!r.next()) r.error("missing vertex count");
      const int nv = static_cast<int>(parse_doubles(r, 1)[0]);
      for (int i = 0; i < nv; ++i) {
        if (!r.next()) r.error("missing vertex row");
        auto v = parse_doubles(r, 2);
        g.ref_vertices.emplace_back(v[0], v[1]);
      }
      have_vertices = true;
    } else if (r.current == "[vertex_functions]") {
      if (!have_vertices) r.error("[vertices] must precede [vertex_functions]");
      const auto dims = static_cast<std::size_t>(g.box.dims());
      for (std::size_t i = 0; i < g.ref_vertices.size(); ++i) {
        VertexFunction fn;
        fn.coeff = Eigen::Matrix<double, 2, Eigen::Dynamic>::Zero(2, g.box.dims());
        for (int row = 0; row < 2; ++row) {
          if (!r.next()) r.error("missing vertex function row");
          auto v = parse_doubles(r, 1 + dims);
          fn.offset[row] = v[0];
          for (std::size_t d = 0; d < dims; ++d)
            fn.coeff(row, static_cast<Index>(d)) = v[d + 1];
        }
        g.vertex_fn.push_back(fn);
      }
      have_functions = true;
    } else if (r.current == "[triangles]") {
      if (!have_functions) r.error("[vertex_functions] must precede [triangles]");
      if (!r.next()) r.error("missing triangle count");
      const int nt = static_cast<int>(parse_doubles(r, 1)[0]);
      for (int t = 0; t < nt; ++t) {
        if (!r.next()) r.error("missing triangle row");
        std::istringstream is(r.current);
        MacroTriangle tri;
        std::string cls, reg;
        if (!(is >> tri.v[0] >> tri.v[1] >> tri.v[2] >> cls >> reg))
          r.error("triangle row needs: v0 v1 v2 class region");
        if (cls != "iron" && cls != "other") r.error("material class must be iron|other");
        tri.iron = (cls == "iron");
        try {
          tri.region = region_from_string(reg);
        } catch (const Error& e) {
          r.error(e.what());
        }
        if (tri.iron != (tri.region == Region::iron))
          r.error("material class and region tag disagree");
        for (int k = 0; k < 3; ++k)
          if (tri.v[static_cast<std::size_t>(k)] < 0 ||
              tri.v[static_cast<std::size_t>(k)] >= static_cast<int>(g.ref_vertices.size()))
            r.error("triangle vertex index out of range");
        g.triangles.push_back(tri);
      }
      have_triangles = true;
    } else if (r.current == "[boundary]") {
      if (!have_triangles) r.error("[triangles] must precede [boundary]");
      if (!r.next()) r.error("missing boundary count");
      const int nb = static_cast<int>(parse_doubles(r, 1)[0]);
      for (int b = 0; b < nb; ++b) {
        if (!r.next()) r.error("missing boundary row");
        std::istringstream is(r.current);
        BoundarySegment s;
        if (!(is >> s.tag >> s.v0 >> s.v1)) r.error("boundary row needs: tag v0 v1");
        if (s.tag != "AB" && s.tag != "BC" && s.tag != "CD" && s.tag != "DA")
          r.error("boundary tag must be AB|BC|CD|DA");
        g.boundary.push_back(s);
      }
    } else {
      r.error("unknown section '" + r.current + "'");
    }
  }

  if (!have_box || !have_vertices || !have_functions || !have_triangles)
    throw Error("geometry file '" + path + "': missing required section");

  // The stored reference vertices must agree with the functions at the
  // reference parameter; canonicalize to the function values so that maps at
  // the reference parameter are exactly the identity.
  double scale = 0.0;
  for (const auto& v : g.ref_vertices) scale = std::max(scale, v.norm());
  if (scale == 0.0) scale = 1.0;
  for (std::size_t i = 0; i < g.ref_vertices.size(); ++i) {
    const Vec2 fv = g.vertex_fn[i].at(g.ref_param);
    if ((fv - g.ref_vertices[i]).norm() > 1e-9 * scale)
      throw Error("geometry file '" + path + "': vertex " + std::to_string(i) +
                  " disagrees with its function at the reference parameter");
    g.ref_vertices[i] = fv;
  }
  return g;
}

void save_geometry(const MacroDecomposition& g, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write geometry file '" + path + "'");
  f << "[parameter_box]\n" << g.box.dims() << "\n";
  for (Index d = 0; d < g.box.dims(); ++d)
    f << g17(g.box.lower[d]) << " " << g17(g.box.upper[d]) << "\n";
  f << "[vertices]\n" << g.ref_vertices.size() << "\n";
  for (const auto& v : g.ref_vertices) f << g17(v.x()) << " " << g17(v.y()) << "\n";
  f << "[vertex_functions]\n";
  for (const auto& fn : g.vertex_fn) {
    for (int row = 0; row < 2; ++row) {
      f << g17(fn.offset[row]);
      for (Index d = 0; d < fn.coeff.cols(); ++d) f << " " << g17(fn.coeff(row, d));
      f << "\n";
    }
  }
  f << "[triangles]\n" << g.triangles.size() << "\n";
  for (const auto& t : g.triangles)
    f << t.v[0] << " " << t.v[1] << " " << t.v[2] << " " << (t.iron ? "iron" : "other") << " "
      << to_string(t.region) << "\n";
  f << "[boundary]\n" << g.boundary.size() << "\n";
  for (const auto& s : g.boundary) f << s.tag << " " << s.v0 << " " << s.v1 << "\n";
}

}  // namespace rbms
