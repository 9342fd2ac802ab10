#include "rbms/mesh.hpp"

#include <cstdio>
#include <fstream>
#include <map>

namespace rbms {

namespace {

unsigned tag_bit(const std::string& tag) {
  if (tag == "AB") return kBndAB;
  if (tag == "BC") return kBndBC;
  if (tag == "CD") return kBndCD;
  if (tag == "DA") return kBndDA;
  throw Error("unknown boundary tag '" + tag + "'");
}

}  // namespace

Triangulation generate_mesh(const MacroDecomposition& decomp, int level) {
  if (level < 0) throw Error("generate_mesh: refinement level must be >= 0");
  const int n = 1 << level;
  const int n_macro_v = static_cast<int>(decomp.ref_vertices.size());

  // Global numbering: macro vertices, then interior nodes of each undirected
  // macro edge (ordered from the lower to the higher vertex index), then the
  // strict interior of each macro triangle. Every node is created once, so
  // the mesh is conforming with no coordinate comparisons.
  std::map<std::pair<int, int>, int> edge_base;  // first interior node of the edge
  int next = n_macro_v;
  auto edge_key = [](int a, int b) { return a < b ? std::make_pair(a, b) : std::make_pair(b, a); };
  for (const auto& t : decomp.triangles) {
    for (int k = 0; k < 3; ++k) {
      const auto key = edge_key(t.v[static_cast<std::size_t>(k)],
                                t.v[static_cast<std::size_t>((k + 1) % 3)]);
      if (edge_base.find(key) == edge_base.end()) {
        edge_base[key] = next;
        next += n - 1;
      }
    }
  }
  const int n_tri_interior = (n - 1) * (n - 2) / 2;
  std::vector<int> tri_base(decomp.triangles.size());
  for (std::size_t d = 0; d < decomp.triangles.size(); ++d) {
    tri_base[d] = next;
    next += n_tri_interior;
  }
  const int n_nodes = next;

  Triangulation mesh;
  mesh.refinement_level = level;
  mesh.nodes = Mat::Zero(n_nodes, 2);
  std::vector<bool> placed(static_cast<std::size_t>(n_nodes), false);

  auto place = [&mesh, &placed](int idx, const Vec2& x) {
    if (!placed[static_cast<std::size_t>(idx)]) {
      mesh.nodes.row(idx) = x.transpose();
      placed[static_cast<std::size_t>(idx)] = true;
    }
  };
  for (int v = 0; v < n_macro_v; ++v) place(v, decomp.ref_vertices[static_cast<std::size_t>(v)]);
  for (const auto& [key, base] : edge_base) {
    const Vec2 ra = decomp.ref_vertices[static_cast<std::size_t>(key.first)];
    const Vec2 rb = decomp.ref_vertices[static_cast<std::size_t>(key.second)];
    for (int k = 1; k < n; ++k)
      place(base + k - 1, ra + (rb - ra) * (static_cast<double>(k) / n));
  }

  // Lattice (i,j) of macro triangle (v0,v1,v2): i steps toward v1, j toward v2.
  auto lattice_node = [&](const MacroTriangle& t, int d, int i, int j) -> int {
    const int v0 = t.v[0], v1 = t.v[1], v2 = t.v[2];
    if (i == 0 && j == 0) return v0;
    if (i == n && j == 0) return v1;
    if (i == 0 && j == n) return v2;
    auto edge_node = [&](int a, int b, int k) {
      // k counts 1..n-1 from a toward b.
      const auto key = edge_key(a, b);
      const int base = edge_base.at(key);
      return (a < b) ? base + k - 1 : base + (n - k) - 1;
    };
    if (j == 0) return edge_node(v0, v1, i);
    if (i == 0) return edge_node(v0, v2, j);
    if (i + j == n) return edge_node(v1, v2, j);
    // interior, row-major over j then i
    int idx = 0;
    for (int jj = 1; jj < j; ++jj) idx += (n - jj - 1);
    idx += i - 1;
    return tri_base[static_cast<std::size_t>(d)] + idx;
  };

  const Index n_tris = static_cast<Index>(decomp.triangles.size()) * n * n;
  mesh.tris.resize(n_tris, 3);
  mesh.macro_of.resize(n_tris);
  mesh.region_of.resize(static_cast<std::size_t>(n_tris));
  mesh.area.resize(n_tris);
  mesh.bary.resize(n_tris, 2);
  mesh.gradop.resize(static_cast<std::size_t>(n_tris));

  Index tcount = 0;
  for (std::size_t d = 0; d < decomp.triangles.size(); ++d) {
    const auto& t = decomp.triangles[d];
    const Vec2 r0 = decomp.ref_vertices[static_cast<std::size_t>(t.v[0])];
    const Vec2 r1 = decomp.ref_vertices[static_cast<std::size_t>(t.v[1])];
    const Vec2 r2 = decomp.ref_vertices[static_cast<std::size_t>(t.v[2])];
    // place interior lattice nodes
    for (int j = 1; j < n; ++j)
      for (int i = 1; i + j < n; ++i)
        place(lattice_node(t, static_cast<int>(d), i, j),
              r0 + (r1 - r0) * (static_cast<double>(i) / n) +
                  (r2 - r0) * (static_cast<double>(j) / n));

    auto emit = [&](int a, int b, int c) {
      mesh.tris(tcount, 0) = a;
      mesh.tris(tcount, 1) = b;
      mesh.tris(tcount, 2) = c;
      mesh.macro_of[tcount] = static_cast<int>(d);
      mesh.region_of[static_cast<std::size_t>(tcount)] = t.region;
      ++tcount;
    };
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i + j < n; ++i) {
        emit(lattice_node(t, static_cast<int>(d), i, j),
             lattice_node(t, static_cast<int>(d), i + 1, j),
             lattice_node(t, static_cast<int>(d), i, j + 1));
        if (i + j + 1 < n)
          emit(lattice_node(t, static_cast<int>(d), i + 1, j),
               lattice_node(t, static_cast<int>(d), i + 1, j + 1),
               lattice_node(t, static_cast<int>(d), i, j + 1));
      }
    }
  }

  for (Index tt = 0; tt < n_tris; ++tt) {
    const Vec2 q0 = mesh.nodes.row(mesh.tris(tt, 0)).transpose();
    const Vec2 q1 = mesh.nodes.row(mesh.tris(tt, 1)).transpose();
    const Vec2 q2 = mesh.nodes.row(mesh.tris(tt, 2)).transpose();
    Mat2 E;
    E.col(0) = q1 - q0;
    E.col(1) = q2 - q0;
    const double det = E(0, 0) * E(1, 1) - E(0, 1) * E(1, 0);
    if (det <= 0.0) throw Error("generate_mesh: non-positive fine triangle area");
    mesh.area[tt] = 0.5 * det;
    mesh.bary.row(tt) = ((q0 + q1 + q2) / 3.0).transpose();
    Mat2 EinvT;
    EinvT(0, 0) = E(1, 1) / det;
    EinvT(0, 1) = -E(1, 0) / det;
    EinvT(1, 0) = -E(0, 1) / det;
    EinvT(1, 1) = E(0, 0) / det;
    Mat23& gop = mesh.gradop[static_cast<std::size_t>(tt)];
    gop.col(1) = EinvT.col(0);
    gop.col(2) = EinvT.col(1);
    gop.col(0) = -gop.col(1) - gop.col(2);
  }

  for (Index tt = 0; tt < n_tris; ++tt)
    if (decomp.triangles[static_cast<std::size_t>(mesh.macro_of[tt])].iron)
      mesh.iron_tris.push_back(static_cast<int>(tt));

  // Boundary markers and chain arc parameters for AB / CD pairing.
  mesh.node_marker.assign(static_cast<std::size_t>(n_nodes), 0u);
  mesh.arc_ab.assign(static_cast<std::size_t>(n_nodes), -1.0);
  mesh.arc_cd.assign(static_cast<std::size_t>(n_nodes), -1.0);
  for (const std::string tag : {"AB", "BC", "CD", "DA"}) {
    std::vector<BoundarySegment> chain;
    for (const auto& s : decomp.boundary)
      if (s.tag == tag) chain.push_back(s);
    if (chain.empty()) continue;
    for (std::size_t k = 0; k + 1 < chain.size(); ++k)
      if (chain[k].v1 != chain[k + 1].v0)
        throw Error("generate_mesh: boundary chain " + tag + " is not contiguous");
    double total = 0.0;
    for (const auto& s : chain)
      total += (decomp.ref_vertices[static_cast<std::size_t>(s.v1)] -
                decomp.ref_vertices[static_cast<std::size_t>(s.v0)])
                   .norm();
    const unsigned bit = tag_bit(tag);
    double before = 0.0;
    for (const auto& s : chain) {
      const Vec2 ra = decomp.ref_vertices[static_cast<std::size_t>(s.v0)];
      const Vec2 rb = decomp.ref_vertices[static_cast<std::size_t>(s.v1)];
      const double len = (rb - ra).norm();
      auto mark = [&](int node, double local) {
        mesh.node_marker[static_cast<std::size_t>(node)] |= bit;
        const double arc = (before + local) / total;
        if (bit == kBndAB) mesh.arc_ab[static_cast<std::size_t>(node)] = arc;
        if (bit == kBndCD) mesh.arc_cd[static_cast<std::size_t>(node)] = arc;
      };
      mark(s.v0, 0.0);
      mark(s.v1, len);
      const auto key = edge_key(s.v0, s.v1);
      const auto it = edge_base.find(key);
      if (it == edge_base.end())
        throw Error("generate_mesh: tagged edge " + tag + " is not a macro edge");
      for (int k = 1; k < n; ++k) {
        const int node = (key.first == s.v0) ? it->second + k - 1 : it->second + (n - k) - 1;
        mark(node, len * static_cast<double>(k) / n);
      }
      before += len;
    }
  }

  return mesh;
}

void save_mesh(const Triangulation& mesh, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write mesh file '" + path + "'");
  char buf[80];
  f << "[nodes]\n" << mesh.n_nodes() << "\n";
  for (Index i = 0; i < mesh.n_nodes(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g %u", mesh.nodes(i, 0), mesh.nodes(i, 1),
                  mesh.node_marker[static_cast<std::size_t>(i)]);
    f << buf << "\n";
  }
  f << "[elements]\n" << mesh.n_tris() << "\n";
  for (Index t = 0; t < mesh.n_tris(); ++t)
    f << mesh.tris(t, 0) << " " << mesh.tris(t, 1) << " " << mesh.tris(t, 2) << " "
      << mesh.macro_of[t] << " " << to_string(mesh.region_of[static_cast<std::size_t>(t)])
      << "\n";
}

}  // namespace rbms
