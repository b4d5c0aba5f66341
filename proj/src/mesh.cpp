#include "gradfem/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace gradfem {

namespace {

constexpr int kPerms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                              {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};

double det3(Vec3 a, Vec3 b, Vec3 c) { return dot(a, cross(b, c)); }

struct Term {
    Vec3 p;
    int w;
};

// Weighted lattice combination sum(w_i * p_i) / n over the points with
// nonzero weight, accumulated in lexicographic point order. Every macro
// computes shared-feature nodes through this one routine so the bits agree
// on both sides of an interface. A single surviving term returns the point
// itself so macro vertices stay exact.
Vec3 canonical_combo(const Term* t, int cnt, int n) {
    Term nz[4];
    int m = 0;
    for (int i = 0; i < cnt; ++i)
        if (t[i].w != 0) nz[m++] = t[i];
    if (m == 1) return nz[0].p;
    std::sort(nz, nz + m, [](const Term& a, const Term& b) { return lex_less(a.p, b.p); });
    Vec3 acc{0, 0, 0};
    for (int i = 0; i < m; ++i) acc += double(nz[i].w) * nz[i].p;
    return acc / double(n);
}

// Radial power grading toward `apex`: the shell at relative distance
// rho_int/n moves to (rho_int/n)^(1/ex). The identity cases short-circuit
// so that ungraded nodes keep their uniform-lattice bits, and the apex and
// the far shell stay pointwise fixed.
Vec3 radial_power(Vec3 apex, Vec3 xu, int rho_int, int n, double ex) {
    if (rho_int <= 0) return apex;
    if (rho_int >= n || ex == 1.0) return xu;
    double rho = double(rho_int) / double(n);
    return apex + std::pow(rho, 1.0 / ex - 1.0) * (xu - apex);
}

struct NodeTable {
    std::vector<Vec3>& nodes;
    std::unordered_map<PointKey, int, PointKeyHash> index;

    int add(Vec3 p) {
        PointKey key = point_key(p);
        auto it = index.find(key);
        if (it != index.end()) return it->second;
        int id = static_cast<int>(nodes.size());
        nodes.push_back(p);
        index.emplace(key, id);
        return id;
    }
};

int emit_tet(Mesh& mesh, std::array<int, 4> t, int macro, int strip, int cell) {
    if (tet_volume(mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]],
                   mesh.nodes[t[3]]) < 0)
        std::swap(t[2], t[3]);
    int id = static_cast<int>(mesh.tets.size());
    mesh.tets.push_back(t);
    mesh.macro_of.push_back(macro);
    mesh.tet_strip.push_back(strip);
    mesh.tet_cell2d.push_back(cell);
    return id;
}

bool path_point_valid(int a, int b, int c, int n) {
    return a <= n && a >= b && b >= c && c >= 0;
}

void build_kuhn_macro(Mesh& mesh, NodeTable& table, int mi) {
    const Macroelement& m = mesh.macros[mi];
    MacroMeshInfo& info = mesh.macro_info[mi];
    const int n = mesh.n;

    std::array<int, 4> ord{0, 1, 2, 3};
    std::sort(ord.begin(), ord.end(),
              [&](int a, int b) { return lex_less(m.v[a], m.v[b]); });
    info.sorted_verts = ord;
    std::array<Vec3, 4> w{m.v[ord[0]], m.v[ord[1]], m.v[ord[2]], m.v[ord[3]]};
    int apex_pos = -1;
    if (m.kind == MacroKind::Type2)
        for (int i = 0; i < 4; ++i)
            if (ord[i] == m.singular_vertex) apex_pos = i;
    info.apex_sorted = apex_pos;

    // Lattice nodes in path coordinates n >= a >= b >= c >= 0; the weights
    // over the sorted vertices are (n-a, a-b, b-c, c).
    const int stride = n + 1;
    std::vector<int> ids(stride * stride * stride, -1);
    auto idx3 = [stride](int a, int b, int c) { return (a * stride + b) * stride + c; };
    for (int a = 0; a <= n; ++a)
        for (int b = 0; b <= a; ++b)
            for (int c = 0; c <= b; ++c) {
                Term t[4] = {{w[0], n - a}, {w[1], a - b}, {w[2], b - c}, {w[3], c}};
                Vec3 xu = canonical_combo(t, 4, n);
                if (apex_pos >= 0) {
                    int wa[4] = {n - a, a - b, b - c, c};
                    xu = radial_power(w[apex_pos], xu, n - wa[apex_pos], n, m.nu);
                }
                ids[idx3(a, b, c)] = table.add(xu);
            }

    // Freudenthal cells: for every unit lattice cube, keep the path
    // simplices whose four vertices satisfy the ordering constraints.
    for (int ca = 0; ca < n; ++ca)
        for (int cb = 0; cb <= std::min(ca, n - 1); ++cb)
            for (int cc = 0; cc <= cb; ++cc)
                for (int p = 0; p < 6; ++p) {
                    int pt[4][3] = {{ca, cb, cc}};
                    bool ok = true;
                    for (int k = 0; k < 3; ++k) {
                        for (int d = 0; d < 3; ++d) pt[k + 1][d] = pt[k][d];
                        pt[k + 1][kPerms[p][k]] += 1;
                    }
                    for (int k = 0; k < 4 && ok; ++k)
                        ok = path_point_valid(pt[k][0], pt[k][1], pt[k][2], n);
                    if (!ok) continue;
                    std::array<int, 4> tet{};
                    for (int k = 0; k < 4; ++k)
                        tet[k] = ids[idx3(pt[k][0], pt[k][1], pt[k][2])];
                    int tid = emit_tet(mesh, tet, mi, -1, -1);
                    info.kuhn_tet[kuhn_key(ca, cb, cc, p)] = tid;
                }
}

void build_prism_macro(Mesh& mesh, NodeTable& table, int mi) {
    const Macroelement& m = mesh.macros[mi];
    MacroMeshInfo& info = mesh.macro_info[mi];
    info.prism = true;
    const int n = mesh.n;

    auto el = m.edge_local();
    auto ol = m.opposite_edge_local();
    const Vec3 E0 = m.v[el[0]], E1 = m.v[el[1]];
    const Vec3 F0 = m.v[ol[0]], F1 = m.v[ol[1]];
    const Vec3 d = E1 - E0;
    const bool graded_s = (m.kind == MacroKind::Type4);

    std::vector<Vec3> P(n + 1);
    for (int i = 0; i <= n; ++i) {
        if (i == 0)
            P[i] = E0;
        else if (i == n)
            P[i] = E1;
        else {
            double s = graded_s && m.nu != 1.0 ? std::pow(double(i) / n, 1.0 / m.nu)
                                               : double(i) / n;
            P[i] = E0 + s * d;
        }
    }

    PlaneFamily& fam = mesh.plane_families[mi];
    fam.macro_id = mi;
    fam.layer_count = n;
    fam.planes.resize(n + 1);
    for (int i = 0; i <= n; ++i) {
        Vec3 nm = normalized(cross(F0 - P[i], F1 - P[i]));
        if (dot(nm, d) < 0) nm = -1.0 * nm;
        fam.planes[i] = {nm, dot(nm, P[i])};
    }

    // The in-plane cell pattern is the 2D Kuhn triangulation over the
    // lexicographically sorted generators (E0, F0, F1); a lattice neighbor
    // sharing the i=0 face produces exactly this pattern on it.
    std::array<Vec3, 3> gen{E0, F0, F1};
    std::array<int, 3> gord{0, 1, 2};
    std::sort(gord.begin(), gord.end(),
              [&](int a, int b) { return lex_less(gen[a], gen[b]); });
    auto path_to_jk = [&](int a, int b) {
        int wsorted[3] = {n - a, a - b, b};
        int w[3]; // 0 = pencil point, 1 = F0, 2 = F1
        for (int s = 0; s < 3; ++s) w[gord[s]] = wsorted[s];
        return LatticePt{n - w[0], w[2]};
    };

    const int npts = (n + 1) * (n + 2) / 2;
    info.plane_nodes.assign(n + 1, std::vector<int>(npts, -1));
    for (int i = 0; i <= n; ++i)
        for (int a = 0; a <= n; ++a)
            for (int b = 0; b <= a; ++b) {
                LatticePt lp = path_to_jk(a, b);
                Vec3 x;
                if (lp.j == 0) {
                    x = P[i];
                } else {
                    Term t[3] = {{P[i], n - lp.j}, {F0, lp.j - lp.k}, {F1, lp.k}};
                    Vec3 xu = canonical_combo(t, 3, n);
                    x = radial_power(P[i], xu, lp.j, n, m.mu);
                }
                int id = table.add(x);
                info.plane_nodes[i][tri_index(lp.j, lp.k)] = id;
                info.plane_of[id] = (lp.j == n) ? kOppositeEdge : i;
            }

    info.cells2d.clear();
    for (int a = 0; a < n; ++a)
        for (int b = 0; b <= a; ++b) {
            info.cells2d.push_back(
                {path_to_jk(a, b), path_to_jk(a + 1, b), path_to_jk(a + 1, b + 1)});
            if (b < a)
                info.cells2d.push_back(
                    {path_to_jk(a, b), path_to_jk(a, b + 1), path_to_jk(a + 1, b + 1)});
        }

    // Strip cells. Columns run parallel to the singular edge. Quad faces are
    // split by ordering the columns with the far-from-edge column first
    // (descending row j, ties by bottom node id) and drawing every diagonal
    // from the bottom node of the earlier column to the top node of the later
    // one. Rows and node ids are shared by both sides of any interface, so
    // the rule is face-local and the diagonals match across cells and macros.
    // Anchoring at the far column keeps the dihedral angles of the needle
    // cells next to the singular edge bounded uniformly in n.
    struct Col {
        int bot, top, row;
    };
    info.cell_tets.assign(n, std::vector<std::array<int, 3>>(
                                 info.cells2d.size(), {-1, -1, -1}));
    for (int i = 0; i < n; ++i)
        for (std::size_t c = 0; c < info.cells2d.size(); ++c) {
            const Cell2D& cell = info.cells2d[c];
            Col cols[3];
            int axis[2];
            int nc = 0, na = 0;
            for (const LatticePt& pt : cell.p) {
                int ti = tri_index(pt.j, pt.k);
                if (pt.j == n)
                    axis[na++] = info.plane_nodes[i][ti];
                else
                    cols[nc++] = {info.plane_nodes[i][ti],
                                  info.plane_nodes[i + 1][ti], pt.j};
            }
            std::sort(cols, cols + nc, [](Col a, Col b) {
                if (a.row != b.row) return a.row > b.row;
                return a.bot < b.bot;
            });
            auto& out = info.cell_tets[i][c];
            int ne = 0;
            if (nc == 3) {
                out[ne++] = emit_tet(
                    mesh, {cols[0].bot, cols[1].bot, cols[2].bot, cols[2].top}, mi, i, int(c));
                out[ne++] = emit_tet(
                    mesh, {cols[0].bot, cols[1].bot, cols[1].top, cols[2].top}, mi, i, int(c));
                out[ne++] = emit_tet(
                    mesh, {cols[0].bot, cols[0].top, cols[1].top, cols[2].top}, mi, i, int(c));
            } else if (nc == 2) {
                out[ne++] = emit_tet(
                    mesh, {cols[0].bot, cols[1].bot, cols[1].top, axis[0]}, mi, i, int(c));
                out[ne++] = emit_tet(
                    mesh, {cols[0].bot, cols[0].top, cols[1].top, axis[0]}, mi, i, int(c));
            } else {
                int q0 = std::min(axis[0], axis[1]), q1 = std::max(axis[0], axis[1]);
                out[ne++] = emit_tet(mesh, {cols[0].bot, cols[0].top, q0, q1}, mi, i, int(c));
            }
        }
}

double mesh_scale(const Mesh& mesh) {
    Vec3 lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
    for (const Vec3& p : mesh.nodes)
        for (int c = 0; c < 3; ++c) {
            lo[c] = std::min(lo[c], p[c]);
            hi[c] = std::max(hi[c], p[c]);
        }
    return std::max(1e-300, dist(lo, hi));
}

struct FaceKey {
    std::array<int, 3> v;
    bool operator==(const FaceKey&) const = default;
};
struct FaceKeyHash {
    std::size_t operator()(const FaceKey& k) const {
        std::size_t h = 1469598103934665603ull;
        for (int x : k.v) {
            h ^= std::size_t(x) + 0x9e3779b97f4a7c15ull;
            h *= 1099511628211ull;
        }
        return h;
    }
};

FaceKey face_key(int a, int b, int c) {
    std::array<int, 3> f{a, b, c};
    std::sort(f.begin(), f.end());
    return {f};
}

constexpr int kFaceOpp[4][3] = {{1, 2, 3}, {0, 3, 2}, {0, 1, 3}, {0, 2, 1}};

std::unordered_map<FaceKey, int, FaceKeyHash> face_counts(const Mesh& mesh) {
    std::unordered_map<FaceKey, int, FaceKeyHash> counts;
    counts.reserve(mesh.tets.size() * 2);
    for (const auto& t : mesh.tets)
        for (const auto& f : kFaceOpp)
            ++counts[face_key(t[f[0]], t[f[1]], t[f[2]])];
    return counts;
}

} // namespace

Mesh build_mesh(const std::vector<Macroelement>& macros, int n) {
    if (n < 1) throw std::invalid_argument("build_mesh: refinement level must be >= 1");
    if (macros.empty()) throw std::runtime_error("build_mesh: empty macro decomposition");
    if (n >= 2047) throw std::invalid_argument("build_mesh: refinement level too large");
    validate_macros(macros);

    Mesh mesh;
    mesh.n = n;
    mesh.h = 1.0 / n;
    mesh.macros = macros;
    mesh.plane_families.resize(macros.size());
    mesh.macro_info.resize(macros.size());

    NodeTable table{mesh.nodes, {}};
    for (int mi = 0; mi < static_cast<int>(macros.size()); ++mi) {
        if (macros[mi].kind == MacroKind::Type3 || macros[mi].kind == MacroKind::Type4)
            build_prism_macro(mesh, table, mi);
        else
            build_kuhn_macro(mesh, table, mi);
    }

    mesh.node_tets.resize(mesh.nodes.size());
    for (int t = 0; t < static_cast<int>(mesh.tets.size()); ++t)
        for (int v : mesh.tets[t]) mesh.node_tets[v].push_back(t);
    return mesh;
}

SizeTriple element_sizes(const Mesh& mesh, int t) {
    if (t < 0 || t >= static_cast<int>(mesh.tets.size()))
        throw std::out_of_range("element_sizes: tet index");
    const Macroelement& m = mesh.macros[mesh.macro_of[t]];
    auto v = mesh.tet_vertices(t);
    double diam = tet_diameter(v);
    if (m.kind == MacroKind::Type1 || m.kind == MacroKind::Type2)
        return {diam, diam, diam, diam};

    auto el = m.edge_local();
    Vec3 dir = normalized(m.v[el[1]] - m.v[el[0]]);
    const MacroMeshInfo& info = mesh.macro_info[mesh.macro_of[t]];
    const auto& tet = mesh.tets[t];
    static constexpr int kEdges[6][2] = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};

    int parallel = -1;
    for (int e = 0; e < 6; ++e) {
        Vec3 u = v[kEdges[e][1]] - v[kEdges[e][0]];
        if (norm(cross(dir, normalized(u))) <= 1e-9) {
            parallel = e;
            break;
        }
    }
    if (parallel < 0)
        throw std::runtime_error(
            "element_sizes: edge-graded element has no edge parallel to the "
            "singular edge (mesh generation bug)");
    double h3 = dist(v[kEdges[parallel][0]], v[kEdges[parallel][1]]);

    auto plane_tag = [&](int node) { return info.plane_of.at(node); };
    auto in_plane = [&](int a, int b) {
        int pa = plane_tag(a), pb = plane_tag(b);
        if (pa == kOppositeEdge || pb == kOppositeEdge) return true;
        return pa == pb;
    };
    int p0 = kEdges[parallel][0], p1 = kEdges[parallel][1];
    struct Cand {
        double len;
        int lo, hi;
    };
    std::vector<Cand> cands;
    for (int e = 0; e < 6; ++e) {
        if (e == parallel) continue;
        int a = kEdges[e][0], b = kEdges[e][1];
        bool meets = (a == p0 || a == p1 || b == p0 || b == p1);
        if (!meets) continue;
        if (!in_plane(tet[a], tet[b])) continue;
        cands.push_back({dist(v[a], v[b]), std::min(tet[a], tet[b]),
                         std::max(tet[a], tet[b])});
    }
    if (cands.size() < 2)
        throw std::runtime_error("element_sizes: fewer than two in-plane edges");
    std::sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) {
        if (x.len != y.len) return x.len < y.len;
        if (x.lo != y.lo) return x.lo < y.lo;
        return x.hi < y.hi;
    });
    double h1 = 0.5 * (cands[0].len + cands[1].len);
    return {h1, h1, h3, diam};
}

std::vector<bool> boundary_node_mask(const Mesh& mesh) {
    auto counts = face_counts(mesh);
    std::vector<bool> mask(mesh.nodes.size(), false);
    for (const auto& [key, cnt] : counts)
        if (cnt == 1)
            for (int v : key.v) mask[v] = true;
    return mask;
}

NodeClassification classify_nodes(const Mesh& mesh) {
    const int N = static_cast<int>(mesh.nodes.size());
    NodeClassification cls;
    cls.label.assign(N, NodeClass::Interior);

    double tol = 1e-12 * mesh_scale(mesh);

    std::vector<std::array<Vec3, 2>> segs;
    for (const auto& m : mesh.macros)
        if (m.singular_edge[0] >= 0)
            segs.push_back({m.v[m.singular_edge[0]], m.v[m.singular_edge[1]]});

    std::unordered_map<PointKey, int, PointKeyHash> vertex_macros;
    for (const auto& m : mesh.macros)
        for (const auto& p : m.v) ++vertex_macros[point_key(p)];

    auto bmask = boundary_node_mask(mesh);

    for (int i = 0; i < N; ++i) {
        const Vec3& p = mesh.nodes[i];
        bool on_singular = false;
        for (const auto& s : segs)
            if (point_segment_distance(p, s[0], s[1]) <= tol) {
                on_singular = true;
                break;
            }
        if (on_singular) {
            cls.label[i] = NodeClass::SingularEdge;
            continue;
        }
        // Every decomposition vertex counts, not only shared ones: a corner
        // owned by a single macro lies on three boundary faces whose common
        // intersection is the corner itself, so no averaging edge through it
        // could stay inside all of them. The coarse macro interpolant pins
        // these nodes instead.
        auto it = vertex_macros.find(point_key(p));
        if (it != vertex_macros.end()) {
            cls.label[i] = NodeClass::Coupling;
            continue;
        }
        if (bmask[i]) cls.label[i] = NodeClass::BoundaryRegular;
    }

    for (int i = 0; i < N; ++i) switch (cls.label[i]) {
            case NodeClass::Interior: cls.interior.push_back(i); break;
            case NodeClass::BoundaryRegular: cls.boundary_regular.push_back(i); break;
            case NodeClass::Coupling: cls.coupling.push_back(i); break;
            case NodeClass::SingularEdge: cls.singular_edge.push_back(i); break;
        }
    return cls;
}

GradingCheck check_grading(double mu, double nu, double lambda_e, double lambda_v) {
    if (!(mu > 0.0 && mu <= 1.0) || !(nu > 0.0 && nu <= 1.0))
        throw std::invalid_argument("check_grading: mu and nu must lie in (0,1]");
    if (!(lambda_e > 0.0) || !(lambda_v > 0.0))
        throw std::invalid_argument("check_grading: exponents must be positive");

    GradingCheck g;
    g.edge_condition = std::isinf(lambda_e) || mu < lambda_e;
    g.vertex_condition = std::isinf(lambda_v) || nu < lambda_v + 0.5;
    g.combined_condition =
        std::isinf(lambda_v) || (1.0 / nu + (lambda_v - 0.5) / mu > 1.0);
    g.ok = g.edge_condition && g.vertex_condition && g.combined_condition;

    std::ostringstream ss;
    ss << "mu < lambda_e: " << (g.edge_condition ? "ok" : "violated")
       << "; nu < lambda_v + 1/2: " << (g.vertex_condition ? "ok" : "violated")
       << "; 1/nu + (lambda_v - 1/2)/mu > 1: "
       << (g.combined_condition ? "ok" : "violated");
    g.diagnostic = ss.str();
    return g;
}

QualityReport mesh_quality(const Mesh& mesh) {
    QualityReport q;
    q.node_count = static_cast<int>(mesh.nodes.size());
    q.tet_count = static_cast<int>(mesh.tets.size());
    q.min_volume = std::numeric_limits<double>::infinity();

    double scale = mesh_scale(mesh);
    double tol = 1e-10 * scale;

    for (int t = 0; t < q.tet_count; ++t) {
        double vol = mesh.tet_vol(t);
        q.min_volume = std::min(q.min_volume, vol);
        if (vol <= 0.0) ++q.conformity_violations;
        q.max_dihedral_angle =
            std::max(q.max_dihedral_angle, max_dihedral_angle(mesh.tet_vertices(t)));
    }

    // Face incidence: interior faces twice, boundary faces once, anything
    // else is broken. Every single-incidence face must lie inside a face of
    // the macro decomposition's boundary, otherwise two macros meshed a
    // shared interface differently.
    auto counts = face_counts(mesh);
    struct MacroFace {
        std::array<Vec3, 3> p;
        Vec3 normal;
    };
    std::unordered_map<PointKey, int, PointKeyHash> mf_count;
    auto mf_key = [](std::array<Vec3, 3> f) {
        // order-independent key: combine sorted point keys
        std::sort(f.begin(), f.end(), lex_less);
        PointKey k0 = point_key(f[0]), k1 = point_key(f[1]), k2 = point_key(f[2]);
        PointKey k{k0.bx ^ (k1.bx * 3) ^ (k2.bx * 7), k0.by ^ (k1.by * 3) ^ (k2.by * 7),
                   k0.bz ^ (k1.bz * 3) ^ (k2.bz * 7)};
        return k;
    };
    std::vector<std::vector<MacroFace>> macro_faces(mesh.macros.size());
    for (const auto& m : mesh.macros)
        for (const auto& f : kFaceOpp) {
            std::array<Vec3, 3> tri{m.v[f[0]], m.v[f[1]], m.v[f[2]]};
            ++mf_count[mf_key(tri)];
        }
    for (std::size_t mi = 0; mi < mesh.macros.size(); ++mi) {
        const auto& m = mesh.macros[mi];
        for (const auto& f : kFaceOpp) {
            std::array<Vec3, 3> tri{m.v[f[0]], m.v[f[1]], m.v[f[2]]};
            if (mf_count[mf_key(tri)] == 1) {
                Vec3 nm = normalized(cross(tri[1] - tri[0], tri[2] - tri[0]));
                macro_faces[mi].push_back({tri, nm});
            }
        }
    }
    auto inside_macro_face = [&](const MacroFace& mf, Vec3 p) {
        if (std::abs(dot(mf.normal, p - mf.p[0])) > tol) return false;
        // 2D barycentric via areas
        double a = dot(mf.normal, cross(mf.p[1] - mf.p[0], mf.p[2] - mf.p[0]));
        double b0 = dot(mf.normal, cross(mf.p[1] - p, mf.p[2] - p)) / a;
        double b1 = dot(mf.normal, cross(mf.p[2] - p, mf.p[0] - p)) / a;
        double b2 = 1.0 - b0 - b1;
        double eps = 1e-9;
        return b0 >= -eps && b1 >= -eps && b2 >= -eps;
    };
    std::unordered_map<FaceKey, int, FaceKeyHash> face_macro;
    for (int t = 0; t < q.tet_count; ++t)
        for (const auto& f : kFaceOpp)
            face_macro[face_key(mesh.tets[t][f[0]], mesh.tets[t][f[1]],
                                mesh.tets[t][f[2]])] = mesh.macro_of[t];
    for (const auto& [key, cnt] : counts) {
        if (cnt == 2) continue;
        if (cnt > 2) {
            q.conformity_violations += cnt - 2;
            continue;
        }
        int mi = face_macro[key];
        bool contained = false;
        for (const auto& mf : macro_faces[mi]) {
            bool all = true;
            for (int v : key.v)
                if (!inside_macro_face(mf, mesh.nodes[v])) {
                    all = false;
                    break;
                }
            if (all) {
                contained = true;
                break;
            }
        }
        if (!contained) ++q.conformity_violations;
    }

    // Near-duplicate nodes: distinct ids closer than 1e-9 * scale indicate a
    // bitwise merge failure (e.g. incompatible grading across an interface).
    {
        double r = 1e-9 * scale;
        std::unordered_map<FaceKey, std::vector<int>, FaceKeyHash> cells;
        auto cell_of = [&](Vec3 p) {
            return FaceKey{{int(std::floor(p.x / (4 * r))), int(std::floor(p.y / (4 * r))),
                            int(std::floor(p.z / (4 * r)))}};
        };
        for (int i = 0; i < q.node_count; ++i)
            cells[cell_of(mesh.nodes[i])].push_back(i);
        for (int i = 0; i < q.node_count; ++i) {
            FaceKey base = cell_of(mesh.nodes[i]);
            for (int dx = -1; dx <= 1; ++dx)
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dz = -1; dz <= 1; ++dz) {
                        FaceKey k{{base.v[0] + dx, base.v[1] + dy, base.v[2] + dz}};
                        auto it = cells.find(k);
                        if (it == cells.end()) continue;
                        for (int j : it->second)
                            if (j > i && dist(mesh.nodes[i], mesh.nodes[j]) < r)
                                ++q.near_duplicate_nodes;
                    }
        }
    }

    // Plane containment for edge-graded macros: every non-axis node on its
    // assigned plane and on no other; no element spanning three planes.
    double ptol = 1e-12 * std::max(1.0, scale);
    for (std::size_t mi = 0; mi < mesh.macros.size(); ++mi) {
        const MacroMeshInfo& info = mesh.macro_info[mi];
        if (!info.prism) continue;
        const PlaneFamily& fam = mesh.plane_families[mi];
        auto on_plane = [&](Vec3 p, int i) {
            return std::abs(dot(fam.planes[i].normal, p) - fam.planes[i].offset) <= ptol;
        };
        for (const auto& [node, plane] : info.plane_of) {
            Vec3 p = mesh.nodes[node];
            if (plane == kOppositeEdge) {
                for (int i = 0; i <= fam.layer_count; ++i)
                    if (!on_plane(p, i)) {
                        ++q.plane_violations;
                        break;
                    }
            } else {
                int hits = 0;
                for (int i = 0; i <= fam.layer_count; ++i)
                    if (on_plane(p, i)) ++hits;
                if (hits != 1) ++q.plane_violations;
            }
        }
    }
    for (int t = 0; t < q.tet_count; ++t) {
        const MacroMeshInfo& info = mesh.macro_info[mesh.macro_of[t]];
        if (!info.prism) continue;
        int lo = std::numeric_limits<int>::max(), hi = -1;
        for (int v : mesh.tets[t]) {
            int pl = info.plane_of.at(v);
            if (pl == kOppositeEdge) continue;
            lo = std::min(lo, pl);
            hi = std::max(hi, pl);
        }
        if (hi >= 0 && hi - lo > 1) ++q.plane_violations;
    }
    return q;
}

PointLocator::PointLocator(const Mesh& mesh) : mesh_(mesh) {
    macro_tets_.resize(mesh.macros.size());
    for (int t = 0; t < static_cast<int>(mesh.tets.size()); ++t)
        macro_tets_[mesh.macro_of[t]].push_back(t);
}

PointLocator::Hit PointLocator::best_of(const std::vector<int>& candidates,
                                        Vec3 p) const {
    Hit best;
    double best_min = -std::numeric_limits<double>::infinity();
    for (int t : candidates) {
        if (t < 0) continue;
        auto bc = barycentric(mesh_.tet_vertices(t), p);
        double mn = std::min(std::min(bc[0], bc[1]), std::min(bc[2], bc[3]));
        if (mn > best_min) {
            best_min = mn;
            best = {t, bc};
        }
    }
    return best;
}

void PointLocator::kuhn_candidates(int macro_id, Vec3 p, int window,
                                   std::vector<int>& out) const {
    const Macroelement& m = mesh_.macros[macro_id];
    const MacroMeshInfo& info = mesh_.macro_info[macro_id];
    const int n = mesh_.n;
    std::array<Vec3, 4> w;
    for (int i = 0; i < 4; ++i) w[i] = m.v[info.sorted_verts[i]];

    Vec3 x = p;
    if (info.apex_sorted >= 0 && m.nu != 1.0) {
        Vec3 apex = w[info.apex_sorted];
        auto bc = barycentric(w, p);
        double rho_g = 1.0 - bc[info.apex_sorted];
        if (rho_g < 1e-14)
            x = apex;
        else
            x = apex + std::pow(rho_g, m.nu - 1.0) * (p - apex);
    }
    auto bc = barycentric(w, x);
    double af = n * (1.0 - bc[0]);
    double bf = n * (bc[2] + bc[3]);
    double cf = n * bc[3];
    int ia = std::clamp(int(std::floor(af)), 0, n - 1);
    int ib = std::clamp(int(std::floor(bf)), 0, n - 1);
    int ic = std::clamp(int(std::floor(cf)), 0, n - 1);
    int wdn = window - 1;
    for (int da = -wdn; da <= wdn; ++da)
        for (int db = -wdn; db <= wdn; ++db)
            for (int dc = -wdn; dc <= wdn; ++dc) {
                int a = ia + da, b = ib + db, c = ic + dc;
                if (a < 0 || b < 0 || c < 0 || a >= n || b >= n || c >= n) continue;
                for (int perm = 0; perm < 6; ++perm) {
                    auto it = info.kuhn_tet.find(kuhn_key(a, b, c, perm));
                    if (it != info.kuhn_tet.end()) out.push_back(it->second);
                }
            }
}

void PointLocator::prism_candidates(int macro_id, Vec3 p, int window,
                                    std::vector<int>& out) const {
    const Macroelement& m = mesh_.macros[macro_id];
    const MacroMeshInfo& info = mesh_.macro_info[macro_id];
    const int n = mesh_.n;
    auto el = m.edge_local();
    auto ol = m.opposite_edge_local();
    Vec3 E0 = m.v[el[0]], E1 = m.v[el[1]], F0 = m.v[ol[0]], F1 = m.v[ol[1]];
    Vec3 d = E1 - E0;

    // The plane of the pencil through x: det(x-p(s), F0-p(s), F1-p(s)) = 0
    // is linear in s because the quadratic terms share the column d twice.
    Vec3 u = p - E0, vv = F0 - E0, ww = F1 - E0;
    double num = det3(u, vv, ww);
    double den = det3(d, vv, ww) + det3(u, d, ww) + det3(u, vv, d);
    double s = den != 0.0 ? num / den : 0.0;
    s = std::clamp(s, 0.0, 1.0);
    double sig = (m.kind == MacroKind::Type4 && m.nu != 1.0) ? std::pow(s, m.nu) : s;
    int i0 = std::clamp(int(std::floor(sig * n)), 0, n - 1);

    // In-plane barycentric over (p(s), F0, F1) via least squares.
    Vec3 Ps = E0 + s * d;
    Vec3 e0 = F0 - Ps, e1 = F1 - Ps, rhs = p - Ps;
    double g00 = dot(e0, e0), g01 = dot(e0, e1), g11 = dot(e1, e1);
    double r0 = dot(e0, rhs), r1 = dot(e1, rhs);
    double det = g00 * g11 - g01 * g01;
    double w0 = 0.0, w1 = 0.0;
    if (det > 0) {
        w0 = (g11 * r0 - g01 * r1) / det;
        w1 = (g00 * r1 - g01 * r0) / det;
    }
    double rho = std::clamp(w0 + w1, 0.0, 1.0);
    double jf = (m.mu != 1.0) ? n * std::pow(rho, m.mu) : n * rho;
    double kf = rho > 1e-14 ? jf * (w1 / rho) : 0.0;

    // Translate (j,k) estimates back to the sorted-generator path lattice the
    // 2D cells are enumerated in: a = n - w_g0, b = w_g2.
    std::array<Vec3, 3> gen{E0, F0, F1};
    std::array<int, 3> gord{0, 1, 2};
    std::sort(gord.begin(), gord.end(),
              [&](int a, int b) { return lex_less(gen[a], gen[b]); });
    double wgen[3] = {n - jf, jf - kf, kf}; // weights of (pencil, F0, F1)
    double ws[3];
    for (int t = 0; t < 3; ++t) ws[t] = wgen[gord[t]];
    double af = n - ws[0];
    double bf = ws[2];

    int wdn = window - 1;
    auto push_cell = [&](int strip, int idx) {
        if (strip < 0 || strip >= n) return;
        if (idx < 0 || idx >= static_cast<int>(info.cells2d.size())) return;
        for (int t : info.cell_tets[strip][idx])
            if (t >= 0) out.push_back(t);
    };
    for (int di = -wdn; di <= wdn; ++di) {
        int strip = i0 + di;
        if (strip < 0 || strip >= n) continue;
        int a0 = std::clamp(int(std::floor(af)), 0, n - 1);
        int b0 = std::clamp(int(std::floor(bf)), 0, a0);
        for (int da = -wdn; da <= wdn; ++da) {
            int a = a0 + da;
            if (a < 0 || a >= n) continue;
            for (int db = -wdn; db <= wdn; ++db) {
                int b = b0 + db;
                if (b < 0 || b > a) continue;
                push_cell(strip, a * a + 2 * b);         // up cell at (a,b)
                if (b < a) push_cell(strip, a * a + 2 * b + 1); // down cell
            }
        }
    }
}

PointLocator::Hit PointLocator::locate(int macro_id, Vec3 p) const {
    std::vector<int> candidates;
    for (int window : {1, 2, 3}) {
        candidates.clear();
        if (mesh_.macro_info[macro_id].prism)
            prism_candidates(macro_id, p, window, candidates);
        else
            kuhn_candidates(macro_id, p, window, candidates);
        Hit h = best_of(candidates, p);
        if (h.tet >= 0) {
            double mn = std::min(std::min(h.bary[0], h.bary[1]),
                                 std::min(h.bary[2], h.bary[3]));
            if (mn >= -1e-9) return h;
        }
    }
    return best_of(macro_tets_[macro_id], p);
}

} // namespace gradfem
