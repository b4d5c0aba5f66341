#include "gradfem/analysis.hpp"

#include "gradfem/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <stdexcept>

namespace gradfem {

namespace {

constexpr double kVertexExponent = 0.454; // corner opening of the reference domain
constexpr double kVertexWeight = 0.5;     // beta for the vertex-singular model
constexpr double kEdgeWeight = 0.4;       // delta for the edge-singular model
constexpr double kNeedleAspect = 2.0;     // h3 >= 2 h1 counts as a needle
constexpr double kFlatAspect = 0.5;       // h3 <= h1/2 counts as flat

Vec3 lateral_vec(const Prism& pr, int i) { return pr.v[i + 3] - pr.v[i]; }

double tet_signed_volume(const std::array<Vec3, 4>& t) {
    return dot(cross(t[1] - t[0], t[2] - t[0]), t[3] - t[0]) / 6.0;
}

} // namespace

void validate_prism(const Prism& pr) {
    Vec3 d0 = lateral_vec(pr, 0);
    double l0 = norm(d0);
    if (l0 <= 0.0) throw std::invalid_argument("prism: zero lateral edge");
    for (int i = 1; i < 3; ++i) {
        Vec3 di = lateral_vec(pr, i);
        double li = norm(di);
        if (li <= 0.0) throw std::invalid_argument("prism: zero lateral edge");
        if (norm(cross(d0 / l0, di / li)) > 1e-12)
            throw std::invalid_argument("prism: lateral edges are not parallel");
        if (dot(d0, di) < 0.0)
            throw std::invalid_argument("prism: lateral edges point both ways");
    }
    double base = triangle_area(pr.v[0], pr.v[1], pr.v[2]);
    double diam = std::max({dist(pr.v[0], pr.v[1]), dist(pr.v[1], pr.v[2]),
                            dist(pr.v[2], pr.v[0])});
    if (base <= 1e-14 * diam * diam)
        throw std::invalid_argument("prism: degenerate base triangle");
    for (const auto& t : prism_split(pr))
        if (tet_signed_volume(t) <= 0.0)
            throw std::invalid_argument("prism: non-positive volume");
}

double prism_h3(const Prism& pr) {
    double h = norm(lateral_vec(pr, 0));
    for (int i = 1; i < 3; ++i) h = std::min(h, norm(lateral_vec(pr, i)));
    return h;
}

std::array<std::array<Vec3, 4>, 3> prism_split(const Prism& pr) {
    // Diagonals v1-v3, v2-v4, v2-v3 on the lateral quads; the quads are
    // planar because the lateral edges are parallel.
    return {{{pr.v[0], pr.v[1], pr.v[2], pr.v[3]},
             {pr.v[1], pr.v[2], pr.v[3], pr.v[4]},
             {pr.v[2], pr.v[3], pr.v[4], pr.v[5]}}};
}

double prism_trace_ratio(const Prism& pr, const ScalarField& v,
                         const ScalarField& lateral_dv, double p) {
    validate_prism(pr);
    if (p < 1.0) throw std::invalid_argument("prism_trace_ratio: p < 1");
    double h3 = prism_h3(pr);
    auto vp = [&](Vec3 q) { return std::pow(std::abs(v(q)), p); };
    auto dp = [&](Vec3 q) { return std::pow(std::abs(lateral_dv(q)), p); };
    double face = integrate_tri(pr.v[0], pr.v[1], pr.v[2], 6, vp);
    double vol_v = 0.0, vol_d = 0.0;
    for (const auto& t : prism_split(pr)) {
        vol_v += integrate_tet(t, 6, vp);
        vol_d += integrate_tet(t, 6, dp);
    }
    double rhs = (vol_v + std::pow(h3, p) * vol_d) / h3;
    if (rhs <= 0.0) throw std::invalid_argument("prism_trace_ratio: zero field");
    return face / rhs;
}

namespace {

// Barycentric containment with a dimensionless slack.
bool point_in_tet(const std::array<Vec3, 4>& t, Vec3 p, double tol) {
    Vec3 b = t[1] - t[0], c = t[2] - t[0], d = t[3] - t[0];
    double det = dot(b, cross(c, d));
    if (std::abs(det) < 1e-300) return false;
    Vec3 q = p - t[0];
    double l1 = dot(q, cross(c, d)) / det;
    double l2 = dot(b, cross(q, d)) / det;
    double l3 = dot(b, cross(c, q)) / det;
    return l1 >= -tol && l2 >= -tol && l3 >= -tol && l1 + l2 + l3 <= 1.0 + tol;
}

struct FaceKey {
    std::array<int, 3> v;
    bool operator<(const FaceKey& o) const { return v < o.v; }
};

} // namespace

PatchTraceSample patch_trace_ratio(const Mesh& mesh, const PatchMap& patches,
                                   int tet, int node, const ScalarField& v,
                                   const VectorField& grad_v) {
    if (tet < 0 || tet >= static_cast<int>(mesh.tets.size()))
        throw std::invalid_argument("patch_trace_ratio: tet index");
    const auto& tn = mesh.tets[tet];
    int local = -1;
    for (int i = 0; i < 4; ++i)
        if (tn[i] == node) local = i;
    if (local < 0)
        throw std::invalid_argument("patch_trace_ratio: node is not a vertex of the tet");
    const Macroelement& m = mesh.macros[mesh.macro_of[tet]];
    if (m.kind != MacroKind::Type3 && m.kind != MacroKind::Type4)
        throw std::invalid_argument("patch_trace_ratio: element is not edge-graded");

    auto el = m.edge_local();
    Vec3 edge_dir = normalized(m.v[el[1]] - m.v[el[0]]);
    Vec3 nd = mesh.nodes[node];

    const auto& members = patches.members[tet];
    std::vector<std::array<Vec3, 4>> cells;
    cells.reserve(members.size());
    for (int tm : members) cells.push_back(mesh.tet_vertices(tm));
    auto inside = [&](Vec3 p) {
        for (const auto& c : cells)
            if (point_in_tet(c, p, 1e-9)) return true;
        return false;
    };
    double extent = 0.0;
    for (const auto& c : cells)
        for (const auto& q : c) extent = std::max(extent, std::abs(dot(q - nd, edge_dir)));
    if (!(extent > 0.0))
        throw std::runtime_error("patch_trace_ratio: flat patch along the singular direction");

    // Maximal parallelogram with one side along the singular edge: every
    // transversal element edge at the node and both marching directions
    // compete on area. Bisection keeps an admissible height throughout (the
    // predicate samples the full parallelogram), so diagonal candidates that
    // leave the patch immediately lose on area rather than erroring out.
    auto fits = [&](Vec3 s, Vec3 d3, double z) {
        for (int it = 0; it <= 8; ++it)
            for (int iq = 1; iq <= 4; ++iq) {
                Vec3 p = nd + (it / 8.0) * s + (iq / 4.0) * z * d3;
                if (!inside(p)) return false;
            }
        return true;
    };
    Vec3 s{}, d3{};
    double height = 0.0, pn_area = -1.0;
    bool any_edge = false;
    for (int i = 0; i < 4; ++i) {
        if (i == local) continue;
        Vec3 e = mesh.nodes[tn[i]] - nd;
        if (norm(cross(normalized(e), edge_dir)) <= 1e-9) continue;
        any_edge = true;
        for (double sign : {1.0, -1.0}) {
            Vec3 dir = sign * edge_dir;
            double lo = 0.0, hi = extent;
            if (fits(e, dir, hi)) {
                lo = hi;
            } else {
                for (int it = 0; it < 50; ++it) {
                    double mid = 0.5 * (lo + hi);
                    (fits(e, dir, mid) ? lo : hi) = mid;
                }
            }
            double area = norm(cross(e, lo * dir));
            if (area > pn_area) {
                pn_area = area;
                height = lo;
                s = e;
                d3 = dir;
            }
        }
    }
    if (!any_edge)
        throw std::runtime_error("patch_trace_ratio: no transversal edge at the node");

    // Total area of patch boundary faces in the plane of the parallelogram.
    std::map<FaceKey, int> face_count;
    static constexpr int kFaces[4][3] = {{1, 2, 3}, {0, 2, 3}, {0, 1, 3}, {0, 1, 2}};
    for (int tm : members) {
        const auto& q = mesh.tets[tm];
        for (const auto& f : kFaces) {
            FaceKey key{{q[f[0]], q[f[1]], q[f[2]]}};
            std::sort(key.v.begin(), key.v.end());
            ++face_count[key];
        }
    }
    Vec3 nrm = normalized(cross(s, d3));
    double fn_area = 0.0;
    for (const auto& [key, cnt] : face_count) {
        if (cnt != 1) continue;
        bool coplanar = true;
        for (int vi : key.v)
            if (std::abs(dot(mesh.nodes[vi] - nd, nrm)) > 1e-9 * (1.0 + extent))
                coplanar = false;
        if (coplanar)
            fn_area += triangle_area(mesh.nodes[key.v[0]], mesh.nodes[key.v[1]],
                                     mesh.nodes[key.v[2]]);
    }
    if (fn_area <= 0.0)
        throw std::runtime_error("patch_trace_ratio: no boundary face in the trace plane");
    if (pn_area < 0.1 * fn_area)
        throw std::runtime_error("patch_trace_ratio: degenerate parallelogram");

    // L1 norm over the parallelogram with a 4x4 Gauss product rule.
    auto g4 = gauss_legendre(4);
    double lhs = 0.0;
    for (const auto& qa : g4)
        for (const auto& qb : g4) {
            Vec3 p = nd + qa.x * s + qb.x * height * d3;
            lhs += qa.w * qb.w * std::abs(v(p));
        }
    lhs *= pn_area;

    // Two shortest element edges and their directional derivatives.
    static constexpr int kEdges[6][2] = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
    std::vector<std::pair<double, Vec3>> edges;
    for (const auto& e : kEdges) {
        Vec3 d = mesh.nodes[tn[e[1]]] - mesh.nodes[tn[e[0]]];
        edges.emplace_back(norm(d), normalized(d));
    }
    std::sort(edges.begin(), edges.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    double vol = 0.0, l1v = 0.0, l1d1 = 0.0, l1d2 = 0.0;
    for (const auto& c : cells) {
        vol += std::abs(tet_signed_volume(c));
        l1v += integrate_tet(c, 4, [&](Vec3 p) { return std::abs(v(p)); });
        l1d1 += integrate_tet(c, 4, [&](Vec3 p) {
            return std::abs(dot(grad_v(p), edges[0].second));
        });
        l1d2 += integrate_tet(c, 4, [&](Vec3 p) {
            return std::abs(dot(grad_v(p), edges[1].second));
        });
    }
    double rhs = fn_area / vol *
                 (l1v + edges[0].first * l1d1 + edges[1].first * l1d2);

    PatchTraceSample out;
    out.tet = tet;
    out.node = node;
    out.pn_area = pn_area;
    out.fn_area = fn_area;
    out.lhs = lhs;
    out.rhs = rhs;
    out.ratio = rhs > 0.0 ? lhs / rhs : 0.0;
    return out;
}

namespace {

Vec3 hess_vec(const std::array<double, 6>& h, Vec3 a) {
    // entries: xx, yy, zz, yz, xz, xy
    return {h[0] * a.x + h[5] * a.y + h[4] * a.z,
            h[5] * a.x + h[1] * a.y + h[3] * a.z,
            h[4] * a.x + h[3] * a.y + h[2] * a.z};
}

double hess_frobenius_sq(const std::array<double, 6>& h) {
    return h[0] * h[0] + h[1] * h[1] + h[2] * h[2] +
           2.0 * (h[3] * h[3] + h[4] * h[4] + h[5] * h[5]);
}

// C2 cutoff: 1 below r0, 0 above r1, quintic in between.
struct Cutoff {
    double r0, r1;
    double val(double x) const {
        if (x <= r0) return 1.0;
        if (x >= r1) return 0.0;
        double s = (x - r0) / (r1 - r0);
        return 1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
    }
    double d1(double x) const {
        if (x <= r0 || x >= r1) return 0.0;
        double w = r1 - r0, s = (x - r0) / w;
        return -30.0 * s * s * (1.0 - s) * (1.0 - s) / w;
    }
    double d2(double x) const {
        if (x <= r0 || x >= r1) return 0.0;
        double w = r1 - r0, s = (x - r0) / w;
        return -60.0 * s * (1.0 - s) * (1.0 - 2.0 * s) / (w * w);
    }
};

// u = x^2 + xy + yz + z^2: a full-rank quadratic for the smooth regimes.
InterpModel smooth_model() {
    InterpModel m;
    m.u = [](const Vec3& p) { return p.x * p.x + p.x * p.y + p.y * p.z + p.z * p.z; };
    m.grad = [](const Vec3& p) {
        return Vec3{2.0 * p.x + p.y, p.x + p.z, p.y + 2.0 * p.z};
    };
    m.hess = [](const Vec3&) { return std::array<double, 6>{2, 0, 2, 1, 0, 1}; };
    return m;
}

// u = xyz (1-x^2)(1-y^2)(1-z^2): smooth and zero at every lattice corner of
// the decomposition, so the pinned interpolation coefficients agree with u.
InterpModel vanishing_model() {
    auto f = [](double t) { return t - t * t * t; };
    auto f1 = [](double t) { return 1.0 - 3.0 * t * t; };
    auto f2 = [](double t) { return -6.0 * t; };
    InterpModel m;
    m.u = [=](const Vec3& p) { return f(p.x) * f(p.y) * f(p.z); };
    m.grad = [=](const Vec3& p) {
        return Vec3{f1(p.x) * f(p.y) * f(p.z), f(p.x) * f1(p.y) * f(p.z),
                    f(p.x) * f(p.y) * f1(p.z)};
    };
    m.hess = [=](const Vec3& p) {
        return std::array<double, 6>{
            f2(p.x) * f(p.y) * f(p.z),  f(p.x) * f2(p.y) * f(p.z),
            f(p.x) * f(p.y) * f2(p.z),  f(p.x) * f1(p.y) * f1(p.z),
            f1(p.x) * f(p.y) * f1(p.z), f1(p.x) * f1(p.y) * f(p.z)};
    };
    return m;
}

// u = R^lambda W with W = (1-x^2)(1-y^2)(1-z^2): the corner-singular profile
// damped to zero on the outer boundary, so it vanishes at every pinned
// corner while staying positive inside each corner patch.
InterpModel vertex_singular_model() {
    const double lam = kVertexExponent;
    auto A = [](double t) { return 1.0 - t * t; };
    auto A1 = [](double t) { return -2.0 * t; };
    InterpModel m;
    auto W = [=](const Vec3& p) { return A(p.x) * A(p.y) * A(p.z); };
    auto gradW = [=](const Vec3& p) {
        return Vec3{A1(p.x) * A(p.y) * A(p.z), A(p.x) * A1(p.y) * A(p.z),
                    A(p.x) * A(p.y) * A1(p.z)};
    };
    auto hessW = [=](const Vec3& p) {
        return std::array<double, 6>{
            -2.0 * A(p.y) * A(p.z),      -2.0 * A(p.x) * A(p.z),
            -2.0 * A(p.x) * A(p.y),      A(p.x) * A1(p.y) * A1(p.z),
            A1(p.x) * A(p.y) * A1(p.z),  A1(p.x) * A1(p.y) * A(p.z)};
    };
    m.u = [=](const Vec3& p) {
        double R = norm(p);
        return std::pow(R, lam) * W(p);
    };
    m.grad = [=](const Vec3& p) {
        double R = norm(p);
        double F = std::pow(R, lam), F1 = lam * std::pow(R, lam - 1.0);
        Vec3 rh = (1.0 / R) * p;
        return F1 * W(p) * rh + F * gradW(p);
    };
    m.hess = [=](const Vec3& p) {
        double R = norm(p);
        double F = std::pow(R, lam);
        double F1 = lam * std::pow(R, lam - 1.0);
        double F2 = lam * (lam - 1.0) * std::pow(R, lam - 2.0);
        double w = W(p);
        Vec3 gw = gradW(p);
        auto hw = hessW(p);
        double c[3] = {p.x, p.y, p.z};
        double gwc[3] = {gw.x, gw.y, gw.z};
        auto entry = [&](int i, int j) {
            double del = i == j ? 1.0 : 0.0;
            double hf = F2 * c[i] * c[j] / (R * R) +
                        F1 * (del / R - c[i] * c[j] / (R * R * R));
            return hf * w + F1 / R * (c[i] * gwc[j] + c[j] * gwc[i]);
        };
        std::array<double, 6> out{entry(0, 0) + F * hw[0], entry(1, 1) + F * hw[1],
                                  entry(2, 2) + F * hw[2], entry(1, 2) + F * hw[3],
                                  entry(0, 2) + F * hw[4], entry(0, 1) + F * hw[5]};
        return out;
    };
    return m;
}

// u = x^2: constant curvature across the needle direction of the macros
// whose singular edge runs along z.
InterpModel transversal_model() {
    InterpModel m;
    m.u = [](const Vec3& p) { return p.x * p.x; };
    m.grad = [](const Vec3& p) { return Vec3{2.0 * p.x, 0.0, 0.0}; };
    m.hess = [](const Vec3&) { return std::array<double, 6>{2, 0, 0, 0, 0, 0}; };
    return m;
}

// u = f(r), f = r^(2/3) chi(r), r = dist to the z axis: the edge-singular
// profile cut off before it reaches any pinned corner (all corners off the
// z axis have r >= 1).
InterpModel edge_singular_model() {
    const Cutoff chi{0.2, 0.45};
    const double a = 2.0 / 3.0;
    auto f = [=](double r) { return std::pow(r, a) * chi.val(r); };
    auto f1 = [=](double r) {
        return a * std::pow(r, a - 1.0) * chi.val(r) + std::pow(r, a) * chi.d1(r);
    };
    auto f2 = [=](double r) {
        return a * (a - 1.0) * std::pow(r, a - 2.0) * chi.val(r) +
               2.0 * a * std::pow(r, a - 1.0) * chi.d1(r) +
               std::pow(r, a) * chi.d2(r);
    };
    InterpModel m;
    m.u = [=](const Vec3& p) {
        double r = std::hypot(p.x, p.y);
        return r > 0.0 ? f(r) : 0.0;
    };
    m.grad = [=](const Vec3& p) {
        double r = std::hypot(p.x, p.y);
        if (r <= 0.0) return Vec3{0, 0, 0};
        double g = f1(r) / r;
        return Vec3{g * p.x, g * p.y, 0.0};
    };
    m.hess = [=](const Vec3& p) {
        double r = std::hypot(p.x, p.y);
        double s2 = f2(r), s1 = f1(r);
        double xx = s2 * p.x * p.x / (r * r) + s1 * (1.0 / r - p.x * p.x / (r * r * r));
        double yy = s2 * p.y * p.y / (r * r) + s1 * (1.0 / r - p.y * p.y / (r * r * r));
        double xy = s2 * p.x * p.y / (r * r) - s1 * p.x * p.y / (r * r * r);
        return std::array<double, 6>{xx, yy, 0.0, 0.0, 0.0, xy};
    };
    return m;
}

InterpModel builtin_model(int case_id) {
    switch (case_id) {
        case 1:
        case 4: return smooth_model();
        case 2:
        case 5: return vanishing_model();
        case 3: return vertex_singular_model();
        case 6: return transversal_model();
        case 7: return edge_singular_model();
        default: throw std::invalid_argument("local_interp_ratio: case outside 1..7");
    }
}

// Macro-local partial derivatives of the model up to second order.
LocalDerivFn local_oracle(const Frame& fr, const InterpModel& model) {
    return [fr, model](const Vec3& pl, int ax, int ay, int az) -> double {
        Vec3 pw = fr.to_world(pl);
        int ord = ax + ay + az;
        if (ord == 0) return model.u(pw);
        if (ord == 1) {
            Vec3 e = ax ? fr.e1 : (ay ? fr.e2 : fr.e3);
            return dot(e, model.grad(pw));
        }
        Vec3 d[2];
        int k = 0;
        for (int i = 0; i < ax; ++i) d[k++] = fr.e1;
        for (int i = 0; i < ay; ++i) d[k++] = fr.e2;
        for (int i = 0; i < az; ++i) d[k++] = fr.e3;
        return dot(d[0], hess_vec(model.hess(pw), d[1]));
    };
}

// First-order oracle of the macro-local partial g = d_dir u (dir in 1..3).
LocalDerivFn component_oracle(const Frame& fr, const InterpModel& model, int dir) {
    return [fr, model, dir](const Vec3& pl, int ax, int ay, int az) -> double {
        Vec3 pw = fr.to_world(pl);
        Vec3 ed = dir == 1 ? fr.e1 : (dir == 2 ? fr.e2 : fr.e3);
        int ord = ax + ay + az;
        if (ord == 0) return dot(ed, model.grad(pw));
        Vec3 e = ax ? fr.e1 : (ay ? fr.e2 : fr.e3);
        return dot(e, hess_vec(model.hess(pw), ed));
    };
}

// Borrowed views of one level's mesh structures; built in place per level
// because FEFunction keeps a pointer to the mesh.
struct LevelContext {
    const Mesh& mesh;
    const PatchMap& patches;
    const FEFunction& dh;
    const std::vector<char>& has_c;
    const std::vector<char>& has_s;
};

bool z_edge_macro(const Macroelement& m) {
    if (m.kind != MacroKind::Type3 && m.kind != MacroKind::Type4) return false;
    auto el = m.edge_local();
    Vec3 d = normalized(m.v[el[1]] - m.v[el[0]]);
    return std::abs(d.z) > 0.99;
}

bool patch_touches_origin(const LevelContext& ctx, int t) {
    for (int tm : ctx.patches.members[t])
        for (int v : ctx.mesh.tets[tm])
            if (norm(ctx.mesh.nodes[v]) <= 1e-12) return true;
    return false;
}

bool tet_matches_case(int case_id, const LevelContext& ctx, int t) {
    const Macroelement& m = ctx.mesh.macros[ctx.mesh.macro_of[t]];
    bool prismatic = m.kind == MacroKind::Type3 || m.kind == MacroKind::Type4;
    if (case_id <= 3) {
        if (prismatic) return false;
        bool corner = ctx.has_c[t];
        return case_id == 1 ? !corner : corner;
    }
    if (!prismatic) return false;
    SizeTriple sz = element_sizes(ctx.mesh, t);
    if (case_id <= 5) {
        if (sz.h3 > kFlatAspect * sz.h1) return false;
        return case_id == 4 ? (!ctx.has_c[t] && !ctx.has_s[t]) : ctx.has_c[t] != 0;
    }
    if (sz.h3 < kNeedleAspect * sz.h1 || !z_edge_macro(m)) return false;
    if (case_id == 6) return !ctx.has_s[t] && !ctx.has_c[t];
    return ctx.has_s[t] && !patch_touches_origin(ctx, t);
}

double element_lhs(const LevelContext& ctx, int t, const InterpModel& model,
                   bool axis_refined) {
    auto v = ctx.mesh.tet_vertices(t);
    Vec3 g = ctx.dh.gradient(t);
    auto err2 = [&](Vec3 p) {
        Vec3 d = model.grad(p) - g;
        return dot(d, d);
    };
    if (!axis_refined) return std::sqrt(integrate_tet(v, 4, err2));
    Frame fr = ctx.mesh.macros[ctx.mesh.macro_of[t]].local_frame();
    std::array<Vec3, 4> lv;
    for (int i = 0; i < 4; ++i) lv[i] = fr.to_local(v[i]);
    double sq = integrate_axis_refined({lv}, 4, 12,
                                       [&](Vec3 pl) { return err2(fr.to_world(pl)); });
    return std::sqrt(sq);
}

std::vector<std::array<Vec3, 4>> patch_cells_local(const LevelContext& ctx, int t,
                                                   const Frame& fr) {
    std::vector<std::array<Vec3, 4>> cells;
    cells.reserve(ctx.patches.members[t].size());
    for (int tm : ctx.patches.members[t]) {
        auto v = ctx.mesh.tet_vertices(tm);
        std::array<Vec3, 4> lv;
        for (int i = 0; i < 4; ++i) lv[i] = fr.to_local(v[i]);
        cells.push_back(lv);
    }
    return cells;
}

double element_rhs(int case_id, const LevelContext& ctx, int t,
                   const InterpModel& model) {
    SizeTriple sz = element_sizes(ctx.mesh, t);
    const Macroelement& m = ctx.mesh.macros[ctx.mesh.macro_of[t]];
    if (case_id == 1 || case_id == 2 || case_id == 4 || case_id == 5) {
        double sq = 0.0;
        for (int tm : ctx.patches.members[t])
            sq += integrate_tet(ctx.mesh.tet_vertices(tm), 4, [&](Vec3 p) {
                return hess_frobenius_sq(model.hess(p));
            });
        return sz.hT * std::sqrt(sq);
    }
    Frame fr = m.local_frame();
    auto cells = patch_cells_local(ctx, t, fr);
    if (case_id == 3) {
        double nrm = weighted_norm(cells, {2, kVertexWeight, 0.0},
                                   local_oracle(fr, model), false);
        return std::pow(sz.hT, 1.0 - kVertexWeight) * nrm;
    }
    if (case_id == 6) {
        double h[3] = {sz.h1, sz.h2, sz.h3};
        Vec3 axes[3] = {fr.e1, fr.e2, fr.e3};
        double rhs = 0.0;
        for (int i = 0; i < 3; ++i) {
            double sq = 0.0;
            for (int tm : ctx.patches.members[t])
                sq += integrate_tet(ctx.mesh.tet_vertices(tm), 4, [&](Vec3 p) {
                    Vec3 col = hess_vec(model.hess(p), axes[i]);
                    return dot(col, col);
                });
            rhs += h[i] * std::sqrt(sq);
        }
        return rhs;
    }
    // case 7: transversal parts in the edge-weighted norm, the lateral part
    // in the unweighted one.
    double n1 = weighted_norm(cells, {1, kEdgeWeight, kEdgeWeight},
                              component_oracle(fr, model, 1), true);
    double n2 = weighted_norm(cells, {1, kEdgeWeight, kEdgeWeight},
                              component_oracle(fr, model, 2), true);
    double n3 = weighted_norm(cells, {1, 0.0, 0.0},
                              component_oracle(fr, model, 3), true);
    return std::pow(sz.h1, 1.0 - kEdgeWeight) * (n1 + n2) + sz.h3 * n3;
}

} // namespace

RatioReport local_interp_ratio(int case_id, double mu, double nu,
                               const std::vector<int>& levels) {
    return local_interp_ratio(case_id, mu, nu, levels, builtin_model(case_id));
}

RatioReport local_interp_ratio(int case_id, double mu, double nu,
                               const std::vector<int>& levels,
                               const InterpModel& model) {
    if (case_id < 1 || case_id > kInterpCaseCount)
        throw std::invalid_argument("local_interp_ratio: case outside 1..7");
    if (levels.empty())
        throw std::invalid_argument("local_interp_ratio: no levels");
    RatioReport rep;
    rep.case_id = case_id;
    rep.mu = mu;
    rep.nu = nu;
    for (int n : levels) {
        Mesh mesh = build_mesh(build_fichera_macros(mu, nu), n);
        auto cls = classify_nodes(mesh);
        auto asg = select_sigma(mesh, cls);
        auto patches = build_patches(mesh, asg);
        FEFunction dh = apply_Dh(model.u, mesh, asg);
        std::vector<char> has_c(mesh.tets.size(), 0), has_s(mesh.tets.size(), 0);
        for (std::size_t t = 0; t < mesh.tets.size(); ++t)
            for (int v : mesh.tets[t]) {
                if (cls.label[v] == NodeClass::Coupling) has_c[t] = 1;
                if (cls.label[v] == NodeClass::SingularEdge) has_s[t] = 1;
            }
        LevelContext ctx{mesh, patches, dh, has_c, has_s};
        double lvl_max = 0.0;
        for (int t = 0; t < static_cast<int>(ctx.mesh.tets.size()); ++t) {
            if (!tet_matches_case(case_id, ctx, t)) continue;
            double lhs = element_lhs(ctx, t, model, case_id == 7);
            double rhs = element_rhs(case_id, ctx, t, model);
            double ratio = lhs <= 1e-13 * (1.0 + rhs) ? 0.0 : lhs / rhs;
            rep.samples.push_back({n, t, lhs, rhs, ratio});
            lvl_max = std::max(lvl_max, ratio);
        }
        rep.level_max.push_back(lvl_max);
        rep.max_ratio = std::max(rep.max_ratio, lvl_max);
    }
    return rep;
}

void dump_ratio_csv(const RatioReport& report, std::ostream& os) {
    os << "case,n,element_id,lhs,rhs,ratio\n";
    char buf[160];
    for (const auto& s : report.samples) {
        std::snprintf(buf, sizeof buf, "%d,%d,%d,%.12g,%.12g,%.12g\n",
                      report.case_id, s.level, s.element, s.lhs, s.rhs, s.ratio);
        os << buf;
    }
}

NeedleGrowth nodal_needle_growth(const std::vector<double>& aspects) {
    if (aspects.size() < 2)
        throw std::invalid_argument("nodal_needle_growth: need at least two aspects");
    NeedleGrowth out;
    for (double a : aspects) {
        if (a <= 1.0) throw std::invalid_argument("nodal_needle_growth: aspect <= 1");
        double eps = 1.0 / a;
        std::array<Vec3, 4> v = {Vec3{0, 0, 0}, Vec3{0, 0, 1}, Vec3{eps, 0, 0.5},
                                 Vec3{0, eps, 0.5}};
        // Nodal interpolant gradient of u = z^2 from the P1 basis gradients.
        auto basis = p1_gradients(v);
        Vec3 g{0, 0, 0};
        for (int i = 0; i < 4; ++i) g = g + (v[i].z * v[i].z) * basis[i];
        double lhs = std::sqrt(integrate_tet(v, 4, [&](Vec3 p) {
            Vec3 d = Vec3{0, 0, 2.0 * p.z} - g;
            return dot(d, d);
        }));
        // Only the lateral second derivative is nonzero, so the
        // direction-weighted bound reduces to h3 |d3 u|_{H1(T)} with h3 = 1.
        double rhs = std::sqrt(integrate_tet(v, 4, [](Vec3) { return 4.0; }));
        out.aspect.push_back(a);
        out.ratio.push_back(lhs / rhs);
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = static_cast<int>(out.aspect.size());
    for (int i = 0; i < n; ++i) {
        double x = std::log(out.aspect[i]), y = std::log(out.ratio[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    out.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    return out;
}

} // namespace gradfem
