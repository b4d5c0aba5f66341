#include "gradfem/fem.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace gradfem {

double FEFunction::value(int t, const Vec3& p) const {
    auto v = mesh->tet_vertices(t);
    auto b = barycentric(v, p);
    const auto& e = mesh->tets[t];
    return b[0] * coeff[e[0]] + b[1] * coeff[e[1]] + b[2] * coeff[e[2]] +
           b[3] * coeff[e[3]];
}

Vec3 FEFunction::gradient(int t) const {
    auto v = mesh->tet_vertices(t);
    auto g = p1_gradients(v);
    const auto& e = mesh->tets[t];
    Vec3 out{0, 0, 0};
    for (int i = 0; i < 4; ++i) out = out + coeff[e[i]] * g[i];
    return out;
}

std::array<Vec3, 4> p1_gradients(const std::array<Vec3, 4>& v) {
    // Rows of the inverse edge matrix give grad lambda_1..3; lambda_0 is the
    // negated sum so the four gradients cancel exactly.
    Vec3 a = v[1] - v[0], b = v[2] - v[0], c = v[3] - v[0];
    double det = dot(a, cross(b, c));
    if (det == 0.0) throw std::runtime_error("p1_gradients: degenerate element");
    Vec3 g1 = cross(b, c) / det;
    Vec3 g2 = cross(c, a) / det;
    Vec3 g3 = cross(a, b) / det;
    Vec3 g0 = {-(g1.x + g2.x + g3.x), -(g1.y + g2.y + g3.y),
               -(g1.z + g2.z + g3.z)};
    return {g0, g1, g2, g3};
}

namespace {

// Collapsed dyadic layers toward the tet vertex `s` (local index si):
// frusta between scalings 2^-m and 2^-m-1 for m = 0..layers-1 plus the core
// tet, each integrated with the base rule. Exact on constants by
// construction (the pieces tile the tet).
double integrate_collapsed(const std::array<Vec3, 4>& v, int si, int degree,
                           int layers, const std::function<double(Vec3)>& f) {
    Vec3 s = v[si];
    std::array<Vec3, 3> base;
    int k = 0;
    for (int i = 0; i < 4; ++i)
        if (i != si) base[k++] = v[i];

    double total = 0.0;
    double outer = 1.0;
    for (int m = 0; m < layers; ++m) {
        double inner = outer * 0.5;
        std::array<Vec3, 3> A, B; // outer, inner triangles
        for (int i = 0; i < 3; ++i) {
            A[i] = s + outer * (base[i] - s);
            B[i] = s + inner * (base[i] - s);
        }
        // Frustum between similar triangles, split as a (possibly slanted)
        // prism: diagonals all run from the B side to the A side.
        total += integrate_tet({B[0], B[1], B[2], A[2]}, degree, f);
        total += integrate_tet({B[0], B[1], A[1], A[2]}, degree, f);
        total += integrate_tet({B[0], A[0], A[1], A[2]}, degree, f);
        outer = inner;
    }
    std::array<Vec3, 4> core;
    for (int i = 0; i < 3; ++i) core[i] = s + outer * (base[i] - s);
    core[3] = s;
    total += integrate_tet(core, degree, f);
    return total;
}

std::vector<Vec3> singular_corners(const Mesh& mesh) {
    std::vector<Vec3> pts;
    for (const auto& m : mesh.macros) {
        if (m.kind != MacroKind::Type2 && m.kind != MacroKind::Type4) continue;
        Vec3 p = m.v[m.singular_vertex];
        bool dup = false;
        for (const auto& q : pts)
            if (norm(p - q) < 1e-14) dup = true;
        if (!dup) pts.push_back(p);
    }
    return pts;
}

} // namespace

CsrMatrix stiffness_matrix(const Mesh& mesh) {
    const int n = static_cast<int>(mesh.nodes.size());
    Triplets trip;
    for (std::size_t t = 0; t < mesh.tets.size(); ++t) {
        auto v = mesh.tet_vertices(static_cast<int>(t));
        double vol = tet_volume(v[0], v[1], v[2], v[3]);
        if (vol <= 0.0) throw std::runtime_error("stiffness_matrix: non-positive element volume");
        auto g = p1_gradients(v);
        const auto& e = mesh.tets[t];
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j)
                trip.add(e[i], e[j], vol * dot(g[i], g[j]));
    }
    return CsrMatrix::from_triplets(n, trip);
}

SparseSystem assemble(const Mesh& mesh, const ScalarField& f) {
    const int n = static_cast<int>(mesh.nodes.size());
    auto corners = singular_corners(mesh);
    const double scale = 1e-12;

    std::vector<double> load(n, 0.0);
    for (std::size_t t = 0; t < mesh.tets.size(); ++t) {
        auto v = mesh.tet_vertices(static_cast<int>(t));
        const auto& e = mesh.tets[t];
        int corner = -1;
        for (const auto& c : corners)
            for (int i = 0; i < 4 && corner < 0; ++i)
                if (norm(v[i] - c) <= scale) corner = i;
        for (int i = 0; i < 4; ++i) {
            auto integrand = [&, i](Vec3 p) {
                auto bc = barycentric(v, p);
                return f(p) * bc[i];
            };
            double val = corner >= 0
                             ? integrate_collapsed(v, corner, 4, 3, integrand)
                             : integrate_tet(v, 4, integrand);
            load[e[i]] += val;
        }
    }

    SparseSystem sys;
    sys.A = stiffness_matrix(mesh);
    sys.constrained = boundary_node_mask(mesh);
    sys.A.eliminate(sys.constrained);
    for (int i = 0; i < n; ++i)
        if (sys.constrained[i]) load[i] = 0.0;
    sys.load = std::move(load);
    return sys;
}

FEFunction solve_system(const Mesh& mesh, const SparseSystem& sys, double tol,
                        SolveInfo* info) {
    FEFunction u;
    u.mesh = &mesh;
    u.coeff.assign(mesh.nodes.size(), 0.0);
    auto res = cg_solve(sys.A, sys.load, u.coeff, tol,
                        20 * static_cast<int>(mesh.nodes.size()) + 1000);
    if (info) {
        info->iterations = res.iterations;
        info->residual = res.residual;
    }
    if (!res.converged)
        throw std::runtime_error("solve_system: CG did not reach tolerance, residual " +
                                 std::to_string(res.residual));
    return u;
}

ErrorPair error_norms(const FEFunction& uh, const ScalarField& ref,
                      const VectorField& ref_grad) {
    const Mesh& mesh = *uh.mesh;
    double l2 = 0.0, h1 = 0.0;
    for (std::size_t t = 0; t < mesh.tets.size(); ++t) {
        auto v = mesh.tet_vertices(static_cast<int>(t));
        Vec3 gh = uh.gradient(static_cast<int>(t));
        const auto& e = mesh.tets[t];
        auto val = [&](Vec3 p) {
            auto bc = barycentric(v, p);
            double s = 0;
            for (int i = 0; i < 4; ++i) s += bc[i] * uh.coeff[e[i]];
            double d = s - ref(p);
            return d * d;
        };
        auto gval = [&](Vec3 p) {
            Vec3 d = gh - ref_grad(p);
            return dot(d, d);
        };
        l2 += integrate_tet(v, 4, val);
        h1 += integrate_tet(v, 4, gval);
    }
    return {std::sqrt(h1), std::sqrt(l2)};
}

ErrorPair error_norms(const FEFunction& coarse, const FEFunction& fine,
                      const PointLocator& coarse_locator) {
    const Mesh& fm = *fine.mesh;
    const Mesh& cm = *coarse.mesh;
    if (cm.macros.size() != fm.macros.size())
        throw std::invalid_argument("error_norms: meshes from different decompositions");
    const auto& rule = tet_rule(4);
    double l2 = 0.0, h1 = 0.0;
    for (std::size_t t = 0; t < fm.tets.size(); ++t) {
        auto v = fm.tet_vertices(static_cast<int>(t));
        Vec3 a = v[1] - v[0], b = v[2] - v[0], c = v[3] - v[0];
        double jac = std::abs(dot(a, cross(b, c)));
        Vec3 gf = fine.gradient(static_cast<int>(t));
        const auto& e = fm.tets[t];
        int macro = fm.macro_of[t];
        for (const auto& q : rule) {
            Vec3 p = v[0] + q.p.x * a + q.p.y * b + q.p.z * c;
            auto hit = coarse_locator.locate(macro, p);
            double uc = coarse.value(hit.tet, p);
            Vec3 gc = coarse.gradient(hit.tet);
            double uf = fine.coeff[e[0]] * (1 - q.p.x - q.p.y - q.p.z) +
                        fine.coeff[e[1]] * q.p.x + fine.coeff[e[2]] * q.p.y +
                        fine.coeff[e[3]] * q.p.z;
            double w = q.w * jac;
            double dv = uf - uc;
            Vec3 dg = gf - gc;
            l2 += w * dv * dv;
            h1 += w * dot(dg, dg);
        }
    }
    return {std::sqrt(h1), std::sqrt(l2)};
}

ResidualEstimate residual_estimate(const FEFunction& uh, const ScalarField& f) {
    const Mesh& mesh = *uh.mesh;
    auto corners = singular_corners(mesh);
    ResidualEstimate est;
    est.element2.assign(mesh.tets.size(), 0.0);

    for (std::size_t t = 0; t < mesh.tets.size(); ++t) {
        auto v = mesh.tet_vertices(static_cast<int>(t));
        int corner = -1;
        for (const auto& c : corners)
            for (int i = 0; i < 4 && corner < 0; ++i)
                if (norm(v[i] - c) <= 1e-12) corner = i;
        auto f2 = [&](Vec3 p) {
            double val = f(p);
            return val * val;
        };
        double nf2 = corner >= 0 ? integrate_collapsed(v, corner, 4, 3, f2)
                                 : integrate_tet(v, 4, f2);
        double hT = element_sizes(mesh, static_cast<int>(t)).hT;
        est.element2[t] = hT * hT * nf2;
    }

    // Face jumps: interior faces carry hF ||[du/dn]||^2 = hF * area * jump^2
    // (P1 gradients are constant), split evenly between the two elements.
    std::map<std::array<int, 3>, std::array<int, 2>> faces;
    for (std::size_t t = 0; t < mesh.tets.size(); ++t) {
        const auto& e = mesh.tets[t];
        static const int fi[4][3] = {{1, 2, 3}, {0, 2, 3}, {0, 1, 3}, {0, 1, 2}};
        for (const auto& fv : fi) {
            std::array<int, 3> key = {e[fv[0]], e[fv[1]], e[fv[2]]};
            std::sort(key.begin(), key.end());
            auto it = faces.find(key);
            if (it == faces.end())
                faces.emplace(key, std::array<int, 2>{static_cast<int>(t), -1});
            else
                it->second[1] = static_cast<int>(t);
        }
    }
    for (const auto& [key, pair] : faces) {
        if (pair[1] < 0) continue;
        Vec3 p0 = mesh.nodes[key[0]], p1 = mesh.nodes[key[1]], p2 = mesh.nodes[key[2]];
        Vec3 nrm = cross(p1 - p0, p2 - p0);
        double area2 = norm(nrm);
        if (area2 == 0.0) continue;
        Vec3 unit = nrm / area2;
        double area = 0.5 * area2;
        double hF = std::max({norm(p1 - p0), norm(p2 - p0), norm(p2 - p1)});
        double jump = dot(uh.gradient(pair[0]) - uh.gradient(pair[1]), unit);
        double term = hF * area * jump * jump;
        est.element2[pair[0]] += 0.5 * term;
        est.element2[pair[1]] += 0.5 * term;
    }

    double sum = 0.0;
    for (double x : est.element2) sum += x;
    est.global = std::sqrt(sum);
    return est;
}

namespace {

struct WeightedIntegrand {
    const WeightedNormSpec* spec;
    const LocalDerivFn* f;
    bool edge_weight;

    double operator()(const Vec3& p) const {
        double r = std::sqrt(p.x * p.x + p.y * p.y);
        double R = std::sqrt(r * r + p.z * p.z);
        double theta = R > 0 ? r / R : 0.0;
        static const int multi[10][3] = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0},
                                         {0, 0, 1}, {2, 0, 0}, {0, 2, 0},
                                         {0, 0, 2}, {1, 1, 0}, {1, 0, 1},
                                         {0, 1, 1}};
        double sum = 0.0;
        for (const auto& a : multi) {
            int ord = a[0] + a[1] + a[2];
            if (ord > spec->k) continue;
            double w = std::pow(R, spec->beta - spec->k + ord);
            if (edge_weight) w *= std::pow(theta, spec->delta - spec->k + ord);
            double d = (*f)(p, a[0], a[1], a[2]);
            sum += w * w * d * d;
        }
        return sum;
    }
};

} // namespace

double weighted_norm(const std::vector<std::array<Vec3, 4>>& local_cells,
                     const WeightedNormSpec& spec, const LocalDerivFn& f,
                     bool edge_weight) {
    if (spec.k < 0 || spec.k > 2)
        throw std::invalid_argument("weighted_norm: k must be 0, 1, or 2");
    WeightedIntegrand g{&spec, &f, edge_weight};
    double sq = integrate_axis_refined(local_cells, 4, 12,
                                       [&](Vec3 p) { return g(p); });
    return std::sqrt(sq);
}

double weighted_norm(const Macroelement& m, const WeightedNormSpec& spec,
                     const LocalDerivFn& f) {
    Frame fr = m.local_frame();
    std::array<Vec3, 4> v;
    for (int i = 0; i < 4; ++i) v[i] = fr.to_local(m.v[i]);
    return weighted_norm(std::vector<std::array<Vec3, 4>>{v}, spec, f, true);
}

double field_l2_norm(const Mesh& mesh, const ScalarField& f) {
    auto corners = singular_corners(mesh);
    double sum = 0.0;
    for (std::size_t t = 0; t < mesh.tets.size(); ++t) {
        auto v = mesh.tet_vertices(static_cast<int>(t));
        int corner = -1;
        for (const auto& c : corners)
            for (int i = 0; i < 4 && corner < 0; ++i)
                if (norm(v[i] - c) <= 1e-12) corner = i;
        auto f2 = [&](Vec3 p) {
            double val = f(p);
            return val * val;
        };
        sum += corner >= 0 ? integrate_collapsed(v, corner, 4, 3, f2)
                           : integrate_tet(v, 4, f2);
    }
    return std::sqrt(sum);
}

double fichera_load(const Vec3& p) {
    double R = norm(p);
    if (R <= 0.0) throw std::domain_error("fichera_load: undefined at the vertex");
    return 1.0 + std::pow(R, -1.5) / std::log(R / 4.0);
}

} // namespace gradfem
