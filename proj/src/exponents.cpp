#include "gradfem/exponents.hpp"

#include "gradfem/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <unordered_map>
#include <utility>

namespace gradfem {

double edge_exponent(double omega) {
    if (!(omega > 0.0 && omega < 2.0 * M_PI))
        throw std::invalid_argument("edge_exponent: omega must lie in (0, 2*pi)");
    return M_PI / omega;
}

double lambda_from_mu(double mu1) { return -0.5 + std::sqrt(0.25 + mu1); }

void mark_boundary(SphericalPatchMesh& patch) {
    std::map<std::pair<int, int>, int> edge_count;
    for (const auto& t : patch.triangles)
        for (int e = 0; e < 3; ++e) {
            int a = t[e], b = t[(e + 1) % 3];
            ++edge_count[{std::min(a, b), std::max(a, b)}];
        }
    patch.boundary.assign(patch.vertices.size(), false);
    for (const auto& [edge, cnt] : edge_count)
        if (cnt == 1) {
            patch.boundary[edge.first] = true;
            patch.boundary[edge.second] = true;
        }
}

SphericalPatchMesh builtin_patch(const std::string& name) {
    SphericalPatchMesh p;
    const Vec3 ex{1, 0, 0}, ey{0, 1, 0}, ez{0, 0, 1};
    if (name == "octant") {
        p.vertices = {ex, ey, ez};
        p.triangles = {{0, 1, 2}};
    } else if (name == "hemisphere") {
        p.vertices = {ex, ey, -1.0 * ex, -1.0 * ey, ez};
        p.triangles = {{0, 1, 4}, {1, 2, 4}, {2, 3, 4}, {3, 0, 4}};
    } else if (name == "fichera") {
        // all sphere octants except the all-positive one
        p.vertices = {ex, ey, ez, -1.0 * ex, -1.0 * ey, -1.0 * ez};
        int idx[2][3] = {{0, 1, 2}, {3, 4, 5}}; // +/- vertex per axis
        for (int sx = 0; sx < 2; ++sx)
            for (int sy = 0; sy < 2; ++sy)
                for (int sz = 0; sz < 2; ++sz) {
                    if (sx == 0 && sy == 0 && sz == 0) continue;
                    p.triangles.push_back({idx[sx][0], idx[sy][1], idx[sz][2]});
                }
    } else {
        throw std::invalid_argument("unknown builtin patch: " + name);
    }
    mark_boundary(p);
    return p;
}

SphericalPatchMesh refine_patch(const SphericalPatchMesh& patch) {
    SphericalPatchMesh out;
    out.vertices = patch.vertices;
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
        auto key = std::make_pair(std::min(a, b), std::max(a, b));
        auto it = midpoint.find(key);
        if (it != midpoint.end()) return it->second;
        Vec3 m = normalized(out.vertices[key.first] + out.vertices[key.second]);
        int id = static_cast<int>(out.vertices.size());
        out.vertices.push_back(m);
        midpoint.emplace(key, id);
        return id;
    };
    for (const auto& t : patch.triangles) {
        int m01 = mid(t[0], t[1]), m12 = mid(t[1], t[2]), m02 = mid(t[0], t[2]);
        out.triangles.push_back({t[0], m01, m02});
        out.triangles.push_back({m01, t[1], m12});
        out.triangles.push_back({m02, m12, t[2]});
        out.triangles.push_back({m01, m12, m02});
    }
    mark_boundary(out);
    return out;
}

namespace {

// Smallest generalized eigenvalue of K y = mu M y on the free vertices of
// one patch level.
double smallest_eigenvalue(const SphericalPatchMesh& patch, int& dofs) {
    const int nv = static_cast<int>(patch.vertices.size());
    std::vector<int> free_index(nv, -1);
    int nfree = 0;
    for (int i = 0; i < nv; ++i)
        if (!patch.boundary[i]) free_index[i] = nfree++;
    dofs = nfree;
    if (nfree == 0) return -1.0;

    Triplets kt, mt;
    for (const auto& t : patch.triangles) {
        Vec3 p0 = patch.vertices[t[0]], p1 = patch.vertices[t[1]], p2 = patch.vertices[t[2]];
        Vec3 nrm = cross(p1 - p0, p2 - p0);
        double area2 = norm(nrm);
        if (area2 <= 0) throw std::runtime_error("degenerate patch triangle");
        double area = 0.5 * area2;
        Vec3 nh = nrm / area2;
        // P1 gradients in the triangle plane: grad phi_i = (n x e_i) / (2A)
        std::array<Vec3, 3> grad;
        Vec3 edge[3] = {p2 - p1, p0 - p2, p1 - p0}; // opposite vertex i
        for (int i = 0; i < 3; ++i) grad[i] = cross(nh, edge[i]) / (2.0 * area);
        for (int i = 0; i < 3; ++i) {
            int gi = free_index[t[i]];
            if (gi < 0) continue;
            for (int j = 0; j < 3; ++j) {
                int gj = free_index[t[j]];
                if (gj < 0) continue;
                kt.add(gi, gj, area * dot(grad[i], grad[j]));
                mt.add(gi, gj, area / 12.0 * (i == j ? 2.0 : 1.0));
            }
        }
    }
    CsrMatrix K = CsrMatrix::from_triplets(nfree, kt);
    CsrMatrix M = CsrMatrix::from_triplets(nfree, mt);

    std::vector<double> x(nfree, 1.0), Mx(nfree), y(nfree, 0.0), Ky(nfree);
    double mu_prev = 0.0;
    for (int it = 0; it < 200; ++it) {
        M.multiply(x, Mx);
        y.assign(nfree, 0.0);
        auto cg = cg_solve(K, Mx, y, 1e-12, 20000);
        if (!cg.converged)
            throw std::runtime_error("vertex_exponent: inner CG did not converge");
        // Rayleigh quotient of the new iterate
        K.multiply(y, Ky);
        double num = 0.0;
        for (int i = 0; i < nfree; ++i) num += y[i] * Ky[i];
        M.multiply(y, Mx);
        double den = 0.0;
        for (int i = 0; i < nfree; ++i) den += y[i] * Mx[i];
        double mu = num / den;
        double scale = 1.0 / std::sqrt(den);
        for (int i = 0; i < nfree; ++i) x[i] = y[i] * scale;
        if (it > 0 && std::abs(mu - mu_prev) <= 1e-10 * std::abs(mu)) return mu;
        mu_prev = mu;
    }
    throw std::runtime_error(
        "vertex_exponent: eigen iteration did not converge within the cap");
}

} // namespace

VertexExponentResult vertex_exponent(const SphericalPatchMesh& patch, int refine_levels) {
    if (refine_levels < 0)
        throw std::invalid_argument("vertex_exponent: refine_levels must be >= 0");
    VertexExponentResult res;
    SphericalPatchMesh mesh = patch;
    for (int level = 0; level <= refine_levels; ++level) {
        if (level > 0) mesh = refine_patch(mesh);
        int dofs = 0;
        bool has_interior = false;
        for (std::size_t i = 0; i < mesh.vertices.size(); ++i)
            if (!mesh.boundary[i]) has_interior = true;
        if (!has_interior) continue;
        double mu = smallest_eigenvalue(mesh, dofs);
        res.mu_per_level.push_back(mu);
        res.dofs_finest = dofs;
    }
    if (res.mu_per_level.empty())
        throw std::runtime_error(
            "vertex_exponent: degenerate patch (no interior vertices)");

    std::size_t L = res.mu_per_level.size();
    if (L >= 2) {
        double mL = res.mu_per_level[L - 1], mP = res.mu_per_level[L - 2];
        // ratio of successive corrections; 4 corresponds to clean second
        // order, re-entrant patch corners give smaller ratios
        double ratio = 4.0;
        if (L >= 3) {
            double mPP = res.mu_per_level[L - 3];
            double d1 = mPP - mP, d2 = mP - mL;
            if (std::abs(d2) > 1e-14 * std::abs(mL)) {
                double r = d1 / d2;
                if (r > 1.4 && r < 8.0) ratio = r;
            }
        }
        res.mu1 = mL + (mL - mP) / (ratio - 1.0);
    } else {
        res.mu1 = res.mu_per_level.back();
    }
    res.lambda_v = lambda_from_mu(res.mu1);
    return res;
}

} // namespace gradfem
