#include "gradfem/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace gradfem {

std::vector<QuadPoint1D> gauss_legendre(int n) {
    if (n < 1) throw std::invalid_argument("gauss_legendre: n must be positive");
    std::vector<QuadPoint1D> pts(n);
    // Newton iteration on P_n over [-1,1], then map to [0,1].
    for (int i = 0; i < n; ++i) {
        double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            double dp = n * (x * p1 - p0) / (x * x - 1.0);
            double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= n; ++k) {
            double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        double dp = n * (x * p1 - p0) / (x * x - 1.0);
        double w = 2.0 / ((1.0 - x * x) * dp * dp);
        pts[i] = {0.5 * (1.0 + x), 0.5 * w};
    }
    std::sort(pts.begin(), pts.end(),
              [](const QuadPoint1D& a, const QuadPoint1D& b) { return a.x < b.x; });
    return pts;
}

namespace {

// Symmetric tridiagonal QL with implicit shifts (EISPACK tql2).
// d: diagonal, e: subdiagonal (e[i] couples i and i+1), z: identity on entry,
// eigenvectors in columns on exit.
void tql2(std::vector<double>& d, std::vector<double>& e,
          std::vector<std::vector<double>>& z) {
    const int n = static_cast<int>(d.size());
    if (n == 1) return;
    for (int i = 1; i < n; ++i) e[i - 1] = e[i];
    e[n - 1] = 0.0;
    for (int l = 0; l < n; ++l) {
        int iter = 0;
        int m;
        do {
            for (m = l; m < n - 1; ++m) {
                double dd = std::abs(d[m]) + std::abs(d[m + 1]);
                if (std::abs(e[m]) <= std::numeric_limits<double>::epsilon() * dd) break;
            }
            if (m != l) {
                if (iter++ == 60) throw std::runtime_error("tql2: no convergence");
                double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
                double r = std::hypot(g, 1.0);
                g = d[m] - d[l] + e[l] / (g + (g >= 0 ? r : -r));
                double s = 1.0, c = 1.0, p = 0.0;
                for (int i = m - 1; i >= l; --i) {
                    double f = s * e[i], b = c * e[i];
                    r = std::hypot(f, g);
                    e[i + 1] = r;
                    if (r == 0.0) {
                        d[i + 1] -= p;
                        e[m] = 0.0;
                        break;
                    }
                    s = f / r;
                    c = g / r;
                    g = d[i + 1] - p;
                    r = (d[i] - g) * s + 2.0 * c * b;
                    p = s * r;
                    d[i + 1] = g + p;
                    g = c * r - b;
                    for (int k = 0; k < n; ++k) {
                        f = z[k][i + 1];
                        z[k][i + 1] = s * z[k][i] + c * f;
                        z[k][i] = c * z[k][i] - s * f;
                    }
                }
                if (r == 0.0 && m - 1 >= l) continue;
                d[l] -= p;
                e[l] = g;
                e[m] = 0.0;
            }
        } while (m != l);
    }
}

} // namespace

std::vector<QuadPoint1D> gauss_jacobi(int n, int alpha) {
    if (alpha == 0) return gauss_legendre(n);
    if (n < 1 || alpha < 0) throw std::invalid_argument("gauss_jacobi: bad arguments");
    const double a = alpha;
    // Monic Jacobi recurrence on [-1,1] with weight (1-x)^alpha.
    std::vector<double> diag(n), sub(n, 0.0);
    for (int k = 0; k < n; ++k) {
        double den = (2.0 * k + a) * (2.0 * k + a + 2.0);
        diag[k] = -a * a / den;
    }
    for (int k = 1; k < n; ++k) {
        double num = 4.0 * k * (k + a) * k * (k + a);
        double den = (2.0 * k + a) * (2.0 * k + a) * (2.0 * k + a + 1.0) * (2.0 * k + a - 1.0);
        sub[k] = std::sqrt(num / den);
    }
    std::vector<std::vector<double>> z(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i) z[i][i] = 1.0;
    tql2(diag, sub, z);
    double mu0 = std::pow(2.0, a + 1.0) / (a + 1.0);
    std::vector<QuadPoint1D> pts(n);
    for (int i = 0; i < n; ++i) {
        pts[i] = {0.5 * (1.0 + diag[i]),
                  std::pow(2.0, -a - 1.0) * mu0 * z[0][i] * z[0][i]};
    }
    std::sort(pts.begin(), pts.end(),
              [](const QuadPoint1D& p, const QuadPoint1D& q) { return p.x < q.x; });
    return pts;
}

const std::vector<QuadPoint3D>& tet_rule(int degree) {
    static std::map<int, std::vector<QuadPoint3D>> cache;
    auto it = cache.find(degree);
    if (it != cache.end()) return it->second;

    int m = (degree + 2) / 2;
    auto g2 = gauss_jacobi(m, 2);
    auto g1 = gauss_jacobi(m, 1);
    auto g0 = gauss_legendre(m);
    std::vector<QuadPoint3D> rule;
    rule.reserve(static_cast<std::size_t>(m) * m * m);
    for (const auto& p1 : g2)
        for (const auto& p2 : g1)
            for (const auto& p3 : g0) {
                double x1 = p1.x;
                double x2 = p2.x * (1.0 - p1.x);
                double x3 = p3.x * (1.0 - p1.x) * (1.0 - p2.x);
                rule.push_back({{x1, x2, x3}, p1.w * p2.w * p3.w});
            }
    return cache.emplace(degree, std::move(rule)).first->second;
}

const std::vector<QuadPoint2D>& tri_rule(int degree) {
    static std::map<int, std::vector<QuadPoint2D>> cache;
    auto it = cache.find(degree);
    if (it != cache.end()) return it->second;

    int m = (degree + 2) / 2;
    auto g1 = gauss_jacobi(m, 1);
    auto g0 = gauss_legendre(m);
    std::vector<QuadPoint2D> rule;
    rule.reserve(static_cast<std::size_t>(m) * m);
    for (const auto& p1 : g1)
        for (const auto& p2 : g0)
            rule.push_back({p1.x, p2.x * (1.0 - p1.x), p1.w * p2.w});
    return cache.emplace(degree, std::move(rule)).first->second;
}

double integrate_tet(const std::array<Vec3, 4>& v, int degree,
                     const std::function<double(Vec3)>& f) {
    const auto& rule = tet_rule(degree);
    double jac = 6.0 * std::abs(tet_volume(v[0], v[1], v[2], v[3]));
    double sum = 0.0;
    for (const auto& q : rule) {
        Vec3 p = v[0] + q.p.x * (v[1] - v[0]) + q.p.y * (v[2] - v[0]) + q.p.z * (v[3] - v[0]);
        sum += q.w * f(p);
    }
    return jac * sum;
}

double integrate_tri(Vec3 a, Vec3 b, Vec3 c, int degree,
                     const std::function<double(Vec3)>& f) {
    const auto& rule = tri_rule(degree);
    double jac = 2.0 * triangle_area(a, b, c);
    double sum = 0.0;
    for (const auto& q : rule) {
        Vec3 p = a + q.a * (b - a) + q.b * (c - a);
        sum += q.w * f(p);
    }
    return jac * sum;
}

double integrate_segment(Vec3 a, Vec3 b, int npts, const std::function<double(Vec3)>& f) {
    auto rule = gauss_legendre(npts);
    double len = dist(a, b);
    double sum = 0.0;
    for (const auto& q : rule) sum += q.w * f(a + q.x * (b - a));
    return len * sum;
}

double integrate_segment_midpoint(Vec3 a, Vec3 b, int cells,
                                  const std::function<double(Vec3)>& f) {
    double len = dist(a, b);
    double sum = 0.0;
    for (int i = 0; i < cells; ++i) {
        double t = (i + 0.5) / cells;
        sum += f(a + t * (b - a));
    }
    return len * sum / cells;
}

namespace {

// A cell keeps refining while it carries a positive-length piece of the
// singular axis or the origin itself. Point contact with the axis away from
// the origin must not count: otherwise the octahedron children sharing an
// on-axis midpoint refine forever and the tree grows exponentially. With
// this rule a split cell has at most two refining children (the corner
// cells along its axis edge).
bool touches_singular_set(const std::array<Vec3, 4>& v) {
    double zmin = v[0].z, zmax = v[0].z;
    for (int i = 1; i < 4; ++i) {
        zmin = std::min(zmin, v[i].z);
        zmax = std::max(zmax, v[i].z);
    }
    double pad = zmax - zmin + 1.0;
    double len = segment_tet_overlap(v, Vec3{0, 0, zmin - pad}, Vec3{0, 0, zmax + pad});
    if (len > 1e-12 * pad) return true;

    Vec3 b = v[1] - v[0], c = v[2] - v[0], d = v[3] - v[0];
    double det = dot(b, cross(c, d));
    if (std::abs(det) < 1e-300) return false;
    Vec3 p = Vec3{0, 0, 0} - v[0];
    double l1 = dot(p, cross(c, d)) / det;
    double l2 = dot(b, cross(p, d)) / det;
    double l3 = dot(b, cross(c, p)) / det;
    double tol = 1e-12;
    return l1 >= -tol && l2 >= -tol && l3 >= -tol && l1 + l2 + l3 <= 1.0 + tol;
}

void refine_step(const std::array<Vec3, 4>& v, std::array<Vec3, 4> out[8]) {
    Vec3 m01 = 0.5 * (v[0] + v[1]), m02 = 0.5 * (v[0] + v[2]),
         m03 = 0.5 * (v[0] + v[3]), m12 = 0.5 * (v[1] + v[2]),
         m13 = 0.5 * (v[1] + v[3]), m23 = 0.5 * (v[2] + v[3]);
    out[0] = {v[0], m01, m02, m03};
    out[1] = {v[1], m01, m12, m13};
    out[2] = {v[2], m02, m12, m23};
    out[3] = {v[3], m03, m13, m23};
    out[4] = {m01, m23, m02, m12};
    out[5] = {m01, m23, m12, m13};
    out[6] = {m01, m23, m13, m03};
    out[7] = {m01, m23, m03, m02};
}

// Accumulates the integral of cells that stop touching the axis at each
// depth; touching cells keep splitting until max_depth.
void dyadic_accumulate(const std::array<Vec3, 4>& v, int depth, int max_depth,
                       int degree, const std::function<double(Vec3)>& f,
                       std::vector<double>& layer) {
    if (!touches_singular_set(v) || depth == max_depth) {
        layer[depth] += integrate_tet(v, degree, f);
        return;
    }
    std::array<Vec3, 4> kids[8];
    refine_step(v, kids);
    for (const auto& kid : kids)
        dyadic_accumulate(kid, depth + 1, max_depth, degree, f, layer);
}

} // namespace

double integrate_axis_refined(const std::vector<std::array<Vec3, 4>>& cells,
                              int degree, int max_depth,
                              const std::function<double(Vec3)>& f) {
    if (max_depth < 4) throw std::invalid_argument("integrate_axis_refined: max_depth < 4");
    std::vector<double> layer(max_depth + 1, 0.0);
    for (const auto& v : cells) dyadic_accumulate(v, 0, max_depth, degree, f, layer);

    // layer[d] for d < max_depth holds settled (non-touching) cells; the last
    // entry is the crude value of the still-singular sliver and is replaced
    // by a geometric tail estimate from the settled increments.
    double settled = 0.0;
    for (int d = 0; d < max_depth; ++d) settled += layer[d];
    double i1 = layer[max_depth - 3] + layer[max_depth - 2];
    double i2 = layer[max_depth - 2] + layer[max_depth - 1];
    double last = layer[max_depth - 1];
    if (last <= 1e-14 * std::max(settled, 1e-300))
        return settled + layer[max_depth];
    double ratio = layer[max_depth - 1] /
                   std::max(layer[max_depth - 2], 1e-300);
    double ratio_prev = layer[max_depth - 2] /
                        std::max(layer[max_depth - 3], 1e-300);
    if (ratio >= 0.98 || i2 >= i1)
        throw std::runtime_error("integrate_axis_refined: integral diverges under refinement");
    double q = std::min(0.95, std::max(ratio, ratio_prev));
    double tail = last * q / (1.0 - q);
    return settled + tail;
}

} // namespace gradfem
