#include "doctest.h"

#include "gradfem/fem.hpp"
#include "test_helpers.hpp"

#include <cmath>
#include <stdexcept>

using namespace gradfem;

namespace {

double bump(const Vec3& p) {
    auto g = [](double s) { return s * (1.0 - s); };
    return g(p.x) * g(p.y) * g(p.z);
}

Vec3 bump_grad(const Vec3& p) {
    auto g = [](double s) { return s * (1.0 - s); };
    auto dg = [](double s) { return 1.0 - 2.0 * s; };
    return {dg(p.x) * g(p.y) * g(p.z), g(p.x) * dg(p.y) * g(p.z),
            g(p.x) * g(p.y) * dg(p.z)};
}

double bump_rhs(const Vec3& p) {
    auto g = [](double s) { return s * (1.0 - s); };
    return 2.0 * (g(p.y) * g(p.z) + g(p.x) * g(p.z) + g(p.x) * g(p.y));
}

} // namespace

TEST_CASE("element basis gradients cancel exactly") {
    std::array<Vec3, 4> v = {Vec3{0.1, 0.2, -0.3}, Vec3{1.4, 0.1, 0.2},
                             Vec3{0.3, 1.7, 0.4}, Vec3{-0.2, 0.5, 1.9}};
    auto g = p1_gradients(v);
    // g0 is the negated sum by construction, so the cancellation is bitwise
    // when summed in the same association order.
    Vec3 s = g[1] + g[2] + g[3];
    CHECK(g[0].x == -s.x);
    CHECK(g[0].y == -s.y);
    CHECK(g[0].z == -s.z);
    Vec3 total = s + g[0];
    CHECK(total.x == 0.0);
    CHECK(total.y == 0.0);
    CHECK(total.z == 0.0);
    // Element stiffness row sums stay at roundoff of the entry scale.
    double vol = tet_volume(v[0], v[1], v[2], v[3]);
    for (int i = 0; i < 4; ++i) {
        double row = 0;
        for (int j = 0; j < 4; ++j) row += vol * dot(g[i], g[j]);
        CHECK(std::abs(row) < 1e-13);
    }
    // grad lambda_i is dual to the edges: d(lambda_i)/d(edge to v_j) = delta_ij.
    for (int i = 1; i < 4; ++i)
        for (int j = 1; j < 4; ++j)
            CHECK(dot(g[i], v[j] - v[0]) == doctest::Approx(i == j ? 1.0 : 0.0));
}

TEST_CASE("zero source gives the zero solution") {
    auto mesh = build_mesh(cube_macros(), 2);
    auto sys = assemble(mesh, [](const Vec3&) { return 0.0; });
    for (double b : sys.load) CHECK(b == 0.0);
    auto u = solve_system(mesh, sys);
    for (double c : u.coeff) CHECK(c == 0.0);
}

TEST_CASE("discrete harmonic lift reproduces linears (patch test)") {
    auto mesh = build_mesh(cube_macros(), 3);
    auto lin = [](const Vec3& p) { return 0.5 + p.x + 2.0 * p.y - 3.0 * p.z; };
    auto A = stiffness_matrix(mesh);
    auto bnd = boundary_node_mask(mesh);
    const int n = static_cast<int>(mesh.nodes.size());

    std::vector<double> g(n, 0.0);
    for (int i = 0; i < n; ++i)
        if (bnd[i]) g[i] = lin(mesh.nodes[i]);
    std::vector<double> rhs(n, 0.0);
    A.multiply(g, rhs);
    for (int i = 0; i < n; ++i) rhs[i] = bnd[i] ? 0.0 : -rhs[i];

    auto sys = assemble(mesh, [](const Vec3&) { return 0.0; });
    std::vector<double> w(n, 0.0);
    auto res = cg_solve(sys.A, rhs, w, 1e-12, 10000);
    CHECK(res.converged);
    for (int i = 0; i < n; ++i) {
        double ui = w[i] + g[i];
        CHECK(ui == doctest::Approx(lin(mesh.nodes[i])).epsilon(1e-9));
    }
}

TEST_CASE("manufactured cube solution converges at orders 1 and 2") {
    auto macros = cube_macros();
    double prev_l2 = 0, prev_h1 = 0;
    std::vector<double> l2s, h1s;
    for (int n : {4, 8, 16}) {
        auto mesh = build_mesh(macros, n);
        auto sys = assemble(mesh, bump_rhs);
        auto u = solve_system(mesh, sys);
        auto err = error_norms(u, bump, bump_grad);
        if (n > 4) {
            CHECK(err.l2 < prev_l2);
            CHECK(err.h1 < prev_h1);
        }
        prev_l2 = err.l2;
        prev_h1 = err.h1;
        l2s.push_back(err.l2);
        h1s.push_back(err.h1);
    }
    double eoc_l2 = std::log2(l2s[1] / l2s[2]);
    double eoc_h1 = std::log2(h1s[1] / h1s[2]);
    CHECK(eoc_l2 > 1.8);
    CHECK(eoc_l2 < 2.2);
    CHECK(eoc_h1 > 0.9);
    CHECK(eoc_h1 < 1.1);
}

TEST_CASE("solver residual meets the tolerance contract") {
    auto mesh = build_mesh(cube_macros(), 4);
    auto sys = assemble(mesh, bump_rhs);
    auto u = solve_system(mesh, sys, 1e-10);
    std::vector<double> r(sys.load.size());
    sys.A.multiply(u.coeff, r);
    double rn = 0, bn = 0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        rn += (r[i] - sys.load[i]) * (r[i] - sys.load[i]);
        bn += sys.load[i] * sys.load[i];
    }
    CHECK(std::sqrt(rn) <= 1e-10 * std::sqrt(bn) * 1.01);
}

TEST_CASE("error norms against analytic references") {
    auto mesh = build_mesh(cube_macros(), 2);
    FEFunction u;
    u.mesh = &mesh;
    u.coeff.assign(mesh.nodes.size(), 0.0);

    SUBCASE("zero against one on the unit-volume mesh") {
        auto err = error_norms(u, [](const Vec3&) { return 1.0; },
                               [](const Vec3&) { return Vec3{0, 0, 0}; });
        CHECK(err.l2 == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(err.h1 < 1e-12);
    }
    SUBCASE("a function against itself") {
        auto lin = [](const Vec3& p) { return 1.0 + 2.0 * p.x - p.y + 0.5 * p.z; };
        for (std::size_t i = 0; i < mesh.nodes.size(); ++i)
            u.coeff[i] = lin(mesh.nodes[i]);
        auto err = error_norms(u, lin, [](const Vec3&) { return Vec3{2, -1, 0.5}; });
        CHECK(err.l2 < 1e-12);
        CHECK(err.h1 < 1e-12);
    }
}

TEST_CASE("fine-reference errors track analytic errors") {
    auto macros = cube_macros();
    auto coarse_mesh = build_mesh(macros, 4);
    auto fine_mesh = build_mesh(macros, 8);
    auto uc = solve_system(coarse_mesh, assemble(coarse_mesh, bump_rhs));
    auto uf = solve_system(fine_mesh, assemble(fine_mesh, bump_rhs));
    PointLocator loc(coarse_mesh);
    auto cross = error_norms(uc, uf, loc);
    auto exact = error_norms(uc, bump, bump_grad);
    CHECK(cross.l2 > 0.6 * exact.l2);
    CHECK(cross.l2 < 1.4 * exact.l2);
    CHECK(cross.h1 > 0.6 * exact.h1);
    CHECK(cross.h1 < 1.4 * exact.h1);
}

TEST_CASE("residual estimator basics") {
    auto mesh = build_mesh(cube_macros(), 2);
    SUBCASE("zero source, zero solution: estimator vanishes") {
        FEFunction u;
        u.mesh = &mesh;
        u.coeff.assign(mesh.nodes.size(), 0.0);
        auto est = residual_estimate(u, [](const Vec3&) { return 0.0; });
        CHECK(est.global == 0.0);
    }
    SUBCASE("global estimator combines element and jump terms") {
        auto u = solve_system(mesh, assemble(mesh, bump_rhs));
        auto est = residual_estimate(u, bump_rhs);
        CHECK(est.global > 0.0);
        double sum = 0;
        for (double e : est.element2) sum += e;
        CHECK(est.global == doctest::Approx(std::sqrt(sum)));
    }
}

TEST_CASE("estimator decreases across refinement and stays efficient") {
    auto macros = cube_macros();
    double prev = 1e300;
    for (int n : {2, 4, 8}) {
        auto mesh = build_mesh(macros, n);
        auto u = solve_system(mesh, assemble(mesh, bump_rhs));
        auto est = residual_estimate(u, bump_rhs);
        CHECK(est.global < prev);
        prev = est.global;
        auto exact = error_norms(u, bump, bump_grad);
        double eff = est.global / exact.h1;
        CHECK(eff > 1.0);
        CHECK(eff < 40.0);
    }
}

TEST_CASE("weighted norm reduces to plain L2 without weights") {
    Macroelement m;
    m.v = {Vec3{0, 0, 0}, Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}};

    SUBCASE("constant function gives sqrt of volume") {
        auto f = [](const Vec3&, int ax, int ay, int az) {
            return (ax + ay + az) == 0 ? 1.0 : 0.0;
        };
        double val = weighted_norm(m, WeightedNormSpec{0, 0.0, 0.0}, f);
        CHECK(val == doctest::Approx(std::sqrt(1.0 / 6.0)).epsilon(1e-10));
    }
    SUBCASE("affine function matches direct quadrature") {
        auto f = [](const Vec3& p, int ax, int ay, int az) {
            int ord = ax + ay + az;
            if (ord == 0) return 1.0 + p.x + 2.0 * p.y - p.z;
            if (ord == 1) return ax ? 1.0 : (ay ? 2.0 : -1.0);
            return 0.0;
        };
        double val = weighted_norm(m, WeightedNormSpec{0, 0.0, 0.0}, f);
        Frame fr = m.local_frame();
        std::array<Vec3, 4> lv;
        for (int i = 0; i < 4; ++i) lv[i] = fr.to_local(m.v[i]);
        double direct = integrate_tet(lv, 4, [&](Vec3 p) {
            double s = f(p, 0, 0, 0);
            return s * s;
        });
        CHECK(val == doctest::Approx(std::sqrt(direct)).epsilon(1e-10));
    }
}

TEST_CASE("weighted norm with a vertex weight matches a brute-force oracle") {
    Macroelement m;
    m.v = {Vec3{0, 0, 0}, Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}};
    m.kind = MacroKind::Type2;
    m.singular_vertex = 0;
    m.nu = 0.5;
    m.lambda_v = 0.8;
    auto one = [](const Vec3&, int ax, int ay, int az) {
        return (ax + ay + az) == 0 ? 1.0 : 0.0;
    };
    // k=0, beta=0.3: integrand R^0.6, mildly singular at the origin.
    double val = weighted_norm(m, WeightedNormSpec{0, 0.3, 0.0}, one);

    // Oracle: uniform dyadic refinement with a higher-order rule; the
    // integrand is continuous, so plain refinement converges.
    struct Rec {
        static double go(std::array<Vec3, 4> v, int depth) {
            if (depth == 0)
                return integrate_tet(v, 6, [](Vec3 p) {
                    double R2 = p.x * p.x + p.y * p.y + p.z * p.z;
                    return std::pow(R2, 0.3);
                });
            Vec3 m01 = 0.5 * (v[0] + v[1]), m02 = 0.5 * (v[0] + v[2]),
                 m03 = 0.5 * (v[0] + v[3]), m12 = 0.5 * (v[1] + v[2]),
                 m13 = 0.5 * (v[1] + v[3]), m23 = 0.5 * (v[2] + v[3]);
            std::array<std::array<Vec3, 4>, 8> kids = {{{v[0], m01, m02, m03},
                                                        {v[1], m01, m12, m13},
                                                        {v[2], m02, m12, m23},
                                                        {v[3], m03, m13, m23},
                                                        {m01, m23, m02, m12},
                                                        {m01, m23, m12, m13},
                                                        {m01, m23, m13, m03},
                                                        {m01, m23, m03, m02}}};
            double s = 0;
            for (auto& k : kids) s += go(k, depth - 1);
            return s;
        }
    };
    double ref = Rec::go(m.v, 4);
    CHECK(val == doctest::Approx(std::sqrt(ref)).epsilon(2e-3));
}

TEST_CASE("edge-weighted second derivatives detect the integrability threshold") {
    // Edge macro on the x3 axis; model function r^(2/3) has second
    // derivatives ~ r^(-4/3), integrable against theta^delta exactly when
    // delta > 1/3.
    Macroelement m;
    m.v = {Vec3{0, 0, 0}, Vec3{0, 0, 1}, Vec3{1, 0, 0}, Vec3{0, 1, 0}};
    m.kind = MacroKind::Type3;
    m.singular_edge = {0, 1};
    m.mu = 0.5;
    m.lambda_e = 2.0 / 3.0;

    // Analytic derivatives of g = r^(2/3).
    auto g = [](const Vec3& p, int ax, int ay, int az) -> double {
        if (az != 0) return 0.0;
        double x = p.x, y = p.y;
        double r2 = x * x + y * y;
        double r = std::sqrt(r2);
        int ord = ax + ay;
        if (ord == 0) return std::pow(r, 2.0 / 3.0);
        double rm43 = std::pow(r, -4.0 / 3.0);
        if (ord == 1) {
            double c = 2.0 / 3.0;
            return c * (ax == 1 ? x : y) * rm43;
        }
        double rm103 = std::pow(r, -10.0 / 3.0);
        if (ax == 2) return (2.0 / 3.0) * rm43 - (8.0 / 9.0) * x * x * rm103;
        if (ay == 2) return (2.0 / 3.0) * rm43 - (8.0 / 9.0) * y * y * rm103;
        return -(8.0 / 9.0) * x * y * rm103; // mixed xy
    };

    double finite = weighted_norm(m, WeightedNormSpec{2, 2.0, 0.4}, g);
    CHECK(std::isfinite(finite));
    CHECK(finite > 0.0);
    // Larger delta shrinks theta^delta <= 1, so the norm decreases.
    double smaller = weighted_norm(m, WeightedNormSpec{2, 2.0, 0.5}, g);
    CHECK(smaller < finite);
    CHECK_THROWS_AS(weighted_norm(m, WeightedNormSpec{2, 2.0, 0.2}, g),
                    std::runtime_error);
}

TEST_CASE("corner source term values and integrability") {
    CHECK(fichera_load({1, 0, 0}) == doctest::Approx(0.278652).epsilon(1e-5));
    CHECK(fichera_load({1e-6, 0, 0}) < -1e7);
    CHECK_THROWS_AS(fichera_load({0, 0, 0}), std::domain_error);
    // Square integrable: the L2 norm over the Fichera mesh is finite and
    // stable under refinement.
    auto macros = build_fichera_macros();
    auto m2 = build_mesh(macros, 2);
    auto m4 = build_mesh(macros, 4);
    double n2 = field_l2_norm(m2, fichera_load);
    double n4 = field_l2_norm(m4, fichera_load);
    CHECK(std::isfinite(n2));
    CHECK(n4 == doctest::Approx(n2).epsilon(0.05));
}

TEST_CASE("graded Fichera solve is stable and estimable") {
    auto macros = build_fichera_macros();
    double prev_est = 1e300;
    for (int n : {2, 4}) {
        auto mesh = build_mesh(macros, n);
        auto sys = assemble(mesh, fichera_load);
        SolveInfo info;
        auto u = solve_system(mesh, sys, 1e-10, &info);
        CHECK(info.iterations > 0);
        auto est = residual_estimate(u, fichera_load);
        CHECK(est.global < prev_est);
        prev_est = est.global;
        auto norms = error_norms(u, [](const Vec3&) { return 0.0; },
                                 [](const Vec3&) { return Vec3{0, 0, 0}; });
        double fn = field_l2_norm(mesh, fichera_load);
        double ratio = std::sqrt(norms.h1 * norms.h1 + norms.l2 * norms.l2) / fn;
        CHECK(ratio > 0.0);
        CHECK(ratio < 10.0);
    }
}
