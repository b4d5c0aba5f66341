#include "gradfem/mesh.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <stdexcept>

using namespace gradfem;

namespace {

Macroelement ref_type1() {
    Macroelement m;
    m.v = {Vec3{0, 0, 0}, Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}};
    return m;
}

Macroelement ref_type2(double nu) {
    Macroelement m = ref_type1();
    m.kind = MacroKind::Type2;
    m.nu = nu;
    m.lambda_v = 0.454;
    m.singular_vertex = 0;
    return m;
}

Macroelement ref_type3(double mu) {
    Macroelement m;
    m.v = {Vec3{0, 0, 0}, Vec3{0, 0, 1}, Vec3{1, 0, 0}, Vec3{0, 1, 0}};
    m.kind = MacroKind::Type3;
    m.mu = mu;
    m.lambda_e = 2.0 / 3.0;
    m.singular_edge = {0, 1};
    return m;
}

int find_node(const Mesh& mesh, Vec3 p, double tol = 1e-13) {
    for (std::size_t i = 0; i < mesh.nodes.size(); ++i)
        if (dist(mesh.nodes[i], p) <= tol) return static_cast<int>(i);
    return -1;
}

double total_volume(const Mesh& mesh) {
    double v = 0;
    for (std::size_t t = 0; t < mesh.tets.size(); ++t) v += mesh.tet_vol(t);
    return v;
}

void check_clean(const QualityReport& q) {
    CHECK(q.conformity_violations == 0);
    CHECK(q.plane_violations == 0);
    CHECK(q.near_duplicate_nodes == 0);
    CHECK(q.min_volume > 0.0);
}

} // namespace

TEST_CASE("lattice refinement of a single tetrahedron") {
    auto m1 = build_mesh({ref_type1()}, 1);
    CHECK(m1.nodes.size() == 4);
    CHECK(m1.tets.size() == 1);
    CHECK(total_volume(m1) == doctest::Approx(1.0 / 6.0).epsilon(1e-13));

    auto m2 = build_mesh({ref_type1()}, 2);
    CHECK(m2.nodes.size() == 10);
    CHECK(m2.tets.size() == 8);
    CHECK(total_volume(m2) == doctest::Approx(1.0 / 6.0).epsilon(1e-13));
    check_clean(mesh_quality(m2));

    auto m3 = build_mesh({ref_type1()}, 3);
    CHECK(m3.nodes.size() == 20); // C(3+3,3)
    CHECK(m3.tets.size() == 27);
    check_clean(mesh_quality(m3));

    CHECK_THROWS_AS(build_mesh({ref_type1()}, 0), std::invalid_argument);
    CHECK_THROWS(build_mesh({ref_type1()}, 5000));
    CHECK_THROWS(build_mesh({}, 2));
}

TEST_CASE("vertex grading moves radial shells and fixes the far face") {
    auto mesh = build_mesh({ref_type2(0.5)}, 4);
    // nodes on the edge toward (1,0,0) sit at (i/4)^(1/nu) = (i/4)^2
    CHECK(find_node(mesh, {1.0 / 16, 0, 0}) >= 0);
    CHECK(find_node(mesh, {0.25, 0, 0}) >= 0);
    CHECK(find_node(mesh, {9.0 / 16, 0, 0}) >= 0);
    CHECK(find_node(mesh, {1, 0, 0}) >= 0);
    // far face (weight zero at the apex) is not moved
    CHECK(find_node(mesh, {0.5, 0.25, 0.25}) >= 0);
    CHECK(find_node(mesh, {0.25, 0.5, 0.25}) >= 0);
    check_clean(mesh_quality(mesh));
    CHECK(total_volume(mesh) == doctest::Approx(1.0 / 6.0).epsilon(1e-13));

    // nu = 1 degenerates bitwise to the ungraded lattice
    auto graded = build_mesh({ref_type2(1.0)}, 3);
    auto plain = build_mesh({ref_type1()}, 3);
    REQUIRE(graded.nodes.size() == plain.nodes.size());
    std::vector<std::array<std::uint64_t, 3>> a, b;
    for (auto p : graded.nodes) {
        auto k = point_key(p);
        a.push_back({k.bx, k.by, k.bz});
    }
    for (auto p : plain.nodes) {
        auto k = point_key(p);
        b.push_back({k.bx, k.by, k.bz});
    }
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
}

TEST_CASE("edge grading builds the pencil of planes and graded rows") {
    const int n = 4;
    auto mac = ref_type3(0.5);
    auto mesh = build_mesh({mac}, n);

    CHECK(mesh.nodes.size() == 55); // n(n+1)^2/2 + (n+1)
    CHECK(mesh.tets.size() == 148); // n(3n^2 - 3n + 1)
    CHECK(total_volume(mesh) == doctest::Approx(1.0 / 6.0).epsilon(1e-13));

    REQUIRE(mesh.plane_families.size() == 1);
    const auto& pf = mesh.plane_families[0];
    CHECK(pf.layer_count == n);
    REQUIRE(pf.planes.size() == n + 1);
    for (int i = 0; i <= n; ++i) {
        Vec3 pi{0, 0, double(i) / n}; // uniform along the edge for Type3
        const auto& pl = pf.planes[i];
        CHECK(std::abs(dot(pl.normal, pi) - pl.offset) <= 1e-12);
        CHECK(std::abs(dot(pl.normal, Vec3{1, 0, 0}) - pl.offset) <= 1e-12);
        CHECK(std::abs(dot(pl.normal, Vec3{0, 1, 0}) - pl.offset) <= 1e-12);
    }

    // in-plane rows at distance fraction (j/n)^(1/mu) from the edge
    CHECK(find_node(mesh, {1.0 / 16, 0, 0}) >= 0);
    CHECK(find_node(mesh, {0.25, 0, 0}) >= 0);
    CHECK(find_node(mesh, {9.0 / 16, 0, 0}) >= 0);
    CHECK(find_node(mesh, {0.25, 0, 0.375}) >= 0); // plane 2, row 2, toward F0

    check_clean(mesh_quality(mesh));

    // mu = 1: uniform in-plane rows
    auto uniform = build_mesh({ref_type3(1.0)}, n);
    CHECK(find_node(uniform, {0.25, 0, 0}) >= 0);
    CHECK(find_node(uniform, {0.5, 0, 0}) >= 0);
    check_clean(mesh_quality(uniform));
}

TEST_CASE("element size triples separate needle and flat anisotropy") {
    auto iso = build_mesh({ref_type1()}, 2);
    auto s0 = element_sizes(iso, 0);
    CHECK(s0.h1 == s0.h2);
    CHECK(s0.h2 == s0.h3);
    CHECK(s0.h3 == s0.hT);
    CHECK(s0.hT > 0);

    for (int n : {2, 4, 8, 16}) {
        auto mesh = build_mesh({ref_type3(0.5)}, n);
        double h = 1.0 / n;
        bool saw_needle = false, saw_flat = false;
        for (std::size_t t = 0; t < mesh.tets.size(); ++t) {
            auto v = mesh.tet_vertices(t);
            int on_edge = 0, on_opposite = 0;
            for (const auto& p : v) {
                if (std::hypot(p.x, p.y) <= 1e-12) ++on_edge;
                if (std::abs(p.x + p.y - 1.0) <= 1e-12 && std::abs(p.z) <= 1e-12)
                    ++on_opposite;
            }
            auto s = element_sizes(mesh, static_cast<int>(t));
            CHECK(s.h3 <= 2.01 * h);
            if (on_edge >= 2) {
                saw_needle = true;
                CHECK(s.h1 <= 2.5 * h * h); // h^(1/mu) at mu = 0.5
                CHECK(s.h3 >= 0.5 * h);
            }
            if (on_opposite >= 2) {
                saw_flat = true;
                CHECK(s.h3 <= s.h1 + 1e-15);
            }
        }
        CHECK(saw_needle);
        CHECK(saw_flat);
    }
}

TEST_CASE("element size computation rejects tets with no edge-parallel edge") {
    Mesh fake;
    fake.nodes = {Vec3{0, 0, 0}, Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0.3, 0.3, 1}};
    fake.tets = {{0, 1, 2, 3}};
    fake.macro_of = {0};
    Macroelement m;
    m.v = {Vec3{0, 0, 0}, Vec3{1, 1, 7}, Vec3{5, 0, 0}, Vec3{0, 5, 0}};
    m.kind = MacroKind::Type3;
    m.mu = 0.5;
    m.lambda_e = 0.9;
    m.singular_edge = {0, 1};
    fake.macros = {m};
    CHECK_THROWS(element_sizes(fake, 0));
}

TEST_CASE("Fichera meshes conform across macro interfaces") {
    auto macros = build_fichera_macros();
    // Family max-angle bound: the worst dihedral comes from the outer shells of
    // the radially graded lattice macros, where the local radial stretch is
    // 2 - 1/n. Measured maxima 2.4063 (n=2) .. 2.4543 (n=32) converge to ~2.457,
    // so 2.47 rad bounds the whole family with margin while staying far from pi.
    double max_dihedral_n2 = 0;
    for (int n : {2, 4}) {
        auto mesh = build_mesh(macros, n);
        CHECK(total_volume(mesh) == doctest::Approx(7.0).epsilon(1e-12));
        auto q = mesh_quality(mesh);
        check_clean(q);
        CHECK(q.node_count == static_cast<int>(mesh.nodes.size()));
        CHECK(q.tet_count == static_cast<int>(mesh.tets.size()));
        CHECK(q.max_dihedral_angle <= 2.47);
        if (n == 2)
            max_dihedral_n2 = q.max_dihedral_angle;
        else
            CHECK(q.max_dihedral_angle <= max_dihedral_n2 + 0.06);
    }
}

TEST_CASE("Fichera node cardinality grows like n^3") {
    auto macros = build_fichera_macros();
    for (int n : {2, 4, 8}) {
        auto mesh = build_mesh(macros, n);
        // Ratio tends to ~13 from above (shared macro faces stop double counting
        // as n grows); measured 17.25 at n=2, 14.61 at n=4, 13.9 at n=8.
        double ratio = double(mesh.nodes.size()) / (double(n) * n * n);
        CHECK(ratio >= 10.0);
        CHECK(ratio <= 18.0);
        // 24 lattice macros with n^3 cells, 18 prisms with n(3n^2-3n+1)
        std::size_t expect = std::size_t(24) * n * n * n +
                             std::size_t(18) * n * (3 * n * n - 3 * n + 1);
        CHECK(mesh.tets.size() == expect);
    }
}

TEST_CASE("node classification partitions the Fichera mesh") {
    auto macros = build_fichera_macros();
    auto sing = fichera_singular_set();
    for (int n : {2, 4}) {
        auto mesh = build_mesh(macros, n);
        auto cls = classify_nodes(mesh);
        CHECK(cls.interior.size() + cls.boundary_regular.size() +
                  cls.coupling.size() + cls.singular_edge.size() ==
              mesh.nodes.size());
        // every node on a concave edge is tagged singular
        int on_edges = 0;
        for (std::size_t i = 0; i < mesh.nodes.size(); ++i) {
            double d = 1e9;
            for (const auto& e : sing.edges)
                d = std::min(d, point_segment_distance(mesh.nodes[i], e[0], e[1]));
            if (d <= 1e-12) {
                ++on_edges;
                CHECK(cls.label[i] == NodeClass::SingularEdge);
            }
        }
        CHECK(on_edges == 3 * n + 1);
        CHECK(cls.singular_edge.size() == static_cast<std::size_t>(3 * n + 1));
        // coupling nodes are the shared macro vertices off the singular set
        CHECK(cls.coupling.size() == 22);
        for (int c : cls.coupling) {
            Vec3 p = mesh.nodes[c];
            for (int k = 0; k < 3; ++k)
                CHECK(std::abs(p[k] - std::round(p[k])) <= 1e-13);
        }
    }
}

TEST_CASE("coupling nodes of a two-macro decomposition are the corners") {
    Macroelement a = ref_type1();
    Macroelement b = ref_type1();
    b.v = {Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}, Vec3{1, 1, 1}};
    auto mesh = build_mesh({a, b}, 3);
    check_clean(mesh_quality(mesh));
    auto cls = classify_nodes(mesh);
    // every decomposition corner is pinned, shared or not: a lone corner sits
    // on three boundary faces meeting only at the point, so no averaging edge
    // through it could stay admissible
    CHECK(cls.coupling.size() == 5);
    std::set<int> expect;
    for (Vec3 p : {Vec3{0, 0, 0}, Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}, Vec3{1, 1, 1}})
        expect.insert(find_node(mesh, p));
    std::set<int> got(cls.coupling.begin(), cls.coupling.end());
    CHECK(got == expect);
    CHECK(cls.singular_edge.empty());
}

TEST_CASE("grading admissibility conditions") {
    auto ok = check_grading(0.5, 0.5, 2.0 / 3.0, 0.454);
    CHECK(ok.ok);
    CHECK(ok.edge_condition);
    CHECK(ok.vertex_condition);
    CHECK(ok.combined_condition);

    auto bad = check_grading(0.40, 0.9, 2.0 / 3.0, 0.454);
    CHECK_FALSE(bad.ok);
    CHECK_FALSE(bad.combined_condition); // 1/0.9 - 0.046/0.40 < 1... documented
    CHECK(!bad.diagnostic.empty());

    auto uniform = check_grading(1.0, 1.0, kInfExponent, kInfExponent);
    CHECK(uniform.ok);

    CHECK_THROWS_AS(check_grading(0.0, 0.5, 1.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(check_grading(0.5, 1.5, 1.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(check_grading(0.5, 0.5, -1.0, 1.0), std::invalid_argument);
}

TEST_CASE("quality report flags corrupted meshes") {
    auto macros = build_fichera_macros();
    auto mesh = build_mesh(macros, 2);

    auto inverted = mesh;
    std::swap(inverted.tets[0][0], inverted.tets[0][1]);
    auto q1 = mesh_quality(inverted);
    CHECK(q1.conformity_violations >= 1);

    auto duplicated = mesh;
    duplicated.nodes.push_back(duplicated.nodes[0] + Vec3{1e-12, 0, 0});
    auto q2 = mesh_quality(duplicated);
    CHECK(q2.near_duplicate_nodes >= 1);

    auto prism = build_mesh({ref_type3(0.5)}, 4);
    auto shifted = prism;
    // push one interior (non-axis) node off its pencil plane
    int victim = find_node(shifted, {0.25, 0, 0.375});
    REQUIRE(victim >= 0);
    shifted.nodes[victim] += Vec3{0, 0, 1e-6};
    auto q3 = mesh_quality(shifted);
    CHECK(q3.plane_violations >= 1);
}

TEST_CASE("point location inverts the grading maps") {
    auto macros = build_fichera_macros();
    auto mesh = build_mesh(macros, 4);
    PointLocator loc(mesh);
    std::mt19937 rng(12345);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    int checked = 0;
    for (std::size_t t = 0; t < mesh.tets.size(); t += 7) {
        auto v = mesh.tet_vertices(t);
        double r[3] = {uni(rng), uni(rng), uni(rng)};
        std::sort(r, r + 3);
        double w[4] = {r[0], r[1] - r[0], r[2] - r[1], 1.0 - r[2]};
        Vec3 p = w[0] * v[0] + w[1] * v[1] + w[2] * v[2] + w[3] * v[3];
        int macro_id = mesh.macro_of[t];
        auto hit = loc.locate(macro_id, p);
        REQUIRE(hit.tet >= 0);
        CHECK(mesh.macro_of[hit.tet] == macro_id);
        auto hv = mesh.tet_vertices(hit.tet);
        Vec3 q = hit.bary[0] * hv[0] + hit.bary[1] * hv[1] + hit.bary[2] * hv[2] +
                 hit.bary[3] * hv[3];
        CHECK(dist(p, q) <= 1e-10);
        double lo = *std::min_element(hit.bary.begin(), hit.bary.end());
        CHECK(lo >= -1e-9);
        ++checked;
    }
    CHECK(checked > 100);
    // macro vertices themselves
    for (int mid : {0, 7, 25}) {
        for (int k = 0; k < 4; ++k) {
            auto hit = loc.locate(mid, mesh.macros[mid].v[k]);
            CHECK(hit.tet >= 0);
        }
    }
}

TEST_CASE("boundary mask marks single-incidence faces only") {
    auto single = build_mesh({ref_type1()}, 2);
    auto mask1 = boundary_node_mask(single);
    for (bool b : mask1) CHECK(b); // every node of one tet's surface

    auto macros = build_fichera_macros();
    auto mesh = build_mesh(macros, 2);
    auto mask = boundary_node_mask(mesh);
    int origin = find_node(mesh, {0, 0, 0});
    REQUIRE(origin >= 0);
    CHECK(mask[origin]); // concave corner lies on the boundary
    int inner = find_node(mesh, {-0.25, -0.25, -0.25});
    REQUIRE(inner >= 0);
    CHECK_FALSE(mask[inner]);
}
