#include "gradfem/macro.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <string>

using namespace gradfem;

namespace {

Macroelement edge_macro() {
    Macroelement m;
    m.v = {Vec3{0, 0, 0}, Vec3{0, 0, 1}, Vec3{1, 0, 0}, Vec3{0, 1, 0}};
    m.kind = MacroKind::Type3;
    m.mu = 0.5;
    m.lambda_e = 2.0 / 3.0;
    m.singular_edge = {0, 1};
    return m;
}

} // namespace

TEST_CASE("kind tags round-trip") {
    for (MacroKind k : {MacroKind::Type1, MacroKind::Type2, MacroKind::Type3,
                        MacroKind::Type4})
        CHECK(kind_from_tag(kind_tag(k)) == k);
    CHECK_THROWS(kind_from_tag("T9"));
}

TEST_CASE("Fichera decomposition covers the domain with the right census") {
    auto macros = build_fichera_macros();
    REQUIRE(macros.size() == 42);
    int t2 = 0, t4 = 0;
    double vol = 0;
    for (const auto& m : macros) {
        vol += m.volume();
        if (m.kind == MacroKind::Type2) ++t2;
        if (m.kind == MacroKind::Type4) ++t4;
        // concave corner is a vertex of every macro
        CHECK(m.singular_vertex == 0);
        CHECK(norm(m.v[0]) == 0.0);
    }
    CHECK(vol == doctest::Approx(7.0).epsilon(1e-13));
    CHECK(t2 == 24);
    CHECK(t4 == 18);
    CHECK(validate_macros(macros).empty());
}

TEST_CASE("every Fichera macro carries at most one singular feature") {
    auto macros = build_fichera_macros();
    auto sing = fichera_singular_set();
    REQUIRE(sing.edges.size() == 3);
    REQUIRE(sing.vertices.size() == 1);
    for (const auto& m : macros) {
        auto c = count_singular_features(m, sing);
        CHECK(c.vertices == 1); // the concave corner belongs to all closures
        if (m.kind == MacroKind::Type4)
            CHECK(c.edges == 1);
        else
            CHECK(c.edges == 0);
    }
}

TEST_CASE("segment/tet overlap length") {
    std::array<Vec3, 4> ref{Vec3{0, 0, 0}, Vec3{1, 0, 0}, Vec3{0, 1, 0},
                            Vec3{0, 0, 1}};
    CHECK(segment_tet_overlap(ref, {0, 0.25, 0.25}, {1, 0.25, 0.25}) ==
          doctest::Approx(0.5).epsilon(1e-12));
    // fully outside
    CHECK(segment_tet_overlap(ref, {2, 2, 2}, {3, 3, 3}) == doctest::Approx(0.0));
    // touching at a vertex only
    CHECK(segment_tet_overlap(ref, {1, 0, 0}, {2, 0, 0}) ==
          doctest::Approx(0.0).epsilon(1e-10));
    // an edge of the tet itself
    CHECK(segment_tet_overlap(ref, {0, 0, 0}, {0, 0, 1}) ==
          doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("edge and opposite-edge local orderings") {
    Macroelement m = edge_macro();
    auto e = m.edge_local();
    // no singular vertex: lexicographically smaller endpoint first
    CHECK(e[0] == 0);
    CHECK(e[1] == 1);
    auto o = m.opposite_edge_local();
    CHECK(o[0] == 3); // (0,1,0) < (1,0,0) lexicographically
    CHECK(o[1] == 2);

    m.kind = MacroKind::Type4;
    m.nu = 0.5;
    m.lambda_v = 0.7;
    m.singular_vertex = 1;
    auto e4 = m.edge_local();
    CHECK(e4[0] == 1); // singular vertex first
    CHECK(e4[1] == 0);
}

TEST_CASE("macro file save/load round-trips bitwise") {
    auto macros = build_fichera_macros(0.37, 0.81);
    std::string path = "roundtrip_macros.txt";
    save_macros(path, macros);
    auto loaded = load_macros(path);
    REQUIRE(loaded.size() == macros.size());
    for (std::size_t i = 0; i < macros.size(); ++i) {
        for (int k = 0; k < 4; ++k)
            for (int c = 0; c < 3; ++c) CHECK(loaded[i].v[k][c] == macros[i].v[k][c]);
        CHECK(loaded[i].kind == macros[i].kind);
        CHECK(loaded[i].mu == macros[i].mu);
        CHECK(loaded[i].nu == macros[i].nu);
        CHECK(loaded[i].lambda_e == macros[i].lambda_e);
        CHECK(loaded[i].lambda_v == macros[i].lambda_v);
        CHECK(loaded[i].singular_vertex == macros[i].singular_vertex);
        CHECK(loaded[i].singular_edge == macros[i].singular_edge);
    }
    std::remove(path.c_str());
}

TEST_CASE("macro file loader rejects malformed input") {
    auto write = [](const std::string& path, const std::string& text) {
        std::FILE* f = std::fopen(path.c_str(), "w");
        std::fputs(text.c_str(), f);
        std::fclose(f);
    };
    std::string path = "bad_macros.txt";
    write(path, "not a header\n");
    CHECK_THROWS(load_macros(path));
    write(path, "macros 1\n0 0 0 1 0 0 0 1 0 0 0 1 T1 1 1\n"); // short line
    CHECK_THROWS(load_macros(path));
    write(path, "macros 2\n"
                "0 0 0 1 0 0 0 1 0 0 0 1 T1 1 1 inf inf -1 -1 -1\n"); // count off
    CHECK_THROWS(load_macros(path));
    write(path, "# comment\nmacros 1\n"
                "0 0 0 1 0 0 0 1 0 0 0 1 T1 1 1 inf inf -1 -1 -1\n");
    auto ok = load_macros(path);
    CHECK(ok.size() == 1);
    CHECK(ok[0].kind == MacroKind::Type1);
    CHECK(std::isinf(ok[0].lambda_e));
    std::remove(path.c_str());
}

TEST_CASE("validator rejects inconsistent macros") {
    auto base = build_fichera_macros();

    auto bad = base;
    bad[0].mu = 1.5;
    CHECK_THROWS(validate_macros(bad));

    bad = base;
    bad[0].nu = 0.0;
    CHECK_THROWS(validate_macros(bad));

    bad = base;
    bad[3].v[1] = bad[3].v[0]; // degenerate
    CHECK_THROWS(validate_macros(bad));

    bad = base;
    // Type2 must not carry an edge
    for (auto& m : bad)
        if (m.kind == MacroKind::Type2) {
            m.singular_edge = {0, 1};
            m.lambda_e = 0.8;
            break;
        }
    CHECK_THROWS(validate_macros(bad));

    bad = base;
    // kind and lambda finiteness must agree
    for (auto& m : bad)
        if (m.kind == MacroKind::Type4) {
            m.lambda_e = kInfExponent;
            break;
        }
    CHECK_THROWS(validate_macros(bad));

    bad = base;
    // Type4 vertex must sit on the edge
    for (auto& m : bad)
        if (m.kind == MacroKind::Type4) {
            m.singular_vertex = 2;
            break;
        }
    CHECK_THROWS(validate_macros(bad));

    bad = base;
    for (auto& m : bad)
        if (m.kind == MacroKind::Type4) {
            m.lambda_e = 0.5; // at the excluded threshold
            break;
        }
    CHECK_THROWS(validate_macros(bad));
}

TEST_CASE("validator warnings: excluded vertex exponent and mixed grading") {
    auto macros = build_fichera_macros();
    for (auto& m : macros) m.lambda_v = 0.5 + 1e-9;
    auto warns = validate_macros(macros);
    CHECK(!warns.empty());

    auto mixed = build_fichera_macros(0.5, 0.9);
    auto w2 = validate_macros(mixed);
    bool mentions_conformity = false;
    for (const auto& w : w2)
        if (w.find("conform") != std::string::npos) mentions_conformity = true;
    CHECK(mentions_conformity);
}
