#pragma once

#include "gradfem/geometry.hpp"

#include <array>
#include <limits>
#include <string>
#include <vector>

namespace gradfem {

inline constexpr double kInfExponent = std::numeric_limits<double>::infinity();

/// Leading vertex exponent at the concave corner of the Fichera domain.
/// The exponents module reproduces this value from the Laplace-Beltrami
/// eigenvalue on the spherical patch; it is stored here so mesh generation
/// does not depend on an eigenvalue solve.
inline constexpr double kFicheraVertexExponent = 0.454;

enum class MacroKind { Type1 = 1, Type2 = 2, Type3 = 3, Type4 = 4 };

const char* kind_tag(MacroKind k);
MacroKind kind_from_tag(const std::string& tag);

/// One tetrahedral subdomain of the macro decomposition. A macro carries at
/// most one singular edge and at most one singular vertex; when both are
/// present the vertex is an endpoint of the edge.
///   Type1: no singularity          Type2: singular vertex only
///   Type3: singular edge only      Type4: edge + vertex
struct Macroelement {
    std::array<Vec3, 4> v;
    MacroKind kind = MacroKind::Type1;
    double mu = 1.0; // in-plane grading exponent, (0,1]
    double nu = 1.0; // along-edge / radial grading exponent, (0,1]
    double lambda_e = kInfExponent;
    double lambda_v = kInfExponent;
    int singular_vertex = -1;           // local vertex index, -1 if none
    std::array<int, 2> singular_edge{-1, -1}; // local vertex pair, {-1,-1} if none

    double volume() const;

    /// Endpoints of the singular edge in canonical order: the singular vertex
    /// first when present, otherwise the lexicographically smaller coordinate.
    /// Valid for Type3/Type4 only.
    std::array<int, 2> edge_local() const;
    /// The two local vertices not on the singular edge, in lexicographic
    /// coordinate order. Valid for Type3/Type4 only.
    std::array<int, 2> opposite_edge_local() const;

    /// Rigid frame: singular vertex (if any) at the origin, singular edge
    /// (if any) along the x3 axis.
    Frame local_frame() const;
};

inline bool lex_less(Vec3 a, Vec3 b) {
    if (a.x != b.x) return a.x < b.x;
    if (a.y != b.y) return a.y < b.y;
    return a.z < b.z;
}

/// Macro decomposition of the Fichera domain (-1,1)^3 minus [0,1]^3:
/// seven unit cubes, each split into six tetrahedra by the Kuhn
/// triangulation anchored at the concave corner, so every macro has the
/// origin as a vertex. Macros owning a concave edge become Type4, the rest
/// Type2. `mu`/`nu` are applied uniformly; conforming meshes across the
/// cube-diagonal interfaces require mu == nu (checked by validate_macros).
std::vector<Macroelement> build_fichera_macros(double mu = 0.5, double nu = 0.5);

/// The singular geometry of the Fichera domain: three concave edges meeting
/// at the concave vertex (the origin).
struct SingularSet {
    std::vector<std::array<Vec3, 2>> edges;
    std::vector<Vec3> vertices;
};
SingularSet fichera_singular_set();

struct FeatureCount {
    int edges = 0;    // singular edges meeting the macro in positive length
    int vertices = 0; // singular vertices contained in the closed macro
};
FeatureCount count_singular_features(const Macroelement& m, const SingularSet& s);

/// Structural validation: kind/lambda consistency, exponent ranges, singular
/// index sanity, nondegeneracy. Throws std::runtime_error on violation;
/// returns human-readable warnings (e.g. lambda_v within 1e-6 of 1/2, or
/// mu != nu on a decomposition that mixes Type2 and Type4 macros).
std::vector<std::string> validate_macros(const std::vector<Macroelement>& macros);

/// ASCII macro file, line oriented. Header `macros <count>`, then one line
/// per macro: 12 vertex coordinates, kind tag {T1,T2,T3,T4}, mu, nu,
/// lambdaE (`inf` allowed), lambdaV, singular vertex index (-1 if none),
/// two singular edge indices (-1 -1 if none). Lines starting with '#' are
/// ignored.
std::vector<Macroelement> load_macros(const std::string& path);
void save_macros(const std::string& path, const std::vector<Macroelement>& macros);

} // namespace gradfem
