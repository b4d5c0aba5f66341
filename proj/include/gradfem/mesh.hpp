#pragma once

#include "gradfem/geometry.hpp"
#include "gradfem/macro.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace gradfem {

struct Plane {
    Vec3 normal;         // unit, oriented along the singular edge direction
    double offset = 0.0; // dot(normal, x) == offset on the plane
};

/// For an edge-graded macro: the pencil of planes through the edge opposite
/// the singular edge. Plane i passes through the point at parameter s_i on
/// the singular edge. Nodes on the pencil axis (the opposite edge) lie on
/// every plane; all other nodes lie on exactly one.
struct PlaneFamily {
    int macro_id = -1;
    int layer_count = 0; // n
    std::vector<Plane> planes;
};

/// In-plane lattice coordinates: j = row counted from the singular edge
/// (row n is the opposite edge), k = barycentric weight of the second
/// opposite-edge endpoint, 0 <= k <= j.
struct LatticePt {
    int j = 0, k = 0;
};

struct Cell2D {
    std::array<LatticePt, 3> p;
};

inline int tri_index(int j, int k) { return j * (j + 1) / 2 + k; }

/// Per-macro construction registry kept by build_mesh so that interpolation
/// and point location can reuse exact lattice structure instead of
/// reconstructing it from coordinates.
struct MacroMeshInfo {
    bool prism = false;

    // Edge-graded (prism) macros.
    // plane_nodes[i][tri_index(j,k)] = global node id at plane i, row j,
    // position k. Row-n entries repeat the shared opposite-edge nodes.
    std::vector<std::vector<int>> plane_nodes;
    std::vector<Cell2D> cells2d;
    // cell_tets[strip][cell2d] = tets generated from that strip cell
    // (3 for prisms, 2 for pyramids, 1 for the opposite-edge slivers),
    // padded with -1.
    std::vector<std::vector<std::array<int, 3>>> cell_tets;
    // node -> plane index; kOppositeEdge for pencil-axis nodes.
    std::unordered_map<int, int> plane_of;

    // Lattice (Kuhn) macros: (a,b,c,perm) -> tet id, key via kuhn_key().
    std::unordered_map<std::int64_t, int> kuhn_tet;
    std::array<int, 4> sorted_verts{0, 1, 2, 3}; // local indices, lex order
    int apex_sorted = -1; // position of the singular vertex in sorted order
};

inline constexpr int kOppositeEdge = -2;

inline std::int64_t kuhn_key(int a, int b, int c, int perm) {
    return ((std::int64_t(a) * 2048 + b) * 2048 + c) * 8 + perm;
}

struct Mesh {
    std::vector<Vec3> nodes;
    std::vector<std::array<int, 4>> tets;
    std::vector<int> macro_of;  // per tet
    std::vector<int> tet_strip; // per tet, -1 for lattice macros
    std::vector<int> tet_cell2d;
    int n = 0;
    double h = 0.0; // 1/n
    std::vector<Macroelement> macros;
    std::vector<PlaneFamily> plane_families; // indexed by macro id
    std::vector<MacroMeshInfo> macro_info;   // indexed by macro id
    std::vector<std::vector<int>> node_tets; // node -> incident tets

    std::array<Vec3, 4> tet_vertices(int t) const {
        const auto& e = tets[t];
        return {nodes[e[0]], nodes[e[1]], nodes[e[2]], nodes[e[3]]};
    }
    double tet_vol(int t) const {
        auto v = tet_vertices(t);
        return tet_volume(v[0], v[1], v[2], v[3]);
    }
};

/// Anisotropic element dimensions. h1 == h2 is the in-plane size, h3 the
/// size along the singular edge direction; isotropic elements report the
/// diameter four times.
struct SizeTriple {
    double h1 = 0, h2 = 0, h3 = 0, hT = 0;
};

enum class NodeClass { Interior, BoundaryRegular, Coupling, SingularEdge };

struct NodeClassification {
    std::vector<NodeClass> label;
    std::vector<int> interior;         // N_in
    std::vector<int> boundary_regular; // boundary minus coupling/singular
    std::vector<int> coupling;         // N_c
    std::vector<int> singular_edge;    // N_s
};

struct QualityReport {
    double max_dihedral_angle = 0.0;
    int conformity_violations = 0;
    int plane_violations = 0;
    int node_count = 0;
    int tet_count = 0;
    double min_volume = 0.0;
    int near_duplicate_nodes = 0;
};

struct GradingCheck {
    bool ok = false;
    bool edge_condition = false;     // mu < lambda_e
    bool vertex_condition = false;   // nu < lambda_v + 1/2
    bool combined_condition = false; // 1/nu + (lambda_v - 1/2)/mu > 1
    std::string diagnostic;
};

/// Build the graded tetrahedral mesh at refinement level n (>= 1).
/// Throws std::invalid_argument for n < 1 and std::runtime_error for
/// invalid macro decompositions.
Mesh build_mesh(const std::vector<Macroelement>& macros, int n);

SizeTriple element_sizes(const Mesh& mesh, int t);

NodeClassification classify_nodes(const Mesh& mesh);

/// Grading admissibility: mu < lambda_e, nu < lambda_v + 1/2, and
/// 1/nu + (lambda_v - 1/2)/mu > 1, with infinite exponents satisfying
/// their conditions automatically.
GradingCheck check_grading(double mu, double nu, double lambda_e, double lambda_v);

QualityReport mesh_quality(const Mesh& mesh);

/// True per node when the node lies on the domain boundary (a face with a
/// single incident tet).
std::vector<bool> boundary_node_mask(const Mesh& mesh);

/// Locates points inside a given macro by inverting the grading transforms
/// analytically, with a widening lattice search as fallback.
class PointLocator {
  public:
    explicit PointLocator(const Mesh& mesh);

    struct Hit {
        int tet = -1;
        std::array<double, 4> bary{};
    };
    /// p must lie in the closed macro; returns the containing tet and the
    /// barycentric coordinates of p within it.
    Hit locate(int macro_id, Vec3 p) const;

  private:
    Hit best_of(const std::vector<int>& candidates, Vec3 p) const;
    void kuhn_candidates(int macro_id, Vec3 p, int window,
                         std::vector<int>& out) const;
    void prism_candidates(int macro_id, Vec3 p, int window,
                          std::vector<int>& out) const;

    const Mesh& mesh_;
    std::vector<std::vector<int>> macro_tets_;
};

} // namespace gradfem
