#pragma once

#include "gradfem/fem.hpp"
#include "gradfem/mesh.hpp"

#include <array>
#include <iosfwd>
#include <vector>

namespace gradfem {

/// Averaging edge of one node: the mesh edge (n, m) along which nodal values
/// are recovered by projection. Unset entries keep {-1, -1}.
struct SigmaEdge {
    int n = -1, m = -1;
    bool assigned() const { return n >= 0; }
};

/// Per-node averaging edges, indexed by node id. Coupling nodes and nodes on
/// singular edges never carry an edge.
struct EdgeAssignment {
    std::vector<SigmaEdge> sigma;
};

/// Per-element neighborhoods: members[t] lists the tets (sorted, including t
/// itself) whose closed union carries every averaging edge of t's nodes.
struct PatchMap {
    std::vector<std::vector<int>> members;
};

/// Linear polynomial a + b*t in the arclength parameter t measured from the
/// first endpoint of the edge it was computed on.
struct LinearOnEdge {
    double a = 0.0, b = 0.0;
    double length = 0.0;
    double at0() const { return a; }
    double at1() const { return a + b * length; }
};

/// Chooses the averaging edge of every node outside the coupling and
/// singular sets. The choice is deterministic and obeys:
///  - the edge stays in every macro face (boundary or interface) through the
///    node, which pins nodes on shared edges to those edges and preserves
///    homogeneous Dirichlet data;
///  - in edge-graded macros the edge lies in a single plane of the pencil,
///    and nodes stacked along the singular direction receive edges with
///    identical cross-plane projections.
/// Throws std::runtime_error with a diagnostic if a node has no admissible
/// edge (a mesh construction bug).
EdgeAssignment select_sigma(const Mesh& mesh, const NodeClassification& cls);

/// Builds the minimal connected element neighborhoods: a single-strip
/// prismatic union of lattice cells in edge-graded macros, a face-connected
/// element star elsewhere. Every patch stays inside its element's macro.
PatchMap build_patches(const Mesh& mesh, const EdgeAssignment& asg);

/// L2-projection of f onto linear polynomials on the segment [p0, p1],
/// computed with a 5-point Gauss rule. Throws std::invalid_argument for a
/// zero-length edge.
LinearOnEdge edge_projection(const ScalarField& f, Vec3 p0, Vec3 p1);

/// Averaged nodal interpolant: the coefficient at node n is the value at n
/// of the projection of f along the node's averaging edge; coefficients at
/// coupling and singular-edge nodes are exactly zero.
FEFunction apply_Dh(const ScalarField& f, const Mesh& mesh, const EdgeAssignment& asg);

/// Plain nodal interpolant of f.
FEFunction lagrange_interpolate(const ScalarField& f, const Mesh& mesh);

/// Continuous piecewise-linear interpolant on the macro decomposition,
/// determined by the values at the macro vertices.
struct MacroLinear {
    std::vector<Macroelement> macros;
    std::vector<std::array<double, 4>> values;

    /// p must lie in some closed macro; evaluates barycentrically in the
    /// first macro containing p (faces are consistent across neighbors).
    double operator()(const Vec3& p) const;
};

/// Coarse/remainder splitting f = coarse + remainder with the coarse part
/// linear per macro. The remainder vanishes at all macro vertices.
struct LagrangeSplit {
    MacroLinear coarse;
    ScalarField remainder;
};
LagrangeSplit macro_lagrange_split(const ScalarField& f,
                                   const std::vector<Macroelement>& macros);

/// Debug dumps for test tooling: `node,sigma_a,sigma_b` rows for assigned
/// nodes and `tet,members...` rows for patches.
void dump_sigma_csv(const EdgeAssignment& asg, std::ostream& os);
void dump_patches_csv(const PatchMap& pm, std::ostream& os);

} // namespace gradfem
