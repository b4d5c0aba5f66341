#pragma once

#include "gradfem/geometry.hpp"

#include <array>
#include <string>
#include <vector>

namespace gradfem {

/// Triangulated patch of the unit sphere (the intersection of the domain
/// with the unit sphere around a corner). Triangles are flat; refinement
/// projects new vertices back onto the sphere. Boundary vertices are those
/// on single-incidence edges.
struct SphericalPatchMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> triangles;
    std::vector<bool> boundary;
};

/// Built-in patches: "fichera" (sphere minus the positive octant),
/// "octant" (one octant, a cube corner), "hemisphere".
SphericalPatchMesh builtin_patch(const std::string& name);

/// 4:1 midpoint refinement with projection to the unit sphere.
SphericalPatchMesh refine_patch(const SphericalPatchMesh& patch);

/// Recompute boundary flags from single-incidence edges.
void mark_boundary(SphericalPatchMesh& patch);

/// Leading edge exponent lambda_e = pi / omega for interior dihedral angle
/// omega in (0, 2*pi). Values >= 1 mean the edge is not singular.
double edge_exponent(double omega);

struct VertexExponentResult {
    double mu1 = 0.0;      // smallest Dirichlet Laplace-Beltrami eigenvalue
    double lambda_v = 0.0; // -1/2 + sqrt(1/4 + mu1)
    std::vector<double> mu_per_level;
    int dofs_finest = 0;
};

/// Smallest Dirichlet eigenvalue of the Laplace-Beltrami operator on the
/// patch by P1 surface finite elements and inverse iteration, Richardson
/// extrapolated over the last two refinement levels. Throws on degenerate
/// patches (no interior vertices after refinement) and on non-convergent
/// eigen iterations.
VertexExponentResult vertex_exponent(const SphericalPatchMesh& patch, int refine_levels);

/// lambda_v from a given eigenvalue; strictly increasing, maps 2 -> 1.
double lambda_from_mu(double mu1);

} // namespace gradfem
