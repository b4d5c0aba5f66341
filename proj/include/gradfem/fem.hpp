#pragma once

#include "gradfem/mesh.hpp"
#include "gradfem/quadrature.hpp"
#include "gradfem/sparse.hpp"

#include <array>
#include <functional>
#include <vector>

namespace gradfem {

using ScalarField = std::function<double(const Vec3&)>;
using VectorField = std::function<Vec3(const Vec3&)>;

/// Piecewise linear continuous function given by one coefficient per node.
struct FEFunction {
    const Mesh* mesh = nullptr;
    std::vector<double> coeff;

    /// Value at p, which must lie in tet t (barycentric evaluation).
    double value(int t, const Vec3& p) const;
    /// Constant gradient on tet t.
    Vec3 gradient(int t) const;
};

/// Gradients of the four nodal basis functions on a tet; they sum to the
/// exact zero vector, so constants are in the stiffness kernel exactly.
std::array<Vec3, 4> p1_gradients(const std::array<Vec3, 4>& v);

struct SparseSystem {
    CsrMatrix A;
    std::vector<double> load;
    std::vector<bool> constrained; // homogeneous Dirichlet nodes
};

/// Assemble stiffness and load for -laplace(u) = f with zero boundary
/// values. Stiffness entries use the closed-form per-element gradients; the
/// load uses a degree-4 rule except on elements having a vertex-singular
/// macro corner as a vertex, which get vertex-collapsed dyadic layers so
/// that sources which are merely square-integrable keep their convergence
/// order. Dirichlet rows and columns are eliminated symmetrically.
SparseSystem assemble(const Mesh& mesh, const ScalarField& f);

/// Stiffness matrix without boundary elimination; constants are in its
/// kernel exactly.
CsrMatrix stiffness_matrix(const Mesh& mesh);

struct SolveInfo {
    int iterations = 0;
    double residual = 0.0;
};

/// Jacobi-CG solve of the assembled system to relative residual tol.
/// Throws std::runtime_error when the iteration cap is exceeded.
FEFunction solve_system(const Mesh& mesh, const SparseSystem& sys,
                        double tol = 1e-10, SolveInfo* info = nullptr);

struct ErrorPair {
    double h1 = 0.0; // H1 seminorm of the error
    double l2 = 0.0;
};

/// Error of uh against an analytic reference (degree-4 quadrature).
ErrorPair error_norms(const FEFunction& uh, const ScalarField& ref,
                      const VectorField& ref_grad);

/// Error of a coarse solution against a finer one built from the same macro
/// decomposition. Quadrature runs on the fine mesh; the coarse function is
/// evaluated through the locator (built on the coarse mesh).
ErrorPair error_norms(const FEFunction& coarse, const FEFunction& fine,
                      const PointLocator& coarse_locator);

struct ResidualEstimate {
    std::vector<double> element2; // squared per-element contributions
    double global = 0.0;
};

/// Residual error estimator: element terms hT^2 ||f||^2_T (P1 functions are
/// harmonic element-wise) plus interior face terms hF ||[du/dn]||^2_F, each
/// face term split evenly between its two elements.
ResidualEstimate residual_estimate(const FEFunction& uh, const ScalarField& f);

/// Weighted Sobolev norm specification: derivative order k and the exponents
/// of the vertex distance R and the angular distance theta = r/R.
struct WeightedNormSpec {
    int k = 0;
    double beta = 0.0;
    double delta = 0.0;
};

/// Derivative oracle in macro-local coordinates (Macroelement::local_frame):
/// f(p, ax, ay, az) returns the (ax,ay,az) partial at local point p.
using LocalDerivFn = std::function<double(const Vec3&, int, int, int)>;

/// sum_{|a|<=k} int |R^{beta-k+|a|} theta^{delta-k+|a|} D^a f|^2 over the
/// macro, evaluated by dyadic refinement toward the x3 axis and the origin
/// with geometric tail extrapolation. Throws std::runtime_error when the
/// refinement increments do not decay (divergent integral).
double weighted_norm(const Macroelement& m, const WeightedNormSpec& spec,
                     const LocalDerivFn& f);

/// Same norm over an explicit cell union given in local coordinates (the
/// singular axis is the x3 axis, the singular vertex the origin). With
/// edge_weight = false the theta factor is dropped entirely: the norm of a
/// region whose weight structure has a vertex singularity only.
double weighted_norm(const std::vector<std::array<Vec3, 4>>& local_cells,
                     const WeightedNormSpec& spec, const LocalDerivFn& f,
                     bool edge_weight = true);

/// L2 norm of a field over the mesh, using the same vertex-collapsed rule
/// as assemble() near vertex-singular macro corners.
double field_l2_norm(const Mesh& mesh, const ScalarField& f);

/// Source term of the corner-singular benchmark: 1 + R^{-3/2} / ln(R/4)
/// with R the distance to the concave vertex at the origin. Unbounded but
/// square integrable.
double fichera_load(const Vec3& p);

} // namespace gradfem
