#pragma once

#include "gradfem/fem.hpp"
#include "gradfem/interpolation.hpp"
#include "gradfem/mesh.hpp"

#include <array>
#include <functional>
#include <iosfwd>
#include <vector>

namespace gradfem {

/// Triangular prism with base face v[0]v[1]v[2] and the lid v[3]v[4]v[5]
/// directly above it: the lateral edges v[i] -> v[i+3] must be mutually
/// parallel. The base may be tilted against the lateral direction.
struct Prism {
    std::array<Vec3, 6> v;
};

/// Shape checks: parallel lateral edges (within 1e-12 relative), a
/// non-degenerate base, positive volume. Throws std::invalid_argument.
void validate_prism(const Prism& pr);

/// Shortest lateral edge length.
double prism_h3(const Prism& pr);

/// Splits the prism into three positively oriented tetrahedra. The lateral
/// quadrilateral faces are planar (parallel lateral edges), so the split is
/// conforming.
std::array<std::array<Vec3, 4>, 3> prism_split(const Prism& pr);

/// Face-versus-volume bound of the base trace:
///   ||v||^p_{Lp(base)} / [ h3^{-1} ( ||v||^p_{Lp(P)} + h3^p ||dv||^p_{Lp(P)} ) ]
/// where dv is the derivative of v along the lateral direction and h3 the
/// shortest lateral edge. Bounded by a constant that grows with the tilt of
/// the base and the flattest base angle, independently of h3.
double prism_trace_ratio(const Prism& pr, const ScalarField& v,
                         const ScalarField& lateral_dv, double p = 2.0);

/// One face-trace measurement on an element patch at a node of the singular
/// edge. The parallelogram pn is spanned by the shortest element edge at the
/// node and the singular direction, grown to maximal extent inside the
/// closed patch; fn is the total area of the patch boundary faces in the
/// plane of pn.
struct PatchTraceSample {
    int tet = -1;
    int node = -1;
    double pn_area = 0.0;
    double fn_area = 0.0;
    double lhs = 0.0;   // L1 norm of v over the parallelogram
    double rhs = 0.0;   // fn/|S_T| ( ||v||_L1 + sum |s_i| ||ds_i v||_L1 ) over the patch
    double ratio = 0.0; // lhs / rhs
};

/// Evaluates the patch trace bound for element `tet` at its vertex `node`
/// (a node on a singular edge). grad_v must be the exact gradient of v.
/// Throws std::invalid_argument when the node is not a vertex of the tet or
/// the element is not edge-graded, and std::runtime_error when the
/// parallelogram degenerates (area below 0.1 of the face area indicates a
/// broken patch geometry).
PatchTraceSample patch_trace_ratio(const Mesh& mesh, const PatchMap& patches,
                                   int tet, int node, const ScalarField& v,
                                   const VectorField& grad_v);

/// Model function with exact derivatives through second order. Entries of
/// hess are ordered xx, yy, zz, yz, xz, xy.
struct InterpModel {
    ScalarField u;
    VectorField grad;
    std::function<std::array<double, 6>(const Vec3&)> hess;
};

/// Local approximation regimes of the averaged interpolant, distinguished by
/// element shape, the node sets met, and the regularity of the model:
///   1 isotropic element, no pinned node, smooth model
///   2 isotropic element with a pinned corner node, smooth model vanishing there
///   3 isotropic element with a pinned corner node, vertex-singular model
///   4 flat element (h3 << h1), no pinned node, smooth model
///   5 flat element with a pinned corner node, smooth model vanishing there
///   6 needle element (h3 >> h1) away from the singular edge, smooth model
///   7 needle element touching the singular edge, edge-singular model
int constexpr kInterpCaseCount = 7;

struct RatioSample {
    int level = 0;
    int element = -1;
    double lhs = 0.0; // | u - D_h u |_{H1(T)}
    double rhs = 0.0; // case-dependent size-weighted norm over the patch
    double ratio = 0.0;
};

struct RatioReport {
    int case_id = 0;
    double mu = 1.0, nu = 1.0;
    std::vector<RatioSample> samples;
    /// Largest ratio per level, index-aligned with `levels` passed in.
    std::vector<double> level_max;
    double max_ratio = 0.0;
};

/// Measures the element-wise interpolation error of the averaged interpolant
/// against the matching size-weighted right-hand side on graded corner-domain
/// meshes at the given levels, using the built-in model of the case. The
/// ratios stay bounded under refinement; a model/case mismatch surfaces as a
/// divergent weighted norm (std::runtime_error).
RatioReport local_interp_ratio(int case_id, double mu, double nu,
                               const std::vector<int>& levels);

/// Same with a caller-provided model (the built-in one is documented per
/// case in the implementation).
RatioReport local_interp_ratio(int case_id, double mu, double nu,
                               const std::vector<int>& levels,
                               const InterpModel& model);

/// Writes `case,n,element_id,lhs,rhs,ratio` rows.
void dump_ratio_csv(const RatioReport& report, std::ostream& os);

/// Least-squares fit of log(ratio) against log(aspect) for the nodal
/// interpolant on a mid-height needle family: the tetrahedron with vertices
/// (0,0,0), (0,0,1), (eps,0,1/2), (0,eps,1/2), eps = 1/aspect, and the model
/// u = x3^2. The nodal interpolant picks up spurious transversal gradients
/// of order 1/eps, so the error ratio against the direction-weighted bound
/// (which only sees the x3 derivative) grows linearly in the aspect; the
/// averaged interpolant keeps the same ratio bounded.
struct NeedleGrowth {
    std::vector<double> aspect;
    std::vector<double> ratio;
    double slope = 0.0; // d log(ratio) / d log(aspect)
};
NeedleGrowth nodal_needle_growth(const std::vector<double>& aspects);

} // namespace gradfem
