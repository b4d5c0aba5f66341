#pragma once

#include "gradfem/geometry.hpp"

#include <array>
#include <functional>
#include <vector>

namespace gradfem {

struct QuadPoint1D {
    double x, w;
};

/// n-point Gauss-Legendre rule on [0,1]; exact for degree 2n-1.
std::vector<QuadPoint1D> gauss_legendre(int n);

/// n-point Gauss-Jacobi rule on [0,1] with weight (1-x)^alpha; exact for
/// degree 2n-1 against that weight.
std::vector<QuadPoint1D> gauss_jacobi(int n, int alpha);

struct QuadPoint3D {
    Vec3 p;   // barycentric-free: position in the reference tet {x>=0, x1+x2+x3<=1}
    double w; // weight, sums to 1/6 (reference volume)
};

/// Conical-product rule on the reference tetrahedron, exact for total
/// degree >= `degree`.
const std::vector<QuadPoint3D>& tet_rule(int degree);

struct QuadPoint2D {
    double a, b; // reference triangle {a,b>=0, a+b<=1}
    double w;    // sums to 1/2
};

/// Conical-product rule on the reference triangle, exact for `degree`.
const std::vector<QuadPoint2D>& tri_rule(int degree);

/// Integrate f over the physical tetrahedron (v0..v3).
double integrate_tet(const std::array<Vec3, 4>& v, int degree,
                     const std::function<double(Vec3)>& f);

/// Integrate f over the physical triangle (a,b,c) embedded in 3D.
double integrate_tri(Vec3 a, Vec3 b, Vec3 c, int degree,
                     const std::function<double(Vec3)>& f);

/// Integrate f over the segment [a,b] with an n-point Gauss rule;
/// f receives the world point.
double integrate_segment(Vec3 a, Vec3 b, int npts, const std::function<double(Vec3)>& f);

/// Composite-midpoint oracle on a segment (reference implementation used by
/// tests to cross-check Gauss results).
double integrate_segment_midpoint(Vec3 a, Vec3 b, int cells,
                                  const std::function<double(Vec3)>& f);

/// Integral of f over a union of tets with an integrand that may blow up on
/// the x3 axis or at the origin. Cells carrying a positive-length piece of
/// the axis or containing the origin are split dyadically up to max_depth;
/// contributions settle layer by layer and the still-singular remainder is
/// replaced by a geometric tail estimate. Throws std::runtime_error when the
/// layer increments do not decay (divergent integral).
double integrate_axis_refined(const std::vector<std::array<Vec3, 4>>& cells,
                              int degree, int max_depth,
                              const std::function<double(Vec3)>& f);

} // namespace gradfem
