#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <vector>

namespace gradfem {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
    double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
};

inline Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
inline Vec3 operator*(Vec3 a, double s) { return s * a; }
inline Vec3 operator/(Vec3 a, double s) { return {a.x / s, a.y / s, a.z / s}; }
inline Vec3& operator+=(Vec3& a, Vec3 b) { a = a + b; return a; }
inline Vec3& operator-=(Vec3& a, Vec3 b) { a = a - b; return a; }

inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(Vec3 a, Vec3 b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(Vec3 a) { return std::sqrt(dot(a, a)); }
inline double dist(Vec3 a, Vec3 b) { return norm(a - b); }
inline Vec3 normalized(Vec3 a) { return a / norm(a); }

std::ostream& operator<<(std::ostream& os, const Vec3& v);

/// Signed volume of the tetrahedron (a,b,c,d).
double tet_volume(Vec3 a, Vec3 b, Vec3 c, Vec3 d);

/// Diameter (longest edge) of a tetrahedron.
double tet_diameter(const std::array<Vec3, 4>& v);

double triangle_area(Vec3 a, Vec3 b, Vec3 c);

/// Largest of the six dihedral angles of the tetrahedron, in radians.
double max_dihedral_angle(const std::array<Vec3, 4>& v);

/// Barycentric coordinates of p with respect to tetrahedron (v0..v3).
std::array<double, 4> barycentric(const std::array<Vec3, 4>& v, Vec3 p);

/// Distance from point p to the segment [a,b].
double point_segment_distance(Vec3 p, Vec3 a, Vec3 b);

/// Length of the part of segment [a,b] inside the tetrahedron (clipping
/// against the four face planes).
double segment_tet_overlap(const std::array<Vec3, 4>& tet, Vec3 a, Vec3 b);

/// Orthonormal frame with origin `o` and third axis along `axis`.
/// Maps world points into local coordinates where the axis is x3.
struct Frame {
    Vec3 origin{};
    Vec3 e1{1, 0, 0}, e2{0, 1, 0}, e3{0, 0, 1};

    static Frame from_axis(Vec3 origin, Vec3 axis_dir, Vec3 hint);

    Vec3 to_local(Vec3 p) const {
        Vec3 d = p - origin;
        return {dot(d, e1), dot(d, e2), dot(d, e3)};
    }
    Vec3 to_world(Vec3 q) const { return origin + q.x * e1 + q.y * e2 + q.z * e3; }

    /// r = distance to local x3 axis, R = distance to local origin.
    double r_of(Vec3 p) const {
        Vec3 q = to_local(p);
        return std::sqrt(q.x * q.x + q.y * q.y);
    }
    double R_of(Vec3 p) const { return norm(p - origin); }
};

/// Key for exact (bitwise) point identification. Negative zeros are
/// canonicalized so that -0.0 and +0.0 merge.
struct PointKey {
    std::uint64_t bx, by, bz;
    bool operator==(const PointKey&) const = default;
};

PointKey point_key(Vec3 p);

struct PointKeyHash {
    std::size_t operator()(const PointKey& k) const;
};

} // namespace gradfem
