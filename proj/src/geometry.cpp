#include "gradfem/geometry.hpp"

#include <algorithm>
#include <cstring>
#include <ostream>

namespace gradfem {

std::ostream& operator<<(std::ostream& os, const Vec3& v) {
    return os << "(" << v.x << ", " << v.y << ", " << v.z << ")";
}

double tet_volume(Vec3 a, Vec3 b, Vec3 c, Vec3 d) {
    return dot(b - a, cross(c - a, d - a)) / 6.0;
}

double tet_diameter(const std::array<Vec3, 4>& v) {
    double d = 0.0;
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j) d = std::max(d, dist(v[i], v[j]));
    return d;
}

double triangle_area(Vec3 a, Vec3 b, Vec3 c) { return 0.5 * norm(cross(b - a, c - a)); }

double max_dihedral_angle(const std::array<Vec3, 4>& v) {
    // Outward normals of the four faces (face i is opposite vertex i).
    std::array<Vec3, 4> n;
    static const int f[4][3] = {{1, 2, 3}, {0, 3, 2}, {0, 1, 3}, {0, 2, 1}};
    for (int i = 0; i < 4; ++i) {
        Vec3 a = v[f[i][0]], b = v[f[i][1]], c = v[f[i][2]];
        Vec3 nn = cross(b - a, c - a);
        if (dot(nn, v[i] - a) > 0) nn = -1.0 * nn; // ensure outward
        n[i] = normalized(nn);
    }
    double worst = 0.0;
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j) {
            double c = std::clamp(-dot(n[i], n[j]), -1.0, 1.0);
            worst = std::max(worst, std::acos(c));
        }
    return worst;
}

std::array<double, 4> barycentric(const std::array<Vec3, 4>& v, Vec3 p) {
    double vol = tet_volume(v[0], v[1], v[2], v[3]);
    std::array<double, 4> b;
    b[0] = tet_volume(p, v[1], v[2], v[3]) / vol;
    b[1] = tet_volume(v[0], p, v[2], v[3]) / vol;
    b[2] = tet_volume(v[0], v[1], p, v[3]) / vol;
    b[3] = tet_volume(v[0], v[1], v[2], p) / vol;
    return b;
}

double point_segment_distance(Vec3 p, Vec3 a, Vec3 b) {
    Vec3 d = b - a;
    double len2 = dot(d, d);
    double t = len2 > 0 ? std::clamp(dot(p - a, d) / len2, 0.0, 1.0) : 0.0;
    return dist(p, a + t * d);
}

Frame Frame::from_axis(Vec3 origin, Vec3 axis_dir, Vec3 hint) {
    Frame fr;
    fr.origin = origin;
    fr.e3 = normalized(axis_dir);
    Vec3 h = hint - dot(hint, fr.e3) * fr.e3;
    if (norm(h) < 1e-12) {
        // hint parallel to the axis; fall back to a coordinate direction
        Vec3 alt{1, 0, 0};
        if (std::abs(fr.e3.x) > 0.9) alt = {0, 1, 0};
        h = alt - dot(alt, fr.e3) * fr.e3;
    }
    fr.e1 = normalized(h);
    fr.e2 = cross(fr.e3, fr.e1);
    return fr;
}

double segment_tet_overlap(const std::array<Vec3, 4>& tet, Vec3 a, Vec3 b) {
    static constexpr int faces[4][3] = {{1, 2, 3}, {0, 3, 2}, {0, 1, 3}, {0, 2, 1}};
    double t0 = 0.0, t1 = 1.0;
    for (int f = 0; f < 4; ++f) {
        Vec3 p0 = tet[faces[f][0]], p1 = tet[faces[f][1]], p2 = tet[faces[f][2]];
        Vec3 n = normalized(cross(p1 - p0, p2 - p0));
        Vec3 inside = tet[f]; // vertex opposite the face
        if (dot(n, inside - p0) < 0) n = -1.0 * n;
        double ga = dot(n, a - p0), gb = dot(n, b - p0);
        const double tol = 1e-12;
        if (ga < -tol && gb < -tol) return 0.0;
        if (ga < gb) {
            if (ga < 0) t0 = std::max(t0, -ga / (gb - ga));
        } else if (ga > gb) {
            if (gb < 0) t1 = std::min(t1, ga / (ga - gb));
        } else if (ga < -tol) {
            return 0.0;
        }
    }
    return t1 > t0 ? (t1 - t0) * dist(a, b) : 0.0;
}

PointKey point_key(Vec3 p) {
    auto canon = [](double x) -> std::uint64_t {
        if (x == 0.0) x = 0.0; // collapse -0.0 onto +0.0
        std::uint64_t b;
        std::memcpy(&b, &x, sizeof b);
        return b;
    };
    return {canon(p.x), canon(p.y), canon(p.z)};
}

std::size_t PointKeyHash::operator()(const PointKey& k) const {
    std::uint64_t h = 1469598103934665603ull;
    for (std::uint64_t v : {k.bx, k.by, k.bz}) {
        h ^= v;
        h *= 1099511628211ull;
    }
    return static_cast<std::size_t>(h);
}

} // namespace gradfem
