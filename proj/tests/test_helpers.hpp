#pragma once

#include "gradfem/macro.hpp"

#include <vector>

/// Unit cube split into the six path tetrahedra, all ungraded. Shares faces
/// pairwise, so meshes built from it exercise cross-macro conformity on a
/// convex domain with a smooth solution.
inline std::vector<gradfem::Macroelement> cube_macros() {
    using namespace gradfem;
    static constexpr int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                        {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    std::vector<Macroelement> out;
    for (const auto& pm : perms) {
        Macroelement m;
        Vec3 p{0, 0, 0};
        m.v[0] = p;
        for (int s = 0; s < 3; ++s) {
            p[pm[s]] += 1.0;
            m.v[s + 1] = p;
        }
        out.push_back(m);
    }
    return out;
}
