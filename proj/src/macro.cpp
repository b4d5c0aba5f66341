#include "gradfem/macro.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gradfem {

const char* kind_tag(MacroKind k) {
    switch (k) {
        case MacroKind::Type1: return "T1";
        case MacroKind::Type2: return "T2";
        case MacroKind::Type3: return "T3";
        case MacroKind::Type4: return "T4";
    }
    return "?";
}

MacroKind kind_from_tag(const std::string& tag) {
    if (tag == "T1") return MacroKind::Type1;
    if (tag == "T2") return MacroKind::Type2;
    if (tag == "T3") return MacroKind::Type3;
    if (tag == "T4") return MacroKind::Type4;
    throw std::runtime_error("unknown macro kind tag: " + tag);
}

double Macroelement::volume() const {
    return std::abs(tet_volume(v[0], v[1], v[2], v[3]));
}

std::array<int, 2> Macroelement::edge_local() const {
    if (singular_edge[0] < 0) throw std::logic_error("macro has no singular edge");
    int a = singular_edge[0], b = singular_edge[1];
    if (singular_vertex >= 0) {
        if (singular_vertex == b) std::swap(a, b);
        return {a, b};
    }
    if (lex_less(v[b], v[a])) std::swap(a, b);
    return {a, b};
}

std::array<int, 2> Macroelement::opposite_edge_local() const {
    auto e = edge_local();
    std::array<int, 2> o{};
    int k = 0;
    for (int i = 0; i < 4; ++i)
        if (i != e[0] && i != e[1]) o[k++] = i;
    if (lex_less(v[o[1]], v[o[0]])) std::swap(o[0], o[1]);
    return o;
}

Frame Macroelement::local_frame() const {
    if (kind == MacroKind::Type3 || kind == MacroKind::Type4) {
        auto e = edge_local();
        auto o = opposite_edge_local();
        return Frame::from_axis(v[e[0]], v[e[1]] - v[e[0]], v[o[0]] - v[e[0]]);
    }
    Frame f;
    if (kind == MacroKind::Type2) {
        f.origin = v[singular_vertex];
    } else {
        int m = 0;
        for (int i = 1; i < 4; ++i)
            if (lex_less(v[i], v[m])) m = i;
        f.origin = v[m];
    }
    return f;
}

std::vector<Macroelement> build_fichera_macros(double mu, double nu) {
    static constexpr int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                        {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    std::vector<Macroelement> macros;
    macros.reserve(42);
    for (int sx : {1, -1})
        for (int sy : {1, -1})
            for (int sz : {1, -1}) {
                if (sx == 1 && sy == 1 && sz == 1) continue; // removed octant
                double s[3] = {double(sx), double(sy), double(sz)};
                for (const auto& p : perms) {
                    Macroelement m;
                    m.v[0] = {0, 0, 0};
                    for (int k = 0; k < 3; ++k) {
                        m.v[k + 1] = m.v[k];
                        m.v[k + 1][p[k]] += s[p[k]];
                    }
                    m.mu = mu;
                    m.nu = nu;
                    m.singular_vertex = 0;
                    m.lambda_v = kFicheraVertexExponent;
                    if (s[p[0]] > 0) {
                        // first step runs along a concave edge
                        m.kind = MacroKind::Type4;
                        m.singular_edge = {0, 1};
                        m.lambda_e = 2.0 / 3.0; // pi / (3*pi/2)
                    } else {
                        m.kind = MacroKind::Type2;
                    }
                    macros.push_back(m);
                }
            }
    return macros;
}

SingularSet fichera_singular_set() {
    SingularSet s;
    s.edges = {{Vec3{0, 0, 0}, Vec3{1, 0, 0}},
               {Vec3{0, 0, 0}, Vec3{0, 1, 0}},
               {Vec3{0, 0, 0}, Vec3{0, 0, 1}}};
    s.vertices = {Vec3{0, 0, 0}};
    return s;
}

FeatureCount count_singular_features(const Macroelement& m, const SingularSet& s) {
    FeatureCount c;
    for (const auto& e : s.edges)
        if (segment_tet_overlap(m.v, e[0], e[1]) > 1e-12) ++c.edges;
    for (const auto& p : s.vertices) {
        auto bc = barycentric(m.v, p);
        bool inside = true;
        for (double b : bc)
            if (b < -1e-12) inside = false;
        if (inside) ++c.vertices;
    }
    return c;
}

std::vector<std::string> validate_macros(const std::vector<Macroelement>& macros) {
    std::vector<std::string> warnings;
    bool any_t2 = false, any_t4 = false, mixed_exponents = false;
    for (std::size_t i = 0; i < macros.size(); ++i) {
        const auto& m = macros[i];
        auto fail = [&](const std::string& msg) {
            throw std::runtime_error("macro " + std::to_string(i) + ": " + msg);
        };
        if (m.volume() < 1e-14) fail("degenerate (zero volume)");
        if (!(m.mu > 0.0 && m.mu <= 1.0)) fail("mu outside (0,1]");
        if (!(m.nu > 0.0 && m.nu <= 1.0)) fail("nu outside (0,1]");
        bool has_edge = m.singular_edge[0] >= 0;
        bool has_vertex = m.singular_vertex >= 0;
        bool finite_e = std::isfinite(m.lambda_e);
        bool finite_v = std::isfinite(m.lambda_v);
        if (has_edge != finite_e) fail("singular edge and lambda_e disagree");
        if (has_vertex != finite_v) fail("singular vertex and lambda_v disagree");
        switch (m.kind) {
            case MacroKind::Type1:
                if (has_edge || has_vertex) fail("Type1 with singular feature");
                break;
            case MacroKind::Type2:
                if (has_edge || !has_vertex) fail("Type2 needs vertex only");
                any_t2 = true;
                break;
            case MacroKind::Type3:
                if (!has_edge || has_vertex) fail("Type3 needs edge only");
                break;
            case MacroKind::Type4:
                if (!has_edge || !has_vertex) fail("Type4 needs edge and vertex");
                if (m.singular_vertex != m.singular_edge[0] &&
                    m.singular_vertex != m.singular_edge[1])
                    fail("singular vertex is not an endpoint of the singular edge");
                any_t4 = true;
                break;
        }
        if (has_edge) {
            if (m.singular_edge[0] < 0 || m.singular_edge[0] > 3 ||
                m.singular_edge[1] < 0 || m.singular_edge[1] > 3 ||
                m.singular_edge[0] == m.singular_edge[1])
                fail("bad singular edge indices");
            if (finite_e && m.lambda_e <= 0.5) fail("lambda_e must exceed 1/2");
        }
        if (has_vertex) {
            if (m.singular_vertex > 3) fail("bad singular vertex index");
            if (finite_v && m.lambda_v <= 0.0) fail("lambda_v must be positive");
            if (finite_v && std::abs(m.lambda_v - 0.5) < 1e-6)
                warnings.push_back("macro " + std::to_string(i) +
                                   ": lambda_v within 1e-6 of 1/2 (excluded exponent)");
        }
        if (m.mu != m.nu) mixed_exponents = true;
    }
    if (any_t2 && any_t4 && mixed_exponents)
        warnings.push_back(
            "decomposition mixes Type2 and Type4 macros with mu != nu; "
            "shared interface nodes will not match and the mesh will not conform");
    return warnings;
}

namespace {

double parse_double(const std::string& tok, int line_no) {
    try {
        std::size_t pos = 0;
        double x = std::stod(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument(tok);
        return x;
    } catch (const std::exception&) {
        throw std::runtime_error("macro file line " + std::to_string(line_no) +
                                 ": bad number '" + tok + "'");
    }
}

std::string fmt_double(double x) {
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

} // namespace

std::vector<Macroelement> load_macros(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open macro file: " + path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    int line_no = 0;
    std::vector<int> row_lines;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ss(line);
        std::vector<std::string> toks;
        std::string t;
        while (ss >> t) {
            if (t[0] == '#') break;
            toks.push_back(t);
        }
        if (toks.empty()) continue;
        rows.push_back(std::move(toks));
        row_lines.push_back(line_no);
    }
    if (rows.empty() || rows[0].size() != 2 || rows[0][0] != "macros")
        throw std::runtime_error("macro file must start with 'macros <count>'");
    std::size_t count = std::stoul(rows[0][1]);
    if (rows.size() != count + 1)
        throw std::runtime_error("macro file: expected " + std::to_string(count) +
                                 " macro lines, found " + std::to_string(rows.size() - 1));
    std::vector<Macroelement> macros;
    macros.reserve(count);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& toks = rows[r];
        int ln = row_lines[r];
        if (toks.size() != 20)
            throw std::runtime_error("macro file line " + std::to_string(ln) +
                                     ": expected 20 fields, found " +
                                     std::to_string(toks.size()));
        Macroelement m;
        for (int i = 0; i < 4; ++i)
            for (int c = 0; c < 3; ++c) m.v[i][c] = parse_double(toks[3 * i + c], ln);
        m.kind = kind_from_tag(toks[12]);
        m.mu = parse_double(toks[13], ln);
        m.nu = parse_double(toks[14], ln);
        m.lambda_e = parse_double(toks[15], ln);
        m.lambda_v = parse_double(toks[16], ln);
        m.singular_vertex = static_cast<int>(parse_double(toks[17], ln));
        m.singular_edge = {static_cast<int>(parse_double(toks[18], ln)),
                           static_cast<int>(parse_double(toks[19], ln))};
        macros.push_back(m);
    }
    return macros;
}

void save_macros(const std::string& path, const std::vector<Macroelement>& macros) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write macro file: " + path);
    out << "macros " << macros.size() << "\n";
    for (const auto& m : macros) {
        for (int i = 0; i < 4; ++i)
            for (int c = 0; c < 3; ++c) out << fmt_double(m.v[i][c]) << ' ';
        out << kind_tag(m.kind) << ' ' << fmt_double(m.mu) << ' ' << fmt_double(m.nu)
            << ' ' << fmt_double(m.lambda_e) << ' ' << fmt_double(m.lambda_v) << ' '
            << m.singular_vertex << ' ' << m.singular_edge[0] << ' '
            << m.singular_edge[1] << '\n';
    }
}

} // namespace gradfem
