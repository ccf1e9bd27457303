#pragma once

#include <json.hpp>

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "tfm/membrane.hpp"

namespace tfm {

using json = nlohmann::json;

/// Malformed input document. Carries 1-based line/column when known.
struct InputError : std::runtime_error {
    int line = 0, column = 0;
    InputError(const std::string& msg, int l = 0, int c = 0)
        : std::runtime_error(l > 0 ? msg + " (line " + std::to_string(l) + ", column " + std::to_string(c) + ")" : msg),
          line(l), column(c) {}
};

inline std::pair<int, int> line_column(const std::string& text, std::size_t byte) {
    int line = 1, col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

/// Parses a JSON document; comments are allowed.
inline json parse_document(const std::string& text) {
    try {
        return json::parse(text, nullptr, true, true);
    } catch (const json::parse_error& e) {
        // nlohmann reports the byte just past the offending token.
        const auto [l, c] = line_column(text, e.byte > 0 ? e.byte - 1 : 0);
        std::string what = e.what();
        if (auto p = what.find("syntax error"); p != std::string::npos) what = what.substr(p);
        throw InputError("parse error: " + what, l, c);
    }
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

namespace detail {

template <std::size_t N>
Vec<double, N> read_vec(const json& j, const std::string& what) {
    if (!j.is_array() || j.size() != N) throw InputError(what + ": expected " + std::to_string(N) + " numbers");
    Vec<double, N> v;
    for (std::size_t i = 0; i < N; ++i) {
        if (!j[i].is_number()) throw InputError(what + ": expected numbers");
        v[i] = j[i].get<double>();
    }
    return v;
}

template <std::size_t N>
json write_vec(const Vec<double, N>& v) {
    json a = json::array();
    for (std::size_t i = 0; i < N; ++i) a.push_back(v[i]);
    return a;
}

inline void reject_unknown(const json& obj, std::initializer_list<const char*> keys, const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : keys) ok = ok || it.key() == k;
        if (!ok) throw InputError(where + ": unknown key '" + it.key() + "'");
    }
}

}  // namespace detail

/// Scene layout:
///   domain: [x0, x1, y0, y1]
///   cells:  [{polygon: [[x,y],...], affine: [A11,A12,A21,A22,A31,A32,c1,c2,c3]}]
///   jumps:  [{endpoints: [[x,y],[x,y]], normal: [nx,ny],
///             trace_plus: [c0 (3), c1 (3)], trace_minus: [...]}]
/// A jump without traces takes them from the adjacent cells.
inline CrackedMembrane membrane_from_json(const json& j) {
    using namespace detail;
    if (!j.is_object()) throw InputError("scene: expected an object");
    reject_unknown(j, {"domain", "cells", "jumps"}, "scene");
    CrackedMembrane m;
    const auto d = read_vec<4>(j.at("domain"), "scene.domain");
    m.domain = {d[0], d[1], d[2], d[3]};
    if (!(m.domain.x1 > m.domain.x0 && m.domain.y1 > m.domain.y0)) throw InputError("scene.domain: empty rectangle");
    for (const auto& c : j.at("cells")) {
        reject_unknown(c, {"polygon", "affine"}, "scene.cells[]");
        Cell cell;
        for (const auto& p : c.at("polygon")) cell.polygon.push_back(read_vec<2>(p, "scene.cells[].polygon"));
        const auto a = c.at("affine");
        if (!a.is_array() || a.size() != 9) throw InputError("scene.cells[].affine: expected 9 numbers (A row-major, then c)");
        for (std::size_t i = 0; i < 6; ++i) cell.A.a[i] = a[i].get<double>();
        for (std::size_t i = 0; i < 3; ++i) cell.c[i] = a[6 + i].get<double>();
        m.cells.push_back(std::move(cell));
    }
    if (j.contains("jumps"))
        for (const auto& s : j.at("jumps")) {
            reject_unknown(s, {"endpoints", "normal", "trace_plus", "trace_minus"}, "scene.jumps[]");
            const auto& e = s.at("endpoints");
            if (!e.is_array() || e.size() != 2) throw InputError("scene.jumps[].endpoints: expected two points");
            const Vec2 p0 = read_vec<2>(e[0], "endpoint"), p1 = read_vec<2>(e[1], "endpoint");
            const Vec2 n = read_vec<2>(s.at("normal"), "scene.jumps[].normal");
            JumpSegment seg;
            if (s.contains("trace_plus") != s.contains("trace_minus"))
                throw InputError("scene.jumps[]: give both traces or neither");
            if (s.contains("trace_plus")) {
                seg.p0 = p0;
                seg.p1 = p1;
                seg.normal = n;
                const auto tp = read_vec<6>(s.at("trace_plus"), "trace_plus");
                const auto tm = read_vec<6>(s.at("trace_minus"), "trace_minus");
                seg.trace_plus = {{{tp[0], tp[1], tp[2]}}, {{tp[3], tp[4], tp[5]}}};
                seg.trace_minus = {{{tm[0], tm[1], tm[2]}}, {{tm[3], tm[4], tm[5]}}};
            } else {
                seg = make_jump(m, p0, p1, n);
            }
            m.jumps.push_back(seg);
        }
    return m;
}

inline json membrane_to_json(const CrackedMembrane& m) {
    using namespace detail;
    json j;
    j["domain"] = {m.domain.x0, m.domain.x1, m.domain.y0, m.domain.y1};
    j["cells"] = json::array();
    for (const auto& c : m.cells) {
        json cj;
        cj["polygon"] = json::array();
        for (const auto& p : c.polygon) cj["polygon"].push_back(write_vec(p));
        json a = json::array();
        for (double v : c.A.a) a.push_back(v);
        for (std::size_t i = 0; i < 3; ++i) a.push_back(c.c[i]);
        cj["affine"] = a;
        j["cells"].push_back(cj);
    }
    j["jumps"] = json::array();
    for (const auto& s : m.jumps) {
        auto trace = [](const AffineTrace& t) {
            return json{t.c0[0], t.c0[1], t.c0[2], t.c1[0], t.c1[1], t.c1[2]};
        };
        j["jumps"].push_back({{"endpoints", {write_vec(s.p0), write_vec(s.p1)}},
                              {"normal", write_vec(s.normal)},
                              {"trace_plus", trace(s.trace_plus)},
                              {"trace_minus", trace(s.trace_minus)}});
    }
    return j;
}

inline CrackedMembrane load_membrane(const std::string& path) {
    const std::string text = read_file(path);
    try {
        return membrane_from_json(parse_document(text));
    } catch (const json::exception& e) {
        throw InputError(path + ": " + e.what());
    }
}

}  // namespace tfm
