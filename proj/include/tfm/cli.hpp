#pragma once

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tfm/energy.hpp"
#include "tfm/envelopes.hpp"
#include "tfm/fixtures.hpp"
#include "tfm/maps.hpp"
#include "tfm/scene_io.hpp"

namespace tfm::cli {

inline constexpr const char* version = "0.1.0";

enum class Format { csv, text };

struct MatrixRow {
    Matrix32 E;
    Vec3 z{{1, 0, 0}};
    Vec2 nu{{1, 0}};
};

/// Everything a run needs. Defaults reproduce the standard incompressible
/// fixture with the sweep partition.
struct RunConfig {
    std::string subcommand;
    std::optional<CrackedMembrane> scene;  // unset: standard_membrane()
    std::string scene_source = "standard";

    std::string bulk = "INCOMP_POWER";
    double p = 2;
    std::string surface = "SURF_QUAD";
    Matrix33 Q = aniso_q();
    double cap = 0.5;

    PrismGrid grid{{}, 64, 16, 2};
    int surface_order = 8;
    std::vector<double> rhos = standard_rhos();
    int part_n = SweepPartition{}.n;
    double part_eps = SweepPartition{}.eps;
    double part_theta = SweepPartition{}.theta;

    double ode_tol = 1e-10;
    double newton_tol = 1e-13;
    double det_tol = 1e-6;
    double gap_tol = 0.02;  // sweep: pass if final gap ≤ gap_tol·target + budget

    std::vector<MatrixRow> matrices;
    int depth = 2;
    int mesh = 8;
    SplitGrid top{16, 7, 4, 5, 0, true};  // library defaults are too slow for depth 2
    SplitGrid inner{4, 3, 2, 2, 0, false};

    Vec2 kappa{{1, 0}};
    double zeta = 1;
    double r_U = 0.1, r_V = 0.2;
    int tilt_samples = 32;

    int sample_n = 8, sample_m = 3;  // recover: deformation sampling grid

    std::size_t samples = 10000;
    std::vector<std::string> densities;  // validate; empty means the whole catalog

    std::uint64_t seed = 1;
    int threads = 1;
    std::optional<Format> format;  // unset: per-subcommand default
    std::string out;

    json canonical() const;
    std::uint64_t hash() const;
};

inline const std::vector<std::string>& bulk_catalog() {
    static const std::vector<std::string> c{"ORIENT_POWER", "INCOMP_POWER"};
    return c;
}
inline const std::vector<std::string>& surface_catalog() {
    static const std::vector<std::string> c{"SURF_QUAD", "GRIFFITH", "BARENBLATT"};
    return c;
}

namespace detail {

inline std::string join(const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
    return s;
}

inline bool in(const std::vector<std::string>& v, const std::string& x) {
    return std::find(v.begin(), v.end(), x) != v.end();
}

inline double number(const json& j, const std::string& key) {
    if (!j.is_number()) throw InputError(key + ": expected a number");
    return j.get<double>();
}

inline int integer(const json& j, const std::string& key) {
    if (!j.is_number_integer()) throw InputError(key + ": expected an integer");
    return j.get<int>();
}

inline double positive(const json& j, const std::string& key) {
    const double v = number(j, key);
    if (!(v > 0)) throw InputError(key + " must be > 0, got " + j.dump());
    return v;
}

inline int at_least(const json& j, const std::string& key, int lo) {
    const int v = integer(j, key);
    if (v < lo) throw InputError(key + " must be >= " + std::to_string(lo) + ", got " + std::to_string(v));
    return v;
}

template <std::size_t N>
Vec<double, N> vec(const json& j, const std::string& key) {
    return tfm::detail::read_vec<N>(j, key);
}

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace detail

inline json RunConfig::canonical() const {
    json j;
    j["subcommand"] = subcommand;
    j["scene"] = scene ? membrane_to_json(*scene) : json("standard");
    j["bulk"] = {{"name", bulk}, {"p", p}};
    j["surface"] = {{"name", surface}, {"Q", Q.a}, {"cap", cap}};
    j["grid"] = {{"n", grid.n}, {"m", grid.m}, {"order", grid.order}};
    j["surface_order"] = surface_order;
    j["rho"] = rhos;
    j["partition"] = {{"n", part_n}, {"eps", part_eps}, {"theta", part_theta}};
    j["tolerances"] = {{"ode", ode_tol}, {"newton", newton_tol}, {"det", det_tol}, {"gap", gap_tol}};
    json ms = json::array();
    for (const auto& m : matrices) ms.push_back({{"E", m.E.a}, {"z", m.z.v}, {"nu", m.nu.v}});
    j["matrices"] = ms;
    auto grid_json = [](const SplitGrid& g) { return json{g.angles, g.b_dirs, g.radii, g.lambdas}; };
    j["envelope"] = {{"depth", depth}, {"mesh", mesh}, {"top", grid_json(top)}, {"inner", grid_json(inner)}};
    j["tilt"] = {{"kappa", kappa.v}, {"zeta", zeta}, {"r_U", r_U}, {"r_V", r_V}, {"samples", tilt_samples}};
    j["sampling"] = {{"n", sample_n}, {"m", sample_m}};
    j["validate"] = {{"samples", samples}, {"densities", densities}};
    j["seed"] = seed;
    j["format"] = format ? (*format == Format::csv ? "csv" : "text") : "default";
    return j;  // threads and out do not affect the bytes written
}

inline std::uint64_t RunConfig::hash() const { return detail::fnv1a(canonical().dump()); }

/// Parses a config document. Relative scene paths resolve against `base`.
inline RunConfig parse_config(const std::string& text, const std::filesystem::path& base = {}) {
    using namespace detail;
    using tfm::detail::reject_unknown;
    RunConfig c;
    const json j = parse_document(text);
    if (!j.is_object()) throw InputError("config: expected an object");
    reject_unknown(j, {"scene", "bulk", "surface", "grid", "surface_order", "rho", "partition", "tolerances", "matrices",
                       "envelope", "tilt", "sampling", "validate", "seed", "format"},
                   "config");
    try {
        if (j.contains("scene")) {
            const json& s = j["scene"];
            if (s.is_string()) {
                const std::string name = s.get<std::string>();
                if (name != "standard") {
                    const auto path = base / name;
                    c.scene = load_membrane(path.string());
                    c.scene_source = name;
                }
            } else {
                c.scene = membrane_from_json(s);
                c.scene_source = "inline";
            }
        }
        if (j.contains("bulk")) {
            const json& b = j["bulk"];
            if (b.is_string()) {
                c.bulk = b.get<std::string>();
            } else {
                reject_unknown(b, {"name", "p"}, "bulk");
                if (b.contains("name")) c.bulk = b["name"].get<std::string>();
                if (b.contains("p")) c.p = number(b["p"], "bulk.p");
            }
            if (!in(bulk_catalog(), c.bulk))
                throw InputError("bulk: unknown density '" + c.bulk + "'; catalog: " + join(bulk_catalog()));
            if (!(c.p > 1)) throw InputError("bulk.p must be > 1");
        }
        if (j.contains("surface")) {
            const json& s = j["surface"];
            if (s.is_string()) {
                c.surface = s.get<std::string>();
            } else {
                reject_unknown(s, {"name", "Q", "cap"}, "surface");
                if (s.contains("name")) c.surface = s["name"].get<std::string>();
                if (s.contains("Q")) {
                    const auto q = vec<9>(s["Q"], "surface.Q");
                    for (int i = 0; i < 9; ++i) c.Q.a[i] = q[i];
                }
                if (s.contains("cap")) c.cap = positive(s["cap"], "surface.cap");
            }
            if (!in(surface_catalog(), c.surface))
                throw InputError("surface: unknown density '" + c.surface + "'; catalog: " + join(surface_catalog()));
            if (c.surface == "SURF_QUAD") {
                try {
                    surf_quad(c.Q, c.cap);
                } catch (const std::invalid_argument& e) {
                    throw InputError(std::string("surface.Q: ") + e.what());
                }
            }
        }
        if (j.contains("grid")) {
            const json& g = j["grid"];
            reject_unknown(g, {"n", "m", "order"}, "grid");
            if (g.contains("n")) c.grid.n = at_least(g["n"], "grid.n", 2);
            if (g.contains("m")) c.grid.m = at_least(g["m"], "grid.m", 2);
            if (g.contains("order")) c.grid.order = at_least(g["order"], "grid.order", 1);
        }
        if (j.contains("surface_order")) c.surface_order = at_least(j["surface_order"], "surface_order", 1);
        if (j.contains("rho")) {
            if (!j["rho"].is_array() || j["rho"].empty()) throw InputError("rho: expected a nonempty list");
            c.rhos.clear();
            for (const auto& r : j["rho"]) c.rhos.push_back(positive(r, "rho[]"));
            for (std::size_t i = 1; i < c.rhos.size(); ++i)
                if (!(c.rhos[i] < c.rhos[i - 1])) throw InputError("rho: list must be strictly decreasing");
        }
        if (j.contains("partition")) {
            const json& p = j["partition"];
            reject_unknown(p, {"n", "eps", "theta"}, "partition");
            if (p.contains("n")) c.part_n = at_least(p["n"], "partition.n", 1);
            if (p.contains("eps")) c.part_eps = positive(p["eps"], "partition.eps");
            if (p.contains("theta")) c.part_theta = positive(p["theta"], "partition.theta");
            if (!(c.part_theta < 0.5)) throw InputError("partition.theta must be < 0.5");
        }
        if (j.contains("tolerances")) {
            const json& t = j["tolerances"];
            reject_unknown(t, {"ode", "newton", "det", "gap"}, "tolerances");
            if (t.contains("ode")) c.ode_tol = positive(t["ode"], "tolerances.ode");
            if (t.contains("newton")) c.newton_tol = positive(t["newton"], "tolerances.newton");
            if (t.contains("det")) c.det_tol = positive(t["det"], "tolerances.det");
            if (t.contains("gap")) c.gap_tol = positive(t["gap"], "tolerances.gap");
        }
        if (j.contains("matrices")) {
            if (!j["matrices"].is_array()) throw InputError("matrices: expected a list");
            for (const auto& m : j["matrices"]) {
                MatrixRow r;
                if (m.is_array()) {
                    r.E.a = vec<6>(m, "matrices[]").v;
                } else {
                    reject_unknown(m, {"E", "z", "nu"}, "matrices[]");
                    r.E.a = vec<6>(m.at("E"), "matrices[].E").v;
                    if (m.contains("z")) r.z = vec<3>(m["z"], "matrices[].z");
                    if (m.contains("nu")) r.nu = vec<2>(m["nu"], "matrices[].nu");
                }
                if (norm(r.z) == 0.0) throw InputError("matrices[].z must be nonzero");
                if (std::abs(norm(r.nu) - 1) > 1e-12) throw InputError("matrices[].nu must be a unit vector");
                c.matrices.push_back(r);
            }
        }
        if (j.contains("envelope")) {
            const json& e = j["envelope"];
            reject_unknown(e, {"depth", "mesh", "top", "inner"}, "envelope");
            auto split = [&](const char* key, SplitGrid& g) {
                const std::string name = std::string("envelope.") + key;
                const json& a = e[key];
                if (!a.is_array() || a.size() != 4)
                    throw InputError(name + ": expected [angles, b_dirs, radii, lambdas]");
                g.angles = at_least(a[0], name + "[0]", 1);
                g.b_dirs = at_least(a[1], name + "[1]", 1);
                g.radii = at_least(a[2], name + "[2]", 1);
                g.lambdas = at_least(a[3], name + "[3]", 1);
            };
            if (e.contains("top")) split("top", c.top);
            if (e.contains("inner")) split("inner", c.inner);
            if (e.contains("depth")) c.depth = at_least(e["depth"], "envelope.depth", 0);
            if (c.depth > RankOneEnvelope::max_depth)
                throw InputError("envelope.depth must be <= " + std::to_string(RankOneEnvelope::max_depth));
            if (e.contains("mesh")) c.mesh = at_least(e["mesh"], "envelope.mesh", 1);
        }
        if (j.contains("tilt")) {
            const json& t = j["tilt"];
            reject_unknown(t, {"kappa", "zeta", "r_U", "r_V", "samples"}, "tilt");
            if (t.contains("kappa")) c.kappa = vec<2>(t["kappa"], "tilt.kappa");
            if (t.contains("zeta")) c.zeta = number(t["zeta"], "tilt.zeta");
            if (t.contains("r_U")) c.r_U = positive(t["r_U"], "tilt.r_U");
            if (t.contains("r_V")) c.r_V = positive(t["r_V"], "tilt.r_V");
            if (t.contains("samples")) c.tilt_samples = at_least(t["samples"], "tilt.samples", 2);
            if (std::abs(norm(c.kappa) - 1) > 1e-12) throw InputError("tilt.kappa must be a unit vector");
            if (!(c.r_V > c.r_U)) throw InputError("tilt.r_V must exceed tilt.r_U");
        }
        if (j.contains("sampling")) {
            const json& s = j["sampling"];
            reject_unknown(s, {"n", "m"}, "sampling");
            if (s.contains("n")) c.sample_n = at_least(s["n"], "sampling.n", 1);
            if (s.contains("m")) c.sample_m = at_least(s["m"], "sampling.m", 1);
        }
        if (j.contains("validate")) {
            const json& v = j["validate"];
            reject_unknown(v, {"samples", "densities"}, "validate");
            if (v.contains("samples")) c.samples = std::size_t(at_least(v["samples"], "validate.samples", 1));
            if (v.contains("densities"))
                for (const auto& d : v["densities"]) {
                    const std::string name = d.get<std::string>();
                    if (!in(bulk_catalog(), name) && !in(surface_catalog(), name))
                        throw InputError("validate.densities: unknown density '" + name +
                                         "'; catalog: " + join(bulk_catalog()) + ", " + join(surface_catalog()));
                    c.densities.push_back(name);
                }
        }
        if (j.contains("seed")) {
            if (!j["seed"].is_number_unsigned()) throw InputError("seed: expected an unsigned integer");
            c.seed = j["seed"].get<std::uint64_t>();
        }
        if (j.contains("format")) {
            const std::string f = j["format"].get<std::string>();
            if (f == "csv") c.format = Format::csv;
            else if (f == "text") c.format = Format::text;
            else throw InputError("format: expected 'csv' or 'text', got '" + f + "'");
        }
    } catch (const json::exception& e) {
        throw InputError(std::string("config: ") + e.what());
    }
    return c;
}

// ------------------------------------------------------------------ output

inline std::string num(double x) {
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    if (std::isnan(x)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}

inline std::string header(const RunConfig& c) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "# tfm %s %s seed=%" PRIu64 " config=%016" PRIx64 "\n", version,
                  c.subcommand.c_str(), c.seed, c.hash());
    return buf;
}

/// Rows of strings rendered as CSV or as aligned text.
struct Table {
    std::vector<std::string> cols;
    std::vector<std::vector<std::string>> rows;

    std::string render(Format f) const {
        std::ostringstream o;
        if (f == Format::csv) {
            auto line = [&](const std::vector<std::string>& r) {
                for (std::size_t i = 0; i < r.size(); ++i) o << (i ? "," : "") << r[i];
                o << '\n';
            };
            line(cols);
            for (const auto& r : rows) line(r);
            return o.str();
        }
        std::vector<std::size_t> w(cols.size());
        for (std::size_t i = 0; i < cols.size(); ++i) w[i] = cols[i].size();
        for (const auto& r : rows)
            for (std::size_t i = 0; i < r.size(); ++i) w[i] = std::max(w[i], r[i].size());
        auto line = [&](const std::vector<std::string>& r) {
            for (std::size_t i = 0; i < r.size(); ++i) {
                o << (i ? "  " : "") << r[i];
                if (i + 1 < r.size()) o << std::string(w[i] - r[i].size(), ' ');
            }
            o << '\n';
        };
        line(cols);
        for (const auto& r : rows) line(r);
        return o.str();
    }
};

struct Artifact {
    std::string suffix;  // appended to --out; "" is the main table
    std::string content;
};

struct RunResult {
    int status = 0;
    std::vector<Artifact> artifacts;
    std::string message;  // for stderr
};

/// Thrown by run() for failures that should exit with status 1.
struct NumericalFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline BulkDensity make_bulk(const RunConfig& c) {
    return c.bulk == "ORIENT_POWER" ? orient_power(c.p) : incomp_power(c.p);
}

inline SurfaceDensity make_surface(const std::string& name, const RunConfig& c) {
    if (name == "GRIFFITH") return griffith();
    if (name == "BARENBLATT") return barenblatt_counterexample();
    return surf_quad(c.Q, c.cap);
}

inline CrackedMembrane scene_of(const RunConfig& c) { return c.scene ? *c.scene : standard_membrane(); }

inline std::string summary_doc(const RunConfig& c, json body) {
    json j;
    j["version"] = version;
    j["seed"] = c.seed;
    char h[20];
    std::snprintf(h, sizeof h, "%016" PRIx64, c.hash());
    j["config_hash"] = h;
    j["subcommand"] = c.subcommand;
    for (auto it = body.begin(); it != body.end(); ++it) j[it.key()] = it.value();
    return j.dump(2) + "\n";
}

// ------------------------------------------------------------- subcommands

inline RunResult run_reduce(const RunConfig& c) {
    const BulkDensity W = make_bulk(c);
    const SurfaceDensity psi = make_surface(c.surface, c);
    if (c.matrices.empty()) throw InputError("reduce: 'matrices' is empty");
    Table t{{"E11", "E12", "E21", "E22", "E31", "E32", "W0", "xi1", "xi2", "xi3", "z1", "z2", "z3", "nu1", "nu2", "psi0",
             "zeta"},
            {}};
    ReduceBulkOptions ro;
    ro.threads = c.threads;
    for (const auto& m : c.matrices) {
        const auto r = reduce_bulk(W, m.E, ro);
        const auto s = reduce_surface(psi, m.z, m.nu);
        std::vector<std::string> row;
        for (double v : m.E.a) row.push_back(num(v));
        row.push_back(num(r.value.value_or(inf)));
        for (double v : r.xi.v) row.push_back(r.value.is_infinite() ? "nan" : num(v));
        for (double v : m.z.v) row.push_back(num(v));
        for (double v : m.nu.v) row.push_back(num(v));
        row.push_back(num(s.value));
        row.push_back(num(s.zeta));
        t.rows.push_back(row);
    }
    return {0, {{"", header(c) + t.render(c.format.value_or(Format::csv))}}, ""};
}

inline RunResult run_envelope(const RunConfig& c) {
    if (c.matrices.empty()) throw InputError("envelope: 'matrices' is empty");
    const MatrixDensity W0 = reduced_bulk(make_bulk(c));
    Table t{{"E11", "E12", "E21", "E22", "E31", "E32", "W0"}, {}};
    for (int k = 1; k <= c.depth; ++k) t.cols.push_back("R" + std::to_string(k));
    t.cols.push_back("QC");
    SearchSpec spec;
    spec.top = c.top;
    spec.inner = c.inner;
    spec.threads = c.threads;
    RankOneEnvelope env(W0, spec);
    for (const auto& m : c.matrices) {
        const auto chain = env.chain(m.E, c.depth);
        QCOptions qo;
        qo.mesh = c.mesh;
        qo.seed = c.seed;
        qo.laminate_grid = c.top;
        const auto qc = quasiconvex_upper_estimate(W0, m.E, qo);
        std::vector<std::string> row;
        for (double v : m.E.a) row.push_back(num(v));
        for (const auto& n : chain) row.push_back(num(n.value.value_or(inf)));
        row.push_back(num(qc.value.value_or(inf)));
        t.rows.push_back(row);
    }
    return {0, {{"", header(c) + t.render(c.format.value_or(Format::csv))}}, ""};
}

inline RunResult run_maps(const RunConfig& c) {
    Table t{{"rho", "isometry", "tilt_ratio", "normal_ratio", "w1inf", "det_analytic", "det_fd"}, {}};
    std::string note;
    for (double rho : c.rhos) {
        TiltMap m;
        m.kappa = c.kappa;
        m.zeta = c.zeta;
        m.rho = rho;
        m.cutoff = {c.r_U, c.r_V};
        m.x0 = {{0, 0}};
        m.validate();
        const auto d = diagnose_tilt(m, c.tilt_samples);
        std::string da = "nan", df = "nan";
        try {
            TiltMap mi = m;
            mi.incompressible = true;
            const CorrectedTilt f(mi, c.ode_tol);
            const auto r = corrected_det_check(f, c.tilt_samples / 2, 8, 1e-5, c.threads);
            da = num(r.max_analytic);
            df = num(r.max_fd);
        } catch (const std::domain_error& e) {
            note += "rho = " + num(rho) + ": incompressible correction unavailable: " + e.what() + "\n";
        }
        t.rows.push_back({num(rho), num(d.isometry), num(d.tilt_ratio), num(d.normal_ratio), num(d.w1inf), da, df});
    }
    return {0, {{"", header(c) + t.render(c.format.value_or(Format::csv))}}, note};
}

inline RecoveryOptions recovery_options(const RunConfig& c) {
    RecoveryOptions o;
    o.ode_tol = c.ode_tol;
    o.newton_tol = c.newton_tol;
    return o;
}

inline EnergyOptions energy_options(const RunConfig& c) {
    EnergyOptions o;
    o.grid = c.grid;
    o.surface_order = c.surface_order;
    o.threads = c.threads;
    o.det_tol = c.det_tol;
    return o;
}

inline json budget_json(const EpsBudget& b) {
    return {{"discarded", b.discarded}, {"tilt_bulk", b.tilt_bulk}, {"strip", b.strip},
            {"partition", b.partition()}, {"total", b.total()}};
}

inline json breakdown_json(const EnergyBreakdown& e) {
    json j = {{"bulk", e.bulk},
              {"surface", e.surface},
              {"total", e.total},
              {"bulk_identity", e.bulk_identity},
              {"bulk_tilt", e.bulk_tilt},
              {"surface_tilted", e.surface_tilted},
              {"surface_discarded", e.surface_discarded},
              {"surface_strip", e.surface_strip},
              {"surface_area", e.surface_area},
              {"quad_error", e.quad_error},
              {"min_det", e.min_det},
              {"max_norm", e.max_norm}};
    if (!std::isfinite(e.total)) {
        for (const char* k : {"bulk", "total", "bulk_identity", "bulk_tilt"}) j[k] = "inf";
        j["offending"] = e.offending->v;
    }
    return j;
}

inline RunResult run_recover(const RunConfig& c) {
    const CrackedMembrane m = scene_of(c);
    const BulkDensity W = make_bulk(c);
    const SurfaceDensity psi = make_surface(c.surface, c);
    validate_membrane(m, W.mode);
    const JumpPartition part = partition_jump(m, c.part_n, c.part_eps, c.part_theta);
    const LimitEnergy lim = limit_energy(m, W, psi);
    Table t{{"rho", "x1", "x2", "x3", "u1", "u2", "u3", "det", "tilt"}, {}};
    json rows = json::array();
    std::optional<EpsBudget> budget;
    for (double rho : c.rhos) {
        std::optional<RecoveryDeformation> d;
        try {
            d.emplace(assemble_recovery(m, W, psi, rho, part, W.mode, recovery_options(c)));
        } catch (const RecoveryError& e) {
            throw NumericalFailure("rho = " + num(rho) + ": " + e.what());
        }
        if (!budget) budget = eps_budget(*d, W, psi);
        const Rect& D = m.domain;
        for (int i = 0; i < c.sample_n; ++i)
            for (int j = 0; j < c.sample_n; ++j)
                for (int k = 0; k < c.sample_m; ++k) {
                    const Vec3 y{{D.x0 + (i + 0.5) * (D.x1 - D.x0) / c.sample_n,
                                  D.y0 + (j + 0.5) * (D.y1 - D.y0) / c.sample_n, -0.5 + (k + 0.5) / c.sample_m}};
                    const auto s = d->eval(y);
                    t.rows.push_back({num(rho), num(y[0]), num(y[1]), num(y[2]), num(s.value[0]), num(s.value[1]),
                                      num(s.value[2]), num(det3(s.grad)), std::to_string(s.tilt)});
                }
        const EnergyBreakdown e = rescaled_energy(*d, W, psi, energy_options(c));
        json r = breakdown_json(e);
        r["rho"] = rho;
        r["tilts"] = d->tilts().size();
        r["gap"] = std::isfinite(e.total) ? json(std::abs(e.total - lim.total)) : json("inf");
        rows.push_back(r);
        if (!std::isfinite(e.total)) {
            RunResult res{1, {}, ""};
            res.artifacts = {{"", header(c) + t.render(c.format.value_or(Format::csv))},
                             {".summary.json", summary_doc(c, {{"target", lim.total}, {"rows", rows}})}};
            res.message = "rho = " + num(rho) + ": infinite bulk integrand";
            return res;
        }
    }
    json body = {{"scene", c.scene_source}, {"bulk", W.name}, {"surface", psi.name}, {"target", lim.total},
                 {"budget", budget_json(*budget)}, {"rows", rows}};
    return {0,
            {{"", header(c) + t.render(c.format.value_or(Format::csv))}, {".summary.json", summary_doc(c, body)}},
            ""};
}

inline RunResult run_sweep(const RunConfig& c) {
    const CrackedMembrane m = scene_of(c);
    const BulkDensity W = make_bulk(c);
    const SurfaceDensity psi = make_surface(c.surface, c);
    validate_membrane(m, W.mode);
    const JumpPartition part = partition_jump(m, c.part_n, c.part_eps, c.part_theta);
    SweepOptions so;
    so.energy = energy_options(c);
    so.recovery = recovery_options(c);
    const SweepReport rep = convergence_sweep(m, W, psi, c.rhos, part, so);

    Table t{{"rho", "energy", "target", "gap", "bulk", "surface", "bulk_tilt", "surface_tilted", "surface_discarded",
             "surface_strip", "quad_error", "status"},
            {}};
    json rows = json::array();
    std::string msg;
    for (const auto& r : rep.rows) {
        const auto& p = r.parts;
        t.rows.push_back({num(r.rho), num(r.energy), num(r.target), num(r.gap), num(p.bulk), num(p.surface),
                          num(p.bulk_tilt), num(p.surface_tilted), num(p.surface_discarded), num(p.surface_strip),
                          num(p.quad_error), r.ok ? "ok" : "failed"});
        json jr = r.ok ? breakdown_json(p) : json::object();
        jr["rho"] = r.rho;
        jr["ok"] = r.ok;
        if (r.ok) jr["gap"] = r.gap;
        if (!r.ok) {
            jr["error"] = r.error;
            msg += "rho = " + num(r.rho) + ": " + r.error + "\n";
        }
        rows.push_back(jr);
    }
    const double target = rep.limit.total, gap = rep.final_gap();
    const double allowed = c.gap_tol * target + rep.budget.total();
    json body = {{"scene", c.scene_source},
                 {"bulk", W.name},
                 {"surface", psi.name},
                 {"target", target},
                 {"g0_estimate", rep.limit.g0_estimate},
                 {"budget", budget_json(rep.budget)},
                 {"rows", rows},
                 {"all_ok", rep.all_ok()},
                 {"monotone", rep.monotone ? json(*rep.monotone) : json(nullptr)},
                 {"lower_bound_ok", rep.lower_bound_ok},
                 {"final_gap", std::isfinite(gap) ? json(gap) : json("inf")},
                 {"gap_tolerance", c.gap_tol},
                 {"allowed_gap", allowed},
                 {"gap_ok", std::isfinite(gap) && gap <= allowed}};

    std::ostringstream text;
    text << header(c);
    text << "# target " << num(target) << "  budget discarded " << num(rep.budget.discarded) << "  tilt_bulk "
         << num(rep.budget.tilt_bulk) << "  strip " << num(rep.budget.strip) << "\n";
    text << t.render(c.format.value_or(Format::text));
    return {rep.all_ok() ? 0 : 1, {{"", text.str()}, {".summary.json", summary_doc(c, body)}}, msg};
}

inline RunResult run_validate(const RunConfig& c) {
    std::vector<std::string> names = c.densities;
    if (names.empty()) {
        names = bulk_catalog();
        for (const auto& s : surface_catalog()) names.push_back(s);
    }
    Table t{{"density", "check", "passed", "tested", "failures", "worst", "witness"}, {}};
    for (const auto& n : names) {
        ValidationReport rep;
        if (detail::in(bulk_catalog(), n)) {
            RunConfig cc = c;
            cc.bulk = n;
            rep = validate_bulk(make_bulk(cc), c.samples, c.seed, c.threads);
        } else {
            rep = validate_surface(make_surface(n, c), c.samples, c.seed, false, c.threads);
        }
        for (const auto& h : rep.checks) {
            std::string w = h.witness;
            std::replace(w.begin(), w.end(), ',', ';');
            t.rows.push_back({n, h.name, h.passed ? "PASS" : "FAIL", std::to_string(h.tested),
                              std::to_string(h.failures), num(h.worst), w});
        }
    }
    return {0, {{"", header(c) + t.render(c.format.value_or(Format::csv))}}, ""};
}

/// Dispatches on c.subcommand. Config problems surface as InputError
/// (status 2); failed numerics as status 1.
inline RunResult run(const RunConfig& c) {
    try {
        if (c.subcommand == "reduce") return run_reduce(c);
        if (c.subcommand == "envelope") return run_envelope(c);
        if (c.subcommand == "maps") return run_maps(c);
        if (c.subcommand == "recover") return run_recover(c);
        if (c.subcommand == "sweep") return run_sweep(c);
        if (c.subcommand == "validate") return run_validate(c);
    } catch (const InputError&) {
        throw;
    } catch (const MembraneError& e) {
        throw InputError(std::string("scene: ") + e.what());
    } catch (const NumericalFailure& e) {
        return {1, {}, e.what()};
    } catch (const RecoveryError& e) {
        return {1, {}, e.what()};
    } catch (const std::domain_error& e) {
        return {1, {}, e.what()};
    }
    throw InputError("unknown subcommand '" + c.subcommand + "'");
}

/// temp file in the same directory, then rename.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream o(tmp, std::ios::binary | std::ios::trunc);
        if (!o) throw std::runtime_error("cannot write " + tmp.string());
        o << content;
        o.flush();
        if (!o) throw std::runtime_error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace tfm::cli
