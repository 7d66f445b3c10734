#pragma once

// Scenario and result files (JSON) and run traces (CSV / JSON).

#include "scenario.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace cablenet {

using Json = nlohmann::ordered_json;

/// File could not be read or written.
class IoError : public CableNetError {
public:
    using CableNetError::CableNetError;
};

/// A document does not follow the expected layout; the message names the key path.
class SchemaError : public InvalidNetError {
public:
    using InvalidNetError::InvalidNetError;
};

namespace detail {

inline const Json& require(const Json& obj, const std::string& key, const std::string& path) {
    auto it = obj.find(key);
    if (it == obj.end()) throw SchemaError(path + key + ": missing required key");
    return *it;
}

inline void reject_unknown(const Json& obj, const std::set<std::string>& known, const std::string& path) {
    if (!obj.is_object()) throw SchemaError((path.empty() ? "document" : path) + ": expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!known.count(it.key())) throw SchemaError(path + it.key() + ": unknown key");
}

inline double as_number(const Json& v, const std::string& where) {
    if (!v.is_number()) throw SchemaError(where + ": expected a number");
    return v.get<double>();
}

inline long long as_integer(const Json& v, const std::string& where) {
    if (!v.is_number_integer()) throw SchemaError(where + ": expected an integer");
    return v.get<long long>();
}

inline Eigen::VectorXd as_vector(const Json& v, const std::string& where) {
    if (!v.is_array()) throw SchemaError(where + ": expected an array of numbers");
    Eigen::VectorXd out(static_cast<Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i)
        out[static_cast<Index>(i)] = as_number(v[i], where + "[" + std::to_string(i) + "]");
    return out;
}

inline Vec3 as_point(const Json& v, const std::string& where) {
    if (!v.is_array() || v.size() != 3) throw SchemaError(where + ": expected [x, y, z]");
    return {as_number(v[0], where + "[0]"), as_number(v[1], where + "[1]"), as_number(v[2], where + "[2]")};
}

/// [[x,y,z], ...] -> stacked coordinates
inline Coords as_points(const Json& v, const std::string& where) {
    if (!v.is_array()) throw SchemaError(where + ": expected an array of [x, y, z]");
    Coords out(3 * static_cast<Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i)
        out.segment<3>(3 * static_cast<Index>(i)) = as_point(v[i], where + "[" + std::to_string(i) + "]");
    return out;
}

inline Json to_json(const Eigen::VectorXd& v) {
    Json a = Json::array();
    for (Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

inline Json points_to_json(const Coords& r) {
    Json a = Json::array();
    for (Index s = 0; s < r.size() / 3; ++s) a.push_back(Json::array({r[3 * s], r[3 * s + 1], r[3 * s + 2]}));
    return a;
}

inline bool same(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return a.size() == b.size() && (a.array() == b.array()).all();
}

inline bool same(const std::optional<Eigen::VectorXd>& a, const std::optional<Eigen::VectorXd>& b) {
    if (a.has_value() != b.has_value()) return false;
    return !a || same(*a, *b);
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path + ": cannot open for reading");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path + ": cannot open for writing");
    out << text;
    if (!out) throw IoError(path + ": write failed");
}

inline Json parse_json_text(const std::string& text, const std::string& source) {
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw SchemaError(source + ": malformed JSON (" + e.what() + ")");
    }
}

} // namespace detail

inline bool same_scenario(const Scenario& a, const Scenario& b) {
    using detail::same;
    const auto& p = a.problem;
    const auto& q = b.problem;
    const auto& s = a.sparse;
    const auto& t = b.sparse;
    return a.net == b.net && same(p.r_des, q.r_des) && same(p.q, q.q) && p.c_conv == q.c_conv &&
           p.max_outer == q.max_outer && p.wolfe_c1 == q.wolfe_c1 && p.wolfe_c2 == q.wolfe_c2 &&
           p.max_trials == q.max_trials && same(a.u0, b.u0) && same(a.u_true, b.u_true) && same(a.r_ini, b.r_ini) &&
           a.noise_sigma == b.noise_sigma && a.seed == b.seed && s.gamma == t.gamma && s.tau == t.tau &&
           s.epsilon == t.epsilon && s.c_w == t.c_w && s.max_reweights == t.max_reweights &&
           s.zero_threshold == t.zero_threshold && s.max_inner_iters == t.max_inner_iters &&
           a.equilibrium.tol_force == b.equilibrium.tol_force && a.equilibrium.max_iters == b.equilibrium.max_iters;
}

/// Builds a validated Scenario from its JSON form. Errors name the key path,
/// e.g. "edges[3].ea: expected a number" or "edge 12: l0 must be > 0".
inline Scenario scenario_from_json(const Json& doc) {
    using namespace detail;
    reject_unknown(doc,
                   {"nodes_free", "boundary_coords", "edges", "loads_z", "r_des", "u0", "q_r", "control", "sparse",
                    "equilibrium", "seed", "u_true", "r_ini", "noise_sigma"},
                   "");
    Scenario sc;

    const long long nf = as_integer(require(doc, "nodes_free", ""), "nodes_free");
    if (nf < 1) throw SchemaError("nodes_free: must be >= 1");

    std::vector<Vec3> boundary;
    const Json& bc = require(doc, "boundary_coords", "");
    if (!bc.is_array()) throw SchemaError("boundary_coords: expected an array of [x, y, z]");
    for (std::size_t k = 0; k < bc.size(); ++k)
        boundary.push_back(as_point(bc[k], "boundary_coords[" + std::to_string(k) + "]"));

    std::vector<Edge> edges;
    const Json& ej = require(doc, "edges", "");
    if (!ej.is_array()) throw SchemaError("edges: expected an array");
    for (std::size_t i = 0; i < ej.size(); ++i) {
        const std::string path = "edges[" + std::to_string(i) + "].";
        reject_unknown(ej[i], {"s", "t", "kind", "ea", "l0"}, path);
        Edge e;
        e.s = static_cast<Index>(as_integer(require(ej[i], "s", path), path + "s"));
        e.t = static_cast<Index>(as_integer(require(ej[i], "t", path), path + "t"));
        const Json& kind = require(ej[i], "kind", path);
        if (kind == "free")
            e.kind = EdgeKind::Free;
        else if (kind == "boundary")
            e.kind = EdgeKind::Boundary;
        else
            throw SchemaError(path + "kind: expected \"free\" or \"boundary\"");
        e.ea = as_number(require(ej[i], "ea", path), path + "ea");
        e.l0 = as_number(require(ej[i], "l0", path), path + "l0");
        edges.push_back(e);
    }

    Eigen::VectorXd loads = Eigen::VectorXd::Zero(nf);
    if (doc.contains("loads_z")) {
        loads = as_vector(doc["loads_z"], "loads_z");
        if (loads.size() != nf)
            throw SchemaError("loads_z: expected " + std::to_string(nf) + " entries, got " +
                              std::to_string(loads.size()));
    }
    sc.net = CableNet(static_cast<Index>(nf), std::move(boundary), std::move(edges), loads);

    const Index dim = sc.net.dim(), mb = sc.net.n_inputs();
    auto points_of_size = [&](const char* key) {
        Coords r = as_points(doc[key], key);
        if (r.size() != dim)
            throw SchemaError(std::string(key) + ": expected " + std::to_string(nf) + " points, got " +
                              std::to_string(r.size() / 3));
        return r;
    };
    auto inputs_of_size = [&](const char* key) {
        Inputs u = as_vector(doc[key], key);
        if (u.size() != mb)
            throw SchemaError(std::string(key) + ": expected " + std::to_string(mb) + " entries (one per boundary edge), got " +
                              std::to_string(u.size()));
        return u;
    };

    require(doc, "r_des", "");
    sc.problem.r_des = points_of_size("r_des");
    sc.u0 = doc.contains("u0") ? inputs_of_size("u0") : Inputs::Zero(mb);
    if (doc.contains("u_true")) sc.u_true = inputs_of_size("u_true");
    if (doc.contains("r_ini")) sc.r_ini = points_of_size("r_ini");

    sc.problem.q = Eigen::VectorXd::Ones(dim);
    if (doc.contains("q_r")) {
        const Json& q = doc["q_r"];
        if (q.is_number()) {
            sc.problem.q.setConstant(q.get<double>());
        } else {
            sc.problem.q = as_vector(q, "q_r");
            if (sc.problem.q.size() != dim)
                throw SchemaError("q_r: expected a scalar or " + std::to_string(dim) + " entries, got " +
                                  std::to_string(sc.problem.q.size()));
        }
        for (Index i = 0; i < sc.problem.q.size(); ++i)
            if (!(sc.problem.q[i] >= 0.0)) throw SchemaError("q_r[" + std::to_string(i) + "]: must be >= 0");
    }

    if (doc.contains("control")) {
        const Json& c = doc["control"];
        reject_unknown(c, {"c_conv", "max_outer", "wolfe_c1", "wolfe_c2", "max_trials"}, "control.");
        if (c.contains("c_conv")) sc.problem.c_conv = as_number(c["c_conv"], "control.c_conv");
        if (c.contains("max_outer")) sc.problem.max_outer = static_cast<int>(as_integer(c["max_outer"], "control.max_outer"));
        if (c.contains("wolfe_c1")) sc.problem.wolfe_c1 = as_number(c["wolfe_c1"], "control.wolfe_c1");
        if (c.contains("wolfe_c2")) sc.problem.wolfe_c2 = as_number(c["wolfe_c2"], "control.wolfe_c2");
        if (c.contains("max_trials")) sc.problem.max_trials = static_cast<int>(as_integer(c["max_trials"], "control.max_trials"));
    }
    if (doc.contains("sparse")) {
        const Json& s = doc["sparse"];
        reject_unknown(s, {"gamma", "tau", "epsilon", "c_w", "zero_threshold", "max_reweights", "max_inner_iters"},
                       "sparse.");
        if (s.contains("gamma")) sc.sparse.gamma = as_number(s["gamma"], "sparse.gamma");
        if (s.contains("tau")) sc.sparse.tau = as_number(s["tau"], "sparse.tau");
        if (s.contains("epsilon")) sc.sparse.epsilon = as_number(s["epsilon"], "sparse.epsilon");
        if (s.contains("c_w")) sc.sparse.c_w = as_number(s["c_w"], "sparse.c_w");
        if (s.contains("zero_threshold")) sc.sparse.zero_threshold = as_number(s["zero_threshold"], "sparse.zero_threshold");
        if (s.contains("max_reweights"))
            sc.sparse.max_reweights = static_cast<int>(as_integer(s["max_reweights"], "sparse.max_reweights"));
        if (s.contains("max_inner_iters"))
            sc.sparse.max_inner_iters = static_cast<int>(as_integer(s["max_inner_iters"], "sparse.max_inner_iters"));
    }
    if (doc.contains("equilibrium")) {
        const Json& e = doc["equilibrium"];
        reject_unknown(e, {"tol_force", "max_iters"}, "equilibrium.");
        if (e.contains("tol_force")) sc.equilibrium.tol_force = as_number(e["tol_force"], "equilibrium.tol_force");
        if (e.contains("max_iters"))
            sc.equilibrium.max_iters = static_cast<int>(as_integer(e["max_iters"], "equilibrium.max_iters"));
    }
    if (doc.contains("seed")) {
        const long long seed = as_integer(doc["seed"], "seed");
        if (seed < 0) throw SchemaError("seed: must be >= 0");
        sc.seed = static_cast<std::uint64_t>(seed);
    }
    if (doc.contains("noise_sigma")) {
        sc.noise_sigma = as_number(doc["noise_sigma"], "noise_sigma");
        if (!(sc.noise_sigma >= 0.0)) throw SchemaError("noise_sigma: must be >= 0");
    }

    sc.problem.validate(sc.net);
    sc.sparse.validate();
    sc.equilibrium.validate();
    return sc;
}

inline Json scenario_to_json(const Scenario& sc) {
    using detail::points_to_json;
    using detail::to_json;
    Json doc;
    doc["nodes_free"] = sc.net.n_free();
    Json bc = Json::array();
    for (const auto& p : sc.net.boundary_coords()) bc.push_back(Json::array({p.x(), p.y(), p.z()}));
    doc["boundary_coords"] = bc;
    Json edges = Json::array();
    for (const auto& e : sc.net.edges())
        edges.push_back(Json{{"s", e.s},
                             {"t", e.t},
                             {"kind", e.kind == EdgeKind::Free ? "free" : "boundary"},
                             {"ea", e.ea},
                             {"l0", e.l0}});
    doc["edges"] = edges;
    doc["loads_z"] = to_json(sc.net.loads_z());
    doc["r_des"] = points_to_json(sc.problem.r_des);
    doc["u0"] = to_json(sc.u0);
    doc["q_r"] = to_json(sc.problem.q);
    doc["control"] = Json{{"c_conv", sc.problem.c_conv},
                          {"max_outer", sc.problem.max_outer},
                          {"wolfe_c1", sc.problem.wolfe_c1},
                          {"wolfe_c2", sc.problem.wolfe_c2},
                          {"max_trials", sc.problem.max_trials}};
    doc["sparse"] = Json{{"gamma", sc.sparse.gamma},
                         {"tau", sc.sparse.tau},
                         {"epsilon", sc.sparse.epsilon},
                         {"c_w", sc.sparse.c_w},
                         {"zero_threshold", sc.sparse.zero_threshold},
                         {"max_reweights", sc.sparse.max_reweights},
                         {"max_inner_iters", sc.sparse.max_inner_iters}};
    doc["equilibrium"] = Json{{"tol_force", sc.equilibrium.tol_force}, {"max_iters", sc.equilibrium.max_iters}};
    doc["seed"] = sc.seed;
    if (sc.u_true) doc["u_true"] = to_json(*sc.u_true);
    if (sc.r_ini) doc["r_ini"] = points_to_json(*sc.r_ini);
    if (sc.noise_sigma != 0.0) doc["noise_sigma"] = sc.noise_sigma;
    return doc;
}

inline Scenario parse_scenario_text(const std::string& text, const std::string& source = "scenario") {
    return scenario_from_json(detail::parse_json_text(text, source));
}

inline Scenario parse_scenario(const std::string& path) {
    return parse_scenario_text(detail::read_file(path), path);
}

inline std::string scenario_text(const Scenario& sc) { return scenario_to_json(sc).dump(2) + "\n"; }

inline void write_scenario(const Scenario& sc, const std::string& path) {
    detail::write_file(path, scenario_text(sc));
}

/// Outcome of a CLI run. A non-converged run still carries its last feasible
/// iterate, flagged with converged = false.
struct RunResult {
    std::string mode;  // "solve", "control" or "sparse-control"
    bool converged = true;
    std::string message;
    Inputs u;
    Coords r;
    double cost = 0.0;
    double residual_norm = 0.0;
    double energy = 0.0;
    int iterations = 0;
    double kkt_measure = 0.0;
    std::optional<double> gamma;
    std::optional<Index> cardinality;
    std::vector<Index> slack_edges;
    std::vector<std::string> warnings;

    friend bool operator==(const RunResult& a, const RunResult& b) {
        return a.mode == b.mode && a.converged == b.converged && a.message == b.message && detail::same(a.u, b.u) &&
               detail::same(a.r, b.r) && a.cost == b.cost && a.residual_norm == b.residual_norm &&
               a.energy == b.energy && a.iterations == b.iterations && a.kkt_measure == b.kkt_measure &&
               a.gamma == b.gamma && a.cardinality == b.cardinality && a.slack_edges == b.slack_edges &&
               a.warnings == b.warnings;
    }
};

inline Json result_to_json(const RunResult& res) {
    Json doc;
    doc["mode"] = res.mode;
    doc["converged"] = res.converged;
    doc["message"] = res.message;
    doc["u"] = detail::to_json(res.u);
    doc["r"] = detail::points_to_json(res.r);
    doc["cost"] = res.cost;
    doc["residual_norm"] = res.residual_norm;
    doc["energy"] = res.energy;
    doc["iterations"] = res.iterations;
    doc["kkt_measure"] = res.kkt_measure;
    if (res.gamma) doc["gamma"] = *res.gamma;
    if (res.cardinality) doc["cardinality"] = *res.cardinality;
    doc["slack_edges"] = res.slack_edges;
    doc["warnings"] = res.warnings;
    return doc;
}

inline RunResult result_from_json(const Json& doc) {
    using namespace detail;
    reject_unknown(doc,
                   {"mode", "converged", "message", "u", "r", "cost", "residual_norm", "energy", "iterations",
                    "kkt_measure", "gamma", "cardinality", "slack_edges", "warnings"},
                   "");
    RunResult res;
    auto str = [&](const char* key) {
        const Json& v = require(doc, key, "");
        if (!v.is_string()) throw SchemaError(std::string(key) + ": expected a string");
        return v.get<std::string>();
    };
    res.mode = str("mode");
    const Json& conv = require(doc, "converged", "");
    if (!conv.is_boolean()) throw SchemaError("converged: expected true or false");
    res.converged = conv.get<bool>();
    res.message = doc.contains("message") ? str("message") : "";
    res.u = as_vector(require(doc, "u", ""), "u");
    res.r = as_points(require(doc, "r", ""), "r");
    res.cost = as_number(require(doc, "cost", ""), "cost");
    res.residual_norm = as_number(require(doc, "residual_norm", ""), "residual_norm");
    if (doc.contains("energy")) res.energy = as_number(doc["energy"], "energy");
    res.iterations = static_cast<int>(as_integer(require(doc, "iterations", ""), "iterations"));
    if (doc.contains("kkt_measure")) res.kkt_measure = as_number(doc["kkt_measure"], "kkt_measure");
    if (doc.contains("gamma")) res.gamma = as_number(doc["gamma"], "gamma");
    if (doc.contains("cardinality")) res.cardinality = static_cast<Index>(as_integer(doc["cardinality"], "cardinality"));
    if (doc.contains("slack_edges")) {
        const Json& s = doc["slack_edges"];
        if (!s.is_array()) throw SchemaError("slack_edges: expected an array");
        for (std::size_t i = 0; i < s.size(); ++i)
            res.slack_edges.push_back(static_cast<Index>(as_integer(s[i], "slack_edges[" + std::to_string(i) + "]")));
    }
    if (doc.contains("warnings")) {
        const Json& w = doc["warnings"];
        if (!w.is_array()) throw SchemaError("warnings: expected an array");
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (!w[i].is_string()) throw SchemaError("warnings[" + std::to_string(i) + "]: expected a string");
            res.warnings.push_back(w[i].get<std::string>());
        }
    }
    return res;
}

inline std::string result_text(const RunResult& res) { return result_to_json(res).dump(2) + "\n"; }

inline RunResult parse_result(const std::string& path) {
    return result_from_json(detail::parse_json_text(detail::read_file(path), path));
}

inline void write_result(const RunResult& res, const std::string& path) {
    detail::write_file(path, result_text(res));
}

inline const char* trace_csv_header() { return "iter,cost,alpha,delta_u_norm,residual_norm,kkt_measure"; }

/// One row per iteration, numbers with 17 significant digits.
inline std::string trace_csv(const RunTrace& trace) {
    std::string out = std::string(trace_csv_header()) + "\n";
    char buf[256];
    for (const auto& e : trace.entries) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", e.iter, e.cost, e.alpha, e.delta_u_norm,
                      e.residual_norm, e.kkt_measure);
        out += buf;
    }
    return out;
}

inline Json trace_to_json(const RunTrace& trace) {
    Json rows = Json::array();
    for (const auto& e : trace.entries)
        rows.push_back(Json{{"iter", e.iter},
                            {"cost", e.cost},
                            {"alpha", e.alpha},
                            {"delta_u_norm", e.delta_u_norm},
                            {"residual_norm", e.residual_norm},
                            {"kkt_measure", e.kkt_measure},
                            {"merit", e.merit},
                            {"u", detail::to_json(e.u)}});
    return Json{{"entries", rows}, {"warnings", trace.warnings}};
}

/// Reads back the columns written by trace_csv.
inline RunTrace parse_trace_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != trace_csv_header())
        throw SchemaError("trace: header must be " + std::string(trace_csv_header()));
    RunTrace trace;
    int row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        TraceEntry e;
        if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf,%lf", &e.iter, &e.cost, &e.alpha, &e.delta_u_norm,
                        &e.residual_norm, &e.kkt_measure) != 6)
            throw SchemaError("trace row " + std::to_string(row) + ": expected 6 numeric columns");
        trace.entries.push_back(e);
    }
    return trace;
}

} // namespace cablenet
