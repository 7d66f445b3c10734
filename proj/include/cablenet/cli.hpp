#pragma once

// Command-line front end. Exit codes: 0 success, 2 usage, 3 invalid input or
// IO failure, 4 non-convergence (the last feasible iterate is still written).

#include "io.hpp"
#include "plots.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

namespace cablenet::cli {

enum Exit : int { ok = 0, usage = 2, invalid = 3, no_convergence = 4 };

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<double> tol_force;
    std::optional<int> max_iter;
    bool quiet = false;
};

struct RunPaths {
    std::string out;        // result JSON
    std::string trace;      // trace CSV
    std::string trace_json; // all traces as JSON
};

namespace detail {

inline void apply(Scenario& sc, const Overrides& o, const std::string& mode) {
    if (o.seed) sc.seed = *o.seed;
    if (o.tol_force) {
        sc.equilibrium.tol_force = *o.tol_force;
        sc.equilibrium.validate();
    }
    if (o.max_iter) {
        if (mode == "solve")
            sc.equilibrium.max_iters = *o.max_iter;
        else
            sc.problem.max_outer = *o.max_iter;
        sc.equilibrium.validate();
        sc.problem.validate(sc.net);
    }
}

inline RunResult from_iterate(const std::string& mode, const CableNet& net, const ControlIterate& it, int iterations,
                              double kkt, const RunTrace& trace) {
    RunResult res;
    res.mode = mode;
    res.u = it.u;
    res.r = it.r;
    res.cost = it.cost;
    res.residual_norm = it.residual_norm;
    res.energy = total_energy(net, it.r, it.u);
    res.iterations = iterations;
    res.kkt_measure = kkt;
    res.slack_edges = slack_edges(net, it.r, it.u);
    res.warnings = trace.warnings;
    return res;
}

inline void write_outputs(const RunResult& res, const std::vector<RunTrace>& traces, const RunPaths& paths) {
    if (!paths.out.empty()) write_result(res, paths.out);
    if (!paths.trace.empty() && !traces.empty()) cablenet::detail::write_file(paths.trace, trace_csv(traces.back()));
    if (!paths.trace_json.empty()) {
        Json runs = Json::array();
        for (const auto& t : traces) runs.push_back(trace_to_json(t));
        cablenet::detail::write_file(paths.trace_json, Json{{"runs", runs}}.dump(2) + "\n");
    }
}

inline std::string summary(const RunResult& res) {
    std::ostringstream s;
    s << res.mode << ": " << (res.converged ? "converged" : "NOT converged") << ", iterations " << res.iterations
      << ", cost " << std::setprecision(6) << res.cost << ", residual " << res.residual_norm << " N";
    if (res.mode != "solve") s << ", kkt " << res.kkt_measure;
    if (res.cardinality) s << ", cardinality " << *res.cardinality;
    return s.str();
}

} // namespace detail

/// Runs one scenario in the given mode ("solve", "control", "sparse-control")
/// and writes the requested files. Returns an exit code; library errors are
/// rethrown except non-convergence, which yields a partial result.
inline int run_scenario(Scenario sc, const std::string& mode, const Overrides& ov, std::optional<double> gamma,
                        const RunPaths& paths, std::ostream& log) {
    detail::apply(sc, ov, mode);
    if (gamma) {
        sc.sparse.gamma = *gamma;
        sc.sparse.validate();
    }
    const Coords warm = sc.r_ini ? *sc.r_ini : force_density_guess(sc.net);
    RunResult res;
    std::vector<RunTrace> traces;
    int code = ok;

    if (mode == "solve") {
        EquilibriumResult eq;
        try {
            eq = solve_equilibrium(sc.net, sc.u0, warm, sc.equilibrium);
        } catch (const NonConvergenceError& e) {
            eq = e.best();
            res.converged = false;
            res.message = e.what();
            code = no_convergence;
        }
        res.mode = mode;
        res.u = sc.u0;
        res.r = eq.r;
        res.cost = cost(eq.r, sc.problem);
        res.residual_norm = eq.residual_norm;
        res.energy = eq.energy;
        res.iterations = eq.iterations;
        res.slack_edges = eq.slack_edges;
    } else if (mode == "control") {
        try {
            auto cr = run_control(sc.net, sc.u0, sc.problem, sc.equilibrium, warm);
            res = detail::from_iterate(mode, sc.net, cr.final, cr.iterations, cr.kkt_measure, cr.trace);
            res.converged = cr.converged;
            if (!cr.converged) {
                res.message = "outer iteration cap reached";
                code = no_convergence;
            }
            traces.push_back(cr.trace);
        } catch (const ControlError& e) {
            const auto& p = e.partial();
            res = detail::from_iterate(mode, sc.net, p.final, p.iterations, p.kkt_measure, p.trace);
            res.converged = false;
            res.message = e.what();
            traces.push_back(p.trace);
            code = no_convergence;
        }
    } else if (mode == "sparse-control") {
        res.gamma = sc.sparse.gamma;
        try {
            auto sr = run_sparse_control(sc.net, sc.u0, sc.problem, sc.sparse, sc.equilibrium, warm);
            int iters = 0;
            for (const auto& t : sr.traces) iters += static_cast<int>(t.entries.size()) - 1;
            res = detail::from_iterate(mode, sc.net, sr.final, iters, sr.kkt_measure, sr.traces.back());
            res.gamma = sc.sparse.gamma;
            res.converged = sr.converged;
            if (!sr.converged) {
                res.message = "reweighting cap reached";
                code = no_convergence;
            }
            traces = sr.traces;
        } catch (const ControlError& e) {
            const auto& p = e.partial();
            res = detail::from_iterate(mode, sc.net, p.final, p.iterations, p.kkt_measure, p.trace);
            res.gamma = sc.sparse.gamma;
            res.converged = false;
            res.message = e.what();
            traces.push_back(p.trace);
            code = no_convergence;
        }
        res.cardinality = cardinality(res.u, sc.sparse.zero_threshold);
    } else {
        throw InvalidNetError("unknown mode '" + mode + "'");
    }

    detail::write_outputs(res, traces, paths);
    if (!ov.quiet) log << detail::summary(res) << "\n";
    if (!ov.quiet && !res.converged) log << "  " << res.message << "\n";
    return code;
}

struct GridOptions {
    GridSpec grid;
    int n_short = 4;
    int n_long = 3;
    double dense_amplitude = 0.0; // > 0: dense random inputs instead of the sparse pattern
    double input_scale = 1.0;
    double noise = 0.0;
    double q = 1e6;
};

/// Exact-recovery scenario on a generated grid; optional noise on r_des.
inline Scenario generate_grid_scenario(const GridOptions& o, std::uint64_t seed) {
    const CableNet net = build_grid_net(o.grid);
    const Inputs u_true = o.dense_amplitude > 0.0
                              ? dense_random_inputs(net.n_inputs(), o.dense_amplitude, seed)
                              : patterned_sparse_inputs(net.n_inputs(), o.n_short, o.n_long, o.input_scale, seed);
    Scenario sc = make_exact_recovery_scenario(net, u_true, seed, {}, o.q);
    if (o.noise > 0.0) {
        sc.noise_sigma = o.noise;
        sc.problem.r_des = add_measurement_noise(sc.problem.r_des, o.noise, seed + 1);
    }
    return sc;
}

struct ReportOptions {
    std::string result, scenario, plot, hist, bars, heatmap;
    double scale = 5.0;
    double bin_width = 0.0;
    bool json = false;
};

inline int report(const ReportOptions& o, std::ostream& out) {
    const Scenario sc = parse_scenario(o.scenario);
    const RunResult res = parse_result(o.result);
    if (res.r.size() != sc.net.dim() || res.u.size() != sc.net.n_inputs())
        throw DimensionError("result does not match the scenario dimensions");
    const Coords r_ini = sc.r_ini ? *sc.r_ini : solve_equilibrium(sc.net, sc.u0, sc.equilibrium).r;
    const Metrics before = error_metrics(r_ini, sc.problem, sc.net.n_nodes());
    const Metrics after = compute_metrics(res.r, r_ini, sc.problem, sc.net.n_nodes());

    if (!o.plot.empty()) cablenet::detail::write_file(o.plot, overlay_svg(sc.net, r_ini, sc.problem.r_des, res.r, o.scale));
    if (!o.hist.empty())
        cablenet::detail::write_file(o.hist, error_histograms_svg(before.per_node_err, after.per_node_err, o.bin_width));
    if (!o.bars.empty()) cablenet::detail::write_file(o.bars, input_bars_svg(res.u, sc.sparse.zero_threshold));
    if (!o.heatmap.empty())
        cablenet::detail::write_file(o.heatmap, error_heatmap_svg(sc.net, sc.problem.r_des, after.per_node_err));

    const double max_before = before.per_node_err.size() ? before.per_node_err.maxCoeff() : 0.0;
    const double max_after = after.per_node_err.size() ? after.per_node_err.maxCoeff() : 0.0;
    if (o.json) {
        Json doc{{"mode", res.mode},
                 {"converged", res.converged},
                 {"weighted_err", {{"initial", before.weighted_err}, {"controlled", after.weighted_err}, {"reduction_pct", after.reduction_pct}}},
                 {"l2_err", {{"initial", before.l2_err}, {"controlled", after.l2_err}, {"reduction_pct", after.l2_reduction_pct}}},
                 {"rms", {{"initial", before.rms}, {"controlled", after.rms}, {"reduction_pct", after.rms_reduction_pct}}},
                 {"max_node_err", {{"initial", max_before}, {"controlled", max_after}}},
                 {"cardinality", cardinality(res.u, sc.sparse.zero_threshold)},
                 {"per_node_err", cablenet::detail::to_json(after.per_node_err)}};
        out << doc.dump(2) << "\n";
        return ok;
    }
    auto row = [&](const std::string& name, double a, double b, std::optional<double> pct) {
        out << std::left << std::setw(18) << name << std::right << std::setw(16) << std::setprecision(6) << a
            << std::setw(16) << b;
        if (pct) out << std::setw(14) << std::fixed << std::setprecision(2) << *pct << std::defaultfloat;
        out << "\n";
    };
    out << std::left << std::setw(18) << "metric" << std::right << std::setw(16) << "initial" << std::setw(16)
        << "controlled" << std::setw(14) << "reduction_%" << "\n";
    row("weighted_err", before.weighted_err, after.weighted_err, after.reduction_pct);
    row("l2_err [m^2]", before.l2_err, after.l2_err, after.l2_reduction_pct);
    row("rms [mm]", 1e3 * before.rms, 1e3 * after.rms, after.rms_reduction_pct);
    row("max_node [mm]", 1e3 * max_before, 1e3 * max_after, std::nullopt);
    out << "cardinality " << cardinality(res.u, sc.sparse.zero_threshold) << " of " << res.u.size()
        << " inputs, converged " << (res.converged ? "yes" : "no") << "\n";
    return ok;
}

struct BatchOptions {
    std::string dir, out_dir, mode = "control";
    int jobs = 1;
};

/// Runs every *.json scenario in a directory, `jobs` at a time. Outputs go to
/// <out_dir>/<stem>.result.json and <stem>.trace.csv; the log lists scenarios
/// in name order. Returns the largest per-scenario exit code.
inline int batch(const BatchOptions& o, const Overrides& ov, std::ostream& log);

inline int classify(const std::exception& e) {
    if (dynamic_cast<const NonConvergenceError*>(&e) || dynamic_cast<const ControlError*>(&e) ||
        dynamic_cast<const LineSearchError*>(&e) || dynamic_cast<const SubproblemNonConvergence*>(&e) ||
        dynamic_cast<const EquilibriumDegeneracyError*>(&e) || dynamic_cast<const RankDeficiencyError*>(&e))
        return no_convergence;
    return invalid;
}

inline int batch(const BatchOptions& o, const Overrides& ov, std::ostream& log) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(o.dir)) throw IoError(o.dir + ": not a directory");
    std::error_code ec;
    fs::create_directories(o.out_dir, ec);
    if (ec) throw IoError(o.out_dir + ": cannot create directory");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(o.dir))
        if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    std::vector<int> codes(files.size(), ok);
    std::vector<std::string> logs(files.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next++) < files.size();) {
            std::ostringstream s;
            const std::string stem = (fs::path(o.out_dir) / files[i].stem()).string();
            try {
                codes[i] = run_scenario(parse_scenario(files[i].string()), o.mode, ov, std::nullopt,
                                        {stem + ".result.json", stem + ".trace.csv", ""}, s);
            } catch (const std::exception& e) {
                codes[i] = classify(e);
                s << "error: " << e.what() << "\n";
            }
            logs[i] = files[i].filename().string() + ": " + s.str();
        }
    };
    const int jobs = std::max(1, std::min<int>(o.jobs, static_cast<int>(files.size())));
    std::vector<std::thread> pool;
    for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    int worst = ok;
    for (std::size_t i = 0; i < files.size(); ++i) {
        if (!ov.quiet) log << logs[i] << (logs[i].empty() || logs[i].back() == '\n' ? "" : "\n");
        worst = std::max(worst, codes[i]);
    }
    return worst;
}

inline int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Cable-net equilibrium and form control"};
    app.fallthrough();
    app.require_subcommand(1);

    Overrides ov;
    std::uint64_t seed = 0;
    double tol_force = 0.0;
    int max_iter = 0;
    auto* seed_opt = app.add_option("--seed", seed, "Random seed (overrides the scenario seed)");
    auto* tol_opt = app.add_option("--tol-force", tol_force, "Equilibrium residual tolerance [N]")->check(CLI::PositiveNumber);
    auto* iter_opt = app.add_option("--max-iter", max_iter, "Iteration cap (equilibrium for solve, outer otherwise)")
                         ->check(CLI::PositiveNumber);
    app.add_flag("--quiet", ov.quiet, "Suppress progress output");

    std::string scenario;
    RunPaths paths;
    double gamma = 0.0;

    auto* solve = app.add_subcommand("solve", "Static equilibrium at u0");
    solve->add_option("--scenario", scenario, "Scenario JSON")->required();
    solve->add_option("--out", paths.out, "Result JSON");

    auto* control = app.add_subcommand("control", "Fully actuated form control");
    control->add_option("--scenario", scenario, "Scenario JSON")->required();
    control->add_option("--trace", paths.trace, "Trace CSV");
    control->add_option("--trace-json", paths.trace_json, "Trace JSON");
    control->add_option("--out", paths.out, "Result JSON");

    auto* sparse = app.add_subcommand("sparse-control", "Sparse form control (reweighted l1)");
    sparse->add_option("--scenario", scenario, "Scenario JSON")->required();
    auto* gamma_opt = sparse->add_option("--gamma", gamma, "l1 weight (overrides the scenario)")->check(CLI::NonNegativeNumber);
    sparse->add_option("--trace", paths.trace, "Trace CSV of the final reweighting pass");
    sparse->add_option("--trace-json", paths.trace_json, "Traces of all passes as JSON");
    sparse->add_option("--out", paths.out, "Result JSON");

    GridOptions grid;
    std::string grid_out;
    auto* gen = app.add_subcommand("gen-grid", "Generate an exact-recovery grid scenario");
    gen->add_option("--nx", grid.grid.nx, "Free nodes along x")->required();
    gen->add_option("--ny", grid.grid.ny, "Free nodes along y")->required();
    gen->add_option("--spacing", grid.grid.spacing, "Grid spacing [m]")->required();
    gen->add_option("--sag", grid.grid.sag, "Saddle height [m]")->required();
    gen->add_option("--out", grid_out, "Scenario JSON")->required();
    gen->add_option("--ea", grid.grid.ea, "Axial stiffness EA [N]")->capture_default_str();
    gen->add_option("--prestrain", grid.grid.prestrain, "Prestrain")->capture_default_str();
    gen->add_option("--short", grid.n_short, "Shortened edges in the true input")->capture_default_str();
    gen->add_option("--long", grid.n_long, "Lengthened edges in the true input")->capture_default_str();
    gen->add_option("--dense", grid.dense_amplitude, "Dense true input with this amplitude [m]");
    gen->add_option("--input-scale", grid.input_scale, "Scale of the sparse input magnitudes")->capture_default_str();
    gen->add_option("--noise", grid.noise, "Measurement noise on r_des [m]")->capture_default_str();
    gen->add_option("--q", grid.q, "Uniform q_r weight")->capture_default_str();

    ReportOptions rep;
    auto* report_cmd = app.add_subcommand("report", "Metrics table and plots for a result");
    report_cmd->add_option("--result", rep.result, "Result JSON")->required();
    report_cmd->add_option("--scenario", rep.scenario, "Scenario JSON")->required();
    report_cmd->add_option("--plot", rep.plot, "Overlay SVG");
    report_cmd->add_option("--hist", rep.hist, "Histogram SVG");
    report_cmd->add_option("--bars", rep.bars, "Input bar chart SVG");
    report_cmd->add_option("--heatmap", rep.heatmap, "Per-node error SVG");
    report_cmd->add_option("--scale", rep.scale, "Displacement scaling in the overlay")->capture_default_str();
    report_cmd->add_option("--bin-width", rep.bin_width, "Histogram bin width [m]");
    report_cmd->add_flag("--json", rep.json, "Print metrics as JSON");

    BatchOptions bat;
    auto* batch_cmd = app.add_subcommand("batch", "Run every scenario in a directory");
    batch_cmd->add_option("--dir", bat.dir, "Scenario directory")->required();
    batch_cmd->add_option("--out-dir", bat.out_dir, "Output directory")->required();
    batch_cmd->add_option("--jobs", bat.jobs, "Concurrent scenarios")->capture_default_str()->check(CLI::PositiveNumber);
    batch_cmd->add_option("--mode", bat.mode, "solve | control | sparse-control")->capture_default_str()
        ->check(CLI::IsMember({"solve", "control", "sparse-control"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return usage;
    }
    if (*seed_opt) ov.seed = seed;
    if (*tol_opt) ov.tol_force = tol_force;
    if (*iter_opt) ov.max_iter = max_iter;

    try {
        if (*solve) return run_scenario(parse_scenario(scenario), "solve", ov, std::nullopt, paths, out);
        if (*control) return run_scenario(parse_scenario(scenario), "control", ov, std::nullopt, paths, out);
        if (*sparse)
            return run_scenario(parse_scenario(scenario), "sparse-control", ov,
                                *gamma_opt ? std::optional<double>(gamma) : std::nullopt, paths, out);
        if (*gen) {
            Scenario sc = generate_grid_scenario(grid, ov.seed.value_or(0));
            if (ov.tol_force) sc.equilibrium.tol_force = *ov.tol_force;
            write_scenario(sc, grid_out);
            if (!ov.quiet)
                out << "gen-grid: " << sc.net.n_free() << " free nodes, " << sc.net.n_edges() << " edges, "
                    << sc.net.n_inputs() << " inputs -> " << grid_out << "\n";
            return ok;
        }
        if (*report_cmd) return report(rep, out);
        if (*batch_cmd) return batch(bat, ov, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return classify(e);
    }
    return usage;
}

inline int main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<const char*> argv;
    argv.push_back("cablenet");
    for (const auto& a : args) argv.push_back(a.c_str());
    return main(static_cast<int>(argv.size()), argv.data(), out, err);
}

} // namespace cablenet::cli
