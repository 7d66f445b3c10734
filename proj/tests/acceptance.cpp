// Acceptance gate: one line per criterion, nonzero exit if any fails.

#include "support/oracles.hpp"

#include <cablenet/cli.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>

using namespace cablenet;
namespace fs = std::filesystem;

#ifndef CABLENET_TEST_DATA
#define CABLENET_TEST_DATA "tests/data"
#endif

namespace {

/// Collects failed checks for one criterion.
struct Check {
    std::vector<std::string> failures;
    std::string detail;

    void expect(bool ok, const std::string& what) {
        if (!ok && failures.size() < 8) failures.push_back(what);
        else if (!ok) failures.back() = "... more failures";
    }
};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

using Clock = std::chrono::steady_clock;

int failed = 0;
std::map<int, std::string> report; // printed in criterion order at the end

void criterion(int id, const std::string& name, double limit_s, const std::function<void(Check&)>& body) {
    Check c;
    const auto t0 = Clock::now();
    try {
        body(c);
    } catch (const std::exception& e) {
        c.failures.push_back(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    if (limit_s > 0.0) c.expect(secs < limit_s, "runtime " + fmt(secs) + " s exceeds " + fmt(limit_s) + " s");
    const bool ok = c.failures.empty();
    if (!ok) ++failed;
    std::ostringstream line;
    line << (ok ? "[PASS] " : "[FAIL] ") << id << ". " << name << " (" << fmt(secs) << " s)";
    if (!c.detail.empty()) line << ": " << c.detail;
    line << "\n";
    for (const auto& f : c.failures) line << "       - " << f << "\n";
    report[id] = line.str();
}

// Stiffness from the edges that are strictly in tension at the minimizer
// (edges resting on the kink are loosened away) must be positive definite.
bool strictly_convex_at_minimum(const oracle::RandomNet& rn) {
    const auto eq = solve_equilibrium(rn.net, rn.u);
    Eigen::VectorXd l0(rn.net.n_edges());
    for (Index e = 0; e < rn.net.n_edges(); ++e) {
        l0[e] = rn.net.edge(e).l0;
        if (elongation(rn.net, eq.r, rn.u, e).delta <= 1e-6 * rn.net.scale()) l0[e] *= 1.5;
    }
    const CableNet taut = rn.net.with_rest_lengths(l0);
    const Eigen::VectorXd eig =
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(jacobian_rF_dense(taut, eq.r, rn.u)).eigenvalues();
    return eig.minCoeff() > 1e-8 * eig.maxCoeff();
}

std::vector<oracle::RandomNet> suite_nets() {
    std::vector<oracle::RandomNet> nets;
    for (int k = 0; k < 25; ++k) {
        std::mt19937_64 rng(9000 + k);
        oracle::RandomNetOptions o;
        o.min_free = 3;
        o.max_free = 60;
        o.slack_fraction = k % 3 == 0 ? 0.15 : 0.0;
        o.load = k % 2 ? 4.0 : 0.0;
        // A node held only by slack edges has a continuum of minimizers;
        // such draws are replaced so that uniqueness is well defined.
        auto rn = oracle::random_net(rng, o);
        while (!strictly_convex_at_minimum(rn)) rn = oracle::random_net(rng, o);
        nets.push_back(std::move(rn));
    }
    return nets;
}

CableNet acceptance_net() {
    GridSpec g;
    g.nx = 10;
    g.ny = 6;
    g.spacing = 0.25;
    g.sag = 0.1;
    g.ea = 15000.0;
    g.prestrain = 0.02;
    return build_grid_net(g);
}

/// Feasibility, monotone cost, Wolfe at accepted steps and the terminal KKT
/// measure for a fully actuated run.
void check_dense_run(Check& c, const std::string& tag, const ControlResult& res, const ControlProblem& prob,
                     const CableNet& net, double tol_force) {
    const auto& rows = res.trace.entries;
    c.expect(res.converged, tag + ": not converged");
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto& e = rows[k];
        c.expect(e.residual_norm <= tol_force, tag + ": iterate " + std::to_string(k) + " residual " + fmt(e.residual_norm));
        if (k == 0) continue;
        const auto& p = rows[k - 1];
        c.expect(e.cost <= p.cost, tag + ": cost rose at iterate " + std::to_string(k));
        if (e.delta_u_norm == 0.0) continue;
        c.expect(e.armijo_ok && e.merit <= p.merit + prob.wolfe_c1 * e.directional0,
                 tag + ": sufficient decrease fails at iterate " + std::to_string(k));
        c.expect(!e.curvature_checked || !e.curvature_ok || e.directional1 >= prob.wolfe_c2 * e.directional0,
                 tag + ": curvature fails at iterate " + std::to_string(k));
        c.expect(e.curvature_ok, tag + ": accepted step without curvature at iterate " + std::to_string(k));
    }
    const double bound = 1e-6 * prob.q.maxCoeff() * net.scale();
    c.expect(res.kkt_measure <= bound, tag + ": KKT measure " + fmt(res.kkt_measure) + " > " + fmt(bound));
}

/// Feasibility and monotone l1 merit in every reweighting pass.
void check_sparse_run(Check& c, const std::string& tag, const SparseResult& res, double tol_force) {
    for (std::size_t t = 0; t < res.traces.size(); ++t) {
        const auto& rows = res.traces[t].entries;
        for (std::size_t k = 0; k < rows.size(); ++k) {
            c.expect(rows[k].residual_norm <= tol_force, tag + ": pass " + std::to_string(t) + " infeasible iterate");
            if (k > 0)
                c.expect(rows[k].merit <= rows[k - 1].merit,
                         tag + ": pass " + std::to_string(t) + " merit rose at " + std::to_string(k));
        }
    }
}

// Slack boundary edges or a node held only by slack edges leave the
// sensitivity undefined; such draws are replaced.
bool ill_posed(const CableNet& net, const Coords& r, const Inputs& u, const std::vector<Index>& slack) {
    if (std::any_of(slack.begin(), slack.end(), [&](Index e) { return net.edge(e).kind == EdgeKind::Boundary; }))
        return true;
    const Eigen::VectorXd eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(jacobian_rF_dense(net, r, u)).eigenvalues();
    return eig.minCoeff() <= 1e-8 * eig.maxCoeff();
}

std::string slurp(const fs::path& p) { return cablenet::detail::read_file(p.string()); }

} // namespace

int main() {
    const auto nets = suite_nets();
    const EquilibriumConfig eq_cfg;

    criterion(1, "derivatives match central differences on 25 nets", 30.0, [&](Check& c) {
        double worst = 0.0;
        for (std::size_t k = 0; k < nets.size(); ++k) {
            const auto& rn = nets[k];
            const double h = 1e-6 * rn.net.scale();
            auto v = [&](const Eigen::VectorXd& x) { return oracle::energy_loop(rn.net, x, rn.u); };
            auto hr = [&](const Eigen::VectorXd& x) { return force_residual(rn.net, x, rn.u); };
            auto hu = [&](const Eigen::VectorXd& x) { return force_residual(rn.net, rn.r, x); };
            const double errs[] = {
                oracle::rel_err(force_residual(rn.net, rn.r, rn.u), oracle::central_gradient(v, rn.r, h)),
                oracle::rel_err(jacobian_rF_dense(rn.net, rn.r, rn.u), oracle::central_jacobian(hr, rn.r, h)),
                oracle::rel_err(jacobian_u(rn.net, rn.r, rn.u), oracle::central_jacobian(hu, rn.u, h))};
            const char* names[] = {"force_residual", "jacobian_rF", "jacobian_u"};
            for (int i = 0; i < 3; ++i) {
                worst = std::max(worst, errs[i]);
                c.expect(errs[i] <= 1e-6, "net " + std::to_string(k) + " " + names[i] + " rel err " + fmt(errs[i]));
            }
        }
        c.detail = "worst rel err " + fmt(worst);
    });

    std::vector<EquilibriumResult> solved(nets.size());
    criterion(2, "energy minimizer is a force equilibrium and a local minimum", 60.0, [&](Check& c) {
        double worst = 0.0;
        for (std::size_t k = 0; k < nets.size(); ++k) {
            const auto& rn = nets[k];
            solved[k] = solve_equilibrium(rn.net, rn.u, eq_cfg);
            const auto rep = check_equivalence(rn.net, rn.u, solved[k].r, 1e-8, 50, k);
            worst = std::max(worst, rep.residual_norm);
            c.expect(rep.residual_norm <= 1e-8, "net " + std::to_string(k) + " |h| " + fmt(rep.residual_norm));
            c.expect(rep.passed && rep.probes == 50,
                     "net " + std::to_string(k) + " failed " + std::to_string(rep.failed_probes) + " probes");
        }
        c.detail = "worst |h|_inf " + fmt(worst) + " N";
    });

    criterion(3, "10 warm starts per net reach the same configuration", 0.0, [&](Check& c) {
        double worst = 0.0;
        for (std::size_t k = 0; k < nets.size(); ++k) {
            const auto& rn = nets[k];
            std::mt19937_64 rng(500 + k);
            std::normal_distribution<double> normal(0.0, 0.03 * rn.net.scale());
            for (int s = 0; s < 10; ++s) {
                Coords warm = solved[k].r;
                for (Index i = 0; i < warm.size(); ++i) warm[i] += normal(rng);
                const auto other = solve_equilibrium(rn.net, rn.u, warm, eq_cfg);
                const double d = (other.r - solved[k].r).lpNorm<Eigen::Infinity>() / rn.net.scale();
                worst = std::max(worst, d);
                c.expect(d <= 1e-6, "net " + std::to_string(k) + " start " + std::to_string(s) + " differs by " + fmt(d));
            }
        }
        c.detail = "worst spread " + fmt(worst) + " x scale";
    });

    criterion(4, "reduced Gauss-Newton step equals the full KKT solve on 10 nets", 0.0, [&](Check& c) {
        double worst = 0.0;
        EquilibriumConfig tight;
        tight.tol_force = 1e-10;
        for (int k = 0; k < 10; ++k) {
            std::mt19937_64 rng(7000 + k);
            oracle::RandomNetOptions o;
            o.max_free = 40;
            auto rn = oracle::random_net(rng, o);
            auto eq = solve_equilibrium(rn.net, rn.u, tight);
            while (ill_posed(rn.net, eq.r, rn.u, eq.slack_edges)) {
                rn = oracle::random_net(rng, o);
                eq = solve_equilibrium(rn.net, rn.u, tight);
            }
            std::normal_distribution<double> normal(0.0, 0.02 * rn.net.scale());
            std::uniform_real_distribution<double> w(0.5, 2.0);
            ControlProblem p = make_problem(eq.r);
            for (Index i = 0; i < p.r_des.size(); ++i) {
                p.r_des[i] += normal(rng);
                p.q[i] = w(rng);
            }
            const Inputs du = gn_direction(reduced_sensitivity(rn.net, eq.r, rn.u), eq.r, p);
            const Inputs ref = oracle::kkt_gn_direction(jacobian_rF_dense(rn.net, eq.r, rn.u),
                                                        jacobian_u(rn.net, eq.r, rn.u), p.q, eq.r - p.r_des);
            const double err = oracle::rel_err(du, ref);
            worst = std::max(worst, err);
            c.expect(err <= 1e-8, "net " + std::to_string(k) + " rel err " + fmt(err));
        }
        c.detail = "worst rel err " + fmt(worst);
    });

    const CableNet net = acceptance_net();
    const Scenario dense_sc =
        make_exact_recovery_scenario(net, dense_random_inputs(net.n_inputs(), 5e-3, 11), 11, eq_cfg, 1e6);
    const Scenario sparse_sc =
        make_exact_recovery_scenario(net, patterned_sparse_inputs(net.n_inputs(), 4, 3, 1.0, 12), 12, eq_cfg, 1e6);

    std::optional<ControlResult> dense_run, sparse_dense_run;
    const std::vector<double> gammas{0.0, 0.1, 0.3, 1.0};
    std::vector<SparseResult> path;

    criterion(6, "dense exact recovery on the 10x6 grid", 60.0, [&](Check& c) {
        c.expect(net.n_free() == 60 && net.n_inputs() == 32, "grid topology is not 60 free / 32 inputs");
        c.expect(solve_equilibrium(net, Inputs::Zero(net.n_inputs())).slack_edges.empty(), "slack edges at u = 0");
        dense_run = run_control(net, dense_sc.u0, dense_sc.problem, eq_cfg, dense_sc.r_ini);
        const Metrics m = compute_metrics(dense_run->final.r, dense_sc);
        c.expect(m.reduction_pct >= 99.0, "weighted error reduction " + fmt(m.reduction_pct) + "%");
        c.expect(dense_run->iterations <= 50, std::to_string(dense_run->iterations) + " outer iterations");
        c.detail = fmt(m.reduction_pct) + "% in " + std::to_string(dense_run->iterations) + " iterations";
    });

    criterion(7, "sparse exact recovery with 7 true inputs", 300.0, [&](Check& c) {
        sparse_dense_run = run_control(net, sparse_sc.u0, sparse_sc.problem, eq_cfg, sparse_sc.r_ini);
        for (double g : gammas) {
            SparseConfig cfg = sparse_sc.sparse;
            cfg.gamma = g;
            path.push_back(run_sparse_control(net, sparse_sc.u0, sparse_sc.problem, cfg, eq_cfg, sparse_sc.r_ini));
        }
        // The sweep picks the largest gamma that still meets the error target.
        std::optional<std::size_t> pick;
        for (std::size_t i = 1; i < gammas.size(); ++i)
            if (compute_metrics(path[i].final.r, sparse_sc).reduction_pct >= 98.0) pick = i;
        c.expect(pick.has_value(), "no gamma in the sweep reaches 98%");
        if (!pick) return;
        const SparseResult& best = path[*pick];
        const Metrics m = compute_metrics(best.final.r, sparse_sc);
        const double thr = sparse_sc.sparse.zero_threshold;
        Index extras = 0;
        for (Index i = 0; i < net.n_inputs(); ++i)
            if (std::abs(best.final.u[i]) > thr && std::abs((*sparse_sc.u_true)[i]) <= thr) ++extras;
        c.expect(cardinality(*sparse_sc.u_true, thr) == 7, "true input is not 7-sparse");
        c.expect(best.cardinality <= 9, "cardinality " + std::to_string(best.cardinality));
        c.expect(extras <= 2, std::to_string(extras) + " inputs outside the true support");
        c.expect(best.final_cost >= sparse_dense_run->final.cost,
                 "sparse cost " + fmt(best.final_cost) + " below dense " + fmt(sparse_dense_run->final.cost));
        c.detail = "gamma " + fmt(gammas[*pick]) + ": " + fmt(m.reduction_pct) + "%, cardinality " +
                   std::to_string(best.cardinality) + ", cost " + fmt(best.final_cost) + " vs dense " +
                   fmt(sparse_dense_run->final.cost);
    });

    criterion(8, "cardinality path over gamma in {0, 0.1, 0.3, 1}", 0.0, [&](Check& c) {
        c.expect(path.size() == gammas.size() && sparse_dense_run, "sweep did not run");
        if (path.size() != gammas.size() || !sparse_dense_run) return;
        std::string cards;
        for (std::size_t i = 0; i < path.size(); ++i) {
            cards += (i ? " " : "") + std::to_string(path[i].cardinality);
            if (i > 0)
                c.expect(path[i].cardinality <= path[i - 1].cardinality, "cardinality rises at gamma " + fmt(gammas[i]));
        }
        const double gap = std::abs(path[0].final_cost - sparse_dense_run->final.cost);
        c.expect(gap <= 1e-8, "gamma = 0 cost differs from dense by " + fmt(gap));
        c.detail = "cardinalities " + cards;
    });

    criterion(5, "feasible descent on every control run", 0.0, [&](Check& c) {
        const double tol = eq_cfg.tol_force;
        if (dense_run) check_dense_run(c, "dense 10x6", *dense_run, dense_sc.problem, net, tol);
        if (sparse_dense_run) check_dense_run(c, "sparse-pattern dense", *sparse_dense_run, sparse_sc.problem, net, tol);
        for (std::size_t i = 0; i < path.size(); ++i) check_sparse_run(c, "gamma " + fmt(gammas[i]), path[i], tol);
        int runs = 2 + static_cast<int>(path.size());
        for (auto [nx, ny, amp] : {std::tuple<Index, Index, double>{5, 3, 5e-3}, {6, 4, 8e-3}, {8, 5, 5e-3}}) {
            GridSpec g;
            g.nx = nx;
            g.ny = ny;
            g.prestrain = 0.02;
            const CableNet gn = build_grid_net(g);
            const Scenario sc = make_exact_recovery_scenario(gn, dense_random_inputs(gn.n_inputs(), amp, nx), nx, eq_cfg, 1e6);
            const auto res = run_control(gn, sc.u0, sc.problem, eq_cfg, sc.r_ini);
            check_dense_run(c, std::to_string(nx) + "x" + std::to_string(ny), res, sc.problem, gn, tol);
            ++runs;
        }
        c.detail = std::to_string(runs) + " runs";
    });

    criterion(9, "rest-length estimate factors and resulting strains", 0.0, [&](Check& c) {
        const CableNet two(1, {Vec3(0, 0, 0), Vec3(0, 2, 0)},
                           {Edge{0, 1, EdgeKind::Boundary, 1, 1, std::nullopt},
                            Edge{0, 2, EdgeKind::Boundary, 1, 1, std::nullopt}});
        const Coords measured = Vec3(1.5, 0.0, 0.0);
        const Eigen::VectorXd l0 = estimate_l0(two, measured, {Material::Elastic, Material::Stiff});
        c.expect(l0[0] == 0.990 * 1.5, "elastic factor " + fmt(l0[0] / 1.5));
        c.expect(l0[1] == 0.999 * std::sqrt(1.5 * 1.5 + 4.0), "stiff factor " + fmt(l0[1] / std::sqrt(6.25)));

        GridSpec g;
        g.nx = 6;
        g.ny = 4;
        g.sag = 0.0;
        const CableNet base = build_grid_net(g);
        const Coords flat = grid_surface_coords(g);
        double worst = 0.0;
        for (Material m : {Material::Elastic, Material::Stiff}) {
            const double target = m == Material::Elastic ? 0.010 : 0.001;
            const CableNet est = base.with_rest_lengths(
                estimate_l0(base, flat, std::vector<Material>(static_cast<std::size_t>(base.n_edges()), m)));
            const Inputs u = Inputs::Zero(est.n_inputs());
            const auto eq = solve_equilibrium(est, u, flat, eq_cfg);
            for (Index e = 0; e < est.n_edges(); ++e) {
                const double strain = elongation(est, eq.r, u, e).delta / effective_rest_length(est, u, e);
                const double dev = std::abs(strain - target) / target;
                worst = std::max(worst, dev);
                c.expect(dev <= 0.1, "edge " + std::to_string(e) + " strain " + fmt(strain));
            }
        }
        c.detail = "worst strain deviation " + fmt(100.0 * worst) + "%";
    });

    criterion(10, "RMS 0.134 mm -> 0.0154 mm gives 88.5% reduction", 0.0, [&](Check& c) {
        const Index n_free = 4, n_nodes = 6;
        const Coords r_des = Coords::Zero(3 * n_free);
        const ControlProblem p = make_problem(r_des);
        Coords before = r_des, after = r_des;
        before[4] = 0.134e-3 * static_cast<double>(n_nodes);
        after[4] = 0.0154e-3 * static_cast<double>(n_nodes);
        const Metrics m = compute_metrics(after, before, p, n_nodes);
        c.expect(std::abs(m.rms - 0.0154e-3) <= 1e-15, "controlled rms " + fmt(m.rms));
        c.expect(std::abs(m.rms_reduction_pct - 88.5) <= 0.1, "reduction " + fmt(m.rms_reduction_pct) + "%");
        c.detail = fmt(m.rms_reduction_pct) + "%";
    });

    criterion(11, "IO round trips, golden trace CSV, deterministic CLI", 0.0, [&](Check& c) {
        const Scenario back = parse_scenario_text(scenario_text(sparse_sc));
        c.expect(same_scenario(back, sparse_sc), "scenario round trip differs");
        c.expect(scenario_text(back) == scenario_text(sparse_sc), "scenario text differs after round trip");

        RunResult res;
        res.mode = "control";
        res.converged = true;
        res.u = dense_run ? dense_run->final.u : dense_sc.u0;
        res.r = dense_run ? dense_run->final.r : *dense_sc.r_ini;
        res.cost = dense_run ? dense_run->final.cost : 0.0;
        res.iterations = dense_run ? dense_run->iterations : 0;
        res.gamma = 0.1;
        res.cardinality = 3;
        res.slack_edges = {4};
        res.warnings = {"note"};
        c.expect(result_from_json(Json::parse(result_text(res))) == res, "result round trip differs");

        RunTrace t;
        const double rows[3][6] = {{0, 1.5, 0, 0, 1e-11, 0.25},
                                   {1, 0.1, 1, 3e-3, 2e-11, 0.0125},
                                   {2, 1.2345678901234567e-7, 0.5, 3e-5, 1e-11, 1e-9}};
        for (const auto& r : rows) {
            TraceEntry e;
            e.iter = static_cast<int>(r[0]);
            e.cost = r[1];
            e.alpha = r[2];
            e.delta_u_norm = r[3];
            e.residual_norm = r[4];
            e.kkt_measure = r[5];
            t.entries.push_back(e);
        }
        c.expect(trace_csv(t) == slurp(fs::path(CABLENET_TEST_DATA) / "trace_golden.csv"), "trace CSV differs from golden");

        const fs::path dir = fs::temp_directory_path() / "cablenet_acceptance";
        fs::remove_all(dir);
        fs::create_directories(dir);
        std::ostringstream sink;
        auto cli_run = [&](std::vector<std::string> args) { return cli::main(args, sink, sink); };
        int sparse_codes[2] = {-1, -1};
        for (int k = 0; k < 2; ++k) {
            const std::string s = std::to_string(k);
            const std::string scen = (dir / ("s" + s + ".json")).string();
            c.expect(cli_run({"--seed", "5", "--quiet", "gen-grid", "--nx", "5", "--ny", "3", "--spacing", "0.25",
                              "--sag", "0.1", "--prestrain", "0.02", "--noise", "1e-5", "--out", scen}) == 0,
                     "gen-grid failed");
            c.expect(cli_run({"--quiet", "control", "--scenario", scen, "--out", (dir / ("c" + s + ".json")).string(),
                              "--trace", (dir / ("c" + s + ".csv")).string()}) == 0,
                     "control failed");
            // With measurement noise the reweighting may stop at its cap
            // (exit 4); the outputs must still be reproducible.
            sparse_codes[k] = cli_run({"--quiet", "sparse-control", "--scenario", scen, "--out",
                                       (dir / ("p" + s + ".json")).string(), "--trace-json",
                                       (dir / ("p" + s + ".trace.json")).string()});
            c.expect(sparse_codes[k] == 0 || sparse_codes[k] == 4, "sparse-control failed");
        }
        c.expect(sparse_codes[0] == sparse_codes[1], "sparse-control exit codes differ between runs");
        for (const char* f : {"s", "c", "p"}) {
            const std::string ext = std::string(f) == "p" ? ".trace.json" : ".json";
            c.expect(slurp(dir / (std::string(f) + "0.json")) == slurp(dir / (std::string(f) + "1.json")),
                     std::string(f) + " output differs between runs");
            if (std::string(f) != "s")
                c.expect(slurp(dir / (std::string(f) + "0" + (std::string(f) == "c" ? ".csv" : ext))) ==
                             slurp(dir / (std::string(f) + "1" + (std::string(f) == "c" ? ".csv" : ext))),
                         std::string(f) + " trace differs between runs");
        }
        fs::remove_all(dir);
    });

    for (const auto& [id, text] : report) std::cout << text;
    std::cout << (failed == 0 ? "all acceptance criteria passed" : std::to_string(failed) + " criteria failed") << "\n";
    return failed == 0 ? 0 : 1;
}
