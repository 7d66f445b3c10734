// Builds a small saddle net, hides a sparse input, and recovers it with the
// fully actuated and the sparse controller.
//
//   demo_recovery [gamma]

#include <cablenet/cablenet.hpp>

#include <cstdio>
#include <cstdlib>

int main(int argc, char** argv) {
    using namespace cablenet;
    const double gamma = argc > 1 ? std::atof(argv[1]) : 0.3;

    GridSpec g;
    g.nx = 6;
    g.ny = 4;
    g.prestrain = 0.02;
    const CableNet net = build_grid_net(g);
    const Inputs u_true = patterned_sparse_inputs(net.n_inputs(), 3, 2, 1.0, 7);
    const Scenario sc = make_exact_recovery_scenario(net, u_true, 7, {}, 1e6);

    const ControlResult dense = run_control(net, sc.u0, sc.problem, sc.equilibrium, sc.r_ini);
    SparseConfig cfg = sc.sparse;
    cfg.gamma = gamma;
    const SparseResult sparse = run_sparse_control(net, sc.u0, sc.problem, cfg, sc.equilibrium, sc.r_ini);

    std::printf("%d free nodes, %d inputs, %d nonzero in the hidden input\n", static_cast<int>(net.n_free()),
                static_cast<int>(net.n_inputs()), static_cast<int>(cardinality(u_true, cfg.zero_threshold)));
    std::printf("%-8s %6s %12s %10s %6s\n", "run", "iters", "cost", "reduction", "card");
    const Metrics md = compute_metrics(dense.final.r, sc), ms = compute_metrics(sparse.final.r, sc);
    std::printf("%-8s %6d %12.4g %9.2f%% %6d\n", "dense", dense.iterations, dense.final.cost, md.reduction_pct,
                static_cast<int>(cardinality(dense.final.u, cfg.zero_threshold)));
    std::printf("%-8s %6d %12.4g %9.2f%% %6d\n", "sparse", sparse.reweights, sparse.final_cost, ms.reduction_pct,
                static_cast<int>(sparse.cardinality));
    std::printf("\n%5s %10s %10s %10s\n", "input", "true [mm]", "dense", "sparse");
    for (Index i = 0; i < net.n_inputs(); ++i)
        if (std::abs(u_true[i]) > 0.0 || std::abs(sparse.final.u[i]) > cfg.zero_threshold)
            std::printf("%5d %10.3f %10.3f %10.3f\n", static_cast<int>(i), 1e3 * u_true[i], 1e3 * dense.final.u[i],
                        1e3 * sparse.final.u[i]);
    return 0;
}
