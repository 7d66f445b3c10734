#include "support/oracles.hpp"

#include <gtest/gtest.h>

using namespace cablenet;

TEST(GridNet, CountsFollowTopology) {
    GridSpec g;
    g.nx = 5;
    g.ny = 3;
    const CableNet net = build_grid_net(g);
    EXPECT_EQ(net.n_free(), 15);
    EXPECT_EQ(net.n_inputs(), 16);
    EXPECT_EQ(net.n_boundary(), 16);
    EXPECT_EQ(net.n_edges(), (5 - 1) * 3 + 5 * (3 - 1) + 16);

    g.nx = 10;
    g.ny = 6;
    const CableNet big = build_grid_net(g);
    EXPECT_EQ(big.n_free(), 60);
    EXPECT_EQ(big.n_inputs(), 32);
}

TEST(GridNet, Guards) {
    GridSpec g;
    g.nx = 1;
    EXPECT_THROW(build_grid_net(g), InvalidNetError);
    g.nx = 3;
    g.spacing = 0.0;
    EXPECT_THROW(build_grid_net(g), InvalidNetError);
}

TEST(GridNet, GeneratedNetsAreTautAtEquilibrium) {
    for (auto [nx, ny] : {std::pair<Index, Index>{5, 3}, {10, 6}, {4, 4}}) {
        GridSpec g;
        g.nx = nx;
        g.ny = ny;
        const CableNet net = build_grid_net(g);
        const auto eq = solve_equilibrium(net, Inputs::Zero(net.n_inputs()));
        EXPECT_TRUE(eq.slack_edges.empty()) << nx << "x" << ny;
        for (Index e = 0; e < net.n_edges(); ++e)
            EXPECT_GT(elongation(net, eq.r, Inputs::Zero(net.n_inputs()), e).delta, 0.0);
    }
}

TEST(GridNet, Deterministic) {
    GridSpec g;
    EXPECT_TRUE(build_grid_net(g) == build_grid_net(g));
    const Inputs a = patterned_sparse_inputs(16, 4, 3, 1.0, 42), b = patterned_sparse_inputs(16, 4, 3, 1.0, 42);
    EXPECT_EQ(a, b);
    EXPECT_EQ(cardinality(a, 1e-6), 7);
    EXPECT_EQ((a.array() > 0.0).count(), 4);
    EXPECT_EQ((a.array() < 0.0).count(), 3);
    EXPECT_GE(a.maxCoeff(), 5e-3);
    EXPECT_LE(a.maxCoeff(), 20e-3);
    EXPECT_GE(a.minCoeff(), -13e-3);
}

TEST(EstimateL0, MaterialFactors) {
    const CableNet net(1, {Vec3(0, 0, 0), Vec3(0, 2, 0)},
                       {Edge{0, 1, EdgeKind::Boundary, 1, 1, std::nullopt}, Edge{0, 2, EdgeKind::Boundary, 1, 1, std::nullopt}});
    const Coords measured = Vec3(1.0, 0.0, 0.0);
    const Eigen::VectorXd l0 = estimate_l0(net, measured, {Material::Elastic, Material::Stiff});
    EXPECT_EQ(l0[0], 0.990 * 1.0);
    EXPECT_NEAR(l0[1], 0.999 * std::sqrt(5.0), 1e-15);

    const CableNet flat(1, {Vec3(1, 0, 0)}, {Edge{0, 1, EdgeKind::Boundary, 1, 1, std::nullopt}});
    EXPECT_THROW(estimate_l0(flat, measured, {Material::Elastic}), DegenerateEdgeError);
    EXPECT_THROW(estimate_l0(flat, Coords::Zero(6), {Material::Elastic}), DimensionError);
}

TEST(EstimateL0, StrainsOnUniformGrid) {
    // A flat grid with equal spacing is uniformly stressed: every measured
    // length is the same, so the measured form stays the equilibrium.
    GridSpec g;
    g.nx = 6;
    g.ny = 4;
    g.sag = 0.0;
    const CableNet base = build_grid_net(g);
    const Coords measured = grid_surface_coords(g);
    for (Material m : {Material::Elastic, Material::Stiff}) {
        const CableNet net = base.with_rest_lengths(
            estimate_l0(base, measured, std::vector<Material>(static_cast<std::size_t>(base.n_edges()), m)));
        const Inputs u = Inputs::Zero(net.n_inputs());
        const auto eq = solve_equilibrium(net, u, measured);
        const double expected = m == Material::Elastic ? 0.010 : 0.001;
        for (Index e = 0; e < net.n_edges(); ++e) {
            const double strain = elongation(net, eq.r, u, e).delta / effective_rest_length(net, u, e);
            EXPECT_NEAR(strain, expected, 0.1 * expected);
        }
    }
}

TEST(RecoveryScenario, EmptySupportIsAFixedPoint) {
    GridSpec g;
    const CableNet net = build_grid_net(g);
    const Scenario sc = make_exact_recovery_scenario(net, Inputs::Zero(net.n_inputs()));
    EXPECT_LT((sc.problem.r_des - *sc.r_ini).lpNorm<Eigen::Infinity>(), 1e-12);
    const auto res = run_control(net, sc.u0, sc.problem, {}, sc.r_ini);
    EXPECT_EQ(res.iterations, 1);
}

TEST(RecoveryScenario, SevenEdgeSupportOnAcceptanceNet) {
    GridSpec g;
    g.nx = 10;
    g.ny = 6;
    g.prestrain = 0.02;
    const CableNet net = build_grid_net(g);
    const Scenario sc = make_exact_recovery_scenario(net, patterned_sparse_inputs(net.n_inputs(), 4, 3, 1.0, 1), 1, {}, 1e6);
    const Metrics m = compute_metrics(*sc.r_ini, sc);
    EXPECT_GT(m.weighted_err, 0.0);
    EXPECT_EQ(m.reduction_pct, 0.0);
    const auto res = run_control(net, sc.u0, sc.problem, {}, sc.r_ini);
    EXPECT_GE(compute_metrics(res.final.r, sc).reduction_pct, 98.0);
}

TEST(Noise, IdentityDeterminismAndSpread) {
    const Coords r = Coords::LinSpaced(30, 0.0, 1.0);
    EXPECT_EQ(add_measurement_noise(r, 0.0, 5), r);
    EXPECT_EQ(add_measurement_noise(r, 1e-4, 5), add_measurement_noise(r, 1e-4, 5));
    EXPECT_NE(add_measurement_noise(r, 1e-4, 5), add_measurement_noise(r, 1e-4, 6));

    const Coords zero = Coords::Zero(3 * 3334);
    const Coords noisy = add_measurement_noise(zero, 1e-4, 17);
    const double mean = noisy.mean();
    const double sd = std::sqrt((noisy.array() - mean).square().sum() / static_cast<double>(noisy.size() - 1));
    EXPECT_NEAR(sd, 1e-4, 5e-6);

    Eigen::VectorXd profile = Eigen::VectorXd::Zero(10);
    profile[3] = 1e-3;
    const Coords p = add_measurement_noise(Coords::Zero(30), profile, 1);
    EXPECT_EQ(p.head(9).norm(), 0.0);
    EXPECT_GT(p.segment<3>(9).norm(), 0.0);
}

TEST(Metrics, IdentityAndDefinitions) {
    Coords r_des(6);
    r_des << 0, 0, 0, 1, 0, 0;
    ControlProblem p = make_problem(r_des, 2.0);
    const Metrics zero = compute_metrics(r_des, r_des, p, 4);
    EXPECT_EQ(zero.weighted_err, 0.0);
    EXPECT_EQ(zero.rms, 0.0);
    EXPECT_EQ(zero.reduction_pct, 100.0);

    Coords r = r_des;
    r[0] = 0.3;
    r[4] = 0.4;
    const Metrics m = error_metrics(r, p, 4);
    EXPECT_NEAR(m.l2_err, 0.25, 1e-15);
    EXPECT_NEAR(m.weighted_err, 0.5, 1e-15);
    EXPECT_NEAR(m.rms, 0.5 / 4.0, 1e-15); // divided by n, not sqrt(n)
    EXPECT_NEAR(m.per_node_err[0], 0.3, 1e-15);
    EXPECT_NEAR(m.per_node_err[1], 0.4, 1e-15);
}

TEST(Metrics, KnownReductionPairs) {
    EXPECT_NEAR(reduction_percent(0.134e-3, 0.0154e-3), 88.5, 0.1);
    EXPECT_NEAR(reduction_percent(1.55e-2, 1.82e-4), 98.8, 0.1);
}

TEST(Metrics, HistogramMatchesLoop) {
    std::mt19937_64 rng(3);
    std::exponential_distribution<double> d(1000.0);
    Eigen::VectorXd v(295);
    for (Index i = 0; i < v.size(); ++i) v[i] = d(rng);
    const double width = 2e-4;
    const auto h = histogram(v, width);
    Index total = 0;
    for (std::size_t b = 0; b < h.size(); ++b) {
        Index count = 0;
        for (Index i = 0; i < v.size(); ++i)
            if (v[i] >= width * static_cast<double>(b) && v[i] < width * static_cast<double>(b + 1)) ++count;
        if (b + 1 == h.size())
            for (Index i = 0; i < v.size(); ++i)
                if (v[i] >= width * static_cast<double>(b + 1)) ++count;
        EXPECT_EQ(h[b], count) << "bin " << b;
        total += h[b];
    }
    EXPECT_EQ(total, v.size());
}
