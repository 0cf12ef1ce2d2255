#include "visc/solver.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace visc;
using namespace visc::solver;

namespace {

mbs::MbsModel transport_model(double mu0) {
    mbs::MbsModel m = mbs::constant_model(0.0, 0.0, 0.0, 0.06, 1.0, 0.0, 1);
    m.sigma = mbs::constant_sigma(Mat::Zero(1, 1));
    m.mu = mbs::constant_drift(Vec::Constant(1, mu0));
    m.U0 = mbs::SpatialForm::bump(mbs::SpatialForm::Kind::gaussian, 1.0, 0.5, 1);
    return mbs::finalize(std::move(m));
}

/// N = 2, d = 1 with sigma = (0.3, 0)^T, no drift, no cash-flow and an
/// initial datum varying in x2 only.
mbs::MbsModel degenerate_model() {
    mbs::MbsModel m = mbs::constant_model(0.0, 0.0, 0.0, 0.06, 1.0, 0.0, 2);
    m.d = 1;
    Mat s(2, 1);
    s << 0.3, 0.0;
    m.sigma = mbs::constant_sigma(s);
    m.U0 = mbs::SpatialForm::trig(0.5, vec_of({0.0, 1.0}), 0.0, 0.5);
    return mbs::finalize(std::move(m), -3.0, 3.0);
}

GridField constant_field(const GridSpec& g, double c) {
    GridField f;
    f.grid = g;
    f.values.assign(g.total(), c);
    return f;
}

double heat_error(const Run& run, double margin_nodes = 0) {
    const auto& f = run.fields.back();
    double err = 0.0;
    for (std::size_t i = 0; i < f.values.size(); ++i) {
        if (!run.grid.inside_margin(i, margin_nodes * run.grid.dx(0))) continue;
        err = std::max(err, std::abs(f.values[i] - oracle::heat_cos(run.grid.point(i)(0), f.t)));
    }
    return err;
}

}  // namespace

TEST(Grid, Validation) {
    EXPECT_THROW(GridSpec::uniform(1, 0.0, 1.0, 7), ConfigError);
    EXPECT_THROW(GridSpec::uniform(1, 1.0, 0.0, 20), ConfigError);
    EXPECT_THROW(GridSpec::uniform(1, 0.0, 1.0, 20, 0.9, 0), ConfigError);
    EXPECT_THROW(GridSpec::uniform(1, 0.0, 1.0, 20, 1.5), ConfigError);
    const auto g = GridSpec::uniform(2, -1.0, 1.0, 11);
    EXPECT_EQ(g.total(), 121u);
    EXPECT_DOUBLE_EQ(g.dx(1), 0.2);
    EXPECT_DOUBLE_EQ(g.point(12)(0), -0.8);
    EXPECT_DOUBLE_EQ(g.point(12)(1), -0.8);
    EXPECT_FALSE(g.interior(10));
    EXPECT_TRUE(g.interior(12));
}

TEST(Step, ConstantFieldIsOdeStep) {
    const double r0 = 0.07, c = 0.4;
    auto m = mbs::constant_model(r0, 0.0, c, 0.06, 1.0, 0.5, 1);
    m.mu.kind = mbs::DriftForm::Kind::trig;
    m.mu.amplitude = 0.2;
    m.mu.frequency = 1.5;
    m = mbs::finalize(m);
    const auto bp = mbs::compute_barriers(m);
    const auto P = dm1_problem(m, bp);
    const auto g = GridSpec::uniform(1, -6, 6, 101);
    const auto cfg = resolve_scheme(P, g, {});
    const auto out = step(P, constant_field(g, c), cfg, cfg.dt);
    for (double v : out.values) EXPECT_NEAR(v, c - cfg.dt * r0 * c, 1e-15);
}

TEST(Step, LinearTransportIsExactForUpwind) {
    const double mu0 = 0.8, slope = 0.3;
    const auto m = transport_model(mu0);
    const auto P = dm1_problem(m, mbs::compute_barriers(m));
    const auto g = GridSpec::uniform(1, -6, 6, 121);
    const auto cfg = resolve_scheme(P, g, {});
    GridField f = constant_field(g, 0.0);
    for (std::size_t i = 0; i < f.values.size(); ++i) f.values[i] = slope * g.point(i)(0);
    const auto out = step(P, f, cfg, cfg.dt);
    // d_t U = mu0 d_x U transports along x + mu0 t.
    for (std::size_t i = 1; i + 1 < f.values.size(); ++i) {
        EXPECT_NEAR(out.values[i], f.values[i] + cfg.dt * mu0 * slope, 1e-14);
    }
}

TEST(Step, ZeroStepIsIdentity) {
    const auto m = mbs::desk_model();
    const auto P = dm1_problem(m, mbs::compute_barriers(m));
    const auto g = GridSpec::uniform(1, -6, 6, 51);
    const auto cfg = resolve_scheme(P, g, {});
    const auto f = initial_field(P, g);
    EXPECT_EQ(step(P, f, cfg, 0.0).values, f.values);
}

TEST(Step, CflViolationRejected) {
    const auto m = mbs::heat_model();
    const auto P = dm1_problem(m, mbs::compute_barriers(m));
    const auto g = GridSpec::uniform(1, -2 * kPi, 2 * kPi, 101);
    const auto cfg = resolve_scheme(P, g, {});
    EXPECT_THROW(step(P, initial_field(P, g), cfg, 2.0 * cfg.dt / g.cfl_safety), ConfigError);
    SchemeConfig bad;
    bad.dt = 2.0 * cfg.dt / g.cfl_safety;
    EXPECT_THROW(resolve_scheme(P, g, bad), ConfigError);
}

TEST(Step, CrossDiffusionMustBeDominant) {
    auto m = mbs::constant_model(0.0, 0.0, 0.0, 0.06, 1.0, 0.0, 2);
    Mat s(2, 1);
    s << 1.0, 1.0;
    m.sigma = mbs::constant_sigma(s);
    m.d = 1;
    m = mbs::finalize(m);
    const auto P = dm1_problem(m, mbs::compute_barriers(m));
    EXPECT_NO_THROW(resolve_scheme(P, GridSpec::uniform(2, -1, 1, 11), {}));
    GridSpec skew = GridSpec::uniform(2, -1, 1, 11);
    skew.nodes[1] = 41;
    EXPECT_THROW(resolve_scheme(P, skew, {}), ConfigError);
}

TEST(Step, MonotonicityProbe) {
    for (const auto& m : {mbs::desk_model(), mbs::heat_model(), transport_model(-0.5)}) {
        const auto P = dm1_problem(m, mbs::compute_barriers(m));
        const auto g = GridSpec::uniform(1, m.box_lo(0), m.box_hi(0), 201);
        const auto cfg = resolve_scheme(P, g, {});
        const auto rep = monotonicity_probe(P, g, cfg, 1000, 17);
        EXPECT_TRUE(rep.pass()) << rep.max_violation;
    }
    const auto m = mbs::desk_model();
    const auto d = mbs::transformed_problem(m);
    const auto tv = dm2_v_problem(m, d);
    const auto g = GridSpec::uniform(1, -6, 6, 201);
    const auto cfg = resolve_scheme(tv.problem, g, {});
    EXPECT_TRUE(monotonicity_probe(tv.problem, g, cfg, 1000, 18).pass());
}

TEST(Solve, HeatClosedForm) {
    const auto m = mbs::heat_model();
    SchemeConfig cfg;
    cfg.t_end = 0.5;
    const auto run = solve(m, GridSpec::uniform(1, -2 * kPi, 2 * kPi, 401), cfg);
    EXPECT_NEAR(run.fields.back().t, 0.5, 1e-12);
    // Constant extrapolation is first order at the edge; the audited interior is not.
    EXPECT_LE(heat_error(run, 100), 5e-3);
    EXPECT_LE(heat_error(run, 100), 1e-4);
    EXPECT_LE(heat_error(run), 2e-2);
    EXPECT_TRUE(run.sandwich_ok);
}

TEST(Solve, ZeroModelStaysZero) {
    const auto run = solve(mbs::zero_model(), GridSpec::uniform(1, -6, 6, 101), {});
    for (const auto& f : run.fields) {
        for (double v : f.values) EXPECT_EQ(v, 0.0);
    }
    EXPECT_NEAR(run.fields.back().t, 1.0 - run.cfg.dt, 1e-12);
}

TEST(Solve, DegenerateDirectionIsFixed) {
    const auto m = degenerate_model();
    const auto run = solve(m, GridSpec::uniform(2, -3, 3, 101), {});
    const auto& f0 = run.fields.front().values;
    for (const auto& f : run.fields) {
        for (std::size_t i = 0; i < f0.size(); ++i) {
            if (run.grid.interior(i)) {
                EXPECT_NEAR(f.values[i], f0[i], 1e-12);
            }
        }
    }
}

TEST(Solve, SandwichOnDeskModel) {
    const auto m = mbs::desk_model();
    const auto run = solve(m, GridSpec::uniform(1, -6, 6, 201), {});
    EXPECT_TRUE(run.sandwich_ok);
    for (const auto& f : run.fields) {
        ASSERT_TRUE(f.sandwich_excess);
        EXPECT_LE(*f.sandwich_excess, 0.0);
    }
    EXPECT_FALSE(run.guard_active);
}

TEST(Solve, PositivityFailureIsFatal) {
    auto m = mbs::zero_model();
    m.xi = mbs::TimeScalar::constant(0.0);
    EXPECT_THROW(solve(mbs::finalize(m), GridSpec::uniform(1, -1, 1, 21), {}), ModelError);
}

TEST(Comparison, IdenticalData) {
    const auto m = mbs::desk_model();
    const auto g = GridSpec::uniform(1, -6, 6, 101);
    const auto a = solve(m, g, {});
    const auto rep = discrete_comparison(a, a);
    EXPECT_EQ(rep.max_violation, 0.0);
    EXPECT_TRUE(rep.pass());
}

TEST(Comparison, ConstantOffsetDecays) {
    const double r0 = 0.05;
    const auto a_m = mbs::constant_model(r0, 0.0, 0.2, 0.06, 1.0, 0.5, 1);
    const auto b_m = mbs::constant_model(r0, 0.0, 0.3, 0.06, 1.0, 0.5, 1);
    const auto g = GridSpec::uniform(1, -6, 6, 101);
    const auto cfg = common_scheme({dm1_problem(a_m, mbs::compute_barriers(a_m)),
                                    dm1_problem(b_m, mbs::compute_barriers(b_m))},
                                   g, {});
    const auto a = solve(a_m, g, cfg);
    const auto b = solve(b_m, g, cfg);
    EXPECT_TRUE(discrete_comparison(a, b).pass());
    for (std::size_t k = 0; k < a.fields.size(); ++k) {
        const double gap = b.fields[k].values[50] - a.fields[k].values[50];
        EXPECT_NEAR(gap, 0.1 * std::exp(-r0 * a.fields[k].t), 1e-5);
    }
}

TEST(Comparison, BumpAboveZero) {
    const auto b_m = mbs::desk_model(true);
    const auto a_m = mbs::desk_model(false);
    const auto g = GridSpec::uniform(1, -6, 6, 201);
    const auto cfg = common_scheme({dm1_problem(a_m, mbs::compute_barriers(a_m)),
                                    dm1_problem(b_m, mbs::compute_barriers(b_m))},
                                   g, {});
    const auto rep = discrete_comparison(solve(a_m, g, cfg), solve(b_m, g, cfg));
    EXPECT_TRUE(rep.pass()) << rep.max_violation;
}

TEST(Comparison, MismatchedGrids) {
    const auto m = mbs::zero_model();
    const auto a = solve(m, GridSpec::uniform(1, -6, 6, 51), {});
    const auto b = solve(m, GridSpec::uniform(1, -6, 6, 61), {});
    EXPECT_THROW(discrete_comparison(a, b), ConfigError);
}

TEST(MonteCarlo, HeatKernel) {
    const auto m = mbs::heat_model();
    for (double x : {0.0, 1.0, 2.5}) {
        const auto est = mc_oracle(m, Vec::Constant(1, x), 0.5, 50000, 10, 99);
        EXPECT_LE(std::abs(est.estimate - oracle::heat_cos(x, 0.5)), 3.0 * est.stderr_) << x;
    }
}

TEST(MonteCarlo, DeterministicSource) {
    auto m = mbs::constant_model(0.0, 0.4, 0.0, 0.06, 1.0, 0.0, 2);
    m.mu = mbs::constant_drift(vec_of({0.3, -0.1}));
    m = mbs::finalize(m);
    const auto est = mc_oracle(m, vec_of({0.5, 0.5}), 0.7, 1000, 20, 3);
    EXPECT_NEAR(est.estimate, 0.06 * 0.4 * 0.7, 1e-15);
    EXPECT_LT(est.stderr_, 1e-15);
}

TEST(MonteCarlo, StandardErrorScaling) {
    const auto m = mbs::heat_model();
    const auto a = mc_oracle(m, Vec::Zero(1), 0.5, 20000, 5, 21);
    const auto b = mc_oracle(m, Vec::Zero(1), 0.5, 40000, 5, 21);
    EXPECT_NEAR(b.stderr_ / a.stderr_, 1.0 / std::sqrt(2.0), 0.2 / std::sqrt(2.0));
}

TEST(MonteCarlo, Preconditions) {
    EXPECT_THROW(mc_oracle(mbs::desk_model(), Vec::Zero(1), 0.5, 100, 10, 1), PreconditionError);
    EXPECT_THROW(mc_oracle(mbs::heat_model(), Vec::Zero(1), 1.0, 100, 10, 1), DomainError);
}

TEST(Lipschitz, HeatContracts) {
    const auto m = mbs::heat_model();
    SchemeConfig cfg;
    cfg.t_end = 0.5;
    const auto run = solve(m, GridSpec::uniform(1, -2 * kPi, 2 * kPi, 401), cfg);
    const auto rd = mbs::regularity_constant(m, mbs::default_M(m));
    const auto rep = lipschitz_audit(run, rd);
    EXPECT_TRUE(rep.pass()) << rep.max_violation;
    const auto& per = rep.details.at("per_time");
    EXPECT_LE(per.back().at("max_quotient").get<double>(), 1.0);
    EXPECT_LE(per.front().at("max_quotient").get<double>(), 1.0 + per.front().at("slack").get<double>());
}

TEST(Lipschitz, ConstantDataHaveZeroQuotients) {
    const auto m = mbs::constant_model(0.03, 0.2, 0.1, 0.06, 1.0, 0.5, 1);
    const auto run = solve(m, GridSpec::uniform(1, -6, 6, 101), {});
    const auto rep = lipschitz_audit(run, mbs::regularity_constant(m, mbs::default_M(m)));
    EXPECT_TRUE(rep.pass());
    for (const auto& e : rep.details.at("per_time")) EXPECT_EQ(e.at("max_quotient").get<double>(), 0.0);
}

TEST(Lipschitz, DeskRun) {
    const auto m = mbs::desk_model();
    const auto run = solve(m, GridSpec::uniform(1, -6, 6, 201), {});
    EXPECT_TRUE(lipschitz_audit(run, mbs::regularity_constant(m, mbs::default_M(m))).pass());
}

TEST(Refinement, HeatOrder) {
    std::vector<GridSpec> grids;
    for (std::size_t n : {101u, 201u, 401u}) grids.push_back(GridSpec::uniform(1, -2 * kPi, 2 * kPi, n, 0.9, 25));
    SchemeConfig cfg;
    cfg.t_end = 0.5;
    const auto rows = refinement_study(mbs::heat_model(), grids, cfg);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_GT(rows[1].diff, rows[2].diff);
    EXPECT_GE(rows[2].order, 0.8);
    EXPECT_LE(rows[2].order, 2.2);
}

TEST(Refinement, ZeroModel) {
    std::vector<GridSpec> grids;
    for (std::size_t n : {21u, 41u, 81u}) grids.push_back(GridSpec::uniform(1, -6, 6, n));
    for (const auto& r : refinement_study(mbs::zero_model(), grids, {})) {
        if (r.grid > 0) {
            EXPECT_EQ(r.diff, 0.0);
        }
    }
}

TEST(Refinement, TransportIsFirstOrder) {
    std::vector<GridSpec> grids;
    for (std::size_t n : {201u, 401u, 801u, 1601u}) grids.push_back(GridSpec::uniform(1, -6, 6, n));
    SchemeConfig cfg;
    cfg.t_end = 1.0 - 1e-9;
    const auto rows = refinement_study(transport_model(1.0), grids, cfg);
    EXPECT_NEAR(rows.back().order, 1.0, 0.25);
}

TEST(Refinement, NonNestedRejected) {
    std::vector<GridSpec> grids;
    for (std::size_t n : {21u, 41u, 91u}) grids.push_back(GridSpec::uniform(1, -6, 6, n));
    EXPECT_THROW(refinement_study(mbs::zero_model(), grids, {}), ConfigError);
    grids.pop_back();
    EXPECT_THROW(refinement_study(mbs::zero_model(), grids, {}), ConfigError);
}

TEST(ChangeOfVariable, GapShrinks) {
    const auto m = mbs::desk_model();
    const auto d = mbs::transformed_problem(m);
    const auto pu = dm2_u_problem(m, d);
    const auto tv = dm2_v_problem(m, d);
    SchemeConfig cfg;
    cfg.t_end = 0.5;
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t n : {101u, 201u}) {
        const auto g = GridSpec::uniform(1, -6, 6, n);
        const auto fu = solve_problem(pu, g, cfg).fields.back();
        const auto fv = solve_problem(tv.problem, g, cfg).fields.back();
        double gap = 0.0;
        for (std::size_t i = 0; i < fu.values.size(); ++i) {
            gap = std::max(gap, std::abs(fu.values[i] - tv.map->psi_inverse(fv.values[i])));
        }
        EXPECT_LT(gap, prev);
        prev = gap;
    }
    EXPECT_LE(prev, 5e-3);
}

TEST(Output, CsvLayouts) {
    const auto run = solve(mbs::zero_model(2), GridSpec::uniform(2, -1, 1, 8), {});
    std::ostringstream os;
    write_snapshots_csv(os, run);
    EXPECT_EQ(os.str().substr(0, 9), "t,x1,x2,U");
    std::ostringstream rs;
    write_refinement_csv(rs, {{0, 0.5, std::nan(""), std::nan("")}, {1, 0.25, 0.1, std::nan("")}});
    EXPECT_EQ(rs.str(), "grid,dx,diff,order\n0,0.5,,\n1,0.25,0.10000000000000001,\n");
}

TEST(Config, GridAndScheme) {
    const auto g = grid_from_json(nlohmann::json::parse(R"({"lo": -2, "hi": [2, 3], "nodes": [11, 21], "padding": 2})"), 2);
    EXPECT_EQ(g.nodes[1], 21u);
    EXPECT_DOUBLE_EQ(g.hi(1), 3.0);
    EXPECT_EQ(g.padding, 2u);
    EXPECT_THROW(grid_from_json(nlohmann::json::parse(R"({"lo": -2, "hi": 2})"), 1), ConfigError);
    EXPECT_THROW(grid_from_json(nlohmann::json::parse(R"({"lo": -2, "hi": 2, "nodes": 4})"), 1), ConfigError);
    const auto s = scheme_from_json(nlohmann::json::parse(R"({"theta": [0.5], "t_end": 0.25})"));
    EXPECT_EQ(s.theta.size(), 1u);
    EXPECT_DOUBLE_EQ(s.t_end, 0.25);
    EXPECT_THROW(scheme_from_json(nlohmann::json::parse(R"({"dt": -1})")), ConfigError);
}
