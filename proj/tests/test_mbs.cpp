#include "visc/mbs.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace visc;
using namespace visc::mbs;

namespace {

MbsModel inverse_quadratic_model(double h0, std::size_t N) {
    MbsModel m = constant_model(0.0, 0.0, 0.0, 1.0, 1.0, 0.5, N);
    m.h = SpatialForm::bump(SpatialForm::Kind::inverse_quadratic, h0, 1.0, N);
    return finalize(std::move(m));
}

}  // namespace

TEST(Forms, TimeScalarCalculus) {
    const auto e = TimeScalar::exponential(2.0, 0.3);
    EXPECT_NEAR(e.integral(1.5), 2.0 * (std::exp(0.45) - 1.0) / 0.3, 1e-14);
    EXPECT_NEAR(e.derivative(1.0), 0.6 * std::exp(0.3), 1e-14);
    const auto a = TimeScalar::affine(1.0, -0.5);
    EXPECT_DOUBLE_EQ(a.integral(2.0), 2.0 - 1.0);
    EXPECT_DOUBLE_EQ(a.inf_on(2.0), 0.0);
    EXPECT_DOUBLE_EQ(a.sup_on(2.0), 1.0);
}

TEST(Forms, SpatialDerivativesMatchFiniteDifferences) {
    std::mt19937_64 rng(4);
    const std::vector<SpatialForm> forms = {
        SpatialForm::bump(SpatialForm::Kind::gaussian, 0.7, 1.3, 2, 0.2, 0.1),
        SpatialForm::bump(SpatialForm::Kind::inverse_quadratic, 0.4, 0.8, 2, 0.5),
        SpatialForm::trig(0.3, vec_of({1.0, -2.0}), 0.4, 1.0, 0.1)};
    for (const auto& f : forms) {
        for (int i = 0; i < 50; ++i) {
            const Vec x = vec_of({uniform(rng, -3, 3), uniform(rng, -3, 3)});
            const double t = uniform(rng, 0, 1);
            const double h = 1e-5;
            const Vec g = f.grad(x, t);
            const Mat H = f.hess(x, t);
            for (Eigen::Index j = 0; j < 2; ++j) {
                Vec e = Vec::Zero(2);
                e(j) = h;
                EXPECT_NEAR(g(j), (f.value(x + e, t) - f.value(x - e, t)) / (2 * h), 1e-8);
                const Vec gd = (f.grad(x + e, t) - f.grad(x - e, t)) / (2 * h);
                for (Eigen::Index k = 0; k < 2; ++k) EXPECT_NEAR(H(k, j), gd(k), 1e-7);
            }
            EXPECT_NEAR(f.dt(x, t), (f.value(x, t + h) - f.value(x, t - h)) / (2 * h), 1e-8);
        }
    }
}

TEST(Validate, ConstantsModelPasses) {
    const auto m = constant_model(0.0, 0.0, 0.0, 0.06, 1.0, 0.5, 2);
    const auto rep = validate_model(m, 1000, 1);
    EXPECT_TRUE(rep.pass()) << (rep.failures.empty() ? "" : rep.failures.front());
    EXPECT_DOUBLE_EQ(rep.details.at("m0").get<double>(), 1.0);
}

TEST(Validate, ZeroAccountFailsPositivity) {
    auto m = constant_model(0.0, 0.0, 0.0, 0.06, 1.0);
    m.xi = TimeScalar::constant(0.0);
    const auto rep = validate_model(finalize(m), 500, 1);
    EXPECT_FALSE(rep.pass());
    EXPECT_NE(std::find(rep.failures.begin(), rep.failures.end(), "XI"), rep.failures.end());
}

TEST(Validate, TimeIndependentCashFlow) {
    const auto rep = validate_model(inverse_quadratic_model(0.5, 2), 1000, 2);
    EXPECT_EQ(std::find(rep.failures.begin(), rep.failures.end(), "d_t h"), rep.failures.end());
    EXPECT_EQ(rep.details.at("dt_h_linear_envelope").get<double>(), 0.0);
    EXPECT_TRUE(rep.pass());
}

TEST(Validate, NegativeInitialDatumFlagged) {
    const auto rep = validate_model(heat_model(), 1000, 3);
    EXPECT_NE(std::find(rep.failures.begin(), rep.failures.end(), "P3"), rep.failures.end());
    EXPECT_EQ(std::find(rep.failures.begin(), rep.failures.end(), "XI"), rep.failures.end());
}

TEST(Barriers, ZeroData) {
    const auto m = zero_model();
    for (double t : {0.0, 0.3, 0.9}) {
        EXPECT_EQ(lower_barrier(m, t), 0.0);
        EXPECT_EQ(upper_barrier(m, t), 0.0);
    }
    const auto bp = compute_barriers(m);
    EXPECT_EQ(bp.K0, 0.0);
    EXPECT_EQ(bp.c0, 0.0);
}

TEST(Barriers, ClosedFormNoDiscount) {
    const double h0 = 0.7;
    const double tau = 1.0;
    const auto m = constant_model(0.0, h0, 0.0, tau, 1.0);
    for (int i = 0; i < 1000; ++i) {
        const double t = i / 1000.0;
        EXPECT_NEAR(lower_barrier(m, t), oracle::k_lower_const(0.0, h0, 0.0, tau, t), 1e-8);
        EXPECT_NEAR(upper_barrier(m, t), h0 * (t + 1.0), 1e-8);
    }
    const auto bp = compute_barriers(m);
    EXPECT_NEAR(bp.sup_k_lower, h0, 1e-12);
    EXPECT_NEAR(bp.c0, h0, 1e-12);
    EXPECT_NEAR(bp.K0, h0, 1e-12);
}

TEST(Barriers, ClosedFormConstantDiscount) {
    const double r0 = 0.05, h0 = 0.4, u0 = 0.3, tau = 0.08;
    const auto m = constant_model(r0, h0, u0, tau, 2.0);
    const auto bp = compute_barriers(m);
    for (int i = 0; i < 1000; ++i) {
        const double t = 2.0 * i / 1000.0;
        EXPECT_NEAR(bp.k_lower(t), oracle::k_lower_const(r0, h0, u0, tau, t), 1e-8);
    }
    EXPECT_GE(bp.c0, u0);
    EXPECT_DOUBLE_EQ(bp.k_upper(0.0), bp.c0);
}

TEST(Barriers, GeneralModelAgainstRungeKutta) {
    const auto m = desk_model();
    const auto bp = compute_barriers(m);
    // Independent ODE solve of k' = -r k + inf_x (tau - r) h with the
    // Gaussian cash-flow's infimum 0 on R^N reached far out.
    auto rhs = [&m](double t, double k) {
        const double r = m.r(t);
        const double hinf = m.h_inf_x(t);
        return -r * k + (m.tau - r) * hinf;
    };
    for (double t : {0.1, 0.5, 0.99}) {
        EXPECT_NEAR(bp.k_lower(t), oracle::rk4(rhs, m.bounds.U0_inf, t, 2000), 1e-10);
        EXPECT_LE(bp.k_lower(t), bp.k_upper(t));
    }
    EXPECT_GE(bp.c0, m.bounds.U0_sup);
}

TEST(Barriers, Residuals) {
    const auto m = constant_model(0.0, 0.5, 0.0, 1.0, 1.0);
    const auto rep = barrier_residuals(m, 10000, 7);
    EXPECT_TRUE(rep.pass());
    EXPECT_NEAR(rep.details.at("max_residual_sub").get<double>(), 0.0, 1e-12);
    EXPECT_NEAR(rep.details.at("min_residual_super").get<double>(), 0.0, 1e-12);
    const auto desk = barrier_residuals(desk_model(), 10000, 8);
    EXPECT_TRUE(desk.pass()) << desk.max_violation;
    EXPECT_LE(desk.details.at("max_residual_sub").get<double>(), 1e-8);
    EXPECT_GE(desk.details.at("min_residual_super").get<double>(), -1e-8);
}

TEST(Barriers, DomainAndCsv) {
    const auto m = constant_model(0.0, 0.5, 0.0, 1.0, 1.0);
    EXPECT_THROW(lower_barrier(m, 1.0), DomainError);
    EXPECT_THROW(upper_barrier(m, -0.1), DomainError);
    std::ostringstream os;
    write_barrier_csv(os, compute_barriers(m), 4);
    EXPECT_EQ(os.str(), "t,k_lower,k_upper\n0,0,0.5\n0.25,0.125,0.625\n0.5,0.25,0.75\n0.75,0.375,0.875\n");
}

TEST(Transformed, NoCashFlow) {
    const auto m = constant_model(0.0, 0.0, 0.2, 0.06, 1.0);
    const auto d = transformed_problem(m);
    const Vec x = vec_of({0.4});
    EXPECT_EQ(m.g(x, 0.3), 0.0);
    EXPECT_DOUBLE_EQ(d.u0(x), 1.2);
}

TEST(Transformed, ConstantCashFlow) {
    const auto m = constant_model(0.0, 0.3, 0.0, 0.06, 1.0);
    EXPECT_NEAR(m.g(vec_of({1.0}), 0.5), -0.06 * 0.3, 1e-16);
}

TEST(Transformed, InverseQuadraticLaplacian) {
    const double h0 = 0.5;
    for (std::size_t N : {1u, 2u, 3u}) {
        const auto m = inverse_quadratic_model(h0, N);
        std::mt19937_64 rng(N);
        for (int i = 0; i < 20; ++i) {
            Vec x(static_cast<Eigen::Index>(N));
            for (Eigen::Index j = 0; j < x.size(); ++j) x(j) = uniform(rng, -2, 2);
            const double r2 = x.squaredNorm();
            const double expected = 0.5 * oracle::inv_quad_laplacian(h0, r2, static_cast<int>(N)) - m.tau * h0 / (1 + r2);
            EXPECT_NEAR(m.g(x, 0.2), expected, 1e-13);
        }
    }
}

TEST(Transformed, PositivityRequired) {
    auto m = constant_model(0.0, 0.0, 0.0, 0.06, 1.0);
    m.xi = TimeScalar::constant(0.0);
    EXPECT_THROW(transformed_problem(finalize(m)), ModelError);
}

TEST(Regularity, SyntheticConstant) {
    ConstantInputs c;
    c.lip_mu = 1;
    c.lambda2_prime_sup = 2;
    c.w_sup = 1;
    c.lambda1_prime_min = 1;
    c.lambda2_sup = 1;
    c.sigmaT_sup = 1;
    c.lip_w = 0;
    c.lip_f = 1;
    EXPECT_EQ(growth_constant(c, 0.5), 5.0);
    EXPECT_THROW(growth_constant(c, 0.0), PreconditionError);
}

TEST(Regularity, NoCashFlowReducesToLastTerm) {
    auto m = constant_model(0.02, 0.0, 0.1, 0.06, 1.0);
    const double M = default_M(m);
    const auto rd = regularity_constant(m, M);
    EXPECT_NEAR(rd.C, rd.inputs.lip_f * (1.0 / (2.0 * M) + 1.0), 1e-15);
}

TEST(Regularity, LambdaOnePrimeMinimumAtEndpoint) {
    const auto m = desk_model();
    const auto rd = regularity_constant(m, default_M(m));
    double scan = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 10000; ++i) {
        const double v = rd.v_max * i / 10000.0;
        const double E = std::exp(2.0 * v / rd.m0);
        scan = std::min(scan, 4.0 * m.rho / (rd.m0 * rd.m0) * E / ((E + 1) * (E + 1)));
    }
    EXPECT_NEAR(rd.inputs.lambda1_prime_min, scan, 1e-14);
    EXPECT_GT(scan, 0.0);
    EXPECT_NEAR(rd.lambda1_prime(rd.v_max), scan, 1e-14);
}

TEST(Regularity, MustExceedHalfInitialLipschitz) {
    const auto m = desk_model();
    EXPECT_THROW(regularity_constant(m, 0.5 * lip_v0_bound(m)), PreconditionError);
}

TEST(Regularity, BoundArithmetic) {
    RegularityData rd;
    rd.M = 0.5;
    rd.C = 5.0;
    rd.m0 = 1.0;
    rd.M0 = 1.0;
    EXPECT_DOUBLE_EQ(lipschitz_bound(rd, 1.0).v_scale, std::exp(5.0));
    EXPECT_DOUBLE_EQ(lipschitz_bound(rd, 0.0).v_scale, 1.0);
    rd.C = 0.0;
    EXPECT_DOUBLE_EQ(lipschitz_bound(rd, 3.0).v_scale, 1.0);
    rd.M0 = 2.0;
    EXPECT_DOUBLE_EQ(lipschitz_bound(rd, 3.0).u_scale, 3.0);
}

TEST(Structure, DerivedConstantsArePositive) {
    const auto m = desk_model();
    const auto d = transformed_problem(m);
    const auto s = dm2_structure(m, d, 1.0);
    EXPECT_GT(s.C1, 0.0);
    EXPECT_GT(s.C2, 0.0);
    EXPECT_DOUBLE_EQ(s.lambda2, 0.5 * d.m0);
    EXPECT_THROW(dm2_structure(heat_model(), transformed_problem(heat_model()), 1.0), PreconditionError);
}

TEST(Config, ParsesFullModel) {
    const auto j = nlohmann::json::parse(R"({
        "N": 2, "d": 1, "rho": 0.5, "tau": 0.06, "T": 1,
        "sigma": {"form": "constant", "params": {"value": [[0.3], [0.0]]}},
        "mu": {"form": "trig", "params": {"amplitude": 0.1, "frequency": 1}},
        "r": {"form": "constant", "params": {"value": 0.03}},
        "xi": {"form": "exp", "params": {"value": 1, "rate": 0.03}},
        "h": {"form": "gaussian", "params": {"amplitude": 0.5, "width": 1, "decay": 0.1}},
        "U0": {"form": "constant", "params": {"value": 0}},
        "box": {"lo": -4, "hi": [4, 5]},
        "bounds": {"U0_lip": 0.0}
    })");
    const auto m = model_from_json(j);
    EXPECT_EQ(m.N, 2u);
    EXPECT_EQ(m.d, 1u);
    EXPECT_DOUBLE_EQ(m.sigma(0.0)(0, 0), 0.3);
    EXPECT_DOUBLE_EQ(m.box_hi(1), 5.0);
    EXPECT_DOUBLE_EQ(m.bounds.mu_lip, 0.1);
    EXPECT_NEAR(m.xi(1.0), std::exp(0.03), 1e-15);
}

TEST(Config, FieldLevelErrors) {
    auto base = nlohmann::json::parse(R"({
        "N": 1, "rho": 0.5, "tau": 0.06, "T": 1,
        "sigma": {"form": "constant", "params": {"value": 0.3}},
        "mu": {"form": "constant", "params": {"value": 0}},
        "r": {"form": "constant", "params": {"value": 0.03}},
        "xi": {"form": "constant", "params": {"value": 1}},
        "h": {"form": "constant", "params": {"value": 0}},
        "U0": {"form": "constant", "params": {"value": 0}}
    })");
    EXPECT_NO_THROW(model_from_json(base));
    auto expect_msg = [](const nlohmann::json& j, const std::string& needle) {
        try {
            model_from_json(j);
            ADD_FAILURE() << "no error for " << needle;
        } catch (const ConfigError& e) {
            EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
        }
    };
    auto j = base;
    j.erase("tau");
    expect_msg(j, "tau");
    j = base;
    j["h"]["form"] = "spline";
    expect_msg(j, "model.h.form");
    j = base;
    j["bounds"] = {{"bogus", 1}};
    expect_msg(j, "bogus");
    j = base;
    j["N"] = 4;
    expect_msg(j, "model.N");
    j = base;
    j["sigma"]["params"]["value"] = "x";
    expect_msg(j, "model.sigma");
    EXPECT_THROW(load_model("/nonexistent/model.json"), ConfigError);
}
