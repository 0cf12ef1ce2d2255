#include "visc/transform.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace visc;
using namespace visc::transform;

TEST(Gauge, BoundsFromScan) {
    const auto g = shift_sq_gauge(0.0, 1.0);
    EXPECT_DOUBLE_EQ(g.lambda0, 1.0);
    EXPECT_DOUBLE_EQ(g.Lambda0, 4.0);
    EXPECT_TRUE(g.covers(0.2, 0.8));
    EXPECT_FALSE(g.covers(-0.1, 0.8));
}

TEST(Gauge, NonPositiveRejected) {
    EXPECT_THROW(affine_sq_gauge(1.0, 0.5, 0.0, 1.0), ConfigError);
    EXPECT_THROW(arctan_gauge(1.0, -1.0, 1.0), ConfigError);
    EXPECT_THROW(gauge_from_id("cubic", 0.0, 1.0), ConfigError);
    EXPECT_THROW(gauge_from_id("affine-sq:1", 0.0, 1.0), ConfigError);
}

TEST(Gauge, DerivativesMatchFiniteDifferences) {
    std::mt19937_64 rng(3);
    for (const auto& g : {unit_gauge(-1, 1), affine_sq_gauge(2.0, -3.0, -1, 1), shift_sq_gauge(-0.5, 1),
                          exp_gauge(-1, 1), mbs_exp_gauge(1.0, 0.75, 2.0), arctan_gauge(2.0, -3, 3)}) {
        for (int i = 0; i < 200; ++i) {
            const double u = std::uniform_real_distribution<double>(g.lo + 1e-3, g.hi - 1e-3)(rng);
            const double h = 1e-5;
            const double fd = (g.z(u + h) - g.z(u - h)) / (2.0 * h);
            EXPECT_NEAR(g.z_prime(u), fd, 1e-6 * std::max(1.0, std::abs(fd))) << g.name << " u=" << u;
        }
    }
}

TEST(Gauge, CatalogIds) {
    EXPECT_EQ(gauge_from_id("unit", 0, 1).name, "unit");
    EXPECT_DOUBLE_EQ(gauge_from_id("affine-sq:1,0.25", 0.5, 1).z(1.0), 0.5625);
    EXPECT_DOUBLE_EQ(gauge_from_id("mbs-exp:1,2", 0.75, 2).z(1.5), 4.0);
    EXPECT_THROW(gauge_from_id("mbs-exp:2,1", 1.5, 2), ConfigError);
    EXPECT_NEAR(gauge_from_id("arctan:2", -1, 1).z(0.0), 4.0, 1e-15);
}

TEST(Psi, UnitGaugeIsShift) {
    const Transformation T(unit_gauge(-2.0, 3.0), 0.0);
    for (double u : {-2.0, -1.0, 0.0, 0.5, 3.0}) EXPECT_NEAR(T.psi(u), u, 1e-13);
    const Transformation S(unit_gauge(-2.0, 3.0), 1.0);
    for (double v : {-3.0, 0.0, 1.5}) EXPECT_NEAR(S.psi_inverse(v), v + 1.0, 1e-13);
    const auto [d1, d2] = S.inverse_derivatives(0.3);
    EXPECT_DOUBLE_EQ(d1, 1.0);
    EXPECT_DOUBLE_EQ(d2, 0.0);
}

TEST(Psi, ShiftSquareIsLog) {
    const double a = -0.5;
    const Transformation T(shift_sq_gauge(a, 2.0), a);
    for (double u : {-0.5, -0.2, 0.0, 1.0, 2.0}) EXPECT_NEAR(T.psi(u), std::log((u + 1.0) / (a + 1.0)), 1e-12);
    const Transformation Z(shift_sq_gauge(0.0, 2.0), 0.0);
    EXPECT_NEAR(Z.psi_inverse(std::log(2.0)), 1.0, 1e-12);
}

TEST(Psi, ExpGauge) {
    const Transformation T(exp_gauge(-1.0, 1.0), 0.0);
    for (double u : {-1.0, -0.3, 0.0, 0.7, 1.0}) EXPECT_NEAR(T.psi(u), std::exp(u) - 1.0, 1e-12);
}

TEST(Psi, MbsGaugeInverseClosedForm) {
    const double m0 = 1.3;
    const double M0 = 2.9;
    const Transformation T(mbs_exp_gauge(m0, m0, M0), m0);
    const double v_max = 0.5 * m0 * std::log(2.0 * M0 / m0 - 1.0);
    EXPECT_NEAR(T.range_hi(), v_max, 1e-12);
    for (int i = 0; i <= 20; ++i) {
        const double v = v_max * i / 20.0;
        const double E = std::exp(2.0 * v / m0);
        const auto jet = T.inverse_jet(v);
        EXPECT_NEAR(jet.value, 0.5 * m0 * (E + 1.0), 1e-12);
        EXPECT_NEAR(jet.first, E, 1e-11);
        EXPECT_NEAR(jet.second, 2.0 * E / m0, 1e-11);
    }
}

TEST(Psi, StrictlyIncreasingAndRoundTrip) {
    for (const auto& g : {affine_sq_gauge(1.0, 0.5, 0.75, 2.0), arctan_gauge(2.0, -3, 3), exp_gauge(-1, 2)}) {
        const Transformation T(g, g.lo);
        const auto& vals = T.table_values();
        for (std::size_t i = 1; i < vals.size(); ++i) EXPECT_GT(vals[i], vals[i - 1]);
        std::mt19937_64 rng(11);
        for (int i = 0; i < 500; ++i) {
            const double v = std::uniform_real_distribution<double>(T.range_lo(), T.range_hi())(rng);
            EXPECT_NEAR(T.psi(T.psi_inverse(v)), v, 1e-8);
        }
    }
}

TEST(Psi, InverseDerivativeMatchesFiniteDifference) {
    for (const auto& g : {affine_sq_gauge(1.0, 0.5, 0.75, 2.0), arctan_gauge(2.0, -3, 3), shift_sq_gauge(-0.5, 1)}) {
        const Transformation T(g, g.lo);
        for (int i = 1; i < 20; ++i) {
            const double v = T.range_lo() + (T.range_hi() - T.range_lo()) * i / 20.0;
            const double h = 1e-5 * (T.range_hi() - T.range_lo());
            const double fd = (T.psi_inverse(v + h) - T.psi_inverse(v - h)) / (2.0 * h);
            const auto [d1, d2] = T.inverse_derivatives(v);
            EXPECT_NEAR(d1, fd, 1e-6 * std::abs(fd)) << g.name;
            const double fd2 = (T.inverse_derivatives(v + h).first - T.inverse_derivatives(v - h).first) / (2.0 * h);
            EXPECT_NEAR(d2, fd2, 1e-5 * std::max(1.0, std::abs(fd2))) << g.name;
        }
    }
}

TEST(Psi, Errors) {
    const Transformation T(shift_sq_gauge(0.0, 1.0), 0.0);
    EXPECT_THROW((void)T.psi(1.5), DomainError);
    EXPECT_THROW((void)T.psi_inverse(T.range_hi() + 1e-6), RangeError);
    EXPECT_THROW(Transformation(shift_sq_gauge(0.0, 1.0), 2.0), ConfigError);
}
