#pragma once

// Evaluatable Hamiltonians F(x, t, u, p, X) for equations of the form
// d_t u + F(x, t, u, grad u, hess u) = 0, the gauge transformation of the
// unknown, fixture Hamiltonians, and sampled checkers for the structural
// hypotheses of the comparison principle.

#include "visc/check_report.hpp"
#include "visc/core.hpp"
#include "visc/osgood.hpp"
#include "visc/transform.hpp"

#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace visc::ham {

using EvalFn = std::function<double(const Vec& x, double t, double u, const Vec& p, const Mat& X)>;

struct HamiltonianSpec {
    std::string name;
    std::size_t dim = 1;
    double a = 0.0;          ///< working interval [a, b] of the unknown
    double b = 1.0;
    double dom_lo = -1.0;    ///< open evaluation domain of the unknown
    double dom_hi = 2.0;
    double t_max = 1.0;
    double x_lo = -1.0;      ///< sampling box for the state variable
    double x_hi = 1.0;
    EvalFn eval;
    /// Set for Hamiltonians produced by transform_hamiltonian.
    std::shared_ptr<const transform::Transformation> transformation;

    [[nodiscard]] double eps0() const { return std::min(a - dom_lo, dom_hi - b); }
};

/// Spec with evaluation domain (a - eps0, b + eps0).
inline HamiltonianSpec make_spec(std::string name, std::size_t dim, double a, double b, double eps0, double t_max,
                                 EvalFn eval) {
    if (dim == 0) throw ConfigError("state dimension must be positive");
    if (!(b >= a) || !(eps0 > 0.0)) throw ConfigError("need a <= b and eps0 > 0");
    HamiltonianSpec h;
    h.name = std::move(name);
    h.dim = dim;
    h.a = a;
    h.b = b;
    h.dom_lo = a - eps0;
    h.dom_hi = b + eps0;
    h.t_max = t_max;
    h.eval = std::move(eval);
    return h;
}

inline double eval_hamiltonian(const HamiltonianSpec& H, const Vec& x, double t, double u, const Vec& p,
                               const Mat& X) {
    if (!(u > H.dom_lo && u < H.dom_hi)) {
        throw DomainError("unknown u = " + fmt17(u) + " outside the Hamiltonian domain " +
                          interval_str(H.dom_lo, H.dom_hi));
    }
    if (!(t >= 0.0 && t < H.t_max)) {
        throw DomainError("time t = " + fmt17(t) + " outside [0, " + fmt17(H.t_max) + ")");
    }
    const auto n = static_cast<Eigen::Index>(H.dim);
    if (x.size() != n || p.size() != n || X.rows() != n || X.cols() != n) {
        throw DomainError("argument dimensions do not match N = " + std::to_string(H.dim));
    }
    if (!is_symmetric(X)) throw DomainError("Hessian argument X is not symmetric");
    return H.eval(x, t, u, p, X);
}

/// F_z(u, p, X) = F(u, sqrt(z) p, sqrt(z) X + z'/2 p (x) p) / sqrt(z), the
/// gauge form evaluated directly in the original unknown.
inline double eval_gauge_form(const HamiltonianSpec& H, const transform::GaugeFunction& g, const Vec& x, double t,
                              double u, const Vec& p, const Mat& X) {
    const double root = std::sqrt(g.z(u));
    const double half_dz = 0.5 * g.z_prime(u);
    const Mat Xg = root * X + half_dz * (p * p.transpose());
    return H.eval(x, t, u, root * p, Xg) / root;
}

/// F~(x, t, v, p, X) = F(x, t, I(v), I'(v) p, I'(v) X + I''(v) p (x) p) / I'(v)
/// with I the inverse of Psi based at a - eps0/2.
inline HamiltonianSpec transform_hamiltonian(const HamiltonianSpec& H, const transform::GaugeFunction& g) {
    const double lo = H.a - 0.5 * H.eps0();
    const double hi = H.b + 0.5 * H.eps0();
    if (!g.covers(lo, hi)) {
        throw ConfigError("gauge '" + g.name + "' interval " + interval_str(g.lo, g.hi) +
                          " does not cover the Hamiltonian interval " + interval_str(lo, hi));
    }
    transform::GaugeFunction local = g;
    local.lo = lo;
    local.hi = hi;
    auto map = std::make_shared<const transform::Transformation>(local, lo);
    HamiltonianSpec out;
    out.name = H.name + "~" + g.name;
    out.dim = H.dim;
    out.a = map->psi(H.a);
    out.b = map->psi(H.b);
    out.dom_lo = map->range_lo();
    out.dom_hi = map->range_hi();
    out.t_max = H.t_max;
    out.x_lo = H.x_lo;
    out.x_hi = H.x_hi;
    out.transformation = map;
    auto inner = H.eval;
    out.eval = [inner, map](const Vec& x, double t, double v, const Vec& p, const Mat& X) {
        const auto jet = map->inverse_jet(v);
        const Mat Xt = jet.first * X + jet.second * (p * p.transpose());
        return inner(x, t, jet.value, jet.first * p, Xt) / jet.first;
    };
    return out;
}

// ----------------------------------------------------------------------------
// Fixtures
// ----------------------------------------------------------------------------

/// phi(u) = (u^2 + u) log u for u > 0, 0 otherwise.
inline double example1_phi(double u) { return u > 0.0 ? (u * u + u) * std::log(u) : 0.0; }

/// -tr(X) + |p|^2 / (u + 1) + phi(u) on [-1/2, 1/e] with margin 1/4.
inline HamiltonianSpec example1(std::size_t dim = 1) {
    return make_spec("example1", dim, -0.5, kInvE, 0.25, 1.0,
                     [](const Vec&, double, double u, const Vec& p, const Mat& X) {
                         return -X.trace() + p.squaredNorm() / (u + 1.0) + example1_phi(u);
                     });
}

/// One-dimensional -(X - |p|^gamma), written for d_t u + F = 0 so that it is
/// degenerate elliptic. The unknown does not enter; its interval is [1/4, 2]
/// with margin 1/2, placing the transformation base point at 0.
inline HamiltonianSpec example2_power(double gamma = 0.5) {
    return make_spec("example2-power", 1, 0.25, 2.0, 0.5, 1.0,
                     [gamma](const Vec&, double, double, const Vec& p, const Mat& X) {
                         return -(X(0, 0) - std::pow(std::abs(p(0)), gamma));
                     });
}

/// g(p) = log(1 + p) for p > 0, -log(1 - p) otherwise.
inline double example2_log_g(double p) { return p > 0.0 ? std::log1p(p) : -std::log1p(-p); }

/// One-dimensional -(X + g(p)) on [-1, 1] with margin 1/2.
inline HamiltonianSpec example2_log() {
    return make_spec("example2-log", 1, -1.0, 1.0, 0.5, 1.0,
                     [](const Vec&, double, double, const Vec& p, const Mat& X) {
                         return -(X(0, 0) + example2_log_g(p(0)));
                     });
}

/// F = sign * tr(X) on [0, 1] (sign -1 is degenerate elliptic, +1 is not).
inline HamiltonianSpec trace_hamiltonian(double sign, std::size_t dim = 1) {
    return make_spec(sign < 0 ? "neg-trace" : "pos-trace", dim, 0.0, 1.0, 0.5, 1.0,
                     [sign](const Vec&, double, double, const Vec&, const Mat& X) { return sign * X.trace(); });
}

// ----------------------------------------------------------------------------
// Sampling helpers
// ----------------------------------------------------------------------------

namespace sampling {

inline Vec box_point(std::mt19937_64& g, std::size_t n, double lo, double hi) {
    Vec x(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = uniform(g, lo, hi);
    return x;
}

inline Vec clip_ball(Vec v, double R) {
    const double n = v.norm();
    if (n > R) v *= R / n;
    return v;
}

/// Gaussian vector with scale R/2, clipped to the R-ball.
inline Vec ball_point(std::mt19937_64& g, std::size_t n, double R) {
    Vec v(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = 0.5 * R * gaussian(g);
    return clip_ball(std::move(v), R);
}

inline Vec unit_direction(std::mt19937_64& g, std::size_t n) {
    Vec v(static_cast<Eigen::Index>(n));
    do {
        for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = gaussian(g);
    } while (v.norm() == 0.0);
    return v / v.norm();
}

/// Vector whose norm is log-uniform in [R * 10^-7, R].
inline Vec log_radius_point(std::mt19937_64& g, std::size_t n, double R) {
    const double r = R * std::pow(10.0, uniform(g, -7.0, 0.0));
    return r * unit_direction(g, n);
}

/// Symmetric Gaussian matrix with entry scale R/2 and operator norm <= R.
inline Mat sym_matrix(std::mt19937_64& g, std::size_t n, double R) {
    const auto N = static_cast<Eigen::Index>(n);
    Mat A(N, N);
    for (Eigen::Index i = 0; i < N; ++i)
        for (Eigen::Index j = 0; j < N; ++j) A(i, j) = 0.5 * R * gaussian(g);
    Mat S = 0.5 * (A + A.transpose());
    const double nrm = sym_norm(S);
    if (nrm > R) S *= R / nrm;
    return S;
}

inline Mat gaussian_matrix(std::mt19937_64& g, std::size_t rows, std::size_t cols) {
    Mat A(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < A.rows(); ++i)
        for (Eigen::Index j = 0; j < A.cols(); ++j) A(i, j) = gaussian(g);
    return A;
}

inline Mat random_orthogonal(std::mt19937_64& g, std::size_t n) {
    Eigen::HouseholderQR<Mat> qr(gaussian_matrix(g, n, n));
    return qr.householderQ() * Mat::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
}

inline double time_point(std::mt19937_64& g, double t_max) {
    double t = uniform(g, 0.0, t_max);
    return t < t_max ? t : 0.0;
}

}  // namespace sampling

// ----------------------------------------------------------------------------
// Degenerate ellipticity
// ----------------------------------------------------------------------------

/// Samples F(x,t,u,p,X+Y) - F(x,t,u,p,X) with Y = A^T A >= 0.
inline CheckReport check_degenerate_ellipticity(const HamiltonianSpec& H, std::size_t n_samples, std::uint64_t seed,
                                                double R = 10.0) {
    if (n_samples < 1) throw PreconditionError("need at least one sample");
    CheckReport rep;
    rep.check = "degenerate_ellipticity";
    rep.seed = seed;
    std::vector<SampleResult> res(n_samples);
    parallel_for(n_samples, [&](std::size_t i) {
        auto g = sample_engine(seed, i);
        const Vec x = sampling::box_point(g, H.dim, H.x_lo, H.x_hi);
        const double t = sampling::time_point(g, H.t_max);
        const double u = uniform(g, H.a, H.b);
        const Vec p = sampling::ball_point(g, H.dim, R);
        const Mat X = sampling::sym_matrix(g, H.dim, R);
        const Mat A = sampling::gaussian_matrix(g, H.dim, H.dim);
        const Mat Y = A.transpose() * A;
        const double v = eval_hamiltonian(H, x, t, u, p, X + Y) - eval_hamiltonian(H, x, t, u, p, X);
        res[i] = {v, {{"x", to_std(x)}, {"t", {t}}, {"u", {u}}, {"p", to_std(p)}, {"X", to_std(X)}, {"Y", to_std(Y)}},
                  true};
    });
    merge_results(rep, res);
    return rep;
}

// ----------------------------------------------------------------------------
// Gradient modulus
// ----------------------------------------------------------------------------

/// Samples |F(.., p, X) - F(.., q, X)| against s = |p - q| with |p|, |q|,
/// ||X|| <= R. A modulus L s^gamma is fitted on s >= 1e-3 R; the violation is
/// the excess of the finer samples over twice the fitted modulus, which is
/// positive when the difference does not vanish as s -> 0.
inline CheckReport check_gradient_modulus(const HamiltonianSpec& H, double R, std::size_t n_samples,
                                          std::uint64_t seed) {
    if (!(R > 0.0)) throw PreconditionError("R must be positive");
    if (n_samples < 1) throw PreconditionError("need at least one sample");
    CheckReport rep;
    rep.check = "gradient_modulus";
    rep.seed = seed;

    struct Pt {
        double s = 0.0;
        double diff = 0.0;
        SampleTuple sample;
    };
    std::vector<Pt> pts(n_samples);
    parallel_for(n_samples, [&](std::size_t i) {
        auto g = sample_engine(seed, i);
        const Vec x = sampling::box_point(g, H.dim, H.x_lo, H.x_hi);
        const double t = sampling::time_point(g, H.t_max);
        const double u = uniform(g, H.a, H.b);
        const Mat X = sampling::sym_matrix(g, H.dim, R);
        const Vec p = uniform(g, 0.0, 1.0) < 0.5 ? sampling::ball_point(g, H.dim, R)
                                                  : sampling::log_radius_point(g, H.dim, R);
        const double delta = R * std::pow(10.0, uniform(g, -8.0, 0.3));
        const Vec q = sampling::clip_ball(p + delta * sampling::unit_direction(g, H.dim), R);
        const double diff = std::abs(eval_hamiltonian(H, x, t, u, p, X) - eval_hamiltonian(H, x, t, u, q, X));
        pts[i] = {(p - q).norm(), diff,
                  {{"x", to_std(x)}, {"t", {t}}, {"u", {u}}, {"p", to_std(p)}, {"q", to_std(q)}, {"X", to_std(X)}}};
    });

    const double s_cut = 1e-3 * R;
    constexpr int n_bins = 30;
    const double log_lo = std::log10(1e-9 * R);
    const double log_hi = std::log10(2.0 * R);
    std::vector<double> bin_sup(n_bins, -1.0);
    for (const auto& pt : pts) {
        if (!(pt.s > 0.0)) continue;
        int b = static_cast<int>((std::log10(pt.s) - log_lo) / (log_hi - log_lo) * n_bins);
        b = std::clamp(b, 0, n_bins - 1);
        bin_sup[static_cast<std::size_t>(b)] = std::max(bin_sup[static_cast<std::size_t>(b)], pt.diff);
    }
    auto bin_center = [&](int b) { return std::pow(10.0, log_lo + (b + 0.5) * (log_hi - log_lo) / n_bins); };

    // Log-log slope of the binned envelope on [s_cut, 0.1 R]; the envelope may bend at |p - q| ~ 2R.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int m = 0;
    double max_diff = 0.0;
    for (const auto& pt : pts) max_diff = std::max(max_diff, pt.diff);
    for (int b = 0; b < n_bins; ++b) {
        const double c = bin_center(b);
        if (c < s_cut || c > 0.1 * R || bin_sup[static_cast<std::size_t>(b)] <= 0.0) continue;
        const double lx = std::log(c);
        const double ly = std::log(bin_sup[static_cast<std::size_t>(b)]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        ++m;
    }
    ModulusFamily fit = ModulusFamily::zero();
    double slope = 1.0;
    if (max_diff > 0.0) {
        if (m >= 2) slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
        double gamma = 1.0;
        if (slope < 0.95) gamma = std::clamp(std::floor(slope * 20.0) / 20.0, 0.05, 1.0);
        double L = 0.0;
        for (const auto& pt : pts) {
            if (pt.s >= s_cut) L = std::max(L, pt.diff / std::pow(pt.s, gamma));
        }
        fit = gamma == 1.0 ? ModulusFamily::linear(L) : ModulusFamily::power(L, gamma);
    }
    rep.fitted_modulus = fit;

    for (const auto& pt : pts) {
        if (pt.s < s_cut) rep.record(pt.diff - 2.0 * fit(pt.s), pt.sample);
        else ++rep.samples_tested;
    }
    if (!std::isfinite(rep.max_violation)) rep.max_violation = 0.0;

    nlohmann::json env = nlohmann::json::array();
    double smallest = -1.0;
    double largest = -1.0;
    for (int b = 0; b < n_bins; ++b) {
        const double sup = bin_sup[static_cast<std::size_t>(b)];
        if (sup < 0.0) continue;
        env.push_back({bin_center(b), sup});
        if (smallest < 0.0) smallest = sup;
        largest = sup;
    }
    rep.details["envelope"] = env;
    rep.details["loglog_slope"] = slope;
    rep.details["envelope_tends_to_zero"] = largest <= 0.0 || smallest <= 1e-2 * largest;
    return rep;
}

// ----------------------------------------------------------------------------
// Structure condition in (x, y) under the block-matrix constraint
// ----------------------------------------------------------------------------

struct BlockBounds {
    double e1, e2, e3;
};

/// True when -e1 I <= diag(X, Y) <= e2 [[I, -I], [-I, I]] + e3 I.
inline bool satisfies_block_constraint(const Mat& X, const Mat& Y, const BlockBounds& e, double tol = 1e-12) {
    const Eigen::Index n = X.rows();
    Mat D = Mat::Zero(2 * n, 2 * n);
    D.topLeftCorner(n, n) = X;
    D.bottomRightCorner(n, n) = Y;
    Mat J(2 * n, 2 * n);
    const Mat I = Mat::Identity(n, n);
    J << I, -I, -I, I;
    const Mat upper = e.e2 * J + e.e3 * Mat::Identity(2 * n, 2 * n) - D;
    const Mat lower = D + e.e1 * Mat::Identity(2 * n, 2 * n);
    const double scale = tol * std::max(1.0, e.e1 + e.e2 + e.e3);
    return min_eigenvalue(lower) >= -scale && min_eigenvalue(upper) >= -scale;
}

/// Samples F(x,t,u,p,X+Z) - F(y,t,u,p,-Y+Z) + nu2(|x-y|(|p|+1) + e2|x-y|^2)
/// + nu2R(2 e3) >= 0 over block-constrained (X, Y).
inline CheckReport check_structure_cp6(const HamiltonianSpec& H, double R, const ModulusFamily& nu2,
                                       const ModulusFamily& nu2R, std::size_t n_samples, std::uint64_t seed,
                                       std::size_t max_attempts = 1000) {
    if (!(R > 0.0)) throw PreconditionError("R must be positive");
    if (n_samples < 1) throw PreconditionError("need at least one sample");
    CheckReport rep;
    rep.check = "structure_cp6";
    rep.seed = seed;
    std::vector<SampleResult> res(n_samples);
    std::vector<std::size_t> attempts(n_samples, 0);
    std::vector<std::size_t> accepted(n_samples, 0);
    parallel_for(n_samples, [&](std::size_t i) {
        auto g = sample_engine(seed, i);
        const std::size_t N = H.dim;
        const auto n = static_cast<Eigen::Index>(N);
        BlockBounds e{};
        e.e3 = uniform(g, 0.0, R / 8.0);
        if (i % 10 == 9) e.e3 = 0.0;
        e.e2 = uniform(g, 0.0, 0.5 * (R - 3.0 * e.e3));
        e.e1 = uniform(g, 0.0, R - 2.0 * e.e3);
        if (!(R >= std::max(e.e1, 2.0 * e.e2 + e.e3) + 2.0 * e.e3)) {
            throw PreconditionError("sampled block bounds exceed R");
        }
        Mat X = Mat::Zero(n, n);
        Mat Y = Mat::Zero(n, n);
        const std::size_t kind = i % 8;
        if (kind == 1 || kind == 5) {
            const Mat S = sampling::sym_matrix(g, N, 1.0);
            const double nrm = sym_norm(S);
            const double target = uniform(g, 0.0, std::min(e.e1, e.e3));
            X = nrm > 0.0 ? Mat(S * (target / nrm)) : S;
            Y = -X;
        } else if (kind != 0) {
            bool ok = false;
            for (std::size_t k = 0; k < max_attempts && !ok; ++k) {
                ++attempts[i];
                const Mat Q1 = sampling::random_orthogonal(g, N);
                const Mat Q2 = sampling::random_orthogonal(g, N);
                Vec l1(n), l2(n);
                for (Eigen::Index j = 0; j < n; ++j) {
                    l1(j) = uniform(g, -e.e1, e.e2 + e.e3);
                    l2(j) = uniform(g, -e.e1, e.e2 + e.e3);
                }
                X = Q1 * l1.asDiagonal() * Q1.transpose();
                Y = Q2 * l2.asDiagonal() * Q2.transpose();
                X = 0.5 * (X + X.transpose());
                Y = 0.5 * (Y + Y.transpose());
                ok = satisfies_block_constraint(X, Y, e);
            }
            if (!ok) return;
            ++accepted[i];
        }
        if (!satisfies_block_constraint(X, Y, e)) return;

        const Vec x = sampling::box_point(g, N, H.x_lo, H.x_hi);
        Vec y = x;
        Vec p = sampling::ball_point(g, N, R);
        Mat Z = sampling::sym_matrix(g, N, R);
        if (kind == 0) {
            Z.setZero();
        } else {
            const double span = 0.5 * (H.x_hi - H.x_lo);
            y = x + span * std::pow(10.0, uniform(g, -4.0, 0.0)) * sampling::unit_direction(g, N);
        }
        const double t = sampling::time_point(g, H.t_max);
        const double u = uniform(g, H.a, H.b);
        const double lhs = eval_hamiltonian(H, x, t, u, p, X + Z) - eval_hamiltonian(H, y, t, u, p, -Y + Z);
        const double dxy = (x - y).norm();
        const double rhs = -nu2(dxy * (p.norm() + 1.0) + e.e2 * dxy * dxy) - nu2R(2.0 * e.e3);
        res[i] = {rhs - lhs,
                  {{"x", to_std(x)},
                   {"y", to_std(y)},
                   {"t", {t}},
                   {"u", {u}},
                   {"p", to_std(p)},
                   {"X", to_std(X)},
                   {"Y", to_std(Y)},
                   {"Z", to_std(Z)},
                   {"eps", {e.e1, e.e2, e.e3}}},
                  true};
    });
    std::size_t total_attempts = 0, total_accepted = 0;
    for (std::size_t i = 0; i < n_samples; ++i) {
        total_attempts += attempts[i];
        total_accepted += accepted[i];
    }
    if (total_attempts > 0) {
        const double rejection = 1.0 - static_cast<double>(total_accepted) / static_cast<double>(total_attempts);
        rep.details["rejection_rate"] = rejection;
        if (rejection > 0.999) {
            throw SamplingError("block-constraint rejection rate " + fmt17(rejection) +
                                " exceeds 99.9%; use a smaller block scale");
        }
    }
    merge_results(rep, res);
    return rep;
}

// ----------------------------------------------------------------------------
// Osgood-type structure condition
// ----------------------------------------------------------------------------

/// Samples
///   (1/l) F(x,t,u,l q,l X + k q(x)q) - (1/m) F(x,t,v,m q,m X + n q(x)q)
///     + Gamma(u - v) + nuhat((|l^2 - z(u)| + |m^2 - z(v)|)(1 + |q| + ||X||)) >= 0
/// over a <= v <= u <= b, l, m in [inf sqrt z, sup sqrt z], 2k <= z'(u),
/// 2n >= z'(v). The violation is the negated left-hand side.
inline CheckReport check_osgood_structure_cp7(const HamiltonianSpec& H, const transform::GaugeFunction& gauge,
                                              const osgood::OsgoodFunction& gamma, const ModulusFamily& nuhat,
                                              double R, std::size_t n_samples, std::uint64_t seed) {
    if (!(R > 0.0)) throw PreconditionError("R must be positive");
    if (n_samples < 1) throw PreconditionError("need at least one sample");
    if (!gauge.covers(H.a, H.b)) {
        throw ConfigError("gauge '" + gauge.name + "' does not cover the Hamiltonian interval " +
                          interval_str(H.a, H.b));
    }
    const auto bounds = transform::make_gauge(gauge.name, gauge.z, gauge.z_prime, H.a, H.b);
    if (gamma.l < H.b - H.a) {
        throw ConfigError("Gamma is defined on [0, " + fmt17(gamma.l) + "] but u - v reaches " + fmt17(H.b - H.a));
    }
    CheckReport rep;
    rep.check = "osgood_structure_cp7";
    rep.seed = seed;
    const double stated = std::sqrt(bounds.Lambda0 / bounds.lambda0) * (H.b - H.a);
    if (gamma.l < stated) {
        rep.notes.push_back("Gamma domain [0, " + fmt17(gamma.l) + "] is shorter than sqrt(Lambda0/lambda0)(b-a) = " +
                            fmt17(stated) + "; only u - v <= b - a is evaluated");
    }
    const double lam_lo = std::sqrt(bounds.lambda0);
    const double lam_hi = std::sqrt(bounds.Lambda0);
    std::vector<SampleResult> res(n_samples);
    parallel_for(n_samples, [&](std::size_t i) {
        auto g = sample_engine(seed, i);
        const std::size_t N = H.dim;
        const Vec x = sampling::box_point(g, N, H.x_lo, H.x_hi);
        const double t = sampling::time_point(g, H.t_max);
        const Vec q = sampling::ball_point(g, N, R);
        const Mat X = sampling::sym_matrix(g, N, R);
        double u = uniform(g, H.a, H.b);
        double v = uniform(g, H.a, H.b);
        if (v > u) std::swap(u, v);
        const bool canonical = i % 8 == 0;
        if (canonical || uniform(g, 0.0, 1.0) < 0.2) v = u;
        double lam = std::sqrt(gauge.z(u));
        double lam_hat = std::sqrt(gauge.z(v));
        double kap = 0.5 * gauge.z_prime(u);
        double kap_hat = 0.5 * gauge.z_prime(v);
        if (!canonical) {
            if (uniform(g, 0.0, 1.0) < 0.5) lam = uniform(g, lam_lo, lam_hi);
            if (uniform(g, 0.0, 1.0) < 0.5) lam_hat = uniform(g, lam_lo, lam_hi);
            if (uniform(g, 0.0, 1.0) < 0.5) kap -= std::abs(gaussian(g)) * (1.0 + std::abs(kap));
            if (uniform(g, 0.0, 1.0) < 0.5) kap_hat += std::abs(gaussian(g)) * (1.0 + std::abs(kap_hat));
        }
        const Mat qq = q * q.transpose();
        const double left = eval_hamiltonian(H, x, t, u, lam * q, lam * X + kap * qq) / lam;
        const double right = eval_hamiltonian(H, x, t, v, lam_hat * q, lam_hat * X + kap_hat * qq) / lam_hat;
        const double mismatch = (std::abs(lam * lam - gauge.z(u)) + std::abs(lam_hat * lam_hat - gauge.z(v))) *
                                (1.0 + q.norm() + sym_norm(X));
        const double e = left - right + osgood::gamma_eval(gamma, u - v) + nuhat(mismatch);
        res[i] = {-e,
                  {{"x", to_std(x)},
                   {"t", {t}},
                   {"u", {u}},
                   {"v", {v}},
                   {"q", to_std(q)},
                   {"X", to_std(X)},
                   {"lambda", {lam, lam_hat}},
                   {"kappa", {kap, kap_hat}}},
                  true};
    });
    merge_results(rep, res);
    return rep;
}

}  // namespace visc::ham
