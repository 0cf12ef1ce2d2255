#pragma once

// Explicit monotone finite differences for
//   d_t w - 1/2 tr(a(t) D^2 w) - <mu(x,t), Dw> + G(x, t, w, Dw) = 0
// on a truncated box: central second differences, upwind drift and a
// Lax-Friedrichs treatment of G. Also the Feynman-Kac Monte-Carlo oracle for
// the linear case, discrete comparison, Lipschitz audits and refinement.

#include "visc/check_report.hpp"
#include "visc/core.hpp"
#include "visc/hamiltonian.hpp"
#include "visc/mbs.hpp"
#include "visc/transform.hpp"

#include "json.hpp"

#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace visc::solver {

// ----------------------------------------------------------------------------
// Grids and fields
// ----------------------------------------------------------------------------

struct GridSpec {
    Vec lo;
    Vec hi;
    std::vector<std::size_t> nodes;
    double cfl_safety = 0.9;
    std::size_t padding = 1;

    static GridSpec uniform(std::size_t dim, double lo, double hi, std::size_t n, double cfl = 0.9,
                            std::size_t padding = 1) {
        GridSpec g;
        g.lo = Vec::Constant(static_cast<Eigen::Index>(dim), lo);
        g.hi = Vec::Constant(static_cast<Eigen::Index>(dim), hi);
        g.nodes.assign(dim, n);
        g.cfl_safety = cfl;
        g.padding = padding;
        g.validate();
        return g;
    }

    [[nodiscard]] std::size_t dim() const { return nodes.size(); }
    [[nodiscard]] std::size_t total() const {
        std::size_t t = 1;
        for (auto n : nodes) t *= n;
        return t;
    }
    [[nodiscard]] double dx(std::size_t j) const {
        const auto J = static_cast<Eigen::Index>(j);
        return (hi(J) - lo(J)) / static_cast<double>(nodes[j] - 1);
    }
    [[nodiscard]] double max_dx() const {
        double m = 0.0;
        for (std::size_t j = 0; j < dim(); ++j) m = std::max(m, dx(j));
        return m;
    }
    [[nodiscard]] double min_dx() const {
        double m = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < dim(); ++j) m = std::min(m, dx(j));
        return m;
    }
    [[nodiscard]] std::size_t stride(std::size_t j) const {
        std::size_t s = 1;
        for (std::size_t k = 0; k < j; ++k) s *= nodes[k];
        return s;
    }
    /// Index along axis j of the node with linear index idx (axis 0 fastest).
    [[nodiscard]] std::size_t axis_index(std::size_t idx, std::size_t j) const { return (idx / stride(j)) % nodes[j]; }
    [[nodiscard]] Vec point(std::size_t idx) const {
        Vec x(static_cast<Eigen::Index>(dim()));
        for (std::size_t j = 0; j < dim(); ++j) {
            const auto J = static_cast<Eigen::Index>(j);
            x(J) = lo(J) + dx(j) * static_cast<double>(axis_index(idx, j));
        }
        return x;
    }
    [[nodiscard]] bool interior(std::size_t idx) const {
        for (std::size_t j = 0; j < dim(); ++j) {
            const auto k = axis_index(idx, j);
            if (k == 0 || k + 1 == nodes[j]) return false;
        }
        return true;
    }
    /// True when the node lies at least `margin` away from every face.
    [[nodiscard]] bool inside_margin(std::size_t idx, double margin) const {
        const Vec x = point(idx);
        for (Eigen::Index j = 0; j < x.size(); ++j) {
            const double slack = 1e-9 * dx(static_cast<std::size_t>(j));
            if (x(j) - lo(j) < margin - slack || hi(j) - x(j) < margin - slack) return false;
        }
        return true;
    }
    /// Nodes at least `padding` spacings from the boundary.
    [[nodiscard]] bool audited(std::size_t idx) const {
        for (std::size_t j = 0; j < dim(); ++j) {
            const auto k = axis_index(idx, j);
            if (k < padding || k + padding >= nodes[j]) return false;
        }
        return true;
    }
    void validate() const {
        if (nodes.empty() || static_cast<std::size_t>(lo.size()) != nodes.size() ||
            static_cast<std::size_t>(hi.size()) != nodes.size()) {
            throw ConfigError("grid: box and node counts must have one entry per dimension");
        }
        for (std::size_t j = 0; j < dim(); ++j) {
            if (nodes[j] < 8) throw ConfigError("grid: need at least 8 nodes per dimension");
            if (!(dx(j) > 0.0)) throw ConfigError("grid: need lo < hi in every dimension");
        }
        if (!(cfl_safety > 0.0 && cfl_safety <= 1.0)) throw ConfigError("grid: cfl_safety must lie in (0, 1]");
        if (padding < 1) throw ConfigError("grid: padding must be at least 1");
    }
    [[nodiscard]] bool same_as(const GridSpec& o) const {
        return nodes == o.nodes && lo.size() == o.lo.size() && lo == o.lo && hi == o.hi;
    }
};

struct GridField {
    GridSpec grid;
    double t = 0.0;
    std::vector<double> values;
    /// Largest excursion outside [k_lower - tol, k_upper + tol]; set by solve.
    std::optional<double> sandwich_excess;
    bool sandwich_ok = true;
};

/// Resolved by resolve_scheme when left at their defaults (empty / 0).
struct SchemeConfig {
    std::vector<double> theta;   ///< Lax-Friedrichs coefficients per dimension
    double dt = 0.0;             ///< time step; 0 selects the CFL step
    std::size_t record_every = 0;
    double t_end = 0.0;          ///< final time; 0 runs to T - dt
    double p_bound = 0.0;        ///< gradient bound for sampling theta; 0 selects the problem default
    double gw_max = -1.0;        ///< sup of dG/dw used in the CFL bound; negative selects sampling
};

struct QuasilinearProblem {
    std::string name;
    std::size_t N = 1;
    double T = 1.0;
    std::function<Mat(double)> a;
    std::function<Vec(const Vec&, double)> mu;
    std::function<double(const Vec&, double, double, const Vec&)> G;
    std::function<double(const Vec&)> initial;
    double w_lo = 0.0;   ///< state range used to sample dG/dp and dG/dw
    double w_hi = 1.0;
    double p_bound = 1.0;
    /// Optional: true when the positivity guard is active at (x, t, w).
    std::function<bool(const Vec&, double, double)> guard;
};

// ----------------------------------------------------------------------------
// Scheme resolution
// ----------------------------------------------------------------------------

namespace detail {

inline Vec random_box_point(std::mt19937_64& g, const GridSpec& grid) {
    Vec x(static_cast<Eigen::Index>(grid.dim()));
    for (Eigen::Index j = 0; j < x.size(); ++j) x(j) = uniform(g, grid.lo(j), grid.hi(j));
    return x;
}

inline Vec random_ball(std::mt19937_64& g, std::size_t n, double R) {
    const Vec d = ham::sampling::unit_direction(g, n);
    return R * std::pow(uniform(g, 0.0, 1.0), 1.0 / static_cast<double>(n)) * d;
}

/// Largest a_jj, |mu_j| over sampled times and grid nodes.
struct CoefficientMax {
    std::vector<double> a_diag;
    std::vector<double> mu_abs;
};

inline CoefficientMax coefficient_max(const QuasilinearProblem& P, const GridSpec& grid) {
    CoefficientMax c;
    c.a_diag.assign(grid.dim(), 0.0);
    c.mu_abs.assign(grid.dim(), 0.0);
    constexpr int nt = 21;
    const std::size_t total = grid.total();
    const std::size_t stride = std::max<std::size_t>(1, total / 4000);
    for (int k = 0; k <= nt; ++k) {
        const double t = P.T * static_cast<double>(k) / nt;
        const Mat a = P.a(t);
        for (std::size_t j = 0; j < grid.dim(); ++j) {
            c.a_diag[j] = std::max(c.a_diag[j], a(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j)));
        }
        for (std::size_t idx = 0; idx < total; idx += stride) {
            const Vec m = P.mu(grid.point(idx), t);
            for (std::size_t j = 0; j < grid.dim(); ++j) c.mu_abs[j] = std::max(c.mu_abs[j], std::abs(m(static_cast<Eigen::Index>(j))));
        }
    }
    return c;
}

/// Checks that the cross-derivative stencil is monotone at time t.
inline void check_cross_dominance(const Mat& a, const GridSpec& grid) {
    for (std::size_t j = 0; j < grid.dim(); ++j) {
        const auto J = static_cast<Eigen::Index>(j);
        double off = 0.0;
        for (std::size_t k = 0; k < grid.dim(); ++k) {
            if (k != j) off += std::abs(a(J, static_cast<Eigen::Index>(k))) / (grid.dx(j) * grid.dx(k));
        }
        if (0.5 * a(J, J) / (grid.dx(j) * grid.dx(j)) - 0.5 * off < -1e-12) {
            throw ConfigError("diffusion matrix is not diagonally dominant on this grid; the scheme would not be monotone");
        }
    }
}

}  // namespace detail

/// theta_j = 1.2 sup |dG/dp_j| and sup (dG/dw)^+ over 10^4 samples with
/// w in [w_lo, w_hi], |p| <= p_bound, by central differences.
inline std::pair<std::vector<double>, double> sample_G_derivatives(const QuasilinearProblem& P, const GridSpec& grid,
                                                                   double p_bound, std::size_t n = 10000,
                                                                   std::uint64_t seed = 20240611) {
    const std::size_t N = grid.dim();
    std::vector<std::vector<double>> per(n, std::vector<double>(N + 1, 0.0));
    parallel_for(n, [&](std::size_t i) {
        auto g = sample_engine(seed, i);
        const Vec x = detail::random_box_point(g, grid);
        const double t = ham::sampling::time_point(g, P.T);
        const double w = uniform(g, P.w_lo, P.w_hi);
        const Vec p = detail::random_ball(g, N, p_bound);
        for (std::size_t j = 0; j < N; ++j) {
            const auto J = static_cast<Eigen::Index>(j);
            const double h = 1e-6 * std::max(1.0, std::abs(p(J)));
            Vec pp = p, pm = p;
            pp(J) += h;
            pm(J) -= h;
            per[i][j] = std::abs(P.G(x, t, w, pp) - P.G(x, t, w, pm)) / (2.0 * h);
        }
        const double hw = 1e-6 * std::max(1.0, std::abs(w));
        per[i][N] = (P.G(x, t, w + hw, p) - P.G(x, t, w - hw, p)) / (2.0 * hw);
    });
    std::vector<double> theta(N, 0.0);
    double gw = 0.0;
    for (const auto& row : per) {
        for (std::size_t j = 0; j < N; ++j) theta[j] = std::max(theta[j], row[j]);
        gw = std::max(gw, row[N]);
    }
    for (auto& th : theta) th *= 1.2;
    return {theta, 1.2 * gw};
}

/// Largest stable step: cfl / (sum a_jj/dx^2 + |mu_j|/dx + theta_j/dx + sup G_w^+).
inline double cfl_step(const QuasilinearProblem& P, const GridSpec& grid, const SchemeConfig& cfg) {
    const auto c = detail::coefficient_max(P, grid);
    double rate = std::max(0.0, cfg.gw_max);
    for (std::size_t j = 0; j < grid.dim(); ++j) {
        const double h = grid.dx(j);
        rate += c.a_diag[j] / (h * h) + c.mu_abs[j] / h + cfg.theta[j] / h;
    }
    if (rate <= 0.0) return std::numeric_limits<double>::infinity();
    return grid.cfl_safety / rate;
}

/// Fills theta, gw_max, dt, t_end and record_every. An explicit dt above the
/// CFL step is a ConfigError.
inline SchemeConfig resolve_scheme(const QuasilinearProblem& P, const GridSpec& grid, SchemeConfig cfg) {
    grid.validate();
    if (grid.dim() != P.N) throw ConfigError("grid dimension does not match the problem dimension");
    for (int k = 0; k <= 10; ++k) detail::check_cross_dominance(P.a(P.T * k / 10.0), grid);
    if (cfg.p_bound <= 0.0) cfg.p_bound = P.p_bound;
    if (cfg.theta.empty() || cfg.gw_max < 0.0) {
        const auto [theta, gw] = sample_G_derivatives(P, grid, cfg.p_bound);
        if (cfg.theta.empty()) cfg.theta = theta;
        if (cfg.gw_max < 0.0) cfg.gw_max = gw;
    }
    if (cfg.theta.size() != grid.dim()) throw ConfigError("scheme: theta needs one entry per dimension");
    for (double th : cfg.theta) {
        if (!(th >= 0.0)) throw ConfigError("scheme: theta must be nonnegative");
    }
    const double dt_max = cfl_step(P, grid, cfg);
    const double horizon = cfg.t_end > 0.0 ? cfg.t_end : P.T;
    if (cfg.t_end > P.T) throw ConfigError("scheme: t_end exceeds the horizon T");
    if (cfg.dt > 0.0) {
        if (cfg.dt > dt_max * (1.0 + 1e-12)) {
            throw ConfigError("scheme: dt = " + fmt17(cfg.dt) + " violates the CFL bound " + fmt17(dt_max));
        }
    } else {
        const double steps = std::ceil(horizon / std::min(dt_max, horizon));
        cfg.dt = horizon / steps;
    }
    if (cfg.t_end <= 0.0) cfg.t_end = P.T - cfg.dt;
    if (cfg.record_every == 0) {
        const auto steps = static_cast<std::size_t>(std::llround(cfg.t_end / cfg.dt));
        cfg.record_every = std::max<std::size_t>(1, steps / 10);
    }
    return cfg;
}

/// One scheme valid for every problem in `ps` (same grid): largest theta and
/// G_w bound, smallest CFL step. Needed to compare runs node by node.
inline SchemeConfig common_scheme(const std::vector<QuasilinearProblem>& ps, const GridSpec& grid, SchemeConfig cfg) {
    if (ps.empty()) throw ConfigError("common_scheme needs at least one problem");
    std::vector<double> theta(grid.dim(), 0.0);
    double gw = 0.0;
    for (const auto& P : ps) {
        SchemeConfig c = cfg;
        c.dt = 0.0;
        c = resolve_scheme(P, grid, c);
        for (std::size_t j = 0; j < theta.size(); ++j) theta[j] = std::max(theta[j], c.theta[j]);
        gw = std::max(gw, c.gw_max);
    }
    cfg.theta = theta;
    cfg.gw_max = gw;
    if (cfg.dt <= 0.0) {
        double dt_max = std::numeric_limits<double>::infinity();
        for (const auto& P : ps) dt_max = std::min(dt_max, cfl_step(P, grid, cfg));
        const double horizon = cfg.t_end > 0.0 ? cfg.t_end : ps.front().T;
        cfg.dt = horizon / std::ceil(horizon / std::min(dt_max, horizon));
    }
    return resolve_scheme(ps.front(), grid, cfg);
}

// ----------------------------------------------------------------------------
// Time step
// ----------------------------------------------------------------------------

struct StepStats {
    double max_gradient = 0.0;
    bool guard_active = false;
};

namespace detail {

/// Explicit update at an interior node. `a` is the diffusion matrix at t.
inline double update_node(const QuasilinearProblem& P, const GridSpec& grid, const std::vector<double>& u,
                          std::size_t idx, double t, double dt, const SchemeConfig& cfg, const Mat& a,
                          StepStats* stats) {
    const std::size_t N = grid.dim();
    const Vec x = grid.point(idx);
    const double w = u[idx];
    const Vec m = P.mu(x, t);
    Vec p(static_cast<Eigen::Index>(N));
    double lin = 0.0;
    double lf = 0.0;
    for (std::size_t j = 0; j < N; ++j) {
        const auto J = static_cast<Eigen::Index>(j);
        const std::size_t s = grid.stride(j);
        const double h = grid.dx(j);
        const double up = u[idx + s];
        const double dn = u[idx - s];
        p(J) = (up - dn) / (2.0 * h);
        const double second = up - 2.0 * w + dn;
        lin += 0.5 * a(J, J) * second / (h * h);
        lin += m(J) > 0.0 ? m(J) * (up - w) / h : m(J) * (w - dn) / h;
        lf += cfg.theta[j] * second / (2.0 * h);
        for (std::size_t k = j + 1; k < N; ++k) {
            const auto K = static_cast<Eigen::Index>(k);
            const double ajk = a(J, K);
            if (ajk == 0.0) continue;
            const std::size_t sk = grid.stride(k);
            const double hk = grid.dx(k);
            const double axis = 2.0 * w - u[idx + s] - u[idx - s] - u[idx + sk] - u[idx - sk];
            const double cross = ajk > 0.0 ? (u[idx + s + sk] + u[idx - s - sk] + axis) / (2.0 * h * hk)
                                           : -(u[idx + s - sk] + u[idx - s + sk] + axis) / (2.0 * h * hk);
            lin += ajk * cross;
        }
    }
    if (stats) {
        stats->max_gradient = std::max(stats->max_gradient, p.norm());
        if (P.guard && P.guard(x, t, w)) stats->guard_active = true;
    }
    return w + dt * (lin + lf - P.G(x, t, w, p));
}

inline std::size_t clamp_to_interior(const GridSpec& grid, std::size_t idx) {
    std::size_t out = 0;
    for (std::size_t j = 0; j < grid.dim(); ++j) {
        std::size_t k = grid.axis_index(idx, j);
        k = std::clamp<std::size_t>(k, 1, grid.nodes[j] - 2);
        out += k * grid.stride(j);
    }
    return out;
}

/// Per-node CFL check with the actual drift at time t.
inline void check_cfl(const QuasilinearProblem& P, const GridSpec& grid, const SchemeConfig& cfg, double t, double dt,
                      const Mat& a) {
    double base = std::max(0.0, cfg.gw_max);
    for (std::size_t j = 0; j < grid.dim(); ++j) {
        const double h = grid.dx(j);
        base += a(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j)) / (h * h) + cfg.theta[j] / h;
    }
    const std::size_t total = grid.total();
    double worst = base;
    for (std::size_t idx = 0; idx < total; ++idx) {
        if (!grid.interior(idx)) continue;
        const Vec m = P.mu(grid.point(idx), t);
        double rate = base;
        for (std::size_t j = 0; j < grid.dim(); ++j) rate += std::abs(m(static_cast<Eigen::Index>(j))) / grid.dx(j);
        worst = std::max(worst, rate);
    }
    if (dt * worst > 1.0 + 1e-12) {
        throw ConfigError("CFL condition violated: dt = " + fmt17(dt) + " exceeds " + fmt17(1.0 / worst));
    }
}

}  // namespace detail

/// One explicit Euler step from field.t to field.t + dt. Boundary nodes copy
/// the nearest interior node.
inline GridField step(const QuasilinearProblem& P, const GridField& field, const SchemeConfig& cfg, double dt,
                      StepStats* stats = nullptr) {
    if (dt == 0.0) return field;
    if (!(dt > 0.0)) throw ConfigError("time step must be nonnegative");
    const GridSpec& grid = field.grid;
    if (cfg.theta.size() != grid.dim()) throw ConfigError("scheme: theta needs one entry per dimension");
    const Mat a = P.a(field.t);
    detail::check_cross_dominance(a, grid);
    detail::check_cfl(P, grid, cfg, field.t, dt, a);
    GridField out;
    out.grid = grid;
    out.t = field.t + dt;
    out.values.assign(field.values.size(), 0.0);
    const std::size_t total = grid.total();
    const unsigned workers = worker_count();
    std::vector<StepStats> local(std::max(1u, workers));
    const std::size_t chunk = (total + local.size() - 1) / local.size();
    parallel_for(local.size(), [&](std::size_t w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(total, lo + chunk);
        for (std::size_t idx = lo; idx < hi; ++idx) {
            if (grid.interior(idx)) {
                out.values[idx] = detail::update_node(P, grid, field.values, idx, field.t, dt, cfg, a, &local[w]);
            }
        }
    });
    for (std::size_t idx = 0; idx < total; ++idx) {
        if (!grid.interior(idx)) out.values[idx] = out.values[detail::clamp_to_interior(grid, idx)];
    }
    if (stats) {
        for (const auto& s : local) {
            stats->max_gradient = std::max(stats->max_gradient, s.max_gradient);
            stats->guard_active = stats->guard_active || s.guard_active;
        }
    }
    return out;
}

inline GridField initial_field(const QuasilinearProblem& P, const GridSpec& grid) {
    GridField f;
    f.grid = grid;
    f.t = 0.0;
    f.values.resize(grid.total());
    for (std::size_t idx = 0; idx < f.values.size(); ++idx) f.values[idx] = P.initial(grid.point(idx));
    return f;
}

// ----------------------------------------------------------------------------
// Runs
// ----------------------------------------------------------------------------

struct Run {
    GridSpec grid;
    SchemeConfig cfg;
    std::vector<GridField> fields;
    std::size_t steps = 0;
    double max_gradient = 0.0;
    bool p_bound_exceeded = false;
    bool guard_active = false;
    bool sandwich_ok = true;
    std::vector<std::string> notes;
};

using SandwichFn = std::function<std::pair<double, double>(double)>;

/// Runs the scheme to cfg.t_end, recording every cfg.record_every steps and
/// at the final time. With `sandwich`, each recorded field is compared with
/// [lower(t) - tol, upper(t) + tol].
inline Run solve_problem(const QuasilinearProblem& P, const GridSpec& grid, const SchemeConfig& cfg_in,
                         const SandwichFn& sandwich = nullptr, double sandwich_tol = 0.0) {
    Run run;
    run.grid = grid;
    run.cfg = resolve_scheme(P, grid, cfg_in);
    const auto& cfg = run.cfg;
    const auto n_steps = static_cast<std::size_t>(std::llround(cfg.t_end / cfg.dt));
    auto annotate = [&](GridField& f) {
        if (!sandwich) return;
        const auto [lo, hi] = sandwich(f.t);
        double excess = -std::numeric_limits<double>::infinity();
        for (double v : f.values) excess = std::max({excess, (lo - sandwich_tol) - v, v - (hi + sandwich_tol)});
        f.sandwich_excess = excess;
        f.sandwich_ok = excess <= 0.0;
        if (!f.sandwich_ok) {
            run.sandwich_ok = false;
            run.notes.push_back("sandwich violated at t = " + fmt17(f.t) + " by " + fmt17(excess));
        }
    };
    GridField f = initial_field(P, grid);
    annotate(f);
    run.fields.push_back(f);
    StepStats stats;
    for (std::size_t k = 1; k <= n_steps; ++k) {
        GridField next = step(P, f, cfg, cfg.dt, &stats);
        next.t = cfg.dt * static_cast<double>(k);
        f = std::move(next);
        if (k % cfg.record_every == 0 || k == n_steps) {
            annotate(f);
            run.fields.push_back(f);
        }
        for (double v : f.values) {
            if (!std::isfinite(v)) throw ConfigError("non-finite value at t = " + fmt17(f.t) + "; the scheme is unstable");
        }
    }
    run.steps = n_steps;
    run.max_gradient = stats.max_gradient;
    run.guard_active = stats.guard_active;
    if (stats.max_gradient > cfg.p_bound) {
        run.p_bound_exceeded = true;
        run.notes.push_back("discrete gradient " + fmt17(stats.max_gradient) + " exceeded the sampling bound " +
                            fmt17(cfg.p_bound) + "; theta may be too small for monotonicity");
    }
    if (stats.guard_active) run.notes.push_back("positivity guard clamped the denominator of the quadratic term");
    // Padding margin against the numerical domain of dependence.
    const auto c = detail::coefficient_max(P, grid);
    for (std::size_t j = 0; j < grid.dim(); ++j) {
        const double reach = 6.0 * std::sqrt(c.a_diag[j] * cfg.t_end) + (c.mu_abs[j] + cfg.theta[j]) * cfg.t_end;
        const double margin = static_cast<double>(grid.padding) * grid.dx(j);
        if (margin < reach) {
            run.notes.push_back("padding margin " + fmt17(margin) + " along axis " + std::to_string(j) +
                                " is below the dependence reach " + fmt17(reach));
        }
    }
    return run;
}

// ----------------------------------------------------------------------------
// Problems built from the pricing model
// ----------------------------------------------------------------------------

/// The equation for U with G = rho |s^T p|^2 / max(U + h + xi, m0/2)
/// + r (U + h) - tau h.
inline QuasilinearProblem dm1_problem(const mbs::MbsModel& m, const mbs::BarrierPair& bp) {
    QuasilinearProblem P;
    P.name = "dm1";
    P.N = m.N;
    P.T = m.T;
    const auto model = std::make_shared<const mbs::MbsModel>(m);
    const double floor = 0.5 * bp.m0;
    P.a = [model](double t) { return model->ssT(t); };
    P.mu = [model](const Vec& x, double t) { return model->mu(x, t); };
    P.G = [model, floor](const Vec& x, double t, double w, const Vec& p) {
        const double h = model->h.value(x, t);
        const double den = std::max(w + h + model->xi(t), floor);
        const Vec sp = model->sigma(t).transpose() * p;
        return model->rho * sp.squaredNorm() / den + model->r(t) * (w + h) - model->tau * h;
    };
    P.guard = [model, floor](const Vec& x, double t, double w) {
        return w + model->h.value(x, t) + model->xi(t) < floor;
    };
    P.initial = [model](const Vec& x) { return model->U0.value(x, 0.0); };
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (int k = 0; k <= 100; ++k) {
        const double t = m.T * k / 100.0;
        lo = std::min(lo, bp.k_lower(t));
        hi = std::max(hi, bp.k_upper(t));
    }
    const double pad = 0.1 * (hi - lo) + 0.01;
    P.w_lo = lo - pad;
    P.w_hi = hi + pad;
    P.p_bound = 2.0 * (m.bounds.U0_lip + m.bounds.grad_h_sup) + 1.0;
    return P;
}

/// The equation for u = U + h + xi, with the quadratic denominator guarded at m0/2.
inline QuasilinearProblem dm2_u_problem(const mbs::MbsModel& m, const mbs::Dm2Problem& d) {
    QuasilinearProblem P;
    P.name = "dm2-u";
    P.N = m.N;
    P.T = m.T;
    const auto model = std::make_shared<const mbs::MbsModel>(m);
    const double floor = 0.5 * d.m0;
    P.a = [model](double t) { return model->ssT(t); };
    P.mu = [model](const Vec& x, double t) { return model->mu(x, t); };
    P.G = [model, floor](const Vec& x, double t, double u, const Vec& p) {
        const Vec w = model->sigma(t).transpose() * (p - model->h.grad(x, t));
        return model->rho * w.squaredNorm() / std::max(u, floor) + model->r(t) * u + model->g(x, t);
    };
    P.guard = [floor](const Vec&, double, double u) { return u < floor; };
    P.initial = d.u0;
    const double pad = 0.1 * (d.M0 - d.m0) + 0.01;
    P.w_lo = std::max(floor, d.m0 - pad);
    P.w_hi = d.M0 + pad;
    P.p_bound = 2.0 * (m.bounds.U0_lip + 2.0 * m.bounds.grad_h_sup) + 1.0;
    return P;
}

/// Problem for a Hamiltonian of the form -1/2 tr(a X) - <mu, p> + G: the
/// first-order part is recovered as G = F(x, t, w, p, 0) + <mu, p>. Unknowns
/// outside the open domain of F are clamped to it (reported by the guard).
inline QuasilinearProblem hamiltonian_problem(const ham::HamiltonianSpec& H, std::function<Mat(double)> a,
                                              std::function<Vec(const Vec&, double)> mu,
                                              std::function<double(const Vec&)> initial, double p_bound) {
    QuasilinearProblem P;
    P.name = H.name;
    P.N = H.dim;
    P.T = H.t_max;
    P.a = std::move(a);
    P.mu = mu;
    const double span = H.dom_hi - H.dom_lo;
    const double lo = H.dom_lo + 1e-9 * span;
    const double hi = H.dom_hi - 1e-9 * span;
    const auto eval = H.eval;
    const auto N = static_cast<Eigen::Index>(H.dim);
    P.G = [eval, mu, lo, hi, N](const Vec& x, double t, double w, const Vec& p) {
        const double wc = std::clamp(w, lo, hi);
        return eval(x, t, wc, p, Mat::Zero(N, N)) + mu(x, t).dot(p);
    };
    P.guard = [lo, hi](const Vec&, double, double w) { return w < lo || w > hi; };
    P.initial = std::move(initial);
    P.w_lo = H.a;
    P.w_hi = H.b;
    P.p_bound = p_bound;
    return P;
}

/// Transformed problem in v = Psi(u) for the gauge z = (l1 u - l2)^2 with
/// l1 = 1, l2 = m0/2; the returned map sends v back to u.
struct TransformedRun {
    QuasilinearProblem problem;
    std::shared_ptr<const transform::Transformation> map;
};

inline TransformedRun dm2_v_problem(const mbs::MbsModel& m, const mbs::Dm2Problem& d) {
    const double half = 0.5 * d.H.eps0();
    const auto gauge = transform::affine_sq_gauge(1.0, 0.5 * d.m0, d.H.a - half, d.H.b + half);
    auto Ht = ham::transform_hamiltonian(d.H, gauge);
    const auto model = std::make_shared<const mbs::MbsModel>(m);
    const auto map = Ht.transformation;
    const auto u0 = d.u0;
    auto initial = [map, u0](const Vec& x) { return map->psi(u0(x)); };
    // Dv = Du / sqrt z and sqrt z >= m0/2 on the domain.
    const double p_bound = (2.0 * (m.bounds.U0_lip + 2.0 * m.bounds.grad_h_sup) + 1.0) / (0.5 * d.m0);
    auto P = hamiltonian_problem(
        Ht, [model](double t) { return model->ssT(t); }, [model](const Vec& x, double t) { return model->mu(x, t); },
        initial, p_bound);
    P.name = "dm2-v";
    return {std::move(P), map};
}

/// Sandwich tolerance 2 dx (1 + K0).
inline double sandwich_tolerance(const GridSpec& grid, const mbs::BarrierPair& bp) {
    return 2.0 * grid.max_dx() * (1.0 + bp.K0);
}

/// Solves the pricing equation for U. Only a failure of the positivity
/// condition XI is fatal; other validation failures are attached as notes.
inline Run solve(const mbs::MbsModel& m, const GridSpec& grid, const SchemeConfig& cfg, std::uint64_t seed = 7) {
    const auto bp = mbs::compute_barriers(m);
    if (!(bp.m0 > 0.0)) throw ModelError("condition XI fails: inf(k_lower + h + xi) = " + fmt17(bp.m0));
    const auto report = mbs::validate_model(m, 1000, seed);
    const auto P = dm1_problem(m, bp);
    const double tol = sandwich_tolerance(grid, bp);
    auto run = solve_problem(
        P, grid, cfg, [&bp](double t) { return std::make_pair(bp.k_lower(t), bp.k_upper(t)); }, tol);
    for (const auto& f : report.failures) run.notes.push_back("model validation failed: " + f);
    return run;
}

// ----------------------------------------------------------------------------
// Checks on runs
// ----------------------------------------------------------------------------

inline void require_matching(const Run& a, const Run& b) {
    if (!a.grid.same_as(b.grid)) throw ConfigError("runs use different grids");
    if (a.fields.size() != b.fields.size()) throw ConfigError("runs record different numbers of fields");
    for (std::size_t k = 0; k < a.fields.size(); ++k) {
        if (std::abs(a.fields[k].t - b.fields[k].t) > 1e-12 * std::max(1.0, a.fields[k].t)) {
            throw ConfigError("runs record different times");
        }
    }
}

/// max over recorded times and nodes of (a - b)^+; passes when <= 1e-12.
inline CheckReport discrete_comparison(const Run& run_a, const Run& run_b) {
    require_matching(run_a, run_b);
    CheckReport rep;
    rep.check = "discrete_comparison";
    rep.threshold = 1e-12;
    double worst = 0.0;
    SampleTuple where;
    for (std::size_t k = 0; k < run_a.fields.size(); ++k) {
        const auto& fa = run_a.fields[k].values;
        const auto& fb = run_b.fields[k].values;
        for (std::size_t i = 0; i < fa.size(); ++i) {
            const double d = fa[i] - fb[i];
            if (d > worst || where.empty()) {
                if (d > worst) worst = d;
                where = {{"t", {run_a.fields[k].t}}, {"x", to_std(run_a.grid.point(i))}, {"a", {fa[i]}}, {"b", {fb[i]}}};
            }
        }
        rep.samples_tested += fa.size();
    }
    rep.max_violation = worst;
    rep.worst_sample = where;
    return rep;
}

/// Monotonicity probe: raising one neighbor by delta must not lower the
/// update. Configurations are random perturbations of a constant state with
/// discrete gradients inside the sampling bound.
inline CheckReport monotonicity_probe(const QuasilinearProblem& P, const GridSpec& grid, const SchemeConfig& cfg,
                                      std::size_t n, std::uint64_t seed, double delta = 1e-6) {
    CheckReport rep;
    rep.check = "monotonicity_probe";
    rep.seed = seed;
    rep.threshold = 1e-12;
    const std::size_t N = grid.dim();
    const double amp = 0.45 * cfg.p_bound * grid.min_dx() / std::sqrt(static_cast<double>(N));
    std::vector<SampleResult> res(n);
    parallel_for(n, [&](std::size_t i) {
        auto g = sample_engine(seed, i);
        // Pick an interior node.
        std::size_t idx = 0;
        for (std::size_t j = 0; j < N; ++j) {
            const auto k = static_cast<std::size_t>(uniform(g, 1.0, static_cast<double>(grid.nodes[j] - 1)));
            idx += std::clamp<std::size_t>(k, 1, grid.nodes[j] - 2) * grid.stride(j);
        }
        const double base = uniform(g, P.w_lo, P.w_hi);
        std::vector<double> u(grid.total(), base);
        std::vector<std::size_t> stencil{idx};
        for (std::size_t j = 0; j < N; ++j) {
            const std::size_t s = grid.stride(j);
            stencil.push_back(idx + s);
            stencil.push_back(idx - s);
            for (std::size_t k = j + 1; k < N; ++k) {
                const std::size_t sk = grid.stride(k);
                stencil.push_back(idx + s + sk);
                stencil.push_back(idx - s - sk);
                stencil.push_back(idx + s - sk);
                stencil.push_back(idx - s + sk);
            }
        }
        for (auto s : stencil) u[s] = base + amp * uniform(g, -1.0, 1.0);
        u[idx] = std::clamp(u[idx], P.w_lo, P.w_hi);
        const double t = uniform(g, 0.0, cfg.t_end > 0.0 ? cfg.t_end : P.T);
        const Mat a = P.a(t);
        const double before = detail::update_node(P, grid, u, idx, t, cfg.dt, cfg, a, nullptr);
        const std::size_t which = stencil[1 + static_cast<std::size_t>(uniform(g, 0.0, 1.0) * (stencil.size() - 1)) %
                                             (stencil.size() - 1)];
        u[which] += delta;
        const double after = detail::update_node(P, grid, u, idx, t, cfg.dt, cfg, a, nullptr);
        res[i] = {before - after, {{"x", to_std(grid.point(idx))}, {"t", {t}}, {"neighbor", to_std(grid.point(which))}},
                  true};
    });
    merge_results(rep, res);
    return rep;
}

/// Adjacent-node difference quotients of U against the u-scale Lipschitz
/// bound plus sup |Dh|, with slack 2 dx bound.
inline CheckReport lipschitz_audit(const Run& run, const mbs::RegularityData& rd) {
    CheckReport rep;
    rep.check = "lipschitz_audit";
    const GridSpec& grid = run.grid;
    nlohmann::json per_time = nlohmann::json::array();
    for (const auto& f : run.fields) {
        const double bound = mbs::lipschitz_bound(rd, f.t).u_scale + rd.grad_h_sup;
        const double slack = 2.0 * grid.max_dx() * bound;
        double worst_q = 0.0;
        for (std::size_t idx = 0; idx < f.values.size(); ++idx) {
            for (std::size_t j = 0; j < grid.dim(); ++j) {
                if (grid.axis_index(idx, j) + 1 >= grid.nodes[j]) continue;
                const double q = std::abs(f.values[idx + grid.stride(j)] - f.values[idx]) / grid.dx(j);
                worst_q = std::max(worst_q, q);
            }
        }
        rep.record(worst_q - (bound + slack), {{"t", {f.t}}, {"quotient", {worst_q}}, {"bound", {bound}}});
        per_time.push_back({{"t", f.t}, {"max_quotient", worst_q}, {"bound", bound}, {"slack", slack}});
    }
    rep.details["per_time"] = per_time;
    rep.details["C"] = rd.C;
    rep.details["M"] = rd.M;
    return rep;
}

// ----------------------------------------------------------------------------
// Monte-Carlo oracle
// ----------------------------------------------------------------------------

struct McEstimate {
    double estimate = 0.0;
    double stderr_ = 0.0;
};

/// Feynman-Kac estimate for rho = 0:
///   E[ D_t U0(X_t) + int_0^t D_s (tau - r) h(X_s, t - s) ds ],
/// D_s = exp(-int_{t-s}^t r), with Euler-Maruyama paths
/// dX = mu(X, t - s) ds + sigma(t - s) dW from x. The time integral uses the
/// trapezoid rule on the path grid.
inline McEstimate mc_oracle(const mbs::MbsModel& m, const Vec& x, double t, std::size_t n_paths, std::size_t n_steps,
                            std::uint64_t seed) {
    if (m.rho != 0.0) throw PreconditionError("the Monte-Carlo oracle needs rho = 0");
    if (n_paths < 2 || n_steps < 1) throw PreconditionError("need at least 2 paths and 1 step");
    if (!(t >= 0.0 && t < m.T)) throw DomainError("time " + fmt17(t) + " outside [0, T)");
    if (static_cast<std::size_t>(x.size()) != m.N) throw DomainError("point dimension does not match the model");
    const double ds = t / static_cast<double>(n_steps);
    const double Rt = m.r.integral(t);
    auto discount = [&](double s) { return std::exp(-(Rt - m.r.integral(t - s))); };
    auto source = [&](const Vec& X, double s) { return (m.tau - m.r(t - s)) * m.h.value(X, t - s); };
    std::vector<double> vals(n_paths);
    const auto d = static_cast<Eigen::Index>(m.d);
    parallel_for(n_paths, [&](std::size_t i) {
        auto g = sample_engine(seed, i);
        Vec X = x;
        double integral = 0.0;
        double prev = source(X, 0.0);
        Vec dW(d);
        for (std::size_t k = 0; k < n_steps; ++k) {
            const double s = ds * static_cast<double>(k);
            for (Eigen::Index j = 0; j < d; ++j) dW(j) = std::sqrt(ds) * gaussian(g);
            X = X + ds * m.mu(X, t - s) + m.sigma(t - s) * dW;
            const double s1 = s + ds;
            const double cur = discount(s1) * source(X, s1);
            integral += 0.5 * ds * (prev * (k == 0 ? discount(0.0) : 1.0) + cur);
            prev = cur;
        }
        vals[i] = discount(t) * m.U0.value(X, 0.0) + integral;
    });
    const double n = static_cast<double>(n_paths);
    const double mean = pairwise_sum(vals) / n;
    std::vector<double> sq(n_paths);
    for (std::size_t i = 0; i < n_paths; ++i) sq[i] = (vals[i] - mean) * (vals[i] - mean);
    const double var = pairwise_sum(sq) / (n - 1.0);
    return {mean, std::sqrt(var / n)};
}

// ----------------------------------------------------------------------------
// Refinement
// ----------------------------------------------------------------------------

struct RefinementRow {
    std::size_t grid = 0;
    double dx = 0.0;
    double diff = std::numeric_limits<double>::quiet_NaN();
    double order = std::numeric_limits<double>::quiet_NaN();
};

/// Each grid must refine the previous one by 2 on the same box.
inline void require_nested(const std::vector<GridSpec>& grids) {
    if (grids.size() < 3) throw ConfigError("refinement needs at least three grids");
    for (std::size_t k = 1; k < grids.size(); ++k) {
        const auto& c = grids[k - 1];
        const auto& f = grids[k];
        if (c.dim() != f.dim() || c.lo != f.lo || c.hi != f.hi) throw ConfigError("refinement grids must share the box");
        for (std::size_t j = 0; j < c.dim(); ++j) {
            if (f.nodes[j] - 1 != 2 * (c.nodes[j] - 1)) throw ConfigError("refinement grids must halve the spacing");
        }
    }
}

/// Index on the fine grid of coarse node idx.
inline std::size_t fine_index(const GridSpec& coarse, const GridSpec& fine, std::size_t idx) {
    std::size_t out = 0;
    for (std::size_t j = 0; j < coarse.dim(); ++j) out += 2 * coarse.axis_index(idx, j) * fine.stride(j);
    return out;
}

/// Final fields of runs on nested grids to a common t_end; diff_k is the sup
/// norm between grid k and grid k-1 at the coarse nodes of the audited region
/// (padding of the first grid), order = log2 of successive diff ratios.
inline std::vector<RefinementRow> refinement_table(const std::vector<Run>& runs) {
    std::vector<GridSpec> grids;
    for (const auto& r : runs) grids.push_back(r.grid);
    require_nested(grids);
    const double margin = static_cast<double>(grids[0].padding) * grids[0].max_dx();
    std::vector<RefinementRow> rows;
    for (std::size_t k = 0; k < runs.size(); ++k) {
        RefinementRow row;
        row.grid = k;
        row.dx = runs[k].grid.max_dx();
        if (k > 0) {
            const auto& c = runs[k - 1].fields.back();
            const auto& f = runs[k].fields.back();
            if (std::abs(c.t - f.t) > 1e-9) throw ConfigError("refinement runs end at different times");
            double d = 0.0;
            for (std::size_t i = 0; i < c.values.size(); ++i) {
                if (!c.grid.inside_margin(i, margin)) continue;
                d = std::max(d, std::abs(f.values[fine_index(c.grid, f.grid, i)] - c.values[i]));
            }
            row.diff = d;
            if (k > 1 && rows.back().diff > 0.0 && d > 0.0) row.order = std::log2(rows.back().diff / d);
        }
        rows.push_back(row);
    }
    return rows;
}

inline std::vector<RefinementRow> refinement_study(const QuasilinearProblem& P, const std::vector<GridSpec>& grids,
                                                   const SchemeConfig& cfg) {
    require_nested(grids);
    if (!(cfg.t_end > 0.0)) throw ConfigError("refinement needs an explicit t_end shared by all grids");
    std::vector<Run> runs;
    for (const auto& g : grids) {
        SchemeConfig c = cfg;
        c.dt = 0.0;
        c.record_every = std::numeric_limits<std::size_t>::max();
        runs.push_back(solve_problem(P, g, c));
    }
    return refinement_table(runs);
}

inline std::vector<RefinementRow> refinement_study(const mbs::MbsModel& m, const std::vector<GridSpec>& grids,
                                                   SchemeConfig cfg) {
    const auto bp = mbs::compute_barriers(m);
    if (!(bp.m0 > 0.0)) throw ModelError("condition XI fails: inf(k_lower + h + xi) = " + fmt17(bp.m0));
    if (!(cfg.t_end > 0.0)) cfg.t_end = 0.5 * m.T;
    return refinement_study(dm1_problem(m, bp), grids, cfg);
}

/// Multilinear interpolation of a field at x inside the grid box.
inline double interpolate(const GridField& f, const Vec& x) {
    const auto& g = f.grid;
    if (static_cast<std::size_t>(x.size()) != g.dim()) throw ConfigError("point dimension does not match the grid");
    std::vector<std::size_t> base(g.dim());
    std::vector<double> frac(g.dim());
    for (std::size_t j = 0; j < g.dim(); ++j) {
        const auto J = static_cast<Eigen::Index>(j);
        if (!(x(J) >= g.lo(J) && x(J) <= g.hi(J))) throw DomainError("point outside the grid box");
        const double s = (x(J) - g.lo(J)) / g.dx(j);
        const auto k = std::min(static_cast<std::size_t>(s), g.nodes[j] - 2);
        base[j] = k;
        frac[j] = s - static_cast<double>(k);
    }
    double out = 0.0;
    for (std::size_t corner = 0; corner < (std::size_t{1} << g.dim()); ++corner) {
        double w = 1.0;
        std::size_t idx = 0;
        for (std::size_t j = 0; j < g.dim(); ++j) {
            const bool up = (corner >> j) & 1U;
            w *= up ? frac[j] : 1.0 - frac[j];
            idx += (base[j] + (up ? 1 : 0)) * g.stride(j);
        }
        if (w != 0.0) out += w * f.values[idx];
    }
    return out;
}

// ----------------------------------------------------------------------------
// Output
// ----------------------------------------------------------------------------

namespace detail {
inline std::string csv_num(double v) { return std::isfinite(v) ? fmt17(v) : std::string(); }
}  // namespace detail

/// Columns t, x1..xN, U for every recorded field.
inline void write_snapshots_csv(std::ostream& os, const Run& run) {
    os << 't';
    for (std::size_t j = 0; j < run.grid.dim(); ++j) os << ",x" << (j + 1);
    os << ",U\n";
    for (const auto& f : run.fields) {
        for (std::size_t idx = 0; idx < f.values.size(); ++idx) {
            os << fmt17(f.t);
            const Vec x = run.grid.point(idx);
            for (Eigen::Index j = 0; j < x.size(); ++j) os << ',' << fmt17(x(j));
            os << ',' << fmt17(f.values[idx]) << '\n';
        }
    }
}

inline void write_refinement_csv(std::ostream& os, const std::vector<RefinementRow>& rows) {
    os << "grid,dx,diff,order\n";
    for (const auto& r : rows) {
        os << r.grid << ',' << fmt17(r.dx) << ',' << detail::csv_num(r.diff) << ',' << detail::csv_num(r.order) << '\n';
    }
}

// ----------------------------------------------------------------------------
// Configuration files
// ----------------------------------------------------------------------------

inline GridSpec grid_from_json(const nlohmann::json& j, std::size_t N) {
    if (!j.is_object()) throw ConfigError("grid: expected a JSON object");
    GridSpec g;
    g.lo = mbs::detail::vector_param(mbs::detail::require(j, "lo", "grid"), N, "grid.lo");
    g.hi = mbs::detail::vector_param(mbs::detail::require(j, "hi", "grid"), N, "grid.hi");
    const auto& n = mbs::detail::require(j, "nodes", "grid");
    if (n.is_number_integer()) {
        g.nodes.assign(N, n.get<std::size_t>());
    } else if (n.is_array() && n.size() == N) {
        for (const auto& e : n) {
            if (!e.is_number_integer()) throw ConfigError("grid.nodes: expected integers");
            g.nodes.push_back(e.get<std::size_t>());
        }
    } else {
        throw ConfigError("grid.nodes: expected an integer or an array of length " + std::to_string(N));
    }
    g.cfl_safety = mbs::detail::number(j, "cfl_safety", "grid", 0.9);
    const double pad = mbs::detail::number(j, "padding", "grid", 1.0);
    if (!(pad >= 1.0 && pad == std::floor(pad))) throw ConfigError("grid.padding: expected an integer >= 1");
    g.padding = static_cast<std::size_t>(pad);
    g.validate();
    return g;
}

inline SchemeConfig scheme_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("scheme: expected a JSON object");
    SchemeConfig c;
    if (j.contains("theta")) {
        const auto& th = j.at("theta");
        if (!th.is_array()) throw ConfigError("scheme.theta: expected an array");
        for (const auto& e : th) {
            if (!e.is_number()) throw ConfigError("scheme.theta: expected numbers");
            c.theta.push_back(e.get<double>());
        }
    }
    c.dt = mbs::detail::number(j, "dt", "scheme", 0.0);
    c.t_end = mbs::detail::number(j, "t_end", "scheme", 0.0);
    c.p_bound = mbs::detail::number(j, "p_bound", "scheme", 0.0);
    const double re = mbs::detail::number(j, "record_every", "scheme", 0.0);
    if (!(re >= 0.0 && re == std::floor(re))) throw ConfigError("scheme.record_every: expected a nonnegative integer");
    c.record_every = static_cast<std::size_t>(re);
    if (c.dt < 0.0 || c.t_end < 0.0 || c.p_bound < 0.0) throw ConfigError("scheme: dt, t_end and p_bound must be >= 0");
    return c;
}

}  // namespace visc::solver
