#pragma once

// Osgood-type functions: catalog, divergence scores of the reciprocal
// integral, the supremum formula behind the x log x example, and the
// explicit Euler flow of f' = Gamma(f).

#include "visc/core.hpp"

#include <ostream>
#include <string>
#include <vector>

namespace visc::osgood {

/// Nondecreasing Gamma on [0, l] with Gamma(0) = 0.
struct OsgoodFunction {
    enum class Tag { osgood_claimed, non_osgood_claimed };

    std::string name;
    double l = 1.0;
    std::function<double(double)> eval;
    Tag tag = Tag::osgood_claimed;
};

/// h log(1/h) on (0, 1/e), continued by the constant 1/e on [1/e, l].
inline double xlog_value(double h) {
    if (h <= 0.0) return 0.0;
    if (h < kInvE) return h * std::log(1.0 / h);
    return kInvE;
}

inline OsgoodFunction make_linear(double L, double l = 1.0) {
    if (!(L > 0.0)) throw ConfigError("linear Gamma needs a positive rate");
    return {"linear:" + fmt17(L), l, [L](double r) { return L * r; }, OsgoodFunction::Tag::osgood_claimed};
}

inline OsgoodFunction make_power(double gamma, double l = 1.0) {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("power Gamma needs an exponent in (0, 1]");
    const auto tag = gamma == 1.0 ? OsgoodFunction::Tag::osgood_claimed : OsgoodFunction::Tag::non_osgood_claimed;
    return {"power:" + fmt17(gamma), l, [gamma](double r) { return r <= 0.0 ? 0.0 : std::pow(r, gamma); }, tag};
}

/// The x log x modulus, capped at l = 1/e + 1/2.
inline OsgoodFunction make_xlog() {
    return {"xlog", kInvE + 0.5, xlog_value, OsgoodFunction::Tag::osgood_claimed};
}

/// Parses "linear:L", "power:gamma" or "xlog"; an optional ",l=<value>"
/// suffix overrides the domain endpoint of the first two.
inline OsgoodFunction from_id(const std::string& id) {
    if (id == "xlog") return make_xlog();
    const auto colon = id.find(':');
    if (colon == std::string::npos) throw ConfigError("unknown Gamma identifier '" + id + "'");
    const std::string kind = id.substr(0, colon);
    std::string rest = id.substr(colon + 1);
    double l = 1.0;
    if (const auto comma = rest.find(",l="); comma != std::string::npos) {
        l = std::stod(rest.substr(comma + 3));
        rest = rest.substr(0, comma);
    }
    double param = 0.0;
    try {
        param = std::stod(rest);
    } catch (const std::exception&) {
        throw ConfigError("bad parameter in Gamma identifier '" + id + "'");
    }
    if (!(l > 0.0)) throw ConfigError("Gamma domain endpoint must be positive");
    if (kind == "linear") return make_linear(param, l);
    if (kind == "power") return make_power(param, l);
    throw ConfigError("unknown Gamma identifier '" + id + "'");
}

/// Gamma_0(theta) = Gamma(scale * theta) on [0, l / scale].
inline OsgoodFunction rescaled(const OsgoodFunction& g, double scale) {
    if (!(scale > 0.0)) throw ConfigError("rescaling factor must be positive");
    auto inner = g.eval;
    return {g.name + "*" + fmt17(scale), g.l / scale, [inner, scale](double t) { return inner(scale * t); }, g.tag};
}

inline double gamma_eval(const OsgoodFunction& g, double h) {
    if (!(h >= 0.0 && h <= g.l)) {
        throw DomainError("Gamma argument " + fmt17(h) + " outside [0, " + fmt17(g.l) + "]");
    }
    return g.eval(h);
}

/// Checks Gamma(0) = 0 and monotonicity on an n-point grid of [0, l].
/// Returns the largest decrease found (0 when nondecreasing) or +inf when
/// Gamma(0) != 0.
inline double catalog_defect(const OsgoodFunction& g, std::size_t n = 1000) {
    if (g.eval(0.0) != 0.0) return std::numeric_limits<double>::infinity();
    double worst = 0.0;
    double prev = 0.0;
    for (std::size_t i = 1; i < n; ++i) {
        const double v = g.eval(g.l * static_cast<double>(i) / static_cast<double>(n - 1));
        worst = std::max(worst, prev - v);
        prev = v;
    }
    return worst;
}

// ----------------------------------------------------------------------------
// Supremum formula
// ----------------------------------------------------------------------------

/// x log x extended by 0 for x <= 0.
inline double xlogx_ext(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

/// sup over x in [lo, hi] of x log x - (x + h) log(x + h), by grid search
/// refined with a ternary search around the best node.
inline double sup_formula(double h, double lo, double hi, std::size_t n_grid = 2000) {
    if (n_grid < 100) throw PreconditionError("sup_formula needs at least 100 grid points");
    if (!(h >= 0.0)) throw PreconditionError("sup_formula needs h >= 0");
    if (!(hi > lo)) throw PreconditionError("sup_formula needs a nonempty interval");
    const auto f = [h](double x) { return xlogx_ext(x) - xlogx_ext(x + h); };
    const double step = (hi - lo) / static_cast<double>(n_grid - 1);
    std::size_t best = 0;
    double best_val = f(lo);
    for (std::size_t i = 1; i < n_grid; ++i) {
        const double v = f(lo + step * static_cast<double>(i));
        if (v > best_val) {
            best_val = v;
            best = i;
        }
    }
    double a = lo + step * static_cast<double>(best > 0 ? best - 1 : 0);
    double b = lo + step * static_cast<double>(std::min(best + 1, n_grid - 1));
    for (int it = 0; it < 200 && b - a > 1e-15; ++it) {
        const double m1 = a + (b - a) / 3.0;
        const double m2 = b - (b - a) / 3.0;
        if (f(m1) < f(m2)) a = m1;
        else b = m2;
    }
    return std::max(best_val, f(0.5 * (a + b)));
}

// ----------------------------------------------------------------------------
// Divergence of the reciprocal integral
// ----------------------------------------------------------------------------

/// Integral of 1/Gamma over [eps, l] for each eps. Integrates in log r, where
/// the integrand r / Gamma(r) is smooth for the catalog entries.
inline std::vector<double> divergence_score(const OsgoodFunction& g, const std::vector<double>& eps_sequence,
                                            double tol = 1e-12) {
    std::vector<double> out;
    out.reserve(eps_sequence.size());
    const auto integrand = [&g](double s) {
        const double r = std::exp(s);
        const double v = g.eval(r);
        if (!(v > 0.0)) throw DivisionError("Gamma vanishes at r = " + fmt17(r), r);
        return r / v;
    };
    double prev_eps = g.l;
    double acc = 0.0;
    for (double eps : eps_sequence) {
        if (!(eps > 0.0 && eps < g.l)) throw PreconditionError("eps values must lie in (0, l)");
        if (eps > prev_eps) throw PreconditionError("eps sequence must be decreasing");
        // Each eps adds the piece [eps, prev_eps]; tolerances scale with the piece length.
        const double a = std::log(eps);
        const double b = std::log(prev_eps);
        acc += integrate(integrand, a, b, tol * std::max(1.0, b - a), 60);
        out.push_back(acc);
        prev_eps = eps;
    }
    return out;
}

inline std::vector<double> default_eps_sequence() {
    std::vector<double> eps;
    for (int k = 2; k <= 12; ++k) eps.push_back(std::pow(10.0, -k));
    return eps;
}

/// Heuristic label for a score sequence: "osgood-consistent" when each of the
/// last two increments is at least half the increment before it. Never a proof.
inline bool osgood_consistent(const std::vector<double>& scores) {
    if (scores.size() < 4) return false;
    const std::size_t n = scores.size();
    const double d1 = scores[n - 3] - scores[n - 4];
    const double d2 = scores[n - 2] - scores[n - 3];
    const double d3 = scores[n - 1] - scores[n - 2];
    return d1 > 0.0 && d2 >= 0.5 * d1 && d3 >= 0.5 * d2;
}

// ----------------------------------------------------------------------------
// ODE flow
// ----------------------------------------------------------------------------

struct FlowTrajectory {
    std::vector<double> times;
    std::vector<double> values;
    double step = 0.0;
    bool saturated = false;
};

/// Explicit Euler recursion f_{i+1} = f_i + dt * Gamma(f_i), clamped at l.
inline FlowTrajectory ode_flow(const OsgoodFunction& g, double f0, double t_flow, double dt) {
    if (!(f0 >= 0.0 && f0 < g.l)) throw PreconditionError("f0 must lie in [0, l)");
    if (!(t_flow > 0.0) || !(dt > 0.0) || dt > t_flow) throw PreconditionError("need 0 < dt <= T_flow");
    const auto n = static_cast<std::size_t>(std::llround(t_flow / dt));
    FlowTrajectory tr;
    tr.step = dt;
    tr.times.reserve(n + 1);
    tr.values.reserve(n + 1);
    double f = f0;
    tr.times.push_back(0.0);
    tr.values.push_back(f);
    for (std::size_t i = 1; i <= n; ++i) {
        f = f + dt * g.eval(f);
        if (f > g.l) {
            f = g.l;
            tr.saturated = true;
        }
        tr.times.push_back(dt * static_cast<double>(i));
        tr.values.push_back(f);
    }
    return tr;
}

inline void write_flow_csv(std::ostream& os, const FlowTrajectory& tr) {
    os << "t,f\n";
    for (std::size_t i = 0; i < tr.times.size(); ++i) os << fmt17(tr.times[i]) << ',' << fmt17(tr.values[i]) << '\n';
}

inline void write_scores_csv(std::ostream& os, const std::vector<double>& eps, const std::vector<double>& scores) {
    os << "eps,score\n";
    for (std::size_t i = 0; i < scores.size(); ++i) os << fmt17(eps[i]) << ',' << fmt17(scores[i]) << '\n';
}

}  // namespace visc::osgood
