#pragma once

// Mortgage-backed-security pricing model
//   d_t U - 1/2 tr(s s^T D^2 U) - <mu, DU> + rho |s^T DU|^2 / (U + h + xi)
//     + r (U + h) - tau h = 0,
// its constant barriers, the positive reformulation in u = U + h + xi and the
// constants of the Lipschitz regularity estimate.

#include "visc/check_report.hpp"
#include "visc/core.hpp"
#include "visc/hamiltonian.hpp"
#include "visc/osgood.hpp"
#include "visc/transform.hpp"

#include "json.hpp"

#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace visc::mbs {

// ----------------------------------------------------------------------------
// Coefficient forms
// ----------------------------------------------------------------------------

/// Scalar function of time: constant c, affine c + k t, or exponential c e^{k t}.
struct TimeScalar {
    enum class Kind { constant, affine, exp };
    Kind kind = Kind::constant;
    double c = 0.0;
    double k = 0.0;

    static TimeScalar constant(double c) { return {Kind::constant, c, 0.0}; }
    static TimeScalar affine(double c, double k) { return {Kind::affine, c, k}; }
    static TimeScalar exponential(double c, double k) { return {Kind::exp, c, k}; }

    [[nodiscard]] double operator()(double t) const {
        switch (kind) {
            case Kind::constant: return c;
            case Kind::affine: return c + k * t;
            case Kind::exp: return c * std::exp(k * t);
        }
        return c;
    }
    [[nodiscard]] double derivative(double t) const {
        switch (kind) {
            case Kind::constant: return 0.0;
            case Kind::affine: return k;
            case Kind::exp: return c * k * std::exp(k * t);
        }
        return 0.0;
    }
    /// Integral over [0, t].
    [[nodiscard]] double integral(double t) const {
        switch (kind) {
            case Kind::constant: return c * t;
            case Kind::affine: return c * t + 0.5 * k * t * t;
            case Kind::exp: return k == 0.0 ? c * t : c * std::expm1(k * t) / k;
        }
        return c * t;
    }
    /// Monotone on [0, T], so extremes sit at the endpoints.
    [[nodiscard]] double inf_on(double T) const { return std::min((*this)(0.0), (*this)(T)); }
    [[nodiscard]] double sup_on(double T) const { return std::max((*this)(0.0), (*this)(T)); }
};

/// offset + A e^{-decay t} s(x) with s one of: 1 (constant), Gaussian bump
/// exp(-|x-c|^2 / (2 w^2)), inverse quadratic 1 / (1 + |x-c|^2 / w^2), or
/// cos(<k, x> + phase).
struct SpatialForm {
    enum class Kind { constant, gaussian, inverse_quadratic, trig };
    Kind kind = Kind::constant;
    double offset = 0.0;
    double amplitude = 0.0;
    double width = 1.0;
    double phase = 0.0;
    double decay = 0.0;
    Vec center;
    Vec frequency;

    static SpatialForm constant(double value) {
        SpatialForm f;
        f.offset = value;
        return f;
    }
    static SpatialForm bump(Kind kind, double amplitude, double width, std::size_t dim, double decay = 0.0,
                            double offset = 0.0) {
        if (!(width > 0.0)) throw ConfigError("bump width must be positive");
        SpatialForm f;
        f.kind = kind;
        f.amplitude = amplitude;
        f.width = width;
        f.decay = decay;
        f.offset = offset;
        f.center = Vec::Zero(static_cast<Eigen::Index>(dim));
        return f;
    }
    static SpatialForm trig(double amplitude, Vec frequency, double phase = 0.0, double offset = 0.0,
                            double decay = 0.0) {
        SpatialForm f;
        f.kind = Kind::trig;
        f.amplitude = amplitude;
        f.frequency = std::move(frequency);
        f.phase = phase;
        f.offset = offset;
        f.decay = decay;
        return f;
    }

    [[nodiscard]] double amp(double t) const { return amplitude * std::exp(-decay * t); }

    [[nodiscard]] double shape(const Vec& x) const {
        switch (kind) {
            case Kind::constant: return 1.0;
            case Kind::gaussian: return std::exp(-(x - center).squaredNorm() / (2.0 * width * width));
            case Kind::inverse_quadratic: return 1.0 / (1.0 + (x - center).squaredNorm() / (width * width));
            case Kind::trig: return std::cos(frequency.dot(x) + phase);
        }
        return 1.0;
    }

    [[nodiscard]] double value(const Vec& x, double t) const {
        if (kind == Kind::constant) return offset;
        return offset + amp(t) * shape(x);
    }

    [[nodiscard]] Vec grad(const Vec& x, double t) const {
        const double a = amp(t);
        switch (kind) {
            case Kind::constant: return Vec::Zero(x.size());
            case Kind::gaussian: return -a * shape(x) * (x - center) / (width * width);
            case Kind::inverse_quadratic: {
                const double s = shape(x);
                return -2.0 * a * s * s * (x - center) / (width * width);
            }
            case Kind::trig: return -a * std::sin(frequency.dot(x) + phase) * frequency;
        }
        return Vec::Zero(x.size());
    }

    [[nodiscard]] Mat hess(const Vec& x, double t) const {
        const auto n = x.size();
        const double a = amp(t);
        switch (kind) {
            case Kind::constant: return Mat::Zero(n, n);
            case Kind::gaussian: {
                const Vec d = x - center;
                const double w2 = width * width;
                return a * shape(x) * (d * d.transpose() / (w2 * w2) - Mat::Identity(n, n) / w2);
            }
            case Kind::inverse_quadratic: {
                const Vec d = x - center;
                const double w2 = width * width;
                const double s = shape(x);
                return a * (-2.0 * s * s * Mat::Identity(n, n) / w2 + 8.0 * s * s * s * d * d.transpose() / (w2 * w2));
            }
            case Kind::trig: return -a * std::cos(frequency.dot(x) + phase) * frequency * frequency.transpose();
        }
        return Mat::Zero(n, n);
    }

    [[nodiscard]] double dt(const Vec& x, double t) const {
        if (kind == Kind::constant) return 0.0;
        return -decay * amp(t) * shape(x);
    }

    [[nodiscard]] double shape_min() const {
        if (kind == Kind::trig) return frequency.norm() == 0.0 ? std::cos(phase) : -1.0;
        return kind == Kind::constant ? 1.0 : 0.0;
    }
    [[nodiscard]] double shape_max() const {
        if (kind == Kind::trig) return frequency.norm() == 0.0 ? std::cos(phase) : 1.0;
        return 1.0;
    }
    /// sup |grad s| and sup ||hess s||.
    [[nodiscard]] double shape_lip() const {
        switch (kind) {
            case Kind::constant: return 0.0;
            case Kind::gaussian: return std::exp(-0.5) / width;
            case Kind::inverse_quadratic: return 9.0 / (8.0 * std::sqrt(3.0) * width);
            case Kind::trig: return frequency.norm();
        }
        return 0.0;
    }
    [[nodiscard]] double shape_hess() const {
        switch (kind) {
            case Kind::constant: return 0.0;
            case Kind::gaussian: return 1.0 / (width * width);
            case Kind::inverse_quadratic: return 2.0 / (width * width);
            case Kind::trig: return frequency.squaredNorm();
        }
        return 0.0;
    }

    [[nodiscard]] double inf_x(double t) const {
        if (kind == Kind::constant) return offset;
        const double a = amp(t);
        return offset + std::min(a * shape_min(), a * shape_max());
    }
    [[nodiscard]] double sup_x(double t) const {
        if (kind == Kind::constant) return offset;
        const double a = amp(t);
        return offset + std::max(a * shape_min(), a * shape_max());
    }
    /// Largest |A| e^{-decay t} over [0, T].
    [[nodiscard]] double amp_max(double T) const { return std::abs(amplitude) * std::max(1.0, std::exp(-decay * T)); }
};

/// Volatility sigma(t) = S0 + t S1 (N x d).
struct MatrixForm {
    Mat s0;
    Mat s1;
    [[nodiscard]] Mat operator()(double t) const { return s0 + t * s1; }
    /// sup over [0, T] of the operator norm (convex in t).
    [[nodiscard]] double sup_norm(double T) const { return std::max(op_norm(s0), op_norm(s0 + T * s1)); }
    [[nodiscard]] double sup_trace_ssT(double T) const {
        const Mat a = s0, b = s0 + T * s1;
        return std::max((a * a.transpose()).trace(), (b * b.transpose()).trace());
    }
};

/// Drift: constant b, time-affine b + t k, or b_i + A sin(w x_i).
struct DriftForm {
    enum class Kind { constant, affine, trig };
    Kind kind = Kind::constant;
    Vec b;
    Vec slope;
    double amplitude = 0.0;
    double frequency = 0.0;

    [[nodiscard]] Vec operator()(const Vec& x, double t) const {
        switch (kind) {
            case Kind::constant: return b;
            case Kind::affine: return b + t * slope;
            case Kind::trig: {
                Vec out = b;
                for (Eigen::Index i = 0; i < out.size(); ++i) out(i) += amplitude * std::sin(frequency * x(i));
                return out;
            }
        }
        return b;
    }
    [[nodiscard]] double sup_norm(double T) const {
        switch (kind) {
            case Kind::constant: return b.norm();
            case Kind::affine: return std::max(b.norm(), (b + T * slope).norm());
            case Kind::trig: return (b.cwiseAbs().array() + std::abs(amplitude)).matrix().norm();
        }
        return 0.0;
    }
    [[nodiscard]] double lip() const { return kind == Kind::trig ? std::abs(amplitude * frequency) : 0.0; }
};

/// Sup/inf and Lipschitz data used by barriers and constants. Filled from the
/// analytic forms, then overridden by configuration entries.
struct Bounds {
    double mu_sup = 0, mu_lip = 0;
    double h_sup = 0, h_inf = 0, grad_h_sup = 0, grad_h_lip = 0, dt_h_sup = 0;
    double U0_sup = 0, U0_inf = 0, U0_lip = 0;
    double sigma_sup = 0, trace_ssT_sup = 0;
    double r_sup = 0, r_inf = 0;
    double g_sup = 0, g_lip = 0;
    std::optional<double> h_inf_override, h_sup_override;
    std::vector<std::string> caveats;
};

struct MbsModel {
    std::size_t N = 1;
    std::size_t d = 1;
    MatrixForm sigma;
    DriftForm mu;
    TimeScalar r = TimeScalar::constant(0.0);
    TimeScalar xi = TimeScalar::constant(1.0);
    SpatialForm h = SpatialForm::constant(0.0);
    SpatialForm U0 = SpatialForm::constant(0.0);
    double rho = 0.5;
    double tau = 0.06;
    double T = 1.0;
    /// Truncated computational box used by scans, sampling and the solver.
    Vec box_lo;
    Vec box_hi;
    Bounds bounds;

    [[nodiscard]] Mat ssT(double t) const {
        const Mat s = sigma(t);
        return s * s.transpose();
    }

    /// g = -d_t h + 1/2 tr(s s^T D^2 h) + <mu, Dh> - tau h - (xi' + r xi).
    [[nodiscard]] double g(const Vec& x, double t) const {
        return -h.dt(x, t) + 0.5 * (ssT(t) * h.hess(x, t)).trace() + mu(x, t).dot(h.grad(x, t)) -
               tau * h.value(x, t) - (xi.derivative(t) + r(t) * xi(t));
    }

    /// Infimum / supremum over x of h(., t), honoring declared overrides.
    [[nodiscard]] double h_inf_x(double t) const { return bounds.h_inf_override ? *bounds.h_inf_override : h.inf_x(t); }
    [[nodiscard]] double h_sup_x(double t) const { return bounds.h_sup_override ? *bounds.h_sup_override : h.sup_x(t); }
};

namespace detail {

/// Node grid over the model box with `per_dim` points per axis.
inline std::vector<Vec> box_grid(const MbsModel& m, std::size_t per_dim) {
    std::vector<Vec> pts;
    const auto n = static_cast<std::size_t>(m.N);
    std::size_t total = 1;
    for (std::size_t i = 0; i < n; ++i) total *= per_dim;
    pts.reserve(total);
    for (std::size_t idx = 0; idx < total; ++idx) {
        Vec x(static_cast<Eigen::Index>(n));
        std::size_t rem = idx;
        for (std::size_t j = 0; j < n; ++j) {
            const auto k = rem % per_dim;
            rem /= per_dim;
            const auto J = static_cast<Eigen::Index>(j);
            x(J) = m.box_lo(J) + (m.box_hi(J) - m.box_lo(J)) * static_cast<double>(k) / static_cast<double>(per_dim - 1);
        }
        pts.push_back(std::move(x));
    }
    return pts;
}

inline std::size_t scan_points_per_dim(std::size_t N) { return N == 1 ? 401 : (N == 2 ? 61 : 17); }

}  // namespace detail

/// Fills model.bounds from the analytic forms. g has no closed-form bound, so
/// sup|g| and Lip(g) come from a scan of the truncated box (noted as a caveat).
inline void derive_bounds(MbsModel& m) {
    auto& b = m.bounds;
    const double T = m.T;
    b.mu_sup = m.mu.sup_norm(T);
    b.mu_lip = m.mu.lip();
    const double ah = m.h.amp_max(T);
    b.h_sup = std::max(m.h.sup_x(0.0), m.h.sup_x(T));
    b.h_inf = std::min(m.h.inf_x(0.0), m.h.inf_x(T));
    b.grad_h_sup = ah * m.h.shape_lip();
    b.grad_h_lip = ah * m.h.shape_hess();
    b.dt_h_sup = m.h.kind == SpatialForm::Kind::constant
                     ? 0.0
                     : std::abs(m.h.decay) * ah * std::max(std::abs(m.h.shape_min()), std::abs(m.h.shape_max()));
    b.U0_sup = m.U0.sup_x(0.0);
    b.U0_inf = m.U0.inf_x(0.0);
    b.U0_lip = std::abs(m.U0.amplitude) * m.U0.shape_lip();
    b.sigma_sup = m.sigma.sup_norm(T);
    b.trace_ssT_sup = m.sigma.sup_trace_ssT(T);
    b.r_sup = m.r.sup_on(T);
    b.r_inf = m.r.inf_on(T);

    const auto pts = detail::box_grid(m, detail::scan_points_per_dim(m.N));
    constexpr int nt = 21;
    double g_sup = 0.0;
    double g_lip = 0.0;
    const double fd = 1e-5;
    for (int k = 0; k < nt; ++k) {
        const double t = T * static_cast<double>(k) / nt;
        for (const auto& x : pts) {
            g_sup = std::max(g_sup, std::abs(m.g(x, t)));
            Vec grad(x.size());
            for (Eigen::Index j = 0; j < x.size(); ++j) {
                Vec xp = x, xm = x;
                xp(j) += fd;
                xm(j) -= fd;
                grad(j) = (m.g(xp, t) - m.g(xm, t)) / (2.0 * fd);
            }
            g_lip = std::max(g_lip, grad.norm());
        }
    }
    b.g_sup = 1.05 * g_sup + 1e-12;
    b.g_lip = 1.1 * g_lip + 1e-12;
    b.caveats.push_back("sup|g| and Lip(g) estimated on a grid of the box " + interval_str(m.box_lo(0), m.box_hi(0)) +
                        " per axis, inflated by 5% and 10%");
}

/// Default box [-6, 6]^N.
inline void set_box(MbsModel& m, double lo, double hi) {
    m.box_lo = Vec::Constant(static_cast<Eigen::Index>(m.N), lo);
    m.box_hi = Vec::Constant(static_cast<Eigen::Index>(m.N), hi);
}

// ----------------------------------------------------------------------------
// Model factories
// ----------------------------------------------------------------------------

inline MatrixForm constant_sigma(const Mat& s) { return {s, Mat::Zero(s.rows(), s.cols())}; }

inline DriftForm constant_drift(const Vec& b) {
    DriftForm f;
    f.b = b;
    f.slope = Vec::Zero(b.size());
    return f;
}

/// Finishes construction: box, bounds.
inline MbsModel finalize(MbsModel m, double box_lo = -6.0, double box_hi = 6.0) {
    if (m.box_lo.size() == 0) set_box(m, box_lo, box_hi);
    derive_bounds(m);
    return m;
}

/// Constant coefficients: mu = 0, sigma = I, xi = 1; h = h0, U0 = u0, r = r0.
inline MbsModel constant_model(double r0, double h0, double u0, double tau, double T, double rho = 0.5,
                               std::size_t N = 1) {
    MbsModel m;
    m.N = N;
    m.d = N;
    const auto n = static_cast<Eigen::Index>(N);
    m.sigma = constant_sigma(Mat::Identity(n, n));
    m.mu = constant_drift(Vec::Zero(n));
    m.r = TimeScalar::constant(r0);
    m.xi = TimeScalar::constant(1.0);
    m.h = SpatialForm::constant(h0);
    m.U0 = SpatialForm::constant(u0);
    m.rho = rho;
    m.tau = tau;
    m.T = T;
    return finalize(std::move(m));
}

inline MbsModel zero_model(std::size_t N = 1) { return constant_model(0.0, 0.0, 0.0, 1.0, 1.0, 0.5, N); }

/// Linear heat case: rho = 0, mu = 0, sigma = sqrt 2, r = 0, h = 0, U0 = cos x.
/// The bank account is xi = 2 so that U + h + xi stays positive; with rho = 0
/// it does not enter the equation for U.
inline MbsModel heat_model() {
    MbsModel m;
    m.N = 1;
    m.d = 1;
    m.sigma = constant_sigma(Mat::Constant(1, 1, std::sqrt(2.0)));
    m.mu = constant_drift(Vec::Zero(1));
    m.r = TimeScalar::constant(0.0);
    m.xi = TimeScalar::constant(2.0);
    m.h = SpatialForm::constant(0.0);
    m.U0 = SpatialForm::trig(1.0, Vec::Ones(1));
    m.rho = 0.0;
    m.tau = 0.06;
    m.T = 1.0;
    return finalize(std::move(m), -2.0 * kPi, 2.0 * kPi);
}

/// One-factor desk model: sigma = 0.3, mu = 0.1 sin x, r = 0.03, xi = e^{0.03 t},
/// decaying Gaussian cash-flow, optional Gaussian initial datum.
inline MbsModel desk_model(bool bump_initial = true) {
    MbsModel m;
    m.N = 1;
    m.d = 1;
    m.sigma = constant_sigma(Mat::Constant(1, 1, 0.3));
    m.mu.kind = DriftForm::Kind::trig;
    m.mu.b = Vec::Zero(1);
    m.mu.slope = Vec::Zero(1);
    m.mu.amplitude = 0.1;
    m.mu.frequency = 1.0;
    m.r = TimeScalar::constant(0.03);
    m.xi = TimeScalar::exponential(1.0, 0.03);
    m.h = SpatialForm::bump(SpatialForm::Kind::gaussian, 0.5, 1.0, 1, 0.1);
    m.U0 = bump_initial ? SpatialForm::bump(SpatialForm::Kind::gaussian, 0.2, 1.5, 1) : SpatialForm::constant(0.0);
    m.rho = 0.5;
    m.tau = 0.06;
    m.T = 1.0;
    return finalize(std::move(m));
}

// ----------------------------------------------------------------------------
// Configuration files
// ----------------------------------------------------------------------------

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& j, const std::string& key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) throw ConfigError(where + ": missing field '" + key + "'");
    return j.at(key);
}

inline double number(const nlohmann::json& j, const std::string& key, const std::string& where,
                     std::optional<double> fallback = std::nullopt) {
    if (!j.is_object() || !j.contains(key)) {
        if (fallback) return *fallback;
        throw ConfigError(where + ": missing field '" + key + "'");
    }
    const auto& v = j.at(key);
    if (!v.is_number()) throw ConfigError(where + "." + key + ": expected a number");
    return v.get<double>();
}

/// Number broadcast to a length-n vector, or an array of length n.
inline Vec vector_param(const nlohmann::json& j, std::size_t n, const std::string& where) {
    const auto N = static_cast<Eigen::Index>(n);
    if (j.is_number()) return Vec::Constant(N, j.get<double>());
    if (j.is_array() && j.size() == n) {
        Vec v(N);
        for (std::size_t i = 0; i < n; ++i) {
            if (!j[i].is_number()) throw ConfigError(where + ": expected numbers");
            v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
        }
        return v;
    }
    throw ConfigError(where + ": expected a number or an array of length " + std::to_string(n));
}

/// Number s (giving s times the N x d identity) or a nested N x d array.
inline Mat matrix_param(const nlohmann::json& j, std::size_t n, std::size_t d, const std::string& where) {
    const auto N = static_cast<Eigen::Index>(n);
    const auto D = static_cast<Eigen::Index>(d);
    if (j.is_number()) return j.get<double>() * Mat::Identity(N, D);
    if (j.is_array() && j.size() == n) {
        Mat m(N, D);
        for (std::size_t i = 0; i < n; ++i) {
            if (!j[i].is_array() || j[i].size() != d) throw ConfigError(where + ": expected an N x d array");
            for (std::size_t k = 0; k < d; ++k) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = j[i][k].get<double>();
        }
        return m;
    }
    throw ConfigError(where + ": expected a number or an N x d array");
}

inline std::pair<std::string, nlohmann::json> form_of(const nlohmann::json& j, const std::string& where) {
    const auto& f = require(j, "form", where);
    if (!f.is_string()) throw ConfigError(where + ".form: expected a string");
    nlohmann::json params = j.contains("params") ? j.at("params") : nlohmann::json::object();
    if (!params.is_object()) throw ConfigError(where + ".params: expected an object");
    return {f.get<std::string>(), params};
}

inline TimeScalar time_scalar(const nlohmann::json& j, const std::string& where) {
    const auto [form, p] = form_of(j, where);
    const std::string w = where + ".params";
    if (form == "constant") return TimeScalar::constant(number(p, "value", w));
    if (form == "affine") return TimeScalar::affine(number(p, "value", w), number(p, "slope", w));
    if (form == "exp") return TimeScalar::exponential(number(p, "value", w), number(p, "rate", w));
    throw ConfigError(where + ".form: unknown form '" + form + "'");
}

inline SpatialForm spatial_form(const nlohmann::json& j, std::size_t n, const std::string& where) {
    const auto [form, p] = form_of(j, where);
    const std::string w = where + ".params";
    if (form == "constant") return SpatialForm::constant(number(p, "value", w));
    const double decay = number(p, "decay", w, 0.0);
    const double offset = number(p, "offset", w, 0.0);
    if (form == "gaussian" || form == "inverse-quadratic") {
        const auto kind = form == "gaussian" ? SpatialForm::Kind::gaussian : SpatialForm::Kind::inverse_quadratic;
        auto f = SpatialForm::bump(kind, number(p, "amplitude", w), number(p, "width", w), n, decay, offset);
        if (p.contains("center")) f.center = vector_param(p.at("center"), n, w + ".center");
        return f;
    }
    if (form == "trig") {
        Vec k = Vec::Zero(static_cast<Eigen::Index>(n));
        const auto& fr = require(p, "frequency", w);
        if (fr.is_number()) k(0) = fr.get<double>();
        else k = vector_param(fr, n, w + ".frequency");
        return SpatialForm::trig(number(p, "amplitude", w), k, number(p, "phase", w, 0.0), offset, decay);
    }
    throw ConfigError(where + ".form: unknown form '" + form + "'");
}

inline DriftForm drift_form(const nlohmann::json& j, std::size_t n, const std::string& where) {
    const auto [form, p] = form_of(j, where);
    const std::string w = where + ".params";
    DriftForm f;
    f.slope = Vec::Zero(static_cast<Eigen::Index>(n));
    if (form == "constant") {
        f.b = vector_param(require(p, "value", w), n, w + ".value");
    } else if (form == "affine") {
        f.kind = DriftForm::Kind::affine;
        f.b = vector_param(require(p, "value", w), n, w + ".value");
        f.slope = vector_param(require(p, "slope", w), n, w + ".slope");
    } else if (form == "trig") {
        f.kind = DriftForm::Kind::trig;
        f.b = p.contains("offset") ? vector_param(p.at("offset"), n, w + ".offset") : Vec::Zero(static_cast<Eigen::Index>(n));
        f.amplitude = number(p, "amplitude", w);
        f.frequency = number(p, "frequency", w);
    } else {
        throw ConfigError(where + ".form: unknown form '" + form + "'");
    }
    return f;
}

inline MatrixForm matrix_form(const nlohmann::json& j, std::size_t n, std::size_t d, const std::string& where) {
    const auto [form, p] = form_of(j, where);
    const std::string w = where + ".params";
    if (form == "constant") return constant_sigma(matrix_param(require(p, "value", w), n, d, w + ".value"));
    if (form == "affine") {
        return {matrix_param(require(p, "value", w), n, d, w + ".value"),
                matrix_param(require(p, "slope", w), n, d, w + ".slope")};
    }
    throw ConfigError(where + ".form: unknown form '" + form + "'");
}

}  // namespace detail

/// Parses the JSON model description. Missing or malformed fields raise
/// ConfigError naming the field.
inline MbsModel model_from_json(const nlohmann::json& j) {
    using namespace detail;
    if (!j.is_object()) throw ConfigError("model: expected a JSON object");
    MbsModel m;
    const double N = number(j, "N", "model");
    const double d = number(j, "d", "model", N);
    if (!(N >= 1 && N <= 3 && N == std::floor(N))) throw ConfigError("model.N: expected an integer in [1, 3]");
    if (!(d >= 1 && d <= N && d == std::floor(d))) throw ConfigError("model.d: expected an integer in [1, N]");
    m.N = static_cast<std::size_t>(N);
    m.d = static_cast<std::size_t>(d);
    m.sigma = matrix_form(require(j, "sigma", "model"), m.N, m.d, "model.sigma");
    m.mu = drift_form(require(j, "mu", "model"), m.N, "model.mu");
    m.r = time_scalar(require(j, "r", "model"), "model.r");
    m.xi = time_scalar(require(j, "xi", "model"), "model.xi");
    m.h = spatial_form(require(j, "h", "model"), m.N, "model.h");
    m.U0 = spatial_form(require(j, "U0", "model"), m.N, "model.U0");
    m.rho = number(j, "rho", "model");
    m.tau = number(j, "tau", "model");
    m.T = number(j, "T", "model");
    if (!(m.rho >= 0.0)) throw ConfigError("model.rho: expected a nonnegative number");
    if (!(m.tau > 0.0)) throw ConfigError("model.tau: expected a positive number");
    if (!(m.T > 0.0)) throw ConfigError("model.T: expected a positive number");
    if (j.contains("box")) {
        const auto& b = j.at("box");
        m.box_lo = vector_param(require(b, "lo", "model.box"), m.N, "model.box.lo");
        m.box_hi = vector_param(require(b, "hi", "model.box"), m.N, "model.box.hi");
        if (!((m.box_hi - m.box_lo).minCoeff() > 0.0)) throw ConfigError("model.box: need lo < hi");
    } else {
        set_box(m, -6.0, 6.0);
    }
    derive_bounds(m);
    if (j.contains("bounds")) {
        const auto& b = j.at("bounds");
        if (!b.is_object()) throw ConfigError("model.bounds: expected an object");
        auto& B = m.bounds;
        const std::vector<std::pair<std::string, double*>> fields = {
            {"mu_sup", &B.mu_sup},       {"mu_lip", &B.mu_lip},         {"h_sup", &B.h_sup},
            {"h_inf", &B.h_inf},         {"grad_h_sup", &B.grad_h_sup}, {"grad_h_lip", &B.grad_h_lip},
            {"dt_h_sup", &B.dt_h_sup},   {"U0_sup", &B.U0_sup},         {"U0_inf", &B.U0_inf},
            {"U0_lip", &B.U0_lip},       {"sigma_sup", &B.sigma_sup},   {"g_sup", &B.g_sup},
            {"g_lip", &B.g_lip}};
        for (const auto& [key, ptr] : fields) {
            if (b.contains(key)) *ptr = number(b, key, "model.bounds");
        }
        if (b.contains("h_inf")) B.h_inf_override = B.h_inf;
        if (b.contains("h_sup")) B.h_sup_override = B.h_sup;
        for (const auto& [key, _] : b.items()) {
            const bool known = std::any_of(fields.begin(), fields.end(), [&](const auto& f) { return f.first == key; });
            if (!known) throw ConfigError("model.bounds: unknown field '" + key + "'");
        }
    }
    return m;
}

inline MbsModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open model file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("model file '" + path + "' is not valid JSON: " + e.what());
    }
    return model_from_json(j);
}

// ----------------------------------------------------------------------------
// Barriers
// ----------------------------------------------------------------------------

/// inf over x of (tau - r(t)) h(x, t).
inline double source_inf(const MbsModel& m, double t) {
    const double c = m.tau - m.r(t);
    return c * (c >= 0.0 ? m.h_inf_x(t) : m.h_sup_x(t));
}

/// sup over x of (tau - r(t)) h(x, t).
inline double source_sup(const MbsModel& m, double t) {
    const double c = m.tau - m.r(t);
    return c * (c >= 0.0 ? m.h_sup_x(t) : m.h_inf_x(t));
}

namespace detail {

inline double lower_barrier_unchecked(const MbsModel& m, double t) {
    const double R = m.r.integral(t);
    const double acc = integrate([&m](double s) { return std::exp(m.r.integral(s)) * source_inf(m, s); }, 0.0, t,
                                 1e-13, 50);
    return std::exp(-R) * (m.bounds.U0_inf + acc);
}

/// Maximizes f over [0, T] on an (n+1)-point grid, refined by a ternary search
/// around the best node.
template <class F>
double grid_sup(const F& f, double T, std::size_t n = 1000) {
    std::size_t best = 0;
    double best_val = f(0.0);
    for (std::size_t i = 1; i <= n; ++i) {
        const double v = f(T * static_cast<double>(i) / static_cast<double>(n));
        if (v > best_val) {
            best_val = v;
            best = i;
        }
    }
    double a = T * static_cast<double>(best > 0 ? best - 1 : 0) / static_cast<double>(n);
    double b = T * static_cast<double>(std::min(best + 1, n)) / static_cast<double>(n);
    for (int it = 0; it < 100 && b - a > 1e-14; ++it) {
        const double m1 = a + (b - a) / 3.0;
        const double m2 = b - (b - a) / 3.0;
        if (f(m1) < f(m2)) a = m1;
        else b = m2;
    }
    return std::max(best_val, f(0.5 * (a + b)));
}

}  // namespace detail

inline double lower_barrier(const MbsModel& m, double t) {
    if (!(t >= 0.0 && t < m.T)) throw DomainError("time " + fmt17(t) + " outside [0, T)");
    return detail::lower_barrier_unchecked(m, t);
}

struct BarrierPair {
    const MbsModel* model = nullptr;
    double K0 = 0.0;
    double c0 = 0.0;
    double m0 = 0.0;
    double M0 = 0.0;
    double sup_k_lower = 0.0;

    [[nodiscard]] double k_lower(double t) const { return detail::lower_barrier_unchecked(*model, t); }
    /// Closed-form derivative -r k + inf_x[(tau - r) h].
    [[nodiscard]] double k_lower_prime(double t) const {
        return -model->r(t) * k_lower(t) + source_inf(*model, t);
    }
    [[nodiscard]] double k_upper(double t) const { return K0 * t + c0; }
};

/// Computes K0, c0, m0, M0. The model must outlive the returned pair.
inline BarrierPair compute_barriers(const MbsModel& m) {
    BarrierPair bp;
    bp.model = &m;
    const double T = m.T;
    // sup of k_lower on the closure of [0, T) via cumulative integration.
    {
        constexpr std::size_t n = 1000;
        double acc = 0.0;
        double best = m.bounds.U0_inf;
        double prev = 0.0;
        for (std::size_t i = 1; i <= n; ++i) {
            const double t = T * static_cast<double>(i) / n;
            acc += integrate([&m](double s) { return std::exp(m.r.integral(s)) * source_inf(m, s); }, prev, t, 1e-14,
                             40);
            prev = t;
            best = std::max(best, std::exp(-m.r.integral(t)) * (m.bounds.U0_inf + acc));
        }
        bp.sup_k_lower = std::max(best, detail::grid_sup([&m](double t) { return detail::lower_barrier_unchecked(m, t); },
                                                         T, 50));
    }
    bp.c0 = std::max(m.bounds.U0_sup, bp.sup_k_lower);
    const double c0 = bp.c0;
    bp.K0 = std::max(0.0, detail::grid_sup(
                              [&m, c0](double t) {
                                  const double r = m.r(t);
                                  return (source_sup(m, t) - c0 * r) / (1.0 + t * r);
                              },
                              T));
    // m0 = inf(k_lower + h + xi) and M0 = K0 T + c0 + sup(h + xi).
    bp.m0 = -detail::grid_sup([&m](double t) { return -(detail::lower_barrier_unchecked(m, t) + m.h_inf_x(t) + m.xi(t)); },
                              T);
    bp.M0 = bp.K0 * T + c0 + detail::grid_sup([&m](double t) { return m.h_sup_x(t) + m.xi(t); }, T);
    return bp;
}

inline double upper_barrier(const MbsModel& m, double t) {
    if (!(t >= 0.0 && t < m.T)) throw DomainError("time " + fmt17(t) + " outside [0, T)");
    return compute_barriers(m).k_upper(t);
}

/// CSV with columns t, k_lower, k_upper on n + 1 points of [0, T).
inline void write_barrier_csv(std::ostream& os, const BarrierPair& bp, std::size_t n = 1000) {
    os << "t,k_lower,k_upper\n";
    for (std::size_t i = 0; i < n; ++i) {
        const double t = bp.model->T * static_cast<double>(i) / static_cast<double>(n);
        os << fmt17(t) << ',' << fmt17(bp.k_lower(t)) << ',' << fmt17(bp.k_upper(t)) << '\n';
    }
}

/// Samples (x, t) and evaluates the equation at the spatially constant
/// barriers. residual_sub must be <= 1e-8 and residual_super >= -1e-8; the
/// recorded violation is the larger excess.
inline CheckReport barrier_residuals(const MbsModel& m, std::size_t n_samples, std::uint64_t seed) {
    if (n_samples < 1) throw PreconditionError("need at least one sample");
    const auto bp = compute_barriers(m);
    if (!(bp.m0 > 0.0)) throw ModelError("condition XI fails: inf(k_lower + h + xi) = " + fmt17(bp.m0));
    CheckReport rep;
    rep.check = "barrier_residuals";
    rep.seed = seed;
    rep.threshold = 1e-8;
    std::vector<SampleResult> res(n_samples);
    double worst_sub = -std::numeric_limits<double>::infinity();
    double worst_super = std::numeric_limits<double>::infinity();
    std::vector<std::pair<double, double>> both(n_samples);
    parallel_for(n_samples, [&](std::size_t i) {
        auto g = sample_engine(seed, i);
        Vec x(static_cast<Eigen::Index>(m.N));
        for (Eigen::Index j = 0; j < x.size(); ++j) x(j) = uniform(g, m.box_lo(j), m.box_hi(j));
        const double t = ham::sampling::time_point(g, m.T);
        const double r = m.r(t);
        const double h = m.h.value(x, t);
        const double kl = bp.k_lower(t);
        const double kl_prime = -r * kl + source_inf(m, t);
        const double sub = kl_prime + r * (kl + h) - m.tau * h;
        const double ku = bp.k_upper(t);
        const double sup = bp.K0 + r * (ku + h) - m.tau * h;
        both[i] = {sub, sup};
        res[i] = {std::max(sub, -sup), {{"x", to_std(x)}, {"t", {t}}, {"residual_sub", {sub}}, {"residual_super", {sup}}},
                  true};
    });
    for (const auto& [s, u] : both) {
        worst_sub = std::max(worst_sub, s);
        worst_super = std::min(worst_super, u);
    }
    merge_results(rep, res);
    rep.details["max_residual_sub"] = worst_sub;
    rep.details["min_residual_super"] = worst_super;
    rep.details["K0"] = bp.K0;
    rep.details["c0"] = bp.c0;
    return rep;
}

// ----------------------------------------------------------------------------
// Validation
// ----------------------------------------------------------------------------

/// Sampled verification of the standing assumptions, the time modulus of h
/// and positivity of xi + h + k_lower. Failed assumptions are listed by name.
inline CheckReport validate_model(const MbsModel& m, std::size_t n_samples, std::uint64_t seed) {
    CheckReport rep;
    rep.check = "validate_model";
    rep.seed = seed;
    const auto& B = m.bounds;
    const double tol = 1e-9;
    std::vector<double> p1(n_samples), p2(n_samples), p3(n_samples), dth(n_samples), dth_quot(n_samples);
    std::vector<SampleResult> res(n_samples);
    parallel_for(n_samples, [&](std::size_t i) {
        auto g = sample_engine(seed, i);
        const auto n = static_cast<Eigen::Index>(m.N);
        Vec x(n), y(n);
        for (Eigen::Index j = 0; j < n; ++j) {
            x(j) = uniform(g, m.box_lo(j), m.box_hi(j));
            y(j) = x(j) + std::pow(10.0, uniform(g, -4.0, 0.0)) * gaussian(g);
        }
        const double t = ham::sampling::time_point(g, m.T);
        const double s = ham::sampling::time_point(g, m.T);
        const double dxy = (x - y).norm();
        // (P1) bounded, Lipschitz drift.
        double v1 = m.mu(x, t).norm() - B.mu_sup;
        if (dxy > 0.0) v1 = std::max(v1, (m.mu(x, t) - m.mu(y, t)).norm() / dxy - B.mu_lip);
        // (P2) nonnegative bounded h with bounded gradient, positive xi, r >= 0.
        const double hv = m.h.value(x, t);
        double v2 = std::max({-hv, hv - B.h_sup, m.h.grad(x, t).norm() - B.grad_h_sup, -m.xi(t), -m.r(t)});
        if (m.xi(t) <= 0.0) v2 = std::max(v2, 1.0);
        // (P3) nonnegative bounded Lipschitz initial datum.
        const double uv = m.U0.value(x, 0.0);
        double v3 = std::max(-uv, uv - B.U0_sup);
        if (dxy > 0.0) v3 = std::max(v3, std::abs(uv - m.U0.value(y, 0.0)) / dxy - B.U0_lip);
        // (d_t h): linear-in-|t - s| envelope.
        const double q = t != s ? std::abs(hv - m.h.value(x, s)) / std::abs(t - s) : 0.0;
        p1[i] = v1;
        p2[i] = v2;
        p3[i] = v3;
        dth_quot[i] = q;
        dth[i] = q - B.dt_h_sup;
        res[i] = {std::max({v1, v2, v3, dth[i]}), {{"x", to_std(x)}, {"y", to_std(y)}, {"t", {t}}, {"s", {s}}}, true};
    });
    merge_results(rep, res);
    auto worst = [](const std::vector<double>& v) {
        return v.empty() ? -std::numeric_limits<double>::infinity() : *std::max_element(v.begin(), v.end());
    };
    if (worst(p1) > tol) rep.failures.push_back("P1");
    if (worst(p2) > tol) rep.failures.push_back("P2");
    if (worst(p3) > tol) rep.failures.push_back("P3");
    if (worst(dth) > tol) rep.failures.push_back("d_t h");
    rep.details["dt_h_linear_envelope"] = std::max(0.0, worst(dth_quot));

    // (XI) on the time grid, with the computed lower barrier.
    const auto bp = compute_barriers(m);
    rep.details["m0"] = bp.m0;
    rep.details["M0"] = bp.M0;
    rep.details["K0"] = bp.K0;
    rep.details["c0"] = bp.c0;
    if (!(bp.m0 > 0.0)) {
        rep.failures.push_back("XI");
        rep.record(-bp.m0, {{"m0", {bp.m0}}});
    }
    for (const auto& c : B.caveats) rep.notes.push_back(c);
    return rep;
}

// ----------------------------------------------------------------------------
// Transformed problem in u = U + h + xi
// ----------------------------------------------------------------------------

struct Dm2Problem {
    ham::HamiltonianSpec H;
    std::function<double(const Vec&)> u0;
    double m0 = 0.0;
    double M0 = 0.0;
};

/// F(x,t,u,p,X) = -1/2 tr(s s^T X) - <mu, p> + rho |s^T p - s^T Dh|^2 / u + r u + g
/// on u in (m0 - m0/2, M0 + m0/2), working interval [m0, M0].
inline Dm2Problem transformed_problem(const MbsModel& m) {
    const auto bp = compute_barriers(m);
    if (!(bp.m0 > 0.0)) {
        throw ModelError("condition XI fails: inf(k_lower + h + xi) = " + fmt17(bp.m0) + " is not positive");
    }
    const MbsModel model = m;
    auto H = ham::make_spec("mbs-dm2", m.N, bp.m0, bp.M0, 0.5 * bp.m0, m.T,
                            [model](const Vec& x, double t, double u, const Vec& p, const Mat& X) {
                                const Mat s = model.sigma(t);
                                const Vec w = s.transpose() * (p - model.h.grad(x, t));
                                return -0.5 * (s * s.transpose() * X).trace() - model.mu(x, t).dot(p) +
                                       model.rho * w.squaredNorm() / u + model.r(t) * u + model.g(x, t);
                            });
    H.x_lo = m.box_lo.minCoeff();
    H.x_hi = m.box_hi.maxCoeff();
    Dm2Problem out;
    out.H = std::move(H);
    out.u0 = [model](const Vec& x) { return model.U0.value(x, 0.0) + model.h.value(x, 0.0) + model.xi(0.0); };
    out.m0 = bp.m0;
    out.M0 = bp.M0;
    return out;
}

/// Moduli and Gamma under which the sampled structural conditions hold for
/// the transformed problem with z(u) = (l1 u - l2)^2, l1 = 1, l2 = m0 / 2.
struct Dm2Structure {
    double lambda1 = 1.0;
    double lambda2 = 0.0;
    double C1 = 0.0;
    double C2 = 0.0;
    double gamma_rate = 0.0;
    transform::GaugeFunction gauge;
    osgood::OsgoodFunction gamma;
    ModulusFamily nuhat;
    ModulusFamily nu2;
    ModulusFamily nu2R;
};

inline Dm2Structure dm2_structure(const MbsModel& m, const Dm2Problem& P, double R) {
    if (!(m.rho > 0.0)) throw PreconditionError("the Osgood rate needs rho > 0");
    const auto& B = m.bounds;
    Dm2Structure s;
    const double m0 = P.m0;
    const double M0 = P.M0;
    const double l1 = 1.0;
    const double l2 = 0.5 * m0;
    s.lambda1 = l1;
    s.lambda2 = l2;
    s.gauge = transform::affine_sq_gauge(l1, l2, m0, M0);
    const double lam0 = (l1 * m0 - l2) * (l1 * m0 - l2);
    const double Lam0 = (l1 * M0 - l2) * (l1 * M0 - l2);
    const double k_sup = B.sigma_sup * B.grad_h_sup;
    const double G_sup = B.r_sup * M0 + B.g_sup;
    // Lipschitz constant of 1 / ((l1 u - l2) u) on [m0, M0], attained at m0.
    const double lip_fu = (2.0 * l1 * m0 - l2) / ((l1 * m0 - l2) * (l1 * m0 - l2) * m0 * m0);
    const double Bterm = (B.r_sup * l2 + B.g_sup * l1) / ((l1 * m0 - l2) * (l1 * m0 - l2));
    s.C2 = std::max(2.0 * k_sup / (m0 * m0), k_sup * k_sup * lip_fu + Bterm / m.rho) * 1.05;
    s.gamma_rate = m.rho * ((s.C2 * M0) * (s.C2 * M0) / (4.0 * l2) + s.C2);
    // Data without cash-flow or discount give rate 0; keep Gamma a positive linear map.
    s.gamma_rate = std::max(s.gamma_rate, 1e-12);
    const double sq0 = std::sqrt(lam0);
    s.C1 = 1.1 *
           ((l1 * std::sqrt(Lam0) / (2.0 * lam0) + m.rho / m0) * B.sigma_sup * B.sigma_sup * R +
            m.rho * k_sup * k_sup / (lam0 * m0) + G_sup / lam0) /
           (2.0 * sq0);
    s.gamma = osgood::make_linear(s.gamma_rate, std::sqrt(Lam0 / lam0) * (M0 - m0));
    s.nuhat = ModulusFamily::linear(s.C1);
    const double lip_k = B.sigma_sup * B.grad_h_lip;
    const double L2 = B.mu_lip + B.g_lip + 2.0 * m.rho * lip_k * std::max(B.sigma_sup, k_sup) / m0;
    s.nu2 = ModulusFamily::linear(1.1 * L2);
    s.nu2R = ModulusFamily::linear(0.5 * B.trace_ssT_sup * 1.0000001);
    return s;
}

// ----------------------------------------------------------------------------
// Regularity constants
// ----------------------------------------------------------------------------

/// Inputs of the growth constant
///   C = 2 Lip(mu) + |l2'|^2 |w|^2 / (4 min l1') + 2 |l2| |s^T| Lip(w)
///       + Lip(f) (1/(2M) + 1).
struct ConstantInputs {
    double lip_mu = 0;
    double lambda2_prime_sup = 0;
    double w_sup = 0;
    double lambda1_prime_min = 1;
    double lambda2_sup = 0;
    double sigmaT_sup = 0;
    double lip_w = 0;
    double lip_f = 0;
};

inline double growth_constant(const ConstantInputs& c, double M) {
    if (!(M > 0.0)) throw PreconditionError("M must be positive");
    if (!(c.lambda1_prime_min > 0.0)) throw PreconditionError("min lambda1' must be positive");
    const double quad = c.w_sup == 0.0 ? 0.0
                                       : c.lambda2_prime_sup * c.lambda2_prime_sup * c.w_sup * c.w_sup /
                                             (4.0 * c.lambda1_prime_min);
    return 2.0 * c.lip_mu + quad + 2.0 * c.lambda2_sup * c.sigmaT_sup * c.lip_w + c.lip_f * (1.0 / (2.0 * M) + 1.0);
}

struct RegularityData {
    std::function<double(double)> lambda1;
    std::function<double(double)> lambda1_prime;
    std::function<double(double)> lambda2;
    std::function<Vec(const Vec&, double)> w;
    std::function<double(const Vec&, double, double)> f;
    double M = 1.0;
    double C = 0.0;
    double m0 = 1.0;
    double M0 = 1.0;
    double v_max = 0.0;      ///< working interval of v is [0, v_max]
    double lip_v0 = 0.0;     ///< upper bound on Lip(v0)
    double grad_h_sup = 0.0;
    ConstantInputs inputs;
};

/// I(v) = m0 (e^{2v/m0} + 1) / 2 on [0, (m0/2) log(2 M0/m0 - 1)].
inline double mbs_inverse(double v, double m0) { return 0.5 * m0 * (std::exp(2.0 * v / m0) + 1.0); }

/// Lipschitz bound on v0 = I^{-1}(u0): Lip(u0) / min sqrt z, and sqrt z >= 1
/// on [m0, M0] for the exponential gauge.
inline double lip_v0_bound(const MbsModel& m) { return m.bounds.U0_lip + m.bounds.grad_h_sup; }

inline RegularityData regularity_constant(const MbsModel& m, double M) {
    const auto bp = compute_barriers(m);
    if (!(bp.m0 > 0.0)) throw ModelError("condition XI fails: m0 = " + fmt17(bp.m0));
    const double lipv0 = lip_v0_bound(m);
    if (!(M > 0.5 * lipv0)) {
        throw PreconditionError("M = " + fmt17(M) + " must exceed Lip(v0)/2 = " + fmt17(0.5 * lipv0));
    }
    const double m0 = bp.m0;
    const double M0 = bp.M0;
    const double rho = m.rho;
    const auto& B = m.bounds;
    RegularityData rd;
    rd.M = M;
    rd.m0 = m0;
    rd.M0 = M0;
    rd.lip_v0 = lipv0;
    rd.grad_h_sup = B.grad_h_sup;
    rd.v_max = 0.5 * m0 * std::log(2.0 * M0 / m0 - 1.0);
    rd.lambda1 = [rho, m0](double v) {
        const double E = std::exp(2.0 * v / m0);
        return 2.0 * rho * E / (m0 * (E + 1.0)) - 1.0 / m0;
    };
    rd.lambda1_prime = [rho, m0](double v) {
        const double E = std::exp(2.0 * v / m0);
        return 4.0 * rho / (m0 * m0) * E / ((E + 1.0) * (E + 1.0));
    };
    rd.lambda2 = [rho, m0](double v) { return -2.0 * rho / mbs_inverse(v, m0); };
    const MbsModel model = m;
    rd.w = [model](const Vec& x, double t) -> Vec { return model.sigma(t).transpose() * model.h.grad(x, t); };
    rd.f = [model, m0](const Vec& x, double t, double v) {
        const double I = mbs_inverse(v, m0);
        const double Ip = std::exp(2.0 * v / m0);
        const Vec w = model.sigma(t).transpose() * model.h.grad(x, t);
        return model.rho * w.squaredNorm() / (I * Ip) + model.g(x, t) / Ip + model.r(t) * I / Ip;
    };
    ConstantInputs c;
    c.lip_mu = B.mu_lip;
    c.w_sup = B.sigma_sup * B.grad_h_sup;
    c.lip_w = B.sigma_sup * B.grad_h_lip;
    c.sigmaT_sup = B.sigma_sup;
    c.lambda2_sup = 2.0 * rho / m0;
    c.lambda2_prime_sup = 2.0 * rho / (m0 * m0);
    const double E_max = 2.0 * M0 / m0 - 1.0;
    c.lambda1_prime_min = 4.0 * rho / (m0 * m0) * E_max / ((E_max + 1.0) * (E_max + 1.0));
    // Lip_x f + Lip_v f with 1/(I I'), 1/I' and I/I' differentiated in closed form.
    const double lip_x = 2.0 * rho * c.w_sup * c.lip_w / m0 + B.g_lip;
    const double lip_v = 3.0 * rho * c.w_sup * c.w_sup / (m0 * m0) + 2.0 * B.g_sup / m0 + B.r_sup;
    c.lip_f = lip_x + lip_v;
    rd.inputs = c;
    if (rho > 0.0) {
        rd.C = growth_constant(c, M);
    } else {
        // rho = 0 removes the lambda terms; min lambda1' is then irrelevant.
        ConstantInputs c0 = c;
        c0.w_sup = 0.0;
        c0.lambda1_prime_min = 1.0;
        rd.C = growth_constant(c0, M);
    }
    return rd;
}

struct LipschitzBound {
    double v_scale = 0.0;
    double u_scale = 0.0;
};

/// 2M e^{Ct} in v and 2M (2 M0/m0 - 1) e^{Ct} in u.
inline LipschitzBound lipschitz_bound(const RegularityData& rd, double t) {
    const double v = 2.0 * rd.M * std::exp(rd.C * t);
    return {v, v * (2.0 * rd.M0 / rd.m0 - 1.0)};
}

/// Default M: slightly above Lip(v0)/2, and at least 1/2.
inline double default_M(const MbsModel& m) { return std::max(0.5, 0.55 * lip_v0_bound(m) + 1e-9); }

// ----------------------------------------------------------------------------
// Fixture registry
// ----------------------------------------------------------------------------

/// "example1", "example2-power", "example2-log", "mbs-dm2" (desk model).
inline ham::HamiltonianSpec make_fixture(const std::string& id) {
    if (id == "example1") return ham::example1();
    if (id == "example2-power") return ham::example2_power();
    if (id == "example2-log") return ham::example2_log();
    if (id == "mbs-dm2") return transformed_problem(desk_model()).H;
    throw ConfigError("unknown fixture '" + id + "'");
}

}  // namespace visc::mbs
