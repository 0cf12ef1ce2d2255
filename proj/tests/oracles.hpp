#pragma once

// Closed forms and brute-force references used as independent oracles. Nothing
// here calls into the library.

#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

inline constexpr double e = 2.718281828459045235360287;
inline constexpr double pi = 3.141592653589793238462643;

inline double heat_cos(double x, double t) { return std::exp(-t) * std::cos(x); }

/// Solution of k' = -r0 k + (tau - r0) h0, k(0) = u0.
inline double k_lower_const(double r0, double h0, double u0, double tau, double t) {
    if (r0 == 0.0) return u0 + tau * h0 * t;
    return std::exp(-r0 * t) * u0 + (tau - r0) * h0 * (1.0 - std::exp(-r0 * t)) / r0;
}

/// Classical RK4 for y' = f(t, y) from t = 0 to t_end.
inline double rk4(const std::function<double(double, double)>& f, double y0, double t_end, int n) {
    const double h = t_end / n;
    double y = y0;
    for (int i = 0; i < n; ++i) {
        const double t = h * i;
        const double k1 = f(t, y);
        const double k2 = f(t + 0.5 * h, y + 0.5 * h * k1);
        const double k3 = f(t + 0.5 * h, y + 0.5 * h * k2);
        const double k4 = f(t + h, y + h * k3);
        y += h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
    }
    return y;
}

/// Composite Gauss-Legendre (5 points) on n panels.
inline double gauss(const std::function<double(double)>& f, double a, double b, int n) {
    static const double xs[5] = {0.0, -0.5384693101056831, 0.5384693101056831, -0.9061798459386640,
                                 0.9061798459386640};
    static const double ws[5] = {0.5688888888888889, 0.4786286704993665, 0.4786286704993665, 0.2369268850561891,
                                 0.2369268850561891};
    const double h = (b - a) / n;
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
        const double m = a + h * (i + 0.5);
        for (int k = 0; k < 5; ++k) s += ws[k] * f(m + 0.5 * h * xs[k]);
    }
    return 0.5 * h * s;
}

/// Brute-force maximum on a uniform grid.
inline double grid_max(const std::function<double(double)>& f, double a, double b, int n) {
    double best = f(a);
    for (int i = 1; i <= n; ++i) best = std::max(best, f(a + (b - a) * i / n));
    return best;
}

inline double xlog(double h) { return h <= 0.0 ? 0.0 : (h < 1.0 / e ? -h * std::log(h) : 1.0 / e); }

/// Exact flow of f' = f log(1/f) from delta in (0, 1/e).
inline double xlog_flow(double delta, double t) { return std::pow(delta, std::exp(-t)); }

/// Laplacian of h0 / (1 + |x|^2) in N dimensions at squared radius r2.
inline double inv_quad_laplacian(double h0, double r2, int N) {
    const double q = 1.0 + r2;
    return h0 * (-2.0 * N / (q * q) + 8.0 * r2 / (q * q * q));
}

/// Symmetric eigenvalues of a 2x2 matrix [[a, b], [b, c]].
inline std::pair<double, double> eig2(double a, double b, double c) {
    const double m = 0.5 * (a + c);
    const double r = std::sqrt(0.25 * (a - c) * (a - c) + b * b);
    return {m - r, m + r};
}

}  // namespace oracle
