#pragma once

// Change of unknown u -> Psi(u) = int_{base}^{u} z(s)^{-1/2} ds and its
// inverse I, with I'(v) = sqrt(z(I(v))) and I''(v) = z'(I(v)) / 2.

#include "visc/core.hpp"

#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace visc::transform {

/// Positive gauge z with derivative, bounded by [lambda0, Lambda0] on [lo, hi].
struct GaugeFunction {
    std::string name;
    std::function<double(double)> z;
    std::function<double(double)> z_prime;
    double lo = 0.0;
    double hi = 0.0;
    double lambda0 = 1.0;
    double Lambda0 = 1.0;

    [[nodiscard]] bool covers(double a, double b) const { return lo <= a && b <= hi; }
};

/// Builds a gauge on [lo, hi], computing lambda0 / Lambda0 by a dense scan.
inline GaugeFunction make_gauge(std::string name, std::function<double(double)> z,
                                std::function<double(double)> z_prime, double lo, double hi) {
    if (!(hi >= lo)) throw ConfigError("gauge interval must satisfy lo <= hi");
    double mn = std::numeric_limits<double>::infinity();
    double mx = 0.0;
    constexpr int n = 10000;
    for (int i = 0; i <= n; ++i) {
        const double u = lo + (hi - lo) * static_cast<double>(i) / n;
        const double v = z(u);
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw ConfigError("gauge '" + name + "' is not positive at u = " + fmt17(u));
        }
        mn = std::min(mn, v);
        mx = std::max(mx, v);
    }
    return {std::move(name), std::move(z), std::move(z_prime), lo, hi, mn, mx};
}

inline GaugeFunction unit_gauge(double lo, double hi) {
    return make_gauge("unit", [](double) { return 1.0; }, [](double) { return 0.0; }, lo, hi);
}

/// z(u) = (l1 u - l2)^2.
inline GaugeFunction affine_sq_gauge(double l1, double l2, double lo, double hi) {
    return make_gauge(
        "affine-sq:" + fmt17(l1) + "," + fmt17(l2), [l1, l2](double u) { return (l1 * u - l2) * (l1 * u - l2); },
        [l1, l2](double u) { return 2.0 * l1 * (l1 * u - l2); }, lo, hi);
}

/// z(u) = (u + 1)^2.
inline GaugeFunction shift_sq_gauge(double lo, double hi) {
    return make_gauge("shift-sq", [](double u) { return (u + 1.0) * (u + 1.0); },
                      [](double u) { return 2.0 * (u + 1.0); }, lo, hi);
}

/// z(u) = exp(-2u).
inline GaugeFunction exp_gauge(double lo, double hi) {
    return make_gauge("exp", [](double u) { return std::exp(-2.0 * u); },
                      [](double u) { return -2.0 * std::exp(-2.0 * u); }, lo, hi);
}

/// Gauge whose inverse transformation is I(v) = m0 (exp(2v/m0) + 1) / 2 when
/// the base point is m0; equivalently z(u) = (2u/m0 - 1)^2.
inline GaugeFunction mbs_exp_gauge(double m0, double lo, double hi) {
    if (!(m0 > 0.0)) throw ConfigError("mbs-exp gauge needs m0 > 0");
    auto g = affine_sq_gauge(2.0 / m0, 1.0, lo, hi);
    g.name = "mbs-exp:" + fmt17(m0);
    return g;
}

/// z(u) = (u^2 + 1)^2 (beta - atan(u)^2 / 2)^2, requiring 8 beta > pi^2.
inline GaugeFunction arctan_gauge(double beta, double lo, double hi) {
    if (!(8.0 * beta > kPi * kPi)) throw ConfigError("arctan gauge requires 8*beta > pi^2");
    auto root = [beta](double u) {
        const double a = std::atan(u);
        return (u * u + 1.0) * (beta - 0.5 * a * a);
    };
    auto root_prime = [beta](double u) {
        const double a = std::atan(u);
        return 2.0 * u * (beta - 0.5 * a * a) - a;
    };
    return make_gauge(
        "arctan:" + fmt17(beta), [root](double u) { return root(u) * root(u); },
        [root, root_prime](double u) { return 2.0 * root(u) * root_prime(u); }, lo, hi);
}

namespace detail {
inline std::vector<double> parse_params(const std::string& s) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos < s.size()) {
        const auto comma = s.find(',', pos);
        const std::string tok = s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        try {
            out.push_back(std::stod(tok));
        } catch (const std::exception&) {
            throw ConfigError("bad numeric parameter '" + tok + "'");
        }
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}
}  // namespace detail

/// Catalog lookup: "unit", "affine-sq:l1,l2", "shift-sq", "exp",
/// "mbs-exp:m0,M0", "arctan:beta".
inline GaugeFunction gauge_from_id(const std::string& id, double lo, double hi) {
    const auto colon = id.find(':');
    const std::string kind = id.substr(0, colon);
    const auto params = colon == std::string::npos ? std::vector<double>{} : detail::parse_params(id.substr(colon + 1));
    auto need = [&](std::size_t n) {
        if (params.size() != n) throw ConfigError("gauge '" + kind + "' expects " + std::to_string(n) + " parameter(s)");
    };
    if (kind == "unit") return unit_gauge(lo, hi);
    if (kind == "shift-sq") return shift_sq_gauge(lo, hi);
    if (kind == "exp") return exp_gauge(lo, hi);
    if (kind == "affine-sq") {
        need(2);
        return affine_sq_gauge(params[0], params[1], lo, hi);
    }
    if (kind == "mbs-exp") {
        need(2);
        if (!(params[1] > params[0])) throw ConfigError("mbs-exp gauge needs M0 > m0");
        return mbs_exp_gauge(params[0], lo, hi);
    }
    if (kind == "arctan") {
        need(1);
        return arctan_gauge(params[0], lo, hi);
    }
    throw ConfigError("unknown gauge identifier '" + id + "'");
}

/// Psi and its inverse on the gauge interval, with a monotone lookup table
/// used to bracket inversions.
class Transformation {
public:
    static constexpr std::size_t kTableSize = 512;

    Transformation(GaugeFunction gauge, double base_point) : gauge_(std::move(gauge)), base_(base_point) {
        if (!(base_ >= gauge_.lo && base_ <= gauge_.hi)) {
            throw ConfigError("base point " + fmt17(base_) + " outside gauge interval " +
                              interval_str(gauge_.lo, gauge_.hi));
        }
        nodes_.resize(kTableSize);
        values_.resize(kTableSize);
        const double lo = gauge_.lo;
        const double hi = gauge_.hi;
        for (std::size_t i = 0; i < kTableSize; ++i) {
            nodes_[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(kTableSize - 1);
        }
        nodes_.back() = hi;
        values_[0] = 0.0;
        for (std::size_t i = 1; i < kTableSize; ++i) {
            values_[i] = values_[i - 1] + segment(nodes_[i - 1], nodes_[i]);
        }
        // Shift so that Psi(base) = 0.
        const double at_base = raw_psi(base_);
        for (auto& v : values_) v -= at_base;
        if (hi > lo) {
            for (std::size_t i = 1; i < kTableSize; ++i) {
                if (!(values_[i] > values_[i - 1])) throw ConfigError("Psi table is not strictly increasing");
            }
        }
    }

    [[nodiscard]] const GaugeFunction& gauge() const { return gauge_; }
    [[nodiscard]] double base_point() const { return base_; }
    [[nodiscard]] double domain_lo() const { return gauge_.lo; }
    [[nodiscard]] double domain_hi() const { return gauge_.hi; }
    [[nodiscard]] double range_lo() const { return values_.front(); }
    [[nodiscard]] double range_hi() const { return values_.back(); }
    [[nodiscard]] const std::vector<double>& table_nodes() const { return nodes_; }
    [[nodiscard]] const std::vector<double>& table_values() const { return values_; }

    [[nodiscard]] double psi(double u) const {
        if (!(u >= gauge_.lo && u <= gauge_.hi)) {
            throw DomainError("Psi argument " + fmt17(u) + " outside " + interval_str(gauge_.lo, gauge_.hi));
        }
        const std::size_t k = node_index(u);
        return values_[k] + segment(nodes_[k], u);
    }

    [[nodiscard]] double psi_inverse(double v) const {
        if (!(v >= range_lo() && v <= range_hi())) {
            throw RangeError("value " + fmt17(v) + " outside the range of Psi " + interval_str(range_lo(), range_hi()));
        }
        if (nodes_.back() == nodes_.front()) return nodes_.front();
        auto it = std::upper_bound(values_.begin(), values_.end(), v);
        std::size_t k = it == values_.begin() ? 0 : static_cast<std::size_t>(it - values_.begin()) - 1;
        if (k >= kTableSize - 1) k = kTableSize - 2;
        double a = nodes_[k];
        double b = nodes_[k + 1];
        const double va = values_[k];
        const double vb = values_[k + 1];
        double u = a + (b - a) * (v - va) / (vb - va);
        for (int it2 = 0; it2 < 100; ++it2) {
            const double r = values_[k] + segment(nodes_[k], u) - v;
            if (std::abs(r) <= 1e-14 * std::max(1.0, std::abs(v))) break;
            if (r > 0.0) b = u;
            else a = u;
            double next = u - r * std::sqrt(gauge_.z(u));
            if (!(next > a && next < b)) next = 0.5 * (a + b);
            if (next == u || b - a <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(u))) {
                u = next;
                break;
            }
            u = next;
        }
        return u;
    }

    /// (I'(v), I''(v)).
    [[nodiscard]] std::pair<double, double> inverse_derivatives(double v) const {
        const double u = psi_inverse(v);
        return {std::sqrt(gauge_.z(u)), 0.5 * gauge_.z_prime(u)};
    }

    /// I, I', I'' at v in one inversion.
    struct Jet {
        double value;
        double first;
        double second;
    };
    [[nodiscard]] Jet inverse_jet(double v) const {
        const double u = psi_inverse(v);
        return {u, std::sqrt(gauge_.z(u)), 0.5 * gauge_.z_prime(u)};
    }

private:
    [[nodiscard]] double segment(double a, double b) const {
        const auto& z = gauge_.z;
        return integrate([&z](double s) { return 1.0 / std::sqrt(z(s)); }, a, b, 1e-14, 40);
    }

    [[nodiscard]] double raw_psi(double u) const {
        const std::size_t k = node_index(u);
        return values_[k] + segment(nodes_[k], u);
    }

    [[nodiscard]] std::size_t node_index(double u) const {
        auto it = std::upper_bound(nodes_.begin(), nodes_.end(), u);
        std::size_t k = it == nodes_.begin() ? 0 : static_cast<std::size_t>(it - nodes_.begin()) - 1;
        return std::min(k, kTableSize - 1);
    }

    GaugeFunction gauge_;
    double base_;
    std::vector<double> nodes_;
    std::vector<double> values_;
};

}  // namespace visc::transform
