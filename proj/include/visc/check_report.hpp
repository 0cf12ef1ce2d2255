#pragma once

#include "visc/core.hpp"

#include "json.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace visc {

/// Parametric modulus candidate s -> L * s^gamma (gamma = 1 for the linear shape).
struct ModulusFamily {
    enum class Shape { linear, power };

    Shape shape = Shape::linear;
    double coefficient = 0.0;
    double exponent = 1.0;

    static ModulusFamily linear(double L) {
        if (!(L >= 0.0)) throw ConfigError("modulus coefficient must be nonnegative");
        return {Shape::linear, L, 1.0};
    }
    static ModulusFamily power(double L, double gamma) {
        if (!(L >= 0.0)) throw ConfigError("modulus coefficient must be nonnegative");
        if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("modulus exponent must lie in (0, 1]");
        return {Shape::power, L, gamma};
    }
    static ModulusFamily zero() { return linear(0.0); }

    [[nodiscard]] double operator()(double s) const {
        if (s <= 0.0) return 0.0;
        return shape == Shape::linear ? coefficient * s : coefficient * std::pow(s, exponent);
    }

    [[nodiscard]] nlohmann::json to_json() const {
        return {{"shape", shape == Shape::linear ? "linear" : "power"},
                {"coefficient", coefficient},
                {"exponent", exponent}};
    }
};

/// Named tuple of sampled inputs.
using SampleTuple = std::vector<std::pair<std::string, std::vector<double>>>;

inline std::vector<double> to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }
inline std::vector<double> to_std(const Mat& m) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
    return out;
}

/// Outcome of a sampled check. `max_violation` is the most positive value of
/// the checked inequality written as "violation <= 0"; the check passes when
/// it does not exceed `threshold`.
struct CheckReport {
    std::string check;
    std::size_t samples_tested = 0;
    double max_violation = -std::numeric_limits<double>::infinity();
    SampleTuple worst_sample;
    std::optional<ModulusFamily> fitted_modulus;
    std::uint64_t seed = 0;
    double threshold = 1e-9;
    std::vector<std::string> failures;
    std::vector<std::string> notes;
    nlohmann::json details = nlohmann::json::object();

    [[nodiscard]] bool pass() const { return failures.empty() && max_violation <= threshold; }

    /// Keeps the sample with the largest violation; ties keep the earlier one.
    void record(double violation, const SampleTuple& sample) {
        ++samples_tested;
        if (std::isnan(violation)) violation = std::numeric_limits<double>::infinity();
        if (violation > max_violation || worst_sample.empty()) {
            if (violation > max_violation) max_violation = violation;
            worst_sample = sample;
        }
    }

    [[nodiscard]] nlohmann::json to_json() const {
        nlohmann::json ws = nlohmann::json::object();
        for (const auto& [k, v] : worst_sample) ws[k] = v.size() == 1 ? nlohmann::json(v[0]) : nlohmann::json(v);
        nlohmann::json j;
        j["check"] = check;
        j["samples"] = samples_tested;
        j["max_violation"] = std::isfinite(max_violation) ? nlohmann::json(max_violation) : nlohmann::json(nullptr);
        j["worst_sample"] = ws;
        j["fitted_modulus"] = fitted_modulus ? fitted_modulus->to_json() : nlohmann::json(nullptr);
        j["seed"] = seed;
        j["pass"] = pass();
        j["threshold"] = threshold;
        if (!failures.empty()) j["failures"] = failures;
        if (!notes.empty()) j["notes"] = notes;
        if (!details.empty()) j["details"] = details;
        return j;
    }
};

/// Deterministic merge of per-sample results: index order decides ties.
struct SampleResult {
    double violation = -std::numeric_limits<double>::infinity();
    SampleTuple sample;
    bool valid = false;
};

inline void merge_results(CheckReport& report, const std::vector<SampleResult>& results) {
    for (const auto& r : results) {
        if (r.valid) report.record(r.violation, r.sample);
    }
}

}  // namespace visc
