// visc: command-line front end for the solver, barrier and structure checks.
//
// Exit status: 0 when every invoked check passes, 2 when a check fails,
// 1 on configuration or usage errors.

#include "visc/visc.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace visc;

namespace {

constexpr int kOk = 0;
constexpr int kConfig = 1;
constexpr int kCheckFailed = 2;

json read_json(const std::string& path, const std::string& what) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + what + " file '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(what + " file '" + path + "': " + e.what());
    }
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Collects artifacts under one directory and writes the manifest last.
class Output {
public:
    Output(std::string command, json config, std::uint64_t seed, const std::string& dir)
        : command_(std::move(command)), config_(std::move(config)), seed_(seed), dir_(dir) {}

    void text(const std::string& name, const std::string& content) {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec) throw ConfigError("cannot create output directory '" + dir_.string() + "': " + ec.message());
        std::ofstream out(dir_ / name, std::ios::binary);
        if (!out) throw ConfigError("cannot write '" + (dir_ / name).string() + "'");
        out << content;
        files_.push_back(name);
    }

    void json_file(const std::string& name, json j) {
        j["seed"] = seed_;
        text(name, j.dump(2) + "\n");
    }

    void manifest(int status) {
        json m;
        m["command"] = command_;
        m["config"] = config_;
        m["config_hash"] = hex64(fnv1a(config_.dump()));
        m["seed"] = seed_;
        auto listed = files_;
        listed.push_back("manifest.json");
        m["files"] = listed;
        m["exit_status"] = status;
        text("manifest.json", m.dump(2) + "\n");
    }

private:
    std::string command_;
    json config_;
    std::uint64_t seed_;
    fs::path dir_;
    std::vector<std::string> files_;
};

Vec parse_point(const std::string& s) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            std::size_t used = 0;
            v.push_back(std::stod(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw ConfigError("--point: cannot parse '" + tok + "' as a number");
        }
    }
    if (v.empty()) throw ConfigError("--point: expected comma-separated coordinates");
    return Eigen::Map<Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) out.push_back(tok);
    }
    return out;
}

solver::GridSpec default_grid(const mbs::MbsModel& m) {
    solver::GridSpec g;
    g.lo = m.box_lo;
    g.hi = m.box_hi;
    g.nodes.assign(m.N, m.N == 1 ? 401 : 101);
    g.validate();
    return g;
}

json report_list(const std::vector<CheckReport>& reps) {
    json a = json::array();
    for (const auto& r : reps) a.push_back(r.to_json());
    return a;
}

bool all_pass(const std::vector<CheckReport>& reps) {
    return std::all_of(reps.begin(), reps.end(), [](const CheckReport& r) { return r.pass(); });
}

// ----------------------------------------------------------------------------
// Subcommands
// ----------------------------------------------------------------------------

struct Args {
    std::string model;
    std::string fixture;
    std::string grid;
    std::string grids;
    std::string scheme;
    std::string out = "visc-out";
    std::uint64_t seed = 7;
    std::size_t samples = 10000;
    std::size_t n_times = 1000;
    double R = 1.0;
    std::string gamma = "xlog";
    double f0 = 1e-3;
    double dt = 1e-4;
    double T = 1.0;
    std::string point = "0";
    double t = 0.5;
    std::size_t paths = 200000;
    std::size_t mc_steps = 100;
    std::string gauge = "unit";
    double lo = 0.0;
    double hi = 1.0;
};

int cmd_solve(const Args& a) {
    const json mj = read_json(a.model, "model");
    const auto m = mbs::model_from_json(mj);
    const json gj = read_json(a.grid, "grid");
    const auto grid = solver::grid_from_json(gj, m.N);
    json sj = json::object();
    if (!a.scheme.empty()) sj = read_json(a.scheme, "scheme");
    const auto cfg = solver::scheme_from_json(sj);

    Output out("solve", {{"model", mj}, {"grid", gj}, {"scheme", sj}}, a.seed, a.out);
    const auto run = solver::solve(m, grid, cfg, a.seed);
    std::ostringstream csv;
    solver::write_snapshots_csv(csv, run);
    out.text("snapshots.csv", csv.str());

    json r;
    r["steps"] = run.steps;
    r["dt"] = run.cfg.dt;
    r["theta"] = run.cfg.theta;
    r["t_end"] = run.cfg.t_end;
    r["record_every"] = run.cfg.record_every;
    r["recorded_times"] = json::array();
    for (const auto& f : run.fields) r["recorded_times"].push_back(f.t);
    r["sandwich_ok"] = run.sandwich_ok;
    r["max_gradient"] = run.max_gradient;
    r["p_bound_exceeded"] = run.p_bound_exceeded;
    r["guard_active"] = run.guard_active;
    r["notes"] = run.notes;
    const int status = run.sandwich_ok ? kOk : kCheckFailed;
    out.json_file("run.json", r);
    out.manifest(status);
    return status;
}

std::vector<CheckReport> fixture_checks(const std::string& id, std::size_t n, std::uint64_t seed, double R) {
    if (id == "mbs-dm2") {
        const auto m = mbs::desk_model();
        const auto d = mbs::transformed_problem(m);
        const auto s = mbs::dm2_structure(m, d, R);
        return {ham::check_degenerate_ellipticity(d.H, n, seed), ham::check_gradient_modulus(d.H, R, n, seed + 1),
                ham::check_structure_cp6(d.H, R, s.nu2, s.nu2R, n, seed + 2),
                ham::check_osgood_structure_cp7(d.H, s.gauge, s.gamma, s.nuhat, R, n, seed + 3)};
    }
    const auto H = mbs::make_fixture(id);
    std::vector<CheckReport> reps{ham::check_degenerate_ellipticity(H, n, seed),
                                  ham::check_gradient_modulus(H, R, n, seed + 1)};
    if (id == "example1") {
        const double N = static_cast<double>(H.dim);
        reps.push_back(ham::check_structure_cp6(H, R, ModulusFamily::zero(), ModulusFamily::linear(N), n, seed + 2));
        reps.push_back(ham::check_osgood_structure_cp7(H, transform::shift_sq_gauge(H.a, kInvE), osgood::make_xlog(),
                                                       ModulusFamily::linear(4.0 * R + 3.0), R, n, seed + 3));
    }
    return reps;
}

int cmd_check_conditions(const Args& a) {
    if (a.model.empty() == a.fixture.empty()) throw ConfigError("give exactly one of --model and --fixture");
    json config = {{"samples", a.samples}, {"R", a.R}};
    std::vector<CheckReport> reps;
    json extra = json::object();
    if (!a.model.empty()) {
        const json mj = read_json(a.model, "model");
        config["model"] = mj;
        const auto m = mbs::model_from_json(mj);
        reps.push_back(mbs::validate_model(m, a.samples, a.seed));
        reps.push_back(mbs::barrier_residuals(m, a.samples, a.seed + 1));
        if (m.rho > 0.0) {
            const auto d = mbs::transformed_problem(m);
            const auto s = mbs::dm2_structure(m, d, a.R);
            reps.push_back(ham::check_degenerate_ellipticity(d.H, a.samples, a.seed + 2));
            reps.push_back(ham::check_gradient_modulus(d.H, a.R, a.samples, a.seed + 3));
            reps.push_back(ham::check_structure_cp6(d.H, a.R, s.nu2, s.nu2R, a.samples, a.seed + 4));
            reps.push_back(ham::check_osgood_structure_cp7(d.H, s.gauge, s.gamma, s.nuhat, a.R, a.samples, a.seed + 5));
            extra["structure"] = {{"lambda1", s.lambda1}, {"lambda2", s.lambda2},     {"C1", s.C1},
                                  {"C2", s.C2},           {"gamma_rate", s.gamma_rate}, {"gauge", s.gauge.name}};
        } else {
            extra["structure"] = "skipped: the quadratic gradient term vanishes for rho = 0";
        }
    } else {
        config["fixture"] = a.fixture;
        reps = fixture_checks(a.fixture, a.samples, a.seed, a.R);
    }
    Output out("check-conditions", config, a.seed, a.out);
    const bool ok = all_pass(reps);
    out.json_file("report.json", {{"checks", report_list(reps)}, {"pass", ok}, {"extra", extra}});
    const int status = ok ? kOk : kCheckFailed;
    out.manifest(status);
    return status;
}

int cmd_barriers(const Args& a) {
    const json mj = read_json(a.model, "model");
    const auto m = mbs::model_from_json(mj);
    Output out("barriers", {{"model", mj}, {"n", a.n_times}, {"samples", a.samples}}, a.seed, a.out);
    const auto bp = mbs::compute_barriers(m);
    std::ostringstream csv;
    mbs::write_barrier_csv(csv, bp, a.n_times);
    out.text("barriers.csv", csv.str());
    const auto rep = mbs::barrier_residuals(m, a.samples, a.seed);
    out.json_file("report.json", {{"K0", bp.K0},
                                  {"c0", bp.c0},
                                  {"m0", bp.m0},
                                  {"M0", bp.M0},
                                  {"sup_k_lower", bp.sup_k_lower},
                                  {"residuals", rep.to_json()}});
    const int status = rep.pass() ? kOk : kCheckFailed;
    out.manifest(status);
    return status;
}

int cmd_osgood_demo(const Args& a) {
    const auto g = osgood::from_id(a.gamma);
    Output out("osgood-demo", {{"gamma", a.gamma}, {"f0", a.f0}, {"dt", a.dt}, {"T", a.T}}, a.seed, a.out);
    const auto tr = osgood::ode_flow(g, a.f0, a.T, a.dt);
    std::ostringstream flow;
    osgood::write_flow_csv(flow, tr);
    out.text("flow.csv", flow.str());
    const auto eps = osgood::default_eps_sequence();
    const auto scores = osgood::divergence_score(g, eps);
    std::ostringstream sc;
    osgood::write_scores_csv(sc, eps, scores);
    out.text("scores.csv", sc.str());

    json r;
    bool ok = true;
    r["final_value"] = tr.values.back();
    r["saturated"] = tr.saturated;
    const bool claimed = g.tag == osgood::OsgoodFunction::Tag::osgood_claimed;
    r["osgood_claimed"] = claimed;
    r["scores_diverge"] = osgood::osgood_consistent(scores);
    ok = ok && r["scores_diverge"].get<bool>() == claimed;
    if (a.f0 == 0.0) {
        const bool zero = std::all_of(tr.values.begin(), tr.values.end(), [](double v) { return v == 0.0; });
        r["zero_flow_exact"] = zero;
        ok = ok && zero;
    } else if (g.name == "xlog") {
        // f' = f log(1/f) gives f(t) = f0^(e^-t) below 1/e.
        const double exact = std::pow(a.f0, std::exp(-tr.times.back()));
        if (exact < kInvE) {
            const double rel = std::abs(tr.values.back() - exact) / exact;
            r["closed_form"] = exact;
            r["relative_error"] = rel;
            ok = ok && rel <= 1e-2;
        }
    }
    r["pass"] = ok;
    out.json_file("report.json", r);
    const int status = ok ? kOk : kCheckFailed;
    out.manifest(status);
    return status;
}

int cmd_convergence(const Args& a) {
    const json mj = read_json(a.model, "model");
    const auto m = mbs::model_from_json(mj);
    const auto paths = split_list(a.grids);
    if (paths.size() < 3) throw ConfigError("--grids: need at least three grid files");
    json gjs = json::array();
    std::vector<solver::GridSpec> grids;
    for (const auto& p : paths) {
        gjs.push_back(read_json(p, "grid"));
        grids.push_back(solver::grid_from_json(gjs.back(), m.N));
    }
    json sj = json::object();
    if (!a.scheme.empty()) sj = read_json(a.scheme, "scheme");
    const auto cfg = solver::scheme_from_json(sj);
    Output out("convergence", {{"model", mj}, {"grids", gjs}, {"scheme", sj}}, a.seed, a.out);
    const auto rows = solver::refinement_study(m, grids, cfg);
    std::ostringstream csv;
    solver::write_refinement_csv(csv, rows);
    out.text("refinement.csv", csv.str());
    bool shrinking = true;
    for (std::size_t i = 2; i < rows.size(); ++i) shrinking = shrinking && rows[i].diff < rows[i - 1].diff;
    out.json_file("report.json", {{"diffs_shrink", shrinking}, {"last_order", rows.back().order}});
    const int status = shrinking ? kOk : kCheckFailed;
    out.manifest(status);
    return status;
}

int cmd_oracle_compare(const Args& a) {
    const json mj = read_json(a.model, "model");
    const auto m = mbs::model_from_json(mj);
    const Vec x = parse_point(a.point);
    if (static_cast<std::size_t>(x.size()) != m.N) throw ConfigError("--point: expected " + std::to_string(m.N) + " coordinates");
    json gj = nullptr;
    solver::GridSpec grid = default_grid(m);
    if (!a.grid.empty()) {
        gj = read_json(a.grid, "grid");
        grid = solver::grid_from_json(gj, m.N);
    }
    Output out("oracle-compare",
               {{"model", mj}, {"grid", gj}, {"point", a.point}, {"t", a.t}, {"paths", a.paths}, {"steps", a.mc_steps}},
               a.seed, a.out);
    const auto mc = solver::mc_oracle(m, x, a.t, a.paths, a.mc_steps, a.seed);
    solver::SchemeConfig cfg;
    cfg.t_end = a.t;
    const auto run = solver::solve(m, grid, cfg, a.seed);
    const double pde = solver::interpolate(run.fields.back(), x);
    const double gap = std::abs(pde - mc.estimate);
    const bool ok = gap <= 3.0 * mc.stderr_;
    out.json_file("compare.json", {{"solver", pde},
                                   {"mc_estimate", mc.estimate},
                                   {"mc_stderr", mc.stderr_},
                                   {"abs_gap", gap},
                                   {"tolerance", 3.0 * mc.stderr_},
                                   {"pass", ok}});
    const int status = ok ? kOk : kCheckFailed;
    out.manifest(status);
    return status;
}

int cmd_transform_roundtrip(const Args& a) {
    const auto g = transform::gauge_from_id(a.gauge, a.lo, a.hi);
    const transform::Transformation T(g, a.lo);
    Output out("transform-roundtrip", {{"gauge", a.gauge}, {"lo", a.lo}, {"hi", a.hi}, {"samples", a.samples}},
               a.seed, a.out);
    double worst = 0.0;
    for (std::size_t i = 0; i < a.samples; ++i) {
        auto rng = sample_engine(a.seed, i);
        const double v = std::uniform_real_distribution<double>(T.range_lo(), T.range_hi())(rng);
        worst = std::max(worst, std::abs(T.psi(T.psi_inverse(v)) - v));
    }
    const bool ok = worst <= 1e-8;
    out.json_file("roundtrip.json", {{"gauge", g.name},
                                     {"range", {T.range_lo(), T.range_hi()}},
                                     {"max_error", worst},
                                     {"pass", ok}});
    const int status = ok ? kOk : kCheckFailed;
    out.manifest(status);
    return status;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"visc: viscosity-solution solver and structural checks"};
    app.require_subcommand(1);
    Args a;

    auto common = [&](CLI::App* s) {
        s->add_option("--out", a.out, "output directory")->capture_default_str();
        s->add_option("--seed", a.seed, "random seed")->capture_default_str();
    };

    auto* solve = app.add_subcommand("solve", "run the scheme on a model");
    solve->add_option("--model", a.model)->required();
    solve->add_option("--grid", a.grid)->required();
    solve->add_option("--scheme", a.scheme);
    common(solve);

    auto* check = app.add_subcommand("check-conditions", "sample the structural conditions");
    check->add_option("--model", a.model);
    check->add_option("--fixture", a.fixture, "example1, example2-power, example2-log or mbs-dm2");
    check->add_option("--samples", a.samples)->capture_default_str();
    check->add_option("--R", a.R, "gradient ball radius")->capture_default_str();
    common(check);

    auto* barriers = app.add_subcommand("barriers", "tabulate the barrier functions");
    barriers->add_option("--model", a.model)->required();
    barriers->add_option("--n", a.n_times, "number of time points")->capture_default_str();
    barriers->add_option("--samples", a.samples)->capture_default_str();
    common(barriers);

    auto* demo = app.add_subcommand("osgood-demo", "Euler flow and divergence scores");
    demo->add_option("--gamma", a.gamma)->capture_default_str();
    demo->add_option("--f0", a.f0)->capture_default_str();
    demo->add_option("--dt", a.dt)->capture_default_str();
    demo->add_option("--T", a.T)->capture_default_str();
    common(demo);

    auto* conv = app.add_subcommand("convergence", "grid refinement study");
    conv->add_option("--model", a.model)->required();
    conv->add_option("--grids", a.grids, "comma-separated nested grid files")->required();
    conv->add_option("--scheme", a.scheme);
    common(conv);

    auto* oracle = app.add_subcommand("oracle-compare", "solver vs Monte Carlo at one point");
    oracle->add_option("--model", a.model)->required();
    oracle->add_option("--point", a.point)->capture_default_str();
    oracle->add_option("--t", a.t)->capture_default_str();
    oracle->add_option("--paths", a.paths)->capture_default_str();
    oracle->add_option("--steps", a.mc_steps, "time steps per path")->capture_default_str();
    oracle->add_option("--grid", a.grid);
    common(oracle);

    auto* rt = app.add_subcommand("transform-roundtrip", "Psi(Psi^-1(v)) = v on sampled values");
    rt->add_option("--gauge", a.gauge)->capture_default_str();
    rt->add_option("--lo", a.lo)->capture_default_str();
    rt->add_option("--hi", a.hi)->capture_default_str();
    rt->add_option("--samples", a.samples)->capture_default_str();
    common(rt);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    try {
        if (*solve) return cmd_solve(a);
        if (*check) return cmd_check_conditions(a);
        if (*barriers) return cmd_barriers(a);
        if (*demo) return cmd_osgood_demo(a);
        if (*conv) return cmd_convergence(a);
        if (*oracle) return cmd_oracle_compare(a);
        if (*rt) return cmd_transform_roundtrip(a);
    } catch (const ModelError& e) {
        std::cerr << "model check failed: " << e.what() << '\n';
        return kCheckFailed;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfig;
    }
    return kConfig;
}
