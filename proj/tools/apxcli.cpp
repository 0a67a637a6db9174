// Command-line front end: activation verification, network construction and
// evaluation, scaling and lower-bound studies, and the learning experiment.
// Every command is deterministic under a fixed config + seed and emits CSV
// (17 significant digits, LF endings), SVG charts, and a MANIFEST into the
// output directory.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "apx/activation.hpp"
#include "apx/analysis.hpp"
#include "apx/construct.hpp"
#include "apx/learn.hpp"
#include "apx/network.hpp"
#include "apx/report.hpp"
#include "apx/weights.hpp"

namespace {

constexpr const char* kVersion = "1.0.0";

// Exit codes shared by every subcommand.
constexpr int kExitOk = 0;
constexpr int kExitCertification = 2;
constexpr int kExitConfig = 3;
constexpr int kExitBudget = 4;

struct GlobalOpts {
    std::string config_path;
    std::string out_dir = ".";
    std::uint64_t seed = 2024;
    int threads = 1;
};

apx::RunConfig load_config(const GlobalOpts& g) {
    if (g.config_path.empty()) return {};
    return apx::parse_config_file(g.config_path);
}

void ensure_out_dir(const GlobalOpts& g) {
    std::filesystem::create_directories(g.out_dir);
}

std::string out_path(const GlobalOpts& g, const std::string& name) {
    return (std::filesystem::path(g.out_dir) / name).string();
}

std::vector<std::pair<std::string, std::string>> manifest_base(
    const GlobalOpts& g, const std::string& command, const apx::RunConfig& cfg) {
    std::vector<std::pair<std::string, std::string>> m;
    m.emplace_back("command", command);
    m.emplace_back("version", kVersion);
    m.emplace_back("seed", std::to_string(g.seed));
    m.emplace_back("threads", std::to_string(g.threads));
    for (const auto& e : cfg.entries) m.emplace_back("config." + e.key, e.value);
    return m;
}

void append_budget(std::vector<std::pair<std::string, std::string>>& m,
                   const apx::ApproxBudget& budget) {
    m.emplace_back("budget.eps", apx::format_sig17(budget.eps));
    m.emplace_back("budget.s", apx::format_sig17(budget.s));
    m.emplace_back("budget.d", std::to_string(budget.d));
    m.emplace_back("budget.K", std::to_string(budget.K));
    m.emplace_back("budget.delta", apx::format_sig17(budget.delta));
    m.emplace_back("budget.C_cal", apx::format_sig17(budget.C_cal));
    for (const auto& [name, value] : budget.records) {
        m.emplace_back("budget." + name, apx::format_sig17(value));
    }
}

apx::Activation act_from_config(const apx::RunConfig& cfg, const std::string& key,
                                const std::string& fallback) {
    std::string name = cfg.get_string(key, fallback);
    try {
        return apx::Activation::from_name(name);
    } catch (const apx::Error&) {
        throw apx::ConfigError("key '" + key + "': unknown activation '" + name + "'");
    }
}

apx::TargetFunction target_from_config(const apx::RunConfig& cfg,
                                       const std::string& prefix, int d, double s) {
    std::string name = cfg.get_string(prefix + ".target", "sin");
    if (name == "sin") return apx::sine_target(d, s);
    throw apx::ConfigError("key '" + prefix + ".target': unknown target '" + name +
                           "' (supported: sin)");
}

// ---------------------------------------------------------------------------
// verify-activations

int cmd_verify_activations(const GlobalOpts& g, const apx::RunConfig& cfg) {
    cfg.check_keys({});
    using apx::ActKind;
    std::vector<std::vector<std::string>> rows;
    bool all_ok = true;
    std::string failing;
    for (ActKind kind : {ActKind::Sigmoid, ActKind::TanhShifted, ActKind::SiLU,
                         ActKind::GELU}) {
        apx::Activation act = apx::Activation::make(kind);
        std::string status = "certified";
        apx::TailReport rep;
        try {
            rep = apx::verify_tail_class(act);
        } catch (const apx::CertificationFailed& e) {
            status = "FAILED";
            all_ok = false;
            failing = act.name();
            rep.witness = e.witness;
        }
        std::printf("%-12s class=%-13s constant=%.6g observed=%.6g  %s\n",
                    act.name().c_str(),
                    act.tail_class == apx::TailClass::HeavisideLike ? "heaviside-like"
                                                                    : "relu-like",
                    act.tail_constant, rep.implied_constant, status.c_str());
        rows.push_back({act.name(),
                        act.tail_class == apx::TailClass::HeavisideLike
                            ? "heaviside-like"
                            : "relu-like",
                        apx::format_sig17(act.tail_constant),
                        apx::format_sig17(rep.max_observed),
                        apx::format_sig17(rep.implied_constant),
                        apx::format_sig17(act.lipschitz), status});
    }
    ensure_out_dir(g);
    apx::write_csv(out_path(g, "activations.csv"),
                   {"activation", "tail_class", "tail_constant", "max_observed",
                    "implied_constant", "lipschitz", "status"},
                   rows);
    auto manifest = manifest_base(g, "verify-activations", cfg);
    apx::write_manifest(out_path(g, "MANIFEST"), manifest);
    if (!all_ok) {
        std::fprintf(stderr, "activation '%s' failed tail certification\n",
                     failing.c_str());
        return kExitCertification;
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// build

int cmd_build(const GlobalOpts& g, const apx::RunConfig& cfg) {
    cfg.check_keys({"build.target", "build.d", "build.s", "build.eps", "build.mode",
                    "build.act", "build.mc_samples"});
    int d = static_cast<int>(cfg.get_long("build.d", 1));
    double s = cfg.get_double("build.s");
    double eps = cfg.get_double("build.eps");
    std::string mode = cfg.get_string("build.mode");
    if (mode != "l2" && mode != "linf") {
        throw apx::ConfigError("key 'build.mode' must be 'l2' or 'linf'");
    }
    apx::Activation act = act_from_config(cfg, "build.act", "sigmoid");
    apx::TargetFunction f = target_from_config(cfg, "build", d, s);
    apx::ReferencePoint ref = apx::find_reference_point(
        act, std::max(3, static_cast<int>(std::ceil(s))));

    ensure_out_dir(g);
    auto manifest = manifest_base(g, "build", cfg);
    apx::Network net{act, {}};
    double error = 0.0;
    if (mode == "l2") {
        apx::L2Options opts;
        opts.mc_samples = cfg.get_long("build.mc_samples", 1000000);
        opts.mc_seed = g.seed;
        apx::L2Result res = apx::build_l2_approximator(act, ref, f, s, eps, opts);
        net = res.net;
        error = res.mc_error;
        manifest.emplace_back("certified.l2_error", apx::format_sig17(res.mc_error));
        manifest.emplace_back("certified.l2_stderr",
                              apx::format_sig17(res.mc_stderr));
        append_budget(manifest, res.budget);
    } else {
        apx::LinfResult res = apx::build_linf_approximator(act, ref, f, s, eps);
        net = res.net;
        error = res.sup_error;
        manifest.emplace_back("certified.sup_error",
                              apx::format_sig17(res.sup_error));
        append_budget(manifest, res.budget);
    }
    apx::NormReport nr = apx::norms(net);
    manifest.emplace_back("network.depth", std::to_string(net.depth()));
    manifest.emplace_back("network.width", std::to_string(net.width()));
    manifest.emplace_back("network.linf_norm", apx::format_sig17(nr.linf));
    manifest.emplace_back("network.param_count", std::to_string(nr.param_count));
    apx::save_network(net, out_path(g, "network.net"));
    apx::write_manifest(out_path(g, "MANIFEST"), manifest);
    std::printf("certified: %s error %.6g <= %.6g; depth %d width %d -> %s\n",
                mode.c_str(), error, eps, net.depth(), net.width(),
                out_path(g, "network.net").c_str());
    return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

int cmd_eval(const GlobalOpts& g, const apx::RunConfig& cfg) {
    (void)g;
    cfg.check_keys({"eval.net", "eval.point"});
    apx::Network net = apx::load_network_file(cfg.get_string("eval.net"));
    std::vector<double> x = cfg.get_double_list("eval.point");
    if (static_cast<int>(x.size()) != net.input_dim()) {
        throw apx::ConfigError("eval.point has " + std::to_string(x.size()) +
                               " coordinates; network expects " +
                               std::to_string(net.input_dim()));
    }
    std::vector<double> y = apx::evaluate(net, x);
    for (size_t k = 0; k < y.size(); ++k) {
        std::printf("%s%s", apx::format_sig17(y[k]).c_str(),
                    k + 1 == y.size() ? "\n" : ",");
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// scale

int cmd_scale(const GlobalOpts& g, const apx::RunConfig& cfg) {
    cfg.check_keys({"scale.target", "scale.mode", "scale.act", "scale.d", "scale.s",
                    "scale.eps_ladder", "scale.mc_samples"});
    int d = static_cast<int>(cfg.get_long("scale.d", 1));
    double s = cfg.get_double("scale.s");
    std::string mode = cfg.get_string("scale.mode", "l2");
    if (mode != "l2" && mode != "linf") {
        throw apx::ConfigError("key 'scale.mode' must be 'l2' or 'linf'");
    }
    apx::Activation act = act_from_config(cfg, "scale.act", "sigmoid");
    std::vector<double> ladder = cfg.get_double_list("scale.eps_ladder");
    apx::TargetFunction f = target_from_config(cfg, "scale", d, s);
    apx::ReferencePoint ref = apx::find_reference_point(
        act, std::max(3, static_cast<int>(std::ceil(s))));

    ensure_out_dir(g);
    auto manifest = manifest_base(g, "scale", cfg);
    std::vector<apx::ScalingRow> rows;
    for (double eps : ladder) {
        auto t0 = std::chrono::steady_clock::now();
        apx::ScalingRow row;
        row.control = eps;
        if (mode == "l2") {
            apx::L2Options opts;
            opts.mc_samples = cfg.get_long("scale.mc_samples", 1000000);
            opts.mc_seed = g.seed;
            apx::L2Result res = apx::build_l2_approximator(act, ref, f, s, eps, opts);
            row.measured_error = res.mc_error;
            row.width = res.net.width();
            row.depth = res.net.depth();
            row.linf_norm = apx::norms(res.net).linf;
        } else {
            apx::LinfResult res = apx::build_linf_approximator(act, ref, f, s, eps);
            row.measured_error = res.sup_error;
            row.width = res.net.width();
            row.depth = res.net.depth();
            row.linf_norm = apx::norms(res.net).linf;
        }
        auto t1 = std::chrono::steady_clock::now();
        row.runtime_ms =
            std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count();
        // Wall time lives in the MANIFEST only so the CSV stays byte-stable.
        manifest.emplace_back("runtime_ms.eps_" + apx::format_sig17(eps),
                              std::to_string(row.runtime_ms));
        rows.push_back(row);
        std::printf("eps=%.4g: error %.6g width %d depth %d\n", eps,
                    row.measured_error, row.width, row.depth);
    }

    std::vector<std::vector<std::string>> csv_rows;
    for (const apx::ScalingRow& r : rows) {
        csv_rows.push_back({apx::format_sig17(r.control),
                            apx::format_sig17(r.measured_error),
                            std::to_string(r.width), std::to_string(r.depth),
                            apx::format_sig17(r.linf_norm)});
    }
    apx::write_csv(out_path(g, "scaling.csv"),
                   {"eps", "measured_error", "width", "depth", "linf_norm"},
                   csv_rows);

    std::string annotation;
    if (rows.size() >= 3) {
        std::vector<std::pair<double, double>> pts;
        for (const apx::ScalingRow& r : rows) {
            if (r.measured_error > 0.0) {
                pts.emplace_back(static_cast<double>(r.width), r.measured_error);
            }
        }
        if (pts.size() >= 3) {
            try {
                apx::LogFit fit = apx::fit_log_slope(pts);
                annotation = "fitted slope " + apx::format_sig17(fit.slope);
                manifest.emplace_back("fit.slope", apx::format_sig17(fit.slope));
                manifest.emplace_back("fit.r2", apx::format_sig17(fit.r2));
                std::printf("fitted error-vs-width slope: %.4f (r2=%.4f)\n",
                            fit.slope, fit.r2);
            } catch (const apx::Error&) {
                // Degenerate ladder (all rungs at one width): report the rows
                // without a slope instead of failing the whole study.
                std::printf("slope not fitted: ladder spans a single width\n");
            }
        }
    }
    apx::ChartSeries series;
    series.label = act.name() + " " + mode;
    for (const apx::ScalingRow& r : rows) {
        series.points.emplace_back(static_cast<double>(r.width), r.measured_error);
    }
    apx::write_line_chart(out_path(g, "scaling.svg"), "error vs width", "width",
                          "error", {series}, true, true, annotation);
    apx::write_manifest(out_path(g, "MANIFEST"), manifest);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// lowerbound

int cmd_lowerbound(const GlobalOpts& g, const apx::RunConfig& cfg) {
    cfg.check_keys({"lowerbound.k_max", "lowerbound.resolution"});
    int k_max = static_cast<int>(cfg.get_long("lowerbound.k_max", 8));
    int resolution = static_cast<int>(cfg.get_long("lowerbound.resolution", 4096));
    if (k_max < 1) throw apx::ConfigError("lowerbound.k_max must be >= 1");

    ensure_out_dir(g);
    std::vector<std::vector<std::string>> rows;
    apx::ChartSeries dp_series{"dp measured", {}};
    apx::ChartSeries bound_series{"K^-4/720", {}};
    for (int k = 1; k <= k_max; ++k) {
        double bound = std::pow(static_cast<double>(k), -4.0) / 720.0;
        double measured = apx::best_pwl_sq_error_dp(k, resolution);
        rows.push_back({std::to_string(k), apx::format_sig17(bound),
                        apx::format_sig17(measured)});
        dp_series.points.emplace_back(static_cast<double>(k), measured);
        bound_series.points.emplace_back(static_cast<double>(k), bound);
        std::printf("K=%d: bound %.6g  measured %.6g\n", k, bound, measured);
    }
    apx::write_csv(out_path(g, "lowerbound.csv"), {"K", "bound", "measured"}, rows);
    apx::write_line_chart(out_path(g, "lowerbound.svg"),
                          "optimal piecewise-linear fit error vs pieces", "K",
                          "squared L2 error", {bound_series, dp_series}, true, true);
    apx::write_manifest(out_path(g, "MANIFEST"),
                        manifest_base(g, "lowerbound", cfg));
    return kExitOk;
}

// ---------------------------------------------------------------------------
// learn

int cmd_learn(const GlobalOpts& g, const apx::RunConfig& cfg) {
    cfg.check_keys({"learn.preset"});
    apx::ExperimentPreset preset =
        apx::experiment_preset(cfg.get_string("learn.preset", "desk"));
    apx::ExperimentResult res =
        apx::run_separation_experiment(preset, g.seed, g.threads);

    ensure_out_dir(g);
    std::vector<std::vector<std::string>> rows;
    for (const apx::ExperimentRow& r : res.rows) {
        rows.push_back({r.activation, std::to_string(r.n), std::to_string(r.run),
                        apx::format_sig17(r.eta), apx::format_sig17(r.lambda),
                        apx::format_sig17(r.gen_error)});
    }
    apx::write_csv(out_path(g, "learn_results.csv"),
                   {"activation", "n", "run", "eta", "lambda", "gen_error"}, rows);

    std::vector<std::vector<std::string>> summary;
    for (const apx::ExponentSummary& s : res.summaries) {
        summary.push_back(
            {s.activation, apx::format_sig17(s.alpha), apx::format_sig17(s.r2)});
        std::printf("%-12s alpha=%.4f r2=%.4f\n", s.activation.c_str(), s.alpha,
                    s.r2);
    }
    apx::write_csv(out_path(g, "learn_summary.csv"), {"activation", "alpha", "r2"},
                   summary);

    std::vector<apx::ChartSeries> series;
    for (const apx::ExponentSummary& s : res.summaries) {
        apx::ChartSeries cs;
        char label[96];
        std::snprintf(label, sizeof label, "%s (alpha=%.3f)", s.activation.c_str(),
                      s.alpha);
        cs.label = label;
        for (long n : preset.n_ladder) {
            double sum = 0.0;
            int cnt = 0;
            for (const apx::ExperimentRow& r : res.rows) {
                if (r.activation == s.activation && r.n == n) {
                    sum += r.gen_error;
                    ++cnt;
                }
            }
            if (cnt > 0) cs.points.emplace_back(static_cast<double>(n), sum / cnt);
        }
        series.push_back(cs);
    }
    apx::write_line_chart(out_path(g, "learn.svg"),
                          "generalization error vs sample size", "n",
                          "mean test error", series, true, true);

    auto manifest = manifest_base(g, "learn", cfg);
    manifest.emplace_back("target_scale", apx::format_sig17(res.target_scale));
    apx::write_manifest(out_path(g, "MANIFEST"), manifest);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"constructive approximation and separation-experiment toolkit"};
    app.require_subcommand(1);
    GlobalOpts g;
    app.add_option("--config", g.config_path, "path to a key=value config file");
    app.add_option("--out", g.out_dir, "output directory (default .)");
    app.add_option("--seed", g.seed, "master seed (default 2024)");
    app.add_option("--threads", g.threads, "worker threads (default 1)");

    auto* c_verify = app.add_subcommand("verify-activations",
                                        "certify activation tail constants");
    auto* c_build = app.add_subcommand("build", "build and certify an approximator");
    auto* c_eval = app.add_subcommand("eval", "evaluate a serialized network");
    auto* c_scale = app.add_subcommand("scale", "eps-ladder scaling study");
    auto* c_lower = app.add_subcommand("lowerbound",
                                       "piecewise-linear lower-bound study");
    auto* c_learn = app.add_subcommand("learn", "activation separation experiment");

    CLI11_PARSE(app, argc, argv);

    try {
        apx::RunConfig cfg = load_config(g);
        if (c_verify->parsed()) return cmd_verify_activations(g, cfg);
        if (c_build->parsed()) return cmd_build(g, cfg);
        if (c_eval->parsed()) return cmd_eval(g, cfg);
        if (c_scale->parsed()) return cmd_scale(g, cfg);
        if (c_lower->parsed()) return cmd_lowerbound(g, cfg);
        if (c_learn->parsed()) return cmd_learn(g, cfg);
    } catch (const apx::ConfigError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return kExitConfig;
    } catch (const apx::BudgetInfeasible& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return kExitBudget;
    } catch (const apx::Error& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return kExitCertification;
    }
    return kExitOk;
}
