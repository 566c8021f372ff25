#include <cstdio>
#include <iostream>
#include <regex>
#include <sstream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "nlsa/errors.hpp"
#include "nlsa/io.hpp"

using namespace nlsa;
using namespace nlsa::cli;

namespace {

enum Exit { kOk = 0, kNumerical = 1, kConfig = 2 };

void add_sweep_options(CLI::App* sub, SweepSpec& spec, double& upper, double& phase) {
    sub->add_option("--R0", spec.R0, "start of the ramp")->capture_default_str();
    sub->add_option("--R1", spec.R1, "end of the ramp")->capture_default_str();
    sub->add_option("--upper", upper, "initial population of the upper level at R0")->capture_default_str();
    sub->add_option("--phase", phase, "relative phase of the upper-level amplitude")->capture_default_str();
    sub->add_option("--gamma-samples", spec.gamma_samples, "frozen orbits closed along the sweep")
        ->capture_default_str();
    sub->add_option("--sample-dt", spec.sample_dt, "record spacing in time (0: from the slowest period)")
        ->capture_default_str();
    sub->add_option("--omega-floor", spec.omega_floor, "frequency below which the fixed point counts as lost")
        ->capture_default_str();
    sub->add_option("--follow-tolerance", spec.follow_tolerance, "projective distance that ends eigenstate following")
        ->capture_default_str();
    sub->add_option("--R-ref", spec.R_ref, "R where fixed-point labels are assigned")->capture_default_str();
    sub->add_option("--orbit-max-time", spec.orbit_max_time, "longest frozen orbit traced before skipping")
        ->capture_default_str();
}

// Line of `key = ...` in the config file, for diagnostics.
int config_line(const std::string& path, const std::string& field) {
    if (path.empty())
        return 0;
    std::string text;
    try {
        text = io::read_text(path);
    } catch (const Error&) {
        return 0;
    }
    const std::string key = field.substr(field.rfind('.') == std::string::npos ? 0 : field.rfind('.') + 1);
    const std::regex re("^\\s*" + std::regex_replace(key, std::regex(R"([-.])"), R"(\$&)") + "\\s*=");
    std::istringstream in(text);
    std::string line;
    for (int n = 1; std::getline(in, line); ++n)
        if (std::regex_search(line, re))
            return n;
    return 0;
}

std::string quoted_field(const std::string& msg) {
    const auto a = msg.find('\'');
    const auto b = a == std::string::npos ? a : msg.find('\'', a + 1);
    return b == std::string::npos ? "" : msg.substr(a + 1, b - a - 1);
}

void print_defaults(const CLI::App& app) {
    std::printf("%-14s %-20s %-24s %s\n", "section", "option", "default", "description");
    auto dump = [](const std::string& section, const CLI::App* a) {
        for (const CLI::Option* opt : a->get_options()) {
            if (opt->get_name() == "--help" || opt->get_name() == "--config" || opt->get_name() == "--version" ||
                opt->get_name().empty())
                continue;
            const std::string def = opt->get_default_str();
            std::printf("%-14s %-20s %-24s %s\n", section.c_str(), opt->get_name().c_str(), def.c_str(),
                        opt->get_description().c_str());
        }
    };
    dump("global", &app);
    for (const CLI::App* sub : app.get_subcommands({}))
        if (sub->get_name() != "defaults")
            dump(sub->get_name(), sub);

    // fixed thresholds without an option
    const FixedPointOptions fp;
    const ContinuationOptions co;
    const IntegratorConfig ic;
    auto row = [](const char* name, double value, const char* what) {
        std::printf("%-14s %-20s %-24s %s\n", "fixed", name, io::format_number(value).c_str(), what);
    };
    row("newton-tol", fp.newton_tol, "Newton tolerance on |grad H_cl|");
    row("newton-max-iter", fp.max_iterations, "Newton iteration cap");
    row("dedup-radius", fp.dedup_radius, "fixed points closer than this are merged");
    row("seed-edge", fp.edge, "Newton starts keep populations inside (edge, 1 - edge)");
    row("marginal-tol", fp.marginal_tol, "|Re lambda| below this counts as zero");
    row("pole-margin", co.pole_margin, "continuation stops this close to a population pole");
    row("pole-switch", ic.pole_switch_threshold, "canonical chart hands over to the quantum form");
    row("gauge-handoff", ic.gauge_handoff_threshold, "phase ledger moves to the largest component");
    row("gauge-floor", kGaugeFloor, "smallest gauge population with a defined phase");
    row("linear-required", kLinearEndpointRequired, "endpoint |R| / max(c, v) needed for level populations");
    row("linear-warning", kLinearEndpointWarning, "endpoint |R| / max(c, v) below which a sweep warns");
}

}  // namespace

int main(int argc, char** argv) {
    RunConfig cfg;
    CLI::App app{"Adiabatic evolution of nonlinear quantum states: eigen-levels, phase portraits, sweeps."};
    app.set_version_flag("--version", kVersion);
    auto* config_opt = app.set_config("--config", "", "TOML/INI run configuration; command-line options override it");
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.require_subcommand(1);

    app.add_option("--c", cfg.model.c, "interaction strength (two-level model)")->capture_default_str();
    app.add_option("--v", cfg.model.v, "coupling strength (two-level model)")->capture_default_str();
    app.add_option("--matrix", cfg.model.matrix, "JSON file with h0, h1 for the linear model H0 + R H1");
    app.add_option("-o,--out", cfg.out, "output directory")->capture_default_str();
    app.add_option("--seed", cfg.seed, "seed for randomized Newton starts")->capture_default_str();
    app.add_option("--rtol", cfg.integrator.rtol, "integrator relative tolerance")->capture_default_str();
    app.add_option("--atol", cfg.integrator.atol, "integrator absolute tolerance")->capture_default_str();
    app.add_option("--seed-grid-q", cfg.seeding.grid_q, "Newton start grid along q")->capture_default_str();
    app.add_option("--seed-grid-p", cfg.seeding.grid_p, "Newton start grid along p")->capture_default_str();

    auto* levels = app.add_subcommand("levels", "eigen-energy branches E(R) by continuation");
    auto& co = cfg.levels.continuation;
    levels->add_option("--R-min", co.R_min, "lower end of the R range")->capture_default_str();
    levels->add_option("--R-max", co.R_max, "upper end of the R range")->capture_default_str();
    levels->add_option("--R-ref", co.R_ref, "R where branches are labelled")->capture_default_str();
    levels->add_option("--ds", co.ds, "initial arclength step")->capture_default_str();
    levels->add_option("--ds-max", co.ds_max, "largest arclength step")->capture_default_str();
    levels->add_option("--ds-min", co.ds_min, "step below which continuation fails")->capture_default_str();
    levels->add_option("--max-points", co.max_points, "point budget per branch")->capture_default_str();

    auto* portrait = app.add_subcommand("portrait", "H_cl level sets and fixed points at one R");
    portrait->add_option("--R", cfg.portrait.R, "control parameter")->capture_default_str();
    portrait->add_option("--grid-q", cfg.portrait.grid_q, "grid points along q in [0, 2pi]")->capture_default_str();
    portrait->add_option("--grid-p", cfg.portrait.grid_p, "grid points along p in [0, 1]")->capture_default_str();
    portrait->add_option("--contours", cfg.portrait.contours, "number of iso-energy lines")->capture_default_str();

    auto* fixed = app.add_subcommand("fixed-points", "fixed points and their stability at a list of R");
    fixed->add_option("--R", cfg.fixed_points.R, "control parameter values")->capture_default_str();

    auto* orbit = app.add_subcommand("orbit", "one period of a fixed-R orbit: period, AA phase, action");
    auto& oc = cfg.orbit;
    orbit->add_option("--R", oc.R, "control parameter")->capture_default_str();
    orbit->add_option("--upper", oc.upper, "upper-level population of the initial superposition")
        ->capture_default_str();
    orbit->add_option("--phase", oc.phase, "relative phase of the upper-level amplitude")->capture_default_str();
    orbit->add_option("--p", oc.p, "initial chart population (>= 0 overrides --upper)")->capture_default_str();
    orbit->add_option("--q", oc.q, "initial chart phase, used with --p")->capture_default_str();
    orbit->add_option("--samples", oc.orbit.samples, "stored samples per period")->capture_default_str();
    orbit->add_option("--max-time", oc.orbit.max_time, "give up if no return before this time")
        ->capture_default_str();
    orbit->add_option("--closure-tol", oc.orbit.closure_tol, "largest accepted closure error")
        ->capture_default_str();

    auto* sweep = app.add_subcommand("sweep", "linear ramp of R with fixed-point tracking and AA phase");
    add_sweep_options(sweep, cfg.sweep.spec, cfg.sweep.upper, cfg.sweep.phase);
    sweep->add_option("--alpha", cfg.sweep.spec.alpha, "sweep rate dR/dt")->capture_default_str();
    sweep->add_option("--label", cfg.sweep.label, "start on this eigenstate (f1, f2, ...)");
    sweep->add_flag("--follow", cfg.sweep.follow, "follow --label and stop at breakdown")->default_str("false");
    sweep->add_option("--stride", cfg.sweep.stride, "keep every n-th sample in the CSV")->capture_default_str();

    auto* ladder = app.add_subcommand("ladder", "the same sweep at several rates; drift of the action");
    add_sweep_options(ladder, cfg.ladder.spec, cfg.ladder.upper, cfg.ladder.phase);
    ladder->add_option("--alphas", cfg.ladder.alphas, "sweep rates")->capture_default_str();

    auto* defaults = app.add_subcommand("defaults", "print every option with its default");

    CLI::App* runs[] = {levels, portrait, fixed, orbit, sweep, ladder};
    for (auto* sub : runs)
        sub->configurable();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }

    if (defaults->parsed()) {
        print_defaults(app);
        return kOk;
    }

    CLI::App* chosen = nullptr;
    for (auto* sub : runs)
        if (sub->parsed())
            chosen = sub;
    const std::string command = chosen->get_name();
    const std::string config_path = config_opt->count() ? config_opt->as<std::string>() : "";

    try {
        validate(cfg, command);
        const auto model = build_model(cfg);
        for (auto* sub : runs)
            if (sub != chosen)
                app.remove_subcommand(sub);
        app.remove_subcommand(defaults);
        const std::string echo = app.config_to_str(true, false);
        const Output out = prepare_output(cfg, command, echo, *model);
        if (command == "levels")
            cmd_levels(cfg, *model, out);
        else if (command == "portrait")
            cmd_portrait(cfg, *model, out);
        else if (command == "fixed-points")
            cmd_fixed_points(cfg, *model, out);
        else if (command == "orbit")
            cmd_orbit(cfg, *model, out);
        else if (command == "sweep")
            cmd_sweep(cfg, *model, out);
        else
            cmd_ladder(cfg, *model, out);
        std::cout << command << ": wrote " << out.dir.string() << "\n";
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what();
        if (const int line = config_line(config_path, quoted_field(e.what())))
            std::cerr << " [" << config_path << ":" << line << "]";
        std::cerr << "\n";
        return kConfig;
    } catch (const InvalidParameter& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const Error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNumerical;
    }
    return kOk;
}
