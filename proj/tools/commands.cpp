#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "nlsa/errors.hpp"
#include "nlsa/io.hpp"

namespace nlsa::cli {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr const char* kPalette[] = {"#1f4e9c", "#c0392b", "#2e8b57", "#8e44ad", "#d68910", "#17a2b8", "#5d6d7e"};
constexpr std::size_t kMaxPlotPoints = 5000;

const char* color(std::size_t i) { return kPalette[i % std::size(kPalette)]; }

void save_json(const Output& out, const std::string& name, const Json& result) {
    Json doc = out.meta;
    doc["result"] = result;
    io::write_text(out.dir / name, doc.dump(2) + "\n");
}

bool is_two_level(const Model& model) { return model.levels() == 2; }

std::vector<std::string> coord_columns(const Model& model) {
    if (is_two_level(model))
        return {"q", "p"};
    std::vector<std::string> cols;
    const std::size_t m = model.levels() - 1;
    for (std::size_t j = 1; j <= m; ++j)
        cols.push_back("Q" + std::to_string(j));
    for (std::size_t j = 1; j <= m; ++j)
        cols.push_back("P" + std::to_string(j));
    return cols;
}

std::vector<double> coord_values(const ProjectiveCoords& c) {
    if (c.dim() == 1)
        return {c.P[0], c.Q[0]};
    std::vector<double> v(c.Q.data(), c.Q.data() + c.Q.size());
    v.insert(v.end(), c.P.data(), c.P.data() + c.P.size());
    return v;
}

Json vec_json(const RVector& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

Json coords_json(const ProjectiveCoords& c) {
    Json j;
    if (c.dim() == 1) {
        j["q"] = c.P[0];
        j["p"] = c.Q[0];
    }
    j["Q"] = vec_json(c.Q);
    j["P"] = vec_json(c.P);
    return j;
}

Json fixed_point_json(const FixedPoint& fp) {
    Json j;
    j["label"] = fp.label;
    j["stability"] = to_string(fp.stability);
    j["coords"] = coords_json(fp.coords);
    j["chemical_potential"] = fp.chemical_potential;
    j["total_energy"] = fp.total_energy;
    j["omega"] = fp.omega;
    j["kappa"] = fp.kappa;
    j["residual"] = fp.residual;
    j["boundary"] = fp.boundary;
    return j;
}

io::Marker fixed_point_marker(double x, double y, const FixedPoint& fp) {
    io::Marker m;
    m.x = x;
    m.y = y;
    m.label = fp.label;
    switch (fp.stability) {
    case Stability::elliptic:
        m.glyph = io::Glyph::circle;
        m.color = "#1f4e9c";
        break;
    case Stability::hyperbolic:
        m.glyph = io::Glyph::cross;
        m.color = "#c0392b";
        m.size = 5.0;
        break;
    default:
        m.glyph = io::Glyph::square;
        m.color = "#5d6d7e";
        m.filled = false;
    }
    return m;
}

std::string stability_dash(Stability s) {
    switch (s) {
    case Stability::elliptic: return "";
    case Stability::hyperbolic: return "7,4";
    default: return "2,3";
    }
}

std::vector<FixedPoint> labelled_fixed_points(const RunConfig& cfg, const Model& model, double R) {
    FixedPointOptions opts = cfg.seeding;
    opts.seed = cfg.seed;
    auto pts = find_fixed_points(model, R, opts);
    assign_labels(pts);
    return pts;
}

struct Grid {
    std::vector<double> q, p;
    std::vector<std::vector<double>> H;  // H[i][j] at (q_i, p_j)
};

Grid hamiltonian_grid(const Model& model, double R, int nq, int np) {
    Grid g;
    for (int i = 0; i < nq; ++i)
        g.q.push_back(kTwoPi * i / (nq - 1));
    for (int j = 0; j < np; ++j)
        g.p.push_back(static_cast<double>(j) / (np - 1));
    g.H.assign(g.q.size(), std::vector<double>(g.p.size()));
    ProjectiveCoords c{RVector(1), RVector(1)};
    for (std::size_t i = 0; i < g.q.size(); ++i)
        for (std::size_t j = 0; j < g.p.size(); ++j) {
            c.Q[0] = g.p[j];
            c.P[0] = g.q[i];
            g.H[i][j] = model.classical_hamiltonian(c, R);
        }
    return g;
}

void draw_portrait(io::Panel& panel, const Grid& g, const std::vector<FixedPoint>& pts, int contours) {
    for (double level : io::contour_levels(g.H, contours)) {
        io::Series s = io::contour(g.q, g.p, g.H, level);
        s.color = "#9aa5b1";
        s.width = 0.8;
        panel.series.push_back(std::move(s));
    }
    for (const auto& fp : pts) {
        if (fp.stability != Stability::hyperbolic)
            continue;
        io::Series s = io::contour(g.q, g.p, g.H, fp.total_energy);
        s.color = "#c0392b";
        s.width = 1.6;
        panel.series.push_back(std::move(s));
    }
    for (const auto& fp : pts) {
        const double q = std::fmod(fp.coords.P[0], kTwoPi);
        panel.markers.push_back(fixed_point_marker(q < 0 ? q + kTwoPi : q, fp.coords.Q[0], fp));
        if (q < 1e-9 || kTwoPi - q < 1e-9)  // show both copies of the q = 0 line
            panel.markers.push_back(fixed_point_marker(q < 1e-9 ? kTwoPi : 0.0, fp.coords.Q[0], fp));
    }
    panel.limits = std::array<double, 4>{0.0, kTwoPi, 0.0, 1.0};
    panel.xlabel = "q";
    panel.ylabel = "p";
}

std::size_t plot_stride(std::size_t n) { return std::max<std::size_t>(1, (n + kMaxPlotPoints - 1) / kMaxPlotPoints); }

SweepSpec with_initial(SweepSpec spec, const Model& model, double upper, double phase, const std::string& label) {
    if (!label.empty()) {
        spec.initial = InitialCondition::eigenstate(label);
        return spec;
    }
    const std::size_t n = model.levels();
    std::vector<double> pops(n, 0.0), phases(n, 0.0);
    pops[0] = 1.0 - upper;
    pops[n - 1] = upper;
    phases[n - 1] = phase;
    spec.initial = InitialCondition::level_populations(pops, phases);
    return spec;
}

Json spec_json(const SweepSpec& s) {
    Json j;
    j["R0"] = s.R0;
    j["R1"] = s.R1;
    j["alpha"] = s.alpha;
    j["duration"] = s.duration();
    switch (s.initial.kind) {
    case InitialCondition::Kind::label: j["initial"] = {{"eigenstate", s.initial.label}}; break;
    case InitialCondition::Kind::populations:
        j["initial"] = {{"level_populations", s.initial.populations}, {"phases", s.initial.phases}};
        break;
    case InitialCondition::Kind::state: j["initial"] = "explicit state"; break;
    }
    j["gamma_samples"] = s.gamma_samples;
    j["R_ref"] = s.R_ref;
    j["orbit_max_time"] = s.orbit_max_time;
    return j;
}

Json thresholds_json(const SweepSpec& s) {
    return {{"follow_tolerance", s.follow_tolerance},
            {"omega_floor", s.omega_floor},
            {"linear_endpoint_warning", kLinearEndpointWarning},
            {"linear_endpoint_required", kLinearEndpointRequired}};
}

Json record_json(const SweepRecord& r) {
    Json j;
    j["tracked_label"] = r.tracked_label;
    j["samples"] = r.size();
    j["sample_dt"] = r.sample_dt;
    j["steps"] = r.steps;
    j["max_norm_drift"] = r.max_norm_drift;
    j["linear_margin"] = r.linear_margin;
    j["initial_populations"] = vec_json(r.initial_populations);
    j["final_populations"] = vec_json(r.final_populations);
    j["initial_mean_populations"] = vec_json(r.initial_mean_populations);
    j["final_mean_populations"] = vec_json(r.final_mean_populations);
    j["initial_action"] = r.initial_action;
    j["final_action"] = r.final_action;
    j["gamma_start"] = r.gamma_start;
    j["gamma_end"] = r.gamma_end;
    j["omega_min"] = r.omega_min;
    j["omega_floor_hit"] = r.omega_floor_hit;
    Json events = Json::array();
    for (const auto& e : r.events)
        events.push_back({{"kind", to_string(e.kind)}, {"t", e.t}, {"R", e.R}, {"detail", e.detail}});
    j["events"] = events;
    j["warnings"] = r.warnings;
    return j;
}

Json tunneling_json(const SweepRecord& r) {
    try {
        const TunnelingReport t = tunneling_probability(r);
        return {{"probability", t.probability},
                {"action_change", t.action_change},
                {"population_change", t.population_change},
                {"delta_populations", vec_json(t.delta_populations)},
                {"gamma_jump", t.gamma_jump},
                {"jump_over_2pi", t.jump_over_2pi}};
    } catch (const EndpointsNotLinear& e) {
        return {{"error", e.what()}};
    }
}

void write_sweep_csv(const std::filesystem::path& path, const SweepRecord& r, std::size_t stride) {
    std::vector<std::string> header{"t", "R"};
    const std::size_t n = r.populations.empty() ? 0 : static_cast<std::size_t>(r.populations.front().size());
    for (std::size_t k = 1; k <= n; ++k)
        header.push_back("pop" + std::to_string(k));
    header.insert(header.end(), {"gamma_aa", "omega", "dist_fp"});
    io::CsvWriter csv(path, header);
    for (std::size_t i = 0; i < r.size(); ++i) {
        if (i % stride != 0 && i + 1 != r.size())
            continue;
        std::vector<double> row{r.t[i], r.R[i]};
        for (Eigen::Index k = 0; k < r.populations[i].size(); ++k)
            row.push_back(r.populations[i][k]);
        row.insert(row.end(), {r.gamma_aa[i], r.omega[i], r.distance[i]});
        csv.row(row);
    }
}

io::Figure sweep_figure(const SweepRecord& r, bool with_distance) {
    io::Figure fig(with_distance ? 4 : 3, 1, 720.0, 260.0);
    const std::size_t step = plot_stride(r.size());
    auto thin = [&](const std::vector<double>& v) {
        std::vector<double> out;
        for (std::size_t i = 0; i < v.size(); i += step)
            out.push_back(v[i]);
        if (!v.empty() && (v.size() - 1) % step != 0)
            out.push_back(v.back());
        return out;
    };
    const auto R = thin(r.R);
    io::Panel& pops = fig.panel(0);
    pops.title = "level populations";
    pops.xlabel = "R";
    pops.ylabel = "population";
    const std::size_t n = r.populations.empty() ? 0 : static_cast<std::size_t>(r.populations.front().size());
    for (std::size_t k = 0; k < n; ++k) {
        std::vector<double> v;
        for (const auto& p : r.populations)
            v.push_back(p[static_cast<Eigen::Index>(k)]);
        io::Series s{R, thin(v), color(k), "", 1.2, "level " + std::to_string(k + 1)};
        pops.series.push_back(std::move(s));
    }
    io::Panel& gamma = fig.panel(1);
    gamma.title = "AA phase of the frozen orbit";
    gamma.xlabel = "R";
    gamma.ylabel = "gamma_AA";
    gamma.series.push_back({R, thin(r.gamma_aa), color(0), "", 1.4, ""});
    io::Panel& om = fig.panel(2);
    om.title = "fundamental frequency";
    om.xlabel = "R";
    om.ylabel = "omega";
    om.series.push_back({R, thin(r.omega), color(0), "", 1.4, "tracked fixed point"});
    om.series.push_back({R, thin(r.orbit_omega), color(1), "5,3", 1.0, "orbit"});
    for (const auto& e : r.events)
        if (e.kind == SweepEvent::Kind::tracking_lost)
            om.markers.push_back({e.R, 0.0, io::Glyph::triangle, "#c0392b", true, 5.0, ""});
    if (with_distance) {
        io::Panel& d = fig.panel(3);
        d.title = "distance to the followed eigenstate";
        d.xlabel = "R";
        d.ylabel = "distance";
        d.log_y = true;
        d.series.push_back({R, thin(r.distance), color(0), "", 1.4, ""});
        d.series.push_back({{r.R.front(), r.R.back()},
                            {r.spec.follow_tolerance, r.spec.follow_tolerance},
                            "#c0392b",
                            "5,3",
                            1.0,
                            "tolerance"});
    }
    return fig;
}

CMatrix read_matrix(const Json& j, const std::string& name) {
    if (!j.is_array() || j.empty())
        throw ConfigError("matrix: '" + name + "' must be a non-empty array of rows");
    const auto n = static_cast<Eigen::Index>(j.size());
    CMatrix M(n, n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const Json& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n)
            throw ConfigError("matrix: '" + name + "' must be square");
        for (Eigen::Index c = 0; c < n; ++c) {
            const Json& e = row[static_cast<std::size_t>(c)];
            if (e.is_number())
                M(r, c) = e.get<double>();
            else if (e.is_array() && e.size() == 2 && e[0].is_number() && e[1].is_number())
                M(r, c) = cplx(e[0].get<double>(), e[1].get<double>());
            else
                throw ConfigError("matrix: entries of '" + name + "' must be numbers or [re, im] pairs");
        }
    }
    return M;
}

}  // namespace

// ---------------------------------------------------------------------------

std::unique_ptr<Model> build_model(const RunConfig& cfg) {
    if (cfg.model.matrix.empty())
        return std::make_unique<TwoLevelModel>(cfg.model.c, cfg.model.v);
    Json j;
    try {
        j = Json::parse(io::read_text(cfg.model.matrix));
    } catch (const Json::parse_error& e) {
        throw ConfigError("matrix: cannot parse " + cfg.model.matrix + ": " + e.what());
    } catch (const Error& e) {
        throw ConfigError(std::string("matrix: ") + e.what());
    }
    if (!j.is_object() || !j.contains("h0"))
        throw ConfigError("matrix: file must hold an object with 'h0' (and optionally 'h1')");
    const CMatrix h0 = read_matrix(j["h0"], "h0");
    const CMatrix h1 = j.contains("h1") ? read_matrix(j["h1"], "h1") : CMatrix::Zero(h0.rows(), h0.cols());
    if (h1.rows() != h0.rows())
        throw ConfigError("matrix: 'h0' and 'h1' differ in size");
    if (h0.rows() < 2)
        throw ConfigError("matrix: need at least two levels");
    try {
        return std::make_unique<LinearModel>(h0, h1);
    } catch (const NonHermitian& e) {
        throw ConfigError(std::string("matrix: ") + e.what());
    }
}

void validate(const RunConfig& cfg, const std::string& command) {
    auto require = [](bool ok, const std::string& field, const std::string& rule, double value) {
        if (!ok)
            throw ConfigError("invalid value for '" + field + "': must be " + rule + " (got " +
                              io::format_number(value) + ")");
    };
    require(cfg.model.c >= 0.0 && std::isfinite(cfg.model.c), "c", ">= 0", cfg.model.c);
    require(cfg.model.v > 0.0 && std::isfinite(cfg.model.v), "v", "> 0", cfg.model.v);
    require(cfg.integrator.rtol > 0.0, "rtol", "> 0", cfg.integrator.rtol);
    require(cfg.integrator.atol > 0.0, "atol", "> 0", cfg.integrator.atol);
    require(cfg.seeding.grid_q >= 2, "seed-grid-q", ">= 2", cfg.seeding.grid_q);
    require(cfg.seeding.grid_p >= 2, "seed-grid-p", ">= 2", cfg.seeding.grid_p);

    if (command == "levels") {
        const auto& c = cfg.levels.continuation;
        require(c.R_max > c.R_min, "levels.R-max", "> R-min", c.R_max);
        require(c.R_ref >= c.R_min && c.R_ref <= c.R_max, "levels.R-ref", "inside [R-min, R-max]", c.R_ref);
        require(c.ds > 0.0, "levels.ds", "> 0", c.ds);
        require(c.ds_max >= c.ds, "levels.ds-max", ">= ds", c.ds_max);
    } else if (command == "portrait") {
        require(cfg.portrait.grid_q >= 2, "portrait.grid-q", ">= 2", cfg.portrait.grid_q);
        require(cfg.portrait.grid_p >= 2, "portrait.grid-p", ">= 2", cfg.portrait.grid_p);
        require(cfg.portrait.contours >= 0, "portrait.contours", ">= 0", cfg.portrait.contours);
        if (!cfg.model.matrix.empty())
            throw ConfigError("invalid value for 'matrix': portrait needs the two-level model");
    } else if (command == "fixed-points") {
        if (cfg.fixed_points.R.empty())
            throw ConfigError("invalid value for 'fixed-points.R': at least one value is required");
    } else if (command == "orbit") {
        const auto& o = cfg.orbit;
        require(o.upper >= 0.0 && o.upper <= 1.0, "orbit.upper", "in [0, 1]", o.upper);
        require(o.p <= 1.0, "orbit.p", "<= 1", o.p);
        require(o.orbit.max_time > 0.0, "orbit.max-time", "> 0", o.orbit.max_time);
        require(o.orbit.samples >= 16, "orbit.samples", ">= 16", static_cast<double>(o.orbit.samples));
        if (o.p >= 0.0 && !cfg.model.matrix.empty())
            throw ConfigError("invalid value for 'orbit.p': chart coordinates need the two-level model");
    } else if (command == "sweep") {
        const auto& s = cfg.sweep;
        require(s.upper >= 0.0 && s.upper <= 1.0, "sweep.upper", "in [0, 1]", s.upper);
        require(s.spec.alpha > 0.0, "sweep.alpha", "> 0", s.spec.alpha);
        require(s.spec.R1 != s.spec.R0, "sweep.R1", "different from R0", s.spec.R1);
        require(s.stride >= 1, "sweep.stride", ">= 1", static_cast<double>(s.stride));
        require(s.spec.gamma_samples >= 2, "sweep.gamma-samples", ">= 2", static_cast<double>(s.spec.gamma_samples));
        require(s.spec.sample_dt >= 0.0, "sweep.sample-dt", ">= 0", s.spec.sample_dt);
        require(s.spec.follow_tolerance > 0.0 && s.spec.follow_tolerance < 1.0, "sweep.follow-tolerance",
                "in (0, 1)", s.spec.follow_tolerance);
        require(s.spec.omega_floor > 0.0, "sweep.omega-floor", "> 0", s.spec.omega_floor);
        if (s.follow && s.label.empty())
            throw ConfigError("invalid value for 'sweep.label': --follow needs an eigenstate label");
    } else if (command == "ladder") {
        const auto& l = cfg.ladder;
        require(l.upper >= 0.0 && l.upper <= 1.0, "ladder.upper", "in [0, 1]", l.upper);
        require(l.spec.R1 != l.spec.R0, "ladder.R1", "different from R0", l.spec.R1);
        if (l.alphas.empty())
            throw ConfigError("invalid value for 'ladder.alphas': at least one rate is required");
        for (double a : l.alphas)
            require(a > 0.0, "ladder.alphas", "> 0", a);
    }
}

Output prepare_output(const RunConfig& cfg, const std::string& command, const std::string& config_text,
                      const Model& model) {
    Output out;
    out.dir = cfg.out;
    out.command = command;
    out.config_text = config_text;
    std::filesystem::create_directories(out.dir);
    io::write_text(out.dir / "config.toml", config_text);

    Json m;
    m["kind"] = model.name();
    m["levels"] = model.levels();
    if (cfg.model.matrix.empty()) {
        m["c"] = cfg.model.c;
        m["v"] = cfg.model.v;
    } else {
        m["matrix"] = cfg.model.matrix;
    }
    Json integ;
    integ["method"] = cfg.integrator.method == Method::dopri5 ? "dopri5" : "rk4";
    integ["rtol"] = cfg.integrator.rtol;
    integ["atol"] = cfg.integrator.atol;
    out.meta["program"] = "nlsa";
    out.meta["version"] = kVersion;
    out.meta["command"] = command;
    out.meta["model"] = m;
    out.meta["integrator"] = integ;
    out.meta["seed"] = cfg.seed;
    out.meta["config"] = config_text;
    return out;
}

// ---------------------------------------------------------------------------

void cmd_levels(const RunConfig& cfg, const Model& model, const Output& out) {
    ContinuationOptions co = cfg.levels.continuation;
    co.seeding = cfg.seeding;
    co.seeding.seed = cfg.seed;
    const BranchDiagram diag = continue_branches(model, co);
    const auto collisions = detect_collision(diag);

    io::Figure fig(1, 2);
    io::Panel& pe = fig.panel(0);
    pe.title = "eigen-energies";
    pe.xlabel = "R";
    pe.ylabel = "E (chemical potential)";
    io::Panel& ph = fig.panel(1);
    ph.title = "classical energy of the eigenstates";
    ph.xlabel = "R";
    ph.ylabel = "H_cl";

    Json branches = Json::array();
    const auto cols = coord_columns(model);
    for (std::size_t b = 0; b < diag.branches.size(); ++b) {
        const Branch& br = diag.branches[b];
        char name[64];
        std::snprintf(name, sizeof name, "branch_%02zu_%s.csv", b, br.label.empty() ? "unlabelled" : br.label.c_str());
        std::vector<std::string> header{"R"};
        header.insert(header.end(), cols.begin(), cols.end());
        header.insert(header.end(), {"E", "H_cl", "stability", "omega", "kappa"});
        io::CsvWriter csv(out.dir / name, header);
        for (const auto& fp : br.points) {
            std::vector<std::string> row{io::format_number(fp.R)};
            for (double x : coord_values(fp.coords))
                row.push_back(io::format_number(x));
            row.insert(row.end(), {io::format_number(fp.chemical_potential), io::format_number(fp.total_energy),
                                   to_string(fp.stability), io::format_number(fp.omega),
                                   io::format_number(fp.kappa)});
            csv.text_row(row);
        }

        // one polyline per stretch of equal stability, sharing the end points
        std::size_t start = 0;
        for (std::size_t i = 1; i <= br.points.size(); ++i) {
            if (i < br.points.size() && br.points[i].stability == br.points[start].stability)
                continue;
            const std::size_t end = std::min(i + 1, br.points.size());
            io::Series se, sh;
            for (std::size_t k = start; k < end; ++k) {
                se.x.push_back(br.points[k].R);
                se.y.push_back(br.points[k].chemical_potential);
                sh.x.push_back(br.points[k].R);
                sh.y.push_back(br.points[k].total_energy);
            }
            se.color = sh.color = color(b);
            se.dash = sh.dash = stability_dash(br.points[start].stability);
            pe.series.push_back(std::move(se));
            ph.series.push_back(std::move(sh));
            start = i;
        }
        if (!br.points.empty()) {
            const auto& mid = br.points[br.points.size() / 2];
            pe.markers.push_back({mid.R, mid.chemical_potential, io::Glyph::circle, color(b), true, 0.0, br.label});
        }

        double rmin = 0.0, rmax = 0.0;
        if (!br.points.empty()) {
            const auto [lo, hi] = std::minmax_element(br.points.begin(), br.points.end(),
                                                      [](const auto& a, const auto& c) { return a.R < c.R; });
            rmin = lo->R;
            rmax = hi->R;
        }
        branches.push_back({{"index", b},
                            {"label", br.label},
                            {"stability", to_string(br.stability)},
                            {"points", br.points.size()},
                            {"R_min", rmin},
                            {"R_max", rmax},
                            {"file", name}});
    }

    Json turning = Json::array();
    for (const auto& tp : diag.turning_points) {
        turning.push_back({{"R", tp.R},
                           {"coords", coords_json(tp.coords)},
                           {"chemical_potential", tp.chemical_potential},
                           {"total_energy", tp.total_energy},
                           {"min_abs_eigenvalue", tp.min_abs_eigenvalue},
                           {"branch_a", tp.branch_a},
                           {"branch_b", tp.branch_b}});
        pe.markers.push_back({tp.R, tp.chemical_potential, io::Glyph::circle, "#000000", false, 4.5, ""});
        ph.markers.push_back({tp.R, tp.total_energy, io::Glyph::circle, "#000000", false, 4.5, ""});
    }
    Json coll = Json::array();
    for (const auto& c : collisions)
        coll.push_back({{"R", c.R},
                        {"elliptic", c.elliptic_label},
                        {"hyperbolic", c.hyperbolic_label},
                        {"min_abs_eigenvalue", c.min_abs_eigenvalue}});

    Json result;
    result["R_range"] = {co.R_min, co.R_max};
    result["R_ref"] = co.R_ref;
    result["branches"] = branches;
    result["turning_points"] = turning;
    result["collisions"] = coll;
    if (const auto* tl = dynamic_cast<const TwoLevelModel*>(&model); tl && tl->c() > tl->v())
        result["R_star_closed_form"] =
            std::pow(std::pow(tl->c(), 2.0 / 3.0) - std::pow(tl->v(), 2.0 / 3.0), 1.5);
    result["line_styles"] = {{"elliptic", "solid"}, {"hyperbolic", "dashed"}, {"turning_point", "open circle"}};
    save_json(out, "summary.json", result);
    fig.save(out.dir / "levels.svg");
}

void cmd_portrait(const RunConfig& cfg, const Model& model, const Output& out) {
    const auto& pc = cfg.portrait;
    const Grid g = hamiltonian_grid(model, pc.R, pc.grid_q, pc.grid_p);
    {
        io::CsvWriter csv(out.dir / "portrait.csv", {"q", "p", "H_cl"});
        for (std::size_t i = 0; i < g.q.size(); ++i)
            for (std::size_t j = 0; j < g.p.size(); ++j)
                csv.row({g.q[i], g.p[j], g.H[i][j]});
    }
    const auto pts = labelled_fixed_points(cfg, model, pc.R);
    {
        io::CsvWriter csv(out.dir / "fixed_points.csv",
                          {"label", "stability", "q", "p", "E", "H_cl", "omega", "kappa"});
        for (const auto& fp : pts)
            csv.text_row({fp.label, to_string(fp.stability), io::format_number(fp.coords.P[0]),
                          io::format_number(fp.coords.Q[0]), io::format_number(fp.chemical_potential),
                          io::format_number(fp.total_energy), io::format_number(fp.omega),
                          io::format_number(fp.kappa)});
    }

    io::Figure fig(1, 1, 640.0, 420.0);
    io::Panel& p = fig.panel(0);
    char title[96];
    std::snprintf(title, sizeof title, "phase portrait at R = %g", pc.R);
    p.title = title;
    draw_portrait(p, g, pts, pc.contours);
    fig.save(out.dir / "portrait.svg");

    Json fps = Json::array();
    int n_ell = 0, n_hyp = 0;
    for (const auto& fp : pts) {
        fps.push_back(fixed_point_json(fp));
        n_ell += fp.stability == Stability::elliptic;
        n_hyp += fp.stability == Stability::hyperbolic;
    }
    Json result;
    result["R"] = pc.R;
    result["grid"] = {{"q_points", pc.grid_q},
                      {"p_points", pc.grid_p},
                      {"rows", g.q.size() * g.p.size()},
                      {"q_range", {0.0, kTwoPi}},
                      {"p_range", {0.0, 1.0}}};
    result["contours"] = pc.contours;
    result["fixed_point_count"] = pts.size();
    result["elliptic"] = n_ell;
    result["hyperbolic"] = n_hyp;
    result["fixed_points"] = fps;
    result["labels_assigned_at"] = pc.R;
    save_json(out, "summary.json", result);
}

void cmd_fixed_points(const RunConfig& cfg, const Model& model, const Output& out) {
    std::vector<std::string> header{"R", "label", "stability"};
    const auto cols = coord_columns(model);
    header.insert(header.end(), cols.begin(), cols.end());
    header.insert(header.end(), {"E", "H_cl", "omega", "kappa", "residual", "boundary"});
    io::CsvWriter csv(out.dir / "fixed_points.csv", header);

    io::Figure fig(1, 2);
    io::Panel& pos = fig.panel(0);
    pos.title = "fixed points";
    pos.xlabel = is_two_level(model) ? "q" : "P1";
    pos.ylabel = is_two_level(model) ? "p" : "Q1";
    pos.limits = std::array<double, 4>{0.0, kTwoPi, 0.0, 1.0};
    io::Panel& en = fig.panel(1);
    en.title = "classical energy";
    en.xlabel = "R";
    en.ylabel = "H_cl";

    Json per_R = Json::array();
    for (double R : cfg.fixed_points.R) {
        const auto pts = labelled_fixed_points(cfg, model, R);
        Json list = Json::array();
        for (const auto& fp : pts) {
            std::vector<std::string> row{io::format_number(R), fp.label, to_string(fp.stability)};
            for (double x : coord_values(fp.coords))
                row.push_back(io::format_number(x));
            row.insert(row.end(), {io::format_number(fp.chemical_potential), io::format_number(fp.total_energy),
                                   io::format_number(fp.omega), io::format_number(fp.kappa),
                                   io::format_number(fp.residual), fp.boundary ? "1" : "0"});
            csv.text_row(row);
            list.push_back(fixed_point_json(fp));
            const double q = std::fmod(fp.coords.P[0], kTwoPi);
            pos.markers.push_back(fixed_point_marker(q < 0 ? q + kTwoPi : q, fp.coords.Q[0], fp));
            auto m = fixed_point_marker(R, fp.total_energy, fp);
            m.label.clear();
            en.markers.push_back(m);
        }
        per_R.push_back({{"R", R}, {"count", pts.size()}, {"fixed_points", list}});
    }
    fig.save(out.dir / "fixed_points.svg");
    save_json(out, "summary.json", {{"scan", per_R}});
}

void cmd_orbit(const RunConfig& cfg, const Model& model, const Output& out) {
    const auto& oc = cfg.orbit;
    StateVector initial = [&] {
        if (oc.p >= 0.0) {
            ProjectiveCoords c{RVector::Constant(1, oc.p), RVector::Constant(1, oc.q)};
            return reconstruct(c, 0.0);
        }
        SweepSpec s;
        s.R0 = oc.R;
        s = with_initial(s, model, oc.upper, oc.phase, "");
        return resolve_initial_state(model, s);
    }();
    OrbitOptions opts = oc.orbit;
    opts.config = cfg.integrator;
    const Orbit orbit = trace_orbit(model, initial, oc.R, opts);
    const Trajectory& tr = orbit.trajectory;

    {
        std::vector<std::string> header{"t", "R"};
        const std::size_t m = model.levels() - 1;
        for (std::size_t j = 1; j <= m; ++j)
            header.push_back("Q" + std::to_string(j));
        for (std::size_t j = 1; j <= m; ++j)
            header.push_back("P" + std::to_string(j));
        header.insert(header.end(), {"lambda", "aa_phase", "energy"});
        io::CsvWriter csv(out.dir / "orbit.csv", header);
        for (std::size_t i = 0; i < tr.size(); ++i) {
            std::vector<double> row{tr.times[i], tr.R[i]};
            for (Eigen::Index j = 0; j < tr.coords[i].Q.size(); ++j)
                row.push_back(tr.coords[i].Q[j]);
            for (Eigen::Index j = 0; j < tr.coords[i].P.size(); ++j)
                row.push_back(tr.coords[i].P[j]);
            row.insert(row.end(), {tr.ledger[i].lambda, tr.ledger[i].aa_integrand_accum, tr.energies[i]});
            csv.row(row);
        }
    }

    Json result;
    result["tau"] = orbit.tau;
    result["I"] = orbit.action;
    result["gamma_aa"] = orbit.aa_phase_canonical;
    result["gamma_aa_wrapped"] = wrap_angle(orbit.aa_phase_canonical);
    result["kind"] = to_string(orbit.kind);
    result["winding"] = orbit.winding;
    result["omega"] = orbit.omega;
    result["R"] = oc.R;
    result["orientation"] = orbit.orientation;
    result["gamma_aa_ledger"] = orbit.aa_phase;
    result["loop_integral_PdQ"] = orbit.loop_integral_PdQ;
    result["closure_error"] = orbit.closure_error;
    result["gauge_index"] = orbit.gauge_index;
    result["windings"] = orbit.windings;
    result["action_convention"] =
        "I = |gamma_aa| / 2pi with gamma_aa = -oint Q dP; for rotations oint P dQ differs by 2pi winding Q(0)";
    result["initial_populations"] = vec_json(initial.amplitudes().cwiseAbs2());
    result["initial_level_populations"] = vec_json(level_populations(model, initial, oc.R));
    result["energy"] = tr.energies.empty() ? 0.0 : tr.energies.front();
    save_json(out, "summary.json", result);

    io::Figure fig(1, 2);
    io::Panel& pp = fig.panel(0);
    pp.title = "orbit";
    if (is_two_level(model)) {
        const Grid g = hamiltonian_grid(model, oc.R, 121, 61);
        draw_portrait(pp, g, labelled_fixed_points(cfg, model, oc.R), 16);
    } else {
        pp.xlabel = "P1";
        pp.ylabel = "Q1";
        pp.limits = std::array<double, 4>{0.0, kTwoPi, 0.0, 1.0};
    }
    io::Series s;
    s.color = "#d68910";
    s.width = 2.0;
    double prev = 0.0;
    for (std::size_t i = 0; i < tr.size(); ++i) {
        double q = std::fmod(tr.coords[i].P[0], kTwoPi);
        if (q < 0)
            q += kTwoPi;
        if (i > 0 && std::abs(q - prev) > std::numbers::pi) {
            s.x.push_back(std::nan(""));
            s.y.push_back(std::nan(""));
        }
        s.x.push_back(q);
        s.y.push_back(tr.coords[i].Q[0]);
        prev = q;
    }
    pp.series.push_back(std::move(s));
    io::Panel& pt = fig.panel(1);
    pt.title = "population over one period";
    pt.xlabel = "t";
    pt.ylabel = is_two_level(model) ? "p" : "Q1";
    io::Series st;
    for (std::size_t i = 0; i < tr.size(); ++i) {
        st.x.push_back(tr.times[i]);
        st.y.push_back(tr.coords[i].Q[0]);
    }
    pt.series.push_back(std::move(st));
    fig.save(out.dir / "orbit.svg");
}

void cmd_sweep(const RunConfig& cfg, const Model& model, const Output& out) {
    const auto& sc = cfg.sweep;
    const SweepSpec spec = with_initial(sc.spec, model, sc.upper, sc.phase, sc.label);
    Json result;
    result["spec"] = spec_json(spec);
    result["thresholds"] = thresholds_json(spec);
    SweepRecord rec;
    if (sc.follow) {
        FollowingResult f = eigenstate_following(sc.label, model, spec, cfg.integrator);
        result["following"] = {{"label", sc.label},
                               {"verdict", to_string(f.verdict)},
                               {"R_break", f.R_break},
                               {"t_break", f.t_break},
                               {"divergence_rate", f.divergence_rate}};
        rec = std::move(f.record);
    } else {
        rec = sweep(model, spec, cfg.integrator);
    }
    result["record"] = record_json(rec);
    result["tunneling"] = tunneling_json(rec);
    result["csv_stride"] = sc.stride;
    write_sweep_csv(out.dir / "sweep.csv", rec, sc.stride);
    sweep_figure(rec, sc.follow).save(out.dir / "sweep.svg");
    save_json(out, "summary.json", result);
}

void cmd_ladder(const RunConfig& cfg, const Model& model, const Output& out) {
    const auto& lc = cfg.ladder;
    const SweepSpec spec = with_initial(lc.spec, model, lc.upper, lc.phase, "");
    const auto records = run_ladder(model, spec, lc.alphas, cfg.integrator);
    const InvarianceReport rep = invariance_report(records);

    io::CsvWriter csv(out.dir / "ladder.csv",
                      {"alpha", "max_action_drift", "endpoint_drift", "population_drift", "omega_floor_hit"});
    Json rows = Json::array();
    io::Figure fig(1, 1, 600.0, 400.0);
    io::Panel& p = fig.panel(0);
    p.title = "action drift against sweep rate";
    p.xlabel = "log10 alpha";
    p.ylabel = "drift";
    p.log_y = true;
    io::Series drift{{}, {}, color(0), "", 1.4, "max action drift"};
    io::Series end{{}, {}, color(1), "5,3", 1.2, "endpoint drift"};
    for (const auto& r : rep.rows) {
        csv.row({r.alpha, r.max_action_drift, r.endpoint_drift, r.population_drift, r.omega_floor_hit ? 1.0 : 0.0});
        rows.push_back({{"alpha", r.alpha},
                        {"max_action_drift", r.max_action_drift},
                        {"endpoint_drift", r.endpoint_drift},
                        {"population_drift", r.population_drift},
                        {"omega_floor_hit", r.omega_floor_hit}});
        const double x = std::log10(r.alpha);
        drift.x.push_back(x);
        drift.y.push_back(r.max_action_drift);
        end.x.push_back(x);
        end.y.push_back(r.endpoint_drift);
        p.markers.push_back({x, r.max_action_drift, io::Glyph::circle, color(0), true, 3.5, ""});
    }
    p.series.push_back(std::move(drift));
    p.series.push_back(std::move(end));
    fig.save(out.dir / "ladder.svg");

    Json runs = Json::array();
    for (const auto& r : records)
        runs.push_back({{"alpha", r.spec.alpha},
                        {"steps", r.steps},
                        {"omega_min", r.omega_min},
                        {"initial_populations", vec_json(r.initial_populations)},
                        {"final_populations", vec_json(r.final_populations)},
                        {"warnings", r.warnings}});
    Json result;
    result["spec"] = spec_json(spec);
    result["rows"] = rows;
    result["monotone"] = rep.monotone;
    result["order"] = rep.order;
    result["runs"] = runs;
    save_json(out, "summary.json", result);
}

}  // namespace nlsa::cli
