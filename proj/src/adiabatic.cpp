#include "nlsa/adiabatic.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numbers>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "nlsa/errors.hpp"
#include "nlsa/geometry.hpp"
#include "nlsa/stationary.hpp"

namespace nlsa {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kLinearHard = kLinearEndpointRequired;
constexpr double kLinearSoft = kLinearEndpointWarning;

std::string fmt(double x) {
    std::ostringstream os;
    os.precision(10);
    os << x;
    return os.str();
}

CMatrix density(const StateVector& s) { return s.amplitudes() * s.amplitudes().adjoint(); }

/// Upper-level action from the AA phase: gamma is 2 pi I mod 2 pi up to
/// orientation, so take whichever of {f, 1 - f} is nearer the population.
double endpoint_action(double gamma, double upper_population) {
    double f = gamma / kTwoPi;
    f -= std::floor(f);
    return std::abs(f - upper_population) <= std::abs(1.0 - f - upper_population) ? f : 1.0 - f;
}

struct Tracked {
    FixedPoint fp;
};

class SweepRunner {
public:
    using StopFn = std::function<bool(const SweepRecord&)>;

    SweepRunner(const Model& model, const SweepSpec& spec, const IntegratorConfig& config)
        : model_(model), spec_(spec), config_(config) {
        orbit_opts_.config = config;
        orbit_opts_.max_time = spec.orbit_max_time;
        orbit_opts_.samples = 512;
    }

    void track(FixedPoint fp) { tracked_ = Tracked{std::move(fp)}; }

    SweepRecord run(const StateVector& initial, double sample_dt, const StopFn& stop = {}) {
        SweepRecord rec;
        rec.spec = spec_;
        rec.sample_dt = sample_dt;
        const double scale = nonlinearity_scale(model_);
        rec.linear_margin = scale > 0.0 ? std::min(std::abs(spec_.R0), std::abs(spec_.R1)) / scale
                                        : std::numeric_limits<double>::infinity();
        if (rec.linear_margin < kLinearSoft)
            rec.warnings.push_back("sweep endpoints are only " + fmt(rec.linear_margin) +
                                   " x max(c, v); linear-end bookkeeping is approximate");
        if (!tracked_)
            acquire(initial, spec_.R0, 0.0, rec);
        if (tracked_ && rec.tracked_label.empty())
            rec.tracked_label = tracked_->fp.label;

        const double T = spec_.duration();
        const std::size_t n_rec = static_cast<std::size_t>(std::ceil(T / sample_dt - 1e-9));
        const std::size_t n_gamma = std::max<std::size_t>(spec_.gamma_samples, 2) - 1;
        auto rec_time = [&](std::size_t k) { return k >= n_rec ? T : static_cast<double>(k) * sample_dt; };
        auto gamma_time = [&](std::size_t k) {
            return k >= n_gamma ? T : T * static_cast<double>(k) / static_cast<double>(n_gamma);
        };

        QuantumFlow flow(model_, spec_.schedule(), config_);
        flow.reset(initial, 0.0);
        std::size_t k_rec = 0, k_gamma = 0;
        bool stopped = false;

        auto process = [&](const QuantumFlow::Sample& s) {
            const double t = s.t + 1e-12 * std::max(1.0, T);
            const bool is_gamma = k_gamma <= n_gamma && gamma_time(k_gamma) <= t;
            const bool is_rec = k_rec <= n_rec && rec_time(k_rec) <= t;
            if (is_gamma) {
                close_orbit(s, rec);
                ++k_gamma;
            }
            if (is_rec) {
                record(s, rec);
                ++k_rec;
                if (stop && stop(rec))
                    stopped = true;
            }
        };

        process(flow.current());
        if (!stopped && T > 0.0) {
            flow.advance(T, [&](const QuantumFlow::Sample& end, const QuantumFlow::Interpolator& at) {
                while (!stopped) {
                    const double next = std::min(k_rec <= n_rec ? rec_time(k_rec) : T + 1.0,
                                                 k_gamma <= n_gamma ? gamma_time(k_gamma) : T + 1.0);
                    if (next > end.t)
                        break;
                    process(next == end.t ? end : at(next));
                }
                return !stopped;
            });
            if (!stopped && (k_rec <= n_rec || k_gamma <= n_gamma))
                process(flow.current());
        }

        const StateVector last = rec_state_;
        rec.final_state = last;
        rec.steps = flow.integrator().accepted_steps();
        rec.max_norm_drift = flow.max_norm_drift();
        finalize(initial, last, rec);
        return rec;
    }

private:
    void acquire(const StateVector& state, double R, double t, SweepRecord& rec) {
        tracked_.reset();
        CMatrix rho = density(state);
        try {
            const Orbit o = trace_orbit(model_, state, R, orbit_opts_);
            if (o.trajectory.size() > 1) {
                rho.setZero();
                for (std::size_t i = 0; i + 1 < o.trajectory.size(); ++i)
                    rho += density(o.trajectory.states[i]);
                rho /= static_cast<double>(o.trajectory.size() - 1);
            }
        } catch (const Error&) {
        }
        std::vector<FixedPoint> pts;
        try {
            pts = find_fixed_points(model_, R);
        } catch (const Error&) {
            return;
        }
        double best = -1.0;
        for (auto& p : pts) {
            if (p.stability != Stability::elliptic)
                continue;
            const StateVector f = p.state();
            const double w = f.amplitudes().dot(rho * f.amplitudes()).real();
            if (w > best) {
                best = w;
                tracked_ = Tracked{p};
            }
        }
        if (tracked_) {
            tracked_->fp.label = label_of(tracked_->fp, R);
            rec.events.push_back({SweepEvent::Kind::tracking_acquired, t, R,
                                  (tracked_->fp.label.empty() ? std::string("fixed point") : tracked_->fp.label) +
                                      " at Q = " + fmt(tracked_->fp.coords.Q[0]) +
                                      ", P = " + fmt(tracked_->fp.coords.P[0])});
        }
    }

    /// Label of `fp` as assigned at R_ref, by continuation; empty if unknown.
    std::string label_of(const FixedPoint& fp, double R) const {
        if (model_.levels() != 2)
            return {};
        try {
            ContinuationOptions co;
            co.R_ref = spec_.R_ref;
            co.R_min = std::min(R, spec_.R_ref) - 1e-6;
            co.R_max = std::max(R, spec_.R_ref) + 1e-6;
            const BranchDiagram d = continue_branches(model_, co);
            for (const auto& b : d.branches) {
                if (b.label.empty() || b.label[0] != 'f')
                    continue;
                const auto hit = d.at(model_, b.label, R);
                if (hit && projective_distance(hit->state(), fp.state()) < 1e-6)
                    return b.label;
            }
        } catch (const Error&) {
        }
        return {};
    }

    void update_tracking(const QuantumFlow::Sample& s, SweepRecord& rec, double& omega, double& dist) {
        omega = 0.0;
        dist = kNaN;
        if (!tracked_)
            return;
        const FixedPoint& prev = tracked_->fp;
        bool ok = false;
        FixedPoint next;
        if (const auto c = refine_fixed_point(model_, prev.coords, s.R)) {
            try {
                next = classify(model_, *c, s.R);
                const double dQ = (next.coords.Q - prev.coords.Q).cwiseAbs().maxCoeff();
                double dP = 0.0;
                for (Eigen::Index j = 0; j < next.coords.P.size(); ++j)
                    dP = std::max(dP, std::abs(wrap_angle(next.coords.P[j] - prev.coords.P[j])));
                ok = next.stability == prev.stability && dQ < 0.1 && dP < 0.5;
            } catch (const Error&) {
            }
        }
        if (ok) {
            next.label = prev.label;
            tracked_->fp = std::move(next);
            omega = tracked_->fp.omega;
            dist = projective_distance(s.state, tracked_->fp.state());
            return;
        }
        std::string detail = prev.label.empty() ? std::string("fixed point") : prev.label;
        try {
            const TurningPoint tp = solve_turning_point(model_, prev.coords, prev.R);
            detail += " annihilated at R = " + fmt(tp.R);
        } catch (const Error&) {
            detail += " lost";
        }
        rec.events.push_back({SweepEvent::Kind::tracking_lost, s.t, s.R, detail});
        // the last known position stays the reference until a new point is acquired
        const StateVector last = prev.state();
        acquire(s.state, s.R, s.t, rec);
        dist = tracked_ ? projective_distance(s.state, tracked_->fp.state()) : projective_distance(s.state, last);
    }

    void close_orbit(const QuantumFlow::Sample& s, SweepRecord& rec) {
        try {
            const Orbit o = trace_orbit(model_, s.state, s.R, orbit_opts_);
            gamma_ = have_gamma_ ? unwrap_near(o.aa_phase, gamma_) : o.aa_phase;
            orbit_omega_ = o.omega;
            const CMatrix V = level_basis(model_, s.R);
            const std::size_t m = std::max<std::size_t>(o.trajectory.size(), 2) - 1;
            mean_pops_ = RVector::Zero(V.cols());
            for (std::size_t i = 0; i < m; ++i)
                mean_pops_ += (V.adjoint() * o.trajectory.states[i].amplitudes()).cwiseAbs2();
            mean_pops_ /= static_cast<double>(m);
            mean_pops_t_ = s.t;
            if (!have_gamma_) {
                rec.gamma_start = gamma_;
                rec.initial_mean_populations = mean_pops_;
            }
            have_gamma_ = true;
        } catch (const Error& e) {
            rec.events.push_back({SweepEvent::Kind::orbit_skipped, s.t, s.R, e.what()});
        }
    }

    void record(const QuantumFlow::Sample& s, SweepRecord& rec) {
        double omega = 0.0, dist = kNaN;
        update_tracking(s, rec, omega, dist);
        const double scale = nonlinearity_scale(model_);
        RVector pops;
        if (scale == 0.0 || std::abs(s.R) >= kLinearHard * scale) {
            pops = level_populations(model_, s.state, s.R);
        } else {
            pops = s.state.amplitudes().cwiseAbs2();
        }
        rec.t.push_back(s.t);
        rec.R.push_back(s.R);
        rec.populations.push_back(std::move(pops));
        rec.gamma_aa.push_back(have_gamma_ ? gamma_ : kNaN);
        rec.orbit_omega.push_back(orbit_omega_);
        rec.omega.push_back(omega);
        rec.distance.push_back(dist);
        rec_state_ = s.state;
    }

    void finalize(const StateVector& initial, const StateVector& last, SweepRecord& rec) {
        rec.gamma_end = gamma_;
        rec.initial_populations = level_populations(model_, initial, spec_.R0);
        rec.final_populations = level_populations(model_, last, rec.R.back());
        if (rec.initial_mean_populations.size() == 0)
            rec.initial_mean_populations = rec.initial_populations;
        rec.final_mean_populations = mean_pops_t_ == rec.t.back() ? mean_pops_ : rec.final_populations;
        if (model_.levels() == 2) {
            rec.initial_action = endpoint_action(rec.gamma_start, rec.initial_populations[1]);
            rec.final_action = endpoint_action(rec.gamma_end, rec.final_populations[1]);
        } else {
            rec.initial_action = rec.final_action = kNaN;
        }
        rec.omega_min = rec.omega.empty() ? 0.0 : *std::min_element(rec.omega.begin(), rec.omega.end());
        rec.omega_floor_hit = rec.omega_min < spec_.omega_floor;
    }

    const Model& model_;
    SweepSpec spec_;
    IntegratorConfig config_;
    OrbitOptions orbit_opts_;
    std::optional<Tracked> tracked_;
    double gamma_ = 0.0;
    bool have_gamma_ = false;
    double orbit_omega_ = 0.0;
    RVector mean_pops_;
    double mean_pops_t_ = -1.0;
    StateVector rec_state_{CVector::Unit(2, 0)};
};

/// Record spacing: a tenth of the slowest regular period met along the ramp.
double auto_sample_dt(const Model& model, const SweepSpec& spec) {
    FixedPointOptions fo;
    fo.grid_q = 16;
    fo.grid_p = 16;
    double omega_min = std::numeric_limits<double>::infinity();
    constexpr int kScan = 41;
    for (int i = 0; i < kScan; ++i) {
        const double R = spec.R0 + (spec.R1 - spec.R0) * i / (kScan - 1);
        try {
            for (const auto& p : find_fixed_points(model, R, fo))
                if (p.stability == Stability::elliptic && p.omega >= 0.05)
                    omega_min = std::min(omega_min, p.omega);
        } catch (const Error&) {
        }
    }
    if (!std::isfinite(omega_min))
        omega_min = 1.0;
    const double dt = kTwoPi / omega_min / 10.0;
    return std::min(dt, spec.duration() / 1000.0);
}

}  // namespace

InitialCondition InitialCondition::eigenstate(std::string label) {
    InitialCondition ic;
    ic.kind = Kind::label;
    ic.label = std::move(label);
    return ic;
}

InitialCondition InitialCondition::explicit_state(StateVector s) {
    InitialCondition ic;
    ic.kind = Kind::state;
    ic.state = std::move(s);
    return ic;
}

InitialCondition InitialCondition::level_populations(std::vector<double> pops, std::vector<double> phases) {
    InitialCondition ic;
    ic.kind = Kind::populations;
    ic.populations = std::move(pops);
    ic.phases = std::move(phases);
    return ic;
}

InitialCondition InitialCondition::upper_level(double upper, double phase) {
    return level_populations({1.0 - upper, upper}, {0.0, phase});
}

void SweepSpec::validate() const {
    if (!std::isfinite(R0) || !std::isfinite(R1) || R0 == R1)
        throw InvalidParameter("sweep needs finite R0 != R1");
    if (!(alpha > 0.0) || !std::isfinite(alpha))
        throw InvalidParameter("sweep rate alpha must be > 0");
    if (sample_dt < 0.0)
        throw InvalidParameter("sample_dt must be >= 0");
    if (!(omega_floor > 0.0))
        throw InvalidParameter("omega_floor must be > 0");
    if (!(follow_tolerance > 0.0 && follow_tolerance < 1.0))
        throw InvalidParameter("follow_tolerance must lie in (0, 1)");
    if (!(orbit_max_time > 0.0))
        throw InvalidParameter("orbit_max_time must be > 0");
    if (initial.kind == InitialCondition::Kind::populations) {
        double sum = 0.0;
        for (double p : initial.populations) {
            if (!(p >= 0.0))
                throw InvalidParameter("initial populations must be >= 0");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw InvalidParameter("initial populations must sum to 1");
        if (!initial.phases.empty() && initial.phases.size() != initial.populations.size())
            throw InvalidParameter("initial phases must match the populations");
    }
    if (initial.kind == InitialCondition::Kind::state && !initial.state)
        throw InvalidParameter("explicit initial condition without a state");
}

double SweepSpec::duration() const { return std::abs(R1 - R0) / alpha; }

double SweepSpec::rate() const { return R1 > R0 ? alpha : -alpha; }

Schedule SweepSpec::schedule() const { return linear_ramp(R0, rate()); }

std::string to_string(SweepEvent::Kind k) {
    switch (k) {
    case SweepEvent::Kind::tracking_lost:
        return "tracking_lost";
    case SweepEvent::Kind::tracking_acquired:
        return "tracking_acquired";
    case SweepEvent::Kind::orbit_skipped:
        return "orbit_skipped";
    }
    return "unknown";
}

std::string to_string(FollowVerdict v) { return v == FollowVerdict::followed ? "followed" : "broke_down"; }

CMatrix level_basis(const Model& model, double R) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(model.linear_reference(R));
    CMatrix V = es.eigenvectors();
    for (Eigen::Index k = 0; k < V.cols(); ++k) {
        Eigen::Index i = 0;
        V.col(k).cwiseAbs().maxCoeff(&i);
        V.col(k) *= std::conj(V(i, k)) / std::abs(V(i, k));
    }
    return V;
}

RVector level_populations(const Model& model, const StateVector& state, double R) {
    return (level_basis(model, R).adjoint() * state.amplitudes()).cwiseAbs2();
}

double nonlinearity_scale(const Model& model) {
    if (const auto* m = dynamic_cast<const TwoLevelModel*>(&model))
        return std::max(m->c(), m->v());
    return 0.0;
}

StateVector resolve_initial_state(const Model& model, const SweepSpec& spec) {
    const auto& ic = spec.initial;
    switch (ic.kind) {
    case InitialCondition::Kind::state:
        if (ic.state->levels() != model.levels())
            throw InvalidParameter("initial state size does not match the model");
        return *ic.state;
    case InitialCondition::Kind::label:
        return locate_label(model, ic.label, spec.R0, spec.R_ref).state();
    case InitialCondition::Kind::populations:
        break;
    }
    if (ic.populations.size() != model.levels())
        throw InvalidParameter("initial populations do not match the number of levels");
    const CMatrix V = level_basis(model, spec.R0);
    CVector psi = CVector::Zero(V.rows());
    for (std::size_t k = 0; k < ic.populations.size(); ++k) {
        const double ph = ic.phases.empty() ? 0.0 : ic.phases[k];
        psi += std::sqrt(ic.populations[k]) * std::polar(1.0, ph) * V.col(static_cast<Eigen::Index>(k));
    }
    return StateVector::normalized(psi);
}

SweepRecord sweep(const Model& model, const SweepSpec& spec, const IntegratorConfig& config) {
    spec.validate();
    config.validate();
    const StateVector initial = resolve_initial_state(model, spec);
    SweepRunner runner(model, spec, config);
    if (spec.initial.kind == InitialCondition::Kind::label) {
        FixedPoint fp = locate_label(model, spec.initial.label, spec.R0, spec.R_ref);
        fp.label = spec.initial.label;
        runner.track(std::move(fp));
    }
    const double dt = spec.sample_dt > 0.0 ? spec.sample_dt : auto_sample_dt(model, spec);
    return runner.run(initial, dt);
}

TunnelingReport tunneling_probability(const SweepRecord& record) {
    if (record.linear_margin < kLinearHard)
        throw EndpointsNotLinear("sweep endpoints are " + fmt(record.linear_margin) +
                                 " x max(c, v), need at least 5 for linear-end populations");
    if (record.size() < 2)
        throw InvalidParameter("sweep record is empty");
    TunnelingReport r;
    r.delta_populations = record.final_populations - record.initial_populations;
    const Eigen::Index up = record.final_populations.size() - 1;
    r.population_change = std::abs(r.delta_populations[up]);
    r.probability = std::abs(record.final_mean_populations[up] - record.initial_mean_populations[up]);
    r.action_change = std::abs(record.final_action - record.initial_action);
    r.gamma_jump = record.gamma_end - record.gamma_start;
    r.jump_over_2pi = std::abs(r.gamma_jump) / kTwoPi;
    return r;
}

FollowingResult eigenstate_following(const std::string& label, const Model& model, SweepSpec spec,
                                     const IntegratorConfig& config, bool stop_on_breakdown) {
    spec.initial = InitialCondition::eigenstate(label);
    spec.validate();
    config.validate();
    FixedPoint fp = locate_label(model, label, spec.R0, spec.R_ref);
    fp.label = label;
    const StateVector initial = fp.state();
    double dt = spec.sample_dt > 0.0 ? spec.sample_dt : auto_sample_dt(model, spec);
    if (fp.kappa > 0.0 && spec.sample_dt <= 0.0)
        dt = std::min(dt, 0.05 / fp.kappa);

    FollowingResult res;
    bool broken = false;
    const double tol = spec.follow_tolerance;
    auto stop = [&](const SweepRecord& r) {
        const double d = r.distance.back();
        if (!broken && !(d < tol)) {
            broken = true;
            res.verdict = FollowVerdict::broke_down;
            res.R_break = r.R.back();
            res.t_break = r.t.back();
            return stop_on_breakdown;
        }
        return false;
    };
    SweepRunner runner(model, spec, config);
    runner.track(fp);
    res.record = runner.run(initial, dt, stop);

    // growth rate over the first run of samples climbing through the window
    const auto& t = res.record.t;
    const auto& d = res.record.distance;
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (broken && t[i] > res.t_break)
            break;
        if (d[i] >= 0.01 * tol && d[i] <= 0.5 * tol) {
            xs.push_back(t[i]);
            ys.push_back(std::log(d[i]));
        }
    }
    if (xs.size() >= 3) {
        const double n = static_cast<double>(xs.size());
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            sx += xs[i];
            sy += ys[i];
            sxx += xs[i] * xs[i];
            sxy += xs[i] * ys[i];
        }
        const double den = n * sxx - sx * sx;
        if (den > 0.0)
            res.divergence_rate = (n * sxy - sx * sy) / den;
    }
    return res;
}

InvarianceReport invariance_report(const std::vector<SweepRecord>& records) {
    InvarianceReport rep;
    for (const auto& r : records) {
        LadderRow row;
        row.alpha = r.spec.alpha;
        for (double g : r.gamma_aa)
            if (!std::isnan(g))
                row.max_action_drift = std::max(row.max_action_drift, std::abs(g - r.gamma_start) / kTwoPi);
        row.endpoint_drift = std::abs(r.final_action - r.initial_action);
        if (r.final_populations.size() == r.initial_populations.size() && r.final_populations.size() > 0)
            row.population_drift = (r.final_populations - r.initial_populations).cwiseAbs().maxCoeff();
        row.omega_floor_hit = r.omega_floor_hit;
        rep.rows.push_back(row);
    }
    std::stable_sort(rep.rows.begin(), rep.rows.end(),
                     [](const LadderRow& a, const LadderRow& b) { return a.alpha > b.alpha; });
    rep.monotone = rep.rows.size() >= 2;
    for (std::size_t i = 1; i < rep.rows.size(); ++i)
        if (!(rep.rows[i].max_action_drift < rep.rows[i - 1].max_action_drift))
            rep.monotone = false;

    std::vector<double> xs, ys;
    for (const auto& row : rep.rows) {
        if (row.max_action_drift > 0.0) {
            xs.push_back(std::log(row.alpha));
            ys.push_back(std::log(row.max_action_drift));
        }
    }
    if (xs.size() >= 2) {
        const double n = static_cast<double>(xs.size());
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            sx += xs[i];
            sy += ys[i];
            sxx += xs[i] * xs[i];
            sxy += xs[i] * ys[i];
        }
        const double den = n * sxx - sx * sx;
        if (den > 0.0)
            rep.order = (n * sxy - sx * sy) / den;
    }
    return rep;
}

std::vector<SweepRecord> run_ladder(const Model& model, const SweepSpec& spec, const std::vector<double>& alphas,
                                    const IntegratorConfig& config) {
    std::vector<std::future<SweepRecord>> jobs;
    jobs.reserve(alphas.size());
    for (double a : alphas) {
        SweepSpec s = spec;
        s.alpha = a;
        jobs.push_back(std::async(std::launch::async, [&model, s, config] { return sweep(model, s, config); }));
    }
    std::vector<SweepRecord> out;
    out.reserve(jobs.size());
    for (auto& j : jobs)
        out.push_back(j.get());
    return out;
}

SweepSpec mirror(const SweepSpec& spec, const Model& model) {
    if (model.levels() != 2)
        throw InvalidParameter("mirror is defined for two-level models");
    const StateVector s = resolve_initial_state(model, spec);
    CVector flipped(2);
    flipped << s[1], s[0];
    SweepSpec m = spec;
    m.R0 = -spec.R0;
    m.R1 = -spec.R1;
    m.R_ref = -spec.R_ref;
    m.initial = InitialCondition::explicit_state(StateVector(flipped));
    return m;
}

}  // namespace nlsa
