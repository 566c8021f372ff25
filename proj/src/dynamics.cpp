#include "nlsa/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "nlsa/errors.hpp"

namespace nlsa {

namespace {

constexpr double kPhaseJumpLimit = std::numbers::pi / 2;

// Below this step size phase-continuity rejections are waived.
double phase_step_floor(double t) { return 1e-11 * std::max(1.0, std::abs(t)); }

CMatrix density(const CVector& psi) { return psi * psi.adjoint(); }

CMatrix density_rate(const CVector& psi, const CVector& dpsi) {
    return dpsi * psi.adjoint() + psi * dpsi.adjoint();
}

double frob(const CMatrix& a, const CMatrix& b) { return (a.adjoint() * b).trace().real(); }

CVector state_rate(const Model& model, const StateVector& s, double R) {
    return cplx(0.0, -1.0) * model.apply(s, R);
}

ProjectiveCoords safe_velocity(const Model& model, const StateVector& s, const CVector& rate,
                               const ProjectiveCoords& coords, double R, Representation rep) {
    const std::size_t gauge = s.levels() - 1;
    const Eigen::Index m = static_cast<Eigen::Index>(gauge);
    if (rep == Representation::classical) {
        RVector y(2 * m), g(2 * m);
        y << coords.Q, coords.P;
        if (model.gradient_raw(y.data(), R, g.data()))
            return ProjectiveCoords{g.tail(m), -g.head(m)};
    }
    if (std::norm(s[gauge]) < kGaugeFloor) {
        ProjectiveCoords v{RVector::Zero(m), RVector::Zero(m)};
        for (Eigen::Index j = 0; j < m; ++j)
            v.Q[j] = 2.0 * (std::conj(s.amplitudes()[j]) * rate[j]).real();
        return v;
    }
    return coords_velocity(s, rate, gauge);
}

class TrajectoryBuilder {
public:
    TrajectoryBuilder(const Model& model, Trajectory& traj) : model_(model), traj_(traj) {}

    void add(const QuantumFlow::Sample& s, Representation rep) {
        traj_.times.push_back(s.t);
        traj_.R.push_back(s.R);
        const CVector rate = state_rate(model_, s.state, s.R);
        traj_.velocities.push_back(safe_velocity(model_, s.state, rate, s.coords, s.R, rep));
        traj_.state_rates.push_back(rate);
        traj_.states.push_back(s.state);
        traj_.coords.push_back(s.coords);
        traj_.ledger.push_back(s.ledger);
        traj_.energies.push_back(model_.total_energy(s.state, s.R));
        traj_.representation.push_back(rep);
    }

private:
    const Model& model_;
    Trajectory& traj_;
};

// Emits samples at the requested record times between consecutive end points.
class Recorder {
public:
    Recorder(const RecordOptions& opts, double t0, double t1) : opts_(opts), t1_(t1) {
        dir_ = t1 >= t0 ? 1.0 : -1.0;
        if (opts_.mode == RecordMode::uniform) {
            if (!(opts_.dt > 0.0))
                throw InvalidParameter("uniform recording needs dt > 0");
            next_ = t0 + dir_ * opts_.dt;
        }
    }

    template <class Emit>
    void on_step(const QuantumFlow::Sample& end, const QuantumFlow::Interpolator& at, Emit&& emit) {
        switch (opts_.mode) {
        case RecordMode::every_step:
            emit(end);
            break;
        case RecordMode::uniform:
            while (dir_ * (end.t - next_) >= -1e-12 * opts_.dt) {
                emit(std::abs(end.t - next_) <= 1e-12 * opts_.dt ? end : at(next_));
                ++count_;
                next_ = start() + dir_ * opts_.dt * static_cast<double>(count_ + 1);
            }
            break;
        case RecordMode::final_only:
            if (end.t == t1_)
                emit(end);
            break;
        }
    }

    void set_start(double t0) {
        t0_ = t0;
        count_ = 0;
        next_ = t0 + dir_ * opts_.dt;
    }

private:
    double start() const { return t0_; }

    RecordOptions opts_;
    double t0_ = 0.0;
    double t1_;
    double dir_ = 1.0;
    double next_ = 0.0;
    std::size_t count_ = 0;
};

}  // namespace

void IntegratorConfig::validate() const {
    if (method == Method::dopri5 && !(rtol > 0.0 && atol > 0.0))
        throw InvalidParameter("integrator tolerance must be > 0");
    if (method == Method::rk4 && !(step > 0.0))
        throw InvalidParameter("integrator step must be > 0");
    if (!(pole_switch_threshold > 0.0 && pole_switch_threshold < 0.01))
        throw InvalidParameter("pole_switch_threshold must lie in (0, 0.01)");
    if (!(gauge_handoff_threshold >= kGaugeFloor && gauge_handoff_threshold < 0.1))
        throw InvalidParameter("gauge_handoff_threshold must lie in [1e-14, 0.1)");
}

StepperOptions IntegratorConfig::stepper() const {
    StepperOptions o;
    o.method = method;
    o.rtol = rtol;
    o.atol = atol;
    o.fixed_step = step;
    return o;
}

Schedule constant_schedule(double R) {
    return [R](double) { return R; };
}

Schedule linear_ramp(double R0, double alpha) {
    return [R0, alpha](double t) { return R0 + alpha * t; };
}

// ---------------------------------------------------------------------------
// QuantumFlow

QuantumFlow::QuantumFlow(const Model& model, Schedule schedule, const IntegratorConfig& config)
    : model_(model),
      schedule_(std::move(schedule)),
      config_(config),
      n_(model.levels()),
      gauge_(config.gauge_index.value_or(model.levels() - 1)),
      ode_(2 * model.levels() + 2,
           [this](double t, const double* y, double* dy) {
               const double R = schedule_(t);
               for (std::size_t k = 0; k < n_; ++k)
                   psi_buf_[k] = cplx(y[2 * k], y[2 * k + 1]);
               model_.apply(psi_buf_.data(), R, hpsi_buf_.data());
               double expect = 0.0;
               double others = 0.0;
               double aa = 0.0;
               for (std::size_t k = 0; k < n_; ++k) {
                   dy[2 * k] = hpsi_buf_[k].imag();
                   dy[2 * k + 1] = -hpsi_buf_[k].real();
                   const double w = (std::conj(psi_buf_[k]) * hpsi_buf_[k]).real();
                   expect += w;
                   if (k != gauge_) {
                       aa += w;
                       others += std::norm(psi_buf_[k]);
                   }
               }
               const cplx g = psi_buf_[gauge_];
               const double lambda_dot = -(hpsi_buf_[gauge_] * std::conj(g)).real() / std::norm(g);
               dy[2 * n_] = aa + others * lambda_dot;
               dy[2 * n_ + 1] = -expect;
           },
           config.stepper()) {
    config_.validate();
    if (gauge_ >= n_)
        throw InvalidParameter("gauge index out of range");
    psi_buf_.resize(n_);
    hpsi_buf_.resize(n_);
    y_.assign(2 * n_ + 2, 0.0);
    P_ = RVector::Zero(static_cast<Eigen::Index>(n_ - 1));
}

void QuantumFlow::reset(const StateVector& state, double t, const PhaseLedger& ledger,
                        const std::optional<RVector>& P_hint) {
    if (state.levels() != n_)
        throw InvalidParameter("state size does not match the model");
    t_ = t;
    for (std::size_t k = 0; k < n_; ++k) {
        y_[2 * k] = state[k].real();
        y_[2 * k + 1] = state[k].imag();
    }
    y_[2 * n_] = ledger.aa_integrand_accum;
    y_[2 * n_ + 1] = ledger.dynamical_accum;
    lambda_ = ledger.lambda;
    gauge_ = config_.gauge_index.value_or(n_ - 1);
    if (std::norm(state[gauge_]) < config_.gauge_handoff_threshold) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < n_; ++k)
            if (std::norm(state[k]) > std::norm(state[best]))
                best = k;
        gauge_ = best;
    }
    const std::size_t chart = n_ - 1;
    for (std::size_t j = 0; j < chart; ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        double p = 0.0;
        if (std::norm(state[j]) > 0.0 && std::norm(state[chart]) > 0.0)
            p = std::arg(state[j] * std::conj(state[chart]));
        P_[jj] = P_hint ? unwrap_near(p, (*P_hint)[jj]) : p;
    }
    max_drift_ = 0.0;
}

double QuantumFlow::norm_error() const {
    double n2 = 0.0;
    for (std::size_t i = 0; i < 2 * n_; ++i)
        n2 += y_[i] * y_[i];
    return std::abs(n2 - 1.0);
}

QuantumFlow::Sample QuantumFlow::make_sample(double t, const double* y, double lambda, const RVector& P) const {
    CVector amps(static_cast<Eigen::Index>(n_));
    for (std::size_t k = 0; k < n_; ++k)
        amps[static_cast<Eigen::Index>(k)] = cplx(y[2 * k], y[2 * k + 1]);
    StateVector s = StateVector::normalized(std::move(amps));
    ProjectiveCoords c;
    c.Q.resize(static_cast<Eigen::Index>(n_ - 1));
    for (std::size_t j = 0; j + 1 < n_; ++j)
        c.Q[static_cast<Eigen::Index>(j)] = s.population(j);
    c.P = P;
    return Sample{t, schedule_(t), std::move(s), std::move(c), PhaseLedger{lambda, y[2 * n_], y[2 * n_ + 1]}};
}

QuantumFlow::Sample QuantumFlow::current() const { return make_sample(t_, y_.data(), lambda_, P_); }

void QuantumFlow::prefer_gauge(std::size_t level, double min_population) {
    const double pop = y_[2 * level] * y_[2 * level] + y_[2 * level + 1] * y_[2 * level + 1];
    if (gauge_ != level && pop > min_population) {
        gauge_ = level;
        ++gauge_switches_;
    }
}

double QuantumFlow::advance(double t_end, const Observer& observer) {
    const std::size_t chart = n_ - 1;
    auto amp = [](std::span<const double> y, std::size_t k) { return cplx(y[2 * k], y[2 * k + 1]); };
    RVector P_new(P_.size());

    StepHook hook = [&](DenseStep& step) -> StepVerdict {
        auto y1 = step.y1();
        auto y0 = step.y0();
        double n2 = 0.0;
        for (std::size_t i = 0; i < 2 * n_; ++i)
            n2 += y1[i] * y1[i];
        const double drift = std::abs(n2 - 1.0);
        const bool waive = std::abs(step.h()) < phase_step_floor(step.t1());

        // overall phase continuity in the current gauge
        double dlambda = 0.0;
        const cplx g0 = amp(y0, gauge_), g1 = amp(y1, gauge_);
        if (std::norm(g0) > kGaugeFloor && std::norm(g1) > kGaugeFloor) {
            dlambda = wrap_angle(std::arg(g1) - std::arg(g0));
            if (std::abs(dlambda) > kPhaseJumpLimit && !waive)
                return StepVerdict::reject;
        }
        // chart phases (gauge = last level)
        P_new = P_;
        const cplx c0 = amp(y0, chart), c1 = amp(y1, chart);
        for (std::size_t j = 0; j < chart; ++j) {
            const cplx a0 = amp(y0, j), a1 = amp(y1, j);
            if (std::norm(a0) * std::norm(c0) > kGaugeFloor && std::norm(a1) * std::norm(c1) > kGaugeFloor) {
                const double dp = wrap_angle(std::arg(a1 * std::conj(c1)) - std::arg(a0 * std::conj(c0)));
                if (std::abs(dp) > kPhaseJumpLimit && !waive)
                    return StepVerdict::reject;
                P_new[static_cast<Eigen::Index>(j)] += dp;
            } else if (std::norm(a1) * std::norm(c1) > kGaugeFloor) {
                const auto jj = static_cast<Eigen::Index>(j);
                P_new[jj] = unwrap_near(std::arg(a1 * std::conj(c1)), P_[jj]);
            }
        }

        max_drift_ = std::max(max_drift_, drift);
        if (config_.renormalize) {
            const double s = 1.0 / std::sqrt(n2);
            for (std::size_t i = 0; i < 2 * n_; ++i)
                y1[i] *= s;
            step.mark_modified();
        }

        const double lambda_old = lambda_;
        const RVector P_old = P_;
        const std::size_t gauge_step = gauge_;
        lambda_ += dlambda;
        P_ = P_new;
        t_ = step.t1();

        bool keep_going = true;
        if (observer) {
            const Sample end = make_sample(step.t1(), y1.data(), lambda_, P_);
            std::vector<double> buf(2 * n_ + 2);
            Interpolator at = [&, lambda_old, P_old, gauge_step](double t) {
                step.eval(t, buf.data());
                const cplx gi = amp(buf, gauge_step);
                double lam = lambda_old;
                if (std::norm(g0) > kGaugeFloor && std::norm(gi) > kGaugeFloor)
                    lam += wrap_angle(std::arg(gi) - std::arg(g0));
                RVector P = P_old;
                const cplx ci = amp(buf, chart);
                for (std::size_t j = 0; j < chart; ++j) {
                    const cplx ai = amp(buf, j);
                    if (std::norm(ai) * std::norm(ci) > kGaugeFloor) {
                        const auto jj = static_cast<Eigen::Index>(j);
                        P[jj] = unwrap_near(std::arg(ai * std::conj(ci)), P_old[jj]);
                    }
                }
                return make_sample(t, buf.data(), lam, P);
            };
            keep_going = observer(end, at);
        }

        // hand the gauge to the largest component once it becomes too small
        const cplx gn = amp(y1, gauge_);
        if (std::norm(gn) < config_.gauge_handoff_threshold * n2) {
            std::size_t best = 0;
            for (std::size_t k = 1; k < n_; ++k)
                if (std::norm(amp(y1, k)) > std::norm(amp(y1, best)))
                    best = k;
            if (best != gauge_) {
                gauge_ = best;
                ++gauge_switches_;
                step.mark_modified();  // the ledger rate depends on the gauge
            }
        }
        return keep_going ? StepVerdict::accept : StepVerdict::stop;
    };

    t_ = ode_.integrate(t_, t_end, y_, hook);
    return t_;
}

// ---------------------------------------------------------------------------

Trajectory evolve_quantum(const StateVector& initial, const Model& model, const Schedule& schedule, double t0,
                          double t1, const IntegratorConfig& config, const RecordOptions& record) {
    config.validate();
    if (initial.levels() != model.levels())
        throw InvalidParameter("state size does not match the model");
    QuantumFlow flow(model, schedule, config);
    flow.reset(initial, t0);
    const std::size_t g0 = flow.gauge();
    PhaseLedger start;
    start.lambda = std::arg(initial[g0]);
    flow.reset(initial, t0, start);

    Trajectory traj;
    TrajectoryBuilder builder(model, traj);
    builder.add(flow.current(), Representation::quantum);
    Recorder rec(record, t0, t1);
    rec.set_start(t0);
    auto emit = [&](const QuantumFlow::Sample& s) { builder.add(s, Representation::quantum); };
    flow.advance(t1, [&](const QuantumFlow::Sample& end, const QuantumFlow::Interpolator& at) {
        rec.on_step(end, at, emit);
        return true;
    });
    if (traj.times.back() != flow.time())
        builder.add(flow.current(), Representation::quantum);
    traj.gauge_switches = flow.gauge_switches();
    traj.max_norm_drift = flow.max_norm_drift();
    traj.final_norm_error = flow.norm_error();
    return traj;
}

Trajectory evolve_classical(const ProjectiveCoords& initial, const Model& model, const Schedule& schedule,
                            double t0, double t1, const IntegratorConfig& config, const RecordOptions& record,
                            double initial_phase) {
    config.validate();
    initial.validate();
    const std::size_t n = model.levels();
    const std::size_t m = n - 1;
    if (initial.dim() != m)
        throw InvalidParameter("coordinate size does not match the model");
    const double thr = config.pole_switch_threshold;
    const double dir = t1 >= t0 ? 1.0 : -1.0;

    std::vector<cplx> phi(n), hphi(n);
    OdeIntegrator ode(
        2 * m + 2,
        [&](double t, const double* y, double* dy) {
            const double R = schedule(t);
            double g[64];
            std::vector<double> gbuf;
            double* grad = g;
            if (2 * m > 64) {
                gbuf.resize(2 * m);
                grad = gbuf.data();
            }
            if (!model.gradient_raw(y, R, grad)) {
                std::fill(dy, dy + 2 * m + 2, NAN);
                return;
            }
            double aa = 0.0, rest = 1.0;
            for (std::size_t j = 0; j < m; ++j) {
                dy[j] = grad[m + j];
                dy[m + j] = -grad[j];
                aa -= y[j] * dy[m + j];
                rest -= y[j];
                phi[j] = std::polar(std::sqrt(std::max(y[j], 0.0)), y[m + j]);
            }
            phi[m] = std::sqrt(std::max(rest, 0.0));
            model.apply(phi.data(), R, hphi.data());
            double expect = 0.0;
            for (std::size_t k = 0; k < n; ++k)
                expect += (std::conj(phi[k]) * hphi[k]).real();
            dy[2 * m] = aa;
            dy[2 * m + 1] = -expect;
        },
        config.stepper());

    auto in_chart = [&](const double* y, double margin) {
        double rest = 1.0;
        for (std::size_t j = 0; j < m; ++j) {
            if (!(y[j] >= margin && y[j] <= 1.0 - margin))
                return false;
            rest -= y[j];
        }
        return rest >= margin;
    };

    double lambda_base = initial_phase;  // lambda = lambda_base + aa + dyn in the classical chart
    auto classical_sample = [&](double t, const double* y) {
        ProjectiveCoords c{RVector(static_cast<Eigen::Index>(m)), RVector(static_cast<Eigen::Index>(m))};
        for (std::size_t j = 0; j < m; ++j) {
            c.Q[static_cast<Eigen::Index>(j)] = std::clamp(y[j], 0.0, 1.0);
            c.P[static_cast<Eigen::Index>(j)] = y[m + j];
        }
        const double sumq = c.Q.sum();
        if (sumq > 1.0)
            c.Q /= sumq;
        const PhaseLedger led{lambda_base + y[2 * m] + y[2 * m + 1], y[2 * m], y[2 * m + 1]};
        StateVector s = reconstruct(c, led.lambda);
        return QuantumFlow::Sample{t, schedule(t), std::move(s), std::move(c), led};
    };

    Trajectory traj;
    TrajectoryBuilder builder(model, traj);
    Recorder rec(record, t0, t1);
    rec.set_start(t0);

    std::vector<double> y(2 * m + 2, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
        y[j] = initial.Q[static_cast<Eigen::Index>(j)];
        y[m + j] = initial.P[static_cast<Eigen::Index>(j)];
    }
    builder.add(classical_sample(t0, y.data()), Representation::classical);

    IntegratorConfig qconfig = config;
    qconfig.gauge_index = m;
    qconfig.gauge_handoff_threshold = std::min(config.gauge_handoff_threshold, 1e-12);
    QuantumFlow flow(model, schedule, qconfig);

    double t = t0;
    bool classical = in_chart(y.data(), thr);
    if (!classical)
        flow.reset(classical_sample(t0, y.data()).state, t0,
                   PhaseLedger{lambda_base, 0.0, 0.0}, initial.P);
    std::vector<double> buf(2 * m + 2);
    std::size_t qswitches = 0;
    while (dir * (t1 - t) > 0.0) {
        if (classical) {
            bool leave = false;
            StepHook hook = [&](DenseStep& step) {
                auto y1 = step.y1();
                double rest = 1.0;
                for (std::size_t j = 0; j < m; ++j) {
                    if (y1[j] < 0.0 || y1[j] > 1.0)
                        return StepVerdict::reject;
                    rest -= y1[j];
                }
                if (rest < 0.0)
                    return StepVerdict::reject;
                QuantumFlow::Interpolator at = [&](double tt) {
                    step.eval(tt, buf.data());
                    return classical_sample(tt, buf.data());
                };
                const QuantumFlow::Sample end = classical_sample(step.t1(), y1.data());
                rec.on_step(end, at, [&](const QuantumFlow::Sample& s) {
                    builder.add(s, Representation::classical);
                });
                leave = !in_chart(y1.data(), thr);
                return leave ? StepVerdict::stop : StepVerdict::accept;
            };
            t = ode.integrate(t, t1, y, hook);
            if (leave && dir * (t1 - t) > 0.0) {
                const auto s = classical_sample(t, y.data());
                flow.reset(s.state, t, s.ledger, s.coords.P);
                classical = false;
                ++traj.representation_switches;
            }
        } else {
            bool back = false;
            std::vector<double> probe(2 * m + 2);
            flow.advance(t1, [&](const QuantumFlow::Sample& end, const QuantumFlow::Interpolator& at) {
                rec.on_step(end, at, [&](const QuantumFlow::Sample& s) {
                    builder.add(s, Representation::quantum);
                });
                double rest = 1.0;
                bool inside = true;
                for (std::size_t j = 0; j < m; ++j) {
                    const double q = end.coords.Q[static_cast<Eigen::Index>(j)];
                    inside = inside && q >= 10.0 * thr && q <= 1.0 - 10.0 * thr;
                    rest -= q;
                }
                back = inside && rest >= 10.0 * thr;
                return !back;
            });
            t = flow.time();
            qswitches += flow.gauge_switches();
            if (back && dir * (t1 - t) > 0.0) {
                auto s = flow.current();
                const double lambda_c = unwrap_near(std::arg(s.state[m]), s.ledger.lambda);
                const double jump = lambda_c - s.ledger.lambda;
                for (std::size_t j = 0; j < m; ++j) {
                    y[j] = s.coords.Q[static_cast<Eigen::Index>(j)];
                    y[m + j] = s.coords.P[static_cast<Eigen::Index>(j)];
                }
                y[2 * m] = s.ledger.aa_integrand_accum + jump;
                y[2 * m + 1] = s.ledger.dynamical_accum;
                lambda_base = lambda_c - y[2 * m] - y[2 * m + 1];
                classical = true;
                ++traj.representation_switches;
            }
        }
    }
    // final sample
    QuantumFlow::Sample last = classical ? classical_sample(t, y.data()) : flow.current();
    if (traj.times.back() != t)
        builder.add(last, classical ? Representation::classical : Representation::quantum);
    traj.gauge_switches = qswitches;
    traj.max_norm_drift = flow.max_norm_drift();
    return traj;
}

// ---------------------------------------------------------------------------
// Period detection

double period_detect(const Trajectory& traj, double max_time) {
    if (traj.size() < 3)
        throw NotPeriodic("trajectory too short for period detection");
    const CMatrix rho0 = density(traj.states[0].amplitudes());
    const CMatrix drho0 = density_rate(traj.states[0].amplitudes(), traj.state_rates[0]);
    const double speed2 = frob(drho0, drho0);
    if (speed2 < 1e-24)
        throw NotPeriodic("initial point is stationary");
    const double t0 = traj.times[0];
    double excursion = 0.0;
    auto g_at = [&](std::size_t i) { return frob(density(traj.states[i].amplitudes()) - rho0, drho0); };
    auto gdot_at = [&](std::size_t i) {
        return frob(density_rate(traj.states[i].amplitudes(), traj.state_rates[i]), drho0);
    };
    double g_prev = 0.0, gd_prev = speed2;
    for (std::size_t i = 1; i < traj.size(); ++i) {
        if (traj.times[i] - t0 > max_time)
            break;
        const CMatrix d = density(traj.states[i].amplitudes()) - rho0;
        const double dist = std::sqrt(frob(d, d));
        excursion = std::max(excursion, dist);
        const double g = g_at(i), gd = gdot_at(i);
        if (g_prev < 0.0 && g >= 0.0) {
            const double prev_dist = std::sqrt(frob(density(traj.states[i - 1].amplitudes()) - rho0,
                                                    density(traj.states[i - 1].amplitudes()) - rho0));
            if (std::min(dist, prev_dist) < 0.05 * excursion + 1e-9) {
                // cubic Hermite root of g on [t_{i-1}, t_i]
                const double ta = traj.times[i - 1], tb = traj.times[i], h = tb - ta;
                auto herm = [&](double s) {
                    const double s1 = 1.0 - s;
                    return (1 + 2 * s) * s1 * s1 * g_prev + s * s1 * s1 * h * gd_prev + s * s * (3 - 2 * s) * g -
                           s * s * s1 * h * gd;
                };
                double lo = 0.0, hi = 1.0;
                for (int it = 0; it < 80; ++it) {
                    const double mid = 0.5 * (lo + hi);
                    if (herm(mid) < 0.0)
                        lo = mid;
                    else
                        hi = mid;
                }
                return ta + 0.5 * (lo + hi) * h - t0;
            }
        }
        g_prev = g;
        gd_prev = gd;
    }
    throw NotPeriodic("no return to the initial point within the trajectory");
}

double find_period(const StateVector& initial, const Model& model, double R, const IntegratorConfig& config,
                   double max_time) {
    config.validate();
    const CVector psi0 = initial.amplitudes();
    const CMatrix rho0 = density(psi0);
    const CVector rate0 = cplx(0.0, -1.0) * model.apply(initial, R);
    const CMatrix drho0 = density_rate(psi0, rate0);
    const double speed2 = frob(drho0, drho0);
    if (speed2 < 1e-24)
        throw NotPeriodic("initial point is stationary");

    auto section = [&](const StateVector& s) { return frob(density(s.amplitudes()) - rho0, drho0); };
    auto section_rate = [&](const StateVector& s) {
        const CVector r = cplx(0.0, -1.0) * model.apply(s, R);
        return frob(density_rate(s.amplitudes(), r), drho0);
    };

    QuantumFlow flow(model, constant_schedule(R), config);
    flow.reset(initial, 0.0);
    double g_prev = 0.0;
    double excursion = 0.0;
    double prev_dist = 0.0;
    double prev_t = 0.0;
    std::optional<double> tau;
    flow.advance(max_time, [&](const QuantumFlow::Sample& end, const QuantumFlow::Interpolator& at) {
        const CMatrix d = density(end.state.amplitudes()) - rho0;
        const double dist = std::sqrt(frob(d, d));
        excursion = std::max(excursion, dist);
        const double g = frob(d, drho0);
        if (g_prev < 0.0 && g >= 0.0 && std::min(dist, prev_dist) < 0.05 * excursion + 1e-9) {
            double a = prev_t, b = end.t;
            for (int it = 0; it < 100 && b - a > 1e-15 * b; ++it) {
                const double mid = 0.5 * (a + b);
                if (section(at(mid).state) < 0.0)
                    a = mid;
                else
                    b = mid;
            }
            tau = 0.5 * (a + b);
            return false;
        }
        g_prev = g;
        prev_dist = dist;
        prev_t = end.t;
        return true;
    });
    if (!tau)
        throw NotPeriodic("no return within max_time = " + std::to_string(max_time));

    // Newton refinement on g(tau) = 0 with exact integration to tau
    double t_est = *tau;
    for (int it = 0; it < 4; ++it) {
        QuantumFlow f(model, constant_schedule(R), config);
        f.reset(initial, 0.0);
        f.advance(t_est);
        const StateVector s = f.current().state;
        const double g = section(s);
        const double gd = section_rate(s);
        if (gd <= 0.0)
            break;
        const double dt = g / gd;
        t_est -= dt;
        if (std::abs(dt) < 1e-13 * std::max(1.0, t_est))
            break;
    }
    return t_est;
}

}  // namespace nlsa
