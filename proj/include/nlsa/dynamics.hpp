#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "nlsa/integrator.hpp"
#include "nlsa/model.hpp"
#include "nlsa/state.hpp"

namespace nlsa {

struct IntegratorConfig {
    Method method = Method::dopri5;
    double rtol = 1e-10;
    double atol = 1e-12;
    double step = 1e-3;  ///< fixed step for rk4
    bool renormalize = true;
    /// Classical chart is abandoned when a population leaves [thr, 1 - thr].
    double pole_switch_threshold = 1e-6;
    /// Quantum gauge is handed to the largest component when |psi_g|^2 drops below this.
    double gauge_handoff_threshold = 1e-6;
    /// Initial gauge level for the phase ledger; defaults to the last level.
    std::optional<std::size_t> gauge_index;

    void validate() const;
    StepperOptions stepper() const;
};

/// Control parameter as a function of time.
using Schedule = std::function<double(double)>;
Schedule constant_schedule(double R);
Schedule linear_ramp(double R0, double alpha);

enum class RecordMode { every_step, uniform, final_only };

struct RecordOptions {
    RecordMode mode = RecordMode::every_step;
    double dt = 0.0;  ///< sample spacing for RecordMode::uniform
};

enum class Representation : std::uint8_t { quantum, classical };

/// Sampled solution. Coordinates always use the chart gauge (last level) with
/// P unwrapped along the path.
struct Trajectory {
    std::vector<double> times;
    std::vector<double> R;
    std::vector<StateVector> states;
    std::vector<CVector> state_rates;  ///< dPsi/dt = -i H Psi at each sample
    std::vector<ProjectiveCoords> coords;
    std::vector<ProjectiveCoords> velocities;
    std::vector<PhaseLedger> ledger;
    std::vector<double> energies;
    std::vector<Representation> representation;
    std::size_t gauge_switches = 0;
    std::size_t representation_switches = 0;
    /// Largest per-step |<Psi|Psi> - 1| before renormalization.
    double max_norm_drift = 0.0;
    /// |<Psi|Psi> - 1| at the end when renormalization is off.
    double final_norm_error = 0.0;

    std::size_t size() const { return times.size(); }
    bool empty() const { return times.empty(); }
};

/// Integrates i d|Psi>/dt = H(Psi, R(t)) |Psi> over [t0, t1].
Trajectory evolve_quantum(const StateVector& initial, const Model& model, const Schedule& schedule, double t0,
                          double t1, const IntegratorConfig& config, const RecordOptions& record = {});

/// Integrates dQ/dt = dH_cl/dP, dP/dt = -dH_cl/dQ over [t0, t1], switching to
/// the quantum representation near population poles.
Trajectory evolve_classical(const ProjectiveCoords& initial, const Model& model, const Schedule& schedule,
                            double t0, double t1, const IntegratorConfig& config, const RecordOptions& record = {},
                            double initial_phase = 0.0);

/// Period of a fixed-R trajectory from its first return through the section
/// normal to the flow at the initial point. Throws NotPeriodic.
double period_detect(const Trajectory& traj, double max_time = std::numeric_limits<double>::infinity());

/// Integrates from `initial` at fixed R until the first return and refines the
/// period by Newton iteration on the section function. Throws NotPeriodic if
/// no return happens within max_time.
double find_period(const StateVector& initial, const Model& model, double R, const IntegratorConfig& config,
                   double max_time);

/// Streaming propagator behind evolve_quantum; exposed for long sweeps that
/// must not store every sample.
class QuantumFlow {
public:
    struct Sample {
        double t;
        double R;
        StateVector state;
        ProjectiveCoords coords;
        PhaseLedger ledger;
    };

    QuantumFlow(const Model& model, Schedule schedule, const IntegratorConfig& config);
    QuantumFlow(const QuantumFlow&) = delete;
    QuantumFlow& operator=(const QuantumFlow&) = delete;

    void reset(const StateVector& state, double t, const PhaseLedger& ledger = {},
               const std::optional<RVector>& P_hint = std::nullopt);

    double time() const { return t_; }
    Sample current() const;
    std::size_t gauge() const { return gauge_; }
    std::size_t gauge_switches() const { return gauge_switches_; }
    double max_norm_drift() const { return max_drift_; }
    double norm_error() const;
    const OdeIntegrator& integrator() const { return ode_; }

    /// Observer receives the step and an interpolation function over it;
    /// returning false stops the flow after that step.
    using Interpolator = std::function<Sample(double t)>;
    using Observer = std::function<bool(const Sample& end, const Interpolator& at)>;
    double advance(double t_end, const Observer& observer = {});

    /// Forces the gauge back to `level` if its population exceeds `min_population`.
    void prefer_gauge(std::size_t level, double min_population);

private:
    Sample make_sample(double t, const double* y, double lambda, const RVector& P) const;

    const Model& model_;
    Schedule schedule_;
    IntegratorConfig config_;
    std::size_t n_;
    std::size_t gauge_;
    std::size_t gauge_switches_ = 0;
    double t_ = 0.0;
    double lambda_ = 0.0;
    double max_drift_ = 0.0;
    RVector P_;
    std::vector<double> y_;
    std::vector<cplx> psi_buf_, hpsi_buf_;
    OdeIntegrator ode_;
};

}  // namespace nlsa
