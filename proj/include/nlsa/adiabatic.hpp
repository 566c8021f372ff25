#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nlsa/dynamics.hpp"
#include "nlsa/model.hpp"
#include "nlsa/state.hpp"

namespace nlsa {

/// Endpoint |R| in units of max(c, v): below the first the ends do not count
/// as linear, below the second a sweep warns.
inline constexpr double kLinearEndpointRequired = 5.0;
inline constexpr double kLinearEndpointWarning = 20.0;

/// Where a sweep starts. Level populations refer to the eigenbasis of the
/// model's linear reference at R0, ascending in energy; each eigenvector is
/// phased so its largest component is real and positive.
struct InitialCondition {
    enum class Kind { label, state, populations };
    Kind kind = Kind::populations;
    std::string label;  ///< fixed-point label (assigned at SweepSpec::R_ref)
    std::optional<StateVector> state;
    std::vector<double> populations{1.0, 0.0};
    std::vector<double> phases;  ///< relative phase offsets per level, zero by default

    static InitialCondition eigenstate(std::string label);
    static InitialCondition explicit_state(StateVector s);
    static InitialCondition level_populations(std::vector<double> pops, std::vector<double> phases = {});
    /// Two-level shorthand: probability `upper` on the upper level.
    static InitialCondition upper_level(double upper, double phase = 0.0);
};

/// Linear ramp R(t) = R0 + sign(R1 - R0) alpha t, t in [0, |R1 - R0| / alpha].
struct SweepSpec {
    double R0 = -10.0;
    double R1 = 10.0;
    double alpha = 1e-4;
    InitialCondition initial{};
    std::size_t gamma_samples = 400;  ///< frozen-R orbits closed along the sweep
    double sample_dt = 0.0;  ///< record spacing in time; 0 picks it from the slowest period
    double omega_floor = 1e-3;
    double follow_tolerance = 0.05;
    double R_ref = -0.05;
    /// Orbits slower than this are treated as separatrix passages and skipped.
    double orbit_max_time = 200.0;

    void validate() const;
    double duration() const;
    double rate() const;  ///< signed dR/dt
    Schedule schedule() const;
};

struct SweepEvent {
    enum class Kind { tracking_lost, tracking_acquired, orbit_skipped };
    Kind kind;
    double t;
    double R;
    std::string detail;
};

std::string to_string(SweepEvent::Kind k);

/// Time series of one sweep plus endpoint bookkeeping.
///
/// populations: instantaneous-eigenbasis projections where the model is
/// linear (|R| >= 5 max(c, v)), bare |psi_k|^2 elsewhere. gamma_aa is the AA
/// phase of the frozen-R orbit through the current state, held between
/// orbit closures and unwrapped along the sweep. omega is the fundamental
/// frequency of the tracked fixed point (0 while none is tracked).
struct SweepRecord {
    SweepSpec spec;
    std::vector<double> t;
    std::vector<double> R;
    std::vector<RVector> populations;
    std::vector<double> gamma_aa;
    std::vector<double> orbit_omega;  ///< 2 pi / tau of the frozen orbit
    std::vector<double> omega;
    std::vector<double> distance;  ///< projective distance to the tracked fixed point
    std::vector<SweepEvent> events;
    std::vector<std::string> warnings;

    RVector initial_populations;  ///< eigenbasis projections at R0
    RVector final_populations;  ///< eigenbasis projections at R1
    /// Eigenbasis projections averaged over the frozen orbit at each end; these
    /// remove the fast oscillation and converge to the actions as |R| grows.
    RVector initial_mean_populations;
    RVector final_mean_populations;
    /// Upper-level action from the AA phase at each end (two-level only, NaN otherwise).
    double initial_action = 0.0;
    double final_action = 0.0;
    double gamma_start = 0.0;
    double gamma_end = 0.0;
    double omega_min = 0.0;
    bool omega_floor_hit = false;
    /// min(|R0|, |R1|) / max(c, v); infinite for linear models.
    double linear_margin = 0.0;
    double sample_dt = 0.0;
    double max_norm_drift = 0.0;
    std::size_t steps = 0;
    std::string tracked_label;  ///< label of the fixed point tracked at the start
    std::optional<StateVector> final_state;

    std::size_t size() const { return t.size(); }
};

/// Eigenvectors of the linear reference at R as columns, ascending energy.
CMatrix level_basis(const Model& model, double R);
RVector level_populations(const Model& model, const StateVector& state, double R);

/// Scale the endpoint |R| is compared to: max(c, v) for the two-level model,
/// 0 for linear models.
double nonlinearity_scale(const Model& model);

StateVector resolve_initial_state(const Model& model, const SweepSpec& spec);

/// Integrates the state while R ramps, tracking the fixed point its orbit
/// encircles. Warns when an endpoint is below 20 max(c, v).
SweepRecord sweep(const Model& model, const SweepSpec& spec, const IntegratorConfig& config = {});

struct TunnelingReport {
    /// |Delta| of the orbit-averaged upper-level population between the ends.
    double probability = 0.0;
    /// |Delta I| of the upper-level action (from the AA phase).
    double action_change = 0.0;
    /// |Delta p| of the instantaneous upper-level population.
    double population_change = 0.0;
    RVector delta_populations;
    double gamma_jump = 0.0;  ///< gamma_end - gamma_start
    double jump_over_2pi = 0.0;  ///< |gamma_jump| / 2 pi
};

/// Throws EndpointsNotLinear if an endpoint is below 5 max(c, v).
TunnelingReport tunneling_probability(const SweepRecord& record);

enum class FollowVerdict { followed, broke_down };
std::string to_string(FollowVerdict v);

struct FollowingResult {
    SweepRecord record;
    FollowVerdict verdict = FollowVerdict::followed;
    double R_break = 0.0;
    double t_break = 0.0;
    /// Slope of log(distance) where it grows through [0.01, 0.5] x tolerance; 0 if not measurable.
    double divergence_rate = 0.0;
};

/// Starts exactly on the eigenstate `label` and follows it through the sweep.
/// With stop_on_breakdown the integration ends at the first violation.
FollowingResult eigenstate_following(const std::string& label, const Model& model, SweepSpec spec,
                                     const IntegratorConfig& config = {}, bool stop_on_breakdown = true);

struct LadderRow {
    double alpha = 0.0;
    double max_action_drift = 0.0;  ///< max |gamma(R) - gamma(R0)| / 2 pi
    double endpoint_drift = 0.0;  ///< |I' - I|
    double population_drift = 0.0;  ///< max over levels of |p' - p|
    bool omega_floor_hit = false;
};

struct InvarianceReport {
    std::vector<LadderRow> rows;  ///< sorted by decreasing alpha
    bool monotone = false;  ///< max_action_drift decreases with alpha
    double order = 0.0;  ///< least-squares slope of log drift vs log alpha
};

InvarianceReport invariance_report(const std::vector<SweepRecord>& records);

/// Runs `spec` once per rate as independent jobs; results keep the order of `alphas`.
std::vector<SweepRecord> run_ladder(const Model& model, const SweepSpec& spec, const std::vector<double>& alphas,
                                    const IntegratorConfig& config = {});

/// Two-level mirror image: R -> -R and |a, b> -> |b, a>, i.e. p -> 1 - p.
SweepSpec mirror(const SweepSpec& spec, const Model& model);

}  // namespace nlsa
