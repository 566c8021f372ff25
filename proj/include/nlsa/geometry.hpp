#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nlsa/dynamics.hpp"
#include "nlsa/model.hpp"
#include "nlsa/state.hpp"

namespace nlsa {

enum class OrbitKind { libration, rotation };

std::string to_string(OrbitKind k);

/// One period of a fixed-R orbit with its geometric quantities.
///
/// Conventions: gamma_aa = int <Phi|i d/dt|Phi> dt = -oint Q dP (chart gauge),
/// action = |gamma_aa| / 2 pi for both kinds, orientation = sign(gamma_aa).
/// The P dQ form differs from -Q dP by the boundary term 2 pi winding Q(0).
struct Orbit {
    Trajectory trajectory;
    double R = 0.0;
    double tau = 0.0;
    double omega = 0.0;  ///< 2 pi / tau
    double action = 0.0;
    double aa_phase = 0.0;  ///< from the phase ledger
    double aa_phase_canonical = 0.0;  ///< -oint Q dP
    double loop_integral_PdQ = 0.0;  ///< oint P dQ
    OrbitKind kind = OrbitKind::libration;
    int winding = 0;  ///< P_1 winding per period
    std::vector<int> windings;  ///< per coordinate
    int orientation = 0;
    double closure_error = 0.0;
    /// Level fixing the overall phase in the ledger: the requested one unless it
    /// empties during the period, then the level that stays most populated; N if
    /// no single level works.
    std::size_t gauge_index = 0;

    /// gamma_aa reduced to (-pi, pi].
    double aa_phase_wrapped() const;
};

struct OrbitOptions {
    IntegratorConfig config{};
    double max_time = 1000.0;
    double closure_tol = 1e-6;
    std::size_t samples = 2048;  ///< stored samples per period
};

/// Finds the period of the orbit through `initial` and integrates exactly one
/// period. A stationary initial state yields a degenerate orbit with zero
/// action. Throws NotPeriodic or NotClosed.
Orbit trace_orbit(const Model& model, const StateVector& initial, double R, const OrbitOptions& options = {});

/// Ledger AA phase accumulated along a trajectory (last minus first sample).
double aa_phase(const Trajectory& traj);

/// -int Q . dP along a sampled trajectory (cubic Hermite + Gauss-Legendre).
double loop_integral_QdP(const Trajectory& traj);

/// I = |gamma_aa| / 2 pi. Throws UnsupportedTopology for N > 2 orbits whose
/// phases wind in more than one coordinate (not a single-action cycle).
double action(const Orbit& orbit);

/// Winding number of the orbit's (P_1, Q_1) loop around `point` (P taken
/// modulo 2 pi nearest to the loop). Nonzero means the orbit encircles it.
int winding_number(const Orbit& orbit, const ProjectiveCoords& point);

/// I_n = |<e_n|Psi>|^2 over the eigenbasis of the linear model at R (levels
/// in ascending energy), dropping `gauge_level` (default: the highest).
/// Throws DegenerateSpectrum if a level spacing is below 1e-10.
RVector linear_actions(const StateVector& state, const LinearModel& model, double R,
                       std::optional<std::size_t> gauge_level = std::nullopt);

/// Same for the eigenbasis of an arbitrary Hermitian matrix.
RVector linear_actions(const StateVector& state, const CMatrix& hamiltonian,
                       std::optional<std::size_t> gauge_level = std::nullopt);

}  // namespace nlsa
