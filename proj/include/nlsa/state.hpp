#pragma once

#include <complex>
#include <cstddef>

#include <Eigen/Dense>

namespace nlsa {

using cplx = std::complex<double>;
using CVector = Eigen::VectorXcd;
using RVector = Eigen::VectorXd;
using RMatrix = Eigen::MatrixXd;
using CMatrix = Eigen::MatrixXcd;

/// Floor on |psi_g|^2 below which the overall phase is not defined.
inline constexpr double kGaugeFloor = 1e-14;

/// Unit-norm vector of N >= 2 complex amplitudes.
class StateVector {
public:
    /// Takes amplitudes that are already normalized to within `tol`.
    explicit StateVector(CVector amplitudes, double tol = 1e-12);

    /// Rescales arbitrary nonzero amplitudes to unit norm.
    static StateVector normalized(CVector amplitudes);

    std::size_t levels() const { return static_cast<std::size_t>(amps_.size()); }
    const CVector& amplitudes() const { return amps_; }
    cplx operator[](std::size_t k) const { return amps_[static_cast<Eigen::Index>(k)]; }
    double population(std::size_t k) const { return std::norm((*this)[k]); }

    /// Same projective state with a global phase factor e^{i theta}.
    StateVector rotated(double theta) const;

private:
    struct Unchecked {};
    StateVector(CVector amplitudes, Unchecked) : amps_(std::move(amplitudes)) {}

    CVector amps_;
};

/// Populations Q and relative phases P of the N-1 non-gauge levels.
///
/// Entry j refers to the j-th level in increasing order with the gauge level
/// skipped. P is kept unwrapped.
struct ProjectiveCoords {
    RVector Q;
    RVector P;

    std::size_t dim() const { return static_cast<std::size_t>(Q.size()); }
    /// Population of the gauge level, 1 - sum(Q).
    double gauge_population() const { return 1.0 - Q.sum(); }
    /// Throws InvalidParameter unless 0 <= Q_k <= 1 and sum(Q) <= 1 (within tol).
    void validate(double tol = 1e-12) const;
};

/// Overall phase and its two contributions along a trajectory.
struct PhaseLedger {
    double lambda = 0.0;
    double aa_integrand_accum = 0.0;
    double dynamical_accum = 0.0;
};

struct Reduction {
    ProjectiveCoords coords;
    double overall_phase = 0.0;
};

/// Level index of the non-gauge coordinate j.
inline std::size_t level_of(std::size_t j, std::size_t gauge_index) {
    return j < gauge_index ? j : j + 1;
}

Reduction reduce(const StateVector& state, std::size_t gauge_index, double floor = kGaugeFloor);
Reduction reduce(const StateVector& state);

StateVector reconstruct(const ProjectiveCoords& coords, double overall_phase, std::size_t gauge_index);
StateVector reconstruct(const ProjectiveCoords& coords, double overall_phase = 0.0);

/// <Phi|i d/dt|Phi> for the gauge-fixed state Phi = e^{-i lambda} Psi,
/// given Psi and dPsi/dt.
double aa_integrand(const StateVector& state, const CVector& time_derivative, std::size_t gauge_index);

/// The same quantity from canonical coordinates: -Q . dP/dt.
double aa_integrand_canonical(const ProjectiveCoords& coords, const RVector& dP_dt);

/// Time derivatives (dQ/dt, dP/dt) of the coordinates induced by dPsi/dt.
ProjectiveCoords coords_velocity(const StateVector& state, const CVector& time_derivative,
                                 std::size_t gauge_index);

/// sqrt(1 - |<a|b>|^2): gauge invariant distance between projective states.
double projective_distance(const StateVector& a, const StateVector& b);

/// Wraps an angle to (-pi, pi].
double wrap_angle(double x);

/// Value congruent to `x` mod 2 pi that is closest to `reference`.
double unwrap_near(double x, double reference);

}  // namespace nlsa
