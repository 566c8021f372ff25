#include "nlsa/state.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "nlsa/errors.hpp"

namespace nlsa {

StateVector::StateVector(CVector amplitudes, double tol) : amps_(std::move(amplitudes)) {
    if (amps_.size() < 2)
        throw InvalidParameter("state needs at least two levels");
    const double n2 = amps_.squaredNorm();
    if (!std::isfinite(n2) || std::abs(n2 - 1.0) > tol)
        throw InvalidParameter("state is not normalized: |psi|^2 = " + std::to_string(n2));
}

StateVector StateVector::normalized(CVector amplitudes) {
    if (amplitudes.size() < 2)
        throw InvalidParameter("state needs at least two levels");
    const double n = amplitudes.norm();
    if (!(n > 0.0) || !std::isfinite(n))
        throw InvalidParameter("cannot normalize a zero or non-finite state");
    amplitudes /= n;
    return StateVector(std::move(amplitudes), Unchecked{});
}

StateVector StateVector::rotated(double theta) const {
    return StateVector(amps_ * std::polar(1.0, theta), Unchecked{});
}

void ProjectiveCoords::validate(double tol) const {
    if (Q.size() != P.size())
        throw InvalidParameter("Q and P must have equal length");
    if (Q.size() < 1)
        throw InvalidParameter("coordinates need at least one (Q, P) pair");
    for (Eigen::Index k = 0; k < Q.size(); ++k) {
        if (!(Q[k] >= -tol && Q[k] <= 1.0 + tol) || !std::isfinite(P[k]))
            throw InvalidParameter("population Q[" + std::to_string(k) + "] = " + std::to_string(Q[k]) +
                                   " outside [0, 1]");
    }
    if (Q.sum() > 1.0 + tol)
        throw InvalidParameter("populations sum to more than one");
}

Reduction reduce(const StateVector& state, std::size_t gauge_index, double floor) {
    const std::size_t n = state.levels();
    if (gauge_index >= n)
        throw InvalidParameter("gauge index out of range");
    const cplx g = state[gauge_index];
    if (std::norm(g) < floor)
        throw GaugeSingular("gauge component " + std::to_string(gauge_index) + " has |psi|^2 = " +
                            std::to_string(std::norm(g)) + "; switch gauge index");
    const double lambda = std::arg(g);
    Reduction r;
    r.overall_phase = lambda;
    r.coords.Q.resize(static_cast<Eigen::Index>(n - 1));
    r.coords.P.resize(static_cast<Eigen::Index>(n - 1));
    for (std::size_t j = 0; j + 1 < n; ++j) {
        const cplx a = state[level_of(j, gauge_index)];
        const auto jj = static_cast<Eigen::Index>(j);
        r.coords.Q[jj] = std::norm(a);
        // relative phase arg(a / g) taken in (-pi, pi]
        r.coords.P[jj] = std::norm(a) > 0.0 ? std::arg(a * std::conj(g)) : 0.0;
    }
    return r;
}

Reduction reduce(const StateVector& state) { return reduce(state, state.levels() - 1); }

StateVector reconstruct(const ProjectiveCoords& coords, double overall_phase, std::size_t gauge_index) {
    coords.validate();
    const std::size_t n = coords.dim() + 1;
    if (gauge_index >= n)
        throw InvalidParameter("gauge index out of range");
    CVector amps(static_cast<Eigen::Index>(n));
    double rest = 1.0;
    for (std::size_t j = 0; j + 1 < n; ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        const double q = std::clamp(coords.Q[jj], 0.0, 1.0);
        rest -= q;
        amps[static_cast<Eigen::Index>(level_of(j, gauge_index))] =
            std::polar(std::sqrt(q), coords.P[jj] + overall_phase);
    }
    amps[static_cast<Eigen::Index>(gauge_index)] = std::polar(std::sqrt(std::max(rest, 0.0)), overall_phase);
    return StateVector(std::move(amps));
}

StateVector reconstruct(const ProjectiveCoords& coords, double overall_phase) {
    return reconstruct(coords, overall_phase, coords.dim());
}

double aa_integrand(const StateVector& state, const CVector& time_derivative, std::size_t gauge_index) {
    const cplx g = state[gauge_index];
    if (std::norm(g) < kGaugeFloor)
        throw GaugeSingular("gauge component vanishes");
    const cplx gdot = time_derivative[static_cast<Eigen::Index>(gauge_index)];
    const double lambda_dot = (gdot / g).imag();
    // <Psi|i dPsi/dt> is real for norm-preserving evolution
    const cplx overlap = state.amplitudes().dot(time_derivative);
    return (cplx(0.0, 1.0) * overlap).real() + lambda_dot;
}

double aa_integrand_canonical(const ProjectiveCoords& coords, const RVector& dP_dt) {
    return -coords.Q.dot(dP_dt);
}

ProjectiveCoords coords_velocity(const StateVector& state, const CVector& time_derivative,
                                 std::size_t gauge_index) {
    const std::size_t n = state.levels();
    const cplx g = state[gauge_index];
    if (std::norm(g) < kGaugeFloor)
        throw GaugeSingular("gauge component vanishes");
    const double lambda_dot = (time_derivative[static_cast<Eigen::Index>(gauge_index)] / g).imag();
    ProjectiveCoords v;
    v.Q.resize(static_cast<Eigen::Index>(n - 1));
    v.P.resize(static_cast<Eigen::Index>(n - 1));
    for (std::size_t j = 0; j + 1 < n; ++j) {
        const auto k = static_cast<Eigen::Index>(level_of(j, gauge_index));
        const auto jj = static_cast<Eigen::Index>(j);
        const cplx a = state.amplitudes()[k];
        const cplx adot = time_derivative[k];
        v.Q[jj] = 2.0 * (std::conj(a) * adot).real();
        v.P[jj] = std::norm(a) > kGaugeFloor ? (adot / a).imag() - lambda_dot : 0.0;
    }
    return v;
}

double projective_distance(const StateVector& a, const StateVector& b) {
    const double overlap = std::norm(a.amplitudes().dot(b.amplitudes()));
    return std::sqrt(std::max(0.0, 1.0 - overlap));
}

double wrap_angle(double x) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    x = std::fmod(x, two_pi);
    if (x <= -std::numbers::pi)
        x += two_pi;
    else if (x > std::numbers::pi)
        x -= two_pi;
    return x;
}

double unwrap_near(double x, double reference) { return reference + wrap_angle(x - reference); }

}  // namespace nlsa
