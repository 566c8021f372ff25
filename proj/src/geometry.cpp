#include "nlsa/geometry.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "nlsa/errors.hpp"

namespace nlsa {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// 4-point Gauss-Legendre on [0, 1]
constexpr double kGaussNodes[4] = {0.0694318442029737, 0.3300094782075719, 0.6699905217924281,
                                   0.9305681557970263};
constexpr double kGaussWeights[4] = {0.1739274225687269, 0.3260725774312731, 0.3260725774312731,
                                     0.1739274225687269};

double hermite(double s, double x0, double m0, double x1, double m1) {
    const double s2 = s * s, s3 = s2 * s;
    return (2 * s3 - 3 * s2 + 1) * x0 + (s3 - 2 * s2 + s) * m0 + (-2 * s3 + 3 * s2) * x1 + (s3 - s2) * m1;
}

double hermite_ds(double s, double x0, double m0, double x1, double m1) {
    const double s2 = s * s;
    return (6 * s2 - 6 * s) * x0 + (3 * s2 - 4 * s + 1) * m0 + (-6 * s2 + 6 * s) * x1 + (3 * s2 - 2 * s) * m1;
}

}  // namespace

std::string to_string(OrbitKind k) { return k == OrbitKind::libration ? "libration" : "rotation"; }

double Orbit::aa_phase_wrapped() const { return wrap_angle(aa_phase); }

double aa_phase(const Trajectory& traj) {
    if (traj.empty())
        return 0.0;
    return traj.ledger.back().aa_integrand_accum - traj.ledger.front().aa_integrand_accum;
}

double loop_integral_QdP(const Trajectory& traj) {
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < traj.size(); ++i) {
        const double h = traj.times[i + 1] - traj.times[i];
        const auto& a = traj.coords[i];
        const auto& b = traj.coords[i + 1];
        const auto& va = traj.velocities[i];
        const auto& vb = traj.velocities[i + 1];
        for (Eigen::Index j = 0; j < a.Q.size(); ++j) {
            double acc = 0.0;
            for (int k = 0; k < 4; ++k) {
                const double s = kGaussNodes[k];
                const double q = hermite(s, a.Q[j], h * va.Q[j], b.Q[j], h * vb.Q[j]);
                const double dp = hermite_ds(s, a.P[j], h * va.P[j], b.P[j], h * vb.P[j]);
                acc += kGaussWeights[k] * q * dp;
            }
            total -= acc;
        }
    }
    return total;
}

Orbit trace_orbit(const Model& model, const StateVector& initial, double R, const OrbitOptions& options) {
    options.config.validate();
    Orbit orbit;
    orbit.R = R;
    const std::size_t n = model.levels();
    const CVector rate = cplx(0.0, -1.0) * model.apply(initial, R);
    const double E = initial.amplitudes().dot(rate * cplx(0.0, 1.0)).real();
    // projective speed: component of dPsi/dt orthogonal to Psi
    const double speed = (rate + cplx(0.0, 1.0) * E * initial.amplitudes()).norm();
    if (speed < 1e-12) {
        orbit.trajectory =
            evolve_quantum(initial, model, constant_schedule(R), 0.0, 0.0, options.config, {RecordMode::final_only});
        orbit.gauge_index = options.config.gauge_index.value_or(n - 1);
        orbit.windings.assign(n - 1, 0);
        return orbit;
    }
    orbit.tau = find_period(initial, model, R, options.config, options.max_time);
    orbit.omega = kTwoPi / orbit.tau;
    // uniform dense samples keep the Hermite loop quadrature well below the ledger accuracy
    const RecordOptions rec{RecordMode::uniform, orbit.tau / static_cast<double>(options.samples)};
    orbit.trajectory = evolve_quantum(initial, model, constant_schedule(R), 0.0, orbit.tau, options.config, rec);
    orbit.gauge_index = options.config.gauge_index.value_or(n - 1);
    if (initial.population(orbit.gauge_index) < options.config.gauge_handoff_threshold ||
        orbit.trajectory.gauge_switches > 0) {
        // a ledger that changes gauge mid-period is not a loop integral; redo it
        // on the level that stays most populated
        RVector min_pop = RVector::Constant(static_cast<Eigen::Index>(n), 1.0);
        for (const auto& s : orbit.trajectory.states)
            min_pop = min_pop.cwiseMin(s.amplitudes().cwiseAbs2());
        Eigen::Index best = 0;
        min_pop.maxCoeff(&best);
        IntegratorConfig cfg = options.config;
        cfg.gauge_index = static_cast<std::size_t>(best);
        orbit.trajectory = evolve_quantum(initial, model, constant_schedule(R), 0.0, orbit.tau, cfg, rec);
        orbit.gauge_index = orbit.trajectory.gauge_switches > 0 ? n : static_cast<std::size_t>(best);
    }
    const Trajectory& tr = orbit.trajectory;

    const auto& c0 = tr.coords.front();
    const auto& c1 = tr.coords.back();
    orbit.windings.resize(n - 1);
    double closure = 0.0;
    for (Eigen::Index j = 0; j < c0.Q.size(); ++j) {
        const double dP = c1.P[j] - c0.P[j];
        const int w = static_cast<int>(std::lround(dP / kTwoPi));
        orbit.windings[static_cast<std::size_t>(j)] = w;
        closure = std::max(closure, std::abs(c1.Q[j] - c0.Q[j]));
        closure = std::max(closure, std::abs(dP - kTwoPi * w));
    }
    closure = std::max(closure, projective_distance(tr.states.front(), tr.states.back()));
    orbit.closure_error = closure;
    if (closure > options.closure_tol)
        throw NotClosed("orbit does not close after one period: error " + std::to_string(closure));
    orbit.winding = orbit.windings.front();
    orbit.kind = orbit.winding == 0 ? OrbitKind::libration : OrbitKind::rotation;

    orbit.aa_phase = aa_phase(tr);
    orbit.aa_phase_canonical = loop_integral_QdP(tr);
    double boundary = 0.0;
    for (Eigen::Index j = 0; j < c0.Q.size(); ++j)
        boundary += kTwoPi * orbit.windings[static_cast<std::size_t>(j)] * c0.Q[j];
    orbit.loop_integral_PdQ = orbit.aa_phase_canonical + boundary;
    orbit.orientation = orbit.aa_phase_canonical > 0.0 ? 1 : (orbit.aa_phase_canonical < 0.0 ? -1 : 0);
    orbit.action = action(orbit);
    return orbit;
}

double action(const Orbit& orbit) {
    int winding_coords = 0;
    for (int w : orbit.windings)
        winding_coords += w != 0;
    if (winding_coords > 1)
        throw UnsupportedTopology("orbit winds in more than one phase; not a single-action cycle");
    return std::abs(orbit.aa_phase_canonical) / kTwoPi;
}

int winding_number(const Orbit& orbit, const ProjectiveCoords& point) {
    const auto& tr = orbit.trajectory;
    if (tr.size() < 3)
        return 0;
    double mean_P = 0.0;
    for (const auto& c : tr.coords)
        mean_P += c.P[0];
    mean_P /= static_cast<double>(tr.size());
    const double px = unwrap_near(point.P[0], mean_P), py = point.Q[0];
    double total = 0.0;
    for (std::size_t i = 0; i < tr.size(); ++i) {
        const auto& a = tr.coords[i];
        const auto& b = tr.coords[(i + 1) % tr.size()];
        const double a1 = std::atan2(a.Q[0] - py, a.P[0] - px);
        const double a2 = std::atan2(b.Q[0] - py, b.P[0] - px);
        total += wrap_angle(a2 - a1);
    }
    return static_cast<int>(std::lround(total / kTwoPi));
}

RVector linear_actions(const StateVector& state, const CMatrix& hamiltonian, std::optional<std::size_t> gauge_level) {
    const std::size_t n = state.levels();
    if (static_cast<std::size_t>(hamiltonian.rows()) != n || hamiltonian.rows() != hamiltonian.cols())
        throw InvalidParameter("Hamiltonian size does not match the state");
    if (hermiticity_defect(hamiltonian) > 1e-12)
        throw NonHermitian("linear_actions needs a Hermitian matrix");
    const std::size_t g = gauge_level.value_or(n - 1);
    if (g >= n)
        throw InvalidParameter("gauge level out of range");
    Eigen::SelfAdjointEigenSolver<CMatrix> es(hamiltonian);
    const RVector& e = es.eigenvalues();
    for (Eigen::Index k = 0; k + 1 < e.size(); ++k)
        if (e[k + 1] - e[k] < 1e-10)
            throw DegenerateSpectrum("level spacing below 1e-10");
    const CVector c = es.eigenvectors().adjoint() * state.amplitudes();
    RVector I(static_cast<Eigen::Index>(n - 1));
    for (std::size_t j = 0; j + 1 < n; ++j)
        I[static_cast<Eigen::Index>(j)] = std::norm(c[static_cast<Eigen::Index>(level_of(j, g))]);
    return I;
}

RVector linear_actions(const StateVector& state, const LinearModel& model, double R,
                       std::optional<std::size_t> gauge_level) {
    return linear_actions(state, model.matrix(R), gauge_level);
}

}  // namespace nlsa
