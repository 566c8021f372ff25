#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nlsa/model.hpp"
#include "nlsa/state.hpp"

namespace nlsa {

enum class Stability { elliptic, hyperbolic, mixed, marginal };

std::string to_string(Stability s);

/// Stationary point of the canonical flow, i.e. a nonlinear eigenstate.
struct FixedPoint {
    ProjectiveCoords coords;  ///< P reported in [0, 2 pi)
    double R = 0.0;
    CVector eigenvalues;  ///< spectrum of the linearized flow
    Stability stability = Stability::marginal;
    double omega = 0.0;  ///< smallest |Im lambda| over elliptic pairs, 0 otherwise
    double kappa = 0.0;  ///< largest real part, 0 for elliptic points
    double chemical_potential = 0.0;  ///< E in H|Psi> = E|Psi>
    double total_energy = 0.0;  ///< H_cl
    double residual = 0.0;  ///< |grad H_cl|
    bool boundary = false;  ///< some population is exactly zero
    std::string label;

    StateVector state() const;
};

struct FixedPointOptions {
    int grid_q = 64;
    int grid_p = 64;
    double edge = 1e-4;  ///< populations sampled in (edge, 1 - edge)
    double newton_tol = 1e-12;
    int max_iterations = 100;
    double dedup_radius = 1e-6;
    /// Random Newton starts for N > 2 (grid_q * grid_p when 0).
    std::size_t random_seeds = 0;
    std::uint64_t seed = 1;
    double marginal_tol = 1e-8;
};

/// All distinct stationary points found from a grid of Newton starts, sorted
/// by (P, Q). Labels are left empty.
std::vector<FixedPoint> find_fixed_points(const Model& model, double R, const FixedPointOptions& options = {});

/// Newton refinement of a guess; nullopt when it fails to converge.
std::optional<ProjectiveCoords> refine_fixed_point(const Model& model, const ProjectiveCoords& guess, double R,
                                                   double tol = 1e-12, int max_iterations = 100);

/// Linearizes the flow at `coords` and classifies it. Throws NotStationary if
/// the gradient residual exceeds `residual_tol`.
FixedPoint classify(const Model& model, const ProjectiveCoords& coords, double R, double residual_tol = 1e-8,
                    double marginal_tol = 1e-8);

/// Same for a state with vanishing components, linearized in Cartesian
/// canonical coordinates around the largest component.
FixedPoint classify_state(const Model& model, const StateVector& state, double R, double residual_tol = 1e-8,
                          double marginal_tol = 1e-8);

/// <Psi|H(Psi)|Psi>, the Lagrange multiplier of a stationary state.
double chemical_potential(const Model& model, const StateVector& state, double R);

/// |H|Psi> - E|Psi>| with E the chemical potential.
double eigen_residual(const Model& model, const StateVector& state, double R);

/// Reference labels at one R: f1 the lowest elliptic point, f2 the highest,
/// f3, f5, ... the hyperbolic and other points by energy, f4, f6, ... the
/// remaining elliptic points by energy.
void assign_labels(std::vector<FixedPoint>& points);

// ---------------------------------------------------------------------------
// Continuation

struct ContinuationOptions {
    double R_min = -4.0;
    double R_max = 4.0;
    double R_ref = -0.05;  ///< labels are assigned here
    double ds = 0.01;
    double ds_min = 1e-10;
    double ds_max = 0.05;
    double newton_tol = 1e-12;
    std::size_t max_points = 200000;
    /// Stop when a population comes this close to a pole.
    double pole_margin = 1e-9;
    FixedPointOptions seeding{};
};

struct TurningPoint {
    double R = 0.0;
    ProjectiveCoords coords;
    double total_energy = 0.0;
    double chemical_potential = 0.0;
    double min_abs_eigenvalue = 0.0;
    std::size_t branch_a = 0;  ///< branch ending here
    std::size_t branch_b = 0;  ///< branch starting here
};

struct Branch {
    std::string label;
    Stability stability = Stability::marginal;  ///< majority stability along the branch
    std::vector<FixedPoint> points;  ///< ordered along arclength
};

struct BranchDiagram {
    std::vector<Branch> branches;
    std::vector<TurningPoint> turning_points;

    /// Fixed point with `label` at R, interpolated by Newton from the branch.
    std::optional<FixedPoint> at(const Model& model, const std::string& label, double R) const;
};

/// Pseudo-arclength continuation of every fixed point found at R_min, R_ref
/// and R_max. Curves are split into branches at turning points. Throws
/// StepCollapse if the step underflows ds_min.
BranchDiagram continue_branches(const Model& model, const ContinuationOptions& options = {});

/// Newton solve of {grad H_cl = 0, det Hess = 0} for (coords, R). Throws
/// NotStationary on failure.
TurningPoint solve_turning_point(const Model& model, const ProjectiveCoords& guess, double R_guess,
                                 double tol = 1e-12);

struct Collision {
    double R = 0.0;
    std::string elliptic_label;
    std::string hyperbolic_label;
    double min_abs_eigenvalue = 0.0;
};

/// Elliptic/hyperbolic branch pairs meeting at each turning point.
std::vector<Collision> detect_collision(const BranchDiagram& diagram);

/// Fixed point carrying `label` (assigned at R_ref) continued to R. Throws
/// LabelNotFound.
FixedPoint locate_label(const Model& model, const std::string& label, double R, double R_ref = -0.05);

}  // namespace nlsa
