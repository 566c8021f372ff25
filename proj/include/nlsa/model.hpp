#pragma once

#include <cstddef>
#include <string>

#include "nlsa/state.hpp"

namespace nlsa {

/// dH_cl/dQ and dH_cl/dP in the canonical chart.
struct CanonicalGradient {
    RVector dQ;
    RVector dP;
};

/// A nonlinear Hamiltonian H(|Psi>, <Psi|, R) with global phase symmetry.
///
/// The canonical chart always uses the last level as gauge. Flattened phase
/// space vectors are ordered y = (Q_1..Q_m, P_1..P_m) with m = N - 1; Hessians
/// use the same ordering.
class Model {
public:
    virtual ~Model() = default;

    virtual std::size_t levels() const = 0;
    virtual std::string name() const = 0;

    /// Total energy (the functional whose variation gives H|Psi>).
    virtual double total_energy(const CVector& psi, double R) const = 0;
    double total_energy(const StateVector& state, double R) const { return total_energy(state.amplitudes(), R); }

    /// out = H(Psi; R) Psi. Must not allocate; `out` may not alias `psi`.
    virtual void apply(const cplx* psi, double R, cplx* out) const = 0;
    CVector apply(const StateVector& state, double R) const;

    /// Hermitian matrix whose eigenbasis defines energy levels at the linear ends.
    virtual CMatrix linear_reference(double R) const = 0;

    virtual double classical_hamiltonian(const ProjectiveCoords& coords, double R) const;

    /// Throws CoordinateSingular when any population is within 1e-9 of a pole.
    CanonicalGradient gradient(const ProjectiveCoords& coords, double R) const;

    /// Unchecked gradient of the flattened chart point `y` into `out`.
    /// Returns false if y lies outside the chart (negative population etc).
    virtual bool gradient_raw(const double* y, double R, double* out) const;

    virtual RMatrix hessian(const ProjectiveCoords& coords, double R) const;

    /// d(gradient)/dR in flattened ordering.
    virtual RVector gradient_dR(const ProjectiveCoords& coords, double R) const;

    /// Absolute step of the finite-difference Hessian fallback.
    static constexpr double kHessianStep = 1e-5;
    /// Populations closer than this to 0 or 1 make the chart gradient singular.
    static constexpr double kPoleGuard = 1e-9;
};

/// Parameters of the nonlinear two-level model.
struct TwoLevelParams {
    double c = 0.0;  ///< interaction strength, >= 0
    double v = 1.0;  ///< coupling strength, > 0
};

/// H = (R/2) sz - (c/2) <sz> sz + (v/2) sx on |Psi> = col(a, b).
///
/// Canonical pair: p = |a|^2, q = arg(a) - arg(b).
/// H_cl = v sqrt(p(1-p)) cos q + (R/2)(2p-1) - (c/4)(2p-1)^2.
class TwoLevelModel final : public Model {
public:
    explicit TwoLevelModel(TwoLevelParams params);
    TwoLevelModel(double c, double v) : TwoLevelModel(TwoLevelParams{c, v}) {}

    const TwoLevelParams& params() const { return params_; }
    double c() const { return params_.c; }
    double v() const { return params_.v; }

    std::size_t levels() const override { return 2; }
    std::string name() const override { return "two-level"; }
    double total_energy(const CVector& psi, double R) const override;
    using Model::total_energy;
    void apply(const cplx* psi, double R, cplx* out) const override;
    using Model::apply;
    CMatrix linear_reference(double R) const override;

    double classical_hamiltonian(const ProjectiveCoords& coords, double R) const override;
    bool gradient_raw(const double* y, double R, double* out) const override;
    RMatrix hessian(const ProjectiveCoords& coords, double R) const override;
    RVector gradient_dR(const ProjectiveCoords& coords, double R) const override;

    double hamiltonian(double q, double p, double R) const;
    /// Returns (dH/dq, dH/dp); throws CoordinateSingular within 1e-9 of p in {0, 1}.
    std::pair<double, double> grad(double q, double p, double R) const;

private:
    TwoLevelParams params_;
};

/// Linear N-level model with H(R) = H0 + R H1.
class LinearModel final : public Model {
public:
    /// Throws NonHermitian if either matrix deviates from its adjoint by more than 1e-12.
    LinearModel(CMatrix H0, CMatrix H1);
    explicit LinearModel(CMatrix H0);

    /// Two-level linear model (R/2) sz + (v/2) sx, the c = 0 case of TwoLevelModel.
    static LinearModel two_level(double v);

    const CMatrix& h0() const { return h0_; }
    const CMatrix& h1() const { return h1_; }
    CMatrix matrix(double R) const { return h0_ + R * h1_; }

    std::size_t levels() const override { return static_cast<std::size_t>(h0_.rows()); }
    std::string name() const override { return "linear"; }
    double total_energy(const CVector& psi, double R) const override;
    using Model::total_energy;
    void apply(const cplx* psi, double R, cplx* out) const override;
    using Model::apply;
    CMatrix linear_reference(double R) const override { return matrix(R); }

private:
    CMatrix h0_;
    CMatrix h1_;
};

/// max |A - A^dagger| over the entries.
double hermiticity_defect(const CMatrix& A);

}  // namespace nlsa
