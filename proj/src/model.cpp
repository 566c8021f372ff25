#include "nlsa/model.hpp"

#include <cmath>
#include <vector>

#include "nlsa/errors.hpp"

namespace nlsa {

namespace {

RVector flatten(const ProjectiveCoords& c) {
    RVector y(2 * c.Q.size());
    y << c.Q, c.P;
    return y;
}

ProjectiveCoords unflatten(const RVector& y) {
    const Eigen::Index m = y.size() / 2;
    return ProjectiveCoords{y.head(m), y.tail(m)};
}

void check_chart(const ProjectiveCoords& coords) {
    coords.validate();
    const double qn = coords.gauge_population();
    bool singular = qn < Model::kPoleGuard;
    for (Eigen::Index k = 0; k < coords.Q.size(); ++k)
        singular = singular || coords.Q[k] < Model::kPoleGuard;
    if (singular)
        throw CoordinateSingular("canonical gradient is singular at a population pole");
}

}  // namespace

CVector Model::apply(const StateVector& state, double R) const {
    CVector out(static_cast<Eigen::Index>(levels()));
    apply(state.amplitudes().data(), R, out.data());
    return out;
}

double Model::classical_hamiltonian(const ProjectiveCoords& coords, double R) const {
    return total_energy(reconstruct(coords, 0.0).amplitudes(), R);
}

CanonicalGradient Model::gradient(const ProjectiveCoords& coords, double R) const {
    check_chart(coords);
    const RVector y = flatten(coords);
    RVector g(y.size());
    gradient_raw(y.data(), R, g.data());
    const Eigen::Index m = coords.Q.size();
    return {g.head(m), g.tail(m)};
}

bool Model::gradient_raw(const double* y, double R, double* out) const {
    // dH = 2 Re sum_k (H Phi)_k^* dPhi_k with H Phi = dH/d<Phi|
    const std::size_t n = levels();
    const std::size_t m = n - 1;
    std::vector<cplx> phi(n), hphi(n);
    double rest = 1.0;
    for (std::size_t j = 0; j < m; ++j) {
        if (!(y[j] > 0.0))
            return false;
        rest -= y[j];
        phi[j] = std::polar(std::sqrt(y[j]), y[m + j]);
    }
    if (!(rest > 0.0))
        return false;
    phi[m] = std::sqrt(rest);
    apply(phi.data(), R, hphi.data());
    const double gauge_term = (std::conj(hphi[m]) * phi[m]).real() / rest;
    for (std::size_t j = 0; j < m; ++j) {
        const cplx w = std::conj(hphi[j]) * phi[j];
        out[j] = w.real() / y[j] - gauge_term;
        out[m + j] = -2.0 * w.imag();
    }
    return true;
}

RMatrix Model::hessian(const ProjectiveCoords& coords, double R) const {
    check_chart(coords);
    const RVector y = flatten(coords);
    const Eigen::Index d = y.size();
    RMatrix H(d, d);
    RVector gp(d), gm(d);
    for (Eigen::Index i = 0; i < d; ++i) {
        RVector yp = y, ym = y;
        yp[i] += kHessianStep;
        ym[i] -= kHessianStep;
        if (!gradient_raw(yp.data(), R, gp.data()) || !gradient_raw(ym.data(), R, gm.data()))
            throw CoordinateSingular("finite-difference Hessian stencil leaves the chart");
        H.col(i) = (gp - gm) / (2.0 * kHessianStep);
    }
    return 0.5 * (H + H.transpose());
}

RVector Model::gradient_dR(const ProjectiveCoords& coords, double R) const {
    check_chart(coords);
    const RVector y = flatten(coords);
    constexpr double h = 1e-6;
    RVector gp(y.size()), gm(y.size());
    gradient_raw(y.data(), R + h, gp.data());
    gradient_raw(y.data(), R - h, gm.data());
    return (gp - gm) / (2.0 * h);
}

// ---------------------------------------------------------------------------

TwoLevelModel::TwoLevelModel(TwoLevelParams params) : params_(params) {
    if (!(params_.c >= 0.0) || !std::isfinite(params_.c))
        throw InvalidParameter("c must be >= 0 (got " + std::to_string(params_.c) + ")");
    if (!(params_.v > 0.0) || !std::isfinite(params_.v))
        throw InvalidParameter("v must be > 0 (got " + std::to_string(params_.v) + ")");
}

double TwoLevelModel::total_energy(const CVector& psi, double R) const {
    const cplx a = psi[0], b = psi[1];
    const double sx = 2.0 * (std::conj(a) * b).real();
    const double sz = std::norm(a) - std::norm(b);
    return 0.5 * params_.v * sx + 0.5 * R * sz - 0.25 * params_.c * sz * sz;
}

void TwoLevelModel::apply(const cplx* psi, double R, cplx* out) const {
    const cplx a = psi[0], b = psi[1];
    const double sz = std::norm(a) - std::norm(b);
    const double d = 0.5 * (R - params_.c * sz);
    const double hv = 0.5 * params_.v;
    out[0] = d * a + hv * b;
    out[1] = hv * a - d * b;
}

CMatrix TwoLevelModel::linear_reference(double R) const {
    CMatrix h(2, 2);
    h << 0.5 * R, 0.5 * params_.v, 0.5 * params_.v, -0.5 * R;
    return h;
}

double TwoLevelModel::hamiltonian(double q, double p, double R) const {
    const double s = 2.0 * p - 1.0;
    return params_.v * std::sqrt(std::max(p * (1.0 - p), 0.0)) * std::cos(q) + 0.5 * R * s -
           0.25 * params_.c * s * s;
}

double TwoLevelModel::classical_hamiltonian(const ProjectiveCoords& coords, double R) const {
    coords.validate();
    if (coords.dim() != 1)
        throw InvalidParameter("two-level model expects one (Q, P) pair");
    return hamiltonian(coords.P[0], coords.Q[0], R);
}

std::pair<double, double> TwoLevelModel::grad(double q, double p, double R) const {
    if (!(p >= kPoleGuard && p <= 1.0 - kPoleGuard))
        throw CoordinateSingular("dH/dp diverges at p = " + std::to_string(p));
    const double y[2] = {p, q};
    double g[2];
    gradient_raw(y, R, g);
    return {g[1], g[0]};
}

bool TwoLevelModel::gradient_raw(const double* y, double R, double* out) const {
    const double p = y[0], q = y[1];
    const double pp = p * (1.0 - p);
    if (!(pp > 0.0))
        return false;
    const double r = std::sqrt(pp);
    const double v = params_.v;
    out[0] = v * (1.0 - 2.0 * p) * std::cos(q) / (2.0 * r) + R - params_.c * (2.0 * p - 1.0);
    out[1] = -v * r * std::sin(q);
    return true;
}

RMatrix TwoLevelModel::hessian(const ProjectiveCoords& coords, double R) const {
    (void)R;
    check_chart(coords);
    const double p = coords.Q[0], q = coords.P[0];
    const double r = std::sqrt(p * (1.0 - p));
    const double v = params_.v;
    RMatrix H(2, 2);
    const double hpp = -v * std::cos(q) / (4.0 * r * r * r) - 2.0 * params_.c;
    const double hpq = -v * (1.0 - 2.0 * p) * std::sin(q) / (2.0 * r);
    const double hqq = -v * r * std::cos(q);
    H << hpp, hpq, hpq, hqq;
    return H;
}

RVector TwoLevelModel::gradient_dR(const ProjectiveCoords& coords, double R) const {
    (void)R;
    check_chart(coords);
    RVector d(2);
    d << 1.0, 0.0;
    return d;
}

// ---------------------------------------------------------------------------

double hermiticity_defect(const CMatrix& A) {
    if (A.rows() != A.cols())
        return INFINITY;
    return (A - A.adjoint()).cwiseAbs().maxCoeff();
}

LinearModel::LinearModel(CMatrix H0, CMatrix H1) : h0_(std::move(H0)), h1_(std::move(H1)) {
    if (h0_.rows() < 2 || h0_.rows() != h0_.cols() || h1_.rows() != h0_.rows() || h1_.cols() != h0_.cols())
        throw InvalidParameter("linear model needs square matrices of equal size N >= 2");
    if (hermiticity_defect(h0_) > 1e-12 || hermiticity_defect(h1_) > 1e-12)
        throw NonHermitian("linear model matrix is not Hermitian");
}

LinearModel::LinearModel(CMatrix H0) : LinearModel(H0, CMatrix::Zero(H0.rows(), H0.cols())) {}

LinearModel LinearModel::two_level(double v) {
    CMatrix h0(2, 2), h1(2, 2);
    h0 << 0.0, 0.5 * v, 0.5 * v, 0.0;
    h1 << 0.5, 0.0, 0.0, -0.5;
    return LinearModel(h0, h1);
}

double LinearModel::total_energy(const CVector& psi, double R) const {
    return psi.dot(matrix(R) * psi).real();
}

void LinearModel::apply(const cplx* psi, double R, cplx* out) const {
    const Eigen::Index n = h0_.rows();
    for (Eigen::Index i = 0; i < n; ++i) {
        cplx acc = 0.0;
        for (Eigen::Index j = 0; j < n; ++j)
            acc += (h0_(i, j) + R * h1_(i, j)) * psi[j];
        out[i] = acc;
    }
}

}  // namespace nlsa
