#include "nlsa/stationary.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "nlsa/errors.hpp"

namespace nlsa {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
// population below which a collapsing continuation step counts as a chart exit
constexpr double kPoleExit = 1e-3;

double wrap_positive(double x) {
    double w = std::fmod(x, kTwoPi);
    if (w < 0.0)
        w += kTwoPi;
    if (w > kTwoPi - 1e-9)
        w -= kTwoPi;
    return w;
}

RVector flatten(const ProjectiveCoords& c) {
    RVector y(2 * c.Q.size());
    y << c.Q, c.P;
    return y;
}

ProjectiveCoords unflatten(const RVector& y) {
    const Eigen::Index m = y.size() / 2;
    return ProjectiveCoords{y.head(m), y.tail(m)};
}

bool inside_chart(const RVector& y, double margin) {
    const Eigen::Index m = y.size() / 2;
    double sum = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
        if (!(y[j] > margin))
            return false;
        sum += y[j];
    }
    return 1.0 - sum > margin;
}

std::optional<RVector> grad_at(const Model& model, const RVector& y, double R) {
    RVector g(y.size());
    if (!model.gradient_raw(y.data(), R, g.data()) || !g.allFinite())
        return std::nullopt;
    return g;
}

std::optional<RMatrix> hess_at(const Model& model, const RVector& y, double R) {
    try {
        RMatrix h = model.hessian(unflatten(y), R);
        if (!h.allFinite())
            return std::nullopt;
        return h;
    } catch (const Error&) {
        return std::nullopt;
    }
}

// Gradient noise from rounding y; large near the poles where the Hessian blows up.
double roundoff_floor(const RMatrix& hess, const RVector& y) {
    return 1e-14 * hess.norm() * (1.0 + y.norm());
}

RMatrix flow_jacobian(const RMatrix& hess) {
    const Eigen::Index m = hess.rows() / 2;
    RMatrix A(hess.rows(), hess.cols());
    A.topRows(m) = hess.bottomRows(m);
    A.bottomRows(m) = -hess.topRows(m);
    return A;
}

void fill_spectrum(FixedPoint& fp, const RMatrix& hess, double marginal_tol) {
    Eigen::EigenSolver<RMatrix> es(flow_jacobian(hess), false);
    fp.eigenvalues = es.eigenvalues();
    double scale = 1.0, min_abs = INFINITY;
    for (const auto& l : fp.eigenvalues) {
        scale = std::max(scale, std::abs(l));
        min_abs = std::min(min_abs, std::abs(l));
    }
    const double tol = 1e-8 * scale;
    bool all_imag = true, real_pair = false;
    fp.omega = INFINITY;
    fp.kappa = 0.0;
    for (const auto& l : fp.eigenvalues) {
        if (std::abs(l.real()) > tol) {
            all_imag = false;
            if (std::abs(l.imag()) <= tol)
                real_pair = true;
        } else if (std::abs(l.imag()) > 0.0) {
            fp.omega = std::min(fp.omega, std::abs(l.imag()));
        }
        fp.kappa = std::max(fp.kappa, l.real());
    }
    if (min_abs < marginal_tol)
        fp.stability = Stability::marginal;
    else if (all_imag)
        fp.stability = Stability::elliptic;
    else if (real_pair)
        fp.stability = Stability::hyperbolic;
    else
        fp.stability = Stability::mixed;
    if (fp.stability != Stability::elliptic && fp.stability != Stability::mixed)
        fp.omega = fp.stability == Stability::marginal ? 0.0 : fp.omega;
    if (!std::isfinite(fp.omega) || fp.stability == Stability::hyperbolic)
        fp.omega = 0.0;
    if (fp.stability == Stability::elliptic)
        fp.kappa = 0.0;
}

double coords_distance(const ProjectiveCoords& a, const ProjectiveCoords& b) {
    double d = 0.0;
    for (Eigen::Index j = 0; j < a.Q.size(); ++j) {
        d = std::max(d, std::abs(a.Q[j] - b.Q[j]));
        d = std::max(d, std::abs(wrap_angle(a.P[j] - b.P[j])));
    }
    return d;
}

// Gradient of H in Cartesian canonical coordinates x + i y = sqrt(2) phi_j
// around gauge level g, with phi_g real.
std::optional<RVector> cartesian_grad(const Model& model, const RVector& z, std::size_t g, double R) {
    const std::size_t n = model.levels();
    const Eigen::Index m = static_cast<Eigen::Index>(n - 1);
    CVector phi(static_cast<Eigen::Index>(n));
    double rest = 1.0;
    for (Eigen::Index j = 0; j < m; ++j) {
        const cplx f = cplx(z[j], z[m + j]) / std::numbers::sqrt2;
        phi[static_cast<Eigen::Index>(level_of(static_cast<std::size_t>(j), g))] = f;
        rest -= std::norm(f);
    }
    if (!(rest > 0.0))
        return std::nullopt;
    const double pg = std::sqrt(rest);
    phi[static_cast<Eigen::Index>(g)] = pg;
    CVector hphi(phi.size());
    model.apply(phi.data(), R, hphi.data());
    const double hg = hphi[static_cast<Eigen::Index>(g)].real();
    RVector out(2 * m);
    for (Eigen::Index j = 0; j < m; ++j) {
        const cplx h = hphi[static_cast<Eigen::Index>(level_of(static_cast<std::size_t>(j), g))];
        out[j] = std::numbers::sqrt2 * h.real() - hg * z[j] / pg;
        out[m + j] = std::numbers::sqrt2 * h.imag() - hg * z[m + j] / pg;
    }
    return out;
}

FixedPoint finish(const Model& model, FixedPoint fp) {
    for (auto& p : fp.coords.P)
        p = wrap_positive(p);
    const StateVector s = fp.state();
    fp.chemical_potential = chemical_potential(model, s, fp.R);
    fp.total_energy = model.total_energy(s, fp.R);
    return fp;
}

}  // namespace

std::string to_string(Stability s) {
    switch (s) {
    case Stability::elliptic:
        return "elliptic";
    case Stability::hyperbolic:
        return "hyperbolic";
    case Stability::mixed:
        return "mixed";
    case Stability::marginal:
        return "marginal";
    }
    return "unknown";
}

StateVector FixedPoint::state() const { return reconstruct(coords, 0.0); }

double chemical_potential(const Model& model, const StateVector& state, double R) {
    return state.amplitudes().dot(model.apply(state, R)).real();
}

double eigen_residual(const Model& model, const StateVector& state, double R) {
    const CVector h = model.apply(state, R);
    const double E = state.amplitudes().dot(h).real();
    return (h - E * state.amplitudes()).norm();
}

std::optional<ProjectiveCoords> refine_fixed_point(const Model& model, const ProjectiveCoords& guess, double R,
                                                   double tol, int max_iterations) {
    RVector y = flatten(guess);
    for (int it = 0; it <= max_iterations; ++it) {
        const auto g = grad_at(model, y, R);
        if (!g)
            return std::nullopt;
        const double gn = g->norm();
        if (gn < tol)
            return unflatten(y);
        if (it == max_iterations)
            break;
        const auto h = hess_at(model, y, R);
        if (!h)
            return std::nullopt;
        const RVector step = h->completeOrthogonalDecomposition().solve(-*g);
        if (!step.allFinite())
            return std::nullopt;
        double lam = 1.0;
        bool moved = false;
        while (lam > 1e-6) {
            const RVector yt = y + lam * step;
            if (inside_chart(yt, 0.0)) {
                const auto gt = grad_at(model, yt, R);
                if (gt && gt->norm() < (1.0 - 1e-4 * lam) * gn) {
                    y = yt;
                    moved = true;
                    break;
                }
            }
            lam *= 0.5;
        }
        if (!moved) {
            // stalled at roundoff level
            if (gn < std::max(100.0 * tol, roundoff_floor(*h, y)))
                return unflatten(y);
            return std::nullopt;
        }
    }
    return std::nullopt;
}

FixedPoint classify(const Model& model, const ProjectiveCoords& coords, double R, double residual_tol,
                    double marginal_tol) {
    const RVector y = flatten(coords);
    const auto g = grad_at(model, y, R);
    if (!g)
        throw CoordinateSingular("fixed point lies on a population pole; use classify_state");
    FixedPoint fp;
    fp.coords = coords;
    fp.R = R;
    fp.residual = g->norm();
    const RMatrix hess = model.hessian(coords, R);
    if (fp.residual > std::max(residual_tol, roundoff_floor(hess, y)))
        throw NotStationary("gradient residual " + std::to_string(fp.residual) + " exceeds tolerance");
    fill_spectrum(fp, hess, marginal_tol);
    return finish(model, std::move(fp));
}

FixedPoint classify_state(const Model& model, const StateVector& state, double R, double residual_tol,
                          double marginal_tol) {
    const std::size_t n = state.levels();
    if (n != model.levels())
        throw InvalidParameter("state size does not match the model");
    std::size_t g = 0;
    for (std::size_t k = 1; k < n; ++k)
        if (state.population(k) > state.population(g))
            g = k;
    const Eigen::Index m = static_cast<Eigen::Index>(n - 1);
    const cplx ref = std::polar(1.0, -std::arg(state[g]));
    RVector z(2 * m);
    for (Eigen::Index j = 0; j < m; ++j) {
        const cplx f = state[level_of(static_cast<std::size_t>(j), g)] * ref * std::numbers::sqrt2;
        z[j] = f.real();
        z[m + j] = f.imag();
    }
    const auto g0 = cartesian_grad(model, z, g, R);
    if (!g0)
        throw CoordinateSingular("Cartesian chart failed");
    FixedPoint fp;
    fp.R = R;
    fp.residual = g0->norm();
    if (fp.residual > residual_tol)
        throw NotStationary("gradient residual " + std::to_string(fp.residual) + " exceeds tolerance");
    constexpr double h = 1e-6;
    RMatrix H(2 * m, 2 * m);
    for (Eigen::Index i = 0; i < 2 * m; ++i) {
        RVector zp = z, zm = z;
        zp[i] += h;
        zm[i] -= h;
        H.col(i) = (*cartesian_grad(model, zp, g, R) - *cartesian_grad(model, zm, g, R)) / (2 * h);
    }
    fill_spectrum(fp, 0.5 * (H + H.transpose()), marginal_tol);
    fp.coords.Q.resize(m);
    fp.coords.P.resize(m);
    const cplx last = state[n - 1];
    for (Eigen::Index j = 0; j < m; ++j) {
        const cplx a = state[static_cast<std::size_t>(j)];
        fp.coords.Q[j] = std::norm(a);
        fp.coords.P[j] = std::norm(a) > 0.0 && std::norm(last) > 0.0 ? std::arg(a * std::conj(last)) : 0.0;
    }
    for (std::size_t k = 0; k < n; ++k)
        fp.boundary = fp.boundary || state.population(k) < kGaugeFloor;
    return finish(model, std::move(fp));
}

std::vector<FixedPoint> find_fixed_points(const Model& model, double R, const FixedPointOptions& options) {
    const std::size_t n = model.levels();
    const Eigen::Index m = static_cast<Eigen::Index>(n - 1);
    if (options.grid_q < 1 || options.grid_p < 2)
        throw InvalidParameter("fixed point grid needs at least 1 x 2 nodes");
    std::vector<ProjectiveCoords> starts;
    if (n == 2) {
        for (int i = 0; i < options.grid_q; ++i)
            for (int j = 0; j < options.grid_p; ++j) {
                const double q = kTwoPi * i / options.grid_q;
                const double p = options.edge + (1.0 - 2.0 * options.edge) * j / (options.grid_p - 1);
                starts.push_back({RVector::Constant(1, p), RVector::Constant(1, q)});
            }
    } else {
        std::mt19937_64 rng(options.seed);
        std::exponential_distribution<double> ex;
        std::uniform_real_distribution<double> ph(0.0, kTwoPi);
        const std::size_t count =
            options.random_seeds ? options.random_seeds : static_cast<std::size_t>(options.grid_q * options.grid_p);
        for (std::size_t s = 0; s < count; ++s) {
            RVector w(m + 1);
            for (auto& x : w)
                x = ex(rng) + options.edge;
            w /= w.sum();
            ProjectiveCoords c{w.head(m), RVector(m)};
            for (auto& x : c.P)
                x = ph(rng);
            starts.push_back(std::move(c));
        }
    }

    std::vector<FixedPoint> found;
    auto known = [&](const ProjectiveCoords& c) {
        return std::any_of(found.begin(), found.end(), [&](const FixedPoint& f) {
            return coords_distance(f.coords, c) < options.dedup_radius;
        });
    };
    for (const auto& s : starts) {
        const auto root = refine_fixed_point(model, s, R, options.newton_tol, options.max_iterations);
        if (!root || known(*root))
            continue;
        try {
            found.push_back(classify(model, *root, R, 1e-10, options.marginal_tol));
        } catch (const Error&) {
        }
    }
    // states with vanishing components, where the chart is singular
    for (std::size_t k = 0; k < n; ++k) {
        CVector e = CVector::Zero(static_cast<Eigen::Index>(n));
        e[static_cast<Eigen::Index>(k)] = 1.0;
        const StateVector s(e);
        if (eigen_residual(model, s, R) < 1e-10) {
            try {
                found.push_back(classify_state(model, s, R, 1e-10, options.marginal_tol));
            } catch (const Error&) {
            }
        }
    }
    std::sort(found.begin(), found.end(), [](const FixedPoint& a, const FixedPoint& b) {
        for (Eigen::Index j = 0; j < a.coords.P.size(); ++j) {
            if (a.coords.P[j] != b.coords.P[j])
                return a.coords.P[j] < b.coords.P[j];
            if (a.coords.Q[j] != b.coords.Q[j])
                return a.coords.Q[j] < b.coords.Q[j];
        }
        return false;
    });
    return found;
}

void assign_labels(std::vector<FixedPoint>& points) {
    std::vector<std::size_t> ell, other;
    for (std::size_t i = 0; i < points.size(); ++i)
        (points[i].stability == Stability::elliptic ? ell : other).push_back(i);
    auto by_energy = [&](std::size_t a, std::size_t b) { return points[a].total_energy < points[b].total_energy; };
    std::sort(ell.begin(), ell.end(), by_energy);
    std::sort(other.begin(), other.end(), by_energy);
    std::vector<std::size_t> order;
    if (!ell.empty())
        order.push_back(ell.front());
    if (ell.size() > 1)
        order.push_back(ell.back());
    std::vector<std::size_t> middle(ell.size() > 2 ? ell.begin() + 1 : ell.end(),
                                    ell.size() > 2 ? ell.end() - 1 : ell.end());
    // odd labels from f3 on go to non-elliptic points, even ones to middle elliptic points
    std::size_t next_odd = 3, next_even = 4;
    for (std::size_t i : other) {
        points[i].label = "f" + std::to_string(next_odd);
        next_odd += 2;
    }
    for (std::size_t i : middle) {
        points[i].label = "f" + std::to_string(next_even);
        next_even += 2;
    }
    if (!ell.empty())
        points[ell.front()].label = "f1";
    if (ell.size() > 1)
        points[ell.back()].label = "f2";
}

// ---------------------------------------------------------------------------
// Continuation

namespace {

struct Curve {
    std::vector<RVector> x;  // (y, R)
    std::vector<RVector> t;  // unit tangents
};

class Continuer {
public:
    Continuer(const Model& model, const ContinuationOptions& opts) : model_(model), opts_(opts) {}

    std::optional<RVector> F(const RVector& x) const {
        const Eigen::Index d = x.size() - 1;
        return grad_at(model_, x.head(d), x[d]);
    }

    std::optional<RMatrix> J(const RVector& x) const {
        const Eigen::Index d = x.size() - 1;
        const RVector y = x.head(d);
        const auto h = hess_at(model_, y, x[d]);
        if (!h)
            return std::nullopt;
        RMatrix j(d, d + 1);
        j.leftCols(d) = *h;
        j.col(d) = model_.gradient_dR(unflatten(y), x[d]);
        return j;
    }

    static RVector null_vector(const RMatrix& j, const RVector& prev) {
        Eigen::JacobiSVD<RMatrix> svd(j, Eigen::ComputeFullV);
        RVector t = svd.matrixV().col(j.cols() - 1);
        if (prev.size() == t.size() && t.dot(prev) < 0.0)
            t = -t;
        return t.normalized();
    }

    bool in_chart(const RVector& x) const {
        const Eigen::Index d = x.size() - 1;
        return inside_chart(x.head(d), opts_.pole_margin);
    }

    std::optional<RVector> at_fixed_R(const RVector& guess, double R) const {
        const Eigen::Index d = guess.size() - 1;
        const auto c = refine_fixed_point(model_, unflatten(guess.head(d)), R, opts_.newton_tol, 50);
        if (!c)
            return std::nullopt;
        RVector x(d + 1);
        x << flatten(*c), R;
        return x;
    }

    Curve trace(const RVector& x0, const RVector& t0) const {
        Curve c;
        c.x.push_back(x0);
        c.t.push_back(t0);
        const Eigen::Index d = x0.size() - 1;
        double ds = opts_.ds;
        while (c.x.size() < opts_.max_points) {
            const RVector& x = c.x.back();
            const RVector& t = c.t.back();
            const RVector xp = x + ds * t;
            RVector xk = xp;
            bool ok = false;
            int iters = 0;
            for (; iters < 12; ++iters) {
                const auto f = F(xk);
                const auto j = J(xk);
                if (!f || !j)
                    break;
                RVector r(d + 1);
                r << *f, t.dot(xk - xp);
                const double floor = roundoff_floor(j->leftCols(d), xk.head(d));
                if (f->norm() < std::max(opts_.newton_tol, floor) && std::abs(r[d]) < 1e-12) {
                    ok = true;
                    break;
                }
                RMatrix M(d + 1, d + 1);
                M.topRows(d) = *j;
                M.row(d) = t.transpose();
                const RVector dx = M.fullPivLu().solve(-r);
                if (!dx.allFinite())
                    break;
                xk += dx;
                if (dx.norm() < 1e-15 * (1.0 + xk.norm())) {
                    const auto f2 = F(xk);
                    ok = f2 && f2->norm() < std::max(100.0 * opts_.newton_tol, 10.0 * floor);
                    break;
                }
            }
            RVector tn;
            const bool off_chart = ok && !in_chart(xk);
            if (ok && !off_chart && (xk - x).norm() < 2.0 * ds) {
                const auto j = J(xk);
                ok = j.has_value();
                if (ok) {
                    tn = null_vector(*j, t);
                    ok = tn.dot(t) > 0.9;
                }
            } else {
                ok = false;
            }
            if (!ok) {
                ds *= 0.5;
                if (off_chart && ds < 1e-6)
                    break;  // the branch runs into a population pole
                // a component crossing zero flips its phase by pi: the
                // branch leaves the chart there, so end it
                const RVector Q = x.head(d / 2);
                if (ds < 1e-6 && std::min(Q.minCoeff(), 1.0 - Q.sum()) < kPoleExit)
                    break;
                if (ds < opts_.ds_min)
                    throw StepCollapse("continuation step underflow", x[d]);
                continue;
            }
            const double R_new = xk[d];
            if (R_new < opts_.R_min || R_new > opts_.R_max) {
                const double Rb = R_new < opts_.R_min ? opts_.R_min : opts_.R_max;
                if (std::abs(x[d] - Rb) > 1e-14) {
                    const double s = (Rb - x[d]) / (R_new - x[d]);
                    const auto xb = at_fixed_R(x + s * (xk - x), Rb);
                    if (xb) {
                        c.x.push_back(*xb);
                        const auto jb = J(*xb);
                        c.t.push_back(jb ? null_vector(*jb, t) : t);
                    }
                }
                break;
            }
            c.x.push_back(xk);
            c.t.push_back(tn);
            if (c.x.size() > 10 && (xk - c.x.front()).norm() < 0.5 * ds) {
                c.x.push_back(c.x.front());
                c.t.push_back(c.t.front());
                break;
            }
            if (iters <= 3)
                ds = std::min(ds * 1.5, opts_.ds_max);
        }
        return c;
    }

private:
    const Model& model_;
    const ContinuationOptions& opts_;
};

}  // namespace

TurningPoint solve_turning_point(const Model& model, const ProjectiveCoords& guess, double R_guess, double tol) {
    RVector z(2 * guess.Q.size() + 1);
    z << flatten(guess), R_guess;
    const Eigen::Index d = z.size() - 1;
    auto G = [&](const RVector& x) -> std::optional<RVector> {
        const auto g = grad_at(model, x.head(d), x[d]);
        const auto h = hess_at(model, x.head(d), x[d]);
        if (!g || !h)
            return std::nullopt;
        RVector out(d + 1);
        out << *g, h->determinant();
        return out;
    };
    bool converged = false;
    for (int it = 0; it < 60; ++it) {
        const auto g = G(z);
        if (!g)
            break;
        const auto h = hess_at(model, z.head(d), z[d]);
        RMatrix M(d + 1, d + 1);
        M.topLeftCorner(d, d) = *h;
        M.topRightCorner(d, 1) = model.gradient_dR(unflatten(z.head(d)), z[d]);
        for (Eigen::Index i = 0; i <= d; ++i) {
            const double step = 1e-6 * std::max(1.0, std::abs(z[i]));
            RVector zp = z, zm = z;
            zp[i] += step;
            zm[i] -= step;
            const auto gp = G(zp), gm = G(zm);
            if (!gp || !gm)
                break;
            M(d, i) = ((*gp)[d] - (*gm)[d]) / (2.0 * step);
        }
        const RVector dz = M.fullPivLu().solve(-*g);
        if (!dz.allFinite())
            break;
        z += dz;
        if (dz.norm() < 1e-14 * (1.0 + z.norm())) {
            const auto gf = G(z);
            converged = gf && gf->head(d).norm() < std::max(tol, 1e-10);
            break;
        }
    }
    if (!converged)
        throw NotStationary("turning point Newton solve did not converge");
    TurningPoint tp;
    tp.R = z[d];
    tp.coords = unflatten(z.head(d));
    const FixedPoint fp = classify(model, tp.coords, tp.R, 1e-8, 0.0);
    tp.coords = fp.coords;
    tp.total_energy = fp.total_energy;
    tp.chemical_potential = fp.chemical_potential;
    tp.min_abs_eigenvalue = INFINITY;
    for (const auto& l : fp.eigenvalues)
        tp.min_abs_eigenvalue = std::min(tp.min_abs_eigenvalue, std::abs(l));
    return tp;
}

BranchDiagram continue_branches(const Model& model, const ContinuationOptions& opts) {
    if (!(opts.R_min < opts.R_max) || !std::isfinite(opts.R_min) || !std::isfinite(opts.R_max))
        throw InvalidParameter("continuation needs a finite range R_min < R_max");
    if (!(opts.ds > 0.0 && opts.ds_min > 0.0 && opts.ds_max >= opts.ds))
        throw InvalidParameter("continuation step sizes must satisfy 0 < ds_min, ds <= ds_max");
    Continuer cont(model, opts);

    // reference labels
    const bool ref_in_range = opts.R_ref >= opts.R_min && opts.R_ref <= opts.R_max;
    std::vector<FixedPoint> ref_points;
    if (ref_in_range) {
        ref_points = find_fixed_points(model, opts.R_ref, opts.seeding);
        assign_labels(ref_points);
    }

    std::vector<double> seed_R = {opts.R_min, opts.R_max};
    if (ref_in_range)
        seed_R.push_back(opts.R_ref);

    std::vector<Curve> curves;
    std::vector<std::pair<double, ProjectiveCoords>> visited;  // exact points on traced curves
    auto already = [&](double R, const ProjectiveCoords& c) {
        return std::any_of(visited.begin(), visited.end(), [&](const auto& v) {
            return std::abs(v.first - R) < 1e-12 && coords_distance(v.second, c) < 1e-6;
        });
    };
    auto record_visits = [&](const Curve& c) {
        const Eigen::Index d = c.x.front().size() - 1;
        for (std::size_t i = 0; i < c.x.size(); ++i) {
            for (double R : seed_R) {
                const bool hit = std::abs(c.x[i][d] - R) < 1e-12;
                const bool crosses = i + 1 < c.x.size() && (c.x[i][d] - R) * (c.x[i + 1][d] - R) < 0.0;
                if (hit)
                    visited.emplace_back(R, unflatten(c.x[i].head(d)));
                if (crosses) {
                    const double s = (R - c.x[i][d]) / (c.x[i + 1][d] - c.x[i][d]);
                    if (const auto xr = cont.at_fixed_R(c.x[i] + s * (c.x[i + 1] - c.x[i]), R))
                        visited.emplace_back(R, unflatten(xr->head(d)));
                }
            }
        }
    };

    for (double R : seed_R) {
        const auto seeds = R == opts.R_ref ? ref_points : find_fixed_points(model, R, opts.seeding);
        for (const auto& s : seeds) {
            if (s.boundary || already(R, s.coords))
                continue;
            RVector x0(2 * s.coords.Q.size() + 1);
            x0 << flatten(s.coords), R;
            const auto j = cont.J(x0);
            if (!j)
                continue;
            RVector t0 = Continuer::null_vector(*j, RVector());
            if (t0[t0.size() - 1] < 0.0)
                t0 = -t0;
            Curve fw = cont.trace(x0, t0);
            Curve bw = cont.trace(x0, -t0);
            Curve c;
            for (std::size_t i = bw.x.size(); i-- > 1;) {
                c.x.push_back(bw.x[i]);
                c.t.push_back(-bw.t[i]);
            }
            c.x.insert(c.x.end(), fw.x.begin(), fw.x.end());
            c.t.insert(c.t.end(), fw.t.begin(), fw.t.end());
            record_visits(c);
            curves.push_back(std::move(c));
        }
    }

    BranchDiagram diagram;
    for (const Curve& c : curves) {
        const Eigen::Index d = c.x.front().size() - 1;
        // split at sign changes of dR/ds
        Branch current;
        auto flush = [&](Branch&& b) {
            if (b.points.size() >= 2)
                diagram.branches.push_back(std::move(b));
        };
        auto add_point = [&](Branch& b, const RVector& x) {
            try {
                b.points.push_back(classify(model, unflatten(x.head(d)), x[d], 1e-8));
            } catch (const Error&) {
            }
        };
        add_point(current, c.x.front());
        for (std::size_t i = 0; i + 1 < c.x.size(); ++i) {
            const double a = c.t[i][d], b = c.t[i + 1][d];
            if (a * b < 0.0) {
                std::optional<TurningPoint> tp;
                try {
                    const RVector mid = 0.5 * (c.x[i] + c.x[i + 1]);
                    tp = solve_turning_point(model, unflatten(mid.head(d)), mid[d], opts.newton_tol);
                } catch (const Error&) {
                }
                if (tp) {
                    RVector xt(d + 1);
                    RVector yt = flatten(tp->coords);
                    // keep P on the same branch of the angle as the curve
                    for (Eigen::Index k = d / 2; k < d; ++k)
                        yt[k] = unwrap_near(yt[k], c.x[i][k]);
                    xt << yt, tp->R;
                    add_point(current, xt);
                    tp->branch_a = diagram.branches.size();
                    tp->branch_b = diagram.branches.size() + 1;
                    Branch next;
                    add_point(next, xt);
                    if (!current.points.empty())
                        current.points.back().stability = Stability::marginal;
                    if (!next.points.empty())
                        next.points.back().stability = Stability::marginal;
                    flush(std::move(current));
                    current = std::move(next);
                    diagram.turning_points.push_back(*tp);
                }
            }
            add_point(current, c.x[i + 1]);
        }
        flush(std::move(current));
    }

    // branch stability and labels
    for (std::size_t bi = 0; bi < diagram.branches.size(); ++bi) {
        Branch& b = diagram.branches[bi];
        int counts[4] = {0, 0, 0, 0};
        for (const auto& p : b.points)
            ++counts[static_cast<int>(p.stability)];
        b.stability = static_cast<Stability>(std::max_element(counts, counts + 4) - counts);
        for (std::size_t i = 0; i + 1 < b.points.size() && b.label.empty(); ++i) {
            const double R0 = b.points[i].R, R1 = b.points[i + 1].R;
            if ((R0 - opts.R_ref) * (R1 - opts.R_ref) > 0.0)
                continue;
            const auto root = refine_fixed_point(model, b.points[i].coords, opts.R_ref, opts.newton_tol, 50);
            if (!root)
                continue;
            for (const auto& rp : ref_points)
                if (coords_distance(rp.coords, *root) < 1e-6)
                    b.label = rp.label;
        }
        for (auto& p : b.points)
            p.label = b.label;
    }
    // fix turning point indices for dropped branches: match by endpoints
    for (auto& tp : diagram.turning_points) {
        for (std::size_t bi = 0; bi < diagram.branches.size(); ++bi) {
            const auto& b = diagram.branches[bi];
            if (std::abs(b.points.back().R - tp.R) < 1e-12 &&
                coords_distance(b.points.back().coords, tp.coords) < 1e-9)
                tp.branch_a = bi;
            if (std::abs(b.points.front().R - tp.R) < 1e-12 &&
                coords_distance(b.points.front().coords, tp.coords) < 1e-9)
                tp.branch_b = bi;
        }
    }
    std::size_t unnamed = 0;
    for (auto& b : diagram.branches)
        if (b.label.empty()) {
            b.label = "b" + std::to_string(++unnamed);
            for (auto& p : b.points)
                p.label = b.label;
        }
    return diagram;
}

std::optional<FixedPoint> BranchDiagram::at(const Model& model, const std::string& label, double R) const {
    for (const Branch& b : branches) {
        if (b.label != label)
            continue;
        for (std::size_t i = 0; i + 1 < b.points.size(); ++i) {
            const FixedPoint& a = b.points[i];
            const FixedPoint& c = b.points[i + 1];
            if ((a.R - R) * (c.R - R) > 0.0)
                continue;
            const double s = c.R == a.R ? 0.0 : (R - a.R) / (c.R - a.R);
            ProjectiveCoords guess{a.coords.Q + s * (c.coords.Q - a.coords.Q), a.coords.P};
            for (Eigen::Index j = 0; j < guess.P.size(); ++j)
                guess.P[j] += s * wrap_angle(c.coords.P[j] - a.coords.P[j]);
            const auto root = refine_fixed_point(model, guess, R);
            if (!root)
                continue;
            FixedPoint fp = classify(model, *root, R, 1e-8);
            fp.label = label;
            return fp;
        }
    }
    return std::nullopt;
}

std::vector<Collision> detect_collision(const BranchDiagram& diagram) {
    std::vector<Collision> out;
    for (const auto& tp : diagram.turning_points) {
        if (tp.branch_a >= diagram.branches.size() || tp.branch_b >= diagram.branches.size())
            continue;
        const Branch& a = diagram.branches[tp.branch_a];
        const Branch& b = diagram.branches[tp.branch_b];
        const Branch* ell = nullptr;
        const Branch* hyp = nullptr;
        for (const Branch* x : {&a, &b}) {
            if (x->stability == Stability::elliptic)
                ell = x;
            else if (x->stability == Stability::hyperbolic)
                hyp = x;
        }
        if (ell && hyp)
            out.push_back({tp.R, ell->label, hyp->label, tp.min_abs_eigenvalue});
    }
    std::sort(out.begin(), out.end(), [](const Collision& x, const Collision& y) { return x.R < y.R; });
    return out;
}

FixedPoint locate_label(const Model& model, const std::string& label, double R, double R_ref) {
    ContinuationOptions opts;
    opts.R_ref = R_ref;
    opts.R_min = std::min(R, R_ref) - 1e-6;
    opts.R_max = std::max(R, R_ref) + 1e-6;
    if (R == R_ref) {
        auto pts = find_fixed_points(model, R);
        assign_labels(pts);
        for (auto& p : pts)
            if (p.label == label)
                return p;
        throw LabelNotFound("no fixed point labelled " + label + " at R = " + std::to_string(R));
    }
    const BranchDiagram diagram = continue_branches(model, opts);
    if (auto fp = diagram.at(model, label, R))
        return *fp;
    throw LabelNotFound("no fixed point labelled " + label + " at R = " + std::to_string(R));
}

}  // namespace nlsa
