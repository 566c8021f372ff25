#include "nlsa/integrator.hpp"

#include <algorithm>
#include <cmath>

#include "nlsa/errors.hpp"

namespace nlsa {

namespace {

// Dormand-Prince 5(4) tableau
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                 a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;
// continuous extension
constexpr double d1 = -12715105075.0 / 11282082432, d3 = 87487479700.0 / 32700410799,
                 d4 = -10690763975.0 / 1880347072, d5 = 701980252875.0 / 199316789632,
                 d6 = -1453857185.0 / 822651844, d7 = 69997945.0 / 29380423;

}  // namespace

void DenseStep::eval(double t, double* out) const {
    const double h = t1_ - t0_;
    if (h == 0.0) {
        std::copy(y1_, y1_ + n_, out);
        return;
    }
    const double th = (t - t0_) / h;
    const double th1 = 1.0 - th;
    if (method_ == Method::dopri5) {
        const double* r1 = cont_;
        const double* r2 = cont_ + n_;
        const double* r3 = cont_ + 2 * n_;
        const double* r4 = cont_ + 3 * n_;
        const double* r5 = cont_ + 4 * n_;
        for (std::size_t i = 0; i < n_; ++i)
            out[i] = r1[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i])));
        return;
    }
    // cubic Hermite
    const double h00 = (1 + 2 * th) * th1 * th1, h10 = th * th1 * th1;
    const double h01 = th * th * (3 - 2 * th), h11 = -th * th * th1;
    for (std::size_t i = 0; i < n_; ++i)
        out[i] = h00 * y0_[i] + h * h10 * f0_[i] + h01 * y1_[i] + h * h11 * f1_[i];
}

OdeIntegrator::OdeIntegrator(std::size_t dim, RhsFn rhs, StepperOptions options)
    : n_(dim), rhs_(std::move(rhs)), opts_(options) {
    if (opts_.method == Method::dopri5 && !(opts_.rtol > 0.0 && opts_.atol >= 0.0))
        throw InvalidParameter("integrator tolerance must be positive");
    if (opts_.method == Method::rk4 && !(opts_.fixed_step > 0.0))
        throw InvalidParameter("integrator step must be positive");
    for (auto* v : {&k1_, &k2_, &k3_, &k4_, &k5_, &k6_, &k7_, &ytmp_, &ynew_, &err_})
        v->assign(n_, 0.0);
    cont_.assign(5 * n_, 0.0);
}

double OdeIntegrator::initial_step(double t, const std::vector<double>& y, const std::vector<double>& f,
                                   double dir) {
    if (opts_.initial_step > 0.0)
        return opts_.initial_step;
    if (h_last_ > 0.0)
        return h_last_;
    double dy = 0.0, df = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
        const double sc = opts_.atol + opts_.rtol * std::abs(y[i]);
        dy += (y[i] / sc) * (y[i] / sc);
        df += (f[i] / sc) * (f[i] / sc);
    }
    dy = std::sqrt(dy / static_cast<double>(n_));
    df = std::sqrt(df / static_cast<double>(n_));
    double h = (dy < 1e-5 || df < 1e-5) ? 1e-6 : 0.01 * dy / df;
    h = std::min(h, opts_.max_step);
    // second estimate from an explicit Euler step
    for (std::size_t i = 0; i < n_; ++i)
        ytmp_[i] = y[i] + dir * h * f[i];
    rhs_(t + dir * h, ytmp_.data(), k2_.data());
    double ddf = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
        const double sc = opts_.atol + opts_.rtol * std::abs(y[i]);
        const double d = (k2_[i] - f[i]) / sc;
        ddf += d * d;
    }
    ddf = std::sqrt(ddf / static_cast<double>(n_)) / h;
    const double m = std::max(df, ddf);
    const double h1 = m <= 1e-15 ? std::max(1e-6, h * 1e-3) : std::pow(0.01 / m, 1.0 / 5.0);
    return std::min({100.0 * h, h1, opts_.max_step});
}

void OdeIntegrator::dopri_stages(double t, double h, const std::vector<double>& y) {
    const std::size_t n = n_;
    for (std::size_t i = 0; i < n; ++i)
        ytmp_[i] = y[i] + h * a21 * k1_[i];
    rhs_(t + c2 * h, ytmp_.data(), k2_.data());
    for (std::size_t i = 0; i < n; ++i)
        ytmp_[i] = y[i] + h * (a31 * k1_[i] + a32 * k2_[i]);
    rhs_(t + c3 * h, ytmp_.data(), k3_.data());
    for (std::size_t i = 0; i < n; ++i)
        ytmp_[i] = y[i] + h * (a41 * k1_[i] + a42 * k2_[i] + a43 * k3_[i]);
    rhs_(t + c4 * h, ytmp_.data(), k4_.data());
    for (std::size_t i = 0; i < n; ++i)
        ytmp_[i] = y[i] + h * (a51 * k1_[i] + a52 * k2_[i] + a53 * k3_[i] + a54 * k4_[i]);
    rhs_(t + c5 * h, ytmp_.data(), k5_.data());
    for (std::size_t i = 0; i < n; ++i)
        ytmp_[i] = y[i] + h * (a61 * k1_[i] + a62 * k2_[i] + a63 * k3_[i] + a64 * k4_[i] + a65 * k5_[i]);
    rhs_(t + h, ytmp_.data(), k6_.data());
    for (std::size_t i = 0; i < n; ++i)
        ynew_[i] = y[i] + h * (a71 * k1_[i] + a73 * k3_[i] + a74 * k4_[i] + a75 * k5_[i] + a76 * k6_[i]);
    rhs_(t + h, ynew_.data(), k7_.data());
    for (std::size_t i = 0; i < n; ++i)
        err_[i] = h * (e1 * k1_[i] + e3 * k3_[i] + e4 * k4_[i] + e5 * k5_[i] + e6 * k6_[i] + e7 * k7_[i]);
}

double OdeIntegrator::error_norm(const std::vector<double>& y0) const {
    double s = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
        const double sc = opts_.atol + opts_.rtol * std::max(std::abs(y0[i]), std::abs(ynew_[i]));
        const double e = err_[i] / sc;
        s += e * e;
    }
    s = std::sqrt(s / static_cast<double>(n_));
    return std::isfinite(s) ? s : INFINITY;
}

double OdeIntegrator::integrate(double t, double t_end, std::vector<double>& y, const StepHook& hook) {
    if (y.size() != n_)
        throw InvalidParameter("state dimension mismatch");
    if (t == t_end)
        return t;
    const double dir = t_end > t ? 1.0 : -1.0;
    std::vector<double> y0(n_);
    rhs_(t, y.data(), k1_.data());

    DenseStep step;
    step.n_ = n_;
    step.method_ = opts_.method;

    if (opts_.method == Method::rk4) {
        const double hnom = opts_.fixed_step;
        std::vector<double> f0 = k1_;
        while (dir * (t_end - t) > 0.0) {
            double h = std::min(hnom, dir * (t_end - t));
            if (dir * (t_end - t) - h < 1e-12 * hnom)
                h = dir * (t_end - t);
            const double hs = dir * h;
            y0 = y;
            for (std::size_t i = 0; i < n_; ++i)
                ytmp_[i] = y0[i] + 0.5 * hs * f0[i];
            rhs_(t + 0.5 * hs, ytmp_.data(), k2_.data());
            for (std::size_t i = 0; i < n_; ++i)
                ytmp_[i] = y0[i] + 0.5 * hs * k2_[i];
            rhs_(t + 0.5 * hs, ytmp_.data(), k3_.data());
            for (std::size_t i = 0; i < n_; ++i)
                ytmp_[i] = y0[i] + hs * k3_[i];
            rhs_(t + hs, ytmp_.data(), k4_.data());
            for (std::size_t i = 0; i < n_; ++i)
                ynew_[i] = y0[i] + hs / 6.0 * (f0[i] + 2.0 * k2_[i] + 2.0 * k3_[i] + k4_[i]);
            const double t1 = (h == dir * (t_end - t)) ? t_end : t + hs;
            rhs_(t1, ynew_.data(), k7_.data());
            StepVerdict verdict = StepVerdict::accept;
            if (hook) {
                step.t0_ = t;
                step.t1_ = t1;
                step.y0_ = y0.data();
                step.y1_ = ynew_.data();
                step.f0_ = f0.data();
                step.f1_ = k7_.data();
                step.modified_ = false;
                verdict = hook(step);
            }
            // a fixed-step method cannot honour a rejection; it is treated as accept
            ++accepted_;
            if (accepted_ > opts_.max_steps)
                throw StepFailure("step budget exhausted", t);
            y = ynew_;
            t = t1;
            if (step.modified_)
                rhs_(t, y.data(), k7_.data());
            f0 = k7_;
            if (verdict == StepVerdict::stop)
                return t;
        }
        return t;
    }

    double h = initial_step(t, y, k1_, dir);
    bool last_rejected = false;
    std::size_t local_steps = 0;
    while (dir * (t_end - t) > 0.0) {
        const double h_min = 1e-14 * std::max(1.0, std::abs(t));
        h = std::min(h, opts_.max_step);
        bool hits_end = false;
        if (h >= dir * (t_end - t) * (1.0 - 1e-12)) {
            h = dir * (t_end - t);
            hits_end = true;
        }
        if (h < h_min && !hits_end)
            throw StepFailure("step size underflow", t);
        const double hs = dir * h;
        dopri_stages(t, hs, y);
        const double err = error_norm(y);
        if (err > 1.0) {
            ++rejected_;
            last_rejected = true;
            h *= std::max(0.2, 0.9 * std::pow(err, -0.2));
            if (!std::isfinite(err))
                h = 0.25 * std::min(h, dir * (t_end - t));
            if (rejected_ > opts_.max_steps)
                throw StepFailure("rejection budget exhausted", t);
            continue;
        }
        const double t1 = hits_end ? t_end : t + hs;
        StepVerdict verdict = StepVerdict::accept;
        if (hook) {
            // continuous extension coefficients
            double* r = cont_.data();
            for (std::size_t i = 0; i < n_; ++i) {
                const double ydiff = ynew_[i] - y[i];
                const double bspl = hs * k1_[i] - ydiff;
                r[i] = y[i];
                r[n_ + i] = ydiff;
                r[2 * n_ + i] = bspl;
                r[3 * n_ + i] = ydiff - hs * k7_[i] - bspl;
                r[4 * n_ + i] =
                    hs * (d1 * k1_[i] + d3 * k3_[i] + d4 * k4_[i] + d5 * k5_[i] + d6 * k6_[i] + d7 * k7_[i]);
            }
            y0 = y;
            step.t0_ = t;
            step.t1_ = t1;
            step.y0_ = y0.data();
            step.y1_ = ynew_.data();
            step.f0_ = k1_.data();
            step.f1_ = k7_.data();
            step.cont_ = cont_.data();
            step.modified_ = false;
            verdict = hook(step);
            if (verdict == StepVerdict::reject) {
                ++rejected_;
                h *= 0.5;
                if (h < h_min)
                    throw StepFailure("step hook rejected down to the minimum step", t);
                continue;
            }
        }
        ++accepted_;
        if (++local_steps > opts_.max_steps)
            throw StepFailure("step budget exhausted", t);
        std::swap(y, ynew_);
        t = t1;
        if (step.modified_)
            rhs_(t, y.data(), k1_.data());
        else
            std::swap(k1_, k7_);
        double fac = std::min(5.0, std::max(0.2, 0.9 * std::pow(std::max(err, 1e-10), -0.2)));
        if (last_rejected)
            fac = std::min(fac, 1.0);
        last_rejected = false;
        if (!hits_end)
            h_last_ = h * fac;
        h = h * fac;
        if (verdict == StepVerdict::stop)
            return t;
    }
    return t;
}

}  // namespace nlsa
