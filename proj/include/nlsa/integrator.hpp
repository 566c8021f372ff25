#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace nlsa {

enum class Method { rk4, dopri5 };

struct StepperOptions {
    Method method = Method::dopri5;
    double rtol = 1e-10;
    double atol = 1e-12;
    double fixed_step = 1e-3;  ///< rk4 only
    double initial_step = 0.0;  ///< 0 picks a step from the initial derivative
    double max_step = INFINITY;
    std::size_t max_steps = 200'000'000;
};

using RhsFn = std::function<void(double t, const double* y, double* dydt)>;

/// One accepted step together with its continuous extension.
class DenseStep {
public:
    double t0() const { return t0_; }
    double t1() const { return t1_; }
    double h() const { return t1_ - t0_; }
    std::span<const double> y0() const { return {y0_, n_}; }
    /// End state; a hook may modify it in place and call mark_modified().
    std::span<double> y1() { return {y1_, n_}; }
    std::span<const double> y1() const { return {y1_, n_}; }
    /// Derivative at the end state (stale after mark_modified()).
    std::span<const double> f1() const { return {f1_, n_}; }

    /// Interpolated state at t in [t0, t1].
    void eval(double t, double* out) const;
    void mark_modified() { modified_ = true; }

private:
    friend class OdeIntegrator;
    std::size_t n_ = 0;
    double t0_ = 0.0, t1_ = 0.0;
    const double* y0_ = nullptr;
    double* y1_ = nullptr;
    const double* f0_ = nullptr;
    const double* f1_ = nullptr;
    const double* cont_ = nullptr;  // 5 x n coefficients for dopri5
    Method method_ = Method::dopri5;
    bool modified_ = false;
};

enum class StepVerdict { accept, reject, stop };
using StepHook = std::function<StepVerdict(DenseStep&)>;

/// Explicit Runge-Kutta driver: adaptive Dormand-Prince 5(4) with 4th order
/// dense output, or classical RK4 with cubic Hermite interpolation.
class OdeIntegrator {
public:
    OdeIntegrator(std::size_t dim, RhsFn rhs, StepperOptions options);

    /// Advances y from t to t_end (either direction). The hook sees every
    /// error-accepted step and may reject it (the step is halved and retried)
    /// or stop integration after it. Returns the time reached.
    double integrate(double t, double t_end, std::vector<double>& y, const StepHook& hook = {});

    std::size_t accepted_steps() const { return accepted_; }
    std::size_t rejected_steps() const { return rejected_; }
    const StepperOptions& options() const { return opts_; }

private:
    double initial_step(double t, const std::vector<double>& y, const std::vector<double>& f, double dir);
    void dopri_stages(double t, double h, const std::vector<double>& y);
    double error_norm(const std::vector<double>& y0) const;

    std::size_t n_;
    RhsFn rhs_;
    StepperOptions opts_;
    std::size_t accepted_ = 0;
    std::size_t rejected_ = 0;
    double h_last_ = 0.0;
    std::vector<double> k1_, k2_, k3_, k4_, k5_, k6_, k7_, ytmp_, ynew_, err_, cont_;
};

}  // namespace nlsa
