#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "nlsa/adiabatic.hpp"
#include "nlsa/errors.hpp"
#include "nlsa/stationary.hpp"

using namespace nlsa;
using testutil::pi;

namespace {

double r_star(double c, double v) { return std::pow(std::pow(c, 2.0 / 3) - std::pow(v, 2.0 / 3), 1.5); }

SweepSpec fast_spec(double upper, double alpha = 1e-3, double phase = 0.0) {
    SweepSpec s;
    s.alpha = alpha;
    s.gamma_samples = 200;
    s.initial = InitialCondition::upper_level(upper, phase);
    return s;
}

bool has_event(const SweepRecord& r, SweepEvent::Kind k) {
    for (const auto& e : r.events)
        if (e.kind == k)
            return true;
    return false;
}

}  // namespace

TEST_CASE("level basis and initial populations") {
    const TwoLevelModel m(2.0, 1.0);
    const CMatrix V = level_basis(m, -10.0);
    CHECK((V.adjoint() * V - CMatrix::Identity(2, 2)).norm() < 1e-14);
    for (int k = 0; k < 2; ++k) {
        Eigen::Index i = 0;
        V.col(k).cwiseAbs().maxCoeff(&i);
        CHECK(std::abs(V(i, k).imag()) < 1e-15);
        CHECK(V(i, k).real() > 0.0);
    }
    // lower level at R -> -inf is |a>
    CHECK(std::norm(V(0, 0)) > 0.99);

    SweepSpec s;
    s.initial = InitialCondition::upper_level(0.1);
    const RVector p = level_populations(m, resolve_initial_state(m, s), s.R0);
    CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(0.1).epsilon(1e-12));

    s.initial = InitialCondition::eigenstate("f2");
    const StateVector f2 = resolve_initial_state(m, s);
    CHECK(eigen_residual(m, f2, s.R0) < 1e-9);
}

TEST_CASE("sweep spec validation") {
    const TwoLevelModel m(0.5, 1.0);
    SweepSpec s;
    s.R1 = s.R0;
    CHECK_THROWS_AS(sweep(m, s), InvalidParameter);
    s = SweepSpec{};
    s.alpha = 0.0;
    CHECK_THROWS_AS(sweep(m, s), InvalidParameter);
    s = SweepSpec{};
    s.initial = InitialCondition::level_populations({0.5, 0.6});
    CHECK_THROWS_AS(sweep(m, s), InvalidParameter);
    s = SweepSpec{};
    s.initial = InitialCondition::level_populations({0.2, 0.3, 0.5});
    CHECK_THROWS_AS(sweep(m, s), InvalidParameter);
    CHECK(SweepSpec{}.duration() == doctest::Approx(2e5));
    SweepSpec down;
    down.R0 = 10.0;
    down.R1 = -10.0;
    CHECK(down.rate() == -down.alpha);
    CHECK(down.schedule()(1000.0) == doctest::Approx(10.0 - 0.1));
}

TEST_CASE("linear sweep conserves level populations") {
    const TwoLevelModel m(0.0, 1.0);
    const SweepRecord r = sweep(m, fast_spec(0.1));
    CHECK(std::abs(r.final_populations[1] - r.initial_populations[1]) < 1e-6);
    CHECK(std::abs(r.final_action - r.initial_action) < 1e-6);
    CHECK(r.initial_action == doctest::Approx(0.1).epsilon(1e-6));
    CHECK(r.linear_margin == doctest::Approx(10.0));
    CHECK(r.max_norm_drift < 1e-9);
}

TEST_CASE("weak nonlinearity: no tunneling") {
    const TwoLevelModel m(0.5, 1.0);
    const SweepRecord r = sweep(m, fast_spec(0.1));
    const TunnelingReport tr = tunneling_probability(r);
    CHECK(tr.probability < 1e-2);
    CHECK(tr.population_change < 1e-2);
    CHECK_FALSE(r.omega_floor_hit);
    CHECK(r.omega_min > 0.5);
    CHECK_FALSE(has_event(r, SweepEvent::Kind::tracking_lost));
    // sampling resolves the slowest period
    CHECK(r.sample_dt * r.spec.alpha <= r.spec.alpha * (2 * pi / r.omega_min) / 10 * (1 + 1e-6));
    // gamma is continuous: no step larger than the O(alpha) wobble
    double max_step = 0.0;
    for (std::size_t i = 1; i < r.size(); ++i)
        max_step = std::max(max_step, std::abs(r.gamma_aa[i] - r.gamma_aa[i - 1]));
    CHECK(max_step < 0.05);
}

TEST_CASE("strong nonlinearity: orbit around f2 does not tunnel") {
    const TwoLevelModel m(2.0, 1.0);
    const SweepRecord r = sweep(m, fast_spec(0.8));
    CHECK(r.tracked_label == "f2");
    CHECK(tunneling_probability(r).probability < 1e-2);
    CHECK_FALSE(r.omega_floor_hit);
    CHECK_FALSE(r.warnings.empty());  // endpoints at 5 x max(c, v)
}

TEST_CASE("strong nonlinearity: orbit around f1 meets the collision") {
    const TwoLevelModel m(2.0, 1.0);
    const SweepRecord r = sweep(m, fast_spec(0.05));
    CHECK(r.tracked_label == "f1");
    CHECK(r.omega_floor_hit);
    CHECK(r.omega_min == 0.0);
    bool lost_at_fold = false;
    for (const auto& e : r.events)
        if (e.kind == SweepEvent::Kind::tracking_lost)
            lost_at_fold = std::abs(e.R - r_star(2.0, 1.0)) < 10 * r.sample_dt * r.spec.alpha;
    CHECK(lost_at_fold);
    const TunnelingReport tr = tunneling_probability(r);
    CHECK(tr.probability > 0.05);
    CHECK(tr.jump_over_2pi == doctest::Approx(tr.probability).epsilon(0.1));
    CHECK(tr.action_change == doctest::Approx(tr.jump_over_2pi).epsilon(1e-9));
}

TEST_CASE("endpoint linearity is enforced for tunneling") {
    const TwoLevelModel m(2.0, 1.0);
    SweepSpec s = fast_spec(0.8, 1e-2);
    s.R0 = -4.0;
    s.R1 = 4.0;
    const SweepRecord r = sweep(m, s);
    CHECK(r.linear_margin == doctest::Approx(2.0));
    CHECK_FALSE(r.warnings.empty());
    CHECK_THROWS_AS(tunneling_probability(r), EndpointsNotLinear);
}

TEST_CASE("endpoint actions match orbit-averaged populations") {
    const TwoLevelModel m(2.0, 1.0);
    SweepSpec s = fast_spec(0.3, 1e-2);
    s.R0 = -40.0;
    s.R1 = -39.0;
    const SweepRecord r = sweep(m, s);
    CHECK(std::abs(r.initial_action - r.initial_mean_populations[1]) < 1e-6);
    CHECK(std::abs(r.final_action - r.final_mean_populations[1]) < 1e-6);
}

TEST_CASE("hyperbolic eigenstate breaks down at rate kappa") {
    const TwoLevelModel m(2.0, 1.0);
    SweepSpec s;
    s.R0 = -0.05;
    s.R1 = 0.4;
    const FollowingResult f = eigenstate_following("f3", m, s);
    const double kappa = locate_label(m, "f3", -0.05).kappa;
    CHECK(f.verdict == FollowVerdict::broke_down);
    CHECK(f.R_break < -0.04);
    CHECK(f.divergence_rate == doctest::Approx(kappa).epsilon(0.2));
    CHECK(f.record.distance.back() >= s.follow_tolerance);
}

TEST_CASE("elliptic eigenstates follow when c < v") {
    const TwoLevelModel m(0.5, 1.0);
    for (const char* label : {"f1", "f2"}) {
        SweepSpec s;
        s.alpha = 1e-3;
        s.gamma_samples = 20;
        const FollowingResult f = eigenstate_following(label, m, s);
        CHECK(f.verdict == FollowVerdict::followed);
        double worst = 0.0;
        for (double d : f.record.distance)
            worst = std::max(worst, d);
        CHECK(worst < s.follow_tolerance);
    }
}

TEST_CASE("f1 breaks down at the fold") {
    const TwoLevelModel m(2.0, 1.0);
    SweepSpec s;
    s.alpha = 1e-3;
    s.gamma_samples = 20;
    const FollowingResult f = eigenstate_following("f1", m, s);
    CHECK(f.verdict == FollowVerdict::broke_down);
    CHECK(std::abs(f.R_break - r_star(2.0, 1.0)) < 5 * std::sqrt(s.alpha));
    CHECK(f.record.R.back() == doctest::Approx(f.R_break));
}

TEST_CASE("mirror symmetry of sweeps") {
    const TwoLevelModel m(2.0, 1.0);
    SweepSpec s = fast_spec(0.1, 1e-2, 0.7);
    s.sample_dt = 0.5;
    s.gamma_samples = 50;
    const SweepRecord a = sweep(m, s);
    const SweepRecord b = sweep(m, mirror(s, m));
    REQUIRE(a.size() == b.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.R[i] == -b.R[i]);
        RVector pb = b.populations[i];
        if (std::abs(a.R[i]) < 10.0)
            pb = pb.reverse().eval();  // bare populations swap
        worst = std::max(worst, (a.populations[i] - pb).cwiseAbs().maxCoeff());
        worst = std::max(worst, std::abs(wrap_angle(a.gamma_aa[i] - b.gamma_aa[i])));
        worst = std::max(worst, std::abs(a.omega[i] - b.omega[i]));
    }
    CHECK(worst < 1e-6);
    CHECK(tunneling_probability(a).probability ==
          doctest::Approx(tunneling_probability(b).probability).epsilon(1e-6));
}

TEST_CASE("sweeps are deterministic") {
    const TwoLevelModel m(2.0, 1.0);
    SweepSpec s = fast_spec(0.3, 1e-2);
    const SweepRecord a = sweep(m, s), b = sweep(m, s);
    REQUIRE(a.size() == b.size());
    CHECK(a.populations.back() == b.populations.back());
    CHECK(a.gamma_aa == b.gamma_aa);
    CHECK(a.omega == b.omega);
}

TEST_CASE("invariance report") {
    std::vector<SweepRecord> recs(3);
    const double alphas[] = {1e-4, 1e-2, 1e-3};
    for (int i = 0; i < 3; ++i) {
        recs[i].spec.alpha = alphas[i];
        recs[i].gamma_start = 1.0;
        recs[i].gamma_aa = {1.0, 1.0 + 2 * pi * 5.0 * alphas[i], 1.0};
    }
    InvarianceReport rep = invariance_report(recs);
    REQUIRE(rep.rows.size() == 3);
    CHECK(rep.rows[0].alpha == 1e-2);
    CHECK(rep.rows[2].alpha == 1e-4);
    CHECK(rep.rows[1].max_action_drift == doctest::Approx(5e-3));
    CHECK(rep.monotone);
    CHECK(rep.order == doctest::Approx(1.0));

    recs[0].gamma_aa[1] = 1.0 + 1.0;  // slowest rate drifts most
    rep = invariance_report(recs);
    CHECK_FALSE(rep.monotone);
}

TEST_CASE("ladder on a regular sweep") {
    const TwoLevelModel m(0.5, 1.0);
    SweepSpec s = fast_spec(0.1);
    s.gamma_samples = 100;
    const auto recs = run_ladder(m, s, {1e-2, 3e-3});
    REQUIRE(recs.size() == 2);
    CHECK(recs[0].spec.alpha == 1e-2);
    CHECK(recs[1].spec.alpha == 3e-3);
    const InvarianceReport rep = invariance_report(recs);
    CHECK(rep.monotone);
    CHECK(rep.order > 0.8);
}
