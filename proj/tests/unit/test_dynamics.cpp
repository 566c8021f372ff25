#include <doctest.h>

#include "helpers.hpp"
#include "nlsa/dynamics.hpp"
#include "nlsa/errors.hpp"

using namespace nlsa;
using testutil::pi;

TEST_CASE("linear eigenstate only picks up a dynamical phase") {
    CMatrix h(3, 3);
    h << 1.0, 0.2, 0.0, 0.2, -0.5, 0.3, 0.0, 0.3, 0.4;
    const LinearModel m(h);
    Eigen::SelfAdjointEigenSolver<CMatrix> es(h);
    const StateVector s(es.eigenvectors().col(1));
    const double E = es.eigenvalues()[1];
    const Trajectory tr = evolve_quantum(s, m, constant_schedule(0.0), 0.0, 20.0, {});
    const double lam0 = tr.ledger.front().lambda;
    for (std::size_t i = 0; i < tr.size(); ++i) {
        CHECK(std::abs(tr.ledger[i].lambda - lam0 + E * tr.times[i]) < 1e-8);
        CHECK((tr.coords[i].Q - tr.coords[0].Q).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("Rabi oscillation") {
    const TwoLevelModel m(0.0, 1.0);
    CVector v(2);
    v << 1.0, 0.0;
    RecordOptions rec{RecordMode::uniform, pi / 8};
    const Trajectory tr = evolve_quantum(StateVector(v), m, constant_schedule(0.0), 0.0, pi, {}, rec);
    for (std::size_t i = 0; i < tr.size(); ++i) {
        const double c = std::cos(tr.times[i] / 2);
        CHECK(std::abs(tr.states[i].population(0) - c * c) < 1e-8);
    }
    CHECK(tr.times.back() == doctest::Approx(pi));
    CHECK(tr.states.back().population(0) < 1e-8);
}

TEST_CASE("self-trapping for strong interaction") {
    // From the upper level at R = 0, <sz> is confined to values reachable on the
    // contour H_cl = -c/4; find the smallest by brute-force scan.
    const double c = 2.5, v = 1.0;
    const TwoLevelModel m(c, v);
    const double E0 = m.hamiltonian(0.0, 1.0, 0.0);
    double min_sz = 1.0;
    for (int i = 0; i <= 200000; ++i) {
        const double p = 0.5 + 0.5 * i / 200000.0;
        const double s = 2 * p - 1;
        if (std::abs(E0 + 0.25 * c * s * s) <= v * std::sqrt(p * (1 - p)))
            min_sz = std::min(min_sz, s);
    }
    CVector up(2);
    up << 1.0, 0.0;
    const Trajectory tr = evolve_quantum(StateVector(up), m, constant_schedule(0.0), 0.0, 30.0, {});
    double lo = 1.0;
    for (const auto& s : tr.states)
        lo = std::min(lo, s.population(0) - s.population(1));
    CHECK(lo > 0.0);
    CHECK(lo == doctest::Approx(min_sz).epsilon(1e-4));
}

TEST_CASE("c = 2v from the upper level runs along the separatrix") {
    // <sz> decays towards the hyperbolic point at rate sqrt(v(c - v)) = 1
    const TwoLevelModel m(2.0, 1.0);
    CVector up(2);
    up << 1.0, 0.0;
    const Trajectory tr =
        evolve_quantum(StateVector(up), m, constant_schedule(0.0), 0.0, 9.0, {}, {RecordMode::uniform, 1.0});
    for (std::size_t i = 4; i < tr.size(); ++i) {
        const double s1 = tr.states[i].population(0) - tr.states[i].population(1);
        const double s0 = tr.states[i - 1].population(0) - tr.states[i - 1].population(1);
        CHECK(s1 > 0.0);
        CHECK(std::log(s0 / s1) == doctest::Approx(1.0).epsilon(2e-2));
    }
}

TEST_CASE("classical integration stays at a fixed point") {
    const TwoLevelModel m(2.0, 1.0);
    const double p = 0.5 + std::sqrt(3.0) / 4.0;
    const ProjectiveCoords fp{RVector::Constant(1, p), RVector::Constant(1, pi)};
    const Trajectory tr = evolve_classical(fp, m, constant_schedule(0.0), 0.0, 100.0, {});
    for (const auto& c : tr.coords) {
        CHECK(std::abs(c.Q[0] - p) < 1e-8);
        CHECK(std::abs(c.P[0] - pi) < 1e-8);
    }
}

TEST_CASE("classical and quantum integration agree") {
    const TwoLevelModel m(0.0, 1.0);
    const ProjectiveCoords c0{RVector::Constant(1, 0.5), RVector::Constant(1, pi / 2)};
    const double T = 10 * 2 * pi;
    RecordOptions rec{RecordMode::uniform, 0.1};
    const Trajectory cl = evolve_classical(c0, m, constant_schedule(0.0), 0.0, T, {}, rec);
    const Trajectory qu = evolve_quantum(reconstruct(c0), m, constant_schedule(0.0), 0.0, T, {}, rec);
    REQUIRE(cl.size() == qu.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < cl.size(); ++i) {
        worst = std::max(worst, std::abs(cl.coords[i].Q[0] - qu.coords[i].Q[0]));
        // the orbit runs through both poles, where the branch of P is a matter of convention
        worst = std::max(worst, std::abs(wrap_angle(cl.coords[i].P[0] - qu.coords[i].P[0])));
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("classical integration conserves energy on a libration") {
    const TwoLevelModel m(0.5, 1.0);
    const ProjectiveCoords c0{RVector::Constant(1, 0.3), RVector::Constant(1, pi)};
    const Trajectory tr = evolve_classical(c0, m, constant_schedule(0.0), 0.0, 50.0, {});
    double drift = 0.0;
    for (std::size_t i = 0; i < tr.size(); ++i)
        drift = std::max(drift, std::abs(tr.energies[i] - tr.energies[0]));
    CHECK(drift < 1e-9);
    CHECK(tr.representation_switches == 0);
}

TEST_CASE("classical integration switches representation through a pole") {
    // Rabi flop from near the pole p = 1 passes through p = 0
    const TwoLevelModel m(0.0, 1.0);
    const ProjectiveCoords c0{RVector::Constant(1, 1.0 - 1e-8), RVector::Constant(1, 0.3)};
    RecordOptions rec{RecordMode::uniform, 0.05};
    const Trajectory cl = evolve_classical(c0, m, constant_schedule(0.0), 0.0, 8.0, {}, rec, 0.0);
    const Trajectory qu = evolve_quantum(reconstruct(c0), m, constant_schedule(0.0), 0.0, 8.0, {}, rec);
    CHECK(cl.representation_switches >= 2);
    REQUIRE(cl.size() == qu.size());
    double worst = 0.0, ledger = 0.0;
    for (std::size_t i = 0; i < cl.size(); ++i) {
        worst = std::max(worst, std::abs(cl.coords[i].Q[0] - qu.coords[i].Q[0]));
        const auto& l = cl.ledger[i];
        ledger = std::max(ledger, std::abs(l.lambda - cl.ledger[0].lambda - l.aa_integrand_accum - l.dynamical_accum));
    }
    CHECK(worst < 1e-7);
    CHECK(ledger < 1e-8);
}

TEST_CASE("ledger identity and norm along quantum trajectories") {
    std::mt19937_64 rng(29);
    const TwoLevelModel m(2.0, 1.0);
    for (int i = 0; i < 5; ++i) {
        const StateVector s = testutil::random_state(rng, 2);
        IntegratorConfig cfg;
        cfg.renormalize = false;
        const Trajectory tr = evolve_quantum(s, m, constant_schedule(-0.05), 0.0, 30.0, cfg);
        CHECK(tr.final_norm_error < 1e-9);
        for (std::size_t k = 0; k < tr.size(); ++k) {
            const auto& l = tr.ledger[k];
            CHECK(std::abs(l.lambda - tr.ledger[0].lambda - l.aa_integrand_accum - l.dynamical_accum) < 1e-8);
            CHECK(std::abs(tr.energies[k] - tr.energies[0]) < 1e-9);
        }
    }
}

TEST_CASE("gauge handoff keeps the overall phase continuous") {
    const TwoLevelModel m(0.0, 1.0);
    CVector v(2);
    v << 0.0, 1.0;
    // starts with the gauge on level 0 (level 1 is empty)... then level 1 drains
    const Trajectory tr = evolve_quantum(StateVector(v).rotated(0.4), m, constant_schedule(0.0), 0.0, 3 * pi, {});
    CHECK(tr.gauge_switches >= 1);
    for (std::size_t k = 1; k < tr.size(); ++k)
        CHECK(std::abs(tr.ledger[k].lambda - tr.ledger[k - 1].lambda) < 0.5);
    const auto& l = tr.ledger.back();
    CHECK(std::abs(l.lambda - tr.ledger[0].lambda - l.aa_integrand_accum - l.dynamical_accum) < 1e-8);
}

TEST_CASE("time reversal") {
    const TwoLevelModel m(2.0, 1.0);
    const StateVector s = testutil::two_level(0.3, 1.1);
    const Trajectory fw = evolve_quantum(s, m, constant_schedule(0.2), 0.0, 25.0, {}, {RecordMode::final_only});
    const Trajectory bw =
        evolve_quantum(fw.states.back(), m, constant_schedule(0.2), 25.0, 0.0, {}, {RecordMode::final_only});
    CHECK(projective_distance(bw.states.back(), s) < 1e-8);
}

TEST_CASE("period detection") {
    const TwoLevelModel lin(0.0, 1.0);
    std::mt19937_64 rng(31);
    for (int i = 0; i < 5; ++i) {
        const StateVector s = testutil::random_state(rng, 2);
        CHECK(find_period(s, lin, 0.0, {}, 100.0) == doctest::Approx(2 * pi).epsilon(1e-9));
        const Trajectory tr = evolve_quantum(s, lin, constant_schedule(0.0), 0.0, 10.0, {});
        CHECK(period_detect(tr) == doctest::Approx(2 * pi).epsilon(1e-6));
    }

    // small orbit around the loop fixed point: 2 pi / omega with omega = sqrt(3)
    const TwoLevelModel m(2.0, 1.0);
    const double p = 0.5 + std::sqrt(3.0) / 4.0;
    const StateVector small = testutil::two_level(p + 5e-4, pi);
    CHECK(find_period(small, m, 0.0, {}, 100.0) == doctest::Approx(2 * pi / std::sqrt(3.0)).epsilon(1e-3));

    CHECK_THROWS_AS(find_period(testutil::two_level(p, pi), m, 0.0, {}, 100.0), NotPeriodic);
}

TEST_CASE("rk4 reproduces the adaptive result") {
    const TwoLevelModel m(2.0, 1.0);
    const StateVector s = testutil::two_level(0.3, 1.1);
    IntegratorConfig rk;
    rk.method = Method::rk4;
    rk.step = 1e-3;
    const Trajectory a = evolve_quantum(s, m, constant_schedule(0.2), 0.0, 5.0, rk, {RecordMode::final_only});
    const Trajectory b = evolve_quantum(s, m, constant_schedule(0.2), 0.0, 5.0, {}, {RecordMode::final_only});
    CHECK(projective_distance(a.states.back(), b.states.back()) < 1e-9);
}
