#include <doctest.h>

#include <map>

#include "helpers.hpp"
#include "nlsa/errors.hpp"
#include "nlsa/stationary.hpp"

using namespace nlsa;
using testutil::pi;

namespace {

ProjectiveCoords pq(double p, double q) { return {RVector::Constant(1, p), RVector::Constant(1, q)}; }

double closed_form_Rstar(double c, double v) {
    return std::pow(std::pow(c, 2.0 / 3.0) - std::pow(v, 2.0 / 3.0), 1.5);
}

}  // namespace

TEST_CASE("fixed points below the loop threshold") {
    const TwoLevelModel m(1.0, 2.0);
    const auto fps = find_fixed_points(m, 0.0);
    REQUIRE(fps.size() == 2);
    CHECK(fps[0].coords.P[0] == doctest::Approx(0.0));
    CHECK(fps[0].coords.Q[0] == doctest::Approx(0.5));
    CHECK(fps[1].coords.P[0] == doctest::Approx(pi));
    CHECK(fps[1].coords.Q[0] == doctest::Approx(0.5));
}

TEST_CASE("fixed points above the loop threshold") {
    const TwoLevelModel m(2.0, 1.0);
    const auto fps = find_fixed_points(m, 0.0);
    REQUIRE(fps.size() == 4);
    std::vector<double> ps;
    for (const auto& f : fps) {
        CHECK(f.residual < 1e-10);
        CHECK(eigen_residual(m, f.state(), 0.0) < 1e-8);
        if (std::abs(f.coords.P[0] - pi) < 1e-9)
            ps.push_back(f.coords.Q[0]);
        else
            CHECK(f.coords.Q[0] == doctest::Approx(0.5));
    }
    REQUIRE(ps.size() == 3);
    std::sort(ps.begin(), ps.end());
    CHECK(ps[0] == doctest::Approx(0.5 - std::sqrt(3.0) / 4).epsilon(1e-12));
    CHECK(ps[1] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(ps[2] == doctest::Approx(0.5 + std::sqrt(3.0) / 4).epsilon(1e-12));

    CHECK(find_fixed_points(m, 1.0).size() == 2);
}

TEST_CASE("fixed point count against a brute-force sign scan") {
    // On q = 0 and q = pi, dH/dp changes sign at each root; off these lines dH/dq != 0.
    const TwoLevelModel m(2.0, 1.0);
    for (double R : {-1.0, -0.3, 0.2, 0.44, 0.46, 1.0}) {
        int roots = 0;
        for (double q : {0.0, pi}) {
            double prev = 0.0;
            const int n = 200000;
            for (int i = 1; i < n; ++i) {
                const double p = static_cast<double>(i) / n;
                const double g = m.grad(q, p, R).second;
                if (i > 1 && prev * g < 0.0)
                    ++roots;
                prev = g;
            }
        }
        CHECK(find_fixed_points(m, R).size() == static_cast<std::size_t>(roots));
    }
}

TEST_CASE("classification") {
    const TwoLevelModel m(2.0, 1.0);
    const FixedPoint h = classify(m, pq(0.5, pi), 0.0);
    CHECK(h.stability == Stability::hyperbolic);
    CHECK(h.kappa == doctest::Approx(1.0).epsilon(1e-12));
    for (const auto& l : h.eigenvalues)
        CHECK(std::abs(std::abs(l.real()) - 1.0) < 1e-12);

    for (double sign : {-1.0, 1.0}) {
        const FixedPoint e = classify(m, pq(0.5 + sign * std::sqrt(3.0) / 4, pi), 0.0);
        CHECK(e.stability == Stability::elliptic);
        CHECK(e.omega == doctest::Approx(std::sqrt(3.0)).epsilon(1e-12));
    }

    const FixedPoint lin = classify(TwoLevelModel(0.0, 1.0), pq(0.5, 0.0), 0.0);
    CHECK(lin.stability == Stability::elliptic);
    CHECK(lin.omega == doctest::Approx(1.0).epsilon(1e-12));

    CHECK_THROWS_AS(classify(m, pq(0.3, 0.2), 0.0), NotStationary);
}

TEST_CASE("spectrum comes in +- pairs and mirror symmetry holds") {
    const TwoLevelModel m(2.0, 1.0);
    for (double R : {-0.3, -0.05, 0.2}) {
        const auto a = find_fixed_points(m, R);
        const auto b = find_fixed_points(m, -R);
        REQUIRE(a.size() == b.size());
        for (const auto& f : a) {
            CHECK(std::abs(f.eigenvalues.sum()) < 1e-8);
            // mirror partner (q, 1 - p) at -R
            bool matched = false;
            for (const auto& g : b)
                if (std::abs(g.coords.Q[0] - (1 - f.coords.Q[0])) < 1e-9 &&
                    std::abs(wrap_angle(g.coords.P[0] - f.coords.P[0])) < 1e-9) {
                    matched = true;
                    CHECK(g.stability == f.stability);
                    CHECK(g.omega == doctest::Approx(f.omega).epsilon(1e-8));
                    CHECK(g.kappa == doctest::Approx(f.kappa).epsilon(1e-8));
                }
            CHECK(matched);
        }
    }
}

TEST_CASE("chemical potential differs from the total energy by the interaction term") {
    const TwoLevelModel m(2.0, 1.0);
    for (const auto& f : find_fixed_points(m, -0.05)) {
        const double sz = 2 * f.coords.Q[0] - 1;
        CHECK(std::abs(f.chemical_potential - (f.total_energy - 0.5 * sz * sz)) < 1e-10);
    }
}

TEST_CASE("labels at the reference portrait") {
    const TwoLevelModel m(2.0, 1.0);
    auto fps = find_fixed_points(m, -0.05);
    assign_labels(fps);
    std::map<std::string, FixedPoint> by;
    for (const auto& f : fps)
        by[f.label] = f;
    REQUIRE(by.size() == 4);
    CHECK(by["f3"].stability == Stability::hyperbolic);
    CHECK(by["f2"].coords.P[0] == doctest::Approx(0.0));
    CHECK(by["f1"].coords.Q[0] > 0.9);
    CHECK(by["f4"].coords.Q[0] < 0.1);
    CHECK(by["f1"].total_energy < by["f4"].total_energy);
    CHECK(by["f4"].total_energy < by["f2"].total_energy);
}

TEST_CASE("boundary eigenstates are found in the Cartesian chart") {
    CMatrix h = CMatrix::Zero(3, 3);
    h.diagonal() << 0.0, 1.0, 2.5;
    const LinearModel m(h);
    const auto fps = find_fixed_points(m, 0.0, {.grid_q = 8, .grid_p = 8});
    std::size_t boundary = 0;
    for (const auto& f : fps)
        if (f.boundary) {
            ++boundary;
            CHECK(f.stability == Stability::elliptic);
        }
    CHECK(boundary == 3);
}

TEST_CASE("continuation without a loop") {
    const TwoLevelModel m(1.0, 2.0);
    ContinuationOptions o;
    const auto d = continue_branches(m, o);
    CHECK(d.branches.size() == 2);
    CHECK(d.turning_points.empty());
    CHECK(detect_collision(d).empty());
    for (const auto& b : d.branches) {
        CHECK(b.stability == Stability::elliptic);
        CHECK(b.points.front().R == doctest::Approx(-4.0));
        CHECK(b.points.back().R == doctest::Approx(4.0));
    }
    // the two levels stay apart
    for (double R = -4.0; R <= 4.0; R += 0.25) {
        const auto a = d.at(m, "f1", R), b = d.at(m, "f2", R);
        REQUIRE((a && b));
        CHECK(b->chemical_potential - a->chemical_potential > 0.5);
    }
}

TEST_CASE("continuation with a loop") {
    const TwoLevelModel m(2.0, 1.0);
    ContinuationOptions o;
    const auto d = continue_branches(m, o);
    CHECK(d.branches.size() == 4);
    REQUIRE(d.turning_points.size() == 2);
    const double Rs = closed_form_Rstar(2.0, 1.0);
    CHECK(Rs == doctest::Approx(0.4502).epsilon(1e-4));
    std::vector<double> Rt;
    for (const auto& t : d.turning_points) {
        Rt.push_back(t.R);
        CHECK(t.min_abs_eigenvalue < 1e-6);
    }
    std::sort(Rt.begin(), Rt.end());
    CHECK(Rt[0] == doctest::Approx(-Rs).epsilon(1e-10));
    CHECK(Rt[1] == doctest::Approx(Rs).epsilon(1e-10));

    const auto col = detect_collision(d);
    REQUIRE(col.size() == 2);
    CHECK(col[0].elliptic_label == "f4");
    CHECK(col[0].hyperbolic_label == "f3");
    CHECK(col[1].elliptic_label == "f1");
    CHECK(col[1].hyperbolic_label == "f3");

    // f1 and f4 cross at R = 0 with nonzero frequencies
    const auto f1l = d.at(m, "f1", -0.1), f4l = d.at(m, "f4", -0.1);
    const auto f1r = d.at(m, "f1", 0.1), f4r = d.at(m, "f4", 0.1);
    const auto f10 = d.at(m, "f1", 0.0), f40 = d.at(m, "f4", 0.0);
    REQUIRE((f1l && f4l && f1r && f4r && f10 && f40));
    CHECK((f1l->chemical_potential - f4l->chemical_potential) * (f1r->chemical_potential - f4r->chemical_potential) <
          0.0);
    CHECK(f10->chemical_potential == doctest::Approx(f40->chemical_potential).epsilon(1e-10));
    CHECK(f10->omega == doctest::Approx(std::sqrt(3.0)).epsilon(1e-10));
    CHECK(f40->omega == doctest::Approx(std::sqrt(3.0)).epsilon(1e-10));
}

TEST_CASE("branches are continuous") {
    const TwoLevelModel m(2.0, 1.0);
    const auto d = continue_branches(m, {});
    for (const auto& b : d.branches)
        for (std::size_t i = 1; i < b.points.size(); ++i) {
            CHECK(std::abs(b.points[i].coords.Q[0] - b.points[i - 1].coords.Q[0]) < 0.1);
            CHECK(std::abs(b.points[i].R - b.points[i - 1].R) < 0.1);
        }
}

TEST_CASE("upper branch approaches the linear level") {
    // along the p -> 1 branch E = R/2 - c/2 + O(v^2/|R|)
    const double c = 2.0;
    const TwoLevelModel m(c, 1.0);
    ContinuationOptions o;
    o.R_min = -200 * c;
    o.R_max = 0.0;
    o.ds_max = 1.0;
    const auto d = continue_branches(m, o);
    const auto f = d.at(m, "f1", -200 * c);
    REQUIRE(f.has_value());
    const double R = -200 * c;
    CHECK(f->coords.Q[0] > 0.99);
    CHECK(std::abs(f->chemical_potential - (R / 2 - c / 2)) < 2.0 / std::abs(R));
    CHECK(std::abs(f->chemical_potential / (R / 2) - 1.0) < 1e-2);
}

TEST_CASE("frequency vanishes at the fold with a quarter power") {
    // saddle-node normal form: omega^2 ~ (R* - R)^(1/2), so omega ~ (R* - R)^(1/4)
    const TwoLevelModel m(2.0, 1.0);
    const double Rs = closed_form_Rstar(2.0, 1.0);
    ContinuationOptions o;
    o.R_min = -0.1;
    o.R_max = 0.5;
    o.ds = 0.001;
    o.ds_max = 0.002;
    const auto d = continue_branches(m, o);
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (double e : {1e-6, 2e-6, 5e-6, 1e-5, 2e-5, 5e-5}) {
        const auto f = d.at(m, "f1", Rs - e);
        REQUIRE(f.has_value());
        const double x = std::log(e), y = std::log(f->omega);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++n;
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    CHECK(slope == doctest::Approx(0.25).epsilon(0.1));
}

TEST_CASE("turning point solve agrees with the closed form") {
    for (auto [c, v] : {std::pair{2.0, 1.0}, std::pair{3.0, 0.5}, std::pair{1.5, 1.0}}) {
        const TwoLevelModel m(c, v);
        const double Rs = closed_form_Rstar(c, v);
        const double s = std::sqrt(1 - std::pow(v / c, 2.0 / 3.0));  // fold at +R*
        const auto tp = solve_turning_point(m, pq((1 + s) / 2 + 0.01, pi), Rs + 0.01);
        CHECK(tp.R == doctest::Approx(Rs).epsilon(1e-10));
    }
}

TEST_CASE("locate a label away from the reference") {
    const TwoLevelModel m(2.0, 1.0);
    const FixedPoint f = locate_label(m, "f1", -3.0);
    CHECK(f.label == "f1");
    CHECK(f.coords.Q[0] > 0.9);
    CHECK(std::abs(f.coords.P[0] - pi) < 1e-9);
    CHECK_THROWS_AS(locate_label(m, "f1", 2.0), LabelNotFound);
    CHECK_THROWS_AS(locate_label(m, "f4", -2.0), LabelNotFound);
    CHECK(locate_label(m, "f4", 2.0).coords.Q[0] < 0.5);
}
