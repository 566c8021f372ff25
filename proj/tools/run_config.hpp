#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nlsa/adiabatic.hpp"
#include "nlsa/dynamics.hpp"
#include "nlsa/geometry.hpp"
#include "nlsa/stationary.hpp"

namespace nlsa::cli {

// Every numeric default of the command line lives here. Library defaults are
// pulled from the option structs so the two never disagree.

struct ModelSection {
    double c = 2.0;
    double v = 1.0;
    std::string matrix;  ///< JSON file with "h0" and "h1"; selects the linear model
};

struct LevelsSection {
    ContinuationOptions continuation{};
};

struct PortraitSection {
    double R = -0.05;
    int grid_q = 201;
    int grid_p = 101;
    int contours = 24;
};

struct FixedPointsSection {
    std::vector<double> R{-0.05};
};

struct OrbitSection {
    double R = -0.05;
    double upper = 0.25;  ///< upper-level population of the starting superposition
    double phase = 0.0;
    double p = -1.0;  ///< chart population; >= 0 overrides upper/phase (two-level only)
    double q = 0.0;
    OrbitOptions orbit{};
};

struct SweepSection {
    SweepSpec spec{};
    double upper = 0.1;
    double phase = 0.0;
    std::string label;  ///< start on this eigenstate instead of a superposition
    bool follow = false;  ///< eigenstate-following run that stops at breakdown
    std::size_t stride = 1;  ///< CSV keeps every stride-th sample
};

struct LadderSection {
    SweepSpec spec{};
    double upper = 0.1;
    double phase = 0.0;
    std::vector<double> alphas{1e-3, 1e-4, 1e-5};
};

struct RunConfig {
    ModelSection model{};
    IntegratorConfig integrator{};
    FixedPointOptions seeding{};
    std::string out = "out";
    std::uint64_t seed = 1;
    LevelsSection levels{};
    PortraitSection portrait{};
    FixedPointsSection fixed_points{};
    OrbitSection orbit{};
    SweepSection sweep{};
    LadderSection ladder{};
};

}  // namespace nlsa::cli
