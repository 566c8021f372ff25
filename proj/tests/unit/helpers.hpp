#pragma once

#include <cmath>
#include <numbers>
#include <random>

#include "nlsa/state.hpp"

namespace testutil {

inline nlsa::StateVector random_state(std::mt19937_64& rng, std::size_t n) {
    std::normal_distribution<double> g;
    nlsa::CVector v(static_cast<Eigen::Index>(n));
    for (auto& z : v)
        z = {g(rng), g(rng)};
    return nlsa::StateVector::normalized(v);
}

inline double uniform(std::mt19937_64& rng, double a, double b) {
    return std::uniform_real_distribution<double>(a, b)(rng);
}

inline nlsa::StateVector two_level(double p, double q, double phase = 0.0) {
    nlsa::CVector v(2);
    v << std::polar(std::sqrt(p), q + phase), std::polar(std::sqrt(1.0 - p), phase);
    return nlsa::StateVector::normalized(v);
}

inline constexpr double pi = std::numbers::pi;

}  // namespace testutil
