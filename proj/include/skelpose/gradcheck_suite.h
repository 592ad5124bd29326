#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace skelpose {

struct LayerCheck {
    std::string layer;
    int instances = 0;
    double max_relative_error = 0.0;
    double seconds = 0.0;
    bool passed = false;
};

// Gradient checks of every differentiable layer on random inputs.
std::vector<LayerCheck> run_gradcheck_suite(int instances, std::uint64_t seed, double tol = 1e-4, double eps = 1e-5);

} // namespace skelpose
