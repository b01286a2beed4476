#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace c3det {

struct GradCheckResult {
    std::string name;
    double max_rel_error = 0.0;
    int checked = 0;
    bool passed = false;
};

/// Central finite differences of `loss` with respect to each coordinate in
/// `coords`, compared against `analytic`. Relative error per coordinate is
/// |a - n| / max(|a|, |n|, floor).
GradCheckResult compare_gradients(std::string name, const std::function<double()>& loss,
                                  const std::vector<double*>& coords, const std::vector<double>& analytic,
                                  double eps = 1e-5, double tolerance = 1e-4, double floor = 1e-5);

/// Gradient checks on random small double-precision instances of the C3
/// stages, fusion, head losses, the user-input loss and a whole network.
std::vector<GradCheckResult> run_gradchecks(std::uint64_t seed);

}  // namespace c3det
