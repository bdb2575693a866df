// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dmsr/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dmsr {

struct GradcheckOptions {
    int seeds = 10;
    std::uint64_t first_seed = 1;
    double step = 1e-4;
    double tolerance = 1e-4;
    // Empty runs every suite.
    std::vector<std::string> suites;
};

// One analytic tensor compared against central differences.
struct GradcheckResult {
    std::string suite;
    std::string tensor;
    std::uint64_t seed = 0;
    std::size_t components = 0;
    double analytic_norm = 0;
    double rel_error = 0;
};

struct GradcheckReport {
    std::vector<GradcheckResult> results;
    double tolerance = 0;
    double seconds = 0;

    double worst() const;
    bool passed() const { return !results.empty() && worst() < tolerance; }
};

// projection, covariance, sh, rasterizer, deform.encode, deform.enhance,
// deform.decode, deform.apply, ssim, loss, pipeline.
const std::vector<std::string>& gradcheck_suites();

// |a - n| / max(|a|, |n|, 1e-6) in the Euclidean norm.
double relative_error(const VecX<double>& analytic, const VecX<double>& numeric);

GradcheckReport run_gradcheck(const GradcheckOptions& options = {});

}  // namespace dmsr
