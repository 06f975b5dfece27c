#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hdrfuse/config.hpp"

namespace hdrfuse {

// Named finite-difference checks covering every primitive, each attention
// block, spatial attention, a full CTB, the losses, and the end-to-end tiny
// model. All run in 64-bit mode against the 1e-4 relative-error gate.
struct GradCheckCase {
    std::string group;  // primitive | attention | network | loss
    std::string name;
    double max_rel_err = 0.0;
    std::int64_t coords_checked = 0;
    bool passed = false;
};

struct GradCheckSuiteResult {
    std::vector<GradCheckCase> cases;
    bool all_passed = true;
    double worst = 0.0;
    std::string worst_name;
};

constexpr double kGradCheckTolerance = 1e-4;

GradCheckSuiteResult run_gradcheck_suite(std::uint64_t seed, const NetworkConfig* cfg = nullptr);

// One line per check plus the worst offender per group.
std::string format_gradcheck_report(const GradCheckSuiteResult& r);

}  // namespace hdrfuse
