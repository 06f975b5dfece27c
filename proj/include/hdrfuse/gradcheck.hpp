#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hdrfuse/tape.hpp"
#include "hdrfuse/tensor.hpp"

namespace hdrfuse {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::int64_t worst_coord = -1;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::int64_t coords_checked = 0;
};

// Central-difference verification of reverse-mode gradients. `forward` must
// rebuild the computation from the current contents of `target` on every
// call; it runs once under a tape for the analytic gradient and twice per
// coordinate (no tape) for the numeric one. Checking a subset of coordinates
// keeps large parameter tensors tractable; an empty list means all of them.
//
// The error measure is |analytic - numeric| / max(1, |analytic|, |numeric|).
// Meaningful only in 64-bit mode.
template <typename T>
double grad_check(const std::function<Tensor<T>()>& forward, Tensor<T> target,
                  double eps = 1e-5, std::vector<std::int64_t> coords = {},
                  GradCheckReport* report = nullptr) {
    target.set_requires_grad(true);
    target.drop_grad();

    std::vector<T> analytic;
    {
        TapeScope<T> scope;
        Tensor<T> loss = forward();
        if (loss.numel() != 1) throw UsageError("grad_check: forward must produce a scalar");
        scope.tape().backward(loss);
        analytic = target.has_grad() ? target.grad() : std::vector<T>(target.values().size(), T(0));
    }

    if (coords.empty()) {
        coords.resize(static_cast<std::size_t>(target.numel()));
        for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = static_cast<std::int64_t>(i);
    }

    auto eval = [&]() -> double {
        NoGradScope<T> ng;
        return static_cast<double>(forward().item());
    };

    GradCheckReport rep;
    for (std::int64_t c : coords) {
        auto& buf = target.mutable_values();
        T saved = buf[static_cast<std::size_t>(c)];
        buf[static_cast<std::size_t>(c)] = saved + static_cast<T>(eps);
        double fp = eval();
        buf[static_cast<std::size_t>(c)] = saved - static_cast<T>(eps);
        double fm = eval();
        buf[static_cast<std::size_t>(c)] = saved;

        double numeric = (fp - fm) / (2.0 * eps);
        double a = static_cast<double>(analytic[static_cast<std::size_t>(c)]);
        if (!std::isfinite(a) || !std::isfinite(numeric)) {
            throw NumericError("grad_check: non-finite gradient at coordinate " +
                               std::to_string(c) + " (analytic " + std::to_string(a) +
                               ", numeric " + std::to_string(numeric) + ")");
        }
        double denom = std::max({1.0, std::fabs(a), std::fabs(numeric)});
        double rel = std::fabs(a - numeric) / denom;
        if (rel >= rep.max_rel_err) {
            rep.max_rel_err = rel;
            rep.worst_coord = c;
            rep.worst_analytic = a;
            rep.worst_numeric = numeric;
        }
        ++rep.coords_checked;
    }
    if (report) *report = rep;
    return rep.max_rel_err;
}

// Deterministic coordinate subsample for large tensors.
inline std::vector<std::int64_t> sample_coords(std::int64_t numel, std::int64_t max_coords,
                                               Rng& rng) {
    std::vector<std::int64_t> coords;
    if (numel <= max_coords) {
        coords.resize(static_cast<std::size_t>(numel));
        for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = static_cast<std::int64_t>(i);
        return coords;
    }
    coords.reserve(static_cast<std::size_t>(max_coords));
    for (std::int64_t i = 0; i < max_coords; ++i) {
        coords.push_back(static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(numel))));
    }
    return coords;
}

}  // namespace hdrfuse
