#pragma once

#include <string>

namespace hdrfuse::debug {

// When enabled, every primitive scans its output and raises NumericError on
// NaN/Inf, naming the op. Off by default.
bool check_finite_enabled();
void set_check_finite(bool on);

// Test hook: scales the named primitive's adjoint by a wrong factor so that
// gradient verification must flag exactly that primitive.
void set_adjoint_corruption(const std::string& op_name);
void clear_adjoint_corruption();
bool adjoint_corrupted(const char* op_name);

template <typename T>
T adjoint_scale(const char* op_name) {
    return adjoint_corrupted(op_name) ? T(1.01) : T(1);
}

}  // namespace hdrfuse::debug
