#include "hdrfuse/debug.hpp"

#include <atomic>
#include <cstring>
#include <mutex>

namespace hdrfuse::debug {

namespace {
std::atomic<bool> g_check_finite{false};
std::mutex g_corrupt_mu;
std::string g_corrupt_op;
std::atomic<bool> g_corrupt_active{false};
}  // namespace

bool check_finite_enabled() { return g_check_finite.load(std::memory_order_relaxed); }

void set_check_finite(bool on) { g_check_finite.store(on); }

void set_adjoint_corruption(const std::string& op_name) {
    std::lock_guard lock(g_corrupt_mu);
    g_corrupt_op = op_name;
    g_corrupt_active.store(!op_name.empty());
}

void clear_adjoint_corruption() { set_adjoint_corruption(""); }

bool adjoint_corrupted(const char* op_name) {
    if (!g_corrupt_active.load(std::memory_order_relaxed)) return false;
    std::lock_guard lock(g_corrupt_mu);
    return g_corrupt_op == op_name;
}

}  // namespace hdrfuse::debug
