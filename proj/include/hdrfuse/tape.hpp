#pragma once

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "hdrfuse/errors.hpp"
#include "hdrfuse/tensor.hpp"

namespace hdrfuse {

// Eager reverse-mode tape. Primitives executed while a tape is active append
// their adjoint closures in execution order, which is a topological order by
// construction: an entry's inputs are always produced by earlier entries or
// are leaves. backward() replays the entries in reverse and then frees them.
template <typename T>
class Tape {
public:
    void record(const char* name, std::function<void()> adjoint) {
        entries_.push_back({name, std::move(adjoint)});
    }

    std::size_t size() const { return entries_.size(); }

    void clear() { entries_.clear(); }

    // Seeds d(loss)/d(loss) = 1 and accumulates adjoints into every tensor
    // reachable from the loss. Entries whose output never received a gradient
    // are skipped inside their closures (the gradient buffer stays
    // unallocated), which implements reachability without an explicit graph.
    void backward(Tensor<T> loss) {
        if (loss.numel() != 1) {
            throw UsageError("backward requires a scalar loss, got shape " +
                             shape_str(loss.shape()));
        }
        loss.grad_acc()[0] += T(1);
        static const bool profile = std::getenv("HDRFUSE_TAPE_PROFILE") != nullptr;
        if (profile) {
            std::map<std::string, double> cost;
            for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
                auto t0 = std::chrono::steady_clock::now();
                it->adjoint();
                cost[it->name] +=
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            }
            for (const auto& [name, t] : cost) {
                std::fprintf(stderr, "tape %-18s %.4f s\n", name.c_str(), t);
            }
        } else {
            for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
                it->adjoint();
            }
        }
        entries_.clear();
    }

private:
    struct Entry {
        const char* name;
        std::function<void()> adjoint;
    };
    std::vector<Entry> entries_;
};

namespace detail {
template <typename T>
inline Tape<T>*& tape_slot() {
    thread_local Tape<T>* slot = nullptr;
    return slot;
}
}  // namespace detail

template <typename T>
Tape<T>* active_tape() {
    return detail::tape_slot<T>();
}

// Opens a tape for the current thread; restores the previous one on exit.
template <typename T>
class TapeScope {
public:
    TapeScope() : prev_(detail::tape_slot<T>()) { detail::tape_slot<T>() = &tape_; }
    ~TapeScope() { detail::tape_slot<T>() = prev_; }
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

    Tape<T>& tape() { return tape_; }

private:
    Tape<T> tape_;
    Tape<T>* prev_;
};

// Temporarily disables recording, e.g. for metric probes during training.
template <typename T>
class NoGradScope {
public:
    NoGradScope() : prev_(detail::tape_slot<T>()) { detail::tape_slot<T>() = nullptr; }
    ~NoGradScope() { detail::tape_slot<T>() = prev_; }
    NoGradScope(const NoGradScope&) = delete;
    NoGradScope& operator=(const NoGradScope&) = delete;

private:
    Tape<T>* prev_;
};

// Runs the backward pass on the active tape.
template <typename T>
void backward(const Tensor<T>& loss) {
    Tape<T>* t = active_tape<T>();
    if (!t) {
        throw UsageError("backward called without an active tape");
    }
    t->backward(loss);
}

}  // namespace hdrfuse
