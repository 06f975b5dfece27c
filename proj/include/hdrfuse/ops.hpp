#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "hdrfuse/debug.hpp"
#include "hdrfuse/parallel.hpp"
#include "hdrfuse/tape.hpp"
#include "hdrfuse/tensor.hpp"

// Dense primitives with reverse-mode adjoints. Layout is row-major throughout;
// images and token maps keep channels/features on the last axis, so per-pixel
// feature rows are contiguous. Every op validates shapes up front and records
// its adjoint on the active tape when any input participates in gradients.

namespace hdrfuse::ops {

namespace detail {

// Elementwise work below this size runs inline; above it, chunks go to the
// worker pool (disjoint ranges, so results are thread-count independent).
// The bar is high: on small core counts a pool wakeup only pays off for
// kernels in the hundreds of microseconds, and those are the conv/matmul
// paths, which use per-row grains instead.
constexpr std::int64_t kElemGrain = 262144;

template <typename T>
inline void finite_check(const char* op, const Tensor<T>& t) {
    if (!debug::check_finite_enabled()) return;
    const auto& v = t.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!std::isfinite(static_cast<double>(v[i]))) {
            throw NumericError(std::string(op) + ": non-finite output at flat index " +
                               std::to_string(i));
        }
    }
}

template <typename T>
inline bool wants_grad(const Tensor<T>& t) {
    return active_tape<T>() != nullptr && t.requires_grad();
}

inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    Shape out(std::max(a.size(), b.size()));
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::int64_t da = i < out.size() - a.size() ? 1 : a[i - (out.size() - a.size())];
        std::int64_t db = i < out.size() - b.size() ? 1 : b[i - (out.size() - b.size())];
        if (da != db && da != 1 && db != 1) {
            throw UsageError(std::string(op) + ": shapes " + shape_str(a) + " and " +
                             shape_str(b) + " are not broadcastable");
        }
        out[i] = std::max(da, db);
    }
    return out;
}

// Right-aligned broadcast strides: 0 where the input extent is 1.
inline Shape broadcast_strides(const Shape& in, const Shape& out) {
    Shape st = shape_strides(in);
    Shape r(out.size(), 0);
    std::size_t off = out.size() - in.size();
    for (std::size_t i = 0; i < in.size(); ++i) {
        r[off + i] = in[i] == 1 ? 0 : st[i];
    }
    return r;
}

// True when `inner` equals the trailing extents of `outer`, i.e. broadcasting
// only replicated it across leading axes.
inline bool is_suffix_shape(const Shape& inner, const Shape& outer) {
    if (inner.size() > outer.size()) return false;
    for (std::size_t i = 0; i < inner.size(); ++i) {
        if (inner[inner.size() - 1 - i] != outer[outer.size() - 1 - i]) return false;
    }
    return true;
}

// Sums a gradient of shape gshape down to shape target (inverse of broadcast).
template <typename T>
void reduce_into(const std::vector<T>& g, const Shape& gshape, std::vector<T>& acc,
                 const Shape& target) {
    if (gshape == target) {
        parallel_for(static_cast<std::int64_t>(g.size()), [&](std::int64_t i0, std::int64_t i1) {
            for (std::int64_t i = i0; i < i1; ++i) {
                acc[static_cast<std::size_t>(i)] += g[static_cast<std::size_t>(i)];
            }
        }, kElemGrain);
        return;
    }
    if (is_suffix_shape(target, gshape)) {
        // One fixed-order pass; common for channel biases and gates.
        std::size_t inner = acc.size();
        std::size_t rows = g.size() / inner;
        for (std::size_t r = 0; r < rows; ++r) {
            const T* grow = g.data() + r * inner;
            for (std::size_t i = 0; i < inner; ++i) acc[i] += grow[i];
        }
        return;
    }
    Shape tstrides = broadcast_strides(target, gshape);
    Shape gstrides = shape_strides(gshape);
    std::int64_t n = shape_numel(gshape);
    for (std::int64_t flat = 0; flat < n; ++flat) {
        std::int64_t rem = flat, tidx = 0;
        for (std::size_t d = 0; d < gshape.size(); ++d) {
            std::int64_t c = rem / gstrides[d];
            rem -= c * gstrides[d];
            tidx += c * tstrides[d];
        }
        acc[static_cast<std::size_t>(tidx)] += g[static_cast<std::size_t>(flat)];
    }
}

template <typename T, typename Fwd>
Tensor<T> binary_broadcast(const char* op, const Tensor<T>& a, const Tensor<T>& b, Fwd f) {
    Shape os = broadcast_shape(a.shape(), b.shape(), op);
    Tensor<T> out = Tensor<T>::zeros(os);
    auto& ov = out.mutable_values();
    const auto& av = a.values();
    const auto& bv = b.values();
    if (a.shape() == b.shape()) {
        parallel_for(static_cast<std::int64_t>(ov.size()), [&](std::int64_t i0, std::int64_t i1) {
            for (std::int64_t i = i0; i < i1; ++i) {
                auto u = static_cast<std::size_t>(i);
                ov[u] = f(av[u], bv[u]);
            }
        }, kElemGrain);
    } else if (is_suffix_shape(b.shape(), a.shape())) {
        std::size_t inner = bv.size();
        parallel_for(static_cast<std::int64_t>(ov.size() / inner),
                     [&](std::int64_t r0, std::int64_t r1) {
                         for (std::int64_t r = r0; r < r1; ++r) {
                             const T* arow = av.data() + static_cast<std::size_t>(r) * inner;
                             T* orow = ov.data() + static_cast<std::size_t>(r) * inner;
                             for (std::size_t i = 0; i < inner; ++i) orow[i] = f(arow[i], bv[i]);
                         }
                     },
                     std::max<std::int64_t>(1, kElemGrain / static_cast<std::int64_t>(inner)));
    } else {
        Shape as = broadcast_strides(a.shape(), os);
        Shape bs = broadcast_strides(b.shape(), os);
        Shape ostr = shape_strides(os);
        std::int64_t n = shape_numel(os);
        for (std::int64_t flat = 0; flat < n; ++flat) {
            std::int64_t rem = flat, ia = 0, ib = 0;
            for (std::size_t d = 0; d < os.size(); ++d) {
                std::int64_t c = rem / ostr[d];
                rem -= c * ostr[d];
                ia += c * as[d];
                ib += c * bs[d];
            }
            ov[static_cast<std::size_t>(flat)] =
                f(av[static_cast<std::size_t>(ia)], bv[static_cast<std::size_t>(ib)]);
        }
    }
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic (NumPy-style right-aligned broadcasting)
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    Tensor<T> out = detail::binary_broadcast<T>("add", a, b, [](T x, T y) { return x + y; });
    detail::finite_check("add", out);
    if (auto* tp = active_tape<T>(); tp && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        tp->record("add", [an = a.node(), bn = b.node(), on = out.node()] {
            if (on->grad.empty()) return;
            if (an->requires_grad) {
                if (an->grad.empty()) an->grad.assign(an->value.size(), T(0));
                detail::reduce_into(on->grad, on->shape, an->grad, an->shape);
            }
            if (bn->requires_grad) {
                if (bn->grad.empty()) bn->grad.assign(bn->value.size(), T(0));
                detail::reduce_into(on->grad, on->shape, bn->grad, bn->shape);
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    Tensor<T> out = detail::binary_broadcast<T>("sub", a, b, [](T x, T y) { return x - y; });
    detail::finite_check("sub", out);
    if (auto* tp = active_tape<T>(); tp && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        tp->record("sub", [an = a.node(), bn = b.node(), on = out.node()] {
            if (on->grad.empty()) return;
            if (an->requires_grad) {
                if (an->grad.empty()) an->grad.assign(an->value.size(), T(0));
                detail::reduce_into(on->grad, on->shape, an->grad, an->shape);
            }
            if (bn->requires_grad) {
                std::vector<T> neg(on->grad.size());
                for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -on->grad[i];
                if (bn->grad.empty()) bn->grad.assign(bn->value.size(), T(0));
                detail::reduce_into(neg, on->shape, bn->grad, bn->shape);
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    Tensor<T> out = detail::binary_broadcast<T>("mul", a, b, [](T x, T y) { return x * y; });
    detail::finite_check("mul", out);
    if (auto* tp = active_tape<T>(); tp && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        tp->record("mul", [an = a.node(), bn = b.node(), on = out.node()] {
            if (on->grad.empty()) return;
            const Shape& os = on->shape;
            if (an->requires_grad && an->grad.empty()) an->grad.assign(an->value.size(), T(0));
            if (bn->requires_grad && bn->grad.empty()) bn->grad.assign(bn->value.size(), T(0));
            if (an->shape == bn->shape) {
                parallel_for(static_cast<std::int64_t>(on->grad.size()),
                             [&](std::int64_t i0, std::int64_t i1) {
                                 for (std::int64_t i = i0; i < i1; ++i) {
                                     auto u = static_cast<std::size_t>(i);
                                     T g = on->grad[u];
                                     if (an->requires_grad) an->grad[u] += g * bn->value[u];
                                     if (bn->requires_grad) bn->grad[u] += g * an->value[u];
                                 }
                             },
                             detail::kElemGrain);
                return;
            }
            if (detail::is_suffix_shape(bn->shape, an->shape) && os == an->shape) {
                // Channel-gate case: b broadcasts across leading axes of a.
                std::size_t inner = bn->value.size();
                std::size_t rows = an->value.size() / inner;
                if (an->requires_grad) {
                    parallel_for(static_cast<std::int64_t>(rows),
                                 [&](std::int64_t r0, std::int64_t r1) {
                                     for (std::int64_t r = r0; r < r1; ++r) {
                                         auto base = static_cast<std::size_t>(r) * inner;
                                         for (std::size_t i = 0; i < inner; ++i) {
                                             an->grad[base + i] +=
                                                 on->grad[base + i] * bn->value[i];
                                         }
                                     }
                                 },
                                 std::max<std::int64_t>(
                                     1, detail::kElemGrain / static_cast<std::int64_t>(inner)));
                }
                if (bn->requires_grad) {
                    // Fixed-order reduction across rows.
                    for (std::size_t r = 0; r < rows; ++r) {
                        auto base = r * inner;
                        for (std::size_t i = 0; i < inner; ++i) {
                            bn->grad[i] += on->grad[base + i] * an->value[base + i];
                        }
                    }
                }
                return;
            }
            Shape as = detail::broadcast_strides(an->shape, os);
            Shape bs = detail::broadcast_strides(bn->shape, os);
            Shape ostr = shape_strides(os);
            std::int64_t n = shape_numel(os);
            for (std::int64_t flat = 0; flat < n; ++flat) {
                std::int64_t rem = flat, ia = 0, ib = 0;
                for (std::size_t d = 0; d < os.size(); ++d) {
                    std::int64_t c = rem / ostr[d];
                    rem -= c * ostr[d];
                    ia += c * as[d];
                    ib += c * bs[d];
                }
                T g = on->grad[static_cast<std::size_t>(flat)];
                if (an->requires_grad) {
                    an->grad[static_cast<std::size_t>(ia)] +=
                        g * bn->value[static_cast<std::size_t>(ib)];
                }
                if (bn->requires_grad) {
                    bn->grad[static_cast<std::size_t>(ib)] +=
                        g * an->value[static_cast<std::size_t>(ia)];
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    auto& ov = out.mutable_values();
    const auto& av = a.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * c;
    detail::finite_check("scale", out);
    if (detail::wants_grad(a)) {
        out.set_requires_grad(true);
        active_tape<T>()->record("scale", [an = a.node(), on = out.node(), c] {
            if (on->grad.empty()) return;
            auto& g = an->grad;
            if (g.empty()) g.assign(an->value.size(), T(0));
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i] * c;
        });
    }
    return out;
}

// Exact-quotient variant of scale: computes x / c (x == c yields exactly 1).
template <typename T>
Tensor<T> div_scalar(const Tensor<T>& a, T c) {
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    auto& ov = out.mutable_values();
    const auto& av = a.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] / c;
    detail::finite_check("div_scalar", out);
    if (detail::wants_grad(a)) {
        out.set_requires_grad(true);
        active_tape<T>()->record("div_scalar", [an = a.node(), on = out.node(), c] {
            if (on->grad.empty()) return;
            auto& g = an->grad;
            if (g.empty()) g.assign(an->value.size(), T(0));
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i] / c;
        });
    }
    return out;
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    auto& ov = out.mutable_values();
    const auto& av = a.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + c;
    detail::finite_check("add_scalar", out);
    if (detail::wants_grad(a)) {
        out.set_requires_grad(true);
        active_tape<T>()->record("add_scalar", [an = a.node(), on = out.node()] {
            if (on->grad.empty()) return;
            auto& g = an->grad;
            if (g.empty()) g.assign(an->value.size(), T(0));
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i];
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Unary maps
// ---------------------------------------------------------------------------

namespace detail {

// dfn(x, y) must return d(out)/d(in) at that element.
template <typename T, typename Fwd, typename Dfn>
Tensor<T> unary_op(const char* op, const Tensor<T>& a, Fwd f, Dfn dfn) {
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    auto& ov = out.mutable_values();
    const auto& av = a.values();
    parallel_for(static_cast<std::int64_t>(ov.size()), [&](std::int64_t i0, std::int64_t i1) {
        for (std::int64_t i = i0; i < i1; ++i) {
            ov[static_cast<std::size_t>(i)] = f(av[static_cast<std::size_t>(i)]);
        }
    }, kElemGrain);
    finite_check(op, out);
    if (wants_grad(a)) {
        out.set_requires_grad(true);
        active_tape<T>()->record(op, [op, an = a.node(), on = out.node(), dfn] {
            if (on->grad.empty()) return;
            const T corrupt = debug::adjoint_scale<T>(op);
            auto& g = an->grad;
            if (g.empty()) g.assign(an->value.size(), T(0));
            parallel_for(static_cast<std::int64_t>(g.size()), [&](std::int64_t i0, std::int64_t i1) {
                for (std::int64_t i = i0; i < i1; ++i) {
                    auto u = static_cast<std::size_t>(i);
                    g[u] += on->grad[u] * dfn(an->value[u], on->value[u]) * corrupt;
                }
            }, kElemGrain);
        });
    }
    return out;
}

}  // namespace detail

template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
    return detail::unary_op<T>(
        "neg", a, [](T x) { return -x; }, [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& a) {
    return detail::unary_op<T>(
        "abs", a, [](T x) { return std::abs(x); },
        [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> log(const Tensor<T>& a) {
    return detail::unary_op<T>(
        "log", a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
    return detail::unary_op<T>(
        "relu", a, [](T x) { return x > T(0) ? x : T(0); },
        [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope) {
    return detail::unary_op<T>(
        "leaky_relu", a, [slope](T x) { return x >= T(0) ? x : slope * x; },
        [slope](T x, T) { return x >= T(0) ? T(1) : slope; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
    return detail::unary_op<T>(
        "sigmoid", a,
        [](T x) {
            // Split by sign to avoid exp overflow.
            return x >= T(0) ? T(1) / (T(1) + std::exp(-x))
                             : std::exp(x) / (T(1) + std::exp(x));
        },
        [](T, T y) { return y * (T(1) - y); });
}

// Exact erf-based GELU. The local slope is stashed at forward time so the
// adjoint is a plain multiply instead of re-evaluating erf/exp.
template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    constexpr double inv_sqrt2pi = 0.3989422804014326779;
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    auto& ov = out.mutable_values();
    const auto& av = a.values();
    const bool needs_grad = detail::wants_grad(a);
    auto slope = needs_grad ? std::make_shared<std::vector<T>>(av.size()) : nullptr;
    parallel_for(static_cast<std::int64_t>(ov.size()), [&](std::int64_t i0, std::int64_t i1) {
        for (std::int64_t i = i0; i < i1; ++i) {
            auto u = static_cast<std::size_t>(i);
            double xd = static_cast<double>(av[u]);
            double cdf = 0.5 * (1.0 + std::erf(xd * inv_sqrt2));
            ov[u] = static_cast<T>(xd * cdf);
            if (slope) {
                double pdf = inv_sqrt2pi * std::exp(-0.5 * xd * xd);
                (*slope)[u] = static_cast<T>(cdf + xd * pdf);
            }
        }
    }, detail::kElemGrain);
    detail::finite_check("gelu", out);
    if (needs_grad) {
        out.set_requires_grad(true);
        active_tape<T>()->record("gelu", [an = a.node(), on = out.node(), slope] {
            if (on->grad.empty()) return;
            const T corrupt = debug::adjoint_scale<T>("gelu");
            auto& g = an->grad;
            if (g.empty()) g.assign(an->value.size(), T(0));
            parallel_for(static_cast<std::int64_t>(g.size()), [&](std::int64_t i0, std::int64_t i1) {
                for (std::int64_t i = i0; i < i1; ++i) {
                    auto u = static_cast<std::size_t>(i);
                    g[u] += on->grad[u] * (*slope)[u] * corrupt;
                }
            }, detail::kElemGrain);
        });
    }
    return out;
}

// Gradient passes inside [lo, hi] (inclusive), zero outside. NaN propagates.
template <typename T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi) {
    return detail::unary_op<T>(
        "clamp", a, [lo, hi](T x) { return x < lo ? lo : (x > hi ? hi : x); },
        [lo, hi](T x, T) { return (x >= lo && x <= hi) ? T(1) : T(0); });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
    T s = T(0);
    for (T v : a.values()) s += v;
    Tensor<T> out = Tensor<T>::scalar(s);
    detail::finite_check("sum_all", out);
    if (detail::wants_grad(a)) {
        out.set_requires_grad(true);
        active_tape<T>()->record("sum_all", [an = a.node(), on = out.node()] {
            if (on->grad.empty()) return;
            T g = on->grad[0];
            auto& ga = an->grad;
            if (ga.empty()) ga.assign(an->value.size(), T(0));
            for (auto& x : ga) x += g;
        });
    }
    return out;
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& a) {
    T s = T(0);
    for (T v : a.values()) s += v;
    T inv = T(1) / static_cast<T>(a.numel());
    Tensor<T> out = Tensor<T>::scalar(s * inv);
    detail::finite_check("mean_all", out);
    if (detail::wants_grad(a)) {
        out.set_requires_grad(true);
        active_tape<T>()->record("mean_all", [an = a.node(), on = out.node(), inv] {
            if (on->grad.empty()) return;
            T g = on->grad[0] * inv;
            auto& ga = an->grad;
            if (ga.empty()) ga.assign(an->value.size(), T(0));
            for (auto& x : ga) x += g;
        });
    }
    return out;
}

// Global average pool: mean over every axis except the last. [H,W,C] -> [C].
template <typename T>
Tensor<T> mean_spatial(const Tensor<T>& a) {
    if (a.rank() < 2) throw UsageError("mean_spatial requires rank >= 2");
    std::int64_t c = a.dim(a.rank() - 1);
    std::int64_t rows = a.numel() / c;
    Tensor<T> out = Tensor<T>::zeros({c});
    auto& ov = out.mutable_values();
    const auto& av = a.values();
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* row = av.data() + r * c;
        for (std::int64_t j = 0; j < c; ++j) ov[static_cast<std::size_t>(j)] += row[j];
    }
    T inv = T(1) / static_cast<T>(rows);
    for (auto& v : ov) v *= inv;
    detail::finite_check("mean_spatial", out);
    if (detail::wants_grad(a)) {
        out.set_requires_grad(true);
        active_tape<T>()->record("mean_spatial", [an = a.node(), on = out.node(), rows, c, inv] {
            if (on->grad.empty()) return;
            auto& ga = an->grad;
            if (ga.empty()) ga.assign(an->value.size(), T(0));
            for (std::int64_t r = 0; r < rows; ++r) {
                T* grow = ga.data() + r * c;
                for (std::int64_t j = 0; j < c; ++j) {
                    grow[j] += on->grad[static_cast<std::size_t>(j)] * inv;
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Softmax and layer normalization (last axis)
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> softmax(const Tensor<T>& a) {
    if (a.rank() < 1) throw UsageError("softmax requires rank >= 1");
    std::int64_t c = a.dim(a.rank() - 1);
    std::int64_t rows = a.numel() / c;
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    auto& ov = out.mutable_values();
    const auto& av = a.values();
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* x = av.data() + r * c;
        T* y = ov.data() + r * c;
        T m = x[0];
        for (std::int64_t j = 1; j < c; ++j) m = std::max(m, x[j]);
        T s = T(0);
        for (std::int64_t j = 0; j < c; ++j) {
            y[j] = std::exp(x[j] - m);
            s += y[j];
        }
        T inv = T(1) / s;
        for (std::int64_t j = 0; j < c; ++j) y[j] *= inv;
    }
    detail::finite_check("softmax", out);
    if (detail::wants_grad(a)) {
        out.set_requires_grad(true);
        active_tape<T>()->record("softmax", [an = a.node(), on = out.node(), rows, c] {
            if (on->grad.empty()) return;
            auto& ga = an->grad;
            if (ga.empty()) ga.assign(an->value.size(), T(0));
            for (std::int64_t r = 0; r < rows; ++r) {
                const T* y = on->value.data() + r * c;
                const T* g = on->grad.data() + r * c;
                T* gx = ga.data() + r * c;
                T dot = T(0);
                for (std::int64_t j = 0; j < c; ++j) dot += g[j] * y[j];
                for (std::int64_t j = 0; j < c; ++j) gx[j] += y[j] * (g[j] - dot);
            }
        });
    }
    return out;
}

// Normalizes each feature vector (last axis) to zero mean / unit variance,
// then applies the affine (gamma, beta). Variance uses the biased (1/D)
// two-pass estimate; eps only guards exactly-constant rows.
template <typename T>
Tensor<T> layernorm(const Tensor<T>& a, const Tensor<T>& gamma, const Tensor<T>& beta) {
    if (a.rank() < 1) throw UsageError("layernorm requires rank >= 1");
    std::int64_t c = a.dim(a.rank() - 1);
    if (gamma.numel() != c || beta.numel() != c) {
        throw UsageError("layernorm affine params must have length " + std::to_string(c));
    }
    constexpr double eps = 1e-10;
    std::int64_t rows = a.numel() / c;
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    auto& ov = out.mutable_values();
    const auto& av = a.values();
    const auto& gv = gamma.values();
    const auto& bv = beta.values();
    std::vector<T> rstd(static_cast<std::size_t>(rows));
    std::vector<T> mean(static_cast<std::size_t>(rows));
    parallel_for(rows, [&](std::int64_t r0, std::int64_t r1) {
        for (std::int64_t r = r0; r < r1; ++r) {
            const T* x = av.data() + r * c;
            T* y = ov.data() + r * c;
            T mu = T(0);
            for (std::int64_t j = 0; j < c; ++j) mu += x[j];
            mu /= static_cast<T>(c);
            T var = T(0);
            for (std::int64_t j = 0; j < c; ++j) {
                T d = x[j] - mu;
                var += d * d;
            }
            var /= static_cast<T>(c);
            T rs = T(1) / std::sqrt(var + static_cast<T>(eps));
            mean[static_cast<std::size_t>(r)] = mu;
            rstd[static_cast<std::size_t>(r)] = rs;
            for (std::int64_t j = 0; j < c; ++j) {
                y[j] = (x[j] - mu) * rs * gv[static_cast<std::size_t>(j)] +
                       bv[static_cast<std::size_t>(j)];
            }
        }
    }, std::max<std::int64_t>(1, detail::kElemGrain / std::max<std::int64_t>(1, c)));
    detail::finite_check("layernorm", out);
    if (auto* tp = active_tape<T>();
        tp && (a.requires_grad() || gamma.requires_grad() || beta.requires_grad())) {
        out.set_requires_grad(true);
        tp->record("layernorm", [an = a.node(), gn = gamma.node(), bn = beta.node(),
                                 on = out.node(), mean = std::move(mean),
                                 rstd = std::move(rstd), rows, c] {
            if (on->grad.empty()) return;
            if (an->requires_grad && an->grad.empty()) an->grad.assign(an->value.size(), T(0));
            if (gn->requires_grad && gn->grad.empty()) gn->grad.assign(gn->value.size(), T(0));
            if (bn->requires_grad && bn->grad.empty()) bn->grad.assign(bn->value.size(), T(0));
            for (std::int64_t r = 0; r < rows; ++r) {
                const T* x = an->value.data() + r * c;
                const T* g = on->grad.data() + r * c;
                T mu = mean[static_cast<std::size_t>(r)];
                T rs = rstd[static_cast<std::size_t>(r)];
                if (gn->requires_grad || bn->requires_grad) {
                    for (std::int64_t j = 0; j < c; ++j) {
                        T xhat = (x[j] - mu) * rs;
                        if (gn->requires_grad) gn->grad[static_cast<std::size_t>(j)] += g[j] * xhat;
                        if (bn->requires_grad) bn->grad[static_cast<std::size_t>(j)] += g[j];
                    }
                }
                if (an->requires_grad) {
                    // d/dx of (x - mu) * rs * gamma: project out mean and
                    // xhat components of the row gradient.
                    T sum_gg = T(0), sum_ggx = T(0);
                    for (std::int64_t j = 0; j < c; ++j) {
                        T gg = g[j] * gn->value[static_cast<std::size_t>(j)];
                        T xhat = (x[j] - mu) * rs;
                        sum_gg += gg;
                        sum_ggx += gg * xhat;
                    }
                    T invc = T(1) / static_cast<T>(c);
                    T* gx = an->grad.data() + r * c;
                    for (std::int64_t j = 0; j < c; ++j) {
                        T gg = g[j] * gn->value[static_cast<std::size_t>(j)];
                        T xhat = (x[j] - mu) * rs;
                        gx[j] += rs * (gg - invc * sum_gg - xhat * invc * sum_ggx);
                    }
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Matrix kernels
// ---------------------------------------------------------------------------

namespace detail {

// Register tiling for the matrix/conv kernels: output segments accumulate in
// `TW` register-resident scalars across the whole reduction, wide enough to
// hide FMA latency, then spill once. The 24/16/8 cascade plus a scalar tail
// covers every channel count.
template <int TW, typename T, typename TermFn>
inline void tile_reduce(T* out, TermFn&& for_each_term, bool accumulate) {
    T acc[TW] = {};
    for_each_term([&](T a, const T* b) {
        for (int t = 0; t < TW; ++t) acc[t] += a * b[t];
    });
    if (accumulate) {
        for (int t = 0; t < TW; ++t) out[t] += acc[t];
    } else {
        for (int t = 0; t < TW; ++t) out[t] = acc[t];
    }
}

// Runs `segment(offset, width_tag)` over tiles of [0, extent), then
// `tail(offset)` per remaining scalar slot.
template <typename SegFn, typename TailFn>
inline void tile_cascade(std::int64_t extent, SegFn&& segment, TailFn&& tail) {
    std::int64_t o = 0;
    for (; o + 24 <= extent; o += 24) segment(o, std::integral_constant<int, 24>{});
    for (; o + 16 <= extent; o += 16) segment(o, std::integral_constant<int, 16>{});
    for (; o + 8 <= extent; o += 8) segment(o, std::integral_constant<int, 8>{});
    for (; o + 4 <= extent; o += 4) segment(o, std::integral_constant<int, 4>{});
    for (; o + 2 <= extent; o += 2) segment(o, std::integral_constant<int, 2>{});
    for (; o < extent; ++o) tail(o);
}

constexpr std::int64_t kTile = 8;

// C[m,n] += A[m,k] * B[k,n]
template <typename T>
void mm_nn(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n) {
    parallel_for(m, [&](std::int64_t i0, std::int64_t i1) {
        for (std::int64_t i = i0; i < i1; ++i) {
            T* crow = c + i * n;
            const T* arow = a + i * k;
            tile_cascade(
                n,
                [&](std::int64_t j0, auto tw) {
                    tile_reduce<tw()>(crow + j0, [&](auto&& acc) {
                        for (std::int64_t p = 0; p < k; ++p) acc(arow[p], b + p * n + j0);
                    }, true);
                },
                [&](std::int64_t j0) {
                    T acc = T(0);
                    for (std::int64_t p = 0; p < k; ++p) acc += arow[p] * b[p * n + j0];
                    crow[j0] += acc;
                });
        }
    });
}

// C[m,k] += A[m,n] * B^T where B is [k,n]. Materializes B^T so the inner
// loop runs over contiguous memory (reductions do not vectorize).
template <typename T>
void mm_nt(const T* a, const T* b, T* c, std::int64_t m, std::int64_t n, std::int64_t k) {
    std::vector<T> bt(static_cast<std::size_t>(n) * k);
    for (std::int64_t p = 0; p < k; ++p) {
        for (std::int64_t j = 0; j < n; ++j) {
            bt[static_cast<std::size_t>(j * k + p)] = b[p * n + j];
        }
    }
    parallel_for(m, [&](std::int64_t i0, std::int64_t i1) {
        for (std::int64_t i = i0; i < i1; ++i) {
            const T* arow = a + i * n;
            T* crow = c + i * k;
            tile_cascade(
                k,
                [&](std::int64_t p0, auto tw) {
                    tile_reduce<tw()>(crow + p0, [&](auto&& acc) {
                        for (std::int64_t j = 0; j < n; ++j) acc(arow[j], bt.data() + j * k + p0);
                    }, true);
                },
                [&](std::int64_t p0) {
                    T acc = T(0);
                    for (std::int64_t j = 0; j < n; ++j) {
                        acc += arow[j] * bt[static_cast<std::size_t>(j * k + p0)];
                    }
                    crow[p0] += acc;
                });
        }
    });
}

// C[k,n] += A^T * B where A is [m,k], B is [m,n]
template <typename T>
void mm_tn(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n) {
    parallel_for(k, [&](std::int64_t pp0, std::int64_t pp1) {
        for (std::int64_t p = pp0; p < pp1; ++p) {
            T* crow = c + p * n;
            tile_cascade(
                n,
                [&](std::int64_t j0, auto tw) {
                    tile_reduce<tw()>(crow + j0, [&](auto&& acc) {
                        for (std::int64_t i = 0; i < m; ++i) acc(a[i * k + p], b + i * n + j0);
                    }, true);
                },
                [&](std::int64_t j0) {
                    T acc = T(0);
                    for (std::int64_t i = 0; i < m; ++i) acc += a[i * k + p] * b[i * n + j0];
                    crow[j0] += acc;
                });
        }
    });
}

}  // namespace detail

// Batched contraction a[..,m,k] * b[..,k,n] -> [..,m,n]; leading (batch)
// extents broadcast.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() < 2 || b.rank() < 2) throw UsageError("matmul requires rank >= 2 operands");
    std::int64_t m = a.dim(a.rank() - 2), ka = a.dim(a.rank() - 1);
    std::int64_t kb = b.dim(b.rank() - 2), n = b.dim(b.rank() - 1);
    if (ka != kb) {
        throw UsageError("matmul inner extents differ: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    Shape abatch(a.shape().begin(), a.shape().end() - 2);
    Shape bbatch(b.shape().begin(), b.shape().end() - 2);
    Shape obatch = detail::broadcast_shape(abatch, bbatch, "matmul");
    Shape oshape = obatch;
    oshape.push_back(m);
    oshape.push_back(n);
    Tensor<T> out = Tensor<T>::zeros(oshape);

    Shape astr = detail::broadcast_strides(abatch, obatch);
    Shape bstr = detail::broadcast_strides(bbatch, obatch);
    Shape ostr = shape_strides(obatch);
    std::int64_t batches = shape_numel(obatch);
    auto offsets = [astr, bstr, ostr, nd = obatch.size(), m, ka, n](
                       std::int64_t bi, std::int64_t& ao, std::int64_t& bo) {
        std::int64_t rem = bi;
        ao = bo = 0;
        for (std::size_t d = 0; d < nd; ++d) {
            std::int64_t cidx = rem / ostr[d];
            rem -= cidx * ostr[d];
            ao += cidx * astr[d];
            bo += cidx * bstr[d];
        }
        ao *= m * ka;
        bo *= ka * n;
    };

    auto& ov = out.mutable_values();
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::int64_t bi = 0; bi < batches; ++bi) {
        std::int64_t ao, bo;
        offsets(bi, ao, bo);
        detail::mm_nn(av.data() + ao, bv.data() + bo, ov.data() + bi * m * n, m, ka, n);
    }
    detail::finite_check("matmul", out);

    if (auto* tp = active_tape<T>(); tp && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        tp->record("matmul", [an = a.node(), bn = b.node(), on = out.node(), offsets, batches, m,
                              ka, n] {
            if (on->grad.empty()) return;
            const T corrupt = debug::adjoint_scale<T>("matmul");
            std::vector<T> g;
            if (corrupt != T(1)) {
                g = on->grad;
                for (auto& v : g) v *= corrupt;
            }
            const T* gy = corrupt != T(1) ? g.data() : on->grad.data();
            if (an->requires_grad && an->grad.empty()) an->grad.assign(an->value.size(), T(0));
            if (bn->requires_grad && bn->grad.empty()) bn->grad.assign(bn->value.size(), T(0));
            for (std::int64_t bi = 0; bi < batches; ++bi) {
                std::int64_t ao, bo;
                offsets(bi, ao, bo);
                const T* gyb = gy + bi * m * n;
                if (an->requires_grad) {
                    detail::mm_nt(gyb, bn->value.data() + bo, an->grad.data() + ao, m, n, ka);
                }
                if (bn->requires_grad) {
                    detail::mm_tn(an->value.data() + ao, gyb, bn->grad.data() + bo, m, ka, n);
                }
            }
        });
    }
    return out;
}

// Affine map over the last axis: x[..,K] * w[K,N] + b[N].
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    if (x.rank() < 1 || w.rank() != 2) throw UsageError("linear expects x[..,K], w[K,N]");
    std::int64_t k = x.dim(x.rank() - 1);
    if (w.dim(0) != k) {
        throw UsageError("linear: input features " + std::to_string(k) +
                         " do not match weight rows " + std::to_string(w.dim(0)));
    }
    std::int64_t n = w.dim(1);
    if (b.numel() != n) throw UsageError("linear: bias length mismatch");
    std::int64_t rows = x.numel() / k;
    Shape oshape = x.shape();
    oshape.back() = n;
    Tensor<T> out = Tensor<T>::zeros(oshape);
    auto& ov = out.mutable_values();
    const auto& bv = b.values();
    for (std::int64_t r = 0; r < rows; ++r) {
        T* yrow = ov.data() + r * n;
        for (std::int64_t j = 0; j < n; ++j) yrow[j] = bv[static_cast<std::size_t>(j)];
    }
    detail::mm_nn(x.values().data(), w.values().data(), ov.data(), rows, k, n);
    detail::finite_check("linear", out);

    if (auto* tp = active_tape<T>();
        tp && (x.requires_grad() || w.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        tp->record("linear",
                   [xn = x.node(), wn = w.node(), bn = b.node(), on = out.node(), rows, k, n] {
                       if (on->grad.empty()) return;
                       const T* gy = on->grad.data();
                       if (xn->requires_grad) {
                           if (xn->grad.empty()) xn->grad.assign(xn->value.size(), T(0));
                           detail::mm_nt(gy, wn->value.data(), xn->grad.data(), rows, n, k);
                       }
                       if (wn->requires_grad) {
                           if (wn->grad.empty()) wn->grad.assign(wn->value.size(), T(0));
                           detail::mm_tn(xn->value.data(), gy, wn->grad.data(), rows, k, n);
                       }
                       if (bn->requires_grad) {
                           if (bn->grad.empty()) bn->grad.assign(bn->value.size(), T(0));
                           for (std::int64_t r = 0; r < rows; ++r) {
                               const T* grow = gy + r * n;
                               for (std::int64_t j = 0; j < n; ++j) {
                                   bn->grad[static_cast<std::size_t>(j)] += grow[j];
                               }
                           }
                       }
                   });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Shape ops (all copying; round-trips are bit-exact)
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw UsageError("reshape from " + shape_str(a.shape()) + " to " + shape_str(shape) +
                         " changes element count");
    }
    Tensor<T> out = Tensor<T>::from(std::move(shape), a.values());
    if (detail::wants_grad(a)) {
        out.set_requires_grad(true);
        active_tape<T>()->record("reshape", [an = a.node(), on = out.node()] {
            if (on->grad.empty()) return;
            auto& g = an->grad;
            if (g.empty()) g.assign(an->value.size(), T(0));
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i];
        });
    }
    return out;
}

template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<int>& perm) {
    int r = a.rank();
    if (static_cast<int>(perm.size()) != r) throw UsageError("permute: axis list length mismatch");
    std::vector<bool> seen(static_cast<std::size_t>(r), false);
    Shape oshape(static_cast<std::size_t>(r));
    for (int i = 0; i < r; ++i) {
        int p = perm[static_cast<std::size_t>(i)];
        if (p < 0 || p >= r || seen[static_cast<std::size_t>(p)]) {
            throw UsageError("permute: invalid axis permutation");
        }
        seen[static_cast<std::size_t>(p)] = true;
        oshape[static_cast<std::size_t>(i)] = a.dim(p);
    }
    Shape astr = shape_strides(a.shape());
    Shape ostr = shape_strides(oshape);
    // Map flat output index -> flat input index.
    Shape src_stride(static_cast<std::size_t>(r));
    for (int i = 0; i < r; ++i) {
        src_stride[static_cast<std::size_t>(i)] = astr[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    }
    std::int64_t n = a.numel();
    Tensor<T> out = Tensor<T>::zeros(oshape);
    auto& ov = out.mutable_values();
    const auto& av = a.values();
    std::vector<std::int64_t> src_index(static_cast<std::size_t>(n));
    for (std::int64_t flat = 0; flat < n; ++flat) {
        std::int64_t rem = flat, src = 0;
        for (int d = 0; d < r; ++d) {
            std::int64_t c = rem / ostr[static_cast<std::size_t>(d)];
            rem -= c * ostr[static_cast<std::size_t>(d)];
            src += c * src_stride[static_cast<std::size_t>(d)];
        }
        ov[static_cast<std::size_t>(flat)] = av[static_cast<std::size_t>(src)];
        src_index[static_cast<std::size_t>(flat)] = src;
    }
    if (detail::wants_grad(a)) {
        out.set_requires_grad(true);
        active_tape<T>()->record(
            "permute", [an = a.node(), on = out.node(), src_index = std::move(src_index)] {
                if (on->grad.empty()) return;
                auto& g = an->grad;
                if (g.empty()) g.assign(an->value.size(), T(0));
                for (std::size_t i = 0; i < src_index.size(); ++i) {
                    g[static_cast<std::size_t>(src_index[i])] += on->grad[i];
                }
            });
    }
    return out;
}

template <typename T>
Tensor<T> slice(const Tensor<T>& a, const Shape& starts, const Shape& sizes) {
    int r = a.rank();
    if (static_cast<int>(starts.size()) != r || static_cast<int>(sizes.size()) != r) {
        throw UsageError("slice: starts/sizes must have one entry per axis");
    }
    for (int d = 0; d < r; ++d) {
        if (starts[static_cast<std::size_t>(d)] < 0 || sizes[static_cast<std::size_t>(d)] < 1 ||
            starts[static_cast<std::size_t>(d)] + sizes[static_cast<std::size_t>(d)] > a.dim(d)) {
            throw UsageError("slice: range out of bounds on axis " + std::to_string(d));
        }
    }
    Shape astr = shape_strides(a.shape());
    Shape ostr = shape_strides(sizes);
    std::int64_t n = shape_numel(sizes);
    Tensor<T> out = Tensor<T>::zeros(sizes);
    auto& ov = out.mutable_values();
    const auto& av = a.values();
    std::int64_t base = 0;
    for (int d = 0; d < r; ++d) base += starts[static_cast<std::size_t>(d)] * astr[static_cast<std::size_t>(d)];
    for (std::int64_t flat = 0; flat < n; ++flat) {
        std::int64_t rem = flat, src = base;
        for (int d = 0; d < r; ++d) {
            std::int64_t c = rem / ostr[static_cast<std::size_t>(d)];
            rem -= c * ostr[static_cast<std::size_t>(d)];
            src += c * astr[static_cast<std::size_t>(d)];
        }
        ov[static_cast<std::size_t>(flat)] = av[static_cast<std::size_t>(src)];
    }
    if (detail::wants_grad(a)) {
        out.set_requires_grad(true);
        active_tape<T>()->record("slice", [an = a.node(), on = out.node(), astr, ostr, base, n,
                                           r] {
            if (on->grad.empty()) return;
            auto& g = an->grad;
            if (g.empty()) g.assign(an->value.size(), T(0));
            for (std::int64_t flat = 0; flat < n; ++flat) {
                std::int64_t rem = flat, src = base;
                for (int d = 0; d < r; ++d) {
                    std::int64_t c = rem / ostr[static_cast<std::size_t>(d)];
                    rem -= c * ostr[static_cast<std::size_t>(d)];
                    src += c * astr[static_cast<std::size_t>(d)];
                }
                g[static_cast<std::size_t>(src)] += on->grad[static_cast<std::size_t>(flat)];
            }
        });
    }
    return out;
}

// Zero padding, (before, after) per axis.
template <typename T>
Tensor<T> pad(const Tensor<T>& a, const Shape& before, const Shape& after) {
    int r = a.rank();
    if (static_cast<int>(before.size()) != r || static_cast<int>(after.size()) != r) {
        throw UsageError("pad: before/after must have one entry per axis");
    }
    Shape oshape(static_cast<std::size_t>(r));
    for (int d = 0; d < r; ++d) {
        if (before[static_cast<std::size_t>(d)] < 0 || after[static_cast<std::size_t>(d)] < 0) {
            throw UsageError("pad: negative padding");
        }
        oshape[static_cast<std::size_t>(d)] =
            a.dim(d) + before[static_cast<std::size_t>(d)] + after[static_cast<std::size_t>(d)];
    }
    Tensor<T> out = Tensor<T>::zeros(oshape);
    Shape astr = shape_strides(a.shape());
    Shape ostr = shape_strides(oshape);
    std::int64_t n = a.numel();
    auto& ov = out.mutable_values();
    const auto& av = a.values();
    std::int64_t base = 0;
    for (int d = 0; d < r; ++d) base += before[static_cast<std::size_t>(d)] * ostr[static_cast<std::size_t>(d)];
    for (std::int64_t flat = 0; flat < n; ++flat) {
        std::int64_t rem = flat, dst = base;
        for (int d = 0; d < r; ++d) {
            std::int64_t c = rem / astr[static_cast<std::size_t>(d)];
            rem -= c * astr[static_cast<std::size_t>(d)];
            dst += c * ostr[static_cast<std::size_t>(d)];
        }
        ov[static_cast<std::size_t>(dst)] = av[static_cast<std::size_t>(flat)];
    }
    if (detail::wants_grad(a)) {
        out.set_requires_grad(true);
        active_tape<T>()->record("pad", [an = a.node(), on = out.node(), astr, ostr, base, n, r] {
            if (on->grad.empty()) return;
            auto& g = an->grad;
            if (g.empty()) g.assign(an->value.size(), T(0));
            for (std::int64_t flat = 0; flat < n; ++flat) {
                std::int64_t rem = flat, dst = base;
                for (int d = 0; d < r; ++d) {
                    std::int64_t c = rem / astr[static_cast<std::size_t>(d)];
                    rem -= c * astr[static_cast<std::size_t>(d)];
                    dst += c * ostr[static_cast<std::size_t>(d)];
                }
                g[static_cast<std::size_t>(flat)] += on->grad[static_cast<std::size_t>(dst)];
            }
        });
    }
    return out;
}

// Cyclic shift along the given axes; positive shift moves content toward
// higher indices (wrapping).
template <typename T>
Tensor<T> roll(const Tensor<T>& a, const std::vector<std::int64_t>& shifts,
               const std::vector<int>& axes) {
    if (shifts.size() != axes.size()) throw UsageError("roll: shifts/axes length mismatch");
    int r = a.rank();
    std::vector<std::int64_t> shift_per_axis(static_cast<std::size_t>(r), 0);
    for (std::size_t i = 0; i < axes.size(); ++i) {
        int ax = axes[i];
        if (ax < 0 || ax >= r) throw UsageError("roll: axis out of range");
        std::int64_t e = a.dim(ax);
        std::int64_t s = shifts[i] % e;
        if (s < 0) s += e;
        shift_per_axis[static_cast<std::size_t>(ax)] = s;
    }
    Shape str = shape_strides(a.shape());
    std::int64_t n = a.numel();
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    auto& ov = out.mutable_values();
    const auto& av = a.values();
    for (std::int64_t flat = 0; flat < n; ++flat) {
        std::int64_t rem = flat, dst = 0;
        for (int d = 0; d < r; ++d) {
            std::int64_t c = rem / str[static_cast<std::size_t>(d)];
            rem -= c * str[static_cast<std::size_t>(d)];
            std::int64_t cd = c + shift_per_axis[static_cast<std::size_t>(d)];
            if (cd >= a.dim(d)) cd -= a.dim(d);
            dst += cd * str[static_cast<std::size_t>(d)];
        }
        ov[static_cast<std::size_t>(dst)] = av[static_cast<std::size_t>(flat)];
    }
    if (detail::wants_grad(a)) {
        out.set_requires_grad(true);
        active_tape<T>()->record(
            "roll", [an = a.node(), on = out.node(), shift_per_axis, str, n, r] {
                if (on->grad.empty()) return;
                auto& g = an->grad;
                if (g.empty()) g.assign(an->value.size(), T(0));
                for (std::int64_t flat = 0; flat < n; ++flat) {
                    std::int64_t rem = flat, dst = 0;
                    for (int d = 0; d < r; ++d) {
                        std::int64_t c = rem / str[static_cast<std::size_t>(d)];
                        rem -= c * str[static_cast<std::size_t>(d)];
                        std::int64_t e = an->shape[static_cast<std::size_t>(d)];
                        std::int64_t cd = c + shift_per_axis[static_cast<std::size_t>(d)];
                        if (cd >= e) cd -= e;
                        dst += cd * str[static_cast<std::size_t>(d)];
                    }
                    g[static_cast<std::size_t>(flat)] += on->grad[static_cast<std::size_t>(dst)];
                }
            });
    }
    return out;
}

// Concatenation along an axis; inputs must agree on every other extent.
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
    if (parts.empty()) throw UsageError("concat: no inputs");
    int r = parts[0].rank();
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r) throw UsageError("concat: axis out of range");
    Shape oshape = parts[0].shape();
    for (std::size_t i = 1; i < parts.size(); ++i) {
        if (parts[i].rank() != r) throw UsageError("concat: rank mismatch");
        for (int d = 0; d < r; ++d) {
            if (d == axis) continue;
            if (parts[i].dim(d) != oshape[static_cast<std::size_t>(d)]) {
                throw UsageError("concat: extent mismatch on axis " + std::to_string(d));
            }
        }
        oshape[static_cast<std::size_t>(axis)] += parts[i].dim(axis);
    }
    std::int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= oshape[static_cast<std::size_t>(d)];
    for (int d = axis + 1; d < r; ++d) inner *= oshape[static_cast<std::size_t>(d)];
    Tensor<T> out = Tensor<T>::zeros(oshape);
    auto& ov = out.mutable_values();
    std::int64_t axis_total = oshape[static_cast<std::size_t>(axis)];
    std::int64_t offset = 0;
    std::vector<std::int64_t> part_offsets(parts.size());
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
        part_offsets[pi] = offset;
        std::int64_t pa = parts[pi].dim(axis);
        const auto& pv = parts[pi].values();
        for (std::int64_t o = 0; o < outer; ++o) {
            const T* src = pv.data() + o * pa * inner;
            T* dst = ov.data() + (o * axis_total + offset) * inner;
            std::copy(src, src + pa * inner, dst);
        }
        offset += pa;
    }
    bool any_grad = false;
    for (const auto& p : parts) any_grad = any_grad || p.requires_grad();
    if (auto* tp = active_tape<T>(); tp && any_grad) {
        out.set_requires_grad(true);
        std::vector<std::shared_ptr<TensorNode<T>>> nodes;
        nodes.reserve(parts.size());
        for (const auto& p : parts) nodes.push_back(p.node());
        tp->record("concat", [nodes = std::move(nodes), on = out.node(),
                              part_offsets = std::move(part_offsets), outer, inner, axis_total,
                              axis] {
            if (on->grad.empty()) return;
            for (std::size_t pi = 0; pi < nodes.size(); ++pi) {
                auto& nd = nodes[pi];
                if (!nd->requires_grad) continue;
                if (nd->grad.empty()) nd->grad.assign(nd->value.size(), T(0));
                std::int64_t pa = nd->shape[static_cast<std::size_t>(axis)];
                for (std::int64_t o = 0; o < outer; ++o) {
                    const T* src = on->grad.data() + (o * axis_total + part_offsets[pi]) * inner;
                    T* dst = nd->grad.data() + o * pa * inner;
                    for (std::int64_t i = 0; i < pa * inner; ++i) dst[i] += src[i];
                }
            }
        });
    }
    return out;
}

}  // namespace hdrfuse::ops
