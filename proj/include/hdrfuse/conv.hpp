#pragma once

#include "hdrfuse/ops.hpp"

namespace hdrfuse::ops {

struct Conv2dSpec {
    int stride = 1;
    int dilation = 1;
    int padding = 0;
};

// Symmetric padding that preserves spatial size at stride 1.
inline int same_padding(std::int64_t ksize, int dilation) {
    return static_cast<int>(dilation * (ksize - 1) / 2);
}

inline std::int64_t conv_out_extent(std::int64_t in, std::int64_t k, const Conv2dSpec& s) {
    return (in + 2 * s.padding - static_cast<std::int64_t>(s.dilation) * (k - 1) - 1) / s.stride +
           1;
}

namespace detail_conv {

struct Dims {
    std::int64_t B, H, W, Ci, kh, kw, Co, Ho, Wo;
    int st, dil, p;
};

// Tiled NHWC cross-correlation. Output-channel tiles accumulate in registers
// across the (tap, input-channel) reduction. Used for the forward pass and,
// with a flipped transposed kernel, for the input gradient.
template <typename T>
void forward_kernel(const T* xv, const T* kv, T* yv, const Dims& d, bool accumulate) {
    parallel_for(d.B * d.Ho, [&](std::int64_t r0, std::int64_t r1) {
        for (std::int64_t r = r0; r < r1; ++r) {
            std::int64_t b = r / d.Ho, oy = r % d.Ho;
            const T* xb = xv + b * d.H * d.W * d.Ci;
            for (std::int64_t ox = 0; ox < d.Wo; ++ox) {
                T* out_row = yv + ((b * d.Ho + oy) * d.Wo + ox) * d.Co;
                auto taps = [&](auto&& per_tap) {
                    for (std::int64_t dy = 0; dy < d.kh; ++dy) {
                        std::int64_t iy = oy * d.st - d.p + dy * d.dil;
                        if (iy < 0 || iy >= d.H) continue;
                        for (std::int64_t dx = 0; dx < d.kw; ++dx) {
                            std::int64_t ix = ox * d.st - d.p + dx * d.dil;
                            if (ix < 0 || ix >= d.W) continue;
                            per_tap(xb + (iy * d.W + ix) * d.Ci,
                                    kv + (dy * d.kw + dx) * d.Ci * d.Co);
                        }
                    }
                };
                ops::detail::tile_cascade(
                    d.Co,
                    [&](std::int64_t co0, auto tw) {
                        ops::detail::tile_reduce<tw()>(out_row + co0, [&](auto&& acc) {
                            taps([&](const T* xrow, const T* krow) {
                                for (std::int64_t ci = 0; ci < d.Ci; ++ci) {
                                    acc(xrow[ci], krow + ci * d.Co + co0);
                                }
                            });
                        }, accumulate);
                    },
                    [&](std::int64_t co0) {
                        T acc = T(0);
                        taps([&](const T* xrow, const T* krow) {
                            for (std::int64_t ci = 0; ci < d.Ci; ++ci) {
                                acc += xrow[ci] * krow[ci * d.Co + co0];
                            }
                        });
                        if (accumulate) {
                            out_row[co0] += acc;
                        } else {
                            out_row[co0] = acc;
                        }
                    });
            }
        }
    });
}

// Valid output range for one kernel tap: o*st - p + tap*dil must land inside
// [0, in_extent).
inline void tap_range(std::int64_t tap, std::int64_t in_extent, std::int64_t out_extent, int st,
                      int dil, int p, std::int64_t& lo, std::int64_t& hi) {
    std::int64_t shift = tap * dil - p;  // i = o*st + shift
    lo = shift < 0 ? (-shift + st - 1) / st : 0;
    hi = (in_extent - 1 - shift) / st + 1;
    lo = std::max<std::int64_t>(lo, 0);
    hi = std::min(hi, out_extent);
}

}  // namespace detail_conv

namespace detail_conv {

// Shared implementation; `bias` may be undefined. With a bias the output is
// prefilled and the kernel accumulates on top, and the adjoint also reduces
// the bias gradient, so the whole layer is one tape entry.
template <typename T>
Tensor<T> conv2d_impl(const Tensor<T>& x, const Tensor<T>& k, const Tensor<T>& bias,
                      const Conv2dSpec& spec) {
    bool batched = x.rank() == 4;
    if (!batched && x.rank() != 3) throw UsageError("conv2d: input must be [H,W,C] or [B,H,W,C]");
    if (k.rank() != 4) throw UsageError("conv2d: kernel must be [kh,kw,Cin,Cout]");
    if (spec.stride < 1 || spec.dilation < 1 || spec.padding < 0) {
        throw UsageError("conv2d: stride/dilation must be >= 1 and padding >= 0");
    }
    detail_conv::Dims d;
    d.B = batched ? x.dim(0) : 1;
    d.H = x.dim(batched ? 1 : 0);
    d.W = x.dim(batched ? 2 : 1);
    d.Ci = x.dim(batched ? 3 : 2);
    d.kh = k.dim(0);
    d.kw = k.dim(1);
    if (d.kh % 2 == 0 || d.kw % 2 == 0) throw UsageError("conv2d: kernel extents must be odd");
    if (k.dim(2) != d.Ci) {
        throw UsageError("conv2d: kernel expects " + std::to_string(k.dim(2)) +
                         " input channels, input has " + std::to_string(d.Ci));
    }
    d.Co = k.dim(3);
    d.st = spec.stride;
    d.dil = spec.dilation;
    d.p = spec.padding;
    d.Ho = conv_out_extent(d.H, d.kh, spec);
    d.Wo = conv_out_extent(d.W, d.kw, spec);
    if (d.Ho < 1 || d.Wo < 1) {
        throw UsageError("conv2d: configuration yields non-positive output extent (" +
                         std::to_string(d.Ho) + "x" + std::to_string(d.Wo) + ")");
    }
    const bool has_bias = bias.defined();
    if (has_bias && bias.numel() != d.Co) {
        throw UsageError("conv2d: bias length must match output channels");
    }
    Shape oshape = batched ? Shape{d.B, d.Ho, d.Wo, d.Co} : Shape{d.Ho, d.Wo, d.Co};
    Tensor<T> out = Tensor<T>::zeros(oshape);
    if (has_bias) {
        auto& ov = out.mutable_values();
        const auto& bv = bias.values();
        std::int64_t rows_total = d.B * d.Ho * d.Wo;
        parallel_for(rows_total, [&](std::int64_t r0, std::int64_t r1) {
            for (std::int64_t r = r0; r < r1; ++r) {
                T* row = ov.data() + r * d.Co;
                for (std::int64_t c = 0; c < d.Co; ++c) row[c] = bv[static_cast<std::size_t>(c)];
            }
        }, std::max<std::int64_t>(1, ops::detail::kElemGrain / d.Co));
    }
    detail_conv::forward_kernel(x.values().data(), k.values().data(),
                                out.mutable_values().data(), d, has_bias);
    detail::finite_check("conv2d", out);

    bool bias_grad = has_bias && bias.requires_grad();
    if (auto* tp = active_tape<T>();
        tp && (x.requires_grad() || k.requires_grad() || bias_grad)) {
        out.set_requires_grad(true);
        auto bn = has_bias ? bias.node() : nullptr;
        tp->record("conv2d", [xn = x.node(), kn = k.node(), bn, on = out.node(), d] {
            if (on->grad.empty()) return;
            const T corrupt = debug::adjoint_scale<T>("conv2d");
            std::vector<T> scaled;
            if (corrupt != T(1)) {
                scaled = on->grad;
                for (auto& v : scaled) v *= corrupt;
            }
            const T* gy = corrupt != T(1) ? scaled.data() : on->grad.data();
            const T* xv = xn->value.data();
            const T* kv = kn->value.data();
            if (bn && bn->requires_grad) {
                if (bn->grad.empty()) bn->grad.assign(bn->value.size(), T(0));
                T* gb = bn->grad.data();
                std::int64_t rows_total = d.B * d.Ho * d.Wo;
                for (std::int64_t r = 0; r < rows_total; ++r) {
                    const T* row = gy + r * d.Co;
                    for (std::int64_t c = 0; c < d.Co; ++c) gb[c] += row[c];
                }
            }
            if (xn->requires_grad) {
                if (xn->grad.empty()) xn->grad.assign(xn->value.size(), T(0));
                T* gx = xn->grad.data();
                std::int64_t back_pad = d.dil * (d.kh - 1) - d.p;
                std::int64_t back_pad_w = d.dil * (d.kw - 1) - d.p;
                if (d.st == 1 && back_pad >= 0 && back_pad == back_pad_w) {
                    // Stride-1 input gradient is itself a correlation of the
                    // output gradient with the flipped, channel-transposed
                    // kernel; reuse the tiled kernel.
                    std::vector<T> ktc(kn->value.size());
                    for (std::int64_t dy = 0; dy < d.kh; ++dy) {
                        for (std::int64_t dx = 0; dx < d.kw; ++dx) {
                            const T* src = kv + (dy * d.kw + dx) * d.Ci * d.Co;
                            T* dst = ktc.data() +
                                     ((d.kh - 1 - dy) * d.kw + (d.kw - 1 - dx)) * d.Co * d.Ci;
                            for (std::int64_t ci = 0; ci < d.Ci; ++ci) {
                                for (std::int64_t co = 0; co < d.Co; ++co) {
                                    dst[co * d.Ci + ci] = src[ci * d.Co + co];
                                }
                            }
                        }
                    }
                    detail_conv::Dims bd;
                    bd.B = d.B;
                    bd.H = d.Ho;
                    bd.W = d.Wo;
                    bd.Ci = d.Co;
                    bd.kh = d.kh;
                    bd.kw = d.kw;
                    bd.Co = d.Ci;
                    bd.Ho = d.H;
                    bd.Wo = d.W;
                    bd.st = 1;
                    bd.dil = d.dil;
                    bd.p = static_cast<int>(back_pad);
                    detail_conv::forward_kernel(gy, ktc.data(), gx, bd, true);
                } else {
                    // General gather: kernel transposed to [kh,kw,Co,Ci] so
                    // the inner loop is an axpy over input channels.
                    std::vector<T> kt(kn->value.size());
                    for (std::int64_t tap = 0; tap < d.kh * d.kw; ++tap) {
                        const T* src = kv + tap * d.Ci * d.Co;
                        T* dst = kt.data() + tap * d.Ci * d.Co;
                        for (std::int64_t ci = 0; ci < d.Ci; ++ci) {
                            for (std::int64_t co = 0; co < d.Co; ++co) {
                                dst[co * d.Ci + ci] = src[ci * d.Co + co];
                            }
                        }
                    }
                    parallel_for(d.B * d.H, [&](std::int64_t r0, std::int64_t r1) {
                        for (std::int64_t r = r0; r < r1; ++r) {
                            std::int64_t b = r / d.H, iy = r % d.H;
                            const T* gyb = gy + b * d.Ho * d.Wo * d.Co;
                            for (std::int64_t ix = 0; ix < d.W; ++ix) {
                                T* gxrow = gx + ((b * d.H + iy) * d.W + ix) * d.Ci;
                                auto taps = [&](auto&& per_tap) {
                                    for (std::int64_t dy = 0; dy < d.kh; ++dy) {
                                        std::int64_t num_y = iy + d.p - dy * d.dil;
                                        if (num_y < 0 || num_y % d.st != 0) continue;
                                        std::int64_t oy = num_y / d.st;
                                        if (oy >= d.Ho) continue;
                                        for (std::int64_t dx = 0; dx < d.kw; ++dx) {
                                            std::int64_t num_x = ix + d.p - dx * d.dil;
                                            if (num_x < 0 || num_x % d.st != 0) continue;
                                            std::int64_t ox = num_x / d.st;
                                            if (ox >= d.Wo) continue;
                                            per_tap(gyb + (oy * d.Wo + ox) * d.Co,
                                                    kt.data() + (dy * d.kw + dx) * d.Ci * d.Co);
                                        }
                                    }
                                };
                                ops::detail::tile_cascade(
                                    d.Ci,
                                    [&](std::int64_t ci0, auto tw) {
                                        ops::detail::tile_reduce<tw()>(
                                            gxrow + ci0,
                                            [&](auto&& acc) {
                                                taps([&](const T* gyrow, const T* ktrow) {
                                                    for (std::int64_t co = 0; co < d.Co; ++co) {
                                                        acc(gyrow[co], ktrow + co * d.Ci + ci0);
                                                    }
                                                });
                                            },
                                            true);
                                    },
                                    [&](std::int64_t ci0) {
                                        T acc = T(0);
                                        taps([&](const T* gyrow, const T* ktrow) {
                                            for (std::int64_t co = 0; co < d.Co; ++co) {
                                                acc += gyrow[co] * ktrow[co * d.Ci + ci0];
                                            }
                                        });
                                        gxrow[ci0] += acc;
                                    });
                            }
                        }
                    });
                }
            }
            if (kn->requires_grad) {
                if (kn->grad.empty()) kn->grad.assign(kn->value.size(), T(0));
                T* gk = kn->grad.data();
                // Partition by kernel tap and input channel; each slot owns a
                // disjoint gk row and reduces over its valid output rectangle
                // in register tiles.
                parallel_for(d.kh * d.kw * d.Ci, [&](std::int64_t t0, std::int64_t t1) {
                    for (std::int64_t t = t0; t < t1; ++t) {
                        std::int64_t dy = t / (d.kw * d.Ci);
                        std::int64_t dx = (t / d.Ci) % d.kw;
                        std::int64_t ci = t % d.Ci;
                        std::int64_t oy_lo, oy_hi, ox_lo, ox_hi;
                        detail_conv::tap_range(dy, d.H, d.Ho, d.st, d.dil, d.p, oy_lo, oy_hi);
                        detail_conv::tap_range(dx, d.W, d.Wo, d.st, d.dil, d.p, ox_lo, ox_hi);
                        T* gkrow = gk + ((dy * d.kw + dx) * d.Ci + ci) * d.Co;
                        auto pixels = [&](auto&& per_pixel) {
                            for (std::int64_t b = 0; b < d.B; ++b) {
                                const T* xb = xv + b * d.H * d.W * d.Ci;
                                const T* gyb = gy + b * d.Ho * d.Wo * d.Co;
                                for (std::int64_t oy = oy_lo; oy < oy_hi; ++oy) {
                                    std::int64_t iy = oy * d.st - d.p + dy * d.dil;
                                    const T* xrow = xb + (iy * d.W - d.p + dx * d.dil) * d.Ci +
                                                    ci + ox_lo * d.st * d.Ci;
                                    const T* gyrow = gyb + (oy * d.Wo + ox_lo) * d.Co;
                                    for (std::int64_t ox = ox_lo; ox < ox_hi; ++ox) {
                                        per_pixel(*xrow, gyrow);
                                        xrow += d.st * d.Ci;
                                        gyrow += d.Co;
                                    }
                                }
                            }
                        };
                        ops::detail::tile_cascade(
                            d.Co,
                            [&](std::int64_t co0, auto tw) {
                                ops::detail::tile_reduce<tw()>(gkrow + co0, [&](auto&& acc) {
                                    pixels([&](T xval, const T* gyrow) {
                                        acc(xval, gyrow + co0);
                                    });
                                }, true);
                            },
                            [&](std::int64_t co0) {
                                T acc = T(0);
                                pixels([&](T xval, const T* gyrow) { acc += xval * gyrow[co0]; });
                                gkrow[co0] += acc;
                            });
                    }
                });
            }
        });
    }
    return out;
}

}  // namespace detail_conv

// 2-D cross-correlation, NHWC. x is [H,W,Cin] or [B,H,W,Cin]; k is
// [kh,kw,Cin,Cout]; output extent (in + 2p - dil*(k-1) - 1)/stride + 1.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& k, const Conv2dSpec& spec = {}) {
    return detail_conv::conv2d_impl(x, k, Tensor<T>{}, spec);
}

// conv2d with a per-output-channel bias, the standard layer building block.
template <typename T>
Tensor<T> conv2d_bias(const Tensor<T>& x, const Tensor<T>& k, const Tensor<T>& b,
                      const Conv2dSpec& spec = {}) {
    return detail_conv::conv2d_impl(x, k, b, spec);
}

}  // namespace hdrfuse::ops
