#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>
#include <vector>

#include "hdrfuse/conv.hpp"
#include "hdrfuse/ops.hpp"

// Dual-branch attention block: windowed multi-head self-attention for
// long-range context, plus a convolutional local-context extractor gated by
// channel attention. Token maps are [H,W,D] with features innermost.

namespace hdrfuse {

template <typename T>
struct WindowSet {
    Tensor<T> tokens;  // [num_windows, ws*ws, D]
    int H = 0, W = 0;  // token-map extents before padding
    int ws = 0;
    int shift = 0;
    int nwh = 0, nww = 0;
    std::vector<std::uint8_t> valid;  // per token; zero marks padding
};

template <typename T>
struct CaVitParams {
    Tensor<T> norm1_g, norm1_b;      // shared LN feeding both branches
    Tensor<T> qkv_w, qkv_b;          // [D,3D], [3D]
    Tensor<T> relpos;                // [(2ws-1)^2, heads]
    Tensor<T> proj_w, proj_b;        // [D,D], [D]
    Tensor<T> norm2_g, norm2_b;      // LN before the MLP
    Tensor<T> mlp1_w, mlp1_b;        // [D, mlp_ratio*D]
    Tensor<T> mlp2_w, mlp2_b;        // [mlp_ratio*D, D]
    Tensor<T> lce_conv_w, lce_conv_b;  // [3,3,D,D], [D]
    Tensor<T> lce_fc1_w, lce_fc1_b;    // [D, D/r]
    Tensor<T> lce_fc2_w, lce_fc2_b;    // [D/r, D]
    int heads = 1;
};

// ---------------------------------------------------------------------------
// Window partitioning
// ---------------------------------------------------------------------------

namespace detail_attn {

// Token routing for one (H, W, ws, shift) geometry: cyclic shift by
// (-shift, -shift), zero-pad up to window multiples, tile. Cached because the
// same geometry repeats for every block of every forward pass.
struct WindowMap {
    int nwh = 0, nww = 0;
    std::vector<std::int64_t> to_window;    // per window slot: source token or -1 (padding)
    std::vector<std::int64_t> from_window;  // per token: its window slot
    std::vector<std::uint8_t> valid;
};

inline std::shared_ptr<const WindowMap> window_map(int H, int W, int ws, int shift) {
    static std::mutex mu;
    static std::map<std::tuple<int, int, int, int>, std::shared_ptr<const WindowMap>> cache;
    std::lock_guard lock(mu);
    auto key = std::make_tuple(H, W, ws, shift);
    if (auto it = cache.find(key); it != cache.end()) return it->second;

    auto m = std::make_shared<WindowMap>();
    m->nwh = (H + ws - 1) / ws;
    m->nww = (W + ws - 1) / ws;
    std::int64_t slots = static_cast<std::int64_t>(m->nwh) * m->nww * ws * ws;
    m->to_window.assign(static_cast<std::size_t>(slots), -1);
    m->from_window.assign(static_cast<std::size_t>(H) * W, -1);
    m->valid.assign(static_cast<std::size_t>(slots), 0);
    for (int by = 0; by < m->nwh; ++by) {
        for (int bx = 0; bx < m->nww; ++bx) {
            for (int wy = 0; wy < ws; ++wy) {
                for (int wx = 0; wx < ws; ++wx) {
                    std::int64_t slot =
                        ((static_cast<std::int64_t>(by) * m->nww + bx) * ws + wy) * ws + wx;
                    int py = by * ws + wy;  // coordinates in the shifted, padded map
                    int px = bx * ws + wx;
                    if (py >= H || px >= W) continue;
                    int sy = (py + shift) % H;
                    int sx = (px + shift) % W;
                    m->to_window[static_cast<std::size_t>(slot)] =
                        static_cast<std::int64_t>(sy) * W + sx;
                    m->from_window[static_cast<std::size_t>(sy) * W + sx] = slot;
                    m->valid[static_cast<std::size_t>(slot)] = 1;
                }
            }
        }
    }
    if (cache.size() > 64) cache.clear();
    cache[key] = m;
    return m;
}

}  // namespace detail_attn

// Cyclic-shifts by (-shift, -shift), zero-pads up to window multiples, and
// tiles into non-overlapping ws x ws windows. The valid mask marks real
// tokens; padding participates in no attention.
template <typename T>
WindowSet<T> window_partition(const Tensor<T>& t, int ws, int shift) {
    if (t.rank() != 3) throw UsageError("window_partition expects a [H,W,D] token map");
    if (ws < 2) throw UsageError("window size must be >= 2");
    if (shift != 0 && shift != ws / 2) {
        throw UsageError("window shift must be 0 or ws/2");
    }
    const int H = static_cast<int>(t.dim(0));
    const int W = static_cast<int>(t.dim(1));
    const std::int64_t D = t.dim(2);
    auto map = detail_attn::window_map(H, W, ws, shift);
    const std::int64_t slots = static_cast<std::int64_t>(map->to_window.size());

    WindowSet<T> out;
    out.tokens = Tensor<T>::zeros({static_cast<std::int64_t>(map->nwh) * map->nww,
                                   static_cast<std::int64_t>(ws) * ws, D});
    out.H = H;
    out.W = W;
    out.ws = ws;
    out.shift = shift;
    out.nwh = map->nwh;
    out.nww = map->nww;
    out.valid = map->valid;
    const T* src = t.values().data();
    T* dst = out.tokens.mutable_values().data();
    parallel_for(slots, [&](std::int64_t s0, std::int64_t s1) {
        for (std::int64_t s = s0; s < s1; ++s) {
            std::int64_t from = map->to_window[static_cast<std::size_t>(s)];
            if (from >= 0) std::copy_n(src + from * D, D, dst + s * D);
        }
    }, 1024);
    if (ops::detail::wants_grad(t)) {
        out.tokens.set_requires_grad(true);
        active_tape<T>()->record("window_partition", [tn = t.node(), on = out.tokens.node(), map,
                                                      slots, D] {
            if (on->grad.empty()) return;
            if (tn->grad.empty()) tn->grad.assign(tn->value.size(), T(0));
            T* gt = tn->grad.data();
            const T* go = on->grad.data();
            // Each source token feeds exactly one slot, so rows are disjoint.
            parallel_for(slots, [&](std::int64_t s0, std::int64_t s1) {
                for (std::int64_t s = s0; s < s1; ++s) {
                    std::int64_t from = map->to_window[static_cast<std::size_t>(s)];
                    if (from < 0) continue;
                    const T* grow = go + s * D;
                    T* trow = gt + from * D;
                    for (std::int64_t c = 0; c < D; ++c) trow[c] += grow[c];
                }
            }, 1024);
        });
    }
    return out;
}

// Exact inverse: un-tile, crop padding, undo the cyclic shift.
template <typename T>
Tensor<T> window_reverse(const WindowSet<T>& w) {
    const std::int64_t D = w.tokens.dim(2);
    if (w.tokens.dim(0) != static_cast<std::int64_t>(w.nwh) * w.nww ||
        w.tokens.dim(1) != static_cast<std::int64_t>(w.ws) * w.ws) {
        throw UsageError("window_reverse: inconsistent window metadata");
    }
    auto map = detail_attn::window_map(w.H, w.W, w.ws, w.shift);
    if (map->nwh != w.nwh || map->nww != w.nww) {
        throw UsageError("window_reverse: inconsistent window metadata");
    }
    const std::int64_t tokens = static_cast<std::int64_t>(w.H) * w.W;
    Tensor<T> out = Tensor<T>::zeros({w.H, w.W, D});
    const T* src = w.tokens.values().data();
    T* dst = out.mutable_values().data();
    parallel_for(tokens, [&](std::int64_t s0, std::int64_t s1) {
        for (std::int64_t s = s0; s < s1; ++s) {
            std::int64_t slot = map->from_window[static_cast<std::size_t>(s)];
            std::copy_n(src + slot * D, D, dst + s * D);
        }
    }, 1024);
    if (ops::detail::wants_grad(w.tokens)) {
        out.set_requires_grad(true);
        active_tape<T>()->record("window_reverse", [wn = w.tokens.node(), on = out.node(), map,
                                                    tokens, D] {
            if (on->grad.empty()) return;
            if (wn->grad.empty()) wn->grad.assign(wn->value.size(), T(0));
            T* gw = wn->grad.data();
            const T* go = on->grad.data();
            // Each window slot holds at most one token; padding slots get
            // no gradient, matching the crop.
            parallel_for(tokens, [&](std::int64_t s0, std::int64_t s1) {
                for (std::int64_t s = s0; s < s1; ++s) {
                    std::int64_t slot = map->from_window[static_cast<std::size_t>(s)];
                    const T* grow = go + s * D;
                    T* wrow = gw + slot * D;
                    for (std::int64_t c = 0; c < D; ++c) wrow[c] += grow[c];
                }
            }, 1024);
        });
    }
    return out;
}

// Relative-offset index table for a ws x ws window: entry (i,j) addresses the
// learned bias for the spatial offset between tokens i and j.
inline std::vector<int> relative_position_index(int ws) {
    const int n = ws * ws;
    std::vector<int> idx(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i) {
        int yi = i / ws, xi = i % ws;
        for (int j = 0; j < n; ++j) {
            int yj = j / ws, xj = j % ws;
            idx[static_cast<std::size_t>(i) * n + j] =
                (yi - yj + ws - 1) * (2 * ws - 1) + (xi - xj + ws - 1);
        }
    }
    return idx;
}

namespace detail_attn {

// Optional probe filled by the fused attention op so tests can inspect the
// attention distribution.
template <typename T>
struct AttnTrace {
    std::vector<T> probs;  // [nw, heads, n, n]
};

// Fused scaled-dot-product attention over windows with per-head relative
// position bias and key masking. qkv is [nw, n, 3D] laid out as Q | K | V.
template <typename T>
Tensor<T> window_msa_core(const Tensor<T>& qkv, const Tensor<T>& relpos, int heads, int ws,
                          const std::vector<std::uint8_t>& valid,
                          AttnTrace<T>* trace = nullptr) {
    const std::int64_t nw = qkv.dim(0);
    const std::int64_t n = qkv.dim(1);
    const std::int64_t D3 = qkv.dim(2);
    if (D3 % 3 != 0) throw UsageError("window attention: qkv feature axis must be 3*D");
    const std::int64_t D = D3 / 3;
    if (D % heads != 0) throw UsageError("window attention: D must be divisible by heads");
    const std::int64_t dh = D / heads;
    if (n != static_cast<std::int64_t>(ws) * ws) {
        throw UsageError("window attention: token count does not match window size");
    }
    if (valid.size() != static_cast<std::size_t>(nw * n)) {
        throw UsageError("window attention: mask size mismatch");
    }
    const std::vector<int> relidx = relative_position_index(ws);
    if (relpos.dim(0) != (2 * ws - 1) * (2 * ws - 1) || relpos.dim(1) != heads) {
        throw UsageError("window attention: relative position table shape mismatch");
    }
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
    constexpr T mask_value = T(-1e30);

    Tensor<T> out = Tensor<T>::zeros({nw, n, D});
    // Attention probabilities are kept for the adjoint.
    auto probs = std::make_shared<std::vector<T>>(
        static_cast<std::size_t>(nw) * heads * n * n, T(0));

    const T* qkv_v = qkv.values().data();
    const T* rp = relpos.values().data();
    T* out_v = out.mutable_values().data();

    // Per-head bias matrices gathered once; shared across windows.
    std::vector<T> bias_mat(static_cast<std::size_t>(heads) * n * n);
    for (int h = 0; h < heads; ++h) {
        T* bm = bias_mat.data() + static_cast<std::size_t>(h) * n * n;
        for (std::int64_t ij = 0; ij < n * n; ++ij) {
            bm[ij] = rp[static_cast<std::int64_t>(relidx[static_cast<std::size_t>(ij)]) * heads + h];
        }
    }

    parallel_for(nw, [&](std::int64_t w0, std::int64_t w1) {
        std::vector<T> logits(static_cast<std::size_t>(n));
        std::vector<T> kt(static_cast<std::size_t>(dh) * n);   // K^T, [dh][n]
        std::vector<T> vt(static_cast<std::size_t>(dh) * n);   // V^T, [dh][n]
        std::vector<T> ot(static_cast<std::size_t>(dh) * n);   // out^T accumulator
        for (std::int64_t w = w0; w < w1; ++w) {
            const T* base = qkv_v + w * n * D3;
            const std::uint8_t* vmask = valid.data() + w * n;
            bool all_valid = true;
            for (std::int64_t j = 0; j < n; ++j) all_valid = all_valid && vmask[j];
            for (int h = 0; h < heads; ++h) {
                const std::int64_t hoff = static_cast<std::int64_t>(h) * dh;
                const T* bm = bias_mat.data() + static_cast<std::size_t>(h) * n * n;
                for (std::int64_t j = 0; j < n; ++j) {
                    const T* kj = base + j * D3 + D + hoff;
                    const T* vj = base + j * D3 + 2 * D + hoff;
                    for (std::int64_t p = 0; p < dh; ++p) {
                        kt[static_cast<std::size_t>(p * n + j)] = kj[p];
                        vt[static_cast<std::size_t>(p * n + j)] = vj[p];
                    }
                }
                T* pw = probs->data() + ((w * heads + h) * n) * n;
                std::fill(ot.begin(), ot.end(), T(0));
                for (std::int64_t i = 0; i < n; ++i) {
                    const T* qi = base + i * D3 + hoff;
                    const T* brow = bm + i * n;
                    for (std::int64_t j = 0; j < n; ++j) logits[static_cast<std::size_t>(j)] = brow[j];
                    for (std::int64_t p = 0; p < dh; ++p) {
                        T qp = qi[p] * scale;
                        const T* krow = kt.data() + p * n;
                        T* lrow = logits.data();
                        for (std::int64_t j = 0; j < n; ++j) lrow[j] += qp * krow[j];
                    }
                    if (!all_valid) {
                        for (std::int64_t j = 0; j < n; ++j) {
                            if (!vmask[j]) logits[static_cast<std::size_t>(j)] = mask_value;
                        }
                    }
                    T mx = logits[0];
                    for (std::int64_t j = 1; j < n; ++j) mx = std::max(mx, logits[static_cast<std::size_t>(j)]);
                    T z = T(0);
                    T* prow = pw + i * n;
                    for (std::int64_t j = 0; j < n; ++j) {
                        T e = vmask[j] ? std::exp(logits[static_cast<std::size_t>(j)] - mx) : T(0);
                        prow[j] = e;
                        z += e;
                    }
                    T invz = T(1) / z;
                    for (std::int64_t j = 0; j < n; ++j) prow[j] *= invz;
                    for (std::int64_t c = 0; c < dh; ++c) {
                        const T* vrow = vt.data() + c * n;
                        T acc = T(0);
                        for (std::int64_t j = 0; j < n; ++j) acc += prow[j] * vrow[j];
                        ot[static_cast<std::size_t>(c * n + i)] = acc;
                    }
                }
                for (std::int64_t i = 0; i < n; ++i) {
                    T* orow = out_v + (w * n + i) * D + hoff;
                    for (std::int64_t c = 0; c < dh; ++c) {
                        orow[c] = ot[static_cast<std::size_t>(c * n + i)];
                    }
                }
            }
        }
    });
    ops::detail::finite_check("window_msa", out);
    if (trace) trace->probs = *probs;

    if (auto* tp = active_tape<T>(); tp && (qkv.requires_grad() || relpos.requires_grad())) {
        out.set_requires_grad(true);
        tp->record("window_msa", [qn = qkv.node(), rn = relpos.node(), on = out.node(), probs,
                                  relidx, valid, nw, n, D, D3, dh, heads, scale] {
            if (on->grad.empty()) return;
            const T* gy = on->grad.data();
            const T* qkv_v = qn->value.data();
            if (qn->requires_grad && qn->grad.empty()) qn->grad.assign(qn->value.size(), T(0));
            if (rn->requires_grad && rn->grad.empty()) rn->grad.assign(rn->value.size(), T(0));
            // Softmax-gradient buffer, reused as the relpos adjoint source.
            std::vector<T> gs(static_cast<std::size_t>(nw) * heads * n * n, T(0));
            T* gqkv = qn->requires_grad ? qn->grad.data() : nullptr;
            // K and V rows belong to exactly one window, so per-window
            // parallelism is race-free.
            parallel_for(nw, [&](std::int64_t w0, std::int64_t w1) {
                std::vector<T> vt(static_cast<std::size_t>(dh) * n);
                for (std::int64_t w = w0; w < w1; ++w) {
                    const T* base = qkv_v + w * n * D3;
                    T* gbase = gqkv ? gqkv + w * n * D3 : nullptr;
                    for (int h = 0; h < heads; ++h) {
                        const std::int64_t hoff = static_cast<std::int64_t>(h) * dh;
                        const T* pw = probs->data() + ((w * heads + h) * n) * n;
                        T* gsw = gs.data() + ((w * heads + h) * n) * n;
                        for (std::int64_t j = 0; j < n; ++j) {
                            const T* vj = base + j * D3 + 2 * D + hoff;
                            for (std::int64_t p = 0; p < dh; ++p) {
                                vt[static_cast<std::size_t>(p * n + j)] = vj[p];
                            }
                        }
                        for (std::int64_t i = 0; i < n; ++i) {
                            const T* gout = gy + (w * n + i) * D + hoff;
                            const T* prow = pw + i * n;
                            T* gsrow = gsw + i * n;
                            // dL/dP = gout . V^T, then the softmax pullback.
                            for (std::int64_t c = 0; c < dh; ++c) {
                                T gc = gout[c];
                                if (gc == T(0)) continue;
                                const T* vrow = vt.data() + c * n;
                                for (std::int64_t j = 0; j < n; ++j) gsrow[j] += gc * vrow[j];
                            }
                            T dot = T(0);
                            for (std::int64_t j = 0; j < n; ++j) dot += gsrow[j] * prow[j];
                            for (std::int64_t j = 0; j < n; ++j) {
                                gsrow[j] = prow[j] * (gsrow[j] - dot);
                            }
                            if (gbase) {
                                // All reads/writes below run over the head
                                // slice, contiguous within each token row.
                                const T* qi = base + i * D3 + hoff;
                                T* gqi = gbase + i * D3 + hoff;
                                for (std::int64_t j = 0; j < n; ++j) {
                                    T g = gsrow[j] * scale;
                                    T pj = prow[j];
                                    const T* kj = base + j * D3 + D + hoff;
                                    T* gkj = gbase + j * D3 + D + hoff;
                                    T* gvj = gbase + j * D3 + 2 * D + hoff;
                                    if (g != T(0)) {
                                        for (std::int64_t p = 0; p < dh; ++p) {
                                            gqi[p] += g * kj[p];
                                        }
                                        for (std::int64_t p = 0; p < dh; ++p) {
                                            gkj[p] += g * qi[p];
                                        }
                                    }
                                    if (pj != T(0)) {
                                        for (std::int64_t c = 0; c < dh; ++c) {
                                            gvj[c] += pj * gout[c];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            });
            if (rn->requires_grad) {
                // Sequential accumulation keeps the reduction order fixed.
                T* gr = rn->grad.data();
                for (std::int64_t w = 0; w < nw; ++w) {
                    for (int h = 0; h < heads; ++h) {
                        const T* gsw = gs.data() + ((w * heads + h) * n) * n;
                        for (std::int64_t i = 0; i < n; ++i) {
                            for (std::int64_t j = 0; j < n; ++j) {
                                gr[static_cast<std::int64_t>(relidx[static_cast<std::size_t>(i * n + j)]) * heads + h] +=
                                    gsw[i * n + j];
                            }
                        }
                    }
                }
            }
        });
    }
    return out;
}

}  // namespace detail_attn

// Windowed multi-head self-attention: QKV projection, biased masked
// attention per window, output projection. The residual is the caller's.
template <typename T>
WindowSet<T> msa(const WindowSet<T>& w, const CaVitParams<T>& p,
                 detail_attn::AttnTrace<T>* trace = nullptr) {
    Tensor<T> qkv = ops::linear(w.tokens, p.qkv_w, p.qkv_b);
    Tensor<T> ctx = detail_attn::window_msa_core(qkv, p.relpos, p.heads, w.ws, w.valid, trace);
    WindowSet<T> out = w;
    out.tokens = ops::linear(ctx, p.proj_w, p.proj_b);
    return out;
}

namespace detail_attn {

// Global branch given the pre-normalized tokens.
template <typename T>
Tensor<T> transformer_step_normed(const Tensor<T>& e, const Tensor<T>& normed,
                                  const CaVitParams<T>& p, int ws, int shift) {
    WindowSet<T> win = window_partition(normed, ws, shift);
    win = msa(win, p);
    Tensor<T> e1 = ops::add(e, window_reverse(win));
    Tensor<T> b = ops::layernorm(e1, p.norm2_g, p.norm2_b);
    Tensor<T> hidden = ops::gelu(ops::linear(b, p.mlp1_w, p.mlp1_b));
    return ops::add(e1, ops::linear(hidden, p.mlp2_w, p.mlp2_b));
}

// Local branch given the pre-normalized tokens.
template <typename T>
Tensor<T> lce_normed(const Tensor<T>& normed, const CaVitParams<T>& p,
                     Tensor<T>* omega_out = nullptr) {
    Tensor<T> f_local = ops::conv2d_bias(normed, p.lce_conv_w, p.lce_conv_b,
                                         {.stride = 1, .dilation = 1, .padding = 1});
    Tensor<T> pooled = ops::mean_spatial(f_local);
    Tensor<T> hidden = ops::relu(ops::linear(pooled, p.lce_fc1_w, p.lce_fc1_b));
    Tensor<T> omega = ops::sigmoid(ops::linear(hidden, p.lce_fc2_w, p.lce_fc2_b));
    if (omega_out) *omega_out = omega;
    return ops::mul(f_local, omega);
}

}  // namespace detail_attn

// Global branch: pre-norm windowed MSA and MLP, both residual.
template <typename T>
Tensor<T> transformer_step(const Tensor<T>& e, const CaVitParams<T>& p, int ws, int shift) {
    Tensor<T> a = ops::layernorm(e, p.norm1_g, p.norm1_b);
    return detail_attn::transformer_step_normed(e, a, p, ws, shift);
}

// Local branch: conv features, squeeze-excitation channel weights in (0,1),
// channel-calibrated output.
template <typename T>
Tensor<T> lce(const Tensor<T>& e, const CaVitParams<T>& p, Tensor<T>* omega_out = nullptr) {
    Tensor<T> a = ops::layernorm(e, p.norm1_g, p.norm1_b);
    return detail_attn::lce_normed(a, p, omega_out);
}

// Full dual-branch block: global and local contexts merged by addition. Both
// branches read the same first-layernorm output.
template <typename T>
Tensor<T> ca_vit(const Tensor<T>& e, const CaVitParams<T>& p, int ws, int shift) {
    Tensor<T> a = ops::layernorm(e, p.norm1_g, p.norm1_b);
    return ops::add(detail_attn::transformer_step_normed(e, a, p, ws, shift),
                    detail_attn::lce_normed(a, p));
}

// ---------------------------------------------------------------------------
// Parameter construction
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> kaiming_uniform(Shape shape, std::int64_t fan_in, Rng& rng) {
    T bound = static_cast<T>(std::sqrt(6.0 / static_cast<double>(fan_in)));
    return Tensor<T>::uniform(std::move(shape), rng, -bound, bound);
}

template <typename T>
CaVitParams<T> random_cavit_params(int D, int heads, int ws, int mlp_ratio, int lce_reduction,
                                   Rng& rng) {
    if (D % heads != 0) throw UsageError("embed dim must be divisible by heads");
    const std::int64_t d = D;
    const std::int64_t hidden = static_cast<std::int64_t>(mlp_ratio) * D;
    const std::int64_t squeeze = std::max<std::int64_t>(1, D / lce_reduction);
    CaVitParams<T> p;
    p.heads = heads;
    p.norm1_g = Tensor<T>::full({d}, T(1));
    p.norm1_b = Tensor<T>::zeros({d});
    p.qkv_w = kaiming_uniform<T>({d, 3 * d}, d, rng);
    p.qkv_b = Tensor<T>::zeros({3 * d});
    p.relpos = Tensor<T>::zeros({(2 * ws - 1) * (2 * ws - 1), heads});
    p.proj_w = kaiming_uniform<T>({d, d}, d, rng);
    p.proj_b = Tensor<T>::zeros({d});
    p.norm2_g = Tensor<T>::full({d}, T(1));
    p.norm2_b = Tensor<T>::zeros({d});
    p.mlp1_w = kaiming_uniform<T>({d, hidden}, d, rng);
    p.mlp1_b = Tensor<T>::zeros({hidden});
    p.mlp2_w = kaiming_uniform<T>({hidden, d}, hidden, rng);
    p.mlp2_b = Tensor<T>::zeros({d});
    p.lce_conv_w = kaiming_uniform<T>({3, 3, d, d}, 9 * d, rng);
    p.lce_conv_b = Tensor<T>::zeros({d});
    p.lce_fc1_w = kaiming_uniform<T>({d, squeeze}, d, rng);
    p.lce_fc1_b = Tensor<T>::zeros({squeeze});
    p.lce_fc2_w = kaiming_uniform<T>({squeeze, d}, squeeze, rng);
    p.lce_fc2_b = Tensor<T>::zeros({d});
    return p;
}

template <typename T, typename Fn>
void for_each_cavit_param(CaVitParams<T>& p, Fn&& fn) {
    fn("norm1.g", p.norm1_g);
    fn("norm1.b", p.norm1_b);
    fn("msa.qkv.w", p.qkv_w);
    fn("msa.qkv.b", p.qkv_b);
    fn("msa.relpos", p.relpos);
    fn("msa.proj.w", p.proj_w);
    fn("msa.proj.b", p.proj_b);
    fn("norm2.g", p.norm2_g);
    fn("norm2.b", p.norm2_b);
    fn("mlp.fc1.w", p.mlp1_w);
    fn("mlp.fc1.b", p.mlp1_b);
    fn("mlp.fc2.w", p.mlp2_w);
    fn("mlp.fc2.b", p.mlp2_b);
    fn("lce.conv.w", p.lce_conv_w);
    fn("lce.conv.b", p.lce_conv_b);
    fn("lce.fc1.w", p.lce_fc1_w);
    fn("lce.fc1.b", p.lce_fc1_b);
    fn("lce.fc2.w", p.lce_fc2_w);
    fn("lce.fc2.b", p.lce_fc2_b);
}

}  // namespace hdrfuse
