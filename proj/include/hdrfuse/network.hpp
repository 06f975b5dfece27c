#pragma once

#include <array>
#include <string>
#include <unordered_map>
#include <vector>

#include "hdrfuse/attention.hpp"
#include "hdrfuse/config.hpp"
#include "hdrfuse/image.hpp"

// Full reconstruction network: three shallow conv streams, spatial-attention
// fusion of the non-reference frames against the middle frame, a stack of
// context-aware transformer blocks with a dilated-conv residual, a global
// skip, and a sigmoid head back to three channels.

namespace hdrfuse {

// Named, ordered parameter set; iteration order is construction order and is
// the canonical serialization order.
template <typename T>
class Weights {
public:
    Tensor<T>& add(const std::string& path, Tensor<T> t) {
        if (index_.count(path)) throw UsageError("duplicate parameter path: " + path);
        index_.emplace(path, params_.size());
        params_.emplace_back(path, std::move(t));
        params_.back().second.set_requires_grad(true);
        return params_.back().second;
    }

    Tensor<T>& at(const std::string& path) {
        auto it = index_.find(path);
        if (it == index_.end()) throw UsageError("unknown parameter path: " + path);
        return params_[it->second].second;
    }
    const Tensor<T>& at(const std::string& path) const {
        auto it = index_.find(path);
        if (it == index_.end()) throw UsageError("unknown parameter path: " + path);
        return params_[it->second].second;
    }
    bool contains(const std::string& path) const { return index_.count(path) != 0; }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }
    std::size_t size() const { return params_.size(); }

    std::int64_t element_count() const {
        std::int64_t n = 0;
        for (const auto& [path, t] : params_) n += t.numel();
        return n;
    }

    void zero_grads() {
        for (auto& [path, t] : params_) t.drop_grad();
    }

private:
    std::vector<std::pair<std::string, Tensor<T>>> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Attention gate for a non-reference stream: conv -> LeakyReLU(0.1) -> conv
// -> sigmoid over the channel-concatenated pair, values strictly in (0,1).
template <typename T>
Tensor<T> spatial_attention(const Tensor<T>& f_i, const Tensor<T>& f_ref, const Tensor<T>& c1w,
                            const Tensor<T>& c1b, const Tensor<T>& c2w, const Tensor<T>& c2b) {
    Tensor<T> both = ops::concat(std::vector<Tensor<T>>{f_i, f_ref}, 2);
    Tensor<T> h = ops::conv2d_bias(both, c1w, c1b, {.stride = 1, .dilation = 1, .padding = 1});
    h = ops::leaky_relu(h, T(0.1));
    h = ops::conv2d_bias(h, c2w, c2b, {.stride = 1, .dilation = 1, .padding = 1});
    return ops::sigmoid(h);
}

// Intermediates exposed for verification.
template <typename T>
struct ForwardTrace {
    Tensor<T> f_att;      // embedded fused features entering the CTB stack
    Tensor<T> recon_out;  // CTB stack output, before the global skip
};

template <typename T>
class HdrTransformer {
public:
    HdrTransformer(NetworkConfig cfg, std::uint64_t seed) : cfg_(cfg) {
        cfg_.validate();
        Rng rng(seed ^ 0x9d2c5680u);
        const std::int64_t C = cfg_.shallow_channels;
        const std::int64_t D = cfg_.embed_dim;
        for (int i = 0; i < 3; ++i) {
            std::string p = "extract." + std::to_string(i) + ".conv.";
            weights_.add(p + "w", kaiming_uniform<T>({3, 3, cfg_.input_channels, C},
                                                     9 * cfg_.input_channels, rng));
            weights_.add(p + "b", Tensor<T>::zeros({C}));
        }
        for (int i : {0, 2}) {
            std::string p = "sa." + std::to_string(i) + ".";
            weights_.add(p + "conv1.w", kaiming_uniform<T>({3, 3, 2 * C, C}, 9 * 2 * C, rng));
            weights_.add(p + "conv1.b", Tensor<T>::zeros({C}));
            weights_.add(p + "conv2.w", kaiming_uniform<T>({3, 3, C, C}, 9 * C, rng));
            weights_.add(p + "conv2.b", Tensor<T>::zeros({C}));
        }
        weights_.add("embed.conv.w", kaiming_uniform<T>({3, 3, 3 * C, D}, 9 * 3 * C, rng));
        weights_.add("embed.conv.b", Tensor<T>::zeros({D}));
        for (int n = 0; n < cfg_.num_ctb; ++n) {
            for (int m = 0; m < cfg_.cavits_per_ctb; ++m) {
                CaVitParams<T> cp = random_cavit_params<T>(
                    static_cast<int>(D), cfg_.heads, cfg_.window_size, cfg_.mlp_ratio,
                    cfg_.lce_reduction, rng);
                std::string prefix =
                    "ctb." + std::to_string(n) + ".cavit." + std::to_string(m) + ".";
                for_each_cavit_param(cp, [&](const char* name, Tensor<T>& t) {
                    weights_.add(prefix + name, t);
                });
            }
            std::string p = "ctb." + std::to_string(n) + ".dconv.";
            weights_.add(p + "w", kaiming_uniform<T>({3, 3, D, D}, 9 * D, rng));
            weights_.add(p + "b", Tensor<T>::zeros({D}));
        }
        weights_.add("head.conv1.w", kaiming_uniform<T>({3, 3, D, D}, 9 * D, rng));
        weights_.add("head.conv1.b", Tensor<T>::zeros({D}));
        weights_.add("head.conv2.w",
                     kaiming_uniform<T>({3, 3, D, cfg_.output_channels}, 9 * D, rng));
        weights_.add("head.conv2.b", Tensor<T>::zeros({cfg_.output_channels}));
    }

    const NetworkConfig& config() const { return cfg_; }
    Weights<T>& weights() { return weights_; }
    const Weights<T>& weights() const { return weights_; }

    std::int64_t param_count() const { return weights_.element_count(); }

    CaVitParams<T> cavit_params(int n, int m) {
        std::string prefix = "ctb." + std::to_string(n) + ".cavit." + std::to_string(m) + ".";
        CaVitParams<T> p;
        p.heads = cfg_.heads;
        for_each_cavit_param(p, [&](const char* name, Tensor<T>& t) {
            t = weights_.at(prefix + name);
        });
        return p;
    }

    // One transformer block: a run of dual-branch attention blocks with
    // alternating window shift, then a dilated conv and the block residual.
    Tensor<T> ctb_forward(const Tensor<T>& input, int n) {
        Tensor<T> f = input;
        for (int m = 0; m < cfg_.cavits_per_ctb; ++m) {
            int shift = (m % 2 == 1) ? cfg_.window_size / 2 : 0;
            CaVitParams<T> p = cavit_params(n, m);
            f = ca_vit(f, p, cfg_.window_size, shift);
        }
        std::string dp = "ctb." + std::to_string(n) + ".dconv.";
        int pad = ops::same_padding(3, cfg_.dilation);
        Tensor<T> d = ops::conv2d_bias(f, weights_.at(dp + "w"), weights_.at(dp + "b"),
                                       {.stride = 1, .dilation = cfg_.dilation, .padding = pad});
        return ops::add(d, input);
    }

    // x holds the three 6-channel planes; returns the fused HDR in [0,1].
    Tensor<T> forward(const std::array<Tensor<T>, 3>& x, ForwardTrace<T>* trace = nullptr) {
        for (const auto& plane : x) {
            if (plane.rank() != 3 || plane.dim(2) != cfg_.input_channels) {
                throw UsageError("forward expects three [H,W,6] planes");
            }
        }
        const std::int64_t H = x[0].dim(0), W = x[0].dim(1);
        if (H < cfg_.window_size || W < cfg_.window_size) {
            throw UsageError("input " + std::to_string(H) + "x" + std::to_string(W) +
                             " is smaller than one attention window (" +
                             std::to_string(cfg_.window_size) + ")");
        }
        std::array<Tensor<T>, 3> f;
        for (int i = 0; i < 3; ++i) {
            std::string p = "extract." + std::to_string(i) + ".conv.";
            f[static_cast<std::size_t>(i)] =
                ops::conv2d_bias(x[static_cast<std::size_t>(i)], weights_.at(p + "w"),
                                 weights_.at(p + "b"), {.stride = 1, .dilation = 1, .padding = 1});
        }
        std::array<Tensor<T>, 3> fused = f;
        for (int i : {0, 2}) {
            std::string p = "sa." + std::to_string(i) + ".";
            Tensor<T> m = spatial_attention(f[static_cast<std::size_t>(i)], f[1],
                                            weights_.at(p + "conv1.w"), weights_.at(p + "conv1.b"),
                                            weights_.at(p + "conv2.w"), weights_.at(p + "conv2.b"));
            fused[static_cast<std::size_t>(i)] = ops::mul(f[static_cast<std::size_t>(i)], m);
        }
        Tensor<T> cat = ops::concat(std::vector<Tensor<T>>{fused[0], fused[1], fused[2]}, 2);
        Tensor<T> f_att = ops::conv2d_bias(cat, weights_.at("embed.conv.w"),
                                           weights_.at("embed.conv.b"),
                                           {.stride = 1, .dilation = 1, .padding = 1});
        Tensor<T> y = f_att;
        for (int n = 0; n < cfg_.num_ctb; ++n) y = ctb_forward(y, n);
        if (trace) {
            trace->f_att = f_att;
            trace->recon_out = y;
        }
        Tensor<T> pre_head = ops::add(y, f_att);  // global skip
        Tensor<T> h = ops::conv2d_bias(pre_head, weights_.at("head.conv1.w"),
                                       weights_.at("head.conv1.b"),
                                       {.stride = 1, .dilation = 1, .padding = 1});
        h = ops::gelu(h);
        h = ops::conv2d_bias(h, weights_.at("head.conv2.w"), weights_.at("head.conv2.b"),
                             {.stride = 1, .dilation = 1, .padding = 1});
        return ops::sigmoid(h);
    }

    // Zeroes the last layer of every residual branch (MSA projection, MLP
    // tail, LCE conv, dilated conv), making the CTB stack an exact identity.
    void zero_residual_tails() {
        for (int n = 0; n < cfg_.num_ctb; ++n) {
            for (int m = 0; m < cfg_.cavits_per_ctb; ++m) {
                std::string prefix =
                    "ctb." + std::to_string(n) + ".cavit." + std::to_string(m) + ".";
                for (const char* name :
                     {"msa.proj.w", "msa.proj.b", "mlp.fc2.w", "mlp.fc2.b", "lce.conv.w",
                      "lce.conv.b"}) {
                    auto& t = weights_.at(prefix + name);
                    std::fill(t.mutable_values().begin(), t.mutable_values().end(), T(0));
                }
            }
            for (const char* name : {"w", "b"}) {
                auto& t = weights_.at("ctb." + std::to_string(n) + ".dconv." + std::string(name));
                std::fill(t.mutable_values().begin(), t.mutable_values().end(), T(0));
            }
        }
    }

private:
    NetworkConfig cfg_;
    Weights<T> weights_;
};

// Converts the float data pipeline into network tensors.
template <typename T>
Tensor<T> image_to_tensor(const ImageF& img) {
    std::vector<T> data(img.data.size());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<T>(img.data[i]);
    return Tensor<T>::from({img.height, img.width, img.channels}, std::move(data));
}

template <typename T>
ImageF tensor_to_image(const Tensor<T>& t) {
    if (t.rank() != 3) throw UsageError("tensor_to_image expects [H,W,C]");
    ImageF img(static_cast<int>(t.dim(0)), static_cast<int>(t.dim(1)),
               static_cast<int>(t.dim(2)));
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        img.data[i] = static_cast<float>(t.values()[i]);
    }
    return img;
}

}  // namespace hdrfuse
