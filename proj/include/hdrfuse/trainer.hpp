#pragma once

#include <charconv>
#include <cstdio>
#include <map>
#include <ostream>

#include "hdrfuse/checkpoint.hpp"
#include "hdrfuse/metrics.hpp"
#include "hdrfuse/network.hpp"
#include "hdrfuse/patches.hpp"

// Optimization loop: bias-corrected Adam, seeded stateless batch schedule,
// checkpointing that resumes bit-exactly, and held-out evaluation.

namespace hdrfuse {

template <typename T>
struct AdamState {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step = 0;
    std::map<std::string, Tensor<T>> m, v;

    Tensor<T>& moment(std::map<std::string, Tensor<T>>& buf, const std::string& path,
                      const Shape& shape) {
        auto it = buf.find(path);
        if (it == buf.end()) it = buf.emplace(path, Tensor<T>::zeros(shape)).first;
        return it->second;
    }
};

// In-place bias-corrected Adam update over every trainable parameter.
template <typename T>
void adam_step(Weights<T>& weights, AdamState<T>& s) {
    s.step += 1;
    const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
    const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
    const T b1 = static_cast<T>(s.beta1), b2 = static_cast<T>(s.beta2);
    const T one_m_b1 = static_cast<T>(1.0 - s.beta1), one_m_b2 = static_cast<T>(1.0 - s.beta2);
    const T lr = static_cast<T>(s.lr), eps = static_cast<T>(s.eps);
    const T inv_bc1 = static_cast<T>(1.0 / bc1), inv_bc2 = static_cast<T>(1.0 / bc2);
    for (auto& [path, t] : weights) {
        if (!t.has_grad()) {
            throw UsageError("adam_step: missing gradient for parameter " + path);
        }
        const auto& g = t.grad();
        auto& mv = s.moment(s.m, path, t.shape()).mutable_values();
        auto& vv = s.moment(s.v, path, t.shape()).mutable_values();
        auto& w = t.mutable_values();
        for (std::size_t i = 0; i < w.size(); ++i) {
            mv[i] = b1 * mv[i] + one_m_b1 * g[i];
            vv[i] = b2 * vv[i] + one_m_b2 * g[i] * g[i];
            T mhat = mv[i] * inv_bc1;
            T vhat = vv[i] * inv_bc2;
            w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

struct TrainOptions {
    std::int64_t steps = 2000;
    int batch = 16;
    std::uint64_t seed = 0;
    double lr = 2e-4;
    double lambda_p = kDefaultPerceptualWeight;
    double mu = kDefaultMu;
    bool use_perceptual = true;
    std::uint64_t featurenet_seed = 0;
    int probe_interval = 50;  // PSNR-mu probe cadence; 0 disables
    bool clip_gradients = false;
    double clip_norm = 1.0;
};

struct TrainRecord {
    std::int64_t step = 0;  // 1-based, equals optimizer step count after the update
    double l_r = 0.0;
    double l_p = 0.0;
    double total = 0.0;
    double probe_psnr_mu = 0.0;
    bool has_probe = false;
};

namespace detail_train {

// Batch schedule: epochs are seeded permutations, batches read the
// permutation cyclically so the last batch pads by wrap-around. Stateless in
// the step index, which is what makes checkpoint resume exact.
inline std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed,
                                                  std::int64_t epoch) {
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    Rng rng = Rng(seed).fork(0x45504f43ull + static_cast<std::uint64_t>(epoch));
    for (std::size_t i = n; i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.below(i));
        std::swap(perm[i - 1], perm[j]);
    }
    return perm;
}

inline std::vector<std::size_t> batch_indices(std::size_t n, int batch, std::uint64_t seed,
                                              std::int64_t step) {
    std::int64_t per_epoch = static_cast<std::int64_t>((n + static_cast<std::size_t>(batch) - 1) /
                                                       static_cast<std::size_t>(batch));
    std::int64_t epoch = step / per_epoch;
    std::int64_t slot = step % per_epoch;
    auto perm = epoch_permutation(n, seed, epoch);
    std::vector<std::size_t> idx(static_cast<std::size_t>(batch));
    for (int j = 0; j < batch; ++j) {
        idx[static_cast<std::size_t>(j)] =
            perm[(static_cast<std::size_t>(slot) * static_cast<std::size_t>(batch) +
                  static_cast<std::size_t>(j)) %
                 n];
    }
    return idx;
}

}  // namespace detail_train

// Runs `opt.steps` optimizer steps starting from optim.step. Gradients are
// averaged over the batch by scaling each item's loss. A non-finite loss
// aborts with the offending batch identified.
template <typename T>
std::vector<TrainRecord> train(HdrTransformer<T>& model, const PatchSet& data,
                               AdamState<T>& optim, const TrainOptions& opt,
                               const FeatureNet<T>* featurenet, std::ostream* log = nullptr) {
    if (data.patches.empty()) throw DataError("train: empty patch set");
    if (opt.batch < 1) throw UsageError("train: batch must be >= 1");
    const std::size_t n = data.patches.size();
    optim.lr = opt.lr;

    auto to_planes = [](const PatchPair& p) {
        std::array<Tensor<T>, 3> x;
        for (int i = 0; i < 3; ++i) x[static_cast<std::size_t>(i)] = image_to_tensor<T>(p.x[static_cast<std::size_t>(i)]);
        return x;
    };

    // Fixed probe batch: the first patches in dataset order.
    const std::size_t probe_count = std::min<std::size_t>(n, static_cast<std::size_t>(opt.batch));

    std::vector<TrainRecord> records;
    records.reserve(static_cast<std::size_t>(opt.steps));
    if (log) *log << "step,l_r,l_p,total,psnr_mu_probe\n";

    const std::int64_t first = optim.step;
    for (std::int64_t s = first; s < first + opt.steps; ++s) {
        auto idx = detail_train::batch_indices(n, opt.batch, opt.seed, s);
        model.weights().zero_grads();
        TrainRecord rec;
        rec.step = s + 1;
        const T inv_batch = static_cast<T>(1.0 / static_cast<double>(opt.batch));
        for (std::size_t item = 0; item < idx.size(); ++item) {
            const PatchPair& p = data.patches[idx[item]];
            TapeScope<T> scope;
            Tensor<T> pred = model.forward(to_planes(p));
            Tensor<T> gt = image_to_tensor<T>(p.gt);
            LossReport lrep;
            Tensor<T> loss = total_loss(pred, gt, opt.use_perceptual ? featurenet : nullptr,
                                        opt.lambda_p, opt.mu, &lrep);
            if (!std::isfinite(lrep.total)) {
                throw NumericError("non-finite loss at step " + std::to_string(s + 1) +
                                   ", patch " + std::to_string(idx[item]) + " (sample " +
                                   std::to_string(p.sample_id) + ", crop " +
                                   std::to_string(p.y0) + "," + std::to_string(p.x0) +
                                   ", augment " + std::to_string(p.aug_id) + ")");
            }
            rec.l_r += lrep.l_r / static_cast<double>(opt.batch);
            rec.l_p += lrep.l_p / static_cast<double>(opt.batch);
            rec.total += lrep.total / static_cast<double>(opt.batch);
            scope.tape().backward(ops::scale(loss, inv_batch));
        }
        if (opt.clip_gradients) {
            double norm_sq = 0.0;
            for (auto& [path, t] : model.weights()) {
                if (!t.has_grad()) continue;
                for (T g : t.grad()) norm_sq += static_cast<double>(g) * static_cast<double>(g);
            }
            double norm = std::sqrt(norm_sq);
            if (norm > opt.clip_norm) {
                T scale = static_cast<T>(opt.clip_norm / norm);
                for (auto& [path, t] : model.weights()) {
                    if (!t.has_grad()) continue;
                    for (auto& g : t.grad_acc()) g *= scale;
                }
            }
        }
        adam_step(model.weights(), optim);

        bool probe_now = opt.probe_interval > 0 && ((s + 1 - first) % opt.probe_interval == 0 ||
                                                    s + 1 == first + opt.steps);
        if (probe_now) {
            NoGradScope<T> ng;
            double acc = 0.0;
            for (std::size_t i = 0; i < probe_count; ++i) {
                const PatchPair& p = data.patches[i];
                Tensor<T> pred = model.forward(to_planes(p));
                acc += psnr(tensor_to_image(pred), p.gt, MetricDomain::mu, opt.mu);
            }
            rec.probe_psnr_mu = acc / static_cast<double>(probe_count);
            rec.has_probe = true;
        }
        if (log) {
            char buf[160];
            if (rec.has_probe) {
                std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.9g,%.4f\n",
                              static_cast<long long>(rec.step), rec.l_r, rec.l_p, rec.total,
                              rec.probe_psnr_mu);
            } else {
                std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.9g,\n",
                              static_cast<long long>(rec.step), rec.l_r, rec.l_p, rec.total);
            }
            *log << buf;
        }
        records.push_back(rec);
    }
    return records;
}

// --- evaluation ---------------------------------------------------------------

struct EvalRow {
    std::string name;
    double psnr_l = 0.0, psnr_mu = 0.0, ssim_l = 0.0, ssim_mu = 0.0;
};

struct EvalResult {
    std::vector<EvalRow> rows;
    EvalRow mean;
};

template <typename T>
ImageF fuse_bracket(HdrTransformer<T>& model, const ExposureBracket& bracket) {
    NoGradScope<T> ng;
    NetworkInputF input = assemble_input(bracket);
    std::array<Tensor<T>, 3> x;
    for (int i = 0; i < 3; ++i) x[static_cast<std::size_t>(i)] = image_to_tensor<T>(input.planes[static_cast<std::size_t>(i)]);
    return tensor_to_image(model.forward(x));
}

template <typename T>
EvalResult evaluate(HdrTransformer<T>& model,
                    const std::vector<std::pair<std::string, ExposureBracket>>& samples) {
    EvalResult res;
    res.mean.name = "mean";
    for (const auto& [name, bracket] : samples) {
        if (!bracket.gt_hdr) {
            throw DataError("evaluate: sample " + name + " has no ground-truth HDR");
        }
        ImageF fused = fuse_bracket(model, bracket);
        EvalRow row;
        row.name = name;
        row.psnr_l = psnr(fused, *bracket.gt_hdr, MetricDomain::linear);
        row.psnr_mu = psnr(fused, *bracket.gt_hdr, MetricDomain::mu);
        row.ssim_l = ssim(fused, *bracket.gt_hdr, MetricDomain::linear);
        row.ssim_mu = ssim(fused, *bracket.gt_hdr, MetricDomain::mu);
        res.mean.psnr_l += row.psnr_l;
        res.mean.psnr_mu += row.psnr_mu;
        res.mean.ssim_l += row.ssim_l;
        res.mean.ssim_mu += row.ssim_mu;
        res.rows.push_back(std::move(row));
    }
    if (!res.rows.empty()) {
        double inv = 1.0 / static_cast<double>(res.rows.size());
        res.mean.psnr_l *= inv;
        res.mean.psnr_mu *= inv;
        res.mean.ssim_l *= inv;
        res.mean.ssim_mu *= inv;
    }
    return res;
}

// --- checkpointing -------------------------------------------------------------

namespace detail_train {

inline std::string double_hex(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%a", v);
    return buf;
}

inline double parse_double(const std::string& s, const std::string& key) {
    try {
        return std::stod(s);
    } catch (const std::exception&) {
        throw DataError("checkpoint config: bad value for " + key + ": " + s);
    }
}

}  // namespace detail_train

struct CheckpointInfo {
    NetworkConfig cfg;
    std::int64_t step = 0;
    std::uint64_t seed = 0;
    double lr = 2e-4, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

template <typename T>
void save_checkpoint(const std::string& path, HdrTransformer<T>& model, AdamState<T>& optim,
                     std::uint64_t seed) {
    Container c;
    std::string cfg = serialize_network_config(model.config());
    cfg += "step = " + std::to_string(optim.step) + "\n";
    cfg += "seed = " + std::to_string(seed) + "\n";
    cfg += "optim.lr = " + detail_train::double_hex(optim.lr) + "\n";
    cfg += "optim.beta1 = " + detail_train::double_hex(optim.beta1) + "\n";
    cfg += "optim.beta2 = " + detail_train::double_hex(optim.beta2) + "\n";
    cfg += "optim.eps = " + detail_train::double_hex(optim.eps) + "\n";
    c.config_text = cfg;
    for (auto& [p, t] : model.weights()) {
        c.records.push_back(tensor_record(p, t));
    }
    for (auto& [p, t] : model.weights()) {
        c.records.push_back(tensor_record("optim.m." + p, optim.moment(optim.m, p, t.shape())));
    }
    for (auto& [p, t] : model.weights()) {
        c.records.push_back(tensor_record("optim.v." + p, optim.moment(optim.v, p, t.shape())));
    }
    write_container(path, c);
}

inline CheckpointInfo checkpoint_info(const Container& c) {
    auto kv = parse_kv_lines(c.config_text);
    CheckpointInfo info;
    std::string cfg_only;
    for (const auto& [k, v] : kv) {
        if (k == "step") {
            info.step = std::stoll(v);
        } else if (k == "seed") {
            info.seed = std::stoull(v);
        } else if (k == "optim.lr") {
            info.lr = detail_train::parse_double(v, k);
        } else if (k == "optim.beta1") {
            info.beta1 = detail_train::parse_double(v, k);
        } else if (k == "optim.beta2") {
            info.beta2 = detail_train::parse_double(v, k);
        } else if (k == "optim.eps") {
            info.eps = detail_train::parse_double(v, k);
        } else {
            cfg_only += k + " = " + v + "\n";
        }
    }
    info.cfg = parse_network_config(cfg_only);
    return info;
}

// Restores weights and optimizer state. Every model parameter must have a
// matching record; unknown record paths are rejected.
template <typename T>
void load_checkpoint_into(const Container& c, HdrTransformer<T>& model, AdamState<T>& optim) {
    CheckpointInfo info = checkpoint_info(c);
    optim.lr = info.lr;
    optim.beta1 = info.beta1;
    optim.beta2 = info.beta2;
    optim.eps = info.eps;
    optim.step = info.step;
    for (const auto& r : c.records) {
        std::string base = r.path;
        if (base.rfind("optim.m.", 0) == 0) {
            base = base.substr(8);
            if (!model.weights().contains(base)) {
                throw DataError("checkpoint has unknown parameter path: " + r.path);
            }
            record_into_tensor(r, optim.moment(optim.m, base, model.weights().at(base).shape()));
        } else if (base.rfind("optim.v.", 0) == 0) {
            base = base.substr(8);
            if (!model.weights().contains(base)) {
                throw DataError("checkpoint has unknown parameter path: " + r.path);
            }
            record_into_tensor(r, optim.moment(optim.v, base, model.weights().at(base).shape()));
        } else {
            if (!model.weights().contains(base)) {
                throw DataError("checkpoint has unknown parameter path: " + r.path);
            }
            record_into_tensor(r, model.weights().at(base));
        }
    }
    for (auto& [p, t] : model.weights()) {
        if (!c.find(p)) throw DataError("checkpoint is missing parameter: " + p);
    }
}

// Feature-net weights travel in the same container format.
template <typename T>
void save_featurenet(const std::string& path, FeatureNet<T>& fn) {
    Container c;
    c.config_text = "kind = featurenet\n";
    fn.for_each_param([&](const std::string& p, Tensor<T>& t) {
        c.records.push_back(tensor_record(p, t));
    });
    write_container(path, c);
}

template <typename T>
void load_featurenet(const std::string& path, FeatureNet<T>& fn) {
    Container c = read_container(path);
    fn.for_each_param([&](const std::string& p, Tensor<T>& t) {
        const ContainerRecord* r = c.find(p);
        if (!r) throw DataError("feature-net container is missing " + p + ": " + path);
        record_into_tensor(*r, t);
    });
}

}  // namespace hdrfuse
