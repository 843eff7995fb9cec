#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <thread>
#include <vector>

#include "gradkit/idx.hpp"
#include "gradkit/models.hpp"
#include "gradkit/optim.hpp"
#include "gradkit/rng.hpp"

namespace gradkit {

struct SplitConfig {
    double train_fraction = 0.8;
    std::uint64_t seed = 0;
};

namespace detail {

inline std::vector<int> shuffled_indices(int n, Rng& rng) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    for (int i = n - 1; i > 0; --i)
        std::swap(idx[static_cast<std::size_t>(i)],
                  idx[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(i + 1)))]);
    return idx;
}

inline Dataset take(const Dataset& d, const std::vector<int>& which) {
    const int C = d.images.dim(1), H = d.images.dim(2), W = d.images.dim(3);
    const std::int64_t n = static_cast<std::int64_t>(C) * H * W;
    Dataset out;
    out.images = Tensor::zeros(Shape{static_cast<int>(which.size()), C, H, W});
    out.labels.reserve(which.size());
    for (std::size_t i = 0; i < which.size(); ++i) {
        std::copy(d.images.data() + which[i] * n, d.images.data() + (which[i] + 1) * n,
                  out.images.data() + static_cast<std::int64_t>(i) * n);
        out.labels.push_back(d.labels[static_cast<std::size_t>(which[i])]);
    }
    return out;
}

// Deterministic parallel map: fn(i) for i in [0,n), any thread order.
template <typename F>
inline void parallel_for(int n, int threads, F&& fn) {
    threads = std::max(1, std::min(threads, n));
    if (threads == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&, t]() {
            for (int i = t; i < n; i += threads) fn(i);
        });
    for (auto& th : pool) th.join();
}

} // namespace detail

/// Seeded shuffle then partition; the split is disjoint and exhaustive.
inline std::pair<Dataset, Dataset> split_dataset(const Dataset& d, const SplitConfig& cfg) {
    const int n = d.size();
    if (n < 2) throw ContractError("split_dataset: need at least 2 samples");
    if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0))
        throw ContractError("split_dataset: train fraction must be in (0,1)");
    Rng rng(cfg.seed);
    const std::vector<int> idx = detail::shuffled_indices(n, rng);
    int n_train = static_cast<int>(std::llround(cfg.train_fraction * n));
    n_train = std::max(1, std::min(n - 1, n_train));
    std::vector<int> a(idx.begin(), idx.begin() + n_train);
    std::vector<int> b(idx.begin() + n_train, idx.end());
    return {detail::take(d, a), detail::take(d, b)};
}

/// Fresh random partition into batches whose sizes differ by at most one
/// (remainder spread over the leading batches).
inline std::vector<std::vector<int>> make_batches(int n, int batch_size, Rng& rng) {
    if (batch_size < 1 || batch_size > n) throw ContractError("make_batches: bad batch size");
    const std::vector<int> idx = detail::shuffled_indices(n, rng);
    const int B = (n + batch_size - 1) / batch_size;
    const int base = n / B, rem = n % B;
    std::vector<std::vector<int>> batches;
    batches.reserve(static_cast<std::size_t>(B));
    int pos = 0;
    for (int b = 0; b < B; ++b) {
        const int sz = base + (b < rem ? 1 : 0);
        batches.emplace_back(idx.begin() + pos, idx.begin() + pos + sz);
        pos += sz;
    }
    return batches;
}

enum class LossKind { Nll, L2 };

inline LossKind loss_from_string(const std::string& s) {
    if (s == "nll") return LossKind::Nll;
    if (s == "l2") return LossKind::L2;
    throw ContractError("unknown loss '" + s + "'");
}

/// Records the per-sample loss on the tape. The L2 variant compares the raw
/// network output against a one-hot target.
inline NodeId record_loss(Tape& t, NodeId logits, int target, int classes, LossKind kind) {
    if (kind == LossKind::Nll) return t.record("nll_loss", {logits}, OpAttrs{{target}, {}});
    Tensor onehot = Tensor::zeros(Shape{classes});
    onehot[target] = 1.0;
    return t.record("l2_loss", {logits, t.leaf(onehot)});
}

struct EvalResult {
    double loss = 0.0;
    double accuracy = 0.0;
};

inline EvalResult evaluate(const Model& model, const Dataset& data, LossKind loss, int threads = 2) {
    const int n = data.size();
    std::vector<double> losses(static_cast<std::size_t>(n));
    std::vector<char> hits(static_cast<std::size_t>(n));
    detail::parallel_for(n, threads, [&](int i) {
        Tape t;
        const NodeId logits =
            const_cast<Model&>(model).forward(t, data.image(i), nullptr);
        const NodeId l = record_loss(t, logits, data.labels[static_cast<std::size_t>(i)],
                                     model.num_classes(), loss);
        losses[static_cast<std::size_t>(i)] = t.value(l)[0];
        hits[static_cast<std::size_t>(i)] =
            reduce_argmax(t.value(logits)) == data.labels[static_cast<std::size_t>(i)] ? 1 : 0;
    });
    EvalResult r;
    for (int i = 0; i < n; ++i) {
        r.loss += losses[static_cast<std::size_t>(i)];
        r.accuracy += hits[static_cast<std::size_t>(i)];
    }
    r.loss /= n;
    r.accuracy /= n;
    return r;
}

struct TrainConfig {
    int batch_size = 32;
    int epochs = 5;
    OptimizerState opt = make_optimizer(OptKind::Adam, 0.001);
    LossKind loss = LossKind::Nll;
    std::uint64_t seed = 42;
    int threads = 2;
    std::string checkpoint_out;
    bool verbose = false;
};

struct EpochStats {
    int epoch;
    double train_loss;
    double test_loss;
    double test_accuracy;
};

/// Mini-batch SGD training loop. Per-sample gradient tapes are evaluated in
/// parallel but reduced in sample order, so the run is bit-reproducible for
/// any thread count. Checkpoints the best test loss when a path is given.
inline std::vector<EpochStats> train(Model& model, const Dataset& train_set,
                                     const Dataset& test_set, TrainConfig& cfg) {
    if (cfg.batch_size < 1 || cfg.epochs < 1) throw ContractError("train: bad config");
    std::vector<ParamRef> prefs = model.params();
    std::vector<Tensor> w;
    for (const ParamRef& p : prefs) w.push_back(*p.tensor);
    auto push_back_params = [&]() {
        for (std::size_t i = 0; i < prefs.size(); ++i) *prefs[i].tensor = w[i];
    };

    Rng root(cfg.seed);
    std::vector<EpochStats> history;
    double best_test = 1e300;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng epoch_rng = root.split();
        const auto batches = make_batches(train_set.size(), cfg.batch_size, epoch_rng);
        double epoch_loss = 0.0;
        for (const std::vector<int>& batch : batches) {
            const int bs = static_cast<int>(batch.size());
            std::vector<std::vector<Tensor>> grads(static_cast<std::size_t>(bs));
            std::vector<double> losses(static_cast<std::size_t>(bs));
            detail::parallel_for(bs, cfg.threads, [&](int bi) {
                Tape t;
                std::vector<NodeId> pids;
                const NodeId logits =
                    model.forward(t, train_set.image(batch[static_cast<std::size_t>(bi)]), &pids);
                const NodeId l = record_loss(
                    t, logits, train_set.labels[static_cast<std::size_t>(batch[static_cast<std::size_t>(bi)])],
                    model.num_classes(), cfg.loss);
                t.backward(l);
                losses[static_cast<std::size_t>(bi)] = t.value(l)[0];
                std::vector<Tensor>& g = grads[static_cast<std::size_t>(bi)];
                g.reserve(pids.size());
                for (NodeId pid : pids) g.push_back(t.grad(pid));
            });
            // ordered reduction: mean gradient over the batch
            std::vector<Tensor> gsum;
            for (std::size_t p = 0; p < prefs.size(); ++p) gsum.push_back(Tensor::zeros(w[p].shape()));
            double bloss = 0.0;
            for (int bi = 0; bi < bs; ++bi) {
                bloss += losses[static_cast<std::size_t>(bi)];
                for (std::size_t p = 0; p < prefs.size(); ++p) {
                    double* d = gsum[p].data();
                    const double* s = grads[static_cast<std::size_t>(bi)][p].data();
                    for (std::int64_t i = 0; i < gsum[p].numel(); ++i) d[i] += s[i];
                }
            }
            bloss /= bs;
            for (std::size_t p = 0; p < prefs.size(); ++p)
                for (auto& v : gsum[p].vec()) v /= bs;
            if (!std::isfinite(bloss))
                throw NumericError("training diverged: non-finite batch loss at epoch " +
                                   std::to_string(epoch));
            cfg.opt.step(w, gsum);
            push_back_params();
            epoch_loss += bloss;
        }
        epoch_loss /= static_cast<double>(batches.size());
        const EvalResult ev = evaluate(model, test_set, cfg.loss, cfg.threads);
        history.push_back({epoch, epoch_loss, ev.loss, ev.accuracy});
        if (cfg.verbose)
            std::printf("epoch %d train_loss %.6f test_loss %.6f test_acc %.4f\n", epoch,
                        epoch_loss, ev.loss, ev.accuracy);
        if (!cfg.checkpoint_out.empty() && ev.loss < best_test) {
            best_test = ev.loss;
            checkpoint_save(model.params(), cfg.checkpoint_out);
        }
    }
    return history;
}

/// 90-degree-rotated copy of a dataset (exact pixel permutation).
inline Dataset rotate_dataset_quarter(const Dataset& d) {
    Dataset out;
    out.images = Tensor::zeros(d.images.shape());
    out.labels = d.labels;
    const int N = d.images.dim(0), C = d.images.dim(1), H = d.images.dim(2), W = d.images.dim(3);
    const SE2Element quarter(0.0, 0.0, kTwoPi / 4.0);
    for (int i = 0; i < N; ++i)
        for (int c = 0; c < C; ++c) {
            Tensor img = Tensor::zeros(Shape{H, W});
            const std::int64_t off = (static_cast<std::int64_t>(i) * C + c) * H * W;
            std::copy(d.images.data() + off, d.images.data() + off + H * W, img.data());
            const Tensor rot = act_on_image(quarter, img);
            std::copy(rot.data(), rot.data() + H * W, out.images.data() + off);
        }
    return out;
}

} // namespace gradkit
