#pragma once

#include <memory>
#include <string>
#include <vector>

#include "gradkit/autograd.hpp"
#include "gradkit/checkpoint.hpp"
#include "gradkit/init.hpp"

namespace gradkit {

/// A classifier whose forward pass is recorded on a tape. params() order is
/// the checkpoint / optimizer order; forward() reports the leaf id of each
/// parameter in the same order so gradients can be read back positionally.
class Model {
public:
    virtual ~Model() = default;
    virtual std::string name() const = 0;
    virtual std::vector<ParamRef> params() = 0;
    virtual NodeId forward(Tape& tape, const Tensor& image,
                           std::vector<NodeId>* param_ids = nullptr) const = 0;
    virtual int num_classes() const { return 10; }
};

enum class InitChoice { Xavier, Relu, Sigmoid };

inline InitChoice init_choice_from_string(const std::string& s) {
    if (s == "xavier") return InitChoice::Xavier;
    if (s == "relu") return InitChoice::Relu;
    if (s == "sigmoid") return InitChoice::Sigmoid;
    throw ContractError("unknown init scheme '" + s + "'");
}

inline Tensor init_weights(InitChoice c, Shape shape, int fan_in, int fan_out, Rng& rng) {
    InitScheme s;
    switch (c) {
        case InitChoice::Xavier: s = InitScheme::xavier(fan_in, fan_out); break;
        case InitChoice::Relu: s = InitScheme::he(fan_in, fan_out); break;
        case InitChoice::Sigmoid: s = InitScheme::sigmoid_balanced(fan_in); break;
    }
    return sample_params(s, std::move(shape), rng);
}

/// Modernized LeNet-5:
/// 1x28x28 -> conv5x5 same (6) -> MP2 -> conv5x5 valid (16) -> MP2 ->
/// flatten 400 -> dense 120 -> dense 84 -> dense 10,
/// ReLU after both convs and the 120/84 dense layers, none after the last.
/// Convolutions are multi-channel (kernel per channel pair).
class Lenet5Model final : public Model {
public:
    Tensor c1k, c1b, c2k, c2b;
    Tensor f1A, f1b, f2A, f2b, f3A, f3b;

    Lenet5Model(InitChoice init, Rng& rng) {
        c1k = init_weights(init, Shape{6, 1, 5, 5}, 1 * 25, 6 * 25, rng);
        c1b = Tensor::zeros(Shape{6});
        c2k = init_weights(init, Shape{16, 6, 5, 5}, 6 * 25, 16 * 25, rng);
        c2b = Tensor::zeros(Shape{16});
        f1A = init_weights(init, Shape{120, 400}, 400, 120, rng);
        f1b = Tensor::zeros(Shape{120});
        f2A = init_weights(init, Shape{84, 120}, 120, 84, rng);
        f2b = Tensor::zeros(Shape{84});
        f3A = init_weights(init, Shape{10, 84}, 84, 10, rng);
        f3b = Tensor::zeros(Shape{10});
    }

    std::string name() const override { return "lenet5"; }

    std::vector<ParamRef> params() override {
        return {{"conv1.k", &c1k}, {"conv1.b", &c1b}, {"conv2.k", &c2k}, {"conv2.b", &c2b},
                {"fc1.A", &f1A},   {"fc1.b", &f1b},   {"fc2.A", &f2A},   {"fc2.b", &f2b},
                {"fc3.A", &f3A},   {"fc3.b", &f3b}};
    }

    std::int64_t param_count() const {
        return c1k.numel() + c1b.numel() + c2k.numel() + c2b.numel() + f1A.numel() + f1b.numel() +
               f2A.numel() + f2b.numel() + f3A.numel() + f3b.numel();
    }

    NodeId forward(Tape& t, const Tensor& image, std::vector<NodeId>* param_ids) const override {
        const NodeId pc1k = t.leaf(c1k), pc1b = t.leaf(c1b);
        const NodeId pc2k = t.leaf(c2k), pc2b = t.leaf(c2b);
        const NodeId pf1A = t.leaf(f1A), pf1b = t.leaf(f1b);
        const NodeId pf2A = t.leaf(f2A), pf2b = t.leaf(f2b);
        const NodeId pf3A = t.leaf(f3A), pf3b = t.leaf(f3b);
        if (param_ids)
            *param_ids = {pc1k, pc1b, pc2k, pc2b, pf1A, pf1b, pf2A, pf2b, pf3A, pf3b};

        NodeId x = t.leaf(image);
        x = t.record("zero_pad2d", {x}, OpAttrs{{2, 2, 2, 2}, {}});
        x = t.record("conv2d_mcc", {x, pc1k, pc1b});
        x = t.record("relu", {x});
        x = t.record("maxpool2d", {x}, OpAttrs{{2}, {}});
        x = t.record("conv2d_mcc", {x, pc2k, pc2b});
        x = t.record("relu", {x});
        x = t.record("maxpool2d", {x}, OpAttrs{{2}, {}});
        x = t.record("flatten", {x});
        x = t.record("matmul", {pf1A, x});
        x = t.record("add", {x, pf1b});
        x = t.record("relu", {x});
        x = t.record("matmul", {pf2A, x});
        x = t.record("add", {x, pf2b});
        x = t.record("relu", {x});
        x = t.record("matmul", {pf3A, x});
        x = t.record("add", {x, pf3b});
        return x;
    }
};

/// Index sets grouping an S x S grid (flattened per channel) into Chebyshev
/// rings r = max(|i-c|, |j-c|). Quarter turns about the center permute each
/// ring within itself, so a per-ring max is exactly invariant under them.
inline std::vector<int> ring_pool_attrs(int channels, int S) {
    const int c = (S - 1) / 2;
    const int rings = c + 1;
    std::vector<std::vector<int>> sets(static_cast<std::size_t>(channels) * rings);
    for (int ch = 0; ch < channels; ++ch)
        for (int i = 0; i < S; ++i)
            for (int j = 0; j < S; ++j) {
                const int r = std::max(std::abs(i - c), std::abs(j - c));
                sets[static_cast<std::size_t>(ch) * rings + r].push_back(ch * S * S + i * S + j);
            }
    std::vector<int> attrs;
    attrs.push_back(static_cast<int>(sets.size()));
    for (const auto& s : sets) attrs.push_back(static_cast<int>(s.size()));
    for (const auto& s : sets) attrs.insert(attrs.end(), s.begin(), s.end());
    return attrs;
}

/// SE(2) G-CNN classifier:
/// 1x28x28 -> lift (K orientations, 7x7) -> ReLU -> MP2 -> group conv (5x5,
/// full angular support) -> ReLU -> MP2 -> max projection -> Chebyshev ring
/// max pool -> dense -> ReLU -> dense 10.
/// Every stage commutes with grid-exact quarter turns and the ring pool
/// removes the remaining spatial rotation, so predictions are invariant
/// under 90-degree input rotations up to float reassociation.
class GcnnModel final : public Model {
public:
    int K;
    int c1, c2; // lift / gconv output channels
    Tensor lk, lmix, lb;
    Tensor gk, gmix, gb;
    Tensor f1A, f1b, f2A, f2b;
    std::vector<int> ring_attrs;
    int ring_features;

    explicit GcnnModel(InitChoice init, Rng& rng, int K_ = 8, int c1_ = 8, int c2_ = 16,
                       int hidden = 32)
        : K(K_), c1(c1_), c2(c2_) {
        lk = init_weights(init, Shape{1, 7, 7}, 49, 49, rng);
        lmix = init_weights(init, Shape{c1, 1}, 1, c1, rng);
        lb = Tensor::zeros(Shape{c1});
        gk = init_weights(init, Shape{c1, K, 5, 5}, c1 * K * 25, c2 * 25, rng);
        gmix = init_weights(init, Shape{c2, c1}, c1, c2, rng);
        gb = Tensor::zeros(Shape{c2});
        ring_attrs = ring_pool_attrs(c2, 7);
        ring_features = ring_attrs[0];
        f1A = init_weights(init, Shape{hidden, ring_features}, ring_features, hidden, rng);
        f1b = Tensor::zeros(Shape{hidden});
        f2A = init_weights(init, Shape{10, hidden}, hidden, 10, rng);
        f2b = Tensor::zeros(Shape{10});
    }

    std::string name() const override { return "gcnn"; }

    std::vector<ParamRef> params() override {
        return {{"lift.k", &lk},   {"lift.mix", &lmix}, {"lift.b", &lb},  {"gconv.k", &gk},
                {"gconv.mix", &gmix}, {"gconv.b", &gb},  {"fc1.A", &f1A}, {"fc1.b", &f1b},
                {"fc2.A", &f2A},   {"fc2.b", &f2b}};
    }

    NodeId forward(Tape& t, const Tensor& image, std::vector<NodeId>* param_ids) const override {
        const NodeId plk = t.leaf(lk), plmix = t.leaf(lmix), plb = t.leaf(lb);
        const NodeId pgk = t.leaf(gk), pgmix = t.leaf(gmix), pgb = t.leaf(gb);
        const NodeId pf1A = t.leaf(f1A), pf1b = t.leaf(f1b);
        const NodeId pf2A = t.leaf(f2A), pf2b = t.leaf(f2b);
        if (param_ids)
            *param_ids = {plk, plmix, plb, pgk, pgmix, pgb, pf1A, pf1b, pf2A, pf2b};

        NodeId x = t.leaf(image);
        x = t.record("se2_lift", {x, plk, plmix, plb}, OpAttrs{{K}, {}});
        x = t.record("relu", {x});
        x = t.record("maxpool2d", {x}, OpAttrs{{2}, {}});
        x = t.record("se2_gconv", {x, pgk, pgmix, pgb});
        x = t.record("relu", {x});
        x = t.record("maxpool2d", {x}, OpAttrs{{2}, {}});
        x = t.record("se2_project_max", {x});
        x = t.record("flatten", {x});
        x = t.record("maxpool_sets", {x}, OpAttrs{ring_attrs, {}});
        x = t.record("matmul", {pf1A, x});
        x = t.record("add", {x, pf1b});
        x = t.record("relu", {x});
        x = t.record("matmul", {pf2A, x});
        x = t.record("add", {x, pf2b});
        return x;
    }
};

} // namespace gradkit
