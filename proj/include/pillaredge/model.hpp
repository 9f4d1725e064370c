/******************************************************************************
 * Copyright 2026 The PillarEdge Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 *****************************************************************************/

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pillaredge/nn_ops.hpp"
#include "pillaredge/pillars.hpp"
#include "pillaredge/weights.hpp"

namespace pillaredge {

inline constexpr double kBnEps = 1e-5;

struct ConvBlockSpec {
    int stride = 2;
    int n_layers = 4;
    int channels = 64;
};

struct AnchorSpec {
    double length = 3.9;
    double width = 1.6;
    double height = 1.56;
    double z_center = -1.0;
    std::vector<double> yaws{0.0, kPi / 2.0};
};

/// Backbone + head configuration. Defaults give the conventional car-scale
/// network: three stride-2 blocks upsampled to a common half-resolution map,
/// concatenated, and read by two 1x1 head convs.
struct ModelConfig {
    GridSpec grid;
    std::vector<ConvBlockSpec> blocks{{2, 4, 64}, {2, 6, 128}, {2, 6, 256}};
    std::vector<int> up_strides{1, 2, 4};
    int up_channels = 128;
    int n_anchors_per_cell = 2;
    int n_classes = 1;
    int box_code_size = 7;
    AnchorSpec anchor;

    int out_height() const { return grid.height() * up_strides.at(0) / blocks.at(0).stride; }
    int out_width() const { return grid.width() * up_strides.at(0) / blocks.at(0).stride; }
    int concat_channels() const { return up_channels * static_cast<int>(blocks.size()); }

    void validate() const {
        grid.validate();
        if (blocks.empty()) throw Error("config", "model needs at least one block");
        if (blocks.size() != up_strides.size()) {
            throw Error("config", "blocks and up_strides must have equal length");
        }
        if (up_channels <= 0 || n_anchors_per_cell <= 0) throw Error("config", "bad channel/anchor count");
        if (n_classes != 1) throw Error("config", "only a single class is supported");
        if (box_code_size != 7) throw Error("config", "box code size is fixed at 7");
        if (static_cast<int>(anchor.yaws.size()) != n_anchors_per_cell) {
            throw Error("config", "anchor yaw count must equal n_anchors_per_cell");
        }
        int h = grid.height(), w = grid.width();
        int target_h = -1, target_w = -1;
        for (size_t i = 0; i < blocks.size(); ++i) {
            if (blocks[i].stride < 1 || blocks[i].n_layers < 1 || blocks[i].channels < 1) {
                throw Error("config", "invalid block spec at index " + std::to_string(i));
            }
            if (up_strides[i] < 1) throw Error("config", "up stride must be >= 1");
            if (h % blocks[i].stride != 0 || w % blocks[i].stride != 0) {
                throw Error("config", "block stride does not divide feature map at block " + std::to_string(i));
            }
            h /= blocks[i].stride;
            w /= blocks[i].stride;
            const int up_h = h * up_strides[i], up_w = w * up_strides[i];
            if (target_h < 0) {
                target_h = up_h;
                target_w = up_w;
            } else if (up_h != target_h || up_w != target_w) {
                throw Error("config", "upsampled block resolutions disagree at block " + std::to_string(i));
            }
        }
    }
};

struct HeadOutput {
    Tensor cls_map;  // [A*K, Ho, Wo] raw logits
    Tensor box_map;  // [A*7, Ho, Wo] residuals
};

enum class LayerKind : uint8_t { Conv = 0, TConv = 1, Head = 2 };

/// One layer of the offloaded subgraph, in topological order.
struct LayerDesc {
    std::string name;
    LayerKind kind = LayerKind::Conv;
    ConvSpec spec;
    std::string input;  // site name consumed ("in", "b0.c1", ..., "cat")
    bool has_bn = true;
    bool relu = true;
};

/// Canonical enumeration of the backbone + head layers; shared by weight
/// init, forward, folding, calibration, and compilation.
inline std::vector<LayerDesc> enumerate_layers(const ModelConfig &config) {
    config.validate();
    std::vector<LayerDesc> layers;
    int in_ch = config.grid.out_channels;
    std::string input = "in";
    std::vector<std::string> block_out(config.blocks.size());
    for (size_t i = 0; i < config.blocks.size(); ++i) {
        const ConvBlockSpec &blk = config.blocks[i];
        for (int j = 0; j < blk.n_layers; ++j) {
            LayerDesc l;
            l.name = "b" + std::to_string(i) + ".c" + std::to_string(j);
            l.kind = LayerKind::Conv;
            l.spec = {in_ch, blk.channels, 3, j == 0 ? blk.stride : 1, 1};
            l.input = input;
            layers.push_back(l);
            input = l.name;
            in_ch = blk.channels;
        }
        block_out[i] = input;
    }
    for (size_t i = 0; i < config.blocks.size(); ++i) {
        LayerDesc l;
        l.name = "up" + std::to_string(i);
        l.kind = LayerKind::TConv;
        const int u = config.up_strides[i];
        l.spec = {config.blocks[i].channels, config.up_channels, u, u, 0};
        l.input = block_out[i];
        layers.push_back(l);
    }
    for (const char *head : {"cls", "box"}) {
        LayerDesc l;
        l.name = head;
        l.kind = LayerKind::Head;
        const int out = std::string(head) == "cls" ? config.n_anchors_per_cell * config.n_classes
                                                   : config.n_anchors_per_cell * config.box_code_size;
        l.spec = {config.concat_channels(), out, 1, 1, 0};
        l.input = "cat";
        l.has_bn = false;
        l.relu = false;
        layers.push_back(l);
    }
    return layers;
}

/// Xavier-uniform weights, zero biases, identity batch norm. Deterministic
/// under the seed: tensors are drawn in enumeration order from one stream.
inline WeightStore init_random_weights(const ModelConfig &config, uint64_t seed) {
    config.validate();
    Rng rng(seed);
    WeightStore store;

    auto draw = [&rng](Tensor &t, double bound) {
        for (float &v : t.data) v = static_cast<float>(rng.uniform(-bound, bound));
    };
    auto put_bn = [&store](const std::string &prefix, int ch) {
        store.put(prefix + ".bn.gamma", Tensor({ch}, std::vector<float>(ch, 1.0f)));
        store.put(prefix + ".bn.beta", Tensor({ch}, std::vector<float>(ch, 0.0f)));
        store.put(prefix + ".bn.mean", Tensor({ch}, std::vector<float>(ch, 0.0f)));
        store.put(prefix + ".bn.var", Tensor({ch}, std::vector<float>(ch, 1.0f)));
        store.put(prefix + ".bn.eps", Tensor({1}, {static_cast<float>(kBnEps)}));
    };

    const int c = config.grid.out_channels, d = config.grid.in_features;
    Tensor pfn({c, d});
    draw(pfn, std::sqrt(6.0 / (d + c)));
    store.put("pfn.linear", std::move(pfn));
    put_bn("pfn", c);

    for (const LayerDesc &l : enumerate_layers(config)) {
        Tensor w({l.spec.out_ch, l.spec.in_ch, l.spec.k, l.spec.k});
        const double fan_in = static_cast<double>(l.spec.in_ch) * l.spec.k * l.spec.k;
        const double fan_out = static_cast<double>(l.spec.out_ch) * l.spec.k * l.spec.k;
        draw(w, std::sqrt(6.0 / (fan_in + fan_out)));
        store.put(l.name + ".w", std::move(w));
        store.put(l.name + ".b", Tensor({l.spec.out_ch}, std::vector<float>(l.spec.out_ch, 0.0f)));
        if (l.has_bn) put_bn(l.name, l.spec.out_ch);
    }
    return store;
}

/// Fold every subgraph batch norm into its conv. The PFN keeps its explicit
/// batch norm (it runs on the CPU side in float).
inline WeightStore fold_weights(const WeightStore &store, const ModelConfig &config) {
    WeightStore out = store;
    for (const LayerDesc &l : enumerate_layers(config)) {
        if (!l.has_bn || !out.has(l.name + ".bn.gamma")) continue;
        Tensor w = out.get(l.name + ".w");
        std::vector<float> b = out.get_vec(l.name + ".b");
        fold_batchnorm(w, b, out.get_vec(l.name + ".bn.gamma"), out.get_vec(l.name + ".bn.beta"),
                       out.get_vec(l.name + ".bn.mean"), out.get_vec(l.name + ".bn.var"),
                       out.get_scalar(l.name + ".bn.eps"));
        out.put(l.name + ".w", std::move(w));
        const int n_bias = static_cast<int>(b.size());
        out.put(l.name + ".b", Tensor({n_bias}, std::move(b)));
        for (const char *suffix : {".bn.gamma", ".bn.beta", ".bn.mean", ".bn.var", ".bn.eps"}) {
            out.tensors.erase(l.name + suffix);
        }
    }
    return out;
}

/// Called once per named activation site during a forward pass.
using SiteVisitor = std::function<void(const std::string &, const Tensor &)>;

/// Float reference forward of the offloaded subgraph. Batch norms are applied
/// when their tensors are present, so folded and unfolded stores both work.
inline HeadOutput backbone_head_forward(const PseudoImage &pseudo, const WeightStore &store,
                                        const ModelConfig &config, const SiteVisitor &visit = {}) {
    config.validate();
    if (pseudo.dims.size() != 3 || pseudo.dim(0) != config.grid.out_channels ||
        pseudo.dim(1) != config.grid.height() || pseudo.dim(2) != config.grid.width()) {
        throw Error("shape", "pseudo-image shape " + shape_str(pseudo.dims) + " does not match grid");
    }
    if (visit) visit("in", pseudo);

    auto run_layer = [&](const LayerDesc &l, const Tensor &x) {
        const Tensor &w = store.get(l.name + ".w");
        const std::vector<float> b = store.get_vec(l.name + ".b");
        Tensor y = l.kind == LayerKind::TConv ? tconv2d_f32(x, w, b, l.spec.s)
                                              : conv2d_f32(x, w, b, l.spec);
        if (l.has_bn && store.has(l.name + ".bn.gamma")) {
            batchnorm_inplace(y, store.get_vec(l.name + ".bn.gamma"), store.get_vec(l.name + ".bn.beta"),
                              store.get_vec(l.name + ".bn.mean"), store.get_vec(l.name + ".bn.var"),
                              store.get_scalar(l.name + ".bn.eps"));
        }
        if (l.relu) relu_inplace(y);
        if (visit) visit(l.name, y);
        return y;
    };

    const std::vector<LayerDesc> layers = enumerate_layers(config);
    const size_t n_blocks = config.blocks.size();
    std::vector<Tensor> block_out(n_blocks);
    Tensor x = pseudo;
    size_t li = 0;
    for (size_t i = 0; i < n_blocks; ++i) {
        for (int j = 0; j < config.blocks[i].n_layers; ++j) x = run_layer(layers[li++], x);
        block_out[i] = x;
    }

    const int ho = config.out_height(), wo = config.out_width();
    Tensor cat({config.concat_channels(), ho, wo});
    for (size_t i = 0; i < n_blocks; ++i) {
        Tensor up = run_layer(layers[li++], block_out[i]);
        if (up.dim(1) != ho || up.dim(2) != wo) {
            throw Error("shape", "upsampled block " + std::to_string(i) + " has shape " +
                                     shape_str(up.dims));
        }
        std::copy(up.data.begin(), up.data.end(),
                  cat.data.begin() + static_cast<size_t>(i) * config.up_channels * ho * wo);
        block_out[i] = Tensor();
    }
    if (visit) visit("cat", cat);

    HeadOutput out;
    out.cls_map = run_layer(layers[li++], cat);
    out.box_map = run_layer(layers[li++], cat);
    return out;
}

}  // namespace pillaredge
