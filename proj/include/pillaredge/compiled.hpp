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

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pillaredge/hash.hpp"
#include "pillaredge/model.hpp"

namespace pillaredge {

inline constexpr double kMinActMaxAbs = 1e-6;
inline constexpr double kMinWeightScale = 1e-9;
// int32 accumulators stay exact while 127^2 * fan_in < 2^31.
inline constexpr int64_t kMaxQuantFanIn = (int64_t(1) << 31) / (127 * 127);

/// Fixed-order text encoding of everything that determines compiled-artifact
/// semantics; hashing it yields the config fingerprint.
inline std::string canonical_config_encoding(const ModelConfig &c) {
    std::string s;
    auto kv = [&s](const std::string &key, const std::string &val) { s += key + "=" + val + "\n"; };
    kv("grid.x_min", fmt_double(c.grid.x_min));
    kv("grid.x_max", fmt_double(c.grid.x_max));
    kv("grid.y_min", fmt_double(c.grid.y_min));
    kv("grid.y_max", fmt_double(c.grid.y_max));
    kv("grid.z_min", fmt_double(c.grid.z_min));
    kv("grid.z_max", fmt_double(c.grid.z_max));
    kv("grid.pillar_size", fmt_double(c.grid.pillar_size));
    kv("grid.max_pillars", std::to_string(c.grid.max_pillars));
    kv("grid.max_points_per_pillar", std::to_string(c.grid.max_points_per_pillar));
    kv("grid.in_features", std::to_string(c.grid.in_features));
    kv("grid.out_channels", std::to_string(c.grid.out_channels));
    for (size_t i = 0; i < c.blocks.size(); ++i) {
        kv("block." + std::to_string(i),
           std::to_string(c.blocks[i].stride) + "," + std::to_string(c.blocks[i].n_layers) + "," +
               std::to_string(c.blocks[i].channels) + "," + std::to_string(c.up_strides[i]));
    }
    kv("up_channels", std::to_string(c.up_channels));
    kv("n_anchors_per_cell", std::to_string(c.n_anchors_per_cell));
    kv("n_classes", std::to_string(c.n_classes));
    kv("box_code_size", std::to_string(c.box_code_size));
    kv("anchor.length", fmt_double(c.anchor.length));
    kv("anchor.width", fmt_double(c.anchor.width));
    kv("anchor.height", fmt_double(c.anchor.height));
    kv("anchor.z_center", fmt_double(c.anchor.z_center));
    for (size_t i = 0; i < c.anchor.yaws.size(); ++i) {
        kv("anchor.yaw." + std::to_string(i), fmt_double(c.anchor.yaws[i]));
    }
    return s;
}

inline std::array<uint8_t, 32> config_fingerprint(const ModelConfig &c) {
    return sha256(canonical_config_encoding(c));
}

enum class CalibMode : uint8_t { MaxAbs = 0, P999 = 1 };

/// Per-site activation statistics gathered over a calibration set.
struct CalibStats {
    std::map<std::string, double> max_abs;  // site name -> positive float
    int n_frames = 0;
    CalibMode mode = CalibMode::MaxAbs;
    std::array<uint8_t, 32> fingerprint{};
};

namespace detail {

inline double tensor_max_abs(const Tensor &t) {
    double m = 0.0;
    for (float v : t.data) m = std::max(m, std::abs(static_cast<double>(v)));
    return m;
}

/// 99.9th percentile of |values| within one tensor (exact, by selection).
inline double tensor_p999(const Tensor &t) {
    if (t.data.empty()) return 0.0;
    std::vector<float> mags(t.data.size());
    for (size_t i = 0; i < mags.size(); ++i) mags[i] = std::abs(t.data[i]);
    const size_t idx = static_cast<size_t>(0.999 * static_cast<double>(mags.size() - 1));
    std::nth_element(mags.begin(), mags.begin() + idx, mags.end());
    return mags[idx];
}

}  // namespace detail

/// Run the float forward over each calibration frame and record per-site
/// magnitudes: the running max of |v| (MaxAbs) or the running max of each
/// frame's 99.9th |v| percentile (P999). Results are floored at 1e-6.
inline CalibStats calibrate(const WeightStore &store, const ModelConfig &config,
                            const std::vector<PseudoImage> &frames,
                            CalibMode mode = CalibMode::MaxAbs) {
    if (frames.empty()) throw Error("calibration", "calibration set is empty");
    CalibStats stats;
    stats.mode = mode;
    stats.n_frames = static_cast<int>(frames.size());
    stats.fingerprint = config_fingerprint(config);
    auto site_stat = mode == CalibMode::MaxAbs ? detail::tensor_max_abs : detail::tensor_p999;
    for (const PseudoImage &frame : frames) {
        backbone_head_forward(frame, store, config, [&](const std::string &site, const Tensor &t) {
            const double v = site_stat(t);
            auto [it, inserted] = stats.max_abs.try_emplace(site, v);
            if (!inserted) it->second = std::max(it->second, v);
        });
    }
    for (auto &[site, v] : stats.max_abs) v = std::max(v, kMinActMaxAbs);
    return stats;
}

/// One quantized layer of the compiled graph. Site ids: 0 is the subgraph
/// input, layer i produces site i+1, and site layer_count+1 is the implicit
/// channel concatenation of all TConv outputs in layer order.
struct QLayer {
    LayerKind kind = LayerKind::Conv;
    ConvSpec spec;
    uint32_t input_site = 0;
    double in_scale = 1.0;
    std::vector<double> w_scales;  // per output channel
    TensorI8 weights;              // [out, in, k, k]
    std::vector<int32_t> biases;   // pre-quantized at in_scale * w_scale[oc]
    double out_scale = 1.0;
};

/// Self-contained serialized int8 graph: executing it needs no WeightStore.
struct CompiledModel {
    std::vector<QLayer> layers;
    std::array<uint8_t, 32> fingerprint{};

    uint32_t concat_site() const { return static_cast<uint32_t>(layers.size()) + 1; }
};

/// Quantize the folded subgraph against calibration statistics. Activation
/// scales are max_abs/127 per site; weight scales are per-output-channel
/// max|w|/127. All transposed-conv outputs share the concat site scale so the
/// channel concatenation needs no rescaling.
inline CompiledModel compile_model(const WeightStore &store, const ModelConfig &config,
                                   const CalibStats &stats) {
    const std::vector<LayerDesc> descs = enumerate_layers(config);
    for (const LayerDesc &l : descs) {
        if (l.has_bn && store.has(l.name + ".bn.gamma")) {
            throw Error("unfolded-weights", "layer " + l.name + " still carries batch norm; fold first");
        }
    }
    const auto fp = config_fingerprint(config);
    if (stats.fingerprint != fp) {
        throw Error("fingerprint", "calibration stats were produced for a different config");
    }

    auto site_scale = [&stats](const std::string &site) {
        auto it = stats.max_abs.find(site);
        if (it == stats.max_abs.end()) {
            throw Error("calibration", "no calibration statistic for site '" + site + "'");
        }
        return std::max(it->second, kMinActMaxAbs) / 127.0;
    };

    // Site name -> numeric id, matching execution order.
    std::map<std::string, uint32_t> site_id{{"in", 0}};
    for (size_t i = 0; i < descs.size(); ++i) site_id[descs[i].name] = static_cast<uint32_t>(i) + 1;
    site_id["cat"] = static_cast<uint32_t>(descs.size()) + 1;

    const double cat_scale = site_scale("cat");
    CompiledModel model;
    model.fingerprint = fp;
    model.layers.reserve(descs.size());
    for (const LayerDesc &desc : descs) {
        const int64_t fan_in = static_cast<int64_t>(desc.spec.in_ch) * desc.spec.k * desc.spec.k;
        if (fan_in >= kMaxQuantFanIn) {
            throw Error("config", "layer " + desc.name + " fan-in " + std::to_string(fan_in) +
                                      " risks int32 accumulator overflow");
        }
        QLayer q;
        q.kind = desc.kind;
        q.spec = desc.spec;
        q.input_site = site_id.at(desc.input);
        q.in_scale = desc.input == "cat" ? cat_scale : site_scale(desc.input);
        q.out_scale = desc.kind == LayerKind::TConv ? cat_scale : site_scale(desc.name);

        const Tensor &w = store.get(desc.name + ".w");
        const std::vector<float> b = store.get_vec(desc.name + ".b");
        const int cout = desc.spec.out_ch;
        const size_t per_ch = w.numel() / static_cast<size_t>(cout);
        q.w_scales.resize(cout);
        q.weights.dims = w.dims;
        q.weights.data.resize(w.numel());
        q.biases.resize(cout);
        for (int oc = 0; oc < cout; ++oc) {
            const float *wp = w.data.data() + static_cast<size_t>(oc) * per_ch;
            double wmax = 0.0;
            for (size_t i = 0; i < per_ch; ++i) wmax = std::max(wmax, std::abs(static_cast<double>(wp[i])));
            q.w_scales[oc] = std::max(wmax, 127.0 * kMinWeightScale) / 127.0;
            int8_t *qp = q.weights.data.data() + static_cast<size_t>(oc) * per_ch;
            for (size_t i = 0; i < per_ch; ++i) qp[i] = quantize_value(wp[i], q.w_scales[oc]);
            q.biases[oc] = static_cast<int32_t>(std::clamp(
                std::round(static_cast<double>(b[oc]) / (q.in_scale * q.w_scales[oc])), -2147483647.0,
                2147483647.0));
        }
        model.layers.push_back(std::move(q));
    }
    return model;
}

/// Execute the compiled graph on a pseudo-image: quantize at the input-site
/// scale, run the int8 topology, dequantize the two head maps.
inline HeadOutput accel_execute(const CompiledModel &model, const PseudoImage &pseudo) {
    if (model.layers.empty()) throw Error("format", "compiled model has no layers");
    if (pseudo.dims.size() != 3 || pseudo.dim(0) != model.layers[0].spec.in_ch) {
        throw Error("shape", "pseudo-image shape " + shape_str(pseudo.dims) +
                                 " does not match compiled input");
    }

    const uint32_t n_sites = static_cast<uint32_t>(model.layers.size()) + 2;
    std::vector<TensorI8> sites(n_sites);
    sites[0] = quantize(pseudo, {model.layers[0].in_scale});

    const uint32_t cat_site = model.concat_site();
    std::vector<const TensorI8 *> tconv_outputs;
    HeadOutput out;
    int heads_seen = 0;

    for (size_t i = 0; i < model.layers.size(); ++i) {
        const QLayer &q = model.layers[i];
        if (q.input_site == cat_site && sites[cat_site].numel() == 0) {
            if (tconv_outputs.empty()) throw Error("format", "concat consumer before any tconv output");
            int total_ch = 0;
            for (const TensorI8 *t : tconv_outputs) total_ch += t->dim(0);
            TensorI8 cat({total_ch, tconv_outputs[0]->dim(1), tconv_outputs[0]->dim(2)});
            size_t off = 0;
            for (const TensorI8 *t : tconv_outputs) {
                std::copy(t->data.begin(), t->data.end(), cat.data.begin() + off);
                off += t->numel();
            }
            sites[cat_site] = std::move(cat);
        }
        const TensorI8 &input = sites[q.input_site];
        if (input.numel() == 0) throw Error("format", "layer consumes unproduced site");
        const bool relu = q.kind != LayerKind::Head;
        TensorI8 y = q.kind == LayerKind::TConv
                         ? tconv2d_i8(input, q.weights, q.biases, q.in_scale, q.w_scales, q.out_scale,
                                      q.spec.s, relu)
                         : conv2d_i8(input, q.weights, q.biases, q.in_scale, q.w_scales, q.out_scale,
                                     q.spec, relu);
        sites[i + 1] = std::move(y);
        if (q.kind == LayerKind::TConv) tconv_outputs.push_back(&sites[i + 1]);
        if (q.kind == LayerKind::Head) {
            Tensor deq = dequantize(sites[i + 1], {q.out_scale});
            if (heads_seen == 0) {
                out.cls_map = std::move(deq);
            } else if (heads_seen == 1) {
                out.box_map = std::move(deq);
            }
            ++heads_seen;
        }
    }
    if (heads_seen != 2) {
        throw Error("format", "compiled model has " + std::to_string(heads_seen) + " head layers, expected 2");
    }
    return out;
}

/// Compiled file: magic "PPQ1"; u32 LE layer count; per layer: kind byte,
/// five u32 LE (in_ch,out_ch,k,s,p), input-site id u32 LE, f64 LE input
/// scale, u32 LE channel count, f64 LE weight scales, int8 weights, int32 LE
/// biases, f64 LE output scale; trailing 32-byte config fingerprint.
inline void save_compiled(const CompiledModel &model, const std::filesystem::path &path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("io", "cannot write compiled file " + path.string());
    out.write("PPQ1", 4);
    detail::write_u32(out, static_cast<uint32_t>(model.layers.size()));
    for (const QLayer &q : model.layers) {
        out.put(static_cast<char>(q.kind));
        detail::write_u32(out, static_cast<uint32_t>(q.spec.in_ch));
        detail::write_u32(out, static_cast<uint32_t>(q.spec.out_ch));
        detail::write_u32(out, static_cast<uint32_t>(q.spec.k));
        detail::write_u32(out, static_cast<uint32_t>(q.spec.s));
        detail::write_u32(out, static_cast<uint32_t>(q.spec.p));
        detail::write_u32(out, q.input_site);
        detail::write_f64(out, q.in_scale);
        detail::write_u32(out, static_cast<uint32_t>(q.w_scales.size()));
        for (double s : q.w_scales) detail::write_f64(out, s);
        out.write(reinterpret_cast<const char *>(q.weights.data.data()),
                  static_cast<std::streamsize>(q.weights.numel()));
        for (int32_t b : q.biases) detail::write_u32(out, static_cast<uint32_t>(b));
        detail::write_f64(out, q.out_scale);
    }
    out.write(reinterpret_cast<const char *>(model.fingerprint.data()), 32);
    if (!out) throw Error("io", "short write to " + path.string());
}

inline CompiledModel load_compiled(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("io", "cannot open compiled file " + path.string());
    detail::ByteReader rd(in, "compiled file " + path.string());
    char magic[4];
    rd.raw(magic, 4, "magic");
    if (std::memcmp(magic, "PPQ1", 4) != 0) {
        throw Error("format", "bad magic in compiled file " + path.string());
    }
    const uint32_t count = rd.u32("layer count");
    if (count == 0 || count > 4096) throw Error("format", "implausible layer count");
    CompiledModel model;
    model.layers.resize(count);
    int heads = 0;
    for (uint32_t i = 0; i < count; ++i) {
        const std::string ctx = "layer #" + std::to_string(i);
        QLayer &q = model.layers[i];
        const uint8_t kind = rd.u8(ctx);
        if (kind > 2) throw Error("format", ctx + " has unknown kind " + std::to_string(kind));
        q.kind = static_cast<LayerKind>(kind);
        q.spec.in_ch = static_cast<int>(rd.u32(ctx));
        q.spec.out_ch = static_cast<int>(rd.u32(ctx));
        q.spec.k = static_cast<int>(rd.u32(ctx));
        q.spec.s = static_cast<int>(rd.u32(ctx));
        q.spec.p = static_cast<int>(rd.u32(ctx));
        if (q.spec.in_ch <= 0 || q.spec.out_ch <= 0 || q.spec.k <= 0 || q.spec.s <= 0 ||
            q.spec.in_ch > 65536 || q.spec.out_ch > 65536 || q.spec.k > 1024) {
            throw Error("format", ctx + " has invalid conv spec");
        }
        const int64_t fan_in = static_cast<int64_t>(q.spec.in_ch) * q.spec.k * q.spec.k;
        if (fan_in >= kMaxQuantFanIn) throw Error("format", ctx + " fan-in too large for int32");
        q.input_site = rd.u32(ctx);
        if (q.input_site > count + 1) throw Error("format", ctx + " references site out of range");
        q.in_scale = rd.f64(ctx);
        const uint32_t n_ch = rd.u32(ctx);
        if (n_ch != static_cast<uint32_t>(q.spec.out_ch)) {
            throw Error("format", ctx + " channel count disagrees with out_ch");
        }
        q.w_scales.resize(n_ch);
        for (uint32_t c = 0; c < n_ch; ++c) q.w_scales[c] = rd.f64(ctx);
        q.weights = TensorI8({q.spec.out_ch, q.spec.in_ch, q.spec.k, q.spec.k});
        rd.raw(q.weights.data.data(), q.weights.numel(), ctx + " weights");
        q.biases.resize(n_ch);
        for (uint32_t c = 0; c < n_ch; ++c) q.biases[c] = static_cast<int32_t>(rd.u32(ctx));
        q.out_scale = rd.f64(ctx);
        if (!(q.in_scale > 0.0) || !(q.out_scale > 0.0)) throw Error("format", ctx + " has non-positive scale");
        for (double s : q.w_scales) {
            if (!(s > 0.0)) throw Error("format", ctx + " has non-positive weight scale");
        }
        if (q.kind == LayerKind::Head) ++heads;
    }
    if (heads != 2) throw Error("format", "compiled file must contain exactly 2 head layers");
    rd.raw(model.fingerprint.data(), 32, "fingerprint");
    return model;
}

}  // namespace pillaredge
