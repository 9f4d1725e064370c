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
#include <cmath>
#include <vector>

#include "pillaredge/tensor.hpp"

namespace pillaredge {

/// Square-kernel 2D convolution spec. Output spatial size along each axis is
/// floor((N + 2p - k)/s) + 1 and must be >= 1.
struct ConvSpec {
    int in_ch = 0;
    int out_ch = 0;
    int k = 1;
    int s = 1;
    int p = 0;

    int out_extent(int n) const { return (n + 2 * p - k) / s + 1; }

    void validate(int h, int w) const {
        if (in_ch <= 0 || out_ch <= 0 || k <= 0 || s < 1 || p < 0) {
            throw Error("shape", "invalid conv spec");
        }
        if (out_extent(h) < 1 || out_extent(w) < 1) {
            throw Error("shape", "conv output would be empty for input " +
                                     std::to_string(h) + "x" + std::to_string(w));
        }
    }
};

/// Per-tensor (activations) or per-output-channel (weights) symmetric
/// quantization parameters; the zero point is fixed at 0.
struct QuantParams {
    double scale = 1.0;

    void validate() const {
        if (!(scale > 0.0) || !std::isfinite(scale)) throw Error("config", "quant scale must be positive");
    }
};

inline void relu_inplace(Tensor &t) {
    for (float &v : t.data) v = v < 0.0f ? 0.0f : v;
}

/// Cross-correlation with bias and zero padding. x is [Cin,H,W], w is
/// [Cout,Cin,k,k], b has Cout entries. Accumulation order is fixed, so
/// results are bit-reproducible.
inline Tensor conv2d_f32(const Tensor &x, const Tensor &w, const std::vector<float> &b,
                         const ConvSpec &spec) {
    if (x.dims.size() != 3 || w.dims.size() != 4) throw Error("shape", "conv2d_f32 expects 3D input, 4D weights");
    const int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
    spec.validate(h, wd);
    if (w.dim(0) != spec.out_ch || w.dim(1) != spec.in_ch || w.dim(2) != spec.k || w.dim(3) != spec.k) {
        throw Error("shape", "conv weight shape " + shape_str(w.dims) + " does not match spec");
    }
    if (cin != spec.in_ch) throw Error("shape", "conv input has " + std::to_string(cin) + " channels, spec wants " + std::to_string(spec.in_ch));
    if (static_cast<int>(b.size()) != spec.out_ch) throw Error("shape", "conv bias length mismatch");

    const int oh = spec.out_extent(h), ow = spec.out_extent(wd);
    Tensor out({spec.out_ch, oh, ow});
    const int k = spec.k, s = spec.s, p = spec.p;
    for (int oc = 0; oc < spec.out_ch; ++oc) {
        float *outp = out.plane(oc);
        std::fill(outp, outp + static_cast<size_t>(oh) * ow, b[oc]);
        for (int ic = 0; ic < cin; ++ic) {
            const float *inp = x.plane(ic);
            const float *wrow = &w.data[((static_cast<size_t>(oc) * cin + ic) * k) * k];
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const float wv = wrow[ky * k + kx];
                    if (wv == 0.0f) continue;
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = oy * s - p + ky;
                        if (iy < 0 || iy >= h) continue;
                        const float *in_row = inp + static_cast<size_t>(iy) * wd;
                        float *out_row = outp + static_cast<size_t>(oy) * ow;
                        // Restrict ox so that ix stays inside [0, wd).
                        int ox0 = 0;
                        while (ox0 * s - p + kx < 0) ++ox0;
                        int ox1 = ow - 1;
                        while (ox1 >= ox0 && ox1 * s - p + kx >= wd) --ox1;
                        const float *in_base = in_row + (static_cast<long>(ox0) * s - p + kx);
                        for (int ox = ox0; ox <= ox1; ++ox) {
                            out_row[ox] += wv * in_base[(ox - ox0) * s];
                        }
                    }
                }
            }
        }
    }
    return out;
}

/// Transposed convolution restricted to kernel == stride, padding 0: an exact
/// u-times upsampling. Each output pixel depends on exactly one input pixel,
/// equivalent to zero-insertion upsampling followed by a convolution.
inline Tensor tconv2d_f32(const Tensor &x, const Tensor &w, const std::vector<float> &b, int u) {
    if (u < 1) throw Error("shape", "tconv stride must be >= 1");
    if (x.dims.size() != 3 || w.dims.size() != 4) throw Error("shape", "tconv2d_f32 expects 3D input, 4D weights");
    const int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const int cout = w.dim(0);
    if (w.dim(1) != cin || w.dim(2) != u || w.dim(3) != u) {
        throw Error("shape", "tconv weight shape " + shape_str(w.dims) + " does not match stride " + std::to_string(u));
    }
    if (static_cast<int>(b.size()) != cout) throw Error("shape", "tconv bias length mismatch");

    Tensor out({cout, h * u, wd * u});
    for (int oc = 0; oc < cout; ++oc) {
        float *outp = out.plane(oc);
        for (int oy = 0; oy < h * u; ++oy) {
            const int iy = oy / u, ky = oy % u;
            float *out_row = outp + static_cast<size_t>(oy) * (wd * u);
            for (int ox = 0; ox < wd * u; ++ox) {
                const int ix = ox / u, kx = ox % u;
                float acc = b[oc];
                for (int ic = 0; ic < cin; ++ic) {
                    const float wv = w.data[(((static_cast<size_t>(oc) * cin + ic) * u) + ky) * u + kx];
                    acc += wv * x.at3(ic, iy, ix);
                }
                out_row[ox] = acc;
            }
        }
    }
    return out;
}

/// Per-output-channel batch norm applied in place:
/// y = (x - mean) / sqrt(var + eps) * gamma + beta.
inline void batchnorm_inplace(Tensor &x, const std::vector<float> &gamma, const std::vector<float> &beta,
                              const std::vector<float> &mean, const std::vector<float> &var, double eps) {
    const int c = x.dim(0);
    const size_t hw = static_cast<size_t>(x.dim(1)) * x.dim(2);
    if (gamma.size() != static_cast<size_t>(c) || beta.size() != gamma.size() ||
        mean.size() != gamma.size() || var.size() != gamma.size()) {
        throw Error("shape", "batchnorm parameter length mismatch");
    }
    for (int ch = 0; ch < c; ++ch) {
        const double denom = var[ch] + eps;
        if (!(denom > 0.0)) throw Error("config", "batchnorm var + eps must be positive");
        const float scale = static_cast<float>(gamma[ch] / std::sqrt(denom));
        const float shift = static_cast<float>(beta[ch] - mean[ch] * gamma[ch] / std::sqrt(denom));
        float *p = x.plane(ch);
        for (size_t i = 0; i < hw; ++i) p[i] = p[i] * scale + shift;
    }
}

/// Fold batch-norm statistics into conv weights and bias so that
/// conv(x; w', b') == BN(conv(x; w, b)).
inline void fold_batchnorm(Tensor &w, std::vector<float> &b, const std::vector<float> &gamma,
                           const std::vector<float> &beta, const std::vector<float> &mean,
                           const std::vector<float> &var, double eps) {
    const int cout = w.dim(0);
    if (static_cast<int>(b.size()) != cout) throw Error("shape", "fold_batchnorm bias length mismatch");
    const size_t per_ch = w.numel() / static_cast<size_t>(cout);
    for (int oc = 0; oc < cout; ++oc) {
        const double denom = static_cast<double>(var[oc]) + eps;
        if (!(denom > 0.0)) throw Error("config", "fold_batchnorm var + eps must be positive");
        const double scale = gamma[oc] / std::sqrt(denom);
        float *wp = w.data.data() + static_cast<size_t>(oc) * per_ch;
        for (size_t i = 0; i < per_ch; ++i) wp[i] = static_cast<float>(wp[i] * scale);
        b[oc] = static_cast<float>((b[oc] - mean[oc]) * scale + beta[oc]);
    }
}

/// round-half-away-from-zero, saturating at [-127, 127].
inline int8_t quantize_value(double x, double scale) {
    const double q = std::round(x / scale);
    return static_cast<int8_t>(std::clamp(q, -127.0, 127.0));
}

inline TensorI8 quantize(const Tensor &x, const QuantParams &q) {
    q.validate();
    TensorI8 out;
    out.dims = x.dims;
    out.data.resize(x.numel());
    for (size_t i = 0; i < x.numel(); ++i) out.data[i] = quantize_value(x.data[i], q.scale);
    return out;
}

inline Tensor dequantize(const TensorI8 &x, const QuantParams &q) {
    q.validate();
    Tensor out;
    out.dims = x.dims;
    out.data.resize(x.numel());
    for (size_t i = 0; i < x.numel(); ++i) out.data[i] = static_cast<float>(x.data[i] * q.scale);
    return out;
}

namespace detail {

inline int8_t requantize_acc(int64_t acc, double multiplier) {
    const double v = std::round(static_cast<double>(acc) * multiplier);
    return static_cast<int8_t>(std::clamp(v, -127.0, 127.0));
}

}  // namespace detail

/// int8 convolution: int32 accumulation of xq*wq plus a pre-quantized bias,
/// then requantization by x_scale*w_scale[oc]/out_scale in double precision.
/// Guaranteed overflow-free while in_ch*k*k < 2^31 / 127^2.
inline TensorI8 conv2d_i8(const TensorI8 &x, const TensorI8 &w, const std::vector<int32_t> &bias,
                          double x_scale, const std::vector<double> &w_scales, double out_scale,
                          const ConvSpec &spec, bool relu) {
    const int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
    spec.validate(h, wd);
    if (w.dim(0) != spec.out_ch || w.dim(1) != spec.in_ch || w.dim(2) != spec.k || w.dim(3) != spec.k) {
        throw Error("shape", "int8 conv weight shape mismatch");
    }
    if (cin != spec.in_ch) throw Error("shape", "int8 conv input channel mismatch");
    if (bias.size() != static_cast<size_t>(spec.out_ch) || w_scales.size() != bias.size()) {
        throw Error("shape", "int8 conv bias/scale length mismatch");
    }

    const int oh = spec.out_extent(h), ow = spec.out_extent(wd);
    const int k = spec.k, s = spec.s, p = spec.p;
    TensorI8 out({spec.out_ch, oh, ow});
    std::vector<int32_t> acc(static_cast<size_t>(oh) * ow);
    for (int oc = 0; oc < spec.out_ch; ++oc) {
        std::fill(acc.begin(), acc.end(), bias[oc]);
        for (int ic = 0; ic < cin; ++ic) {
            const int8_t *inp = x.plane(ic);
            const int8_t *wrow = &w.data[((static_cast<size_t>(oc) * cin + ic) * k) * k];
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const int32_t wv = wrow[ky * k + kx];
                    if (wv == 0) continue;
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = oy * s - p + ky;
                        if (iy < 0 || iy >= h) continue;
                        const int8_t *in_row = inp + static_cast<size_t>(iy) * wd;
                        int32_t *acc_row = acc.data() + static_cast<size_t>(oy) * ow;
                        int ox0 = 0;
                        while (ox0 * s - p + kx < 0) ++ox0;
                        int ox1 = ow - 1;
                        while (ox1 >= ox0 && ox1 * s - p + kx >= wd) --ox1;
                        const int8_t *in_base = in_row + (static_cast<long>(ox0) * s - p + kx);
                        for (int ox = ox0; ox <= ox1; ++ox) {
                            acc_row[ox] += wv * static_cast<int32_t>(in_base[(ox - ox0) * s]);
                        }
                    }
                }
            }
        }
        const double m = x_scale * w_scales[oc] / out_scale;
        int8_t *outp = out.plane(oc);
        for (size_t i = 0; i < acc.size(); ++i) {
            int8_t v = detail::requantize_acc(acc[i], m);
            if (relu && v < 0) v = 0;  // zero point is 0, so int8 ReLU is a clamp
            outp[i] = v;
        }
    }
    return out;
}

/// int8 transposed convolution with kernel == stride, padding 0.
inline TensorI8 tconv2d_i8(const TensorI8 &x, const TensorI8 &w, const std::vector<int32_t> &bias,
                           double x_scale, const std::vector<double> &w_scales, double out_scale,
                           int u, bool relu) {
    const int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const int cout = w.dim(0);
    if (w.dim(1) != cin || w.dim(2) != u || w.dim(3) != u) {
        throw Error("shape", "int8 tconv weight shape mismatch");
    }
    TensorI8 out({cout, h * u, wd * u});
    for (int oc = 0; oc < cout; ++oc) {
        const double m = x_scale * w_scales[oc] / out_scale;
        int8_t *outp = out.plane(oc);
        for (int oy = 0; oy < h * u; ++oy) {
            const int iy = oy / u, ky = oy % u;
            for (int ox = 0; ox < wd * u; ++ox) {
                const int ix = ox / u, kx = ox % u;
                int32_t acc = bias[oc];
                for (int ic = 0; ic < cin; ++ic) {
                    const int32_t wv = w.data[(((static_cast<size_t>(oc) * cin + ic) * u) + ky) * u + kx];
                    acc += wv * static_cast<int32_t>(x.plane(ic)[static_cast<size_t>(iy) * wd + ix]);
                }
                int8_t v = detail::requantize_acc(acc, m);
                if (relu && v < 0) v = 0;
                outp[ox + static_cast<size_t>(oy) * (wd * u)] = v;
            }
        }
    }
    return out;
}

}  // namespace pillaredge
