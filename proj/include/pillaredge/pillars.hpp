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
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "pillaredge/point_cloud.hpp"
#include "pillaredge/tensor.hpp"
#include "pillaredge/weights.hpp"

namespace pillaredge {

/// BEV voxel grid with square pillars. Extents must be whole multiples of the
/// pillar size; the max-range faces are exclusive.
struct GridSpec {
    double x_min = 0.0, x_max = 69.12;
    double y_min = -39.68, y_max = 39.68;
    double z_min = -3.0, z_max = 1.0;
    double pillar_size = 0.16;
    int max_pillars = 12000;         // P
    int max_points_per_pillar = 32;  // Npp
    int in_features = 9;             // D, fixed decoration width
    int out_channels = 64;           // C

    int width() const { return static_cast<int>(std::llround((x_max - x_min) / pillar_size)); }
    int height() const { return static_cast<int>(std::llround((y_max - y_min) / pillar_size)); }

    void validate() const {
        if (!(x_max > x_min) || !(y_max > y_min) || !(z_max > z_min)) {
            throw Error("config", "grid ranges must be non-empty");
        }
        if (!(pillar_size > 0.0)) throw Error("config", "pillar_size must be positive");
        const double wf = (x_max - x_min) / pillar_size;
        const double hf = (y_max - y_min) / pillar_size;
        if (std::abs(wf - std::llround(wf)) > 1e-6 || std::abs(hf - std::llround(hf)) > 1e-6) {
            throw Error("config", "grid extents must be whole multiples of pillar_size");
        }
        if (max_pillars <= 0 || max_points_per_pillar <= 0 || out_channels <= 0) {
            throw Error("config", "grid capacities must be positive");
        }
        if (in_features != 9) throw Error("config", "in_features is fixed at 9");
    }
};

/// Dense pillar tensor plus the grid cell of each occupied pillar. The
/// features tensor is [n_occupied, Npp, D]; point rows at index >= n_points
/// are zero padding.
struct PillarBatch {
    Tensor features;                           // [n_occupied, Npp, D]
    std::vector<std::pair<int, int>> indices;  // (ix, iy) per occupied pillar
    std::vector<int> n_points;                 // valid rows per pillar
    int n_occupied = 0;
};

/// C x H x W feature canvas; cells without a pillar are exactly zero.
using PseudoImage = Tensor;

/// Bin in-range points into pillars. Points on or beyond the max faces are
/// dropped (half-open intervals). Per pillar the first Npp points are kept in
/// arrival order; if occupied pillars exceed P, the P with the most raw
/// points survive (ties to the lower (iy, ix)), keeping first-seen order.
inline PillarBatch pillarize(const PointCloud &cloud, const GridSpec &grid) {
    grid.validate();
    const int w = grid.width(), h = grid.height();
    const int npp = grid.max_points_per_pillar;

    struct Slot {
        int ix, iy;
        int raw_count = 0;
        std::vector<int> point_ids;  // at most Npp, arrival order
    };
    std::unordered_map<int64_t, int> slot_of;
    std::vector<Slot> slots;

    for (size_t i = 0; i < cloud.points.size(); ++i) {
        const Point &p = cloud.points[i];
        if (p.x < grid.x_min || p.x >= grid.x_max || p.y < grid.y_min || p.y >= grid.y_max ||
            p.z < grid.z_min || p.z >= grid.z_max) {
            continue;
        }
        const int ix = static_cast<int>(std::floor((p.x - grid.x_min) / grid.pillar_size));
        const int iy = static_cast<int>(std::floor((p.y - grid.y_min) / grid.pillar_size));
        if (ix < 0 || ix >= w || iy < 0 || iy >= h) continue;  // boundary rounding guard
        const int64_t key = static_cast<int64_t>(iy) * w + ix;
        auto [it, inserted] = slot_of.try_emplace(key, static_cast<int>(slots.size()));
        if (inserted) slots.push_back({ix, iy, 0, {}});
        Slot &slot = slots[it->second];
        slot.raw_count++;
        if (static_cast<int>(slot.point_ids.size()) < npp) slot.point_ids.push_back(static_cast<int>(i));
    }

    std::vector<int> keep(slots.size());
    for (size_t i = 0; i < slots.size(); ++i) keep[i] = static_cast<int>(i);
    if (static_cast<int>(slots.size()) > grid.max_pillars) {
        std::vector<int> order = keep;
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (slots[a].raw_count != slots[b].raw_count) return slots[a].raw_count > slots[b].raw_count;
            if (slots[a].iy != slots[b].iy) return slots[a].iy < slots[b].iy;
            return slots[a].ix < slots[b].ix;
        });
        std::unordered_set<int> chosen(order.begin(), order.begin() + grid.max_pillars);
        keep.clear();
        for (size_t i = 0; i < slots.size(); ++i) {
            if (chosen.count(static_cast<int>(i))) keep.push_back(static_cast<int>(i));
        }
    }

    PillarBatch batch;
    batch.n_occupied = static_cast<int>(keep.size());
    batch.features = Tensor({batch.n_occupied, npp, grid.in_features});
    batch.indices.reserve(keep.size());
    batch.n_points.reserve(keep.size());
    for (size_t out = 0; out < keep.size(); ++out) {
        const Slot &slot = slots[keep[out]];
        batch.indices.emplace_back(slot.ix, slot.iy);
        batch.n_points.push_back(static_cast<int>(slot.point_ids.size()));
        for (size_t row = 0; row < slot.point_ids.size(); ++row) {
            const Point &p = cloud.points[slot.point_ids[row]];
            float *f = &batch.features.data[(out * npp + row) * grid.in_features];
            f[0] = static_cast<float>(p.x);
            f[1] = static_cast<float>(p.y);
            f[2] = static_cast<float>(p.z);
            f[3] = static_cast<float>(p.r);
        }
    }
    return batch;
}

/// Fill the decoration slots: (xc, yc, zc) offsets from the pillar's valid-
/// point mean and (xp, yp) offsets from the pillar's geometric center.
inline PillarBatch augment_features(PillarBatch batch, const GridSpec &grid) {
    const int npp = grid.max_points_per_pillar;
    const int d = grid.in_features;
    for (int pi = 0; pi < batch.n_occupied; ++pi) {
        const int n = batch.n_points[pi];
        if (n == 0) continue;
        double mx = 0.0, my = 0.0, mz = 0.0;
        float *base = &batch.features.data[static_cast<size_t>(pi) * npp * d];
        for (int row = 0; row < n; ++row) {
            mx += base[row * d + 0];
            my += base[row * d + 1];
            mz += base[row * d + 2];
        }
        mx /= n;
        my /= n;
        mz /= n;
        const auto [ix, iy] = batch.indices[pi];
        const double cx = grid.x_min + (ix + 0.5) * grid.pillar_size;
        const double cy = grid.y_min + (iy + 0.5) * grid.pillar_size;
        for (int row = 0; row < n; ++row) {
            float *f = base + row * d;
            f[4] = static_cast<float>(f[0] - mx);
            f[5] = static_cast<float>(f[1] - my);
            f[6] = static_cast<float>(f[2] - mz);
            f[7] = static_cast<float>(f[0] - cx);
            f[8] = static_cast<float>(f[1] - cy);
        }
    }
    return batch;
}

/// Per-point linear + batch norm + ReLU, then an element-wise max over each
/// pillar's valid points. Padded rows never reach the max.
inline std::pair<Tensor, std::vector<std::pair<int, int>>> pfn_forward(const PillarBatch &batch,
                                                                       const WeightStore &store,
                                                                       const GridSpec &grid) {
    const Tensor &lin = store.get("pfn.linear");  // [C, D]
    if (lin.dims.size() != 2 || lin.dim(0) != grid.out_channels || lin.dim(1) != grid.in_features) {
        throw Error("shape", "pfn.linear shape " + shape_str(lin.dims) + " does not match grid (C=" +
                                 std::to_string(grid.out_channels) + ", D=" +
                                 std::to_string(grid.in_features) + ")");
    }
    const std::vector<float> gamma = store.get_vec("pfn.bn.gamma");
    const std::vector<float> beta = store.get_vec("pfn.bn.beta");
    const std::vector<float> mean = store.get_vec("pfn.bn.mean");
    const std::vector<float> var = store.get_vec("pfn.bn.var");
    const double eps = store.get_scalar("pfn.bn.eps");
    const int c = grid.out_channels, d = grid.in_features, npp = grid.max_points_per_pillar;
    if (gamma.size() != static_cast<size_t>(c) || beta.size() != gamma.size() ||
        mean.size() != gamma.size() || var.size() != gamma.size()) {
        throw Error("shape", "pfn.bn parameter length mismatch");
    }

    std::vector<float> bn_scale(c), bn_shift(c);
    for (int ch = 0; ch < c; ++ch) {
        const double denom = std::sqrt(static_cast<double>(var[ch]) + eps);
        bn_scale[ch] = static_cast<float>(gamma[ch] / denom);
        bn_shift[ch] = static_cast<float>(beta[ch] - mean[ch] * gamma[ch] / denom);
    }

    Tensor out({c, batch.n_occupied});
    for (int pi = 0; pi < batch.n_occupied; ++pi) {
        const int n = batch.n_points[pi];
        const float *base = &batch.features.data[static_cast<size_t>(pi) * npp * d];
        for (int ch = 0; ch < c; ++ch) {
            const float *wrow = &lin.data[static_cast<size_t>(ch) * d];
            float best = 0.0f;  // ReLU floor: empty max cannot go below zero
            for (int row = 0; row < n; ++row) {
                const float *f = base + row * d;
                float acc = 0.0f;
                for (int j = 0; j < d; ++j) acc += wrow[j] * f[j];
                acc = acc * bn_scale[ch] + bn_shift[ch];
                if (acc < 0.0f) acc = 0.0f;
                if (row == 0 || acc > best) best = acc;
            }
            out.data[static_cast<size_t>(ch) * batch.n_occupied + pi] = best;
        }
    }
    return {std::move(out), batch.indices};
}

/// Place per-pillar feature columns at their grid cells; everything else
/// stays zero.
inline PseudoImage scatter(const Tensor &features, const std::vector<std::pair<int, int>> &indices,
                           const GridSpec &grid) {
    const int w = grid.width(), h = grid.height(), c = grid.out_channels;
    if (features.dims.size() != 2 || features.dim(0) != c ||
        features.dim(1) != static_cast<int>(indices.size())) {
        throw Error("shape", "scatter features shape " + shape_str(features.dims) +
                                 " does not match " + std::to_string(indices.size()) + " pillars");
    }
    PseudoImage canvas({c, h, w});
    std::unordered_set<int64_t> seen;
    const int n = static_cast<int>(indices.size());
    for (int pi = 0; pi < n; ++pi) {
        const auto [ix, iy] = indices[pi];
        if (ix < 0 || ix >= w || iy < 0 || iy >= h) {
            throw Error("shape", "pillar index out of range");
        }
        if (!seen.insert(static_cast<int64_t>(iy) * w + ix).second) {
            throw Error("internal", "duplicate pillar index (" + std::to_string(ix) + "," +
                                        std::to_string(iy) + ")");
        }
        for (int ch = 0; ch < c; ++ch) {
            canvas.at3(ch, iy, ix) = features.data[static_cast<size_t>(ch) * n + pi];
        }
    }
    return canvas;
}

/// Full CPU-side encoder: pillarize, decorate, PFN, scatter.
inline PseudoImage encode_frame(const PointCloud &cloud, const GridSpec &grid,
                                const WeightStore &store) {
    PillarBatch batch = augment_features(pillarize(cloud, grid), grid);
    auto [features, indices] = pfn_forward(batch, store, grid);
    return scatter(features, indices, grid);
}

}  // namespace pillaredge
