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
#include <string>
#include <vector>

#include "pillaredge/geometry.hpp"
#include "pillaredge/model.hpp"

namespace pillaredge {

struct Detection {
    uint64_t frame_id = 0;
    std::string class_name = "Car";
    double score = 0.0;
    Box3D box;
};

/// One fixed prior box per output cell and yaw. Flattened index is
/// (row * Wo + col) * A + a.
struct AnchorGrid {
    std::vector<Box3D> anchors;
    int ho = 0, wo = 0, a_per_cell = 0;
};

struct Thresholds {
    double confidence = 0.3;
    double nms_iou = 0.5;
    int pre_nms_top_k = 1000;

    void validate() const {
        if (confidence < 0.0 || confidence > 1.0) throw Error("argument-range", "confidence must be in [0,1]");
        if (nms_iou < 0.0 || nms_iou > 1.0) throw Error("argument-range", "nms iou must be in [0,1]");
        if (pre_nms_top_k < 1) throw Error("argument-range", "pre-NMS top-k must be >= 1");
    }
};

/// Anchors are a pure function of the config: centers at cell centers in
/// meters, fixed size and z, one yaw per anchor slot.
inline AnchorGrid gen_anchors(const ModelConfig &config) {
    config.validate();
    AnchorGrid grid;
    grid.ho = config.out_height();
    grid.wo = config.out_width();
    grid.a_per_cell = config.n_anchors_per_cell;
    const double cell_w = (config.grid.x_max - config.grid.x_min) / grid.wo;
    const double cell_h = (config.grid.y_max - config.grid.y_min) / grid.ho;
    grid.anchors.reserve(static_cast<size_t>(grid.ho) * grid.wo * grid.a_per_cell);
    for (int i = 0; i < grid.ho; ++i) {
        for (int j = 0; j < grid.wo; ++j) {
            for (int a = 0; a < grid.a_per_cell; ++a) {
                Box3D b;
                b.cx = config.grid.x_min + (j + 0.5) * cell_w;
                b.cy = config.grid.y_min + (i + 0.5) * cell_h;
                b.cz = config.anchor.z_center;
                b.dx = config.anchor.length;
                b.dy = config.anchor.width;
                b.dz = config.anchor.height;
                b.theta = normalize_angle(config.anchor.yaws[a]);
                grid.anchors.push_back(b);
            }
        }
    }
    return grid;
}

/// Residual decoding: diagonal-normalized center offsets, log size ratios,
/// additive yaw. encode_box is the exact inverse.
inline Box3D decode_box(const Box3D &anchor, const double delta[7]) {
    for (int i = 0; i < 7; ++i) {
        if (!std::isfinite(delta[i])) throw Error("decode", "non-finite box delta");
    }
    const double diag = std::hypot(anchor.dx, anchor.dy);
    Box3D b;
    b.cx = anchor.cx + delta[0] * diag;
    b.cy = anchor.cy + delta[1] * diag;
    b.cz = anchor.cz + delta[2] * anchor.dz;
    b.dx = anchor.dx * std::exp(delta[3]);
    b.dy = anchor.dy * std::exp(delta[4]);
    b.dz = anchor.dz * std::exp(delta[5]);
    b.theta = normalize_angle(anchor.theta + delta[6]);
    return b;
}

inline void encode_box(const Box3D &anchor, const Box3D &box, double delta[7]) {
    const double diag = std::hypot(anchor.dx, anchor.dy);
    delta[0] = (box.cx - anchor.cx) / diag;
    delta[1] = (box.cy - anchor.cy) / diag;
    delta[2] = (box.cz - anchor.cz) / anchor.dz;
    delta[3] = std::log(box.dx / anchor.dx);
    delta[4] = std::log(box.dy / anchor.dy);
    delta[5] = std::log(box.dz / anchor.dz);
    delta[6] = normalize_angle(box.theta - anchor.theta);
}

namespace detail {

inline void read_deltas(const Tensor &box_map, int i, int j, int a, double out[7]) {
    const int ho = box_map.dim(1), wo = box_map.dim(2);
    for (int d = 0; d < 7; ++d) {
        out[d] = box_map.data[((static_cast<size_t>(a) * 7 + d) * ho + i) * wo + j];
    }
}

}  // namespace detail

/// Decode the whole map: one box per anchor, channel layout [A*7, Ho, Wo]
/// with delta order (dx, dy, dz, dl, dw, dh, dtheta).
inline std::vector<Box3D> decode_boxes(const AnchorGrid &grid, const Tensor &box_map) {
    if (box_map.dims.size() != 3 || box_map.dim(0) != grid.a_per_cell * 7 ||
        box_map.dim(1) != grid.ho || box_map.dim(2) != grid.wo) {
        throw Error("shape", "box map shape " + shape_str(box_map.dims) + " does not match anchors");
    }
    std::vector<Box3D> out;
    out.reserve(grid.anchors.size());
    double delta[7];
    for (int i = 0; i < grid.ho; ++i) {
        for (int j = 0; j < grid.wo; ++j) {
            for (int a = 0; a < grid.a_per_cell; ++a) {
                detail::read_deltas(box_map, i, j, a, delta);
                out.push_back(decode_box(grid.anchors[(static_cast<size_t>(i) * grid.wo + j) * grid.a_per_cell + a], delta));
            }
        }
    }
    return out;
}

/// Inverse of decode_boxes: one box per anchor back to a residual map.
inline Tensor encode_boxes(const AnchorGrid &grid, const std::vector<Box3D> &boxes) {
    if (boxes.size() != grid.anchors.size()) throw Error("shape", "encode_boxes needs one box per anchor");
    Tensor map({grid.a_per_cell * 7, grid.ho, grid.wo});
    double delta[7];
    for (int i = 0; i < grid.ho; ++i) {
        for (int j = 0; j < grid.wo; ++j) {
            for (int a = 0; a < grid.a_per_cell; ++a) {
                const size_t idx = (static_cast<size_t>(i) * grid.wo + j) * grid.a_per_cell + a;
                encode_box(grid.anchors[idx], boxes[idx], delta);
                for (int d = 0; d < 7; ++d) {
                    map.data[((static_cast<size_t>(a) * 7 + d) * grid.ho + i) * grid.wo + j] =
                        static_cast<float>(delta[d]);
                }
            }
        }
    }
    return map;
}

struct ScoredAnchor {
    size_t anchor_idx;
    double score;
};

/// Sigmoid the logits and keep entries at or above the confidence threshold,
/// in anchor-index order.
inline std::vector<ScoredAnchor> score_filter(const Tensor &cls_map, double conf_thr,
                                              const AnchorGrid &grid) {
    if (conf_thr < 0.0 || conf_thr > 1.0) throw Error("argument-range", "confidence must be in [0,1]");
    if (cls_map.dims.size() != 3 || cls_map.dim(0) != grid.a_per_cell ||
        cls_map.dim(1) != grid.ho || cls_map.dim(2) != grid.wo) {
        throw Error("shape", "cls map shape " + shape_str(cls_map.dims) + " does not match anchors");
    }
    std::vector<ScoredAnchor> kept;
    for (int i = 0; i < grid.ho; ++i) {
        for (int j = 0; j < grid.wo; ++j) {
            for (int a = 0; a < grid.a_per_cell; ++a) {
                const double logit =
                    cls_map.data[(static_cast<size_t>(a) * grid.ho + i) * grid.wo + j];
                const double score = sigmoid(logit);
                if (score >= conf_thr) {
                    kept.push_back({(static_cast<size_t>(i) * grid.wo + j) * grid.a_per_cell + a, score});
                }
            }
        }
    }
    return kept;
}

/// Greedy NMS: sort by score (ties to earlier input position), keep the head,
/// drop anything overlapping a kept box at or above the threshold.
inline std::vector<Detection> nms(const std::vector<Detection> &dets, double iou_thr) {
    if (iou_thr < 0.0 || iou_thr > 1.0) throw Error("argument-range", "nms iou must be in [0,1]");
    std::vector<size_t> order(dets.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return dets[a].score > dets[b].score; });
    std::vector<Detection> kept;
    for (size_t idx : order) {
        bool suppressed = false;
        for (const Detection &k : kept) {
            if (bev_iou(dets[idx].box, k.box) >= iou_thr) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(dets[idx]);
    }
    return kept;
}

/// HeadOutput -> final detections: sigmoid filter, pre-NMS top-k cap, decode,
/// greedy NMS. Tie-breaking is by lower anchor index throughout.
inline std::vector<Detection> run_postprocess(const HeadOutput &head, const AnchorGrid &grid,
                                              const Thresholds &thr, uint64_t frame_id) {
    thr.validate();
    std::vector<ScoredAnchor> kept = score_filter(head.cls_map, thr.confidence, grid);
    if (static_cast<int>(kept.size()) > thr.pre_nms_top_k) {
        std::stable_sort(kept.begin(), kept.end(),
                         [](const ScoredAnchor &a, const ScoredAnchor &b) { return a.score > b.score; });
        kept.resize(thr.pre_nms_top_k);
        std::sort(kept.begin(), kept.end(),
                  [](const ScoredAnchor &a, const ScoredAnchor &b) { return a.anchor_idx < b.anchor_idx; });
    }
    std::vector<Detection> candidates;
    candidates.reserve(kept.size());
    double delta[7];
    for (const ScoredAnchor &sa : kept) {
        const size_t cell = sa.anchor_idx / grid.a_per_cell;
        const int a = static_cast<int>(sa.anchor_idx % grid.a_per_cell);
        const int i = static_cast<int>(cell / grid.wo);
        const int j = static_cast<int>(cell % grid.wo);
        detail::read_deltas(head.box_map, i, j, a, delta);
        Detection det;
        det.frame_id = frame_id;
        det.score = sa.score;
        det.box = decode_box(grid.anchors[sa.anchor_idx], delta);
        candidates.push_back(std::move(det));
    }
    return nms(candidates, thr.nms_iou);
}

}  // namespace pillaredge
