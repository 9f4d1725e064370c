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

#include <memory>
#include <utility>
#include <vector>

#include "pillaredge/compiled.hpp"
#include "pillaredge/pipeline.hpp"
#include "pillaredge/pillars.hpp"
#include "pillaredge/postprocess.hpp"

namespace pillaredge {

/// Everything the three detection stages need. The CPU-side encoder always
/// requires float PFN weights; the accelerator stage runs either the float
/// reference subgraph or the compiled int8 graph.
struct DetectorBundle {
    ModelConfig config;
    std::shared_ptr<const WeightStore> store;      // float path + PFN weights
    std::shared_ptr<const CompiledModel> compiled; // quantized path, optional
    AnchorGrid anchors;
    Thresholds thresholds;

    bool quantized() const { return compiled != nullptr; }

    void validate() const {
        config.validate();
        thresholds.validate();
        if (!store) throw Error("config", "detector bundle needs encoder weights");
        if (compiled && compiled->fingerprint != config_fingerprint(config)) {
            throw Error("fingerprint", "compiled model fingerprint does not match active config");
        }
    }
};

inline DetectorBundle make_bundle(ModelConfig config, WeightStore store, Thresholds thr,
                                  std::optional<CompiledModel> compiled = std::nullopt) {
    DetectorBundle b;
    b.config = std::move(config);
    b.store = std::make_shared<WeightStore>(std::move(store));
    if (compiled) b.compiled = std::make_shared<CompiledModel>(std::move(*compiled));
    b.anchors = gen_anchors(b.config);
    b.thresholds = thr;
    b.validate();
    return b;
}

struct EncodedFrame {
    uint64_t frame_id = 0;
    PseudoImage image;
};

struct HeadFrame {
    uint64_t frame_id = 0;
    HeadOutput head;
};

inline auto make_pre_stage(const DetectorBundle &bundle) {
    return [&bundle](const PointCloud &cloud) {
        EncodedFrame out;
        out.frame_id = cloud.frame_id;
        out.image = encode_frame(cloud, bundle.config.grid, *bundle.store);
        return out;
    };
}

inline auto make_accel_stage(const DetectorBundle &bundle) {
    return [&bundle](const EncodedFrame &enc) {
        HeadFrame out;
        out.frame_id = enc.frame_id;
        out.head = bundle.quantized()
                       ? accel_execute(*bundle.compiled, enc.image)
                       : backbone_head_forward(enc.image, *bundle.store, bundle.config);
        return out;
    };
}

inline auto make_post_stage(const DetectorBundle &bundle) {
    return [&bundle](const HeadFrame &hf) {
        return run_postprocess(hf.head, bundle.anchors, bundle.thresholds, hf.frame_id);
    };
}

/// Run the whole detector over a batch of frames, sequentially or pipelined.
/// The flattened detections are in input frame order either way.
inline std::pair<std::vector<Detection>, PipelineStats> run_detection(
    const std::vector<PointCloud> &clouds, const DetectorBundle &bundle, bool pipelined,
    const StagePlan &plan = {}) {
    bundle.validate();
    auto pre = make_pre_stage(bundle);
    auto accel = make_accel_stage(bundle);
    auto post = make_post_stage(bundle);
    auto [per_frame, stats] = pipelined ? run_pipelined(clouds, pre, accel, post, plan)
                                        : run_sequential(clouds, pre, accel, post, plan);
    std::vector<Detection> flat;
    for (std::vector<Detection> &dets : per_frame) {
        for (Detection &d : dets) flat.push_back(std::move(d));
    }
    return {std::move(flat), stats};
}

}  // namespace pillaredge
