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
#include <map>
#include <vector>

#include "pillaredge/postprocess.hpp"
#include "pillaredge/synth.hpp"

namespace pillaredge {

struct EvalConfig {
    double iou_thr = 0.3;
    double conf_thr = 0.3;

    void validate() const {
        if (iou_thr < 0.0 || iou_thr > 1.0) throw Error("argument-range", "iou threshold must be in [0,1]");
        if (conf_thr < 0.0 || conf_thr > 1.0) throw Error("argument-range", "confidence threshold must be in [0,1]");
    }
};

struct EvalReport {
    long tp = 0, fp = 0, fn = 0;
    double precision = 0.0, recall = 0.0, f1 = 0.0, ap = 0.0;
};

struct MatchResult {
    long tp = 0, fp = 0, fn = 0;
    std::vector<std::pair<size_t, size_t>> pairs;  // (det idx, gt idx)
};

/// Greedy single-frame matching: walk detections by descending score (ties
/// to earlier input position) and claim the unmatched GT with the highest
/// IoU at or above the threshold. Unclaimed GT are false negatives.
inline MatchResult match_detections(const std::vector<Detection> &dets,
                                    const std::vector<GtObject> &gts, double iou_thr) {
    std::vector<size_t> order(dets.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return dets[a].score > dets[b].score; });
    std::vector<bool> gt_taken(gts.size(), false);
    MatchResult res;
    for (size_t di : order) {
        double best_iou = 0.0;
        size_t best_gt = gts.size();
        for (size_t gi = 0; gi < gts.size(); ++gi) {
            if (gt_taken[gi]) continue;
            const double iou = bev_iou(dets[di].box, gts[gi].box);
            if (iou > best_iou) {
                best_iou = iou;
                best_gt = gi;
            }
        }
        if (best_gt < gts.size() && best_iou >= iou_thr) {
            gt_taken[best_gt] = true;
            res.tp++;
            res.pairs.emplace_back(di, best_gt);
        } else {
            res.fp++;
        }
    }
    res.fn = static_cast<long>(gts.size()) - res.tp;
    return res;
}

/// Precision/recall/F1 with the 0/0 -> 0 convention.
inline void prf1(long tp, long fp, long fn, double &precision, double &recall, double &f1) {
    precision = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    recall = (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    f1 = (precision + recall) > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

/// One frame's detections and ground truth, paired for evaluation.
struct FrameSample {
    std::vector<Detection> dets;
    std::vector<GtObject> gts;
};

/// All-point interpolated average precision over the score-swept PR curve.
/// Detections must NOT be confidence-filtered; the sweep covers every score.
inline double average_precision(const std::vector<FrameSample> &frames, double iou_thr) {
    size_t n_gt = 0;
    for (const FrameSample &f : frames) n_gt += f.gts.size();
    if (n_gt == 0) throw Error("no-ground-truth", "average precision needs at least one GT box");

    // Flatten detections with per-frame greedy matching replayed in global
    // score order, so each GT is claimed by its best-ranked detection.
    struct Entry {
        double score;
        size_t frame, det;
    };
    std::vector<Entry> entries;
    for (size_t fi = 0; fi < frames.size(); ++fi) {
        for (size_t di = 0; di < frames[fi].dets.size(); ++di) {
            entries.push_back({frames[fi].dets[di].score, fi, di});
        }
    }
    std::stable_sort(entries.begin(), entries.end(),
                     [](const Entry &a, const Entry &b) { return a.score > b.score; });

    std::vector<std::vector<bool>> taken(frames.size());
    for (size_t fi = 0; fi < frames.size(); ++fi) taken[fi].assign(frames[fi].gts.size(), false);

    std::vector<bool> is_tp(entries.size(), false);
    for (size_t e = 0; e < entries.size(); ++e) {
        const FrameSample &frame = frames[entries[e].frame];
        const Detection &det = frame.dets[entries[e].det];
        double best_iou = 0.0;
        size_t best_gt = frame.gts.size();
        for (size_t gi = 0; gi < frame.gts.size(); ++gi) {
            if (taken[entries[e].frame][gi]) continue;
            const double iou = bev_iou(det.box, frame.gts[gi].box);
            if (iou > best_iou) {
                best_iou = iou;
                best_gt = gi;
            }
        }
        if (best_gt < frame.gts.size() && best_iou >= iou_thr) {
            taken[entries[e].frame][best_gt] = true;
            is_tp[e] = true;
        }
    }

    std::vector<double> precision(entries.size()), recall(entries.size());
    long tp = 0;
    for (size_t e = 0; e < entries.size(); ++e) {
        tp += is_tp[e] ? 1 : 0;
        precision[e] = static_cast<double>(tp) / static_cast<double>(e + 1);
        recall[e] = static_cast<double>(tp) / static_cast<double>(n_gt);
    }
    // Precision envelope: max precision at any recall >= r.
    for (size_t e = entries.size(); e-- > 1;) {
        precision[e - 1] = std::max(precision[e - 1], precision[e]);
    }
    double ap = 0.0, prev_recall = 0.0;
    for (size_t e = 0; e < entries.size(); ++e) {
        if (recall[e] > prev_recall) {
            ap += (recall[e] - prev_recall) * precision[e];
            prev_recall = recall[e];
        }
    }
    return ap;
}

/// Full report at an operating point: P/R/F1 on confidence-filtered
/// detections, AP on the unfiltered set.
inline EvalReport evaluate(const std::vector<FrameSample> &frames, const EvalConfig &cfg) {
    cfg.validate();
    EvalReport rep;
    for (const FrameSample &f : frames) {
        std::vector<Detection> kept;
        for (const Detection &d : f.dets) {
            if (d.score >= cfg.conf_thr) kept.push_back(d);
        }
        const MatchResult m = match_detections(kept, f.gts, cfg.iou_thr);
        rep.tp += m.tp;
        rep.fp += m.fp;
        rep.fn += m.fn;
    }
    prf1(rep.tp, rep.fp, rep.fn, rep.precision, rep.recall, rep.f1);
    rep.ap = average_precision(frames, cfg.iou_thr);
    return rep;
}

/// Oracle detector for harness self-tests: drops GT at drop_rate, jitters
/// the survivors' centers, and plants false positives in empty space.
inline std::vector<std::vector<Detection>> perturb_gt_to_dets(
    const std::vector<std::vector<GtObject>> &gt_frames, double drop_rate, double fp_rate,
    double jitter_sigma, uint64_t seed) {
    if (drop_rate < 0.0 || drop_rate > 1.0 || fp_rate < 0.0) {
        throw Error("argument-range", "perturbation rates out of range");
    }
    Rng rng(seed);
    std::vector<std::vector<Detection>> out(gt_frames.size());
    for (size_t fi = 0; fi < gt_frames.size(); ++fi) {
        const std::vector<GtObject> &gts = gt_frames[fi];
        // Frame extent for placing far-away false positives.
        double x_lo = 0.0, x_hi = 30.0, y_lo = -15.0, y_hi = 15.0;
        if (!gts.empty()) {
            x_lo = gts[0].box.cx; x_hi = gts[0].box.cx;
            y_lo = gts[0].box.cy; y_hi = gts[0].box.cy;
            for (const GtObject &g : gts) {
                x_lo = std::min(x_lo, g.box.cx); x_hi = std::max(x_hi, g.box.cx);
                y_lo = std::min(y_lo, g.box.cy); y_hi = std::max(y_hi, g.box.cy);
            }
            x_lo -= 15.0; x_hi += 15.0; y_lo -= 15.0; y_hi += 15.0;
        }
        for (const GtObject &g : gts) {
            const bool keep = rng.uniform() >= drop_rate;
            const double jx = rng.normal(jitter_sigma);
            const double jy = rng.normal(jitter_sigma);
            const double jz = rng.normal(jitter_sigma);
            const double score = rng.uniform(0.5, 1.0);
            if (!keep) continue;
            Detection d;
            d.frame_id = fi;
            d.class_name = g.class_name;
            d.score = score;
            d.box = g.box;
            d.box.cx += jx;
            d.box.cy += jy;
            d.box.cz += jz;
            out[fi].push_back(std::move(d));
        }
        int n_fp = static_cast<int>(fp_rate);
        if (rng.uniform() < fp_rate - static_cast<double>(n_fp)) ++n_fp;
        for (int k = 0; k < n_fp; ++k) {
            for (int attempt = 0; attempt < 50; ++attempt) {
                Detection d;
                d.frame_id = fi;
                d.score = rng.uniform(0.3, 0.7);
                d.box.cx = rng.uniform(x_lo, x_hi);
                d.box.cy = rng.uniform(y_lo, y_hi);
                d.box.cz = 0.8;
                d.box.dx = rng.uniform(3.5, 4.5);
                d.box.dy = rng.uniform(1.5, 1.9);
                d.box.dz = rng.uniform(1.4, 1.7);
                d.box.theta = normalize_angle(rng.uniform(-kPi, kPi));
                bool clear = true;
                for (const GtObject &g : gts) {
                    if (bev_iou(d.box, g.box) > 0.0) {
                        clear = false;
                        break;
                    }
                }
                if (clear) {
                    out[fi].push_back(std::move(d));
                    break;
                }
            }
        }
    }
    return out;
}

}  // namespace pillaredge
