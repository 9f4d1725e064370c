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

// End-to-end acceptance suite. Each criterion prints one PASS/FAIL line and
// enforces its runtime budget.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cstdio>

#include "helpers.hpp"
#include "pillaredge/compiled.hpp"
#include "pillaredge/config.hpp"
#include "pillaredge/evaluation.hpp"
#include "pillaredge/runner.hpp"

using namespace pillaredge;
using namespace pillaredge::testing;
namespace fs = std::filesystem;

namespace {

class Criterion {
public:
    Criterion(const char *id, const char *name, double budget_seconds)
        : id_(id), name_(name), budget_(budget_seconds), start_(std::chrono::steady_clock::now()) {}

    void require(const char *what, bool ok) {
        if (!ok) failures_.push_back(what);
    }

    bool finish() {
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        bool ok = failures_.empty();
        if (elapsed >= budget_) {
            ok = false;
            failures_.push_back("runtime budget exceeded");
        }
        std::printf("[acceptance] %s %s: %s (%.2fs / budget %.0fs)\n", id_, name_,
                    ok ? "PASS" : "FAIL", elapsed, budget_);
        for (const std::string &f : failures_) std::printf("[acceptance]   failed: %s\n", f.c_str());
        std::fflush(stdout);
        return ok;
    }

private:
    const char *id_;
    const char *name_;
    double budget_;
    std::chrono::steady_clock::time_point start_;
    std::vector<std::string> failures_;
};

bool point_in_box_bev(const Box3D &b, double px, double py) {
    const double c = std::cos(b.theta), s = std::sin(b.theta);
    const double dx = px - b.cx, dy = py - b.cy;
    const double lx = c * dx + s * dy;
    const double ly = -s * dx + c * dy;
    return std::abs(lx) <= 0.5 * b.dx && std::abs(ly) <= 0.5 * b.dy;
}

double mc_iou(const Box3D &a, const Box3D &b, long n, uint64_t seed) {
    double x0 = 1e30, x1 = -1e30, y0 = 1e30, y1 = -1e30;
    for (const Box3D *box : {&a, &b}) {
        for (const Vec2 &c : bev_corners(*box)) {
            x0 = std::min(x0, c.x);
            x1 = std::max(x1, c.x);
            y0 = std::min(y0, c.y);
            y1 = std::max(y1, c.y);
        }
    }
    Rng rng(seed);
    long inter = 0, uni = 0;
    for (long i = 0; i < n; ++i) {
        const double px = rng.uniform(x0, x1);
        const double py = rng.uniform(y0, y1);
        const bool in_a = point_in_box_bev(a, px, py);
        const bool in_b = point_in_box_bev(b, px, py);
        if (in_a && in_b) ++inter;
        if (in_a || in_b) ++uni;
    }
    return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

Tensor conv_oracle(const Tensor &x, const Tensor &w, const std::vector<float> &b, const ConvSpec &spec) {
    const int h = x.dim(1), wd = x.dim(2);
    const int oh = spec.out_extent(h), ow = spec.out_extent(wd);
    Tensor out({spec.out_ch, oh, ow});
    for (int oc = 0; oc < spec.out_ch; ++oc) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                double acc = b[oc];
                for (int ic = 0; ic < spec.in_ch; ++ic) {
                    for (int ky = 0; ky < spec.k; ++ky) {
                        for (int kx = 0; kx < spec.k; ++kx) {
                            const int iy = oy * spec.s - spec.p + ky;
                            const int ix = ox * spec.s - spec.p + kx;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                            acc += static_cast<double>(
                                       w.data[((static_cast<size_t>(oc) * spec.in_ch + ic) * spec.k + ky) *
                                                  spec.k +
                                              kx]) *
                                   x.at3(ic, iy, ix);
                        }
                    }
                }
                out.at3(oc, oy, ox) = static_cast<float>(acc);
            }
        }
    }
    return out;
}

std::vector<GtObject> dets_as_gt(const std::vector<Detection> &dets) {
    std::vector<GtObject> out;
    out.reserve(dets.size());
    for (const Detection &d : dets) out.push_back({d.class_name, d.box});
    return out;
}

}  // namespace

TEST_CASE("C1: operating-point F1 consistency") {
    Criterion crit("C1", "operating-point-f1-consistency", 1.0);
    struct Row {
        long tp, fp, fn;
        double precision, recall, f1_rounded;
    };
    // Integer count triples realizing the three published (P, R) pairs.
    const Row rows[] = {
        {8352, 348, 1248, 0.96, 0.87, 0.91},
        {8439, 261, 1261, 0.97, 0.87, 0.92},
        {9312, 388, 288, 0.96, 0.97, 0.96},
    };
    for (const Row &row : rows) {
        double p, r, f1;
        prf1(row.tp, row.fp, row.fn, p, r, f1);
        crit.require("precision reproduces the operating point", std::abs(p - row.precision) < 1e-12);
        crit.require("recall reproduces the operating point", std::abs(r - row.recall) < 1e-12);
        crit.require("f1 within 0.005 of the published value before rounding",
                     std::abs(f1 - row.f1_rounded) < 0.005);
        crit.require("f1 rounds to the published column",
                     std::abs(std::round(f1 * 100.0) / 100.0 - row.f1_rounded) < 1e-12);
    }
    CHECK(crit.finish());
}

TEST_CASE("C2: quantization degradation stays small") {
    Criterion crit("C2", "quantization-degradation", 600.0);

    const ModelConfig config = small_model_config();
    Thresholds thr;  // confidence 0.3
    // Random-weight scores bunch mid-range, so a cap below the anchor count
    // would cut through the score bulk and measure sort churn instead of
    // quantization error. Lift it above the anchor count; both paths then
    // rank the identical candidate set. Suppress at 0.7 so the NMS antichain
    // boundary does not sit exactly on the 0.5 matching threshold: a winner
    // swap inside a suppression cluster stays matchable.
    thr.pre_nms_top_k = 4096;
    thr.nms_iou = 0.7;
    const WeightStore store = init_random_weights(config, 2026);
    const WeightStore folded = fold_weights(store, config);

    // Calibration set: 64 frames drawn from the same scene distribution.
    std::vector<PseudoImage> calib_frames;
    {
        const std::vector<PointCloud> clouds = make_scene_clouds(config, 64, 50000);
        for (const PointCloud &c : clouds) calib_frames.push_back(encode_frame(c, config.grid, folded));
    }
    const CalibStats stats = calibrate(folded, config, calib_frames);
    const CompiledModel compiled = compile_model(folded, config, stats);
    const AnchorGrid anchors = gen_anchors(config);

    const std::vector<PointCloud> eval_clouds = make_scene_clouds(config, 50, 90000);
    long tp = 0, fp = 0, fn = 0;
    double err_sum = 0.0, ref_sum = 0.0, ref_sq = 0.0;
    size_t n_vals = 0;
    for (const PointCloud &cloud : eval_clouds) {
        const PseudoImage pseudo = encode_frame(cloud, config.grid, folded);
        const HeadOutput ref = backbone_head_forward(pseudo, folded, config);
        const HeadOutput quant = accel_execute(compiled, pseudo);

        auto accumulate = [&](const Tensor &r, const Tensor &q) {
            for (size_t i = 0; i < r.numel(); ++i) {
                err_sum += std::abs(static_cast<double>(r.data[i]) - q.data[i]);
                ref_sum += r.data[i];
                ref_sq += static_cast<double>(r.data[i]) * r.data[i];
                ++n_vals;
            }
        };
        accumulate(ref.cls_map, quant.cls_map);
        accumulate(ref.box_map, quant.box_map);

        const std::vector<Detection> float_dets = run_postprocess(ref, anchors, thr, cloud.frame_id);
        const std::vector<Detection> quant_dets = run_postprocess(quant, anchors, thr, cloud.frame_id);
        const MatchResult m = match_detections(quant_dets, dets_as_gt(float_dets), 0.5);
        tp += m.tp;
        fp += m.fp;
        fn += m.fn;
    }

    double precision, recall, f1;
    prf1(tp, fp, fn, precision, recall, f1);
    const double mean_err = err_sum / static_cast<double>(n_vals);
    const double mean_ref = ref_sum / static_cast<double>(n_vals);
    const double std_ref = std::sqrt(std::max(ref_sq / static_cast<double>(n_vals) - mean_ref * mean_ref, 0.0));
    std::printf("[acceptance]   C2 detail: pairwise_f1=%.4f (tp=%ld fp=%ld fn=%ld) mean_err=%.5f std_ref=%.5f ratio=%.3f\n",
                f1, tp, fp, fn, mean_err, std_ref, mean_err / std_ref);
    crit.require("pairwise F1 between float and quantized detections >= 0.95 at IoU 0.5", f1 >= 0.95);
    crit.require("mean |quant - float| <= 0.1 x std(float head outputs)", mean_err <= 0.1 * std_ref);
    crit.require("both paths produced detections", tp + fp > 0 && tp + fn > 0);
    CHECK(crit.finish());
}

TEST_CASE("C3: pipelining reaches the bottleneck-bound throughput") {
    Criterion crit("C3", "pipelined-throughput", 30.0);

    const ModelConfig config = tiny_model_config();
    Thresholds thr;
    thr.confidence = 0.5;
    thr.pre_nms_top_k = 150;  // keeps the CPU post stage far below the injected delays
    const DetectorBundle bundle = make_bundle(config, init_random_weights(config, 7), thr);
    // 210 identical-cost frames; delays dominate the per-stage work.
    const std::vector<PointCloud> clouds = make_scene_clouds(config, 210, 1234, 1);

    StagePlan plan;
    plan.queue_depth = 2;
    plan.in_flight_max = 4;
    plan.stage_delay_ms = {10.0, 30.0, 10.0};

    auto [seq_dets, seq_stats] = run_detection(clouds, bundle, /*pipelined=*/false, plan);
    auto [pipe_dets, pipe_stats] = run_detection(clouds, bundle, /*pipelined=*/true, plan);

    std::printf("[acceptance]   C3 detail: sequential=%.2f Hz pipelined=%.2f Hz speedup=%.2fx dets=%zu\n",
                seq_stats.throughput_hz, pipe_stats.throughput_hz,
                pipe_stats.throughput_hz / seq_stats.throughput_hz, pipe_dets.size());

    crit.require("pipelined throughput >= 0.9 x (1 / 0.030 s)",
                 pipe_stats.throughput_hz >= 0.9 * (1.0 / 0.030));
    crit.require("pipelined throughput >= 1.4 x sequential",
                 pipe_stats.throughput_hz >= 1.4 * seq_stats.throughput_hz);

    bool identical = pipe_dets.size() == seq_dets.size();
    if (identical) {
        for (size_t i = 0; i < seq_dets.size(); ++i) {
            const Detection &a = seq_dets[i], &b = pipe_dets[i];
            if (a.frame_id != b.frame_id || a.score != b.score || a.box.cx != b.box.cx ||
                a.box.cy != b.box.cy || a.box.cz != b.box.cz || a.box.dx != b.box.dx ||
                a.box.dy != b.box.dy || a.box.dz != b.box.dz || a.box.theta != b.box.theta) {
                identical = false;
                break;
            }
        }
    }
    crit.require("detections bit-identical between modes", identical);
    crit.require("pipeline produced detections", !pipe_dets.empty());
    CHECK(crit.finish());
}

TEST_CASE("C4: geometry and kernel oracles") {
    Criterion crit("C4", "geometry-oracles", 300.0);

    // bev_iou against a 1e6-sample Monte-Carlo oracle on 100 random pairs.
    Rng rng(404);
    double worst_iou_err = 0.0;
    for (int i = 0; i < 100; ++i) {
        auto rand_box = [&rng]() {
            Box3D b;
            b.cx = rng.uniform(-3.0, 3.0);
            b.cy = rng.uniform(-3.0, 3.0);
            b.dx = rng.uniform(0.5, 5.0);
            b.dy = rng.uniform(0.5, 5.0);
            b.dz = rng.uniform(0.5, 3.0);
            b.theta = normalize_angle(rng.uniform(-kPi, kPi));
            return b;
        };
        const Box3D a = rand_box(), b = rand_box();
        const double exact = bev_iou(a, b);
        const double sampled = mc_iou(a, b, 1000000, 5000 + static_cast<uint64_t>(i));
        worst_iou_err = std::max(worst_iou_err, std::abs(exact - sampled));
    }
    std::printf("[acceptance]   C4 detail: worst |bev_iou - MC| = %.5f over 100 pairs\n", worst_iou_err);
    crit.require("bev_iou within 0.01 of the Monte-Carlo oracle", worst_iou_err < 0.01);

    // conv2d_f32 against the naive loop oracle on 50 random shapes.
    double worst_conv_err = 0.0;
    int shapes_checked = 0;
    while (shapes_checked < 50) {
        ConvSpec spec;
        spec.in_ch = rng.uniform_int(1, 8);
        spec.out_ch = rng.uniform_int(1, 8);
        spec.k = rng.uniform_int(1, 5);
        spec.s = rng.uniform_int(1, 3);
        spec.p = rng.uniform_int(0, 2);
        const int h = rng.uniform_int(spec.k, 16), w = rng.uniform_int(spec.k, 16);
        if (spec.out_extent(h) < 1 || spec.out_extent(w) < 1) continue;
        Tensor x({spec.in_ch, h, w});
        for (float &v : x.data) v = static_cast<float>(rng.uniform(-1, 1));
        Tensor wt({spec.out_ch, spec.in_ch, spec.k, spec.k});
        for (float &v : wt.data) v = static_cast<float>(rng.uniform(-1, 1));
        std::vector<float> b(spec.out_ch);
        for (float &v : b) v = static_cast<float>(rng.uniform(-0.5, 0.5));
        const Tensor got = conv2d_f32(x, wt, b, spec);
        const Tensor want = conv_oracle(x, wt, b, spec);
        for (size_t i = 0; i < got.numel(); ++i) {
            worst_conv_err = std::max(worst_conv_err,
                                      std::abs(static_cast<double>(got.data[i]) - want.data[i]));
        }
        ++shapes_checked;
    }
    std::printf("[acceptance]   C4 detail: worst conv error = %.2e over 50 shapes\n", worst_conv_err);
    crit.require("conv2d_f32 within 1e-5 of the naive oracle", worst_conv_err < 1e-5);

    // decode/encode round trip.
    double worst_rt = 0.0;
    for (int i = 0; i < 500; ++i) {
        Box3D anchor;
        anchor.cx = rng.uniform(-30, 30);
        anchor.cy = rng.uniform(-30, 30);
        anchor.cz = rng.uniform(-2, 0);
        anchor.dx = rng.uniform(1, 5);
        anchor.dy = rng.uniform(1, 3);
        anchor.dz = rng.uniform(1, 2);
        anchor.theta = (i % 2 == 0) ? 0.0 : kPi / 2.0;
        double delta[7], back[7];
        for (int k = 0; k < 3; ++k) delta[k] = rng.uniform(-1, 1);
        for (int k = 3; k < 6; ++k) delta[k] = rng.uniform(-0.5, 0.5);
        delta[6] = rng.uniform(-3.0, 3.0);
        encode_box(anchor, decode_box(anchor, delta), back);
        for (int k = 0; k < 7; ++k) worst_rt = std::max(worst_rt, std::abs(back[k] - delta[k]));
    }
    std::printf("[acceptance]   C4 detail: worst decode/encode round-trip error = %.2e\n", worst_rt);
    crit.require("decode/encode round trip <= 1e-5", worst_rt <= 1e-5);
    CHECK(crit.finish());
}

TEST_CASE("C5: eval harness reproduces the target operating point") {
    Criterion crit("C5", "eval-harness-operating-point", 60.0);

    // 250 frames x 4 GT = 1000 ground-truth boxes.
    Rng rng(505);
    std::vector<std::vector<GtObject>> gt_frames(250);
    size_t n_gt = 0;
    for (auto &frame : gt_frames) {
        for (int i = 0; i < 4; ++i) {
            GtObject g;
            g.box = {6.0 + 13.0 * i, rng.uniform(-18.0, 18.0), 0.75, 4.0, 1.8, 1.5,
                     normalize_angle(rng.uniform(-kPi, kPi))};
            frame.push_back(g);
        }
        n_gt += frame.size();
    }
    // drop 0.13 targets recall 0.87; the FP rate is tuned so that
    // FP ~= TP * (1 - 0.96) / 0.96, which lands precision at 0.96.
    const double drop = 0.13;
    const double fp_rate = (1.0 - drop) * 4.0 * (1.0 - 0.96) / 0.96;
    const auto det_frames = perturb_gt_to_dets(gt_frames, drop, fp_rate, 0.05, 42);

    long tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < gt_frames.size(); ++i) {
        std::vector<Detection> kept;
        for (const Detection &d : det_frames[i]) {
            if (d.score >= 0.3) kept.push_back(d);
        }
        const MatchResult m = match_detections(kept, gt_frames[i], 0.3);
        tp += m.tp;
        fp += m.fp;
        fn += m.fn;
    }
    double precision, recall, f1;
    prf1(tp, fp, fn, precision, recall, f1);
    std::printf("[acceptance]   C5 detail: n_gt=%zu tp=%ld fp=%ld fn=%ld P=%.4f R=%.4f F1=%.4f\n",
                n_gt, tp, fp, fn, precision, recall, f1);
    crit.require("at least 1000 ground-truth boxes", n_gt >= 1000);
    crit.require("measured recall = 0.87 +/- 0.03", std::abs(recall - 0.87) <= 0.03);
    crit.require("measured precision = 0.96 +/- 0.02", std::abs(precision - 0.96) <= 0.02);
    crit.require("resulting F1 ~= 0.91", std::abs(f1 - 0.91) <= 0.02);
    CHECK(crit.finish());
}

TEST_CASE("C6: determinism and artifact formats") {
    Criterion crit("C6", "determinism-and-formats", 120.0);
    const fs::path dir = fresh_temp_dir("acceptance");
    const ModelConfig config = tiny_model_config();

    // synth byte-reproducibility.
    {
        const SynthParams base = scene_params_for(config, 0, 1);
        for (int run = 0; run < 2; ++run) {
            const fs::path d = dir / ("synth" + std::to_string(run));
            fs::create_directories(d);
            for (int i = 0; i < 3; ++i) {
                SynthParams p = base;
                p.seed = splitmix64(99 + static_cast<uint64_t>(i));
                auto [cloud, labels] = gen_synthetic_scene(p);
                char name[16];
                std::snprintf(name, sizeof(name), "%06d", i);
                write_frame(cloud, d / (std::string(name) + ".bin"));
                write_labels(labels, d / (std::string(name) + ".txt"));
            }
        }
        bool same = true;
        for (int i = 0; i < 3; ++i) {
            char name[16];
            std::snprintf(name, sizeof(name), "%06d", i);
            same = same && slurp_file(dir / "synth0" / (std::string(name) + ".bin")) ==
                               slurp_file(dir / "synth1" / (std::string(name) + ".bin"));
            same = same && slurp_file(dir / "synth0" / (std::string(name) + ".txt")) ==
                               slurp_file(dir / "synth1" / (std::string(name) + ".txt"));
        }
        crit.require("synth output is byte-reproducible under a fixed seed", same);
    }

    // init-weights reproducibility + .ppw bit-exact round trip.
    {
        const WeightStore s1 = init_random_weights(config, 5);
        const WeightStore s2 = init_random_weights(config, 5);
        save_weights(s1, dir / "a.ppw");
        save_weights(s2, dir / "b.ppw");
        crit.require("weight init is byte-reproducible",
                     slurp_file(dir / "a.ppw") == slurp_file(dir / "b.ppw"));
        save_weights(load_weights(dir / "a.ppw"), dir / "c.ppw");
        crit.require(".ppw round-trips bit-exactly",
                     slurp_file(dir / "a.ppw") == slurp_file(dir / "c.ppw"));
    }

    // calibrate + compile reproducibility and .ppq round trip.
    {
        const WeightStore folded = fold_weights(init_random_weights(config, 5), config);
        const std::vector<PointCloud> clouds = make_scene_clouds(config, 4, 777, 1);
        std::vector<PseudoImage> frames;
        for (const PointCloud &c : clouds) frames.push_back(encode_frame(c, config.grid, folded));
        const CalibStats st1 = calibrate(folded, config, frames);
        const CalibStats st2 = calibrate(folded, config, frames);
        save_calib_stats(st1, dir / "c1.json");
        save_calib_stats(st2, dir / "c2.json");
        crit.require("calibration is byte-reproducible",
                     slurp_file(dir / "c1.json") == slurp_file(dir / "c2.json"));

        save_compiled(compile_model(folded, config, st1), dir / "m1.ppq");
        save_compiled(compile_model(folded, config, st2), dir / "m2.ppq");
        crit.require("compile is byte-reproducible",
                     slurp_file(dir / "m1.ppq") == slurp_file(dir / "m2.ppq"));
        save_compiled(load_compiled(dir / "m1.ppq"), dir / "m3.ppq");
        crit.require(".ppq round-trips bit-exactly",
                     slurp_file(dir / "m1.ppq") == slurp_file(dir / "m3.ppq"));
    }

    // Pipelined output order invariant across queue depths.
    {
        Thresholds thr;
        const DetectorBundle bundle = make_bundle(config, init_random_weights(config, 5), thr);
        const std::vector<PointCloud> clouds = make_scene_clouds(config, 8, 888, 1);
        auto [expected, stats] = run_detection(clouds, bundle, /*pipelined=*/false);
        (void)stats;
        bool invariant = true;
        for (const int depth : {1, 2, 4, 8}) {
            StagePlan plan;
            plan.queue_depth = depth;
            auto [got, pstats] = run_detection(clouds, bundle, /*pipelined=*/true, plan);
            (void)pstats;
            if (got.size() != expected.size()) {
                invariant = false;
                break;
            }
            for (size_t i = 0; i < got.size(); ++i) {
                const Detection &a = expected[i], &b = got[i];
                if (a.frame_id != b.frame_id || a.score != b.score || a.box.cx != b.box.cx ||
                    a.box.theta != b.box.theta) {
                    invariant = false;
                    break;
                }
            }
        }
        crit.require("pipelined output is order-invariant across queue depths {1,2,4,8}", invariant);
    }
    CHECK(crit.finish());
}
