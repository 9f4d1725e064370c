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

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "pillaredge/config.hpp"
#include "pillaredge/detections_io.hpp"
#include "pillaredge/evaluation.hpp"
#include "pillaredge/reports.hpp"
#include "pillaredge/runner.hpp"
#include "pillaredge/synth.hpp"

namespace fs = std::filesystem;
using namespace pillaredge;

namespace {

struct GlobalOpts {
    std::string config_path;

    FullConfig resolve() const {
        if (!config_path.empty()) return load_config(config_path);
        return FullConfig{};
    }
};

std::string frame_name(size_t index, const char *ext) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%06zu%s", index, ext);
    return buf;
}

std::array<double, 3> parse_stage_delays(const std::string &text) {
    std::array<double, 3> out{0, 0, 0};
    if (text.empty()) return out;
    std::stringstream ss(text);
    std::string tok;
    int i = 0;
    while (std::getline(ss, tok, ',')) {
        if (i >= 3) throw Error("argument-range", "--stage-delays wants three comma-separated values");
        out[i++] = std::stod(tok);
    }
    if (i != 3) throw Error("argument-range", "--stage-delays wants three comma-separated values");
    for (double d : out) {
        if (d < 0.0) throw Error("argument-range", "stage delays must be >= 0");
    }
    return out;
}

std::vector<PointCloud> load_data_dir(const std::string &dir) {
    std::vector<PointCloud> clouds;
    for (const fs::path &p : list_frames(dir)) clouds.push_back(read_frame(p));
    return clouds;
}

RunManifest begin_manifest(const std::string &subcommand, const FullConfig &cfg) {
    RunManifest m;
    m.subcommand = subcommand;
    m.resolved_config = config_to_json(cfg);
    m.started_at = iso8601_utc_now();
    return m;
}

void finish_manifest(RunManifest &m, const fs::path &path) {
    m.finished_at = iso8601_utc_now();
    write_manifest(m, path);
}

fs::path pfn_sidecar_path(const fs::path &compiled_path) {
    fs::path p = compiled_path;
    p += ".pfn.ppw";
    return p;
}

/// Extract the CPU-side encoder tensors that ride next to a compiled model.
WeightStore pfn_subset(const WeightStore &store) {
    WeightStore out;
    for (const auto &[name, t] : store.tensors) {
        if (name.rfind("pfn.", 0) == 0) out.put(name, t);
    }
    return out;
}

int cmd_synth(const GlobalOpts &g, int scenes, const std::string &out_dir, uint64_t seed,
              const SynthParams &base) {
    const FullConfig cfg = g.resolve();
    fs::create_directories(out_dir);
    RunManifest manifest = begin_manifest("synth", cfg);
    manifest.seed = seed;
    manifest.outputs["dir"] = out_dir;
    manifest.outputs["scenes"] = scenes;
    for (int i = 0; i < scenes; ++i) {
        SynthParams params = base;
        params.seed = splitmix64(seed + static_cast<uint64_t>(i));
        auto [cloud, labels] = gen_synthetic_scene(params);
        cloud.frame_id = static_cast<uint64_t>(i);
        write_frame(cloud, fs::path(out_dir) / frame_name(static_cast<size_t>(i), ".bin"));
        write_labels(labels, fs::path(out_dir) / frame_name(static_cast<size_t>(i), ".txt"));
    }
    finish_manifest(manifest, fs::path(out_dir) / "manifest.json");
    return 0;
}

int cmd_init_weights(const GlobalOpts &g, const std::string &out, uint64_t seed) {
    const FullConfig cfg = g.resolve();
    const WeightStore store = init_random_weights(cfg.model, seed);
    save_weights(store, out);
    RunManifest manifest = begin_manifest("init-weights", cfg);
    manifest.seed = seed;
    manifest.outputs["weights"] = out;
    finish_manifest(manifest, out + ".manifest.json");
    return 0;
}

int cmd_calibrate(const GlobalOpts &g, const std::string &weights, const std::string &data,
                  const std::string &out, int max_frames, const std::string &mode_name) {
    const FullConfig cfg = g.resolve();
    if (max_frames < 1) throw Error("argument-range", "--frames must be >= 1");
    const CalibMode mode = mode_name == "p999" ? CalibMode::P999 : CalibMode::MaxAbs;
    const WeightStore store = load_weights(weights);
    const WeightStore folded = fold_weights(store, cfg.model);

    std::vector<PseudoImage> frames;
    for (const fs::path &p : list_frames(data)) {
        if (static_cast<int>(frames.size()) >= max_frames) break;
        frames.push_back(encode_frame(read_frame(p), cfg.model.grid, folded));
    }
    if (frames.empty()) throw Error("calibration", "no frames found under " + data);
    const CalibStats stats = calibrate(folded, cfg.model, frames, mode);
    save_calib_stats(stats, out);

    RunManifest manifest = begin_manifest("calibrate", cfg);
    manifest.inputs["weights"] = weights;
    manifest.inputs["data"] = data;
    manifest.outputs["calibration"] = out;
    manifest.outputs["n_frames"] = stats.n_frames;
    finish_manifest(manifest, out + ".manifest.json");
    return 0;
}

int cmd_compile(const GlobalOpts &g, const std::string &weights, const std::string &calib,
                const std::string &out) {
    const FullConfig cfg = g.resolve();
    const WeightStore store = load_weights(weights);
    const WeightStore folded = fold_weights(store, cfg.model);
    const CalibStats stats = load_calib_stats(calib);
    const CompiledModel model = compile_model(folded, cfg.model, stats);
    save_compiled(model, out);
    // CPU-side encoder weights travel as a sidecar so inference needs only
    // the compiled artifact path.
    save_weights(pfn_subset(store), pfn_sidecar_path(out));

    RunManifest manifest = begin_manifest("compile", cfg);
    manifest.inputs["weights"] = weights;
    manifest.inputs["calibration"] = calib;
    manifest.outputs["compiled"] = out;
    manifest.outputs["pfn_sidecar"] = pfn_sidecar_path(out).string();
    finish_manifest(manifest, out + ".manifest.json");
    return 0;
}

DetectorBundle load_bundle(const FullConfig &cfg, const std::string &weights,
                           const std::string &compiled) {
    if (weights.empty() == compiled.empty()) {
        throw Error("argument-range", "exactly one of --weights or --compiled is required");
    }
    if (!weights.empty()) {
        return make_bundle(cfg.model, load_weights(weights), cfg.thresholds);
    }
    const CompiledModel model = load_compiled(compiled);
    const fs::path sidecar = pfn_sidecar_path(compiled);
    if (!fs::exists(sidecar)) {
        throw Error("io", "missing encoder sidecar " + sidecar.string() +
                              " (produced by the compile step)");
    }
    return make_bundle(cfg.model, load_weights(sidecar), cfg.thresholds, model);
}

int cmd_infer(const GlobalOpts &g, const std::string &weights, const std::string &compiled,
              const std::string &data, const std::string &out, bool pipeline, int queue_depth,
              int in_flight, const std::string &stage_delays, double conf, double nms_iou) {
    FullConfig cfg = g.resolve();
    if (conf >= 0.0) cfg.thresholds.confidence = conf;
    if (nms_iou >= 0.0) cfg.thresholds.nms_iou = nms_iou;
    cfg.thresholds.validate();

    const DetectorBundle bundle = load_bundle(cfg, weights, compiled);
    const std::vector<PointCloud> clouds = load_data_dir(data);

    StagePlan plan;
    plan.queue_depth = queue_depth;
    plan.in_flight_max = in_flight;
    plan.stage_delay_ms = parse_stage_delays(stage_delays);
    auto [dets, stats] = run_detection(clouds, bundle, pipeline, plan);

    write_detections_jsonl(dets, out);
    nlohmann::json stats_doc = stats_json(stats);
    stats_doc["mode"] = pipeline ? "pipelined" : "sequential";
    stats_doc["model"] = bundle.quantized() ? "compiled-int8" : "float32";
    std::ofstream stats_out(out + ".stats.json", std::ios::trunc);
    stats_out << stats_doc.dump(2) << "\n";

    RunManifest manifest = begin_manifest("infer", cfg);
    manifest.inputs["data"] = data;
    if (!weights.empty()) manifest.inputs["weights"] = weights;
    if (!compiled.empty()) manifest.inputs["compiled"] = compiled;
    manifest.outputs["detections"] = out;
    manifest.outputs["stats"] = out + ".stats.json";
    finish_manifest(manifest, out + ".manifest.json");
    return 0;
}

int cmd_eval(const std::string &dets_path, const std::string &labels_dir, double iou, double conf,
             const std::string &json_out) {
    const EvalConfig cfg{iou, conf};
    cfg.validate();

    std::map<uint64_t, FrameSample> frames;
    if (!fs::is_directory(labels_dir)) throw Error("io", "not a directory: " + labels_dir);
    for (const auto &e : fs::directory_iterator(labels_dir)) {
        if (!e.is_regular_file() || e.path().extension() != ".txt") continue;
        const uint64_t id = detail::frame_id_from_stem(e.path());
        frames[id].gts = read_labels(e.path());
    }
    if (frames.empty()) throw Error("io", "no label files under " + labels_dir);

    for (Detection &d : read_detections_jsonl(dets_path)) {
        auto it = frames.find(d.frame_id);
        if (it == frames.end()) {
            throw Error("unknown-frame", "detection frame " + std::to_string(d.frame_id) +
                                             " has no label file in " + labels_dir);
        }
        it->second.dets.push_back(std::move(d));
    }

    std::vector<FrameSample> ordered;
    ordered.reserve(frames.size());
    for (auto &[id, sample] : frames) ordered.push_back(std::move(sample));
    const EvalReport report = evaluate(ordered, cfg);

    std::cout << eval_report_text(report);
    const std::string json_path = json_out.empty() ? dets_path + ".eval.json" : json_out;
    std::ofstream out(json_path, std::ios::trunc);
    if (!out) throw Error("io", "cannot write " + json_path);
    nlohmann::json j = eval_report_json(report);
    j["iou_thr"] = iou;
    j["conf_thr"] = conf;
    out << j.dump(2) << "\n";
    return 0;
}

int cmd_bench(const GlobalOpts &g, const std::string &compiled, const std::string &data, int n_frames,
              const std::string &stage_delays, double target_hz, int queue_depth, int in_flight,
              const std::string &json_out) {
    const FullConfig cfg = g.resolve();
    if (n_frames < 1) throw Error("argument-range", "--frames must be >= 1");
    const DetectorBundle bundle = load_bundle(cfg, "", compiled);

    std::vector<PointCloud> base = load_data_dir(data);
    if (base.empty()) throw Error("io", "no frames under " + data);
    std::vector<PointCloud> clouds;
    clouds.reserve(static_cast<size_t>(n_frames));
    for (int i = 0; i < n_frames; ++i) {
        clouds.push_back(base[static_cast<size_t>(i) % base.size()]);
        clouds.back().frame_id = static_cast<uint64_t>(i);
    }

    StagePlan plan;
    plan.queue_depth = queue_depth;
    plan.in_flight_max = in_flight;
    plan.stage_delay_ms = parse_stage_delays(stage_delays);

    BenchReport report;
    report.target_hz = target_hz;
    auto [seq_dets, seq_stats] = run_detection(clouds, bundle, /*pipelined=*/false, plan);
    report.sequential = seq_stats;
    auto [pipe_dets, pipe_stats] = run_detection(clouds, bundle, /*pipelined=*/true, plan);
    report.pipelined = pipe_stats;

    // The pipelined stream must be the sequential stream, frame for frame.
    if (pipe_dets.size() != seq_dets.size()) {
        throw Error("internal", "pipelined and sequential detection counts differ");
    }
    for (size_t i = 0; i < seq_dets.size(); ++i) {
        if (pipe_dets[i].score != seq_dets[i].score || pipe_dets[i].box.cx != seq_dets[i].box.cx) {
            throw Error("internal", "pipelined and sequential detections differ at index " +
                                        std::to_string(i));
        }
    }

    std::cout << bench_report_text(report);
    if (!json_out.empty()) {
        std::ofstream out(json_out, std::ios::trunc);
        if (!out) throw Error("io", "cannot write " + json_out);
        out << bench_report_json(report).dump(2) << "\n";
    }
    // The PASS/FAIL verdict is report content; exit status stays 0 unless
    // something actually failed to run.
    return 0;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"pillaredge: pillar-based LiDAR car detection with a simulated int8 accelerator"};
    app.set_version_flag("--version", std::string("pillaredge ") + kVersion);
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOpts g;
    app.add_option("--config", g.config_path, "JSON config file (grid, blocks, anchors, thresholds)")
        ->envname("PILLAR_EDGE_CONFIG");

    // synth
    auto *synth = app.add_subcommand("synth", "Generate synthetic labeled frames");
    int synth_scenes = 10;
    uint64_t synth_seed = 0;
    std::string synth_out = "data";
    SynthParams synth_params;
    synth->add_option("--scenes", synth_scenes, "Number of frames to generate")->check(CLI::NonNegativeNumber);
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_option("--seed", synth_seed, "Dataset seed");
    synth->add_option("--cars", synth_params.n_cars, "Cars per frame")->check(CLI::NonNegativeNumber);
    synth->add_option("--x-min", synth_params.x_min, "Car placement x min (m)");
    synth->add_option("--x-max", synth_params.x_max, "Car placement x max (m)");
    synth->add_option("--y-min", synth_params.y_min, "Car placement y min (m)");
    synth->add_option("--y-max", synth_params.y_max, "Car placement y max (m)");
    synth->add_option("--ground-density", synth_params.ground_density, "Ground points per m^2");
    synth->add_option("--surface-density", synth_params.surface_density, "Car shell points per m^2");
    synth->add_option("--noise", synth_params.noise_sigma, "Gaussian noise sigma (m)");

    // init-weights
    auto *init = app.add_subcommand("init-weights", "Write a random-initialized weight file");
    std::string init_out = "model.ppw";
    uint64_t init_seed = 0;
    init->add_option("--out", init_out, "Output .ppw path")->required();
    init->add_option("--seed", init_seed, "Init seed");

    // calibrate
    auto *calib = app.add_subcommand("calibrate", "Record activation ranges over a calibration set");
    std::string calib_weights, calib_data, calib_out = "calib.json", calib_mode = "maxabs";
    int calib_frames = 64;
    calib->add_option("--weights", calib_weights, "Float weight file (.ppw)")->required();
    calib->add_option("--data", calib_data, "Frame directory")->required();
    calib->add_option("--out", calib_out, "Output calibration JSON");
    calib->add_option("--frames", calib_frames, "Calibration set size")->check(CLI::PositiveNumber);
    calib->add_option("--mode", calib_mode, "Range statistic: maxabs or p999")
        ->check(CLI::IsMember({"maxabs", "p999"}));

    // compile
    auto *compile = app.add_subcommand("compile", "Quantize and serialize the offloaded subgraph");
    std::string compile_weights, compile_calib, compile_out = "model.ppq";
    compile->add_option("--weights", compile_weights, "Float weight file (.ppw)")->required();
    compile->add_option("--calib", compile_calib, "Calibration JSON from `calibrate`")->required();
    compile->add_option("--out", compile_out, "Output compiled artifact (.ppq)");

    // infer
    auto *infer = app.add_subcommand("infer", "Run detection over a frame directory");
    std::string infer_weights, infer_compiled, infer_data, infer_out = "dets.jsonl";
    std::string infer_delays;
    bool infer_pipeline = false;
    int infer_queue = 2, infer_inflight = 4;
    double infer_conf = -1.0, infer_nms = -1.0;
    infer->add_option("--weights", infer_weights, "Float weight file (.ppw)");
    infer->add_option("--compiled", infer_compiled, "Compiled artifact (.ppq)");
    infer->add_option("--data", infer_data, "Frame directory")->required();
    infer->add_option("--out", infer_out, "Detections JSONL path");
    infer->add_flag("--pipeline", infer_pipeline, "Run the three stages concurrently");
    infer->add_option("--queue-depth", infer_queue, "Bounded queue depth")->check(CLI::PositiveNumber);
    infer->add_option("--in-flight", infer_inflight, "Max frames admitted and not yet emitted")
        ->check(CLI::PositiveNumber);
    infer->add_option("--stage-delays", infer_delays, "Injected per-stage delays ms: pre,accel,post (testing)");
    infer->add_option("--conf", infer_conf, "Confidence threshold (default 0.3)")
        ->check(CLI::Range(0.0, 1.0));
    infer->add_option("--nms-iou", infer_nms, "NMS IoU threshold (default 0.5)")
        ->check(CLI::Range(0.0, 1.0));

    // eval
    auto *eval = app.add_subcommand("eval", "Score detections against labels");
    std::string eval_dets, eval_labels, eval_json;
    double eval_iou = 0.3, eval_conf = 0.3;
    eval->add_option("--dets", eval_dets, "Detections JSONL")->required();
    eval->add_option("--labels", eval_labels, "Label directory")->required();
    eval->add_option("--iou", eval_iou, "Matching IoU threshold (default 0.3)")->check(CLI::Range(0.0, 1.0));
    eval->add_option("--conf", eval_conf, "Operating-point confidence threshold (default 0.3)")
        ->check(CLI::Range(0.0, 1.0));
    eval->add_option("--json", eval_json, "JSON summary path (default <dets>.eval.json)");

    // bench
    auto *bench = app.add_subcommand("bench", "Throughput of sequential vs pipelined execution");
    std::string bench_compiled, bench_data, bench_delays, bench_json;
    int bench_frames = 200, bench_queue = 2, bench_inflight = 4;
    double bench_target = 5.0;
    bench->add_option("--compiled", bench_compiled, "Compiled artifact (.ppq)")->required();
    bench->add_option("--data", bench_data, "Frame directory (cycled to --frames)")->required();
    bench->add_option("--frames", bench_frames, "Frames to process")->check(CLI::PositiveNumber);
    bench->add_option("--stage-delays", bench_delays, "Injected per-stage delays ms: pre,accel,post");
    bench->add_option("--target-hz", bench_target, "Throughput target (default 5.0)");
    bench->add_option("--queue-depth", bench_queue, "Bounded queue depth")->check(CLI::PositiveNumber);
    bench->add_option("--in-flight", bench_inflight, "Max frames in flight")->check(CLI::PositiveNumber);
    bench->add_option("--out", bench_json, "Write the JSON report here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp" ||
            e.get_name() == "CallForVersion") {
            return app.exit(e);
        }
        std::cerr << "error: argument: " << e.what() << "\n";
        return 2;
    }

    try {
        if (synth->parsed()) return cmd_synth(g, synth_scenes, synth_out, synth_seed, synth_params);
        if (init->parsed()) return cmd_init_weights(g, init_out, init_seed);
        if (calib->parsed()) return cmd_calibrate(g, calib_weights, calib_data, calib_out, calib_frames, calib_mode);
        if (compile->parsed()) return cmd_compile(g, compile_weights, compile_calib, compile_out);
        if (infer->parsed()) {
            return cmd_infer(g, infer_weights, infer_compiled, infer_data, infer_out, infer_pipeline,
                             infer_queue, infer_inflight, infer_delays, infer_conf, infer_nms);
        }
        if (eval->parsed()) return cmd_eval(eval_dets, eval_labels, eval_iou, eval_conf, eval_json);
        if (bench->parsed()) {
            return cmd_bench(g, bench_compiled, bench_data, bench_frames, bench_delays, bench_target,
                             bench_queue, bench_inflight, bench_json);
        }
    } catch (const Error &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception &e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
