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

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "pillaredge/evaluation.hpp"
#include "pillaredge/pipeline.hpp"

namespace pillaredge {

/// Text and JSON views of a report share numbers by routing every value
/// through the same 6-decimal formatting.
inline double round6(double v) { return std::stod(fmt_fixed(v, 6)); }

inline std::string eval_report_text(const EvalReport &r) {
    std::string s;
    s += "tp=" + std::to_string(r.tp) + "\n";
    s += "fp=" + std::to_string(r.fp) + "\n";
    s += "fn=" + std::to_string(r.fn) + "\n";
    s += "precision=" + fmt_fixed(r.precision, 6) + "\n";
    s += "recall=" + fmt_fixed(r.recall, 6) + "\n";
    s += "f1=" + fmt_fixed(r.f1, 6) + "\n";
    s += "ap=" + fmt_fixed(r.ap, 6) + "\n";
    return s;
}

inline nlohmann::json eval_report_json(const EvalReport &r) {
    return {{"tp", r.tp},          {"fp", r.fp},
            {"fn", r.fn},          {"precision", round6(r.precision)},
            {"recall", round6(r.recall)}, {"f1", round6(r.f1)},
            {"ap", round6(r.ap)}};
}

inline nlohmann::json latency_json(const LatencySummary &l) {
    return {{"mean_s", round6(l.mean)}, {"p50_s", round6(l.p50)}, {"p95_s", round6(l.p95)}};
}

inline nlohmann::json stats_json(const PipelineStats &s) {
    return {{"frames", s.frames},
            {"wall_seconds", round6(s.wall_seconds)},
            {"throughput_hz", round6(s.throughput_hz)},
            {"latency",
             {{"pre", latency_json(s.pre)},
              {"accel", latency_json(s.accel)},
              {"post", latency_json(s.post)},
              {"end_to_end", latency_json(s.end_to_end)}}}};
}

inline std::string stats_text(const PipelineStats &s, const std::string &label) {
    if (s.frames == 0) return label + ": no data (0 frames)\n";
    std::string out = label + ":\n";
    out += "  frames=" + std::to_string(s.frames) + "\n";
    out += "  wall_seconds=" + fmt_fixed(s.wall_seconds, 6) + "\n";
    out += "  throughput_hz=" + fmt_fixed(s.throughput_hz, 6) + "\n";
    auto lat = [](const char *name, const LatencySummary &l) {
        return std::string("  ") + name + "_latency_s mean=" + fmt_fixed(l.mean, 6) +
               " p50=" + fmt_fixed(l.p50, 6) + " p95=" + fmt_fixed(l.p95, 6) + "\n";
    };
    out += lat("pre", s.pre);
    out += lat("accel", s.accel);
    out += lat("post", s.post);
    out += lat("end_to_end", s.end_to_end);
    return out;
}

/// Benchmark verdict: pipelined throughput measured against a target rate.
struct BenchReport {
    PipelineStats sequential;
    PipelineStats pipelined;
    double target_hz = 5.0;

    double speedup() const {
        return sequential.throughput_hz > 0.0 ? pipelined.throughput_hz / sequential.throughput_hz
                                              : 0.0;
    }
    bool pass() const { return pipelined.throughput_hz >= target_hz; }
};

inline std::string bench_report_text(const BenchReport &r) {
    std::string out = stats_text(r.sequential, "sequential") + stats_text(r.pipelined, "pipelined");
    if (r.sequential.frames > 0 && r.pipelined.frames > 0) {
        out += "speedup=" + fmt_fixed(r.speedup(), 6) + "\n";
    }
    out += "target_hz=" + fmt_fixed(r.target_hz, 6) + "\n";
    out += std::string("result=") + (r.pass() ? "PASS" : "FAIL") + "\n";
    return out;
}

inline nlohmann::json bench_report_json(const BenchReport &r) {
    return {{"sequential", stats_json(r.sequential)},
            {"pipelined", stats_json(r.pipelined)},
            {"speedup", round6(r.speedup())},
            {"target_hz", round6(r.target_hz)},
            {"result", r.pass() ? "PASS" : "FAIL"}};
}

inline std::string iso8601_utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Run manifest written next to every output artifact. Reproducible runs
/// produce identical manifests except for the timestamp fields.
struct RunManifest {
    std::string subcommand;
    nlohmann::json resolved_config;
    nlohmann::json inputs;   // name -> path
    nlohmann::json outputs;  // name -> path
    uint64_t seed = 0;
    std::string started_at, finished_at;
};

inline void write_manifest(const RunManifest &m, const std::filesystem::path &path) {
    nlohmann::json j;
    j["subcommand"] = m.subcommand;
    j["config"] = m.resolved_config;
    j["inputs"] = m.inputs.is_null() ? nlohmann::json::object() : m.inputs;
    j["outputs"] = m.outputs.is_null() ? nlohmann::json::object() : m.outputs;
    j["seed"] = m.seed;
    j["version"] = kVersion;
    j["started_at"] = m.started_at;
    j["finished_at"] = m.finished_at;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("io", "cannot write manifest " + path.string());
    out << j.dump(2) << "\n";
    if (!out) throw Error("io", "short write to " + path.string());
}

}  // namespace pillaredge
