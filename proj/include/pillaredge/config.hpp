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

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "pillaredge/compiled.hpp"
#include "pillaredge/postprocess.hpp"

namespace pillaredge {

/// Model config plus runtime thresholds, as read from a JSON config file.
struct FullConfig {
    ModelConfig model;
    Thresholds thresholds;
};

namespace detail {

template <typename T>
void maybe_get(const nlohmann::json &j, const char *key, T &out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

/// Config JSON keys: "grid", "blocks" (list of [stride, n_layers, channels]),
/// "up_strides", "up_channels", "anchors", "thresholds". Absent keys keep
/// their defaults.
inline FullConfig config_from_json(const nlohmann::json &j) {
    FullConfig cfg;
    if (j.contains("grid")) {
        const auto &g = j.at("grid");
        detail::maybe_get(g, "x_min", cfg.model.grid.x_min);
        detail::maybe_get(g, "x_max", cfg.model.grid.x_max);
        detail::maybe_get(g, "y_min", cfg.model.grid.y_min);
        detail::maybe_get(g, "y_max", cfg.model.grid.y_max);
        detail::maybe_get(g, "z_min", cfg.model.grid.z_min);
        detail::maybe_get(g, "z_max", cfg.model.grid.z_max);
        detail::maybe_get(g, "pillar_size", cfg.model.grid.pillar_size);
        detail::maybe_get(g, "max_pillars", cfg.model.grid.max_pillars);
        detail::maybe_get(g, "max_points_per_pillar", cfg.model.grid.max_points_per_pillar);
        detail::maybe_get(g, "out_channels", cfg.model.grid.out_channels);
    }
    if (j.contains("blocks")) {
        cfg.model.blocks.clear();
        for (const auto &b : j.at("blocks")) {
            if (!b.is_array() || b.size() != 3) {
                throw Error("config", "each block must be [stride, n_layers, channels]");
            }
            cfg.model.blocks.push_back({b[0].get<int>(), b[1].get<int>(), b[2].get<int>()});
        }
    }
    if (j.contains("up_strides")) {
        cfg.model.up_strides = j.at("up_strides").get<std::vector<int>>();
    }
    detail::maybe_get(j, "up_channels", cfg.model.up_channels);
    detail::maybe_get(j, "n_anchors_per_cell", cfg.model.n_anchors_per_cell);
    if (j.contains("anchors")) {
        const auto &a = j.at("anchors");
        detail::maybe_get(a, "length", cfg.model.anchor.length);
        detail::maybe_get(a, "width", cfg.model.anchor.width);
        detail::maybe_get(a, "height", cfg.model.anchor.height);
        detail::maybe_get(a, "z_center", cfg.model.anchor.z_center);
        if (a.contains("yaws")) {
            cfg.model.anchor.yaws = a.at("yaws").get<std::vector<double>>();
            cfg.model.n_anchors_per_cell = static_cast<int>(cfg.model.anchor.yaws.size());
        }
    }
    if (j.contains("thresholds")) {
        const auto &t = j.at("thresholds");
        detail::maybe_get(t, "confidence", cfg.thresholds.confidence);
        detail::maybe_get(t, "nms_iou", cfg.thresholds.nms_iou);
        detail::maybe_get(t, "pre_nms_top_k", cfg.thresholds.pre_nms_top_k);
    }
    cfg.model.validate();
    cfg.thresholds.validate();
    return cfg;
}

inline FullConfig load_config(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw Error("io", "cannot open config file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception &e) {
        throw Error("config", "invalid JSON in " + path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

inline nlohmann::json config_to_json(const FullConfig &cfg) {
    nlohmann::json j;
    j["grid"] = {{"x_min", cfg.model.grid.x_min},
                 {"x_max", cfg.model.grid.x_max},
                 {"y_min", cfg.model.grid.y_min},
                 {"y_max", cfg.model.grid.y_max},
                 {"z_min", cfg.model.grid.z_min},
                 {"z_max", cfg.model.grid.z_max},
                 {"pillar_size", cfg.model.grid.pillar_size},
                 {"max_pillars", cfg.model.grid.max_pillars},
                 {"max_points_per_pillar", cfg.model.grid.max_points_per_pillar},
                 {"out_channels", cfg.model.grid.out_channels}};
    nlohmann::json blocks = nlohmann::json::array();
    for (const ConvBlockSpec &b : cfg.model.blocks) {
        blocks.push_back({b.stride, b.n_layers, b.channels});
    }
    j["blocks"] = blocks;
    j["up_strides"] = cfg.model.up_strides;
    j["up_channels"] = cfg.model.up_channels;
    j["n_anchors_per_cell"] = cfg.model.n_anchors_per_cell;
    j["anchors"] = {{"length", cfg.model.anchor.length},
                    {"width", cfg.model.anchor.width},
                    {"height", cfg.model.anchor.height},
                    {"z_center", cfg.model.anchor.z_center},
                    {"yaws", cfg.model.anchor.yaws}};
    j["thresholds"] = {{"confidence", cfg.thresholds.confidence},
                       {"nms_iou", cfg.thresholds.nms_iou},
                       {"pre_nms_top_k", cfg.thresholds.pre_nms_top_k}};
    j["fingerprint"] = hex_digest(config_fingerprint(cfg.model));
    return j;
}

/// Calibration stats file: JSON with the producing config's fingerprint so
/// compile can reject stats from a different config.
inline void save_calib_stats(const CalibStats &stats, const std::filesystem::path &path) {
    nlohmann::json j;
    j["fingerprint"] = hex_digest(stats.fingerprint);
    j["n_frames"] = stats.n_frames;
    j["mode"] = stats.mode == CalibMode::MaxAbs ? "maxabs" : "p999";
    nlohmann::json sites;
    for (const auto &[name, v] : stats.max_abs) sites[name] = v;
    j["max_abs"] = sites;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("io", "cannot write calibration file " + path.string());
    out << j.dump(2) << "\n";
    if (!out) throw Error("io", "short write to " + path.string());
}

inline CalibStats load_calib_stats(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw Error("io", "cannot open calibration file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception &e) {
        throw Error("format", "invalid calibration JSON in " + path.string() + ": " + e.what());
    }
    CalibStats stats;
    try {
        const std::string hex = j.at("fingerprint").get<std::string>();
        if (hex.size() != 64) throw Error("format", "bad fingerprint length in " + path.string());
        for (int i = 0; i < 32; ++i) {
            stats.fingerprint[i] =
                static_cast<uint8_t>(std::stoi(hex.substr(2 * static_cast<size_t>(i), 2), nullptr, 16));
        }
        stats.n_frames = j.at("n_frames").get<int>();
        const std::string mode = j.value("mode", "maxabs");
        stats.mode = mode == "p999" ? CalibMode::P999 : CalibMode::MaxAbs;
        for (const auto &[name, v] : j.at("max_abs").items()) {
            stats.max_abs[name] = v.get<double>();
        }
    } catch (const nlohmann::json::exception &e) {
        throw Error("format", "calibration file " + path.string() + ": " + e.what());
    }
    return stats;
}

}  // namespace pillaredge
