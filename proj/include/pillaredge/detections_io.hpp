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
#include <vector>

#include <json.hpp>

#include "pillaredge/postprocess.hpp"

namespace pillaredge {

/// Detections file: JSON Lines, one object per line,
/// {"frame_id":n,"class":"Car","score":s,"box":[cx,cy,cz,dx,dy,dz,theta]}.
/// Field order is fixed and numbers use shortest round-trip form, so equal
/// detection sets serialize to identical bytes.
inline void write_detections_jsonl(const std::vector<Detection> &dets,
                                   const std::filesystem::path &path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("io", "cannot write detections file " + path.string());
    for (const Detection &d : dets) {
        out << "{\"frame_id\":" << d.frame_id << ",\"class\":\"" << d.class_name
            << "\",\"score\":" << fmt_double(d.score) << ",\"box\":[" << fmt_double(d.box.cx) << ','
            << fmt_double(d.box.cy) << ',' << fmt_double(d.box.cz) << ',' << fmt_double(d.box.dx)
            << ',' << fmt_double(d.box.dy) << ',' << fmt_double(d.box.dz) << ','
            << fmt_double(d.box.theta) << "]}\n";
    }
    if (!out) throw Error("io", "short write to " + path.string());
}

inline std::vector<Detection> read_detections_jsonl(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw Error("io", "cannot open detections file " + path.string());
    std::vector<Detection> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception &e) {
            throw Error("parse", path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        try {
            Detection d;
            d.frame_id = j.at("frame_id").get<uint64_t>();
            d.class_name = j.at("class").get<std::string>();
            d.score = j.at("score").get<double>();
            const auto &box = j.at("box");
            if (!box.is_array() || box.size() != 7) {
                throw Error("parse", path.string() + ":" + std::to_string(lineno) + ": box must have 7 entries");
            }
            d.box.cx = box[0].get<double>();
            d.box.cy = box[1].get<double>();
            d.box.cz = box[2].get<double>();
            d.box.dx = box[3].get<double>();
            d.box.dy = box[4].get<double>();
            d.box.dz = box[5].get<double>();
            d.box.theta = box[6].get<double>();
            out.push_back(std::move(d));
        } catch (const nlohmann::json::exception &e) {
            throw Error("parse", path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace pillaredge
