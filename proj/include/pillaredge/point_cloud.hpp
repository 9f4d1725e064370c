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

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pillaredge/common.hpp"
#include "pillaredge/geometry.hpp"

namespace pillaredge {

/// One LiDAR return. Coordinates are kept in double precision in memory;
/// the on-disk frame format is packed little-endian float32.
struct Point {
    double x = 0.0, y = 0.0, z = 0.0;
    double r = 0.0;  // reflectance in [0, 1]
};

struct PointCloud {
    std::vector<Point> points;
    uint64_t frame_id = 0;
};

struct GtObject {
    std::string class_name = "Car";
    Box3D box;
};

namespace detail {

inline uint64_t frame_id_from_stem(const std::filesystem::path &path) {
    const std::string stem = path.stem().string();
    uint64_t id = 0;
    auto res = std::from_chars(stem.data(), stem.data() + stem.size(), id);
    if (res.ec != std::errc{} || res.ptr != stem.data() + stem.size()) {
        throw Error("frame-name", "expected numeric frame stem, got '" + stem + "'");
    }
    return id;
}

inline double parse_number(const std::string &tok, const std::string &where) {
    double v = 0.0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size()) {
        throw Error("parse", "non-numeric field '" + tok + "' in " + where);
    }
    return v;
}

}  // namespace detail

/// Frame format: packed little-endian float32 quadruples (x, y, z, r),
/// 16 bytes per point, no header. The frame id comes from the file stem.
inline PointCloud read_frame(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("io", "cannot open frame file " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() % 16 != 0) {
        throw Error("truncated", "frame " + path.string() + " has " +
                                     std::to_string(bytes.size()) + " bytes (not a multiple of 16)");
    }
    PointCloud cloud;
    cloud.frame_id = detail::frame_id_from_stem(path);
    const size_t n = bytes.size() / 16;
    cloud.points.resize(n);
    for (size_t i = 0; i < n; ++i) {
        float f[4];
        std::memcpy(f, bytes.data() + i * 16, 16);
        for (float v : f) {
            if (!std::isfinite(v)) {
                throw Error("parse", "non-finite value in frame " + path.string() +
                                         " at point " + std::to_string(i));
            }
        }
        cloud.points[i] = {f[0], f[1], f[2], f[3]};
    }
    return cloud;
}

inline void write_frame(const PointCloud &cloud, const std::filesystem::path &path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("io", "cannot write frame file " + path.string());
    for (const Point &p : cloud.points) {
        const float f[4] = {static_cast<float>(p.x), static_cast<float>(p.y),
                            static_cast<float>(p.z), static_cast<float>(p.r)};
        out.write(reinterpret_cast<const char *>(f), 16);
    }
    if (!out) throw Error("io", "short write to " + path.string());
}

/// Label format: UTF-8 text, one object per line as
/// `class cx cy cz dx dy dz theta`, `#` starting a comment line.
inline std::vector<GtObject> read_labels(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw Error("io", "cannot open label file " + path.string());
    std::vector<GtObject> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        size_t first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ss(line);
        std::vector<std::string> tok;
        std::string t;
        while (ss >> t) tok.push_back(t);
        const std::string where = path.string() + ":" + std::to_string(lineno);
        if (tok.size() != 8) {
            throw Error("parse", "expected 8 fields, got " + std::to_string(tok.size()) + " in " + where);
        }
        GtObject obj;
        obj.class_name = tok[0];
        obj.box.cx = detail::parse_number(tok[1], where);
        obj.box.cy = detail::parse_number(tok[2], where);
        obj.box.cz = detail::parse_number(tok[3], where);
        obj.box.dx = detail::parse_number(tok[4], where);
        obj.box.dy = detail::parse_number(tok[5], where);
        obj.box.dz = detail::parse_number(tok[6], where);
        obj.box.theta = normalize_angle(detail::parse_number(tok[7], where));
        if (!(obj.box.dx > 0.0 && obj.box.dy > 0.0 && obj.box.dz > 0.0)) {
            throw Error("parse", "non-positive box size in " + where);
        }
        if (!obj.box.valid()) throw Error("parse", "non-finite box in " + where);
        out.push_back(std::move(obj));
    }
    return out;
}

inline void write_labels(const std::vector<GtObject> &labels, const std::filesystem::path &path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("io", "cannot write label file " + path.string());
    for (const GtObject &g : labels) {
        const Box3D &b = g.box;
        out << g.class_name << ' ' << fmt_double(b.cx) << ' ' << fmt_double(b.cy) << ' '
            << fmt_double(b.cz) << ' ' << fmt_double(b.dx) << ' ' << fmt_double(b.dy) << ' '
            << fmt_double(b.dz) << ' ' << fmt_double(normalize_angle(b.theta)) << '\n';
    }
    if (!out) throw Error("io", "short write to " + path.string());
}

/// Sorted *.bin paths under a directory.
inline std::vector<std::filesystem::path> list_frames(const std::filesystem::path &dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw Error("io", "not a directory: " + dir.string());
    }
    std::vector<std::filesystem::path> out;
    for (const auto &e : std::filesystem::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".bin") out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace pillaredge
