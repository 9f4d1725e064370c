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
#include <array>
#include <cmath>
#include <vector>

#include "pillaredge/common.hpp"

namespace pillaredge {

/// 7-DoF oriented box: center, size along box-local axes, yaw about +z.
/// dx is the box-local length (local x), dy the width, dz the height.
struct Box3D {
    double cx = 0.0, cy = 0.0, cz = 0.0;
    double dx = 1.0, dy = 1.0, dz = 1.0;
    double theta = 0.0;  // radians in (-pi, pi]

    bool valid() const {
        return std::isfinite(cx) && std::isfinite(cy) && std::isfinite(cz) &&
               std::isfinite(dx) && std::isfinite(dy) && std::isfinite(dz) &&
               std::isfinite(theta) && dx > 0.0 && dy > 0.0 && dz > 0.0;
    }
};

struct Vec2 {
    double x = 0.0, y = 0.0;
};

/// BEV footprint corners in counter-clockwise order.
inline std::array<Vec2, 4> bev_corners(const Box3D &b) {
    const double c = std::cos(b.theta), s = std::sin(b.theta);
    const double hx = 0.5 * b.dx, hy = 0.5 * b.dy;
    const double lx[4] = {hx, -hx, -hx, hx};
    const double ly[4] = {hy, hy, -hy, -hy};
    std::array<Vec2, 4> out{};
    for (int i = 0; i < 4; ++i) {
        out[i].x = b.cx + c * lx[i] - s * ly[i];
        out[i].y = b.cy + s * lx[i] + c * ly[i];
    }
    return out;
}

/// Signed polygon area (positive for CCW winding).
inline double polygon_area(const std::vector<Vec2> &poly) {
    double acc = 0.0;
    const size_t n = poly.size();
    for (size_t i = 0; i < n; ++i) {
        const Vec2 &p = poly[i];
        const Vec2 &q = poly[(i + 1) % n];
        acc += p.x * q.y - p.y * q.x;
    }
    return 0.5 * acc;
}

/// Sutherland-Hodgman clip of `subject` against the CCW convex `clip`.
inline std::vector<Vec2> clip_convex(std::vector<Vec2> subject, const std::array<Vec2, 4> &clip) {
    std::vector<Vec2> out;
    for (int e = 0; e < 4 && subject.size() >= 2; ++e) {
        const Vec2 a = clip[e];
        const Vec2 b = clip[(e + 1) % 4];
        const double ex = b.x - a.x, ey = b.y - a.y;
        out.clear();
        const size_t n = subject.size();
        for (size_t i = 0; i < n; ++i) {
            const Vec2 p = subject[i];
            const Vec2 q = subject[(i + 1) % n];
            const double dp = ex * (p.y - a.y) - ey * (p.x - a.x);
            const double dq = ex * (q.y - a.y) - ey * (q.x - a.x);
            const bool pin = dp >= 0.0;  // left of / on the edge = inside for CCW clip
            const bool qin = dq >= 0.0;
            if (pin) out.push_back(p);
            if (pin != qin) {
                const double t = dp / (dp - dq);
                out.push_back({p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)});
            }
        }
        subject = out;
    }
    return subject;
}

/// Intersection-over-union of the yaw-rotated BEV footprints. z is ignored.
/// A box with zero footprint area contributes IoU 0.
inline double bev_iou(const Box3D &a, const Box3D &b) {
    const double area_a = a.dx * a.dy;
    const double area_b = b.dx * b.dy;
    if (!(area_a > 0.0) || !(area_b > 0.0)) return 0.0;

    const auto ca = bev_corners(a);
    const auto cb = bev_corners(b);

    // Cheap reject on axis-aligned bounds.
    double ax0 = ca[0].x, ax1 = ca[0].x, ay0 = ca[0].y, ay1 = ca[0].y;
    double bx0 = cb[0].x, bx1 = cb[0].x, by0 = cb[0].y, by1 = cb[0].y;
    for (int i = 1; i < 4; ++i) {
        ax0 = std::min(ax0, ca[i].x); ax1 = std::max(ax1, ca[i].x);
        ay0 = std::min(ay0, ca[i].y); ay1 = std::max(ay1, ca[i].y);
        bx0 = std::min(bx0, cb[i].x); bx1 = std::max(bx1, cb[i].x);
        by0 = std::min(by0, cb[i].y); by1 = std::max(by1, cb[i].y);
    }
    if (ax1 <= bx0 || bx1 <= ax0 || ay1 <= by0 || by1 <= ay0) return 0.0;

    // Corner order from bev_corners is CCW, which clip_convex expects.
    std::vector<Vec2> subject(ca.begin(), ca.end());
    const std::vector<Vec2> inter_poly = clip_convex(std::move(subject), cb);
    if (inter_poly.size() < 3) return 0.0;

    const double inter = std::abs(polygon_area(inter_poly));
    const double uni = area_a + area_b - inter;
    if (!(uni > 0.0)) return 0.0;
    return std::clamp(inter / uni, 0.0, 1.0);
}

}  // namespace pillaredge
