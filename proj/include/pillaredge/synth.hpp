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

#include <utility>
#include <vector>

#include "pillaredge/common.hpp"
#include "pillaredge/point_cloud.hpp"

namespace pillaredge {

/// Parameters for the synthetic labeled-scene generator: a flat ground plane
/// plus car-sized cuboid point shells at random non-overlapping poses.
struct SynthParams {
    int n_cars = 5;
    double x_min = 2.0, x_max = 38.0;    // car placement range, meters
    double y_min = -15.0, y_max = 15.0;
    double ground_density = 1.5;         // points per m^2
    double surface_density = 60.0;       // points per m^2 of car shell
    double noise_sigma = 0.0;            // meters, per coordinate
    uint64_t seed = 0;

    void validate() const {
        if (n_cars < 0) throw Error("config", "n_cars must be >= 0");
        if (!(x_max > x_min) || !(y_max > y_min)) throw Error("config", "empty synth range");
        if (ground_density < 0.0 || surface_density < 0.0) throw Error("config", "negative density");
        if (noise_sigma < 0.0) throw Error("config", "negative noise_sigma");
    }
};

namespace detail {

// Car footprints are drawn from plausible sedan dimensions. The exact ranges
// are free parameters of the generator, not measured values.
inline constexpr double kCarLenMin = 3.5, kCarLenMax = 4.5;
inline constexpr double kCarWidMin = 1.5, kCarWidMax = 1.9;
inline constexpr double kCarHgtMin = 1.4, kCarHgtMax = 1.7;
inline constexpr int kPlacementRetries = 20;

inline double bounding_radius(const Box3D &b) { return 0.5 * std::hypot(b.dx, b.dy); }

/// Uniform point on the car shell: the four side faces plus the top face
/// (the underside is not visible to a roof-mounted sensor).
inline Point sample_shell_point(Rng &rng, const Box3D &b) {
    const double hl = 0.5 * b.dx, hw = 0.5 * b.dy, hh = 0.5 * b.dz;
    const double a_side_l = b.dx * b.dz;  // front/back faces have area dy*dz
    const double a_side_w = b.dy * b.dz;
    const double a_top = b.dx * b.dy;
    const double areas[5] = {a_side_w, a_side_w, a_side_l, a_side_l, a_top};
    double total = 0.0;
    for (double a : areas) total += a;
    double pick = rng.uniform() * total;
    int face = 0;
    for (; face < 4; ++face) {
        if (pick < areas[face]) break;
        pick -= areas[face];
    }
    double lx, ly, lz;
    switch (face) {
        case 0: lx = hl;  ly = rng.uniform(-hw, hw); lz = rng.uniform(-hh, hh); break;
        case 1: lx = -hl; ly = rng.uniform(-hw, hw); lz = rng.uniform(-hh, hh); break;
        case 2: ly = hw;  lx = rng.uniform(-hl, hl); lz = rng.uniform(-hh, hh); break;
        case 3: ly = -hw; lx = rng.uniform(-hl, hl); lz = rng.uniform(-hh, hh); break;
        default: lz = hh; lx = rng.uniform(-hl, hl); ly = rng.uniform(-hw, hw); break;
    }
    const double c = std::cos(b.theta), s = std::sin(b.theta);
    Point p;
    p.x = b.cx + c * lx - s * ly;
    p.y = b.cy + s * lx + c * ly;
    p.z = b.cz + lz;
    p.r = rng.uniform();
    return p;
}

}  // namespace detail

/// Deterministic labeled scene: ground plane at z=0 plus non-overlapping car
/// shells. With noise_sigma=0 every car point lies exactly on its box surface.
inline std::pair<PointCloud, std::vector<GtObject>> gen_synthetic_scene(const SynthParams &params) {
    params.validate();
    Rng rng(params.seed);
    std::vector<GtObject> labels;

    for (int k = 0; k < params.n_cars; ++k) {
        bool placed = false;
        for (int attempt = 0; attempt < detail::kPlacementRetries && !placed; ++attempt) {
            Box3D box;
            box.dx = rng.uniform(detail::kCarLenMin, detail::kCarLenMax);
            box.dy = rng.uniform(detail::kCarWidMin, detail::kCarWidMax);
            box.dz = rng.uniform(detail::kCarHgtMin, detail::kCarHgtMax);
            box.theta = normalize_angle(rng.uniform(-kPi, kPi));
            const double margin = detail::bounding_radius(box);
            if (params.x_max - params.x_min <= 2.0 * margin ||
                params.y_max - params.y_min <= 2.0 * margin) {
                continue;  // range cannot hold a whole car
            }
            box.cx = rng.uniform(params.x_min + margin, params.x_max - margin);
            box.cy = rng.uniform(params.y_min + margin, params.y_max - margin);
            box.cz = 0.5 * box.dz;  // resting on the ground plane
            bool overlap = false;
            for (const GtObject &other : labels) {
                const double d = std::hypot(box.cx - other.box.cx, box.cy - other.box.cy);
                if (d < margin + detail::bounding_radius(other.box)) {
                    overlap = true;
                    break;
                }
            }
            if (!overlap) {
                labels.push_back({"Car", box});
                placed = true;
            }
        }
        if (!placed) {
            throw Error("placement", "could not place car " + std::to_string(k + 1) + " of " +
                                         std::to_string(params.n_cars) + " without overlap");
        }
    }

    PointCloud cloud;
    const double area = (params.x_max - params.x_min) * (params.y_max - params.y_min);
    const long n_ground = std::llround(params.ground_density * area);
    cloud.points.reserve(static_cast<size_t>(n_ground));
    for (long i = 0; i < n_ground; ++i) {
        Point p;
        p.x = rng.uniform(params.x_min, params.x_max);
        p.y = rng.uniform(params.y_min, params.y_max);
        p.z = 0.0;
        p.r = rng.uniform();
        cloud.points.push_back(p);
    }
    for (const GtObject &g : labels) {
        const Box3D &b = g.box;
        const double shell = 2.0 * (b.dx * b.dz + b.dy * b.dz) + b.dx * b.dy;
        const long n_pts = std::llround(params.surface_density * shell);
        for (long i = 0; i < n_pts; ++i) {
            cloud.points.push_back(detail::sample_shell_point(rng, b));
        }
    }
    if (params.noise_sigma > 0.0) {
        for (Point &p : cloud.points) {
            p.x += rng.normal(params.noise_sigma);
            p.y += rng.normal(params.noise_sigma);
            p.z += rng.normal(params.noise_sigma);
        }
    }
    return {std::move(cloud), std::move(labels)};
}

/// Mirror the scene across the x-z plane: y -> -y, yaw -> -yaw.
inline std::pair<PointCloud, std::vector<GtObject>> flip_y(const PointCloud &cloud,
                                                           const std::vector<GtObject> &labels) {
    PointCloud out_cloud = cloud;
    for (Point &p : out_cloud.points) p.y = -p.y;
    std::vector<GtObject> out_labels = labels;
    for (GtObject &g : out_labels) {
        g.box.cy = -g.box.cy;
        g.box.theta = normalize_angle(-g.box.theta);
    }
    return {std::move(out_cloud), std::move(out_labels)};
}

/// Rotate the scene by phi about the origin in the x-y plane.
inline std::pair<PointCloud, std::vector<GtObject>> rotate_z(const PointCloud &cloud,
                                                             const std::vector<GtObject> &labels,
                                                             double phi) {
    if (!std::isfinite(phi)) throw Error("config", "non-finite rotation angle");
    const double c = std::cos(phi), s = std::sin(phi);
    PointCloud out_cloud = cloud;
    for (Point &p : out_cloud.points) {
        const double x = p.x, y = p.y;
        p.x = c * x - s * y;
        p.y = s * x + c * y;
    }
    std::vector<GtObject> out_labels = labels;
    for (GtObject &g : out_labels) {
        const double x = g.box.cx, y = g.box.cy;
        g.box.cx = c * x - s * y;
        g.box.cy = s * x + c * y;
        g.box.theta = normalize_angle(g.box.theta + phi);
    }
    return {std::move(out_cloud), std::move(out_labels)};
}

}  // namespace pillaredge
