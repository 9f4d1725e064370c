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
#include <string>
#include <vector>

#include "pillaredge/model.hpp"
#include "pillaredge/synth.hpp"

namespace pillaredge::testing {

/// Smallest config that still exercises every architectural feature:
/// 32x32 grid, two blocks, mixed up-strides.
inline ModelConfig tiny_model_config() {
    ModelConfig c;
    c.grid.x_min = 0.0;
    c.grid.x_max = 9.6;
    c.grid.y_min = -4.8;
    c.grid.y_max = 4.8;
    c.grid.z_min = -3.0;
    c.grid.z_max = 1.0;
    c.grid.pillar_size = 0.3;
    c.grid.max_pillars = 2000;
    c.grid.max_points_per_pillar = 24;
    c.grid.out_channels = 8;
    c.blocks = {{2, 1, 16}, {2, 1, 32}};
    c.up_strides = {1, 2};
    c.up_channels = 16;
    return c;
}

/// Mid-size config for quantization agreement runs: 64x64 grid, three blocks.
inline ModelConfig small_model_config() {
    ModelConfig c;
    c.grid.x_min = 0.0;
    c.grid.x_max = 19.2;
    c.grid.y_min = -9.6;
    c.grid.y_max = 9.6;
    c.grid.z_min = -3.0;
    c.grid.z_max = 1.0;
    c.grid.pillar_size = 0.3;
    c.grid.max_pillars = 4000;
    c.grid.max_points_per_pillar = 32;
    c.grid.out_channels = 16;
    c.blocks = {{2, 2, 32}, {2, 2, 64}, {2, 2, 64}};
    c.up_strides = {1, 2, 4};
    c.up_channels = 32;
    return c;
}

inline SynthParams scene_params_for(const ModelConfig &config, uint64_t seed, int n_cars = 2) {
    SynthParams p;
    p.n_cars = n_cars;
    p.x_min = config.grid.x_min + 1.0;
    p.x_max = config.grid.x_max - 1.0;
    p.y_min = config.grid.y_min + 1.0;
    p.y_max = config.grid.y_max - 1.0;
    p.ground_density = 1.0;
    p.surface_density = 25.0;
    p.noise_sigma = 0.01;
    p.seed = seed;
    return p;
}

inline std::vector<PointCloud> make_scene_clouds(const ModelConfig &config, int n_frames,
                                                 uint64_t seed0, int n_cars = 2) {
    std::vector<PointCloud> clouds;
    clouds.reserve(static_cast<size_t>(n_frames));
    for (int i = 0; i < n_frames; ++i) {
        auto [cloud, labels] = gen_synthetic_scene(scene_params_for(config, seed0 + static_cast<uint64_t>(i), n_cars));
        (void)labels;
        cloud.frame_id = static_cast<uint64_t>(i);
        clouds.push_back(std::move(cloud));
    }
    return clouds;
}

inline std::filesystem::path fresh_temp_dir(const std::string &tag) {
    static int counter = 0;
    std::filesystem::path dir = std::filesystem::temp_directory_path() /
                                ("pillaredge_" + tag + "_" + std::to_string(::getpid()) + "_" +
                                 std::to_string(counter++));
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string slurp_file(const std::filesystem::path &p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace pillaredge::testing
