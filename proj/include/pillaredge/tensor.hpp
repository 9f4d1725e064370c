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

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "pillaredge/common.hpp"

namespace pillaredge {

namespace detail {
inline size_t checked_numel(const std::vector<int> &dims) {
    size_t n = 1;
    for (int d : dims) {
        if (d < 0) throw Error("shape", "negative tensor extent");
        n *= static_cast<size_t>(d);
    }
    return n;
}
}  // namespace detail

/// Dense row-major float32 tensor; the innermost extent is the last dim.
struct Tensor {
    std::vector<int> dims;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> d) : dims(std::move(d)), data(detail::checked_numel(dims), 0.0f) {}
    Tensor(std::vector<int> d, std::vector<float> v) : dims(std::move(d)), data(std::move(v)) {
        if (data.size() != detail::checked_numel(dims)) throw Error("shape", "data/dims mismatch");
    }

    size_t numel() const { return data.size(); }
    int dim(size_t i) const { return dims.at(i); }

    // 3D [C,H,W] accessors; most of the pipeline works on channel planes.
    float &at3(int c, int y, int x) {
        return data[(static_cast<size_t>(c) * dims[1] + y) * dims[2] + x];
    }
    float at3(int c, int y, int x) const {
        return data[(static_cast<size_t>(c) * dims[1] + y) * dims[2] + x];
    }
    float *plane(int c) { return data.data() + static_cast<size_t>(c) * dims[1] * dims[2]; }
    const float *plane(int c) const { return data.data() + static_cast<size_t>(c) * dims[1] * dims[2]; }

    bool same_shape(const Tensor &o) const { return dims == o.dims; }
};

/// Dense row-major int8 tensor (symmetric quantization, zero point 0).
struct TensorI8 {
    std::vector<int> dims;
    std::vector<int8_t> data;

    TensorI8() = default;
    explicit TensorI8(std::vector<int> d) : dims(std::move(d)), data(detail::checked_numel(dims), 0) {}

    size_t numel() const { return data.size(); }
    int dim(size_t i) const { return dims.at(i); }

    int8_t *plane(int c) { return data.data() + static_cast<size_t>(c) * dims[1] * dims[2]; }
    const int8_t *plane(int c) const {
        return data.data() + static_cast<size_t>(c) * dims[1] * dims[2];
    }
};

inline std::string shape_str(const std::vector<int> &dims) {
    std::string s = "[";
    for (size_t i = 0; i < dims.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(dims[i]);
    }
    return s + "]";
}

}  // namespace pillaredge
