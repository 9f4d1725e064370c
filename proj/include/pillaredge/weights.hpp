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

#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "pillaredge/tensor.hpp"

namespace pillaredge {

/// Named float32 tensors, ordered by name. Immutable once a model is loaded;
/// forward passes on distinct frames may share one store.
struct WeightStore {
    std::map<std::string, Tensor> tensors;

    bool has(const std::string &name) const { return tensors.count(name) != 0; }

    const Tensor &get(const std::string &name) const {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw Error("missing-weight", "no tensor named '" + name + "'");
        return it->second;
    }

    std::vector<float> get_vec(const std::string &name) const {
        const Tensor &t = get(name);
        return t.data;
    }

    double get_scalar(const std::string &name) const {
        const Tensor &t = get(name);
        if (t.numel() != 1) throw Error("shape", "tensor '" + name + "' is not a scalar");
        return t.data[0];
    }

    void put(const std::string &name, Tensor t) { tensors[name] = std::move(t); }
};

namespace detail {

inline void write_u16(std::ostream &out, uint16_t v) {
    const unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                                static_cast<unsigned char>(v >> 8)};
    out.write(reinterpret_cast<const char *>(b), 2);
}

inline void write_u32(std::ostream &out, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char *>(b), 4);
}

inline void write_f64(std::ostream &out, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char *>(b), 8);
}

class ByteReader {
public:
    ByteReader(std::istream &in, std::string what) : in_(in), what_(std::move(what)) {}

    void raw(void *dst, size_t n, const std::string &ctx) {
        in_.read(static_cast<char *>(dst), static_cast<std::streamsize>(n));
        if (static_cast<size_t>(in_.gcount()) != n) {
            throw Error("truncated", what_ + " ends early while reading " + ctx);
        }
    }
    uint8_t u8(const std::string &ctx) {
        uint8_t v;
        raw(&v, 1, ctx);
        return v;
    }
    uint16_t u16(const std::string &ctx) {
        unsigned char b[2];
        raw(b, 2, ctx);
        return static_cast<uint16_t>(b[0] | (b[1] << 8));
    }
    uint32_t u32(const std::string &ctx) {
        unsigned char b[4];
        raw(b, 4, ctx);
        uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
        return v;
    }
    double f64(const std::string &ctx) {
        unsigned char b[8];
        raw(b, 8, ctx);
        uint64_t bits = 0;
        for (int i = 7; i >= 0; --i) bits = (bits << 8) | b[i];
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }

private:
    std::istream &in_;
    std::string what_;
};

}  // namespace detail

/// Weight file: magic "PPW1"; u32 LE tensor count; per tensor: u16 LE name
/// length, UTF-8 name, u8 dtype (0=f32, 1=i8), u8 ndim, ndim x u32 LE dims,
/// raw little-endian data. Tensors are written in name order, so identical
/// stores serialize to identical bytes.
inline void save_weights(const WeightStore &store, const std::filesystem::path &path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("io", "cannot write weight file " + path.string());
    out.write("PPW1", 4);
    detail::write_u32(out, static_cast<uint32_t>(store.tensors.size()));
    for (const auto &[name, t] : store.tensors) {
        if (name.size() > 0xffff) throw Error("format", "tensor name too long: " + name);
        detail::write_u16(out, static_cast<uint16_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        out.put(0);  // dtype f32
        out.put(static_cast<char>(t.dims.size()));
        for (int d : t.dims) detail::write_u32(out, static_cast<uint32_t>(d));
        out.write(reinterpret_cast<const char *>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    }
    if (!out) throw Error("io", "short write to " + path.string());
}

inline WeightStore load_weights(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("io", "cannot open weight file " + path.string());
    detail::ByteReader rd(in, "weight file " + path.string());
    char magic[4];
    rd.raw(magic, 4, "magic");
    if (std::memcmp(magic, "PPW1", 4) != 0) {
        throw Error("format", "bad magic in weight file " + path.string());
    }
    const uint32_t count = rd.u32("tensor count");
    WeightStore store;
    for (uint32_t i = 0; i < count; ++i) {
        const uint16_t name_len = rd.u16("name length of tensor #" + std::to_string(i));
        std::string name(name_len, '\0');
        rd.raw(name.data(), name_len, "name of tensor #" + std::to_string(i));
        const uint8_t dtype = rd.u8("dtype of tensor '" + name + "'");
        if (dtype != 0) {
            throw Error("format", "tensor '" + name + "' has unsupported dtype " + std::to_string(dtype));
        }
        const uint8_t ndim = rd.u8("rank of tensor '" + name + "'");
        std::vector<int> dims(ndim);
        size_t numel = 1;
        for (int d = 0; d < ndim; ++d) {
            const uint32_t ext = rd.u32("dims of tensor '" + name + "'");
            if (ext > (1u << 28)) throw Error("format", "tensor '" + name + "' extent too large");
            dims[d] = static_cast<int>(ext);
            numel *= ext;
        }
        Tensor t(dims);
        rd.raw(t.data.data(), numel * sizeof(float), "data of tensor '" + name + "'");
        store.tensors.emplace(std::move(name), std::move(t));
    }
    return store;
}

}  // namespace pillaredge
