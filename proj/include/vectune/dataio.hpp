// SPDX-License-Identifier: Apache-2.0
// Copyright 2025 vectune contributors

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace vectune {

/// Row-major float32 vector collection.
struct VectorSet {
    size_t count = 0;
    size_t dim = 0;
    std::vector<float> data;

    const float* row(size_t i) const { return data.data() + i * dim; }
    float* row(size_t i) { return data.data() + i * dim; }

    void validate() const {
        if (count < 1 || dim < 1) throw std::invalid_argument("VectorSet: empty");
        if (data.size() != count * dim) throw std::invalid_argument("VectorSet: data size mismatch");
        for (float v : data) {
            if (!std::isfinite(v)) throw std::invalid_argument("VectorSet: non-finite component");
        }
    }
};

/// Exact k-nearest-neighbor ids per query, each row sorted by ascending
/// distance with ties broken by ascending id.
struct NeighborTable {
    size_t query_count = 0;
    size_t k = 0;
    std::vector<int32_t> ids;

    const int32_t* row(size_t q) const { return ids.data() + q * k; }
};

/// Squared Euclidean distance. Rankings and ties match true Euclidean.
inline double squared_l2(const float* a, const float* b, size_t dim) {
    double acc = 0.0;
    for (size_t i = 0; i < dim; ++i) {
        double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc;
}

enum class VecFormat { Fvecs, Bvecs, Ivecs };

inline VecFormat format_from_name(const std::string& name) {
    if (name == "fvecs") return VecFormat::Fvecs;
    if (name == "bvecs") return VecFormat::Bvecs;
    if (name == "ivecs") return VecFormat::Ivecs;
    throw std::invalid_argument("unknown vector format: " + name);
}

inline VecFormat format_from_path(const std::string& path) {
    auto dot = path.rfind('.');
    if (dot == std::string::npos) throw std::invalid_argument("cannot infer format from path: " + path);
    return format_from_name(path.substr(dot + 1));
}

namespace detail {

inline int32_t read_le_i32(std::istream& in) {
    unsigned char buf[4];
    in.read(reinterpret_cast<char*>(buf), 4);
    if (!in) throw std::runtime_error("I/O error: truncated file");
    return static_cast<int32_t>(static_cast<uint32_t>(buf[0]) | (static_cast<uint32_t>(buf[1]) << 8) |
                                (static_cast<uint32_t>(buf[2]) << 16) | (static_cast<uint32_t>(buf[3]) << 24));
}

inline void write_le_i32(std::ostream& out, int32_t v) {
    auto u = static_cast<uint32_t>(v);
    unsigned char buf[4] = {static_cast<unsigned char>(u & 0xff), static_cast<unsigned char>((u >> 8) & 0xff),
                            static_cast<unsigned char>((u >> 16) & 0xff),
                            static_cast<unsigned char>((u >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(buf), 4);
}

}  // namespace detail

/// Load a .fvecs/.bvecs/.ivecs file. Every record carries a little-endian
/// int32 dimension followed by dim values (float32 / uint8 / int32);
/// byte and integer payloads are widened to float.
inline VectorSet load_vectors(const std::string& path, VecFormat format) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);

    VectorSet vs;
    while (true) {
        in.peek();
        if (in.eof()) break;
        int32_t dim = detail::read_le_i32(in);
        if (dim < 1) throw std::runtime_error("format error: bad dimension field in " + path);
        if (vs.count == 0) {
            vs.dim = static_cast<size_t>(dim);
        } else if (static_cast<size_t>(dim) != vs.dim) {
            throw std::runtime_error("format error: dimension mismatch between records in " + path);
        }
        size_t offset = vs.data.size();
        vs.data.resize(offset + vs.dim);
        switch (format) {
            case VecFormat::Fvecs: {
                static_assert(sizeof(float) == 4);
                in.read(reinterpret_cast<char*>(vs.data.data() + offset), 4 * vs.dim);
                if (!in) throw std::runtime_error("I/O error: truncated record in " + path);
                break;
            }
            case VecFormat::Bvecs: {
                std::vector<unsigned char> buf(vs.dim);
                in.read(reinterpret_cast<char*>(buf.data()), vs.dim);
                if (!in) throw std::runtime_error("I/O error: truncated record in " + path);
                for (size_t i = 0; i < vs.dim; ++i) vs.data[offset + i] = static_cast<float>(buf[i]);
                break;
            }
            case VecFormat::Ivecs: {
                for (size_t i = 0; i < vs.dim; ++i) vs.data[offset + i] = static_cast<float>(detail::read_le_i32(in));
                break;
            }
        }
        ++vs.count;
    }
    if (vs.count == 0) throw std::runtime_error("no records in " + path);
    return vs;
}

inline VectorSet load_vectors(const std::string& path) { return load_vectors(path, format_from_path(path)); }

inline void save_fvecs(const VectorSet& vs, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open file for writing: " + path);
    for (size_t i = 0; i < vs.count; ++i) {
        detail::write_le_i32(out, static_cast<int32_t>(vs.dim));
        out.write(reinterpret_cast<const char*>(vs.row(i)), 4 * vs.dim);
    }
    if (!out) throw std::runtime_error("I/O error writing " + path);
}

inline void save_ivecs(const NeighborTable& nt, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open file for writing: " + path);
    for (size_t q = 0; q < nt.query_count; ++q) {
        detail::write_le_i32(out, static_cast<int32_t>(nt.k));
        for (size_t j = 0; j < nt.k; ++j) detail::write_le_i32(out, nt.row(q)[j]);
    }
    if (!out) throw std::runtime_error("I/O error writing " + path);
}

inline NeighborTable load_neighbor_table(const std::string& path) {
    VectorSet raw = load_vectors(path, VecFormat::Ivecs);
    NeighborTable nt;
    nt.query_count = raw.count;
    nt.k = raw.dim;
    nt.ids.resize(raw.data.size());
    for (size_t i = 0; i < raw.data.size(); ++i) nt.ids[i] = static_cast<int32_t>(raw.data[i]);
    return nt;
}

/// Exact k nearest neighbors per query under Euclidean distance,
/// ties broken by ascending id.
inline NeighborTable compute_ground_truth(const VectorSet& base, const VectorSet& queries, size_t k) {
    if (base.dim != queries.dim) throw std::invalid_argument("ground truth: dimension mismatch");
    if (k > base.count) throw std::invalid_argument("ground truth: k exceeds base count");
    if (k < 1) throw std::invalid_argument("ground truth: k must be >= 1");

    NeighborTable nt;
    nt.query_count = queries.count;
    nt.k = k;
    nt.ids.resize(queries.count * k);

    std::vector<std::pair<double, int32_t>> dists(base.count);
    for (size_t q = 0; q < queries.count; ++q) {
        const float* qv = queries.row(q);
        for (size_t i = 0; i < base.count; ++i) {
            dists[i] = {squared_l2(qv, base.row(i), base.dim), static_cast<int32_t>(i)};
        }
        std::partial_sort(dists.begin(), dists.begin() + k, dists.end());
        for (size_t j = 0; j < k; ++j) nt.ids[q * k + j] = dists[j].second;
    }
    return nt;
}

}  // namespace vectune
