// SPDX-License-Identifier: Apache-2.0
// Copyright 2025 vectune contributors

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "vectune/dataio.hpp"

namespace vectune::testing {

/// Uniform random vectors in [lo, hi]^dim.
inline VectorSet random_vectors(size_t count, size_t dim, uint64_t seed, float lo = 0.0f, float hi = 1.0f) {
    VectorSet vs;
    vs.count = count;
    vs.dim = dim;
    vs.data.resize(count * dim);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(lo, hi);
    for (auto& v : vs.data) v = u(rng);
    return vs;
}

/// Gaussian blobs around `centers` random centers; rougher cluster structure
/// than the uniform cube.
inline VectorSet clustered_vectors(size_t count, size_t dim, size_t centers, float spread, uint64_t seed) {
    VectorSet vs;
    vs.count = count;
    vs.dim = dim;
    vs.data.resize(count * dim);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> cu(0.0f, 10.0f);
    std::normal_distribution<float> n(0.0f, spread);
    std::vector<float> mu(centers * dim);
    for (auto& v : mu) v = cu(rng);
    std::uniform_int_distribution<size_t> pick(0, centers - 1);
    for (size_t i = 0; i < count; ++i) {
        size_t c = pick(rng);
        for (size_t j = 0; j < dim; ++j) vs.data[i * dim + j] = mu[c * dim + j] + n(rng);
    }
    return vs;
}

/// Points uniform on a 1-D segment embedded in `dim` dimensions (a fixed
/// random direction), an intrinsic-dimension-1 manifold.
inline VectorSet line_segment(size_t count, size_t dim, uint64_t seed) {
    VectorSet vs;
    vs.count = count;
    vs.dim = dim;
    vs.data.resize(count * dim);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> dir(dim);
    double norm = 0.0;
    for (auto& v : dir) {
        v = g(rng);
        norm += v * v;
    }
    norm = std::sqrt(norm);
    std::uniform_real_distribution<double> t(0.0, 100.0);
    for (size_t i = 0; i < count; ++i) {
        double ti = t(rng);
        for (size_t j = 0; j < dim; ++j) vs.data[i * dim + j] = static_cast<float>(ti * dir[j] / norm);
    }
    return vs;
}

/// Uniform points inside a unit ball of the given dimension.
inline VectorSet ball_uniform(size_t count, size_t dim, uint64_t seed) {
    VectorSet vs;
    vs.count = count;
    vs.dim = dim;
    vs.data.resize(count * dim);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (size_t i = 0; i < count; ++i) {
        double norm = 0.0;
        std::vector<double> x(dim);
        for (auto& v : x) {
            v = g(rng);
            norm += v * v;
        }
        norm = std::sqrt(norm);
        double r = std::pow(u(rng), 1.0 / dim);
        for (size_t j = 0; j < dim; ++j) vs.data[i * dim + j] = static_cast<float>(r * x[j] / norm);
    }
    return vs;
}

/// 1-D vector set from explicit values.
inline VectorSet from_values(std::initializer_list<float> values) {
    VectorSet vs;
    vs.count = values.size();
    vs.dim = 1;
    vs.data.assign(values.begin(), values.end());
    return vs;
}

}  // namespace vectune::testing
