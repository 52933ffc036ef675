// SPDX-License-Identifier: Apache-2.0
// Copyright 2025 vectune contributors

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vectune/dataio.hpp"

namespace vectune {

/// The 12-element dataset feature vector: cardinalities, dimensionality,
/// local intrinsic dimensionality, and min/mean/max/std of the per-vector
/// kNN distance sums (DS) and the per-query kNN/non-kNN distance ratios (DR).
struct DatasetFeatures {
    double c_b = 0, c_d = 0, d = 0, lid = 0;
    double ds_min = 0, ds_mean = 0, ds_max = 0, ds_std = 0;
    double dr_min = 0, dr_mean = 0, dr_max = 0, dr_std = 0;

    std::array<double, 12> as_array() const {
        return {c_b, c_d, d, lid, ds_min, ds_mean, ds_max, ds_std, dr_min, dr_mean, dr_max, dr_std};
    }

    void validate() const {
        for (double v : as_array()) {
            if (!std::isfinite(v)) throw std::invalid_argument("DatasetFeatures: non-finite field");
        }
        if (c_b < 1 || c_d < 1 || d < 1 || lid <= 0) throw std::invalid_argument("DatasetFeatures: bad scalar field");
        if (!(ds_min <= ds_mean && ds_mean <= ds_max) || ds_std < 0)
            throw std::invalid_argument("DatasetFeatures: DS stats out of order");
        if (!(dr_min <= dr_mean && dr_mean <= dr_max) || dr_std < 0)
            throw std::invalid_argument("DatasetFeatures: DR stats out of order");
    }
};

struct SummaryStats {
    double min = 0, mean = 0, max = 0, std = 0;
};

namespace detail {

/// min/mean/max and population standard deviation.
inline SummaryStats summarize(const std::vector<double>& xs) {
    if (xs.empty()) throw std::invalid_argument("summarize: empty sample");
    SummaryStats s;
    s.min = *std::min_element(xs.begin(), xs.end());
    s.max = *std::max_element(xs.begin(), xs.end());
    s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
    double var = 0.0;
    for (double x : xs) var += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(var / xs.size());
    return s;
}

inline std::vector<size_t> sample_indices(size_t population, size_t sample, std::mt19937_64& rng) {
    std::vector<size_t> idx(population);
    std::iota(idx.begin(), idx.end(), size_t{0});
    if (sample >= population) return idx;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(sample);
    std::sort(idx.begin(), idx.end());
    return idx;
}

/// Euclidean distances from point `p` to every base row except `exclude`
/// (pass base.count to keep all), sorted ascending.
inline std::vector<double> sorted_distances(const VectorSet& base, const float* p, size_t exclude) {
    std::vector<double> ds;
    ds.reserve(base.count);
    for (size_t i = 0; i < base.count; ++i) {
        if (i == exclude) continue;
        ds.push_back(std::sqrt(squared_l2(p, base.row(i), base.dim)));
    }
    std::sort(ds.begin(), ds.end());
    return ds;
}

}  // namespace detail

/// Maximum-likelihood local intrinsic dimensionality, averaged over a
/// sample of base points. Each point contributes
/// -(1/k * sum_{i<k} ln(d_i / d_k))^{-1} over its k nearest neighbors
/// (self excluded). Points with a zero neighbor distance are skipped.
inline double estimate_lid(const VectorSet& base, size_t k_lid, size_t sample, uint64_t seed) {
    if (k_lid < 2) throw std::invalid_argument("estimate_lid: k_lid must be >= 2");
    if (base.count < k_lid + 1) throw std::invalid_argument("estimate_lid: base too small for k_lid");

    std::mt19937_64 rng(seed);
    auto idx = detail::sample_indices(base.count, sample, rng);

    double sum = 0.0;
    size_t used = 0;
    for (size_t i : idx) {
        auto ds = detail::sorted_distances(base, base.row(i), i);
        double dk = ds[k_lid - 1];
        if (ds[0] <= 0.0 || dk <= 0.0) continue;  // duplicate vectors
        double acc = 0.0;
        for (size_t j = 0; j + 1 < k_lid; ++j) acc += std::log(ds[j] / dk);
        acc /= static_cast<double>(k_lid);
        if (acc >= -1e-12) continue;  // all neighbors equidistant
        sum += -1.0 / acc;
        ++used;
    }
    if (used == 0) throw std::runtime_error("estimate_lid: degenerate distances");
    return sum / static_cast<double>(used);
}

/// Per-vector sum of distances to its k nearest neighbors (self excluded),
/// summarized over a sample of base vectors.
inline SummaryStats compute_ds_stats(const VectorSet& base, size_t k, size_t sample, uint64_t seed) {
    if (base.count <= k) throw std::invalid_argument("compute_ds_stats: base.count must exceed k");
    std::mt19937_64 rng(seed);
    auto idx = detail::sample_indices(base.count, sample, rng);

    std::vector<double> values;
    values.reserve(idx.size());
    for (size_t i : idx) {
        auto ds = detail::sorted_distances(base, base.row(i), i);
        values.push_back(std::accumulate(ds.begin(), ds.begin() + k, 0.0));
    }
    return detail::summarize(values);
}

/// Per-query ratio of the mean distance to its k nearest base vectors over
/// the mean distance to sampled non-kNN base vectors, summarized over
/// queries. Queries whose non-kNN mean distance is zero are skipped.
inline SummaryStats compute_dr_stats(const VectorSet& base, const VectorSet& queries, size_t k,
                                     size_t nonknn_sample, uint64_t seed) {
    if (base.count <= k) throw std::invalid_argument("compute_dr_stats: base.count must exceed k");
    if (queries.count == 0) throw std::invalid_argument("compute_dr_stats: no queries");
    if (base.dim != queries.dim) throw std::invalid_argument("compute_dr_stats: dimension mismatch");

    std::mt19937_64 rng(seed);
    std::vector<double> ratios;
    ratios.reserve(queries.count);

    std::vector<std::pair<double, size_t>> dists(base.count);
    for (size_t q = 0; q < queries.count; ++q) {
        const float* qv = queries.row(q);
        for (size_t i = 0; i < base.count; ++i) {
            dists[i] = {std::sqrt(squared_l2(qv, base.row(i), base.dim)), i};
        }
        std::sort(dists.begin(), dists.end());

        double knn_mean = 0.0;
        for (size_t j = 0; j < k; ++j) knn_mean += dists[j].first;
        knn_mean /= static_cast<double>(k);

        size_t rest = base.count - k;
        auto pick = detail::sample_indices(rest, nonknn_sample, rng);
        double non_mean = 0.0;
        for (size_t j : pick) non_mean += dists[k + j].first;
        non_mean /= static_cast<double>(pick.size());

        if (non_mean <= 0.0) continue;
        ratios.push_back(knn_mean / non_mean);
    }
    if (ratios.empty()) throw std::runtime_error("compute_dr_stats: all queries degenerate");
    return detail::summarize(ratios);
}

constexpr size_t kFeatureK = 10;      // kNN depth shared with recall measurement
constexpr size_t kLidK = 100;         // neighbors per point in the LID estimate
constexpr size_t kFeatureSample = 1000;

/// Assembles the full feature vector with k = 10 throughout.
inline DatasetFeatures extract_features(const VectorSet& base, const VectorSet& queries, uint64_t seed = 42) {
    if (base.dim != queries.dim) throw std::invalid_argument("extract_features: dimension mismatch");
    DatasetFeatures f;
    f.c_b = static_cast<double>(base.count);
    f.c_d = static_cast<double>(queries.count);
    f.d = static_cast<double>(base.dim);
    size_t k_lid = std::min(kLidK, base.count - 1);
    f.lid = estimate_lid(base, k_lid, kFeatureSample, seed);
    SummaryStats ds = compute_ds_stats(base, kFeatureK, kFeatureSample, seed + 1);
    f.ds_min = ds.min;
    f.ds_mean = ds.mean;
    f.ds_max = ds.max;
    f.ds_std = ds.std;
    SummaryStats dr = compute_dr_stats(base, queries, kFeatureK, kFeatureSample, seed + 2);
    f.dr_min = dr.min;
    f.dr_mean = dr.mean;
    f.dr_max = dr.max;
    f.dr_std = dr.std;
    f.validate();
    return f;
}

// --- JSON persistence -------------------------------------------------------

inline nlohmann::json features_to_json(const DatasetFeatures& f, uint64_t seed) {
    return nlohmann::json{{"c_b", f.c_b},       {"c_d", f.c_d},       {"d", f.d},
                          {"lid", f.lid},       {"ds_min", f.ds_min}, {"ds_mean", f.ds_mean},
                          {"ds_max", f.ds_max}, {"ds_std", f.ds_std}, {"dr_min", f.dr_min},
                          {"dr_mean", f.dr_mean}, {"dr_max", f.dr_max}, {"dr_std", f.dr_std},
                          {"seed", seed}};
}

inline DatasetFeatures features_from_json(const nlohmann::json& j) {
    DatasetFeatures f;
    f.c_b = j.at("c_b");
    f.c_d = j.at("c_d");
    f.d = j.at("d");
    f.lid = j.at("lid");
    f.ds_min = j.at("ds_min");
    f.ds_mean = j.at("ds_mean");
    f.ds_max = j.at("ds_max");
    f.ds_std = j.at("ds_std");
    f.dr_min = j.at("dr_min");
    f.dr_mean = j.at("dr_mean");
    f.dr_max = j.at("dr_max");
    f.dr_std = j.at("dr_std");
    return f;
}

}  // namespace vectune
