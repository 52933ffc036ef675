// SPDX-License-Identifier: Apache-2.0
// Copyright 2025 vectune contributors

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "vectune/config_space.hpp"
#include "vectune/qpp.hpp"

namespace vectune {

/// Outcome of one similarity detection: the new data counts as in-distribution
/// when its average nearest-neighbor distance d_bar stays within the
/// 95th-percentile threshold d_tr derived from the base embeddings.
struct SimilarityVerdict {
    bool similar = false;
    double d_bar = 0.0;
    double d_tr = 0.0;
};

inline nlohmann::json verdict_to_json(const SimilarityVerdict& v) {
    return {{"similar", v.similar}, {"d_bar", v.d_bar}, {"d_tr", v.d_tr}};
}

namespace detail {

/// Euclidean distance from each column of `points` to its k-th nearest
/// column of `ref`. With exclude_self set, point i skips ref column i
/// (the matrices must then be the same size).
inline std::vector<double> kth_nn_distances(const Eigen::MatrixXd& points, const Eigen::MatrixXd& ref, size_t k,
                                            bool exclude_self) {
    const long n = points.cols();
    const long m = ref.cols();
    if (k < 1 || static_cast<long>(k) > (exclude_self ? m - 1 : m)) {
        throw std::invalid_argument("kth_nn_distances: k out of range");
    }
    Eigen::VectorXd ref_sq = ref.colwise().squaredNorm();
    std::vector<double> out(n);

    const long chunk = 512;
    std::vector<double> row(m);
    for (long start = 0; start < n; start += chunk) {
        long len = std::min(chunk, n - start);
        Eigen::MatrixXd block = points.middleCols(start, len);
        Eigen::VectorXd block_sq = block.colwise().squaredNorm();
        Eigen::MatrixXd gram = ref.transpose() * block;  // m x len
        for (long j = 0; j < len; ++j) {
            for (long i = 0; i < m; ++i) {
                double d2 = ref_sq[i] + block_sq[j] - 2.0 * gram(i, j);
                row[i] = d2 > 0.0 ? d2 : 0.0;
            }
            if (exclude_self) row[start + j] = std::numeric_limits<double>::infinity();
            std::nth_element(row.begin(), row.begin() + (k - 1), row.end());
            out[start + j] = std::sqrt(row[k - 1]);
        }
    }
    return out;
}

}  // namespace detail

/// Nearest-rank 95th percentile: element at index ceil(0.95 * N) - 1 of the
/// ascending-sorted values.
inline double percentile95_nearest_rank(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("percentile95_nearest_rank: empty");
    std::sort(values.begin(), values.end());
    size_t rank = static_cast<size_t>(std::ceil(0.95 * static_cast<double>(values.size())));
    return values[rank - 1];
}

/// Threshold from the base embeddings: per point, distance to its k-th NN
/// among the other base embeddings; nearest-rank 95th percentile of those.
inline double distance_threshold(const Eigen::MatrixXd& base_embeddings, size_t k) {
    const long n = base_embeddings.cols();
    if (static_cast<long>(k) >= n) throw std::invalid_argument("distance_threshold: need more points than k");
    return percentile95_nearest_rank(detail::kth_nn_distances(base_embeddings, base_embeddings, k, true));
}

/// Verdict from already-embedded points (columns are samples), k = 1.
inline SimilarityVerdict detect_embeddings(const Eigen::MatrixXd& base_emb, const Eigen::MatrixXd& new_emb) {
    if (base_emb.cols() == 0 || new_emb.cols() == 0) throw std::invalid_argument("detect: empty input set");
    SimilarityVerdict v;
    v.d_tr = distance_threshold(base_emb, 1);
    auto nn = detail::kth_nn_distances(new_emb, base_emb, 1, false);
    v.d_bar = std::accumulate(nn.begin(), nn.end(), 0.0) / static_cast<double>(nn.size());
    v.similar = v.d_bar <= v.d_tr;
    return v;
}

/// Data similarity detection over normalized QPP input rows (columns are
/// samples): embed both sides with the model's penultimate layer, threshold
/// from the base side (k = 1), verdict similar iff d_bar <= d_tr.
inline SimilarityVerdict detect(const Eigen::MatrixXd& base_inputs, const Eigen::MatrixXd& new_inputs,
                                const QppModel& model) {
    if (base_inputs.cols() == 0 || new_inputs.cols() == 0) throw std::invalid_argument("detect: empty input set");
    return detect_embeddings(model.embed_normalized(base_inputs), model.embed_normalized(new_inputs));
}

constexpr size_t kDetectRowCap = 20000;

/// Candidate input rows for a new dataset: its feature vector crossed with
/// every grid configuration, uniformly subsampled down to the row cap.
inline Eigen::MatrixXd candidate_inputs(const DatasetFeatures& feats, const ConfigSpace& space,
                                        const Normalizer& norm, size_t cap = kDetectRowCap, uint64_t seed = 42) {
    std::vector<ParamConfig> configs;
    configs.reserve(space.config_count());
    for (int efc : space.efc_grid) {
        for (int m : space.m_grid) {
            for (int efs : space.efs_grid) configs.push_back(ParamConfig{efc, m, efs});
        }
    }
    if (configs.size() > cap) {
        std::mt19937_64 rng(seed);
        std::shuffle(configs.begin(), configs.end(), rng);
        configs.resize(cap);
    }
    Eigen::MatrixXd X(kQppInputDim, configs.size());
    for (size_t i = 0; i < configs.size(); ++i) X.col(i) = norm.normalize_row(configs[i], feats);
    return X;
}

/// Normalized input rows for the whole training pool (the base side of a
/// detection).
inline Eigen::MatrixXd pool_inputs(const TrainingPool& pool, const FeatureMap& features, const Normalizer& norm) {
    auto samples = make_training_matrix(pool, features, norm);
    return sample_inputs(samples);
}

}  // namespace vectune
