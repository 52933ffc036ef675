// SPDX-License-Identifier: Apache-2.0
// Copyright 2025 vectune contributors

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "vectune/collector.hpp"
#include "vectune/config_space.hpp"
#include "vectune/ood.hpp"
#include "vectune/qpp.hpp"

namespace vectune {

/// Mean 1-NN distance of one embedded group to the base embeddings.
inline double annd_of_embedded_group(const Eigen::MatrixXd& group_emb, const Eigen::MatrixXd& base_embeddings) {
    if (base_embeddings.cols() == 0) throw std::invalid_argument("annd: empty base embeddings");
    if (group_emb.cols() == 0) throw std::invalid_argument("annd: empty candidate group");
    auto nn = detail::kth_nn_distances(group_emb, base_embeddings, 1, false);
    return std::accumulate(nn.begin(), nn.end(), 0.0) / static_cast<double>(nn.size());
}

/// Average nearest-neighbor distance per candidate group: for candidate j,
/// the mean over its rows' embeddings of the 1-NN distance to the base
/// embeddings. Groups hold normalized input rows (columns are samples).
inline std::vector<double> annd_scores(const std::vector<Eigen::MatrixXd>& candidate_groups,
                                       const Eigen::MatrixXd& base_embeddings, const QppModel& model) {
    std::vector<double> scores;
    scores.reserve(candidate_groups.size());
    for (const auto& group : candidate_groups) {
        scores.push_back(annd_of_embedded_group(model.embed_normalized(group), base_embeddings));
    }
    return scores;
}

/// Picks the candidate with the largest score and the one closest to the
/// mean score (excluding the first pick when more than one candidate
/// remains). Ties resolve to the lowest index.
inline std::pair<size_t, size_t> select_pair(const std::vector<double>& scores) {
    if (scores.empty()) throw std::invalid_argument("select_pair: no candidates");
    size_t j1 = 0;
    for (size_t j = 1; j < scores.size(); ++j) {
        if (scores[j] > scores[j1]) j1 = j;
    }
    if (scores.size() == 1) return {0, 0};

    double mu = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
    size_t j2 = std::numeric_limits<size_t>::max();
    double best_gap = std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < scores.size(); ++j) {
        if (j == j1) continue;
        double gap = std::abs(scores[j] - mu);
        if (gap < best_gap) {
            best_gap = gap;
            j2 = j;
        }
    }
    return {j1, j2};
}

struct RoundLog {
    int round = 0;
    ConstructionConfig j1, j2;
    double d_bar = 0.0;
    double d_tr = 0.0;
    bool similar = false;
    double qpp_mape = std::numeric_limits<double>::quiet_NaN();  // filled by callers that hold an oracle
};

inline nlohmann::json round_log_to_json(const RoundLog& r) {
    nlohmann::json j{{"round", r.round},
                     {"j1_config", {{"efC", r.j1.efC}, {"M", r.j1.M}}},
                     {"j2_config", {{"efC", r.j2.efC}, {"M", r.j2.M}}},
                     {"d_bar", r.d_bar},
                     {"d_tr", r.d_tr},
                     {"similar", r.similar}};
    if (std::isfinite(r.qpp_mape)) j["qpp_mape"] = r.qpp_mape;
    return j;
}

/// Collects measured records for one construction configuration on the new
/// dataset.
using GroupCollector = std::function<std::vector<PerfRecord>(const ConstructionConfig&)>;

struct CpcsOptions {
    int max_rounds = 7;
    TrainSpec retrain_spec;
    std::function<void(const RoundLog&, const std::vector<PerfRow>&)> on_round;  // persistence hook

    CpcsOptions() {
        retrain_spec = default_qpp_train_spec();
        retrain_spec.epochs = 200;  // warm starts converge faster
    }
};

struct CpcsOutcome {
    QppModel model;
    int rounds_used = 0;
    std::vector<RoundLog> rounds;
    std::vector<ConstructionConfig> selected;
};

/// Iterative model transfer: per round, score the remaining candidate
/// construction configurations by ANND, collect the max-ANND and
/// mean-closest picks, retrain the predictor on the grown pool (warm
/// start), and stop as soon as detection reports similarity. The new
/// dataset's features join the feature map; collected rows join the pool.
inline CpcsOutcome run_cpcs(const std::string& new_dataset, const DatasetFeatures& df_n, TrainingPool& pool,
                            FeatureMap& features, QppModel model, const ConfigSpace& space,
                            const GroupCollector& collect, const CpcsOptions& opts = {}) {
    features[new_dataset] = df_n;

    // remaining candidates: the construction grid minus configs already
    // collected for this dataset
    std::vector<ConstructionConfig> candidates;
    for (int efc : space.efc_grid) {
        for (int m : space.m_grid) {
            ConstructionConfig c{efc, m};
            bool seen = false;
            for (const auto& row : pool.rows) {
                if (row.dataset == new_dataset && row.record.config.efC == efc && row.record.config.M == m) {
                    seen = true;
                    break;
                }
            }
            if (!seen) candidates.push_back(c);
        }
    }

    auto group_rows = [&](const ConstructionConfig& c) {
        Eigen::MatrixXd X(kQppInputDim, space.efs_grid.size());
        for (size_t i = 0; i < space.efs_grid.size(); ++i) {
            X.col(i) = model.norm.normalize_row(ParamConfig{c.efC, c.M, space.efs_grid[i]}, df_n);
        }
        return X;
    };
    std::vector<Eigen::MatrixXd> groups;
    groups.reserve(candidates.size());
    for (const auto& c : candidates) groups.push_back(group_rows(c));

    // detection base side: labeled pool inputs plus every selected group's rows
    Eigen::MatrixXd base_inputs = pool_inputs(pool, features, model.norm);

    CpcsOutcome out;
    out.model = std::move(model);

    for (int round = 1; round <= opts.max_rounds && !candidates.empty(); ++round) {
        Eigen::MatrixXd base_emb = out.model.embed_normalized(base_inputs);
        auto scores = annd_scores(groups, base_emb, out.model);
        auto [j1, j2] = select_pair(scores);

        RoundLog log;
        log.round = round;
        log.j1 = candidates[j1];
        log.j2 = candidates[j2];

        std::vector<size_t> picks{j1};
        if (j2 != j1) picks.push_back(j2);

        std::vector<PerfRow> new_rows;
        for (size_t p : picks) {
            for (const PerfRecord& rec : collect(candidates[p])) {
                new_rows.push_back(PerfRow{new_dataset, rec});
            }
        }
        for (const auto& row : new_rows) pool.rows.push_back(row);
        out.selected.push_back(candidates[j1]);
        if (j2 != j1) out.selected.push_back(candidates[j2]);

        // move the selected groups' input rows to the base side
        Eigen::MatrixXd moved(kQppInputDim, 0);
        for (size_t p : picks) {
            Eigen::MatrixXd tmp(kQppInputDim, moved.cols() + groups[p].cols());
            tmp << moved, groups[p];
            moved = std::move(tmp);
        }
        {
            Eigen::MatrixXd tmp(kQppInputDim, base_inputs.cols() + moved.cols());
            tmp << base_inputs, moved;
            base_inputs = std::move(tmp);
        }
        std::sort(picks.begin(), picks.end(), std::greater<>());
        for (size_t p : picks) {
            candidates.erase(candidates.begin() + p);
            groups.erase(groups.begin() + p);
        }

        out.model = train_qpp(pool, features, space, opts.retrain_spec, &out.model);

        out.rounds_used = round;
        if (candidates.empty()) {
            log.similar = true;  // nothing left to transfer
            out.rounds.push_back(log);
            if (opts.on_round) opts.on_round(log, new_rows);
            break;
        }
        Eigen::MatrixXd remaining(kQppInputDim, 0);
        for (const auto& g : groups) {
            Eigen::MatrixXd tmp(kQppInputDim, remaining.cols() + g.cols());
            tmp << remaining, g;
            remaining = std::move(tmp);
        }
        SimilarityVerdict verdict = detect(base_inputs, remaining, out.model);
        log.d_bar = verdict.d_bar;
        log.d_tr = verdict.d_tr;
        log.similar = verdict.similar;
        out.rounds.push_back(log);
        if (opts.on_round) opts.on_round(log, new_rows);
        if (verdict.similar) break;
    }
    return out;
}

}  // namespace vectune
