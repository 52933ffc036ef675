// SPDX-License-Identifier: Apache-2.0
// Copyright 2025 vectune contributors

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "support/surrogate.hpp"
#include "vectune/qpp.hpp"

namespace vectune::testing {

/// Named surrogate datasets with their synthetic performance rows, the raw
/// material for predictor tests.
struct SurrogateWorld {
    std::vector<std::pair<std::string, SurrogateDataset>> datasets;
    TrainingPool pool;
    FeatureMap features;
    std::vector<int> efs_grid;
};

inline SurrogateWorld make_surrogate_world(const ConfigSpace& space, size_t dataset_count, uint64_t seed,
                                           size_t efs_stride = 3, StopRule stop = StopRule{0.995, 500}) {
    SurrogateWorld world;
    world.efs_grid = thinned_efs_grid(space, efs_stride);
    for (size_t i = 0; i < dataset_count; ++i) {
        std::string name = "surrogate" + std::to_string(i);
        SurrogateDataset data = make_surrogate(seed + i);
        world.features[name] = data.features;
        for (int efc : space.efc_grid) {
            for (int m : space.m_grid) {
                for (const PerfRecord& rec : surrogate_collect(data, {efc, m}, world.efs_grid, stop)) {
                    world.pool.rows.push_back(PerfRow{name, rec});
                }
            }
        }
        world.datasets.emplace_back(std::move(name), std::move(data));
    }
    return world;
}

/// Mean absolute percentage error of the model against the surrogate truth
/// on a sample of grid configurations.
struct MapeResult {
    double recall = 0.0;
    double adcn = 0.0;
};

inline MapeResult qpp_mape(const QppModel& model, const SurrogateDataset& data, const DatasetFeatures& feats,
                           const ConfigSpace& space, uint64_t seed, size_t samples = 400) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<size_t> pe(0, space.efc_grid.size() - 1);
    std::uniform_int_distribution<size_t> pm(0, space.m_grid.size() - 1);
    std::uniform_int_distribution<size_t> ps(0, space.efs_grid.size() - 1);
    double rec_err = 0.0, adcn_err = 0.0;
    for (size_t i = 0; i < samples; ++i) {
        ParamConfig cfg{space.efc_grid[pe(rng)], space.m_grid[pm(rng)], space.efs_grid[ps(rng)]};
        PerfPoint truth = data.eval(cfg);
        auto pred = model.predict(cfg, feats);
        rec_err += std::abs(pred.recall - truth.recall) / std::max(truth.recall, 1e-3);
        adcn_err += std::abs(pred.adcn - truth.adcn) / std::max(truth.adcn, 1e-3);
    }
    return {rec_err / samples, adcn_err / samples};
}

}  // namespace vectune::testing
