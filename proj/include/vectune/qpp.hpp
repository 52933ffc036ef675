// SPDX-License-Identifier: Apache-2.0
// Copyright 2025 vectune contributors

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "vectune/collector.hpp"
#include "vectune/config_space.hpp"
#include "vectune/densenet.hpp"
#include "vectune/features.hpp"

namespace vectune {

constexpr int kQppInputDim = 15;  // efC, M, efS + the 12 dataset features
constexpr int kQppHidden1 = 128, kQppHidden2 = 128, kQppHidden3 = 64;

enum class Transform { MinMax, Log10MinMax };

/// Per-feature affine scaling, optionally after log10. lo/hi live in
/// transformed space and are frozen when the normalizer is fitted.
struct FeatureScale {
    Transform transform = Transform::MinMax;
    double lo = 0.0;
    double hi = 1.0;

    double to_unit(double raw) const {
        double t = transform == Transform::Log10MinMax ? std::log10(raw) : raw;
        double u = (t - lo) / (hi - lo);
        return std::clamp(u, 0.0, 1.0);
    }

    double from_unit(double u) const {
        double t = lo + u * (hi - lo);
        return transform == Transform::Log10MinMax ? std::pow(10.0, t) : t;
    }
};

/// Input feature order: efC, M, efS, then the 12 features of
/// DatasetFeatures::as_array(). Parameters spanning orders of magnitude
/// (efC, efS, C_B, C_D and the ADCN target) are log10-scaled first.
struct Normalizer {
    std::array<FeatureScale, kQppInputDim> input;
    FeatureScale adcn_target{Transform::Log10MinMax, 0.0, 1.0};

    Eigen::VectorXd normalize_row(const ParamConfig& config, const DatasetFeatures& feats) const {
        Eigen::VectorXd x(kQppInputDim);
        x[0] = input[0].to_unit(config.efC);
        x[1] = input[1].to_unit(config.M);
        x[2] = input[2].to_unit(config.efS);
        auto df = feats.as_array();
        for (size_t i = 0; i < df.size(); ++i) x[3 + i] = input[3 + i].to_unit(df[i]);
        return x;
    }

    double normalize_adcn(double adcn) const { return adcn_target.to_unit(adcn); }
    double denormalize_adcn(double unit) const {
        double t = adcn_target.lo + unit * (adcn_target.hi - adcn_target.lo);
        return std::pow(10.0, t);  // deliberately unclamped so predictions stay smooth
    }
};

namespace detail {

inline void widen(double& lo, double& hi) {
    double range = hi - lo;
    double pad = range > 1e-12 ? 0.1 * range : std::max(1e-3, 0.1 * std::max(1.0, std::abs(lo)));
    lo -= pad;
    hi += pad;
}

inline FeatureScale fit_scale(Transform t, const std::vector<double>& values, bool headroom) {
    if (values.empty()) throw std::invalid_argument("fit_scale: no values");
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (double v : values) {
        double x = t == Transform::Log10MinMax ? std::log10(v) : v;
        if (!std::isfinite(x)) throw std::invalid_argument("fit_scale: non-finite transformed value");
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    if (headroom || hi - lo < 1e-12) widen(lo, hi);
    return FeatureScale{t, lo, hi};
}

}  // namespace detail

/// One normalized training example for the performance predictor.
struct QppSample {
    Eigen::VectorXd input;   // 15 values in [0,1]
    Eigen::Vector2d target;  // recall raw, ADCN log-min-max scaled
    std::string provenance;
};

using FeatureMap = std::map<std::string, DatasetFeatures>;

/// Measured performance rows, the raw material for QPP training.
struct TrainingPool {
    std::vector<PerfRow> rows;
};

/// Freezes scaling bounds: config axes from the grid bounds, dataset
/// features and the ADCN target from the observed data with 10% headroom.
inline Normalizer fit_normalizer(const ConfigSpace& space, const TrainingPool& pool, const FeatureMap& features) {
    if (pool.rows.empty()) throw std::invalid_argument("fit_normalizer: empty pool");
    Normalizer norm;
    norm.input[0] = FeatureScale{Transform::Log10MinMax, std::log10(double(space.efc_grid.front())),
                                 std::log10(double(space.efc_grid.back()))};
    norm.input[1] = FeatureScale{Transform::MinMax, double(space.m_grid.front()), double(space.m_grid.back())};
    norm.input[2] = FeatureScale{Transform::Log10MinMax, std::log10(double(space.efs_grid.front())),
                                 std::log10(double(space.efs_grid.back()))};

    static constexpr std::array<Transform, 12> kDfTransforms = {
        Transform::Log10MinMax, Transform::Log10MinMax, Transform::MinMax, Transform::MinMax,
        Transform::MinMax,      Transform::MinMax,      Transform::MinMax, Transform::MinMax,
        Transform::MinMax,      Transform::MinMax,      Transform::MinMax, Transform::MinMax};

    for (size_t i = 0; i < 12; ++i) {
        std::vector<double> vals;
        for (const auto& [name, f] : features) vals.push_back(f.as_array()[i]);
        norm.input[3 + i] = detail::fit_scale(kDfTransforms[i], vals, true);
    }

    std::vector<double> adcns;
    adcns.reserve(pool.rows.size());
    for (const auto& row : pool.rows) {
        if (row.record.adcn <= 0) throw std::invalid_argument("fit_normalizer: non-positive adcn");
        adcns.push_back(row.record.adcn);
    }
    norm.adcn_target = detail::fit_scale(Transform::Log10MinMax, adcns, true);
    return norm;
}

/// One sample per PerfRecord; inputs and the ADCN target normalized,
/// recall kept raw.
inline std::vector<QppSample> make_training_matrix(const TrainingPool& pool, const FeatureMap& features,
                                                   const Normalizer& norm) {
    std::vector<QppSample> samples;
    samples.reserve(pool.rows.size());
    for (const auto& row : pool.rows) {
        auto it = features.find(row.dataset);
        if (it == features.end()) {
            throw std::runtime_error("make_training_matrix: missing features for dataset " + row.dataset);
        }
        QppSample s;
        s.input = norm.normalize_row(row.record.config, it->second);
        s.target = Eigen::Vector2d(row.record.recall, norm.normalize_adcn(row.record.adcn));
        s.provenance = row.dataset;
        samples.push_back(std::move(s));
    }
    return samples;
}

/// Query performance predictor: (config, dataset features) -> (recall, ADCN),
/// with penultimate-layer embeddings for similarity detection.
struct QppModel {
    DenseNet net;
    Normalizer norm;

    struct Prediction {
        double recall = 0.0;
        double adcn = 0.0;
    };

    Prediction predict(const ParamConfig& config, const DatasetFeatures& feats) const {
        auto out = net.forward(norm.normalize_row(config, feats)).output;
        return {std::clamp(out[0], 0.0, 1.0), norm.denormalize_adcn(out[1])};
    }

    Eigen::VectorXd embed(const ParamConfig& config, const DatasetFeatures& feats) const {
        return net.forward(norm.normalize_row(config, feats)).penultimate;
    }

    /// Penultimate activations for pre-normalized rows (columns = samples).
    Eigen::MatrixXd embed_normalized(const Eigen::MatrixXd& X) const {
        return net.forward_batch(X).post[3];
    }
};

inline DenseNet make_qpp_net(uint64_t seed) {
    return DenseNet({kQppInputDim, kQppHidden1, kQppHidden2, kQppHidden3, 2}, Activation::LeakyRelu,
                    {Activation::Sigmoid, Activation::Identity}, seed);
}

inline TrainSpec default_qpp_train_spec() {
    TrainSpec spec;
    spec.learning_rate = 1e-3;
    spec.batch_size = 64;
    spec.epochs = 400;
    return spec;
}

inline Eigen::MatrixXd sample_inputs(const std::vector<QppSample>& samples) {
    Eigen::MatrixXd X(kQppInputDim, samples.size());
    for (size_t i = 0; i < samples.size(); ++i) X.col(i) = samples[i].input;
    return X;
}

inline Eigen::MatrixXd sample_targets(const std::vector<QppSample>& samples) {
    Eigen::MatrixXd Y(2, samples.size());
    for (size_t i = 0; i < samples.size(); ++i) Y.col(i) = samples[i].target;
    return Y;
}

/// Trains the predictor to MSE convergence. When `warm` is given, training
/// restarts from its weights and keeps its frozen normalizer.
inline QppModel train_qpp(const TrainingPool& pool, const FeatureMap& features, const ConfigSpace& space,
                          const TrainSpec& spec = default_qpp_train_spec(),
                          const QppModel* warm = nullptr) {
    if (pool.rows.empty()) throw std::invalid_argument("train_qpp: empty pool");
    QppModel model;
    model.norm = warm ? warm->norm : fit_normalizer(space, pool, features);
    model.net = warm ? warm->net : make_qpp_net(spec.seed);

    auto samples = make_training_matrix(pool, features, model.norm);
    fit(model.net, sample_inputs(samples), sample_targets(samples), spec);
    return model;
}

// --- checkpointing: densenet file + JSON normalizer sidecar -----------------

inline nlohmann::json scale_to_json(const FeatureScale& s) {
    return {{"transform", s.transform == Transform::Log10MinMax ? "log10_minmax" : "minmax"},
            {"lo", s.lo},
            {"hi", s.hi}};
}

inline FeatureScale scale_from_json(const nlohmann::json& j) {
    FeatureScale s;
    std::string t = j.at("transform");
    s.transform = t == "log10_minmax" ? Transform::Log10MinMax : Transform::MinMax;
    s.lo = j.at("lo");
    s.hi = j.at("hi");
    return s;
}

inline void save_qpp(const QppModel& model, const std::string& net_path, const std::string& norm_path) {
    model.net.save_checkpoint(net_path);
    nlohmann::json j;
    for (const auto& s : model.norm.input) j["input"].push_back(scale_to_json(s));
    j["adcn_target"] = scale_to_json(model.norm.adcn_target);
    std::ofstream out(norm_path);
    if (!out) throw std::runtime_error("cannot open " + norm_path);
    out << j.dump(2) << '\n';
}

inline QppModel load_qpp(const std::string& net_path, const std::string& norm_path) {
    QppModel model;
    model.net = DenseNet::load_checkpoint_expect(net_path, {kQppInputDim, kQppHidden1, kQppHidden2, kQppHidden3, 2});
    std::ifstream in(norm_path);
    if (!in) throw std::runtime_error("cannot open " + norm_path);
    nlohmann::json j = nlohmann::json::parse(in);
    auto arr = j.at("input");
    if (arr.size() != kQppInputDim) throw std::runtime_error("bad normalizer sidecar: " + norm_path);
    for (size_t i = 0; i < kQppInputDim; ++i) model.norm.input[i] = scale_from_json(arr[i]);
    model.norm.adcn_target = scale_from_json(j.at("adcn_target"));
    return model;
}

}  // namespace vectune
