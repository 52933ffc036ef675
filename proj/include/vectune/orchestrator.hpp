// SPDX-License-Identifier: Apache-2.0
// Copyright 2025 vectune contributors

#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vectune/collector.hpp"
#include "vectune/config_space.hpp"
#include "vectune/cpcs.hpp"
#include "vectune/dataio.hpp"
#include "vectune/features.hpp"
#include "vectune/hnsw.hpp"
#include "vectune/ood.hpp"
#include "vectune/pcr.hpp"
#include "vectune/qpp.hpp"

namespace vectune {

namespace fs = std::filesystem;

constexpr std::array<double, 9> kDefaultTargets = {0.85, 0.88, 0.90, 0.92, 0.94, 0.95, 0.96, 0.98, 0.99};
constexpr size_t kRecallK = 10;

/// Stop rule with min_efs snapped onto the given grid (first value >= 500).
inline StopRule default_stop_rule(const ConfigSpace& space) {
    StopRule stop;
    stop.min_efs = space.efs_grid.back();
    for (int efs : space.efs_grid) {
        if (efs >= 500) {
            stop.min_efs = efs;
            break;
        }
    }
    return stop;
}

struct DatasetEntry {
    std::string base_path;
    std::string query_path;
    std::string role = "new";  // "base" datasets feed pre-training
};

/// Workspace-backed state: registered datasets, extracted features, the
/// collected performance pool, model checkpoints, and the transfer ledger.
/// Single-writer; all artifacts live under one root directory.
class TunerRegistry {
public:
    explicit TunerRegistry(fs::path root, std::string grid = "full", uint64_t seed = 42)
        : root_(std::move(root)), grid_name_(std::move(grid)), seed_(seed) {
        for (const char* sub : {"", "groundtruth", "perf", "models", "reports", "indexes"}) {
            fs::create_directories(root_ / sub);
        }
        if (fs::exists(registry_path())) load_state();
        space_ = grid_name_ == "reduced" ? reduced_config_space() : full_config_space();
        load_features();
        load_pool();
        load_models();
    }

    const fs::path& root() const { return root_; }
    const ConfigSpace& space() const { return space_; }
    uint64_t seed() const { return seed_; }
    const std::map<std::string, DatasetEntry>& datasets() const { return datasets_; }
    const FeatureMap& features() const { return features_; }
    const TrainingPool& pool() const { return pool_; }
    const std::set<std::string>& transferred() const { return transferred_; }
    bool has_qpp() const { return qpp_.has_value(); }
    const QppModel& qpp() const { return require(qpp_, "QPP model"); }
    bool has_agent() const { return agent_.has_value(); }
    const Td3Agent& agent() const { return require(agent_, "PCR agent"); }

    void add_dataset(const std::string& name, const std::string& base_path, const std::string& query_path,
                     const std::string& role) {
        if (name.empty() || name.find(',') != std::string::npos) {
            throw std::invalid_argument("dataset name must be nonempty and comma-free");
        }
        datasets_[name] = DatasetEntry{base_path, query_path, role};
        save_state();
    }

    const DatasetEntry& dataset(const std::string& name) const {
        auto it = datasets_.find(name);
        if (it == datasets_.end()) throw std::runtime_error("unknown dataset: " + name);
        return it->second;
    }

    VectorSet load_base(const std::string& name) const { return load_vectors(dataset(name).base_path); }
    VectorSet load_queries(const std::string& name) const { return load_vectors(dataset(name).query_path); }

    /// Ground truth is computed once and cached as ivecs.
    NeighborTable ground_truth(const std::string& name, const VectorSet& base, const VectorSet& queries) {
        fs::path path = root_ / "groundtruth" / (name + ".ivecs");
        if (fs::exists(path)) {
            NeighborTable nt = load_neighbor_table(path.string());
            if (nt.query_count == queries.count && nt.k == kRecallK) return nt;
        }
        NeighborTable nt = compute_ground_truth(base, queries, kRecallK);
        save_ivecs(nt, path.string());
        return nt;
    }

    /// Features are extracted once per dataset and cached in features.json.
    const DatasetFeatures& features_for(const std::string& name, const VectorSet& base, const VectorSet& queries) {
        auto it = features_.find(name);
        if (it != features_.end()) return it->second;
        DatasetFeatures f = extract_features(base, queries, seed_);
        features_[name] = f;
        save_features();
        return features_[name];
    }

    bool has_features(const std::string& name) const { return features_.count(name) > 0; }

    /// Construction configs of `name` already present in the collection
    /// ledger; their indexes are never rebuilt.
    std::set<std::pair<int, int>> collected_constructions(const std::string& name) const {
        std::set<std::pair<int, int>> seen;
        for (const auto& row : pool_.rows) {
            if (row.dataset == name) seen.insert({row.record.config.efC, row.record.config.M});
        }
        return seen;
    }

    void append_rows(const std::string& name, const std::vector<PerfRow>& rows) {
        if (rows.empty()) return;
        fs::path path = root_ / "perf" / (name + ".csv");
        write_perf_csv(path.string(), rows, fs::exists(path));
        for (const auto& r : rows) pool_.rows.push_back(r);
    }

    void set_qpp(QppModel model) {
        qpp_ = std::move(model);
        save_qpp(*qpp_, (root_ / "models" / "qpp.ckpt").string(), (root_ / "models" / "qpp.norm.json").string());
    }

    void set_agent(Td3Agent agent) {
        agent_ = std::move(agent);
        agent_->save((root_ / "models" / "pcr").string());
    }

    void mark_transferred(const std::string& name) {
        transferred_.insert(name);
        save_state();
    }

    fs::path report_path(const std::string& name, double target, const std::string& ext) const {
        std::ostringstream os;
        os << name << "_r" << std::setprecision(4) << target << ext;
        return root_ / "reports" / os.str();
    }

private:
    template <typename T>
    static const T& require(const std::optional<T>& opt, const std::string& what) {
        if (!opt) throw std::runtime_error(what + " not available; run pretrain first");
        return *opt;
    }

    fs::path registry_path() const { return root_ / "registry.json"; }

    void save_state() const {
        nlohmann::json j;
        j["grid"] = grid_name_;
        j["seed"] = seed_;
        for (const auto& [name, e] : datasets_) {
            j["datasets"][name] = {{"base", e.base_path}, {"query", e.query_path}, {"role", e.role}};
        }
        j["transferred"] = transferred_;
        std::ofstream out(registry_path());
        if (!out) throw std::runtime_error("cannot write registry.json");
        out << j.dump(2) << '\n';
    }

    void load_state() {
        std::ifstream in(registry_path());
        nlohmann::json j = nlohmann::json::parse(in);
        grid_name_ = j.value("grid", grid_name_);
        seed_ = j.value("seed", seed_);
        if (j.contains("datasets")) {
            for (auto& [name, e] : j["datasets"].items()) {
                datasets_[name] = DatasetEntry{e.at("base"), e.at("query"), e.value("role", "new")};
            }
        }
        if (j.contains("transferred")) {
            for (const auto& n : j["transferred"]) transferred_.insert(n.get<std::string>());
        }
    }

    void save_features() const {
        nlohmann::json j;
        for (const auto& [name, f] : features_) j[name] = features_to_json(f, seed_);
        std::ofstream out(root_ / "features.json");
        out << j.dump(2) << '\n';
    }

    void load_features() {
        fs::path path = root_ / "features.json";
        if (!fs::exists(path)) return;
        std::ifstream in(path);
        nlohmann::json j = nlohmann::json::parse(in);
        for (auto& [name, body] : j.items()) features_[name] = features_from_json(body);
    }

    void load_pool() {
        fs::path dir = root_ / "perf";
        if (!fs::exists(dir)) return;
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.path().extension() == ".csv") files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            for (auto& row : load_perf_csv(f.string())) pool_.rows.push_back(std::move(row));
        }
    }

    void load_models() {
        fs::path net = root_ / "models" / "qpp.ckpt";
        fs::path norm = root_ / "models" / "qpp.norm.json";
        if (fs::exists(net) && fs::exists(norm)) qpp_ = load_qpp(net.string(), norm.string());
        fs::path agent_json = root_ / "models" / "pcr.json";
        if (fs::exists(agent_json)) agent_ = Td3Agent::load((root_ / "models" / "pcr").string());
    }

    fs::path root_;
    std::string grid_name_;
    uint64_t seed_;
    ConfigSpace space_;
    std::map<std::string, DatasetEntry> datasets_;
    FeatureMap features_;
    TrainingPool pool_;
    std::set<std::string> transferred_;
    std::optional<QppModel> qpp_;
    std::optional<Td3Agent> agent_;
};

struct PretrainOptions {
    TrainSpec qpp_spec = default_qpp_train_spec();
    Td3Params td3;
    int episodes = 1200;
    std::vector<double> targets{kDefaultTargets.begin(), kDefaultTargets.end()};
    unsigned jobs = 1;
};

/// Pre-training: per base dataset, extract features and collect the full
/// construction grid under the stop rule (resuming from the ledger), then
/// train the QPP model and the TD3 agent over all dataset/target pairs.
inline void pretrain_pipeline(TunerRegistry& registry, const PretrainOptions& opts = {}) {
    const ConfigSpace& space = registry.space();
    StopRule stop = default_stop_rule(space);

    std::vector<std::string> base_names;
    for (const auto& [name, entry] : registry.datasets()) {
        if (entry.role == "base") base_names.push_back(name);
    }
    if (base_names.empty()) throw std::runtime_error("pretrain: no base datasets registered");

    for (const auto& name : base_names) {
        VectorSet base = registry.load_base(name);
        VectorSet queries = registry.load_queries(name);
        base.validate();
        queries.validate();
        NeighborTable truth = registry.ground_truth(name, base, queries);
        registry.features_for(name, base, queries);

        auto done = registry.collected_constructions(name);
        std::vector<ConstructionConfig> todo;
        for (int efc : space.efc_grid) {
            for (int m : space.m_grid) {
                if (!done.count({efc, m})) todo.push_back(ConstructionConfig{efc, m});
            }
        }
        if (todo.empty()) continue;
        auto results = collect_many(base, queries, truth, todo, space.efs_grid, stop, registry.seed(), opts.jobs);
        std::vector<PerfRow> rows;
        for (const auto& recs : results) {
            for (const auto& rec : recs) rows.push_back(PerfRow{name, rec});
        }
        registry.append_rows(name, rows);
    }

    QppModel qpp = train_qpp(registry.pool(), registry.features(), space, opts.qpp_spec);
    registry.set_qpp(qpp);

    std::vector<TuningEnv> envs;
    for (const auto& name : base_names) {
        const DatasetFeatures& feats = registry.features().at(name);
        for (double target : opts.targets) {
            envs.emplace_back(space, qpp_oracle(registry.qpp(), feats), registry.qpp().norm, target);
        }
    }
    registry.set_agent(td3_pretrain(envs, opts.td3, opts.episodes));
}

struct StageTimes {
    double features_s = 0.0;
    double detection_s = 0.0;
    double transfer_s = 0.0;
    double recommend_s = 0.0;
    double post_process_s = 0.0;
    double total_s = 0.0;
};

struct TuneReport {
    std::string dataset;
    double target_recall = 0.0;
    ParamConfig config;            // final configuration (post-processed)
    bool feasible = false;         // measured recall reached the target
    double measured_recall = 0.0;
    double measured_qps = 0.0;
    double predicted_recall = 0.0;
    double predicted_adcn = 0.0;
    std::optional<SimilarityVerdict> initial_verdict;
    int cpcs_rounds = 0;
    std::vector<RoundLog> round_logs;
    uint64_t index_builds = 0;     // builds before post-processing
    uint64_t post_process_builds = 0;
    StageTimes times;
    std::vector<TraceRow> trace;
};

inline nlohmann::json report_to_json(const TuneReport& r) {
    nlohmann::json j{{"dataset", r.dataset},
                     {"target_recall", r.target_recall},
                     {"config", {{"efC", r.config.efC}, {"M", r.config.M}, {"efS", r.config.efS}}},
                     {"feasible", r.feasible},
                     {"measured_recall", r.measured_recall},
                     {"measured_qps", r.measured_qps},
                     {"predicted_recall", r.predicted_recall},
                     {"predicted_adcn", r.predicted_adcn},
                     {"cpcs_rounds", r.cpcs_rounds},
                     {"index_builds", r.index_builds},
                     {"post_process_builds", r.post_process_builds},
                     {"times",
                      {{"features_s", r.times.features_s},
                       {"detection_s", r.times.detection_s},
                       {"transfer_s", r.times.transfer_s},
                       {"recommend_s", r.times.recommend_s},
                       {"post_process_s", r.times.post_process_s},
                       {"total_s", r.times.total_s}}}};
    if (r.initial_verdict) j["initial_verdict"] = verdict_to_json(*r.initial_verdict);
    for (const auto& log : r.round_logs) j["rounds"].push_back(round_log_to_json(log));
    return j;
}

/// Online tuning: features -> similarity detection -> (transfer if
/// dissimilar) -> agent fine-tuning -> live post-processing. Transfer is
/// cached per dataset, so later targets skip straight to fine-tuning.
inline TuneReport tune_pipeline(TunerRegistry& registry, const std::string& name, double target_recall,
                                int max_rounds = 250) {
    if (target_recall <= 0.0 || target_recall >= 1.0) {
        throw std::invalid_argument("target recall must lie in (0,1)");
    }
    using clock = std::chrono::steady_clock;
    auto seconds_since = [](clock::time_point t0) { return std::chrono::duration<double>(clock::now() - t0).count(); };
    auto t_total = clock::now();

    const ConfigSpace& space = registry.space();
    TuneReport report;
    report.dataset = name;
    report.target_recall = target_recall;
    uint64_t builds_at_start = index_build_counter().load();

    auto t0 = clock::now();
    VectorSet base = registry.load_base(name);
    VectorSet queries = registry.load_queries(name);
    NeighborTable truth = registry.ground_truth(name, base, queries);
    DatasetFeatures feats = registry.features_for(name, base, queries);
    report.times.features_s = seconds_since(t0);

    QppModel qpp = registry.qpp();

    t0 = clock::now();
    bool need_transfer = false;
    if (!registry.transferred().count(name)) {
        Eigen::MatrixXd base_inputs = pool_inputs(registry.pool(), registry.features(), qpp.norm);
        Eigen::MatrixXd new_inputs = candidate_inputs(feats, space, qpp.norm, kDetectRowCap, registry.seed());
        SimilarityVerdict verdict = detect(base_inputs, new_inputs, qpp);
        report.initial_verdict = verdict;
        need_transfer = !verdict.similar;
    }
    report.times.detection_s = seconds_since(t0);

    t0 = clock::now();
    if (need_transfer) {
        StopRule stop = default_stop_rule(space);
        TrainingPool pool = registry.pool();
        FeatureMap features = registry.features();
        std::vector<PerfRow> pending;
        CpcsOptions opts;
        opts.on_round = [&](const RoundLog&, const std::vector<PerfRow>& rows) {
            registry.append_rows(name, rows);
        };
        GroupCollector collector = [&](const ConstructionConfig& c) {
            return collect_for_construction(base, queries, truth, c, space.efs_grid, stop, registry.seed());
        };
        CpcsOutcome outcome = run_cpcs(name, feats, pool, features, qpp, space, collector, opts);
        report.cpcs_rounds = outcome.rounds_used;
        report.round_logs = outcome.rounds;
        qpp = outcome.model;
        registry.set_qpp(qpp);
    }
    if (!registry.transferred().count(name)) registry.mark_transferred(name);
    report.times.transfer_s = seconds_since(t0);

    t0 = clock::now();
    Td3Agent agent = registry.agent();  // private copy per tuning run
    TuningEnv env(space, qpp_oracle(qpp, feats), qpp.norm, target_recall);
    RecommendResult rec = recommend(agent, env, max_rounds, registry.seed());
    report.predicted_recall = rec.predicted.recall;
    report.predicted_adcn = rec.predicted.adcn;
    report.trace = std::move(rec.trace);
    report.times.recommend_s = seconds_since(t0);
    report.index_builds = index_build_counter().load() - builds_at_start;

    t0 = clock::now();
    uint64_t builds_before_pp = index_build_counter().load();
    IndexParams params{rec.config.efC, rec.config.M, detail::mix_seed(registry.seed(), rec.config.efC, rec.config.M)};
    HnswIndex index = HnswIndex::build(base, params);
    try {
        report.config = post_process_on_index(index, rec.config, target_recall, queries, truth, space);
        report.feasible = true;
    } catch (const InfeasibleTargetError& err) {
        report.config = err.best_config;
        report.feasible = false;
    }
    report.measured_recall = measured_recall(index, queries, truth, report.config.efS);
    report.measured_qps = detail::measure_qps(index, queries, truth.k, report.config.efS);
    report.post_process_builds = index_build_counter().load() - builds_before_pp;
    report.times.post_process_s = seconds_since(t0);

    report.times.total_s = seconds_since(t_total);

    write_trace_csv(registry.report_path(name, target_recall, ".trace.csv").string(), report.trace);
    {
        std::ofstream out(registry.report_path(name, target_recall, ".json"));
        out << report_to_json(report).dump(2) << '\n';
    }
    {
        std::ofstream out(registry.report_path(name, target_recall, ".txt"));
        out << "dataset:          " << report.dataset << '\n'
            << "target recall:    " << report.target_recall << '\n'
            << "final config:     efC=" << report.config.efC << " M=" << report.config.M
            << " efS=" << report.config.efS << '\n'
            << "measured recall:  " << report.measured_recall << '\n'
            << "measured QPS:     " << report.measured_qps << '\n'
            << "feasible:         " << (report.feasible ? "yes" : "no") << '\n'
            << "cpcs rounds:      " << report.cpcs_rounds << '\n'
            << "index builds:     " << report.index_builds << " (+" << report.post_process_builds
            << " post-process)\n"
            << "total seconds:    " << report.times.total_s << '\n';
    }
    return report;
}

}  // namespace vectune
