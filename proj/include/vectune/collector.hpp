// SPDX-License-Identifier: Apache-2.0
// Copyright 2025 vectune contributors

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include "vectune/dataio.hpp"
#include "vectune/hnsw.hpp"

namespace vectune {

/// One point on the (efC, M, efS) grid.
struct ParamConfig {
    int efC = 20;
    int M = 4;
    int efS = 10;

    bool operator==(const ParamConfig&) const = default;
};

struct ConstructionConfig {
    int efC = 20;
    int M = 4;

    bool operator==(const ConstructionConfig&) const = default;
};

/// Measured query performance of one configuration on one dataset.
/// qps is wall-clock and report-only; models consume recall and adcn.
struct PerfRecord {
    ParamConfig config;
    double recall = 0.0;
    double adcn = 0.0;
    double qps = 0.0;
};

/// The efS sweep stops at the first value where both the recall threshold
/// and the minimum efS are reached.
struct StopRule {
    double recall_threshold = 0.995;
    int min_efs = 500;
};

/// |returned ∩ truth| / k, intersected by id.
inline double measure_recall(const std::vector<int32_t>& returned, const int32_t* truth, size_t k) {
    std::unordered_set<int32_t> truth_set(truth, truth + k);
    size_t hits = 0;
    for (int32_t id : returned) {
        if (truth_set.count(id)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(k);
}

inline double adcn(uint64_t total_dcn, size_t query_count) {
    if (query_count == 0) throw std::invalid_argument("adcn: query_count must be >= 1");
    return static_cast<double>(total_dcn) / static_cast<double>(query_count);
}

namespace detail {

/// Runs all queries once, returning mean recall and total dcn.
inline std::pair<double, uint64_t> run_queries(const HnswIndex& index, const VectorSet& queries,
                                               const NeighborTable& truth, size_t efs) {
    const size_t k = truth.k;
    double recall_sum = 0.0;
    uint64_t total_dcn = 0;
    for (size_t q = 0; q < queries.count; ++q) {
        SearchResult sr = index.search(queries.row(q), k, std::max(efs, k));
        recall_sum += measure_recall(sr.ids, truth.row(q), k);
        total_dcn += sr.dcn;
    }
    return {recall_sum / static_cast<double>(queries.count), total_dcn};
}

/// Wall-clock QPS, repeating the query loop until enough time has elapsed
/// for a stable estimate.
inline double measure_qps(const HnswIndex& index, const VectorSet& queries, size_t k, size_t efs) {
    using clock = std::chrono::steady_clock;
    const double min_seconds = 0.02;
    size_t reps = 0;
    auto start = clock::now();
    double elapsed = 0.0;
    do {
        for (size_t q = 0; q < queries.count; ++q) {
            SearchResult sr = index.search(queries.row(q), k, std::max(efs, k));
            (void)sr;
        }
        ++reps;
        elapsed = std::chrono::duration<double>(clock::now() - start).count();
    } while (elapsed < min_seconds && reps < 1000);
    if (elapsed <= 0.0) elapsed = 1e-9;
    return static_cast<double>(reps * queries.count) / elapsed;
}

inline uint64_t mix_seed(uint64_t seed, int efc, int m) {
    uint64_t h = seed ^ (0x9e3779b97f4a7c15ULL + (static_cast<uint64_t>(efc) << 32) + static_cast<uint64_t>(m));
    h ^= h >> 30;
    h *= 0xbf58476d1ce4e5b9ULL;
    h ^= h >> 27;
    h *= 0x94d049bb133111ebULL;
    h ^= h >> 31;
    return h;
}

}  // namespace detail

/// Build one index for (efC, M) and sweep efs_grid in ascending order,
/// recording recall/ADCN/QPS per efS. The sweep terminates at the first efS
/// satisfying the StopRule; records cover a prefix of the grid.
/// Query execution is single-threaded so dcn totals are reproducible.
inline std::vector<PerfRecord> collect_for_construction(const VectorSet& base, const VectorSet& queries,
                                                        const NeighborTable& truth, ConstructionConfig cparams,
                                                        const std::vector<int>& efs_grid, const StopRule& stop,
                                                        uint64_t seed = 42) {
    if (!std::is_sorted(efs_grid.begin(), efs_grid.end())) {
        throw std::invalid_argument("collect: efs_grid must be ascending");
    }
    if (truth.query_count != queries.count) throw std::invalid_argument("collect: truth/query mismatch");

    IndexParams params{cparams.efC, cparams.M, detail::mix_seed(seed, cparams.efC, cparams.M)};
    HnswIndex index = HnswIndex::build(base, params);

    std::vector<PerfRecord> records;
    for (int efs : efs_grid) {
        auto [recall, total_dcn] = detail::run_queries(index, queries, truth, static_cast<size_t>(efs));
        PerfRecord rec;
        rec.config = ParamConfig{cparams.efC, cparams.M, efs};
        rec.recall = recall;
        rec.adcn = adcn(total_dcn, queries.count);
        rec.qps = detail::measure_qps(index, queries, truth.k, static_cast<size_t>(efs));
        records.push_back(rec);
        if (recall >= stop.recall_threshold && efs >= stop.min_efs) break;
    }
    return records;
}

/// Collects several construction configurations, optionally in parallel.
/// Record order matches the order of `configs`.
inline std::vector<std::vector<PerfRecord>> collect_many(const VectorSet& base, const VectorSet& queries,
                                                         const NeighborTable& truth,
                                                         const std::vector<ConstructionConfig>& configs,
                                                         const std::vector<int>& efs_grid, const StopRule& stop,
                                                         uint64_t seed = 42, unsigned jobs = 1) {
    std::vector<std::vector<PerfRecord>> out(configs.size());
    if (jobs <= 1 || configs.size() <= 1) {
        for (size_t i = 0; i < configs.size(); ++i) {
            out[i] = collect_for_construction(base, queries, truth, configs[i], efs_grid, stop, seed);
        }
        return out;
    }
    std::atomic<size_t> next{0};
    auto worker = [&] {
        while (true) {
            size_t i = next.fetch_add(1);
            if (i >= configs.size()) break;
            out[i] = collect_for_construction(base, queries, truth, configs[i], efs_grid, stop, seed);
        }
    };
    std::vector<std::thread> pool;
    unsigned n = std::min<unsigned>(jobs, static_cast<unsigned>(configs.size()));
    for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    return out;
}

// --- CSV persistence -------------------------------------------------------
// Schema: dataset,efC,M,efS,recall,adcn,qps (UTF-8, '.' decimal separator).

struct PerfRow {
    std::string dataset;
    PerfRecord record;
};

inline void write_perf_csv(const std::string& path, const std::vector<PerfRow>& rows, bool append = false) {
    std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path);
    if (!append) out << "dataset,efC,M,efS,recall,adcn,qps\n";
    out.precision(17);
    for (const auto& row : rows) {
        const auto& r = row.record;
        out << row.dataset << ',' << r.config.efC << ',' << r.config.M << ',' << r.config.efS << ',' << r.recall
            << ',' << r.adcn << ',' << r.qps << '\n';
    }
    if (!out) throw std::runtime_error("I/O error writing " + path);
}

inline std::vector<PerfRow> load_perf_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty CSV: " + path);
    if (line != "dataset,efC,M,efS,recall,adcn,qps") throw std::runtime_error("bad CSV header in " + path);
    std::vector<PerfRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        PerfRow row;
        std::string field;
        std::getline(ss, row.dataset, ',');
        std::getline(ss, field, ',');
        row.record.config.efC = std::stoi(field);
        std::getline(ss, field, ',');
        row.record.config.M = std::stoi(field);
        std::getline(ss, field, ',');
        row.record.config.efS = std::stoi(field);
        std::getline(ss, field, ',');
        row.record.recall = std::stod(field);
        std::getline(ss, field, ',');
        row.record.adcn = std::stod(field);
        std::getline(ss, field, ',');
        row.record.qps = std::stod(field);
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace vectune
