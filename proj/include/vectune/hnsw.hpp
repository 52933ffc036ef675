// SPDX-License-Identifier: Apache-2.0
// Copyright 2025 vectune contributors

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <queue>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "vectune/dataio.hpp"

namespace vectune {

struct IndexParams {
    int efC = 200;
    int M = 16;
    uint64_t seed = 42;

    void validate() const {
        if (M < 4 || M > 100) throw std::invalid_argument("IndexParams: M out of [4,100]");
        if (efC < 20 || efC > 800) throw std::invalid_argument("IndexParams: efC out of [20,800]");
        if (efC < M) throw std::invalid_argument("IndexParams: efC must be >= M");
    }
};

/// Search output: result ids ordered by ascending distance, plus the exact
/// number of base-vector distance evaluations spent on this query.
struct SearchResult {
    std::vector<int32_t> ids;
    uint64_t dcn = 0;
};

/// Global count of index builds, used by tests and the tuning pipelines to
/// verify construction budgets.
inline std::atomic<uint64_t>& index_build_counter() {
    static std::atomic<uint64_t> counter{0};
    return counter;
}

/// Keep a candidate only while it is closer to the query node than to every
/// already-kept neighbor (standard HNSW pruning); if fewer than M survive,
/// fill with the nearest pruned candidates.
/// `candidates` must be sorted by ascending distance to the query node.
template <typename DistFn>
std::vector<uint32_t> select_neighbors_heuristic(const std::vector<std::pair<double, uint32_t>>& candidates,
                                                 size_t M, DistFn&& between) {
    std::vector<uint32_t> selected;
    std::vector<uint32_t> pruned;
    for (const auto& [dist_q, cand] : candidates) {
        if (selected.size() >= M) break;
        bool keep = true;
        for (uint32_t s : selected) {
            if (between(cand, s) < dist_q) {
                keep = false;
                break;
            }
        }
        if (keep) {
            selected.push_back(cand);
        } else {
            pruned.push_back(cand);
        }
    }
    for (uint32_t c : pruned) {
        if (selected.size() >= M) break;
        selected.push_back(c);
    }
    return selected;
}

/// Hierarchical navigable small world graph over an externally owned
/// VectorSet. Immutable after build; searches are concurrency-safe and
/// count every distance evaluation they perform.
class HnswIndex {
public:
    HnswIndex() = default;

    static HnswIndex build(const VectorSet& base, const IndexParams& params) {
        params.validate();
        if (base.count == 0) throw std::invalid_argument("build_index: empty base");
        index_build_counter().fetch_add(1, std::memory_order_relaxed);

        HnswIndex index;
        index.base_ = &base;
        index.params_ = params;
        index.node_count_ = base.count;
        index.links_.resize(base.count);
        index.levels_.resize(base.count);

        std::mt19937_64 rng(params.seed);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        const double mult = 1.0 / std::log(static_cast<double>(params.M));

        std::vector<uint32_t> stamp(base.count, 0);
        uint32_t epoch = 0;
        for (uint32_t node = 0; node < base.count; ++node) {
            double u = 1.0 - unit(rng);  // (0, 1]
            int level = static_cast<int>(std::floor(-std::log(u) * mult));
            index.levels_[node] = level;
            index.links_[node].resize(level + 1);
            index.insert(node, level, stamp, epoch);
        }
        return index;
    }

    /// Beam search with candidate list size efS; returns the k nearest of the
    /// final candidate set by ascending distance (ties by ascending id).
    SearchResult search(const float* query, size_t k, size_t efS) const {
        if (efS < k) throw std::invalid_argument("search: efS < k");
        SearchResult res;
        if (node_count_ == 0) return res;

        std::vector<uint32_t> stamp(node_count_, 0);
        uint32_t epoch = 0;
        const size_t dim = base_->dim;

        uint32_t cur = entry_point_;
        double cur_dist = squared_l2(query, base_->row(cur), dim);
        ++res.dcn;

        for (int level = max_level_; level > 0; --level) {
            ++epoch;
            stamp[cur] = epoch;
            bool changed = true;
            while (changed) {
                changed = false;
                for (uint32_t nb : links_[cur][level]) {
                    if (stamp[nb] == epoch) continue;
                    stamp[nb] = epoch;
                    double d = squared_l2(query, base_->row(nb), dim);
                    ++res.dcn;
                    if (d < cur_dist) {
                        cur = nb;
                        cur_dist = d;
                        changed = true;
                    }
                }
            }
        }

        ++epoch;
        auto top = search_layer(query, cur, cur_dist, efS, 0, stamp, epoch, &res.dcn);
        std::sort(top.begin(), top.end());
        size_t n = std::min(k, top.size());
        res.ids.reserve(n);
        for (size_t i = 0; i < n; ++i) res.ids.push_back(static_cast<int32_t>(top[i].second));
        return res;
    }

    size_t node_count() const { return node_count_; }
    size_t dim() const { return base_ ? base_->dim : 0; }
    const IndexParams& params() const { return params_; }
    uint32_t entry_point() const { return entry_point_; }
    int max_level() const { return max_level_; }
    int node_level(uint32_t node) const { return levels_[node]; }
    const std::vector<uint32_t>& neighbors(uint32_t node, int level) const { return links_[node][level]; }

    /// Sum of node occurrences over all layers (every node occupies levels
    /// 0..levels_[node]).
    size_t occurrence_count() const {
        size_t total = 0;
        for (int lv : levels_) total += static_cast<size_t>(lv) + 1;
        return total;
    }

    bool level0_connected() const {
        if (node_count_ == 0) return true;
        std::vector<char> seen(node_count_, 0);
        std::vector<uint32_t> stack{entry_point_};
        seen[entry_point_] = 1;
        size_t visited = 1;
        while (!stack.empty()) {
            uint32_t n = stack.back();
            stack.pop_back();
            for (uint32_t nb : links_[n][0]) {
                if (!seen[nb]) {
                    seen[nb] = 1;
                    ++visited;
                    stack.push_back(nb);
                }
            }
        }
        return visited == node_count_;
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open " + path);
        const char magic[8] = {'V', 'T', 'H', 'N', 'S', 'W', '0', '1'};
        out.write(magic, 8);
        auto w32 = [&](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
        auto w64 = [&](uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); };
        w64(static_cast<uint64_t>(node_count_));
        w64(static_cast<uint64_t>(base_->dim));
        w32(static_cast<uint32_t>(params_.efC));
        w32(static_cast<uint32_t>(params_.M));
        w64(params_.seed);
        w32(entry_point_);
        w32(static_cast<uint32_t>(max_level_));
        for (size_t n = 0; n < node_count_; ++n) {
            w32(static_cast<uint32_t>(levels_[n]));
            for (const auto& lvl : links_[n]) {
                w32(static_cast<uint32_t>(lvl.size()));
                out.write(reinterpret_cast<const char*>(lvl.data()), 4 * lvl.size());
            }
        }
        if (!out) throw std::runtime_error("I/O error writing " + path);
    }

    static HnswIndex load(const std::string& path, const VectorSet& base) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open " + path);
        char magic[8];
        in.read(magic, 8);
        if (!in || std::string(magic, 8) != "VTHNSW01") throw std::runtime_error("bad index file: " + path);
        auto r32 = [&]() {
            uint32_t v;
            in.read(reinterpret_cast<char*>(&v), 4);
            return v;
        };
        auto r64 = [&]() {
            uint64_t v;
            in.read(reinterpret_cast<char*>(&v), 8);
            return v;
        };
        HnswIndex index;
        index.base_ = &base;
        index.node_count_ = r64();
        uint64_t dim = r64();
        index.params_.efC = static_cast<int>(r32());
        index.params_.M = static_cast<int>(r32());
        index.params_.seed = r64();
        index.entry_point_ = r32();
        index.max_level_ = static_cast<int>(r32());
        if (index.node_count_ != base.count || dim != base.dim) {
            throw std::runtime_error("index file does not match the supplied base vectors");
        }
        index.levels_.resize(index.node_count_);
        index.links_.resize(index.node_count_);
        for (size_t n = 0; n < index.node_count_; ++n) {
            index.levels_[n] = static_cast<int>(r32());
            index.links_[n].resize(index.levels_[n] + 1);
            for (auto& lvl : index.links_[n]) {
                lvl.resize(r32());
                in.read(reinterpret_cast<char*>(lvl.data()), 4 * lvl.size());
            }
        }
        if (!in) throw std::runtime_error("truncated index file: " + path);
        return index;
    }

private:
    size_t max_degree(int level) const {
        return level == 0 ? 2 * static_cast<size_t>(params_.M) : static_cast<size_t>(params_.M);
    }

    double dist(uint32_t a, uint32_t b) const { return squared_l2(base_->row(a), base_->row(b), base_->dim); }

    /// Beam search on one layer. Returns (distance, id) pairs, unordered
    /// beyond the heap property. `seed_dist` must be the distance of `seed`,
    /// already evaluated and counted by the caller.
    std::vector<std::pair<double, uint32_t>> search_layer(const float* query, uint32_t seed, double seed_dist,
                                                          size_t ef, int level, std::vector<uint32_t>& stamp,
                                                          uint32_t epoch, uint64_t* dcn) const {
        using Entry = std::pair<double, uint32_t>;
        std::priority_queue<Entry, std::vector<Entry>, std::greater<>> frontier;  // nearest first
        std::priority_queue<Entry> best;                                          // farthest on top
        stamp[seed] = epoch;
        frontier.emplace(seed_dist, seed);
        best.emplace(seed_dist, seed);

        while (!frontier.empty()) {
            auto [d, node] = frontier.top();
            if (d > best.top().first && best.size() >= ef) break;
            frontier.pop();
            for (uint32_t nb : links_[node][level]) {
                if (stamp[nb] == epoch) continue;
                stamp[nb] = epoch;
                double nd = squared_l2(query, base_->row(nb), base_->dim);
                if (dcn) ++(*dcn);
                if (best.size() < ef || nd < best.top().first) {
                    frontier.emplace(nd, nb);
                    best.emplace(nd, nb);
                    if (best.size() > ef) best.pop();
                }
            }
        }
        std::vector<Entry> out;
        out.reserve(best.size());
        while (!best.empty()) {
            out.push_back(best.top());
            best.pop();
        }
        return out;
    }

    void insert(uint32_t node, int level, std::vector<uint32_t>& stamp, uint32_t& epoch) {
        if (node == 0) {
            entry_point_ = 0;
            max_level_ = level;
            return;
        }
        const float* nv = base_->row(node);

        uint32_t cur = entry_point_;
        double cur_dist = squared_l2(nv, base_->row(cur), base_->dim);
        for (int lv = max_level_; lv > level; --lv) {
            ++epoch;
            stamp[cur] = epoch;
            bool changed = true;
            while (changed) {
                changed = false;
                for (uint32_t nb : links_[cur][lv]) {
                    if (stamp[nb] == epoch) continue;
                    stamp[nb] = epoch;
                    double d = squared_l2(nv, base_->row(nb), base_->dim);
                    if (d < cur_dist) {
                        cur = nb;
                        cur_dist = d;
                        changed = true;
                    }
                }
            }
        }

        for (int lv = std::min(level, max_level_); lv >= 0; --lv) {
            ++epoch;
            auto found = search_layer(nv, cur, cur_dist, static_cast<size_t>(params_.efC), lv, stamp, epoch, nullptr);
            std::sort(found.begin(), found.end());
            auto selected =
                select_neighbors_heuristic(found, params_.M, [&](uint32_t a, uint32_t b) { return dist(a, b); });

            links_[node][lv] = selected;
            for (uint32_t nb : selected) {
                auto& back = links_[nb][lv];
                back.push_back(node);
                if (back.size() > max_degree(lv)) shrink(nb, lv);
            }
            if (!found.empty()) {
                cur = found.front().second;
                cur_dist = found.front().first;
            }
        }

        if (level > max_level_) {
            max_level_ = level;
            entry_point_ = node;
        }
    }

    /// Re-select a node's neighbor list with the pruning heuristic after a
    /// reverse edge pushed it over the degree cap.
    void shrink(uint32_t node, int level) {
        auto& nbrs = links_[node][level];
        std::vector<std::pair<double, uint32_t>> cands;
        cands.reserve(nbrs.size());
        for (uint32_t nb : nbrs) cands.emplace_back(dist(node, nb), nb);
        std::sort(cands.begin(), cands.end());
        nbrs = select_neighbors_heuristic(cands, max_degree(level),
                                          [&](uint32_t a, uint32_t b) { return dist(a, b); });
    }

    const VectorSet* base_ = nullptr;
    IndexParams params_;
    size_t node_count_ = 0;
    uint32_t entry_point_ = 0;
    int max_level_ = 0;
    std::vector<int> levels_;
    std::vector<std::vector<std::vector<uint32_t>>> links_;
};

}  // namespace vectune
