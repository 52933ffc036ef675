// SPDX-License-Identifier: Apache-2.0
// Copyright 2025 vectune contributors

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace vectune {

/// Discrete value grids for the three tunable HNSW parameters.
/// The construction grid is the cross product efc_grid x m_grid.
struct ConfigSpace {
    std::vector<int> efc_grid;
    std::vector<int> m_grid;
    std::vector<int> efs_grid;

    size_t construction_count() const { return efc_grid.size() * m_grid.size(); }
    size_t config_count() const { return construction_count() * efs_grid.size(); }
};

/// n geometrically spaced integers between lo and hi inclusive.
/// Rounded values that collide are bumped to the next unused integer,
/// keeping the grid strictly ascending.
inline std::vector<int> geometric_grid(int lo, int hi, int n) {
    if (lo < 1 || hi <= lo || n < 2) {
        throw std::invalid_argument("geometric_grid: need 1 <= lo < hi and n >= 2");
    }
    std::vector<int> grid;
    grid.reserve(n);
    const double ratio = std::log(static_cast<double>(hi) / lo) / (n - 1);
    int prev = lo - 1;
    for (int i = 0; i < n; ++i) {
        double raw = lo * std::exp(ratio * i);
        int v = static_cast<int>(std::llround(raw));
        if (v <= prev) v = prev + 1;
        grid.push_back(v);
        prev = v;
    }
    if (grid.back() > hi) {
        throw std::runtime_error("geometric_grid: rounding overflowed the upper bound");
    }
    return grid;
}

constexpr int kEfcMin = 20, kEfcMax = 800;
constexpr int kMMin = 4, kMMax = 100;
constexpr int kEfsMin = 10, kEfsMax = 5000;

/// The full tuning space: 20 x 13 x 94 values over
/// efC in [20,800], M in [4,100], efS in [10,5000].
inline ConfigSpace full_config_space() {
    return ConfigSpace{
        geometric_grid(kEfcMin, kEfcMax, 20),
        geometric_grid(kMMin, kMMax, 13),
        geometric_grid(kEfsMin, kEfsMax, 94),
    };
}

/// Reduced 5 x 4 x 12 space for fast end-to-end runs.
inline ConfigSpace reduced_config_space() {
    return ConfigSpace{
        geometric_grid(kEfcMin, kEfcMax, 5),
        geometric_grid(kMMin, kMMax, 4),
        geometric_grid(kEfsMin, kEfsMax, 12),
    };
}

/// Index of the nearest grid value; ties go to the lower value.
inline size_t snap_to_grid(const std::vector<int>& grid, double value) {
    size_t best = 0;
    double best_gap = std::abs(value - grid[0]);
    for (size_t i = 1; i < grid.size(); ++i) {
        double gap = std::abs(value - grid[i]);
        if (gap < best_gap) {
            best = i;
            best_gap = gap;
        }
    }
    return best;
}

inline size_t grid_index_of(const std::vector<int>& grid, int value) {
    for (size_t i = 0; i < grid.size(); ++i) {
        if (grid[i] == value) return i;
    }
    throw std::invalid_argument("value not on grid");
}

}  // namespace vectune
