// SPDX-License-Identifier: Apache-2.0
// Copyright 2025 vectune contributors

#include <catch2/catch_amalgamated.hpp>

#include "vectune/config_space.hpp"

using namespace vectune;

TEST_CASE("full grid has the documented cardinalities and bounds") {
    ConfigSpace space = full_config_space();
    CHECK(space.efc_grid.size() == 20);
    CHECK(space.m_grid.size() == 13);
    CHECK(space.efs_grid.size() == 94);
    CHECK(space.efc_grid.front() == 20);
    CHECK(space.efc_grid.back() == 800);
    CHECK(space.m_grid.front() == 4);
    CHECK(space.m_grid.back() == 100);
    CHECK(space.efs_grid.front() == 10);
    CHECK(space.efs_grid.back() == 5000);
    CHECK(space.construction_count() == 260);
    CHECK(space.config_count() == 24440);
}

TEST_CASE("grids are strictly ascending") {
    ConfigSpace space = full_config_space();
    for (const auto* grid : {&space.efc_grid, &space.m_grid, &space.efs_grid}) {
        for (size_t i = 1; i < grid->size(); ++i) {
            REQUIRE((*grid)[i] > (*grid)[i - 1]);
        }
    }
}

TEST_CASE("reduced grid is 5x4x12") {
    ConfigSpace space = reduced_config_space();
    CHECK(space.efc_grid.size() == 5);
    CHECK(space.m_grid.size() == 4);
    CHECK(space.efs_grid.size() == 12);
    CHECK(space.efs_grid.front() == 10);
    CHECK(space.efs_grid.back() == 5000);
}

TEST_CASE("snap_to_grid picks the nearest value, lower on ties") {
    std::vector<int> grid{10, 20, 40};
    CHECK(snap_to_grid(grid, 9.0) == 0);
    CHECK(snap_to_grid(grid, 14.0) == 0);
    CHECK(snap_to_grid(grid, 15.0) == 0);  // equidistant: lower wins
    CHECK(snap_to_grid(grid, 16.0) == 1);
    CHECK(snap_to_grid(grid, 1000.0) == 2);
}

TEST_CASE("geometric_grid rejects bad arguments") {
    CHECK_THROWS_AS(geometric_grid(0, 10, 3), std::invalid_argument);
    CHECK_THROWS_AS(geometric_grid(10, 10, 3), std::invalid_argument);
    CHECK_THROWS_AS(geometric_grid(10, 100, 1), std::invalid_argument);
}

TEST_CASE("grid_index_of finds exact members only") {
    std::vector<int> grid{10, 20, 40};
    CHECK(grid_index_of(grid, 20) == 1);
    CHECK_THROWS_AS(grid_index_of(grid, 21), std::invalid_argument);
}
