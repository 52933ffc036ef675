// SPDX-License-Identifier: Apache-2.0
// Copyright 2025 vectune contributors

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "support/synthetic.hpp"
#include "vectune/features.hpp"

using namespace vectune;
using Catch::Approx;

TEST_CASE("LID of points on a line is close to one") {
    VectorSet line = testing::line_segment(1000, 6, 31);
    double lid = estimate_lid(line, 10, 1000, 7);
    CHECK(lid > 0.7);
    CHECK(lid < 1.3);
}

TEST_CASE("LID of a uniform 5-D ball is close to five") {
    VectorSet ball = testing::ball_uniform(2000, 5, 12);
    double lid = estimate_lid(ball, 100, 1000, 7);
    CHECK(lid > 4.0);
    CHECK(lid < 6.0);
}

TEST_CASE("identical vectors make LID degenerate") {
    VectorSet vs;
    vs.count = 3;
    vs.dim = 2;
    vs.data = {1, 2, 1, 2, 1, 2};
    CHECK_THROWS_WITH(estimate_lid(vs, 2, 3, 1), Catch::Matchers::ContainsSubstring("degenerate"));
}

TEST_CASE("hand-computed DS stats on a 1-D base") {
    VectorSet base = testing::from_values({0, 1, 3, 6});
    SummaryStats s = compute_ds_stats(base, 1, 4, 3);
    CHECK(s.min == Approx(1.0));
    CHECK(s.mean == Approx(1.75));
    CHECK(s.max == Approx(3.0));
    CHECK(s.std == Approx(std::sqrt(0.6875)));
}

TEST_CASE("all-identical vectors give zero DS stats") {
    VectorSet vs;
    vs.count = 4;
    vs.dim = 2;
    vs.data = {5, 5, 5, 5, 5, 5, 5, 5};
    SummaryStats s = compute_ds_stats(vs, 1, 4, 3);
    CHECK(s.min == 0.0);
    CHECK(s.mean == 0.0);
    CHECK(s.max == 0.0);
    CHECK(s.std == 0.0);
}

TEST_CASE("scaling the base by two exactly doubles DS statistics") {
    VectorSet base = testing::random_vectors(300, 4, 9);
    VectorSet scaled = base;
    for (auto& v : scaled.data) v *= 2.0f;
    SummaryStats a = compute_ds_stats(base, 10, 200, 5);
    SummaryStats b = compute_ds_stats(scaled, 10, 200, 5);
    CHECK(b.min == 2.0 * a.min);
    CHECK(b.mean == 2.0 * a.mean);
    CHECK(b.max == 2.0 * a.max);
    CHECK(b.std == 2.0 * a.std);
}

TEST_CASE("hand-computed DR on a 1-D toy") {
    VectorSet base = testing::from_values({0, 10, 100});
    VectorSet query = testing::from_values({1});
    SummaryStats s = compute_dr_stats(base, query, 1, 10, 3);
    CHECK(s.mean == Approx(1.0 / 54.0));
    CHECK(s.min == s.mean);
    CHECK(s.max == s.mean);
    CHECK(s.std == 0.0);
}

TEST_CASE("distant query drives DR toward one") {
    VectorSet base = testing::random_vectors(200, 3, 15);
    VectorSet query = testing::random_vectors(1, 3, 16);
    for (auto& v : query.data) v += 1e6f;
    SummaryStats s = compute_dr_stats(base, query, 10, 100, 3);
    CHECK(s.mean > 0.9);
    CHECK(s.mean <= 1.0);
}

TEST_CASE("DR statistics are exactly scale invariant") {
    VectorSet base = testing::random_vectors(300, 4, 21);
    VectorSet queries = testing::random_vectors(30, 4, 22);
    VectorSet base2 = base;
    VectorSet queries2 = queries;
    for (auto& v : base2.data) v *= 4.0f;
    for (auto& v : queries2.data) v *= 4.0f;
    SummaryStats a = compute_dr_stats(base, queries, 10, 100, 5);
    SummaryStats b = compute_dr_stats(base2, queries2, 10, 100, 5);
    CHECK(a.min == b.min);
    CHECK(a.mean == b.mean);
    CHECK(a.max == b.max);
    CHECK(a.std == b.std);
}

TEST_CASE("full feature extraction satisfies shape and ordering invariants") {
    VectorSet base = testing::random_vectors(1000, 16, 41);
    VectorSet queries = testing::random_vectors(100, 16, 42);
    DatasetFeatures f = extract_features(base, queries);
    CHECK(f.c_b == 1000.0);
    CHECK(f.c_d == 100.0);
    CHECK(f.d == 16.0);
    CHECK(f.lid > 0.0);
    CHECK(f.ds_min <= f.ds_mean);
    CHECK(f.ds_mean <= f.ds_max);
    CHECK(f.ds_std >= 0.0);
    CHECK(f.dr_min <= f.dr_mean);
    CHECK(f.dr_mean <= f.dr_max);
    CHECK(f.dr_min > 0.0);
}

TEST_CASE("doubling the DS sample moves the mean by less than five percent") {
    VectorSet base = testing::random_vectors(2000, 8, 51);
    SummaryStats half = compute_ds_stats(base, 10, 500, 5);
    SummaryStats full = compute_ds_stats(base, 10, 1000, 5);
    CHECK(std::abs(full.mean - half.mean) / full.mean < 0.05);
}

TEST_CASE("features JSON round-trips") {
    VectorSet base = testing::random_vectors(300, 8, 61);
    VectorSet queries = testing::random_vectors(30, 8, 62);
    DatasetFeatures f = extract_features(base, queries, 9);
    auto j = features_to_json(f, 9);
    DatasetFeatures back = features_from_json(j);
    CHECK(back.c_b == f.c_b);
    CHECK(back.lid == f.lid);
    CHECK(back.dr_std == f.dr_std);
    CHECK(j.at("seed") == 9);
}

TEST_CASE("feature preconditions are enforced") {
    VectorSet tiny = testing::from_values({0, 1});
    CHECK_THROWS_AS(compute_ds_stats(tiny, 5, 2, 1), std::invalid_argument);
    VectorSet q = testing::from_values({0.5});
    CHECK_THROWS_AS(compute_dr_stats(tiny, q, 5, 10, 1), std::invalid_argument);
    CHECK_THROWS_AS(estimate_lid(tiny, 1, 2, 1), std::invalid_argument);
}
