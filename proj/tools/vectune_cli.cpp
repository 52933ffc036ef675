// SPDX-License-Identifier: Apache-2.0
// Copyright 2025 vectune contributors

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "vectune/orchestrator.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInfeasible = 2;
constexpr int kExitUsage = 64;
constexpr int kExitNoInput = 66;

namespace fs = std::filesystem;
using nlohmann::json;

int require_files(std::initializer_list<std::string> paths) {
    for (const auto& p : paths) {
        if (!p.empty() && !fs::exists(p)) {
            std::cerr << "missing file: " << p << "\n";
            return kExitNoInput;
        }
    }
    return kExitOk;
}

vectune::ConfigSpace space_from_flag(const std::string& grid, const std::string& grid_file) {
    if (grid == "full") return vectune::full_config_space();
    if (grid == "reduced") return vectune::reduced_config_space();
    if (grid == "file") {
        std::ifstream in(grid_file);
        if (!in) throw std::runtime_error("cannot open grid file: " + grid_file);
        json j = json::parse(in);
        return vectune::ConfigSpace{j.at("efc").get<std::vector<int>>(), j.at("m").get<std::vector<int>>(),
                                    j.at("efs").get<std::vector<int>>()};
    }
    throw CLI::ValidationError("--grid must be full, reduced or file");
}

json config_json(const vectune::ParamConfig& c) {
    return json{{"efC", c.efC}, {"M", c.M}, {"efS", c.efS}};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"proximity-graph configuration auto-tuner"};
    app.require_subcommand(1);

    std::string workspace = "workspace";
    app.add_option("--workspace", workspace, "workspace directory")->capture_default_str();

    // gt
    auto* gt = app.add_subcommand("gt", "compute exact k-nearest-neighbor ground truth");
    std::string gt_base, gt_query, gt_out;
    int gt_k = 10;
    gt->add_option("--base", gt_base, "base vectors file")->required();
    gt->add_option("--query", gt_query, "query vectors file")->required();
    gt->add_option("--k", gt_k, "neighbors per query")->check(CLI::PositiveNumber);
    gt->add_option("--out", gt_out, "output ivecs file")->required();

    // features
    auto* feat = app.add_subcommand("features", "extract the dataset feature vector");
    std::string ft_base, ft_query, ft_out, ft_name = "dataset";
    uint64_t ft_seed = 42;
    feat->add_option("--base", ft_base)->required();
    feat->add_option("--query", ft_query)->required();
    feat->add_option("--out", ft_out, "output JSON file")->required();
    feat->add_option("--name", ft_name, "dataset key in the JSON object");
    feat->add_option("--seed", ft_seed, "sampling seed");

    // add-dataset
    auto* add = app.add_subcommand("add-dataset", "register a dataset in the workspace");
    std::string ad_name, ad_base, ad_query, ad_role = "new";
    add->add_option("--name", ad_name)->required();
    add->add_option("--base", ad_base)->required();
    add->add_option("--query", ad_query)->required();
    add->add_option("--role", ad_role)->check(CLI::IsMember({"base", "new"}));

    // collect
    auto* col = app.add_subcommand("collect", "measure performance over construction configurations");
    std::string co_dataset, co_grid = "reduced", co_grid_file, co_out;
    unsigned co_jobs = 1;
    uint64_t co_seed = 42;
    col->add_option("--dataset", co_dataset, "registered dataset name")->required();
    col->add_option("--grid", co_grid)->check(CLI::IsMember({"full", "reduced", "file"}));
    col->add_option("--grid-file", co_grid_file, "JSON grid description for --grid file");
    col->add_option("--out", co_out, "output CSV file")->required();
    col->add_option("--jobs", co_jobs, "parallel construction configurations")->check(CLI::PositiveNumber);
    col->add_option("--seed", co_seed);

    // pretrain
    auto* pre = app.add_subcommand("pretrain", "pre-train the predictor and the agent on base datasets");
    std::string pr_grid = "full";
    int pr_episodes = 1200;
    uint64_t pr_seed = 42;
    unsigned pr_jobs = 1;
    pre->add_option("--grid", pr_grid)->check(CLI::IsMember({"full", "reduced"}));
    pre->add_option("--episodes", pr_episodes)->check(CLI::PositiveNumber);
    pre->add_option("--seed", pr_seed);
    pre->add_option("--jobs", pr_jobs)->check(CLI::PositiveNumber);

    // tune
    auto* tune = app.add_subcommand("tune", "recommend a configuration for a target recall");
    std::string tu_dataset;
    double tu_target = 0.0;
    int tu_rounds = 250;
    tune->add_option("--dataset", tu_dataset)->required();
    tune->add_option("--target-recall", tu_target, "target recall in (0,1)")
        ->required()
        ->check(CLI::Range(std::nextafter(0.0, 1.0), std::nextafter(1.0, 0.0)));
    tune->add_option("--max-rounds", tu_rounds)->check(CLI::PositiveNumber);

    // detect
    auto* det = app.add_subcommand("detect", "similarity detection for a dataset");
    std::string de_dataset;
    det->add_option("--dataset", de_dataset)->required();

    // report
    auto* rep = app.add_subcommand("report", "emit collected recall/QPS/ADCN rows as CSV");
    std::string re_dataset, re_out;
    rep->add_option("--dataset", re_dataset)->required();
    rep->add_option("--out", re_out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*gt) {
            if (int rc = require_files({gt_base, gt_query})) return rc;
            auto base = vectune::load_vectors(gt_base);
            auto queries = vectune::load_vectors(gt_query);
            auto truth = vectune::compute_ground_truth(base, queries, static_cast<size_t>(gt_k));
            vectune::save_ivecs(truth, gt_out);
            std::cout << "wrote " << truth.query_count << " x " << truth.k << " neighbor ids to " << gt_out << "\n";
            return kExitOk;
        }

        if (*feat) {
            if (int rc = require_files({ft_base, ft_query})) return rc;
            auto base = vectune::load_vectors(ft_base);
            auto queries = vectune::load_vectors(ft_query);
            auto features = vectune::extract_features(base, queries, ft_seed);
            json j;
            if (fs::exists(ft_out)) {
                std::ifstream in(ft_out);
                j = json::parse(in);
            }
            j[ft_name] = vectune::features_to_json(features, ft_seed);
            std::ofstream out(ft_out);
            out << j.dump(2) << '\n';
            std::cout << j[ft_name].dump(2) << "\n";
            return kExitOk;
        }

        if (*add) {
            if (int rc = require_files({ad_base, ad_query})) return rc;
            vectune::TunerRegistry registry(workspace);
            registry.add_dataset(ad_name, ad_base, ad_query, ad_role);
            std::cout << "registered " << ad_name << " (" << ad_role << ")\n";
            return kExitOk;
        }

        if (*col) {
            vectune::TunerRegistry registry(workspace);
            const auto& entry = registry.dataset(co_dataset);
            if (int rc = require_files({entry.base_path, entry.query_path})) return rc;
            auto base = registry.load_base(co_dataset);
            auto queries = registry.load_queries(co_dataset);
            auto truth = registry.ground_truth(co_dataset, base, queries);
            auto space = space_from_flag(co_grid, co_grid_file);
            auto stop = vectune::default_stop_rule(space);
            std::vector<vectune::ConstructionConfig> configs;
            for (int efc : space.efc_grid) {
                for (int m : space.m_grid) configs.push_back({efc, m});
            }
            auto results =
                vectune::collect_many(base, queries, truth, configs, space.efs_grid, stop, co_seed, co_jobs);
            std::vector<vectune::PerfRow> rows;
            for (const auto& recs : results) {
                for (const auto& rec : recs) rows.push_back({co_dataset, rec});
            }
            vectune::write_perf_csv(co_out, rows);
            std::cout << "wrote " << rows.size() << " rows to " << co_out << "\n";
            return kExitOk;
        }

        if (*pre) {
            vectune::TunerRegistry registry(workspace, pr_grid, pr_seed);
            vectune::PretrainOptions opts;
            opts.episodes = pr_episodes;
            opts.jobs = pr_jobs;
            opts.td3.seed = pr_seed;
            opts.qpp_spec.seed = pr_seed;
            vectune::pretrain_pipeline(registry, opts);
            std::cout << "pre-training complete: " << registry.pool().rows.size() << " pooled rows, models under "
                      << (fs::path(workspace) / "models").string() << "\n";
            return kExitOk;
        }

        if (*tune) {
            vectune::TunerRegistry registry(workspace);
            auto report = vectune::tune_pipeline(registry, tu_dataset, tu_target, tu_rounds);
            json out = vectune::report_to_json(report);
            std::cout << out.dump(2) << "\n";
            return report.feasible ? kExitOk : kExitInfeasible;
        }

        if (*det) {
            vectune::TunerRegistry registry(workspace);
            auto base = registry.load_base(de_dataset);
            auto queries = registry.load_queries(de_dataset);
            auto feats = registry.features_for(de_dataset, base, queries);
            const auto& qpp = registry.qpp();
            Eigen::MatrixXd base_inputs = vectune::pool_inputs(registry.pool(), registry.features(), qpp.norm);
            Eigen::MatrixXd new_inputs = vectune::candidate_inputs(feats, registry.space(), qpp.norm,
                                                                   vectune::kDetectRowCap, registry.seed());
            auto verdict = vectune::detect(base_inputs, new_inputs, qpp);
            std::cout << vectune::verdict_to_json(verdict).dump(2) << "\n";
            return kExitOk;
        }

        if (*rep) {
            vectune::TunerRegistry registry(workspace);
            std::vector<vectune::PerfRow> rows;
            for (const auto& row : registry.pool().rows) {
                if (row.dataset == re_dataset) rows.push_back(row);
            }
            if (rows.empty()) {
                std::cerr << "no collected rows for dataset " << re_dataset << "\n";
                return kExitNoInput;
            }
            vectune::write_perf_csv(re_out, rows);
            std::cout << "wrote " << rows.size() << " rows to " << re_out << "\n";
            return kExitOk;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitUsage;
}
