#pragma once

#include "handmesh/config.hpp"
#include "handmesh/evaluation.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace handmesh {

/// Grid file:
///   {"base": <experiment config>, "seeds": [..],
///    "axes": {"mixer": [...], "position_embedding": [...], "variant": [...],
///             "resolution": [...], "sampler": [{..}], "decoder": [{..}],
///             "blocks": [[..]], "dims": [[..]]},
///    "cells": [{"name": .., "overrides": {<axis>: <value>, ..}}, ..]}
/// Explicit cells, when given, replace the cartesian product of the axes.
struct AblationCell {
    std::string name;
    json overrides = json::object();
};

struct AblationGrid {
    json base = json::object();
    std::vector<std::uint64_t> seeds;
    std::vector<AblationCell> cells;
};

inline constexpr std::size_t kMinAblationSeeds = 3;

AblationGrid grid_from_json(const json& j);
AblationGrid load_grid(const std::string& path);

/// Base config with one cell's overrides applied and the run seed set.
/// Throws ConfigError when the result is invalid.
ExperimentConfig cell_config(const AblationGrid& grid, const AblationCell& cell, std::uint64_t seed);

struct AblationRow {
    std::string cell;
    std::uint64_t seed = 0;
    MetricsReport metrics;
    Index params_non_backbone = 0;
    Index params_backbone = 0;
    double steps_per_second = 0;
    Index steps = 0;
    double final_train_loss = 0;
    std::string config;  // full experiment config, compact JSON
};

std::string ablation_csv_header();
std::string to_csv_line(const AblationRow& row);
std::vector<AblationRow> read_ablation_csv(const std::string& path);

struct CellSummary {
    std::string cell;
    std::size_t runs = 0;
    double median_pa_mpjpe = 0, iqr_pa_mpjpe = 0;
    double median_pa_mpvpe = 0, iqr_pa_mpvpe = 0;
    double median_steps_per_second = 0;
    Index params_non_backbone = 0;
};

double median(std::vector<double> v);
/// Q3 − Q1 with linear interpolation between order statistics.
double interquartile_range(std::vector<double> v);
std::vector<CellSummary> summarize(const std::vector<AblationRow>& rows);
json to_json(const std::vector<CellSummary>& s);

struct AblationOptions {
    std::function<void(const std::string&)> log;  // progress and skip reasons
};

/// Trains and evaluates every (cell, seed) not already present in
/// out_dir/ablation.csv, appending one row per run, then rewrites
/// out_dir/summary.json. Returns all rows in the CSV.
std::vector<AblationRow> run_ablation(const AblationGrid& grid, const std::string& out_dir,
                                      const AblationOptions& opts = {});

}  // namespace handmesh
