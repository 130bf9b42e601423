#include "handmesh/ablation.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace handmesh {
namespace fs = std::filesystem;

namespace {

const std::set<std::string> kAxes{"mixer", "position_embedding", "variant", "resolution",
                                  "sampler", "decoder", "blocks", "dims"};

std::string value_label(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
}

void apply_override(json& cfg, const std::string& axis, const json& value) {
    json& sampler = cfg["sampler"];
    json& decoder = cfg["decoder"];
    if (axis == "mixer") {
        const std::size_t k = decoder.contains("d") ? decoder["d"].size() : reference_decoder_config().d.size();
        decoder["m"] = json::array();
        for (std::size_t i = 0; i < k; ++i) decoder["m"].push_back(value);
    } else if (axis == "position_embedding") {
        decoder["position_embedding"] = value;
    } else if (axis == "variant") {
        sampler["variant"] = value;
    } else if (axis == "resolution") {
        sampler["resolution"] = value;
    } else if (axis == "sampler") {
        for (auto& [k, v] : value.items()) sampler[k] = v;
    } else if (axis == "decoder") {
        for (auto& [k, v] : value.items()) decoder[k] = v;
        if (!value.contains("k")) decoder.erase("k");
    } else if (axis == "blocks") {
        decoder["n"] = value;
    } else if (axis == "dims") {
        decoder["c"] = value;
    } else {
        throw ConfigError("ablation: unknown axis '" + axis + "'");
    }
}

std::string csv_quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

}  // namespace

AblationGrid grid_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("grid must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (it.key() != "base" && it.key() != "seeds" && it.key() != "axes" && it.key() != "cells") {
            throw ConfigError("grid: unknown key '" + it.key() + "'");
        }
    }
    AblationGrid g;
    g.base = j.value("base", json::object());
    if (!j.contains("seeds")) throw ConfigError("grid: a seed list is required");
    g.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (g.seeds.size() < kMinAblationSeeds || std::set<std::uint64_t>(g.seeds.begin(), g.seeds.end()).size() != g.seeds.size()) {
        throw ConfigError("grid: at least " + std::to_string(kMinAblationSeeds) + " distinct seeds are required");
    }
    if (j.contains("cells")) {
        for (const auto& c : j.at("cells")) {
            AblationCell cell{c.at("name").get<std::string>(), c.value("overrides", json::object())};
            for (auto& [axis, v] : cell.overrides.items()) {
                if (!kAxes.count(axis)) throw ConfigError("grid cell '" + cell.name + "': unknown axis '" + axis + "'");
            }
            g.cells.push_back(std::move(cell));
        }
    } else if (j.contains("axes")) {
        g.cells.push_back({"", json::object()});
        for (auto& [axis, values] : j.at("axes").items()) {
            if (!kAxes.count(axis)) throw ConfigError("grid: unknown axis '" + axis + "'");
            if (!values.is_array() || values.empty()) throw ConfigError("grid axis '" + axis + "' needs a value list");
            std::vector<AblationCell> next;
            for (const auto& cell : g.cells) {
                for (const auto& v : values) {
                    AblationCell c = cell;
                    c.overrides[axis] = v;
                    c.name += (c.name.empty() ? "" : ",") + axis + "=" + value_label(v);
                    next.push_back(std::move(c));
                }
            }
            g.cells = std::move(next);
        }
    } else {
        g.cells.push_back({"base", json::object()});
    }
    std::set<std::string> names;
    for (const auto& c : g.cells) {
        if (!names.insert(c.name).second) throw ConfigError("grid: duplicate cell name '" + c.name + "'");
    }
    return g;
}

AblationGrid load_grid(const std::string& path) { return grid_from_json(read_json_file(path)); }

ExperimentConfig cell_config(const AblationGrid& grid, const AblationCell& cell, std::uint64_t seed) {
    json cfg = to_json(experiment_from_json(grid.base));
    for (auto& [axis, v] : cell.overrides.items()) apply_override(cfg, axis, v);
    cfg["seed"] = seed;
    ExperimentConfig c = experiment_from_json(cfg);
    validate(c);
    return c;
}

std::string ablation_csv_header() {
    return "cell,seed,pa_mpjpe_mm,pa_mpvpe_mm,mpjpe_mm,mpvpe_mm,f_at_05,f_at_15,params_non_backbone,"
           "params_backbone,steps_per_s,steps,final_train_loss,config";
}

std::string to_csv_line(const AblationRow& r) {
    char buf[512];
    std::snprintf(buf, sizeof buf, ",%llu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%ld,%ld,%.6g,%ld,%.9g,",
                  static_cast<unsigned long long>(r.seed), r.metrics.pa_mpjpe_mm, r.metrics.pa_mpvpe_mm,
                  r.metrics.mpjpe_mm, r.metrics.mpvpe_mm, r.metrics.f_at_05, r.metrics.f_at_15,
                  static_cast<long>(r.params_non_backbone), static_cast<long>(r.params_backbone), r.steps_per_second,
                  static_cast<long>(r.steps), r.final_train_loss);
    return csv_quote(r.cell) + buf + csv_quote(r.config);
}

std::vector<AblationRow> read_ablation_csv(const std::string& path) {
    std::vector<AblationRow> rows;
    std::ifstream in(path);
    if (!in) return rows;
    std::string line;
    std::getline(in, line);
    if (line != ablation_csv_header()) throw std::runtime_error("'" + path + "' is not an ablation CSV");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv(line);
        if (f.size() != 14) throw std::runtime_error("malformed ablation row: " + line);
        AblationRow r;
        r.cell = f[0];
        r.seed = std::stoull(f[1]);
        r.metrics.pa_mpjpe_mm = std::stod(f[2]);
        r.metrics.pa_mpvpe_mm = std::stod(f[3]);
        r.metrics.mpjpe_mm = std::stod(f[4]);
        r.metrics.mpvpe_mm = std::stod(f[5]);
        r.metrics.f_at_05 = std::stod(f[6]);
        r.metrics.f_at_15 = std::stod(f[7]);
        r.params_non_backbone = std::stol(f[8]);
        r.params_backbone = std::stol(f[9]);
        r.steps_per_second = std::stod(f[10]);
        r.steps = std::stol(f[11]);
        r.final_train_loss = std::stod(f[12]);
        r.config = f[13];
        rows.push_back(std::move(r));
    }
    return rows;
}

double median(std::vector<double> v) {
    if (v.empty()) return 0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double interquartile_range(std::vector<double> v) {
    if (v.size() < 2) return 0;
    std::sort(v.begin(), v.end());
    auto quantile = [&](double q) {
        const double pos = q * double(v.size() - 1);
        const std::size_t lo = static_cast<std::size_t>(pos);
        const std::size_t hi = std::min(lo + 1, v.size() - 1);
        return v[lo] + (pos - double(lo)) * (v[hi] - v[lo]);
    };
    return quantile(0.75) - quantile(0.25);
}

std::vector<CellSummary> summarize(const std::vector<AblationRow>& rows) {
    std::map<std::string, std::vector<const AblationRow*>> by_cell;
    std::vector<std::string> order;
    for (const auto& r : rows) {
        if (!by_cell.count(r.cell)) order.push_back(r.cell);
        by_cell[r.cell].push_back(&r);
    }
    std::vector<CellSummary> out;
    for (const auto& name : order) {
        const auto& runs = by_cell[name];
        std::vector<double> jpe, vpe, sps;
        for (const auto* r : runs) {
            jpe.push_back(r->metrics.pa_mpjpe_mm);
            vpe.push_back(r->metrics.pa_mpvpe_mm);
            sps.push_back(r->steps_per_second);
        }
        CellSummary s;
        s.cell = name;
        s.runs = runs.size();
        s.median_pa_mpjpe = median(jpe);
        s.iqr_pa_mpjpe = interquartile_range(jpe);
        s.median_pa_mpvpe = median(vpe);
        s.iqr_pa_mpvpe = interquartile_range(vpe);
        s.median_steps_per_second = median(sps);
        s.params_non_backbone = runs.front()->params_non_backbone;
        out.push_back(s);
    }
    return out;
}

json to_json(const std::vector<CellSummary>& summary) {
    json cells = json::array();
    for (const auto& s : summary) {
        cells.push_back({{"cell", s.cell},
                         {"runs", s.runs},
                         {"median_pa_mpjpe_mm", s.median_pa_mpjpe},
                         {"iqr_pa_mpjpe_mm", s.iqr_pa_mpjpe},
                         {"median_pa_mpvpe_mm", s.median_pa_mpvpe},
                         {"iqr_pa_mpvpe_mm", s.iqr_pa_mpvpe},
                         {"median_steps_per_s", s.median_steps_per_second},
                         {"params_non_backbone", s.params_non_backbone}});
    }
    return {{"cells", cells}};
}

std::vector<AblationRow> run_ablation(const AblationGrid& grid, const std::string& out_dir,
                                      const AblationOptions& opts) {
    auto log = [&](const std::string& msg) {
        if (opts.log) opts.log(msg);
    };
    fs::create_directories(out_dir);
    const std::string csv_path = (fs::path(out_dir) / "ablation.csv").string();
    std::vector<AblationRow> rows = read_ablation_csv(csv_path);
    std::set<std::pair<std::string, std::uint64_t>> done;
    for (const auto& r : rows) done.insert({r.config, r.seed});
    if (rows.empty()) {
        std::ofstream header(csv_path, std::ios::trunc);
        header << ablation_csv_header() << "\n";
    }
    for (const auto& cell : grid.cells) {
        for (std::uint64_t seed : grid.seeds) {
            ExperimentConfig cfg;
            try {
                cfg = cell_config(grid, cell, seed);
            } catch (const std::exception& e) {
                log("skip cell '" + cell.name + "': " + e.what());
                break;
            }
            const std::string cfg_text = to_json(cfg).dump();
            if (done.count({cfg_text, seed})) {
                log("already done: " + cell.name + " seed " + std::to_string(seed));
                continue;
            }
            log("run " + cell.name + " seed " + std::to_string(seed));
            const auto train_data = open_dataset(cfg.dataset);
            const auto eval_data = open_dataset(cfg.eval_dataset.procedural() && cfg.eval_dataset.count == 0
                                                    ? cfg.dataset
                                                    : cfg.eval_dataset);
            Model model(cfg.model, cfg.seed);
            const TrainResult tr = train(model, *train_data, cfg);
            const EvalResult ev = evaluate(model, *eval_data, cfg.f_score_mode);
            AblationRow row;
            row.cell = cell.name;
            row.seed = seed;
            row.metrics = ev.mean;
            const ParameterSplit split = model.parameter_split();
            row.params_non_backbone = split.non_backbone();
            row.params_backbone = split.backbone;
            row.steps_per_second = tr.steps_per_second();
            row.steps = cfg.steps;
            row.final_train_loss = tr.log.empty() ? 0.0 : tr.log.back().total;
            row.config = cfg_text;
            std::ofstream out(csv_path, std::ios::app);
            out << to_csv_line(row) << "\n";
            out.flush();
            if (!out) throw std::runtime_error("cannot append to '" + csv_path + "'");
            log("  PA-MPJPE " + std::to_string(row.metrics.pa_mpjpe_mm) + " PA-MPVPE " +
                std::to_string(row.metrics.pa_mpvpe_mm));
            rows.push_back(std::move(row));
            done.insert({cfg_text, seed});
        }
    }
    write_json_file((fs::path(out_dir) / "summary.json").string(), to_json(summarize(rows)));
    return rows;
}

}  // namespace handmesh
