// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 when any
// selected criterion fails.

#include "handmesh/ablation.hpp"
#include "handmesh/bench.hpp"
#include "handmesh/evaluation.hpp"
#include "handmesh/training.hpp"
#include "support/gradcheck.hpp"
#include "support/procrustes_oracle.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace handmesh;
using namespace handmesh::testing;

namespace {

using V = Var<double>;
using T = Tensor<double>;
using Clock = std::chrono::steady_clock;

bool g_verbose = false;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double x) {
    std::ostringstream o;
    o.precision(4);
    o << x;
    return o.str();
}

// ---------------------------------------------------------------- 1: gradients

double primitive_worst(std::vector<std::string>& failures) {
    std::mt19937_64 rng(2024);
    constexpr double kTol = 1e-4;
    double worst = 0;
    auto check = [&](const std::string& name, std::vector<V> leaves, const std::function<V()>& f) {
        const double e = gradcheck(std::move(leaves), f).max_rel_error;
        worst = std::max(worst, e);
        if (!(e < kTol)) failures.push_back(name + "=" + fmt(e));
    };

    V a = V::leaf(random_tensor({3, 4}, rng)), b = V::leaf(random_tensor({4, 2}, rng));
    check("matmul", {a, b}, [&] { return random_projection(matmul(a, b), 1); });

    V x = V::leaf(random_tensor({5, 4}, rng)), w = V::leaf(random_tensor({3, 4}, rng));
    V bias = V::leaf(random_tensor({3}, rng));
    check("linear", {x, w, bias}, [&] { return random_projection(linear(x, w, bias), 2); });
    V u = V::leaf(random_tensor({7, 5}, rng)), ub = V::leaf(random_tensor({7}, rng));
    check("token_linear", {u, x, ub}, [&] { return random_projection(token_linear(u, x, ub), 3); });

    V p = V::leaf(random_tensor({3, 3}, rng)), q = V::leaf(random_tensor({3, 3}, rng));
    check("add_sub_mul_affine", {p, q}, [&] { return random_projection(sub(add(mul(p, q), p), affine(q, 0.3, 2.0)), 4); });
    check("scale_sum", {p}, [&] { return sum(scale(p, 1.7)); });
    check("transpose_reshape", {p}, [&] { return random_projection(reshape(transpose(p), {9}), 5); });
    V g = V::leaf(random_tensor({4, 4}, rng, -3, 3));
    check("gelu", {g}, [&] { return random_projection(gelu(g), 6); });

    V s = V::leaf(random_tensor({3, 6}, rng, -2, 2));
    check("softmax_rows", {s}, [&] { return random_projection(softmax(s, 1), 7); });
    check("softmax_cols", {s}, [&] { return random_projection(softmax(s, 0), 8); });

    V ln = V::leaf(random_tensor({4, 8}, rng)), gamma = V::leaf(random_tensor({8}, rng));
    V beta = V::leaf(random_tensor({8}, rng));
    check("layer_norm", {ln, gamma, beta}, [&] { return random_projection(layer_norm(ln, gamma, beta), 9); });

    V img = V::leaf(random_tensor({2, 6, 6}, rng)), k3 = V::leaf(random_tensor({3, 2, 3, 3}, rng));
    V cb = V::leaf(random_tensor({3}, rng));
    check("conv2d", {img, k3, cb}, [&] { return random_projection(conv2d(img, k3, cb, 2, 1), 10); });

    V small = V::leaf(random_tensor({2, 3, 3}, rng)), kt = V::leaf(random_tensor({2, 3, 4, 4}, rng));
    check("transposed_conv2d", {small, kt, cb},
          [&] { return random_projection(transposed_conv2d(small, kt, cb, 2, 1), 11); });

    V map = V::leaf(random_tensor({3, 5, 6}, rng));
    T c = random_tensor({6, 2}, rng, 0.2, 3.8);
    for (Index i = 0; i < c.size(); ++i) c[i] = std::floor(c[i]) + 0.2 + 0.6 * (c[i] - std::floor(c[i]));
    V coords = V::leaf(c);
    check("bilinear_sample", {map, coords}, [&] { return random_projection(bilinear_sample(map, coords), 12); });
    check("spatial_mean", {map}, [&] { return random_projection(spatial_mean(map), 13); });

    V qkv = V::leaf(random_tensor({5, 24}, rng));
    check("self_attention", {qkv}, [&] { return random_projection(self_attention(qkv, 2), 14); });

    V pr = V::leaf(random_tensor({4, 3}, rng)), tg = V::leaf(random_tensor({4, 3}, rng));
    check("l1_mean", {pr, tg}, [&] { return l1_mean(pr, tg); });
    return worst;
}

struct SliceResult {
    double max_rel = 0;       // denominator floored at the difference resolution
    double max_rel_raw = 0;   // denominator floored at 1e-6 only
    double resolution = 0;
    Index checked = 0;
};

/// 50 entries spread evenly over every parameter tensor of the full model.
/// Round-off limits a central difference to about eps·|L|/h in absolute
/// terms, so relative errors are taken against max(|g|, resolution / tol).
SliceResult end_to_end_check(double tol) {
    const HandMeshModel<double> model(ModelConfig{}, 0);
    const HandSample sample = generate_sample(default_hand(), sample_seed(3, 0));
    const Example ex = to_example(sample);
    const V input = V::constant(T(ex.input.shape(), ex.input.data().cast<double>()));
    const V v_gt = V::constant(T::from_matrix(sample.vertices));
    const V j2_gt = V::constant(T::from_matrix(sample.joints_2d));
    const V regressor = default_hand().regressor.as_constant<double>();
    auto loss = [&] {
        const ModelOutput<double> out = model.forward(input);
        return total_loss(out.vertices(), v_gt, out.keypoints_2d(), j2_gt, regressor, LossWeights{}).total;
    };

    auto params = model.parameters();
    model.zero_grad();
    const V l0 = loss();
    backward(l0);
    SliceResult r;
    constexpr double h = 1e-5;
    r.resolution = 4 * std::numeric_limits<double>::epsilon() * std::abs(l0.value()[0]) / h;

    constexpr Index kSlice = 50;
    const Index total = count_parameters(params);
    const Index stride = total / kSlice;
    std::vector<std::pair<std::size_t, Index>> picks;
    {
        Index flat = stride / 2, offset = 0;
        for (std::size_t l = 0; l < params.size() && Index(picks.size()) < kSlice; ++l) {
            const Index n = params[l].var.value().size();
            while (flat < offset + n && Index(picks.size()) < kSlice) {
                picks.emplace_back(l, flat - offset);
                flat += stride;
            }
            offset += n;
        }
    }

    NoGradGuard no_grad;
    for (const auto& [l, i] : picks) {
        const double analytic = params[l].var.grad_tensor()[i];
        T& value = params[l].var.mutable_value();
        const double original = value[i];
        value[i] = original + h;
        const double plus = loss().value()[0];
        value[i] = original - h;
        const double minus = loss().value()[0];
        value[i] = original;
        const double numeric = (plus - minus) / (2 * h);
        r.max_rel = std::max(r.max_rel, relative_error(analytic, numeric, r.resolution / tol));
        r.max_rel_raw = std::max(r.max_rel_raw, relative_error(analytic, numeric));
        if (g_verbose)
            std::cerr << params[l].name << "[" << i << "] analytic " << analytic << " numeric " << numeric << "\n";
    }
    r.checked = Index(picks.size());
    return r;
}

Outcome criterion_gradients() {
    const auto t0 = Clock::now();
    std::vector<std::string> failures;
    const double prim = primitive_worst(failures);
    constexpr double kTol = 1e-3;
    const SliceResult e2e = end_to_end_check(kTol);
    const double secs = seconds_since(t0);
    Outcome o;
    o.pass = failures.empty() && prim < 1e-4 && e2e.checked == 50 && e2e.max_rel < kTol && secs < 120;
    o.detail = "primitive max rel " + fmt(prim) + " (<1e-4), full-model slice of " + std::to_string(e2e.checked) +
               " max rel " + fmt(e2e.max_rel) + " (<1e-3; difference resolution " + fmt(e2e.resolution) +
               ", unfloored " + fmt(e2e.max_rel_raw) + "), " + fmt(secs) + " s (<120)";
    for (const auto& f : failures) o.detail += " [" + f + "]";
    return o;
}

// ---------------------------------------------------------- 2: Procrustes / PA

Outcome criterion_procrustes() {
    const auto t0 = Clock::now();
    std::mt19937_64 gen(3);
    double worst_obj = 0, worst_inv = 0;
    bool all_ok = true;
    for (int instance = 0; instance < 100; ++instance) {
        const Cloud g = random_cloud(kNumJoints, gen);
        const Cloud p = random_similarity(gen).apply(g + random_cloud(kNumJoints, gen, 15.0));
        const Alignment a = procrustes_align(p, g);
        all_ok = all_ok && a.ok;
        const double closed = alignment_objective(p, g, a.transform);
        const double oracle = numeric_optimum(p, g, gen);
        // Positive when the oracle found a lower objective than the closed form.
        worst_obj = std::max(worst_obj, (closed - oracle) / std::max(oracle, 1e-12));

        const double base = pa_metric(p, g);
        for (int t = 0; t < 100; ++t)
            worst_inv = std::max(worst_inv, std::abs(pa_metric(random_similarity(gen).apply(p), g) - base));
    }
    const double secs = seconds_since(t0);
    Outcome o;
    o.pass = all_ok && worst_obj < 1e-6 && worst_inv < 1e-6 && secs < 60;
    o.detail = "objective rel gap vs optimizer " + fmt(worst_obj) + " (<1e-6) over 100, PA invariance " +
               fmt(worst_inv) + " mm (<1e-6) over 100x100, " + fmt(secs) + " s (<60)";
    return o;
}

// -------------------------------------------------------------- 3, 4: shapes

std::string join(const std::vector<Index>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
    return s + "]";
}

Outcome criterion_trace() {
    const Model model(ModelConfig{}, 0);
    NoGradGuard no_grad;
    const ModelOutput<float> out = model.forward(Tensor<float>({kInputChannels, 224, 224}));
    const std::vector<Index> expected{21, 84, 336, 778};
    Outcome o;
    o.pass = out.mesh.token_trace == expected && out.vertices().shape() == Shape{778, 3};
    o.detail = "token trace " + join(out.mesh.token_trace) + ", output " + to_string(out.vertices().shape());
    return o;
}

Outcome criterion_parameters() {
    const ParameterSplit s = Model(ModelConfig{}, 0).parameter_split();
    Outcome o;
    o.pass = s.non_backbone() >= 1'000'000 && s.non_backbone() <= 3'000'000;
    o.detail = "non-backbone parameters " + std::to_string(s.non_backbone()) + " (token generator " +
               std::to_string(s.token_generator) + ", regressor " + std::to_string(s.regressor) +
               "), band [1.0M, 3.0M]";
    return o;
}

// -------------------------------------------------------------- 5: overfit

ExperimentConfig overfit_config() {
    ExperimentConfig c;
    c.steps = 2000;
    c.batch_size = 8;
    c.seed = 0;
    return c;
}

Outcome criterion_overfit() {
    const auto t0 = Clock::now();
    const ExperimentConfig cfg = overfit_config();
    const CachedDataset data(ProceduralDataset(64, 1234));
    Model model(cfg.model, cfg.seed);
    const LossValues l0 = dataset_loss(model, data, cfg.loss);
    const double pa0 = evaluate(model, data, cfg.f_score_mode).mean.pa_mpvpe_mm;
    train(model, data, cfg);
    const LossValues l1 = dataset_loss(model, data, cfg.loss);
    const double pa1 = evaluate(model, data, cfg.f_score_mode).mean.pa_mpvpe_mm;
    const double secs = seconds_since(t0);
    const double ratio = l1.total / l0.total, factor = pa0 / pa1;
    Outcome o;
    o.pass = ratio <= 0.1 && factor >= 5.0 && secs < 1200;
    o.detail = "loss " + fmt(l0.total) + " -> " + fmt(l1.total) + " (ratio " + fmt(ratio) + ", <=0.1), PA-MPVPE " +
               fmt(pa0) + " -> " + fmt(pa1) + " mm (factor " + fmt(factor) + ", >=5), batch " +
               std::to_string(cfg.batch_size) + ", " + fmt(secs) + " s (<1200)";
    return o;
}

// -------------------------------------------------------------- 6: ablation

struct CellStats {
    std::vector<double> pa_mpjpe, pa_mpvpe;
};

Outcome criterion_ablation(const std::string& grid_path, const std::string& dir) {
    const auto t0 = Clock::now();
    Outcome o;
    if (grid_path.empty() || dir.empty()) {
        o.detail = "needs --ablation-grid and --ablation-dir";
        return o;
    }
    AblationOptions opts;
    opts.log = [](const std::string& line) { std::cerr << line << "\n"; };
    const std::vector<AblationRow> rows = run_ablation(load_grid(grid_path), dir, opts);

    std::map<std::string, CellStats> cells;
    double train_seconds = 0;
    for (const auto& r : rows) {
        cells[r.cell].pa_mpjpe.push_back(r.metrics.pa_mpjpe_mm);
        cells[r.cell].pa_mpvpe.push_back(r.metrics.pa_mpvpe_mm);
        if (r.steps_per_second > 0) train_seconds += double(r.steps) / r.steps_per_second;
    }
    for (const char* name : {"keypoint28", "global", "one_layer", "no_pos_emb", "identity"}) {
        if (cells[name].pa_mpjpe.size() < kMinAblationSeeds) {
            o.detail = std::string("cell '") + name + "' has fewer than 3 seeds";
            return o;
        }
    }
    const CellStats& base = cells["keypoint28"];
    const double base_v = median(base.pa_mpvpe), base_j = median(base.pa_mpjpe);
    const double global_v = median(cells["global"].pa_mpvpe);
    const double one_v = median(cells["one_layer"].pa_mpvpe);
    const bool a = base_v <= global_v;
    const bool b = base_v <= one_v;

    // A reversal (variant better than the full model) fails only when it is
    // larger than the spread across seeds.
    auto degrades_or_ties = [&](const CellStats& variant, std::string& note) {
        const double diff = median(variant.pa_mpjpe) - base_j;
        const double iqr = std::max(interquartile_range(base.pa_mpjpe), interquartile_range(variant.pa_mpjpe));
        note = "delta " + fmt(diff) + " mm, iqr " + fmt(iqr);
        return diff >= 0 || -diff <= iqr;
    };
    std::string note_pe, note_id;
    const bool c_pe = degrades_or_ties(cells["no_pos_emb"], note_pe);
    const bool c_id = degrades_or_ties(cells["identity"], note_id);

    const double wall = seconds_since(t0);
    const double runtime = std::max(wall, train_seconds);
    o.pass = a && b && c_pe && c_id && runtime < 4 * 3600;
    o.detail = "(a) keypoint28 " + fmt(base_v) + " vs global " + fmt(global_v) + " PA-MPVPE " + (a ? "ok" : "X") +
               "; (b) 3-layer " + fmt(base_v) + " vs 1-layer " + fmt(one_v) + " " + (b ? "ok" : "X") +
               "; (c) no position embedding " + fmt(median(cells["no_pos_emb"].pa_mpjpe)) + " vs " + fmt(base_j) +
               " PA-MPJPE (" + note_pe + ") " + (c_pe ? "ok" : "X") + ", identity mixer " +
               fmt(median(cells["identity"].pa_mpjpe)) + " (" + note_id + ") " + (c_id ? "ok" : "X") +
               "; training time " + fmt(train_seconds / 3600) + " h (<4)";
    return o;
}

// -------------------------------------------------------------- 7: samples

Outcome criterion_samples() {
    const HandModel& hand = default_hand();
    double worst3 = 0, worst2 = 0;
    bool bounds = true, deterministic = true;
    for (std::uint64_t i = 0; i < 1000; ++i) {
        const HandSample s = generate_sample(hand, sample_seed(7, i));
        const ConsistencyError e = check_consistency(s, hand.regressor);
        worst3 = std::max(worst3, e.joints_3d);
        worst2 = std::max(worst2, e.joints_2d);
        bounds = bounds && e.in_bounds;
        if (i % 50 == 0) {
            const HandSample again = generate_sample(hand, sample_seed(7, i));
            deterministic = deterministic && again.vertices == s.vertices && again.joints_3d == s.joints_3d &&
                            again.joints_2d == s.joints_2d && again.input.data() == s.input.data();
        }
    }
    Outcome o;
    o.pass = worst3 <= 1e-6 && worst2 <= 1e-6 && bounds && deterministic;
    o.detail = "1000 samples: max |JV - J3d| " + fmt(worst3) + " mm, max |proj - J2d| " + fmt(worst2) +
               " px (<=1e-6), bit-deterministic " + (deterministic ? "yes" : "no");
    return o;
}

// -------------------------------------------------------------- 8: efficiency

Outcome criterion_efficiency() {
    ModelConfig attn;
    ModelConfig ident = attn;
    std::fill(ident.decoder.m.begin(), ident.decoder.m.end(), MixerKind::Identity);
    constexpr Index kIters = 50;
    const BenchResult ba = bench(attn, 0, kIters), bi = bench(ident, 0, kIters);
    const BenchResult ba2 = bench(attn, 1, 10, 0), bi2 = bench(ident, 1, 10, 0);
    const bool stable = ba.params.total() == ba2.params.total() && bi.params.total() == bi2.params.total();

    // Checkpoint round trip of a briefly trained model.
    ExperimentConfig cfg;
    cfg.model.backbone.channels = {4, 4, 8, 8, 8};
    cfg.steps = 2;
    cfg.batch_size = 1;
    cfg.output_dir = (std::filesystem::temp_directory_path() / "handmesh_acceptance_ckpt").string();
    std::filesystem::remove_all(cfg.output_dir);
    const ProceduralDataset data(2, 5);
    Model model(cfg.model, cfg.seed);
    train(model, data, cfg);
    save_checkpoint(cfg.output_dir, model, cfg);
    const LoadedCheckpoint ck = load_checkpoint(cfg.output_dir);
    bool exact = ck.model->state().size() == model.state().size();
    for (const auto& [name, t] : model.state()) exact = exact && ck.model->state().at(name).data() == t.data();
    {
        NoGradGuard no_grad;
        const Example ex = data.get(0);
        exact = exact && ck.model->forward(ex.input).vertices().value().data() ==
                             model.forward(ex.input).vertices().value().data();
    }
    std::filesystem::remove_all(cfg.output_dir);

    Outcome o;
    o.pass = ba.latency.median_ms >= bi.latency.median_ms && stable && exact;
    o.detail = "median latency attention " + fmt(ba.latency.median_ms) + " ms vs identity " +
               fmt(bi.latency.median_ms) + " ms over " + std::to_string(kIters) + " iters; parameters " +
               std::to_string(ba.params.total()) + " / " + std::to_string(bi.params.total()) + " stable " +
               (stable ? "yes" : "no") + "; checkpoint bit-exact " + (exact ? "yes" : "no");
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance checks"};
    std::vector<int> selected;
    std::string grid, dir;
    app.add_option("-c,--criterion", selected, "Criteria to run (default: all)")->check(CLI::Range(1, 8));
    app.add_option("--ablation-grid", grid, "Grid file for criterion 6");
    app.add_option("--ablation-dir", dir, "Resumable output directory for criterion 6");
    app.add_flag("-v,--verbose", g_verbose, "Print every checked gradient entry");
    CLI11_PARSE(app, argc, argv);
    if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 7, 8};
    std::sort(selected.begin(), selected.end());
    selected.erase(std::unique(selected.begin(), selected.end()), selected.end());

    bool all = true;
    for (int k : selected) {
        Outcome o;
        try {
            switch (k) {
                case 1: o = criterion_gradients(); break;
                case 2: o = criterion_procrustes(); break;
                case 3: o = criterion_trace(); break;
                case 4: o = criterion_parameters(); break;
                case 5: o = criterion_overfit(); break;
                case 6: o = criterion_ablation(grid, dir); break;
                case 7: o = criterion_samples(); break;
                case 8: o = criterion_efficiency(); break;
            }
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("error: ") + e.what();
        }
        all = all && o.pass;
        std::cout << "CRITERION " << k << (o.pass ? " PASS: " : " FAIL: ") << o.detail << std::endl;
    }
    return all ? 0 : 1;
}
