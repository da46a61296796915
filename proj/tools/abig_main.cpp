// abig: synthetic data, feature extraction, bilevel training, evaluation,
// graph export and a finite-difference gradient audit in one binary.
//
// Exit codes: 0 success, 1 runtime failure, 2 dataset spec error,
// 3 malformed record / unknown image, 4 config error, 5 checkpoint version.

#include <abig/features.hpp>
#include <abig/io.hpp>
#include <abig/synth.hpp>
#include <abig/trainer.hpp>

#include <CLI11.hpp>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace abig;

int exit_code_for(Err code) {
    switch (code) {
    case Err::SpecInvalid: return 2;
    case Err::MalformedRecord:
    case Err::UnknownImage: return 3;
    case Err::ConfigInvalid:
    case Err::FoldTooSmall: return 4;
    case Err::CheckpointVersion: return 5;
    default: return 1;
    }
}

std::optional<std::uint64_t> env_seed() {
    const char* raw = std::getenv("ABIG_SEED");
    if (raw == nullptr || *raw == '\0') return std::nullopt;
    char* end = nullptr;
    errno = 0;
    unsigned long long v = std::strtoull(raw, &end, 10);
    if (errno != 0 || end == raw || *end != '\0')
        fail(Err::ConfigInvalid, std::string("ABIG_SEED is not an unsigned integer: ") + raw);
    return std::uint64_t(v);
}

std::string parent_dir(const std::string& path) {
    std::filesystem::path p(path);
    auto dir = p.parent_path();
    return dir.empty() ? std::string(".") : dir.string();
}

// ---- synth ------------------------------------------------------------------

struct SynthArgs {
    std::string spec_file, out_dir;
};

int cmd_synth(const SynthArgs& a) {
    DatasetSpec spec = dataset_spec_from_json(read_text_file(a.spec_file));
    if (auto s = env_seed()) spec.seed = *s;
    spec.validate();
    SynthDataset ds = generate_dataset(spec);
    write_dataset(ds, a.out_dir);
    std::size_t patches = 0;
    for (const SynthImage& img : ds.images) patches += img.patches.size();
    std::printf("synth: wrote %zu images (%zu patches) to %s\n", ds.images.size(), patches,
                a.out_dir.c_str());
    return 0;
}

// ---- extract ----------------------------------------------------------------

struct ExtractArgs {
    std::string manifest_file, out_file;
    double d_p = 64.0, theta_sim = 0.8;
};

int cmd_extract(const ExtractArgs& a) {
    Manifest m = read_manifest(a.manifest_file);
    const std::string base = parent_dir(a.manifest_file);
    std::vector<FeatureRow> rows;
    for (const ManifestImage& img : m.images) {
        auto cells = read_cells(base + "/" + img.cell_file);
        for (const ManifestPatch& p : img.patches) {
            double x0 = double(p.col) * m.stride, y0 = double(p.row) * m.stride;
            Rect clip = inflate_clip(Rect{x0, y0, x0 + m.patch_size, y0 + m.patch_size});
            static const std::vector<CellRecord> none;
            auto it = cells.find(p.id);
            const std::vector<CellRecord>& patch_cells = it == cells.end() ? none : it->second;
            PatchFeatureVector pf = aggregate_patch_vector(patch_cells, a.d_p, a.theta_sim, clip);
            FeatureRow row;
            row.image_id = img.id;
            row.patch_id = p.id;
            row.row = p.row;
            row.col = p.col;
            row.values = pf.values;
            rows.push_back(std::move(row));
        }
    }
    const std::size_t n = rows.size();
    write_features(a.out_file, std::move(rows));
    std::printf("extract: wrote %zu feature rows to %s\n", n, a.out_file.c_str());
    return 0;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
    std::string features_file, manifest_file, config_file, out_dir;
    std::size_t folds = 0; // 0: single split (fold 0 of the 3-fold partition)
    std::string baseline;  // empty or "fixed"
    double cos_threshold = 0.8;
};

TrainConfig load_train_config(const std::string& config_file, const Dataset& data) {
    TrainConfig cfg;
    if (!config_file.empty()) cfg = train_config_from_json(read_text_file(config_file));
    if (auto s = env_seed()) cfg.seed = *s;
    cfg.validate();
    if (cfg.gnn.n_classes != data.class_names.size())
        fail(Err::ConfigInvalid, "config expects " + std::to_string(cfg.gnn.n_classes) +
                                     " classes but the dataset has " +
                                     std::to_string(data.class_names.size()));
    if (!data.samples.empty() && cfg.gnn.in_dim != data.samples[0].features.cols)
        fail(Err::ConfigInvalid, "config input width does not match the feature file");
    return cfg;
}

void print_param_counts(const TrainConfig& cfg) {
    Rng rng(0);
    std::size_t theta = ClassifierParams::init(cfg.gnn, rng).count();
    std::size_t psi = GeneratorParams::init(cfg.gen, rng).count();
    std::printf("trainable parameters: theta=%zu psi=%zu total=%zu\n", theta, psi, theta + psi);
}

void write_cv_artifacts(const std::string& dir, const CvResult& cv, const Dataset& data,
                        const TrainConfig& cfg, const std::string& config_json) {
    LossCurves mean;
    if (!cv.runs.empty()) {
        const std::size_t iters = cv.runs[0].curves.lower.size();
        mean.lower.assign(iters, 0.0);
        mean.upper.assign(cv.runs[0].curves.upper.size(), 0.0);
        for (const TrainResult& r : cv.runs) {
            for (std::size_t i = 0; i < mean.lower.size(); ++i)
                mean.lower[i] += r.curves.lower[i] / double(cv.runs.size());
            for (std::size_t i = 0; i < mean.upper.size(); ++i)
                mean.upper[i] += r.curves.upper[i] / double(cv.runs.size());
        }
    }
    write_text_file(dir + "/losses.csv", losses_to_csv(mean));
    for (std::size_t f = 0; f < cv.runs.size(); ++f) {
        const std::string stem = dir + "/fold" + std::to_string(f);
        save_checkpoint(stem + ".ckpt",
                        checkpoint_from_result(cv.runs[f], config_json, cfg.seed + f));
        write_text_file(stem + "_losses.csv", losses_to_csv(cv.runs[f].curves));
    }
    write_text_file(dir + "/metrics.json", cv_metrics_to_json(cv, data.class_names, config_json));
    std::printf("train: cv mean accuracy %.4f (sd %.4f) mean macro-F1 %.4f (sd %.4f)\n",
                cv.mean_accuracy, cv.sd_accuracy, cv.mean_f1, cv.sd_f1);
}

int cmd_train(const TrainArgs& a) {
    Manifest m = read_manifest(a.manifest_file);
    Dataset data = dataset_from_features(m, read_features(a.features_file));
    TrainConfig cfg = load_train_config(a.config_file, data);
    const std::string config_json = train_config_to_json(cfg);

    std::filesystem::create_directories(a.out_dir);
    write_text_file(a.out_dir + "/config.json", config_json);
    print_param_counts(cfg);

    const bool fixed = a.baseline == "fixed";
    if (a.folds == 0) {
        FoldSplit split = make_folds(data, 3, cfg.seed)[0];
        TrainResult run;
        Metrics metrics;
        if (fixed) {
            run = fixed_graph_baseline(data, split.train, split.val, cfg, a.cos_threshold);
            metrics = evaluate_fixed(data, split.test, run.theta, run.stand, a.cos_threshold);
        } else {
            run = train(data, split.train, split.val, cfg);
            metrics = evaluate(data, split.test, run.theta, run.psi, run.stand, cfg.eval_mode);
        }
        save_checkpoint(a.out_dir + "/checkpoint.ckpt",
                        checkpoint_from_result(run, config_json, cfg.seed));
        write_text_file(a.out_dir + "/losses.csv", losses_to_csv(run.curves));
        write_text_file(a.out_dir + "/metrics.json",
                        metrics_to_json(metrics, data.class_names, config_json));
        std::printf("train: test accuracy %.4f macro-F1 %.4f\n", metrics.accuracy,
                    metrics.macro_f1);
        return 0;
    }

    CvResult cv;
    if (fixed) {
        // same folds and per-fold seeds as the learned-graph loop below
        cv.folds = make_folds(data, a.folds, cfg.seed);
        for (std::size_t f = 0; f < a.folds; ++f) {
            TrainConfig fold_cfg = cfg;
            fold_cfg.seed = cfg.seed + f;
            cv.runs.push_back(fixed_graph_baseline(data, cv.folds[f].train, cv.folds[f].val,
                                                   fold_cfg, a.cos_threshold));
            cv.fold_metrics.push_back(evaluate_fixed(data, cv.folds[f].test, cv.runs.back().theta,
                                                     cv.runs.back().stand, a.cos_threshold));
        }
        auto agg = [&](auto pick, double& mean, double& sd) {
            double s = 0;
            for (const Metrics& mm : cv.fold_metrics) s += pick(mm);
            mean = s / double(a.folds);
            double ss = 0;
            for (const Metrics& mm : cv.fold_metrics)
                ss += (pick(mm) - mean) * (pick(mm) - mean);
            sd = std::sqrt(ss / double(a.folds - 1));
        };
        agg([](const Metrics& mm) { return mm.accuracy; }, cv.mean_accuracy, cv.sd_accuracy);
        agg([](const Metrics& mm) { return mm.macro_f1; }, cv.mean_f1, cv.sd_f1);
    } else {
        cv = cross_validate(data, a.folds, cfg);
    }
    write_cv_artifacts(a.out_dir, cv, data, cfg, config_json);
    return 0;
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
    std::string checkpoint_file, features_file, manifest_file, out_file;
    std::string adjacency; // empty: use the checkpoint config
    std::string split = "test";
    std::size_t fold = 0;
};

int cmd_eval(const EvalArgs& a) {
    Checkpoint ck = load_checkpoint(a.checkpoint_file);
    TrainConfig cfg = train_config_from_json(ck.config_json);
    if (auto s = env_seed()) cfg.seed = *s;
    TrainResult run = result_from_checkpoint(ck);

    Manifest m = read_manifest(a.manifest_file);
    Dataset data = dataset_from_features(m, read_features(a.features_file));
    if (cfg.gnn.n_classes != data.class_names.size())
        fail(Err::ConfigInvalid, "checkpoint expects " + std::to_string(cfg.gnn.n_classes) +
                                     " classes but the dataset has " +
                                     std::to_string(data.class_names.size()));

    AdjacencyMode mode = cfg.eval_mode;
    if (a.adjacency == "soft") mode = AdjacencyMode::Soft;
    else if (a.adjacency == "hard") mode = AdjacencyMode::Hard;
    else if (!a.adjacency.empty())
        fail(Err::ConfigInvalid, "unknown adjacency mode: " + a.adjacency);

    std::vector<std::size_t> idx;
    if (a.split == "all") {
        for (std::size_t i = 0; i < data.samples.size(); ++i) idx.push_back(i);
    } else {
        auto folds = make_folds(data, 3, cfg.seed);
        if (a.fold >= folds.size()) fail(Err::ConfigInvalid, "fold index out of range");
        const FoldSplit& split = folds[a.fold];
        if (a.split == "train") idx = split.train;
        else if (a.split == "val") idx = split.val;
        else if (a.split == "test") idx = split.test;
        else fail(Err::ConfigInvalid, "unknown split: " + a.split);
    }

    Metrics metrics = evaluate(data, idx, run.theta, run.psi, run.stand, mode);
    write_text_file(a.out_file, metrics_to_json(metrics, data.class_names, ck.config_json));
    std::printf("eval: %s accuracy %.4f macro-F1 %.4f\n", a.split.c_str(), metrics.accuracy,
                metrics.macro_f1);
    return 0;
}

// ---- export-graph -----------------------------------------------------------

struct ExportArgs {
    std::string checkpoint_file, features_file, manifest_file, image_id, out_file;
    double min_weight = 0.5;
};

int cmd_export_graph(const ExportArgs& a) {
    Checkpoint ck = load_checkpoint(a.checkpoint_file);
    TrainResult run = result_from_checkpoint(ck);

    Manifest m = read_manifest(a.manifest_file);
    const ManifestImage* img = nullptr;
    for (const ManifestImage& cand : m.images)
        if (cand.id == a.image_id) img = &cand;
    if (img == nullptr) fail(Err::UnknownImage, "image not in manifest: " + a.image_id);

    Dataset data = dataset_from_features(m, read_features(a.features_file));
    const Sample* sample = nullptr;
    for (const Sample& s : data.samples)
        if (s.image_id == a.image_id) sample = &s;
    if (sample == nullptr) fail(Err::UnknownImage, "image has no feature rows: " + a.image_id);

    // feature rows are in patch-id order; list the patches the same way
    std::vector<ManifestPatch> patches = img->patches;
    std::sort(patches.begin(), patches.end(),
              [](const ManifestPatch& x, const ManifestPatch& y) { return x.id < y.id; });

    Tensor soft = eval_adjacency(run.stand.apply(sample->features), run.psi, AdjacencyMode::Soft);
    write_text_file(a.out_file,
                    graph_export_json(a.image_id, patches, sample->features, soft, a.min_weight));
    std::printf("export-graph: wrote %s for image %s\n", a.out_file.c_str(), a.image_id.c_str());
    return 0;
}

// ---- gradcheck --------------------------------------------------------------

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(r, c);
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// keep entries at least `margin` from zero so relu and abs kinks stay
// further away than the finite-difference step
Tensor off_kink(Tensor t, double margin) {
    for (double& v : t.data)
        if (std::abs(v) < margin) v = v < 0 ? -margin : margin;
    return t;
}

// Worst relative error between tape gradients of the target tensors and
// central differences of the scalar loss built by `forward`, which must be a
// deterministic function of the current tensor values. `tamper` runs after
// the analytic backward pass; the self-test uses it to fake a broken rule.
double fd_params(const std::function<Tape::Id(Tape&)>& forward,
                 const std::vector<Tensor*>& targets, double eps,
                 const std::function<void()>& tamper = {}) {
    for (Tensor* t : targets) t->set_requires_grad(true);
    {
        Tape tape;
        tape.backward(forward(tape));
    }
    if (tamper) tamper();
    std::vector<std::vector<double>> analytic;
    for (Tensor* t : targets) analytic.push_back(t->grad);

    auto value = [&]() {
        Tape tape;
        return tape.value(forward(tape)).data[0];
    };
    double worst = 0.0;
    for (std::size_t ti = 0; ti < targets.size(); ++ti)
        for (std::size_t i = 0; i < targets[ti]->size(); ++i) {
            double saved = targets[ti]->data[i];
            targets[ti]->data[i] = saved + eps;
            const double up = value();
            targets[ti]->data[i] = saved - eps;
            const double down = value();
            targets[ti]->data[i] = saved;
            const double fd = (up - down) / (2.0 * eps);
            const double a = analytic[ti][i];
            worst = std::max(worst, std::abs(a - fd) / std::max(1.0, std::abs(a)));
        }
    for (Tensor* t : targets) t->set_requires_grad(false);
    return worst;
}

struct CheckOutcome {
    std::string name;
    double max_rel_err = 0;
};

std::vector<CheckOutcome> run_gradcheck(std::uint64_t seed, bool corrupt) {
    const double eps = 1e-5;
    Rng rng(seed);
    std::vector<CheckOutcome> out;
    auto record = [&](const char* name, double err) { out.push_back({name, err}); };

    {
        Tensor a = off_kink(random_tensor(4, 5, rng), 0.05);
        Tensor b = random_tensor(5, 6, rng);
        auto fwd_left = [&](Tape& t) { return t.abs_sum(t.matmul(t.leaf(&a), t.constant(b))); };
        record("matmul_left",
               fd_params(fwd_left, {&a}, eps, corrupt ? [&] { a.grad[0] += 1e-2; }
                                                      : std::function<void()>{}));
        auto fwd_right = [&](Tape& t) { return t.abs_sum(t.matmul(t.constant(a), t.leaf(&b))); };
        record("matmul_right", fd_params(fwd_right, {&b}, eps));
    }
    {
        Tensor a = random_tensor(4, 5, rng);
        Tensor b = off_kink(random_tensor(4, 5, rng), 0.2);
        // shift away from the abs kink of the readout
        auto fwd = [&](Tape& t) {
            return t.abs_sum(t.add_scalar(t.add(t.leaf(&a), t.constant(b)), 3.0));
        };
        record("add", fd_params(fwd, {&a}, eps));
    }
    {
        Tensor x = random_tensor(5, 4, rng);
        Tensor b = random_tensor(1, 4, rng);
        auto fwd_x = [&](Tape& t) {
            return t.abs_sum(t.add_scalar(t.add_bias(t.leaf(&x), t.constant(b)), 3.0));
        };
        record("add_bias_input", fd_params(fwd_x, {&x}, eps));
        auto fwd_b = [&](Tape& t) {
            return t.abs_sum(t.add_scalar(t.add_bias(t.constant(x), t.leaf(&b)), 3.0));
        };
        record("add_bias_bias", fd_params(fwd_b, {&b}, eps));
    }
    {
        Tensor x = off_kink(random_tensor(5, 5, rng), 0.05);
        auto fwd = [&](Tape& t) { return t.abs_sum(t.add_scalar(t.relu(t.leaf(&x)), 2.0)); };
        record("relu", fd_params(fwd, {&x}, eps));
    }
    {
        Tensor x = random_tensor(4, 6, rng, -2.0, 2.0);
        auto fwd = [&](Tape& t) { return t.abs_sum(t.add_scalar(t.sigmoid(t.leaf(&x)), 2.0)); };
        record("sigmoid", fd_params(fwd, {&x}, eps));
    }
    {
        Tensor logits = random_tensor(5, 3, rng, -2.0, 2.0);
        const std::vector<int> labels = {0, 2, 1, 1, 0};
        auto fwd = [&](Tape& t) { return t.softmax_cross_entropy(t.leaf(&logits), labels); };
        record("softmax_cross_entropy", fd_params(fwd, {&logits}, eps));
    }
    {
        Tensor x = random_tensor(6, 4, rng);
        auto fwd = [&](Tape& t) { return t.abs_sum(t.add_scalar(t.mean_rows(t.leaf(&x)), 2.0)); };
        record("mean_rows", fd_params(fwd, {&x}, eps));
    }
    {
        Tensor a = random_tensor(3, 4, rng);
        Tensor b = random_tensor(3, 2, rng);
        auto fwd = [&](Tape& t) {
            return t.abs_sum(t.add_scalar(t.concat_cols({t.leaf(&a), t.constant(b)}), 3.0));
        };
        record("concat_cols", fd_params(fwd, {&a}, eps));
    }
    {
        Tensor x = off_kink(random_tensor(4, 4, rng), 0.05);
        auto fwd = [&](Tape& t) { return t.abs_sum(t.leaf(&x)); };
        record("abs_sum", fd_params(fwd, {&x}, eps));
    }
    {
        // sigmoid keeps entries in (0,1), so after symmetrization and the
        // forced unit diagonal the input is a valid soft adjacency
        Tensor x = random_tensor(5, 5, rng, -2.0, 2.0);
        auto fwd = [&](Tape& t) {
            Tape::Id a = t.set_diag_one(t.symmetrize(t.sigmoid(t.leaf(&x))));
            return t.abs_sum(t.add_scalar(t.sym_normalize(a), 2.0));
        };
        record("sym_normalize", fd_params(fwd, {&x}, eps));
    }

    // small end-to-end instances
    GeneratorConfig gen_cfg;
    gen_cfg.in_dim = 6;
    gen_cfg.hidden = {5, 4};
    GnnConfig gnn_cfg;
    gnn_cfg.in_dim = 6;
    gnn_cfg.gcn_dims = {5, 4};
    gnn_cfg.head_dims = {5};
    gnn_cfg.n_classes = 3;
    gnn_cfg.dropout = 0.1;

    GeneratorParams psi = GeneratorParams::init(gen_cfg, rng);
    ClassifierParams theta = ClassifierParams::init(gnn_cfg, rng);
    // zero-initialized biases put fresh relu pre-activations exactly on the
    // kink; move them off before differentiating
    for (Tensor& b : psi.b)
        for (double& v : b.data) v = rng.uniform(-0.3, 0.3);
    for (auto* bs : {&theta.gcn_b, &theta.head_b})
        for (Tensor& b : *bs)
            for (double& v : b.data) v = rng.uniform(-0.3, 0.3);
    const Tensor feats = random_tensor(5, 6, rng);
    const std::vector<int> label = {1};

    {
        auto fwd = [&](Tape& t) { return t.abs_sum(pairwise_logits(t, feats, psi)); };
        record("pairwise_logits_psi", fd_params(fwd, psi.all(), eps));
    }
    {
        // the full training loss: sampled adjacency with re-seeded (frozen)
        // noise, normalization, GCN with dropout, JK head, CE + sparsity
        auto fwd = [&](Tape& t) {
            Rng noise(314159);
            Tape::Id adj = sample_adjacency(t, feats, psi, 0.7, noise, true);
            Tape::Id a_hat = normalize_adjacency(t, adj);
            auto layers = gcn_forward(t, t.constant(feats), a_hat, theta, true, noise);
            Tape::Id ce = t.softmax_cross_entropy(jk_logits(t, layers, theta, true, noise), label);
            return t.add(ce, sparsity_penalty(t, adj, 1e-2));
        };
        record("full_path_theta", fd_params(fwd, theta.all(), eps));
        record("full_path_psi", fd_params(fwd, psi.all(), eps));
    }
    return out;
}

struct GradcheckArgs {
    bool self_test_corrupt = false;
};

int cmd_gradcheck(const GradcheckArgs& a) {
    const double tol = 1e-4;
    const std::uint64_t seed = env_seed().value_or(12345);
    auto checks = run_gradcheck(seed, a.self_test_corrupt);
    double worst = 0.0;
    std::size_t failures = 0;
    for (const CheckOutcome& c : checks) {
        const bool ok = c.max_rel_err < tol;
        if (!ok) ++failures;
        worst = std::max(worst, c.max_rel_err);
        std::printf("check %-22s max rel err %.3e%s\n", c.name.c_str(), c.max_rel_err,
                    ok ? "" : "  FAIL");
    }
    std::printf("gradcheck: %zu checks, worst %.3e, tolerance %.0e: %s\n", checks.size(), worst,
                tol, failures == 0 ? "PASS" : "FAIL");
    return failures == 0 ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"cell-graph descriptors with bilevel patch-graph learning"};
    app.require_subcommand(1);

    SynthArgs sa;
    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic point-set dataset");
    synth->add_option("--spec", sa.spec_file, "dataset spec JSON")->required();
    synth->add_option("--out", sa.out_dir, "output directory")->required();

    ExtractArgs ea;
    CLI::App* extract = app.add_subcommand("extract", "compute per-patch feature vectors");
    extract->add_option("--manifest", ea.manifest_file, "dataset manifest")->required();
    extract->add_option("--out", ea.out_file, "output feature CSV")->required();
    extract->add_option("--d-p", ea.d_p, "cell-graph distance threshold (pixels)");
    extract->add_option("--theta-sim", ea.theta_sim, "cell-graph cosine similarity threshold");

    TrainArgs ta;
    CLI::App* train = app.add_subcommand("train", "bilevel training of generator and classifier");
    train->add_option("--features", ta.features_file, "feature CSV")->required();
    train->add_option("--manifest", ta.manifest_file, "dataset manifest")->required();
    train->add_option("--config", ta.config_file, "training config JSON (defaults when absent)");
    train->add_option("--out", ta.out_dir, "output directory")->required();
    train->add_option("--folds", ta.folds, "cross-validation folds (default: one split)");
    train->add_option("--baseline", ta.baseline, "ablation graph: fixed")
        ->check(CLI::IsMember({"fixed"}));
    train->add_option("--cos-threshold", ta.cos_threshold, "baseline cosine threshold");

    EvalArgs va;
    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval->add_option("--checkpoint", va.checkpoint_file, "checkpoint file")->required();
    eval->add_option("--features", va.features_file, "feature CSV")->required();
    eval->add_option("--manifest", va.manifest_file, "dataset manifest")->required();
    eval->add_option("--out", va.out_file, "output metrics JSON")->required();
    eval->add_option("--adjacency", va.adjacency, "adjacency mode: soft | hard")
        ->check(CLI::IsMember({"soft", "hard"}));
    eval->add_option("--split", va.split, "split: train | val | test | all")
        ->check(CLI::IsMember({"train", "val", "test", "all"}));
    eval->add_option("--fold", va.fold, "fold index for the split partition");

    ExportArgs xa;
    CLI::App* exp = app.add_subcommand("export-graph", "dump one image's learned patch graph");
    exp->add_option("--checkpoint", xa.checkpoint_file, "checkpoint file")->required();
    exp->add_option("--features", xa.features_file, "feature CSV")->required();
    exp->add_option("--manifest", xa.manifest_file, "dataset manifest")->required();
    exp->add_option("--image", xa.image_id, "image id")->required();
    exp->add_option("--out", xa.out_file, "output graph JSON")->required();
    exp->add_option("--min-weight", xa.min_weight, "minimum soft edge weight");

    GradcheckArgs ga;
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient audit");
    gradcheck->add_flag("--self-test-corrupt", ga.self_test_corrupt)->group("");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return cmd_synth(sa);
        if (extract->parsed()) return cmd_extract(ea);
        if (train->parsed()) return cmd_train(ta);
        if (eval->parsed()) return cmd_eval(va);
        if (exp->parsed()) return cmd_export_graph(xa);
        if (gradcheck->parsed()) return cmd_gradcheck(ga);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
