#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <abig/io.hpp>

#include <json.hpp>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

using namespace abig;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("abig_io_" + std::to_string(::getpid()) + "_" +
                                            std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
    static std::size_t& counter() {
        static std::size_t c = 0;
        return c;
    }
};

bool bits_equal(const Tensor& a, const Tensor& b) {
    if (a.rows != b.rows || a.cols != b.cols) return false;
    return std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

DatasetSpec small_spec(std::uint64_t seed) {
    DatasetSpec spec = default_spec(seed);
    spec.images_per_class = 1;
    spec.grid_rows = 2;
    spec.grid_cols = 2;
    spec.patch_size = 96.0;
    spec.stride = 96.0;
    for (PatternSpec& c : spec.classes) c.intensity = 30.0 / (96.0 * 96.0);
    return spec;
}

Dataset tiny_feature_dataset(std::size_t images, std::size_t patches, std::size_t dim, Rng& rng) {
    Dataset data;
    data.class_names = {"a", "b", "c"};
    for (std::size_t i = 0; i < images; ++i) {
        Sample s;
        s.image_id = "img_" + std::to_string(i);
        s.label = int(i % 3);
        s.features = Tensor(patches, dim);
        for (auto& v : s.features.data) v = rng.uniform(-2.0, 2.0);
        data.samples.push_back(std::move(s));
    }
    return data;
}

TrainConfig tiny_config(std::uint64_t seed) {
    TrainConfig cfg;
    cfg.gnn.in_dim = 4;
    cfg.gnn.gcn_dims = {5, 4};
    cfg.gnn.head_dims = {3};
    cfg.gnn.n_classes = 3;
    cfg.gen.in_dim = 4;
    cfg.gen.hidden = {4, 3};
    cfg.iterations = 2;
    cfg.batch = 2;
    cfg.seed = seed;
    return cfg;
}

} // namespace

TEST_CASE("a generated dataset survives the manifest and cell files") {
    TempDir dir;
    SynthDataset ds = generate_dataset(small_spec(31));
    write_dataset(ds, dir.path.string());

    Manifest m = read_manifest(dir.file("manifest.json"));
    CHECK(m.dataset == ds.spec.name);
    CHECK(m.class_names == ds.spec.class_names);
    CHECK(m.patch_size == ds.spec.patch_size);
    CHECK(m.stride == ds.spec.stride);
    REQUIRE(m.images.size() == ds.images.size());

    for (std::size_t i = 0; i < m.images.size(); ++i) {
        const ManifestImage& mi = m.images[i];
        const SynthImage& si = ds.images[i];
        CHECK(mi.id == si.image_id);
        CHECK(mi.label == si.label);
        CHECK(mi.grid_rows == 2);
        CHECK(mi.grid_cols == 2);
        REQUIRE(mi.patches.size() == si.patches.size());

        auto cells = read_cells(dir.file(mi.cell_file));
        for (std::size_t p = 0; p < si.patches.size(); ++p) {
            CHECK(mi.patches[p].id == si.patches[p].patch_id);
            CHECK(mi.patches[p].row == si.patches[p].row);
            CHECK(mi.patches[p].col == si.patches[p].col);
            const auto& got = cells[si.patches[p].patch_id];
            const auto& want = si.patches[p].cells;
            REQUIRE(got.size() == want.size());
            for (std::size_t c = 0; c < want.size(); ++c) {
                CHECK(got[c].centroid.x == want[c].centroid.x);
                CHECK(got[c].centroid.y == want[c].centroid.y);
                for (std::size_t a = 0; a < 12; ++a) CHECK(got[c].attrs[a] == want[c].attrs[a]);
            }
        }
    }

    // determinism: writing the same dataset twice yields identical bytes
    TempDir dir2;
    write_dataset(ds, dir2.path.string());
    CHECK(read_text_file(dir.file("manifest.json")) == read_text_file(dir2.file("manifest.json")));
    CHECK(read_text_file(dir.file(m.images[0].cell_file)) ==
          read_text_file(dir2.file(m.images[0].cell_file)));
}

TEST_CASE("malformed cell files name the file and line") {
    TempDir dir;
    const std::string path = dir.file("bad.cells.csv");
    const std::string header = "patch_id,cx,cy,a01,a02,a03,a04,a05,a06,a07,a08,a09,a10,a11,a12";

    write_text_file(path, "nonsense\n");
    CHECK_THROWS_WITH_AS(read_cells(path), doctest::Contains(":1"), Error);

    write_text_file(path, header + "\np0,1.0,2.0,1,2,3\n");
    try {
        read_cells(path);
        FAIL("short row accepted");
    } catch (const Error& e) {
        CHECK(e.code() == Err::MalformedRecord);
        CHECK(std::string(e.what()).find(path) != std::string::npos);
        CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }

    write_text_file(path, header + "\np0,1.0,2.0,1,2,3,4,5,6,7,8,9,10,11,12\n" +
                              "p0,1.0,oops,1,2,3,4,5,6,7,8,9,10,11,12\n");
    try {
        read_cells(path);
        FAIL("bad number accepted");
    } catch (const Error& e) {
        CHECK(e.code() == Err::MalformedRecord);
        CHECK(std::string(e.what()).find(":3") != std::string::npos);
    }

    write_text_file(path, header + "\n,1.0,2.0,1,2,3,4,5,6,7,8,9,10,11,12\n");
    CHECK_THROWS_AS(read_cells(path), Error);
}

TEST_CASE("manifest validation rejects duplicates and bad labels") {
    TempDir dir;
    const char* base = R"({
      "dataset": "d", "class_names": ["x", "y"], "patch_size": 64.0, "stride": 64.0,
      "images": [
        {"id": "i0", "label": 0, "grid_rows": 2, "grid_cols": 2, "cells": "c.csv",
         "patches": [{"id": "p0", "row": 0, "col": 0}]},
        {"id": "i0", "label": 1, "grid_rows": 2, "grid_cols": 2, "cells": "c.csv",
         "patches": [{"id": "p0", "row": 0, "col": 0}]}
      ]})";
    write_text_file(dir.file("m.json"), base);
    CHECK_THROWS_AS(read_manifest(dir.file("m.json")), Error);

    write_text_file(dir.file("m2.json"), R"({
      "dataset": "d", "class_names": ["x"], "patch_size": 64.0, "stride": 64.0,
      "images": [{"id": "i0", "label": 3, "grid_rows": 2, "grid_cols": 2, "cells": "c.csv",
                  "patches": [{"id": "p0", "row": 0, "col": 0}]}]})");
    CHECK_THROWS_AS(read_manifest(dir.file("m2.json")), Error);

    write_text_file(dir.file("m3.json"), "{not json");
    CHECK_THROWS_AS(read_manifest(dir.file("m3.json")), Error);

    CHECK_THROWS_AS(read_manifest(dir.file("missing.json")), Error);
}

TEST_CASE("feature files round-trip bitwise and sort their rows") {
    TempDir dir;
    Rng rng(41);
    std::vector<FeatureRow> rows;
    for (const char* img : {"img_b", "img_a"})
        for (const char* patch : {"p01", "p00"}) {
            FeatureRow r;
            r.image_id = img;
            r.patch_id = patch;
            r.row = patch[2] - '0';
            r.col = 0;
            for (auto& v : r.values) v = rng.uniform(-10.0, 10.0) * std::pow(10.0, rng.uniform(-8, 8));
            rows.push_back(std::move(r));
        }

    const std::string path = dir.file("features.csv");
    write_features(path, rows);
    std::vector<FeatureRow> got = read_features(path);
    REQUIRE(got.size() == 4);
    CHECK(got[0].image_id == "img_a");
    CHECK(got[0].patch_id == "p00");
    CHECK(got[1].patch_id == "p01");
    CHECK(got[2].image_id == "img_b");

    for (const FeatureRow& orig : rows) {
        auto it = std::find_if(got.begin(), got.end(), [&](const FeatureRow& g) {
            return g.image_id == orig.image_id && g.patch_id == orig.patch_id;
        });
        REQUIRE(it != got.end());
        CHECK(it->row == orig.row);
        CHECK(std::memcmp(it->values.data(), orig.values.data(), 69 * sizeof(double)) == 0);
    }

    write_features(dir.file("features2.csv"), rows);
    CHECK(read_text_file(path) == read_text_file(dir.file("features2.csv")));

    write_text_file(path, "image_id,patch_id\n");
    CHECK_THROWS_AS(read_features(path), Error);
}

TEST_CASE("feature rows join against the manifest") {
    Manifest m;
    m.dataset = "d";
    m.class_names = {"x", "y"};
    for (int i = 0; i < 2; ++i) {
        ManifestImage img;
        img.id = "img_" + std::to_string(i);
        img.label = i;
        img.grid_rows = 1;
        img.grid_cols = 2;
        img.cell_file = "c.csv";
        img.patches = {{"p00_00", 0, 0}, {"p00_01", 0, 1}};
        m.images.push_back(std::move(img));
    }

    Rng rng(42);
    std::vector<FeatureRow> rows;
    for (int i = 1; i >= 0; --i) // deliberately unsorted
        for (const char* p : {"p00_01", "p00_00"}) {
            FeatureRow r;
            r.image_id = "img_" + std::to_string(i);
            r.patch_id = p;
            for (auto& v : r.values) v = rng.uniform(-1.0, 1.0);
            rows.push_back(std::move(r));
        }

    Dataset data = dataset_from_features(m, rows);
    REQUIRE(data.samples.size() == 2);
    CHECK(data.class_names == m.class_names);
    CHECK(data.samples[0].image_id == "img_0");
    CHECK(data.samples[0].label == 0);
    CHECK(data.samples[1].label == 1);
    REQUIRE(data.samples[0].features.rows == 2);
    // row 0 of the sample is the lexicographically first patch id
    for (std::size_t j = 0; j < 69; ++j) {
        CHECK(data.samples[0].features.at(0, j) == rows[3].values[j]); // img_0 / p00_00
        CHECK(data.samples[0].features.at(1, j) == rows[2].values[j]); // img_0 / p00_01
    }

    std::vector<FeatureRow> missing(rows.begin(), rows.end() - 1);
    CHECK_THROWS_AS(dataset_from_features(m, missing), Error);

    std::vector<FeatureRow> stray = rows;
    stray.push_back(rows[0]);
    stray.back().image_id = "img_9";
    stray.push_back(rows[0]);
    stray.back().patch_id = "p00_01";
    CHECK_THROWS_AS(dataset_from_features(m, stray), Error);
}

TEST_CASE("train config json round-trips and rejects junk") {
    TrainConfig cfg = tiny_config(99);
    cfg.eta_theta = 3e-4;
    cfg.lambda_sparse = 0.01;
    cfg.eval_mode = AdjacencyMode::Hard;
    cfg.normalize_features = false;

    TrainConfig back = train_config_from_json(train_config_to_json(cfg));
    CHECK(back.gnn.in_dim == cfg.gnn.in_dim);
    CHECK(back.gnn.gcn_dims == cfg.gnn.gcn_dims);
    CHECK(back.gnn.head_dims == cfg.gnn.head_dims);
    CHECK(back.gnn.n_classes == cfg.gnn.n_classes);
    CHECK(back.gnn.dropout == cfg.gnn.dropout);
    CHECK(back.gen.hidden == cfg.gen.hidden);
    CHECK(back.gen.tau_init == cfg.gen.tau_init);
    CHECK(back.eta_theta == cfg.eta_theta);
    CHECK(back.eta_psi == cfg.eta_psi);
    CHECK(back.iterations == cfg.iterations);
    CHECK(back.batch == cfg.batch);
    CHECK(back.lambda_sparse == cfg.lambda_sparse);
    CHECK(back.seed == cfg.seed);
    CHECK(back.normalize_features == cfg.normalize_features);
    CHECK(back.eval_mode == AdjacencyMode::Hard);

    // partial configs keep defaults for what they omit
    TrainConfig partial = train_config_from_json(R"({"eta_theta": 5e-4})");
    CHECK(partial.eta_theta == 5e-4);
    CHECK(partial.eta_psi == 1e-3);
    CHECK(partial.iterations == 200);
    CHECK(partial.gnn.gcn_dims == std::vector<std::size_t>{128, 128, 128});

    CHECK_THROWS_AS(train_config_from_json(R"({"learning_rate": 1})"), Error);
    CHECK_THROWS_AS(train_config_from_json(R"({"eval_mode": "loose"})"), Error);
    CHECK_THROWS_AS(train_config_from_json(R"({"eta_theta": "fast"})"), Error);
    CHECK_THROWS_AS(train_config_from_json("not json"), Error);
    // negative counts would wrap to huge sizes if read unchecked
    CHECK_THROWS_AS(train_config_from_json(R"({"iterations": -3})"), Error);
    CHECK_THROWS_AS(train_config_from_json(R"({"gnn": {"gcn_dims": [64, -1]}})"), Error);
    CHECK_THROWS_AS(train_config_from_json(R"({"seed": -7})"), Error);
}

TEST_CASE("dataset spec json round-trips both builtin specs") {
    for (DatasetSpec spec : {default_spec(17), long_range_spec(18)}) {
        DatasetSpec back = dataset_spec_from_json(dataset_spec_to_json(spec));
        CHECK(back.name == spec.name);
        CHECK(back.class_names == spec.class_names);
        CHECK(back.images_per_class == spec.images_per_class);
        CHECK(back.grid_rows == spec.grid_rows);
        CHECK(back.grid_cols == spec.grid_cols);
        CHECK(back.patch_size == spec.patch_size);
        CHECK(back.stride == spec.stride);
        CHECK(back.seed == spec.seed);
        CHECK(back.long_range == spec.long_range);
        CHECK(back.dispersion_delta == spec.dispersion_delta);
        CHECK(back.intensity_log_range == spec.intensity_log_range);
        REQUIRE(back.classes.size() == spec.classes.size());
        for (std::size_t c = 0; c < spec.classes.size(); ++c) {
            CHECK(back.classes[c].label == spec.classes[c].label);
            CHECK(back.classes[c].kind == spec.classes[c].kind);
            CHECK(back.classes[c].intensity == spec.classes[c].intensity);
            CHECK(back.classes[c].cluster_radius == spec.classes[c].cluster_radius);
            CHECK(back.classes[c].offspring == spec.classes[c].offspring);
            CHECK(back.classes[c].lattice_jitter == spec.classes[c].lattice_jitter);
            CHECK(back.classes[c].attrs.mean == spec.classes[c].attrs.mean);
            CHECK(back.classes[c].attrs.noise == spec.classes[c].attrs.noise);
        }
        CHECK_NOTHROW(back.validate());
    }

    CHECK_THROWS_AS(dataset_spec_from_json(R"({"grid": 4})"), Error);
    CHECK_THROWS_AS(dataset_spec_from_json(R"({"classes": [{"kind": "fractal"}]})"), Error);
    CHECK_THROWS_AS(dataset_spec_from_json(R"({"classes": [{"attr_mean": [1, 2]}]})"), Error);
    CHECK_THROWS_AS(dataset_spec_from_json(R"({"grid_rows": -2})"), Error);
    CHECK_THROWS_AS(dataset_spec_from_json("[]"), Error);
}

TEST_CASE("checkpoints round-trip bitwise") {
    TempDir dir;
    Rng rng(51);
    Dataset data = tiny_feature_dataset(6, 3, 4, rng);
    TrainConfig cfg = tiny_config(7);
    TrainResult result = train(data, {0, 1, 2, 3}, {4, 5}, cfg);

    const std::string config_json = train_config_to_json(cfg);
    Checkpoint ck = checkpoint_from_result(result, config_json, cfg.seed);
    const std::string path = dir.file("model.ckpt");
    save_checkpoint(path, ck);
    CHECK(fs::exists(path + ".json"));

    Checkpoint back = load_checkpoint(path);
    CHECK(back.version == ck.version);
    CHECK(back.config_json == ck.config_json);
    CHECK(back.final_tau == ck.final_tau);
    CHECK(back.rng_seed == ck.rng_seed);
    CHECK(back.history_digest == ck.history_digest);
    REQUIRE(back.tensors.size() == ck.tensors.size());
    for (std::size_t i = 0; i < ck.tensors.size(); ++i) {
        CHECK(back.tensors[i].name == ck.tensors[i].name);
        CHECK(bits_equal(back.tensors[i].value, ck.tensors[i].value));
    }

    // a second save of the loaded checkpoint is byte-identical
    save_checkpoint(dir.file("model2.ckpt"), back);
    CHECK(read_text_file(path) == read_text_file(dir.file("model2.ckpt")));
    CHECK(read_text_file(path + ".json") == read_text_file(dir.file("model2.ckpt.json")));

    // restoring reproduces parameters, standardizer and optimizer state
    TrainResult restored = result_from_checkpoint(back);
    auto ta = result.theta.all(), tb = restored.theta.all();
    REQUIRE(ta.size() == tb.size());
    for (std::size_t i = 0; i < ta.size(); ++i) CHECK(bits_equal(*ta[i], *tb[i]));
    auto pa = result.psi.all(), pb = restored.psi.all();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(bits_equal(*pa[i], *pb[i]));
    CHECK(restored.stand.mean == result.stand.mean);
    CHECK(restored.stand.scale == result.stand.scale);
    CHECK(restored.final_tau == result.final_tau);
    CHECK(restored.mean_offdiag_mass == result.mean_offdiag_mass);
    CHECK(restored.opt_theta.step == result.opt_theta.step);
    CHECK(restored.opt_theta.m == result.opt_theta.m);
    CHECK(restored.opt_theta.v == result.opt_theta.v);
    CHECK(restored.opt_psi.step == result.opt_psi.step);
    CHECK(restored.opt_psi.m == result.opt_psi.m);
    CHECK(restored.opt_psi.v == result.opt_psi.v);

    // restored parameters classify exactly like the originals
    Tensor x = result.stand.apply(data.samples[4].features);
    Tensor a = eval_adjacency(x, result.psi, AdjacencyMode::Soft);
    Tensor a2 = eval_adjacency(result.stand.apply(data.samples[4].features), restored.psi,
                               AdjacencyMode::Soft);
    CHECK(bits_equal(a, a2));
    CHECK(predict(x, a, result.theta) == predict(x, a2, restored.theta));
}

TEST_CASE("checkpoint loading rejects foreign and damaged files") {
    TempDir dir;
    Rng rng(52);
    Dataset data = tiny_feature_dataset(4, 3, 4, rng);
    TrainConfig cfg = tiny_config(8);
    cfg.iterations = 1;
    TrainResult result = train(data, {0, 1}, {2, 3}, cfg);
    Checkpoint ck = checkpoint_from_result(result, train_config_to_json(cfg), cfg.seed);
    const std::string path = dir.file("m.ckpt");
    save_checkpoint(path, ck);

    std::string bytes = read_text_file(path);

    std::string wrong_magic = bytes;
    wrong_magic[0] = 'X';
    write_text_file(dir.file("magic.ckpt"), wrong_magic);
    CHECK_THROWS_AS(load_checkpoint(dir.file("magic.ckpt")), Error);

    std::string wrong_version = bytes;
    wrong_version[8] = 9;
    write_text_file(dir.file("version.ckpt"), wrong_version);
    try {
        load_checkpoint(dir.file("version.ckpt"));
        FAIL("version mismatch accepted");
    } catch (const Error& e) {
        CHECK(e.code() == Err::CheckpointVersion);
    }

    write_text_file(dir.file("trunc.ckpt"), bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(load_checkpoint(dir.file("trunc.ckpt")), Error);

    write_text_file(dir.file("trail.ckpt"), bytes + "extra");
    CHECK_THROWS_AS(load_checkpoint(dir.file("trail.ckpt")), Error);

    CHECK_THROWS_AS(load_checkpoint(dir.file("absent.ckpt")), Error);

    // structurally valid checkpoint missing a required tensor
    Checkpoint gutted = ck;
    gutted.tensors.erase(gutted.tensors.begin()); // theta.0
    save_checkpoint(dir.file("gutted.ckpt"), gutted);
    CHECK_THROWS_AS(result_from_checkpoint(load_checkpoint(dir.file("gutted.ckpt"))), Error);
}

TEST_CASE("loss curves serialize one line per iteration") {
    LossCurves curves;
    curves.lower = {1.5, 0.75, 0.5};
    curves.upper = {2.0, 1.0, 0.25};
    std::string csv = losses_to_csv(curves);
    CHECK(csv == "iteration,lower_loss,upper_loss\n1,1.5,2\n2,0.75,1\n3,0.5,0.25\n");
    CHECK(losses_to_csv(curves) == csv);
    CHECK(losses_to_csv(LossCurves{}) == "iteration,lower_loss,upper_loss\n");
}

TEST_CASE("metrics json embeds the config echo") {
    Metrics m;
    m.accuracy = 0.75;
    m.macro_f1 = 0.5;
    m.confusion = {{3, 1}, {0, 4}};
    std::string text = metrics_to_json(m, {"x", "y"}, R"({"seed": 5})");
    auto j = nlohmann::json::parse(text);
    CHECK(j["accuracy"] == 0.75);
    CHECK(j["macro_f1"] == 0.5);
    CHECK(j["class_names"] == std::vector<std::string>{"x", "y"});
    CHECK(j["confusion"][0][0] == 3);
    CHECK(j["config"]["seed"] == 5);

    CvResult cv;
    cv.fold_metrics = {m, m};
    cv.mean_accuracy = 0.75;
    cv.sd_accuracy = 0.0;
    cv.mean_f1 = 0.5;
    cv.sd_f1 = 0.0;
    auto jc = nlohmann::json::parse(cv_metrics_to_json(cv, {"x", "y"}, R"({"seed": 5})"));
    CHECK(jc["folds"].size() == 2);
    CHECK(jc["mean_accuracy"] == 0.75);
    CHECK(jc["config"]["seed"] == 5);
}

TEST_CASE("graph export lists nodes and deduplicated edges") {
    std::vector<ManifestPatch> patches = {{"p0", 0, 0}, {"p1", 0, 1}, {"p2", 1, 0}};
    Tensor features(3, 69);
    Rng rng(61);
    for (auto& v : features.data) v = rng.uniform(-1.0, 1.0);
    Tensor adj(3, 3);
    adj.data = {1.0, 0.9, 0.2, //
                0.9, 1.0, 0.6, //
                0.2, 0.6, 1.0};

    auto j = nlohmann::json::parse(graph_export_json("img_0", patches, features, adj, 0.5));
    CHECK(j["image_id"] == "img_0");
    REQUIRE(j["nodes"].size() == 3);
    CHECK(j["nodes"][0]["patch_id"] == "p0");
    CHECK(j["nodes"][2]["row"] == 1);
    REQUIRE(j["nodes"][1]["features"].size() == 69);
    CHECK(j["nodes"][1]["features"][0].get<double>() == features.at(1, 0));

    REQUIRE(j["edges"].size() == 2); // 0-1 at 0.9 and 1-2 at 0.6
    CHECK(j["edges"][0]["source"] == "p0");
    CHECK(j["edges"][0]["target"] == "p1");
    CHECK(j["edges"][0]["weight"].get<double>() == 0.9);
    CHECK(j["edges"][1]["source"] == "p1");
    CHECK(j["edges"][1]["target"] == "p2");

    auto none = nlohmann::json::parse(graph_export_json("img_0", patches, features, adj, 1.1));
    CHECK(none["edges"].empty());

    auto all = nlohmann::json::parse(graph_export_json("img_0", patches, features, adj, 0.0));
    CHECK(all["edges"].size() == 3); // n(n-1)/2

    Tensor bad(2, 2);
    CHECK_THROWS_AS(graph_export_json("img_0", patches, features, bad, 0.5), Error);
}

TEST_CASE("fnv1a64 matches the reference value") {
    CHECK(fnv1a64("abc", 3) == 0xe71fa2190541574bull);
    CHECK(fnv1a64("", 0) == 14695981039346656037ull);
}
