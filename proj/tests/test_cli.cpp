#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <abig/io.hpp>
#include <abig/synth.hpp>

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

using namespace abig;
namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string output; // stdout and stderr interleaved
};

// run the installed tool through the shell; `env` is prepended verbatim
RunResult run(const std::string& args, const std::string& env = "") {
    std::string cmd = env + (env.empty() ? "" : " ") + "\"" + ABIG_TOOL_PATH + "\" " + args +
                      " 2>&1";
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    RunResult r;
    char buf[4096];
    std::size_t n = 0;
    while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.output.append(buf, n);
    int status = pclose(p);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string q(const std::string& path) { return "\"" + path + "\""; }

// shared scratch tree, removed when the test binary exits
struct Workspace {
    fs::path root;
    Workspace() {
        root = fs::temp_directory_path() / ("abig_cli_" + std::to_string(::getpid()));
        fs::create_directories(root);
    }
    ~Workspace() {
        std::error_code ec;
        fs::remove_all(root, ec);
    }
    std::string p(const std::string& rel) const { return (root / rel).string(); }
};

Workspace& ws() {
    static Workspace w;
    return w;
}

DatasetSpec small_spec() {
    DatasetSpec s = default_spec(5);
    s.images_per_class = 4;
    s.grid_rows = s.grid_cols = 2;
    s.patch_size = s.stride = 128.0;
    return s;
}

TrainConfig small_cfg(std::size_t iters, std::uint64_t seed) {
    TrainConfig c;
    c.gnn.gcn_dims = {24, 24};
    c.gnn.head_dims = {16};
    c.gen.hidden = {16, 8};
    c.gen.gamma = 0.9;
    c.eta_theta = 1e-3;
    c.iterations = iters;
    c.batch = 4;
    c.seed = seed;
    return c;
}

// 12 images, 2x2 grids: enough to exercise every command quickly
const std::string& small_data() {
    static std::string dir = [] {
        std::string spec = ws().p("spec_small.json");
        write_text_file(spec, dataset_spec_to_json(small_spec()));
        std::string d = ws().p("data_small");
        RunResult r = run("synth --spec " + q(spec) + " --out " + q(d));
        REQUIRE(r.exit_code == 0);
        return d;
    }();
    return dir;
}

const std::string& small_feats() {
    static std::string path = [] {
        std::string f = ws().p("feats_small.csv");
        RunResult r =
            run("extract --manifest " + q(small_data() + "/manifest.json") + " --out " + q(f));
        REQUIRE(r.exit_code == 0);
        return f;
    }();
    return path;
}

// one short training run whose artifacts several cases poke at
const std::string& small_run() {
    static std::string dir = [] {
        std::string cfg = ws().p("cfg_small.json");
        write_text_file(cfg, train_config_to_json(small_cfg(8, 11)));
        std::string d = ws().p("run_small");
        RunResult r = run("train --features " + q(small_feats()) + " --manifest " +
                          q(small_data() + "/manifest.json") + " --config " + q(cfg) + " --out " +
                          q(d));
        REQUIRE(r.exit_code == 0);
        return d;
    }();
    return dir;
}

// full-size long-range dataset plus a default-length training run; shared by
// the count checks and the graph-contrast case
struct LongRange {
    std::string data, feats, run;
};

const LongRange& long_range() {
    static LongRange lr = [] {
        LongRange out;
        std::string spec = ws().p("spec_lr.json");
        write_text_file(spec, dataset_spec_to_json(long_range_spec(1)));
        out.data = ws().p("data_lr");
        RunResult r = run("synth --spec " + q(spec) + " --out " + q(out.data));
        REQUIRE(r.exit_code == 0);
        out.feats = ws().p("feats_lr.csv");
        r = run("extract --manifest " + q(out.data + "/manifest.json") + " --out " + q(out.feats));
        REQUIRE(r.exit_code == 0);
        out.run = ws().p("run_lr");
        r = run("train --features " + q(out.feats) + " --manifest " +
                q(out.data + "/manifest.json") + " --out " + q(out.run), "ABIG_SEED=1");
        REQUIRE(r.exit_code == 0);
        return out;
    }();
    return lr;
}

std::string slurp(const std::string& path) { return read_text_file(path); }

nlohmann::json parse_file(const std::string& path) {
    return nlohmann::json::parse(slurp(path));
}

std::size_t count_lines(const std::string& text) {
    std::size_t n = 0;
    for (char c : text)
        if (c == '\n') ++n;
    return n;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0 || nb == 0) return 0;
    return dot / std::sqrt(na * nb);
}

} // namespace

TEST_CASE("synth writes a dataset tree deterministically and rejects bad specs") {
    const std::string& d1 = small_data();
    CHECK(fs::exists(d1 + "/manifest.json"));
    Manifest m = read_manifest(d1 + "/manifest.json");
    CHECK(m.images.size() == 12);
    for (const ManifestImage& img : m.images) CHECK(fs::exists(d1 + "/" + img.cell_file));

    // rerun into a fresh directory: every file byte-identical
    std::string d2 = ws().p("data_small_again");
    RunResult r = run("synth --spec " + q(ws().p("spec_small.json")) + " --out " + q(d2));
    REQUIRE(r.exit_code == 0);
    std::size_t compared = 0;
    for (const auto& entry : fs::directory_iterator(d1)) {
        std::string name = entry.path().filename().string();
        CHECK(slurp(d1 + "/" + name) == slurp(d2 + "/" + name));
        ++compared;
    }
    CHECK(compared == 13); // manifest + 12 cell files

    write_text_file(ws().p("bad_spec.json"), "{broken");
    r = run("synth --spec " + q(ws().p("bad_spec.json")) + " --out " + q(ws().p("nowhere")));
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("spec") != std::string::npos);
}

TEST_CASE("extract emits one 69-feature row per patch and is rerun-stable") {
    std::string text = slurp(small_feats());
    CHECK(count_lines(text) == 1 + 12 * 4);
    std::size_t header_end = text.find('\n');
    CHECK(text.substr(0, 8) == "image_id");
    // 4 key columns + 69 features
    std::size_t commas = 0;
    for (char c : text.substr(0, header_end))
        if (c == ',') ++commas;
    CHECK(commas == 72);

    std::string again = ws().p("feats_small_again.csv");
    RunResult r =
        run("extract --manifest " + q(small_data() + "/manifest.json") + " --out " + q(again));
    REQUIRE(r.exit_code == 0);
    CHECK(slurp(again) == text);
}

TEST_CASE("extract names the file and line of a malformed cell record") {
    std::string broken = ws().p("data_broken");
    fs::create_directories(broken);
    for (const auto& entry : fs::directory_iterator(small_data()))
        fs::copy_file(entry.path(), broken + "/" + entry.path().filename().string());
    Manifest m = read_manifest(broken + "/manifest.json");
    std::string victim = broken + "/" + m.images[0].cell_file;
    write_text_file(victim, slurp(victim) + "p00_00,not_a_number,5\n");

    RunResult r = run("extract --manifest " + q(broken + "/manifest.json") + " --out " +
                      q(ws().p("feats_broken.csv")));
    CHECK(r.exit_code == 3);
    CHECK(r.output.find(m.images[0].cell_file) != std::string::npos);
    CHECK(r.output.find(":") != std::string::npos);
}

TEST_CASE("train writes checkpoint, metrics, loss curves and a config echo") {
    const std::string& d = small_run();
    for (const char* name :
         {"checkpoint.ckpt", "checkpoint.ckpt.json", "config.json", "losses.csv", "metrics.json"})
        CHECK(fs::exists(d + "/" + std::string(name)));

    auto cfg_echo = parse_file(d + "/config.json");
    CHECK(cfg_echo["iterations"] == 8);
    CHECK(count_lines(slurp(d + "/losses.csv")) == 1 + 8);

    auto metrics = parse_file(d + "/metrics.json");
    CHECK(metrics["accuracy"].is_number());
    CHECK(metrics["macro_f1"].is_number());
    CHECK(metrics["confusion"].size() == 3);
    CHECK(metrics["config"]["iterations"] == 8);
}

TEST_CASE("train prints the trainable parameter count") {
    std::string cfg = ws().p("cfg_count.json");
    write_text_file(cfg, train_config_to_json(small_cfg(0, 3)));
    RunResult r = run("train --features " + q(small_feats()) + " --manifest " +
                      q(small_data() + "/manifest.json") + " --config " + q(cfg) + " --out " +
                      q(ws().p("run_count")));
    REQUIRE(r.exit_code == 0);
    CHECK(r.output.find("trainable parameters: theta=") != std::string::npos);
    CHECK(r.output.find("total=") != std::string::npos);
}

TEST_CASE("train --folds 3 writes per-fold artifacts and aggregate metrics") {
    std::string cfg = ws().p("cfg_cv.json");
    write_text_file(cfg, train_config_to_json(small_cfg(5, 21)));
    std::string d = ws().p("run_cv");
    RunResult r = run("train --features " + q(small_feats()) + " --manifest " +
                      q(small_data() + "/manifest.json") + " --config " + q(cfg) + " --out " +
                      q(d) + " --folds 3");
    REQUIRE(r.exit_code == 0);

    for (int f = 0; f < 3; ++f) {
        CHECK(fs::exists(d + "/fold" + std::to_string(f) + ".ckpt"));
        CHECK(count_lines(slurp(d + "/fold" + std::to_string(f) + "_losses.csv")) == 1 + 5);
    }
    CHECK(count_lines(slurp(d + "/losses.csv")) == 1 + 5);

    auto metrics = parse_file(d + "/metrics.json");
    CHECK(metrics["folds"].size() == 3);
    CHECK(metrics["mean_accuracy"].is_number());
    CHECK(metrics["sd_accuracy"].is_number());
    double mean = 0;
    for (const auto& fold : metrics["folds"]) mean += fold["accuracy"].get<double>();
    mean /= 3.0;
    CHECK(metrics["mean_accuracy"].get<double>() == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("train --baseline fixed runs without a generator") {
    std::string cfg = ws().p("cfg_base.json");
    write_text_file(cfg, train_config_to_json(small_cfg(5, 31)));
    std::string d = ws().p("run_base");
    RunResult r = run("train --features " + q(small_feats()) + " --manifest " +
                      q(small_data() + "/manifest.json") + " --config " + q(cfg) + " --out " +
                      q(d) + " --baseline fixed --cos-threshold 0.8");
    REQUIRE(r.exit_code == 0);
    CHECK(fs::exists(d + "/metrics.json"));

    // no generator tensors in the payload, upper losses absent
    auto side = parse_file(d + "/checkpoint.ckpt.json");
    for (const auto& t : side["tensors"])
        CHECK(t["name"].get<std::string>().rfind("psi.", 0) != 0);
    CHECK(slurp(d + "/losses.csv").find("nan") != std::string::npos);

    // a generator-free checkpoint cannot back an eval run
    r = run("eval --checkpoint " + q(d + "/checkpoint.ckpt") + " --features " + q(small_feats()) +
            " --manifest " + q(small_data() + "/manifest.json") + " --out " +
            q(ws().p("base_eval.json")));
    CHECK(r.exit_code == 5);
}

TEST_CASE("eval reproduces training metrics byte for byte") {
    const std::string& d = small_run();
    std::string out = ws().p("eval_test.json");
    RunResult r = run("eval --checkpoint " + q(d + "/checkpoint.ckpt") + " --features " +
                      q(small_feats()) + " --manifest " + q(small_data() + "/manifest.json") +
                      " --out " + q(out) + " --split test");
    REQUIRE(r.exit_code == 0);
    CHECK(slurp(out) == slurp(d + "/metrics.json"));

    std::string out2 = ws().p("eval_test2.json");
    r = run("eval --checkpoint " + q(d + "/checkpoint.ckpt") + " --features " + q(small_feats()) +
            " --manifest " + q(small_data() + "/manifest.json") + " --out " + q(out2) +
            " --split test");
    REQUIRE(r.exit_code == 0);
    CHECK(slurp(out2) == slurp(out));

    // hard adjacency is a different mode but still a valid run
    r = run("eval --checkpoint " + q(d + "/checkpoint.ckpt") + " --features " + q(small_feats()) +
            " --manifest " + q(small_data() + "/manifest.json") + " --out " +
            q(ws().p("eval_hard.json")) + " --adjacency hard");
    CHECK(r.exit_code == 0);
}

TEST_CASE("eval rejects corrupt checkpoints and bad seeds") {
    std::string corrupt = ws().p("corrupt.ckpt");
    std::string full = slurp(small_run() + "/checkpoint.ckpt");
    write_text_file(corrupt, full.substr(0, 120));
    RunResult r = run("eval --checkpoint " + q(corrupt) + " --features " + q(small_feats()) +
                      " --manifest " + q(small_data() + "/manifest.json") + " --out " +
                      q(ws().p("x.json")));
    CHECK(r.exit_code == 5);

    write_text_file(corrupt, "BOGUSMAGIC" + full.substr(10));
    r = run("eval --checkpoint " + q(corrupt) + " --features " + q(small_feats()) +
            " --manifest " + q(small_data() + "/manifest.json") + " --out " +
            q(ws().p("x.json")));
    CHECK(r.exit_code == 5);

    r = run("eval --checkpoint " + q(small_run() + "/checkpoint.ckpt") + " --features " +
            q(small_feats()) + " --manifest " + q(small_data() + "/manifest.json") + " --out " +
            q(ws().p("x.json")), "ABIG_SEED=nope");
    CHECK(r.exit_code == 4);
}

TEST_CASE("training-split accuracy dominates test-split accuracy after convergence") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        std::string cfg = ws().p("cfg_conv" + std::to_string(seed) + ".json");
        write_text_file(cfg, train_config_to_json(small_cfg(40, seed)));
        std::string d = ws().p("run_conv" + std::to_string(seed));
        RunResult r = run("train --features " + q(small_feats()) + " --manifest " +
                          q(small_data() + "/manifest.json") + " --config " + q(cfg) + " --out " +
                          q(d));
        REQUIRE(r.exit_code == 0);

        std::map<std::string, double> acc;
        for (const char* split : {"train", "test"}) {
            std::string out = ws().p("conv_" + std::to_string(seed) + "_" + split + ".json");
            r = run("eval --checkpoint " + q(d + "/checkpoint.ckpt") + " --features " +
                    q(small_feats()) + " --manifest " + q(small_data() + "/manifest.json") +
                    " --out " + q(out) + " --split " + split);
            REQUIRE(r.exit_code == 0);
            acc[split] = parse_file(out)["accuracy"].get<double>();
        }
        CHECK(acc["train"] >= acc["test"]);
    }
}

TEST_CASE("export-graph honors the weight threshold and dedups pairs") {
    const std::string& d = small_run();
    auto dump = [&](double w, const std::string& out) {
        return run("export-graph --checkpoint " + q(d + "/checkpoint.ckpt") + " --features " +
                   q(small_feats()) + " --manifest " + q(small_data() + "/manifest.json") +
                   " --image img_002 --out " + q(out) + " --min-weight " + std::to_string(w));
    };

    std::string all = ws().p("g_all.json");
    REQUIRE(dump(0.0, all).exit_code == 0);
    auto g = parse_file(all);
    CHECK(g["image_id"] == "img_002");
    REQUIRE(g["nodes"].size() == 4);
    CHECK(g["edges"].size() == 4 * 3 / 2);
    for (const auto& node : g["nodes"]) CHECK(node["features"].size() == 69);

    std::string none = ws().p("g_none.json");
    REQUIRE(dump(1.1, none).exit_code == 0);
    CHECK(parse_file(none)["edges"].empty());

    RunResult r = run("export-graph --checkpoint " + q(d + "/checkpoint.ckpt") + " --features " +
                      q(small_feats()) + " --manifest " + q(small_data() + "/manifest.json") +
                      " --image ghost --out " + q(ws().p("g_ghost.json")));
    CHECK(r.exit_code == 3);
}

TEST_CASE("gradcheck lists its checks, passes clean and fails when corrupted") {
    RunResult r = run("gradcheck");
    CHECK(r.exit_code == 0);
    std::size_t checks = 0;
    for (std::size_t pos = 0; (pos = r.output.find("check ", pos)) != std::string::npos;
         pos += 6)
        ++checks;
    CHECK(checks >= 10);
    CHECK(r.output.find("PASS") != std::string::npos);

    r = run("gradcheck --self-test-corrupt");
    CHECK(r.exit_code == 1);
    CHECK(r.output.find("FAIL") != std::string::npos);
}

TEST_CASE("long-range set: 120 images, 1920 feature rows, default training") {
    const LongRange& lr = long_range();
    Manifest m = read_manifest(lr.data + "/manifest.json");
    CHECK(m.images.size() == 120);
    CHECK(count_lines(slurp(lr.feats)) == 1 + 1920);
    CHECK(fs::exists(lr.run + "/checkpoint.ckpt"));
    CHECK(count_lines(slurp(lr.run + "/losses.csv")) == 1 + 200);
}

TEST_CASE("learned graph connects patches that track each other's features") {
    const LongRange& lr = long_range();
    Manifest m = read_manifest(lr.data + "/manifest.json");

    // mean cosine similarity of each query patch to its connected versus
    // unconnected peers, pooled over queries and a spread of images
    double connected_sum = 0, unconnected_sum = 0;
    std::size_t connected_n = 0, unconnected_n = 0;
    for (std::size_t idx = 0; idx < m.images.size(); idx += 10) {
        const std::string& image = m.images[idx].id;
        std::string out = ws().p("contrast_" + image + ".json");
        RunResult r = run("export-graph --checkpoint " + q(lr.run + "/checkpoint.ckpt") +
                          " --features " + q(lr.feats) + " --manifest " +
                          q(lr.data + "/manifest.json") + " --image " + image + " --out " +
                          q(out) + " --min-weight 0.5");
        REQUIRE(r.exit_code == 0);
        auto g = parse_file(out);

        std::vector<std::vector<double>> feats;
        std::map<std::string, std::size_t> index;
        for (const auto& node : g["nodes"]) {
            index[node["patch_id"].get<std::string>()] = feats.size();
            feats.push_back(node["features"].get<std::vector<double>>());
        }
        std::vector<std::vector<bool>> adj(feats.size(), std::vector<bool>(feats.size(), false));
        for (const auto& e : g["edges"]) {
            std::size_t s = index.at(e["source"].get<std::string>());
            std::size_t t = index.at(e["target"].get<std::string>());
            adj[s][t] = adj[t][s] = true;
        }
        for (std::size_t i = 0; i < feats.size(); ++i)
            for (std::size_t j = 0; j < feats.size(); ++j) {
                if (i == j) continue;
                double c = cosine(feats[i], feats[j]);
                if (adj[i][j]) {
                    connected_sum += c;
                    ++connected_n;
                } else {
                    unconnected_sum += c;
                    ++unconnected_n;
                }
            }
    }
    REQUIRE(connected_n > 0);
    REQUIRE(unconnected_n > 0);
    CHECK(connected_sum / double(connected_n) > unconnected_sum / double(unconnected_n));
}
