#include <abig/io.hpp>

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace abig {

using ordered_json = nlohmann::ordered_json;

namespace {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& field, const std::string& file, std::size_t line) {
    const char* s = field.c_str();
    char* end = nullptr;
    double v = std::strtod(s, &end);
    if (end == s || *end != '\0')
        fail(Err::MalformedRecord, file + ":" + std::to_string(line) + ": bad number '" + field + "'");
    return v;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

// newline-split that tolerates a trailing newline and CRLF
std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t nl = text.find('\n', start);
        if (nl == std::string::npos) {
            if (start < text.size()) out.push_back(text.substr(start));
            break;
        }
        std::string line = text.substr(start, nl - start);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        out.push_back(std::move(line));
        start = nl + 1;
    }
    return out;
}

std::string cells_header() {
    std::string h = "patch_id,cx,cy";
    for (int a = 1; a <= 12; ++a) {
        char buf[8];
        std::snprintf(buf, sizeof(buf), ",a%02d", a);
        h += buf;
    }
    return h;
}

std::string features_header() {
    std::string h = "image_id,patch_id,row,col";
    for (int f = 1; f <= 69; ++f) {
        char buf[8];
        std::snprintf(buf, sizeof(buf), ",f%03d", f);
        h += buf;
    }
    return h;
}

void reject_unknown_keys(const ordered_json& obj, std::initializer_list<const char*> known,
                         Err code, const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : known)
            if (it.key() == k) {
                ok = true;
                break;
            }
        if (!ok) fail(code, where + ": unknown key '" + it.key() + "'");
    }
}

// ---- binary checkpoint encoding --------------------------------------------

constexpr char kMagic[8] = {'A', 'B', 'I', 'G', 'C', 'K', 'P', 'T'};

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;
    std::string file;

    void need(std::size_t n) {
        if (pos + n > buf.size())
            fail(Err::CheckpointVersion, file + ": truncated checkpoint");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(std::uint8_t(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(std::uint8_t(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    double f64() {
        std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

std::vector<NamedTensor> adam_tensors(const Adam& opt, const std::string& prefix) {
    std::vector<NamedTensor> out;
    for (std::size_t i = 0; i < opt.m.size(); ++i) {
        Tensor tm(1, opt.m[i].size()), tv(1, opt.v[i].size());
        tm.data = opt.m[i];
        tv.data = opt.v[i];
        out.push_back({prefix + ".m" + std::to_string(i), std::move(tm)});
        out.push_back({prefix + ".v" + std::to_string(i), std::move(tv)});
    }
    Tensor step(1, 1);
    step.data = {double(opt.step)};
    out.push_back({prefix + ".step", std::move(step)});
    return out;
}

const Tensor& find_tensor(const Checkpoint& ck, const std::string& name) {
    for (const NamedTensor& t : ck.tensors)
        if (t.name == name) return t.value;
    fail(Err::CheckpointVersion, "checkpoint is missing tensor '" + name + "'");
}

void restore_adam(const Checkpoint& ck, const std::string& prefix, double lr,
                  const std::vector<Tensor*>& params, Adam& opt) {
    opt = Adam(lr);
    opt.attach(params);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Tensor& m = find_tensor(ck, prefix + ".m" + std::to_string(i));
        const Tensor& v = find_tensor(ck, prefix + ".v" + std::to_string(i));
        if (m.data.size() != opt.m[i].size() || v.data.size() != opt.v[i].size())
            fail(Err::CheckpointVersion, "optimizer state shape mismatch in checkpoint");
        opt.m[i] = m.data;
        opt.v[i] = v.data;
    }
    opt.step = std::size_t(find_tensor(ck, prefix + ".step").data[0]);
}

} // namespace

std::uint64_t fnv1a64(const void* data, std::size_t bytes, std::uint64_t seed) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Err::IoFailure, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(Err::IoFailure, "cannot write " + path);
    out << text;
    if (!out) fail(Err::IoFailure, "short write to " + path);
}

// ---- dataset files ----------------------------------------------------------

void write_dataset(const SynthDataset& ds, const std::string& dir) {
    std::filesystem::create_directories(dir);
    ordered_json manifest;
    manifest["dataset"] = ds.spec.name;
    manifest["class_names"] = ds.spec.class_names;
    manifest["patch_size"] = ds.spec.patch_size;
    manifest["stride"] = ds.spec.stride;
    manifest["images"] = ordered_json::array();

    for (const SynthImage& img : ds.images) {
        std::string cell_file = img.image_id + ".cells.csv";
        std::string csv = cells_header() + "\n";
        for (const SynthPatch& p : img.patches)
            for (const CellRecord& c : p.cells) {
                csv += p.patch_id;
                csv += ',';
                csv += fmt17(c.centroid.x);
                csv += ',';
                csv += fmt17(c.centroid.y);
                for (double a : c.attrs) {
                    csv += ',';
                    csv += fmt17(a);
                }
                csv += '\n';
            }
        write_text_file(dir + "/" + cell_file, csv);

        ordered_json entry;
        entry["id"] = img.image_id;
        entry["label"] = img.label;
        entry["grid_rows"] = ds.spec.grid_rows;
        entry["grid_cols"] = ds.spec.grid_cols;
        entry["cells"] = cell_file;
        entry["patches"] = ordered_json::array();
        for (const SynthPatch& p : img.patches)
            entry["patches"].push_back(
                ordered_json{{"id", p.patch_id}, {"row", p.row}, {"col", p.col}});
        manifest["images"].push_back(std::move(entry));
    }
    write_text_file(dir + "/manifest.json", manifest.dump(2) + "\n");
}

Manifest read_manifest(const std::string& path) {
    ordered_json j;
    try {
        j = ordered_json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        fail(Err::MalformedRecord, path + ": " + e.what());
    }
    Manifest m;
    try {
        m.dataset = j.at("dataset").get<std::string>();
        m.class_names = j.at("class_names").get<std::vector<std::string>>();
        m.patch_size = j.at("patch_size").get<double>();
        m.stride = j.at("stride").get<double>();
        for (const auto& entry : j.at("images")) {
            ManifestImage img;
            img.id = entry.at("id").get<std::string>();
            img.label = entry.at("label").get<int>();
            img.grid_rows = entry.at("grid_rows").get<std::size_t>();
            img.grid_cols = entry.at("grid_cols").get<std::size_t>();
            img.cell_file = entry.at("cells").get<std::string>();
            for (const auto& p : entry.at("patches"))
                img.patches.push_back({p.at("id").get<std::string>(),
                                       p.at("row").get<std::size_t>(),
                                       p.at("col").get<std::size_t>()});
            m.images.push_back(std::move(img));
        }
    } catch (const nlohmann::json::exception& e) {
        fail(Err::MalformedRecord, path + ": " + e.what());
    }
    if (!(m.patch_size > 0) || !(m.stride > 0))
        fail(Err::MalformedRecord, path + ": patch_size and stride must be positive");
    std::vector<std::string> ids;
    for (const ManifestImage& img : m.images) {
        ids.push_back(img.id);
        if (img.patches.empty())
            fail(Err::MalformedRecord, path + ": image " + img.id + " has no patches");
        if (img.label < 0 || std::size_t(img.label) >= m.class_names.size())
            fail(Err::MalformedRecord, path + ": image " + img.id + " has an out-of-range label");
    }
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
        fail(Err::MalformedRecord, path + ": duplicate image ids");
    return m;
}

std::map<std::string, std::vector<CellRecord>> read_cells(const std::string& path) {
    const std::string text = read_text_file(path);
    std::vector<std::string> lines = split_lines(text);
    if (lines.empty() || lines[0] != cells_header())
        fail(Err::MalformedRecord, path + ":1: bad or missing cell header");
    std::map<std::string, std::vector<CellRecord>> out;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        std::vector<std::string> f = split_csv(lines[i]);
        if (f.size() != 15)
            fail(Err::MalformedRecord,
                 path + ":" + std::to_string(i + 1) + ": expected 15 fields, got " +
                     std::to_string(f.size()));
        if (f[0].empty())
            fail(Err::MalformedRecord, path + ":" + std::to_string(i + 1) + ": empty patch id");
        CellRecord c;
        c.centroid.x = parse_double(f[1], path, i + 1);
        c.centroid.y = parse_double(f[2], path, i + 1);
        for (std::size_t a = 0; a < 12; ++a) c.attrs[a] = parse_double(f[3 + a], path, i + 1);
        out[f[0]].push_back(c);
    }
    return out;
}

// ---- feature files ----------------------------------------------------------

void write_features(const std::string& path, std::vector<FeatureRow> rows) {
    std::sort(rows.begin(), rows.end(), [](const FeatureRow& a, const FeatureRow& b) {
        if (a.image_id != b.image_id) return a.image_id < b.image_id;
        return a.patch_id < b.patch_id;
    });
    std::string csv = features_header() + "\n";
    for (const FeatureRow& r : rows) {
        csv += r.image_id;
        csv += ',';
        csv += r.patch_id;
        csv += ',';
        csv += std::to_string(r.row);
        csv += ',';
        csv += std::to_string(r.col);
        for (double v : r.values) {
            csv += ',';
            csv += fmt17(v);
        }
        csv += '\n';
    }
    write_text_file(path, csv);
}

std::vector<FeatureRow> read_features(const std::string& path) {
    std::vector<std::string> lines = split_lines(read_text_file(path));
    if (lines.empty() || lines[0] != features_header())
        fail(Err::MalformedRecord, path + ":1: bad or missing feature header");
    std::vector<FeatureRow> out;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        std::vector<std::string> f = split_csv(lines[i]);
        if (f.size() != 73)
            fail(Err::MalformedRecord,
                 path + ":" + std::to_string(i + 1) + ": expected 73 fields, got " +
                     std::to_string(f.size()));
        FeatureRow r;
        r.image_id = f[0];
        r.patch_id = f[1];
        r.row = std::size_t(parse_double(f[2], path, i + 1));
        r.col = std::size_t(parse_double(f[3], path, i + 1));
        for (std::size_t k = 0; k < 69; ++k) r.values[k] = parse_double(f[4 + k], path, i + 1);
        out.push_back(std::move(r));
    }
    return out;
}

Dataset dataset_from_features(const Manifest& manifest, const std::vector<FeatureRow>& rows) {
    std::map<std::string, std::vector<const FeatureRow*>> by_image;
    for (const FeatureRow& r : rows) by_image[r.image_id].push_back(&r);

    Dataset data;
    data.class_names = manifest.class_names;
    for (const ManifestImage& img : manifest.images) {
        auto it = by_image.find(img.id);
        if (it == by_image.end())
            fail(Err::MalformedRecord, "no feature rows for image " + img.id);
        std::vector<const FeatureRow*> feats = it->second;
        std::sort(feats.begin(), feats.end(),
                  [](const FeatureRow* a, const FeatureRow* b) { return a->patch_id < b->patch_id; });

        std::vector<std::string> expected;
        for (const ManifestPatch& p : img.patches) expected.push_back(p.id);
        std::sort(expected.begin(), expected.end());
        if (feats.size() != expected.size())
            fail(Err::MalformedRecord, "image " + img.id + " has " + std::to_string(feats.size()) +
                                           " feature rows for " + std::to_string(expected.size()) +
                                           " patches");
        for (std::size_t i = 0; i < feats.size(); ++i)
            if (feats[i]->patch_id != expected[i])
                fail(Err::MalformedRecord,
                     "image " + img.id + " feature rows do not match its patch list");

        Sample s;
        s.image_id = img.id;
        s.label = img.label;
        s.features = Tensor(feats.size(), 69);
        for (std::size_t i = 0; i < feats.size(); ++i)
            for (std::size_t j = 0; j < 69; ++j) s.features.at(i, j) = feats[i]->values[j];
        data.samples.push_back(std::move(s));
        by_image.erase(it);
    }
    if (!by_image.empty())
        fail(Err::UnknownImage, "feature rows reference unknown image " + by_image.begin()->first);
    return data;
}

// ---- config files -----------------------------------------------------------

std::string train_config_to_json(const TrainConfig& cfg) {
    ordered_json j;
    j["gnn"] = {{"in_dim", cfg.gnn.in_dim},
                {"gcn_dims", cfg.gnn.gcn_dims},
                {"head_dims", cfg.gnn.head_dims},
                {"n_classes", cfg.gnn.n_classes},
                {"dropout", cfg.gnn.dropout}};
    j["gen"] = {{"in_dim", cfg.gen.in_dim},
                {"hidden", cfg.gen.hidden},
                {"tau_init", cfg.gen.tau_init},
                {"tau_min", cfg.gen.tau_min},
                {"gamma", cfg.gen.gamma}};
    j["eta_theta"] = cfg.eta_theta;
    j["eta_psi"] = cfg.eta_psi;
    j["iterations"] = cfg.iterations;
    j["batch"] = cfg.batch;
    j["lambda_sparse"] = cfg.lambda_sparse;
    j["seed"] = cfg.seed;
    j["normalize_features"] = cfg.normalize_features;
    j["eval_mode"] = cfg.eval_mode == AdjacencyMode::Hard ? "hard" : "soft";
    return j.dump(2) + "\n";
}

namespace {

// JSON negatives silently wrap through get<std::size_t>; reject them instead
std::size_t get_count(const ordered_json& v, const char* key, Err code) {
    if (!v.is_number_unsigned())
        fail(code, std::string(key) + " must be a non-negative integer");
    return v.get<std::size_t>();
}

std::vector<std::size_t> get_counts(const ordered_json& v, const char* key, Err code) {
    if (!v.is_array())
        fail(code, std::string(key) + " must be an array of non-negative integers");
    std::vector<std::size_t> out;
    for (const auto& e : v) out.push_back(get_count(e, key, code));
    return out;
}

} // namespace

TrainConfig train_config_from_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail(Err::ConfigInvalid, std::string("config is not valid JSON: ") + e.what());
    }
    TrainConfig cfg;
    try {
        reject_unknown_keys(j,
                            {"gnn", "gen", "eta_theta", "eta_psi", "iterations", "batch",
                             "lambda_sparse", "seed", "normalize_features", "eval_mode"},
                            Err::ConfigInvalid, "config");
        if (j.contains("gnn")) {
            const auto& g = j["gnn"];
            reject_unknown_keys(g, {"in_dim", "gcn_dims", "head_dims", "n_classes", "dropout"},
                                Err::ConfigInvalid, "config.gnn");
            if (g.contains("in_dim"))
                cfg.gnn.in_dim = get_count(g["in_dim"], "gnn.in_dim", Err::ConfigInvalid);
            if (g.contains("gcn_dims"))
                cfg.gnn.gcn_dims = get_counts(g["gcn_dims"], "gnn.gcn_dims", Err::ConfigInvalid);
            if (g.contains("head_dims"))
                cfg.gnn.head_dims =
                    get_counts(g["head_dims"], "gnn.head_dims", Err::ConfigInvalid);
            if (g.contains("n_classes"))
                cfg.gnn.n_classes = get_count(g["n_classes"], "gnn.n_classes", Err::ConfigInvalid);
            if (g.contains("dropout")) cfg.gnn.dropout = g["dropout"].get<double>();
        }
        if (j.contains("gen")) {
            const auto& g = j["gen"];
            reject_unknown_keys(g, {"in_dim", "hidden", "tau_init", "tau_min", "gamma"},
                                Err::ConfigInvalid, "config.gen");
            if (g.contains("in_dim"))
                cfg.gen.in_dim = get_count(g["in_dim"], "gen.in_dim", Err::ConfigInvalid);
            if (g.contains("hidden"))
                cfg.gen.hidden = get_counts(g["hidden"], "gen.hidden", Err::ConfigInvalid);
            if (g.contains("tau_init")) cfg.gen.tau_init = g["tau_init"].get<double>();
            if (g.contains("tau_min")) cfg.gen.tau_min = g["tau_min"].get<double>();
            if (g.contains("gamma")) cfg.gen.gamma = g["gamma"].get<double>();
        }
        if (j.contains("eta_theta")) cfg.eta_theta = j["eta_theta"].get<double>();
        if (j.contains("eta_psi")) cfg.eta_psi = j["eta_psi"].get<double>();
        if (j.contains("iterations"))
            cfg.iterations = get_count(j["iterations"], "iterations", Err::ConfigInvalid);
        if (j.contains("batch")) cfg.batch = get_count(j["batch"], "batch", Err::ConfigInvalid);
        if (j.contains("lambda_sparse")) cfg.lambda_sparse = j["lambda_sparse"].get<double>();
        if (j.contains("seed")) cfg.seed = get_count(j["seed"], "seed", Err::ConfigInvalid);
        if (j.contains("normalize_features"))
            cfg.normalize_features = j["normalize_features"].get<bool>();
        if (j.contains("eval_mode")) {
            std::string mode = j["eval_mode"].get<std::string>();
            if (mode == "soft")
                cfg.eval_mode = AdjacencyMode::Soft;
            else if (mode == "hard")
                cfg.eval_mode = AdjacencyMode::Hard;
            else
                fail(Err::ConfigInvalid, "eval_mode must be 'soft' or 'hard'");
        }
    } catch (const nlohmann::json::exception& e) {
        fail(Err::ConfigInvalid, std::string("config field has the wrong type: ") + e.what());
    }
    return cfg;
}

namespace {

const char* kind_name(PatternKind k) {
    switch (k) {
    case PatternKind::PerturbedLattice: return "lattice";
    case PatternKind::Clustered: return "clustered";
    default: return "random";
    }
}

PatternKind kind_from_name(const std::string& s) {
    if (s == "lattice") return PatternKind::PerturbedLattice;
    if (s == "clustered") return PatternKind::Clustered;
    if (s == "random") return PatternKind::HomogeneousRandom;
    fail(Err::SpecInvalid, "unknown pattern kind '" + s + "'");
}

} // namespace

std::string dataset_spec_to_json(const DatasetSpec& spec) {
    ordered_json j;
    j["name"] = spec.name;
    j["class_names"] = spec.class_names;
    j["images_per_class"] = spec.images_per_class;
    j["grid_rows"] = spec.grid_rows;
    j["grid_cols"] = spec.grid_cols;
    j["patch_size"] = spec.patch_size;
    j["stride"] = spec.stride;
    j["seed"] = spec.seed;
    j["long_range"] = spec.long_range;
    j["dispersion_delta"] = spec.dispersion_delta;
    j["intensity_log_range"] = spec.intensity_log_range;
    j["classes"] = ordered_json::array();
    for (const PatternSpec& c : spec.classes) {
        ordered_json e;
        e["label"] = c.label;
        e["kind"] = kind_name(c.kind);
        e["intensity"] = c.intensity;
        e["cluster_radius"] = c.cluster_radius;
        e["offspring"] = c.offspring;
        e["lattice_jitter"] = c.lattice_jitter;
        e["attr_mean"] = c.attrs.mean;
        e["attr_noise"] = c.attrs.noise;
        j["classes"].push_back(std::move(e));
    }
    return j.dump(2) + "\n";
}

DatasetSpec dataset_spec_from_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail(Err::SpecInvalid, std::string("spec is not valid JSON: ") + e.what());
    }
    DatasetSpec spec;
    spec.class_names.clear();
    spec.classes.clear();
    try {
        reject_unknown_keys(j,
                            {"name", "class_names", "images_per_class", "grid_rows", "grid_cols",
                             "patch_size", "stride", "seed", "long_range", "dispersion_delta",
                             "intensity_log_range", "classes"},
                            Err::SpecInvalid, "spec");
        if (j.contains("name")) spec.name = j["name"].get<std::string>();
        if (j.contains("class_names"))
            spec.class_names = j["class_names"].get<std::vector<std::string>>();
        if (j.contains("images_per_class"))
            spec.images_per_class =
                get_count(j["images_per_class"], "images_per_class", Err::SpecInvalid);
        if (j.contains("grid_rows"))
            spec.grid_rows = get_count(j["grid_rows"], "grid_rows", Err::SpecInvalid);
        if (j.contains("grid_cols"))
            spec.grid_cols = get_count(j["grid_cols"], "grid_cols", Err::SpecInvalid);
        if (j.contains("patch_size")) spec.patch_size = j["patch_size"].get<double>();
        if (j.contains("stride")) spec.stride = j["stride"].get<double>();
        if (j.contains("seed")) spec.seed = get_count(j["seed"], "seed", Err::SpecInvalid);
        if (j.contains("long_range")) spec.long_range = j["long_range"].get<bool>();
        if (j.contains("dispersion_delta"))
            spec.dispersion_delta = j["dispersion_delta"].get<double>();
        if (j.contains("intensity_log_range"))
            spec.intensity_log_range = j["intensity_log_range"].get<double>();
        for (const auto& e : j.value("classes", ordered_json::array())) {
            reject_unknown_keys(e,
                                {"label", "kind", "intensity", "cluster_radius", "offspring",
                                 "lattice_jitter", "attr_mean", "attr_noise"},
                                Err::SpecInvalid, "spec.classes");
            PatternSpec c;
            if (e.contains("label")) c.label = e["label"].get<int>();
            if (e.contains("kind")) c.kind = kind_from_name(e["kind"].get<std::string>());
            if (e.contains("intensity")) c.intensity = e["intensity"].get<double>();
            if (e.contains("cluster_radius")) c.cluster_radius = e["cluster_radius"].get<double>();
            if (e.contains("offspring")) c.offspring = e["offspring"].get<double>();
            if (e.contains("lattice_jitter"))
                c.lattice_jitter = e["lattice_jitter"].get<double>();
            if (e.contains("attr_mean")) {
                auto mean = e["attr_mean"].get<std::vector<double>>();
                if (mean.size() != 12)
                    fail(Err::SpecInvalid, "attr_mean needs exactly 12 entries");
                std::copy(mean.begin(), mean.end(), c.attrs.mean.begin());
            }
            if (e.contains("attr_noise")) c.attrs.noise = e["attr_noise"].get<double>();
            spec.classes.push_back(std::move(c));
        }
    } catch (const nlohmann::json::exception& e) {
        fail(Err::SpecInvalid, std::string("spec field has the wrong type: ") + e.what());
    }
    return spec;
}

// ---- checkpoints ------------------------------------------------------------

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::string out;
    out.append(kMagic, 8);
    put_u32(out, ck.version);
    put_u64(out, ck.config_json.size());
    out += ck.config_json;
    put_u64(out, ck.tensors.size());
    for (const NamedTensor& t : ck.tensors) {
        put_u32(out, std::uint32_t(t.name.size()));
        out += t.name;
        put_u64(out, t.value.rows);
        put_u64(out, t.value.cols);
        for (double v : t.value.data) put_f64(out, v);
    }
    put_f64(out, ck.final_tau);
    put_u64(out, ck.rng_seed);
    put_u64(out, ck.history_digest);
    write_text_file(path, out);

    ordered_json side;
    side["version"] = ck.version;
    side["final_tau"] = ck.final_tau;
    side["rng_seed"] = ck.rng_seed;
    side["history_digest"] = ck.history_digest;
    side["tensors"] = ordered_json::array();
    for (const NamedTensor& t : ck.tensors)
        side["tensors"].push_back(
            ordered_json{{"name", t.name}, {"rows", t.value.rows}, {"cols", t.value.cols}});
    try {
        side["config"] = ordered_json::parse(ck.config_json);
    } catch (const nlohmann::json::exception&) {
        side["config"] = ck.config_json;
    }
    write_text_file(path + ".json", side.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::string& path) {
    const std::string buf = read_text_file(path);
    Reader r{buf, 0, path};
    if (r.bytes(8) != std::string(kMagic, 8))
        fail(Err::CheckpointVersion, path + ": not a checkpoint file");
    Checkpoint ck;
    ck.version = r.u32();
    if (ck.version != kCheckpointVersion)
        fail(Err::CheckpointVersion, path + ": unsupported checkpoint version " +
                                         std::to_string(ck.version));
    ck.config_json = r.bytes(r.u64());
    std::uint64_t n = r.u64();
    for (std::uint64_t i = 0; i < n; ++i) {
        NamedTensor t;
        t.name = r.bytes(r.u32());
        std::uint64_t rows = r.u64(), cols = r.u64();
        if (rows * cols > (std::uint64_t(1) << 32))
            fail(Err::CheckpointVersion, path + ": implausible tensor size");
        t.value = Tensor(rows, cols);
        for (auto& v : t.value.data) v = r.f64();
        ck.tensors.push_back(std::move(t));
    }
    ck.final_tau = r.f64();
    ck.rng_seed = r.u64();
    ck.history_digest = r.u64();
    if (r.pos != buf.size())
        fail(Err::CheckpointVersion, path + ": trailing bytes after checkpoint payload");
    return ck;
}

Checkpoint checkpoint_from_result(const TrainResult& result, const std::string& config_json,
                                  std::uint64_t seed) {
    Checkpoint ck;
    ck.config_json = config_json;
    ck.final_tau = result.final_tau;
    ck.rng_seed = seed;

    TrainResult& r = const_cast<TrainResult&>(result); // all() is non-const
    std::size_t i = 0;
    for (Tensor* t : r.theta.all())
        ck.tensors.push_back({"theta." + std::to_string(i++), *t});
    i = 0;
    for (Tensor* t : r.psi.all()) ck.tensors.push_back({"psi." + std::to_string(i++), *t});

    Tensor mean(1, result.stand.mean.size()), scale(1, result.stand.scale.size());
    mean.data = result.stand.mean;
    scale.data = result.stand.scale;
    ck.tensors.push_back({"stand.mean", std::move(mean)});
    ck.tensors.push_back({"stand.scale", std::move(scale)});

    for (auto& t : adam_tensors(result.opt_theta, "opt.theta")) ck.tensors.push_back(std::move(t));
    for (auto& t : adam_tensors(result.opt_psi, "opt.psi")) ck.tensors.push_back(std::move(t));

    Tensor mass(1, 1);
    mass.data = {result.mean_offdiag_mass};
    ck.tensors.push_back({"mean_offdiag_mass", std::move(mass)});

    std::uint64_t digest = fnv1a64(result.curves.lower.data(),
                                   result.curves.lower.size() * sizeof(double));
    digest = fnv1a64(result.curves.upper.data(), result.curves.upper.size() * sizeof(double),
                     digest);
    ck.history_digest = digest;
    return ck;
}

TrainResult result_from_checkpoint(const Checkpoint& ck) {
    TrainConfig cfg = train_config_from_json(ck.config_json);
    Rng rng(0);
    TrainResult out;
    out.theta = ClassifierParams::init(cfg.gnn, rng);
    out.psi = GeneratorParams::init(cfg.gen, rng);
    out.final_tau = ck.final_tau;

    std::size_t i = 0;
    for (Tensor* t : out.theta.all()) {
        const Tensor& src = find_tensor(ck, "theta." + std::to_string(i++));
        if (src.rows != t->rows || src.cols != t->cols)
            fail(Err::CheckpointVersion, "classifier tensor shape mismatch in checkpoint");
        *t = src;
    }
    i = 0;
    for (Tensor* t : out.psi.all()) {
        const Tensor& src = find_tensor(ck, "psi." + std::to_string(i++));
        if (src.rows != t->rows || src.cols != t->cols)
            fail(Err::CheckpointVersion, "generator tensor shape mismatch in checkpoint");
        *t = src;
    }
    out.stand.mean = find_tensor(ck, "stand.mean").data;
    out.stand.scale = find_tensor(ck, "stand.scale").data;
    restore_adam(ck, "opt.theta", cfg.eta_theta, out.theta.all(), out.opt_theta);
    restore_adam(ck, "opt.psi", cfg.eta_psi, out.psi.all(), out.opt_psi);
    out.mean_offdiag_mass = find_tensor(ck, "mean_offdiag_mass").data[0];
    out.theta.set_requires_grad(false);
    out.psi.set_requires_grad(false);
    return out;
}

// ---- run artifacts ----------------------------------------------------------

namespace {

ordered_json metrics_body(const Metrics& m, const std::vector<std::string>& class_names) {
    ordered_json j;
    j["accuracy"] = m.accuracy;
    j["macro_f1"] = m.macro_f1;
    j["class_names"] = class_names;
    j["confusion"] = m.confusion;
    return j;
}

ordered_json config_echo(const std::string& config_json) {
    try {
        return ordered_json::parse(config_json);
    } catch (const nlohmann::json::exception&) {
        return config_json;
    }
}

} // namespace

std::string metrics_to_json(const Metrics& m, const std::vector<std::string>& class_names,
                            const std::string& config_json) {
    ordered_json j = metrics_body(m, class_names);
    j["config"] = config_echo(config_json);
    return j.dump(2) + "\n";
}

std::string cv_metrics_to_json(const CvResult& cv, const std::vector<std::string>& class_names,
                               const std::string& config_json) {
    ordered_json j;
    j["mean_accuracy"] = cv.mean_accuracy;
    j["sd_accuracy"] = cv.sd_accuracy;
    j["mean_f1"] = cv.mean_f1;
    j["sd_f1"] = cv.sd_f1;
    j["folds"] = ordered_json::array();
    for (const Metrics& m : cv.fold_metrics) j["folds"].push_back(metrics_body(m, class_names));
    j["config"] = config_echo(config_json);
    return j.dump(2) + "\n";
}

std::string losses_to_csv(const LossCurves& curves) {
    std::string csv = "iteration,lower_loss,upper_loss\n";
    for (std::size_t i = 0; i < curves.lower.size(); ++i) {
        csv += std::to_string(i + 1);
        csv += ',';
        csv += fmt17(curves.lower[i]);
        csv += ',';
        csv += i < curves.upper.size() ? fmt17(curves.upper[i]) : std::string("nan");
        csv += '\n';
    }
    return csv;
}

std::string graph_export_json(const std::string& image_id,
                              const std::vector<ManifestPatch>& patches, const Tensor& features,
                              const Tensor& soft_adj, double min_weight) {
    if (patches.size() != features.rows || soft_adj.rows != patches.size() ||
        soft_adj.cols != patches.size())
        fail(Err::ShapeMismatch, "graph export inputs disagree on the patch count");
    ordered_json j;
    j["image_id"] = image_id;
    j["nodes"] = ordered_json::array();
    for (std::size_t i = 0; i < patches.size(); ++i) {
        ordered_json node;
        node["patch_id"] = patches[i].id;
        node["row"] = patches[i].row;
        node["col"] = patches[i].col;
        std::vector<double> vals(features.data.begin() + i * features.cols,
                                 features.data.begin() + (i + 1) * features.cols);
        node["features"] = vals;
        j["nodes"].push_back(std::move(node));
    }
    j["edges"] = ordered_json::array();
    for (std::size_t i = 0; i < patches.size(); ++i)
        for (std::size_t k = i + 1; k < patches.size(); ++k)
            if (soft_adj.at(i, k) >= min_weight)
                j["edges"].push_back(ordered_json{{"source", patches[i].id},
                                                  {"target", patches[k].id},
                                                  {"weight", soft_adj.at(i, k)}});
    return j.dump(2) + "\n";
}

} // namespace abig
