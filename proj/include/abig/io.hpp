#pragma once

#include <abig/synth.hpp>

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace abig {

// ---- dataset files ----------------------------------------------------------

struct ManifestPatch {
    std::string id;
    std::size_t row = 0, col = 0;
};

struct ManifestImage {
    std::string id;
    int label = 0;
    std::size_t grid_rows = 0, grid_cols = 0;
    std::string cell_file; // relative to the manifest directory
    std::vector<ManifestPatch> patches;
};

struct Manifest {
    std::string dataset;
    std::vector<std::string> class_names;
    double patch_size = 0, stride = 0; // patch grid geometry in pixels
    std::vector<ManifestImage> images;
};

// manifest.json plus one cell CSV per image under dir
void write_dataset(const SynthDataset& ds, const std::string& dir);

Manifest read_manifest(const std::string& path);

// cell CSV with header patch_id,cx,cy,a01..a12, grouped by patch id.
// Malformed rows name the file and 1-based line number.
std::map<std::string, std::vector<CellRecord>> read_cells(const std::string& path);

// ---- feature files ----------------------------------------------------------

struct FeatureRow {
    std::string image_id, patch_id;
    std::size_t row = 0, col = 0;
    std::array<double, 69> values{};
};

// CSV with header image_id,patch_id,row,col,f001..f069; rows sorted by
// (image_id, patch_id); 17 significant digits so doubles round-trip exactly
void write_features(const std::string& path, std::vector<FeatureRow> rows);

std::vector<FeatureRow> read_features(const std::string& path);

// Join feature rows against the manifest: one Sample per manifest image in
// manifest order, feature rows in patch-id order. Rows for unknown images,
// missing patches, or duplicate patches are errors.
Dataset dataset_from_features(const Manifest& manifest, const std::vector<FeatureRow>& rows);

// ---- config files -----------------------------------------------------------

std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text); // ConfigInvalid on bad input

std::string dataset_spec_to_json(const DatasetSpec& spec);
DatasetSpec dataset_spec_from_json(const std::string& text); // SpecInvalid on bad input

// ---- checkpoints ------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
    std::string name;
    Tensor value;
};

struct Checkpoint {
    std::uint32_t version = kCheckpointVersion;
    std::string config_json; // full effective-config echo
    std::vector<NamedTensor> tensors;
    double final_tau = 0.0;
    std::uint64_t rng_seed = 0;
    std::uint64_t history_digest = 0; // FNV-1a over both loss curves
};

// Binary little-endian payload with length-prefixed named tensors, plus a
// <path>.json sidecar mirroring the metadata. Loading a file whose magic or
// version does not match fails with CheckpointVersion.
void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

// Parameters, standardizer, optimizer state and history digest of a finished
// run, keyed by stable tensor names.
Checkpoint checkpoint_from_result(const TrainResult& result, const std::string& config_json,
                                  std::uint64_t seed);

// Inverse of checkpoint_from_result; loss curves are not stored, only their
// digest survives.
TrainResult result_from_checkpoint(const Checkpoint& ck);

// ---- run artifacts ----------------------------------------------------------

std::string metrics_to_json(const Metrics& m, const std::vector<std::string>& class_names,
                            const std::string& config_json);
std::string cv_metrics_to_json(const CvResult& cv, const std::vector<std::string>& class_names,
                               const std::string& config_json);

// CSV with header iteration,lower_loss,upper_loss; iterations 1-based
std::string losses_to_csv(const LossCurves& curves);

// Nodes (patch id, grid position, feature vector) plus undirected weighted
// edges for every off-diagonal soft-adjacency entry >= min_weight, each pair
// reported once. Patch order must match the feature and adjacency rows.
std::string graph_export_json(const std::string& image_id,
                              const std::vector<ManifestPatch>& patches, const Tensor& features,
                              const Tensor& soft_adj, double min_weight);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

std::uint64_t fnv1a64(const void* data, std::size_t bytes, std::uint64_t seed = 14695981039346656037ull);

} // namespace abig
