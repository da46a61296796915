#pragma once

#include <abig/features.hpp>
#include <abig/rng.hpp>
#include <abig/trainer.hpp>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace abig {

enum class PatternKind { PerturbedLattice, Clustered, HomogeneousRandom };

// Per-class model for the 12 cell attributes: mean vector plus isotropic
// Gaussian noise. Same-class cells stay cosine-similar, so the cell graph is
// shaped by positions rather than attribute luck.
struct AttrModel {
    std::array<double, 12> mean{};
    double noise = 0.0;
};

struct PatternSpec {
    int label = 0;
    PatternKind kind = PatternKind::HomogeneousRandom;
    double intensity = 120.0 / (256.0 * 256.0); // points per unit area
    double cluster_radius = 18.0;               // clustered offspring disk
    double offspring = 8.0;                     // mean offspring per parent
    double lattice_jitter = 0.12;               // sd as a fraction of spacing
    AttrModel attrs;

    void validate() const;
};

struct DatasetSpec {
    std::string name = "synthetic3";
    std::vector<std::string> class_names;
    std::vector<PatternSpec> classes;
    std::size_t images_per_class = 40;
    std::size_t grid_rows = 4, grid_cols = 4;
    double patch_size = 256.0;
    double stride = 256.0;
    std::uint64_t seed = 0;
    // class signal moved from per-patch pattern into the spread of patch
    // intensities across the grid; all patches are homogeneous-random
    bool long_range = false;
    double dispersion_delta = 0.25; // log-intensity half-gap per class step
    double intensity_log_range = 0.35;

    void validate() const;
};

DatasetSpec default_spec(std::uint64_t seed);
DatasetSpec long_range_spec(std::uint64_t seed);

struct SynthPatch {
    std::string patch_id;
    std::size_t row = 0, col = 0;
    std::vector<CellRecord> cells;
};

struct SynthImage {
    std::string image_id;
    int label = 0;
    std::vector<SynthPatch> patches;
};

struct SynthDataset {
    DatasetSpec spec;
    std::vector<SynthImage> images;
};

Rect patch_rect(const DatasetSpec& spec, std::size_t row, std::size_t col);

std::vector<CellRecord> generate_patch(const PatternSpec& spec, const Rect& rect, Rng& rng);

// Deterministic under spec.seed; images carry independent derived streams.
SynthDataset generate_dataset(const DatasetSpec& spec);

// Per-patch 69-vectors for every image, rows in patch-id order.
Dataset features_from_synth(const SynthDataset& synth, double d_p = 64.0,
                            double theta_sim = 0.8);

} // namespace abig
