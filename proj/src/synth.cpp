#include <abig/synth.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace abig {

namespace {

// splitmix64 of a golden-ratio-stepped index: every image gets its own
// decorrelated stream while staying a pure function of the dataset seed
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t idx) {
    std::uint64_t z = seed + (idx + 1) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

bool inside(const Rect& r, double x, double y) {
    return x >= r.x0 && x <= r.x1 && y >= r.y0 && y <= r.y1;
}

CellRecord make_cell(double x, double y, const AttrModel& am, Rng& rng) {
    CellRecord c;
    c.centroid = {x, y};
    for (std::size_t j = 0; j < c.attrs.size(); ++j)
        c.attrs[j] = am.mean[j] + am.noise * rng.normal();
    return c;
}

std::string patch_name(std::size_t row, std::size_t col) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "p%02zu_%02zu", row, col);
    return buf;
}

std::string image_name(std::size_t idx) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "img_%03zu", idx);
    return buf;
}

} // namespace

void PatternSpec::validate() const {
    if (intensity <= 0) fail(Err::SpecInvalid, "pattern intensity must be positive");
    if (attrs.noise < 0) fail(Err::SpecInvalid, "attribute noise must be nonnegative");
    if (kind == PatternKind::Clustered && (cluster_radius <= 0 || offspring <= 0))
        fail(Err::SpecInvalid, "clustered pattern needs positive radius and offspring count");
    if (kind == PatternKind::PerturbedLattice && lattice_jitter < 0)
        fail(Err::SpecInvalid, "lattice jitter must be nonnegative");
}

void DatasetSpec::validate() const {
    if (grid_rows < 2 || grid_cols < 2) fail(Err::SpecInvalid, "patch grid must be at least 2x2");
    if (patch_size <= 0) fail(Err::SpecInvalid, "patch size must be positive");
    if (stride <= 0 || stride > patch_size)
        fail(Err::SpecInvalid, "stride must be positive and at most the patch size");
    if (classes.empty()) fail(Err::SpecInvalid, "need at least one class");
    if (class_names.size() != classes.size())
        fail(Err::SpecInvalid, "class name list and class spec list disagree");
    if (images_per_class == 0) fail(Err::SpecInvalid, "need at least one image per class");
    for (std::size_t c = 0; c < classes.size(); ++c) {
        if (classes[c].label != int(c))
            fail(Err::SpecInvalid, "class labels must be 0..C-1 in order");
        classes[c].validate();
    }
    if (long_range && (dispersion_delta < 0 || intensity_log_range < 0))
        fail(Err::SpecInvalid, "dispersion parameters must be nonnegative");
    if (long_range && classes.size() != 3)
        fail(Err::SpecInvalid, "long-range mode defines exactly three spread shapes");
}

Rect patch_rect(const DatasetSpec& spec, std::size_t row, std::size_t col) {
    double x0 = double(col) * spec.stride, y0 = double(row) * spec.stride;
    return Rect{x0, y0, x0 + spec.patch_size, y0 + spec.patch_size};
}

std::vector<CellRecord> generate_patch(const PatternSpec& spec, const Rect& rect, Rng& rng) {
    spec.validate();
    std::vector<CellRecord> cells;
    switch (spec.kind) {
    case PatternKind::HomogeneousRandom: {
        int n = rng.poisson(spec.intensity * rect.area());
        cells.reserve(std::size_t(n));
        for (int i = 0; i < n; ++i) {
            double x = rng.uniform(rect.x0, rect.x1), y = rng.uniform(rect.y0, rect.y1);
            cells.push_back(make_cell(x, y, spec.attrs, rng));
        }
        break;
    }
    case PatternKind::PerturbedLattice: {
        double target = spec.intensity * rect.area();
        std::size_t m = std::max<std::size_t>(1, std::size_t(std::llround(std::sqrt(target))));
        double sx = rect.width() / double(m), sy = rect.height() / double(m);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j) {
                double cx = rect.x0 + (double(i) + 0.5) * sx;
                double cy = rect.y0 + (double(j) + 0.5) * sy;
                double x = cx, y = cy;
                if (spec.lattice_jitter > 0) {
                    for (int tries = 0; tries < 64; ++tries) {
                        x = cx + spec.lattice_jitter * sx * rng.normal();
                        y = cy + spec.lattice_jitter * sy * rng.normal();
                        if (inside(rect, x, y)) break;
                        x = cx;
                        y = cy;
                    }
                }
                cells.push_back(make_cell(x, y, spec.attrs, rng));
            }
        break;
    }
    case PatternKind::Clustered: {
        // parent-offspring process: parents drawn on an inflated rectangle so
        // clusters straddling the boundary keep the interior intensity flat
        Rect ext{rect.x0 - spec.cluster_radius, rect.y0 - spec.cluster_radius,
                 rect.x1 + spec.cluster_radius, rect.y1 + spec.cluster_radius};
        double lam_parent = spec.intensity / spec.offspring;
        int n_parents = rng.poisson(lam_parent * ext.area());
        for (int p = 0; p < n_parents; ++p) {
            double px = rng.uniform(ext.x0, ext.x1), py = rng.uniform(ext.y0, ext.y1);
            int kids = rng.poisson(spec.offspring);
            for (int kd = 0; kd < kids; ++kd) {
                double ang = rng.uniform(0.0, 2.0 * M_PI);
                double rad = spec.cluster_radius * std::sqrt(rng.uniform01());
                double x = px + rad * std::cos(ang), y = py + rad * std::sin(ang);
                if (inside(rect, x, y)) cells.push_back(make_cell(x, y, spec.attrs, rng));
            }
        }
        break;
    }
    }
    return cells;
}

SynthDataset generate_dataset(const DatasetSpec& spec) {
    spec.validate();
    SynthDataset out;
    out.spec = spec;
    const std::size_t n_patches = spec.grid_rows * spec.grid_cols;
    for (std::size_t c = 0; c < spec.classes.size(); ++c)
        for (std::size_t rep = 0; rep < spec.images_per_class; ++rep) {
            std::size_t idx = c * spec.images_per_class + rep;
            Rng rng(mix_seed(spec.seed, idx));
            SynthImage img;
            img.image_id = image_name(idx);
            img.label = int(c);

            double mult = 1.0, theta = 0.0, jitter_half = 0.0, level_norm = 1.0;
            std::vector<double> offsets;
            if (spec.long_range) {
                theta = std::log(spec.classes[c].intensity) +
                        rng.uniform(-spec.intensity_log_range, spec.intensity_log_range);
                // per-patch log-intensity = theta + offset + uniform jitter.
                // every class has offset mean 0 and total variance 4*delta^2,
                // with the balance between the two-group offset gap and the
                // jitter width shifting by class: pure jitter for class 0,
                // a smeared two-group mix for class 1, a clean two-group
                // split for class 2. patch-averaged statistics match across
                // classes and only the spread shape identifies the label
                const double d = spec.dispersion_delta;
                offsets.assign(n_patches, 0.0);
                double gap = d * double(c);
                jitter_half = std::sqrt(std::max(0.0, 3.0 * (4.0 * d * d - gap * gap)));
                for (std::size_t p = 0; p < n_patches; ++p)
                    offsets[p] = (p % 2 == 0 ? 1.0 : -1.0) * gap;
                rng.shuffle(offsets);
                double mean_exp = 0.0;
                for (double o : offsets) mean_exp += std::exp(o);
                mean_exp /= double(n_patches);
                level_norm = mean_exp * (jitter_half > 0
                                             ? std::sinh(jitter_half) / jitter_half
                                             : 1.0);
            } else {
                mult = rng.uniform(0.85, 1.15);
            }

            std::size_t p = 0;
            for (std::size_t row = 0; row < spec.grid_rows; ++row)
                for (std::size_t col = 0; col < spec.grid_cols; ++col, ++p) {
                    PatternSpec ps = spec.classes[c];
                    if (spec.long_range) {
                        double j = jitter_half * rng.uniform(-1.0, 1.0);
                        ps.intensity = std::exp(theta + offsets[p] + j) / level_norm;
                    } else {
                        ps.intensity *= mult;
                    }
                    SynthPatch patch;
                    patch.patch_id = patch_name(row, col);
                    patch.row = row;
                    patch.col = col;
                    patch.cells = generate_patch(ps, patch_rect(spec, row, col), rng);
                    img.patches.push_back(std::move(patch));
                }
            out.images.push_back(std::move(img));
        }
    return out;
}

Dataset features_from_synth(const SynthDataset& synth, double d_p, double theta_sim) {
    Dataset out;
    out.class_names = synth.spec.class_names;
    for (const SynthImage& img : synth.images) {
        Sample s;
        s.image_id = img.image_id;
        s.label = img.label;
        s.features = Tensor(img.patches.size(), 69);
        std::vector<std::size_t> order(img.patches.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return img.patches[a].patch_id < img.patches[b].patch_id;
        });
        for (std::size_t r = 0; r < order.size(); ++r) {
            const SynthPatch& patch = img.patches[order[r]];
            Rect clip = inflate_clip(patch_rect(synth.spec, patch.row, patch.col));
            PatchFeatureVector pf = aggregate_patch_vector(patch.cells, d_p, theta_sim, clip);
            for (std::size_t j = 0; j < 69; ++j) s.features.at(r, j) = pf.values[j];
        }
        out.samples.push_back(std::move(s));
    }
    return out;
}

DatasetSpec default_spec(std::uint64_t seed) {
    DatasetSpec s;
    s.name = "synthetic3";
    s.seed = seed;
    s.class_names = {"regular", "clustered", "random"};
    PatternSpec regular;
    regular.label = 0;
    regular.kind = PatternKind::PerturbedLattice;
    regular.lattice_jitter = 0.12;
    regular.attrs = {{5, 4, 3, 2, 1, 1, 2, 3, 4, 5, 3, 3}, 0.6};
    PatternSpec clustered;
    clustered.label = 1;
    clustered.kind = PatternKind::Clustered;
    clustered.cluster_radius = 18.0;
    clustered.offspring = 8.0;
    clustered.attrs = {{3, 5, 2, 4, 1, 3, 1, 4, 2, 5, 3, 1}, 0.6};
    PatternSpec random;
    random.label = 2;
    random.kind = PatternKind::HomogeneousRandom;
    random.attrs = {{4, 2, 5, 1, 3, 2, 3, 1, 5, 2, 1, 4}, 0.6};
    s.classes = {regular, clustered, random};
    return s;
}

DatasetSpec long_range_spec(std::uint64_t seed) {
    DatasetSpec s;
    s.name = "longrange3";
    s.seed = seed;
    s.class_names = {"uniform", "smeared", "bimodal"};
    s.long_range = true;
    s.dispersion_delta = 0.35;
    s.intensity_log_range = 0.7;
    for (int c = 0; c < 3; ++c) {
        PatternSpec p;
        p.label = c;
        p.kind = PatternKind::HomogeneousRandom;
        p.attrs = {{5, 4, 3, 2, 1, 1, 2, 3, 4, 5, 3, 3}, 0.6};
        s.classes.push_back(p);
    }
    return s;
}

} // namespace abig
