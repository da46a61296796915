#pragma once

#include <abig/common.hpp>
#include <abig/geometry.hpp>

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace abig {

// One segmented cell: centroid position plus the 12 morphology/texture
// attributes used by the similarity gate.
struct CellRecord {
    geom::Point2D centroid;
    std::array<double, 12> attrs{};
};

// Binary graph over cells: edge iff centroid distance < d_p and attribute
// cosine similarity > theta_sim.
struct CellGraph {
    std::size_t n = 0;
    std::vector<std::vector<std::size_t>> adj; // sorted neighbor lists
    std::vector<geom::Point2D> positions;

    bool has_edge(std::size_t u, std::size_t v) const;
    std::size_t edge_count() const;
};

// Shared statistic kernel: population sd, min/max with 0/0 -> 0,
// disorder = sd/mean with 0/0 -> 0. Empty input -> all zeros.
struct SummaryStats {
    double mean = 0, sd = 0, min_max_ratio = 0, disorder = 0;
};

SummaryStats summarize(const std::vector<double>& xs);

struct PatchFeatureVector {
    std::array<double, 69> values{};
    std::string patch_id;
    int row = 0, col = 0;
};

CellGraph build_cell_graph(const std::vector<CellRecord>& cells, double d_p, double theta_sim);

// feature IDs 01-04: avg clustering coefficient, avg degree, component
// count, giant component ratio
std::array<double, 4> connectivity_features(const CellGraph& g);

// feature IDs 05-12: |V|, |E|, avg eccentricity, radius, diameter,
// central point count, central point percentage, avg closeness.
// Eccentricity statistics are taken on the largest connected component;
// closeness is computed within each node's own component.
std::array<double, 8> distance_features(const CellGraph& g);

// feature IDs 13-18: Laplacian energy, Laplacian trace, normalized
// Laplacian eigenvalue slope in [1,2], same in [0,1], largest adjacency
// eigenvalue, adjacency energy
std::array<double, 6> spectral_features(const CellGraph& g);

// feature IDs 19-31: total area, stats over cell areas, pooled pairwise
// vertex chord lengths, perimeters
std::array<double, 13> voronoi_features(const geom::VoronoiPartition& vp);

// feature IDs 32-39: stats over triangle areas and per-triangle side lengths
std::array<double, 8> delaunay_features(const geom::Triangulation& t);

// feature IDs 40-43: stats over MST edge lengths
std::array<double, 4> mst_features(const std::vector<geom::WeightedEdge>& edges);

// feature IDs 44-69: density, count, k-th nearest neighbor distance stats
// for k in {3,5,7}, neighbor count stats for radii {10,20,30,40,50}
std::array<double, 26> nn_features(const std::vector<geom::Point2D>& points, double patch_area);

// Full 69-entry descriptor. Families whose geometric construction is
// impossible (fewer than 3 cells, collinear or duplicate centroids) fall
// back to zeros, with Voronoi total area reported as the clip area when at
// least one cell exists.
PatchFeatureVector aggregate_patch_vector(const std::vector<CellRecord>& cells, double d_p,
                                          double theta_sim, const Rect& clip_rect);

// Clip rectangle grown by one part in 2^20 per side, so cells sitting
// exactly on a patch boundary count as inside during extraction.
Rect inflate_clip(const Rect& r);

} // namespace abig
