#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "abig/common.hpp"

namespace abig::geom {

struct Point2D {
    double x = 0, y = 0;
};

inline double dist(const Point2D& a, const Point2D& b) {
    double dx = a.x - b.x, dy = a.y - b.y;
    return std::sqrt(dx * dx + dy * dy);
}

struct Triangle {
    // vertex indices into the input point list, CCW order
    std::array<std::size_t, 3> v;
};

struct Triangulation {
    std::vector<Point2D> points;
    std::vector<Triangle> triangles;
    // unordered unique vertex index pairs (i < j) of triangulation edges
    std::vector<std::pair<std::size_t, std::size_t>> edges() const;
    // neighbor lists per input point
    std::vector<std::vector<std::size_t>> adjacency() const;
};

struct VoronoiCell {
    std::size_t site = 0;
    std::vector<Point2D> polygon; // CCW, clipped
    double area() const;
    double perimeter() const;
};

struct VoronoiPartition {
    std::vector<VoronoiCell> cells; // cells[i].site == i
};

struct WeightedEdge {
    std::size_t a = 0, b = 0;
    double w = 0;
};

// Incremental Bowyer-Watson with ghost triangles for the hull, exact
// filtered predicates, and index-ordered symbolic perturbation for
// co-circular ties. Points must hold >= 3 sites, not all collinear,
// no exact duplicates.
Triangulation delaunay_triangulate(const std::vector<Point2D>& points);

// Delaunay-dual cells clipped to clip_rect (all sites strictly inside).
// Degenerate inputs (n < 3, collinear) use all-pairs bisector clipping.
VoronoiPartition voronoi_partition(const std::vector<Point2D>& points, const Rect& clip_rect);

// Euclidean minimum spanning tree, n-1 edges. Deterministic Prim with
// lowest-index tie break.
std::vector<WeightedEdge> euclidean_mst(const std::vector<Point2D>& points);

// Per-point ascending distances to the k nearest other points. Fewer than k
// neighbors available: pad by repeating the farthest. Empty / singleton
// inputs give all-zero rows.
std::vector<std::vector<double>> k_nearest_distances(const std::vector<Point2D>& points, int k);

// Closed-ball neighbor counts (self excluded): |{j != i : d(i,j) <= r}|.
std::vector<int> count_within_radius(const std::vector<Point2D>& points, double radius);

// Exact predicate signs, exposed for tests: orientation of c against directed
// line a->b (>0 left / CCW), and the in-circumcircle sign of d against CCW
// triangle (a,b,c) (>0 strictly inside). Ties get resolved downstream, these
// return 0 for exact degeneracies.
int orient2d_sign(const Point2D& a, const Point2D& b, const Point2D& c);
int incircle_sign(const Point2D& a, const Point2D& b, const Point2D& c, const Point2D& d);

double polygon_area(const std::vector<Point2D>& poly);

// clip convex CCW polygon by half-plane {p : dot(p - origin, normal) <= 0}
std::vector<Point2D> clip_halfplane(const std::vector<Point2D>& poly, const Point2D& origin,
                                    double nx, double ny);

} // namespace abig::geom
