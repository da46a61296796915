#include <abig/features.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <queue>

namespace abig {

using geom::Point2D;

bool CellGraph::has_edge(std::size_t u, std::size_t v) const {
    const auto& row = adj[u];
    return std::binary_search(row.begin(), row.end(), v);
}

std::size_t CellGraph::edge_count() const {
    std::size_t s = 0;
    for (const auto& row : adj) s += row.size();
    return s / 2;
}

SummaryStats summarize(const std::vector<double>& xs) {
    SummaryStats st;
    if (xs.empty()) return st;
    double sum = 0;
    double mn = xs[0], mx = xs[0];
    for (double x : xs) {
        sum += x;
        mn = std::min(mn, x);
        mx = std::max(mx, x);
    }
    st.mean = sum / double(xs.size());
    double acc = 0;
    for (double x : xs) {
        double d = x - st.mean;
        acc += d * d;
    }
    st.sd = std::sqrt(acc / double(xs.size()));
    st.min_max_ratio = (mx != 0.0) ? mn / mx : 0.0;
    st.disorder = (st.mean != 0.0) ? st.sd / st.mean : 0.0;
    return st;
}

CellGraph build_cell_graph(const std::vector<CellRecord>& cells, double d_p, double theta_sim) {
    if (d_p <= 0) fail(Err::ConfigInvalid, "cell graph distance threshold must be positive");
    if (theta_sim < -1.0 || theta_sim > 1.0)
        fail(Err::ConfigInvalid, "similarity threshold must lie in [-1, 1]");
    CellGraph g;
    g.n = cells.size();
    g.adj.assign(g.n, {});
    g.positions.resize(g.n);
    std::vector<double> norms(g.n);
    for (std::size_t i = 0; i < g.n; ++i) {
        g.positions[i] = cells[i].centroid;
        double s = 0;
        for (double a : cells[i].attrs) s += a * a;
        norms[i] = std::sqrt(s);
        if (norms[i] == 0.0)
            fail(Err::ZeroAttrVector, "cell attribute vector is all zero; cosine undefined");
    }
    for (std::size_t u = 0; u < g.n; ++u) {
        for (std::size_t v = u + 1; v < g.n; ++v) {
            if (geom::dist(g.positions[u], g.positions[v]) >= d_p) continue;
            double dot = 0;
            for (std::size_t a = 0; a < 12; ++a) dot += cells[u].attrs[a] * cells[v].attrs[a];
            if (dot / (norms[u] * norms[v]) > theta_sim) {
                g.adj[u].push_back(v);
                g.adj[v].push_back(u);
            }
        }
    }
    for (auto& row : g.adj) std::sort(row.begin(), row.end());
    return g;
}

namespace {

// component label per node, labels assigned in discovery order
std::vector<int> component_labels(const CellGraph& g, int& n_comps) {
    std::vector<int> label(g.n, -1);
    n_comps = 0;
    for (std::size_t s = 0; s < g.n; ++s) {
        if (label[s] >= 0) continue;
        std::queue<std::size_t> q;
        q.push(s);
        label[s] = n_comps;
        while (!q.empty()) {
            std::size_t u = q.front();
            q.pop();
            for (std::size_t v : g.adj[u])
                if (label[v] < 0) {
                    label[v] = n_comps;
                    q.push(v);
                }
        }
        ++n_comps;
    }
    return label;
}

// distances from src to every node of its component, -1 elsewhere
std::vector<int> bfs_dist(const CellGraph& g, std::size_t src) {
    std::vector<int> d(g.n, -1);
    std::queue<std::size_t> q;
    d[src] = 0;
    q.push(src);
    while (!q.empty()) {
        std::size_t u = q.front();
        q.pop();
        for (std::size_t v : g.adj[u])
            if (d[v] < 0) {
                d[v] = d[u] + 1;
                q.push(v);
            }
    }
    return d;
}

double lsq_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
    double n = double(xs.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double num = 0, den = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        num += (xs[i] - mx) * (ys[i] - my);
        den += (xs[i] - mx) * (xs[i] - mx);
    }
    return den == 0.0 ? 0.0 : num / den;
}

// slope of eigenvalues (ascending) against rank/n, restricted to [lo, hi];
// a 1e-9 boundary tolerance keeps membership stable across eigensolvers
double eigen_range_slope(const Eigen::VectorXd& evals, double lo, double hi, std::size_t n) {
    const double tol = 1e-9;
    std::vector<double> xs, ys;
    for (Eigen::Index r = 0; r < evals.size(); ++r) {
        double lam = evals[r];
        if (lam >= lo - tol && lam <= hi + tol) {
            xs.push_back(double(r) / double(n));
            ys.push_back(lam);
        }
    }
    if (xs.size() < 2) return 0.0;
    return lsq_slope(xs, ys);
}

} // namespace

std::array<double, 4> connectivity_features(const CellGraph& g) {
    std::array<double, 4> out{};
    if (g.n == 0) return out;
    double clust_sum = 0;
    for (std::size_t u = 0; u < g.n; ++u) {
        const auto& nb = g.adj[u];
        if (nb.size() < 2) continue;
        std::size_t links = 0;
        for (std::size_t i = 0; i < nb.size(); ++i)
            for (std::size_t j = i + 1; j < nb.size(); ++j)
                if (g.has_edge(nb[i], nb[j])) ++links;
        clust_sum += 2.0 * double(links) / (double(nb.size()) * double(nb.size() - 1));
    }
    out[0] = clust_sum / double(g.n);
    out[1] = 2.0 * double(g.edge_count()) / double(g.n);
    int n_comps = 0;
    auto label = component_labels(g, n_comps);
    std::vector<std::size_t> sizes(n_comps, 0);
    for (int l : label) ++sizes[std::size_t(l)];
    out[2] = double(n_comps);
    out[3] = double(*std::max_element(sizes.begin(), sizes.end())) / double(g.n);
    return out;
}

std::array<double, 8> distance_features(const CellGraph& g) {
    std::array<double, 8> out{};
    if (g.n == 0) return out;
    out[0] = double(g.n);
    out[1] = double(g.edge_count());

    int n_comps = 0;
    auto label = component_labels(g, n_comps);
    std::vector<std::size_t> sizes(n_comps, 0);
    for (int l : label) ++sizes[std::size_t(l)];
    int giant = int(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());

    double ecc_sum = 0, close_sum = 0;
    int radius = -1, diameter = -1;
    std::vector<int> giant_ecc;
    for (std::size_t u = 0; u < g.n; ++u) {
        auto d = bfs_dist(g, u);
        int ecc = 0;
        long sum_d = 0;
        std::size_t reach = 0;
        for (std::size_t v = 0; v < g.n; ++v) {
            if (d[v] < 0) continue;
            ecc = std::max(ecc, d[v]);
            sum_d += d[v];
            ++reach;
        }
        if (reach > 1) close_sum += double(reach - 1) / double(sum_d);
        if (label[u] == giant) giant_ecc.push_back(ecc);
    }
    for (int e : giant_ecc) {
        ecc_sum += e;
        radius = (radius < 0) ? e : std::min(radius, e);
        diameter = std::max(diameter, e);
    }
    std::size_t central = 0;
    for (int e : giant_ecc)
        if (e == radius) ++central;
    out[2] = ecc_sum / double(giant_ecc.size());
    out[3] = double(radius);
    out[4] = double(diameter);
    out[5] = double(central);
    out[6] = 100.0 * double(central) / double(giant_ecc.size());
    out[7] = close_sum / double(g.n);
    return out;
}

std::array<double, 6> spectral_features(const CellGraph& g) {
    std::array<double, 6> out{};
    const std::size_t n = g.n;
    if (n == 0) return out;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(Eigen::Index(n), Eigen::Index(n));
    std::vector<double> deg(n, 0);
    for (std::size_t u = 0; u < n; ++u) {
        deg[u] = double(g.adj[u].size());
        for (std::size_t v : g.adj[u]) A(Eigen::Index(u), Eigen::Index(v)) = 1.0;
    }
    double deg_sum = 0;
    for (double d : deg) deg_sum += d;
    double mean_deg = deg_sum / double(n);

    Eigen::MatrixXd L = -A;
    for (std::size_t i = 0; i < n; ++i) L(Eigen::Index(i), Eigen::Index(i)) = deg[i];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_l(L, Eigen::EigenvaluesOnly);
    double energy = 0;
    for (Eigen::Index i = 0; i < es_l.eigenvalues().size(); ++i)
        energy += std::abs(es_l.eigenvalues()[i] - mean_deg);
    out[0] = energy;
    out[1] = deg_sum;

    Eigen::MatrixXd Ln = Eigen::MatrixXd::Zero(Eigen::Index(n), Eigen::Index(n));
    for (std::size_t u = 0; u < n; ++u) {
        if (deg[u] > 0) Ln(Eigen::Index(u), Eigen::Index(u)) = 1.0;
        for (std::size_t v : g.adj[u])
            Ln(Eigen::Index(u), Eigen::Index(v)) = -1.0 / std::sqrt(deg[u] * deg[v]);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_n(Ln, Eigen::EigenvaluesOnly);
    out[2] = eigen_range_slope(es_n.eigenvalues(), 1.0, 2.0, n);
    out[3] = eigen_range_slope(es_n.eigenvalues(), 0.0, 1.0, n);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_a(A, Eigen::EigenvaluesOnly);
    double adj_energy = 0;
    for (Eigen::Index i = 0; i < es_a.eigenvalues().size(); ++i)
        adj_energy += std::abs(es_a.eigenvalues()[i]);
    out[4] = es_a.eigenvalues()[es_a.eigenvalues().size() - 1];
    out[5] = adj_energy;
    return out;
}

std::array<double, 13> voronoi_features(const geom::VoronoiPartition& vp) {
    if (vp.cells.empty()) fail(Err::EmptyInput, "voronoi features need at least one cell");
    std::vector<double> areas, chords, perims;
    for (const auto& c : vp.cells) {
        areas.push_back(c.area());
        perims.push_back(c.perimeter());
        for (std::size_t i = 0; i < c.polygon.size(); ++i)
            for (std::size_t j = i + 1; j < c.polygon.size(); ++j)
                chords.push_back(geom::dist(c.polygon[i], c.polygon[j]));
    }
    double total = 0;
    for (double a : areas) total += a;
    auto sa = summarize(areas), sc = summarize(chords), sp = summarize(perims);
    return {total,
            sa.mean, sa.sd, sa.min_max_ratio, sa.disorder,
            sc.mean, sc.sd, sc.min_max_ratio, sc.disorder,
            sp.mean, sp.sd, sp.min_max_ratio, sp.disorder};
}

std::array<double, 8> delaunay_features(const geom::Triangulation& t) {
    if (t.triangles.empty()) fail(Err::NoTriangles, "delaunay features need at least one triangle");
    std::vector<double> areas, sides;
    for (const auto& tr : t.triangles) {
        const auto& a = t.points[tr.v[0]];
        const auto& b = t.points[tr.v[1]];
        const auto& c = t.points[tr.v[2]];
        areas.push_back(0.5 * std::abs((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)));
        sides.push_back(geom::dist(a, b));
        sides.push_back(geom::dist(b, c));
        sides.push_back(geom::dist(c, a));
    }
    auto sa = summarize(areas), ss = summarize(sides);
    return {sa.mean, sa.sd, sa.min_max_ratio, sa.disorder,
            ss.mean, ss.sd, ss.min_max_ratio, ss.disorder};
}

std::array<double, 4> mst_features(const std::vector<geom::WeightedEdge>& edges) {
    if (edges.empty()) fail(Err::EmptyEdgeList, "mst features need at least one edge");
    std::vector<double> ws;
    for (const auto& e : edges) ws.push_back(e.w);
    auto s = summarize(ws);
    return {s.mean, s.sd, s.min_max_ratio, s.disorder};
}

std::array<double, 26> nn_features(const std::vector<Point2D>& points, double patch_area) {
    if (patch_area <= 0) fail(Err::ConfigInvalid, "patch area must be positive");
    std::array<double, 26> out{};
    const std::size_t n = points.size();
    out[0] = double(n) / patch_area;
    out[1] = double(n);
    if (n == 0) return out;

    auto rows = geom::k_nearest_distances(points, 7);
    std::size_t at = 2;
    for (int k : {3, 5, 7}) {
        std::vector<double> vals(n);
        for (std::size_t i = 0; i < n; ++i) vals[i] = rows[i][std::size_t(k - 1)];
        auto s = summarize(vals);
        out[at++] = s.mean;
        out[at++] = s.sd;
        out[at++] = s.disorder;
    }
    for (double r : {10.0, 20.0, 30.0, 40.0, 50.0}) {
        auto counts = geom::count_within_radius(points, r);
        std::vector<double> vals(counts.begin(), counts.end());
        auto s = summarize(vals);
        out[at++] = s.mean;
        out[at++] = s.sd;
        out[at++] = s.disorder;
    }
    return out;
}

namespace {

// Geometric families become zeros when their construction is impossible;
// the caller-facing contract stays total over arbitrary tilings.
bool is_family_fallback(const Error& e) {
    switch (e.code()) {
        case Err::TooFewPoints:
        case Err::DegenerateInput:
        case Err::EmptyInput:
        case Err::PointOutsideClip:
        case Err::NoTriangles:
        case Err::EmptyEdgeList:
            return true;
        default:
            return false;
    }
}

} // namespace

PatchFeatureVector aggregate_patch_vector(const std::vector<CellRecord>& cells, double d_p,
                                          double theta_sim, const Rect& clip_rect) {
    PatchFeatureVector out;
    const std::size_t n = cells.size();
    CellGraph g = build_cell_graph(cells, d_p, theta_sim);

    auto conn = connectivity_features(g);
    auto dst = distance_features(g);
    auto spec = spectral_features(g);
    std::size_t at = 0;
    for (double v : conn) out.values[at++] = v;
    for (double v : dst) out.values[at++] = v;
    for (double v : spec) out.values[at++] = v;

    std::array<double, 13> vor{};
    if (n >= 1) vor[0] = clip_rect.area();
    if (n >= 3) {
        try {
            vor = voronoi_features(geom::voronoi_partition(g.positions, clip_rect));
        } catch (const Error& e) {
            if (!is_family_fallback(e)) throw;
            vor = {};
            vor[0] = clip_rect.area();
        }
    }
    for (double v : vor) out.values[at++] = v;

    std::array<double, 8> del{};
    if (n >= 3) {
        try {
            del = delaunay_features(geom::delaunay_triangulate(g.positions));
        } catch (const Error& e) {
            if (!is_family_fallback(e)) throw;
            del = {};
        }
    }
    for (double v : del) out.values[at++] = v;

    std::array<double, 4> mst{};
    if (n >= 3) {
        try {
            mst = mst_features(geom::euclidean_mst(g.positions));
        } catch (const Error& e) {
            if (!is_family_fallback(e)) throw;
            mst = {};
        }
    }
    for (double v : mst) out.values[at++] = v;

    auto nn = nn_features(g.positions, clip_rect.area());
    for (double v : nn) out.values[at++] = v;
    return out;
}

Rect inflate_clip(const Rect& r) {
    const double fx = r.width() * 0x1.0p-20, fy = r.height() * 0x1.0p-20;
    return Rect{r.x0 - fx, r.y0 - fy, r.x1 + fx, r.y1 + fy};
}

} // namespace abig
