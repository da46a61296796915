#include "abig/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>

namespace abig::geom {

// ---------------------------------------------------------------------------
// exact predicate kernel: floating-point expansions (nonoverlapping,
// increasing magnitude). Fast double paths carry conservative forward error
// bounds; anything inside the uncertainty band re-runs exactly.

namespace {

inline void two_sum(double a, double b, double& x, double& err) {
    x = a + b;
    double bv = x - a;
    double av = x - bv;
    err = (a - av) + (b - bv);
}

inline void fast_two_sum(double a, double b, double& x, double& err) {
    // requires |a| >= |b|
    x = a + b;
    err = b - (x - a);
}

inline void two_prod(double a, double b, double& x, double& err) {
    x = a * b;
    err = std::fma(a, b, -x);
}

using Exp = std::vector<double>;

Exp exp_prod(double a, double b) {
    double x, err;
    two_prod(a, b, x, err);
    Exp e;
    if (err != 0.0) e.push_back(err);
    if (x != 0.0) e.push_back(x);
    return e;
}

void exp_grow(Exp& e, double b) {
    if (b == 0.0) return;
    Exp h;
    h.reserve(e.size() + 1);
    double q = b;
    for (double comp : e) {
        double x, err;
        two_sum(q, comp, x, err);
        if (err != 0.0) h.push_back(err);
        q = x;
    }
    if (q != 0.0) h.push_back(q);
    e = std::move(h);
}

Exp exp_add(Exp e, const Exp& f) {
    for (double comp : f) exp_grow(e, comp);
    return e;
}

Exp exp_neg(Exp e) {
    for (double& c : e) c = -c;
    return e;
}

Exp exp_scale(const Exp& e, double b) {
    Exp h;
    if (e.empty() || b == 0.0) return h;
    double q, err;
    two_prod(e[0], b, q, err);
    if (err != 0.0) h.push_back(err);
    for (std::size_t i = 1; i < e.size(); ++i) {
        double t, terr, x, serr, q2, herr;
        two_prod(e[i], b, t, terr);
        two_sum(q, terr, x, serr);
        if (serr != 0.0) h.push_back(serr);
        fast_two_sum(t, x, q2, herr);
        if (herr != 0.0) h.push_back(herr);
        q = q2;
    }
    if (q != 0.0) h.push_back(q);
    return h;
}

Exp exp_mul(const Exp& a, const Exp& b) {
    Exp r;
    for (double c : a) r = exp_add(std::move(r), exp_scale(b, c));
    return r;
}

int exp_sign(const Exp& e) {
    if (e.empty()) return 0;
    double t = e.back();
    return t > 0.0 ? 1 : (t < 0.0 ? -1 : 0);
}

// exact sign of det [[bx-ax, by-ay], [cx-ax, cy-ay]] without translation:
//   bx*cy - bx*ay - ax*cy - by*cx + by*ax + ay*cx
int orient2d_exact(const Point2D& a, const Point2D& b, const Point2D& c) {
    Exp det = exp_prod(b.x, c.y);
    det = exp_add(std::move(det), exp_prod(-b.x, a.y));
    det = exp_add(std::move(det), exp_prod(-a.x, c.y));
    det = exp_add(std::move(det), exp_prod(-b.y, c.x));
    det = exp_add(std::move(det), exp_prod(b.y, a.x));
    det = exp_add(std::move(det), exp_prod(a.y, c.x));
    return exp_sign(det);
}

constexpr double kOrientErrBound = 3.3307e-16;  // (3 + 16u)u, rounded up

int orient2d_filtered(const Point2D& a, const Point2D& b, const Point2D& c) {
    double l = (b.x - a.x) * (c.y - a.y);
    double r = (b.y - a.y) * (c.x - a.x);
    double det = l - r;
    double mag = std::fabs(l) + std::fabs(r);
    if (std::fabs(det) > kOrientErrBound * mag) return det > 0.0 ? 1 : -1;
    return orient2d_exact(a, b, c);
}

// z component of the lifted point, exact
Exp lift(const Point2D& p) {
    return exp_add(exp_prod(p.x, p.x), exp_prod(p.y, p.y));
}

// det [[px,py,pz],[qx,qy,qz],[rx,ry,rz]] with exact lifted z terms
Exp lifted_minor(const Point2D& p, const Point2D& q, const Point2D& r) {
    Exp qz = lift(q), rz = lift(r), pz = lift(p);
    Exp t1 = exp_add(exp_scale(rz, q.y), exp_neg(exp_scale(qz, r.y)));
    Exp t2 = exp_add(exp_scale(rz, q.x), exp_neg(exp_scale(qz, r.x)));
    Exp t3 = exp_add(exp_prod(q.x, r.y), exp_neg(exp_prod(q.y, r.x)));
    Exp det = exp_scale(t1, p.x);
    det = exp_add(std::move(det), exp_neg(exp_scale(t2, p.y)));
    det = exp_add(std::move(det), exp_mul(pz, t3));
    return det;
}

// exact sign of the 4x4 lifted determinant, rows (a, b, c, d); positive
// means d lies strictly inside the circumcircle of CCW (a, b, c)
int incircle_exact(const Point2D& a, const Point2D& b, const Point2D& c, const Point2D& d) {
    Exp det = exp_neg(lifted_minor(b, c, d));
    det = exp_add(std::move(det), lifted_minor(a, c, d));
    det = exp_add(std::move(det), exp_neg(lifted_minor(a, b, d)));
    det = exp_add(std::move(det), lifted_minor(a, b, c));
    return exp_sign(det);
}

constexpr double kIncircleErrBound = 1.1103e-15;  // (10 + 96u)u, rounded up

int incircle_filtered(const Point2D& a, const Point2D& b, const Point2D& c, const Point2D& d) {
    double adx = a.x - d.x, ady = a.y - d.y;
    double bdx = b.x - d.x, bdy = b.y - d.y;
    double cdx = c.x - d.x, cdy = c.y - d.y;

    double bdxcdy = bdx * cdy, cdxbdy = cdx * bdy;
    double cdxady = cdx * ady, adxcdy = adx * cdy;
    double adxbdy = adx * bdy, bdxady = bdx * ady;
    double alift = adx * adx + ady * ady;
    double blift = bdx * bdx + bdy * bdy;
    double clift = cdx * cdx + cdy * cdy;

    double det = alift * (bdxcdy - cdxbdy) + blift * (cdxady - adxcdy) + clift * (adxbdy - bdxady);
    double permanent = alift * (std::fabs(bdxcdy) + std::fabs(cdxbdy)) +
                       blift * (std::fabs(cdxady) + std::fabs(adxcdy)) +
                       clift * (std::fabs(adxbdy) + std::fabs(bdxady));
    if (std::fabs(det) > kIncircleErrBound * permanent) return det > 0.0 ? 1 : -1;
    return incircle_exact(a, b, c, d);
}

} // namespace

int orient2d_sign(const Point2D& a, const Point2D& b, const Point2D& c) {
    return orient2d_filtered(a, b, c);
}

int incircle_sign(const Point2D& a, const Point2D& b, const Point2D& c, const Point2D& d) {
    return incircle_filtered(a, b, c, d);
}

// ---------------------------------------------------------------------------
// Bowyer-Watson triangulation with a ghost vertex closing the hull

namespace {

constexpr std::size_t kGhost = static_cast<std::size_t>(-1);

// co-circular tie break: perturb the lifted coordinate of point i downward by
// eps^(i+1), so lower indices dominate; the sign comes from the first row, in
// increasing index order, whose lifted-column cofactor is nonzero
int incircle_sos(const std::vector<Point2D>& pts, std::size_t ia, std::size_t ib,
                 std::size_t ic, std::size_t id) {
    const Point2D &a = pts[ia], &b = pts[ib], &c = pts[ic], &d = pts[id];
    int s = incircle_filtered(a, b, c, d);
    if (s != 0) return s;
    struct RowCof {
        std::size_t idx;
        int cof;
    };
    std::array<RowCof, 4> rows = {{{ia, orient2d_filtered(b, c, d)},
                                   {ib, -orient2d_filtered(a, c, d)},
                                   {ic, orient2d_filtered(a, b, d)},
                                   {id, -orient2d_filtered(a, b, c)}}};
    std::sort(rows.begin(), rows.end(),
              [](const RowCof& l, const RowCof& r) { return l.idx < r.idx; });
    for (const RowCof& rc : rows)
        if (rc.cof != 0) return -rc.cof;
    return 0; // unreachable for a valid CCW triangle
}

struct Tri {
    std::array<std::size_t, 3> v;   // ghost triangles keep kGhost at slot 2
    std::array<std::size_t, 3> nbr; // neighbor across edge opposite slot i
    bool alive = true;
    bool ghost() const { return v[2] == kGhost; }
};

constexpr std::size_t kNoTri = static_cast<std::size_t>(-1);

struct Mesh {
    const std::vector<Point2D>& pts;
    std::vector<Tri> tris;
    std::vector<std::uint32_t> stamp;
    std::uint32_t cur_stamp = 0;

    explicit Mesh(const std::vector<Point2D>& p) : pts(p) {}

    // strictly between a and b on their common line (inputs known collinear)
    bool on_open_segment(std::size_t ia, std::size_t ib, std::size_t ip) const {
        const Point2D &a = pts[ia], &b = pts[ib], &p = pts[ip];
        if (a.x != b.x) {
            double lo = std::min(a.x, b.x), hi = std::max(a.x, b.x);
            return p.x > lo && p.x < hi;
        }
        double lo = std::min(a.y, b.y), hi = std::max(a.y, b.y);
        return p.y > lo && p.y < hi;
    }

    // does the (perturbed, open) circumdisk of t contain point ip
    bool in_disk(const Tri& t, std::size_t ip) const {
        if (!t.ghost())
            return incircle_sos(pts, t.v[0], t.v[1], t.v[2], ip) > 0;
        // ghost (a, b, inf): outside half-plane left of a->b, plus the open edge
        int o = orient2d_filtered(pts[t.v[0]], pts[t.v[1]], pts[ip]);
        if (o > 0) return true;
        if (o < 0) return false;
        return on_open_segment(t.v[0], t.v[1], ip);
    }

    std::size_t locate_seed(std::size_t ip, std::size_t hint) {
        std::size_t cur = hint;
        std::size_t limit = 4 * tris.size() + 16;
        for (std::size_t step = 0; step < limit; ++step) {
            const Tri& t = tris[cur];
            if (t.ghost()) {
                if (in_disk(t, ip)) return cur;
                cur = t.nbr[2]; // back across the hull edge
                continue;
            }
            std::size_t next = kNoTri;
            for (int k = 0; k < 3 && next == kNoTri; ++k) {
                std::size_t e1 = t.v[(k + 1) % 3], e2 = t.v[(k + 2) % 3];
                if (orient2d_filtered(pts[e1], pts[e2], pts[ip]) < 0) next = t.nbr[k];
            }
            if (next == kNoTri) return cur; // contained, closed disk holds ip
            cur = next;
        }
        // safety net: exhaustive scan (still deterministic)
        for (std::size_t i = 0; i < tris.size(); ++i)
            if (tris[i].alive && in_disk(tris[i], ip)) return i;
        fail(Err::DegenerateInput, "triangulation walk failed");
    }

    void insert(std::size_t ip, std::size_t& hint) {
        std::size_t seed = locate_seed(ip, hint);
        ++cur_stamp;
        stamp.resize(tris.size(), 0);
        std::vector<std::size_t> cavity, queue{seed};
        stamp[seed] = cur_stamp;
        while (!queue.empty()) {
            std::size_t ti = queue.back();
            queue.pop_back();
            cavity.push_back(ti);
            for (std::size_t nb : tris[ti].nbr) {
                if (nb == kNoTri || stamp[nb] == cur_stamp || !tris[nb].alive) continue;
                if (in_disk(tris[nb], ip)) {
                    stamp[nb] = cur_stamp;
                    queue.push_back(nb);
                }
            }
        }
        // boundary edges, oriented as traversed inside the dying triangle
        struct BEdge {
            std::size_t e1, e2, outside;
        };
        std::vector<BEdge> boundary;
        for (std::size_t ti : cavity) {
            const Tri& t = tris[ti];
            for (int k = 0; k < 3; ++k) {
                std::size_t nb = t.nbr[k];
                bool nb_dead = nb != kNoTri && stamp[nb] == cur_stamp;
                if (!nb_dead) boundary.push_back({t.v[(k + 1) % 3], t.v[(k + 2) % 3], nb});
            }
        }
        for (std::size_t ti : cavity) tris[ti].alive = false;

        // one new triangle per boundary edge; stitch via directed-edge map
        std::map<std::pair<std::size_t, std::size_t>, std::pair<std::size_t, int>> open_edge;
        std::size_t first_new = kNoTri;
        for (const BEdge& be : boundary) {
            Tri nt;
            if (be.e2 == kGhost) {
                nt.v = {ip, be.e1, kGhost};       // was (e1, inf): new hull edge ip->e1
            } else if (be.e1 == kGhost) {
                nt.v = {be.e2, ip, kGhost};       // was (inf, e2): new hull edge e2->ip
            } else {
                nt.v = {be.e1, be.e2, ip};
            }
            nt.nbr = {kNoTri, kNoTri, kNoTri};
            std::size_t nti = tris.size();
            tris.push_back(nt);
            stamp.push_back(0);
            if (first_new == kNoTri) first_new = nti;
            Tri& tn = tris[nti];
            // outer edge links back to the surviving neighbor
            int outer_slot = -1;
            for (int k = 0; k < 3; ++k) {
                std::size_t a = tn.v[(k + 1) % 3], b = tn.v[(k + 2) % 3];
                if ((a == be.e1 && b == be.e2) || (a == be.e2 && b == be.e1)) outer_slot = k;
            }
            tn.nbr[outer_slot] = be.outside;
            if (be.outside != kNoTri) {
                Tri& out = tris[be.outside];
                for (int k = 0; k < 3; ++k) {
                    std::size_t a = out.v[(k + 1) % 3], b = out.v[(k + 2) % 3];
                    if ((a == be.e1 && b == be.e2) || (a == be.e2 && b == be.e1)) out.nbr[k] = nti;
                }
            }
            // remaining two edges pair up with sibling new triangles
            for (int k = 0; k < 3; ++k) {
                if (k == outer_slot) continue;
                std::size_t a = tn.v[(k + 1) % 3], b = tn.v[(k + 2) % 3];
                auto it = open_edge.find({b, a});
                if (it != open_edge.end()) {
                    tn.nbr[k] = it->second.first;
                    tris[it->second.first].nbr[it->second.second] = nti;
                    open_edge.erase(it);
                } else {
                    open_edge[{a, b}] = {nti, k};
                }
            }
        }
        if (!open_edge.empty()) fail(Err::DegenerateInput, "cavity boundary failed to close");
        hint = first_new;
    }
};

} // namespace

Triangulation delaunay_triangulate(const std::vector<Point2D>& points) {
    std::size_t n = points.size();
    if (n < 3) fail(Err::TooFewPoints, "triangulation needs at least 3 points");
    {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (points[a].x != points[b].x) return points[a].x < points[b].x;
            return points[a].y < points[b].y;
        });
        for (std::size_t i = 1; i < n; ++i) {
            const Point2D &a = points[order[i - 1]], &b = points[order[i]];
            if (a.x == b.x && a.y == b.y) fail(Err::DegenerateInput, "duplicate points");
        }
        for (const Point2D& p : points)
            if (!std::isfinite(p.x) || !std::isfinite(p.y))
                fail(Err::DegenerateInput, "non-finite coordinate");
    }

    // first non-collinear triple, scanning in index order
    std::size_t i2 = kNoTri;
    int orient = 0;
    for (std::size_t j = 2; j < n && i2 == kNoTri; ++j) {
        orient = orient2d_filtered(points[0], points[1], points[j]);
        if (orient != 0) i2 = j;
    }
    if (i2 == kNoTri) fail(Err::DegenerateInput, "all points collinear");

    Mesh mesh(points);
    std::size_t a = 0, b = 1, c = i2;
    if (orient < 0) std::swap(b, c);
    mesh.tris.push_back({{a, b, c}, {1, 2, 3}, true});
    mesh.tris.push_back({{c, b, kGhost}, {2, 3, 0}, true}); // hull edge b->c reversed
    mesh.tris.push_back({{a, c, kGhost}, {3, 1, 0}, true});
    mesh.tris.push_back({{b, a, kGhost}, {1, 2, 0}, true});
    // fix ghost-to-ghost links: ghost edges (v0, inf) and (inf, v1)
    // slot0 edge = (v1, inf), slot1 edge = (inf, v0)
    auto link_ghosts = [&](std::size_t g1, std::size_t g2) {
        // g1 slot0 vertex v1 equals g2 slot1 vertex v0
        mesh.tris[g1].nbr[0] = g2;
        mesh.tris[g2].nbr[1] = g1;
    };
    // ghost(c,b): slot0 edge (b, inf); ghost(b,a): slot1 edge (inf, b)
    link_ghosts(1, 3);
    link_ghosts(3, 2); // ghost(b,a) slot0 (a, inf) <-> ghost(a,c) slot1 (inf, a)
    link_ghosts(2, 1); // ghost(a,c) slot0 (c, inf) <-> ghost(c,b) slot1 (inf, c)
    mesh.stamp.assign(4, 0);

    std::size_t hint = 0;
    for (std::size_t ip = 2; ip < n; ++ip) {
        if (ip == i2) continue;
        mesh.insert(ip, hint);
    }

    Triangulation out;
    out.points = points;
    for (const Tri& t : mesh.tris)
        if (t.alive && !t.ghost()) out.triangles.push_back({{t.v[0], t.v[1], t.v[2]}});
    if (out.triangles.empty()) fail(Err::DegenerateInput, "no finite triangles");
    return out;
}

std::vector<std::pair<std::size_t, std::size_t>> Triangulation::edges() const {
    std::vector<std::pair<std::size_t, std::size_t>> e;
    e.reserve(triangles.size() * 3);
    for (const Triangle& t : triangles)
        for (int k = 0; k < 3; ++k) {
            std::size_t a = t.v[k], b = t.v[(k + 1) % 3];
            e.emplace_back(std::min(a, b), std::max(a, b));
        }
    std::sort(e.begin(), e.end());
    e.erase(std::unique(e.begin(), e.end()), e.end());
    return e;
}

std::vector<std::vector<std::size_t>> Triangulation::adjacency() const {
    std::vector<std::vector<std::size_t>> adj(points.size());
    for (const auto& [a, b] : edges()) {
        adj[a].push_back(b);
        adj[b].push_back(a);
    }
    for (auto& lst : adj) std::sort(lst.begin(), lst.end());
    return adj;
}

// ---------------------------------------------------------------------------
// Voronoi cells by half-plane clipping against Delaunay-neighbor bisectors

double polygon_area(const std::vector<Point2D>& poly) {
    double s = 0;
    std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Point2D &a = poly[i], &b = poly[(i + 1) % n];
        s += a.x * b.y - b.x * a.y;
    }
    return 0.5 * s;
}

double VoronoiCell::area() const { return polygon.size() < 3 ? 0.0 : polygon_area(polygon); }

double VoronoiCell::perimeter() const {
    if (polygon.size() < 2) return 0.0;
    double s = 0;
    for (std::size_t i = 0; i < polygon.size(); ++i)
        s += dist(polygon[i], polygon[(i + 1) % polygon.size()]);
    return s;
}

std::vector<Point2D> clip_halfplane(const std::vector<Point2D>& poly, const Point2D& origin,
                                    double nx, double ny) {
    std::vector<Point2D> out;
    std::size_t n = poly.size();
    if (n == 0) return out;
    out.reserve(n + 1);
    auto side = [&](const Point2D& p) { return (p.x - origin.x) * nx + (p.y - origin.y) * ny; };
    for (std::size_t i = 0; i < n; ++i) {
        const Point2D &cur = poly[i], &nxt = poly[(i + 1) % n];
        double dc = side(cur), dn = side(nxt);
        if (dc <= 0.0) out.push_back(cur);
        if ((dc < 0.0 && dn > 0.0) || (dc > 0.0 && dn <= 0.0)) {
            double t = dc / (dc - dn);
            out.push_back({cur.x + t * (nxt.x - cur.x), cur.y + t * (nxt.y - cur.y)});
        }
    }
    return out;
}

VoronoiPartition voronoi_partition(const std::vector<Point2D>& points, const Rect& clip_rect) {
    std::size_t n = points.size();
    if (n == 0) fail(Err::EmptyInput, "no generating points");
    for (const Point2D& p : points)
        if (!clip_rect.contains_strict(p.x, p.y))
            fail(Err::PointOutsideClip, "generating point outside clip rect");
    {
        std::vector<Point2D> sorted = points;
        std::sort(sorted.begin(), sorted.end(), [](const Point2D& a, const Point2D& b) {
            return a.x != b.x ? a.x < b.x : a.y < b.y;
        });
        for (std::size_t i = 1; i < n; ++i)
            if (sorted[i].x == sorted[i - 1].x && sorted[i].y == sorted[i - 1].y)
                fail(Err::DegenerateInput, "duplicate generating points");
    }

    std::vector<std::vector<std::size_t>> nbrs;
    bool have_delaunay = false;
    if (n >= 3) {
        try {
            nbrs = delaunay_triangulate(points).adjacency();
            have_delaunay = true;
        } catch (const Error& e) {
            if (e.code() != Err::DegenerateInput) throw;
        }
    }
    if (!have_delaunay) {
        nbrs.assign(n, {});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (j != i) nbrs[i].push_back(j);
    }

    std::vector<Point2D> rect_poly = {{clip_rect.x0, clip_rect.y0},
                                      {clip_rect.x1, clip_rect.y0},
                                      {clip_rect.x1, clip_rect.y1},
                                      {clip_rect.x0, clip_rect.y1}};
    VoronoiPartition vp;
    vp.cells.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<Point2D> poly = rect_poly;
        for (std::size_t j : nbrs[i]) {
            Point2D mid{0.5 * (points[i].x + points[j].x), 0.5 * (points[i].y + points[j].y)};
            poly = clip_halfplane(poly, mid, points[j].x - points[i].x, points[j].y - points[i].y);
            if (poly.empty()) break;
        }
        vp.cells[i].site = i;
        vp.cells[i].polygon = std::move(poly);
    }
    return vp;
}

// ---------------------------------------------------------------------------

std::vector<WeightedEdge> euclidean_mst(const std::vector<Point2D>& points) {
    std::size_t n = points.size();
    if (n < 2) fail(Err::TooFewPoints, "spanning tree needs at least 2 points");
    std::vector<bool> used(n, false);
    std::vector<double> best(n, std::numeric_limits<double>::infinity());
    std::vector<std::size_t> from(n, 0);
    used[0] = true;
    for (std::size_t j = 1; j < n; ++j) best[j] = dist(points[0], points[j]);
    std::vector<WeightedEdge> mst;
    mst.reserve(n - 1);
    for (std::size_t it = 1; it < n; ++it) {
        std::size_t pick = kNoTri;
        for (std::size_t j = 0; j < n; ++j)
            if (!used[j] && (pick == kNoTri || best[j] < best[pick])) pick = j;
        used[pick] = true;
        mst.push_back({std::min(from[pick], pick), std::max(from[pick], pick), best[pick]});
        for (std::size_t j = 0; j < n; ++j) {
            if (used[j]) continue;
            double d = dist(points[pick], points[j]);
            if (d < best[j]) {
                best[j] = d;
                from[j] = pick;
            }
        }
    }
    return mst;
}

std::vector<std::vector<double>> k_nearest_distances(const std::vector<Point2D>& points, int k) {
    if (k < 1) fail(Err::ConfigInvalid, "k must be positive");
    std::size_t n = points.size();
    std::vector<std::vector<double>> out;
    if (n == 0) return out;
    out.reserve(n);
    if (n == 1) {
        out.emplace_back(static_cast<std::size_t>(k), 0.0);
        return out;
    }
    std::vector<double> d;
    for (std::size_t i = 0; i < n; ++i) {
        d.clear();
        d.reserve(n - 1);
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) d.push_back(dist(points[i], points[j]));
        std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), d.size());
        std::partial_sort(d.begin(), d.begin() + take, d.end());
        std::vector<double> row(d.begin(), d.begin() + take);
        while (row.size() < static_cast<std::size_t>(k)) row.push_back(row.back());
        out.push_back(std::move(row));
    }
    return out;
}

std::vector<int> count_within_radius(const std::vector<Point2D>& points, double radius) {
    if (radius <= 0.0) fail(Err::NonPositiveRadius, "radius must be positive");
    std::size_t n = points.size();
    std::vector<int> out(n, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (dist(points[i], points[j]) <= radius) {
                ++out[i];
                ++out[j];
            }
    return out;
}

} // namespace abig::geom
