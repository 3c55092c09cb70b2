#include "conflate/geom.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace conflate {

namespace {

double cross(const Point& o, const Point& a, const Point& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

bool finite(const Point& p) { return std::isfinite(p.x) && std::isfinite(p.y); }

std::string fmt_point(const Point& p) {
    std::ostringstream os;
    os.precision(17);
    os << "(" << p.x << ", " << p.y << ")";
    return os.str();
}

}  // namespace

const PolyEntity* Gdb::find_entity(const Id& id) const {
    for (const auto& e : entities)
        if (e.id == id) return &e;
    return nullptr;
}

const Segment* Gdb::find_segment(const Id& id) const {
    for (const auto& s : segments)
        if (s.id == id) return &s;
    return nullptr;
}

void GeoConfig::validate() const {
    if (!(theta > 0.0 && theta < 180.0)) throw std::invalid_argument("theta must lie in (0, 180)");
    if (!(delta > 0.0)) throw std::invalid_argument("delta must be positive");
    if (!(lambda_buf > 0.0)) throw std::invalid_argument("lambda_buf must be positive");
    if (!(mu > 0.0)) throw std::invalid_argument("mu must be positive");
    for (double e : eta)
        if (!(e > 0.0)) throw std::invalid_argument("eta values must be positive");
}

void validate(const Gdb& g) {
    std::set<Id> ids;
    auto check_feat = [&](const Id& id) {
        auto it = g.features.find(id);
        if (it == g.features.end()) throw std::invalid_argument("missing feature vector for " + id);
        if (it->second.size() != g.feature_names.size())
            throw std::invalid_argument("feature vector of " + id + " has wrong dimension");
        for (double v : it->second)
            if (!std::isfinite(v)) throw std::invalid_argument("non-finite feature for " + id);
    };
    for (const auto& e : g.entities) {
        if (!ids.insert(e.id).second) throw std::invalid_argument("duplicate id " + e.id);
        if (e.ring.size() < 4 || e.ring.front() != e.ring.back())
            throw std::invalid_argument("polygon " + e.id + " ring not closed or too short");
        for (const auto& p : e.ring)
            if (!finite(p)) throw std::invalid_argument("non-finite vertex in " + e.id);
        check_feat(e.id);
    }
    for (const auto& s : g.segments) {
        if (!ids.insert(s.id).second) throw std::invalid_argument("duplicate id " + s.id);
        if (s.points.size() < 2) throw std::invalid_argument("segment " + s.id + " has < 2 points");
        for (size_t i = 0; i < s.points.size(); ++i) {
            if (!finite(s.points[i])) throw std::invalid_argument("non-finite point in " + s.id);
            if (i > 0 && s.points[i] == s.points[i - 1])
                throw std::invalid_argument("segment " + s.id + " repeats a point");
        }
        check_feat(s.id);
    }
}

// ---------------------------------------------------------------- segmentation

namespace {

void check_way(const Way& w) {
    if (w.points.size() < 2) throw GeometryError("way " + w.id + " has fewer than 2 points");
    for (size_t i = 0; i < w.points.size(); ++i) {
        if (!finite(w.points[i])) throw GeometryError("way " + w.id + " has a non-finite point");
        if (i > 0 && w.points[i] == w.points[i - 1])
            throw GeometryError("degenerate way " + w.id + ": repeated point " +
                                fmt_point(w.points[i]) + " at index " + std::to_string(i));
    }
}

// 180 minus the interior angle at p between a and b, in degrees
double deviation_deg(const Point& a, const Point& p, const Point& b) {
    double ux = a.x - p.x, uy = a.y - p.y, vx = b.x - p.x, vy = b.y - p.y;
    double interior = std::atan2(std::abs(ux * vy - uy * vx), ux * vx + uy * vy);
    return 180.0 - interior * 180.0 / M_PI;
}

}  // namespace

std::map<Point, bool> terminal_points(const std::vector<Way>& ways, const GeoConfig& cfg) {
    std::map<Point, std::set<Point>> adj;
    for (const auto& w : ways) {
        check_way(w);
        for (size_t i = 0; i + 1 < w.points.size(); ++i) {
            adj[w.points[i]].insert(w.points[i + 1]);
            adj[w.points[i + 1]].insert(w.points[i]);
        }
    }
    std::map<Point, bool> out;
    for (const auto& [p, nb] : adj) {
        size_t deg = nb.size();
        bool term = deg == 1 || deg > 2;
        if (deg == 2) {
            auto it = nb.begin();
            const Point& a = *it++;
            const Point& b = *it;
            term = deviation_deg(a, p, b) > cfg.theta;
        }
        out[p] = term;
    }
    return out;
}

std::vector<Segment> split_ways_into_segments(const std::vector<Way>& ways, const GeoConfig& cfg) {
    auto term = terminal_points(ways, cfg);
    std::vector<Segment> out;
    for (const auto& w : ways) {
        size_t start = 0;
        int k = 0;
        for (size_t i = 1; i < w.points.size(); ++i) {
            bool cut = i + 1 == w.points.size() || term.at(w.points[i]);
            if (!cut) continue;
            Segment s;
            s.id = w.id + "/" + std::to_string(k++);
            s.way_id = w.id;
            s.points.assign(w.points.begin() + static_cast<long>(start),
                            w.points.begin() + static_cast<long>(i) + 1);
            out.push_back(std::move(s));
            start = i;
        }
    }
    return out;
}

std::vector<Segment> split_ways_into_segments(const std::vector<std::vector<Point>>& ways,
                                              const GeoConfig& cfg) {
    std::vector<Way> w;
    w.reserve(ways.size());
    for (size_t i = 0; i < ways.size(); ++i) w.push_back({"w" + std::to_string(i), ways[i]});
    return split_ways_into_segments(w, cfg);
}

// ---------------------------------------------------------------- basic measures

Mbr mbr(const std::vector<Point>& pts) {
    if (pts.empty()) throw std::invalid_argument("mbr of empty point set");
    Mbr m{pts[0].x, pts[0].x, pts[0].y, pts[0].y};
    for (const auto& p : pts) {
        m.x_min = std::min(m.x_min, p.x);
        m.x_max = std::max(m.x_max, p.x);
        m.y_min = std::min(m.y_min, p.y);
        m.y_max = std::max(m.y_max, p.y);
    }
    return m;
}

Mbr mbr(const PolyEntity& p) { return mbr(p.ring); }
Mbr mbr(const Segment& s) { return mbr(s.points); }

double signed_area(const Ring& r) {
    double a = 0.0;
    for (size_t i = 0, n = r.size(); i < n; ++i) {
        const Point& p = r[i];
        const Point& q = r[(i + 1) % n];
        a += p.x * q.y - q.x * p.y;
    }
    return 0.5 * a;
}

Point ring_centroid(const Ring& r) {
    double a = 0.0, cx = 0.0, cy = 0.0;
    // shift to the first vertex to keep the products small
    const Point o = r[0];
    for (size_t i = 0, n = r.size(); i < n; ++i) {
        Point p{r[i].x - o.x, r[i].y - o.y};
        Point q{r[(i + 1) % n].x - o.x, r[(i + 1) % n].y - o.y};
        double c = p.x * q.y - q.x * p.y;
        a += c;
        cx += (p.x + q.x) * c;
        cy += (p.y + q.y) * c;
    }
    if (a == 0.0) throw GeometryError("centroid of zero-area ring");
    return {o.x + cx / (3.0 * a), o.y + cy / (3.0 * a)};
}

double polyline_length(const std::vector<Point>& pts) {
    double L = 0.0;
    for (size_t i = 0; i + 1 < pts.size(); ++i) L += std::hypot(pts[i + 1].x - pts[i].x, pts[i + 1].y - pts[i].y);
    return L;
}

Point polyline_midpoint(const std::vector<Point>& pts) {
    if (pts.empty()) throw std::invalid_argument("midpoint of empty polyline");
    double half = 0.5 * polyline_length(pts);
    if (half == 0.0) return pts[0];
    double acc = 0.0;
    for (size_t i = 0; i + 1 < pts.size(); ++i) {
        double d = std::hypot(pts[i + 1].x - pts[i].x, pts[i + 1].y - pts[i].y);
        if (acc + d >= half && d > 0.0) {
            double t = (half - acc) / d;
            return {pts[i].x + t * (pts[i + 1].x - pts[i].x), pts[i].y + t * (pts[i + 1].y - pts[i].y)};
        }
        acc += d;
    }
    return pts.back();
}

namespace {

bool segments_cross(const Point& a, const Point& b, const Point& c, const Point& d) {
    auto sgn = [](double v) { return (v > 0) - (v < 0); };
    int d1 = sgn(cross(a, b, c)), d2 = sgn(cross(a, b, d));
    int d3 = sgn(cross(c, d, a)), d4 = sgn(cross(c, d, b));
    if (d1 * d2 < 0 && d3 * d4 < 0) return true;
    auto on = [](const Point& p, const Point& q, const Point& r) {
        return std::min(p.x, q.x) <= r.x && r.x <= std::max(p.x, q.x) && std::min(p.y, q.y) <= r.y &&
               r.y <= std::max(p.y, q.y);
    };
    if (d1 == 0 && on(a, b, c)) return true;
    if (d2 == 0 && on(a, b, d)) return true;
    if (d3 == 0 && on(c, d, a)) return true;
    if (d4 == 0 && on(c, d, b)) return true;
    return false;
}

}  // namespace

bool ring_is_simple(const Ring& r) {
    size_t n = r.size();
    if (n < 3) return false;
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) {
            bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if (adjacent) continue;
            if (segments_cross(r[i], r[(i + 1) % n], r[j], r[(j + 1) % n])) return false;
        }
    }
    return true;
}

Ring open_ring(const PolyEntity& p) {
    Ring r(p.ring.begin(), p.ring.end());
    if (r.size() > 1 && r.front() == r.back()) r.pop_back();
    return r;
}

PolyEntity make_polygon(Id id, std::vector<Point> pts) {
    Ring r;
    for (const auto& p : pts) {
        if (!finite(p)) throw GeometryError("polygon " + id + " has a non-finite vertex");
        if (r.empty() || r.back() != p) r.push_back(p);
    }
    if (r.size() > 1 && r.front() == r.back()) r.pop_back();
    std::set<Point> distinct(r.begin(), r.end());
    if (distinct.size() < 3 || distinct.size() != r.size())
        throw GeometryError("polygon " + id + " needs at least 3 distinct, non-repeating vertices");
    if (!ring_is_simple(r)) throw GeometryError("polygon " + id + " ring self-intersects");
    double a = signed_area(r);
    if (a == 0.0) throw GeometryError("polygon " + id + " has zero area");
    if (a < 0.0) std::reverse(r.begin(), r.end());
    PolyEntity e;
    e.id = std::move(id);
    e.center = ring_centroid(r);
    e.ring = r;
    e.ring.push_back(r.front());
    return e;
}

// ---------------------------------------------------------------- convex clipping

namespace {

// Keeps the part of a convex polygon on the left of a->b (inclusive).
Ring clip_halfplane(const Ring& poly, const Point& a, const Point& b, bool keep_left) {
    Ring out;
    size_t n = poly.size();
    if (n == 0) return out;
    auto side = [&](const Point& p) {
        double c = cross(a, b, p);
        return keep_left ? c : -c;
    };
    for (size_t i = 0; i < n; ++i) {
        const Point& p = poly[i];
        const Point& q = poly[(i + 1) % n];
        double sp = side(p), sq = side(q);
        if (sp >= 0) out.push_back(p);
        if ((sp > 0 && sq < 0) || (sp < 0 && sq > 0)) {
            double t = sp / (sp - sq);
            out.push_back({p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)});
        }
    }
    return out;
}

double ring_scale(const Ring& r) {
    double s = 0.0;
    for (const auto& p : r) s = std::max({s, std::abs(p.x), std::abs(p.y)});
    return std::max(s, 1.0);
}

bool negligible(const Ring& r, double scale) {
    return r.size() < 3 || std::abs(signed_area(r)) <= 1e-14 * scale * scale;
}

}  // namespace

Ring clip_convex(const Ring& subject, const Ring& clip) {
    Ring out = subject;
    for (size_t i = 0, n = clip.size(); i < n && !out.empty(); ++i)
        out = clip_halfplane(out, clip[i], clip[(i + 1) % n], true);
    return out;
}

std::vector<Ring> triangulate(const Ring& input) {
    Ring r = input;
    if (signed_area(r) < 0) std::reverse(r.begin(), r.end());
    std::vector<Ring> tris;
    std::vector<size_t> idx(r.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    auto inside_tri = [](const Point& p, const Point& a, const Point& b, const Point& c) {
        return cross(a, b, p) >= 0 && cross(b, c, p) >= 0 && cross(c, a, p) >= 0;
    };
    size_t guard = 0;
    while (idx.size() > 3) {
        bool clipped = false;
        size_t n = idx.size();
        for (size_t i = 0; i < n; ++i) {
            size_t ip = idx[(i + n - 1) % n], ic = idx[i], in = idx[(i + 1) % n];
            const Point &a = r[ip], &b = r[ic], &c = r[in];
            double cr = cross(a, b, c);
            if (cr <= 0) {
                if (cr == 0) {  // collinear vertex: drop it
                    idx.erase(idx.begin() + static_cast<long>(i));
                    clipped = true;
                    break;
                }
                continue;
            }
            bool ear = true;
            for (size_t j = 0; j < n && ear; ++j) {
                size_t k = idx[j];
                if (k == ip || k == ic || k == in) continue;
                if (r[k] == a || r[k] == b || r[k] == c) continue;
                if (inside_tri(r[k], a, b, c)) ear = false;
            }
            if (!ear) continue;
            tris.push_back({a, b, c});
            idx.erase(idx.begin() + static_cast<long>(i));
            clipped = true;
            break;
        }
        if (!clipped || ++guard > 100000) throw GeometryError("triangulation failed: ring not simple");
    }
    if (idx.size() == 3 && cross(r[idx[0]], r[idx[1]], r[idx[2]]) > 0)
        tris.push_back({r[idx[0]], r[idx[1]], r[idx[2]]});
    return tris;
}

double Region::area() const {
    double a = 0.0;
    for (const auto& p : pieces) a += signed_area(p);
    return a;
}

bool Region::contains(const Point& q) const {
    for (const auto& p : pieces) {
        bool in = true;
        for (size_t i = 0, n = p.size(); i < n && in; ++i)
            if (cross(p[i], p[(i + 1) % n], q) < 0) in = false;
        if (in) return true;
    }
    return false;
}

Mbr Region::bounds() const {
    std::vector<Point> all;
    for (const auto& p : pieces) all.insert(all.end(), p.begin(), p.end());
    return mbr(all);
}

Region region_from_ring(const Ring& r) {
    Region g;
    g.pieces = triangulate(r);
    return g;
}

Region region_from_polygon(const PolyEntity& p) { return region_from_ring(open_ring(p)); }

Region region_union(const std::vector<Ring>& parts) {
    Region out;
    for (const auto& raw : parts) {
        Ring part = raw;
        if (signed_area(part) < 0) std::reverse(part.begin(), part.end());
        double scale = ring_scale(part);
        std::vector<Ring> frags{part};
        for (const auto& q : out.pieces) {
            std::vector<Ring> next;
            for (const auto& f : frags) {
                Ring rest = f;
                for (size_t i = 0, n = q.size(); i < n && !negligible(rest, scale); ++i) {
                    Ring outside = clip_halfplane(rest, q[i], q[(i + 1) % n], false);
                    if (!negligible(outside, scale)) next.push_back(outside);
                    rest = clip_halfplane(rest, q[i], q[(i + 1) % n], true);
                }
            }
            frags.swap(next);
            if (frags.empty()) break;
        }
        for (auto& f : frags) out.pieces.push_back(std::move(f));
    }
    return out;
}

double intersection_area(const Region& a, const Region& b) {
    double s = 0.0;
    for (const auto& pa : a.pieces) {
        Mbr ma = mbr(pa);
        for (const auto& pb : b.pieces) {
            if (!ma.intersects(mbr(pb))) continue;
            Ring c = clip_convex(pa, pb);
            if (c.size() >= 3) s += std::abs(signed_area(c));
        }
    }
    return s;
}

double jaccard_area(const Region& a, const Region& b) {
    double aa = a.area(), ab = b.area();
    if (!(aa > 0.0) || !(ab > 0.0)) throw GeometryError("jaccard_area on a zero-area shape");
    double i = intersection_area(a, b);
    double u = aa + ab - i;
    double j = i / u;
    return std::clamp(j, 0.0, 1.0);
}

double jaccard_area(const PolyEntity& a, const PolyEntity& b) {
    return jaccard_area(region_from_polygon(a), region_from_polygon(b));
}

Region buffer_segment(const Segment& s, double lambda_buf) {
    if (!(lambda_buf > 0.0)) throw std::invalid_argument("buffer width must be positive");
    double r = 0.5 * lambda_buf;
    std::vector<Ring> parts;
    const auto& P = s.points;
    for (size_t i = 0; i + 1 < P.size(); ++i) {
        double dx = P[i + 1].x - P[i].x, dy = P[i + 1].y - P[i].y;
        double L = std::hypot(dx, dy);
        if (L == 0.0) continue;
        double nx = -dy / L * r, ny = dx / L * r;
        parts.push_back({{P[i].x - nx, P[i].y - ny},
                         {P[i + 1].x - nx, P[i + 1].y - ny},
                         {P[i + 1].x + nx, P[i + 1].y + ny},
                         {P[i].x + nx, P[i].y + ny}});
    }
    for (size_t i = 1; i + 1 < P.size(); ++i) {
        Ring disk;
        for (int k = 0; k < kBufferArcSegments; ++k) {
            double a = 2.0 * M_PI * k / kBufferArcSegments;
            disk.push_back({P[i].x + r * std::cos(a), P[i].y + r * std::sin(a)});
        }
        parts.push_back(std::move(disk));
    }
    return region_union(parts);
}

// ---------------------------------------------------------------- distances

double point_segment_distance(const Point& p, const Point& a, const Point& b) {
    double dx = b.x - a.x, dy = b.y - a.y;
    double L2 = dx * dx + dy * dy;
    if (L2 == 0.0) return std::hypot(p.x - a.x, p.y - a.y);
    double t = std::clamp(((p.x - a.x) * dx + (p.y - a.y) * dy) / L2, 0.0, 1.0);
    return std::hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy));
}

double point_polyline_distance(const Point& p, const std::vector<Point>& line) {
    if (line.size() == 1) return std::hypot(p.x - line[0].x, p.y - line[0].y);
    double d = INFINITY;
    for (size_t i = 0; i + 1 < line.size(); ++i) d = std::min(d, point_segment_distance(p, line[i], line[i + 1]));
    return d;
}

namespace {

// roots of a t^2 + b t + c = 0 pushed into out
void quad_roots(double a, double b, double c, std::vector<double>& out) {
    const double eps = 1e-300;
    if (std::abs(a) < eps) {
        if (std::abs(b) > eps) out.push_back(-c / b);
        return;
    }
    double disc = b * b - 4 * a * c;
    if (disc < 0) {
        if (disc > -1e-12 * b * b) disc = 0;
        else return;
    }
    double sq = std::sqrt(disc);
    double q = -0.5 * (b + (b >= 0 ? sq : -sq));
    if (q != 0) {
        out.push_back(q / a);
        out.push_back(c / q);
    } else {
        out.push_back(-b / (2 * a));
    }
}

}  // namespace

double directed_hausdorff(const std::vector<Point>& A, const std::vector<Point>& B) {
    if (A.empty() || B.empty()) throw std::invalid_argument("hausdorff of empty sequence");
    double best = 0.0;
    for (const auto& p : A) best = std::max(best, point_polyline_distance(p, B));
    if (A.size() == 1) return best;

    // features of B: vertices (quadratic distance) and edge lines (linear signed distance)
    struct Line { double nx, ny, c; Point a, b; };
    std::vector<Line> lines;
    for (size_t i = 0; i + 1 < B.size(); ++i) {
        double dx = B[i + 1].x - B[i].x, dy = B[i + 1].y - B[i].y, L = std::hypot(dx, dy);
        if (L == 0) continue;
        Line l{-dy / L, dx / L, 0, B[i], B[i + 1]};
        l.c = l.nx * B[i].x + l.ny * B[i].y;
        lines.push_back(l);
    }
    for (size_t e = 0; e + 1 < A.size(); ++e) {
        const Point p = A[e], q = A[e + 1];
        const double dx = q.x - p.x, dy = q.y - p.y;
        std::vector<double> ts;
        // vertex v: |p + t d - v|^2 = t^2 |d|^2 + 2 t d.(p-v) + |p-v|^2
        auto vq = [&](const Point& v, double& a, double& b, double& c) {
            double wx = p.x - v.x, wy = p.y - v.y;
            a = dx * dx + dy * dy;
            b = 2 * (dx * wx + dy * wy);
            c = wx * wx + wy * wy;
        };
        // line: s(t) = n.(p + t d) - c = s0 + s1 t
        auto ls = [&](const Line& l, double& s0, double& s1) {
            s0 = l.nx * p.x + l.ny * p.y - l.c;
            s1 = l.nx * dx + l.ny * dy;
        };
        for (size_t i = 0; i < B.size(); ++i) {
            double a1, b1, c1;
            vq(B[i], a1, b1, c1);
            for (size_t j = i + 1; j < B.size(); ++j) {
                double a2, b2, c2;
                vq(B[j], a2, b2, c2);
                quad_roots(a1 - a2, b1 - b2, c1 - c2, ts);
            }
            for (const auto& l : lines) {
                double s0, s1;
                ls(l, s0, s1);
                quad_roots(a1 - s1 * s1, b1 - 2 * s0 * s1, c1 - s0 * s0, ts);
            }
        }
        for (size_t i = 0; i < lines.size(); ++i) {
            double s0, s1;
            ls(lines[i], s0, s1);
            // projection parameter boundaries along the edge line
            double ex = lines[i].b.x - lines[i].a.x, ey = lines[i].b.y - lines[i].a.y;
            double g1 = dx * ex + dy * ey;
            if (g1 != 0) {
                double g0a = (p.x - lines[i].a.x) * ex + (p.y - lines[i].a.y) * ey;
                double g0b = (p.x - lines[i].b.x) * ex + (p.y - lines[i].b.y) * ey;
                ts.push_back(-g0a / g1);
                ts.push_back(-g0b / g1);
            }
            for (size_t j = i + 1; j < lines.size(); ++j) {
                double r0, r1;
                ls(lines[j], r0, r1);
                if (s1 - r1 != 0) ts.push_back(-(s0 - r0) / (s1 - r1));
                if (s1 + r1 != 0) ts.push_back(-(s0 + r0) / (s1 + r1));
            }
        }
        for (double t : ts) {
            if (!(t > 0.0 && t < 1.0)) continue;
            Point x{p.x + t * dx, p.y + t * dy};
            best = std::max(best, point_polyline_distance(x, B));
        }
    }
    return best;
}

double hausdorff_distance(const std::vector<Point>& a, const std::vector<Point>& b) {
    if (a == b) return 0.0;
    return std::max(directed_hausdorff(a, b), directed_hausdorff(b, a));
}

}  // namespace conflate
