#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace conflate {

using Id = std::string;

struct Point {
    double x = 0.0;
    double y = 0.0;
};

inline bool operator==(const Point& a, const Point& b) { return a.x == b.x && a.y == b.y; }
inline bool operator!=(const Point& a, const Point& b) { return !(a == b); }
inline bool operator<(const Point& a, const Point& b) { return a.x < b.x || (a.x == b.x && a.y < b.y); }

using Ring = std::vector<Point>;  // open ring, no repeated closing vertex

struct Segment {
    Id id;
    std::vector<Point> points;  // first and last are terminal
    Id way_id;
};

// ring is stored closed: ring.front() == ring.back()
struct PolyEntity {
    Id id;
    std::vector<Point> ring;
    Point center;
};

struct Mbr {
    double x_min = 0.0, x_max = 0.0, y_min = 0.0, y_max = 0.0;

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    double area() const { return width() * height(); }
    bool contains(const Point& p) const {
        return p.x >= x_min && p.x <= x_max && p.y >= y_min && p.y <= y_max;
    }
    bool intersects(const Mbr& o) const {
        return x_min <= o.x_max && o.x_min <= x_max && y_min <= o.y_max && o.y_min <= y_max;
    }
    Mbr inflated(double d) const { return {x_min - d, x_max + d, y_min - d, y_max + d}; }
};

inline bool operator==(const Mbr& a, const Mbr& b) {
    return a.x_min == b.x_min && a.x_max == b.x_max && a.y_min == b.y_min && a.y_max == b.y_max;
}

struct Gdb {
    std::vector<PolyEntity> entities;
    std::vector<Segment> segments;
    std::map<Id, std::vector<double>> features;
    std::vector<std::string> feature_names;

    const PolyEntity* find_entity(const Id& id) const;
    const Segment* find_segment(const Id& id) const;
    size_t feature_dim() const { return feature_names.size(); }
};

// Throws std::invalid_argument on duplicate ids, missing or ragged features, bad geometry.
void validate(const Gdb& g);

struct GeoConfig {
    double theta = 45.0;      // degrees
    double delta = 1.0;       // circular error
    double lambda_buf = 20.0; // buffer width
    double mu = 100.0;        // grid width
    std::vector<double> eta = {5.0, 10.0};

    void validate() const;
};

struct Way {
    Id id;
    std::vector<Point> points;
};

class GeometryError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Cuts ways at terminal points. Way endpoints always end a segment.
std::vector<Segment> split_ways_into_segments(const std::vector<Way>& ways, const GeoConfig& cfg);
std::vector<Segment> split_ways_into_segments(const std::vector<std::vector<Point>>& ways,
                                              const GeoConfig& cfg);

// Terminal flags for every distinct point that appears in the ways.
std::map<Point, bool> terminal_points(const std::vector<Way>& ways, const GeoConfig& cfg);

PolyEntity make_polygon(Id id, std::vector<Point> pts);

Mbr mbr(const std::vector<Point>& pts);
Mbr mbr(const PolyEntity& p);
Mbr mbr(const Segment& s);

double signed_area(const Ring& r);
Point ring_centroid(const Ring& r);
Point polyline_midpoint(const std::vector<Point>& pts);
double polyline_length(const std::vector<Point>& pts);
bool ring_is_simple(const Ring& r);

// Open-ring view of a closed PolyEntity ring.
Ring open_ring(const PolyEntity& p);

// A planar area as a set of interior-disjoint convex CCW pieces.
struct Region {
    std::vector<Ring> pieces;

    double area() const;
    bool contains(const Point& p) const;
    Mbr bounds() const;
};

Region region_from_ring(const Ring& r);
Region region_from_polygon(const PolyEntity& p);
Region region_union(const std::vector<Ring>& convex_parts);

double intersection_area(const Region& a, const Region& b);
double jaccard_area(const Region& a, const Region& b);
double jaccard_area(const PolyEntity& a, const PolyEntity& b);

// Convex clip of two CCW convex rings.
Ring clip_convex(const Ring& subject, const Ring& clip);
std::vector<Ring> triangulate(const Ring& r);

constexpr int kBufferArcSegments = 32;

// Corridor of half-width lambda_buf/2 around the polyline with flat end caps and round joins.
Region buffer_segment(const Segment& s, double lambda_buf);

double point_segment_distance(const Point& p, const Point& a, const Point& b);
double point_polyline_distance(const Point& p, const std::vector<Point>& line);
double directed_hausdorff(const std::vector<Point>& a, const std::vector<Point>& b);
double hausdorff_distance(const std::vector<Point>& a, const std::vector<Point>& b);

// GeoJSON ingestion
struct IngestOptions {
    bool project_lonlat = false;  // equirectangular lon/lat to meters
    double ref_lat = 0.0;         // projection reference latitude, degrees
    GeoConfig geo;
};

Gdb ingest_geojson(const nlohmann::json& fc, const IngestOptions& opt, nlohmann::json* manifest);

nlohmann::json gdb_to_json(const Gdb& g);
Gdb gdb_from_json(const nlohmann::json& j);
nlohmann::json gdb_to_geojson(const Gdb& g);

}  // namespace conflate
