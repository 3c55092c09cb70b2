#include "conflate/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include "conflate/index.hpp"
#include "conflate/kgraph.hpp"

namespace conflate {

MatchReport match_report(const MatchSet& predicted, const PairSet& truth) {
    if (truth.empty()) throw std::invalid_argument("match_report needs a non-empty ground truth");
    std::set<std::pair<Id, Id>> t(truth.begin(), truth.end()), p;
    for (const auto& m : predicted.pairs) p.insert({m.source, m.target});
    MatchReport r;
    for (const auto& x : p) (t.count(x) ? r.n_correct : r.n_incorrect)++;
    for (const auto& x : t) r.n_missing += !p.count(x);
    double all = static_cast<double>(r.n_correct + r.n_incorrect + r.n_missing);
    r.correct = r.n_correct / all;
    r.incorrect = r.n_incorrect / all;
    r.missing = r.n_missing / all;
    auto ratio = [](size_t a, size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); };
    r.precision = ratio(r.n_correct, r.n_correct + r.n_incorrect);
    r.recall = ratio(r.n_correct, r.n_correct + r.n_missing);
    r.f1 = (r.precision + r.recall) > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
    return r;
}

MatchSet restrict_sources(const MatchSet& m, const std::vector<Id>& sources) {
    std::set<Id> keep(sources.begin(), sources.end());
    MatchSet out = m;
    out.pairs.clear();
    for (const auto& p : m.pairs)
        if (keep.count(p.source)) out.pairs.push_back(p);
    return out;
}

double cni(const Gdb& g) {
    std::vector<std::pair<Id, Mbr>> boxes;
    std::vector<Region> regions;
    for (size_t i = 0; i < g.entities.size(); ++i) {
        boxes.push_back({std::to_string(i), mbr(g.entities[i])});
        regions.push_back(region_from_polygon(g.entities[i]));
    }
    SpatialIndex idx(boxes);
    double total = 0;
    for (size_t i = 0; i < g.entities.size(); ++i) {
        std::vector<size_t> hits;
        for (const auto& id : idx.query(boxes[i].second)) hits.push_back(std::stoul(id));
        std::sort(hits.begin(), hits.end());
        for (size_t j : hits) {
            if (j <= i) continue;
            double inter = intersection_area(regions[i], regions[j]);
            // touching edges leave round-off slivers
            if (inter <= 1e-9 * std::min(regions[i].area(), regions[j].area())) continue;
            total += inter / (regions[i].area() + regions[j].area() - inter);
        }
    }
    return total;
}

namespace {

double cross3(const Point& a, const Point& b, const Point& c) {
    return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

// part of segment pq strictly inside the convex CCW piece has positive length
bool enters(const Ring& piece, const Point& p, const Point& q) {
    double lo = 0, hi = 1;
    const double len = std::hypot(q.x - p.x, q.y - p.y);
    for (size_t i = 0, n = piece.size(); i < n; ++i) {
        const Point& a = piece[i];
        const Point& b = piece[(i + 1) % n];
        double eps = 1e-12 * (1 + std::hypot(b.x - a.x, b.y - a.y));
        double f0 = cross3(a, b, p) - eps, f1 = cross3(a, b, q) - eps;
        if (f0 <= 0 && f1 <= 0) return false;
        if (f0 < 0) lo = std::max(lo, f0 / (f0 - f1));
        else if (f1 < 0) hi = std::min(hi, f0 / (f0 - f1));
        if (lo >= hi) return false;
    }
    return (hi - lo) * len > 1e-12 || (len == 0 && lo <= hi);
}

}  // namespace

size_t segment_polygon_overlaps(const Gdb& g) {
    std::vector<std::pair<Id, Mbr>> boxes;
    for (size_t i = 0; i < g.entities.size(); ++i) boxes.push_back({std::to_string(i), mbr(g.entities[i])});
    SpatialIndex idx(boxes);
    size_t count = 0;
    for (const auto& s : g.segments) {
        for (const auto& id : idx.query(mbr(s))) {
            Region r = region_from_polygon(g.entities[std::stoul(id)]);
            bool hit = false;
            for (size_t k = 0; k + 1 < s.points.size() && !hit; ++k)
                for (const auto& piece : r.pieces)
                    if (enters(piece, s.points[k], s.points[k + 1])) {
                        hit = true;
                        break;
                    }
            count += hit;
        }
    }
    return count;
}

CniReport cni_report(const Gdb& source, const Gdb& merged) {
    CniReport r;
    r.source = cni(source);
    r.total = cni(merged);
    r.new_cni = r.total - r.source;
    r.new_percent = r.total > 0 ? 100.0 * r.new_cni / r.total : 0.0;
    r.segment_polygon_overlaps = segment_polygon_overlaps(merged);
    return r;
}

std::vector<double> displacement_within(const Gdb& merged, const Gdb& original_targets,
                                        const std::map<Id, Id>& origin, const std::vector<double>& etas) {
    std::vector<double> dists;
    for (const auto& s : merged.segments) {
        auto it = origin.find(s.id);
        if (it == origin.end()) continue;
        const Segment* o = original_targets.find_segment(it->second);
        if (!o) throw std::invalid_argument("displacement: no original segment " + it->second);
        dists.push_back(hausdorff_distance(s.points, o->points));
    }
    std::vector<double> out;
    for (double eta : etas) {
        if (dists.empty()) {
            out.push_back(1.0);
            continue;
        }
        size_t k = std::count_if(dists.begin(), dists.end(), [&](double d) { return d <= eta; });
        out.push_back(static_cast<double>(k) / static_cast<double>(dists.size()));
    }
    return out;
}

DatasetStats dataset_stats(const Gdb& g) {
    DatasetStats st;
    st.buildings = g.entities.size();
    st.segments = g.segments.size();
    std::set<Id> ways;
    std::set<Point> terminals, inner;
    for (const auto& s : g.segments) {
        ways.insert(s.way_id);
        if (s.points.empty()) continue;
        terminals.insert(s.points.front());
        terminals.insert(s.points.back());
        for (size_t k = 1; k + 1 < s.points.size(); ++k) inner.insert(s.points[k]);
    }
    for (const auto& p : terminals) inner.erase(p);
    st.ways = ways.size();
    st.terminal_nodes = terminals.size();
    st.intermediate_nodes = inner.size();
    return st;
}

double mean_neighbors(const Gdb& g, const GeoConfig& geo, SweepAxis axis, double width) {
    GeoConfig cfg = geo;
    if (axis == SweepAxis::Grid) cfg.mu = width;
    else cfg.lambda_buf = width;
    KnowledgeGraph kg = build_knowledge_graph(g, cfg);
    size_t edges = 0;
    for (const auto& t : kg.triples) {
        bool grid = t.rel != RelationType::Inside && t.rel != RelationType::Connected;
        if (axis == SweepAxis::Grid ? grid : t.rel == RelationType::Inside) ++edges;
    }
    size_t heads = axis == SweepAxis::Grid ? g.entities.size() : g.segments.size();
    return heads == 0 ? 0.0 : static_cast<double>(edges) / static_cast<double>(heads);
}

std::vector<SweepRow> width_sweep(const Gdb& g, const std::vector<double>& widths, const GeoConfig& base,
                                  SweepAxis axis, const std::function<double(const GeoConfig&)>& f1_at) {
    std::vector<SweepRow> rows;
    for (double w : widths) {
        GeoConfig cfg = base;
        if (axis == SweepAxis::Grid) cfg.mu = w;
        else cfg.lambda_buf = w;
        rows.push_back({w, mean_neighbors(g, base, axis, w), f1_at ? f1_at(cfg) : 0.0});
    }
    return rows;
}

namespace {

std::string num(double v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

}  // namespace

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::string s = "width,mean_neighbors,f1\n";
    for (const auto& r : rows) s += num(r.width) + "," + num(r.mean_neighbors) + "," + num(r.f1) + "\n";
    return s;
}

nlohmann::json to_json(const MatchReport& r) {
    return {{"n_correct", r.n_correct}, {"n_incorrect", r.n_incorrect}, {"n_missing", r.n_missing},
            {"correct", r.correct},     {"incorrect", r.incorrect},     {"missing", r.missing},
            {"precision", r.precision}, {"recall", r.recall},           {"f1", r.f1}};
}

nlohmann::json to_json(const CniReport& r) {
    return {{"source_cni", r.source},
            {"total_cni", r.total},
            {"new_cni", r.new_cni},
            {"new_cni_percent", r.new_percent},
            {"segment_polygon_overlaps", r.segment_polygon_overlaps}};
}

nlohmann::json to_json(const DatasetStats& s) {
    return {{"ways", s.ways},
            {"terminal_nodes", s.terminal_nodes},
            {"intermediate_nodes", s.intermediate_nodes},
            {"segments", s.segments},
            {"buildings", s.buildings}};
}

std::string match_report_csv(const MatchReport& r) {
    return "correct,incorrect,missing,precision,recall,f1\n" + num(r.correct) + "," + num(r.incorrect) + "," +
           num(r.missing) + "," + num(r.precision) + "," + num(r.recall) + "," + num(r.f1) + "\n";
}

std::string cni_report_csv(const CniReport& r) {
    return "source_cni,total_cni,new_cni,new_cni_percent,segment_polygon_overlaps\n" + num(r.source) + "," +
           num(r.total) + "," + num(r.new_cni) + "," + num(r.new_percent) + "," +
           std::to_string(r.segment_polygon_overlaps) + "\n";
}

}  // namespace conflate
