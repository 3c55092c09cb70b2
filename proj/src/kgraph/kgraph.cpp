#include "conflate/kgraph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

#include "conflate/index.hpp"

namespace conflate {

using nlohmann::json;

namespace {

constexpr const char* kNames[kNumRelations] = {"Bottom", "BottomRight", "Right",      "TopRight",
                                               "Top",    "TopLeft",     "Left",       "BottomLeft",
                                               "Close",  "Inside",      "Connected"};

// which third of the grid a coordinate offset falls in: -1, 0, 1, or nothing
std::optional<int> band(double d, double mu) {
    double s = mu / 6.0, h = mu / 2.0;
    if (s < d && d < h) return 1;
    if (-s < d && d < s) return 0;
    if (-h < d && d < -s) return -1;
    return std::nullopt;
}

}  // namespace

const char* relation_name(RelationType r) { return kNames[code(r)]; }

RelationType relation_from_name(const std::string& s) {
    for (int i = 0; i < kNumRelations; ++i)
        if (s == kNames[i]) return static_cast<RelationType>(i);
    throw std::invalid_argument("unknown relation " + s);
}

size_t KnowledgeGraph::index_of(const Id& id) const {
    auto it = row.find(id);
    if (it == row.end()) throw std::invalid_argument("unknown entity id " + id);
    return it->second;
}

std::vector<std::vector<size_t>> KnowledgeGraph::undirected_adjacency() const {
    std::vector<std::set<size_t>> s(size());
    for (const auto& t : triples) {
        size_t a = row.at(t.head), b = row.at(t.tail);
        s[a].insert(b);
        s[b].insert(a);
    }
    std::vector<std::vector<size_t>> out(size());
    for (size_t i = 0; i < size(); ++i) out[i].assign(s[i].begin(), s[i].end());
    return out;
}

std::optional<RelationType> classify_grid_relation(const Point& e, const Point& u, double mu) {
    if (!(mu > 0.0)) throw std::invalid_argument("mu must be positive");
    auto bx = band(u.x - e.x, mu);
    if (!bx) return std::nullopt;
    auto by = band(u.y - e.y, mu);
    if (!by) return std::nullopt;
    using R = RelationType;
    static const R table[3][3] = {
        // by = -1, 0, 1
        {R::BottomLeft, R::Left, R::TopLeft},     // bx = -1
        {R::Bottom, R::Close, R::Top},            // bx = 0
        {R::BottomRight, R::Right, R::TopRight},  // bx = 1
    };
    return table[*bx + 1][*by + 1];
}

Point segment_center(const Segment& s) { return polyline_midpoint(s.points); }

void finalize_triples(KnowledgeGraph& kg, std::vector<Triple> triples) {
    std::sort(triples.begin(), triples.end());
    triples.erase(std::unique(triples.begin(), triples.end()), triples.end());
    for (auto& b : kg.buckets) b.clear();
    for (size_t i = 0; i < triples.size(); ++i) {
        const auto& t = triples[i];
        if (t.head == t.tail) throw std::invalid_argument("self-loop triple on " + t.head);
        kg.index_of(t.head);
        kg.index_of(t.tail);
        kg.buckets[code(t.rel)].push_back(i);
    }
    kg.triples = std::move(triples);
}

KnowledgeGraph build_knowledge_graph(const Gdb& g, const GeoConfig& cfg) {
    cfg.validate();
    validate(g);
    KnowledgeGraph kg;
    kg.feature_names = g.feature_names;
    std::vector<std::pair<Id, Mbr>> center_items, poly_center_items, endpoint_items;
    for (const auto& e : g.entities) {
        kg.row[e.id] = kg.entities.size();
        kg.entities.push_back(e.id);
        kg.kinds.push_back(EntityKind::Polygon);
        kg.centers.push_back(e.center);
        Mbr c{e.center.x, e.center.x, e.center.y, e.center.y};
        center_items.push_back({e.id, c});
        poly_center_items.push_back({e.id, c});
    }
    for (const auto& s : g.segments) {
        Point c = segment_center(s);
        kg.row[s.id] = kg.entities.size();
        kg.entities.push_back(s.id);
        kg.kinds.push_back(EntityKind::Segment);
        kg.centers.push_back(c);
        center_items.push_back({s.id, {c.x, c.x, c.y, c.y}});
        const Point &a = s.points.front(), &b = s.points.back();
        endpoint_items.push_back({s.id + "#0", {a.x, a.x, a.y, a.y}});
        endpoint_items.push_back({s.id + "#1", {b.x, b.x, b.y, b.y}});
    }
    for (const auto& id : kg.entities) kg.features.push_back(g.features.at(id));

    SpatialIndex centers(std::move(center_items));
    SpatialIndex poly_centers(std::move(poly_center_items));
    SpatialIndex endpoints(std::move(endpoint_items));

    std::vector<Triple> out;
    const double h = cfg.mu / 2.0;
    for (const auto& e : g.entities) {
        Mbr grid{e.center.x - h, e.center.x + h, e.center.y - h, e.center.y + h};
        for (const auto& uid : centers.query(grid)) {
            if (uid == e.id) continue;
            auto r = classify_grid_relation(e.center, kg.centers[kg.row.at(uid)], cfg.mu);
            if (r) out.push_back({e.id, *r, uid});
        }
    }
    std::map<Id, const Segment*> seg_by_id;
    for (const auto& s : g.segments) seg_by_id[s.id] = &s;
    for (const auto& s : g.segments) {
        Region buf = buffer_segment(s, cfg.lambda_buf);
        for (const auto& uid : poly_centers.query(buf.bounds())) {
            if (buf.contains(kg.centers[kg.row.at(uid)])) out.push_back({s.id, RelationType::Inside, uid});
        }
        std::set<Id> near;
        for (const Point* p : {&s.points.front(), &s.points.back()}) {
            for (const auto& key : endpoints.query(Mbr{p->x, p->x, p->y, p->y}.inflated(cfg.delta))) {
                Id sid = key.substr(0, key.size() - 2);
                if (sid != s.id) near.insert(sid);
            }
        }
        for (const auto& sid : near) {
            const Segment& o = *seg_by_id.at(sid);
            bool hit = false;
            for (const Point* p : {&s.points.front(), &s.points.back()})
                for (const Point* q : {&o.points.front(), &o.points.back()})
                    if (std::hypot(p->x - q->x, p->y - q->y) <= cfg.delta) hit = true;
            if (hit) out.push_back({s.id, RelationType::Connected, sid});
        }
    }
    finalize_triples(kg, std::move(out));
    return kg;
}

std::vector<std::vector<size_t>> k_hop_table(const KnowledgeGraph& kg, int k) {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    auto adj = kg.undirected_adjacency();
    std::vector<std::vector<size_t>> out(kg.size());
    std::vector<int> dist(kg.size());
    for (size_t s = 0; s < kg.size(); ++s) {
        std::fill(dist.begin(), dist.end(), -1);
        std::deque<size_t> q{s};
        dist[s] = 0;
        while (!q.empty()) {
            size_t v = q.front();
            q.pop_front();
            if (dist[v] == k) continue;
            for (size_t w : adj[v]) {
                if (dist[w] >= 0) continue;
                dist[w] = dist[v] + 1;
                q.push_back(w);
            }
        }
        for (size_t v = 0; v < kg.size(); ++v)
            if (dist[v] == k) out[s].push_back(v);
    }
    return out;
}

std::set<Id> k_hop_neighbors(const KnowledgeGraph& kg, const Id& e, int k) {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    size_t s = kg.index_of(e);
    auto adj = kg.undirected_adjacency();
    std::map<size_t, int> dist{{s, 0}};
    std::deque<size_t> q{s};
    std::set<Id> out;
    while (!q.empty()) {
        size_t v = q.front();
        q.pop_front();
        int dv = dist[v];
        if (dv == k) {
            out.insert(kg.entities[v]);
            continue;
        }
        for (size_t w : adj[v])
            if (dist.emplace(w, dv + 1).second) q.push_back(w);
    }
    return out;
}

std::string kg_to_tsv(const KnowledgeGraph& kg) {
    std::ostringstream os;
    for (const auto& t : kg.triples) os << t.head << '\t' << relation_name(t.rel) << '\t' << t.tail << '\n';
    return os.str();
}

json kg_sidecar(const KnowledgeGraph& kg) {
    json j;
    j["feature_names"] = kg.feature_names;
    json ents = json::array();
    for (size_t i = 0; i < kg.size(); ++i) {
        ents.push_back({{"id", kg.entities[i]},
                        {"row", i},
                        {"kind", kg.kinds[i] == EntityKind::Polygon ? "polygon" : "segment"},
                        {"center", {kg.centers[i].x, kg.centers[i].y}},
                        {"features", kg.features[i]}});
    }
    j["entities"] = ents;
    json codes = json::object();
    for (int i = 0; i < kNumRelations; ++i) codes[kNames[i]] = i;
    j["relation_codes"] = codes;
    return j;
}

KnowledgeGraph kg_from_files(const std::string& tsv, const json& side) {
    KnowledgeGraph kg;
    kg.feature_names = side.at("feature_names").get<std::vector<std::string>>();
    for (const auto& e : side.at("entities")) {
        size_t r = e.at("row").get<size_t>();
        if (r != kg.entities.size()) throw std::invalid_argument("sidecar rows out of order");
        Id id = e.at("id");
        kg.row[id] = r;
        kg.entities.push_back(id);
        kg.kinds.push_back(e.at("kind") == "polygon" ? EntityKind::Polygon : EntityKind::Segment);
        kg.centers.push_back({e.at("center").at(0).get<double>(), e.at("center").at(1).get<double>()});
        kg.features.push_back(e.at("features").get<std::vector<double>>());
    }
    std::vector<Triple> ts;
    std::istringstream is(tsv);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto a = line.find('\t'), b = line.find('\t', a + 1);
        if (a == std::string::npos || b == std::string::npos) throw std::invalid_argument("bad triple line: " + line);
        ts.push_back({line.substr(0, a), relation_from_name(line.substr(a + 1, b - a - 1)), line.substr(b + 1)});
    }
    finalize_triples(kg, std::move(ts));
    return kg;
}

}  // namespace conflate
