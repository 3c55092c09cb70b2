#include <algorithm>
#include <cmath>
#include <set>

#include "conflate/geom.hpp"

namespace conflate {

using nlohmann::json;

namespace {

json pts_json(const std::vector<Point>& pts) {
    json a = json::array();
    for (const auto& p : pts) a.push_back({p.x, p.y});
    return a;
}

std::vector<Point> pts_from(const json& a) {
    std::vector<Point> out;
    for (const auto& p : a) out.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    return out;
}

constexpr double kEarthRadius = 6371008.8;

}  // namespace

json gdb_to_json(const Gdb& g) {
    json j;
    j["feature_names"] = g.feature_names;
    json ents = json::array();
    for (const auto& e : g.entities) ents.push_back({{"id", e.id}, {"ring", pts_json(e.ring)}});
    j["entities"] = ents;
    json segs = json::array();
    for (const auto& s : g.segments)
        segs.push_back({{"id", s.id}, {"way_id", s.way_id}, {"points", pts_json(s.points)}});
    j["segments"] = segs;
    json f = json::object();
    for (const auto& [id, v] : g.features) f[id] = v;
    j["features"] = f;
    return j;
}

Gdb gdb_from_json(const json& j) {
    Gdb g;
    g.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    for (const auto& e : j.at("entities")) g.entities.push_back(make_polygon(e.at("id"), pts_from(e.at("ring"))));
    for (const auto& s : j.at("segments"))
        g.segments.push_back({s.at("id"), pts_from(s.at("points")), s.at("way_id")});
    for (const auto& [id, v] : j.at("features").items()) g.features[id] = v.get<std::vector<double>>();
    validate(g);
    return g;
}

json gdb_to_geojson(const Gdb& g) {
    json fc{{"type", "FeatureCollection"}, {"features", json::array()}};
    auto props = [&](const Id& id) {
        json p{{"id", id}};
        auto it = g.features.find(id);
        if (it != g.features.end())
            for (size_t k = 0; k < g.feature_names.size(); ++k) p[g.feature_names[k]] = it->second[k];
        return p;
    };
    for (const auto& e : g.entities) {
        fc["features"].push_back({{"type", "Feature"},
                                  {"properties", props(e.id)},
                                  {"geometry", {{"type", "Polygon"}, {"coordinates", json::array({pts_json(e.ring)})}}}});
    }
    for (const auto& s : g.segments) {
        json p = props(s.id);
        p["way_id"] = s.way_id;
        fc["features"].push_back({{"type", "Feature"},
                                  {"properties", p},
                                  {"geometry", {{"type", "LineString"}, {"coordinates", pts_json(s.points)}}}});
    }
    return fc;
}

Gdb ingest_geojson(const json& fc, const IngestOptions& opt, json* manifest) {
    opt.geo.validate();
    if (fc.value("type", "") != "FeatureCollection") throw std::invalid_argument("expected a GeoJSON FeatureCollection");
    const double lat0 = opt.ref_lat * M_PI / 180.0;
    auto project = [&](const json& c) {
        Point p{c.at(0).get<double>(), c.at(1).get<double>()};
        if (opt.project_lonlat) {
            p = {kEarthRadius * p.x * M_PI / 180.0 * std::cos(lat0), kEarthRadius * p.y * M_PI / 180.0};
        }
        return p;
    };

    struct Raw { Id id; json props; bool poly; std::vector<Point> pts; };
    std::vector<Raw> raws;
    size_t skipped = 0, n = 0;
    std::set<Id> used;
    for (const auto& f : fc.at("features")) {
        ++n;
        const json& geo = f.at("geometry");
        std::string type = geo.value("type", "");
        json props = f.contains("properties") && f["properties"].is_object() ? f["properties"] : json::object();
        Id id;
        if (props.contains("id")) id = props["id"].is_string() ? props["id"].get<std::string>() : props["id"].dump();
        else if (f.contains("id")) id = f["id"].is_string() ? f["id"].get<std::string>() : f["id"].dump();
        else id = (type == "Polygon" ? "p" : "w") + std::to_string(n - 1);
        if (!used.insert(id).second) throw std::invalid_argument("duplicate feature id " + id);
        props.erase("id");
        props.erase("way_id");
        if (type == "LineString") {
            std::vector<Point> pts;
            for (const auto& c : geo.at("coordinates")) pts.push_back(project(c));
            raws.push_back({id, props, false, pts});
        } else if (type == "Polygon") {
            std::vector<Point> pts;
            for (const auto& c : geo.at("coordinates").at(0)) pts.push_back(project(c));
            raws.push_back({id, props, true, pts});
        } else {
            ++skipped;
        }
    }

    // feature columns: numeric keys pass through, string keys one-hot over a sorted vocabulary
    std::set<std::string> numeric;
    std::map<std::string, std::set<std::string>> vocab;
    for (const auto& r : raws) {
        for (const auto& [k, v] : r.props.items()) {
            if (v.is_number() || v.is_boolean()) numeric.insert(k);
            else if (v.is_string()) vocab[k].insert(v.get<std::string>());
        }
    }
    for (const auto& [k, _] : vocab)
        if (numeric.count(k)) throw std::invalid_argument("property " + k + " mixes numeric and string values");
    Gdb g;
    std::map<std::string, size_t> col;
    for (const auto& k : numeric) { col[k] = g.feature_names.size(); g.feature_names.push_back(k); }
    for (const auto& [k, vs] : vocab)
        for (const auto& v : vs) { col[k + "=" + v] = g.feature_names.size(); g.feature_names.push_back(k + "=" + v); }
    auto featurize = [&](const json& props) {
        std::vector<double> v(g.feature_names.size(), 0.0);
        for (const auto& [k, x] : props.items()) {
            if (x.is_number()) v[col.at(k)] = x.get<double>();
            else if (x.is_boolean()) v[col.at(k)] = x.get<bool>() ? 1.0 : 0.0;
            else if (x.is_string()) v[col.at(k + "=" + x.get<std::string>())] = 1.0;
        }
        return v;
    };

    std::vector<Way> ways;
    std::map<Id, std::vector<double>> way_feat;
    for (const auto& r : raws) {
        if (r.poly) {
            g.entities.push_back(make_polygon(r.id, r.pts));
            g.features[r.id] = featurize(r.props);
        } else {
            ways.push_back({r.id, r.pts});
            way_feat[r.id] = featurize(r.props);
        }
    }
    g.segments = split_ways_into_segments(ways, opt.geo);
    for (const auto& s : g.segments) {
        if (!used.insert(s.id).second) throw std::invalid_argument("segment id collides: " + s.id);
        g.features[s.id] = way_feat.at(s.way_id);
    }
    validate(g);

    if (manifest) {
        json m;
        m["projection"] = opt.project_lonlat ? json{{"type", "equirectangular"}, {"ref_lat", opt.ref_lat}} : json{{"type", "none"}};
        json voc = json::object();
        for (const auto& [k, vs] : vocab) voc[k] = std::vector<std::string>(vs.begin(), vs.end());
        m["vocabularies"] = voc;
        m["numeric_properties"] = std::vector<std::string>(numeric.begin(), numeric.end());
        m["feature_names"] = g.feature_names;
        m["counts"] = {{"features_read", n}, {"skipped_geometries", skipped}, {"ways", ways.size()},
                       {"polygons", g.entities.size()}, {"segments", g.segments.size()}};
        *manifest = m;
    }
    return g;
}

}  // namespace conflate
