#include "conflate/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <stdexcept>

namespace conflate {

using nlohmann::json;

namespace {

enum Col { kLanes = 0, kLevels = 1, kType = 2 };

void check(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

bool rate_ok(double r) { return r >= 0 && r <= 1; }

PolyEntity box_polygon(const Id& id, const Mbr& b, int corner, double cut_w, double cut_h) {
    const double x0 = b.x_min, x1 = b.x_max, y0 = b.y_min, y1 = b.y_max;
    if (corner < 0) return make_polygon(id, {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}});
    const double xa = x1 - cut_w, ya = y1 - cut_h, xb = x0 + cut_w, yb = y0 + cut_h;
    switch (corner) {
        case 0:  // top right removed
            return make_polygon(id, {{x0, y0}, {x1, y0}, {x1, ya}, {xa, ya}, {xa, y1}, {x0, y1}});
        case 1:  // top left
            return make_polygon(id, {{x0, y0}, {x1, y0}, {x1, y1}, {xb, y1}, {xb, ya}, {x0, ya}});
        case 2:  // bottom left
            return make_polygon(id, {{xb, y0}, {x1, y0}, {x1, y1}, {x0, y1}, {x0, yb}, {xb, yb}});
        default:  // bottom right
            return make_polygon(id, {{x0, y0}, {xa, y0}, {xa, yb}, {x1, yb}, {x1, y1}, {x0, y1}});
    }
}

std::vector<double> building_features(std::mt19937_64& rng) {
    std::vector<double> f(5, 0.0);
    f[kLevels] = std::uniform_int_distribution<int>(1, 6)(rng);
    f[kType + std::uniform_int_distribution<int>(0, 2)(rng)] = 1;
    return f;
}

bool separated(const Mbr& a, const Mbr& b, double gap) { return !a.inflated(gap).intersects(b); }

PolyEntity translated(const PolyEntity& e, const Id& id, double dx, double dy) {
    PolyEntity out;
    out.id = id;
    for (const auto& p : e.ring) out.ring.push_back({p.x + dx, p.y + dy});
    out.center = {e.center.x + dx, e.center.y + dy};
    return out;
}

double gauss(std::mt19937_64& rng, double sigma) {
    if (sigma == 0) return 0;
    return std::normal_distribution<double>(0, sigma)(rng);
}

}  // namespace

void SceneSpec::validate() const {
    check(n_buildings >= 0 && n_ways >= 0, "scene counts must be non-negative");
    check(extent > 0, "scene extent must be positive");
    check(size_min > 0 && size_max >= size_min, "building sizes need 0 < size_min <= size_max");
    check(rate_ok(l_shape_share), "l_shape_share must lie in [0,1]");
    check(road_style == "regular" || road_style == "jittered", "road_style must be regular or jittered");
    check(road_clearance >= 0 && building_gap >= 0, "clearances must be non-negative");
}

void PerturbSpec::validate() const {
    check(jitter_sigma >= 0, "jitter_sigma must be non-negative");
    check(rate_ok(drop_rate_entities) && rate_ok(drop_rate_segments) && rate_ok(metadata_noise_rate),
          "perturbation rates must lie in [0,1]");
}

const std::vector<std::string>& scene_feature_names() {
    static const std::vector<std::string> names{"lanes", "levels", "type=commercial", "type=industrial",
                                                "type=residential"};
    return names;
}

Gdb generate_scene(const SceneSpec& spec, json* manifest) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0, 1);
    Gdb g;
    g.feature_names = scene_feature_names();

    const int nh = (spec.n_ways + 1) / 2, nv = spec.n_ways / 2;
    auto lines = [&](int n) {
        std::vector<double> at;
        const double gap = spec.extent / (n + 1);
        for (int i = 0; i < n; ++i) {
            double v = (i + 1) * gap;
            if (spec.road_style == "jittered") v += (unit(rng) - 0.5) * 0.4 * gap;
            at.push_back(v);
        }
        return at;
    };
    const std::vector<double> ys = lines(nh), xs = lines(nv);

    std::vector<Way> ways;
    for (int i = 0; i < nh; ++i) {
        Way w{"r" + std::to_string(i), {{0, ys[i]}}};
        for (double x : xs) w.points.push_back({x, ys[i]});
        w.points.push_back({spec.extent, ys[i]});
        ways.push_back(std::move(w));
    }
    for (int j = 0; j < nv; ++j) {
        Way w{"r" + std::to_string(nh + j), {{xs[j], 0}}};
        for (double y : ys) w.points.push_back({xs[j], y});
        w.points.push_back({xs[j], spec.extent});
        ways.push_back(std::move(w));
    }
    std::map<Id, double> lanes;
    for (const auto& w : ways) lanes[w.id] = std::uniform_int_distribution<int>(1, 4)(rng);

    std::vector<Mbr> placed;
    const long max_tries = 1000L * std::max(1, spec.n_buildings);
    long tries = 0;
    while (static_cast<int>(placed.size()) < spec.n_buildings) {
        if (++tries > max_tries)
            throw std::runtime_error("cannot pack " + std::to_string(spec.n_buildings) + " buildings into the scene");
        double w = spec.size_min + unit(rng) * (spec.size_max - spec.size_min);
        double h = spec.size_min + unit(rng) * (spec.size_max - spec.size_min);
        if (w >= spec.extent || h >= spec.extent) continue;
        double x = unit(rng) * (spec.extent - w), y = unit(rng) * (spec.extent - h);
        Mbr b{x, x + w, y, y + h};
        bool ok = true;
        for (double ry : ys) ok = ok && (b.y_max < ry - spec.road_clearance || b.y_min > ry + spec.road_clearance);
        for (double rx : xs) ok = ok && (b.x_max < rx - spec.road_clearance || b.x_min > rx + spec.road_clearance);
        for (size_t k = 0; k < placed.size() && ok; ++k) ok = separated(b, placed[k], spec.building_gap);
        if (!ok) continue;
        Id id = "b" + std::to_string(placed.size());
        int corner = unit(rng) < spec.l_shape_share ? std::uniform_int_distribution<int>(0, 3)(rng) : -1;
        double cw = (0.35 + 0.3 * unit(rng)) * w, ch = (0.35 + 0.3 * unit(rng)) * h;
        g.entities.push_back(box_polygon(id, b, corner, cw, ch));
        g.features[id] = building_features(rng);
        placed.push_back(b);
    }

    g.segments = split_ways_into_segments(ways, GeoConfig{});
    for (const auto& s : g.segments) {
        std::vector<double> f(5, 0.0);
        f[kLanes] = lanes.at(s.way_id);
        g.features[s.id] = f;
    }
    validate(g);

    if (manifest) {
        json m;
        m["spec"] = to_json(spec);
        m["gdb"] = gdb_to_json(g);
        json w = json::array();
        for (const auto& way : ways) {
            json pts = json::array();
            for (const auto& p : way.points) pts.push_back({p.x, p.y});
            w.push_back({{"id", way.id}, {"points", pts}});
        }
        m["ways"] = w;
        m["counts"] = {{"buildings", g.entities.size()}, {"ways", ways.size()}, {"segments", g.segments.size()}};
        *manifest = m;
    }
    return g;
}

Perturbed perturb(const Gdb& g, const PerturbSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0, 1);
    const bool typed = g.feature_names == scene_feature_names();

    auto noisy = [&](std::vector<double> f, bool building) {
        if (!typed || unit(rng) >= spec.metadata_noise_rate) return f;
        if (!building) {
            f[kLanes] = std::max(1.0, f[kLanes] + (unit(rng) < 0.5 ? -1 : 1));
        } else if (unit(rng) < 0.5) {
            f[kLevels] = std::max(1.0, f[kLevels] + (unit(rng) < 0.5 ? -1 : 1));
        } else {
            int cur = 0;
            for (int t = 0; t < 3; ++t)
                if (f[kType + t] > 0.5) cur = t;
            int next = (cur + 1 + std::uniform_int_distribution<int>(0, 1)(rng)) % 3;
            for (int t = 0; t < 3; ++t) f[kType + t] = t == next ? 1 : 0;
        }
        return f;
    };

    struct Kept { const PolyEntity* e; double dx, dy; std::vector<double> f; };
    std::vector<Kept> kept;
    for (const auto& e : g.entities) {
        bool drop = unit(rng) < spec.drop_rate_entities;
        double dx = gauss(rng, spec.jitter_sigma), dy = gauss(rng, spec.jitter_sigma);
        auto f = noisy(g.features.at(e.id), true);
        if (!drop) kept.push_back({&e, dx, dy, std::move(f)});
    }

    std::vector<Id> way_order;
    std::map<Id, std::pair<double, double>> way_shift;
    for (const auto& s : g.segments)
        if (!way_shift.count(s.way_id)) {
            way_order.push_back(s.way_id);
            double dx = gauss(rng, spec.jitter_sigma), dy = gauss(rng, spec.jitter_sigma);
            way_shift[s.way_id] = {dx, dy};
        }
    struct KeptSeg { const Segment* s; std::vector<double> f; };
    std::vector<KeptSeg> kept_seg;
    for (const auto& s : g.segments) {
        bool drop = unit(rng) < spec.drop_rate_segments;
        auto f = noisy(g.features.at(s.id), false);
        if (!drop) kept_seg.push_back({&s, std::move(f)});
    }

    std::shuffle(kept.begin(), kept.end(), rng);
    std::vector<Id> ways_shuffled = way_order;
    std::shuffle(ways_shuffled.begin(), ways_shuffled.end(), rng);
    std::map<Id, Id> way_name;
    for (size_t k = 0; k < ways_shuffled.size(); ++k) way_name[ways_shuffled[k]] = "tr" + std::to_string(k);

    Perturbed out;
    out.target.feature_names = g.feature_names;
    for (size_t k = 0; k < kept.size(); ++k) {
        Id id = "tb" + std::to_string(k);
        out.target.entities.push_back(translated(*kept[k].e, id, kept[k].dx, kept[k].dy));
        out.target.features[id] = kept[k].f;
        out.truth.push_back({kept[k].e->id, id});
    }
    std::stable_sort(kept_seg.begin(), kept_seg.end(), [&](const KeptSeg& a, const KeptSeg& b) {
        return way_name.at(a.s->way_id) < way_name.at(b.s->way_id);
    });
    for (const auto& [s, f] : kept_seg) {
        auto [dx, dy] = way_shift.at(s->way_id);
        const Id& way = way_name.at(s->way_id);
        auto slash = s->id.rfind('/');
        Id id = way + (slash == std::string::npos ? "/" + s->id : s->id.substr(slash));
        Segment t{id, {}, way};
        for (const auto& p : s->points) t.points.push_back({p.x + dx, p.y + dy});
        out.target.segments.push_back(std::move(t));
        out.target.features[id] = f;
        out.truth.push_back({s->id, id});
    }
    std::sort(out.truth.begin(), out.truth.end());
    validate(out.target);
    return out;
}

AlignmentSplit split_alignment(const std::vector<std::pair<Id, Id>>& truth, double train_fraction,
                               std::uint64_t seed) {
    check(rate_ok(train_fraction), "train fraction must lie in [0,1]");
    auto all = truth;
    std::sort(all.begin(), all.end());
    std::mt19937_64 rng(seed);
    std::shuffle(all.begin(), all.end(), rng);
    size_t n = static_cast<size_t>(std::llround(train_fraction * static_cast<double>(all.size())));
    AlignmentSplit s;
    s.train.assign(all.begin(), all.begin() + static_cast<long>(n));
    s.held_out.assign(all.begin() + static_cast<long>(n), all.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.held_out.begin(), s.held_out.end());
    return s;
}

std::vector<Id> add_overlapping_extras(const Gdb& source, Gdb& target, const ExtraSpec& spec, std::uint64_t seed) {
    check(spec.n >= 0 && spec.size_min > 0 && spec.size_max >= spec.size_min, "bad extra building sizes");
    check(spec.depth_min > 0 && spec.depth_max >= spec.depth_min && spec.depth_max < 1, "extra depth must lie in (0,1)");
    check(spec.free_margin >= 0, "extra margin must be non-negative");
    std::mt19937_64 rng(seed * 7919 + 13);
    std::uniform_real_distribution<double> unit(0, 1);
    std::vector<Mbr> boxes, roads, placed;
    for (const auto& e : source.entities) boxes.push_back(mbr(e));
    for (const auto& s : source.segments) roads.push_back(mbr(s));
    // extras stay inside the source's footprint
    std::vector<Mbr> all = boxes;
    all.insert(all.end(), roads.begin(), roads.end());
    Mbr world = all.empty() ? Mbr{} : all[0];
    for (const auto& b : all)
        world = {std::min(world.x_min, b.x_min), std::max(world.x_max, b.x_max), std::min(world.y_min, b.y_min),
                 std::max(world.y_max, b.y_max)};
    std::set<Id> taken;
    for (const auto& e : target.entities) taken.insert(e.id);
    for (const auto& s : target.segments) taken.insert(s.id);

    std::vector<Id> ids;
    long tries = 0;
    while (static_cast<int>(ids.size()) < spec.n) {
        if (boxes.empty()) throw std::runtime_error("overlapping extras need source buildings");
        if (++tries > 5000L * spec.n) throw std::runtime_error("cannot place overlapping extras");
        size_t bi = std::uniform_int_distribution<size_t>(0, boxes.size() - 1)(rng);
        const Mbr& b = boxes[bi];
        double w = spec.size_min + unit(rng) * (spec.size_max - spec.size_min);
        double h = spec.size_min + unit(rng) * (spec.size_max - spec.size_min);
        int side = std::uniform_int_distribution<int>(0, 3)(rng);
        double depth = spec.depth_min + unit(rng) * (spec.depth_max - spec.depth_min);
        Mbr x;
        if (side < 2) {
            double d = depth * w, y0 = b.y_min - 0.5 * h + unit(rng) * b.height();
            x = side == 0 ? Mbr{b.x_max - d, b.x_max - d + w, y0, y0 + h} : Mbr{b.x_min + d - w, b.x_min + d, y0, y0 + h};
        } else {
            double d = depth * h, x0 = b.x_min - 0.5 * w + unit(rng) * b.width();
            x = side == 2 ? Mbr{x0, x0 + w, b.y_max - d, b.y_max - d + h} : Mbr{x0, x0 + w, b.y_min + d - h, b.y_min + d};
        }
        // keep corners on a 0.01 lattice
        auto snap = [](double v) { return std::round(v * 100) / 100; };
        x = {snap(x.x_min), snap(x.x_max), snap(x.y_min), snap(x.y_max)};
        bool ok = x.x_min >= world.x_min && x.y_min >= world.y_min && x.x_max <= world.x_max && x.y_max <= world.y_max;
        for (size_t k = 0; k < boxes.size() && ok; ++k) ok = k == bi || separated(x, boxes[k], spec.free_margin);
        for (size_t k = 0; k < roads.size() && ok; ++k) ok = separated(x, roads[k], spec.free_margin);
        for (size_t k = 0; k < placed.size() && ok; ++k) ok = separated(x, placed[k], 2 * spec.free_margin);
        if (!ok) continue;
        Id id = "tx" + std::to_string(placed.size());
        while (taken.count(id)) id += "x";
        taken.insert(id);
        target.entities.push_back(box_polygon(id, x, -1, 0, 0));
        std::vector<double> f(target.feature_names.size(), 0.0);
        if (target.feature_names == scene_feature_names()) f = building_features(rng);
        target.features[id] = f;
        ids.push_back(id);
        placed.push_back(x);
    }
    validate(target);
    return ids;
}

MergeInstance make_merge_instance(const MergeInstanceSpec& spec, std::uint64_t seed) {
    SceneSpec scene = spec.scene;
    scene.seed = seed;
    MergeInstance inst;
    inst.source = generate_scene(scene);
    PerturbSpec ps;
    ps.jitter_sigma = spec.jitter_sigma;
    ps.drop_rate_entities = ps.drop_rate_segments = ps.metadata_noise_rate = 0;
    ps.seed = seed + 1;
    auto p = perturb(inst.source, ps);
    inst.target = std::move(p.target);
    inst.matches = std::move(p.truth);
    inst.extras = add_overlapping_extras(inst.source, inst.target, spec.extras, seed);
    return inst;
}

json scene_to_geojson(const Gdb& g) {
    json fc{{"type", "FeatureCollection"}, {"features", json::array()}};
    auto props = [&](const Id& feature_of, const Id& id) {
        json p{{"id", id}};
        const auto& f = g.features.at(feature_of);
        for (size_t k = 0; k < g.feature_names.size(); ++k) p[g.feature_names[k]] = f[k];
        return p;
    };
    auto pts = [](const std::vector<Point>& v) {
        json a = json::array();
        for (const auto& p : v) a.push_back({p.x, p.y});
        return a;
    };
    for (const auto& e : g.entities)
        fc["features"].push_back({{"type", "Feature"},
                                  {"properties", props(e.id, e.id)},
                                  {"geometry", {{"type", "Polygon"}, {"coordinates", json::array({pts(e.ring)})}}}});
    // one LineString per way; a gap left by dropped segments starts a new part
    std::vector<std::pair<Id, Id>> parts;  // (feature id, segment carrying the properties)
    std::map<Id, std::vector<Point>> line;
    std::map<Id, Id> open_part;
    std::map<Id, int> n_parts;
    for (const auto& s : g.segments) {
        auto it = open_part.find(s.way_id);
        if (it != open_part.end() && line[it->second].back() == s.points.front()) {
            auto& l = line[it->second];
            l.insert(l.end(), s.points.begin() + 1, s.points.end());
            continue;
        }
        int k = n_parts[s.way_id]++;
        Id fid = k == 0 ? s.way_id : s.way_id + "." + std::to_string(k);
        open_part[s.way_id] = fid;
        parts.push_back({fid, s.id});
        line[fid] = s.points;
    }
    for (const auto& [fid, sid] : parts)
        fc["features"].push_back({{"type", "Feature"},
                                  {"properties", props(sid, fid)},
                                  {"geometry", {{"type", "LineString"}, {"coordinates", pts(line.at(fid))}}}});
    return fc;
}

json to_json(const SceneSpec& s) {
    return {{"n_buildings", s.n_buildings}, {"n_ways", s.n_ways},       {"extent", s.extent},
            {"size_min", s.size_min},       {"size_max", s.size_max},   {"l_shape_share", s.l_shape_share},
            {"road_style", s.road_style},   {"road_clearance", s.road_clearance},
            {"building_gap", s.building_gap}, {"seed", s.seed}};
}

json to_json(const PerturbSpec& s) {
    return {{"jitter_sigma", s.jitter_sigma},
            {"drop_rate_entities", s.drop_rate_entities},
            {"drop_rate_segments", s.drop_rate_segments},
            {"metadata_noise_rate", s.metadata_noise_rate},
            {"seed", s.seed}};
}

}  // namespace conflate
