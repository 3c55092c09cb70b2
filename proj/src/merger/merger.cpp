#include "conflate/merger.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>

#include "conflate/index.hpp"

namespace conflate {

Mbr shifted(const Mbr& b, const EpsilonShift& e) {
    return {b.x_min + e.eps_1_x + e.eps_c_x, b.x_max + e.eps_2_x + e.eps_c_x, b.y_min + e.eps_1_y + e.eps_c_y,
            b.y_max + e.eps_2_y + e.eps_c_y};
}

void MergeConfig::validate() const {
    if (!(gamma > 0)) throw std::invalid_argument("merge gamma must be > 0");
    if (!(eps_max > 0) || !std::isfinite(eps_max)) throw std::invalid_argument("merge eps_max must be > 0");
    if (!(big_M >= 0)) throw std::invalid_argument("merge big_M must be >= 0 (0 = automatic)");
    if (!(contact_tolerance >= 0)) throw std::invalid_argument("merge contact_tolerance must be >= 0");
    if (!(strict_slack > 0)) throw std::invalid_argument("merge strict_slack must be > 0");
    if (!(min_scale >= 0 && min_scale <= 1)) throw std::invalid_argument("merge min_scale must be in [0,1]");
}

std::vector<MergeItem> unmatched_targets(const MatchSet& ms, const Gdb& g_t, bool include_segments) {
    std::set<Id> matched;
    for (const auto& p : ms.pairs) matched.insert(p.target);
    std::vector<MergeItem> out;
    for (const auto& e : g_t.entities)
        if (!matched.count(e.id)) out.push_back({e.id, mbr(e), false});
    if (include_segments)
        for (const auto& s : g_t.segments)
            if (!matched.count(s.id)) out.push_back({s.id, mbr(s), true});
    return out;
}

std::vector<MergeItem> fixed_items(const Gdb& g_s, bool include_segments) {
    std::vector<MergeItem> out;
    for (const auto& e : g_s.entities) out.push_back({e.id, mbr(e), false});
    if (include_segments)
        for (const auto& s : g_s.segments) out.push_back({s.id, mbr(s), true});
    return out;
}

std::vector<OverlapPair> candidate_overlap_pairs(const std::vector<MergeItem>& fixed,
                                                 const std::vector<MergeItem>& movable, double eps_max) {
    const double reach = 2 * eps_max;
    auto build = [](const std::vector<MergeItem>& items) {
        std::vector<std::pair<Id, Mbr>> v;
        for (size_t i = 0; i < items.size(); ++i) v.push_back({std::to_string(i), items[i].box});
        return SpatialIndex(std::move(v));
    };
    SpatialIndex fidx = build(fixed), midx = build(movable);
    std::vector<OverlapPair> out;
    for (size_t i = 0; i < movable.size(); ++i) {
        std::vector<int> hits;
        for (const auto& id : fidx.query(movable[i].box.inflated(reach))) hits.push_back(std::stoi(id));
        std::sort(hits.begin(), hits.end());
        for (int f : hits)
            if (!(movable[i].segment && fixed[f].segment)) out.push_back({static_cast<int>(i), f, false});
        hits.clear();
        for (const auto& id : midx.query(movable[i].box.inflated(2 * reach))) hits.push_back(std::stoi(id));
        std::sort(hits.begin(), hits.end());
        for (int j : hits)
            if (j > static_cast<int>(i) && !(movable[i].segment && movable[j].segment))
                out.push_back({static_cast<int>(i), j, true});
    }
    return out;
}

RectExpr fixed_rect(const Mbr& b) { return {LinExpr(b.x_min), LinExpr(b.x_max), LinExpr(b.y_min), LinExpr(b.y_max)}; }

namespace {

bool never(const MilpModel& m, const Comparison& c) {
    auto [lo, hi] = m.range(c.expr);
    switch (c.op) {
        case Cmp::GE: return hi < 0;
        case Cmp::GT: return hi <= 0;
        case Cmp::LE: return lo > 0;
        case Cmp::LT: return lo >= 0;
    }
    return false;
}

bool always(const MilpModel& m, const Comparison& c) {
    auto [lo, hi] = m.range(c.expr);
    switch (c.op) {
        case Cmp::GE: return lo >= 0;
        case Cmp::GT: return lo > 0;
        case Cmp::LE: return hi <= 0;
        case Cmp::LT: return hi < 0;
    }
    return false;
}

// v in [lo, hi)
std::vector<Comparison> in_lo(const LinExpr& v, const LinExpr& lo, const LinExpr& hi) {
    return {{v - lo, Cmp::GE}, {v - hi, Cmp::LT}};
}
// v in (lo, hi]
std::vector<Comparison> in_hi(const LinExpr& v, const LinExpr& lo, const LinExpr& hi) {
    return {{v - lo, Cmp::GT}, {v - hi, Cmp::LE}};
}
// v not in [lo, hi)
std::pair<Comparison, Comparison> out_lo(const LinExpr& v, const LinExpr& lo, const LinExpr& hi) {
    return {{v - lo, Cmp::LT}, {v - hi, Cmp::GE}};
}
// v not in (lo, hi]
std::pair<Comparison, Comparison> out_hi(const LinExpr& v, const LinExpr& lo, const LinExpr& hi) {
    return {{v - lo, Cmp::LE}, {v - hi, Cmp::GT}};
}

struct PairEncoder {
    MilpModel& m;
    const MergeConfig& cfg;
    std::vector<ImplicationBlock>& out;

    bool reduce(std::vector<Comparison>& cond) const {
        if (!cfg.prune) return true;
        for (const auto& c : cond)
            if (never(m, c)) return false;
        std::vector<Comparison> kept;
        for (const auto& c : cond)
            if (!always(m, c)) kept.push_back(c);
        if (!kept.empty()) cond = std::move(kept);
        else cond.resize(1);
        return true;
    }

    void implication(int family, std::vector<Comparison> cond, const std::pair<Comparison, Comparison>& cons) {
        if (!reduce(cond)) return;
        if (cfg.prune && (always(m, cons.first) || always(m, cons.second))) return;
        size_t begin = m.cons.size();
        auto bins = encode_implication(m, cond, cons.first, cons.second);
        out.push_back({family, begin, m.cons.size(), std::move(bins)});
    }

    void product(int family, std::vector<Comparison> cond, const LinExpr& p, const LinExpr& q) {
        if (!reduce(cond)) return;
        if (cfg.prune) {
            auto [plo, phi] = m.range(p);
            auto [qlo, qhi] = m.range(q);
            if ((plo >= 0 && qlo >= 0) || (phi <= 0 && qhi <= 0)) return;
        }
        size_t begin = m.cons.size();
        auto bins = encode_product_implication(m, cond, p, q);
        out.push_back({family, begin, m.cons.size(), std::move(bins)});
    }

    // vertices of b kept out of a
    void vertices(int family, const RectExpr& b, const RectExpr& a) {
        implication(family, in_lo(b.x1, a.x1, a.x2), out_lo(b.y1, a.y1, a.y2));
        implication(family, in_lo(b.x1, a.x1, a.x2), out_hi(b.y2, a.y1, a.y2));
        implication(family, in_hi(b.x2, a.x1, a.x2), out_lo(b.y1, a.y1, a.y2));
        implication(family, in_hi(b.x2, a.x1, a.x2), out_hi(b.y2, a.y1, a.y2));
    }

    void crossings(const RectExpr& b, const RectExpr& a) {
        for (const auto& cx : {in_lo(b.x1, a.x1, a.x2), in_hi(b.x2, a.x1, a.x2)}) {
            product(kCase3, cx, b.y1 - a.y1, b.y2 - a.y1);
            product(kCase3, cx, b.y1 - a.y2, b.y2 - a.y2);
        }
        for (const auto& cy : {in_lo(b.y1, a.y1, a.y2), in_hi(b.y2, a.y1, a.y2)}) {
            product(kCase3, cy, b.x1 - a.x1, b.x2 - a.x1);
            product(kCase3, cy, b.x1 - a.x2, b.x2 - a.x2);
        }
    }
};

}  // namespace

std::vector<ImplicationBlock> encode_pair_nonoverlap(MilpModel& m, const RectExpr& b, const RectExpr& a_in,
                                                     const MergeConfig& cfg, int families) {
    RectExpr a = a_in;
    if (cfg.contact_tolerance > 0) {
        double t = cfg.contact_tolerance;
        a.x1 += LinExpr(t), a.x2 -= LinExpr(t), a.y1 += LinExpr(t), a.y2 -= LinExpr(t);
    }
    std::vector<ImplicationBlock> out;
    PairEncoder enc{m, cfg, out};
    if (families & kCase1) enc.vertices(kCase1, b, a);
    if (families & kCase2) enc.vertices(kCase2, a, b);
    if (families & kCase3) enc.crossings(b, a);
    return out;
}

RectExpr movable_rect(const Mbr& b, const ShiftVars& v) {
    auto e = [&](int k) { return LinExpr::var(v.eps[k]); };
    return {LinExpr(b.x_min) + e(0) + e(2), LinExpr(b.x_max) + e(0) + e(3), LinExpr(b.y_min) + e(1) + e(4),
            LinExpr(b.y_max) + e(1) + e(5)};
}

EpsilonShift shift_from(const std::vector<double>& x, const ShiftVars& v) {
    auto g = [&](int k) {
        double val = x.at(v.eps[k]);
        return val == 0.0 ? 0.0 : val;  // no negative zero in output
    };
    return {g(0), g(1), g(2), g(3), g(4), g(5)};
}

namespace {

Mbr hull(const Mbr& a, const Mbr& b) {
    return {std::min(a.x_min, b.x_min), std::max(a.x_max, b.x_max), std::min(a.y_min, b.y_min),
            std::max(a.y_max, b.y_max)};
}

double diagonal(const Mbr& b) { return std::hypot(b.width(), b.height()); }

}  // namespace

MergeModel build_merge_milp(const std::vector<MergeItem>& fixed, const std::vector<MergeItem>& movable,
                            const std::vector<OverlapPair>& pairs, const MergeConfig& cfg) {
    cfg.validate();
    MergeModel mm;
    MilpModel& m = mm.model;
    m.strict_slack = cfg.strict_slack;
    const double e = cfg.eps_max;
    static const char* names[6] = {"eps_c_x", "eps_c_y", "eps_1_x", "eps_2_x", "eps_1_y", "eps_2_y"};
    for (const auto& it : movable) {
        ShiftVars v;
        for (int k = 0; k < 6; ++k) {
            v.eps[k] = m.add_continuous(std::string(names[k]) + "[" + it.id + "]", -e, e);
            double w = k < 2 ? 1.0 : cfg.gamma;
            v.aux[k] = m.add_continuous(std::string("abs_") + names[k] + "[" + it.id + "]", 0, e, w);
            m.add(LinExpr::var(v.aux[k]) - LinExpr::var(v.eps[k]), Sense::GE);
            m.add(LinExpr::var(v.aux[k]) + LinExpr::var(v.eps[k]), Sense::GE);
        }
        RectExpr r = movable_rect(it.box, v);
        m.add(r.x2 - r.x1 - LinExpr(cfg.min_scale * it.box.width()), Sense::GE);
        m.add(r.y2 - r.y1 - LinExpr(cfg.min_scale * it.box.height()), Sense::GE);
        mm.shift_vars.push_back(v);
    }

    if (cfg.big_M > 0) {
        Mbr scene;
        bool first = true;
        for (const auto* list : {&fixed, &movable})
            for (const auto& it : *list) {
                scene = first ? it.box : hull(scene, it.box);
                first = false;
            }
        double extent = first ? 0.0 : std::max(scene.width(), scene.height());
        if (cfg.big_M <= 2 * (extent + e))
            throw std::invalid_argument("merge big_M must exceed 2 * (scene extent + eps_max)");
    }

    const double reach = 2 * e;
    for (size_t g = 0; g < pairs.size(); ++g) {
        const auto& p = pairs[g];
        const Mbr& bb = movable.at(p.movable).box;
        const Mbr& ab = p.other_movable ? movable.at(p.other).box : fixed.at(p.other).box;
        m.big_M = cfg.big_M > 0 ? cfg.big_M : 10 * (diagonal(hull(bb, ab).inflated(reach)) + e);
        m.group = static_cast<int>(g);
        RectExpr b = movable_rect(bb, mm.shift_vars[p.movable]);
        RectExpr a = p.other_movable ? movable_rect(ab, mm.shift_vars[p.other]) : fixed_rect(ab);
        auto blocks = encode_pair_nonoverlap(m, b, a, cfg);
        mm.blocks.insert(mm.blocks.end(), blocks.begin(), blocks.end());
    }
    m.group = -1;
    mm.pairs = pairs;
    return mm;
}

MergePlan solve_merge(const MergeModel& mm, const std::vector<MergeItem>& fixed,
                      const std::vector<MergeItem>& movable, const MilpOptions& opt) {
    auto r = solve_milp(mm.model, opt);
    MergePlan plan;
    plan.status = r.status;
    plan.nodes = r.nodes;
    if (!r.x.empty()) {
        plan.objective = r.objective;
        for (size_t i = 0; i < movable.size(); ++i) plan.shifts[movable[i].id] = shift_from(r.x, mm.shift_vars[i]);
    }
    for (int g : r.infeasible_groups) {
        const auto& p = mm.pairs.at(g);
        plan.infeasible_pairs.push_back(
            {movable.at(p.movable).id, p.other_movable ? movable.at(p.other).id : fixed.at(p.other).id});
    }
    return plan;
}

MergePlan plan_merge(const Gdb& g_s, const Gdb& g_t, const MatchSet& ms, const MergeConfig& cfg,
                     const MilpOptions& opt) {
    cfg.validate();
    auto fixed = fixed_items(g_s, cfg.include_segments);
    auto movable = unmatched_targets(ms, g_t, cfg.include_segments);
    auto pairs = candidate_overlap_pairs(fixed, movable, cfg.eps_max);
    auto mm = build_merge_milp(fixed, movable, pairs, cfg);
    return solve_merge(mm, fixed, movable, opt);
}

nlohmann::json plan_to_json(const MergePlan& p) {
    nlohmann::json j;
    j["status"] = status_name(p.status);
    j["objective"] = p.objective;
    j["nodes"] = p.nodes;
    nlohmann::json shifts = nlohmann::json::object();
    for (const auto& [id, s] : p.shifts)
        shifts[id] = {{"eps_c_x", s.eps_c_x}, {"eps_c_y", s.eps_c_y}, {"eps_1_x", s.eps_1_x},
                      {"eps_2_x", s.eps_2_x}, {"eps_1_y", s.eps_1_y}, {"eps_2_y", s.eps_2_y}};
    j["shifts"] = shifts;
    nlohmann::json bad = nlohmann::json::array();
    for (const auto& [a, b] : p.infeasible_pairs) bad.push_back({a, b});
    j["infeasible_pairs"] = bad;
    return j;
}

MergePlan plan_from_json(const nlohmann::json& j) {
    MergePlan p;
    std::string st = j.at("status").get<std::string>();
    if (st == "optimal") p.status = SolveStatus::Optimal;
    else if (st == "infeasible") p.status = SolveStatus::Infeasible;
    else if (st == "node_limit") p.status = SolveStatus::NodeLimit;
    else throw std::invalid_argument("unknown merge plan status: " + st);
    p.objective = j.at("objective").get<double>();
    p.nodes = j.value("nodes", 0L);
    for (const auto& [id, s] : j.at("shifts").items())
        p.shifts[id] = {s.at("eps_c_x").get<double>(), s.at("eps_c_y").get<double>(), s.at("eps_1_x").get<double>(),
                        s.at("eps_2_x").get<double>(), s.at("eps_1_y").get<double>(), s.at("eps_2_y").get<double>()};
    for (const auto& pr : j.at("infeasible_pairs")) p.infeasible_pairs.push_back({pr.at(0), pr.at(1)});
    return p;
}

namespace {

// maps old box onto new box axis by axis
struct BoxMap {
    Mbr from, to;
    double fx(double x) const {
        if (to.x_min == from.x_min && to.x_max == from.x_max) return x;
        if (from.width() == 0) return to.x_min;
        return to.x_min + (x - from.x_min) * (to.width() / from.width());
    }
    double fy(double y) const {
        if (to.y_min == from.y_min && to.y_max == from.y_max) return y;
        if (from.height() == 0) return to.y_min;
        return to.y_min + (y - from.y_min) * (to.height() / from.height());
    }
    Point operator()(const Point& p) const { return {fx(p.x), fy(p.y)}; }
};

}  // namespace

Gdb apply_merge(const Gdb& g_s, const Gdb& g_t, const MatchSet& ms, const MergePlan& plan,
                std::map<Id, Id>* origin) {
    Gdb out = g_s;
    std::set<Id> taken;
    for (const auto& e : g_s.entities) taken.insert(e.id);
    for (const auto& s : g_s.segments) taken.insert(s.id);
    std::set<Id> matched;
    for (const auto& p : ms.pairs) matched.insert(p.target);

    auto fresh = [&](const Id& id) {
        Id n = id;
        while (taken.count(n)) n += "#t";
        taken.insert(n);
        if (origin) (*origin)[n] = id;
        return n;
    };
    auto shift_of = [&](const Id& id) {
        auto it = plan.shifts.find(id);
        return it == plan.shifts.end() ? EpsilonShift{} : it->second;
    };
    auto copy_features = [&](const Id& from, const Id& to) {
        std::vector<double> row(out.feature_names.size(), 0.0);
        auto it = g_t.features.find(from);
        if (it != g_t.features.end())
            for (size_t k = 0; k < out.feature_names.size(); ++k) {
                auto pos = std::find(g_t.feature_names.begin(), g_t.feature_names.end(), out.feature_names[k]);
                if (pos != g_t.feature_names.end()) row[k] = it->second.at(pos - g_t.feature_names.begin());
            }
        out.features[to] = std::move(row);
    };

    for (const auto& e : g_t.entities) {
        if (matched.count(e.id)) continue;
        Mbr box = mbr(e);
        BoxMap f{box, shifted(box, shift_of(e.id))};
        PolyEntity n;
        n.id = fresh(e.id);
        for (const auto& p : e.ring) n.ring.push_back(f(p));
        n.center = f(e.center);
        copy_features(e.id, n.id);
        out.entities.push_back(std::move(n));
    }
    for (const auto& s : g_t.segments) {
        if (matched.count(s.id)) continue;
        Mbr box = mbr(s);
        BoxMap f{box, shifted(box, shift_of(s.id))};
        Segment n;
        n.id = fresh(s.id);
        n.way_id = s.way_id;
        for (const auto& p : s.points) n.points.push_back(f(p));
        copy_features(s.id, n.id);
        out.segments.push_back(std::move(n));
    }
    return out;
}

Gdb position_merge_baseline(const Gdb& g_s, const Gdb& g_t, const MatchSet& ms) {
    return apply_merge(g_s, g_t, ms, MergePlan{});
}

}  // namespace conflate
