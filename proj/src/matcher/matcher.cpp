#include "conflate/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "conflate/index.hpp"

namespace conflate {

void MatchConfig::validate() const {
    if (!(tau >= 0 && tau <= 1)) throw std::invalid_argument("tau must be in [0, 1]");
    if (!(threshold >= 0 && threshold <= 1)) throw std::invalid_argument("threshold must be in [0, 1]");
}

EntityShape polygon_shape(const PolyEntity& p) { return {EntityKind::Polygon, region_from_polygon(p), mbr(p)}; }

EntityShape segment_shape(const Segment& s, double lambda_buf) {
    auto r = buffer_segment(s, lambda_buf);
    auto b = r.bounds();
    return {EntityKind::Segment, std::move(r), b};
}

double embedding_similarity(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
    if (a.size() != b.size()) throw std::invalid_argument("embedding dimensions differ");
    double na = a.norm(), nb = b.norm();
    if (na == 0 || nb == 0) return 0.5;
    double c = std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
    return (1 + c) / 2;
}

double pair_similarity(const EntityShape& s, const EntityShape& t, const Eigen::RowVectorXd& hs,
                       const Eigen::RowVectorXd& ht, double tau) {
    if (s.kind != t.kind) throw std::invalid_argument("pair_similarity: polygon compared with segment");
    double area = mbr_distance(s.box, t.box) > 0 ? 0.0 : jaccard_area(s.region, t.region);
    return std::clamp(tau * embedding_similarity(hs, ht) + (1 - tau) * area, 0.0, 1.0);
}

std::vector<int> hungarian(const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    if (cost.cols() != n) throw std::invalid_argument("hungarian: cost matrix must be square");
    if (n == 0) return {};
    const double inf = std::numeric_limits<double>::infinity();
    // 1-based potentials; p[j] is the row matched to column j
    std::vector<double> u(n + 1, 0), v(n + 1, 0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            int i0 = p[j0], j1 = 0;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) minv[j] = cur, way[j] = j0;
                if (minv[j] < delta) delta = minv[j], j1 = j;
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j])
                    u[p[j]] += delta, v[j] -= delta;
                else
                    minv[j] -= delta;
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> col_of(n);
    for (int j = 1; j <= n; ++j) col_of[p[j] - 1] = j - 1;
    return col_of;
}

Assignment assignment(const Eigen::MatrixXd& sim) {
    const auto ns = sim.rows(), nt = sim.cols();
    const auto n = std::max(ns, nt);
    Eigen::MatrixXd w = Eigen::MatrixXd::Ones(n, n);
    w.topLeftCorner(ns, nt) = 1.0 - sim.array();
    auto col = hungarian(w);
    Assignment a;
    a.target_of.assign(ns, -1);
    for (Eigen::Index i = 0; i < ns; ++i)
        if (col[i] < nt) {
            a.target_of[i] = col[i];
            a.total += sim(i, col[i]);
        }
    return a;
}

double mbr_distance(const Mbr& a, const Mbr& b) {
    double dx = std::max({0.0, a.x_min - b.x_max, b.x_min - a.x_max});
    double dy = std::max({0.0, a.y_min - b.y_max, b.y_min - a.y_max});
    return std::hypot(dx, dy);
}

namespace {

struct ShapeSet {
    std::vector<Id> ids;
    std::vector<EntityShape> shapes;
};

ShapeSet shapes_of(const Gdb& g, EntityKind kind, double lambda_buf) {
    ShapeSet s;
    if (kind == EntityKind::Polygon)
        for (auto& e : g.entities) s.ids.push_back(e.id), s.shapes.push_back(polygon_shape(e));
    else
        for (auto& e : g.segments) s.ids.push_back(e.id), s.shapes.push_back(segment_shape(e, lambda_buf));
    return s;
}

}  // namespace

SimilarityTable similarity_table(const Gdb& g_s, const Gdb& g_t, const KnowledgeGraph& kg_s,
                                 const KnowledgeGraph& kg_t, const Eigen::MatrixXd& emb_s,
                                 const Eigen::MatrixXd& emb_t, const GeoConfig& geo, const MatchConfig& cfg) {
    cfg.validate();
    if (static_cast<size_t>(emb_s.rows()) != kg_s.size() || static_cast<size_t>(emb_t.rows()) != kg_t.size())
        throw std::invalid_argument("similarity_table: embedding rows != KG entities");
    SimilarityTable tab;
    tab.tau = cfg.tau;
    tab.radius = cfg.candidate_radius < 0 ? geo.mu : cfg.candidate_radius;
    for (auto kind : {EntityKind::Polygon, EntityKind::Segment}) {
        auto S = shapes_of(g_s, kind, geo.lambda_buf), T = shapes_of(g_t, kind, geo.lambda_buf);
        std::vector<std::pair<Id, Mbr>> items;
        std::map<Id, size_t> t_pos;
        for (size_t j = 0; j < T.ids.size(); ++j) items.push_back({T.ids[j], T.shapes[j].box}), t_pos[T.ids[j]] = j;
        auto idx = build_index(items);
        for (size_t i = 0; i < S.ids.size(); ++i) {
            Eigen::RowVectorXd hs = emb_s.row(kg_s.index_of(S.ids[i]));
            std::vector<size_t> cand;
            if (cfg.dense) {
                cand.resize(T.ids.size());
                std::iota(cand.begin(), cand.end(), 0);
            } else {
                for (auto& id : idx.query(S.shapes[i].box.inflated(tab.radius))) {
                    size_t j = t_pos.at(id);
                    if (mbr_distance(S.shapes[i].box, T.shapes[j].box) <= tab.radius) cand.push_back(j);
                }
            }
            for (size_t j : cand) {
                Eigen::RowVectorXd ht = emb_t.row(kg_t.index_of(T.ids[j]));
                tab.scores[{S.ids[i], T.ids[j]}] = pair_similarity(S.shapes[i], T.shapes[j], hs, ht, cfg.tau);
            }
        }
    }
    return tab;
}

MatchSet match_from_table(const SimilarityTable& table, const Gdb& g_s, const Gdb& g_t, const MatchConfig& cfg) {
    cfg.validate();
    MatchSet out;
    out.threshold = cfg.threshold;
    std::set<Id> used_s, used_t;
    for (auto kind : {EntityKind::Polygon, EntityKind::Segment}) {
        std::set<Id> kind_s, kind_t;
        if (kind == EntityKind::Polygon) {
            for (auto& e : g_s.entities) kind_s.insert(e.id);
            for (auto& e : g_t.entities) kind_t.insert(e.id);
        } else {
            for (auto& e : g_s.segments) kind_s.insert(e.id);
            for (auto& e : g_t.segments) kind_t.insert(e.id);
        }
        auto is_kind = [&](const Gdb& g, const Id& id) { return (&g == &g_s ? kind_s : kind_t).count(id) > 0; };
        // connected components of the candidate graph; non-candidates score 0 so components solve independently
        std::vector<std::pair<Id, Id>> edges;
        for (auto& [pr, sc] : table.scores) {
            if (!is_kind(g_s, pr.first) || !is_kind(g_t, pr.second)) continue;
            if (cfg.prefilter && sc < cfg.threshold) continue;
            edges.push_back(pr);
        }
        std::map<std::string, std::string> parent;
        std::function<std::string(const std::string&)> find = [&](const std::string& x) -> std::string {
            auto it = parent.find(x);
            if (it->second == x) return x;
            return it->second = find(it->second);
        };
        for (auto& [a, b] : edges) parent.emplace("s" + a, "s" + a), parent.emplace("t" + b, "t" + b);
        for (auto& [a, b] : edges) {
            auto ra = find("s" + a), rb = find("t" + b);
            if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
        }
        std::map<std::string, std::pair<std::vector<Id>, std::vector<Id>>> comps;
        for (auto& [k, _] : parent) {
            auto& c = comps[find(k)];
            (k[0] == 's' ? c.first : c.second).push_back(k.substr(1));
        }
        for (auto& [root, c] : comps) {
            auto& [rows, cols] = c;
            Eigen::MatrixXd sim = Eigen::MatrixXd::Zero(rows.size(), cols.size());
            for (size_t i = 0; i < rows.size(); ++i)
                for (size_t j = 0; j < cols.size(); ++j) {
                    auto it = table.scores.find({rows[i], cols[j]});
                    if (it != table.scores.end() && !(cfg.prefilter && it->second < cfg.threshold)) sim(i, j) = it->second;
                }
            auto a = assignment(sim);
            for (size_t i = 0; i < rows.size(); ++i) {
                int j = a.target_of[i];
                if (j < 0 || !table.scores.count({rows[i], cols[j]})) continue;
                double s = sim(i, j);
                if (s < cfg.threshold) continue;
                out.pairs.push_back({rows[i], cols[j], s});
                used_s.insert(rows[i]);
                used_t.insert(cols[j]);
            }
        }
    }
    std::sort(out.pairs.begin(), out.pairs.end(), [](const Match& a, const Match& b) { return a.source < b.source; });
    for (auto& e : g_s.entities) if (!used_s.count(e.id)) out.unmatched_source.push_back(e.id);
    for (auto& e : g_s.segments) if (!used_s.count(e.id)) out.unmatched_source.push_back(e.id);
    for (auto& e : g_t.entities) if (!used_t.count(e.id)) out.unmatched_target.push_back(e.id);
    for (auto& e : g_t.segments) if (!used_t.count(e.id)) out.unmatched_target.push_back(e.id);
    std::sort(out.unmatched_source.begin(), out.unmatched_source.end());
    std::sort(out.unmatched_target.begin(), out.unmatched_target.end());
    return out;
}

MatchSet match_entities(const Gdb& g_s, const Gdb& g_t, const KnowledgeGraph& kg_s, const KnowledgeGraph& kg_t,
                        const Eigen::MatrixXd& emb_s, const Eigen::MatrixXd& emb_t, const GeoConfig& geo,
                        const MatchConfig& cfg) {
    return match_from_table(similarity_table(g_s, g_t, kg_s, kg_t, emb_s, emb_t, geo, cfg), g_s, g_t, cfg);
}

std::string matches_csv(const MatchSet& m) {
    std::ostringstream os;
    os << std::setprecision(17) << "source_id,target_id,score\n";
    for (auto& p : m.pairs) os << p.source << ',' << p.target << ',' << p.score << '\n';
    return os.str();
}

std::string ids_csv(const std::vector<Id>& ids, const char* header) {
    std::string s = std::string(header) + "\n";
    for (auto& id : ids) s += id + "\n";
    return s;
}

MatchSet matches_from_csv(const std::string& pairs_csv) {
    MatchSet m;
    std::istringstream is(pairs_csv);
    std::string line;
    if (!std::getline(is, line) || line.rfind("source_id,target_id", 0) != 0)
        throw std::invalid_argument("matches csv: missing header");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto a = line.find(','), b = line.find(',', a + 1);
        if (a == std::string::npos || b == std::string::npos) throw std::invalid_argument("matches csv: bad row " + line);
        m.pairs.push_back({line.substr(0, a), line.substr(a + 1, b - a - 1), std::stod(line.substr(b + 1))});
    }
    return m;
}

}  // namespace conflate
