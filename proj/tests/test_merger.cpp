#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "conflate/merger.hpp"
#include "oracles.hpp"

using namespace conflate;

namespace {

LinExpr X(int v) { return LinExpr::var(v); }

bool any_assignment(const MilpModel& m, const std::vector<int>& bins, const std::vector<double>& x) {
    ImplicationBlock blk{0, 0, m.cons.size(), bins};
    return oracle::block_satisfiable(m, blk, x);
}

PolyEntity rect(const Id& id, double x0, double y0, double x1, double y1) {
    return make_polygon(id, {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}});
}

struct ImplicationFixture {
    MilpModel m;
    int x, y;
    std::vector<int> bins;
    ImplicationFixture() {
        x = m.add_continuous("x", -20, 20);
        y = m.add_continuous("y", -20, 20);
        m.big_M = 100;
        // if 0 <= x and x <= 2 then y >= 5 or y <= 1
        bins = encode_implication(m, {{X(x), Cmp::GE}, {X(x) - LinExpr(2), Cmp::LE}}, {X(y) - LinExpr(5), Cmp::GE},
                                  {X(y) - LinExpr(1), Cmp::LE});
    }
    std::vector<double> at(double xv, double yv) const {
        std::vector<double> p(m.vars.size(), 0.0);
        p[x] = xv, p[y] = yv;
        return p;
    }
};

struct ProductFixture {
    MilpModel m;
    int x, y1, y2;
    std::vector<int> bins;
    ProductFixture() {
        x = m.add_continuous("x", -20, 20);
        y1 = m.add_continuous("y1", -20, 20);
        y2 = m.add_continuous("y2", -20, 20);
        m.big_M = 100;
        bins = encode_product_implication(m, {{X(x), Cmp::GE}, {X(x) - LinExpr(2), Cmp::LE}}, X(y1) - LinExpr(1),
                                          X(y2) - LinExpr(3));
    }
    std::vector<double> at(double xv, double a, double b) const {
        std::vector<double> p(m.vars.size(), 0.0);
        p[x] = xv, p[y1] = a, p[y2] = b;
        return p;
    }
};

MergePlan solve_single(const Mbr& mv, const std::vector<Mbr>& fixed, const MergeConfig& cfg,
                       MilpResult* raw = nullptr, MergeModel* model = nullptr) {
    std::vector<MergeItem> f, m{{"m", mv, false}};
    for (size_t i = 0; i < fixed.size(); ++i) f.push_back({"f" + std::to_string(i), fixed[i], false});
    auto pairs = candidate_overlap_pairs(f, m, cfg.eps_max);
    auto mm = build_merge_milp(f, m, pairs, cfg);
    if (raw) *raw = solve_milp(mm.model);
    if (model) *model = mm;
    return solve_merge(mm, f, m);
}

}  // namespace

TEST_CASE("lp solver on a small textbook problem") {
    MilpModel m;
    int x = m.add_continuous("x", 0, kInf, -1);
    int y = m.add_continuous("y", 0, kInf, -1);
    m.add(X(x) + 2 * X(y) - LinExpr(4), Sense::LE);
    m.add(3 * X(x) + X(y) - LinExpr(6), Sense::LE);
    auto r = solve_lp(m, {0, 0}, {kInf, kInf});
    REQUIRE(r.status == SolveStatus::Optimal);
    CHECK(r.x[x] == doctest::Approx(1.6));
    CHECK(r.x[y] == doctest::Approx(1.2));
    CHECK(r.objective == doctest::Approx(-2.8));
}

TEST_CASE("lp solver with upper bounds, equalities and infeasibility") {
    MilpModel m;
    int a = m.add_continuous("a", -1, 1, -1);
    int b = m.add_continuous("b", -3, 2, -2);
    int c = m.add_continuous("c", 0, 5, 1);
    m.add(X(a) + X(b) + X(c) - LinExpr(2), Sense::EQ);
    auto r = solve_lp(m, {-1, -3, 0}, {1, 2, 5});
    REQUIRE(r.status == SolveStatus::Optimal);
    // c = 2 - a - b turns the cost into 2 - 2a - 3b under a + b <= 2
    CHECK(r.x[a] == doctest::Approx(0).epsilon(1e-12));
    CHECK(r.x[b] == doctest::Approx(2));
    CHECK(r.x[c] == doctest::Approx(0).epsilon(1e-12));
    CHECK(r.objective == doctest::Approx(-4));

    m.add(X(c) - LinExpr(4), Sense::GE);
    r = solve_lp(m, {-1, -3, 0}, {1, 2, 5});
    REQUIRE(r.status == SolveStatus::Optimal);
    CHECK(r.x[a] == doctest::Approx(-1));
    CHECK(r.x[b] == doctest::Approx(-1));
    CHECK(r.x[c] == doctest::Approx(4));
    CHECK(r.objective == doctest::Approx(7));
    m.add(X(a) + X(b) - LinExpr(3), Sense::GE);
    r = solve_lp(m, {-1, -3, 0}, {1, 2, 5});
    CHECK(r.status == SolveStatus::Infeasible);
}

TEST_CASE("milp agrees with enumeration on random pure-binary problems") {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> U(-5, 5);
    for (int trial = 0; trial < 40; ++trial) {
        const int n = 8;
        MilpModel m;
        for (int j = 0; j < n; ++j) {
            m.add_binary("b");
            m.cost[j] = U(rng);
        }
        std::vector<std::vector<double>> rows;
        std::vector<double> rhs;
        for (int i = 0; i < 4; ++i) {
            LinExpr e;
            std::vector<double> row(n);
            for (int j = 0; j < n; ++j) e += LinExpr::var(j, row[j] = U(rng));
            double r0 = U(rng);
            rows.push_back(row);
            rhs.push_back(r0);
            m.add(e - LinExpr(r0), Sense::LE);
        }
        double best = kInf;
        for (int mask = 0; mask < (1 << n); ++mask) {
            bool ok = true;
            for (size_t i = 0; i < rows.size() && ok; ++i) {
                double s = 0;
                for (int j = 0; j < n; ++j) s += rows[i][j] * ((mask >> j) & 1);
                ok = s <= rhs[i];
            }
            if (!ok) continue;
            double c = 0;
            for (int j = 0; j < n; ++j) c += m.cost[j] * ((mask >> j) & 1);
            best = std::min(best, c);
        }
        auto r = solve_milp(m);
        if (best == kInf) {
            CHECK(r.status == SolveStatus::Infeasible);
        } else {
            REQUIRE(r.status == SolveStatus::Optimal);
            CHECK(r.objective == doctest::Approx(best).epsilon(1e-9));
            CHECK(m.feasible(r.x, 1e-9));
        }
    }
}

TEST_CASE("implication encoding: worked instances") {
    ImplicationFixture l;
    CHECK(l.bins.size() == 4);
    CHECK_FALSE(any_assignment(l.m, l.bins, l.at(1, 3)));
    CHECK(any_assignment(l.m, l.bins, l.at(3, 3)));
    CHECK(any_assignment(l.m, l.bins, l.at(1, 6)));
    // the satisfying assignment at (1, 6) picks the first disjunct
    int w = l.bins[2];
    auto p = l.at(1, 6);
    p[w] = 0;
    std::vector<int> rest(l.bins.begin(), l.bins.end());
    rest.erase(rest.begin() + 2);
    CHECK_FALSE(any_assignment(l.m, rest, p));
    p[w] = 1;
    CHECK(any_assignment(l.m, rest, p));
}

TEST_CASE("product implication encoding: worked instances") {
    ProductFixture l;
    CHECK_FALSE(any_assignment(l.m, l.bins, l.at(1, 2, 2)));
    CHECK(any_assignment(l.m, l.bins, l.at(1, 0, 2)));
    for (double a : {-7.0, 0.5, 2.0, 9.0})
        for (double b : {-4.0, 2.0, 3.5}) CHECK(any_assignment(l.m, l.bins, l.at(5, a, b)));
}

TEST_CASE("implication encodings match the logic on a grid") {
    ImplicationFixture l1;
    ProductFixture l2;
    for (double x = -3; x <= 5; x += 0.25)
        for (double y = -2; y <= 8; y += 0.25) {
            bool truth = !(x >= 0 && x <= 2) || y >= 5 || y <= 1;
            CHECK(any_assignment(l1.m, l1.bins, l1.at(x, y)) == truth);
            for (double y2 = -2; y2 <= 6; y2 += 0.5) {
                bool t2 = !(x >= 0 && x <= 2) || (y - 1) * (y2 - 3) >= 0;
                CHECK(any_assignment(l2.m, l2.bins, l2.at(x, y, y2)) == t2);
            }
        }
}

TEST_CASE("random implications with strict and non-strict comparisons") {
    std::mt19937 rng(5);
    std::uniform_int_distribution<int> op(0, 3), c(-3, 3);
    for (int trial = 0; trial < 60; ++trial) {
        MilpModel m;
        m.big_M = 100;
        int x = m.add_continuous("x", -10, 10), y = m.add_continuous("y", -10, 10);
        auto cmp = [&](int v) { return Comparison{X(v) - LinExpr(c(rng)), static_cast<Cmp>(op(rng))}; };
        std::vector<Comparison> cond = {cmp(x), cmp(x)};
        if (trial % 3 == 0) cond.push_back(cmp(y));
        Comparison c1 = cmp(y), c2 = cmp(y);
        auto bins = encode_implication(m, cond, c1, c2);
        for (double xv = -4; xv <= 4; xv += 0.5)
            for (double yv = -4; yv <= 4; yv += 0.5) {
                std::vector<double> p(m.vars.size(), 0.0);
                p[x] = xv, p[y] = yv;
                bool all = std::all_of(cond.begin(), cond.end(), [&](const Comparison& k) { return holds(k, p); });
                bool truth = !all || holds(c1, p) || holds(c2, p);
                CHECK(any_assignment(m, bins, p) == truth);
            }
    }
}

TEST_CASE("pair encoding: vertex inside, shifted clear, and the cross shape") {
    Mbr a{0, 2, 0, 2};
    Mbr b{1, 3, 0.5, 1.5};
    for (bool prune : {false, true}) {
        oracle::PairModel pm(b, a, 2, kAllCases, prune);
        CHECK_FALSE(pm.feasible_at({}));
        EpsilonShift s;
        s.eps_c_x = 1;
        CHECK(pm.feasible_at(s));
    }
    Mbr cross{0.5, 1.5, -1, 3};
    CHECK_FALSE(oracle::PairModel(cross, a, 2, kCase3, false).feasible_at({}));
    CHECK(oracle::PairModel(cross, a, 2, kCase1, false).feasible_at({}));
    CHECK(oracle::PairModel(cross, a, 2, kCase2, false).feasible_at({}));
    CHECK_FALSE(oracle::PairModel(cross, a, 2, kAllCases, true).feasible_at({}));
}

TEST_CASE("pair encoding agrees with the statements and with area overlap") {
    std::mt19937 rng(17);
    std::uniform_real_distribution<double> pos(0, 10), size(0.5, 4), eps(-2, 2);
    auto box = [&] {
        double x = pos(rng), y = pos(rng);
        return Mbr{x, x + size(rng), y, y + size(rng)};
    };
    int disagreements = 0, overlapping = 0, total = 0;
    for (int pair = 0; pair < 25; ++pair) {
        Mbr a = box(), b = box();
        b.x_min = a.x_min + (b.x_min - a.x_min) * 0.3;  // keep many pairs close
        b.x_max = b.x_min + size(rng);
        std::vector<oracle::PairModel> fams;
        for (int f : {kCase1, kCase2, kCase3}) fams.emplace_back(b, a, 2, f, false);
        oracle::PairModel all(b, a, 2, kAllCases, true);
        for (int k = 0; k < 40; ++k) {
            EpsilonShift s{eps(rng), eps(rng), eps(rng), eps(rng), eps(rng), eps(rng)};
            Mbr sb = shifted(b, s);
            if (sb.x_min >= sb.x_max || sb.y_min >= sb.y_max) continue;
            ++total;
            int fi = 0;
            for (int f : {kCase1, kCase2, kCase3})
                disagreements += fams[fi++].feasible_at(s) != oracle::families_hold(sb, a, f);
            bool clear = oracle::overlap_area(sb, a) == 0.0;
            overlapping += !clear;
            disagreements += all.feasible_at(s) != clear;
        }
    }
    CHECK(disagreements == 0);
    CHECK(overlapping > 50);
    CHECK(total - overlapping > 50);
}

TEST_CASE("merge model structure") {
    MergeConfig cfg;
    cfg.eps_max = 2;
    cfg.prune = false;
    std::vector<MergeItem> f{{"f", {0, 2, 0, 2}, false}}, m{{"m", {1, 3, 0.5, 1.5}, false}};
    auto pairs = candidate_overlap_pairs(f, m, cfg.eps_max);
    REQUIRE(pairs.size() == 1);
    auto mm = build_merge_milp(f, m, pairs, cfg);
    CHECK(mm.model.vars.size() - mm.model.num_binaries() == 12);
    CHECK(mm.model.num_binaries() == 64);
    CHECK(mm.blocks.size() == 16);
    // with little room to move, several conditions are settled by the bounds alone
    cfg.prune = true;
    cfg.eps_max = 0.2;
    auto pruned = build_merge_milp(f, m, pairs, cfg);
    CHECK(pruned.model.num_binaries() < 64);
    // and nothing within 0.2 per parameter clears the overlap
    CHECK(solve_milp(pruned.model).status == SolveStatus::Infeasible);
    CHECK(oracle::grid_merge_optimum(m[0].box, {f[0].box}, cfg.gamma, 0.2, cfg.min_scale) == kInf);
    cfg.eps_max = 2;
    for (size_t j = 0; j < mm.model.vars.size(); ++j)
        if (mm.model.cost[j] != 0) CHECK_FALSE(mm.model.vars[j].binary);

    auto empty = build_merge_milp(f, m, {}, cfg);
    auto r = solve_milp(empty.model);
    REQUIRE(r.status == SolveStatus::Optimal);
    CHECK(r.objective == 0.0);
    auto lp = mm.model.to_lp();
    for (const char* sec : {"Minimize", "Subject To", "Bounds", "Binaries", "End"})
        CHECK(lp.find(sec) != std::string::npos);
}

TEST_CASE("absolute value by auxiliary variable") {
    MilpModel m;
    int x = m.add_continuous("x", -10, 10);
    int t = m.add_continuous("t", 0, 10, 1);
    m.add(X(t) - X(x), Sense::GE);
    m.add(X(t) + X(x), Sense::GE);
    m.add(X(x) - LinExpr(3), Sense::GE);
    auto r = solve_milp(m);
    REQUIRE(r.status == SolveStatus::Optimal);
    CHECK(r.objective == doctest::Approx(3));
    CHECK(r.x[t] == doctest::Approx(3));
}

TEST_CASE("canonical overlap resolves by a unit center shift") {
    MergeConfig cfg;
    cfg.eps_max = 2;
    MilpResult raw;
    MergeModel mm;
    auto plan = solve_single({1, 3, 0, 2}, {{0, 2, 0, 2}}, cfg, &raw, &mm);
    REQUIRE(plan.status == SolveStatus::Optimal);
    CHECK(std::abs(plan.objective - 1.0) < 1e-6);
    const auto& s = plan.shifts.at("m");
    Mbr out = shifted({1, 3, 0, 2}, s);
    CHECK(oracle::overlap_area(out, {0, 2, 0, 2}) <= 1e-9);
    for (int k = 0; k < 6; ++k)
        CHECK(raw.x[mm.shift_vars[0].aux[k]] == doctest::Approx(std::abs(raw.x[mm.shift_vars[0].eps[k]])).epsilon(1e-9));
}

TEST_CASE("non-overlapping scene needs no shift") {
    MergeConfig cfg;
    cfg.eps_max = 2;
    auto plan = solve_single({5, 6, 5, 6}, {{0, 2, 0, 2}, {6, 8, 0, 4}}, cfg);
    REQUIRE(plan.status == SolveStatus::Optimal);
    CHECK(plan.objective == 0.0);
    const auto& s = plan.shifts.at("m");
    for (double v : {s.eps_c_x, s.eps_c_y, s.eps_1_x, s.eps_2_x, s.eps_1_y, s.eps_2_y}) CHECK(v == 0.0);
}

TEST_CASE("pinned movable is infeasible and names its pairs") {
    MergeConfig cfg;
    cfg.eps_max = 0.2;
    cfg.min_scale = 0.9;
    // gap of 1.6 between the walls, box width 2, tall walls on both sides
    auto plan = solve_single({0.9, 2.9, 0, 2}, {{-5, 1, -5, 7}, {2.6, 8, -5, 7}}, cfg);
    CHECK(plan.status == SolveStatus::Infeasible);
    std::set<Id> named;
    for (auto& [a, b] : plan.infeasible_pairs) {
        CHECK(a == "m");
        named.insert(b);
    }
    CHECK(named == std::set<Id>{"f0", "f1"});
    // brute check: the walls allow at most width 1.6 and a shrink to 1.6 means eps beyond 0.2 per side
    CHECK(oracle::grid_merge_optimum({0.9, 2.9, 0, 2}, {{-5, 1, -5, 7}, {2.6, 8, -5, 7}}, 2.1, 0.2, 0.9) == kInf);
}

TEST_CASE("single movable optimum matches the grid search") {
    std::mt19937 rng(3);
    std::uniform_int_distribution<int> q(0, 60), off(-20, 20), len(6, 26);
    auto L = [](int k) { return 0.05 * k; };  // everything sits on a 0.05 lattice
    int checked = 0;
    for (int inst = 0; inst < 6; ++inst) {
        MergeConfig cfg;
        cfg.eps_max = 0.75;
        int x = 20 + q(rng), y = 20 + q(rng);
        Mbr mv{L(x), L(x + 10 + q(rng) / 2), L(y), L(y + 10 + q(rng) / 2)};
        std::vector<Mbr> fixed;
        for (int k = 0; k < 1 + inst % 3; ++k) {
            int fx = x + off(rng), fy = y + off(rng);
            fixed.push_back({L(fx), L(fx + len(rng)), L(fy), L(fy + len(rng))});
        }
        MilpResult raw;
        MergeModel mm;
        auto plan = solve_single(mv, fixed, cfg, &raw, &mm);
        double ref = oracle::grid_merge_optimum(mv, fixed, cfg.gamma, cfg.eps_max, cfg.min_scale);
        if (ref == kInf) {
            CHECK(plan.status == SolveStatus::Infeasible);
            continue;
        }
        REQUIRE(plan.status == SolveStatus::Optimal);
        CHECK(std::abs(plan.objective - ref) <= 0.02);
        Mbr out = shifted(mv, plan.shifts.at("m"));
        for (const auto& f : fixed) CHECK(oracle::overlap_area(out, f) <= 1e-9);
        ++checked;
    }
    CHECK(checked >= 3);
}

TEST_CASE("candidate pairs equal an inflated brute-force scan") {
    std::mt19937 rng(9);
    std::uniform_real_distribution<double> pos(0, 100), size(1, 8);
    std::vector<MergeItem> fixed, movable;
    for (int i = 0; i < 60; ++i) {
        double x = pos(rng), y = pos(rng);
        fixed.push_back({"f" + std::to_string(i), {x, x + size(rng), y, y + size(rng)}, i % 4 == 0});
    }
    for (int i = 0; i < 40; ++i) {
        double x = pos(rng), y = pos(rng);
        movable.push_back({"m" + std::to_string(i), {x, x + size(rng), y, y + size(rng)}, i % 5 == 0});
    }
    const double e = 1.5;
    auto got = candidate_overlap_pairs(fixed, movable, e);
    std::set<std::tuple<int, int, bool>> want, have;
    for (auto& p : got) have.insert({p.movable, p.other, p.other_movable});
    auto meet = [](const Mbr& a, const Mbr& b) {
        return a.x_min <= b.x_max && b.x_min <= a.x_max && a.y_min <= b.y_max && b.y_min <= a.y_max;
    };
    for (int i = 0; i < 40; ++i) {
        for (int f = 0; f < 60; ++f)
            if (!(movable[i].segment && fixed[f].segment) && meet(movable[i].box.inflated(2 * e), fixed[f].box))
                want.insert({i, f, false});
        for (int j = i + 1; j < 40; ++j)
            if (!(movable[i].segment && movable[j].segment) && meet(movable[i].box.inflated(4 * e), movable[j].box))
                want.insert({i, j, true});
    }
    CHECK(have == want);
    CHECK(have.size() == got.size());
    CHECK(candidate_overlap_pairs({{"f", {0, 1, 0, 1}, false}}, {{"m", {50, 51, 50, 51}, false}}, 1).empty());
}

TEST_CASE("unmatched targets are the complement of the matched ids") {
    Gdb t;
    for (int i = 0; i < 5; ++i) t.entities.push_back(rect("t" + std::to_string(i), i * 3, 0, i * 3 + 1, 1));
    t.segments.push_back({"s0", {{0, 5}, {10, 5}}, "w"});
    MatchSet ms;
    CHECK(unmatched_targets(ms, t).size() == 6);
    CHECK(unmatched_targets(ms, t, false).size() == 5);
    ms.pairs = {{"a", "t1", 0.9}, {"b", "t3", 0.8}, {"c", "s0", 0.7}};
    std::set<Id> got;
    for (auto& it : unmatched_targets(ms, t)) got.insert(it.id);
    CHECK(got == std::set<Id>{"t0", "t2", "t4"});
    ms.pairs.push_back({"d", "t0", 1});
    ms.pairs.push_back({"e", "t2", 1});
    ms.pairs.push_back({"f", "t4", 1});
    CHECK(unmatched_targets(ms, t).empty());
}

TEST_CASE("apply merge keeps the source and places the shifted targets") {
    Gdb s, t;
    s.entities = {rect("a", 0, 0, 2, 2), rect("b", 10, 0, 12, 2)};
    s.segments = {{"r", {{0, -3}, {12, -3}}, "w1"}};
    t.entities = {rect("a2", 0.1, 0, 2.1, 2), rect("x", 1, 0, 3, 2), rect("b", 20, 0, 21, 1)};
    for (auto* g : {&s, &t}) {
        for (auto& e : g->entities) g->features[e.id] = {};
        for (auto& e : g->segments) g->features[e.id] = {};
    }
    MatchSet ms;
    ms.pairs = {{"a", "a2", 0.9}};

    CHECK(gdb_to_json(apply_merge(s, Gdb{}, ms, {})) == gdb_to_json(s));

    Gdb pos = position_merge_baseline(s, t, ms);
    REQUIRE(pos.entities.size() == 4);
    CHECK(pos.entities[2].ring == t.entities[1].ring);
    CHECK(pos.entities[3].id == "b#t");
    CHECK_NOTHROW(validate(pos));

    MergeConfig cfg;
    cfg.eps_max = 2;
    auto plan = plan_merge(s, t, ms, cfg);
    REQUIRE(plan.status == SolveStatus::Optimal);
    CHECK(std::abs(plan.objective - 1.0) < 1e-6);
    Gdb merged = apply_merge(s, t, ms, plan);
    for (size_t i = 0; i < s.entities.size(); ++i) {
        CHECK(merged.entities[i].ring == s.entities[i].ring);
        CHECK(merged.entities[i].center == s.entities[i].center);
    }
    CHECK(merged.segments[0].points == s.segments[0].points);
    for (size_t i = 0; i < merged.entities.size(); ++i)
        for (size_t j = i + 1; j < merged.entities.size(); ++j)
            CHECK(oracle::overlap_area(mbr(merged.entities[i]), mbr(merged.entities[j])) <= 1e-9);
    CHECK_NOTHROW(validate(merged));

    auto back = plan_from_json(plan_to_json(plan));
    CHECK(plan_to_json(back) == plan_to_json(plan));
}

TEST_CASE("proportional remap of a resized target") {
    Gdb s, t;
    t.entities = {make_polygon("p", {{0, 0}, {4, 0}, {4, 2}, {2, 3}, {0, 2}})};
    MergePlan plan;
    plan.status = SolveStatus::Optimal;
    EpsilonShift e;
    e.eps_c_x = 1;
    e.eps_2_x = -2;  // x range [0,4] -> [1,3]
    e.eps_2_y = 1;   // y range [0,3] -> [0,4]
    plan.shifts["p"] = e;
    Gdb m = apply_merge(s, t, {}, plan);
    REQUIRE(m.entities.size() == 1);
    Mbr b = mbr(m.entities[0]);
    CHECK(b == Mbr{1, 3, 0, 4});
    CHECK(m.entities[0].ring[3].x == doctest::Approx(2));
    CHECK(m.entities[0].ring[3].y == doctest::Approx(4));
}

TEST_CASE("merge config validation") {
    MergeConfig c;
    CHECK_NOTHROW(c.validate());
    c.gamma = 0;
    CHECK_THROWS(c.validate());
    c = {};
    c.eps_max = -1;
    CHECK_THROWS(c.validate());
    c = {};
    c.big_M = 5;
    std::vector<MergeItem> f{{"f", {0, 20, 0, 2}, false}}, m{{"m", {1, 3, 0, 2}, false}};
    CHECK_THROWS_AS(build_merge_milp(f, m, candidate_overlap_pairs(f, m, c.eps_max), c), std::invalid_argument);
}
