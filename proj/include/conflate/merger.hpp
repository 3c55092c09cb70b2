#pragma once

#include <array>
#include <map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "conflate/geom.hpp"
#include "conflate/matcher.hpp"
#include "conflate/milp.hpp"

namespace conflate {

// eps_1 moves the min side, eps_2 the max side, eps_c both
struct EpsilonShift {
    double eps_c_x = 0, eps_c_y = 0;
    double eps_1_x = 0, eps_2_x = 0, eps_1_y = 0, eps_2_y = 0;
};

Mbr shifted(const Mbr& b, const EpsilonShift& e);

struct MergeConfig {
    double gamma = 2.1;
    double eps_max = 10.0;
    double big_M = 0;              // 0: derived per pair from the pair's extent
    double contact_tolerance = 0;  // allowed interpenetration per side
    double strict_slack = 1e-6;
    double min_scale = 0.1;        // shifted width/height >= min_scale * original
    bool prune = true;             // drop implications that cannot fire or always hold
    bool include_segments = true;
    void validate() const;
};

struct MergeItem {
    Id id;
    Mbr box;
    bool segment = false;
};

std::vector<MergeItem> unmatched_targets(const MatchSet& ms, const Gdb& g_t, bool include_segments = true);
std::vector<MergeItem> fixed_items(const Gdb& g_s, bool include_segments = true);

struct OverlapPair {
    int movable;
    int other;  // index into fixed, or into movable when other_movable
    bool other_movable;
};

// A side can travel up to 2 * eps_max (center plus side shift); boxes are inflated by that reach.
// Segment-segment pairs are skipped.
std::vector<OverlapPair> candidate_overlap_pairs(const std::vector<MergeItem>& fixed,
                                                 const std::vector<MergeItem>& movable, double eps_max);

struct RectExpr {
    LinExpr x1, x2, y1, y2;
};

RectExpr fixed_rect(const Mbr& b);

constexpr int kCase1 = 1;  // movable vertices outside the other rectangle
constexpr int kCase2 = 2;  // other rectangle's vertices outside the movable one
constexpr int kCase3 = 4;  // no edge crossing
constexpr int kAllCases = kCase1 | kCase2 | kCase3;

struct ImplicationBlock {
    int family;
    size_t con_begin, con_end;
    std::vector<int> binaries;
};

// Constraints keeping open interiors of b and a disjoint. big_M and strict slack come from m.
std::vector<ImplicationBlock> encode_pair_nonoverlap(MilpModel& m, const RectExpr& b, const RectExpr& a,
                                                     const MergeConfig& cfg, int families = kAllCases);

// order: c_x, c_y, 1_x, 2_x, 1_y, 2_y
struct ShiftVars {
    std::array<int, 6> eps{}, aux{};
};

RectExpr movable_rect(const Mbr& b, const ShiftVars& v);
EpsilonShift shift_from(const std::vector<double>& x, const ShiftVars& v);

struct MergeModel {
    MilpModel model;
    std::vector<ShiftVars> shift_vars;  // per movable
    std::vector<OverlapPair> pairs;     // constraint group g belongs to pairs[g]
    std::vector<ImplicationBlock> blocks;
};

MergeModel build_merge_milp(const std::vector<MergeItem>& fixed, const std::vector<MergeItem>& movable,
                            const std::vector<OverlapPair>& pairs, const MergeConfig& cfg);

struct MergePlan {
    SolveStatus status = SolveStatus::Infeasible;
    double objective = 0;
    std::map<Id, EpsilonShift> shifts;
    std::vector<std::pair<Id, Id>> infeasible_pairs;
    long nodes = 0;
};

MergePlan solve_merge(const MergeModel& mm, const std::vector<MergeItem>& fixed,
                      const std::vector<MergeItem>& movable, const MilpOptions& opt = {});
MergePlan plan_merge(const Gdb& g_s, const Gdb& g_t, const MatchSet& ms, const MergeConfig& cfg,
                     const MilpOptions& opt = {});

nlohmann::json plan_to_json(const MergePlan& p);
MergePlan plan_from_json(const nlohmann::json& j);

// Source copied untouched; unmatched targets added with their shifts (zero when absent).
// A target id that collides with a source id gets the suffix "#t".
// `origin`, if given, receives merged id -> target id for every copied target entity.
Gdb apply_merge(const Gdb& g_s, const Gdb& g_t, const MatchSet& ms, const MergePlan& plan,
                std::map<Id, Id>* origin = nullptr);
Gdb position_merge_baseline(const Gdb& g_s, const Gdb& g_t, const MatchSet& ms);

}  // namespace conflate
