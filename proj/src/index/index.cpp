#include "conflate/index.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace conflate {

namespace {

double cx(const Mbr& m) { return 0.5 * (m.x_min + m.x_max); }
double cy(const Mbr& m) { return 0.5 * (m.y_min + m.y_max); }

Mbr merge(const Mbr& a, const Mbr& b) {
    return {std::min(a.x_min, b.x_min), std::max(a.x_max, b.x_max), std::min(a.y_min, b.y_min),
            std::max(a.y_max, b.y_max)};
}

// STR ordering of boxes into runs of `cap`
template <class T, class GetBox>
void str_sort(std::vector<T>& v, size_t cap, GetBox box) {
    size_t n = v.size();
    if (n <= cap) return;
    size_t leaves = (n + cap - 1) / cap;
    size_t slices = static_cast<size_t>(std::ceil(std::sqrt(static_cast<double>(leaves))));
    size_t per_slice = slices * cap;
    std::stable_sort(v.begin(), v.end(), [&](const T& a, const T& b) { return cx(box(a)) < cx(box(b)); });
    for (size_t s = 0; s < n; s += per_slice) {
        auto e = std::min(n, s + per_slice);
        std::stable_sort(v.begin() + static_cast<long>(s), v.begin() + static_cast<long>(e),
                         [&](const T& a, const T& b) { return cy(box(a)) < cy(box(b)); });
    }
}

}  // namespace

SpatialIndex::SpatialIndex(std::vector<std::pair<Id, Mbr>> items) : items_(std::move(items)) {
    std::set<Id> seen;
    for (const auto& it : items_)
        if (!seen.insert(it.first).second) throw std::invalid_argument("duplicate index id " + it.first);
    if (items_.empty()) return;
    std::sort(items_.begin(), items_.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    str_sort(items_, kNodeCapacity, [](const std::pair<Id, Mbr>& p) -> const Mbr& { return p.second; });

    std::vector<Node> level;
    for (size_t i = 0; i < items_.size(); i += kNodeCapacity) {
        Node nd;
        nd.first = i;
        nd.count = std::min(kNodeCapacity, items_.size() - i);
        nd.box = items_[i].second;
        for (size_t k = i; k < i + nd.count; ++k) nd.box = merge(nd.box, items_[k].second);
        level.push_back(nd);
    }
    levels_.push_back(level);
    while (levels_.back().size() > kNodeCapacity) {
        auto& below = levels_.back();
        str_sort(below, kNodeCapacity, [](const Node& n) -> const Mbr& { return n.box; });
        std::vector<Node> up;
        for (size_t i = 0; i < below.size(); i += kNodeCapacity) {
            Node nd;
            nd.first = i;
            nd.count = std::min(kNodeCapacity, below.size() - i);
            nd.box = below[i].box;
            for (size_t k = i; k < i + nd.count; ++k) nd.box = merge(nd.box, below[k].box);
            up.push_back(nd);
        }
        levels_.push_back(std::move(up));
    }
}

void SpatialIndex::collect(size_t level, size_t idx, const Mbr& box, std::vector<Id>& out) const {
    const Node& nd = levels_[level][idx];
    if (!nd.box.intersects(box)) return;
    for (size_t k = nd.first; k < nd.first + nd.count; ++k) {
        if (level == 0) {
            if (items_[k].second.intersects(box)) out.push_back(items_[k].first);
        } else {
            collect(level - 1, k, box, out);
        }
    }
}

std::vector<Id> SpatialIndex::query(const Mbr& box) const {
    std::vector<Id> out;
    if (levels_.empty()) return out;
    size_t top = levels_.size() - 1;
    for (size_t i = 0; i < levels_[top].size(); ++i) collect(top, i, box, out);
    std::sort(out.begin(), out.end());
    return out;
}

SpatialIndex build_index(std::vector<std::pair<Id, Mbr>> items) { return SpatialIndex(std::move(items)); }

std::vector<Id> query_box(const SpatialIndex& idx, const Mbr& box) { return idx.query(box); }

}  // namespace conflate
