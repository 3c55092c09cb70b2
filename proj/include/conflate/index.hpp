#pragma once

#include <utility>
#include <vector>

#include "conflate/geom.hpp"

namespace conflate {

// Packed (sort-tile-recursive) R-tree. Read-only once built.
class SpatialIndex {
public:
    static constexpr size_t kNodeCapacity = 16;

    SpatialIndex() = default;
    explicit SpatialIndex(std::vector<std::pair<Id, Mbr>> items);

    // ids whose box meets `box`, boundary included, in ascending id order
    std::vector<Id> query(const Mbr& box) const;
    size_t size() const { return items_.size(); }
    bool empty() const { return items_.empty(); }

private:
    struct Node {
        Mbr box;
        size_t first = 0, count = 0;  // children range in the next level down
    };
    std::vector<std::pair<Id, Mbr>> items_;  // leaf level, in packing order
    std::vector<std::vector<Node>> levels_;   // levels_[0] groups items_, last level is the root set
    void collect(size_t level, size_t idx, const Mbr& box, std::vector<Id>& out) const;
};

SpatialIndex build_index(std::vector<std::pair<Id, Mbr>> items);
std::vector<Id> query_box(const SpatialIndex& idx, const Mbr& box);

}  // namespace conflate
