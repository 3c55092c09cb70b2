#include <doctest.h>

#include <algorithm>
#include <random>

#include "conflate/index.hpp"

using namespace conflate;

namespace {

std::vector<Id> scan(const std::vector<std::pair<Id, Mbr>>& items, const Mbr& box) {
    std::vector<Id> out;
    for (const auto& [id, m] : items)
        if (m.x_min <= box.x_max && box.x_min <= m.x_max && m.y_min <= box.y_max && box.y_min <= m.y_max) out.push_back(id);
    std::sort(out.begin(), out.end());
    return out;
}

Mbr random_box(std::mt19937_64& rng, double extent, double max_side) {
    std::uniform_real_distribution<double> u(0, extent), s(0, max_side);
    double x = u(rng), y = u(rng);
    return {x, x + s(rng), y, y + s(rng)};
}

}  // namespace

TEST_CASE("empty index answers nothing") {
    auto idx = build_index({});
    CHECK(idx.empty());
    CHECK(query_box(idx, {-1e9, 1e9, -1e9, 1e9}).empty());
}

TEST_CASE("three disjoint squares") {
    auto idx = build_index({{"a", {0, 1, 0, 1}}, {"b", {3, 4, 0, 1}}, {"c", {6, 7, 0, 1}}});
    CHECK(query_box(idx, {3, 4, 0, 1}) == std::vector<Id>{"b"});
    CHECK(query_box(idx, {3.2, 3.5, 0.2, 0.5}) == std::vector<Id>{"b"});
}

TEST_CASE("closed semantics include edge contact") {
    auto idx = build_index({{"a", {0, 1, 0, 1}}, {"b", {2, 3, 0, 1}}});
    CHECK(query_box(idx, {1, 2, 0.5, 0.6}) == std::vector<Id>{"a", "b"});
    CHECK(query_box(idx, {1, 1, 1, 1}) == std::vector<Id>{"a"});
    CHECK(query_box(idx, {1.0000001, 1.9999999, 0, 1}).empty());
}

TEST_CASE("duplicate ids rejected") {
    CHECK_THROWS(build_index({{"a", {0, 1, 0, 1}}, {"a", {2, 3, 0, 1}}}));
}

TEST_CASE("randomized queries equal a linear scan") {
    std::mt19937_64 rng(42);
    for (size_t n : {1u, 15u, 16u, 17u, 255u, 1000u, 5000u}) {
        std::vector<std::pair<Id, Mbr>> items;
        for (size_t i = 0; i < n; ++i) items.push_back({"r" + std::to_string(i), random_box(rng, 1000, 20)});
        auto idx = build_index(items);
        CHECK(idx.size() == n);
        for (int q = 0; q < 100; ++q) {
            Mbr box = random_box(rng, 1000, 150);
            CHECK(query_box(idx, box) == scan(items, box));
        }
        // degenerate point items and point queries
        CHECK(query_box(idx, items[0].second) == scan(items, items[0].second));
    }
}
