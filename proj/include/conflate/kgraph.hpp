#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "conflate/geom.hpp"

namespace conflate {

// Integer values are the serialization codes.
enum class RelationType : int {
    Bottom = 0,
    BottomRight = 1,
    Right = 2,
    TopRight = 3,
    Top = 4,
    TopLeft = 5,
    Left = 6,
    BottomLeft = 7,
    Close = 8,
    Inside = 9,
    Connected = 10,
};

constexpr int kNumRelations = 11;

const char* relation_name(RelationType r);
RelationType relation_from_name(const std::string& s);
inline int code(RelationType r) { return static_cast<int>(r); }

struct Triple {
    Id head;
    RelationType rel;
    Id tail;
};

inline bool operator<(const Triple& a, const Triple& b) {
    return std::tie(a.head, a.rel, a.tail) < std::tie(b.head, b.rel, b.tail);
}
inline bool operator==(const Triple& a, const Triple& b) {
    return a.head == b.head && a.rel == b.rel && a.tail == b.tail;
}

enum class EntityKind { Polygon, Segment };

struct KnowledgeGraph {
    std::vector<Id> entities;  // polygons first, then segments, each in Gdb order
    std::vector<EntityKind> kinds;
    std::vector<Point> centers;
    std::map<Id, size_t> row;
    std::vector<Triple> triples;  // sorted, unique
    std::vector<std::vector<double>> features;
    std::vector<std::string> feature_names;
    std::array<std::vector<size_t>, kNumRelations> buckets;  // triple indices per relation

    size_t size() const { return entities.size(); }
    size_t index_of(const Id& id) const;
    std::vector<std::vector<size_t>> undirected_adjacency() const;
};

std::optional<RelationType> classify_grid_relation(const Point& e_center, const Point& u_center, double mu);

// Center used for grid placement: polygon centroid or polyline midpoint.
Point segment_center(const Segment& s);

KnowledgeGraph build_knowledge_graph(const Gdb& g, const GeoConfig& cfg);

// Finalizes a KG from raw triples: dedups, sorts, fills buckets.
void finalize_triples(KnowledgeGraph& kg, std::vector<Triple> triples);

std::set<Id> k_hop_neighbors(const KnowledgeGraph& kg, const Id& e, int k);
// Row-index form for every entity at once.
std::vector<std::vector<size_t>> k_hop_table(const KnowledgeGraph& kg, int k);

std::string kg_to_tsv(const KnowledgeGraph& kg);
nlohmann::json kg_sidecar(const KnowledgeGraph& kg);
KnowledgeGraph kg_from_files(const std::string& tsv, const nlohmann::json& sidecar);

}  // namespace conflate
