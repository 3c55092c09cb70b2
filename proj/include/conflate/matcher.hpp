#pragma once

#include <map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "conflate/geom.hpp"
#include "conflate/kgraph.hpp"

namespace conflate {

struct MatchConfig {
    double tau = 0.5;
    double threshold = 0.5;         // minimum accepted similarity
    double candidate_radius = -1;   // Mbr distance; negative means the grid width
    bool dense = false;             // score every same-kind pair
    bool prefilter = false;         // drop pairs below threshold before assignment
    void validate() const;
};

// Shape as compared by the area term: the polygon itself or the segment's buffer.
struct EntityShape {
    EntityKind kind;
    Region region;
    Mbr box;
};

EntityShape polygon_shape(const PolyEntity& p);
EntityShape segment_shape(const Segment& s, double lambda_buf);

// (1 + cos) / 2; zero vectors compare as orthogonal
double embedding_similarity(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b);
double pair_similarity(const EntityShape& s, const EntityShape& t, const Eigen::RowVectorXd& hs,
                       const Eigen::RowVectorXd& ht, double tau);

struct SimilarityTable {
    std::map<std::pair<Id, Id>, double> scores;
    double tau = 0.5;
    double radius = 0;
};

struct Assignment {
    std::vector<int> target_of;  // per source row, -1 when left on a dummy
    double total = 0;            // sum of similarities over assigned real pairs, in row order
};

// Min-cost perfect matching on an n x n cost matrix; returns the column of each row.
std::vector<int> hungarian(const Eigen::MatrixXd& cost);
// Maximizes total similarity of a rectangular ns x nt score matrix (weights 1 - sim, padded square).
Assignment assignment(const Eigen::MatrixXd& sim);

struct Match {
    Id source, target;
    double score;
};

struct MatchSet {
    std::vector<Match> pairs;  // sorted by source id
    double threshold = 0.5;
    std::vector<Id> unmatched_source, unmatched_target;
};

double mbr_distance(const Mbr& a, const Mbr& b);

SimilarityTable similarity_table(const Gdb& g_s, const Gdb& g_t, const KnowledgeGraph& kg_s,
                                 const KnowledgeGraph& kg_t, const Eigen::MatrixXd& emb_s,
                                 const Eigen::MatrixXd& emb_t, const GeoConfig& geo, const MatchConfig& cfg);

MatchSet match_entities(const Gdb& g_s, const Gdb& g_t, const KnowledgeGraph& kg_s, const KnowledgeGraph& kg_t,
                        const Eigen::MatrixXd& emb_s, const Eigen::MatrixXd& emb_t, const GeoConfig& geo,
                        const MatchConfig& cfg);
// Assignment over a precomputed table, split by kind as in the two bipartite graphs.
MatchSet match_from_table(const SimilarityTable& table, const Gdb& g_s, const Gdb& g_t, const MatchConfig& cfg);

std::string matches_csv(const MatchSet& m);
std::string ids_csv(const std::vector<Id>& ids, const char* header);
MatchSet matches_from_csv(const std::string& pairs_csv);

}  // namespace conflate
