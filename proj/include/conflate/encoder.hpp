#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "conflate/autodiff.hpp"
#include "conflate/kgraph.hpp"

namespace conflate {

using Eigen::MatrixXd;
using IndexPair = std::pair<int, int>;  // (source row, target row)

struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    double lr = 1e-3;
    int hidden_dim = 300;
    int layers = 2;
    int k = 2;
    double beta = 0.4;
    double alpha = 0.01;
    double margin = 1.0;
    int negatives_per_pair = 10;
    double dropout_rate = 0.2;
    int epochs = 200;
    std::uint64_t seed = 7;
    int mixer_dim = 64;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

// Weights by name: "l<i>.Ws", "l<i>.W", "l<i>.b", "l<i>.Wk", "l<i>.bk", "l<i>.Mc", "l<i>.M",
// "l<i>.Wg1", "l<i>.Wg2", "l<i>.bg", and the mixer's "mix.Wt1", "mix.Wt2", "mix.Wc1", "mix.Wc2", "mix.Wo", "mix.bo".
struct EncoderParams {
    int in_dim = 0;
    int hidden = 0;
    int layers = 0;
    int mixer_dim = 0;
    double dropout_rate = 0.0;
    std::map<std::string, MatrixXd> tensors;

    MatrixXd& operator[](const std::string& name) { return tensors.at(name); }
    const MatrixXd& operator[](const std::string& name) const { return tensors.at(name); }
    void validate() const;
};

EncoderParams init_params(int in_dim, const TrainConfig& cfg, std::mt19937_64& rng);

// Column layout of the model input: x, y, is_polygon, is_segment, then the named metadata columns.
struct FeatureScaler {
    double x_min = 0, x_max = 1, y_min = 0, y_max = 1;
    std::vector<std::string> names;
    std::vector<double> lo, hi;

    int dim() const { return 4 + static_cast<int>(names.size()); }
    nlohmann::json to_json() const;
    static FeatureScaler from_json(const nlohmann::json& j);
};

FeatureScaler fit_scaler(const std::vector<const KnowledgeGraph*>& kgs);
MatrixXd input_features(const KnowledgeGraph& kg, const FeatureScaler& sc);

struct TripleIndex {
    std::vector<int> head, rel, tail;
    size_t size() const { return head.size(); }
};

// Everything the forward pass needs about one graph, precomputed once.
struct GraphInputs {
    int n = 0;
    MatrixXd features;
    ad::SpMat adj;             // 1/sqrt(p_e p_e') on 1-hop edges
    MatrixXd deg;              // n x 1, |N(e)|
    std::vector<int> k_src, k_dst;
    MatrixXd k_norm;           // per k-hop edge, 1/sqrt(p^k_e p^k_e')
    MatrixXd k_deg;            // n x 1, |N_k(e)|
    TripleIndex triples;
};

GraphInputs prepare_graph(const KnowledgeGraph& kg, const FeatureScaler& sc, int k);
// Same as above from already-built input features and raw structure.
GraphInputs prepare_graph(const MatrixXd& features, const std::vector<std::vector<size_t>>& adjacency,
                          const std::vector<std::vector<size_t>>& k_hop, const TripleIndex& triples);

// Single-op views of the model; rng only matters in train mode.
MatrixXd gnn_layer_forward(const MatrixXd& h, const GraphInputs& g, int layer, const EncoderParams& p, bool train,
                           std::mt19937_64* rng = nullptr);
Eigen::VectorXd attention_weights(const MatrixXd& psi, int e, const std::vector<int>& neighbors, int layer,
                                  const EncoderParams& p);
MatrixXd multi_hop_layer_forward(const MatrixXd& psi, const GraphInputs& g, int layer, const EncoderParams& p,
                                 bool train, std::mt19937_64* rng = nullptr);
MatrixXd mixer_forward(const MatrixXd& F, const EncoderParams& p);
MatrixXd gate_combine(const MatrixXd& h, const MatrixXd& psi, const MatrixXd& phi, int layer, const EncoderParams& p);
MatrixXd final_embedding(const std::vector<MatrixXd>& blocks);

// Full model, eval mode.
MatrixXd encode(const EncoderParams& p, const GraphInputs& g);

std::map<int, Eigen::RowVectorXd> relation_encoding(const MatrixXd& emb, const TripleIndex& t);
double contrastive_loss(const MatrixXd& hs, const MatrixXd& ht, const std::vector<IndexPair>& pos,
                        const std::vector<IndexPair>& neg, double beta, double margin);
double semantic_loss(const MatrixXd& emb, const TripleIndex& t, const std::map<int, Eigen::RowVectorXd>& theta);
double total_loss(double contrast, double semantic, double alpha);

std::vector<IndexPair> sample_negatives(const std::vector<IndexPair>& pos, const std::vector<int>& pool_s,
                                        const std::vector<int>& pool_t, int n_per_pair, std::mt19937_64& rng);

struct LossTerms {
    double contrast = 0, semantic = 0, total = 0;
};

// Total loss on both graphs; the semantic term pools the triples of both graphs.
// Fills grads (same keys as p.tensors) when non-null.
LossTerms model_loss(const EncoderParams& p, const GraphInputs& s, const GraphInputs& t,
                     const std::vector<IndexPair>& pos, const std::vector<IndexPair>& neg, const TrainConfig& cfg,
                     bool train, std::mt19937_64* rng, std::map<std::string, MatrixXd>* grads);

struct EpochLog {
    int epoch;
    LossTerms loss;
};

struct TrainResult {
    EncoderParams params;
    FeatureScaler scaler;
    MatrixXd emb_s, emb_t;
    std::map<int, Eigen::RowVectorXd> theta;
    std::vector<EpochLog> log;
};

TrainResult train(const KnowledgeGraph& s, const KnowledgeGraph& t, const std::vector<std::pair<Id, Id>>& positives,
                  const TrainConfig& cfg);

std::string training_log_csv(const std::vector<EpochLog>& log);
nlohmann::json checkpoint_to_json(const EncoderParams& p, const TrainConfig& cfg, const FeatureScaler& sc);
void checkpoint_from_json(const nlohmann::json& j, EncoderParams& p, TrainConfig& cfg, FeatureScaler& sc);
nlohmann::json embeddings_to_json(const KnowledgeGraph& kg, const MatrixXd& emb);
MatrixXd embeddings_from_json(const nlohmann::json& j, const KnowledgeGraph& kg);

}  // namespace conflate
