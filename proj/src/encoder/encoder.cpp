#include "conflate/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace conflate {

using ad::Tape;
using ad::Var;

namespace {

constexpr double kAttentionSlope = 0.2;

std::string key(int layer, const char* name) { return "l" + std::to_string(layer) + "." + name; }

// Parameter handles living on one tape.
struct Bound {
    Tape& t;
    std::map<std::string, Var> v;
    Var operator()(const std::string& name) const { return v.at(name); }
    Var operator()(int layer, const char* name) const { return v.at(key(layer, name)); }
};

Bound bind(Tape& t, const EncoderParams& p, bool trainable) {
    Bound b{t, {}};
    for (const auto& [name, m] : p.tensors) b.v[name] = trainable ? t.param(m) : t.constant(m);
    return b;
}

Var dropout(Tape& t, Var x, double rate, bool train, std::mt19937_64* rng) {
    if (!train || rate <= 0) return x;
    if (!rng) throw std::invalid_argument("dropout in train mode needs an rng");
    std::bernoulli_distribution keep(1.0 - rate);
    const auto& v = t.value(x);
    MatrixXd mask(v.rows(), v.cols());
    for (Eigen::Index j = 0; j < mask.cols(); ++j)
        for (Eigen::Index i = 0; i < mask.rows(); ++i) mask(i, j) = keep(*rng) ? 1.0 / (1.0 - rate) : 0.0;
    return t.hadamard(x, t.constant(std::move(mask)));
}

Var gnn_var(const Bound& P, Var h, const GraphInputs& g, int l, double rate, bool train, std::mt19937_64* rng) {
    Tape& t = P.t;
    Var self = t.matmul(h, P(l, "Ws"));
    Var nbr = t.matmul(t.sparse_mm(g.adj, h), P(l, "W"));
    Var bias = t.matmul(t.constant(g.deg), P(l, "b"));
    return dropout(t, t.relu(t.add(t.add(self, nbr), bias)), rate, train, rng);
}

Var attention_var(const Bound& P, Var psi, const std::vector<int>& src, const std::vector<int>& dst, int n, int l) {
    Tape& t = P.t;
    Var c = t.gather_rows(t.matmul(psi, P(l, "Mc")), src);
    Var m = t.gather_rows(t.matmul(psi, P(l, "M")), dst);
    Var s = t.leaky_relu(t.row_sum(t.hadamard(c, m)), kAttentionSlope);
    return t.group_softmax(s, src, n);
}

Var multi_hop_var(const Bound& P, Var psi, const GraphInputs& g, int l, double rate, bool train,
                  std::mt19937_64* rng) {
    Tape& t = P.t;
    Var msg = psi;
    if (!g.k_src.empty()) {
        Var alpha = attention_var(P, psi, g.k_src, g.k_dst, g.n, l);
        Var w = t.hadamard(alpha, t.constant(g.k_norm));
        Var agg = t.scatter_add_rows(t.mul_col(t.gather_rows(psi, g.k_dst), w), g.k_src, g.n);
        msg = t.add(psi, agg);
    }
    Var z = t.add(t.matmul(msg, P(l, "Wk")), t.matmul(t.constant(g.k_deg), P(l, "bk")));
    return dropout(t, t.tanh(z), rate, train, rng);
}

Var mixer_var(const Bound& P, Var F) {
    Tape& t = P.t;
    Var tok = t.add(F, t.matmul(t.gelu(t.matmul(t.layernorm_rows(F), P("mix.Wt1"))), P("mix.Wt2")));
    Var ch = t.add(tok, t.matmul(t.gelu(t.matmul(t.layernorm_rows(tok), P("mix.Wc1"))), P("mix.Wc2")));
    return t.add_row(t.matmul(ch, P("mix.Wo")), P("mix.bo"));
}

Var gate_var(const Bound& P, Var h, Var psi, Var phi, int l) {
    Tape& t = P.t;
    Var fw = t.matmul(phi, P(l, "Wg2"));
    Var zeta = t.relu(t.add_row(t.add(t.matmul(psi, P(l, "Wg1")), fw), P(l, "bg")));
    Var eta = t.relu(t.add_row(t.add(t.matmul(h, P(l, "Wg1")), fw), P(l, "bg")));
    Var mixed = t.add(t.hadamard(zeta, h), t.hadamard(eta, psi));
    Var rest = t.sub(phi, t.scale(t.hadamard(t.add(zeta, eta), phi), 0.5));
    return t.add(mixed, rest);
}

Var forward_var(const Bound& P, const EncoderParams& p, const GraphInputs& g, bool train, std::mt19937_64* rng) {
    Tape& t = P.t;
    Var F = t.constant(g.features);
    Var phi = mixer_var(P, F);
    Var h = F, psi = F;
    std::vector<Var> blocks;
    for (int l = 0; l < p.layers; ++l) {
        h = gnn_var(P, h, g, l, p.dropout_rate, train, rng);
        psi = multi_hop_var(P, psi, g, l, p.dropout_rate, train, rng);
        blocks.push_back(t.row_normalize(gate_var(P, h, psi, phi, l)));
    }
    return t.concat_cols(blocks);
}

std::vector<int> firsts(const std::vector<IndexPair>& v) {
    std::vector<int> out;
    for (auto& [a, b] : v) out.push_back(a);
    return out;
}
std::vector<int> seconds(const std::vector<IndexPair>& v) {
    std::vector<int> out;
    for (auto& [a, b] : v) out.push_back(b);
    return out;
}

Var contrast_var(Tape& t, Var hs, Var ht, const std::vector<IndexPair>& pos, const std::vector<IndexPair>& neg,
                 double beta, double margin) {
    Var total = t.constant(MatrixXd::Zero(1, 1));
    if (!pos.empty())
        total = t.add(total, t.sum(t.row_l2(t.sub(t.gather_rows(hs, firsts(pos)), t.gather_rows(ht, seconds(pos))))));
    if (!neg.empty()) {
        Var d = t.row_l2(t.sub(t.gather_rows(hs, firsts(neg)), t.gather_rows(ht, seconds(neg))));
        total = t.add(total, t.scale(t.sum(t.relu(t.add_scalar(t.scale(d, -1.0), margin))), beta));
    }
    return total;
}

// Differences h_e - h_e' for every triple, the relation of each, and 1/|T_r| per relation.
struct SemParts {
    std::vector<int> rel;
    MatrixXd inv_count_rel;  // kNumRelations x 1
    MatrixXd inv_count_row;  // triples x 1
};

SemParts sem_parts(const std::vector<int>& rel) {
    SemParts s{rel, MatrixXd::Zero(kNumRelations, 1), MatrixXd(rel.size(), 1)};
    std::vector<int> cnt(kNumRelations, 0);
    for (int r : rel) ++cnt.at(r);
    for (int r = 0; r < kNumRelations; ++r) s.inv_count_rel(r, 0) = cnt[r] ? 1.0 / cnt[r] : 0.0;
    for (size_t i = 0; i < rel.size(); ++i) s.inv_count_row(i, 0) = 1.0 / cnt[rel[i]];
    return s;
}

Var theta_var(Tape& t, Var diffs, const SemParts& sp) {
    return t.mul_col(t.scatter_add_rows(diffs, sp.rel, kNumRelations), t.constant(sp.inv_count_rel));
}

Var semantic_var(Tape& t, Var diffs, const SemParts& sp) {
    if (sp.rel.empty()) return t.constant(MatrixXd::Zero(1, 1));
    Var dev = t.sub(diffs, t.gather_rows(theta_var(t, diffs, sp), sp.rel));
    return t.sum(t.mul_col(t.row_l2(dev), t.constant(sp.inv_count_row)));
}

Var triple_diffs(Tape& t, Var h, const TripleIndex& tr) {
    return t.sub(t.gather_rows(h, tr.head), t.gather_rows(h, tr.tail));
}

void check_finite(const MatrixXd& m, const std::string& what) {
    if (!m.allFinite()) throw std::invalid_argument(what + ": non-finite values");
}

void require_layer(const EncoderParams& p, int layer) {
    if (layer < 0 || layer >= p.layers) throw std::out_of_range("layer index out of range");
}

nlohmann::json matrix_to_json(const MatrixXd& m) {
    std::vector<double> data;
    data.reserve(m.size());
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
    return {{"shape", {m.rows(), m.cols()}}, {"data", data}};
}

MatrixXd matrix_from_json(const nlohmann::json& j) {
    auto r = j.at("shape").at(0).get<Eigen::Index>(), c = j.at("shape").at(1).get<Eigen::Index>();
    const auto& d = j.at("data");
    if (static_cast<Eigen::Index>(d.size()) != r * c) throw std::invalid_argument("tensor data length != shape product");
    MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index k = 0; k < c; ++k) m(i, k) = d[i * c + k].get<double>();
    return m;
}

std::vector<std::pair<std::string, std::pair<int, int>>> expected_shapes(const EncoderParams& p) {
    std::vector<std::pair<std::string, std::pair<int, int>>> s;
    const int H = p.hidden, m = p.mixer_dim, d0 = p.in_dim;
    for (int l = 0; l < p.layers; ++l) {
        int din = l == 0 ? d0 : H;
        s.push_back({key(l, "Ws"), {din, H}});
        s.push_back({key(l, "W"), {din, H}});
        s.push_back({key(l, "b"), {1, H}});
        s.push_back({key(l, "Wk"), {din, H}});
        s.push_back({key(l, "bk"), {1, H}});
        s.push_back({key(l, "Mc"), {din, H}});
        s.push_back({key(l, "M"), {din, H}});
        s.push_back({key(l, "Wg1"), {H, H}});
        s.push_back({key(l, "Wg2"), {H, H}});
        s.push_back({key(l, "bg"), {1, H}});
    }
    s.push_back({"mix.Wt1", {d0, m}});
    s.push_back({"mix.Wt2", {m, d0}});
    s.push_back({"mix.Wc1", {d0, m}});
    s.push_back({"mix.Wc2", {m, d0}});
    s.push_back({"mix.Wo", {d0, H}});
    s.push_back({"mix.bo", {1, H}});
    return s;
}

}  // namespace

void TrainConfig::validate() const {
    if (!(lr > 0)) throw std::invalid_argument("lr must be > 0");
    if (!(margin > 0)) throw std::invalid_argument("margin must be > 0");
    if (!(beta >= 0) || !(alpha >= 0)) throw std::invalid_argument("beta and alpha must be >= 0");
    if (negatives_per_pair < 1) throw std::invalid_argument("negatives_per_pair must be >= 1");
    if (hidden_dim < 1 || layers < 1 || k < 1 || mixer_dim < 1) throw std::invalid_argument("dimensions must be >= 1");
    if (!(dropout_rate >= 0 && dropout_rate < 1)) throw std::invalid_argument("dropout_rate must be in [0, 1)");
    if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
}

nlohmann::json TrainConfig::to_json() const {
    return {{"lr", lr},         {"hidden_dim", hidden_dim}, {"layers", layers},
            {"k", k},           {"beta", beta},             {"alpha", alpha},
            {"margin", margin}, {"negatives_per_pair", negatives_per_pair},
            {"dropout_rate", dropout_rate}, {"epochs", epochs}, {"seed", seed}, {"mixer_dim", mixer_dim}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.lr = j.value("lr", c.lr);
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.layers = j.value("layers", c.layers);
    c.k = j.value("k", c.k);
    c.beta = j.value("beta", c.beta);
    c.alpha = j.value("alpha", c.alpha);
    c.margin = j.value("margin", c.margin);
    c.negatives_per_pair = j.value("negatives_per_pair", c.negatives_per_pair);
    c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    c.mixer_dim = j.value("mixer_dim", c.mixer_dim);
    c.validate();
    return c;
}

void EncoderParams::validate() const {
    for (const auto& [name, shape] : expected_shapes(*this)) {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw std::invalid_argument("missing parameter " + name);
        if (it->second.rows() != shape.first || it->second.cols() != shape.second)
            throw std::invalid_argument("parameter " + name + " has the wrong shape");
        if (!it->second.allFinite()) throw std::invalid_argument("parameter " + name + " is not finite");
    }
    if (tensors.size() != expected_shapes(*this).size()) throw std::invalid_argument("unexpected parameters");
}

EncoderParams init_params(int in_dim, const TrainConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    EncoderParams p;
    p.in_dim = in_dim;
    p.hidden = cfg.hidden_dim;
    p.layers = cfg.layers;
    p.mixer_dim = cfg.mixer_dim;
    p.dropout_rate = cfg.dropout_rate;
    for (const auto& [name, shape] : expected_shapes(p)) {
        auto [r, c] = shape;
        if (r == 1) {
            p.tensors[name] = MatrixXd::Zero(r, c);
            continue;
        }
        double lim = std::sqrt(6.0 / (r + c));
        std::uniform_real_distribution<double> u(-lim, lim);
        MatrixXd m(r, c);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) m(i, j) = u(rng);
        p.tensors[name] = std::move(m);
    }
    return p;
}

nlohmann::json FeatureScaler::to_json() const {
    return {{"x_min", x_min}, {"x_max", x_max}, {"y_min", y_min}, {"y_max", y_max},
            {"names", names}, {"lo", lo},       {"hi", hi}};
}

FeatureScaler FeatureScaler::from_json(const nlohmann::json& j) {
    FeatureScaler s;
    s.x_min = j.at("x_min");
    s.x_max = j.at("x_max");
    s.y_min = j.at("y_min");
    s.y_max = j.at("y_max");
    s.names = j.at("names").get<std::vector<std::string>>();
    s.lo = j.at("lo").get<std::vector<double>>();
    s.hi = j.at("hi").get<std::vector<double>>();
    if (s.lo.size() != s.names.size() || s.hi.size() != s.names.size())
        throw std::invalid_argument("scaler: column count mismatch");
    return s;
}

FeatureScaler fit_scaler(const std::vector<const KnowledgeGraph*>& kgs) {
    FeatureScaler s;
    s.x_min = s.y_min = INFINITY;
    s.x_max = s.y_max = -INFINITY;
    for (auto* kg : kgs) {
        for (auto& c : kg->centers) {
            s.x_min = std::min(s.x_min, c.x);
            s.x_max = std::max(s.x_max, c.x);
            s.y_min = std::min(s.y_min, c.y);
            s.y_max = std::max(s.y_max, c.y);
        }
        for (auto& n : kg->feature_names)
            if (std::find(s.names.begin(), s.names.end(), n) == s.names.end()) s.names.push_back(n);
    }
    if (!std::isfinite(s.x_min)) s.x_min = s.y_min = 0, s.x_max = s.y_max = 1;
    s.lo.assign(s.names.size(), INFINITY);
    s.hi.assign(s.names.size(), -INFINITY);
    for (auto* kg : kgs)
        for (size_t j = 0; j < kg->feature_names.size(); ++j) {
            size_t col = std::find(s.names.begin(), s.names.end(), kg->feature_names[j]) - s.names.begin();
            for (auto& row : kg->features) {
                s.lo[col] = std::min(s.lo[col], row.at(j));
                s.hi[col] = std::max(s.hi[col], row.at(j));
            }
        }
    for (size_t c = 0; c < s.names.size(); ++c)
        if (!std::isfinite(s.lo[c])) s.lo[c] = 0, s.hi[c] = 0;
    return s;
}

MatrixXd input_features(const KnowledgeGraph& kg, const FeatureScaler& sc) {
    auto unit = [](double v, double lo, double hi) { return hi > lo ? (v - lo) / (hi - lo) : 0.0; };
    MatrixXd F = MatrixXd::Zero(static_cast<Eigen::Index>(kg.size()), sc.dim());
    std::vector<int> col_of(kg.feature_names.size(), -1);
    for (size_t j = 0; j < kg.feature_names.size(); ++j) {
        auto it = std::find(sc.names.begin(), sc.names.end(), kg.feature_names[j]);
        if (it != sc.names.end()) col_of[j] = static_cast<int>(it - sc.names.begin());
    }
    for (size_t i = 0; i < kg.size(); ++i) {
        F(i, 0) = unit(kg.centers[i].x, sc.x_min, sc.x_max);
        F(i, 1) = unit(kg.centers[i].y, sc.y_min, sc.y_max);
        F(i, kg.kinds[i] == EntityKind::Polygon ? 2 : 3) = 1.0;
        for (size_t j = 0; j < col_of.size(); ++j)
            if (col_of[j] >= 0) F(i, 4 + col_of[j]) = unit(kg.features[i].at(j), sc.lo[col_of[j]], sc.hi[col_of[j]]);
    }
    return F;
}

GraphInputs prepare_graph(const MatrixXd& features, const std::vector<std::vector<size_t>>& adjacency,
                          const std::vector<std::vector<size_t>>& k_hop, const TripleIndex& triples) {
    GraphInputs g;
    g.n = static_cast<int>(features.rows());
    if (adjacency.size() != static_cast<size_t>(g.n) || k_hop.size() != static_cast<size_t>(g.n))
        throw std::invalid_argument("prepare_graph: structure size != feature rows");
    check_finite(features, "input features");
    g.features = features;
    g.deg.resize(g.n, 1);
    g.k_deg.resize(g.n, 1);
    std::vector<Eigen::Triplet<double>> trip;
    for (int i = 0; i < g.n; ++i) {
        g.deg(i, 0) = static_cast<double>(adjacency[i].size());
        g.k_deg(i, 0) = static_cast<double>(k_hop[i].size());
    }
    for (int i = 0; i < g.n; ++i)
        for (size_t j : adjacency[i])
            trip.emplace_back(i, static_cast<int>(j), 1.0 / std::sqrt((g.deg(i, 0) + 1) * (g.deg(j, 0) + 1)));
    g.adj.resize(g.n, g.n);
    g.adj.setFromTriplets(trip.begin(), trip.end());
    std::vector<double> norms;
    for (int i = 0; i < g.n; ++i)
        for (size_t j : k_hop[i]) {
            g.k_src.push_back(i);
            g.k_dst.push_back(static_cast<int>(j));
            norms.push_back(1.0 / std::sqrt((g.k_deg(i, 0) + 1) * (g.k_deg(j, 0) + 1)));
        }
    g.k_norm = Eigen::Map<MatrixXd>(norms.data(), static_cast<Eigen::Index>(norms.size()), 1);
    g.triples = triples;
    return g;
}

GraphInputs prepare_graph(const KnowledgeGraph& kg, const FeatureScaler& sc, int k) {
    TripleIndex tr;
    for (auto& t : kg.triples) {
        tr.head.push_back(static_cast<int>(kg.index_of(t.head)));
        tr.rel.push_back(code(t.rel));
        tr.tail.push_back(static_cast<int>(kg.index_of(t.tail)));
    }
    return prepare_graph(input_features(kg, sc), kg.undirected_adjacency(), k_hop_table(kg, k), tr);
}

MatrixXd gnn_layer_forward(const MatrixXd& h, const GraphInputs& g, int layer, const EncoderParams& p, bool train,
                           std::mt19937_64* rng) {
    require_layer(p, layer);
    Tape t;
    auto P = bind(t, p, false);
    return t.value(gnn_var(P, t.constant(h), g, layer, p.dropout_rate, train, rng));
}

Eigen::VectorXd attention_weights(const MatrixXd& psi, int e, const std::vector<int>& neighbors, int layer,
                                  const EncoderParams& p) {
    require_layer(p, layer);
    if (neighbors.empty()) return {};
    Tape t;
    auto P = bind(t, p, false);
    std::vector<int> src(neighbors.size(), e);
    std::vector<int> group(neighbors.size(), 0);
    Var c = t.gather_rows(t.matmul(t.constant(psi), P(layer, "Mc")), src);
    Var m = t.gather_rows(t.matmul(t.constant(psi), P(layer, "M")), neighbors);
    Var s = t.leaky_relu(t.row_sum(t.hadamard(c, m)), kAttentionSlope);
    return t.value(t.group_softmax(s, group, 1)).col(0);
}

MatrixXd multi_hop_layer_forward(const MatrixXd& psi, const GraphInputs& g, int layer, const EncoderParams& p,
                                 bool train, std::mt19937_64* rng) {
    require_layer(p, layer);
    Tape t;
    auto P = bind(t, p, false);
    return t.value(multi_hop_var(P, t.constant(psi), g, layer, p.dropout_rate, train, rng));
}

MatrixXd mixer_forward(const MatrixXd& F, const EncoderParams& p) {
    Tape t;
    auto P = bind(t, p, false);
    return t.value(mixer_var(P, t.constant(F)));
}

MatrixXd gate_combine(const MatrixXd& h, const MatrixXd& psi, const MatrixXd& phi, int layer, const EncoderParams& p) {
    require_layer(p, layer);
    Tape t;
    auto P = bind(t, p, false);
    return t.value(gate_var(P, t.constant(h), t.constant(psi), t.constant(phi), layer));
}

MatrixXd final_embedding(const std::vector<MatrixXd>& blocks) {
    if (blocks.empty()) throw std::invalid_argument("final_embedding: no layers");
    Tape t;
    std::vector<Var> parts;
    for (auto& b : blocks) parts.push_back(t.row_normalize(t.constant(b)));
    return t.value(t.concat_cols(parts));
}

MatrixXd encode(const EncoderParams& p, const GraphInputs& g) {
    if (g.features.cols() != p.in_dim) throw std::invalid_argument("encode: feature dimension != model input");
    Tape t;
    auto P = bind(t, p, false);
    return t.value(forward_var(P, p, g, false, nullptr));
}

std::map<int, Eigen::RowVectorXd> relation_encoding(const MatrixXd& emb, const TripleIndex& tr) {
    std::map<int, Eigen::RowVectorXd> out;
    if (tr.size() == 0) return out;
    Tape t;
    auto sp = sem_parts(tr.rel);
    const MatrixXd& theta = t.value(theta_var(t, triple_diffs(t, t.constant(emb), tr), sp));
    for (int r = 0; r < kNumRelations; ++r)
        if (sp.inv_count_rel(r, 0) > 0) out[r] = theta.row(r);
    return out;
}

double contrastive_loss(const MatrixXd& hs, const MatrixXd& ht, const std::vector<IndexPair>& pos,
                        const std::vector<IndexPair>& neg, double beta, double margin) {
    Tape t;
    return t.value(contrast_var(t, t.constant(hs), t.constant(ht), pos, neg, beta, margin))(0, 0);
}

double semantic_loss(const MatrixXd& emb, const TripleIndex& tr, const std::map<int, Eigen::RowVectorXd>& theta) {
    std::vector<int> cnt(kNumRelations, 0);
    for (int r : tr.rel) ++cnt.at(r);
    double total = 0;
    for (size_t i = 0; i < tr.size(); ++i) {
        Eigen::RowVectorXd d = emb.row(tr.head[i]) - emb.row(tr.tail[i]) - theta.at(tr.rel[i]);
        total += d.norm() / cnt[tr.rel[i]];
    }
    return total;
}

double total_loss(double contrast, double semantic, double alpha) { return contrast + alpha * semantic; }

std::vector<IndexPair> sample_negatives(const std::vector<IndexPair>& pos, const std::vector<int>& pool_s,
                                        const std::vector<int>& pool_t, int n_per_pair, std::mt19937_64& rng) {
    if (pool_s.size() < 2 || pool_t.size() < 2) throw std::invalid_argument("sample_negatives: pools need >= 2 entities");
    std::vector<IndexPair> out;
    out.reserve(pos.size() * n_per_pair);
    std::uniform_int_distribution<size_t> side(0, 1);
    for (auto [s, t] : pos)
        for (int k = 0; k < n_per_pair; ++k) {
            bool replace_source = side(rng) == 0;
            const auto& pool = replace_source ? pool_s : pool_t;
            int orig = replace_source ? s : t;
            std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
            int c;
            do c = pool[pick(rng)];
            while (c == orig);
            out.push_back(replace_source ? IndexPair{c, t} : IndexPair{s, c});
        }
    return out;
}

LossTerms model_loss(const EncoderParams& p, const GraphInputs& s, const GraphInputs& t_in,
                     const std::vector<IndexPair>& pos, const std::vector<IndexPair>& neg, const TrainConfig& cfg,
                     bool train, std::mt19937_64* rng, std::map<std::string, MatrixXd>* grads) {
    Tape t;
    auto P = bind(t, p, grads != nullptr);
    Var hs = forward_var(P, p, s, train, rng);
    Var ht = forward_var(P, p, t_in, train, rng);
    Var lc = contrast_var(t, hs, ht, pos, neg, cfg.beta, cfg.margin);

    std::vector<Var> diffs;
    std::vector<int> rel;
    if (s.triples.size()) diffs.push_back(triple_diffs(t, hs, s.triples));
    if (t_in.triples.size()) diffs.push_back(triple_diffs(t, ht, t_in.triples));
    rel.insert(rel.end(), s.triples.rel.begin(), s.triples.rel.end());
    rel.insert(rel.end(), t_in.triples.rel.begin(), t_in.triples.rel.end());
    Var ls = diffs.empty() ? t.constant(MatrixXd::Zero(1, 1)) : semantic_var(t, t.concat_rows(diffs), sem_parts(rel));
    Var total = t.add(lc, t.scale(ls, cfg.alpha));

    LossTerms out{t.value(lc)(0, 0), t.value(ls)(0, 0), t.value(total)(0, 0)};
    if (!std::isfinite(out.total)) throw DivergenceError("loss is not finite");
    if (grads) {
        t.backward(total);
        grads->clear();
        for (const auto& [name, v] : P.v) {
            const auto& gr = t.grad(v);
            (*grads)[name] = gr.size() ? gr : MatrixXd::Zero(p[name].rows(), p[name].cols());
        }
    }
    return out;
}

TrainResult train(const KnowledgeGraph& s, const KnowledgeGraph& t, const std::vector<std::pair<Id, Id>>& positives,
                  const TrainConfig& cfg) {
    cfg.validate();
    if (positives.empty()) throw std::invalid_argument("train: no aligned pairs");
    TrainResult res;
    res.scaler = fit_scaler({&s, &t});
    auto gs = prepare_graph(s, res.scaler, cfg.k);
    auto gt = prepare_graph(t, res.scaler, cfg.k);
    std::vector<IndexPair> pos;
    for (auto& [a, b] : positives) pos.push_back({static_cast<int>(s.index_of(a)), static_cast<int>(t.index_of(b))});
    std::vector<int> pool_s(s.size()), pool_t(t.size());
    for (size_t i = 0; i < s.size(); ++i) pool_s[i] = static_cast<int>(i);
    for (size_t i = 0; i < t.size(); ++i) pool_t[i] = static_cast<int>(i);

    std::mt19937_64 rng(cfg.seed);
    res.params = init_params(res.scaler.dim(), cfg, rng);
    auto& P = res.params;

    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    std::map<std::string, MatrixXd> m1, m2, grads;
    for (auto& [name, w] : P.tensors) {
        m1[name] = MatrixXd::Zero(w.rows(), w.cols());
        m2[name] = MatrixXd::Zero(w.rows(), w.cols());
    }
    for (int ep = 0; ep < cfg.epochs; ++ep) {
        auto neg = sample_negatives(pos, pool_s, pool_t, cfg.negatives_per_pair, rng);
        LossTerms lt;
        try {
            lt = model_loss(P, gs, gt, pos, neg, cfg, true, &rng, &grads);
        } catch (const DivergenceError& e) {
            throw DivergenceError("epoch " + std::to_string(ep) + ": " + e.what());
        } catch (const std::domain_error& e) {
            throw DivergenceError("epoch " + std::to_string(ep) + ": " + e.what());
        }
        res.log.push_back({ep, lt});
        double c1 = 1 - std::pow(b1, ep + 1), c2 = 1 - std::pow(b2, ep + 1);
        for (auto& [name, w] : P.tensors) {
            const auto& gr = grads.at(name);
            m1[name] = b1 * m1[name] + (1 - b1) * gr;
            m2[name] = b2 * m2[name] + (1 - b2) * gr.cwiseProduct(gr);
            w.array() -= cfg.lr * (m1[name].array() / c1) / ((m2[name].array() / c2).sqrt() + eps);
            if (!w.allFinite()) throw DivergenceError("epoch " + std::to_string(ep) + ": weight " + name + " is not finite");
        }
    }
    res.emb_s = encode(P, gs);
    res.emb_t = encode(P, gt);
    MatrixXd both(res.emb_s.rows() + res.emb_t.rows(), res.emb_s.cols());
    both << res.emb_s, res.emb_t;
    TripleIndex pooled = gs.triples;
    for (size_t i = 0; i < gt.triples.size(); ++i) {
        pooled.head.push_back(gt.triples.head[i] + gs.n);
        pooled.rel.push_back(gt.triples.rel[i]);
        pooled.tail.push_back(gt.triples.tail[i] + gs.n);
    }
    res.theta = relation_encoding(both, pooled);
    return res;
}

std::string training_log_csv(const std::vector<EpochLog>& log) {
    std::ostringstream os;
    os << std::setprecision(17) << "epoch,L_contrast,L_semantics,L\n";
    for (auto& e : log) os << e.epoch << ',' << e.loss.contrast << ',' << e.loss.semantic << ',' << e.loss.total << '\n';
    return os.str();
}

nlohmann::json checkpoint_to_json(const EncoderParams& p, const TrainConfig& cfg, const FeatureScaler& sc) {
    nlohmann::json params = nlohmann::json::object();
    for (auto& [name, m] : p.tensors) params[name] = matrix_to_json(m);
    return {{"format", "conflate-encoder/1"},
            {"config", cfg.to_json()},
            {"in_dim", p.in_dim},
            {"hidden", p.hidden},
            {"layers", p.layers},
            {"mixer_dim", p.mixer_dim},
            {"dropout_rate", p.dropout_rate},
            {"scaler", sc.to_json()},
            {"params", params}};
}

void checkpoint_from_json(const nlohmann::json& j, EncoderParams& p, TrainConfig& cfg, FeatureScaler& sc) {
    if (j.value("format", "") != "conflate-encoder/1") throw std::invalid_argument("not an encoder checkpoint");
    cfg = TrainConfig::from_json(j.at("config"));
    sc = FeatureScaler::from_json(j.at("scaler"));
    p = {};
    p.in_dim = j.at("in_dim");
    p.hidden = j.at("hidden");
    p.layers = j.at("layers");
    p.mixer_dim = j.at("mixer_dim");
    p.dropout_rate = j.at("dropout_rate");
    for (auto& [name, v] : j.at("params").items()) p.tensors[name] = matrix_from_json(v);
    p.validate();
    if (p.in_dim != sc.dim()) throw std::invalid_argument("checkpoint: scaler and model input disagree");
}

nlohmann::json embeddings_to_json(const KnowledgeGraph& kg, const MatrixXd& emb) {
    if (static_cast<size_t>(emb.rows()) != kg.size()) throw std::invalid_argument("embedding rows != entities");
    nlohmann::json rows = nlohmann::json::object();
    for (size_t i = 0; i < kg.size(); ++i) {
        std::vector<double> v(emb.cols());
        for (Eigen::Index c = 0; c < emb.cols(); ++c) v[c] = emb(i, c);
        rows[kg.entities[i]] = v;
    }
    return {{"dim", emb.cols()}, {"embeddings", rows}};
}

MatrixXd embeddings_from_json(const nlohmann::json& j, const KnowledgeGraph& kg) {
    auto d = j.at("dim").get<Eigen::Index>();
    const auto& rows = j.at("embeddings");
    MatrixXd emb(static_cast<Eigen::Index>(kg.size()), d);
    for (size_t i = 0; i < kg.size(); ++i) {
        auto v = rows.at(kg.entities[i]).get<std::vector<double>>();
        if (static_cast<Eigen::Index>(v.size()) != d) throw std::invalid_argument("embedding length != dim");
        for (Eigen::Index c = 0; c < d; ++c) emb(i, c) = v[c];
    }
    return emb;
}

}  // namespace conflate
