#include <doctest.h>

#include <cmath>
#include <random>

#include "conflate/encoder.hpp"
#include "oracles.hpp"

using namespace conflate;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

namespace {

MatrixXd rnd(int r, int c, std::mt19937_64& rng, double s = 1.0) {
    std::normal_distribution<double> n(0, s);
    MatrixXd m(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) m(i, j) = n(rng);
    return m;
}

EncoderParams random_params(int in_dim, int hidden, int layers, int mixer, std::mt19937_64& rng, double s = 0.5) {
    TrainConfig cfg;
    cfg.hidden_dim = hidden;
    cfg.layers = layers;
    cfg.mixer_dim = mixer;
    cfg.dropout_rate = 0;
    auto p = init_params(in_dim, cfg, rng);
    for (auto& [name, m] : p.tensors) m = rnd(m.rows(), m.cols(), rng, s);
    return p;
}

GraphInputs path3(const MatrixXd& F) {
    return prepare_graph(F, {{1}, {0, 2}, {1}}, {{2}, {}, {0}}, {});
}

double relu(double x) { return x > 0 ? x : 0; }
double leaky(double x) { return x > 0 ? x : 0.2 * x; }
double gelu(double x) { return 0.5 * x * (1 + std::erf(x / std::sqrt(2.0))); }

RowVectorXd layer_norm(const RowVectorXd& v) {
    double m = v.mean();
    double var = (v.array() - m).square().mean();
    return (v.array() - m) / std::sqrt(var + 1e-5);
}

// dense oracle for the Dropout-free 1-hop layer
MatrixXd gnn_oracle(const MatrixXd& h, const std::vector<std::vector<int>>& adj, const EncoderParams& p, int l) {
    std::string k = "l" + std::to_string(l) + ".";
    MatrixXd out(h.rows(), p[k + "Ws"].cols());
    for (int e = 0; e < h.rows(); ++e) {
        RowVectorXd acc = h.row(e) * p[k + "Ws"];
        double pe = adj[e].size() + 1.0;
        for (int j : adj[e]) acc += h.row(j) / std::sqrt(pe * (adj[j].size() + 1.0)) * p[k + "W"] + p[k + "b"];
        out.row(e) = acc.unaryExpr(&relu);
    }
    return out;
}

MatrixXd multi_hop_oracle(const MatrixXd& psi, const std::vector<std::vector<int>>& nk, const EncoderParams& p, int l) {
    std::string k = "l" + std::to_string(l) + ".";
    MatrixXd out(psi.rows(), p[k + "Wk"].cols());
    for (int e = 0; e < psi.rows(); ++e) {
        std::vector<double> sc;
        for (int j : nk[e]) sc.push_back(leaky((psi.row(e) * p[k + "Mc"]).dot(psi.row(j) * p[k + "M"])));
        double z = 0;
        for (double s : sc) z += std::exp(s);
        RowVectorXd acc = psi.row(e) * p[k + "Wk"];
        double pe = nk[e].size() + 1.0;
        for (size_t i = 0; i < nk[e].size(); ++i) {
            int j = nk[e][i];
            acc += std::exp(sc[i]) / z * psi.row(j) / std::sqrt(pe * (nk[j].size() + 1.0)) * p[k + "Wk"] + p[k + "bk"];
        }
        out.row(e) = acc.array().tanh();
    }
    return out;
}

PolyEntity rect(const Id& id, double cx, double cy, double w, double h) {
    return make_polygon(id, {{cx - w / 2, cy - h / 2}, {cx + w / 2, cy - h / 2}, {cx + w / 2, cy + h / 2}, {cx - w / 2, cy + h / 2}});
}

Gdb small_gdb(double jitter, std::mt19937_64& rng, int n_poly) {
    std::normal_distribution<double> j(0, jitter);
    Gdb g;
    g.feature_names = {"height"};
    for (int i = 0; i < n_poly; ++i) {
        double cx = 10.0 * (i % 4) + j(rng), cy = 10.0 * (i / 4) + j(rng);
        g.entities.push_back(rect("p" + std::to_string(i), cx, cy, 4, 3 + (i % 3)));
        g.features["p" + std::to_string(i)] = {static_cast<double>(3 + i % 5)};
    }
    g.segments.push_back({"s0", {{-5, -5}, {35, -5}}, "w0"});
    g.features["s0"] = {0.0};
    return g;
}

double rel_err(const MatrixXd& a, const MatrixXd& b) {
    double d = (a - b).norm(), s = std::max(a.norm(), b.norm());
    return s < 1e-12 ? d : d / s;
}

}  // namespace

TEST_CASE("1-hop layer") {
    std::mt19937_64 rng(1);
    SUBCASE("isolated node passes ReLU(h) through an identity self weight") {
        auto p = random_params(3, 3, 1, 2, rng);
        p["l0.Ws"] = MatrixXd::Identity(3, 3);
        MatrixXd h(1, 3);
        h << 1.5, -2.0, 0.25;
        auto g = prepare_graph(h, {{}}, {{}}, {});
        MatrixXd out = gnn_layer_forward(h, g, 0, p, false);
        CHECK(out(0, 0) == 1.5);
        CHECK(out(0, 1) == 0.0);
        CHECK(out(0, 2) == 0.25);
    }
    SUBCASE("zero weights give zero output") {
        auto p = random_params(4, 5, 1, 2, rng);
        for (auto& [n, m] : p.tensors) m.setZero();
        MatrixXd h = rnd(3, 4, rng);
        CHECK(gnn_layer_forward(h, path3(h), 0, p, false).isZero(0));
    }
    SUBCASE("3-node path equals the dense oracle") {
        auto p = random_params(4, 5, 2, 3, rng);
        MatrixXd h = rnd(3, 4, rng);
        MatrixXd out = gnn_layer_forward(h, path3(h), 0, p, false);
        CHECK(rel_err(out, gnn_oracle(h, {{1}, {0, 2}, {1}}, p, 0)) < 1e-13);
        MatrixXd h1 = rnd(3, 5, rng);
        CHECK(rel_err(gnn_layer_forward(h1, path3(h), 1, p, false), gnn_oracle(h1, {{1}, {0, 2}, {1}}, p, 1)) < 1e-13);
    }
    SUBCASE("dropout only in train mode") {
        auto p = random_params(4, 50, 1, 3, rng);
        p.dropout_rate = 0.5;
        MatrixXd h = rnd(3, 4, rng);
        MatrixXd ev = gnn_layer_forward(h, path3(h), 0, p, false);
        std::mt19937_64 d(3);
        MatrixXd tr = gnn_layer_forward(h, path3(h), 0, p, true, &d);
        int dropped = 0, scaled = 0;
        for (int i = 0; i < ev.size(); ++i) {
            if (ev(i) == 0) continue;
            if (tr(i) == 0) ++dropped;
            else if (std::abs(tr(i) - 2 * ev(i)) < 1e-12) ++scaled;
        }
        CHECK(dropped > 0);
        CHECK(scaled > 0);
        CHECK(dropped + scaled == (ev.array() != 0).count());
    }
}

TEST_CASE("attention weights") {
    std::mt19937_64 rng(2);
    auto p = random_params(3, 4, 1, 2, rng);
    SUBCASE("identical neighbors split evenly") {
        MatrixXd psi(3, 3);
        psi << 1, 2, 3, 0.5, -1, 2, 0.5, -1, 2;
        auto w = attention_weights(psi, 0, {1, 2}, 0, p);
        CHECK(w(0) == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(w(1) == doctest::Approx(0.5).epsilon(1e-15));
    }
    SUBCASE("single neighbor") {
        MatrixXd psi = rnd(2, 3, rng);
        auto w = attention_weights(psi, 0, {1}, 0, p);
        REQUIRE(w.size() == 1);
        CHECK(w(0) == 1.0);
    }
    SUBCASE("empty neighborhood") { CHECK(attention_weights(rnd(2, 3, rng), 0, {}, 0, p).size() == 0); }
    SUBCASE("four random neighbors match the softmax oracle") {
        for (int trial = 0; trial < 20; ++trial) {
            MatrixXd psi = rnd(5, 3, rng);
            auto w = attention_weights(psi, 0, {1, 2, 3, 4}, 0, p);
            std::vector<double> s;
            double z = 0;
            for (int j = 1; j <= 4; ++j) {
                s.push_back(std::exp(leaky((psi.row(0) * p["l0.Mc"]).dot(psi.row(j) * p["l0.M"]))));
                z += s.back();
            }
            for (int j = 0; j < 4; ++j) CHECK(w(j) == doctest::Approx(s[j] / z).epsilon(1e-12));
            CHECK(std::abs(w.sum() - 1.0) <= 1e-12);
            CHECK((w.array() >= 0).all());
        }
    }
}

TEST_CASE("multi-hop layer") {
    std::mt19937_64 rng(3);
    auto p = random_params(4, 5, 2, 3, rng);
    SUBCASE("no k-hop neighbors") {
        MatrixXd psi = rnd(2, 4, rng);
        auto g = prepare_graph(psi, {{1}, {0}}, {{}, {}}, {});
        MatrixXd want = (psi * p["l0.Wk"]).array().tanh();
        CHECK(rel_err(multi_hop_layer_forward(psi, g, 0, p, false), want) < 1e-14);
    }
    SUBCASE("zero weights") {
        auto z = p;
        for (auto& [n, m] : z.tensors) m.setZero();
        MatrixXd psi = rnd(3, 4, rng);
        CHECK(multi_hop_layer_forward(psi, path3(psi), 0, z, false).isZero(0));
    }
    SUBCASE("path graph equals the dense oracle") {
        MatrixXd psi = rnd(3, 4, rng);
        CHECK(rel_err(multi_hop_layer_forward(psi, path3(psi), 0, p, false), multi_hop_oracle(psi, {{2}, {}, {0}}, p, 0)) < 1e-13);
        // denser: five nodes, every node two-hop linked to several
        MatrixXd q = rnd(5, 4, rng);
        std::vector<std::vector<size_t>> adj{{1}, {0, 2}, {1, 3}, {2, 4}, {3}};
        std::vector<std::vector<size_t>> k2{{2}, {3}, {0, 4}, {1}, {2}};
        std::vector<std::vector<int>> k2i{{2}, {3}, {0, 4}, {1}, {2}};
        auto g = prepare_graph(q, adj, k2, {});
        CHECK(rel_err(multi_hop_layer_forward(q, g, 0, p, false), multi_hop_oracle(q, k2i, p, 0)) < 1e-13);
    }
}

TEST_CASE("mixer") {
    std::mt19937_64 rng(4);
    SUBCASE("zero mixing weights and identity output give back the input") {
        auto p = random_params(4, 4, 1, 3, rng);
        for (auto n : {"mix.Wt1", "mix.Wt2", "mix.Wc1", "mix.Wc2", "mix.bo"}) p[n].setZero();
        p["mix.Wo"] = MatrixXd::Identity(4, 4);
        MatrixXd F = rnd(6, 4, rng);
        CHECK(mixer_forward(F, p) == F);
    }
    SUBCASE("single entity equals hand computation") {
        auto p = random_params(4, 6, 1, 3, rng);
        MatrixXd F = rnd(1, 4, rng);
        RowVectorXd f = F.row(0);
        RowVectorXd tok = f + (layer_norm(f) * p["mix.Wt1"]).unaryExpr(&gelu) * p["mix.Wt2"];
        RowVectorXd ch = tok + (layer_norm(tok) * p["mix.Wc1"]).unaryExpr(&gelu) * p["mix.Wc2"];
        RowVectorXd want = ch * p["mix.Wo"] + p["mix.bo"];
        CHECK(rel_err(mixer_forward(F, p), want) < 1e-13);
    }
    SUBCASE("layer norm of a constant row is zero") {
        ad::Tape t;
        auto y = t.layernorm_rows(t.constant(MatrixXd::Constant(2, 5, 3.7)));
        CHECK(t.value(y).isZero(0));
    }
}

TEST_CASE("gate") {
    std::mt19937_64 rng(5);
    auto p = random_params(3, 3, 1, 2, rng);
    MatrixXd phi = rnd(4, 3, rng);
    SUBCASE("zeta 1 and eta 0") {
        p["l0.Wg1"] = MatrixXd::Identity(3, 3);
        p["l0.Wg2"].setZero();
        p["l0.bg"].setZero();
        MatrixXd psi = MatrixXd::Ones(4, 3), h = -MatrixXd::Ones(4, 3);
        CHECK(rel_err(gate_combine(h, psi, phi, 0, p), h + 0.5 * phi) < 1e-15);
    }
    SUBCASE("zeta and eta both 1") {
        p["l0.Wg1"].setZero();
        p["l0.Wg2"].setZero();
        p["l0.bg"].setOnes();
        MatrixXd h = rnd(4, 3, rng), psi = rnd(4, 3, rng);
        CHECK(rel_err(gate_combine(h, psi, phi, 0, p), h + psi) < 1e-15);
    }
    SUBCASE("random inputs match the scalar oracle") {
        MatrixXd h = rnd(4, 3, rng), psi = rnd(4, 3, rng);
        MatrixXd got = gate_combine(h, psi, phi, 0, p);
        const auto &W1 = p["l0.Wg1"], &W2 = p["l0.Wg2"], &b = p["l0.bg"];
        for (int e = 0; e < 4; ++e)
            for (int c = 0; c < 3; ++c) {
                double zs = b(0, c), es = b(0, c);
                for (int k = 0; k < 3; ++k) {
                    zs += psi(e, k) * W1(k, c) + phi(e, k) * W2(k, c);
                    es += h(e, k) * W1(k, c) + phi(e, k) * W2(k, c);
                }
                double z = relu(zs), n = relu(es);
                double want = z * h(e, c) + n * psi(e, c) + (1 - (z + n) / 2) * phi(e, c);
                CHECK(got(e, c) == doctest::Approx(want).epsilon(1e-13));
            }
    }
}

TEST_CASE("final embedding") {
    MatrixXd u(1, 2);
    u << 3, 4;
    MatrixXd e = final_embedding({u});
    CHECK(e(0, 0) == doctest::Approx(0.6));
    CHECK(e(0, 1) == doctest::Approx(0.8));
    MatrixXd e2 = final_embedding({u, u});
    CHECK(e2.cols() == 4);
    CHECK(e2.leftCols(2) == e2.rightCols(2));
    std::mt19937_64 rng(6);
    MatrixXd a = rnd(7, 5, rng), b = rnd(7, 5, rng), c = rnd(7, 5, rng);
    MatrixXd f = final_embedding({a, b, c});
    CHECK(f.cols() == 15);
    for (int i = 0; i < 7; ++i)
        for (int l = 0; l < 3; ++l) CHECK(std::abs(f.row(i).segment(5 * l, 5).norm() - 1.0) <= 1e-9);
    CHECK_THROWS_AS(final_embedding({MatrixXd::Zero(1, 3)}), std::domain_error);
}

TEST_CASE("relation encoding and semantic loss") {
    std::mt19937_64 rng(7);
    MatrixXd h = rnd(6, 4, rng);
    SUBCASE("single triple") {
        TripleIndex t{{0}, {2}, {1}};
        auto th = relation_encoding(h, t);
        REQUIRE(th.size() == 1);
        CHECK(rel_err(th.at(2), h.row(0) - h.row(1)) < 1e-15);
        CHECK(semantic_loss(h, t, th) == 0.0);
    }
    SUBCASE("opposite differences cancel") {
        TripleIndex t{{0, 1}, {4, 4}, {1, 0}};
        CHECK(relation_encoding(h, t).at(4).isZero(0));
    }
    SUBCASE("equal differences give zero loss") {
        MatrixXd g(4, 2);
        g << 0, 0, 1, 1, 5, 5, 6, 6;
        TripleIndex t{{1, 3}, {0, 0}, {0, 2}};
        CHECK(semantic_loss(g, t, relation_encoding(g, t)) == doctest::Approx(0.0));
    }
    SUBCASE("random triples match the oracle mean and loss") {
        TripleIndex t{{0, 1, 2, 3, 4}, {1, 1, 3, 1, 3}, {5, 0, 4, 2, 1}};
        auto th = relation_encoding(h, t);
        RowVectorXd m1 = ((h.row(0) - h.row(5)) + (h.row(1) - h.row(0)) + (h.row(3) - h.row(2))) / 3;
        RowVectorXd m3 = ((h.row(2) - h.row(4)) + (h.row(4) - h.row(1))) / 2;
        CHECK(rel_err(th.at(1), m1) < 1e-14);
        CHECK(rel_err(th.at(3), m3) < 1e-14);
        CHECK(!th.count(0));
        double want = ((h.row(0) - h.row(5) - m1).norm() + (h.row(1) - h.row(0) - m1).norm() +
                       (h.row(3) - h.row(2) - m1).norm()) / 3 +
                      ((h.row(2) - h.row(4) - m3).norm() + (h.row(4) - h.row(1) - m3).norm()) / 2;
        CHECK(semantic_loss(h, t, th) == doctest::Approx(want).epsilon(1e-13));
    }
}

TEST_CASE("contrastive and total loss") {
    MatrixXd hs(2, 2), ht(2, 2);
    hs << 1, 0, 0, 1;
    ht << 1, 0, 0, -1;
    // identical positive; negative at distance 2 with margin 1.5
    CHECK(contrastive_loss(hs, ht, {{0, 0}}, {{1, 1}}, 0.3, 1.5) == 0.0);
    // negative at distance 0
    CHECK(contrastive_loss(hs, ht, {{0, 0}}, {{0, 0}}, 0.3, 1.5) == doctest::Approx(0.45));
    std::mt19937_64 rng(8);
    MatrixXd a = rnd(5, 3, rng), b = rnd(6, 3, rng);
    std::vector<IndexPair> pos{{0, 1}, {2, 2}, {4, 5}}, neg{{1, 1}, {0, 3}, {3, 0}, {2, 4}};
    double want = 0;
    for (auto [i, j] : pos) want += (a.row(i) - b.row(j)).norm();
    for (auto [i, j] : neg) want += 0.2 * std::max(0.0, 2.5 - (a.row(i) - b.row(j)).norm());
    double c = contrastive_loss(a, b, pos, neg, 0.2, 2.5);
    CHECK(c == doctest::Approx(want).epsilon(1e-13));
    CHECK(total_loss(c, 7.0, 0.0) == c);
    CHECK(total_loss(c, 7.0, 0.1) == doctest::Approx(c + 0.7));
    CHECK(total_loss(2 * c, 14.0, 0.1) == doctest::Approx(2 * total_loss(c, 7.0, 0.1)));
}

TEST_CASE("negative sampling") {
    std::vector<IndexPair> pos{{0, 0}, {1, 1}, {2, 2}, {3, 3}, {4, 4}};
    std::vector<int> pool{0, 1, 2, 3, 4, 5};
    std::mt19937_64 r1(9), r2(9);
    auto n1 = sample_negatives(pos, pool, pool, 10, r1);
    CHECK(n1.size() == 50);
    CHECK(n1 == sample_negatives(pos, pool, pool, 10, r2));
    int src_side = 0;
    for (size_t i = 0; i < n1.size(); ++i) {
        auto [s, t] = pos[i / 10];
        auto [a, b] = n1[i];
        CHECK(((a == s) != (b == t)));
        src_side += a != s;
    }
    CHECK(src_side > 10);
    CHECK(src_side < 40);
    std::mt19937_64 r3(1);
    for (auto [a, b] : sample_negatives({{0, 1}}, {0, 1}, {0, 1}, 20, r3)) CHECK(((a == 1 && b == 1) || (a == 0 && b == 0)));
}

TEST_CASE("gradient matches central differences on a 6-entity pair") {
    std::mt19937_64 rng(1);
    GeoConfig geo;
    geo.mu = 25;
    CHECK(build_knowledge_graph(oracle::six_entity_gdb(0.8, rng), geo).size() == 6);
    auto checks = oracle::gradient_check(10);
    CHECK(checks.size() > 10);
    for (const auto& c : checks) {
        INFO(c.tensor);
        CHECK(c.numeric_norm > 0);
        CHECK(c.rel_err < 1e-4);
    }
}

TEST_CASE("identical graphs give identical embeddings") {
    std::mt19937_64 rng(11);
    GeoConfig geo;
    geo.mu = 25;
    auto g = small_gdb(0.0, rng, 12);
    auto kg = build_knowledge_graph(g, geo);
    auto sc = fit_scaler({&kg, &kg});
    auto in = prepare_graph(kg, sc, 2);
    for (int trial = 0; trial < 3; ++trial) {
        auto p = random_params(sc.dim(), 8, 2, 4, rng);
        MatrixXd a = encode(p, in), b = encode(p, in);
        CHECK(a == b);
        std::vector<IndexPair> pos;
        for (int i = 0; i < in.n; ++i) pos.push_back({i, i});
        CHECK(contrastive_loss(a, b, pos, {}, 0.1, 1.0) == 0.0);
        for (int i = 0; i < a.rows(); ++i)
            for (int l = 0; l < 2; ++l) CHECK(std::abs(a.row(i).segment(8 * l, 8).norm() - 1.0) <= 1e-9);
    }
}

TEST_CASE("training") {
    GeoConfig geo;
    geo.mu = 25;
    geo.lambda_buf = 6;
    TrainConfig cfg;
    cfg.hidden_dim = 16;
    cfg.mixer_dim = 8;
    cfg.epochs = 60;
    cfg.lr = 0.01;
    cfg.seed = 3;
    SUBCASE("copy pair aligns every entity to its copy") {
        std::mt19937_64 rng(12);
        auto kg = build_knowledge_graph(small_gdb(0.0, rng, 16), geo);
        std::vector<std::pair<Id, Id>> pos;
        for (size_t i = 0; i < kg.size(); i += 3) pos.push_back({kg.entities[i], kg.entities[i]});
        auto res = train(kg, kg, pos, cfg);
        CHECK(res.emb_s == res.emb_t);
        int hits = 0;
        for (int i = 0; i < res.emb_s.rows(); ++i) {
            Eigen::Index best;
            (res.emb_t.rowwise() - res.emb_s.row(i)).rowwise().squaredNorm().minCoeff(&best);
            hits += best == i;
        }
        CHECK(hits == res.emb_s.rows());
    }
    SUBCASE("loss decreases on a mildly noisy pair") {
        std::mt19937_64 rng(13);
        auto ks = build_knowledge_graph(small_gdb(0.0, rng, 19), geo);
        auto kt = build_knowledge_graph(small_gdb(0.5, rng, 19), geo);
        REQUIRE(ks.size() == 20);
        std::vector<std::pair<Id, Id>> pos;
        for (size_t i = 0; i < ks.size(); i += 2) pos.push_back({ks.entities[i], ks.entities[i]});
        auto res = train(ks, kt, pos, cfg);
        REQUIRE(res.log.size() == 60);
        CHECK(res.log[50].loss.total < res.log[0].loss.total);
        CHECK(res.log[0].loss.total == doctest::Approx(res.log[0].loss.contrast + cfg.alpha * res.log[0].loss.semantic));
        MESSAGE("loss " << res.log[0].loss.total << " -> " << res.log[50].loss.total);
        // checkpoint round trip reproduces the embeddings
        auto j = checkpoint_to_json(res.params, cfg, res.scaler);
        EncoderParams p2;
        TrainConfig c2;
        FeatureScaler s2;
        checkpoint_from_json(nlohmann::json::parse(j.dump()), p2, c2, s2);
        CHECK(encode(p2, prepare_graph(ks, s2, c2.k)) == res.emb_s);
        CHECK(training_log_csv(res.log).rfind("epoch,L_contrast,L_semantics,L\n0,", 0) == 0);
        // deterministic under the seed
        CHECK(train(ks, kt, pos, cfg).emb_t == res.emb_t);
    }
    SUBCASE("a runaway learning rate is reported as divergence") {
        std::mt19937_64 rng(14);
        auto kg = build_knowledge_graph(small_gdb(0.0, rng, 10), geo);
        std::vector<std::pair<Id, Id>> pos{{kg.entities[0], kg.entities[0]}, {kg.entities[1], kg.entities[1]}};
        cfg.lr = 1e200;
        cfg.epochs = 5;
        CHECK_THROWS_AS(train(kg, kg, pos, cfg), DivergenceError);
    }
}

TEST_CASE("config validation") {
    TrainConfig c;
    c.lr = 0;
    CHECK_THROWS(c.validate());
    c = {};
    c.margin = -1;
    CHECK_THROWS(c.validate());
    c = {};
    c.negatives_per_pair = 0;
    CHECK_THROWS(c.validate());
    c = {};
    CHECK(TrainConfig::from_json(c.to_json()).to_json() == c.to_json());
}
