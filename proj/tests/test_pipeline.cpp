#include <doctest.h>

#include <random>

#include "conflate/pipeline.hpp"

using namespace conflate;

TEST_CASE("resolved config reads back to the same values") {
    PipelineConfig c;
    c.geo.mu = 37.5;
    c.geo.eta = {1, 2.5, 9};
    c.train.epochs = 11;
    c.train.seed = 123456789012345ull;
    c.match.dense = true;
    c.merge.gamma = 3.25;
    c.merge.prune = false;
    c.milp.max_nodes = 77;
    c.scene.road_style = "jittered";
    c.perturb.jitter_sigma = 0.1;
    c.sweep_widths = {3, 6};
    std::string text = config_to_toml(c);
    PipelineConfig d;
    apply_config_text(d, text);
    for (const auto& k : config_keys()) CHECK_MESSAGE(get_config_value(d, k) == get_config_value(c, k), k);
    CHECK(config_to_toml(d) == text);
}

TEST_CASE("every key survives a write and read with random values") {
    std::mt19937 rng(4);
    PipelineConfig c;
    for (int rep = 0; rep < 20; ++rep) {
        PipelineConfig d = c;
        for (const auto& k : config_keys()) {
            std::string v = get_config_value(c, k);
            if (v == "true" || v == "false") {
                apply_override(d, k + "=" + (rng() % 2 ? "true" : "false"));
            } else if (v.front() == '[') {
                apply_override(d, k + "=[" + std::to_string(rng() % 50 + 1) + ".5, 7]");
            } else if (v.front() != '"') {
                bool real = v.find('.') != std::string::npos || v.find('e') != std::string::npos;
                apply_override(d, k + "=" + (real ? std::to_string((rng() % 1000) / 7.0) : std::to_string(rng() % 90)));
            }
        }
        PipelineConfig e;
        apply_config_text(e, config_to_toml(d));
        CHECK(config_to_toml(e) == config_to_toml(d));
    }
}

TEST_CASE("config errors") {
    PipelineConfig c;
    CHECK_THROWS_AS(apply_config_text(c, "[geo]\nnope = 1\n"), ConfigError);
    CHECK_THROWS_AS(apply_config_text(c, "mu = 1\n"), ConfigError);
    CHECK_THROWS_AS(apply_override(c, "geo.mu=abc"), ConfigError);
    CHECK_THROWS_AS(apply_override(c, "geo.mu"), ConfigError);
    CHECK_THROWS_AS(apply_override(c, "train.seed=-1"), ConfigError);
    CHECK_THROWS_AS(apply_override(c, "merge.prune=yes"), ConfigError);
    apply_override(c, "geo.eta=3,4");
    CHECK(c.geo.eta == std::vector<double>{3, 4});
    apply_override(c, "scene.road_style=jittered");
    CHECK(c.scene.road_style == "jittered");
    c.validate();
    apply_override(c, "perturb.drop_rate_entities=2");
    CHECK_THROWS_AS(c.validate(), ConfigError);
    PipelineConfig d;
    apply_override(d, "sweep.axis=diagonal");
    CHECK_THROWS_AS(d.validate(), ConfigError);
    PipelineConfig e;
    apply_override(e, "geo.mu=0");
    CHECK_THROWS_AS(e.validate(), ConfigError);
}

TEST_CASE("comments and sections in a hand written file") {
    PipelineConfig c;
    apply_config_text(c, "# run\n[geo]\nmu = 40   # grid\neta = [5, 10, 20]\n\n[train]\nepochs = 3\n");
    CHECK(c.geo.mu == 40);
    CHECK(c.geo.eta.size() == 3);
    CHECK(c.train.epochs == 3);
}

TEST_CASE("hash and csv helpers") {
    CHECK(hex64(fnv1a64("")) == "cbf29ce484222325");
    CHECK(hex64(fnv1a64("a")) == "af63dc4c8601ec8c");
    std::vector<std::pair<Id, Id>> p{{"a", "x"}, {"b/0", "y/1"}};
    CHECK(pairs_from_csv(pairs_csv(p)) == p);
    CHECK(pairs_from_csv("source_id,target_id,score\na,b,0.5\n") == std::vector<std::pair<Id, Id>>{{"a", "b"}});
    CHECK_THROWS(pairs_csv({{"a,b", "c"}}));
    CHECK_THROWS(pairs_from_csv("x\n"));
    std::map<Id, Id> o{{"m", "t"}, {"n#t", "n"}};
    CHECK(origin_from_csv(origin_csv(o)) == o);
}
