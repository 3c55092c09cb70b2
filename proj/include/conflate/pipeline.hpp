#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "conflate/encoder.hpp"
#include "conflate/geom.hpp"
#include "conflate/matcher.hpp"
#include "conflate/merger.hpp"
#include "conflate/metrics.hpp"
#include "conflate/synth.hpp"

namespace conflate {

inline constexpr const char* kVersion = "0.1.0";

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct PipelineConfig {
    GeoConfig geo;
    TrainConfig train;
    MatchConfig match;
    MergeConfig merge;
    MilpOptions milp;
    SceneSpec scene;
    PerturbSpec perturb;
    double train_fraction = 0.3;
    std::uint64_t split_seed = 3;
    ExtraSpec extras{0};
    std::uint64_t extras_seed = 4;
    bool project_lonlat = false;
    double ref_lat = 0;
    std::string sweep_axis = "grid";
    std::vector<double> sweep_widths{5, 10, 20, 40, 80, 160, 320};

    void validate() const;  // throws ConfigError
};

// Dotted keys such as "geo.mu" or "train.epochs", in resolved-config order.
std::vector<std::string> config_keys();
// Throws ConfigError on an unknown key or a malformed value.
void set_config_value(PipelineConfig& c, const std::string& key, const std::vector<std::string>& values);
std::string get_config_value(const PipelineConfig& c, const std::string& key);

// TOML-style document: [section] headers, key = value lines, # comments.
void apply_config_text(PipelineConfig& c, const std::string& text);
// "key=value"; list values as "a,b,c" or "[a, b, c]".
void apply_override(PipelineConfig& c, const std::string& assignment);
std::string config_to_toml(const PipelineConfig& c);

std::uint64_t fnv1a64(const std::string& bytes);
std::string hex64(std::uint64_t v);

std::string read_file(const std::string& path);  // throws std::runtime_error naming the path
void write_file(const std::string& path, const std::string& bytes);

std::string pairs_csv(const std::vector<std::pair<Id, Id>>& pairs);
std::vector<std::pair<Id, Id>> pairs_from_csv(const std::string& text);
std::string origin_csv(const std::map<Id, Id>& origin);
std::map<Id, Id> origin_from_csv(const std::string& text);

GeoConfig geo_for(const PipelineConfig& c, SweepAxis axis, double width);

struct Embedded {
    KnowledgeGraph kg_s, kg_t;
    TrainResult trained;
};

// Builds both graphs and trains on `train_pairs`; DivergenceError propagates.
Embedded embed(const Gdb& s, const Gdb& t, const std::vector<std::pair<Id, Id>>& train_pairs, const GeoConfig& geo,
               const TrainConfig& cfg);

// Held-out F1 after training and matching at the given geometry config.
MatchReport evaluate_matching(const Gdb& s, const Gdb& t, const std::vector<std::pair<Id, Id>>& train_pairs,
                              const std::vector<std::pair<Id, Id>>& held_out, const GeoConfig& geo,
                              const TrainConfig& tc, const MatchConfig& mc);

std::vector<Id> source_ids(const std::vector<std::pair<Id, Id>>& pairs);

}  // namespace conflate
