#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "conflate/geom.hpp"

namespace conflate {

struct SceneSpec {
    int n_buildings = 60;
    int n_ways = 6;               // straight roads, split evenly between horizontal and vertical
    double extent = 300;          // square scene side
    double size_min = 8, size_max = 16;
    double l_shape_share = 0.25;  // buildings drawn as an L inside their box
    std::string road_style = "regular";  // or "jittered": line offsets drawn at random
    double road_clearance = 3;    // min gap between a building box and a road centerline
    double building_gap = 2;      // min gap between building boxes
    std::uint64_t seed = 1;

    void validate() const;
};

struct PerturbSpec {
    double jitter_sigma = 2;
    double drop_rate_entities = 0.1;
    double drop_rate_segments = 0.1;
    double metadata_noise_rate = 0.05;
    std::uint64_t seed = 2;

    void validate() const;
};

// Feature columns written for every scene.
const std::vector<std::string>& scene_feature_names();

// Throws std::runtime_error when the buildings cannot be packed.
Gdb generate_scene(const SceneSpec& spec, nlohmann::json* manifest = nullptr);

struct Perturbed {
    Gdb target;
    std::vector<std::pair<Id, Id>> truth;  // (source id, target id) for every surviving target entity
};

// Rigid per-building and per-way Gaussian translation, random drops, metadata noise, fresh target ids.
Perturbed perturb(const Gdb& g, const PerturbSpec& spec);

struct AlignmentSplit {
    std::vector<std::pair<Id, Id>> train, held_out;
};

AlignmentSplit split_alignment(const std::vector<std::pair<Id, Id>>& truth, double train_fraction, std::uint64_t seed);

struct ExtraSpec {
    int n = 3;                 // target-only buildings, each overlapping one source building
    double size_min = 8, size_max = 14;
    double depth_min = 0.2, depth_max = 0.5;  // overlap depth as a share of the extra's width
    double free_margin = 10;   // clearance from everything except the one overlapped building
};

// Appends the extras to `target` and returns their ids. Throws std::runtime_error if no room.
std::vector<Id> add_overlapping_extras(const Gdb& source, Gdb& target, const ExtraSpec& spec, std::uint64_t seed);

struct MergeInstanceSpec {
    SceneSpec scene{12, 2, 150, 8, 14, 0.0};
    double jitter_sigma = 0.5;
    ExtraSpec extras;
};

struct MergeInstance {
    Gdb source, target;
    std::vector<std::pair<Id, Id>> matches;  // every target entity except the extras
    std::vector<Id> extras;
};

MergeInstance make_merge_instance(const MergeInstanceSpec& spec, std::uint64_t seed);

// Polygons as Polygon features, roads as one LineString per contiguous run of a way.
// A generated scene re-ingests to the same Gdb.
nlohmann::json scene_to_geojson(const Gdb& g);
nlohmann::json to_json(const SceneSpec& s);
nlohmann::json to_json(const PerturbSpec& s);

}  // namespace conflate
