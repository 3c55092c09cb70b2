#pragma once

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "conflate/geom.hpp"
#include "conflate/matcher.hpp"

namespace conflate {

using PairSet = std::vector<std::pair<Id, Id>>;

struct MatchReport {
    size_t n_correct = 0, n_incorrect = 0, n_missing = 0;
    double correct = 0, incorrect = 0, missing = 0;  // shares of |truth ∪ predicted|
    double precision = 0, recall = 0, f1 = 0;
};

// Throws std::invalid_argument on empty truth.
MatchReport match_report(const MatchSet& predicted, const PairSet& truth);
// Keeps only predicted pairs whose source is in `sources`.
MatchSet restrict_sources(const MatchSet& m, const std::vector<Id>& sources);

// Sum of IoU over unordered overlapping polygon pairs.
double cni(const Gdb& g);
// Segment/polygon pairs where the polyline enters the polygon interior.
size_t segment_polygon_overlaps(const Gdb& g);

struct CniReport {
    double source = 0, total = 0, new_cni = 0, new_percent = 0;
    size_t segment_polygon_overlaps = 0;
};

CniReport cni_report(const Gdb& source, const Gdb& merged);

// Per eta, share of merged segments within Hausdorff distance eta of their original.
// `origin` maps merged segment id to target segment id; only those segments are counted.
std::vector<double> displacement_within(const Gdb& merged, const Gdb& original_targets,
                                        const std::map<Id, Id>& origin, const std::vector<double>& etas);

struct DatasetStats {
    size_t ways = 0, terminal_nodes = 0, intermediate_nodes = 0, segments = 0, buildings = 0;
};

DatasetStats dataset_stats(const Gdb& g);

enum class SweepAxis { Grid, Buffer };

struct SweepRow {
    double width = 0, mean_neighbors = 0, f1 = 0;
};

// Mean polygon neighbors per polygon (grid) or per segment (buffer) at the given width.
double mean_neighbors(const Gdb& g, const GeoConfig& geo, SweepAxis axis, double width);
std::vector<SweepRow> width_sweep(const Gdb& g, const std::vector<double>& widths, const GeoConfig& base,
                                  SweepAxis axis, const std::function<double(const GeoConfig&)>& f1_at);

std::string sweep_csv(const std::vector<SweepRow>& rows);
nlohmann::json to_json(const MatchReport& r);
nlohmann::json to_json(const CniReport& r);
nlohmann::json to_json(const DatasetStats& s);
std::string match_report_csv(const MatchReport& r);
std::string cni_report_csv(const CniReport& r);

}  // namespace conflate
