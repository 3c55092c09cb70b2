#include "conflate/pipeline.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

#include <CLI11.hpp>

#include "conflate/kgraph.hpp"

namespace conflate {

namespace {

struct Entry {
    std::string key;
    std::function<void(PipelineConfig&, const std::vector<std::string>&)> set;
    std::function<std::string(const PipelineConfig&)> get;
};

std::string fmt(double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    std::string s(buf, r.ptr);
    // written as a float
    if (s.find_first_of(".enai") == std::string::npos) s += ".0";
    return s;
}

const std::string& one(const std::string& key, const std::vector<std::string>& v) {
    if (v.size() != 1) throw ConfigError(key + ": expected a single value");
    return v[0];
}

double to_double(const std::string& key, const std::string& s) {
    size_t used = 0;
    double v;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw ConfigError(key + ": not a number: " + s);
    }
    if (used != s.size()) throw ConfigError(key + ": not a number: " + s);
    return v;
}

long long to_int(const std::string& key, const std::string& s) {
    size_t used = 0;
    long long v;
    try {
        v = std::stoll(s, &used);
    } catch (const std::exception&) {
        throw ConfigError(key + ": not an integer: " + s);
    }
    if (used != s.size()) throw ConfigError(key + ": not an integer: " + s);
    return v;
}

template <class Ref>
Entry real(std::string key, Ref ref) {
    return {key, [=](PipelineConfig& c, const std::vector<std::string>& v) { ref(c) = to_double(key, one(key, v)); },
            [=](const PipelineConfig& c) { return fmt(ref(const_cast<PipelineConfig&>(c))); }};
}

template <class Ref>
Entry integer(std::string key, Ref ref) {
    return {key,
            [=](PipelineConfig& c, const std::vector<std::string>& v) {
                long long x = to_int(key, one(key, v));
                using T = std::remove_reference_t<decltype(ref(c))>;
                if (std::is_unsigned_v<T> && x < 0) throw ConfigError(key + ": must be non-negative");
                ref(c) = static_cast<T>(x);
            },
            [=](const PipelineConfig& c) { return std::to_string(ref(const_cast<PipelineConfig&>(c))); }};
}

template <class Ref>
Entry boolean(std::string key, Ref ref) {
    return {key,
            [=](PipelineConfig& c, const std::vector<std::string>& v) {
                const auto& s = one(key, v);
                if (s != "true" && s != "false") throw ConfigError(key + ": expected true or false");
                ref(c) = s == "true";
            },
            [=](const PipelineConfig& c) { return std::string(ref(const_cast<PipelineConfig&>(c)) ? "true" : "false"); }};
}

template <class Ref>
Entry text(std::string key, Ref ref) {
    return {key, [=](PipelineConfig& c, const std::vector<std::string>& v) { ref(c) = one(key, v); },
            [=](const PipelineConfig& c) { return "\"" + ref(const_cast<PipelineConfig&>(c)) + "\""; }};
}

template <class Ref>
Entry reals(std::string key, Ref ref) {
    return {key,
            [=](PipelineConfig& c, const std::vector<std::string>& v) {
                std::vector<double> out;
                for (const auto& s : v) out.push_back(to_double(key, s));
                ref(c) = out;
            },
            [=](const PipelineConfig& c) {
                std::string s = "[";
                const auto& v = ref(const_cast<PipelineConfig&>(c));
                for (size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
                return s + "]";
            }};
}

#define REF(expr) [](PipelineConfig& c) -> auto& { return c.expr; }

const std::vector<Entry>& registry() {
    static const std::vector<Entry> r{
        real("geo.theta", REF(geo.theta)),
        real("geo.delta", REF(geo.delta)),
        real("geo.lambda_buf", REF(geo.lambda_buf)),
        real("geo.mu", REF(geo.mu)),
        reals("geo.eta", REF(geo.eta)),
        real("train.lr", REF(train.lr)),
        integer("train.hidden_dim", REF(train.hidden_dim)),
        integer("train.layers", REF(train.layers)),
        integer("train.k", REF(train.k)),
        real("train.beta", REF(train.beta)),
        real("train.alpha", REF(train.alpha)),
        real("train.margin", REF(train.margin)),
        integer("train.negatives_per_pair", REF(train.negatives_per_pair)),
        real("train.dropout_rate", REF(train.dropout_rate)),
        integer("train.epochs", REF(train.epochs)),
        integer("train.seed", REF(train.seed)),
        integer("train.mixer_dim", REF(train.mixer_dim)),
        real("match.tau", REF(match.tau)),
        real("match.threshold", REF(match.threshold)),
        real("match.candidate_radius", REF(match.candidate_radius)),
        boolean("match.dense", REF(match.dense)),
        boolean("match.prefilter", REF(match.prefilter)),
        real("merge.gamma", REF(merge.gamma)),
        real("merge.eps_max", REF(merge.eps_max)),
        real("merge.big_M", REF(merge.big_M)),
        real("merge.contact_tolerance", REF(merge.contact_tolerance)),
        real("merge.strict_slack", REF(merge.strict_slack)),
        real("merge.min_scale", REF(merge.min_scale)),
        boolean("merge.prune", REF(merge.prune)),
        boolean("merge.include_segments", REF(merge.include_segments)),
        real("milp.integer_tol", REF(milp.integer_tol)),
        real("milp.lp_tol", REF(milp.lp_tol)),
        integer("milp.max_nodes", REF(milp.max_nodes)),
        boolean("milp.decompose", REF(milp.decompose)),
        integer("scene.n_buildings", REF(scene.n_buildings)),
        integer("scene.n_ways", REF(scene.n_ways)),
        real("scene.extent", REF(scene.extent)),
        real("scene.size_min", REF(scene.size_min)),
        real("scene.size_max", REF(scene.size_max)),
        real("scene.l_shape_share", REF(scene.l_shape_share)),
        text("scene.road_style", REF(scene.road_style)),
        real("scene.road_clearance", REF(scene.road_clearance)),
        real("scene.building_gap", REF(scene.building_gap)),
        integer("scene.seed", REF(scene.seed)),
        real("perturb.jitter_sigma", REF(perturb.jitter_sigma)),
        real("perturb.drop_rate_entities", REF(perturb.drop_rate_entities)),
        real("perturb.drop_rate_segments", REF(perturb.drop_rate_segments)),
        real("perturb.metadata_noise_rate", REF(perturb.metadata_noise_rate)),
        integer("perturb.seed", REF(perturb.seed)),
        real("split.train_fraction", REF(train_fraction)),
        integer("split.seed", REF(split_seed)),
        integer("extras.n", REF(extras.n)),
        real("extras.size_min", REF(extras.size_min)),
        real("extras.size_max", REF(extras.size_max)),
        real("extras.depth_min", REF(extras.depth_min)),
        real("extras.depth_max", REF(extras.depth_max)),
        real("extras.free_margin", REF(extras.free_margin)),
        integer("extras.seed", REF(extras_seed)),
        boolean("ingest.project_lonlat", REF(project_lonlat)),
        real("ingest.ref_lat", REF(ref_lat)),
        text("sweep.axis", REF(sweep_axis)),
        reals("sweep.widths", REF(sweep_widths)),
    };
    return r;
}

#undef REF

const Entry& entry(const std::string& key) {
    for (const auto& e : registry())
        if (e.key == key) return e;
    throw ConfigError("unknown config key: " + key);
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n"), b = s.find_last_not_of(" \t\r\n");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

std::string unquote(const std::string& s) {
    if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) return s.substr(1, s.size() - 2);
    return s;
}

}  // namespace

void PipelineConfig::validate() const {
    try {
        geo.validate();
        train.validate();
        match.validate();
        merge.validate();
        scene.validate();
        perturb.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (!(train_fraction >= 0 && train_fraction <= 1)) throw ConfigError("split.train_fraction must lie in [0,1]");
    if (extras.n < 0) throw ConfigError("extras.n must be non-negative");
    if (milp.max_nodes <= 0 || !(milp.integer_tol > 0) || !(milp.lp_tol > 0))
        throw ConfigError("milp tolerances and node limit must be positive");
    if (sweep_axis != "grid" && sweep_axis != "buffer") throw ConfigError("sweep.axis must be grid or buffer");
    for (double w : sweep_widths)
        if (!(w > 0)) throw ConfigError("sweep.widths must be positive");
}

std::vector<std::string> config_keys() {
    std::vector<std::string> k;
    for (const auto& e : registry()) k.push_back(e.key);
    return k;
}

void set_config_value(PipelineConfig& c, const std::string& key, const std::vector<std::string>& values) {
    entry(key).set(c, values);
}

std::string get_config_value(const PipelineConfig& c, const std::string& key) { return entry(key).get(c); }

void apply_config_text(PipelineConfig& c, const std::string& text) {
    std::istringstream is(text);
    std::vector<CLI::ConfigItem> items;
    try {
        items = CLI::ConfigTOML().from_config(is);
    } catch (const CLI::Error& e) {
        throw ConfigError(std::string("config syntax: ") + e.what());
    }
    for (const auto& it : items) {
        if (it.name == "++" || it.name == "--") continue;
        set_config_value(c, it.fullname(), it.inputs);
    }
}

void apply_override(PipelineConfig& c, const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override needs key=value: " + assignment);
    std::string key = trim(assignment.substr(0, eq)), value = trim(assignment.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '[' && value.back() == ']') value = value.substr(1, value.size() - 2);
    std::vector<std::string> parts;
    if (entry(key).get(c).front() == '[') {
        std::stringstream ss(value);
        for (std::string p; std::getline(ss, p, ',');)
            if (!trim(p).empty()) parts.push_back(unquote(trim(p)));
    } else {
        parts.push_back(unquote(value));
    }
    set_config_value(c, key, parts);
}

std::string config_to_toml(const PipelineConfig& c) {
    std::string out, section;
    for (const auto& e : registry()) {
        auto dot = e.key.find('.');
        std::string sec = e.key.substr(0, dot), name = e.key.substr(dot + 1);
        if (sec != section) {
            out += (out.empty() ? "[" : "\n[") + sec + "]\n";
            section = sec;
        }
        out += name + " = " + e.get(c) + "\n";
    }
    return out;
}

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << bytes;
    if (!f) throw std::runtime_error("write failed: " + path);
}

std::string pairs_csv(const std::vector<std::pair<Id, Id>>& pairs) {
    std::string s = "source_id,target_id\n";
    for (const auto& [a, b] : pairs) {
        if (a.find_first_of(",\n") != std::string::npos || b.find_first_of(",\n") != std::string::npos)
            throw std::invalid_argument("id with a comma or newline cannot go to csv: " + a + " / " + b);
        s += a + "," + b + "\n";
    }
    return s;
}

std::vector<std::pair<Id, Id>> pairs_from_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line.rfind("source_id,target_id", 0) != 0)
        throw std::invalid_argument("pairs csv: missing header");
    std::vector<std::pair<Id, Id>> out;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto a = line.find(',');
        if (a == std::string::npos) throw std::invalid_argument("pairs csv: bad row " + line);
        auto b = line.find(',', a + 1);
        out.push_back({line.substr(0, a), line.substr(a + 1, b == std::string::npos ? std::string::npos : b - a - 1)});
    }
    return out;
}

std::string origin_csv(const std::map<Id, Id>& origin) {
    std::string s = "merged_id,target_id\n";
    for (const auto& [m, t] : origin) s += m + "," + t + "\n";
    return s;
}

std::map<Id, Id> origin_from_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line.rfind("merged_id,target_id", 0) != 0)
        throw std::invalid_argument("origin csv: missing header");
    std::map<Id, Id> out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto a = line.find(',');
        if (a == std::string::npos) throw std::invalid_argument("origin csv: bad row " + line);
        out[line.substr(0, a)] = line.substr(a + 1);
    }
    return out;
}

GeoConfig geo_for(const PipelineConfig& c, SweepAxis axis, double width) {
    GeoConfig g = c.geo;
    (axis == SweepAxis::Grid ? g.mu : g.lambda_buf) = width;
    return g;
}

Embedded embed(const Gdb& s, const Gdb& t, const std::vector<std::pair<Id, Id>>& train_pairs, const GeoConfig& geo,
               const TrainConfig& cfg) {
    Embedded e;
    e.kg_s = build_knowledge_graph(s, geo);
    e.kg_t = build_knowledge_graph(t, geo);
    e.trained = train(e.kg_s, e.kg_t, train_pairs, cfg);
    return e;
}

std::vector<Id> source_ids(const std::vector<std::pair<Id, Id>>& pairs) {
    std::vector<Id> ids;
    for (const auto& p : pairs) ids.push_back(p.first);
    return ids;
}

MatchReport evaluate_matching(const Gdb& s, const Gdb& t, const std::vector<std::pair<Id, Id>>& train_pairs,
                              const std::vector<std::pair<Id, Id>>& held_out, const GeoConfig& geo,
                              const TrainConfig& tc, const MatchConfig& mc) {
    Embedded e = embed(s, t, train_pairs, geo, tc);
    MatchSet ms = match_entities(s, t, e.kg_s, e.kg_t, e.trained.emb_s, e.trained.emb_t, geo, mc);
    return match_report(restrict_sources(ms, source_ids(held_out)), held_out);
}

}  // namespace conflate
