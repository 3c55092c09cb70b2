// conflate: batch driver for ingest, synth, build-kg, train, match, merge, eval, sweep and pipeline.
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "conflate/kgraph.hpp"
#include "conflate/pipeline.hpp"

using namespace conflate;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kError = 1, kConfig = 2, kInfeasible = 3, kDivergence = 4 };

struct InfeasibleMerge : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Run {
    std::string sub;
    PipelineConfig cfg;
    fs::path out;
    std::vector<std::string> outputs;
    json inputs = json::object();

    void put(const std::string& name, const std::string& bytes) {
        write_file((out / name).string(), bytes);
        outputs.push_back(name);
    }
    void put(const std::string& name, const json& j) { put(name, j.dump(2) + "\n"); }
    std::string in(const std::string& role, const std::string& path) {
        std::string bytes = read_file(path);
        inputs[role] = {{"file", fs::path(path).filename().string()}, {"fnv1a64", hex64(fnv1a64(bytes))}};
        return bytes;
    }

    void finish() {
        std::string resolved = config_to_toml(cfg);
        write_file((out / "config.resolved.toml").string(), resolved);
        json files = json::object();
        for (const auto& name : outputs) files[name] = hex64(fnv1a64(read_file((out / name).string())));
        json m{{"tool", "conflate"},
               {"version", kVersion},
               {"subcommand", sub},
               {"config_hash", hex64(fnv1a64(resolved))},
               {"seeds",
                {{"scene", cfg.scene.seed},
                 {"perturb", cfg.perturb.seed},
                 {"split", cfg.split_seed},
                 {"extras", cfg.extras_seed},
                 {"train", cfg.train.seed}}},
               {"inputs", inputs},
               {"outputs", files}};
        write_file((out / ("manifest_" + sub + ".json")).string(), m.dump(2) + "\n");
    }
};

Gdb load_gdb(Run& r, const std::string& role, const std::string& path) {
    return gdb_from_json(json::parse(r.in(role, path)));
}

struct Paths {
    std::string input, gdb, name = "kg", source, target, train, truth, heldout, emb_s, emb_t, matches, merged, origin;
};

void do_ingest(Run& r, const Paths& p) {
    IngestOptions opt;
    opt.project_lonlat = r.cfg.project_lonlat;
    opt.ref_lat = r.cfg.ref_lat;
    opt.geo = r.cfg.geo;
    json manifest;
    Gdb g = ingest_geojson(json::parse(r.in("input", p.input)), opt, &manifest);
    r.put("gdb.json", gdb_to_json(g));
    r.put("ingest_manifest.json", manifest);
}

void do_synth(Run& r) {
    json manifest;
    Gdb s = generate_scene(r.cfg.scene, &manifest);
    auto pert = perturb(s, r.cfg.perturb);
    std::vector<Id> extras;
    if (r.cfg.extras.n > 0) extras = add_overlapping_extras(s, pert.target, r.cfg.extras, r.cfg.extras_seed);
    auto split = split_alignment(pert.truth, r.cfg.train_fraction, r.cfg.split_seed);
    manifest["perturb"] = to_json(r.cfg.perturb);
    manifest["target_only"] = extras;
    r.put("source.json", gdb_to_json(s));
    r.put("target.json", gdb_to_json(pert.target));
    r.put("source.geojson", scene_to_geojson(s));
    r.put("target.geojson", scene_to_geojson(pert.target));
    r.put("truth.csv", pairs_csv(pert.truth));
    r.put("train.csv", pairs_csv(split.train));
    r.put("heldout.csv", pairs_csv(split.held_out));
    r.put("scene_manifest.json", manifest);
}

void do_build_kg(Run& r, const Paths& p) {
    Gdb g = load_gdb(r, "gdb", p.gdb);
    auto kg = build_knowledge_graph(g, r.cfg.geo);
    r.put(p.name + ".tsv", kg_to_tsv(kg));
    r.put(p.name + ".json", kg_sidecar(kg));
}

void do_train(Run& r, const Paths& p) {
    Gdb s = load_gdb(r, "source", p.source), t = load_gdb(r, "target", p.target);
    auto pairs = pairs_from_csv(r.in("train", p.train));
    Embedded e = embed(s, t, pairs, r.cfg.geo, r.cfg.train);
    r.put("checkpoint.json", checkpoint_to_json(e.trained.params, r.cfg.train, e.trained.scaler));
    r.put("emb_source.json", embeddings_to_json(e.kg_s, e.trained.emb_s));
    r.put("emb_target.json", embeddings_to_json(e.kg_t, e.trained.emb_t));
    r.put("training_log.csv", training_log_csv(e.trained.log));
}

void do_match(Run& r, const Paths& p) {
    Gdb s = load_gdb(r, "source", p.source), t = load_gdb(r, "target", p.target);
    auto ks = build_knowledge_graph(s, r.cfg.geo), kt = build_knowledge_graph(t, r.cfg.geo);
    auto es = embeddings_from_json(json::parse(r.in("emb_source", p.emb_s)), ks);
    auto et = embeddings_from_json(json::parse(r.in("emb_target", p.emb_t)), kt);
    MatchSet ms = match_entities(s, t, ks, kt, es, et, r.cfg.geo, r.cfg.match);
    r.put("matches.csv", matches_csv(ms));
    r.put("unmatched_source.csv", ids_csv(ms.unmatched_source, "id"));
    r.put("unmatched_target.csv", ids_csv(ms.unmatched_target, "id"));
}

void do_merge(Run& r, const Paths& p) {
    Gdb s = load_gdb(r, "source", p.source), t = load_gdb(r, "target", p.target);
    MatchSet ms = matches_from_csv(r.in("matches", p.matches));
    MergePlan plan = plan_merge(s, t, ms, r.cfg.merge, r.cfg.milp);
    r.put("merge_plan.json", plan_to_json(plan));
    if (plan.status == SolveStatus::Infeasible) {
        std::string pairs;
        for (const auto& [a, b] : plan.infeasible_pairs) pairs += " " + a + "/" + b;
        throw InfeasibleMerge("merge infeasible for pairs:" + pairs);
    }
    if (plan.status != SolveStatus::Optimal)
        throw std::runtime_error(std::string("merge solver stopped: ") + status_name(plan.status));
    std::map<Id, Id> origin;
    Gdb merged = apply_merge(s, t, ms, plan, &origin);
    r.put("merged.json", gdb_to_json(merged));
    r.put("merged.geojson", gdb_to_geojson(merged));
    r.put("merge_origin.csv", origin_csv(origin));
    r.put("baseline_merged.json", gdb_to_json(position_merge_baseline(s, t, ms)));
}

void do_eval(Run& r, const Paths& p) {
    auto truth = pairs_from_csv(r.in("truth", p.truth));
    MatchSet ms = matches_from_csv(r.in("matches", p.matches));
    if (!p.heldout.empty()) {
        truth = pairs_from_csv(r.in("heldout", p.heldout));
        ms = restrict_sources(ms, source_ids(truth));
    }
    auto rep = match_report(ms, truth);
    json j{{"match", to_json(rep)}};
    if (!p.merged.empty()) {
        Gdb s = load_gdb(r, "source", p.source), t = load_gdb(r, "target", p.target);
        Gdb merged = load_gdb(r, "merged", p.merged);
        auto origin = origin_from_csv(r.in("origin", p.origin));
        j["cni"] = to_json(cni_report(s, merged));
        auto within = displacement_within(merged, t, origin, r.cfg.geo.eta);
        json d = json::array();
        for (size_t k = 0; k < within.size(); ++k) d.push_back({{"eta", r.cfg.geo.eta[k]}, {"share", within[k]}});
        j["displacement_within"] = d;
        j["merged_stats"] = to_json(dataset_stats(merged));
        r.put("cni.csv", cni_report_csv(cni_report(s, merged)));
    }
    r.put("eval.json", j);
    r.put("eval.csv", match_report_csv(rep));
}

void do_sweep(Run& r, const Paths& p) {
    Gdb s = load_gdb(r, "source", p.source), t = load_gdb(r, "target", p.target);
    auto train_pairs = pairs_from_csv(r.in("train", p.train));
    auto held = pairs_from_csv(r.in("heldout", p.heldout));
    SweepAxis axis = r.cfg.sweep_axis == "grid" ? SweepAxis::Grid : SweepAxis::Buffer;
    auto rows = width_sweep(s, r.cfg.sweep_widths, r.cfg.geo, axis, [&](const GeoConfig& geo) {
        return evaluate_matching(s, t, train_pairs, held, geo, r.cfg.train, r.cfg.match).f1;
    });
    r.put("sweep.csv", sweep_csv(rows));
}

void do_pipeline(Run& r) {
    auto at = [&](const char* f) { return (r.out / f).string(); };
    auto stage = [&](const std::string& sub, auto&& fn) {
        Run s{sub, r.cfg, r.out, {}, json::object()};
        fn(s);
        s.finish();
    };
    stage("synth", [&](Run& s) { do_synth(s); });
    Paths p;
    p.source = at("source.json");
    p.target = at("target.json");
    p.train = at("train.csv");
    p.truth = at("truth.csv");
    p.heldout = at("heldout.csv");
    stage("train", [&](Run& s) { do_train(s, p); });
    p.emb_s = at("emb_source.json");
    p.emb_t = at("emb_target.json");
    stage("match", [&](Run& s) { do_match(s, p); });
    p.matches = at("matches.csv");
    stage("merge", [&](Run& s) { do_merge(s, p); });
    p.merged = at("merged.json");
    p.origin = at("merge_origin.csv");
    stage("eval", [&](Run& s) { do_eval(s, p); });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Map conflation: knowledge-graph matching and overlap-free merging"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    std::string config_path, out_dir;
    std::vector<std::string> overrides;
    Paths p;
    auto common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", config_path, "TOML config file")->check(CLI::ExistingFile);
        sub->add_option("--set", overrides, "override KEY=VALUE, repeatable");
        sub->add_option("-o,--out", out_dir, "output directory")->required();
        return sub;
    };
    auto* ingest = common(app.add_subcommand("ingest", "GeoJSON to a Gdb store"));
    ingest->add_option("--input", p.input, "GeoJSON FeatureCollection")->required();
    common(app.add_subcommand("synth", "synthetic source/target pair with ground truth"));
    auto* kg = common(app.add_subcommand("build-kg", "knowledge graph of one Gdb"));
    kg->add_option("--gdb", p.gdb, "Gdb store")->required();
    kg->add_option("--name", p.name, "output base name");
    auto* tr = common(app.add_subcommand("train", "train the encoder on seed alignments"));
    tr->add_option("--source", p.source)->required();
    tr->add_option("--target", p.target)->required();
    tr->add_option("--train", p.train, "source_id,target_id csv")->required();
    auto* ma = common(app.add_subcommand("match", "match entities from trained embeddings"));
    ma->add_option("--source", p.source)->required();
    ma->add_option("--target", p.target)->required();
    ma->add_option("--emb-source", p.emb_s)->required();
    ma->add_option("--emb-target", p.emb_t)->required();
    auto* me = common(app.add_subcommand("merge", "add unmatched target entities without new overlap"));
    me->add_option("--source", p.source)->required();
    me->add_option("--target", p.target)->required();
    me->add_option("--matches", p.matches)->required();
    auto* ev = common(app.add_subcommand("eval", "match accounting, overlap and displacement"));
    ev->add_option("--truth", p.truth)->required();
    ev->add_option("--matches", p.matches)->required();
    ev->add_option("--heldout", p.heldout, "evaluate on these pairs only");
    ev->add_option("--source", p.source);
    ev->add_option("--target", p.target);
    auto* merged_opt = ev->add_option("--merged", p.merged);
    ev->add_option("--origin", p.origin)->needs(merged_opt);
    merged_opt->needs(ev->get_option("--source"), ev->get_option("--target"), ev->get_option("--origin"));
    auto* sw = common(app.add_subcommand("sweep", "neighbor count and F1 against grid or buffer width"));
    sw->add_option("--source", p.source)->required();
    sw->add_option("--target", p.target)->required();
    sw->add_option("--train", p.train)->required();
    sw->add_option("--heldout", p.heldout)->required();
    common(app.add_subcommand("pipeline", "synth, train, match, merge and eval in one directory"));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    Run r;
    r.sub = app.get_subcommands().front()->get_name();
    try {
        if (!config_path.empty()) apply_config_text(r.cfg, read_file(config_path));
        for (const auto& o : overrides) apply_override(r.cfg, o);
        r.cfg.validate();
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    }

    try {
        r.out = out_dir;
        fs::create_directories(r.out);
        if (r.sub == "ingest") do_ingest(r, p);
        else if (r.sub == "synth") do_synth(r);
        else if (r.sub == "build-kg") do_build_kg(r, p);
        else if (r.sub == "train") do_train(r, p);
        else if (r.sub == "match") do_match(r, p);
        else if (r.sub == "merge") do_merge(r, p);
        else if (r.sub == "eval") do_eval(r, p);
        else if (r.sub == "sweep") do_sweep(r, p);
        else if (r.sub == "pipeline") {
            do_pipeline(r);
            return kOk;
        }
        r.finish();
    } catch (const InfeasibleMerge& e) {
        std::cerr << r.sub << ": " << e.what() << "\n";
        return kInfeasible;
    } catch (const DivergenceError& e) {
        std::cerr << r.sub << ": training diverged: " << e.what() << "\n";
        return kDivergence;
    } catch (const std::exception& e) {
        std::cerr << r.sub << ": " << e.what() << "\n";
        return kError;
    }
    return kOk;
}
