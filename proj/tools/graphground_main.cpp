#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "graphground/evalharness.hpp"
#include "graphground/gate.hpp"
#include "graphground/ingest.hpp"
#include "graphground/queryparse.hpp"
#include "graphground/reconstruct.hpp"
#include "graphground/relations.hpp"
#include "graphground/render.hpp"
#include "graphground/runner.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace graphground;

namespace {

std::unique_ptr<EmbeddingProvider> make_embedder(const std::string& kind,
                                                 const MasterConfig& cfg) {
    if (kind == "mock") return std::make_unique<MockEmbedder>();
    if (kind == "offline") return std::make_unique<OfflineEmbedder>();
    if (kind == "http") {
        if (!cfg.embed_provider) {
            throw std::invalid_argument(
                "provider 'http' requires an 'embed_provider' config section");
        }
        return std::make_unique<HttpEmbedder>(*cfg.embed_provider);
    }
    throw std::invalid_argument("unknown provider '" + kind + "' (mock|http|offline)");
}

std::unique_ptr<ChatClient> make_chat(const std::string& kind, const MasterConfig& cfg,
                                      const std::string& script_path,
                                      const std::string& default_response) {
    if (kind == "mock") {
        auto chat = std::make_unique<MockChat>();
        if (!script_path.empty()) {
            json j;
            try {
                j = json::parse(read_text_file(script_path));
            } catch (const json::exception& e) {
                throw std::invalid_argument(std::string("mock script: bad JSON: ") + e.what());
            }
            if (!j.is_array()) {
                throw std::invalid_argument("mock script: expected a JSON array of strings");
            }
            std::vector<std::string> script;
            for (const auto& item : j) script.push_back(item.get<std::string>());
            chat = std::make_unique<MockChat>(std::move(script));
        }
        chat->set_default_response(default_response);
        return chat;
    }
    if (kind == "offline") return std::make_unique<OfflineChat>();
    if (kind == "http") {
        if (!cfg.chat_provider) {
            throw std::invalid_argument(
                "provider 'http' requires a 'chat_provider' config section");
        }
        return std::make_unique<HttpChat>(*cfg.chat_provider);
    }
    throw std::invalid_argument("unknown provider '" + kind + "' (mock|http|offline)");
}

MasterConfig load_config_or_default(const std::string& path) {
    if (path.empty()) return MasterConfig{};
    return load_master_config(path);
}

std::vector<FrameRecord> load_frames(std::vector<std::string> files, const std::string& dir,
                                     double min_confidence) {
    if (!dir.empty()) {
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.path().extension() == ".json") files.push_back(entry.path().string());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::runtime_error("no frame files given");
    std::vector<FrameRecord> frames;
    frames.reserve(files.size());
    for (const auto& f : files) frames.push_back(load_frame(f, min_confidence));
    return frames;
}

void save_bindings(const std::map<std::pair<int, int>, int>& bindings,
                   const std::string& path) {
    json arr = json::array();
    for (const auto& [key, object_id] : bindings) {
        arr.push_back(
            {{"frame_id", key.first}, {"marker", key.second}, {"object_id", object_id}});
    }
    write_text_file(path, arr.dump(2) + "\n");
}

std::map<std::pair<int, int>, int> load_bindings(const std::string& path) {
    json arr;
    try {
        arr = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("bindings: bad JSON: ") + e.what());
    }
    if (!arr.is_array()) throw std::runtime_error("bindings: expected a JSON array");
    std::map<std::pair<int, int>, int> bindings;
    for (const auto& item : arr) {
        bindings[{item.at("frame_id").get<int>(), item.at("marker").get<int>()}] =
            item.at("object_id").get<int>();
    }
    return bindings;
}

struct SynthOpts {
    std::uint64_t seed = 0;
    std::string out_dir = "synth_out";
    int objects = 8;
    int groups = 1;
    int dup = 3;
    double density = 1.0;
    bool frames = false;
    std::string depth_format = "pgm";
    bool corrupt = false;
};

int cmd_synth(const SynthOpts& o) {
    SynthSpec spec;
    spec.n_objects = o.objects;
    spec.n_duplicate_groups = o.groups;
    spec.duplicates_per_group = o.dup;
    spec.relation_density = o.density;
    spec.with_frames = o.frames;
    if (o.depth_format != "pgm" && o.depth_format != "png") {
        throw std::invalid_argument("unknown depth format '" + o.depth_format + "' (pgm|png)");
    }
    SynthInstance inst = gen_synthetic(o.seed, spec);

    fs::create_directories(o.out_dir);
    const fs::path dir(o.out_dir);
    save_scene_graph(inst.scene, (dir / "scene.json").string());
    save_queries(inst.queries, (dir / "queries.jsonl").string());
    if (o.frames) {
        const fs::path frames_dir = dir / "frames";
        fs::create_directories(frames_dir);
        for (std::size_t i = 0; i < inst.frames.size(); ++i) {
            char depth_name[32];
            std::snprintf(depth_name, sizeof(depth_name), "depth_%04zu.%s", i,
                          o.depth_format.c_str());
            char frame_name[32];
            std::snprintf(frame_name, sizeof(frame_name), "frame_%04zu.json", i);
            FrameRecord frame = inst.frames[i];
            frame.depth_path = depth_name;
            if (o.depth_format == "pgm") {
                save_depth_pgm(inst.depths[i], (frames_dir / depth_name).string());
            } else {
                save_depth_png(inst.depths[i], (frames_dir / depth_name).string());
            }
            save_frame(frame, (frames_dir / frame_name).string());
        }
    }
    if (o.corrupt) {
        std::set<std::string> labels;
        for (const auto& [qid, gt] : inst.gt_ids) labels.insert(inst.scene.at(gt).label);
        const std::vector<std::string> ghost_labels(labels.begin(), labels.end());
        const SceneGraph3D corrupted = corrupt_scene(inst.scene, ghost_labels, o.seed);
        save_scene_graph(corrupted, (dir / "scene_corrupt.json").string());
    }
    // Downstream stages need association parameters scaled to the generator's
    // 400-point objects; ship them alongside the data.
    const AssociationConfig assoc = synth_association_config();
    const json config{{"association",
                       {{"geom_iou_min", assoc.geom_iou_min},
                        {"sem_cos_min", assoc.sem_cos_min},
                        {"min_points", assoc.min_points},
                        {"dbscan_eps", assoc.dbscan_eps},
                        {"dbscan_min_pts", assoc.dbscan_min_pts}}}};
    write_text_file((dir / "config.json").string(), config.dump(2) + "\n");
    std::cerr << "synth: " << inst.scene.nodes.size() << " objects, "
              << inst.scene.edges.size() << " edges, " << inst.queries.size()
              << " queries -> " << o.out_dir << "\n";
    return 0;
}

struct BuildOpts {
    std::vector<std::string> frame_files;
    std::string frames_dir;
    std::string out = "graph.json";
    std::string bindings;
    std::string config;
    std::string provider = "mock";
};

int cmd_build(const BuildOpts& o) {
    const MasterConfig cfg = load_config_or_default(o.config);
    const auto frames = load_frames(o.frame_files, o.frames_dir, cfg.min_confidence);
    const auto embedder = make_embedder(o.provider, cfg);
    const BuildResult result = build_scene(frames, *embedder, cfg.association);
    save_scene_graph(result.graph, o.out);
    if (!o.bindings.empty()) save_bindings(result.bindings, o.bindings);
    std::cerr << "build: " << result.stats.frames << " frames, " << result.stats.detections
              << " detections -> " << result.graph.nodes.size() << " objects ("
              << result.stats.merged << " merged, " << result.stats.dropped_denoise
              << " denoised away)\n";
    return 0;
}

struct RelateOpts {
    std::string graph;
    std::vector<std::string> frame_files;
    std::string frames_dir;
    std::string bindings;
    std::string out = "graph_related.json";
    std::string config;
    std::string provider = "mock";
    std::string mock_script;
};

int cmd_relate(const RelateOpts& o) {
    const MasterConfig cfg = load_config_or_default(o.config);
    SceneGraph3D graph = load_scene_graph(o.graph);
    RelateStats stats;
    if (o.provider != "offline") {
        const auto frames = load_frames(o.frame_files, o.frames_dir, cfg.min_confidence);
        const auto bindings = load_bindings(o.bindings);
        const auto chat = make_chat(o.provider, cfg, o.mock_script, "");
        auto vlm_edges = extract_relations(frames, bindings, *chat, cfg.frame_stride, &stats);
        auto merged = graph.edges;
        merged.insert(merged.end(), vlm_edges.begin(), vlm_edges.end());
        graph.edges = aggregate_edges(merged);
    }
    auto geo = geometric_relations(graph, cfg.geometric);
    auto merged = graph.edges;
    merged.insert(merged.end(), geo.begin(), geo.end());
    graph.edges = aggregate_edges(merged);
    save_scene_graph(graph, o.out);
    std::cerr << "relate: " << stats.triples << " vlm triples ("
              << stats.parse.parse_failures << " parse failures, "
              << stats.parse.dangling_markers << " dangling), " << graph.edges.size()
              << " edges total -> " << o.out << "\n";
    return 0;
}

struct GroundOpts {
    std::string graph;
    std::string queries;
    std::string out = "results.jsonl";
    std::string config;
    std::string provider = "mock";
    std::string mock_script;
    std::string mode = "full";
    std::string parser = "rules";
    std::string dump_renders;
    int jobs = 1;
};

int cmd_ground(const GroundOpts& o) {
    const MasterConfig cfg = load_config_or_default(o.config);
    RunnerConfig rc;
    rc.matcher = cfg.matcher;
    rc.association = cfg.association;
    rc.gate = cfg.gate;
    rc.mode = ground_mode_from_string(o.mode);
    rc.jobs = o.jobs;
    rc.dump_dir = o.dump_renders;
    if (o.parser == "rules") {
        rc.parser = QueryParser::rules;
    } else if (o.parser == "llm") {
        rc.parser = QueryParser::llm;
    } else {
        throw std::invalid_argument("unknown parser '" + o.parser + "' (rules|llm)");
    }
    if (rc.parser == QueryParser::llm && rc.mode == GroundMode::graph_only) {
        throw std::invalid_argument("graph-only mode performs no VLM calls; use --parser rules");
    }

    const auto embedder = make_embedder(o.provider, cfg);
    // graph-only must never even construct a chat client.
    std::unique_ptr<ChatClient> chat;
    if (rc.mode != GroundMode::graph_only) {
        chat = make_chat(o.provider, cfg, o.mock_script, "NONE");
    }

    const SceneGraph3D graph = load_scene_graph(o.graph);
    const auto queries = load_queries(o.queries);
    const RunReport report = ground_all(queries, graph, *embedder, chat.get(), rc);

    write_text_file(o.out, results_to_jsonl(report.results));
    std::cerr << "ground: " << report.results.size() << "/" << queries.size()
              << " queries grounded, " << report.gates_fired << " gates fired, "
              << report.vlm_picks << " vlm picks -> " << o.out << "\n";
    for (const auto& [qid, message] : report.errors) {
        std::cerr << "ground error: " << qid << ": " << message << "\n";
    }
    return report.errors.empty() ? 0 : 1;
}

struct EvalOpts {
    std::string results;
    std::string queries;
    std::string out;
    std::string csv;
    bool table = false;
};

int cmd_eval(const EvalOpts& o) {
    const auto results = results_from_jsonl(read_text_file(o.results));
    const auto queries = load_queries(o.queries);
    const MetricsReport report = evaluate(results, queries);
    const std::string metrics = metrics_to_json(report);
    if (!o.out.empty()) write_text_file(o.out, metrics);
    if (!o.csv.empty()) write_text_file(o.csv, metrics_csv(report));
    if (o.table) {
        std::cout << metrics_table(report);
    } else {
        std::cout << metrics;
    }
    return 0;
}

struct RenderOpts {
    std::string graph;
    std::vector<int> ids;
    std::string out = "render.png";
    int width = 640;
    int height = 480;
};

int cmd_render(const RenderOpts& o) {
    const SceneGraph3D graph = load_scene_graph(o.graph);
    std::vector<int> ids = o.ids;
    if (ids.empty()) {
        for (const auto& [id, obj] : graph.nodes) ids.push_back(id);
    }
    const Image img = render_candidates(graph, ids, o.width, o.height);
    write_png_rgb(img, o.out);
    std::cerr << "render: " << ids.size() << " candidates -> " << o.out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"graphground: zero-shot 3D visual grounding over object scene graphs"};
    app.require_subcommand(1);

    SynthOpts synth;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic scene + queries");
    synth_cmd->add_option("--seed", synth.seed, "Generator seed");
    synth_cmd->add_option("--out-dir", synth.out_dir, "Output directory");
    synth_cmd->add_option("--objects", synth.objects, "Total object count");
    synth_cmd->add_option("--groups", synth.groups, "Duplicate label groups");
    synth_cmd->add_option("--dup", synth.dup, "Members per duplicate group");
    synth_cmd->add_option("--density", synth.density, "Fraction of non-essential edges kept");
    synth_cmd->add_flag("--frames", synth.frames, "Also render RGB-D style frames");
    synth_cmd->add_option("--depth-format", synth.depth_format, "Depth file format (pgm|png)");
    synth_cmd->add_flag("--corrupt", synth.corrupt,
                        "Also write an outlier+ghost corrupted copy of the scene");

    BuildOpts build;
    auto* build_cmd = app.add_subcommand("build", "Fuse frames into a 3D scene graph");
    build_cmd->add_option("frames", build.frame_files, "Frame JSON files");
    build_cmd->add_option("--frames-dir", build.frames_dir, "Directory of frame JSON files");
    build_cmd->add_option("--out", build.out, "Output scene graph path");
    build_cmd->add_option("--bindings", build.bindings, "Marker-binding sidecar output path");
    build_cmd->add_option("--config", build.config, "JSON config file");
    build_cmd->add_option("--provider", build.provider, "Embedding provider (mock|http|offline)");

    RelateOpts relate;
    auto* relate_cmd = app.add_subcommand("relate", "Add VLM + geometric relation edges");
    relate_cmd->add_option("--graph", relate.graph, "Input scene graph")->required();
    relate_cmd->add_option("frames", relate.frame_files, "Frame JSON files");
    relate_cmd->add_option("--frames-dir", relate.frames_dir, "Directory of frame JSON files");
    relate_cmd->add_option("--bindings", relate.bindings, "Marker-binding sidecar from build");
    relate_cmd->add_option("--out", relate.out, "Output scene graph path");
    relate_cmd->add_option("--config", relate.config, "JSON config file");
    relate_cmd->add_option("--provider", relate.provider, "Chat provider (mock|http|offline)");
    relate_cmd->add_option("--mock-script", relate.mock_script,
                           "JSON array of scripted mock chat replies");

    GroundOpts ground;
    auto* ground_cmd = app.add_subcommand("ground", "Ground queries against a scene graph");
    ground_cmd->add_option("--graph", ground.graph, "Scene graph path")->required();
    ground_cmd->add_option("--queries", ground.queries, "Query JSONL path")->required();
    ground_cmd->add_option("--out", ground.out, "Results JSONL path");
    ground_cmd->add_option("--config", ground.config, "JSON config file");
    ground_cmd->add_option("--provider", ground.provider, "Provider (mock|http|offline)");
    ground_cmd->add_option("--mock-script", ground.mock_script,
                           "JSON array of scripted mock chat replies");
    ground_cmd->add_option("--mode", ground.mode,
                           "full|graph-only|vlm-only|no-edges|no-denoise");
    ground_cmd->add_option("--parser", ground.parser, "Query parser (rules|llm)");
    ground_cmd->add_option("--jobs", ground.jobs, "Worker threads");
    ground_cmd->add_option("--dump-renders", ground.dump_renders,
                           "Directory for per-fired-gate render + transcript dumps");

    EvalOpts eval;
    auto* eval_cmd = app.add_subcommand("eval", "Score results against ground truth");
    eval_cmd->add_option("--results", eval.results, "Results JSONL path")->required();
    eval_cmd->add_option("--queries", eval.queries, "Query JSONL path with gt boxes")->required();
    eval_cmd->add_option("--out", eval.out, "Metrics JSON output path");
    eval_cmd->add_option("--csv", eval.csv, "Metrics CSV output path");
    eval_cmd->add_flag("--table", eval.table, "Print an aligned text table instead of JSON");

    RenderOpts render;
    auto* render_cmd = app.add_subcommand("render", "Render candidates to a PNG");
    render_cmd->add_option("--graph", render.graph, "Scene graph path")->required();
    render_cmd->add_option("--ids", render.ids, "Candidate object ids (default: all)");
    render_cmd->add_option("--out", render.out, "Output PNG path");
    render_cmd->add_option("--width", render.width, "Image width");
    render_cmd->add_option("--height", render.height, "Image height");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (synth_cmd->parsed()) return cmd_synth(synth);
        if (build_cmd->parsed()) return cmd_build(build);
        if (relate_cmd->parsed()) return cmd_relate(relate);
        if (ground_cmd->parsed()) return cmd_ground(ground);
        if (eval_cmd->parsed()) return cmd_eval(eval);
        if (render_cmd->parsed()) return cmd_render(render);
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
