#include "graphground/runner.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "graphground/ingest.hpp"
#include "graphground/render.hpp"

namespace graphground {

using json = nlohmann::json;

const char* to_string(GroundMode m) {
    switch (m) {
        case GroundMode::full: return "full";
        case GroundMode::graph_only: return "graph-only";
        case GroundMode::vlm_only: return "vlm-only";
        case GroundMode::no_edges: return "no-edges";
        case GroundMode::no_denoise: return "no-denoise";
    }
    return "full";
}

GroundMode ground_mode_from_string(const std::string& s) {
    if (s == "full") return GroundMode::full;
    if (s == "graph-only") return GroundMode::graph_only;
    if (s == "vlm-only") return GroundMode::vlm_only;
    if (s == "no-edges") return GroundMode::no_edges;
    if (s == "no-denoise") return GroundMode::no_denoise;
    throw std::invalid_argument(
        "unknown mode '" + s + "' (expected full|graph-only|vlm-only|no-edges|no-denoise)");
}

namespace {

void dump_fired_gate(const RunnerConfig& cfg, const std::string& query_id,
                     const GateDecision& decision, const TieBreakRequest& req,
                     const std::vector<std::string>& transcript,
                     const std::optional<int>& choice, const std::string& path) {
    const std::filesystem::path dir(cfg.dump_dir);
    write_png_rgb(req.image, (dir / (query_id + "_candidates.png")).string());
    json j;
    j["query_id"] = query_id;
    j["mode"] = to_string(cfg.mode);
    j["reason"] = to_string(decision.reason);
    j["candidates"] = decision.candidates;
    json markers = json::object();
    for (const auto& [marker, object_id] : req.marker_to_object) {
        markers[std::to_string(marker)] = object_id;
    }
    j["markers"] = markers;
    j["prompt"] = req.text;
    j["transcript"] = transcript;
    if (choice) {
        j["choice"] = *choice;
    } else {
        j["choice"] = nullptr;
    }
    j["path"] = path;
    write_text_file((dir / (query_id + "_tiebreak.json")).string(), j.dump(2) + "\n");
}

}  // namespace

GroundOutcome ground_one(const std::string& query_id, const std::string& text,
                         const SceneGraph3D& scene, EmbeddingProvider& embedder,
                         ChatClient* chat, const RunnerConfig& cfg) {
    QueryGraph gq;
    if (cfg.parser == QueryParser::llm) {
        if (chat == nullptr) {
            throw std::invalid_argument("llm query parser requires a chat provider");
        }
        gq = parse_query_llm(text, *chat);
    } else {
        gq = parse_query_rules(text);
    }

    MatcherConfig matcher = cfg.matcher;
    const bool edges_enabled =
        cfg.mode != GroundMode::no_edges && cfg.mode != GroundMode::vlm_only;
    if (cfg.mode == GroundMode::vlm_only) {
        // Rank purely by target similarity; landmarks and edges carry no weight.
        matcher.alpha = 1.0;
        matcher.beta = 0.0;
        matcher.gamma = 0.0;
        matcher.delta = 0.0;
    }
    const GroundResult result = ground(gq, scene, embedder, matcher, edges_enabled);

    GateDecision decision;
    if (cfg.mode == GroundMode::vlm_only) {
        // Always defer to the VLM over the top-ranked candidates; this is a
        // forced tie-break, not a gate rule firing.
        decision.fire = true;
        for (const auto& m : result.ranked) {
            if (static_cast<int>(decision.candidates.size()) >= cfg.gate.max_candidates) break;
            decision.candidates.push_back(m.assignment.at(0));
        }
    } else if (cfg.mode != GroundMode::graph_only) {
        decision = should_gate(result, gq, scene, cfg.gate);
    }

    GroundOutcome outcome;
    std::optional<int> choice;
    std::vector<std::string> transcript;
    TieBreakRequest req;
    if (decision.fire) {
        req = build_tie_break_request(decision, gq, scene, cfg.gate);
        if (chat != nullptr) {
            outcome.tie_break_attempted = true;
            choice = tie_break(req, *chat, &transcript);
        }
    }
    const Resolution res = resolve(result, decision, choice);

    const Mapping* chosen = &result.ranked.front();
    for (const auto& m : result.ranked) {
        if (m.assignment.at(0) == res.object_id) {
            chosen = &m;
            break;
        }
    }

    ResultRecord rec;
    rec.query_id = query_id;
    rec.predicted_object_id = res.object_id;
    rec.predicted_aabb = scene.at(res.object_id).aabb;
    rec.total = chosen->total;
    rec.s_target = chosen->s_target;
    rec.s_node = chosen->s_node_mean;
    rec.s_edge = chosen->s_edge_mean;
    rec.completion = chosen->completion;
    rec.path = res.path;
    if (result.ranked.size() >= 2) {
        rec.runner_up_margin = result.ranked[0].total - result.ranked[1].total;
    }
    outcome.record = std::move(rec);
    outcome.gate = decision;

    if (decision.fire && !cfg.dump_dir.empty()) {
        dump_fired_gate(cfg, query_id, decision, req, transcript, choice,
                        outcome.record.path);
    }
    return outcome;
}

RunReport ground_all(const std::vector<QueryRecord>& queries, const SceneGraph3D& scene,
                     EmbeddingProvider& embedder, ChatClient* chat, const RunnerConfig& cfg) {
    SceneGraph3D working =
        cfg.mode == GroundMode::no_denoise ? scene : denoise_scene(scene, cfg.association);
    if (!cfg.dump_dir.empty()) {
        std::filesystem::create_directories(cfg.dump_dir);
    }

    std::vector<std::optional<GroundOutcome>> outcomes(queries.size());
    std::vector<std::optional<std::string>> failures(queries.size());
    std::atomic<std::size_t> cursor{0};
    const auto worker = [&]() {
        while (true) {
            const std::size_t i = cursor.fetch_add(1);
            if (i >= queries.size()) break;
            try {
                outcomes[i] = ground_one(queries[i].query_id, queries[i].text, working,
                                         embedder, chat, cfg);
            } catch (const std::exception& e) {
                failures[i] = e.what();
            }
        }
    };
    const int jobs = std::max(1, cfg.jobs);
    if (jobs == 1 || queries.size() <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(jobs));
        for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    RunReport report;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        if (outcomes[i]) {
            report.results.push_back(outcomes[i]->record);
            if (outcomes[i]->gate.fire) ++report.gates_fired;
            if (outcomes[i]->record.path == "vlm") ++report.vlm_picks;
        } else if (failures[i]) {
            report.errors.emplace_back(queries[i].query_id, *failures[i]);
        }
    }
    std::stable_sort(report.results.begin(), report.results.end(),
                     [](const ResultRecord& a, const ResultRecord& b) {
                         return a.query_id < b.query_id;
                     });
    std::stable_sort(report.errors.begin(), report.errors.end());
    return report;
}

namespace {

void expect_object(const json& j, const std::string& name) {
    if (!j.is_object()) {
        throw std::invalid_argument("config: '" + name + "' must be a JSON object");
    }
}

void apply_matcher(const json& j, MatcherConfig& cfg) {
    expect_object(j, "matcher");
    for (const auto& [k, v] : j.items()) {
        if (k == "alpha") cfg.alpha = v.get<double>();
        else if (k == "beta") cfg.beta = v.get<double>();
        else if (k == "gamma") cfg.gamma = v.get<double>();
        else if (k == "delta") cfg.delta = v.get<double>();
        else if (k == "label_sim_threshold") cfg.label_sim_threshold = v.get<double>();
        else if (k == "top_k_fallback") cfg.top_k_fallback = v.get<int>();
        else if (k == "allow_landmark_skip") cfg.allow_landmark_skip = v.get<bool>();
        else throw std::invalid_argument("config: unknown key 'matcher." + k + "'");
    }
}

void apply_association(const json& j, AssociationConfig& cfg) {
    expect_object(j, "association");
    for (const auto& [k, v] : j.items()) {
        if (k == "geom_iou_min") cfg.geom_iou_min = v.get<double>();
        else if (k == "sem_cos_min") cfg.sem_cos_min = v.get<double>();
        else if (k == "min_points") cfg.min_points = v.get<int>();
        else if (k == "dbscan_eps") cfg.dbscan_eps = v.get<double>();
        else if (k == "dbscan_min_pts") cfg.dbscan_min_pts = v.get<int>();
        else throw std::invalid_argument("config: unknown key 'association." + k + "'");
    }
}

void apply_gate(const json& j, GateConfig& cfg) {
    expect_object(j, "gate");
    for (const auto& [k, v] : j.items()) {
        if (k == "margin") cfg.margin = v.get<double>();
        else if (k == "near_m") cfg.near_m = v.get<double>();
        else if (k == "max_candidates") cfg.max_candidates = v.get<int>();
        else if (k == "image_width") cfg.image_width = v.get<int>();
        else if (k == "image_height") cfg.image_height = v.get<int>();
        else throw std::invalid_argument("config: unknown key 'gate." + k + "'");
    }
}

void apply_geometric(const json& j, GeometricConfig& cfg) {
    expect_object(j, "geometric");
    for (const auto& [k, v] : j.items()) {
        if (k == "max_pair_distance") cfg.max_pair_distance = v.get<double>();
        else if (k == "near_distance") cfg.near_distance = v.get<double>();
        else if (k == "axis_margin") cfg.axis_margin = v.get<double>();
        else if (k == "touch_eps") cfg.touch_eps = v.get<double>();
        else throw std::invalid_argument("config: unknown key 'geometric." + k + "'");
    }
}

ProviderConfig apply_provider(const json& j, const std::string& name) {
    expect_object(j, name);
    ProviderConfig cfg;
    for (const auto& [k, v] : j.items()) {
        if (k == "endpoint") cfg.endpoint = v.get<std::string>();
        else if (k == "api_key_env") cfg.api_key_env = v.get<std::string>();
        else if (k == "model") cfg.model = v.get<std::string>();
        else if (k == "timeout_s") cfg.timeout_s = v.get<double>();
        else if (k == "max_retries") cfg.max_retries = v.get<int>();
        else if (k == "requests_per_minute") cfg.requests_per_minute = v.get<int>();
        else throw std::invalid_argument("config: unknown key '" + name + "." + k + "'");
    }
    cfg.validate();
    return cfg;
}

}  // namespace

MasterConfig master_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config: bad JSON: ") + e.what());
    }
    if (!j.is_object()) {
        throw std::invalid_argument("config: top level must be a JSON object");
    }
    MasterConfig out;
    try {
        for (const auto& [k, v] : j.items()) {
            if (k == "matcher") apply_matcher(v, out.matcher);
            else if (k == "association") apply_association(v, out.association);
            else if (k == "gate") apply_gate(v, out.gate);
            else if (k == "geometric") apply_geometric(v, out.geometric);
            else if (k == "embed_provider") out.embed_provider = apply_provider(v, "embed_provider");
            else if (k == "chat_provider") out.chat_provider = apply_provider(v, "chat_provider");
            else if (k == "frame_stride") out.frame_stride = v.get<int>();
            else if (k == "min_confidence") out.min_confidence = v.get<double>();
            else throw std::invalid_argument("config: unknown key '" + k + "'");
        }
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config: bad value: ") + e.what());
    }
    if (out.frame_stride < 1) {
        throw std::invalid_argument("config: frame_stride must be >= 1");
    }
    if (out.min_confidence < 0.0 || out.min_confidence > 1.0) {
        throw std::invalid_argument("config: min_confidence must be in [0, 1]");
    }
    out.association.validate();
    return out;
}

MasterConfig load_master_config(const std::string& path) {
    return master_config_from_json(read_text_file(path));
}

}  // namespace graphground
