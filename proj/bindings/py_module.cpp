#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "graphground/evalharness.hpp"
#include "graphground/ingest.hpp"
#include "graphground/queryparse.hpp"
#include "graphground/render.hpp"
#include "graphground/runner.hpp"

namespace py = pybind11;
using namespace graphground;

namespace {

Vec3 to_vec3(const std::array<double, 3>& a) { return Vec3(a[0], a[1], a[2]); }

/// JSON-string boundary: scenes travel as scene-graph JSON, queries/results
/// as JSONL, exactly like the CLI file formats.
std::string py_synth(std::uint64_t seed, int objects, int groups, int dup, double density,
                     bool corrupt) {
    SynthSpec spec;
    spec.n_objects = objects;
    spec.n_duplicate_groups = groups;
    spec.duplicates_per_group = dup;
    spec.relation_density = density;
    const SynthInstance inst = gen_synthetic(seed, spec);
    nlohmann::json out;
    out["scene"] = scene_graph_to_json(inst.scene);
    out["queries"] = queries_to_jsonl(inst.queries);
    nlohmann::json gt = nlohmann::json::object();
    for (const auto& [qid, id] : inst.gt_ids) gt[qid] = id;
    out["gt_ids"] = gt;
    const AssociationConfig assoc = synth_association_config();
    out["config"] = {{"association",
                      {{"geom_iou_min", assoc.geom_iou_min},
                       {"sem_cos_min", assoc.sem_cos_min},
                       {"min_points", assoc.min_points},
                       {"dbscan_eps", assoc.dbscan_eps},
                       {"dbscan_min_pts", assoc.dbscan_min_pts}}}};
    if (corrupt) {
        std::vector<std::string> labels;
        for (const auto& [qid, id] : inst.gt_ids) labels.push_back(inst.scene.at(id).label);
        out["scene_corrupt"] = scene_graph_to_json(corrupt_scene(inst.scene, labels, seed));
    }
    return out.dump();
}

std::string py_ground(const std::string& scene_json, const std::string& queries_jsonl,
                      const std::string& mode, int jobs, const std::string& chat_response,
                      const std::string& config_json) {
    const SceneGraph3D scene = scene_graph_from_json(scene_json);
    const auto queries = queries_from_jsonl(queries_jsonl);
    RunnerConfig cfg;
    if (!config_json.empty()) {
        const MasterConfig master = master_config_from_json(config_json);
        cfg.matcher = master.matcher;
        cfg.association = master.association;
        cfg.gate = master.gate;
    }
    cfg.mode = ground_mode_from_string(mode);
    cfg.jobs = jobs;
    MockEmbedder embedder;
    MockChat chat;
    chat.set_default_response(chat_response);
    ChatClient* chat_ptr = cfg.mode == GroundMode::graph_only ? nullptr : &chat;
    const RunReport report = ground_all(queries, scene, embedder, chat_ptr, cfg);
    if (!report.errors.empty()) {
        throw std::runtime_error("query '" + report.errors.front().first +
                                 "' failed: " + report.errors.front().second);
    }
    return results_to_jsonl(report.results);
}

std::string py_evaluate(const std::string& results_jsonl, const std::string& queries_jsonl) {
    return metrics_to_json(
        evaluate(results_from_jsonl(results_jsonl), queries_from_jsonl(queries_jsonl)));
}

std::string py_parse_query(const std::string& text) {
    const QueryGraph gq = parse_query_rules(text);
    nlohmann::json j;
    j["raw_query"] = gq.raw_query;
    j["nodes"] = nlohmann::json::array();
    for (const auto& n : gq.nodes) {
        j["nodes"].push_back({{"label", n.label}, {"attributes", n.attributes}});
    }
    j["edges"] = nlohmann::json::array();
    for (const auto& e : gq.edges) {
        j["edges"].push_back(
            {{"src", e.src_idx}, {"dst", e.dst_idx}, {"predicate", e.predicate}});
    }
    return j.dump();
}

py::bytes py_render(const std::string& scene_json, const std::vector<int>& ids, int width,
                    int height) {
    const SceneGraph3D scene = scene_graph_from_json(scene_json);
    std::vector<int> candidates = ids;
    if (candidates.empty()) {
        for (const auto& [id, obj] : scene.nodes) candidates.push_back(id);
    }
    return py::bytes(encode_png_rgb(render_candidates(scene, candidates, width, height)));
}

}  // namespace

PYBIND11_MODULE(_graphground, m) {
    m.doc() = "Zero-shot 3D visual grounding over object-centric scene graphs";

    m.def("synth", &py_synth, py::arg("seed"), py::arg("objects") = 8, py::arg("groups") = 1,
          py::arg("dup") = 3, py::arg("density") = 1.0, py::arg("corrupt") = false,
          "Generate a synthetic scene; returns a JSON bundle "
          "{scene, queries, gt_ids[, scene_corrupt]}.");
    m.def("ground", &py_ground, py::arg("scene_json"), py::arg("queries_jsonl"),
          py::arg("mode") = "full", py::arg("jobs") = 1, py::arg("chat_response") = "NONE",
          py::arg("config_json") = "",
          "Ground queries with mock providers; returns results JSONL. config_json takes the "
          "same schema as the CLI --config file.");
    m.def("evaluate", &py_evaluate, py::arg("results_jsonl"), py::arg("queries_jsonl"),
          "Acc@{0.1,0.25,0.5} metrics JSON for results against gt queries.");
    m.def("parse_query", &py_parse_query, py::arg("text"),
          "Rule-based referring-expression parse; returns a query-graph JSON.");
    m.def("mock_embed", [](const std::string& text, int dim) {
              const Embedding e = mock_embed_text(text, dim);
              return std::vector<double>(e.data(), e.data() + e.size());
          },
          py::arg("text"), py::arg("dim") = 256,
          "Deterministic unit-norm mock text embedding.");
    m.def("aabb_iou",
          [](const std::array<double, 3>& amin, const std::array<double, 3>& amax,
             const std::array<double, 3>& bmin, const std::array<double, 3>& bmax) {
              return aabb_iou(Aabb{to_vec3(amin), to_vec3(amax)},
                              Aabb{to_vec3(bmin), to_vec3(bmax)});
          },
          "3D IoU of two axis-aligned boxes given as (min, max) corners.");
    m.def("render", &py_render, py::arg("scene_json"), py::arg("ids") = std::vector<int>{},
          py::arg("width") = 640, py::arg("height") = 480,
          "Render candidate objects to PNG bytes.");
}
