// Acceptance gate: one PASS/FAIL line per release criterion, nonzero exit on
// any failure. Every check runs hermetically on mock providers.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "graphground/evalharness.hpp"
#include "graphground/gate.hpp"
#include "graphground/ingest.hpp"
#include "graphground/matcher.hpp"
#include "graphground/queryparse.hpp"
#include "graphground/reconstruct.hpp"
#include "graphground/relations.hpp"
#include "graphground/runner.hpp"

#include "../support.hpp"

using namespace graphground;
using ggtest::box_at;
using ggtest::TempDir;

namespace {

using Verdict = std::pair<bool, std::string>;

int g_failures = 0;

void run_check(const std::string& name, const std::function<Verdict()>& fn) {
    Verdict v;
    try {
        v = fn();
    } catch (const std::exception& e) {
        v = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%s] %-24s %s\n", v.first ? "PASS" : "FAIL", name.c_str(), v.second.c_str());
    std::fflush(stdout);
    if (!v.first) ++g_failures;
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list args;
    va_start(args, f);
    std::vsnprintf(buf, sizeof(buf), f, args);
    va_end(args);
    return buf;
}

/// Embedder returning prescribed unit vectors, for exact-cosine checks.
class TableEmbedder : public EmbeddingProvider {
public:
    void set(const std::string& text, const Embedding& e) { table_[text] = e; }
    std::vector<Embedding> embed(const std::vector<std::string>& texts) override {
        std::vector<Embedding> out;
        for (const std::string& t : texts) out.push_back(table_.at(t));
        return out;
    }

private:
    std::map<std::string, Embedding> table_;
};

Embedding vec3(double x, double y, double z) {
    Embedding e(3);
    e << x, y, z;
    return e;
}

Embedding at_cosine(double c) { return vec3(c, std::sqrt(1.0 - c * c), 0.0); }

std::vector<std::string> gt_labels(const SynthInstance& inst) {
    std::set<std::string> labels;
    for (const auto& [qid, gt] : inst.gt_ids) labels.insert(inst.scene.at(gt).label);
    return {labels.begin(), labels.end()};
}

// --- checks -----------------------------------------------------------------

Verdict oracle_equivalence() {
    const auto t0 = std::chrono::steady_clock::now();
    MockEmbedder embedder;
    const MatcherConfig cfg;

    std::vector<SynthSpec> shapes(5);
    shapes[0] = SynthSpec{};  // 8 objects, one group of 3
    shapes[1].n_objects = 6;
    shapes[1].duplicates_per_group = 2;
    shapes[2].n_objects = 9;
    shapes[2].duplicates_per_group = 4;
    shapes[3].n_objects = 10;
    shapes[3].n_duplicate_groups = 2;
    shapes[4].n_objects = 12;
    shapes[4].n_duplicate_groups = 2;

    int instances = 0;
    int comparisons = 0;
    int mismatches = 0;
    for (std::uint64_t seed = 1; seed <= 200; ++seed) {
        const SynthInstance inst = gen_synthetic(seed, shapes[seed % shapes.size()]);
        ++instances;
        for (const auto& q : inst.queries) {
            const QueryGraph gq = parse_query_rules(q.text);
            const GroundResult got = ground(gq, inst.scene, embedder, cfg, true);
            const Mapping want = brute_force_ground(gq, inst.scene, embedder, cfg, true);
            ++comparisons;
            if (std::abs(got.ranked[0].total - want.total) > 1e-9 ||
                got.ranked[0].assignment.at(0) != want.assignment.at(0)) {
                ++mismatches;
            }
        }
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool ok = instances >= 200 && mismatches == 0 && secs < 60.0;
    return {ok, fmt("%d instances, %d queries, %d mismatches @1e-9, %.1fs", instances,
                    comparisons, mismatches, secs)};
}

Verdict score_arithmetic() {
    TableEmbedder table;
    table.set("cup", vec3(1, 0, 0));
    table.set("table", vec3(0, 1, 0));
    table.set("lamp", vec3(0, 0, 1));
    table.set("on", vec3(1, 0, 0));
    table.set("near", vec3(0, 0, 1));
    table.set("atop", at_cosine(0.7));

    ObjectInstance target = ggtest::make_object(10, "mug", box_at(0, 0, 1, 0.2, 0.2, 0.2));
    target.embedding = at_cosine(0.9);
    ObjectInstance desk = ggtest::make_object(20, "desk", box_at(0, 0, 0.4, 1, 1, 0.8));
    desk.embedding = vec3(0.6, 0.8, 0);  // cosine 0.8 against "table"
    SceneGraph3D gs = ggtest::make_scene({target, desk}, {{10, 20, "atop", 1, Provenance::vlm}});
    gs.embedding_dim = 3;

    const QueryGraph gq =
        ggtest::make_query({"cup", "table", "lamp"}, {{0, 1, "on"}, {0, 2, "near"}});
    const MatchContext ctx = build_match_context(gq, gs, table, MatcherConfig{});
    const Mapping m = score_mapping({{0, 10}, {1, 20}}, ctx);
    const bool ok = std::abs(m.total - 0.7017) <= 1e-4;
    return {ok, fmt("components %.2f/%.2f/%.2f/%.4f -> total %.6f vs 0.7017 +/- 1e-4",
                    m.s_target, m.s_node_mean, m.s_edge_mean, m.completion, m.total)};
}

Verdict edges_ablation() {
    MockEmbedder embedder;
    const MatcherConfig cfg;
    const int n = 200;

    bool ok = true;
    std::string detail;
    for (int k : {2, 3, 4}) {
        SynthSpec spec;
        spec.n_objects = k + 4;
        spec.duplicates_per_group = k;
        int on_hits = 0;
        int off_hits = 0;
        for (int i = 1; i <= n; ++i) {
            const SynthInstance inst =
                gen_synthetic(static_cast<std::uint64_t>(k) * 100000 + i, spec);
            const QueryRecord& q = inst.queries.front();  // the one relational query
            const int gt = inst.gt_ids.at(q.query_id);
            const QueryGraph gq = parse_query_rules(q.text);
            on_hits += ground(gq, inst.scene, embedder, cfg, true).ranked[0].assignment.at(0) == gt;
            off_hits +=
                ground(gq, inst.scene, embedder, cfg, false).ranked[0].assignment.at(0) == gt;
        }
        const double p = 1.0 / k;
        const double half = 1.96 * std::sqrt(p * (1.0 - p) / n);
        const double rate = static_cast<double>(off_hits) / n;
        const bool k_ok = on_hits == n && rate >= p - half && rate <= p + half;
        ok = ok && k_ok;
        detail += fmt("k=%d on %d/%d off %.3f in [%.3f,%.3f]; ", k, on_hits, n, rate, p - half,
                      p + half);
    }
    return {ok, detail};
}

Verdict denoise_ablation() {
    MockEmbedder embedder;
    RunnerConfig rc;
    rc.association = synth_association_config();

    int n = 0;
    int denoised_hits = 0;
    int raw_hits = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        const SynthInstance inst = gen_synthetic(seed);
        const SceneGraph3D bad = corrupt_scene(inst.scene, gt_labels(inst), seed);

        rc.mode = GroundMode::full;
        const MetricsReport with = evaluate(
            ground_all(inst.queries, bad, embedder, nullptr, rc).results, inst.queries);
        rc.mode = GroundMode::no_denoise;
        const MetricsReport without = evaluate(
            ground_all(inst.queries, bad, embedder, nullptr, rc).results, inst.queries);

        n += static_cast<int>(inst.queries.size());
        denoised_hits += with.overall.hits25;
        raw_hits += without.overall.hits25;
    }
    const double gap = 100.0 * (denoised_hits - raw_hits) / n;
    return {gap >= 10.0, fmt("acc@0.25 denoise %.1f%% vs raw %.1f%% over %d queries (gap %.1fpp)",
                             100.0 * denoised_hits / n, 100.0 * raw_hits / n, n, gap)};
}

Verdict gate_behavior() {
    MockEmbedder embedder;
    RunnerConfig rc;
    rc.association = synth_association_config();

    // a scripted NONE must leave the full pipeline identical to graph-only
    int none_scenes = 0;
    bool none_ok = true;
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        const SynthInstance inst = gen_synthetic(seed);
        MockChat chat;
        chat.set_default_response("NONE");
        rc.mode = GroundMode::full;
        const std::string full =
            results_to_jsonl(ground_all(inst.queries, inst.scene, embedder, &chat, rc).results);
        rc.mode = GroundMode::graph_only;
        const std::string graph =
            results_to_jsonl(ground_all(inst.queries, inst.scene, embedder, nullptr, rc).results);
        none_ok = none_ok && full == graph;
        ++none_scenes;
    }

    // a scripted runner-up pick may flip only gate-eligible queries to "vlm";
    // a bare duplicate-label query per scene guarantees a fired gate with >= 2
    // candidates, so the pick count cannot be trivially zero
    int vlm_picks = 0;
    int offgate_picks = 0;
    int queries = 0;
    for (std::uint64_t seed = 101; seed <= 110; ++seed) {
        const SynthInstance inst = gen_synthetic(seed);
        std::vector<QueryRecord> qs = inst.queries;
        std::map<std::string, int> freq;
        for (const auto& [id, node] : inst.scene.nodes) ++freq[node.label];
        for (const auto& [label, n] : freq) {
            if (n < 2) continue;
            QueryRecord extra;
            extra.query_id = "qx-dup";
            extra.text = "the " + label;
            qs.push_back(extra);
            break;
        }
        const SceneGraph3D denoised = denoise_scene(inst.scene, rc.association);
        std::map<std::string, bool> eligible;
        for (const auto& q : qs) {
            const QueryGraph gq = parse_query_rules(q.text);
            const GroundResult r = ground(gq, denoised, embedder, rc.matcher, true);
            eligible[q.query_id] = should_gate(r, gq, denoised, rc.gate).fire;
        }
        MockChat chat;
        chat.set_default_response("2");
        rc.mode = GroundMode::full;
        const RunReport rep = ground_all(qs, inst.scene, embedder, &chat, rc);
        queries += static_cast<int>(rep.results.size());
        for (const auto& r : rep.results) {
            if (r.path != "vlm") continue;
            ++vlm_picks;
            if (!eligible.at(r.query_id)) ++offgate_picks;
        }
    }
    const bool ok = none_ok && vlm_picks > 0 && offgate_picks == 0;
    return {ok, fmt("NONE==graph-only on %d scenes: %s; runner-up picks %d/%d, off-gate %d",
                    none_scenes, none_ok ? "yes" : "NO", vlm_picks, queries, offgate_picks)};
}

Verdict geometry_roundtrip() {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> ufocal(300.0, 800.0);
    std::uniform_real_distribution<double> ushift(-20.0, 20.0);
    std::uniform_real_distribution<double> utrans(-3.0, 3.0);
    std::uniform_int_distribution<int> umm(200, 6000);

    int checked = 0;
    double max_px = 0.0;
    for (int f = 0; f < 10; ++f) {
        FrameRecord fr;
        fr.frame_id = f;
        fr.width = 640;
        fr.height = 480;
        fr.fx = ufocal(rng);
        fr.fy = ufocal(rng);
        fr.cx = 319.5 + ushift(rng);
        fr.cy = 239.5 + ushift(rng);
        fr.pose = Mat4::Identity();
        fr.pose.block<3, 3>(0, 0) = ggtest::random_rotation(rng);
        fr.pose.block<3, 1>(0, 3) = Vec3(utrans(rng), utrans(rng), utrans(rng));

        const std::size_t total = static_cast<std::size_t>(fr.width) * fr.height;
        std::vector<bool> mask(total, false);
        DepthImage depth;
        depth.width = fr.width;
        depth.height = fr.height;
        depth.millimeters.assign(total, 0);
        std::uniform_int_distribution<std::size_t> upix(0, total - 1);
        std::set<std::size_t> chosen;
        while (chosen.size() < 1000) chosen.insert(upix(rng));
        for (std::size_t px : chosen) {
            mask[px] = true;
            depth.millimeters[px] = static_cast<std::uint16_t>(umm(rng));
        }

        Detection det;
        det.marker = 1;
        det.label = "x";
        det.rle = encode_rle(mask);
        const PointCloud cloud = backproject_mask(fr, det, depth);
        if (cloud.size() != chosen.size()) {
            return {false, fmt("expected %zu points, got %zu", chosen.size(), cloud.size())};
        }
        std::size_t i = 0;
        for (std::size_t px : chosen) {  // set iterates in row-major pixel order
            const double u = static_cast<double>(px % fr.width);
            const double v = static_cast<double>(px / fr.width);
            const auto uv = project_point(fr, cloud[i++]);
            if (!uv) return {false, "reprojection fell behind the camera"};
            max_px = std::max(max_px, (Eigen::Vector2d(u, v) - *uv).norm());
            ++checked;
        }
    }

    std::mt19937_64 box_rng(99);
    double max_iou_err = 0.0;
    int pairs = 0;
    for (int i = 0; i < 50; ++i) {
        const Aabb a = ggtest::random_box(box_rng);
        const Aabb b = ggtest::random_box(box_rng);
        const double mc = ggtest::mc_iou(a, b, 1000000, 7000 + i);
        max_iou_err = std::max(max_iou_err, std::abs(aabb_iou(a, b) - mc));
        ++pairs;
    }

    const bool ok = checked == 10000 && max_px <= 0.5 && pairs == 50 && max_iou_err <= 0.005;
    return {ok, fmt("%d pixels max err %.2e px (<=0.5); %d box pairs max |iou-mc| %.5f (<=0.005)",
                    checked, max_px, pairs, max_iou_err)};
}

Verdict relation_parsing() {
    FrameRecord f;
    f.frame_id = 9;
    f.fx = f.fy = 10;
    f.cx = f.cy = 2;
    f.width = f.height = 4;
    const std::vector<std::string> labels = {"cup",   "lamp",    "table",     "sofa",
                                             "chair", "monitor", "trash can", "shelf"};
    for (std::size_t i = 0; i < labels.size(); ++i) {
        Detection d;
        d.marker = static_cast<int>(i) + 1;
        d.label = labels[i];
        std::vector<bool> mask(16, false);
        mask[i] = true;
        d.rle = encode_rle(mask);
        f.detections.push_back(d);
    }

    const auto canonical = parse_relations("cup[1] is on top of table[3]", f);
    bool ok = canonical.size() == 1 && canonical[0].src_marker == 1 &&
              canonical[0].predicate == "on top of" && canonical[0].dst_marker == 3;

    const std::string response =
        read_text_file(std::string(GRAPHGROUND_FIXTURES_DIR) + "/relations_mixed.txt");
    const std::string expected_text =
        read_text_file(std::string(GRAPHGROUND_FIXTURES_DIR) + "/relations_mixed_expected.jsonl");
    std::vector<std::tuple<int, std::string, int>> expected;
    nlohmann::json header;
    std::istringstream in(expected_text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const nlohmann::json j = nlohmann::json::parse(line);
        if (j.contains("lines")) {
            header = j;
        } else {
            expected.emplace_back(j["src"].get<int>(), j["predicate"].get<std::string>(),
                                  j["dst"].get<int>());
        }
    }

    ParseStats stats;
    const auto triples = parse_relations(response, f, &stats);
    ok = ok && stats.lines == header["lines"].get<int>() &&
         stats.parse_failures == header["parse_failures"].get<int>() &&
         stats.dangling_markers == header["dangling_markers"].get<int>() &&
         triples.size() == expected.size();
    if (ok) {
        for (std::size_t i = 0; i < triples.size(); ++i) {
            ok = ok && std::make_tuple(triples[i].src_marker, triples[i].predicate,
                                       triples[i].dst_marker) == expected[i];
        }
    }
    return {ok, fmt("canonical triple + fixture: %d lines, %zu triples, %d failures, %d dangling",
                    stats.lines, triples.size(), stats.parse_failures, stats.dangling_markers)};
}

Verdict persistence_roundtrip() {
    TempDir tmp;
    std::mt19937_64 rng(4242);
    const std::vector<std::string> labels = {"chair", "sofa", "lamp", "vase", "shelf", "rug"};
    const std::vector<std::string> predicates = {"near", "left of", "above", "on top of"};
    std::uniform_real_distribution<double> coord(0.0, 8.0);

    int identical = 0;
    for (int i = 0; i < 100; ++i) {
        SceneGraph3D g;
        g.embedding_dim = 16;
        const int n = 1 + static_cast<int>(rng() % 10);
        for (int id = 0; id < n; ++id) {
            ObjectInstance o;
            o.id = id;
            o.label = labels[rng() % labels.size()];
            o.embedding = mock_embed_text(o.label + "#" + std::to_string(rng() % 7), 16);
            o.num_observations = 1 + static_cast<int>(rng() % 5);
            if (rng() % 4 == 0) {
                o.aabb = ggtest::random_box(rng);  // point-free node
            } else {
                const int npts = 5 + static_cast<int>(rng() % 40);
                for (int p = 0; p < npts; ++p) {
                    o.points.emplace_back(coord(rng), coord(rng), coord(rng) / 4.0);
                }
                o.aabb = Aabb::from_points(o.points);
            }
            if (rng() % 3 == 0) o.captions.push_back("a \"quoted\" caption \\ with escapes");
            if (rng() % 3 == 1) o.captions.push_back("plain wooden thing");
            g.nodes[id] = std::move(o);
        }
        const int nedges = static_cast<int>(rng() % 6);
        for (int e = 0; e < nedges && n > 1; ++e) {
            RelationEdge edge;
            edge.src_id = static_cast<int>(rng() % n);
            edge.dst_id = static_cast<int>((edge.src_id + 1 + rng() % (n - 1)) % n);
            edge.predicate = predicates[rng() % predicates.size()];
            edge.count = 1 + static_cast<int>(rng() % 4);
            edge.provenance = rng() % 2 ? Provenance::vlm : Provenance::geometric;
            g.edges.push_back(edge);
        }
        g.edges = aggregate_edges(g.edges);
        g.validate();

        const std::string a = tmp.file("a.json");
        const std::string b = tmp.file("b.json");
        save_scene_graph(g, a);
        save_scene_graph(load_scene_graph(a), b);
        identical += read_text_file(a) == read_text_file(b);
    }
    return {identical == 100, fmt("%d/100 graphs byte-identical after save->load->save",
                                  identical)};
}

std::string run_pipeline_once(std::uint64_t seed) {
    TempDir tmp;
    SynthSpec spec;
    spec.with_frames = true;
    const SynthInstance inst = gen_synthetic(seed, spec);

    std::vector<FrameRecord> frames;
    for (std::size_t i = 0; i < inst.frames.size(); ++i) {
        const std::string depth_name = "depth_" + std::to_string(i) + ".pgm";
        save_depth_pgm(inst.depths[i], tmp.file(depth_name));
        FrameRecord fr = inst.frames[i];
        fr.depth_path = depth_name;
        const std::string frame_path = tmp.file("frame_" + std::to_string(i) + ".json");
        save_frame(fr, frame_path);
        frames.push_back(load_frame(frame_path));
    }

    MockEmbedder embedder;
    BuildResult built = build_scene(frames, embedder, synth_association_config());

    MockChat relation_chat;
    relation_chat.set_default_response("");
    auto edges = built.graph.edges;
    const auto vlm = extract_relations(frames, built.bindings, relation_chat);
    edges.insert(edges.end(), vlm.begin(), vlm.end());
    built.graph.edges = aggregate_edges(edges);
    const auto geo = geometric_relations(built.graph);
    edges = built.graph.edges;
    edges.insert(edges.end(), geo.begin(), geo.end());
    built.graph.edges = aggregate_edges(edges);

    MockChat chat;
    chat.set_default_response("NONE");
    RunnerConfig rc;
    rc.association = synth_association_config();
    rc.mode = GroundMode::full;
    const RunReport rep = ground_all(inst.queries, built.graph, embedder, &chat, rc);
    return metrics_to_json(evaluate(rep.results, inst.queries)) + results_to_jsonl(rep.results);
}

Verdict pipeline_determinism() {
    const std::string first = run_pipeline_once(5);
    const std::string second = run_pipeline_once(5);
    return {first == second && !first.empty(),
            fmt("frames->build->relate->ground->eval twice: %zu bytes, %s", first.size(),
                first == second ? "byte-identical" : "DIFFER")};
}

}  // namespace

int main() {
    run_check("oracle equivalence", oracle_equivalence);
    run_check("score arithmetic", score_arithmetic);
    run_check("edges ablation", edges_ablation);
    run_check("denoise ablation", denoise_ablation);
    run_check("gate behavior", gate_behavior);
    run_check("geometry round-trip", geometry_roundtrip);
    run_check("relation parsing", relation_parsing);
    run_check("persistence round-trip", persistence_roundtrip);
    run_check("pipeline determinism", pipeline_determinism);

    if (g_failures > 0) {
        std::printf("%d acceptance check(s) failed\n", g_failures);
        return 1;
    }
    std::printf("all acceptance checks passed\n");
    return 0;
}
