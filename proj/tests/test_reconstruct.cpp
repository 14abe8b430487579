#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "graphground/ingest.hpp"
#include "graphground/reconstruct.hpp"
#include "support.hpp"

using namespace graphground;
using ggtest::box_at;
using ggtest::TempDir;

namespace {

/// Reference DBSCAN: quadratic neighbor scan, BFS over core points. Border
/// points may legitimately attach to any adjacent core cluster, so the
/// comparison below treats them specially.
struct ReferenceDbscan {
    std::vector<bool> core;
    std::vector<int> labels;  // -1 noise; border points get -2 (ambiguous)
    std::vector<std::set<int>> border_choices;

    ReferenceDbscan(const PointCloud& pts, double eps, int min_pts) {
        const int n = static_cast<int>(pts.size());
        std::vector<std::vector<int>> nbrs(n);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                if ((pts[i] - pts[j]).norm() <= eps) nbrs[i].push_back(j);
            }
        }
        core.resize(n);
        for (int i = 0; i < n; ++i) core[i] = static_cast<int>(nbrs[i].size()) >= min_pts;

        labels.assign(n, -1);
        border_choices.resize(n);
        int next = 0;
        for (int seed = 0; seed < n; ++seed) {
            if (!core[seed] || labels[seed] >= 0) continue;
            const int cluster = next++;
            std::vector<int> stack{seed};
            labels[seed] = cluster;
            while (!stack.empty()) {
                const int u = stack.back();
                stack.pop_back();
                for (int v : nbrs[u]) {
                    if (core[v]) {
                        if (labels[v] < 0) {
                            labels[v] = cluster;
                            stack.push_back(v);
                        }
                    } else {
                        border_choices[v].insert(cluster);
                    }
                }
            }
        }
        for (int i = 0; i < n; ++i) {
            if (!core[i] && !border_choices[i].empty()) labels[i] = -2;
        }
    }
};

PointCloud random_cloud(std::mt19937_64& rng, int n, double span) {
    std::uniform_real_distribution<double> u(0.0, span);
    PointCloud pts;
    for (int i = 0; i < n; ++i) pts.emplace_back(u(rng), u(rng), u(rng));
    return pts;
}

PointCloud cluster_at(std::mt19937_64& rng, const Vec3& center, int n, double radius) {
    std::uniform_real_distribution<double> u(-radius, radius);
    PointCloud pts;
    for (int i = 0; i < n; ++i) pts.push_back(center + Vec3(u(rng), u(rng), u(rng)));
    return pts;
}

ObjectInstance object_with_points(int id, const std::string& label, PointCloud pts) {
    ObjectInstance obj;
    obj.id = id;
    obj.label = label;
    obj.points = std::move(pts);
    obj.aabb = Aabb::from_points(obj.points);
    obj.embedding = mock_embed_text(label);
    return obj;
}

}  // namespace

TEST_SUITE_BEGIN("reconstruct");

TEST_CASE("dbscan matches an exhaustive reference on random clouds") {
    std::mt19937_64 rng(29);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 20 + static_cast<int>(rng() % 60);
        const double span = 1.0 + (trial % 3);
        const double eps = 0.15 + 0.05 * (trial % 4);
        const int min_pts = 3 + static_cast<int>(rng() % 3);
        const PointCloud pts = random_cloud(rng, n, span);

        const std::vector<int> got = dbscan_labels(pts, eps, min_pts);
        const ReferenceDbscan ref(pts, eps, min_pts);

        REQUIRE(got.size() == pts.size());
        // exact agreement on noise, partition agreement on core points,
        // adjacency agreement on border points
        std::map<int, int> cluster_map;  // got cluster -> ref cluster (must be a bijection)
        std::map<int, int> reverse_map;
        for (int i = 0; i < n; ++i) {
            if (ref.labels[i] == -1) {
                CHECK(got[i] == -1);
            } else if (ref.labels[i] == -2) {
                REQUIRE(got[i] >= 0);
            } else {
                REQUIRE(got[i] >= 0);
                auto [fwd, _f] = cluster_map.emplace(got[i], ref.labels[i]);
                CHECK(fwd->second == ref.labels[i]);
                auto [rev, _r] = reverse_map.emplace(ref.labels[i], got[i]);
                CHECK(rev->second == got[i]);
            }
        }
        // border points must sit in a cluster adjacent to them
        for (int i = 0; i < n; ++i) {
            if (ref.labels[i] != -2) continue;
            bool ok = false;
            for (const auto& [got_cluster, ref_cluster] : cluster_map) {
                if (got[i] == got_cluster && ref.border_choices[i].count(ref_cluster)) ok = true;
            }
            CHECK(ok);
        }
    }
}

TEST_CASE("dbscan is deterministic") {
    std::mt19937_64 rng(31);
    const PointCloud pts = random_cloud(rng, 200, 2.0);
    CHECK(dbscan_labels(pts, 0.2, 4) == dbscan_labels(pts, 0.2, 4));
}

TEST_CASE("associate self-match, gate failure, and lower-id tie rule") {
    AssociationConfig cfg;  // iou >= 0.25, cosine >= 0.7
    const Aabb box = box_at(0, 0, 0.5, 1, 1, 1);
    SceneGraph3D g = ggtest::make_scene({ggtest::make_object(0, "chair", box)});

    SUBCASE("identical box and embedding match the object itself") {
        CHECK(associate(g, box, g.nodes.at(0).embedding, cfg) == 0);
    }

    SUBCASE("good overlap but low semantic similarity yields no match") {
        CHECK_FALSE(associate(g, box, mock_embed_text("piano"), cfg).has_value());
    }

    SUBCASE("no geometric overlap yields no match") {
        CHECK_FALSE(
            associate(g, box_at(5, 5, 0.5, 1, 1, 1), g.nodes.at(0).embedding, cfg).has_value());
    }

    SUBCASE("symmetric candidates with equal scores resolve to the lower id") {
        // two identical chairs equidistant from the query box
        SceneGraph3D sym = ggtest::make_scene(
            {ggtest::make_object(3, "chair", box_at(-0.25, 0, 0.5, 1, 1, 1)),
             ggtest::make_object(7, "chair", box_at(0.25, 0, 0.5, 1, 1, 1))});
        const Embedding e = mock_embed_text("chair");
        const auto got = associate(sym, box, e, cfg);

        // exhaustive oracle over candidates with the documented tie rule
        std::optional<int> best;
        double best_score = -1.0;
        for (const auto& [id, obj] : sym.nodes) {
            const double iou = aabb_iou(obj.aabb, box);
            const double cos = cosine(obj.embedding, e);
            if (iou < cfg.geom_iou_min || cos < cfg.sem_cos_min) continue;
            const double score = 0.5 * iou + 0.5 * cos;
            if (score > best_score) {
                best_score = score;
                best = id;
            }
        }
        CHECK(aabb_iou(sym.nodes.at(3).aabb, box) ==
              doctest::Approx(aabb_iou(sym.nodes.at(7).aabb, box)));
        REQUIRE(got.has_value());
        CHECK(got == best);
        CHECK(*got == 3);
    }
}

TEST_CASE("merge_into fuses points, boxes, embeddings, and captions") {
    Embedding ex(2), ey(2);
    ex << 1, 0;
    ey << 0, 1;

    ObjectInstance target;
    target.id = 0;
    target.label = "chair";
    target.points = {Vec3(0, 0, 0), Vec3(1, 1, 1)};
    target.aabb = Aabb::from_points(target.points);
    target.embedding = ex;
    target.num_observations = 1;

    SUBCASE("merging identical embeddings is a no-op on the embedding") {
        merge_into(target, {Vec3(0.5, 0.5, 0.5)}, ex, std::nullopt);
        CHECK(target.embedding.isApprox(ex, 1e-12));
        CHECK(target.num_observations == 2);
        CHECK(target.points.size() == 3);
    }

    SUBCASE("equal-count merge of orthogonal embeddings lands between them") {
        merge_into(target, {}, ey, std::nullopt);
        CHECK(target.embedding[0] == doctest::Approx(0.7071).epsilon(1e-4));
        CHECK(target.embedding[1] == doctest::Approx(0.7071).epsilon(1e-4));
        CHECK(target.embedding.norm() == doctest::Approx(1.0));
    }

    SUBCASE("fusion weights embeddings by observation count") {
        target.num_observations = 3;
        merge_into(target, {}, ey, std::nullopt);
        // normalized (0.75, 0.25)
        CHECK(target.embedding[0] == doctest::Approx(0.9487).epsilon(1e-4));
        CHECK(target.embedding[1] == doctest::Approx(0.3162).epsilon(1e-4));
        CHECK(target.num_observations == 4);
    }

    SUBCASE("the merged box encloses both inputs and captions accumulate") {
        const Aabb before = target.aabb;
        merge_into(target, {Vec3(5, -2, 3)}, ex, std::string("seen again"));
        CHECK(target.aabb.contains(before.min));
        CHECK(target.aabb.contains(before.max));
        CHECK(target.aabb.contains(Vec3(5, -2, 3)));
        REQUIRE(target.captions.size() == 1);
        CHECK(target.captions[0] == "seen again");
    }
}

TEST_CASE("denoise keeps the dominant cluster and enforces min_points") {
    AssociationConfig cfg;  // eps 0.05, min_pts 10, min_points 50
    std::mt19937_64 rng(41);

    SUBCASE("outliers two meters away are removed, the object survives") {
        PointCloud pts = cluster_at(rng, Vec3(1, 1, 1), 1000, 0.05);
        for (int i = 0; i < 5; ++i) pts.push_back(Vec3(3 + i, 3, 3));
        const auto out = denoise(object_with_points(0, "chair", pts), cfg);
        REQUIRE(out.has_value());
        CHECK(out->points.size() == 1000);
        for (const Vec3& p : out->points) CHECK((p - Vec3(1, 1, 1)).norm() < 0.2);
        CHECK(out->aabb.max.x() < 2.0);  // box recomputed on survivors
    }

    SUBCASE("too few surviving points drop the object") {
        const PointCloud pts = cluster_at(rng, Vec3(0, 0, 0), 20, 0.02);
        CHECK_FALSE(denoise(object_with_points(0, "crumb", pts), cfg).has_value());
    }

    SUBCASE("a single tight cluster is untouched") {
        const PointCloud pts = cluster_at(rng, Vec3(0, 0, 0), 200, 0.04);
        const auto out = denoise(object_with_points(0, "chair", pts), cfg);
        REQUIRE(out.has_value());
        CHECK(out->points.size() == 200);
    }
}

TEST_CASE("denoise_scene drops edges touching removed nodes and keeps point-free nodes") {
    AssociationConfig cfg;
    std::mt19937_64 rng(43);
    SceneGraph3D g;
    g.embedding_dim = 256;
    ObjectInstance big = object_with_points(0, "chair", cluster_at(rng, Vec3(0, 0, 0), 300, 0.05));
    ObjectInstance tiny = object_with_points(1, "crumb", cluster_at(rng, Vec3(2, 2, 0), 8, 0.01));
    ObjectInstance hollow = ggtest::make_object(2, "ghost", box_at(4, 4, 0.5, 1, 1, 1));
    hollow.points.clear();
    g.nodes[0] = big;
    g.nodes[1] = tiny;
    g.nodes[2] = hollow;
    g.edges = {{0, 1, "near", 1, Provenance::geometric},
               {0, 2, "left of", 1, Provenance::geometric}};

    const SceneGraph3D out = denoise_scene(g, cfg);
    CHECK(out.nodes.count(0) == 1);
    CHECK(out.nodes.count(1) == 0);  // dropped: below min_points
    CHECK(out.nodes.count(2) == 1);  // point-free nodes have nothing to cluster
    REQUIRE(out.edges.size() == 1);
    CHECK(out.edges[0].dst_id == 2);
}

TEST_CASE("build_scene fuses repeated observations and stays deterministic") {
    TempDir tmp;
    AssociationConfig cfg;
    cfg.dbscan_eps = 0.3;
    cfg.dbscan_min_pts = 3;
    cfg.min_points = 5;
    MockEmbedder embedder;

    // 8x8 depth at 1 m; pixel pitch is z/fx = 0.125 m
    DepthImage depth;
    depth.width = 8;
    depth.height = 8;
    depth.millimeters.assign(64, 1000);
    save_depth_pgm(depth, tmp.file("d.pgm"));

    const auto block_mask = [](int x0, int y0) {
        std::vector<bool> mask(64, false);
        for (int v = y0; v < y0 + 4; ++v) {
            for (int u = x0; u < x0 + 4; ++u) mask[static_cast<std::size_t>(v) * 8 + u] = true;
        }
        return mask;
    };

    FrameRecord frame;
    frame.frame_id = 0;
    frame.fx = frame.fy = 8;
    frame.cx = frame.cy = 4;
    frame.width = frame.height = 8;
    frame.depth_path = tmp.file("d.pgm");
    Detection left;
    left.marker = 1;
    left.label = "chair";
    left.rle = encode_rle(block_mask(0, 0));
    Detection right;
    right.marker = 2;
    right.label = "table";
    right.rle = encode_rle(block_mask(4, 4));
    frame.detections = {left, right};

    SUBCASE("one frame with one detection yields one node") {
        frame.detections = {left};
        const BuildResult r = build_scene({frame}, embedder, cfg);
        REQUIRE(r.graph.nodes.size() == 1);
        CHECK(r.graph.nodes.begin()->second.label == "chair");
        CHECK(r.graph.nodes.begin()->second.num_observations == 1);
        CHECK(r.bindings.at({0, 1}) == r.graph.nodes.begin()->first);
    }

    SUBCASE("the same detection across two frames merges into one node") {
        FrameRecord second = frame;
        second.frame_id = 1;
        second.detections = {left};
        frame.detections = {left};
        const BuildResult r = build_scene({frame, second}, embedder, cfg);
        REQUIRE(r.graph.nodes.size() == 1);
        CHECK(r.graph.nodes.begin()->second.num_observations == 2);
        CHECK(r.stats.merged == 1);
        CHECK(r.stats.created == 1);
        CHECK(r.bindings.at({0, 1}) == r.bindings.at({1, 1}));
    }

    SUBCASE("disjoint detections create separate nodes") {
        const BuildResult r = build_scene({frame}, embedder, cfg);
        CHECK(r.graph.nodes.size() == 2);
        CHECK(static_cast<int>(r.graph.nodes.size()) <= r.stats.detections);
    }

    SUBCASE("masks without valid depth are dropped, empty result is not an error") {
        DepthImage zero = depth;
        zero.millimeters.assign(64, 0);
        save_depth_pgm(zero, tmp.file("z.pgm"));
        frame.depth_path = tmp.file("z.pgm");
        const BuildResult r = build_scene({frame}, embedder, cfg);
        CHECK(r.graph.nodes.empty());
        CHECK(r.stats.dropped_empty == 2);
    }

    SUBCASE("identical inputs build structurally identical graphs") {
        const BuildResult a = build_scene({frame}, embedder, cfg);
        const BuildResult b = build_scene({frame}, embedder, cfg);
        CHECK(scene_graph_to_json(a.graph) == scene_graph_to_json(b.graph));
        CHECK(a.bindings == b.bindings);
    }
}

TEST_CASE("association config validation") {
    AssociationConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.dbscan_eps = 0;
    CHECK_THROWS(cfg.validate());
}

TEST_SUITE_END();
