#include "graphground/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "graphground/relations.hpp"

namespace graphground {

namespace {

constexpr double kRoomX = 10.0;
constexpr double kRoomY = 10.0;
constexpr double kRoomZ = 3.0;
constexpr int kPointsPerObject = 400;

// Generator labels. None are synonyms of one another and none appear in the
// room lexicon, so label argmax and gate reasons stay unambiguous.
const std::vector<std::string>& synth_vocab() {
    static const std::vector<std::string> v = {
        "chair",  "table",   "lamp",   "bed",    "desk",   "shelf",  "plant",
        "monitor", "pillow",  "cabinet", "stool",  "vase",   "rug",    "bench",
        "mirror", "bottle",  "basket", "clock",  "curtain", "speaker"};
    return v;
}

/// Placement collisions retry the whole instance with a perturbed stream.
struct RetryPlacement {};

double urand(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Aabb box_at(const Vec3& center, const Vec3& size) {
    return Aabb{center - 0.5 * size, center + 0.5 * size};
}

bool boxes_clear(const Aabb& a, const Aabb& b, double gap) {
    for (int i = 0; i < 3; ++i) {
        if (a.min[i] >= b.max[i] + gap || b.min[i] >= a.max[i] + gap) return true;
    }
    return false;
}

bool clear_of_all(const Aabb& box, const std::vector<Aabb>& placed, double gap) {
    for (const auto& other : placed) {
        if (!boxes_clear(box, other, gap)) return false;
    }
    return true;
}

ObjectInstance make_object(int id, const std::string& label, const Vec3& center,
                           const Vec3& size, std::mt19937_64& rng, int dim) {
    ObjectInstance o;
    o.id = id;
    o.label = label;
    o.points.reserve(kPointsPerObject);
    const Aabb box = box_at(center, size);
    for (int i = 0; i < kPointsPerObject; ++i) {
        o.points.emplace_back(urand(rng, box.min.x(), box.max.x()),
                              urand(rng, box.min.y(), box.max.y()),
                              urand(rng, box.min.z(), box.max.z()));
    }
    o.aabb = Aabb::from_points(o.points);
    o.embedding = mock_embed_text(label, dim);
    o.num_observations = 1;
    return o;
}

struct GroupPlan {
    std::string member_label;
    std::string landmark_label;
    std::string predicate;
    int landmark_id = -1;
    std::vector<int> member_ids;  // ascending creation order
    int special_id = -1;
    Vec3 landmark_center;
    Vec3 landmark_size;
};

Mat4 look_at_pose(const Vec3& eye, const Vec3& target) {
    const Vec3 forward = (target - eye).normalized();
    const Vec3 right = forward.cross(Vec3(0, 0, 1)).normalized();
    const Vec3 down = forward.cross(right);
    Mat4 pose = Mat4::Identity();
    pose.block<3, 1>(0, 0) = right;
    pose.block<3, 1>(0, 1) = down;
    pose.block<3, 1>(0, 2) = forward;
    pose.block<3, 1>(0, 3) = eye;
    return pose;
}

/// Renders one posed depth view of the scene by ray/box intersection and
/// derives per-object masks. Objects covering fewer than 40 pixels get no
/// detection.
void render_synth_frame(const SceneGraph3D& scene, int frame_id, const Vec3& eye,
                        const Vec3& target, SynthInstance* out) {
    const int w = 640, h = 480;
    const double fx = 320.0, fy = 320.0, cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
    const Mat4 pose = look_at_pose(eye, target);
    const Eigen::Matrix3d rot = pose.block<3, 3>(0, 0);

    DepthImage depth;
    depth.width = w;
    depth.height = h;
    depth.millimeters.assign(static_cast<std::size_t>(w) * h, 0);
    std::vector<int> hit_id(static_cast<std::size_t>(w) * h, -1);

    for (int v = 0; v < h; ++v) {
        for (int u = 0; u < w; ++u) {
            const Vec3 dir = rot * Vec3((u - cx) / fx, (v - cy) / fy, 1.0);
            double best_t = std::numeric_limits<double>::infinity();
            int best_id = -1;
            for (const auto& [id, obj] : scene.nodes) {
                double t0 = 1e-6, t1 = std::numeric_limits<double>::infinity();
                bool miss = false;
                for (int a = 0; a < 3 && !miss; ++a) {
                    if (std::abs(dir[a]) < 1e-12) {
                        if (eye[a] < obj.aabb.min[a] || eye[a] > obj.aabb.max[a]) miss = true;
                        continue;
                    }
                    double ta = (obj.aabb.min[a] - eye[a]) / dir[a];
                    double tb = (obj.aabb.max[a] - eye[a]) / dir[a];
                    if (ta > tb) std::swap(ta, tb);
                    t0 = std::max(t0, ta);
                    t1 = std::min(t1, tb);
                    if (t0 > t1) miss = true;
                }
                if (!miss && t0 < best_t) {
                    best_t = t0;
                    best_id = id;
                }
            }
            if (best_id >= 0) {
                // Camera depth equals t: the ray direction has unit camera z.
                const double mm = std::lround(best_t * 1000.0);
                const std::size_t px = static_cast<std::size_t>(v) * w + u;
                depth.millimeters[px] =
                    static_cast<std::uint16_t>(std::clamp(mm, 1.0, 65535.0));
                hit_id[px] = best_id;
            }
        }
    }

    FrameRecord frame;
    frame.frame_id = frame_id;
    frame.fx = fx;
    frame.fy = fy;
    frame.cx = cx;
    frame.cy = cy;
    frame.pose = pose;
    frame.width = w;
    frame.height = h;
    for (const auto& [id, obj] : scene.nodes) {
        std::vector<bool> mask(static_cast<std::size_t>(w) * h, false);
        int count = 0;
        for (std::size_t px = 0; px < mask.size(); ++px) {
            if (hit_id[px] == id) {
                mask[px] = true;
                ++count;
            }
        }
        if (count < 40) continue;
        Detection det;
        det.marker = id + 1;
        det.label = obj.label;
        det.confidence = 1.0;
        det.rle = encode_rle(mask);
        frame.detections.push_back(std::move(det));
    }
    out->frames.push_back(std::move(frame));
    out->depths.push_back(std::move(depth));
}

SynthInstance try_generate(std::mt19937_64& rng, const SynthSpec& spec, std::uint64_t seed) {
    const int groups = spec.n_duplicate_groups;
    const int k = spec.duplicates_per_group;
    const int n_singles = spec.n_objects - groups * k;
    const auto& vocab = synth_vocab();

    SynthInstance inst;
    inst.scene.embedding_dim = 256;
    std::vector<Aabb> placed;
    int next_id = 0;

    const auto add_object = [&](const std::string& label, const Vec3& center,
                                const Vec3& size) {
        ObjectInstance obj = make_object(next_id, label, center, size, rng, 256);
        placed.push_back(box_at(center, size));
        inst.scene.nodes.emplace(next_id, std::move(obj));
        return next_id++;
    };

    // Rejection-sample a floor-standing box; fails the attempt when the room
    // is too crowded.
    const auto place_floor = [&](const std::string& label, double lo, double hi,
                                 double smin, double smax, double hmin, double hmax) {
        for (int t = 0; t < 200; ++t) {
            const Vec3 size(urand(rng, smin, smax), urand(rng, smin, smax),
                            urand(rng, hmin, hmax));
            const Vec3 center(urand(rng, lo, hi), urand(rng, lo, hi), size.z() / 2);
            if (!clear_of_all(box_at(center, size), placed, 0.12)) continue;
            return add_object(label, center, size);
        }
        throw RetryPlacement{};
    };

    const std::vector<std::string> predicates = {"left of", "right of", "near", "on top of"};
    std::vector<GroupPlan> plans;

    for (int g = 0; g < groups; ++g) {
        GroupPlan plan;
        plan.member_label = vocab[g];
        plan.landmark_label = vocab[groups + g];
        plan.predicate = predicates[std::uniform_int_distribution<int>(
            0, static_cast<int>(predicates.size()) - 1)(rng)];

        // Landmark first; member offsets are relative to it.
        Vec3 lm_size(urand(rng, 0.55, 0.9), urand(rng, 0.55, 0.9), urand(rng, 0.5, 0.7));
        Vec3 lm_center;
        bool ok = false;
        for (int t = 0; t < 200 && !ok; ++t) {
            lm_center = Vec3(urand(rng, 2.3, kRoomX - 2.3), urand(rng, 2.3, kRoomY - 2.3),
                             lm_size.z() / 2);
            ok = clear_of_all(box_at(lm_center, lm_size), placed, 0.12);
        }
        if (!ok) throw RetryPlacement{};
        plan.landmark_id = add_object(plan.landmark_label, lm_center, lm_size);
        plan.landmark_center = lm_center;
        plan.landmark_size = lm_size;

        const int special = std::uniform_int_distribution<int>(0, k - 1)(rng);
        for (int m = 0; m < k; ++m) {
            Vec3 size(urand(rng, 0.4, 0.6), urand(rng, 0.4, 0.6), urand(rng, 0.3, 0.45));
            Vec3 center;
            bool placed_ok = false;
            for (int t = 0; t < 60 && !placed_ok; ++t) {
                if (m == special && plan.predicate == "on top of") {
                    // Stacked on the landmark: footprint inside, bottom touching.
                    const double side =
                        std::max(0.25, std::min(lm_size.x(), lm_size.y()) - 0.15);
                    size = Vec3(side, side, urand(rng, 0.3, 0.4));
                    center = lm_center + Vec3(urand(rng, -0.05, 0.05), urand(rng, -0.05, 0.05),
                                              lm_size.z() / 2 + 0.01 + size.z() / 2);
                    // The 0.01 m gap above the landmark z-separates this box
                    // from everything on the floor, so a zero-gap check works.
                    if (!clear_of_all(box_at(center, size), placed, 0.0)) {
                        throw RetryPlacement{};
                    }
                    placed_ok = true;
                    break;
                }
                double dx = 0.0, dy = 0.0;
                if (plan.predicate == "left of" || plan.predicate == "right of") {
                    const double req = lm_size.x() / 2 + size.x() / 2 + 0.06;
                    const double sign = (plan.predicate == "left of") == (m == special)
                                            ? -1.0
                                            : 1.0;
                    dx = sign * urand(rng, std::max(req, 0.81),
                                      m == special ? 1.4 : 1.8);
                    dy = urand(rng, m == special ? -0.1 : -0.5,
                               m == special ? 0.1 : 0.5);
                } else if (plan.predicate == "near") {
                    // Axis-aligned offsets so box clearance and the centroid
                    // distance band can both hold.
                    const bool along_x = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
                    const double sign =
                        std::uniform_int_distribution<int>(0, 1)(rng) == 1 ? 1.0 : -1.0;
                    const double req = (along_x ? lm_size.x() + size.x()
                                                : lm_size.y() + size.y()) /
                                           2 +
                                       0.06;
                    const double d = m == special
                                         ? urand(rng, std::min(std::max(req, 0.5), 0.84), 0.85)
                                         : urand(rng, 1.35, 1.9);
                    dx = along_x ? sign * d : urand(rng, -0.1, 0.1);
                    dy = along_x ? urand(rng, -0.1, 0.1) : sign * d;
                } else {  // "on top of" non-special members sit on the floor nearby
                    const double theta = urand(rng, 0.0, 2 * 3.14159265358979323846);
                    const double d = urand(rng, 1.0, 1.8);
                    dx = d * std::cos(theta);
                    dy = d * std::sin(theta);
                }
                center = Vec3(lm_center.x() + dx, lm_center.y() + dy, size.z() / 2);
                const Aabb box = box_at(center, size);
                placed_ok = box.min.x() > 0.1 && box.min.y() > 0.1 &&
                            box.max.x() < kRoomX - 0.1 && box.max.y() < kRoomY - 0.1 &&
                            clear_of_all(box, placed, 0.06);
            }
            if (!placed_ok) throw RetryPlacement{};
            const int id = add_object(plan.member_label, center, size);
            plan.member_ids.push_back(id);
            if (m == special) plan.special_id = id;
        }
        plans.push_back(std::move(plan));
    }

    // Singles: landmarks already placed; one optional chained-query anchor
    // next to the first landmark, the rest anywhere free.
    int aux_id = -1;
    std::string aux_label;
    int single_label_idx = 2 * groups;
    if (groups > 0 && n_singles > groups) {
        aux_label = vocab[single_label_idx++];
        const auto& plan = plans.front();
        bool ok = false;
        for (int t = 0; t < 200 && !ok; ++t) {
            const Vec3 size(urand(rng, 0.3, 0.45), urand(rng, 0.3, 0.45),
                            urand(rng, 0.3, 0.5));
            const bool along_x = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
            const double sign =
                std::uniform_int_distribution<int>(0, 1)(rng) == 1 ? 1.0 : -1.0;
            const double req = (along_x ? plan.landmark_size.x() + size.x()
                                        : plan.landmark_size.y() + size.y()) /
                                   2 +
                               0.06;
            const double d = urand(rng, std::min(std::max(req, 0.5), 0.84), 0.85);
            const Vec3 center = plan.landmark_center +
                                Vec3(along_x ? sign * d : urand(rng, -0.1, 0.1),
                                     along_x ? urand(rng, -0.1, 0.1) : sign * d, 0.0);
            const Vec3 grounded(center.x(), center.y(), size.z() / 2);
            if (!clear_of_all(box_at(grounded, size), placed, 0.05)) continue;
            aux_id = add_object(aux_label, grounded, size);
            ok = true;
        }
        if (!ok) throw RetryPlacement{};
    }
    const int plain_singles = n_singles - groups - (aux_id >= 0 ? 1 : 0);
    for (int s = 0; s < plain_singles; ++s) {
        place_floor(vocab[single_label_idx++], 0.7, kRoomX - 0.7, 0.4, 0.8, 0.3, 0.6);
    }

    inst.scene.edges = aggregate_edges(geometric_relations(inst.scene));
    inst.scene.validate();

    // The construction should leave exactly one member related to the
    // landmark by the query predicate; verify exhaustively anyway.
    const auto has_edge = [&](int src, int dst, const std::string& pred) {
        for (const auto& e : inst.scene.edges) {
            if (e.src_id == src && e.dst_id == dst && e.predicate == pred) return true;
        }
        return false;
    };
    for (const auto& plan : plans) {
        int satisfied = 0;
        for (int id : plan.member_ids) {
            if (has_edge(id, plan.landmark_id, plan.predicate)) ++satisfied;
        }
        if (satisfied != 1 || !has_edge(plan.special_id, plan.landmark_id, plan.predicate)) {
            throw RetryPlacement{};
        }
    }
    if (aux_id >= 0 && !has_edge(plans.front().landmark_id, aux_id, "near")) {
        throw RetryPlacement{};
    }

    if (spec.relation_density < 1.0) {
        std::set<std::pair<int, int>> protected_pairs;
        for (const auto& plan : plans) {
            protected_pairs.emplace(plan.special_id, plan.landmark_id);
            protected_pairs.emplace(plan.landmark_id, plan.special_id);
        }
        if (aux_id >= 0) {
            protected_pairs.emplace(plans.front().landmark_id, aux_id);
            protected_pairs.emplace(aux_id, plans.front().landmark_id);
        }
        std::vector<RelationEdge> kept;
        for (const auto& e : inst.scene.edges) {
            if (protected_pairs.count({e.src_id, e.dst_id}) ||
                urand(rng, 0.0, 1.0) < spec.relation_density) {
                kept.push_back(e);
            }
        }
        inst.scene.edges = aggregate_edges(kept);
    }

    // Queries: one per duplicate group, one chained variant when an anchor
    // exists, and one single-node query per unique-label object.
    const std::string scene_id = "synth-" + std::to_string(seed);
    int qnum = 0;
    const auto push_query = [&](const std::string& text, const std::string& split, int gt) {
        QueryRecord q;
        char buf[16];
        std::snprintf(buf, sizeof(buf), "q%04d", qnum++);
        q.query_id = buf;
        q.scene_id = scene_id;
        q.text = text;
        q.split = split;
        q.gt_aabb = inst.scene.at(gt).aabb;
        inst.queries.push_back(q);
        inst.gt_ids[q.query_id] = gt;
    };
    for (const auto& plan : plans) {
        push_query("the " + plan.member_label + " " + plan.predicate + " the " +
                       plan.landmark_label,
                   "multiple", plan.special_id);
    }
    if (aux_id >= 0) {
        const auto& plan = plans.front();
        push_query("the " + plan.member_label + " " + plan.predicate + " the " +
                       plan.landmark_label + " near the " + aux_label,
                   "multiple", plan.special_id);
    }
    for (const auto& [id, obj] : inst.scene.nodes) {
        bool unique = true;
        for (const auto& [other_id, other] : inst.scene.nodes) {
            if (other_id != id && other.label == obj.label) unique = false;
        }
        if (unique) push_query("the " + obj.label, "unique", id);
    }

    if (spec.with_frames) {
        render_synth_frame(inst.scene, 0, Vec3(5, -6.5, 2.2), Vec3(5, 5, 0.9), &inst);
        render_synth_frame(inst.scene, 1, Vec3(-6.5, 5, 2.2), Vec3(5, 5, 0.9), &inst);
    }
    return inst;
}

nlohmann::json aabb_json(const Aabb& box) {
    return nlohmann::json{{"min", {box.min.x(), box.min.y(), box.min.z()}},
                          {"max", {box.max.x(), box.max.y(), box.max.z()}}};
}

Aabb aabb_from(const nlohmann::json& j) {
    Aabb box;
    for (int i = 0; i < 3; ++i) {
        box.min[i] = j.at("min").at(i).get<double>();
        box.max[i] = j.at("max").at(i).get<double>();
    }
    return box;
}

nlohmann::json bucket_json(const AccBucket& b) {
    return nlohmann::json{
        {"n", b.n}, {"t10", b.acc10()}, {"t25", b.acc25()}, {"t50", b.acc50()}};
}

void tally(AccBucket& bucket, double iou) {
    ++bucket.n;
    if (iou >= 0.10) ++bucket.hits10;
    if (iou >= 0.25) ++bucket.hits25;
    if (iou >= 0.50) ++bucket.hits50;
}

}  // namespace

void SynthSpec::validate() const {
    if (n_objects < 1) throw std::invalid_argument("synth spec: n_objects must be >= 1");
    if (n_duplicate_groups < 0 || duplicates_per_group < 0) {
        throw std::invalid_argument("synth spec: negative duplicate shape");
    }
    if (n_duplicate_groups > 0 && duplicates_per_group < 2) {
        throw std::invalid_argument("synth spec: duplicate groups need >= 2 members");
    }
    if (relation_density < 0.0 || relation_density > 1.0) {
        throw std::invalid_argument("synth spec: relation_density must be in [0, 1]");
    }
    const int n_singles = n_objects - n_duplicate_groups * duplicates_per_group;
    if (n_singles < n_duplicate_groups) {
        throw std::invalid_argument(
            "synth spec: every duplicate group needs a unique-label landmark");
    }
    const int distinct = n_duplicate_groups + n_singles;
    if (distinct > static_cast<int>(synth_vocab().size())) {
        throw std::invalid_argument("synth spec: label vocabulary exhausted");
    }
}

SynthInstance gen_synthetic(std::uint64_t seed, const SynthSpec& spec) {
    spec.validate();
    for (std::uint64_t attempt = 0; attempt < 100; ++attempt) {
        std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ull * (attempt + 1)));
        try {
            return try_generate(rng, spec, seed);
        } catch (const RetryPlacement&) {
        }
    }
    throw std::runtime_error("infeasible synthetic spec: placement never converged");
}

AssociationConfig synth_association_config() {
    AssociationConfig cfg;
    cfg.dbscan_eps = 0.15;
    cfg.dbscan_min_pts = 4;
    cfg.min_points = 30;
    return cfg;
}

SceneGraph3D corrupt_scene(const SceneGraph3D& scene, const std::vector<std::string>& ghost_labels,
                           std::uint64_t seed) {
    SceneGraph3D out = scene;
    if (out.nodes.empty()) return out;
    std::mt19937_64 rng(seed ^ 0xc2b2ae3d27d4eb4full);

    std::vector<Vec3> original_centroids;
    for (const auto& [id, obj] : out.nodes) original_centroids.push_back(obj.centroid());

    for (auto& [id, obj] : out.nodes) {
        const auto n_out = static_cast<std::size_t>(
            std::ceil(0.1 * static_cast<double>(obj.points.size())));
        for (std::size_t i = 0; i < n_out; ++i) {
            obj.points.emplace_back(urand(rng, 0.0, kRoomX), urand(rng, 0.0, kRoomY),
                                    urand(rng, 0.0, kRoomZ));
        }
        obj.aabb = Aabb::from_points(obj.points);
    }

    for (int gi = 0; gi < 3; ++gi) {
        const std::string label =
            ghost_labels.empty() ? "ghost" : ghost_labels[gi % ghost_labels.size()];
        Vec3 center(kRoomX / 2, kRoomY / 2, kRoomZ / 2);
        for (int t = 0; t < 200; ++t) {
            const Vec3 cand(urand(rng, 0.5, kRoomX - 0.5), urand(rng, 0.5, kRoomY - 0.5),
                            urand(rng, 0.2, kRoomZ - 0.2));
            bool far = true;
            for (const auto& c : original_centroids) {
                if ((cand - c).norm() < 2.1) far = false;
            }
            if (far) {
                center = cand;
                break;
            }
        }
        ObjectInstance ghost;
        ghost.id = out.next_id();
        ghost.label = label;
        for (int i = 0; i < 20; ++i) {
            ghost.points.emplace_back(center.x() + urand(rng, -0.06, 0.06),
                                      center.y() + urand(rng, -0.06, 0.06),
                                      center.z() + urand(rng, -0.06, 0.06));
        }
        ghost.aabb = Aabb::from_points(ghost.points);
        ghost.embedding = mock_embed_text(label, out.embedding_dim);
        out.nodes.emplace(ghost.id, std::move(ghost));
    }

    out.edges.clear();
    out.edges = aggregate_edges(geometric_relations(out));
    return out;
}

Mapping brute_force_ground(const QueryGraph& gq, const SceneGraph3D& gs,
                           EmbeddingProvider& embedder, const MatcherConfig& cfg,
                           bool edges_enabled) {
    if (gq.nodes.empty()) throw std::invalid_argument("query has no nodes");
    if (gs.nodes.empty()) throw std::invalid_argument("empty scene graph");
    const double work = std::pow(static_cast<double>(gs.nodes.size()),
                                 static_cast<double>(gq.nodes.size()));
    if (work > 1e7) throw std::runtime_error("instance too large for oracle");

    const MatchContext ctx = build_match_context(gq, gs, embedder, cfg, edges_enabled);
    std::vector<int> ids;
    ids.reserve(gs.nodes.size());
    for (const auto& [id, obj] : gs.nodes) ids.push_back(id);

    Mapping best;
    bool have = false;
    std::map<int, int> current;
    std::set<int> used;
    const std::function<void(std::size_t)> recurse = [&](std::size_t qi) {
        if (qi == gq.nodes.size()) {
            if (!current.count(0)) return;  // target assignment is mandatory
            Mapping m = score_mapping(current, ctx);
            if (!have || m.total > best.total ||
                (m.total == best.total && m.assignment.at(0) < best.assignment.at(0))) {
                best = std::move(m);
                have = true;
            }
            return;
        }
        if (qi != 0) recurse(qi + 1);  // landmark skipped
        const int key = static_cast<int>(qi);
        for (int id : ids) {
            if (used.count(id)) continue;
            current[key] = id;
            used.insert(id);
            recurse(qi + 1);
            used.erase(id);
            current.erase(key);
        }
    };
    recurse(0);
    if (!have) throw std::runtime_error("ungroundable query");
    return best;
}

std::string results_to_jsonl(const std::vector<ResultRecord>& results) {
    std::string out;
    for (const auto& r : results) {
        nlohmann::json j;
        j["query_id"] = r.query_id;
        j["predicted_object_id"] = r.predicted_object_id;
        j["predicted_aabb"] = aabb_json(r.predicted_aabb);
        j["total"] = r.total;
        j["components"] = {{"s_target", r.s_target},
                           {"s_node", r.s_node},
                           {"s_edge", r.s_edge},
                           {"completion", r.completion}};
        j["path"] = r.path;
        if (r.runner_up_margin) {
            j["runner_up_margin"] = *r.runner_up_margin;
        } else {
            j["runner_up_margin"] = nullptr;
        }
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::vector<ResultRecord> results_from_jsonl(const std::string& text) {
    std::vector<ResultRecord> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(std::string("result record: bad json: ") + e.what());
        }
        ResultRecord r;
        try {
            r.query_id = j.at("query_id").get<std::string>();
            r.predicted_object_id = j.at("predicted_object_id").get<int>();
            r.predicted_aabb = aabb_from(j.at("predicted_aabb"));
            r.total = j.at("total").get<double>();
            const auto& c = j.at("components");
            r.s_target = c.at("s_target").get<double>();
            r.s_node = c.at("s_node").get<double>();
            r.s_edge = c.at("s_edge").get<double>();
            r.completion = c.at("completion").get<double>();
            r.path = j.at("path").get<std::string>();
            if (j.contains("runner_up_margin") && !j.at("runner_up_margin").is_null()) {
                r.runner_up_margin = j.at("runner_up_margin").get<double>();
            }
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(std::string("result record: missing field: ") + e.what());
        }
        out.push_back(std::move(r));
    }
    return out;
}

MetricsReport evaluate(const std::vector<ResultRecord>& results,
                       const std::vector<QueryRecord>& queries) {
    std::map<std::string, const QueryRecord*> by_id;
    for (const auto& q : queries) by_id[q.query_id] = &q;

    MetricsReport report;
    for (const auto& r : results) {
        const auto it = by_id.find(r.query_id);
        if (it == by_id.end() || !it->second->gt_aabb) {
            ++report.unevaluable;
            continue;
        }
        const double iou = aabb_iou(r.predicted_aabb, *it->second->gt_aabb);
        tally(report.overall, iou);
        tally(report.by_split[it->second->split.value_or("unspecified")], iou);
        tally(report.by_path[r.path], iou);
    }
    return report;
}

std::string metrics_to_json(const MetricsReport& report) {
    nlohmann::json j;
    j["n"] = report.overall.n;
    j["acc"] = {{"t10", report.overall.acc10()},
                {"t25", report.overall.acc25()},
                {"t50", report.overall.acc50()}};
    j["by_split"] = nlohmann::json::object();
    for (const auto& [split, bucket] : report.by_split) {
        j["by_split"][split] = bucket_json(bucket);
    }
    j["by_path"] = nlohmann::json::object();
    for (const auto& [path, bucket] : report.by_path) {
        j["by_path"][path] = bucket_json(bucket);
    }
    j["unevaluable"] = report.unevaluable;
    return j.dump(2) + "\n";
}

std::string metrics_table(const MetricsReport& report) {
    std::string out;
    char line[128];
    std::snprintf(line, sizeof(line), "%-18s %6s %9s %9s %9s\n", "bucket", "n", "acc@0.10",
                  "acc@0.25", "acc@0.50");
    out += line;
    const auto row = [&](const std::string& name, const AccBucket& b) {
        std::snprintf(line, sizeof(line), "%-18s %6d %9.4f %9.4f %9.4f\n", name.c_str(), b.n,
                      b.acc10(), b.acc25(), b.acc50());
        out += line;
    };
    row("overall", report.overall);
    for (const auto& [split, bucket] : report.by_split) row("split:" + split, bucket);
    for (const auto& [path, bucket] : report.by_path) row("path:" + path, bucket);
    if (report.unevaluable > 0) {
        std::snprintf(line, sizeof(line), "unevaluable        %6d\n", report.unevaluable);
        out += line;
    }
    return out;
}

std::string metrics_csv(const MetricsReport& report) {
    std::string out = "bucket,n,acc10,acc25,acc50\n";
    char line[128];
    const auto row = [&](const std::string& name, const AccBucket& b) {
        std::snprintf(line, sizeof(line), "%s,%d,%.6f,%.6f,%.6f\n", name.c_str(), b.n,
                      b.acc10(), b.acc25(), b.acc50());
        out += line;
    };
    row("overall", report.overall);
    for (const auto& [split, bucket] : report.by_split) row("split:" + split, bucket);
    for (const auto& [path, bucket] : report.by_path) row("path:" + path, bucket);
    return out;
}

}  // namespace graphground
