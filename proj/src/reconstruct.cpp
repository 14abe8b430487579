#include "graphground/reconstruct.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <stdexcept>
#include <tuple>

namespace graphground {

void AssociationConfig::validate() const {
    if (geom_iou_min < 0 || geom_iou_min > 1) {
        throw std::runtime_error("association config: geom_iou_min must be in [0,1]");
    }
    if (sem_cos_min < -1 || sem_cos_min > 1) {
        throw std::runtime_error("association config: sem_cos_min must be in [-1,1]");
    }
    if (min_points < 1) throw std::runtime_error("association config: min_points must be >= 1");
    if (!(dbscan_eps > 0)) throw std::runtime_error("association config: dbscan_eps must be > 0");
    if (dbscan_min_pts < 1) {
        throw std::runtime_error("association config: dbscan_min_pts must be >= 1");
    }
}

namespace {

using Cell = std::tuple<std::int64_t, std::int64_t, std::int64_t>;

Cell cell_of(const Vec3& p, double eps) {
    return {static_cast<std::int64_t>(std::floor(p.x() / eps)),
            static_cast<std::int64_t>(std::floor(p.y() / eps)),
            static_cast<std::int64_t>(std::floor(p.z() / eps))};
}

}  // namespace

std::vector<int> dbscan_labels(const PointCloud& points, double eps, int min_pts) {
    const int n = static_cast<int>(points.size());
    std::vector<int> labels(points.size(), -2);  // -2 = unvisited, -1 = noise
    if (n == 0) return labels;

    std::map<Cell, std::vector<int>> grid;
    for (int i = 0; i < n; ++i) grid[cell_of(points[i], eps)].push_back(i);

    const double eps2 = eps * eps;
    auto neighbors = [&](int i) {
        std::vector<int> out;
        const auto [cx, cy, cz] = cell_of(points[i], eps);
        for (std::int64_t dx = -1; dx <= 1; ++dx) {
            for (std::int64_t dy = -1; dy <= 1; ++dy) {
                for (std::int64_t dz = -1; dz <= 1; ++dz) {
                    auto it = grid.find({cx + dx, cy + dy, cz + dz});
                    if (it == grid.end()) continue;
                    for (int j : it->second) {
                        if ((points[j] - points[i]).squaredNorm() <= eps2) out.push_back(j);
                    }
                }
            }
        }
        return out;  // includes i itself
    };

    int cluster = 0;
    std::deque<int> seeds;
    for (int i = 0; i < n; ++i) {
        if (labels[i] != -2) continue;
        std::vector<int> nb = neighbors(i);
        if (static_cast<int>(nb.size()) < min_pts) {
            labels[i] = -1;
            continue;
        }
        labels[i] = cluster;
        seeds.assign(nb.begin(), nb.end());
        while (!seeds.empty()) {
            const int j = seeds.front();
            seeds.pop_front();
            if (labels[j] == -1) labels[j] = cluster;  // noise becomes a border point
            if (labels[j] != -2) continue;
            labels[j] = cluster;
            std::vector<int> nbj = neighbors(j);
            if (static_cast<int>(nbj.size()) >= min_pts) {
                seeds.insert(seeds.end(), nbj.begin(), nbj.end());
            }
        }
        ++cluster;
    }
    return labels;
}

std::optional<int> associate(const SceneGraph3D& g, const Aabb& new_aabb,
                             const Embedding& new_embedding, const AssociationConfig& cfg) {
    cfg.validate();
    std::optional<int> best;
    double best_score = -1.0;
    for (const auto& [id, obj] : g.nodes) {
        const double iou = aabb_iou(obj.aabb, new_aabb);
        if (iou < cfg.geom_iou_min) continue;
        const double cos = cosine(obj.embedding, new_embedding);
        if (cos < cfg.sem_cos_min) continue;
        const double score = 0.5 * iou + 0.5 * cos;
        if (score > best_score) {  // ties keep the earlier (lower) id
            best_score = score;
            best = id;
        }
    }
    return best;
}

void merge_into(ObjectInstance& target, const PointCloud& points, const Embedding& embedding,
                const std::optional<std::string>& caption) {
    target.points.insert(target.points.end(), points.begin(), points.end());
    target.aabb = Aabb::from_points(target.points);
    Embedding fused =
        static_cast<double>(target.num_observations) * target.embedding + embedding;
    const double norm = fused.norm();
    if (norm < 1e-12) throw std::runtime_error("degenerate embedding after merge");
    target.embedding = fused / norm;
    target.num_observations += 1;
    if (caption && !caption->empty()) target.captions.push_back(*caption);
}

std::optional<ObjectInstance> denoise(const ObjectInstance& obj, const AssociationConfig& cfg) {
    cfg.validate();
    const std::vector<int> labels = dbscan_labels(obj.points, cfg.dbscan_eps, cfg.dbscan_min_pts);
    int num_clusters = 0;
    for (int l : labels) num_clusters = std::max(num_clusters, l + 1);
    std::vector<int> sizes(static_cast<std::size_t>(num_clusters), 0);
    for (int l : labels) {
        if (l >= 0) ++sizes[static_cast<std::size_t>(l)];
    }
    int keep = -1;
    int keep_size = 0;
    for (int c = 0; c < num_clusters; ++c) {  // ties keep the earliest cluster
        if (sizes[static_cast<std::size_t>(c)] > keep_size) {
            keep_size = sizes[static_cast<std::size_t>(c)];
            keep = c;
        }
    }
    if (keep < 0 || keep_size < cfg.min_points) return std::nullopt;
    ObjectInstance out = obj;
    out.points.clear();
    out.points.reserve(static_cast<std::size_t>(keep_size));
    for (std::size_t i = 0; i < obj.points.size(); ++i) {
        if (labels[i] == keep) out.points.push_back(obj.points[i]);
    }
    out.aabb = Aabb::from_points(out.points);
    return out;
}

SceneGraph3D denoise_scene(const SceneGraph3D& g, const AssociationConfig& cfg) {
    SceneGraph3D out;
    out.embedding_dim = g.embedding_dim;
    for (const auto& [id, obj] : g.nodes) {
        if (obj.points.empty()) {
            out.nodes.emplace(id, obj);  // nothing to cluster; keep as-is
            continue;
        }
        if (auto kept = denoise(obj, cfg)) out.nodes.emplace(id, std::move(*kept));
    }
    for (const RelationEdge& e : g.edges) {
        if (out.nodes.count(e.src_id) && out.nodes.count(e.dst_id)) out.edges.push_back(e);
    }
    return out;
}

BuildResult build_scene(std::vector<FrameRecord> frames, EmbeddingProvider& embedder,
                        const AssociationConfig& cfg) {
    cfg.validate();
    std::sort(frames.begin(), frames.end(),
              [](const FrameRecord& a, const FrameRecord& b) { return a.frame_id < b.frame_id; });

    // One provider call per distinct label keeps remote usage bounded.
    std::map<std::string, Embedding> label_embeddings;
    std::vector<std::string> missing;
    for (const FrameRecord& f : frames) {
        for (const Detection& d : f.detections) {
            if (label_embeddings.emplace(d.label, Embedding()).second) missing.push_back(d.label);
        }
    }
    if (!missing.empty()) {
        const std::vector<Embedding> embs = embedder.embed(missing);
        for (std::size_t i = 0; i < missing.size(); ++i) label_embeddings[missing[i]] = embs[i];
    }

    BuildResult result;
    SceneGraph3D& g = result.graph;
    for (const FrameRecord& frame : frames) {
        ++result.stats.frames;
        const DepthImage depth = load_depth(frame.depth_path);
        for (const Detection& det : frame.detections) {
            ++result.stats.detections;
            const PointCloud points = backproject_mask(frame, det, depth);
            if (points.empty()) {
                ++result.stats.dropped_empty;
                continue;
            }
            const Embedding& emb = label_embeddings.at(det.label);
            if (g.embedding_dim == 0) g.embedding_dim = static_cast<int>(emb.size());
            const Aabb box = Aabb::from_points(points);
            const std::optional<int> match = associate(g, box, emb, cfg);
            int object_id;
            if (match) {
                merge_into(g.nodes.at(*match), points, emb, det.caption);
                object_id = *match;
                ++result.stats.merged;
            } else {
                ObjectInstance obj;
                obj.id = g.next_id();
                obj.label = det.label;
                obj.points = points;
                obj.aabb = box;
                obj.embedding = emb;
                if (det.caption && !det.caption->empty()) obj.captions.push_back(*det.caption);
                object_id = obj.id;
                g.nodes.emplace(obj.id, std::move(obj));
                ++result.stats.created;
            }
            result.bindings[{frame.frame_id, det.marker}] = object_id;
        }
    }

    const int before = static_cast<int>(g.nodes.size());
    g = denoise_scene(g, cfg);
    result.stats.dropped_denoise = before - static_cast<int>(g.nodes.size());
    for (auto it = result.bindings.begin(); it != result.bindings.end();) {
        if (!g.nodes.count(it->second)) {
            it = result.bindings.erase(it);
        } else {
            ++it;
        }
    }
    return result;
}

}  // namespace graphground
