#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "graphground/geometry.hpp"
#include "graphground/ingest.hpp"
#include "graphground/providers.hpp"
#include "graphground/scene.hpp"

namespace graphground {

struct AssociationConfig {
    double geom_iou_min = 0.25;
    double sem_cos_min = 0.7;
    int min_points = 50;      // objects below this after denoise are dropped
    double dbscan_eps = 0.05;  // meters
    int dbscan_min_pts = 10;

    void validate() const;
};

/// Deterministic DBSCAN over 3D points (grid-accelerated). Returns a cluster
/// id per point, -1 for noise. A point is core when its eps-ball holds at
/// least min_pts points, itself included.
std::vector<int> dbscan_labels(const PointCloud& points, double eps, int min_pts);

/// Finds the existing object a new detection should merge into: the candidate
/// maximizing 0.5*iou + 0.5*cosine among those with aabb_iou >= geom_iou_min
/// and cosine >= sem_cos_min; ties go to the lower id. Returns nothing when
/// no candidate passes both gates.
std::optional<int> associate(const SceneGraph3D& g, const Aabb& new_aabb,
                             const Embedding& new_embedding, const AssociationConfig& cfg);

/// Merges one observation into an existing object: points unioned, aabb
/// recomputed, embedding replaced by the count-weighted unit-normalized mean,
/// observation count incremented, caption appended when present.
void merge_into(ObjectInstance& target, const PointCloud& points, const Embedding& embedding,
                const std::optional<std::string>& caption);

/// Keeps the largest DBSCAN cluster and recomputes the aabb; returns nothing
/// when fewer than cfg.min_points points survive.
std::optional<ObjectInstance> denoise(const ObjectInstance& obj, const AssociationConfig& cfg);

/// Applies denoise() to every node that carries points (point-free nodes are
/// kept as-is: there is nothing to cluster); edges touching dropped nodes are
/// removed.
SceneGraph3D denoise_scene(const SceneGraph3D& g, const AssociationConfig& cfg);

struct BuildStats {
    int frames = 0;
    int detections = 0;
    int dropped_empty = 0;    // detections whose mask had no valid depth
    int merged = 0;
    int created = 0;
    int dropped_denoise = 0;  // objects removed by the final denoise pass
};

struct BuildResult {
    SceneGraph3D graph;
    /// (frame_id, marker) -> object id, for lifting per-frame VLM relations
    /// onto persistent objects. Bindings to denoise-dropped objects are
    /// removed.
    std::map<std::pair<int, int>, int> bindings;
    BuildStats stats;
};

/// Fuses frames (processed in ascending frame_id order, detections in file
/// order) into persistent object instances, then denoises. Deterministic for
/// a fixed frame list, config, and provider. Zero surviving objects is a
/// valid, empty result.
BuildResult build_scene(std::vector<FrameRecord> frames, EmbeddingProvider& embedder,
                        const AssociationConfig& cfg);

}  // namespace graphground
