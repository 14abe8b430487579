#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "graphground/geometry.hpp"

namespace graphground {

/// A fused 3D object instance accumulated over one or more frames.
struct ObjectInstance {
    int id = 0;
    std::string label;
    PointCloud points;
    Aabb aabb;
    Embedding embedding;  // unit norm
    std::vector<std::string> captions;
    int num_observations = 1;

    /// Mean of the point cloud, falling back to the box center when empty.
    Vec3 centroid() const;
};

enum class Provenance { vlm, geometric };

const char* to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

/// Directed inter-object relation, counted over multi-view observations.
struct RelationEdge {
    int src_id = 0;
    int dst_id = 0;
    std::string predicate;
    int count = 1;
    Provenance provenance = Provenance::vlm;
};

struct SceneGraph3D {
    std::map<int, ObjectInstance> nodes;
    std::vector<RelationEdge> edges;
    int embedding_dim = 0;

    std::set<std::string> label_space() const;
    const ObjectInstance* find(int id) const;
    const ObjectInstance& at(int id) const;
    int next_id() const;

    /// Checks structural invariants; throws std::runtime_error on violation.
    void validate() const;
};

struct QueryNode {
    std::string label;
    std::vector<std::string> attributes;

    /// Text used for embedding: attributes folded into the label.
    std::string text() const;
};

struct QueryEdge {
    int src_idx = 0;
    int dst_idx = 0;
    std::string predicate;
};

/// Parsed referring expression. Node 0 is the target, the rest are landmarks.
struct QueryGraph {
    std::vector<QueryNode> nodes;
    std::vector<QueryEdge> edges;
    std::string raw_query;
};

/// Partial assignment of query nodes to scene objects plus its score parts.
struct Mapping {
    std::map<int, int> assignment;  // query node index -> object id
    double s_target = 0.0;
    double s_node_mean = 0.0;
    double s_edge_mean = 0.0;
    double completion = 0.0;
    double total = 0.0;

    bool has(int query_idx) const { return assignment.count(query_idx) > 0; }
    std::optional<int> object_for(int query_idx) const;
};

struct MatcherConfig {
    double alpha = 0.4;
    double beta = 0.2;
    double gamma = 0.3;
    double delta = 0.1;
    double label_sim_threshold = 0.6;
    int top_k_fallback = 3;
    bool allow_landmark_skip = true;

    /// Rescales the four weights to sum to 1; throws if the sum is not positive.
    void normalize_weights();
};

}  // namespace graphground
