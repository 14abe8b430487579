#include "graphground/scene.hpp"

#include <cmath>
#include <stdexcept>

namespace graphground {

Vec3 ObjectInstance::centroid() const {
    if (points.empty()) return aabb.center();
    Vec3 sum = Vec3::Zero();
    for (const Vec3& p : points) sum += p;
    return sum / static_cast<double>(points.size());
}

const char* to_string(Provenance p) {
    return p == Provenance::vlm ? "vlm" : "geometric";
}

Provenance provenance_from_string(const std::string& s) {
    if (s == "vlm") return Provenance::vlm;
    if (s == "geometric") return Provenance::geometric;
    throw std::runtime_error("unknown provenance: " + s);
}

std::set<std::string> SceneGraph3D::label_space() const {
    std::set<std::string> labels;
    for (const auto& [id, node] : nodes) labels.insert(node.label);
    return labels;
}

const ObjectInstance* SceneGraph3D::find(int id) const {
    auto it = nodes.find(id);
    return it == nodes.end() ? nullptr : &it->second;
}

const ObjectInstance& SceneGraph3D::at(int id) const {
    auto it = nodes.find(id);
    if (it == nodes.end()) {
        throw std::runtime_error("scene graph has no node " + std::to_string(id));
    }
    return it->second;
}

int SceneGraph3D::next_id() const {
    return nodes.empty() ? 0 : nodes.rbegin()->first + 1;
}

void SceneGraph3D::validate() const {
    for (const auto& [id, node] : nodes) {
        if (node.id != id) {
            throw std::runtime_error("node id mismatch for " + std::to_string(id));
        }
        if (!node.aabb.valid()) {
            throw std::runtime_error("invalid aabb on node " + std::to_string(id));
        }
        for (const Vec3& p : node.points) {
            if (!node.aabb.contains(p)) {
                throw std::runtime_error("aabb does not enclose points of node " +
                                         std::to_string(id));
            }
        }
        if (node.embedding.size() > 0) {
            if (embedding_dim > 0 && node.embedding.size() != embedding_dim) {
                throw std::runtime_error("embedding dimension mismatch on node " +
                                         std::to_string(id));
            }
            if (std::abs(node.embedding.norm() - 1.0) > 1e-6) {
                throw std::runtime_error("embedding not unit norm on node " +
                                         std::to_string(id));
            }
        }
        if (node.num_observations < 1) {
            throw std::runtime_error("num_observations < 1 on node " +
                                     std::to_string(id));
        }
    }
    for (const RelationEdge& e : edges) {
        if (e.src_id == e.dst_id) {
            throw std::runtime_error("self-loop edge on node " +
                                     std::to_string(e.src_id));
        }
        if (!find(e.src_id) || !find(e.dst_id)) {
            throw std::runtime_error("edge endpoint missing from scene graph");
        }
        if (e.count < 1) {
            throw std::runtime_error("edge count < 1");
        }
        if (e.predicate.empty()) {
            throw std::runtime_error("edge with empty predicate");
        }
    }
}

std::string QueryNode::text() const {
    std::string out;
    for (const std::string& a : attributes) {
        out += a;
        out += ' ';
    }
    out += label;
    return out;
}

std::optional<int> Mapping::object_for(int query_idx) const {
    auto it = assignment.find(query_idx);
    if (it == assignment.end()) return std::nullopt;
    return it->second;
}

void MatcherConfig::normalize_weights() {
    const double sum = alpha + beta + gamma + delta;
    if (!(sum > 0.0)) {
        throw std::runtime_error("matcher weights must have a positive sum");
    }
    alpha /= sum;
    beta /= sum;
    gamma /= sum;
    delta /= sum;
}

}  // namespace graphground
