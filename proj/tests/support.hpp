#pragma once

// Shared fixtures for the unit and acceptance suites.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "graphground/providers.hpp"
#include "graphground/scene.hpp"

namespace ggtest {

using namespace graphground;

/// Box centered at (cx,cy,cz) with full extents (sx,sy,sz).
inline Aabb box_at(double cx, double cy, double cz, double sx, double sy, double sz) {
    Aabb b;
    b.min = Vec3(cx - sx / 2, cy - sy / 2, cz - sz / 2);
    b.max = Vec3(cx + sx / 2, cy + sy / 2, cz + sz / 2);
    return b;
}

/// Symmetric 3x3x3 grid of interior points; centroid lands on the box center.
inline PointCloud grid_points(const Aabb& b) {
    PointCloud pts;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            for (int k = 0; k < 3; ++k) {
                const Vec3 t(i / 2.0, j / 2.0, k / 2.0);
                pts.push_back(b.min + t.cwiseProduct(b.max - b.min));
            }
        }
    }
    return pts;
}

inline ObjectInstance make_object(int id, const std::string& label, const Aabb& b) {
    ObjectInstance obj;
    obj.id = id;
    obj.label = label;
    obj.aabb = b;
    obj.points = grid_points(b);
    obj.embedding = mock_embed_text(label);
    return obj;
}

inline SceneGraph3D make_scene(std::vector<ObjectInstance> objects,
                               std::vector<RelationEdge> edges = {}) {
    SceneGraph3D g;
    for (ObjectInstance& o : objects) {
        g.embedding_dim = static_cast<int>(o.embedding.size());
        g.nodes[o.id] = std::move(o);
    }
    g.edges = std::move(edges);
    return g;
}

inline QueryGraph make_query(std::vector<std::string> labels,
                             std::vector<QueryEdge> edges = {}) {
    QueryGraph gq;
    for (std::string& l : labels) {
        QueryNode n;
        n.label = std::move(l);
        gq.nodes.push_back(std::move(n));
    }
    gq.edges = std::move(edges);
    gq.raw_query = gq.nodes.empty() ? "" : gq.nodes.front().label;
    return gq;
}

/// Monte-Carlo IoU oracle: samples uniformly inside box a and estimates the
/// intersection volume from the hit fraction; volumes themselves are exact.
/// Standard error on the returned IoU is bounded by ~0.5/sqrt(n).
inline double mc_iou(const Aabb& a, const Aabb& b, int n, std::uint64_t seed) {
    const double va = a.volume();
    const double vb = b.volume();
    if (va <= 0.0 || vb <= 0.0) {
        return (a.min == b.min && a.max == b.max) ? 1.0 : 0.0;
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(a.min.x(), a.max.x());
    std::uniform_real_distribution<double> uy(a.min.y(), a.max.y());
    std::uniform_real_distribution<double> uz(a.min.z(), a.max.z());
    long hits = 0;
    for (int i = 0; i < n; ++i) {
        if (b.contains(Vec3(ux(rng), uy(rng), uz(rng)))) ++hits;
    }
    const double inter = va * static_cast<double>(hits) / n;
    return inter / (va + vb - inter);
}

inline Aabb random_box(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> center(0.0, 4.0);
    std::uniform_real_distribution<double> extent(0.2, 2.5);
    return box_at(center(rng), center(rng), center(rng), extent(rng), extent(rng), extent(rng));
}

/// Random proper rotation via Gram-Schmidt on random vectors.
inline Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (;;) {
        Vec3 a(u(rng), u(rng), u(rng));
        Vec3 b(u(rng), u(rng), u(rng));
        if (a.norm() < 1e-3) continue;
        a.normalize();
        b -= b.dot(a) * a;
        if (b.norm() < 1e-3) continue;
        b.normalize();
        Eigen::Matrix3d r;
        r.col(0) = a;
        r.col(1) = b;
        r.col(2) = a.cross(b);
        return r;
    }
}

/// Unique scratch directory removed on destruction.
struct TempDir {
    std::filesystem::path path;

    TempDir() {
        static std::atomic<int> counter{0};
        path = std::filesystem::temp_directory_path() /
               ("graphground_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace ggtest
