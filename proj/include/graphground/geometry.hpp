#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/LU>
#include <vector>

namespace graphground {

using Vec3 = Eigen::Vector3d;
using Mat4 = Eigen::Matrix4d;
using Embedding = Eigen::VectorXd;
using PointCloud = std::vector<Vec3>;

/// Axis-aligned bounding box in the world frame, meters.
struct Aabb {
    Vec3 min = Vec3::Zero();
    Vec3 max = Vec3::Zero();

    static Aabb from_points(const PointCloud& points);

    Vec3 center() const { return 0.5 * (min + max); }
    Vec3 extent() const { return max - min; }
    double volume() const;
    bool valid() const;
    bool contains(const Vec3& p) const;
    Aabb merged(const Aabb& other) const;
    void expand(const Vec3& p);

    bool operator==(const Aabb& other) const {
        return min == other.min && max == other.max;
    }
};

/// 3D intersection-over-union of two boxes. Symmetric, in [0,1].
/// Degenerate (zero-volume) boxes yield 0 unless the boxes are identical.
double aabb_iou(const Aabb& a, const Aabb& b);

/// Cosine similarity of two equal-dimension vectors.
/// Throws on dimension mismatch or a zero-norm ("degenerate embedding") input.
double cosine(const Embedding& u, const Embedding& v);

/// Cosine clamped to [0,1]; negative similarity counts as no similarity.
double cosine01(const Embedding& u, const Embedding& v);

}  // namespace graphground
