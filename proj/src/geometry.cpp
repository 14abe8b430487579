#include "graphground/geometry.hpp"

#include <algorithm>
#include <stdexcept>

namespace graphground {

Aabb Aabb::from_points(const PointCloud& points) {
    if (points.empty()) {
        throw std::invalid_argument("cannot build aabb from empty point set");
    }
    Aabb box{points.front(), points.front()};
    for (const Vec3& p : points) {
        box.expand(p);
    }
    return box;
}

void Aabb::expand(const Vec3& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
}

double Aabb::volume() const {
    const Vec3 e = extent();
    if (e.x() < 0 || e.y() < 0 || e.z() < 0) return 0.0;
    return e.x() * e.y() * e.z();
}

bool Aabb::valid() const {
    return (min.array() <= max.array()).all();
}

bool Aabb::contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
}

Aabb Aabb::merged(const Aabb& other) const {
    return Aabb{min.cwiseMin(other.min), max.cwiseMax(other.max)};
}

double aabb_iou(const Aabb& a, const Aabb& b) {
    const Vec3 lo = a.min.cwiseMax(b.min);
    const Vec3 hi = a.max.cwiseMin(b.max);
    const Vec3 d = (hi - lo).cwiseMax(0.0);
    const double inter = d.x() * d.y() * d.z();
    const double uni = a.volume() + b.volume() - inter;
    if (uni <= 0.0) {
        return a == b ? 1.0 : 0.0;
    }
    return inter / uni;
}

double cosine(const Embedding& u, const Embedding& v) {
    if (u.size() != v.size()) {
        throw std::invalid_argument("cosine: dimension mismatch");
    }
    const double nu = u.norm();
    const double nv = v.norm();
    if (nu == 0.0 || nv == 0.0) {
        throw std::invalid_argument("degenerate embedding");
    }
    return u.dot(v) / (nu * nv);
}

double cosine01(const Embedding& u, const Embedding& v) {
    return std::clamp(cosine(u, v), 0.0, 1.0);
}

}  // namespace graphground
