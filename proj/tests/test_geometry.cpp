#include <doctest.h>

#include <cmath>

#include "graphground/geometry.hpp"
#include "support.hpp"

using namespace graphground;
using ggtest::box_at;
using ggtest::mc_iou;
using ggtest::random_box;

TEST_SUITE_BEGIN("geometry");

TEST_CASE("iou of identical unit cubes is 1") {
    const Aabb a = box_at(0.5, 0.5, 0.5, 1, 1, 1);
    CHECK(aabb_iou(a, a) == doctest::Approx(1.0));
}

TEST_CASE("iou of unit cubes offset by 0.5 along x is 1/3") {
    const Aabb a = box_at(0.5, 0.5, 0.5, 1, 1, 1);
    const Aabb b = box_at(1.0, 0.5, 0.5, 1, 1, 1);
    // intersection  0.5, union 1.5
    CHECK(aabb_iou(a, b) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("iou of disjoint cubes is 0") {
    const Aabb a = box_at(0, 0, 0, 1, 1, 1);
    const Aabb b = box_at(5, 5, 5, 1, 1, 1);
    CHECK(aabb_iou(a, b) == 0.0);
}

TEST_CASE("degenerate boxes: zero volume gives 0 unless identical") {
    Aabb flat;
    flat.min = Vec3(0, 0, 0);
    flat.max = Vec3(1, 1, 0);  // zero thickness
    const Aabb cube = box_at(0.5, 0.5, 0.5, 1, 1, 1);
    CHECK(aabb_iou(flat, cube) == 0.0);
    CHECK(aabb_iou(flat, flat) == 1.0);
}

TEST_CASE("iou is symmetric and self-iou is 1 on random boxes") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 200; ++i) {
        const Aabb a = random_box(rng);
        const Aabb b = random_box(rng);
        const double ab = aabb_iou(a, b);
        CHECK(ab == aabb_iou(b, a));
        CHECK(ab >= 0.0);
        CHECK(ab <= 1.0);
        CHECK(aabb_iou(a, a) == doctest::Approx(1.0));
    }
}

TEST_CASE("iou agrees with a Monte-Carlo volume oracle") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> shift(-1.0, 1.0);
    for (int i = 0; i < 20; ++i) {
        const Aabb a = random_box(rng);
        Aabb b = random_box(rng);
        // bias toward overlap: recenter b near a half the time
        if (i % 2 == 0) {
            const Vec3 c = a.center() + Vec3(shift(rng), shift(rng), shift(rng));
            const Vec3 e = b.extent();
            b.min = c - e / 2;
            b.max = c + e / 2;
        }
        const double exact = aabb_iou(a, b);
        const double mc = mc_iou(a, b, 100000, 1000 + i);
        CHECK(std::abs(exact - mc) < 0.01);
    }
}

TEST_CASE("cosine on hand-checked vectors") {
    Embedding x(2), y(2), d(2);
    x << 1, 0;
    y << 0, 1;
    d << 1, 1;
    CHECK(cosine(x, x) == doctest::Approx(1.0));
    CHECK(cosine(x, y) == doctest::Approx(0.0));
    CHECK(cosine(d, x) == doctest::Approx(0.7071).epsilon(1e-4));
}

TEST_CASE("cosine rejects degenerate input") {
    Embedding x(2), z(2), w(3);
    x << 1, 0;
    z << 0, 0;
    w << 1, 0, 0;
    CHECK_THROWS_WITH_AS(cosine(x, z), doctest::Contains("degenerate embedding"),
                         std::exception);
    CHECK_THROWS(cosine(x, w));
}

TEST_CASE("cosine01 clamps negative similarity to 0") {
    Embedding x(2), nx(2);
    x << 1, 0;
    nx << -1, 0;
    CHECK(cosine01(x, nx) == 0.0);
    CHECK(cosine01(x, x) == doctest::Approx(1.0));
}

TEST_CASE("from_points box encloses every input point") {
    std::mt19937_64 rng(37);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    PointCloud pts;
    for (int i = 0; i < 500; ++i) pts.emplace_back(u(rng), u(rng), u(rng));
    const Aabb b = Aabb::from_points(pts);
    for (const Vec3& p : pts) CHECK(b.contains(p));
}

TEST_CASE("merged box encloses both inputs; expand makes a point interior") {
    const Aabb a = box_at(0, 0, 0, 1, 1, 1);
    const Aabb b = box_at(3, 3, 3, 1, 1, 1);
    const Aabb m = a.merged(b);
    CHECK(m.contains(a.min));
    CHECK(m.contains(a.max));
    CHECK(m.contains(b.min));
    CHECK(m.contains(b.max));

    Aabb e = a;
    e.expand(Vec3(10, -2, 0));
    CHECK(e.contains(Vec3(10, -2, 0)));
}

TEST_SUITE_END();
