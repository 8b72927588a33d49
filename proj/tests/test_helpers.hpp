// Synthetic clouds and small networks shared by the test suites.
#pragma once

#include <cmath>

#include "rlddmm/network.hpp"
#include "rlddmm/pointcloud.hpp"

namespace rlddmm::testing {

// Fibonacci-spiral sphere: deterministic, roughly uniform, no duplicates.
inline PointCloud make_sphere(int n, double radius = 1.0) {
    PointCloud cloud;
    cloud.points.resize(3, n);
    const double golden = M_PI * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < n; ++i) {
        const double y = 1.0 - 2.0 * (i + 0.5) / n;
        const double r = std::sqrt(std::max(0.0, 1.0 - y * y));
        const double phi = golden * i;
        cloud.points.col(i) =
            radius * Vec3(r * std::cos(phi), y, r * std::sin(phi));
        cloud.labels.push_back(i);
    }
    return cloud;
}

// Per-axis scaling of a sphere; labels keep the ground-truth correspondence.
inline PointCloud make_ellipsoid(int n, const Vec3& axes, double radius = 1.0) {
    PointCloud cloud = make_sphere(n, radius);
    cloud.points = axes.asDiagonal() * cloud.points;
    return cloud;
}

inline Mat3X random_cloud(int n, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    Mat3X pts(3, n);
    for (int i = 0; i < n; ++i)
        pts.col(i) = Vec3(rng.uniform(-scale, scale), rng.uniform(-scale, scale),
                          rng.uniform(-scale, scale));
    return pts;
}

inline PointCloud cloud_of(const Mat3X& pts) {
    PointCloud c;
    c.points = pts;
    return c;
}

// Constant-field block: W1 = 0, b1 = 1, W2 = I, b2 = 0, W3 row pattern so
// that f(x) == v everywhere (for relu/leaky, act(1) == 1).
inline BlockParams constant_field_block(int m, const Vec3& v) {
    BlockParams b = BlockParams::zero(m);
    b.b1.setOnes();
    b.W2.setIdentity();
    for (int k = 0; k < m; ++k) b.W3.col(k) = v / m;
    return b;
}

inline NetParams constant_field_net(int L, int m, const Vec3& v,
                                    Activation act = {ActivationKind::Relu, 0.01}) {
    NetParams net = NetParams::zero(L, m, act);
    for (auto& block : net.blocks) block = constant_field_block(m, v);
    return net;
}

}  // namespace rlddmm::testing
