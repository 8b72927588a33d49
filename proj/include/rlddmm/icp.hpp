// Rigid pre-alignment: point-to-point ICP with Kabsch rotation estimation.
#pragma once

#include "rlddmm/core.hpp"
#include "rlddmm/pointcloud.hpp"

namespace rlddmm {

struct RigidTransform {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    Vec3 apply(const Vec3& x) const { return rotation * x + translation; }
    Mat3X apply(const Mat3X& x) const {
        return (rotation * x).colwise() + translation;
    }
    RigidTransform inverse() const {
        return {rotation.transpose(), -(rotation.transpose() * translation)};
    }
};

// Least-squares rotation+translation mapping src onto dst (columns paired).
// Reflections are corrected by flipping the last singular vector.
// Throws DegenerateInput when the cross-covariance is rank-deficient.
RigidTransform kabsch(const Mat3X& src, const Mat3X& dst);

struct IcpResult {
    RigidTransform transform;
    std::vector<double> error_history;  // mean squared NN distance per iteration
};

IcpResult rigid_icp(const PointCloud& source, const PointCloud& target,
                    int max_iters = 50, double tol = 1e-10);

}  // namespace rlddmm
