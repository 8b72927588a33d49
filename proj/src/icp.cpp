#include "rlddmm/icp.hpp"

#include <Eigen/SVD>

#include "rlddmm/kdtree.hpp"

namespace rlddmm {

RigidTransform kabsch(const Mat3X& src, const Mat3X& dst) {
    if (src.cols() != dst.cols() || src.cols() < 3)
        throw DegenerateInput("kabsch needs >= 3 paired points");
    const Vec3 cs = src.rowwise().mean();
    const Vec3 cd = dst.rowwise().mean();
    const Mat3 H = (src.colwise() - cs) * (dst.colwise() - cd).transpose();
    Eigen::JacobiSVD<Mat3> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vec3 sv = svd.singularValues();
    // rotation is ill-defined when the cross-covariance drops below rank 2
    if (sv(1) <= 1e-12 * std::max(sv(0), 1e-300))
        throw DegenerateInput("rank-deficient cross-covariance in kabsch");
    Mat3 R = svd.matrixV() * svd.matrixU().transpose();
    if (R.determinant() < 0) {
        Mat3 V = svd.matrixV();
        V.col(2) *= -1.0;
        R = V * svd.matrixU().transpose();
    }
    return {R, cd - R * cs};
}

IcpResult rigid_icp(const PointCloud& source, const PointCloud& target,
                    int max_iters, double tol) {
    if (source.size() < 3 || target.size() < 3)
        throw DegenerateInput("rigid_icp needs >= 3 points per cloud");

    KdTree3 tree(target.points);
    const int n = source.size();

    RigidTransform total;
    Mat3X moved = source.points;
    IcpResult result;
    double prev_err = std::numeric_limits<double>::infinity();

    for (int iter = 0; iter < max_iters; ++iter) {
        Mat3X matched(3, n);
        double err = 0.0;
        for (int i = 0; i < n; ++i) {
            const auto hit = tree.nearest(moved.col(i));
            matched.col(i) = target.points.col(hit.index);
            err += hit.sq_dist;
        }
        err /= n;
        result.error_history.push_back(err);
        if (prev_err - err < tol) break;
        prev_err = err;

        const RigidTransform step = kabsch(moved, matched);
        moved = step.apply(moved);
        total.rotation = step.rotation * total.rotation;
        total.translation = step.rotation * total.translation + step.translation;
    }
    result.transform = total;
    return result;
}

}  // namespace rlddmm
