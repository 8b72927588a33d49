// Forward-Euler integration of the per-block velocity fields:
// x^{l+1} = x^l + dt * f(x^l, theta^{l+1}).
#pragma once

#include <filesystem>
#include <vector>

#include "rlddmm/network.hpp"
#include "rlddmm/pointcloud.hpp"

namespace rlddmm {

struct FlowResult {
    // shapes[0] = q^0 ... shapes[L] = q^L; velocities[l] holds the raw
    // (pre-dt) block outputs f(q^l, theta^{l+1}), so
    // shapes[l+1] = shapes[l] + dt * velocities[l] entry-wise.
    std::vector<Mat3X> shapes;
    std::vector<Mat3X> velocities;
    double dt = 1.0;

    int depth() const { return static_cast<int>(velocities.size()); }
    const Mat3X& endpoint() const { return shapes.back(); }
};

// Throws NonFiniteState as soon as any coordinate leaves the finite range.
FlowResult flow_forward(const Mat3X& q0, const NetParams& net);

// Same recurrence on arbitrary probe points; bit-identical to flow_forward
// on the shape points (shares the update code path).
Mat3X apply_flow(const Mat3X& points, const NetParams& net);

// Each block repeated `factor` times with dt' = 1/(factor*L): the same
// piecewise-constant-in-time field sampled finer.
NetParams refine_steps(const NetParams& net, int factor);

// One mesh file per intermediate shape (frame_000...frame_L) plus a CSV of
// per-point velocity magnitudes per block.
void export_flow_frames(const FlowResult& fr, const PointCloud& like,
                        const std::filesystem::path& dir, CloudFormat format);

}  // namespace rlddmm
