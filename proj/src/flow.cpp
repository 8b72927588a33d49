#include "rlddmm/flow.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace rlddmm {

namespace {

// Single Euler step shared by flow_forward and apply_flow so probe points
// follow bit-identical arithmetic.
Mat3X euler_step(const Mat3X& x, const BlockParams& theta,
                 const Activation& act, double dt, Mat3X* velocity_out) {
    Mat3X v = block_velocity(x, theta, act);
    if (!v.allFinite())
        throw NonFiniteState("velocity field produced NaN/Inf");
    Mat3X next = x + dt * v;
    if (velocity_out) *velocity_out = std::move(v);
    return next;
}

}  // namespace

FlowResult flow_forward(const Mat3X& q0, const NetParams& net) {
    if (q0.cols() == 0) throw EmptyCloud("flow_forward needs a nonempty shape");
    if (net.depth() < 1) throw InvalidConfig("network has no blocks");
    FlowResult fr;
    fr.dt = net.dt;
    fr.shapes.reserve(net.depth() + 1);
    fr.velocities.resize(net.depth());
    fr.shapes.push_back(q0);
    for (int l = 0; l < net.depth(); ++l)
        fr.shapes.push_back(euler_step(fr.shapes[l], net.blocks[l],
                                       net.activation, net.dt,
                                       &fr.velocities[l]));
    return fr;
}

Mat3X apply_flow(const Mat3X& points, const NetParams& net) {
    Mat3X x = points;
    for (int l = 0; l < net.depth(); ++l)
        x = euler_step(x, net.blocks[l], net.activation, net.dt, nullptr);
    return x;
}

NetParams refine_steps(const NetParams& net, int factor) {
    if (factor < 1) throw InvalidConfig("refine factor must be >= 1");
    if (factor == 1) return net;
    NetParams fine;
    fine.width = net.width;
    fine.activation = net.activation;
    fine.dt = net.dt / factor;
    fine.blocks.reserve(net.depth() * factor);
    for (const auto& block : net.blocks)
        for (int r = 0; r < factor; ++r) fine.blocks.push_back(block);
    return fine;
}

void export_flow_frames(const FlowResult& fr, const PointCloud& like,
                        const std::filesystem::path& dir, CloudFormat format) {
    std::filesystem::create_directories(dir);
    const char* ext = format == CloudFormat::Obj   ? ".obj"
                      : format == CloudFormat::Ply ? ".ply"
                                                   : ".xyz";
    for (size_t l = 0; l < fr.shapes.size(); ++l) {
        PointCloud frame = like;
        frame.points = fr.shapes[l];
        std::ostringstream name;
        name << "frame_" << std::setw(3) << std::setfill('0') << l << ext;
        save_pointcloud(frame, dir / name.str(), format);
    }
    std::ofstream csv(dir / "velocity_magnitudes.csv");
    if (!csv) throw IoError("cannot write velocity CSV");
    csv << "block,point,magnitude\n";
    csv.precision(17);
    for (int l = 0; l < fr.depth(); ++l)
        for (Eigen::Index i = 0; i < fr.velocities[l].cols(); ++i)
            csv << l << ',' << i << ',' << fr.velocities[l].col(i).norm() << '\n';
}

}  // namespace rlddmm
