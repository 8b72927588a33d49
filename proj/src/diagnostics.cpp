#include "rlddmm/diagnostics.hpp"

#include <fstream>
#include <unordered_map>

namespace rlddmm {

ActivationPattern activation_pattern(const Vec3& x, const BlockParams& theta,
                                     const Activation& act, int block_index) {
    if (act.kind == ActivationKind::Tanh)
        throw InvalidConfig("activation patterns are defined for relu/leaky only");
    const int m = theta.width();
    ActivationPattern pat;
    pat.block_index = block_index;
    pat.signs.resize(m);
    const Eigen::VectorXd z1 = theta.W1 * x + theta.b1;
    // slope of the activation on each side of the hyperplane
    Eigen::VectorXd slope(m);
    for (int k = 0; k < m; ++k) {
        pat.signs[k] = z1[k] >= 0.0;
        slope[k] = pat.signs[k] ? 1.0
                   : (act.kind == ActivationKind::Relu ? 0.0 : act.alpha);
    }
    const Eigen::MatrixXd W32 = theta.W3 * theta.W2;  // 3 x m
    pat.A = W32 * slope.asDiagonal() * theta.W1;
    pat.c = W32 * slope.cwiseProduct(theta.b1) + theta.W3 * theta.b2;
    return pat;
}

std::pair<int, std::map<std::vector<bool>, int>> polytope_census(
    const BlockParams& theta, const Mat3X& probes) {
    if (probes.cols() == 0) throw EmptyCloud("census needs probes");
    std::map<std::vector<bool>, int> counts;
    const int m = theta.width();
    for (Eigen::Index i = 0; i < probes.cols(); ++i) {
        const Eigen::VectorXd z1 = theta.W1 * probes.col(i) + theta.b1;
        std::vector<bool> signs(m);
        for (int k = 0; k < m; ++k) signs[k] = z1[k] >= 0.0;
        ++counts[std::move(signs)];
    }
    return {static_cast<int>(counts.size()), counts};
}

BBox BBox::inflated(double factor) const {
    const Vec3 mid = 0.5 * (lo + hi);
    const Vec3 half = 0.5 * factor * extent();
    return {mid - half, mid + half};
}

BBox BBox::of(const Mat3X& pts) {
    return {pts.rowwise().minCoeff(), pts.rowwise().maxCoeff()};
}

BBox BBox::of(const Mat3X& a, const Mat3X& b) {
    const BBox ba = of(a), bb = of(b);
    return {ba.lo.cwiseMin(bb.lo), ba.hi.cwiseMax(bb.hi)};
}

JacobianField jacobian_grid_check(const NetParams& net, const BBox& box,
                                  int resolution, double h) {
    if (resolution < 2) throw InvalidConfig("grid resolution must be >= 2");
    if (h <= 0.0) throw InvalidConfig("finite-difference step must be > 0");
    const int n = resolution * resolution * resolution;

    // 6 perturbed copies of every grid point, flowed in one batch
    Mat3X probes(3, 6 * n);
    int col = 0;
    for (int kz = 0; kz < resolution; ++kz)
        for (int ky = 0; ky < resolution; ++ky)
            for (int kx = 0; kx < resolution; ++kx) {
                const Vec3 frac(double(kx) / (resolution - 1),
                                double(ky) / (resolution - 1),
                                double(kz) / (resolution - 1));
                const Vec3 p = box.lo + frac.cwiseProduct(box.extent());
                for (int axis = 0; axis < 3; ++axis) {
                    Vec3 d = Vec3::Zero();
                    d[axis] = h;
                    probes.col(col++) = p + d;
                    probes.col(col++) = p - d;
                }
            }
    const Mat3X mapped = apply_flow(probes, net);

    JacobianField field;
    field.resolution = resolution;
    field.box = box;
    field.dets.reserve(n);
    field.min_det = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
        Mat3 J;
        for (int axis = 0; axis < 3; ++axis)
            J.col(axis) = (mapped.col(6 * i + 2 * axis) -
                           mapped.col(6 * i + 2 * axis + 1)) /
                          (2.0 * h);
        const double det = J.determinant();
        field.dets.push_back(det);
        field.min_det = std::min(field.min_det, det);
    }
    return field;
}

double inverse_consistency(const PointCloud& q_S, const PointCloud& q_T,
                           const RegistrationConfig& cfg) {
    const RegistrationOutcome fwd = register_clouds(q_S, q_T, cfg);
    const RegistrationOutcome bwd = register_clouds(q_T, q_S, cfg);

    // map source points A -> B with the forward run, then B -> A with the
    // backward run; all composition happens in scene units
    const Mat3X in_b = geodesic_path(fwd).back().points;

    Mat3X bwd_in = bwd.prealign.apply(bwd.norm.apply(in_b));
    const Mat3X round_trip = bwd.norm.invert(apply_flow(bwd_in, bwd.theta_star));

    return (round_trip - q_S.points).colwise().norm().mean();
}

double tre(const PointCloud& deformed, const PointCloud& target) {
    if (!deformed.has_labels() || !target.has_labels())
        throw MissingCorrespondence("both clouds need correspondence labels");
    std::unordered_map<int, int> target_index;
    for (int j = 0; j < target.size(); ++j)
        target_index.emplace(target.labels[j], j);
    double sum = 0.0;
    for (int i = 0; i < deformed.size(); ++i) {
        const auto it = target_index.find(deformed.labels[i]);
        if (it == target_index.end())
            throw MissingCorrespondence("label " +
                                        std::to_string(deformed.labels[i]) +
                                        " missing in target");
        sum += (deformed.points.col(i) - target.points.col(it->second))
                   .squaredNorm();
    }
    return std::sqrt(sum / deformed.size());
}

DiagnosticsReport compute_diagnostics(const RegistrationOutcome& outcome,
                                      const PointCloud& target,
                                      int grid_resolution) {
    const NetParams& net = outcome.theta_star;
    DiagnosticsReport report;

    for (const auto& block : net.blocks)
        report.C_theta = std::max(report.C_theta, block_lipschitz_bound(block));
    report.bilipschitz_factor = std::exp(report.C_theta);

    // probe grid over the inflated joint bounding box, in normalized units
    Mat3X tgt_points = target.points;
    tgt_points = outcome.norm.apply(tgt_points);
    const BBox box =
        BBox::of(outcome.prepared_source, tgt_points).inflated(1.2);
    report.grid_box = box;
    report.grid_resolution = grid_resolution;
    const double h = 1e-4 * box.diagonal();
    const JacobianField field =
        jacobian_grid_check(net, box, grid_resolution, h);
    report.min_jacobian_det = field.min_det;

    // census probes: source points plus a 16^3 grid
    const int census_res = 16;
    Mat3X grid(3, census_res * census_res * census_res);
    int col = 0;
    for (int kz = 0; kz < census_res; ++kz)
        for (int ky = 0; ky < census_res; ++ky)
            for (int kx = 0; kx < census_res; ++kx) {
                const Vec3 frac(double(kx) / (census_res - 1),
                                double(ky) / (census_res - 1),
                                double(kz) / (census_res - 1));
                grid.col(col++) = box.lo + frac.cwiseProduct(box.extent());
            }
    Mat3X probes(3, outcome.prepared_source.cols() + grid.cols());
    probes << outcome.prepared_source, grid;
    if (net.activation.kind != ActivationKind::Tanh) {
        for (const auto& block : net.blocks)
            report.pattern_count_per_block.push_back(
                polytope_census(block, probes).first);
    }

    if (outcome.source.has_labels() && target.has_labels()) {
        PointCloud deformed = outcome.source;
        deformed.points = outcome.norm.invert(outcome.final_flow.endpoint());
        report.tre_scene_units = tre(deformed, target);
    }
    return report;
}

void write_diagnostics_report(const DiagnosticsReport& report,
                              const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out.precision(17);
    out << "C_theta: " << report.C_theta << '\n';
    out << "bilipschitz_factor: " << report.bilipschitz_factor << '\n';
    out << "min_jacobian_det: " << report.min_jacobian_det << '\n';
    out << "grid_resolution: " << report.grid_resolution << '\n';
    out << "grid_lo: " << report.grid_box.lo.transpose() << '\n';
    out << "grid_hi: " << report.grid_box.hi.transpose() << '\n';
    out << "pattern_count_per_block:";
    for (int c : report.pattern_count_per_block) out << ' ' << c;
    out << '\n';
    if (report.tre_scene_units) out << "tre: " << *report.tre_scene_units << '\n';
    if (report.inverse_gap) out << "inverse_gap: " << *report.inverse_gap << '\n';
}

}  // namespace rlddmm
