// Regularity analysis of a trained flow: Lipschitz bounds, Jacobian
// positivity on a probe grid, activation-pattern census, inverse
// consistency and target registration error.
#pragma once

#include <map>
#include <optional>

#include "rlddmm/solver.hpp"

namespace rlddmm {

struct ActivationPattern {
    int block_index = 0;
    std::vector<bool> signs;  // true = nonnegative pre-activation
    Mat3 A = Mat3::Zero();    // local linearization: f(x) = A*x + c on the polytope
    Vec3 c = Vec3::Zero();
};

// signs[k] = (row k of W1) . x + b1[k] >= 0. The affine part composes the
// active linearization through W2 and W3, so it is exact for relu and leaky.
ActivationPattern activation_pattern(const Vec3& x, const BlockParams& theta,
                                     const Activation& act, int block_index = 0);

// Distinct sign vectors realized on the probe set, plus per-pattern counts.
std::pair<int, std::map<std::vector<bool>, int>> polytope_census(
    const BlockParams& theta, const Mat3X& probes);

struct BBox {
    Vec3 lo = Vec3::Zero();
    Vec3 hi = Vec3::Ones();
    Vec3 extent() const { return hi - lo; }
    double diagonal() const { return extent().norm(); }
    BBox inflated(double factor) const;
    static BBox of(const Mat3X& pts);
    static BBox of(const Mat3X& a, const Mat3X& b);
};

struct JacobianField {
    double min_det = 0.0;
    std::vector<double> dets;  // resolution^3 values, x-fastest ordering
    int resolution = 0;
    BBox box;
};

// Central finite differences of apply_flow over a resolution^3 grid.
JacobianField jacobian_grid_check(const NetParams& net, const BBox& box,
                                  int resolution, double h);

// Trains source->target and target->source with the same config/seed and
// returns the mean round-trip displacement of the source points, in scene
// units.
double inverse_consistency(const PointCloud& q_S, const PointCloud& q_T,
                           const RegistrationConfig& cfg);

// RMSE over label-matched point pairs. Every label of `deformed` must
// appear in `target` (MissingCorrespondence otherwise).
double tre(const PointCloud& deformed, const PointCloud& target);

struct DiagnosticsReport {
    double C_theta = 0.0;             // max per-block Lipschitz bound
    double bilipschitz_factor = 1.0;  // exp(C_theta)
    double min_jacobian_det = 0.0;
    BBox grid_box;
    int grid_resolution = 0;
    std::vector<int> pattern_count_per_block;
    std::optional<double> tre_scene_units;
    std::optional<double> inverse_gap;
};

// Probe set = source points plus a 16^3 grid over the 1.2x-inflated joint
// bounding box of the endpoint shapes; deterministic.
DiagnosticsReport compute_diagnostics(const RegistrationOutcome& outcome,
                                      const PointCloud& target,
                                      int grid_resolution = 16);

void write_diagnostics_report(const DiagnosticsReport& report,
                              const std::filesystem::path& path);

}  // namespace rlddmm
