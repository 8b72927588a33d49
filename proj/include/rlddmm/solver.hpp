// End-to-end registration: joint normalization, rigid ICP pre-alignment,
// Xavier init, then full-batch ADAM on the flow objective. Also extracts
// the discrete geodesic path from a trained flow.
#pragma once

#include <optional>

#include "rlddmm/gradients.hpp"
#include "rlddmm/icp.hpp"

namespace rlddmm {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct RegistrationConfig {
    int L = 10;
    int m = 900;
    double eta = 1e-5;
    int epochs = 2000;
    Activation activation = {ActivationKind::LeakyRelu, 0.01};
    ObjectiveConfig objective;  // sigma = 0.1, CD by default
    AdamConfig adam;
    std::uint64_t seed = 0;
    bool normalize = true;
    bool rigid_prealign = true;
    int icp_max_iters = 50;
    double icp_tol = 1e-10;
    // stop when the best total loss improves by less than early_stop_eps
    // over early_stop_window consecutive epochs (0 disables)
    int early_stop_window = 200;
    double early_stop_eps = 1e-8;

    void validate() const;
};

struct AdamState {
    std::vector<BlockGradient> m1;
    std::vector<BlockGradient> m2;
    long step = 0;

    static AdamState zero(int L, int m);
};

// Standard bias-corrected ADAM update, entry-wise and deterministic.
// Throws NonFiniteGradient before mutating anything.
void adam_step(NetParams& theta, const NetGradient& g, AdamState& s,
               double eta, const AdamConfig& hp);

struct RegistrationOutcome {
    NetParams theta_star;          // best-by-total-loss iterate
    FlowResult final_flow;         // flow of theta_star on the prepared source
    std::vector<LossReport> history;
    double wall_seconds = 0.0;
    int best_epoch = 0;
    NormalizationRecord norm;      // identity when cfg.normalize == false
    RigidTransform prealign;       // identity when cfg.rigid_prealign == false
    PointCloud source;             // original source (faces/labels preserved)
    Mat3X prepared_source;         // normalized + pre-aligned flow input q^0
};

RegistrationOutcome register_clouds(const PointCloud& q_S,
                                    const PointCloud& q_T,
                                    const RegistrationConfig& cfg);

// q^0 ... q^L along the trained flow, mapped back to scene units; carries
// the source's faces and labels.
std::vector<PointCloud> geodesic_path(const RegistrationOutcome& outcome);

// Discrete length functional sum_l dt * sqrt(sum_i |v^l_i|^2); zero iff the
// flow is stationary. Distinct from the kinetic energy in LossReport.
double path_energy(const RegistrationOutcome& outcome);

void write_loss_history_csv(const std::vector<LossReport>& history,
                            const std::filesystem::path& path);

}  // namespace rlddmm
