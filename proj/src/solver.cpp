#include "rlddmm/solver.hpp"

#include <chrono>
#include <fstream>

namespace rlddmm {

void RegistrationConfig::validate() const {
    if (L < 1 || m < 1) throw InvalidConfig("need L >= 1 and m >= 1");
    if (eta <= 0.0) throw InvalidConfig("eta must be > 0");
    if (epochs < 1) throw InvalidConfig("epochs must be >= 1");
    if (objective.sigma <= 0.0) throw InvalidConfig("sigma must be > 0");
    if (objective.sinkhorn.epsilon <= 0.0)
        throw InvalidConfig("sinkhorn epsilon must be > 0");
    if (adam.beta1 <= 0.0 || adam.beta1 >= 1.0 || adam.beta2 <= 0.0 ||
        adam.beta2 >= 1.0 || adam.eps <= 0.0)
        throw InvalidConfig("bad ADAM hyperparameters");
}

AdamState AdamState::zero(int L, int m) {
    AdamState s;
    s.m1.assign(L, BlockGradient::zero(m));
    s.m2.assign(L, BlockGradient::zero(m));
    s.step = 0;
    return s;
}

namespace {

void adam_update(Eigen::Ref<Eigen::MatrixXd> theta,
                 const Eigen::Ref<const Eigen::MatrixXd>& g,
                 Eigen::Ref<Eigen::MatrixXd> m1, Eigen::Ref<Eigen::MatrixXd> m2,
                 double eta, const AdamConfig& hp, double bc1, double bc2) {
    m1 = hp.beta1 * m1 + (1.0 - hp.beta1) * g;
    m2 = hp.beta2 * m2 + (1.0 - hp.beta2) * g.cwiseProduct(g);
    theta.array() -= eta * (m1.array() / bc1) /
                     ((m2.array() / bc2).sqrt() + hp.eps);
}

}  // namespace

void adam_step(NetParams& theta, const NetGradient& g, AdamState& s,
               double eta, const AdamConfig& hp) {
    if (!g.finite()) throw NonFiniteGradient("refusing ADAM step on NaN/Inf gradient");
    s.step += 1;
    const double bc1 = 1.0 - std::pow(hp.beta1, double(s.step));
    const double bc2 = 1.0 - std::pow(hp.beta2, double(s.step));
    for (int l = 0; l < theta.depth(); ++l) {
        auto& b = theta.blocks[l];
        const auto& gb = g.blocks[l];
        auto& m1 = s.m1[l];
        auto& m2 = s.m2[l];
        adam_update(b.W1, gb.dW1, m1.dW1, m2.dW1, eta, hp, bc1, bc2);
        adam_update(b.b1, gb.db1, m1.db1, m2.db1, eta, hp, bc1, bc2);
        adam_update(b.W2, gb.dW2, m1.dW2, m2.dW2, eta, hp, bc1, bc2);
        adam_update(b.b2, gb.db2, m1.db2, m2.db2, eta, hp, bc1, bc2);
        adam_update(b.W3, gb.dW3, m1.dW3, m2.dW3, eta, hp, bc1, bc2);
    }
}

RegistrationOutcome register_clouds(const PointCloud& q_S,
                                    const PointCloud& q_T,
                                    const RegistrationConfig& cfg) {
    cfg.validate();
    q_S.validate();
    q_T.validate();
    const auto t0 = std::chrono::steady_clock::now();

    RegistrationOutcome out;
    out.source = q_S;

    PointCloud src = q_S;
    PointCloud tgt = q_T;
    if (cfg.normalize) out.norm = normalize(src, tgt);
    if (cfg.rigid_prealign) {
        out.prealign =
            rigid_icp(src, tgt, cfg.icp_max_iters, cfg.icp_tol).transform;
        src.points = out.prealign.apply(src.points);
    }
    out.prepared_source = src.points;

    NetParams theta =
        xavier_init(cfg.L, cfg.m, cfg.seed, cfg.activation);
    AdamState adam = AdamState::zero(cfg.L, cfg.m);
    double eta = cfg.eta;
    bool halved = false;
    int bad_streak = 0;

    NetParams best_theta = theta;
    double best_total = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    int last_improve_epoch = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        LossReport report;
        NetGradient grad;
        bool ok = true;
        try {
            std::tie(report, grad) =
                loss_gradient(src.points, tgt.points, theta, cfg.objective);
        } catch (const NonFiniteState&) {
            ok = false;
        } catch (const NonFiniteGradient&) {
            ok = false;
        }
        if (!ok) {
            ++bad_streak;
            if (halved && bad_streak >= 2)
                throw Divergence(
                    "non-finite state/gradient twice after halving eta");
            if (!halved) {
                halved = true;
                eta *= 0.5;
            }
            // restart from the last good iterate with fresh moments
            theta = best_theta;
            adam = AdamState::zero(cfg.L, cfg.m);
            continue;
        }
        bad_streak = 0;
        out.history.push_back(report);
        if (report.total < best_total - cfg.early_stop_eps)
            last_improve_epoch = epoch;
        if (report.total < best_total) {
            best_total = report.total;
            best_theta = theta;
            best_epoch = static_cast<int>(out.history.size()) - 1;
        }
        if (cfg.early_stop_window > 0 &&
            epoch - last_improve_epoch >= cfg.early_stop_window)
            break;
        adam_step(theta, grad, adam, eta, cfg.adam);
    }

    if (out.history.empty())
        throw Divergence("no successful epoch");

    out.theta_star = std::move(best_theta);
    out.best_epoch = best_epoch;
    out.final_flow = flow_forward(src.points, out.theta_star);
    out.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    return out;
}

std::vector<PointCloud> geodesic_path(const RegistrationOutcome& outcome) {
    std::vector<PointCloud> path;
    path.reserve(outcome.final_flow.shapes.size());
    for (const auto& shape : outcome.final_flow.shapes) {
        PointCloud frame = outcome.source;
        frame.points = outcome.norm.invert(shape);
        path.push_back(std::move(frame));
    }
    return path;
}

double path_energy(const RegistrationOutcome& outcome) {
    const FlowResult& fr = outcome.final_flow;
    double length = 0.0;
    for (int l = 0; l < fr.depth(); ++l)
        length += fr.dt * fr.velocities[l].norm();
    return length;
}

void write_loss_history_csv(const std::vector<LossReport>& history,
                            const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << "epoch,data_term,kinetic_total,total\n";
    out.precision(17);
    for (size_t e = 0; e < history.size(); ++e)
        out << e << ',' << history[e].data_term << ','
            << history[e].kinetic_total << ',' << history[e].total << '\n';
}

}  // namespace rlddmm
