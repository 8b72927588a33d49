#include "rlddmm/gradients.hpp"

#include "rlddmm/kdtree.hpp"

namespace rlddmm {

BlockGradient BlockGradient::zero(int m) {
    BlockGradient g;
    g.dW1 = Eigen::MatrixXd::Zero(m, 3);
    g.db1 = Eigen::VectorXd::Zero(m);
    g.dW2 = Eigen::MatrixXd::Zero(m, m);
    g.db2 = Eigen::VectorXd::Zero(m);
    g.dW3 = Eigen::MatrixXd::Zero(3, m);
    return g;
}

NetGradient NetGradient::zero(int L, int m) {
    NetGradient g;
    g.blocks.assign(L, BlockGradient::zero(m));
    return g;
}

bool NetGradient::finite() const {
    for (const auto& b : blocks)
        if (!(b.dW1.allFinite() && b.db1.allFinite() && b.dW2.allFinite() &&
              b.db2.allFinite() && b.dW3.allFinite()))
            return false;
    return true;
}

double NetGradient::max_abs() const {
    double m = 0.0;
    for (const auto& b : blocks) {
        m = std::max(m, b.dW1.cwiseAbs().maxCoeff());
        m = std::max(m, b.db1.cwiseAbs().maxCoeff());
        m = std::max(m, b.dW2.cwiseAbs().maxCoeff());
        m = std::max(m, b.db2.cwiseAbs().maxCoeff());
        m = std::max(m, b.dW3.cwiseAbs().maxCoeff());
    }
    return m;
}

std::pair<double, Mat3X> chamfer_with_grad(const Mat3X& x, const Mat3X& y) {
    KdTree3 tx(x), ty(y);
    double value = 0.0;
    Mat3X grad = Mat3X::Zero(3, x.cols());
    for (Eigen::Index i = 0; i < x.cols(); ++i) {
        const auto hit = ty.nearest(x.col(i));
        value += hit.sq_dist;
        grad.col(i) += 2.0 * (x.col(i) - y.col(hit.index));
    }
    for (Eigen::Index j = 0; j < y.cols(); ++j) {
        const auto hit = tx.nearest(y.col(j));
        value += hit.sq_dist;
        grad.col(hit.index) += 2.0 * (x.col(hit.index) - y.col(j));
    }
    return {value, grad};
}

namespace {

// Gradient of the primal transport cost <P, C(x, y)> with the plan held
// fixed (envelope approximation).
std::pair<double, Mat3X> emd_with_grad(const Mat3X& x, const Mat3X& y,
                                       const SinkhornConfig& cfg) {
    const TransportPlan tp = sinkhorn_emd(x, y, cfg);
    Mat3X grad(3, x.cols());
    const Eigen::VectorXd row_mass = tp.plan.rowwise().sum();
    const Mat3X weighted_targets = y * tp.plan.transpose();  // 3 x n1
    for (Eigen::Index i = 0; i < x.cols(); ++i)
        grad.col(i) = 2.0 * (row_mass[i] * x.col(i) - weighted_targets.col(i));
    return {tp.cost, grad};
}

}  // namespace

std::pair<LossReport, NetGradient> loss_gradient(const Mat3X& q0,
                                                 const Mat3X& q_target,
                                                 const NetParams& net,
                                                 const ObjectiveConfig& cfg) {
    if (cfg.sigma <= 0.0) throw InvalidConfig("sigma must be > 0");
    const FlowResult fr = flow_forward(q0, net);
    const int L = net.depth();
    const Activation& act = net.activation;
    const double dt = net.dt;
    const double kin_w = cfg.weighting == KineticWeighting::Riemann ? dt : 1.0;

    auto [data_value, data_grad] =
        cfg.data_term == DataTerm::CD
            ? chamfer_with_grad(fr.endpoint(), q_target)
            : emd_with_grad(fr.endpoint(), q_target, cfg.sinkhorn);

    LossReport report;
    report.sigma = cfg.sigma;
    report.data_term = data_value;
    auto [kin_total, per_block] = kinetic_energy(fr, cfg.weighting);
    report.kinetic_total = kin_total;
    report.per_block_energy = std::move(per_block);
    report.total = cfg.data_scale * data_value / (2.0 * cfg.sigma * cfg.sigma) +
                   cfg.kinetic_scale * kin_total;

    NetGradient grad = NetGradient::zero(L, net.width);
    // adjoint of the running state, seeded by the data term at the endpoint
    Mat3X lambda = cfg.data_scale * data_grad / (2.0 * cfg.sigma * cfg.sigma);

    for (int l = L - 1; l >= 0; --l) {
        const BlockParams& theta = net.blocks[l];
        const Mat3X& X = fr.shapes[l];
        const Mat3X& V = fr.velocities[l];

        // adjoint on the raw velocity: state update (dt) + kinetic term (w*v)
        Mat3X g_v = dt * lambda + cfg.kinetic_scale * kin_w * V;

        // recompute block intermediates (cheaper than storing them all)
        Eigen::MatrixXd Z1 = (theta.W1 * X).colwise() + theta.b1;
        Eigen::MatrixXd H = Z1;
        Eigen::MatrixXd D1 = Z1;  // activation derivative at Z1
        for (Eigen::Index j = 0; j < Z1.cols(); ++j)
            for (Eigen::Index i = 0; i < Z1.rows(); ++i) {
                H(i, j) = act.value(Z1(i, j));
                D1(i, j) = act.deriv(Z1(i, j));
            }
        Eigen::MatrixXd Z2 = (theta.W2 * H).colwise() + theta.b2;

        BlockGradient& bg = grad.blocks[l];
        bg.dW3 = g_v * Z2.transpose();
        Eigen::MatrixXd g_z2 = theta.W3.transpose() * g_v;
        bg.db2 = g_z2.rowwise().sum();
        bg.dW2 = g_z2 * H.transpose();
        Eigen::MatrixXd g_z1 = (theta.W2.transpose() * g_z2).cwiseProduct(D1);
        bg.db1 = g_z1.rowwise().sum();
        bg.dW1 = g_z1 * X.transpose();

        lambda += theta.W1.transpose() * g_z1;
    }

    if (!grad.finite()) throw NonFiniteGradient("gradient contains NaN/Inf");
    return {std::move(report), std::move(grad)};
}

namespace {

double loss_value(const Mat3X& q0, const Mat3X& q_target, const NetParams& net,
                  const ObjectiveConfig& cfg) {
    const FlowResult fr = flow_forward(q0, net);
    return total_loss(fr.endpoint(), q_target, fr, cfg).total;
}

}  // namespace

NetGradient finite_difference_gradient(const Mat3X& q0, const Mat3X& q_target,
                                       const NetParams& net,
                                       const ObjectiveConfig& cfg, double h) {
    if (h <= 0.0) throw InvalidConfig("h must be > 0");
    NetParams work = net;
    NetGradient grad = NetGradient::zero(net.depth(), net.width);
    auto central = [&](double& param) {
        const double saved = param;
        param = saved + h;
        const double plus = loss_value(q0, q_target, work, cfg);
        param = saved - h;
        const double minus = loss_value(q0, q_target, work, cfg);
        param = saved;
        return (plus - minus) / (2.0 * h);
    };
    auto sweep = [&](Eigen::Ref<Eigen::MatrixXd> P, Eigen::Ref<Eigen::MatrixXd> G) {
        for (Eigen::Index i = 0; i < P.rows(); ++i)
            for (Eigen::Index j = 0; j < P.cols(); ++j) G(i, j) = central(P(i, j));
    };
    for (int l = 0; l < net.depth(); ++l) {
        auto& b = work.blocks[l];
        auto& g = grad.blocks[l];
        sweep(b.W1, g.dW1);
        sweep(b.b1, g.db1);
        sweep(b.W2, g.dW2);
        sweep(b.b2, g.db2);
        sweep(b.W3, g.dW3);
    }
    return grad;
}

}  // namespace rlddmm
