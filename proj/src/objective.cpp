#include "rlddmm/objective.hpp"

#include "rlddmm/kdtree.hpp"

namespace rlddmm {

namespace {

double one_sided_chamfer(const Mat3X& from, const KdTree3& to_tree) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < from.cols(); ++i)
        sum += to_tree.nearest(from.col(i)).sq_dist;
    return sum;
}

Eigen::MatrixXd squared_distances(const Mat3X& a, const Mat3X& b) {
    const Eigen::Index n1 = a.cols(), n2 = b.cols();
    Eigen::MatrixXd C(n1, n2);
    for (Eigen::Index j = 0; j < n2; ++j)
        C.col(j) = (a.colwise() - Vec3(b.col(j))).colwise().squaredNorm();
    return C;
}

double logsumexp(const Eigen::Ref<const Eigen::VectorXd>& v) {
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((v.array() - m).exp().sum());
}

// entropic-regularized transport cost <P,C> + eps*KL(P | a x b) with uniform
// marginals; exact under the fixed-plan gradient (Danskin), and within
// eps*log(n) of the unregularized optimum
double regularized_cost(const Eigen::MatrixXd& P, const Eigen::MatrixXd& C,
                        double epsilon) {
    const double nn = double(P.rows()) * double(P.cols());
    double kl = 0.0;
    for (Eigen::Index i = 0; i < P.size(); ++i)
        if (P(i) > 0.0) kl += P(i) * std::log(P(i) * nn);
    return (P.array() * C.array()).sum() + epsilon * kl;
}

TransportPlan sinkhorn_log_domain(const Eigen::MatrixXd& C,
                                  const SinkhornConfig& cfg) {
    const Eigen::Index n1 = C.rows(), n2 = C.cols();
    const double la = -std::log(double(n1));  // log(1/n1)
    const double lb = -std::log(double(n2));
    Eigen::VectorXd f = Eigen::VectorXd::Zero(n1);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n2);
    auto plan_from = [&](const Eigen::VectorXd& fv, const Eigen::VectorXd& gv) {
        Eigen::MatrixXd P(n1, n2);
        for (Eigen::Index i = 0; i < n1; ++i)
            for (Eigen::Index j = 0; j < n2; ++j)
                P(i, j) = std::exp((fv[i] + gv[j] - C(i, j)) / cfg.epsilon + la + lb);
        return P;
    };

    // row sums after a column update factor as
    //   sum_j P_ij = exp((f_i - f'_i)/eps + la)
    // where f' is the next row update, so the marginal violation falls out
    // of the following iteration's row pass without forming the plan
    Eigen::VectorXd t(std::max(n1, n2));
    const auto row_update = [&](Eigen::VectorXd& f_out) {
        for (Eigen::Index i = 0; i < n1; ++i) {
            t.head(n2) = (g - C.row(i).transpose()) / cfg.epsilon;
            f_out[i] = -cfg.epsilon * (logsumexp(t.head(n2)) + lb);
        }
    };
    int it = 0;
    Eigen::VectorXd f_next(n1);
    for (; it < cfg.max_iters; ++it) {
        if (it == 0) {
            row_update(f);
        } else {
            row_update(f_next);
            double violation = 0.0;
            for (Eigen::Index i = 0; i < n1; ++i)
                violation = std::max(
                    violation,
                    std::abs(std::exp((f[i] - f_next[i]) / cfg.epsilon) - 1.0) /
                        double(n1));
            f = f_next;
            if (it >= cfg.min_iters && violation < cfg.tol) break;
        }
        // column scaling: columns sum to 1/n2 exactly afterwards
        for (Eigen::Index j = 0; j < n2; ++j) {
            t.head(n1) = (f - C.col(j)) / cfg.epsilon;
            g[j] = -cfg.epsilon * (logsumexp(t.head(n1)) + la);
        }
    }

    TransportPlan result;
    result.plan = plan_from(f, g);
    result.cost = regularized_cost(result.plan, C, cfg.epsilon);
    result.epsilon = cfg.epsilon;
    result.iterations = it;
    return result;
}

TransportPlan sinkhorn_naive(const Eigen::MatrixXd& C,
                             const SinkhornConfig& cfg) {
    const Eigen::Index n1 = C.rows(), n2 = C.cols();
    // every row and column needs at least one kernel entry representable as
    // a normal double; below that exp() flushes toward zero (vectorized exp
    // may return a denormal instead of 0, so test the exponent, not the sum)
    const double lo = std::log(std::numeric_limits<double>::min());
    if ((C.rowwise().minCoeff().array() / cfg.epsilon > -lo).any() ||
        (C.colwise().minCoeff().array() / cfg.epsilon > -lo).any())
        throw NumericalUnderflow(
            "kernel underflow at epsilon=" + std::to_string(cfg.epsilon) +
            "; use log-domain mode");
    Eigen::MatrixXd K = (-C / cfg.epsilon).array().exp();
    const Eigen::VectorXd a = Eigen::VectorXd::Constant(n1, 1.0 / double(n1));
    const Eigen::VectorXd b = Eigen::VectorXd::Constant(n2, 1.0 / double(n2));
    Eigen::VectorXd u = Eigen::VectorXd::Ones(n1);
    Eigen::VectorXd v = Eigen::VectorXd::Ones(n2);
    // Kv is carried across iterations: the row sums of the implicit plan
    // diag(u) K diag(v) are u .* (K v), so convergence is checked without
    // ever forming the plan
    Eigen::VectorXd Kv = K * v, Ktu(n2);
    int it = 0;
    for (; it < cfg.max_iters; ++it) {
        u = a.array() / Kv.array();
        Ktu.noalias() = K.transpose() * u;
        v = b.array() / Ktu.array();
        if (!u.allFinite() || !v.allFinite())
            throw NumericalUnderflow("scaling vector underflow; use log-domain mode");
        Kv.noalias() = K * v;
        const double violation =
            (u.array() * Kv.array() - a.array()).abs().maxCoeff();
        if (it + 1 >= cfg.min_iters && violation < cfg.tol) {
            ++it;
            break;
        }
    }
    TransportPlan result;
    result.plan = u.asDiagonal() * K * v.asDiagonal();
    result.cost = regularized_cost(result.plan, C, cfg.epsilon);
    result.epsilon = cfg.epsilon;
    result.iterations = it;
    return result;
}

}  // namespace

double chamfer(const Mat3X& q1, const Mat3X& q2) {
    if (q1.cols() == 0 || q2.cols() == 0)
        throw EmptyCloud("chamfer needs nonempty clouds");
    KdTree3 t1(q1), t2(q2);
    return one_sided_chamfer(q1, t2) + one_sided_chamfer(q2, t1);
}

double chamfer_brute(const Mat3X& q1, const Mat3X& q2) {
    if (q1.cols() == 0 || q2.cols() == 0)
        throw EmptyCloud("chamfer needs nonempty clouds");
    auto one_sided = [](const Mat3X& from, const Mat3X& to) {
        double sum = 0.0;
        for (Eigen::Index i = 0; i < from.cols(); ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (Eigen::Index j = 0; j < to.cols(); ++j)
                best = std::min(best, (from.col(i) - to.col(j)).squaredNorm());
            sum += best;
        }
        return sum;
    };
    return one_sided(q1, q2) + one_sided(q2, q1);
}

TransportPlan sinkhorn_emd(const Mat3X& q1, const Mat3X& q2,
                           const SinkhornConfig& cfg) {
    if (q1.cols() == 0 || q2.cols() == 0)
        throw EmptyCloud("sinkhorn_emd needs nonempty clouds");
    if (cfg.epsilon <= 0.0) throw InvalidConfig("epsilon must be > 0");
    if (cfg.min_iters > cfg.max_iters)
        throw InvalidConfig("min_iters must be <= max_iters");
    const Eigen::MatrixXd C = squared_distances(q1, q2);
    return cfg.log_domain ? sinkhorn_log_domain(C, cfg)
                          : sinkhorn_naive(C, cfg);
}

std::pair<double, std::vector<double>> kinetic_energy(const FlowResult& fr,
                                                      KineticWeighting w) {
    const double weight = w == KineticWeighting::Riemann ? fr.dt : 1.0;
    std::vector<double> per_block(fr.depth());
    double total = 0.0;
    for (int l = 0; l < fr.depth(); ++l) {
        per_block[l] = 0.5 * weight * fr.velocities[l].squaredNorm();
        total += per_block[l];
    }
    return {total, per_block};
}

LossReport total_loss(const Mat3X& q_deformed, const Mat3X& q_target,
                      const FlowResult& fr, const ObjectiveConfig& cfg) {
    if (cfg.sigma <= 0.0) throw InvalidConfig("sigma must be > 0");
    LossReport report;
    report.sigma = cfg.sigma;
    report.data_term = cfg.data_term == DataTerm::CD
                           ? chamfer(q_deformed, q_target)
                           : sinkhorn_emd(q_deformed, q_target, cfg.sinkhorn).cost;
    auto [total, per_block] = kinetic_energy(fr, cfg.weighting);
    report.kinetic_total = total;
    report.per_block_energy = std::move(per_block);
    report.total =
        cfg.data_scale * report.data_term / (2.0 * cfg.sigma * cfg.sigma) +
        cfg.kinetic_scale * report.kinetic_total;
    return report;
}

}  // namespace rlddmm
