#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "rlddmm/objective.hpp"
#include "test_helpers.hpp"

using namespace rlddmm;

namespace {

// exact OT cost with uniform marginals: minimum over all permutations of
// (1/n) * sum_i |x_i - y_pi(i)|^2
double exact_ot_cost(const Mat3X& x, const Mat3X& y) {
    const int n = static_cast<int>(x.cols());
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double cost = 0.0;
        for (int i = 0; i < n; ++i)
            cost += (x.col(i) - y.col(perm[i])).squaredNorm();
        best = std::min(best, cost / n);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

double marginal_violation(const TransportPlan& tp) {
    const double a = 1.0 / tp.plan.rows();
    const double b = 1.0 / tp.plan.cols();
    const double row =
        (tp.plan.rowwise().sum().array() - a).abs().maxCoeff();
    const double col =
        (tp.plan.colwise().sum().array() - b).abs().maxCoeff();
    return std::max(row, col);
}

}  // namespace

TEST_CASE("chamfer basic examples") {
    Mat3X a(3, 1), b(3, 1);
    a.col(0) = Vec3(0, 0, 0);
    b.col(0) = Vec3(1, 0, 0);
    CHECK(chamfer(a, a) == 0.0);
    CHECK(chamfer(a, b) == doctest::Approx(2.0).epsilon(1e-15));

    Mat3X c(3, 2);
    c.col(0) = Vec3(0, 0, 0);
    c.col(1) = Vec3(2, 0, 0);
    // brute-force: 1 + 1 forward, 1 backward = 3
    CHECK(chamfer(c, b) == doctest::Approx(3.0).epsilon(1e-15));
}

TEST_CASE("chamfer is symmetric and matches the exhaustive scan bit-for-bit") {
    Rng rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        const int n1 = 1 + int(rng.next_u64() % 64);
        const int n2 = 1 + int(rng.next_u64() % 64);
        const Mat3X a = testing::random_cloud(n1, rng.next_u64());
        const Mat3X b = testing::random_cloud(n2, rng.next_u64());
        const double fast = chamfer(a, b);
        CHECK(fast == chamfer(b, a));
        CHECK(fast == chamfer_brute(a, b));
    }
}

TEST_CASE("sinkhorn: identical clouds have near-zero cost and diagonal plan") {
    const Mat3X q = testing::random_cloud(8, 3);
    SinkhornConfig cfg;
    cfg.epsilon = 1e-4;
    cfg.min_iters = 50;
    cfg.max_iters = 4000;
    cfg.tol = 1e-10;
    const TransportPlan tp = sinkhorn_emd(q, q, cfg);
    CHECK(tp.cost <= cfg.epsilon * std::log(8.0) + 1e-6);
    for (int i = 0; i < 8; ++i)
        CHECK(tp.plan(i, i) == doctest::Approx(1.0 / 8.0).epsilon(1e-3));
    CHECK(marginal_violation(tp) <= 1e-6);
}

TEST_CASE("sinkhorn finds the anti-diagonal for swapped points") {
    Mat3X a(3, 2), b(3, 2);
    a.col(0) = Vec3(0, 0, 0);
    a.col(1) = Vec3(1, 0, 0);
    b.col(0) = Vec3(1, 0, 0);
    b.col(1) = Vec3(0, 0, 0);
    SinkhornConfig cfg;
    cfg.epsilon = 1e-4;
    cfg.min_iters = 20;
    cfg.max_iters = 2000;
    const TransportPlan tp = sinkhorn_emd(a, b, cfg);
    // exact optimum is 0; the reported cost carries the eps*KL(P|a x b)
    // entropy offset, which is eps*log(2) for a permutation-like plan
    CHECK(tp.cost <= cfg.epsilon * std::log(2.0) + 1e-9);
    CHECK(tp.plan(0, 1) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(tp.plan(1, 0) == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("sinkhorn cost never beats the identity pairing by more than entropy") {
    Rng rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 4 + int(rng.next_u64() % 5);
        const Mat3X a = testing::random_cloud(n, rng.next_u64());
        const Mat3X b = testing::random_cloud(n, rng.next_u64());
        SinkhornConfig cfg;
        cfg.epsilon = 1e-3;
        cfg.min_iters = 20;
        cfg.max_iters = 4000;
        const TransportPlan tp = sinkhorn_emd(a, b, cfg);
        double identity_cost = 0.0;
        for (int i = 0; i < n; ++i)
            identity_cost += (a.col(i) - b.col(i)).squaredNorm();
        identity_cost /= n;
        CHECK(tp.cost <= identity_cost + cfg.epsilon * std::log(double(n)) + 1e-9);
    }
}

TEST_CASE("sinkhorn near the exact OT cost for tiny instances") {
    Rng rng(23);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 3 + int(rng.next_u64() % 4);  // 3..6
        const Mat3X a = testing::random_cloud(n, rng.next_u64());
        const Mat3X b = testing::random_cloud(n, rng.next_u64());
        std::vector<double> costs;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                costs.push_back((a.col(i) - b.col(j)).squaredNorm());
        std::nth_element(costs.begin(), costs.begin() + costs.size() / 2,
                         costs.end());
        SinkhornConfig cfg;
        cfg.epsilon = 1e-3 * costs[costs.size() / 2];
        cfg.min_iters = 200;
        cfg.max_iters = 200000;
        cfg.tol = 1e-12;
        const TransportPlan tp = sinkhorn_emd(a, b, cfg);
        const double exact = exact_ot_cost(a, b);
        CHECK(std::abs(tp.cost - exact) <= 0.05 * exact + 1e-12);
    }
}

TEST_CASE("marginal violation is non-increasing across iteration budgets") {
    const Mat3X a = testing::random_cloud(12, 31);
    const Mat3X b = testing::random_cloud(12, 32);
    SinkhornConfig cfg;
    cfg.epsilon = 1e-3;
    cfg.tol = 0.0;  // force the full budget
    double prev = std::numeric_limits<double>::infinity();
    for (int k : {10, 100, 200}) {
        cfg.min_iters = k;
        cfg.max_iters = k;
        const double v = marginal_violation(sinkhorn_emd(a, b, cfg));
        CHECK(v <= prev + 1e-15);
        prev = v;
    }
}

TEST_CASE("naive sinkhorn underflows at tiny epsilon, log-domain does not") {
    const Mat3X a = testing::random_cloud(6, 41, 1.0);
    const Mat3X b = (testing::random_cloud(6, 42, 1.0).colwise() + Vec3(3, 0, 0)).eval();
    SinkhornConfig cfg;
    cfg.epsilon = 8e-6;  // exp(-c/eps) underflows for c ~ 10
    cfg.min_iters = 10;
    cfg.max_iters = 100;
    cfg.log_domain = false;
    CHECK_THROWS_AS(sinkhorn_emd(a, b, cfg), NumericalUnderflow);
    cfg.log_domain = true;
    CHECK_NOTHROW(sinkhorn_emd(a, b, cfg));
}

TEST_CASE("sinkhorn argument validation") {
    const Mat3X a = testing::random_cloud(3, 1);
    SinkhornConfig cfg;
    cfg.epsilon = 0.0;
    CHECK_THROWS_AS(sinkhorn_emd(a, a, cfg), InvalidConfig);
    cfg.epsilon = 0.1;
    cfg.min_iters = 10;
    cfg.max_iters = 5;
    CHECK_THROWS_AS(sinkhorn_emd(a, a, cfg), InvalidConfig);
}

TEST_CASE("kinetic energy weighting: riemann includes dt, table1 does not") {
    // L = 1, dt = 1, one point with v = (1,2,2): 0.5 * 9 = 4.5 either way
    FlowResult fr;
    fr.dt = 1.0;
    Mat3X v(3, 1);
    v.col(0) = Vec3(1, 2, 2);
    fr.velocities = {v};
    fr.shapes = {Mat3X::Zero(3, 1), Mat3X::Zero(3, 1)};
    CHECK(kinetic_energy(fr, KineticWeighting::Riemann).first == doctest::Approx(4.5));
    CHECK(kinetic_energy(fr, KineticWeighting::Table1).first == doctest::Approx(4.5));

    // L = 2, dt = 1/2, same v in both blocks: riemann 4.5, table1 9.0
    fr.dt = 0.5;
    fr.velocities = {v, v};
    fr.shapes = {Mat3X::Zero(3, 1), Mat3X::Zero(3, 1), Mat3X::Zero(3, 1)};
    CHECK(kinetic_energy(fr, KineticWeighting::Riemann).first == doctest::Approx(4.5));
    CHECK(kinetic_energy(fr, KineticWeighting::Table1).first == doctest::Approx(9.0));

    FlowResult zero;
    zero.dt = 0.5;
    zero.velocities = {Mat3X::Zero(3, 4), Mat3X::Zero(3, 4)};
    CHECK(kinetic_energy(zero, KineticWeighting::Riemann).first == 0.0);
}

TEST_CASE("kinetic energy is invariant under joint point permutation") {
    const NetParams net = xavier_init(3, 8, 51);
    const Mat3X q0 = testing::random_cloud(9, 52);
    Mat3X q0_perm(3, 9);
    for (int i = 0; i < 9; ++i) q0_perm.col(i) = q0.col((i + 4) % 9);
    const auto a = kinetic_energy(flow_forward(q0, net), KineticWeighting::Riemann);
    const auto b =
        kinetic_energy(flow_forward(q0_perm, net), KineticWeighting::Riemann);
    CHECK(a.first == doctest::Approx(b.first).epsilon(1e-12));
}

TEST_CASE("total loss composition and sigma scaling") {
    const Mat3X q = testing::random_cloud(10, 61);
    const NetParams zero_net = NetParams::zero(2, 4);
    const FlowResult fr = flow_forward(q, zero_net);

    ObjectiveConfig cfg;
    cfg.data_term = DataTerm::CD;
    SUBCASE("identity pair with zero parameters has zero loss") {
        const LossReport r = total_loss(fr.endpoint(), q, fr, cfg);
        CHECK(r.total == 0.0);
    }
    SUBCASE("sigma = 0.1 weighs the data term by 50") {
        const Mat3X target = (q.colwise() + Vec3(0.1, 0, 0)).eval();
        cfg.sigma = 0.1;
        const LossReport r = total_loss(fr.endpoint(), target, fr, cfg);
        CHECK(r.total == doctest::Approx(50.0 * r.data_term).epsilon(1e-12));

        cfg.sigma = 0.2;  // doubling sigma quarters the data weight
        const LossReport r2 = total_loss(fr.endpoint(), target, fr, cfg);
        CHECK(r2.total == doctest::Approx(12.5 * r2.data_term).epsilon(1e-12));
        CHECK(r2.kinetic_total == r.kinetic_total);
    }
    SUBCASE("report reconstructs total from its parts") {
        const NetParams net = xavier_init(2, 6, 71);
        const FlowResult fr2 = flow_forward(q, net);
        const Mat3X target = (q.colwise() + Vec3(0.3, 0, 0)).eval();
        const LossReport r = total_loss(fr2.endpoint(), target, fr2, cfg);
        const double recon =
            r.data_term / (2 * r.sigma * r.sigma) + r.kinetic_total;
        CHECK(r.total == doctest::Approx(recon).epsilon(1e-12));
        const double block_sum = std::accumulate(r.per_block_energy.begin(),
                                                 r.per_block_energy.end(), 0.0);
        CHECK(r.kinetic_total == doctest::Approx(block_sum).epsilon(1e-12));
    }
}
