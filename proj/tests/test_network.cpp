#include <doctest.h>

#include <filesystem>

#include "rlddmm/network.hpp"
#include "test_helpers.hpp"

using namespace rlddmm;

namespace {

bool nets_identical(const NetParams& a, const NetParams& b) {
    if (a.depth() != b.depth() || a.width != b.width || a.dt != b.dt)
        return false;
    for (int l = 0; l < a.depth(); ++l) {
        if (a.blocks[l].W1 != b.blocks[l].W1) return false;
        if (a.blocks[l].b1 != b.blocks[l].b1) return false;
        if (a.blocks[l].W2 != b.blocks[l].W2) return false;
        if (a.blocks[l].b2 != b.blocks[l].b2) return false;
        if (a.blocks[l].W3 != b.blocks[l].W3) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("xavier init is bit-deterministic for a fixed seed") {
    const NetParams a = xavier_init(3, 16, 42);
    const NetParams b = xavier_init(3, 16, 42);
    CHECK(nets_identical(a, b));
    const NetParams c = xavier_init(3, 16, 43);
    CHECK(!nets_identical(a, c));
}

TEST_CASE("xavier bounds follow fan-in/fan-out") {
    const NetParams net = xavier_init(2, 8, 7);
    const double bound1 = std::sqrt(6.0 / (3 + 8));
    const double bound2 = std::sqrt(6.0 / (8 + 8));
    for (const auto& b : net.blocks) {
        CHECK(b.W1.cwiseAbs().maxCoeff() <= bound1);
        CHECK(b.W2.cwiseAbs().maxCoeff() <= bound2);
        CHECK(b.W3.cwiseAbs().maxCoeff() <= bound1);
        CHECK(b.b1.cwiseAbs().maxCoeff() == 0.0);
        CHECK(b.b2.cwiseAbs().maxCoeff() == 0.0);
    }
    CHECK(net.dt == 0.5);
}

TEST_CASE("xavier rejects bad sizes") {
    CHECK_THROWS_AS(xavier_init(0, 8, 1), InvalidConfig);
    CHECK_THROWS_AS(xavier_init(2, 0, 1), InvalidConfig);
}

TEST_CASE("block velocity: all-zero parameters give zero") {
    const BlockParams theta = BlockParams::zero(5);
    const Activation act{ActivationKind::Relu, 0.01};
    CHECK(block_velocity(Vec3(1, -2, 3), theta, act).norm() == 0.0);
}

TEST_CASE("block velocity m=1 hand example") {
    // W1 = (1,0,0), b1 = 0, W2 = (1), b2 = 0, W3 = e1: f(x) = relu(x0) * e1
    BlockParams theta = BlockParams::zero(1);
    theta.W1(0, 0) = 1.0;
    theta.W2(0, 0) = 1.0;
    theta.W3(0, 0) = 1.0;
    const Activation relu{ActivationKind::Relu, 0.01};
    CHECK((block_velocity(Vec3(2, 0, 0), theta, relu) - Vec3(2, 0, 0)).norm() == 0.0);
    CHECK(block_velocity(Vec3(-2, 0, 0), theta, relu).norm() == 0.0);
}

TEST_CASE("matrix and single-point block velocity agree") {
    const NetParams net = xavier_init(1, 12, 5);
    const Mat3X pts = testing::random_cloud(9, 6);
    const Mat3X batch = block_velocity(pts, net.blocks[0], net.activation);
    for (int i = 0; i < 9; ++i) {
        const Vec3 single =
            block_velocity(Vec3(pts.col(i)), net.blocks[0], net.activation);
        CHECK((batch.col(i) - single).norm() <= 1e-14);
    }
}

TEST_CASE("zero W3 makes the block identically zero") {
    NetParams net = xavier_init(1, 10, 9);
    net.blocks[0].W3.setZero();
    for (int i = 0; i < 20; ++i) {
        const Vec3 x = testing::random_cloud(1, 100 + i).col(0);
        CHECK(block_velocity(x, net.blocks[0], net.activation).norm() == 0.0);
    }
}

TEST_CASE("spectral norm matches known singular values") {
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(4, 4);
    D.diagonal() << 0.5, 2.0, -3.0, 1.0;
    CHECK(spectral_norm(D) == doctest::Approx(3.0).epsilon(1e-8));
    CHECK(spectral_norm(Eigen::MatrixXd::Zero(3, 3)) == 0.0);
}

TEST_CASE("lipschitz bound: zero block and diagonal-like construction") {
    CHECK(block_lipschitz_bound(BlockParams::zero(4)) == 0.0);

    // max singular values 2 (W1), 3 (W2), 0.5 (W3) -> product 3.0
    BlockParams theta = BlockParams::zero(4);
    theta.W1(0, 0) = 2.0;
    theta.W1(1, 1) = 1.0;
    theta.W2.diagonal() << 3.0, 1.0, 0.5, 0.25;
    theta.W3(0, 0) = 0.5;
    theta.W3(1, 1) = 0.1;
    CHECK(block_lipschitz_bound(theta) == doctest::Approx(3.0).epsilon(1e-7));
}

TEST_CASE("lipschitz bound dominates sampled expansion ratios") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        const NetParams net = xavier_init(1, 16, seed);
        const double bound = block_lipschitz_bound(net.blocks[0]);
        Rng rng(seed * 977 + 1);
        for (int trial = 0; trial < 1000; ++trial) {
            const Vec3 x(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
            const Vec3 y(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
            const double lhs = (block_velocity(x, net.blocks[0], net.activation) -
                                block_velocity(y, net.blocks[0], net.activation))
                                   .norm();
            CHECK(lhs <= bound * (x - y).norm() + 1e-12);
        }
    }
}

TEST_CASE("relu block is affine on probes sharing activation signs") {
    const NetParams net = xavier_init(1, 8, 17, {ActivationKind::Relu, 0.01});
    const BlockParams& theta = net.blocks[0];
    // three points close enough to share all signs (generic position)
    const Vec3 x(0.4, 0.2, -0.1);
    const Vec3 dx(1e-4, -2e-4, 3e-4);
    const Vec3 x1 = x + dx, x2 = x + 2 * dx;
    const Vec3 f0 = block_velocity(x, theta, net.activation);
    const Vec3 f1 = block_velocity(x1, theta, net.activation);
    const Vec3 f2 = block_velocity(x2, theta, net.activation);
    // exact affinity: second difference vanishes
    CHECK((f2 - 2 * f1 + f0).norm() <= 1e-12);
}

TEST_CASE("network serialization round-trips bit-exactly") {
    const NetParams net = xavier_init(2, 6, 123, {ActivationKind::LeakyRelu, 0.05});
    const auto path = std::filesystem::temp_directory_path() / "rlddmm_net.json";
    save_net(net, path);
    const NetParams back = load_net(path);
    CHECK(nets_identical(net, back));
    CHECK(back.activation.kind == ActivationKind::LeakyRelu);
    CHECK(back.activation.alpha == 0.05);
}

TEST_CASE("activation kinds and slopes") {
    CHECK_THROWS_AS(make_activation(ActivationKind::LeakyRelu, 1.5), InvalidConfig);
    const Activation tanh_act{ActivationKind::Tanh, 0.01};
    CHECK(tanh_act.value(0.5) == doctest::Approx(std::tanh(0.5)));
    const Activation leaky{ActivationKind::LeakyRelu, 0.2};
    CHECK(leaky.value(-1.0) == doctest::Approx(-0.2));
    CHECK(leaky.deriv(0.0) == 0.2);  // documented one-sided convention
    const Activation relu{ActivationKind::Relu, 0.01};
    CHECK(relu.deriv(0.0) == 0.0);
}
