// Velocity-network parameters: one building block is three dense layers with
// a pointwise activation after the first, f(x) = W3*(W2*act(W1*x + b1) + b2).
#pragma once

#include <filesystem>
#include <vector>

#include "rlddmm/core.hpp"

namespace rlddmm {

enum class ActivationKind { Relu, LeakyRelu, Tanh };

struct Activation {
    ActivationKind kind = ActivationKind::LeakyRelu;
    double alpha = 0.01;  // leaky slope, in (0,1)

    double value(double z) const {
        switch (kind) {
            case ActivationKind::Relu: return z > 0 ? z : 0.0;
            case ActivationKind::LeakyRelu: return z > 0 ? z : alpha * z;
            case ActivationKind::Tanh: return std::tanh(z);
        }
        return 0.0;
    }
    // At z == 0 the ReLU derivative is taken as 0 and the leaky derivative
    // as alpha; fixed one-sided convention so gradients are deterministic.
    double deriv(double z) const {
        switch (kind) {
            case ActivationKind::Relu: return z > 0 ? 1.0 : 0.0;
            case ActivationKind::LeakyRelu: return z > 0 ? 1.0 : alpha;
            case ActivationKind::Tanh: {
                const double t = std::tanh(z);
                return 1.0 - t * t;
            }
        }
        return 0.0;
    }
};

Activation make_activation(ActivationKind kind, double alpha = 0.01);
std::string activation_name(ActivationKind kind);
ActivationKind activation_from_name(const std::string& name);

struct BlockParams {
    Eigen::MatrixXd W1;  // m x 3
    Eigen::VectorXd b1;  // m
    Eigen::MatrixXd W2;  // m x m
    Eigen::VectorXd b2;  // m
    Eigen::MatrixXd W3;  // 3 x m  (no bias on the third layer)

    int width() const { return static_cast<int>(W1.rows()); }
    static BlockParams zero(int m);
    bool finite() const;
};

struct NetParams {
    std::vector<BlockParams> blocks;
    double dt = 1.0;
    int width = 0;
    Activation activation;

    int depth() const { return static_cast<int>(blocks.size()); }
    static NetParams zero(int L, int m,
                          Activation act = {ActivationKind::LeakyRelu, 0.01});
};

// Uniform Xavier/Glorot init on +-sqrt(6/(fan_in+fan_out)); biases zero.
// Bit-identical for a fixed seed.
NetParams xavier_init(int L, int m, std::uint64_t seed,
                      Activation act = {ActivationKind::LeakyRelu, 0.01});

Vec3 block_velocity(const Vec3& x, const BlockParams& theta,
                    const Activation& act);
// Columns of x processed independently; one GEMM per layer.
Mat3X block_velocity(const Mat3X& x, const BlockParams& theta,
                     const Activation& act);

// Largest singular value via power iteration (tol 1e-8, max 500 iterations),
// deterministic start vector.
double spectral_norm(const Eigen::MatrixXd& M, double tol = 1e-8,
                     int max_iters = 500);

// ||W3|| * ||W2|| * ||W1||; upper-bounds the Lipschitz constant of
// block_velocity for any 1-Lipschitz activation.
double block_lipschitz_bound(const BlockParams& theta);

// JSON (de)serialization; row-major matrix entries, field names are stable.
void save_net(const NetParams& net, const std::filesystem::path& path);
NetParams load_net(const std::filesystem::path& path);

}  // namespace rlddmm
