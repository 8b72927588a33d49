// Reverse-mode differentiation of the total objective with respect to every
// network parameter, by backpropagating through the unrolled Euler flow.
#pragma once

#include "rlddmm/objective.hpp"

namespace rlddmm {

struct BlockGradient {
    Eigen::MatrixXd dW1;
    Eigen::VectorXd db1;
    Eigen::MatrixXd dW2;
    Eigen::VectorXd db2;
    Eigen::MatrixXd dW3;

    static BlockGradient zero(int m);
};

struct NetGradient {
    std::vector<BlockGradient> blocks;

    static NetGradient zero(int L, int m);
    bool finite() const;
    double max_abs() const;
};

// Conventions: the data-term adjoint seeds the endpoint; Chamfer holds
// nearest-neighbor assignments fixed (ties to the lowest index); the OT
// gradient holds the converged plan fixed and differentiates the primal
// cost; ReLU derivative at exactly 0 is 0, leaky derivative is alpha.
// All accumulation is in double with a fixed reduction order.
std::pair<LossReport, NetGradient> loss_gradient(const Mat3X& q0,
                                                 const Mat3X& q_target,
                                                 const NetParams& net,
                                                 const ObjectiveConfig& cfg);

// Central-difference oracle over every scalar parameter; tiny instances only.
NetGradient finite_difference_gradient(const Mat3X& q0, const Mat3X& q_target,
                                       const NetParams& net,
                                       const ObjectiveConfig& cfg, double h);

// Chamfer value and its gradient with respect to the columns of x.
std::pair<double, Mat3X> chamfer_with_grad(const Mat3X& x, const Mat3X& y);

}  // namespace rlddmm
