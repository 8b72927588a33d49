// Static 3D kd-tree for exact nearest-neighbor queries.
//
// Ties on squared distance are broken by the lowest point index, and the
// pruning test is non-strict, so tie-breaking is exact. This makes losses
// and gradient assignments deterministic.
#pragma once

#include <algorithm>
#include <limits>
#include <numeric>
#include <vector>

#include "rlddmm/core.hpp"

namespace rlddmm {

class KdTree3 {
public:
    struct Hit {
        int index = -1;
        double sq_dist = std::numeric_limits<double>::infinity();
    };

    KdTree3() = default;

    explicit KdTree3(const Mat3X& pts) : pts_(pts) {
        const int n = static_cast<int>(pts.cols());
        order_.resize(n);
        std::iota(order_.begin(), order_.end(), 0);
        nodes_.reserve(n);
        root_ = build(0, n, 0);
    }

    int size() const { return static_cast<int>(pts_.cols()); }

    Hit nearest(const Vec3& q) const {
        Hit best;
        search(root_, q, best);
        return best;
    }

private:
    struct Node {
        int point = -1;
        int axis = 0;
        int left = -1;
        int right = -1;
    };

    int build(int lo, int hi, int depth) {
        if (lo >= hi) return -1;
        const int axis = depth % 3;
        const int mid = (lo + hi) / 2;
        std::nth_element(order_.begin() + lo, order_.begin() + mid,
                         order_.begin() + hi, [&](int a, int b) {
                             if (pts_(axis, a) != pts_(axis, b))
                                 return pts_(axis, a) < pts_(axis, b);
                             return a < b;
                         });
        Node node;
        node.point = order_[mid];
        node.axis = axis;
        const int self = static_cast<int>(nodes_.size());
        nodes_.push_back(node);
        const int left = build(lo, mid, depth + 1);
        const int right = build(mid + 1, hi, depth + 1);
        nodes_[self].left = left;
        nodes_[self].right = right;
        return self;
    }

    void search(int node_id, const Vec3& q, Hit& best) const {
        if (node_id < 0) return;
        const Node& node = nodes_[node_id];
        const double d = (pts_.col(node.point) - q).squaredNorm();
        if (d < best.sq_dist || (d == best.sq_dist && node.point < best.index))
            best = {node.point, d};
        const double diff = q[node.axis] - pts_(node.axis, node.point);
        const int near = diff < 0 ? node.left : node.right;
        const int far = diff < 0 ? node.right : node.left;
        search(near, q, best);
        if (diff * diff <= best.sq_dist) search(far, q, best);
    }

    Mat3X pts_;
    std::vector<int> order_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

}  // namespace rlddmm
