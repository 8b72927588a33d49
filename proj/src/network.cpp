#include "rlddmm/network.hpp"

#include <fstream>

#include <json.hpp>

namespace rlddmm {

Activation make_activation(ActivationKind kind, double alpha) {
    if (kind == ActivationKind::LeakyRelu && (alpha <= 0.0 || alpha >= 1.0))
        throw InvalidConfig("leaky slope must lie in (0,1)");
    return {kind, alpha};
}

std::string activation_name(ActivationKind kind) {
    switch (kind) {
        case ActivationKind::Relu: return "relu";
        case ActivationKind::LeakyRelu: return "leaky";
        case ActivationKind::Tanh: return "tanh";
    }
    return "?";
}

ActivationKind activation_from_name(const std::string& name) {
    if (name == "relu") return ActivationKind::Relu;
    if (name == "leaky" || name == "leaky_relu") return ActivationKind::LeakyRelu;
    if (name == "tanh") return ActivationKind::Tanh;
    throw InvalidConfig("unknown activation '" + name + "'");
}

BlockParams BlockParams::zero(int m) {
    BlockParams b;
    b.W1 = Eigen::MatrixXd::Zero(m, 3);
    b.b1 = Eigen::VectorXd::Zero(m);
    b.W2 = Eigen::MatrixXd::Zero(m, m);
    b.b2 = Eigen::VectorXd::Zero(m);
    b.W3 = Eigen::MatrixXd::Zero(3, m);
    return b;
}

bool BlockParams::finite() const {
    return W1.allFinite() && b1.allFinite() && W2.allFinite() &&
           b2.allFinite() && W3.allFinite();
}

NetParams NetParams::zero(int L, int m, Activation act) {
    if (L < 1 || m < 1) throw InvalidConfig("need L >= 1 and m >= 1");
    NetParams net;
    net.blocks.assign(L, BlockParams::zero(m));
    net.dt = 1.0 / L;
    net.width = m;
    net.activation = act;
    return net;
}

namespace {

void fill_xavier(Eigen::Ref<Eigen::MatrixXd> W, int fan_in, int fan_out,
                 Rng& rng) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (Eigen::Index i = 0; i < W.rows(); ++i)
        for (Eigen::Index j = 0; j < W.cols(); ++j)
            W(i, j) = rng.uniform(-bound, bound);
}

}  // namespace

NetParams xavier_init(int L, int m, std::uint64_t seed, Activation act) {
    NetParams net = NetParams::zero(L, m, act);
    Rng rng(seed);
    for (auto& block : net.blocks) {
        fill_xavier(block.W1, 3, m, rng);
        fill_xavier(block.W2, m, m, rng);
        fill_xavier(block.W3, m, 3, rng);
        // biases stay zero
    }
    return net;
}

Vec3 block_velocity(const Vec3& x, const BlockParams& theta,
                    const Activation& act) {
    Eigen::VectorXd z1 = theta.W1 * x + theta.b1;
    for (Eigen::Index k = 0; k < z1.size(); ++k) z1[k] = act.value(z1[k]);
    return theta.W3 * (theta.W2 * z1 + theta.b2);
}

Mat3X block_velocity(const Mat3X& x, const BlockParams& theta,
                     const Activation& act) {
    Eigen::MatrixXd z1 = (theta.W1 * x).colwise() + theta.b1;
    for (Eigen::Index j = 0; j < z1.cols(); ++j)
        for (Eigen::Index i = 0; i < z1.rows(); ++i)
            z1(i, j) = act.value(z1(i, j));
    return theta.W3 * ((theta.W2 * z1).colwise() + theta.b2);
}

double spectral_norm(const Eigen::MatrixXd& M, double tol, int max_iters) {
    if (M.size() == 0) return 0.0;
    // iterate on the smaller Gram side
    const bool wide = M.cols() <= M.rows();
    const Eigen::Index dim = wide ? M.cols() : M.rows();
    Eigen::VectorXd v = Eigen::VectorXd::Ones(dim);
    // deterministic non-constant start so eigenvectors orthogonal to 1 are reached
    for (Eigen::Index i = 0; i < dim; ++i) v[i] += 1e-3 * double(i % 7);
    v.normalize();
    double sigma = 0.0;
    for (int it = 0; it < max_iters; ++it) {
        Eigen::VectorXd w = wide ? Eigen::VectorXd(M.transpose() * (M * v))
                                 : Eigen::VectorXd(M * (M.transpose() * v));
        const double norm = w.norm();
        if (norm == 0.0) return 0.0;
        const double next = std::sqrt(norm);
        v = w / norm;
        if (std::abs(next - sigma) <= tol * std::max(next, 1.0)) return next;
        sigma = next;
    }
    return sigma;
}

double block_lipschitz_bound(const BlockParams& theta) {
    return spectral_norm(theta.W3) * spectral_norm(theta.W2) *
           spectral_norm(theta.W1);
}

namespace {

using nlohmann::json;

json matrix_to_json(const Eigen::MatrixXd& M) {
    std::vector<double> flat(M.size());
    for (Eigen::Index i = 0; i < M.rows(); ++i)
        for (Eigen::Index j = 0; j < M.cols(); ++j)
            flat[i * M.cols() + j] = M(i, j);  // row-major
    return flat;
}

Eigen::MatrixXd matrix_from_json(const json& j, Eigen::Index rows,
                                 Eigen::Index cols) {
    const auto flat = j.get<std::vector<double>>();
    if (static_cast<Eigen::Index>(flat.size()) != rows * cols)
        throw ParseError("bad matrix size in network file");
    Eigen::MatrixXd M(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) M(i, j) = flat[i * cols + j];
    return M;
}

}  // namespace

void save_net(const NetParams& net, const std::filesystem::path& path) {
    json doc;
    doc["L"] = net.depth();
    doc["m"] = net.width;
    doc["dt"] = net.dt;
    doc["activation"] = activation_name(net.activation.kind);
    doc["alpha"] = net.activation.alpha;
    json blocks = json::array();
    for (const auto& b : net.blocks) {
        json jb;
        jb["W1"] = matrix_to_json(b.W1);
        jb["b1"] = matrix_to_json(b.b1);
        jb["W2"] = matrix_to_json(b.W2);
        jb["b2"] = matrix_to_json(b.b2);
        jb["W3"] = matrix_to_json(b.W3);
        blocks.push_back(std::move(jb));
    }
    doc["blocks"] = std::move(blocks);
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << doc.dump();
    if (!out) throw IoError("write failed on '" + path.string() + "'");
}

NetParams load_net(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ParseError(std::string("bad network file: ") + e.what());
    }
    const int L = doc.at("L").get<int>();
    const int m = doc.at("m").get<int>();
    NetParams net = NetParams::zero(
        L, m,
        make_activation(activation_from_name(doc.at("activation").get<std::string>()),
                        doc.value("alpha", 0.01)));
    const auto& blocks = doc.at("blocks");
    if (static_cast<int>(blocks.size()) != L)
        throw ParseError("block count does not match L");
    for (int l = 0; l < L; ++l) {
        const auto& jb = blocks[l];
        auto& b = net.blocks[l];
        b.W1 = matrix_from_json(jb.at("W1"), m, 3);
        b.b1 = matrix_from_json(jb.at("b1"), m, 1);
        b.W2 = matrix_from_json(jb.at("W2"), m, m);
        b.b2 = matrix_from_json(jb.at("b2"), m, 1);
        b.W3 = matrix_from_json(jb.at("W3"), 3, m);
        if (!b.finite()) throw ParseError("non-finite weight in network file");
    }
    return net;
}

}  // namespace rlddmm
