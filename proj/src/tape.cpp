#include "felab/tape.hpp"

#include <Eigen/Core>

#include <cmath>

namespace felab {

namespace {

using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

ConstMatMap as_mat(const Tensor& t) { return {t.values.data(), t.rows(), t.cols()}; }

ConstMatMap as_mat(const std::vector<double>& v, int rows, int cols) {
    return {v.data(), rows, cols};
}

MatMap as_mat(std::vector<double>& v, int rows, int cols) { return {v.data(), rows, cols}; }

}  // namespace

int Tape::check_id(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
        throw ConfigError("tape: node id out of range");
    return id;
}

int Tape::push(Node n) {
    // Parents must already be on the tape, which keeps the node list
    // topologically ordered and makes cycles unrepresentable.
    for (int p : {n.a, n.b, n.c})
        if (p >= 0) check_id(p);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

int Tape::leaf(Tensor& t) {
    Node n;
    n.kind = OpKind::Leaf;
    n.val = t;  // snapshot
    n.external = &t;
    int id = push(std::move(n));
    t.node_id = id;
    return id;
}

int Tape::constant(Tensor t) {
    Node n;
    n.kind = OpKind::Const;
    n.val = std::move(t);
    return push(std::move(n));
}

void Tape::binary_shape_check(int a, int b, const char* op) const {
    if (!nodes_[a].val.same_shape(nodes_[b].val))
        throw ShapeError(std::string(op) + ": shape mismatch " + nodes_[a].val.shape_str() +
                         " vs " + nodes_[b].val.shape_str());
}

int Tape::affine(int x, int w, int b) {
    check_id(x);
    check_id(w);
    check_id(b);
    const Tensor& xv = nodes_[x].val;
    const Tensor& wv = nodes_[w].val;
    const Tensor& bv = nodes_[b].val;
    if (wv.shape.size() != 2 || xv.cols() != wv.shape[0])
        throw ShapeError("affine: input/weight mismatch " + xv.shape_str() + " vs " +
                         wv.shape_str());
    if (static_cast<int>(bv.numel()) != wv.shape[1])
        throw ShapeError("affine: bias size mismatch");
    Node n;
    n.kind = OpKind::Affine;
    n.a = x;
    n.b = w;
    n.c = b;
    n.val = Tensor({xv.rows(), wv.shape[1]});
    auto y = as_mat(n.val.values, n.val.rows(), n.val.cols());
    y.noalias() = as_mat(xv) * as_mat(wv);
    y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bv.values.data(), bv.numel());
    return push(std::move(n));
}

int Tape::selu(int x) {
    check_id(x);
    Node n;
    n.kind = OpKind::Selu;
    n.a = x;
    n.val = nodes_[x].val;
    n.val.node_id = -1;
    for (double& v : n.val.values)
        v = v > 0.0 ? kSeluLambda * v : kSeluLambda * kSeluAlpha * std::expm1(v);
    return push(std::move(n));
}

int Tape::dropout(int x, double drop_ratio, bool training, Rng* rng) {
    check_id(x);
    if (drop_ratio < 0.0 || drop_ratio >= 1.0)
        throw ConfigError("dropout: drop_ratio must be in [0,1)");
    if (!training || drop_ratio == 0.0) return x;
    if (rng == nullptr) throw ConfigError("dropout: training mode needs an rng");
    Node n;
    n.kind = OpKind::Dropout;
    n.a = x;
    n.val = nodes_[x].val;
    n.val.node_id = -1;
    const double keep_scale = 1.0 / (1.0 - drop_ratio);
    n.aux.resize(n.val.numel());
    for (std::size_t i = 0; i < n.aux.size(); ++i) {
        n.aux[i] = rng->uniform() < drop_ratio ? 0.0 : keep_scale;
        n.val.values[i] *= n.aux[i];
    }
    return push(std::move(n));
}

int Tape::add(int a, int b) {
    check_id(a);
    check_id(b);
    binary_shape_check(a, b, "add");
    Node n;
    n.kind = OpKind::Add;
    n.a = a;
    n.b = b;
    n.val = nodes_[a].val;
    n.val.node_id = -1;
    const auto& bv = nodes_[b].val.values;
    for (std::size_t i = 0; i < n.val.numel(); ++i) n.val.values[i] += bv[i];
    return push(std::move(n));
}

int Tape::sub(int a, int b) {
    check_id(a);
    check_id(b);
    binary_shape_check(a, b, "sub");
    Node n;
    n.kind = OpKind::Sub;
    n.a = a;
    n.b = b;
    n.val = nodes_[a].val;
    n.val.node_id = -1;
    const auto& bv = nodes_[b].val.values;
    for (std::size_t i = 0; i < n.val.numel(); ++i) n.val.values[i] -= bv[i];
    return push(std::move(n));
}

int Tape::mul(int a, int b) {
    check_id(a);
    check_id(b);
    binary_shape_check(a, b, "mul");
    Node n;
    n.kind = OpKind::Mul;
    n.a = a;
    n.b = b;
    n.val = nodes_[a].val;
    n.val.node_id = -1;
    const auto& bv = nodes_[b].val.values;
    for (std::size_t i = 0; i < n.val.numel(); ++i) n.val.values[i] *= bv[i];
    return push(std::move(n));
}

int Tape::add_scalar(int a, double c) {
    check_id(a);
    Node n;
    n.kind = OpKind::AddScalar;
    n.a = a;
    n.s0 = c;
    n.val = nodes_[a].val;
    n.val.node_id = -1;
    for (double& v : n.val.values) v += c;
    return push(std::move(n));
}

int Tape::scale(int a, double c) {
    check_id(a);
    Node n;
    n.kind = OpKind::Scale;
    n.a = a;
    n.s0 = c;
    n.val = nodes_[a].val;
    n.val.node_id = -1;
    for (double& v : n.val.values) v *= c;
    return push(std::move(n));
}

int Tape::exp_clamp(int a, double lo, double hi) {
    check_id(a);
    if (!(lo < hi)) throw ConfigError("exp_clamp: lo must be < hi");
    Node n;
    n.kind = OpKind::ExpClamp;
    n.a = a;
    n.s0 = lo;
    n.s1 = hi;
    n.val = nodes_[a].val;
    n.val.node_id = -1;
    for (double& v : n.val.values) v = std::exp(v < lo ? lo : (v > hi ? hi : v));
    return push(std::move(n));
}

int Tape::slice_cols(int a, int col_begin, int col_end) {
    check_id(a);
    const Tensor& av = nodes_[a].val;
    if (av.shape.size() != 2) throw ShapeError("slice_cols: expects a 2-d tensor");
    if (col_begin < 0 || col_end > av.cols() || col_begin >= col_end)
        throw ShapeError("slice_cols: bad column range");
    Node n;
    n.kind = OpKind::SliceCols;
    n.a = a;
    n.i0 = col_begin;
    n.i1 = col_end;
    n.val = Tensor({av.rows(), col_end - col_begin});
    for (int r = 0; r < av.rows(); ++r)
        for (int c = col_begin; c < col_end; ++c) n.val.at(r, c - col_begin) = av.at(r, c);
    return push(std::move(n));
}

int Tape::mean_all(int a) {
    check_id(a);
    const Tensor& av = nodes_[a].val;
    double s = 0.0;
    for (double v : av.values) s += v;
    Node n;
    n.kind = OpKind::MeanAll;
    n.a = a;
    n.val = make_scalar(s / static_cast<double>(av.numel()));
    return push(std::move(n));
}

int Tape::mse(int a, int b) {
    check_id(a);
    check_id(b);
    binary_shape_check(a, b, "mse");
    const auto& av = nodes_[a].val.values;
    const auto& bv = nodes_[b].val.values;
    double s = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) {
        double d = av[i] - bv[i];
        s += d * d;
    }
    Node n;
    n.kind = OpKind::Mse;
    n.a = a;
    n.b = b;
    n.val = make_scalar(s / static_cast<double>(av.size()));
    return push(std::move(n));
}

int Tape::gaussian_kl(int mu, int sigma) {
    check_id(mu);
    check_id(sigma);
    binary_shape_check(mu, sigma, "gaussian_kl");
    const Tensor& mv = nodes_[mu].val;
    const Tensor& sv = nodes_[sigma].val;
    double s = 0.0;
    for (std::size_t i = 0; i < mv.numel(); ++i) {
        double sg = sv.values[i];
        if (!(sg > 0.0)) throw ConfigError("gaussian_kl: sigma must be strictly positive");
        double m = mv.values[i];
        s += 0.5 * (m * m + sg * sg - 1.0) - std::log(sg);
    }
    Node n;
    n.kind = OpKind::GaussianKl;
    n.a = mu;
    n.b = sigma;
    n.val = make_scalar(s / static_cast<double>(mv.rows()));
    return push(std::move(n));
}

double Tape::scalar(int id) const {
    const Tensor& v = value(id);
    if (v.numel() != 1) throw ConfigError("tape: node is not a scalar");
    return v.values[0];
}

std::vector<double> Tape::grad_of(int id) const {
    const Node& n = nodes_[check_id(id)];
    if (!n.active || n.grad.size() != n.val.numel()) return std::vector<double>(n.val.numel(), 0.0);
    return n.grad;
}

void Tape::backward(int loss) { backward(loss, std::span<Tensor* const>{}); }

void Tape::backward(int loss, std::span<Tensor* const> targets) {
    check_id(loss);
    if (nodes_[loss].val.numel() != 1)
        throw ConfigError("backward: loss must be a scalar node");

    const std::size_t n = nodes_.size();

    // desc[i]: node i depends on at least one target tensor (or, with no
    // explicit targets, on any grad-requiring leaf). Nodes are topologically
    // ordered, so one forward sweep suffices.
    std::vector<char> desc(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        Node& nd = nodes_[i];
        if (nd.kind == OpKind::Leaf && nd.external != nullptr && nd.external->requires_grad) {
            if (targets.empty()) {
                desc[i] = 1;
            } else {
                for (Tensor* t : targets)
                    if (t == nd.external) {
                        desc[i] = 1;
                        break;
                    }
            }
        }
        for (int p : {nd.a, nd.b, nd.c})
            if (p >= 0 && desc[p]) desc[i] = 1;
    }

    // anc[i]: the loss depends on node i.
    std::vector<char> anc(n, 0);
    anc[loss] = 1;
    for (int i = loss; i >= 0; --i) {
        if (!anc[i]) continue;
        const Node& nd = nodes_[i];
        for (int p : {nd.a, nd.b, nd.c})
            if (p >= 0) anc[p] = 1;
    }

    for (std::size_t i = 0; i < n; ++i) {
        Node& nd = nodes_[i];
        nd.active = anc[i] && desc[i];
        if (nd.active) {
            nd.grad.assign(nd.val.numel(), 0.0);
        } else {
            nd.grad.clear();
        }
    }
    if (!nodes_[loss].active) return;  // loss does not depend on any target
    nodes_[loss].grad[0] = 1.0;

    auto gslot = [&](int p) -> std::vector<double>* {
        return (p >= 0 && nodes_[p].active) ? &nodes_[p].grad : nullptr;
    };

    for (int i = loss; i >= 0; --i) {
        Node& nd = nodes_[i];
        if (!nd.active) continue;
        const std::vector<double>& g = nd.grad;
        switch (nd.kind) {
            case OpKind::Leaf:
            case OpKind::Const:
                break;
            case OpKind::Affine: {
                const Tensor& xv = nodes_[nd.a].val;
                const Tensor& wv = nodes_[nd.b].val;
                const int B = xv.rows(), I = xv.cols(), O = wv.shape[1];
                auto gy = as_mat(g, B, O);
                if (auto* gx = gslot(nd.a))
                    as_mat(*gx, B, I).noalias() += gy * as_mat(wv).transpose();
                if (auto* gw = gslot(nd.b))
                    as_mat(*gw, I, O).noalias() += as_mat(xv).transpose() * gy;
                if (auto* gb = gslot(nd.c))
                    Eigen::Map<Eigen::RowVectorXd>(gb->data(), O) += gy.colwise().sum();
                break;
            }
            case OpKind::Selu: {
                if (auto* gx = gslot(nd.a)) {
                    const auto& xv = nodes_[nd.a].val.values;
                    for (std::size_t k = 0; k < g.size(); ++k) {
                        double d = xv[k] > 0.0 ? kSeluLambda
                                               : nd.val.values[k] + kSeluLambda * kSeluAlpha;
                        (*gx)[k] += g[k] * d;
                    }
                }
                break;
            }
            case OpKind::Dropout: {
                if (auto* gx = gslot(nd.a))
                    for (std::size_t k = 0; k < g.size(); ++k) (*gx)[k] += g[k] * nd.aux[k];
                break;
            }
            case OpKind::Add: {
                if (auto* ga = gslot(nd.a))
                    for (std::size_t k = 0; k < g.size(); ++k) (*ga)[k] += g[k];
                if (auto* gb = gslot(nd.b))
                    for (std::size_t k = 0; k < g.size(); ++k) (*gb)[k] += g[k];
                break;
            }
            case OpKind::Sub: {
                if (auto* ga = gslot(nd.a))
                    for (std::size_t k = 0; k < g.size(); ++k) (*ga)[k] += g[k];
                if (auto* gb = gslot(nd.b))
                    for (std::size_t k = 0; k < g.size(); ++k) (*gb)[k] -= g[k];
                break;
            }
            case OpKind::Mul: {
                if (auto* ga = gslot(nd.a)) {
                    const auto& bv = nodes_[nd.b].val.values;
                    for (std::size_t k = 0; k < g.size(); ++k) (*ga)[k] += g[k] * bv[k];
                }
                if (auto* gb = gslot(nd.b)) {
                    const auto& av = nodes_[nd.a].val.values;
                    for (std::size_t k = 0; k < g.size(); ++k) (*gb)[k] += g[k] * av[k];
                }
                break;
            }
            case OpKind::AddScalar: {
                if (auto* ga = gslot(nd.a))
                    for (std::size_t k = 0; k < g.size(); ++k) (*ga)[k] += g[k];
                break;
            }
            case OpKind::Scale: {
                if (auto* ga = gslot(nd.a))
                    for (std::size_t k = 0; k < g.size(); ++k) (*ga)[k] += g[k] * nd.s0;
                break;
            }
            case OpKind::ExpClamp: {
                if (auto* ga = gslot(nd.a)) {
                    const auto& xv = nodes_[nd.a].val.values;
                    for (std::size_t k = 0; k < g.size(); ++k)
                        if (xv[k] > nd.s0 && xv[k] < nd.s1) (*ga)[k] += g[k] * nd.val.values[k];
                }
                break;
            }
            case OpKind::SliceCols: {
                if (auto* ga = gslot(nd.a)) {
                    const Tensor& av = nodes_[nd.a].val;
                    const int C = av.cols(), W = nd.i1 - nd.i0;
                    for (int r = 0; r < av.rows(); ++r)
                        for (int c = 0; c < W; ++c)
                            (*ga)[static_cast<std::size_t>(r) * C + nd.i0 + c] +=
                                g[static_cast<std::size_t>(r) * W + c];
                }
                break;
            }
            case OpKind::MeanAll: {
                if (auto* ga = gslot(nd.a)) {
                    double s = g[0] / static_cast<double>(ga->size());
                    for (double& v : *ga) v += s;
                }
                break;
            }
            case OpKind::Mse: {
                const auto& av = nodes_[nd.a].val.values;
                const auto& bv = nodes_[nd.b].val.values;
                const double s = 2.0 * g[0] / static_cast<double>(av.size());
                if (auto* ga = gslot(nd.a))
                    for (std::size_t k = 0; k < av.size(); ++k) (*ga)[k] += s * (av[k] - bv[k]);
                if (auto* gb = gslot(nd.b))
                    for (std::size_t k = 0; k < av.size(); ++k) (*gb)[k] -= s * (av[k] - bv[k]);
                break;
            }
            case OpKind::GaussianKl: {
                const Tensor& mv = nodes_[nd.a].val;
                const Tensor& sv = nodes_[nd.b].val;
                const double s = g[0] / static_cast<double>(mv.rows());
                if (auto* gm = gslot(nd.a))
                    for (std::size_t k = 0; k < mv.numel(); ++k) (*gm)[k] += s * mv.values[k];
                if (auto* gs = gslot(nd.b))
                    for (std::size_t k = 0; k < sv.numel(); ++k)
                        (*gs)[k] += s * (sv.values[k] - 1.0 / sv.values[k]);
                break;
            }
        }
    }

    // Deposit leaf gradients into their external tensors.
    for (std::size_t i = 0; i < n; ++i) {
        Node& nd = nodes_[i];
        if (nd.kind != OpKind::Leaf || !nd.active || nd.external == nullptr) continue;
        nd.external->ensure_grad();
        for (std::size_t k = 0; k < nd.grad.size(); ++k) nd.external->grad[k] += nd.grad[k];
    }
}

}  // namespace felab
