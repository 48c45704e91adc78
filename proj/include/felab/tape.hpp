#pragma once

#include <span>
#include <vector>

#include "felab/rng.hpp"
#include "felab/tensor.hpp"

namespace felab {

// SELU constants (the standard published values).
inline constexpr double kSeluLambda = 1.0507009873554805;
inline constexpr double kSeluAlpha = 1.6732632423543772;

enum class OpKind {
    Leaf,       // external tensor (parameters, inputs)
    Const,      // tape-owned constant (batches, noise draws)
    Affine,     // x[B,I] * W[I,O] + b[O]
    Selu,
    Dropout,
    Add,
    Sub,
    Mul,
    AddScalar,
    Scale,
    ExpClamp,   // exp(clamp(x, lo, hi)), the log-sigma parameterization
    SliceCols,
    MeanAll,
    Mse,
    GaussianKl,
};

// Reverse-mode tape. Nodes are appended in topological order by construction;
// backward() walks them once in reverse. Intermediate gradients are per-call
// scratch; leaf gradients accumulate into the external tensors' grad buffers.
class Tape {
public:
    struct Node {
        OpKind kind;
        int a = -1, b = -1, c = -1;   // parents
        Tensor val;
        Tensor* external = nullptr;   // Leaf only
        std::vector<double> aux;      // dropout mask
        double s0 = 0.0, s1 = 0.0;    // scalar op parameters
        int i0 = 0, i1 = 0;           // column range for SliceCols
        std::vector<double> grad;     // scratch, valid after backward()
        bool active = false;          // scratch, set by the last backward()
    };

    // Registers an external tensor as a leaf. The value is snapshotted so the
    // graph stays consistent even if the tensor is updated afterwards.
    int leaf(Tensor& t);

    // Tape-owned constant; never receives a gradient.
    int constant(Tensor t);

    int affine(int x, int w, int b);
    int selu(int x);
    // Inverted dropout: survivors are scaled by 1/(1-ratio) so eval is identity.
    // In eval mode (training=false) this is the identity and adds no node.
    int dropout(int x, double drop_ratio, bool training, Rng* rng);
    int add(int a, int b);
    int sub(int a, int b);
    int mul(int a, int b);
    int add_scalar(int a, double c);
    int scale(int a, double c);
    int exp_clamp(int a, double lo, double hi);
    int slice_cols(int a, int col_begin, int col_end);
    int mean_all(int a);
    int mse(int a, int b);
    int gaussian_kl(int mu, int sigma);

    const Tensor& value(int id) const { return nodes_[check_id(id)].val; }
    double scalar(int id) const;

    // Gradient of the last backward()'s loss w.r.t. node `id`. Zero if the
    // node was not on an active path.
    std::vector<double> grad_of(int id) const;

    // Accumulates d(loss)/d(p) into p.grad for every registered leaf p with
    // requires_grad. When `targets` is non-empty, propagation is restricted to
    // paths between the loss and those tensors and only they receive grads.
    void backward(int loss);
    void backward(int loss, std::span<Tensor* const> targets);

    std::size_t size() const { return nodes_.size(); }

private:
    int check_id(int id) const;
    int push(Node n);
    void binary_shape_check(int a, int b, const char* op) const;

    std::vector<Node> nodes_;
};

}  // namespace felab
