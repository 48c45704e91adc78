#pragma once

#include <string>
#include <vector>

#include "felab/rng.hpp"
#include "felab/tape.hpp"
#include "felab/tensor.hpp"

namespace felab {

enum class Activation { Selu, Identity };

struct AffineLayer {
    Tensor w;  // [in, out]
    Tensor b;  // [out]
};

// Plain fully-connected stack. The last layer is always linear; hidden layers
// use the configured activation.
struct Mlp {
    std::vector<AffineLayer> layers;
    Activation activation = Activation::Selu;

    // LeCun-normal weights (std = 1/sqrt(fan_in)), zero biases.
    static Mlp make(const std::vector<int>& dims, Activation act, Rng& rng);

    int forward(Tape& tape, int x) const;

    void collect(std::vector<Tensor*>& out);
    std::size_t param_count() const;
};

inline Mlp Mlp::make(const std::vector<int>& dims, Activation act, Rng& rng) {
    if (dims.size() < 2) throw ConfigError("mlp: need at least input and output dims");
    Mlp m;
    m.activation = act;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        AffineLayer layer;
        layer.w = Tensor({dims[i], dims[i + 1]});
        layer.b = Tensor({dims[i + 1]});
        double std = 1.0 / std::sqrt(static_cast<double>(dims[i]));
        for (double& v : layer.w.values) v = rng.normal(0.0, std);
        layer.w.requires_grad = true;
        layer.b.requires_grad = true;
        m.layers.push_back(std::move(layer));
    }
    return m;
}

inline int Mlp::forward(Tape& tape, int x) const {
    int h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        // leaf() is safe to call repeatedly; the tape snapshots values.
        auto& layer = const_cast<AffineLayer&>(layers[i]);
        h = tape.affine(h, tape.leaf(layer.w), tape.leaf(layer.b));
        if (i + 1 < layers.size() && activation == Activation::Selu) h = tape.selu(h);
    }
    return h;
}

inline void Mlp::collect(std::vector<Tensor*>& out) {
    for (auto& l : layers) {
        out.push_back(&l.w);
        out.push_back(&l.b);
    }
}

inline std::size_t Mlp::param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.w.numel() + l.b.numel();
    return n;
}

}  // namespace felab
