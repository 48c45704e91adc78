#pragma once

#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "felab/errors.hpp"

namespace felab {

// Dense row-major f64 tensor. Gradient buffer is materialized on demand and
// accumulates across backward calls until zero_grad() is called.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
    int node_id = -1;  // leaf id on the tape of the current graph, -1 if detached

    Tensor() = default;
    Tensor(std::vector<int> shp, double fill = 0.0)
        : shape(std::move(shp)), values(numel_of(shape), fill) {}

    static std::size_t numel_of(const std::vector<int>& shp) {
        std::size_t n = 1;
        for (int d : shp) {
            if (d < 0) throw ShapeError("negative dimension in tensor shape");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

    std::size_t numel() const { return values.size(); }
    int rows() const { return shape.empty() ? 1 : shape[0]; }
    int cols() const { return shape.size() < 2 ? 1 : shape[1]; }

    double& at(int r, int c) { return values[static_cast<std::size_t>(r) * cols() + c]; }
    double at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols() + c]; }

    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
    }

    void zero_grad() { grad.assign(values.size(), 0.0); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }
};

inline Tensor make_scalar(double v) {
    Tensor t({1});
    t.values[0] = v;
    return t;
}

}  // namespace felab
