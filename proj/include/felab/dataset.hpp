#pragma once

#include <cstdint>
#include <string>

#include "felab/system.hpp"
#include "felab/tensor.hpp"

namespace felab {

// Paired factor matrix S [n x n_inputs] and observation matrix X [n x n_outputs]
// with enough metadata to verify provenance.
struct Dataset {
    Tensor S;
    Tensor X;
    std::string spec_digest;
    std::string kind = "nonlinear";
    double noise_std = 0.0;
    std::uint64_t sample_seed = 0;
    bool has_factors = true;

    int n_rows() const { return X.rows(); }
    int n_inputs() const { return has_factors ? S.cols() : 0; }
    int n_outputs() const { return X.cols(); }

    void save(const std::string& path) const;
    static Dataset load(const std::string& path);
};

// Factors drawn i.i.d. from N(0,1) truncated to [-2,2]; observations include
// the configured Gaussian noise. Bit-identical for identical (spec, seed, n).
Dataset sample_dataset(const SystemSpec& spec, int n, std::uint64_t seed);

}  // namespace felab
