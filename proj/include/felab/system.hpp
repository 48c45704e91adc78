#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "felab/rng.hpp"
#include "felab/tensor.hpp"

namespace felab {

enum class SystemKind { Nonlinear, Linear };

enum class BasisFn { Sin, Tanh, Cubic, GaussBump, Linear };

// One additive term of one output channel: amplitude * fn(freq * imp * s_k + phase).
struct BasisTerm {
    int factor = 0;
    BasisFn fn = BasisFn::Sin;
    double amplitude = 1.0;
    double frequency = 1.0;
    double phase = 0.0;
};

// Memoryless generative system: every output mixes one basis term per factor,
// so each output depends on all factors. Importance scales both amplitude and
// frequency, making low-importance factors weaker and less nonlinear.
struct SystemSpec {
    SystemKind kind = SystemKind::Nonlinear;
    int n_inputs = 5;
    int n_outputs = 48;
    std::vector<double> importance;                // (0,1], imp[0]==imp[1], nonincreasing
    double noise_std = 0.125;
    std::uint64_t seed = 0;
    std::vector<std::vector<BasisTerm>> basis;     // [n_outputs][n_inputs]

    void validate() const;
    std::string digest() const;  // FNV-1a64 over the canonical JSON, hex
    std::string to_json() const;
    static SystemSpec from_json(const std::string& text);

    void save(const std::string& path) const;
    static SystemSpec load(const std::string& path);
};

inline const std::vector<double> kDefaultImportance{1.0, 1.0, 0.8, 0.6, 0.4};

SystemSpec build_system(std::uint64_t seed, SystemKind kind, int n_inputs = 5,
                        int n_outputs = 48,
                        const std::vector<double>& importance = kDefaultImportance,
                        double noise_std = 0.125);

// Noiseless output for one factor vector; adds N(0, noise_std^2) per output
// when with_noise is set (draws come from the caller's rng).
std::vector<double> evaluate(const SystemSpec& spec, const std::vector<double>& s,
                             bool with_noise = false, Rng* rng = nullptr);

// Output curves for one factor swept over `grid` with the other factors at 0.
// Result is [grid.size() x n_outputs], noiseless.
Tensor traversal_curves(const SystemSpec& spec, int factor_idx,
                        const std::vector<double>& grid);

std::vector<double> traversal_grid(double lo = -2.0, double hi = 2.0, int points = 41);

}  // namespace felab
