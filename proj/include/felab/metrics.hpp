#pragma once

#include <string>
#include <vector>

#include "felab/dataset.hpp"
#include "felab/model.hpp"
#include "felab/system.hpp"

namespace felab {

// Per-level reconstruction error on held-out observations (dropout off, z=mu).
std::vector<double> recon_error_per_level(FEParams& params, const ModelConfig& cfg,
                                          const Tensor& x_eval);

// Eval-mode latent responses, one row per sample. Columns are the z0 block
// (label head when supervised, mu_0 otherwise) followed by mu_1..mu_n; for a
// baseline VAE just mu_1..mu_n.
Tensor latent_responses(FEParams& params, const ModelConfig& cfg, const Tensor& x_eval);

struct MiResult {
    double nats = 0.0;      // clamped at 0
    double raw = 0.0;       // estimator output before clamping
    bool degenerate = false;  // a constant input column
};

// Kraskov-Stoegbauer-Grassberger estimator #1 with max-norm neighborhoods.
// Columns are standardized and tie-broken with deterministic 1e-10 jitter.
MiResult ksg_mi(const std::vector<double>& a, const std::vector<double>& b, int k = 3);

// Entry (i,j) = ksg_mi(latents column i, factors column j).
Tensor mi_matrix(const Tensor& latents, const Tensor& factors, int k = 3);
Tensor mi_matrix_raw(const Tensor& latents, const Tensor& factors, int k = 3);

double spearman(const std::vector<double>& x, const std::vector<double>& y);

struct StabilityResult {
    std::vector<double> per_latent;  // |spearman| per latent column
    double mean = 0.0;
};

// Sign-invariant rank-correlation match between two runs' latent responses
// over the same inputs.
StabilityResult stability_score(const Tensor& run_a, const Tensor& run_b);

struct PcaResult {
    Tensor components;                // [d, k], orthonormal columns
    std::vector<double> eigenvalues;  // all d, descending (1/N covariance)
    std::vector<double> mean;         // column means of X
    double truncation_mse = 0.0;      // per-element MSE of the rank-k reconstruction
};

PcaResult pca_oracle(const Tensor& x, int k);

// Canonical angles between the column spans, in degrees, ascending.
// Inputs are orthonormalized internally; rank deficiency is an error.
std::vector<double> principal_angles(const Tensor& u, const Tensor& v);

// Jacobi eigendecomposition of a symmetric matrix; eigenvalues descending,
// eigenvectors as columns.
void symmetric_eigen(const Tensor& m, std::vector<double>& eigenvalues, Tensor& eigenvectors);

struct Histogram {
    double lo = -4.0, hi = 4.0;
    std::vector<long> counts;
    long total = 0;
    double mean = 0.0, stddev = 0.0;
};

Histogram histogram(const std::vector<double>& values, int bins = 64, double lo = -4.0,
                    double hi = 4.0);

// Latent responses along factor traversals: vary one factor over the grid
// (others 0), push the noiseless observation through the encoder and record
// every latent column. Result: [latents][factors][grid].
std::vector<std::vector<std::vector<double>>> traversal_responses(
    FEParams& params, const ModelConfig& cfg, const SystemSpec& spec,
    const std::vector<double>& grid);

}  // namespace felab
