#pragma once

#include <cstdint>
#include <string>

namespace felab::cli {

struct ReproduceOptions {
    std::string out_dir;
    std::string scale = "desk";  // desk | paper
    std::uint64_t seed = 42;
    int jobs = 0;  // 0 = FE_LAB_THREADS env or hardware concurrency
};

// Runs the full experiment grid (FE with 1..6 latents, VAE, beta-VAE,
// beta-FE, supervised FE; two seeds each), then writes table2.csv,
// stability.csv and the figure SVGs.
void run_reproduce(const ReproduceOptions& opt);

struct PcaCheckOptions {
    std::string out_dir;
    std::uint64_t seed = 7;
    int latents = 3;   // reconstruction ranks compared against the PCA oracle
    int iterations = 8000;
};

// Linear system + linear-activation model vs the covariance
// eigendecomposition oracle; writes pca_report.csv.
void run_pca_check(const PcaCheckOptions& opt);

}  // namespace felab::cli
