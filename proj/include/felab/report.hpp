#pragma once

#include <string>

#include "felab/metrics.hpp"

namespace felab {

// The per-run evaluation artifacts. Every writer emits the CSV schema named
// in its filename; run_report bundles the four standard files.
void write_re_curve(const std::string& path, const std::vector<double>& re);
void write_mi_matrix(const std::string& path, const Tensor& clamped, const Tensor& raw);
void write_stability(const std::string& path, const StabilityResult& st);
void write_traversal(const std::string& path,
                     const std::vector<std::vector<std::vector<double>>>& responses,
                     const std::vector<double>& grid);
void write_histograms(const std::string& path, FEParams& params, const ModelConfig& cfg,
                      const Tensor& x_eval);

struct ReportInputs {
    FEParams* params = nullptr;
    const ModelConfig* cfg = nullptr;
    const Tensor* x_eval = nullptr;   // held-out observations
    const Tensor* s_eval = nullptr;   // matching factors (may be null)
    const SystemSpec* spec = nullptr; // needed for traversal curves (may be null)
};

// Writes re_curve.csv, mi_matrix.csv, traversal.csv and histogram.csv into
// out_dir. MI needs s_eval; traversal needs spec; both are skipped when the
// input is missing.
void run_report(const std::string& out_dir, const ReportInputs& in);

}  // namespace felab
