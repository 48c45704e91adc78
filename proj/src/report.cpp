#include "felab/report.hpp"

#include <filesystem>

#include "felab/csv.hpp"

namespace felab {

void write_re_curve(const std::string& path, const std::vector<double>& re) {
    CsvWriter csv(path);
    csv.row({"level", "re"});
    for (std::size_t i = 0; i < re.size(); ++i)
        csv.row({std::to_string(i), CsvWriter::num(re[i])});
}

void write_mi_matrix(const std::string& path, const Tensor& clamped, const Tensor& raw) {
    CsvWriter csv(path);
    csv.row({"latent", "factor", "mi_nats", "mi_raw"});
    for (int i = 0; i < clamped.rows(); ++i)
        for (int j = 0; j < clamped.cols(); ++j)
            csv.row({std::to_string(i), std::to_string(j), CsvWriter::num(clamped.at(i, j)),
                     CsvWriter::num(raw.at(i, j))});
}

void write_stability(const std::string& path, const StabilityResult& st) {
    CsvWriter csv(path);
    csv.row({"latent", "score"});
    for (std::size_t i = 0; i < st.per_latent.size(); ++i)
        csv.row({std::to_string(i), CsvWriter::num(st.per_latent[i])});
    csv.row({"mean", CsvWriter::num(st.mean)});
}

void write_traversal(const std::string& path,
                     const std::vector<std::vector<std::vector<double>>>& responses,
                     const std::vector<double>& grid) {
    CsvWriter csv(path);
    csv.row({"latent", "factor", "grid_value", "latent_response"});
    for (std::size_t i = 0; i < responses.size(); ++i)
        for (std::size_t j = 0; j < responses[i].size(); ++j)
            for (std::size_t g = 0; g < grid.size(); ++g)
                csv.row({std::to_string(i), std::to_string(j), CsvWriter::num(grid[g]),
                         CsvWriter::num(responses[i][j][g])});
}

void write_histograms(const std::string& path, FEParams& params, const ModelConfig& cfg,
                      const Tensor& x_eval) {
    Tape tape;
    ForwardOutputs out =
        forward_full(tape, params, cfg, x_eval, nullptr, /*training=*/false, nullptr, nullptr);
    CsvWriter csv(path);
    csv.row({"level", "code_kind", "bin_left", "count"});
    auto emit = [&](int level, const char* kind, const std::vector<double>& values) {
        Histogram h = histogram(values, 64, -4.0, 4.0);
        const double width = (h.hi - h.lo) / static_cast<double>(h.counts.size());
        for (std::size_t b = 0; b < h.counts.size(); ++b)
            csv.row({std::to_string(level), kind, CsvWriter::num(h.lo + width * b),
                     std::to_string(h.counts[b])});
    };
    if (!cfg.baseline_vae) {
        for (std::size_t i = 0; i < out.m.size(); ++i)
            emit(static_cast<int>(i), "m", tape.value(out.m[i]).values);
        for (std::size_t i = 0; i < out.p1.size(); ++i) {
            emit(static_cast<int>(i) + 1, "p1", tape.value(out.p1[i]).values);
            emit(static_cast<int>(i) + 1, "p2", tape.value(out.p2[i]).values);
        }
    }
}

void run_report(const std::string& out_dir, const ReportInputs& in) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const auto path = [&](const char* name) { return (fs::path(out_dir) / name).string(); };

    std::vector<double> re = recon_error_per_level(*in.params, *in.cfg, *in.x_eval);
    write_re_curve(path("re_curve.csv"), re);

    if (in.s_eval != nullptr && in.s_eval->numel() > 0) {
        Tensor latents = latent_responses(*in.params, *in.cfg, *in.x_eval);
        write_mi_matrix(path("mi_matrix.csv"), mi_matrix(latents, *in.s_eval),
                        mi_matrix_raw(latents, *in.s_eval));
    }
    if (in.spec != nullptr) {
        const auto grid = traversal_grid();
        write_traversal(path("traversal.csv"),
                        traversal_responses(*in.params, *in.cfg, *in.spec, grid), grid);
    }
    write_histograms(path("histogram.csv"), *in.params, *in.cfg, *in.x_eval);
}

}  // namespace felab
