#include "reproduce.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <limits>
#include <map>
#include <mutex>
#include <thread>

#include "cli_common.hpp"
#include "felab/csv.hpp"
#include "felab/metrics.hpp"
#include "felab/svg.hpp"

namespace felab::cli {

namespace {

struct PlanEntry {
    std::string name;
    ModelKind kind;
    int latents;
};

std::vector<PlanEntry> experiment_plan() {
    std::vector<PlanEntry> plan;
    for (int n = 1; n <= 6; ++n)
        plan.push_back({"fe-" + std::to_string(n), ModelKind::Fe, n});
    plan.push_back({"vae-6", ModelKind::Vae, 6});
    plan.push_back({"beta-vae-6", ModelKind::BetaVae, 6});
    plan.push_back({"beta-fe-6", ModelKind::BetaFe, 6});
    // Label block plus five latents, matching the reported layout.
    plan.push_back({"supervised-fe", ModelKind::SupervisedFe, 5});
    return plan;
}

int resolve_jobs(int flag) {
    if (flag > 0) return flag;
    if (const char* env = std::getenv("FE_LAB_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 2;
}

struct RunOutcome {
    bool ok = false;
    std::string error;
    std::vector<double> final_re;
};

void figures(const fs::path& out, const SystemSpec& spec, std::uint64_t master);

}  // namespace

void run_reproduce(const ReproduceOptions& opt) {
    if (opt.scale != "desk" && opt.scale != "paper")
        throw ConfigError("--scale must be desk or paper");
    const bool desk = opt.scale == "desk";
    const int train_rows = desk ? 4000 : 10000;
    const int iterations = desk ? 5000 : 20000;
    const int eval_rows = 1000;

    const fs::path out(opt.out_dir);
    fs::create_directories(out / "dataset");
    fs::create_directories(out / "figures");

    SystemSpec spec = build_system(derive_seed(opt.seed, 1), SystemKind::Nonlinear);
    Dataset ds = sample_dataset(spec, train_rows + eval_rows, derive_seed(opt.seed, 2));
    spec.save((out / "dataset" / "system.json").string());
    ds.save((out / "dataset" / "data.fed").string());

    const auto plan = experiment_plan();
    struct Task {
        std::size_t entry;
        int seed_idx;
    };
    std::vector<Task> tasks;
    for (std::size_t e = 0; e < plan.size(); ++e)
        for (int s = 0; s < 2; ++s) tasks.push_back({e, s});

    std::vector<std::vector<RunOutcome>> outcomes(plan.size(), std::vector<RunOutcome>(2));
    std::atomic<std::size_t> next{0};
    std::mutex io_mutex;

    auto worker = [&] {
        for (;;) {
            const std::size_t t = next.fetch_add(1);
            if (t >= tasks.size()) return;
            const PlanEntry& entry = plan[tasks[t].entry];
            const int sidx = tasks[t].seed_idx;
            const std::uint64_t run_seed =
                derive_seed(opt.seed, 100 + 2 * tasks[t].entry + static_cast<std::size_t>(sidx));
            const fs::path run_dir = out / "runs" / entry.name / ("seed" + std::to_string(sidx));
            RunOutcome& oc = outcomes[tasks[t].entry][sidx];
            try {
                ModelConfig mcfg = model_for(entry.kind, ds, entry.latents, -1.0, 1.0, 2.0 / 3.0);
                TrainConfig tcfg;
                tcfg.iterations = iterations;
                tcfg.batch_size = 500;
                tcfg.lr = 1e-3;
                tcfg.seed = run_seed;
                tcfg.dataset_size = train_rows;
                tcfg.eval_rows = eval_rows;
                tcfg.eval_every = 250;
                TrainResult res =
                    execute_run(ds, spec, mcfg, tcfg, run_dir, /*with_report=*/true);
                oc.ok = true;
                oc.final_re = res.history.points.back().re;
                std::lock_guard<std::mutex> lock(io_mutex);
                std::cout << entry.name << " seed" << sidx << " done, final re "
                          << CsvWriter::num(oc.final_re.back()) << "\n";
            } catch (const std::exception& e) {
                oc.error = e.what();
                std::lock_guard<std::mutex> lock(io_mutex);
                std::cout << entry.name << " seed" << sidx << " FAILED: " << oc.error << "\n";
            }
        }
    };

    const int jobs = resolve_jobs(opt.jobs);
    std::vector<std::thread> pool;
    for (int j = 0; j < std::max(1, jobs); ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();

    // Per-pair stability on the shared held-out rows.
    TrainConfig split_cfg;
    split_cfg.eval_rows = eval_rows;
    split_cfg.dataset_size = train_rows;
    Split sp = make_split(ds, split_cfg);

    std::vector<double> stability_means(plan.size(),
                                        std::numeric_limits<double>::quiet_NaN());
    for (std::size_t e = 0; e < plan.size(); ++e) {
        if (!outcomes[e][0].ok || !outcomes[e][1].ok) continue;
        Checkpoint ca =
            load_checkpoint((out / "runs" / plan[e].name / "seed0" / "ckpt.fec").string());
        Checkpoint cb =
            load_checkpoint((out / "runs" / plan[e].name / "seed1" / "ckpt.fec").string());
        Tensor la = latent_responses(ca.state.params, ca.config, sp.x_eval);
        Tensor lb = latent_responses(cb.state.params, cb.config, sp.x_eval);
        StabilityResult st = stability_score(la, lb);
        write_stability((out / "runs" / plan[e].name / "stability.csv").string(), st);
        stability_means[e] = st.mean;
    }

    {
        CsvWriter csv((out / "stability.csv").string());
        csv.row({"model", "mean_score", "status"});
        for (std::size_t e = 0; e < plan.size(); ++e) {
            const bool ok = outcomes[e][0].ok && outcomes[e][1].ok;
            csv.row({plan[e].name, ok ? CsvWriter::num(stability_means[e]) : "",
                     ok ? "ok" : "failed"});
        }
    }

    // Table-2 analogue: column l_k is the error reconstructing with k latent
    // variables, averaged over the seed pair. The supervised row starts at l2
    // because its first block is the label head.
    {
        const int max_cols = 7;
        CsvWriter csv((out / "table2.csv").string());
        std::vector<std::string> header{"model", "status"};
        for (int k = 1; k <= max_cols; ++k) header.push_back("re_l" + std::to_string(k));
        csv.row(header);
        for (std::size_t e = 0; e < plan.size(); ++e) {
            const PlanEntry& entry = plan[e];
            const bool ok = outcomes[e][0].ok && outcomes[e][1].ok;
            std::vector<std::string> row{entry.name, ok ? "ok" : "failed"};
            std::vector<std::string> cells(max_cols, "");
            if (ok) {
                const auto& re_a = outcomes[e][0].final_re;
                const auto& re_b = outcomes[e][1].final_re;
                for (std::size_t lvl = 0; lvl < re_a.size(); ++lvl) {
                    const double mean_re = 0.5 * (re_a[lvl] + re_b[lvl]);
                    int col;  // 1-based "latents used" column
                    if (entry.kind == ModelKind::Vae || entry.kind == ModelKind::BetaVae)
                        col = entry.latents;
                    else if (entry.kind == ModelKind::SupervisedFe)
                        col = static_cast<int>(lvl) + 1;  // level 0 (label only) stays unlisted
                    else
                        col = static_cast<int>(lvl) + 1;
                    if (entry.kind == ModelKind::SupervisedFe) {
                        if (lvl == 0) continue;  // label-only level, no latent column
                        col = static_cast<int>(lvl) + 1;
                    }
                    if (col >= 1 && col <= max_cols) cells[col - 1] = CsvWriter::num(mean_re);
                }
            }
            row.insert(row.end(), cells.begin(), cells.end());
            csv.row(row);
        }
    }

    figures(out, spec, opt.seed);
    std::cout << "table2 " << (out / "table2.csv").string() << "\n";
}

namespace {

std::vector<Series> csv_traversal_series(const CsvTable& t, int latent, int factor,
                                         const std::string& label) {
    const int ci = t.col("latent"), cj = t.col("factor"), cg = t.col("grid_value"),
              cv = t.col("latent_response");
    Series s;
    s.label = label;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (std::stoi(t.rows[r][ci]) != latent || std::stoi(t.rows[r][cj]) != factor) continue;
        s.x.push_back(t.num(r, cg));
        s.y.push_back(t.num(r, cv));
    }
    return {s};
}

void figures(const fs::path& out, const SystemSpec& spec, std::uint64_t master) {
    const fs::path figdir = out / "figures";

    // System traversal curves, clean and noisy.
    {
        const auto grid = traversal_grid(-2.0, 2.0, 81);
        Tensor clean = traversal_curves(spec, 0, grid);
        Rng noise_rng(derive_seed(master, 3));
        std::vector<Panel> panels(2);
        panels[0].title = "factor 1 sweep, noiseless";
        panels[1].title = "factor 1 sweep, with noise";
        for (int j = 0; j < std::min(8, spec.n_outputs); ++j) {
            Series sc, sn;
            for (std::size_t g = 0; g < grid.size(); ++g) {
                sc.x.push_back(grid[g]);
                sc.y.push_back(clean.at(static_cast<int>(g), j));
                sn.x.push_back(grid[g]);
                sn.y.push_back(clean.at(static_cast<int>(g), j) +
                               noise_rng.normal(0.0, spec.noise_std));
            }
            panels[0].series.push_back(sc);
            panels[1].series.push_back(sn);
        }
        write_panel_grid_svg((figdir / "fig2.svg").string(), "system output traversals",
                             panels, 2);
    }

    // Patcher/median code histograms from the fe-6 run.
    try {
        CsvTable t = read_csv((out / "runs" / "fe-6" / "seed0" / "histogram.csv").string());
        const int cl = t.col("level"), ck = t.col("code_kind"), cb = t.col("bin_left"),
                  cc = t.col("count");
        std::map<std::pair<std::string, int>, Series> series;
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            auto key = std::make_pair(t.rows[r][ck], std::stoi(t.rows[r][cl]));
            series[key].x.push_back(t.num(r, cb));
            series[key].y.push_back(t.num(r, cc));
        }
        std::vector<Panel> panels;
        for (const auto& [key, s] : series) {
            Panel p;
            p.title = key.first + " level " + std::to_string(key.second);
            p.series.push_back(s);
            panels.push_back(std::move(p));
        }
        write_panel_grid_svg((figdir / "fig3a.svg").string(), "patcher and median code histograms",
                             panels, 7);
    } catch (const std::exception&) {
        // run may have failed; figure is skipped
    }

    // Per-level reconstruction error across the FE family.
    {
        std::vector<Series> series;
        for (int n = 1; n <= 6; ++n) {
            try {
                CsvTable t = read_csv(
                    (out / "runs" / ("fe-" + std::to_string(n)) / "seed0" / "re_curve.csv")
                        .string());
                Series s;
                s.label = "fe-" + std::to_string(n);
                const int cl = t.col("level"), cr = t.col("re");
                for (std::size_t r = 0; r < t.rows.size(); ++r) {
                    s.x.push_back(t.num(r, cl) + 1.0);  // latents used
                    s.y.push_back(t.num(r, cr));
                }
                series.push_back(std::move(s));
            } catch (const std::exception&) {
            }
        }
        if (!series.empty())
            write_line_plot_svg((figdir / "fig3b.svg").string(),
                                "reconstruction error by latents used", series, "latents used",
                                "mse");
    }

    // Latent-vs-factor response grids for the two fe-6 seeds.
    try {
        CsvTable ta = read_csv((out / "runs" / "fe-6" / "seed0" / "traversal.csv").string());
        CsvTable tb = read_csv((out / "runs" / "fe-6" / "seed1" / "traversal.csv").string());
        int latents = 0, factors = 0;
        const int ci = ta.col("latent"), cj = ta.col("factor");
        for (std::size_t r = 0; r < ta.rows.size(); ++r) {
            latents = std::max(latents, std::stoi(ta.rows[r][ci]) + 1);
            factors = std::max(factors, std::stoi(ta.rows[r][cj]) + 1);
        }
        std::vector<Panel> panels;
        for (int i = 0; i < latents; ++i) {
            for (int j = 0; j < factors; ++j) {
                Panel p;
                p.title = "L" + std::to_string(i + 1) + " vs S" + std::to_string(j + 1);
                auto sa = csv_traversal_series(ta, i, j, "seed0");
                auto sb = csv_traversal_series(tb, i, j, "seed1");
                p.series.push_back(sa[0]);
                p.series.push_back(sb[0]);
                panels.push_back(std::move(p));
            }
        }
        write_panel_grid_svg((figdir / "fig3c.svg").string(),
                             "latent responses to factor traversals", panels, factors);
    } catch (const std::exception&) {
    }
}

}  // namespace

void run_pca_check(const PcaCheckOptions& opt) {
    if (opt.latents < 2) throw ConfigError("pca-check needs --latents >= 2");
    const int ranks = opt.latents;
    const int n_outputs = 10, n_factors = 3;

    SystemSpec spec = build_system(opt.seed, SystemKind::Linear, n_factors, n_outputs,
                                   {1.0, 1.0, 0.6}, 0.125);
    Dataset ds = sample_dataset(spec, 5000, derive_seed(opt.seed, 0x77));

    ModelConfig mcfg;
    mcfg.n_outputs = n_outputs;
    mcfg.n_latents = ranks - 1;  // level k-1 reconstructs with k latents
    mcfg.linear_activation = true;
    mcfg.drop_ratio = 0.0;  // input masking would bias the linear optimum away from PCA
    mcfg.validate();

    TrainConfig tcfg;
    tcfg.iterations = opt.iterations;
    tcfg.batch_size = 500;
    tcfg.lr = 1e-3;
    tcfg.seed = derive_seed(opt.seed, 0x88);
    tcfg.eval_rows = 1000;
    tcfg.eval_every = 500;

    const fs::path out(opt.out_dir);
    TrainResult res = execute_run(ds, spec, mcfg, tcfg, out, /*with_report=*/false);

    Split sp = make_split(ds, tcfg);
    std::vector<double> re = recon_error_per_level(res.state.params, mcfg, sp.x_eval);

    // Probe the (exactly linear) map x -> x_hat around the eval mean to get
    // each level's reconstruction operator, then compare column spaces.
    std::vector<double> mean(n_outputs, 0.0);
    for (int r = 0; r < sp.x_eval.rows(); ++r)
        for (int c = 0; c < n_outputs; ++c) mean[c] += sp.x_eval.at(r, c);
    for (double& m : mean) m /= sp.x_eval.rows();

    Tensor probe({n_outputs + 1, n_outputs});
    for (int c = 0; c < n_outputs; ++c) probe.at(0, c) = mean[c];
    for (int r = 1; r <= n_outputs; ++r) {
        for (int c = 0; c < n_outputs; ++c) probe.at(r, c) = mean[c];
        probe.at(r, r - 1) += 1.0;
    }
    Tape tape;
    ForwardOutputs fwd = forward_full(tape, res.state.params, mcfg, probe, nullptr, false,
                                      nullptr, nullptr);

    CsvWriter csv((out / "pca_report.csv").string());
    csv.row({"k", "re", "pca_err", "re_rel_err", "max_angle_deg"});
    for (int k = 1; k <= ranks; ++k) {
        PcaResult pca = pca_oracle(sp.x_eval, k);
        const Tensor& xh = tape.value(fwd.x_hat[k - 1]);
        Tensor b({n_outputs, n_outputs});
        for (int j = 0; j < n_outputs; ++j)
            for (int i = 0; i < n_outputs; ++i) b.at(i, j) = xh.at(j + 1, i) - xh.at(0, i);
        // Top-k column space via the eigenvectors of B B^T.
        Tensor bbt({n_outputs, n_outputs});
        for (int i = 0; i < n_outputs; ++i)
            for (int j = 0; j < n_outputs; ++j) {
                double acc = 0.0;
                for (int c = 0; c < n_outputs; ++c) acc += b.at(i, c) * b.at(j, c);
                bbt.at(i, j) = acc;
            }
        std::vector<double> evals;
        Tensor evecs;
        symmetric_eigen(bbt, evals, evecs);
        Tensor u({n_outputs, k});
        for (int c = 0; c < k; ++c)
            for (int r = 0; r < n_outputs; ++r) u.at(r, c) = evecs.at(r, c);
        const auto angles = principal_angles(u, pca.components);
        const double max_angle = angles.empty() ? 0.0 : angles.back();
        const double rel = std::fabs(re[k - 1] - pca.truncation_mse) / pca.truncation_mse;
        csv.row({std::to_string(k), CsvWriter::num(re[k - 1]),
                 CsvWriter::num(pca.truncation_mse), CsvWriter::num(rel),
                 CsvWriter::num(max_angle)});
        std::cout << "k=" << k << " re=" << CsvWriter::num(re[k - 1])
                  << " pca=" << CsvWriter::num(pca.truncation_mse)
                  << " rel=" << CsvWriter::num(rel) << " angle=" << CsvWriter::num(max_angle)
                  << "\n";
    }
}

}  // namespace felab::cli
