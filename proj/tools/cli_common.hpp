#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include <json.hpp>

#include "felab/dataset.hpp"
#include "felab/report.hpp"
#include "felab/system.hpp"
#include "felab/trainer.hpp"

namespace felab::cli {

namespace fs = std::filesystem;

struct LoadedData {
    Dataset ds;
    std::optional<SystemSpec> spec;
    fs::path dir;
};

// Accepts either a dataset directory (data.fed + system.json) or a direct
// path to a .fed file with an optional sibling system.json.
inline LoadedData load_data_arg(const std::string& arg) {
    fs::path p(arg);
    fs::path fed = fs::is_directory(p) ? p / "data.fed" : p;
    LoadedData out;
    out.dir = fed.parent_path();
    out.ds = Dataset::load(fed.string());
    const fs::path sysjson = out.dir / "system.json";
    if (fs::exists(sysjson)) {
        SystemSpec spec = SystemSpec::load(sysjson.string());
        if (spec.digest() != out.ds.spec_digest)
            throw ConfigError("system.json does not match the dataset's spec digest");
        out.spec = std::move(spec);
    }
    return out;
}

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

// One full training run with its artifacts: checkpoint, history CSV,
// effective config JSON and (optionally) the evaluation report files.
inline TrainResult execute_run(const Dataset& ds, const std::optional<SystemSpec>& spec,
                               const ModelConfig& mcfg, TrainConfig tcfg, const fs::path& out_dir,
                               bool with_report) {
    fs::create_directories(out_dir);
    tcfg.checkpoint_path = (out_dir / "ckpt.fec").string();

    TrainResult result = train_run(ds, mcfg, tcfg);
    result.history.save_csv((out_dir / "history.csv").string());

    nlohmann::json eff;
    eff["model"] = nlohmann::json::parse(mcfg.to_json());
    eff["train"] = nlohmann::json::parse(tcfg.to_json());
    eff["dataset_digest"] = ds.spec_digest;
    write_text(out_dir / "effective_config.json", eff.dump(2) + "\n");

    if (with_report) {
        Split sp = make_split(ds, tcfg);
        ReportInputs in;
        in.params = &result.state.params;
        in.cfg = &mcfg;
        in.x_eval = &sp.x_eval;
        in.s_eval = sp.y_eval.numel() > 0 ? &sp.y_eval : nullptr;
        in.spec = spec.has_value() ? &spec.value() : nullptr;
        run_report(out_dir.string(), in);
    }
    return result;
}

enum class ModelKind { Fe, Vae, BetaVae, BetaFe, SupervisedFe };

inline ModelKind parse_model_kind(const std::string& s) {
    if (s == "fe") return ModelKind::Fe;
    if (s == "vae") return ModelKind::Vae;
    if (s == "beta-vae") return ModelKind::BetaVae;
    if (s == "beta-fe") return ModelKind::BetaFe;
    if (s == "supervised-fe") return ModelKind::SupervisedFe;
    throw ConfigError("unknown model kind: " + s +
                      " (expected fe|vae|beta-vae|beta-fe|supervised-fe)");
}

// beta_flag < 0 means "not set on the command line": beta models then default
// to beta=4, everything else to beta=1.
inline ModelConfig model_for(ModelKind kind, const Dataset& ds, int latents, double beta_flag,
                             double xi, double alpha) {
    ModelConfig cfg;
    cfg.n_outputs = ds.n_outputs();
    cfg.n_latents = latents;
    cfg.xi = xi;
    cfg.alpha = alpha;
    switch (kind) {
        case ModelKind::Fe:
            cfg.beta = beta_flag < 0 ? 1.0 : beta_flag;
            break;
        case ModelKind::Vae:
            cfg.baseline_vae = true;
            cfg.beta = beta_flag < 0 ? 1.0 : beta_flag;
            break;
        case ModelKind::BetaVae:
            cfg.baseline_vae = true;
            cfg.beta = beta_flag < 0 ? 4.0 : beta_flag;
            break;
        case ModelKind::BetaFe:
            cfg.beta = beta_flag < 0 ? 4.0 : beta_flag;
            break;
        case ModelKind::SupervisedFe:
            cfg.supervised = true;
            cfg.teacher_forcing = true;
            cfg.beta = beta_flag < 0 ? 1.0 : beta_flag;
            if (!ds.has_factors || ds.S.cols() < 1)
                throw ConfigError("supervised-fe needs a dataset with factor labels");
            cfg.label_dim = ds.S.cols();
            break;
    }
    cfg.validate();
    return cfg;
}

}  // namespace felab::cli
