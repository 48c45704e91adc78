#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "cli_common.hpp"
#include "felab/csv.hpp"
#include "felab/metrics.hpp"
#include "reproduce.hpp"

namespace felab::cli {
namespace {

nlohmann::json load_config_file(const std::string& path) {
    if (path.empty()) return nlohmann::json::object();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file: " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("config file: ") + e.what());
    }
}

// Flag > config file > default.
template <class T>
void merge_opt(CLI::App* cmd, const nlohmann::json& file_cfg, const std::string& name, T& var) {
    const CLI::Option* opt = cmd->get_option("--" + name);
    if (opt->count() == 0 && file_cfg.contains(name)) var = file_cfg.at(name).get<T>();
}

std::vector<double> default_importance(int n_inputs) {
    std::vector<double> imp(n_inputs);
    for (int k = 0; k < n_inputs; ++k)
        imp[k] = std::max(1.0 - 0.2 * std::max(k - 1, 0), 0.2);
    return imp;
}

struct GenDataArgs {
    std::uint64_t seed = 7;
    std::string kind = "nonlinear";
    int n = 10000;
    double noise_std = 0.125;
    int inputs = 5;
    int outputs = 48;
    std::vector<double> importance;
    std::string out;
    std::string config;
};

int cmd_gen_data(CLI::App* cmd, GenDataArgs& a) {
    const nlohmann::json file_cfg = load_config_file(a.config);
    merge_opt(cmd, file_cfg, "seed", a.seed);
    merge_opt(cmd, file_cfg, "kind", a.kind);
    merge_opt(cmd, file_cfg, "n", a.n);
    merge_opt(cmd, file_cfg, "noise-std", a.noise_std);
    merge_opt(cmd, file_cfg, "inputs", a.inputs);
    merge_opt(cmd, file_cfg, "outputs", a.outputs);
    merge_opt(cmd, file_cfg, "importance", a.importance);

    if (a.noise_std < 0.0) throw ConfigError("--noise-std must be >= 0");
    if (a.n < 0) throw ConfigError("--n must be >= 0");
    SystemKind kind;
    if (a.kind == "nonlinear")
        kind = SystemKind::Nonlinear;
    else if (a.kind == "linear")
        kind = SystemKind::Linear;
    else
        throw ConfigError("--kind must be nonlinear or linear");
    if (a.importance.empty()) a.importance = default_importance(a.inputs);

    SystemSpec spec = build_system(a.seed, kind, a.inputs, a.outputs, a.importance, a.noise_std);
    Dataset ds = sample_dataset(spec, a.n, a.seed);

    fs::create_directories(a.out);
    spec.save((fs::path(a.out) / "system.json").string());
    ds.save((fs::path(a.out) / "data.fed").string());

    nlohmann::json eff;
    eff["seed"] = a.seed;
    eff["kind"] = a.kind;
    eff["n"] = a.n;
    eff["noise_std"] = a.noise_std;
    eff["inputs"] = a.inputs;
    eff["outputs"] = a.outputs;
    eff["importance"] = a.importance;
    write_text(fs::path(a.out) / "effective_config.json", eff.dump(2) + "\n");

    std::cout << "spec_digest " << spec.digest() << "\n";
    std::cout << "rows " << ds.n_rows() << "\n";
    return 0;
}

struct TrainArgs {
    std::string data;
    std::string model = "fe";
    int latents = 6;
    double beta = -1.0;
    double xi = 1.0;
    double alpha = 2.0 / 3.0;
    int median = 50;
    double drop_ratio = 0.2;
    std::string patch_rule = "two-step";
    int iters = 20000;
    int batch = 500;
    double lr = 1e-3;
    std::uint64_t seed = 1;
    int dataset_size = -1;
    int eval_rows = 1000;
    int eval_every = 250;
    std::string out;
    std::string config;
};

int cmd_train(CLI::App* cmd, TrainArgs& a) {
    const nlohmann::json file_cfg = load_config_file(a.config);
    merge_opt(cmd, file_cfg, "model", a.model);
    merge_opt(cmd, file_cfg, "latents", a.latents);
    merge_opt(cmd, file_cfg, "beta", a.beta);
    merge_opt(cmd, file_cfg, "xi", a.xi);
    merge_opt(cmd, file_cfg, "alpha", a.alpha);
    merge_opt(cmd, file_cfg, "median", a.median);
    merge_opt(cmd, file_cfg, "drop-ratio", a.drop_ratio);
    merge_opt(cmd, file_cfg, "patch-rule", a.patch_rule);
    merge_opt(cmd, file_cfg, "iters", a.iters);
    merge_opt(cmd, file_cfg, "batch", a.batch);
    merge_opt(cmd, file_cfg, "lr", a.lr);
    merge_opt(cmd, file_cfg, "seed", a.seed);
    merge_opt(cmd, file_cfg, "dataset-size", a.dataset_size);
    merge_opt(cmd, file_cfg, "eval-rows", a.eval_rows);
    merge_opt(cmd, file_cfg, "eval-every", a.eval_every);

    LoadedData data = load_data_arg(a.data);
    ModelConfig mcfg = model_for(parse_model_kind(a.model), data.ds, a.latents, a.beta, a.xi,
                                 a.alpha);
    mcfg.median_dim = a.median;
    mcfg.drop_ratio = a.drop_ratio;
    if (a.patch_rule == "additive")
        mcfg.patch_rule = PatchRule::Additive;
    else if (a.patch_rule == "two-step")
        mcfg.patch_rule = PatchRule::TwoStep;
    else
        throw ConfigError("--patch-rule must be two-step or additive");
    mcfg.validate();

    TrainConfig tcfg;
    tcfg.iterations = a.iters;
    tcfg.batch_size = a.batch;
    tcfg.lr = a.lr;
    tcfg.seed = a.seed;
    tcfg.dataset_size = a.dataset_size;
    tcfg.eval_rows = a.eval_rows;
    tcfg.eval_every = a.eval_every;

    TrainResult result = execute_run(data.ds, data.spec, mcfg, tcfg, a.out, /*with_report=*/false);
    const auto& re = result.history.points.empty() ? std::vector<double>{}
                                                   : result.history.points.back().re;
    std::cout << "iterations " << result.state.iteration << "\n";
    for (std::size_t i = 0; i < re.size(); ++i)
        std::cout << "re_" << i << " " << CsvWriter::num(re[i]) << "\n";
    return 0;
}

struct EvalArgs {
    std::string ckpt;
    std::string data;
    std::string out;
    int eval_rows = -1;  // -1 = the training split's value
    std::string config;
};

int cmd_eval(CLI::App* cmd, EvalArgs& a) {
    const nlohmann::json file_cfg = load_config_file(a.config);
    merge_opt(cmd, file_cfg, "eval-rows", a.eval_rows);

    Checkpoint ck = load_checkpoint(a.ckpt);
    LoadedData data = load_data_arg(a.data);
    if (!ck.state.dataset_digest.empty() && ck.state.dataset_digest != data.ds.spec_digest)
        throw ConfigError("checkpoint was trained on a different dataset (digest mismatch)");

    TrainConfig tcfg;
    if (!ck.state.train_config_json.empty())
        tcfg = TrainConfig::from_json(ck.state.train_config_json);
    if (a.eval_rows > 0) tcfg.eval_rows = a.eval_rows;
    Split sp = make_split(data.ds, tcfg);

    fs::create_directories(a.out);
    ReportInputs in;
    in.params = &ck.state.params;
    in.cfg = &ck.config;
    in.x_eval = &sp.x_eval;
    in.s_eval = sp.y_eval.numel() > 0 ? &sp.y_eval : nullptr;
    in.spec = data.spec.has_value() ? &data.spec.value() : nullptr;
    run_report(a.out, in);
    std::cout << "report written to " << a.out << "\n";
    return 0;
}

struct StabilityArgs {
    std::string ckpt_a;
    std::string ckpt_b;
    std::string data;
    std::string out;
    int eval_rows = -1;
    std::string config;
};

int cmd_stability(CLI::App* cmd, StabilityArgs& a) {
    const nlohmann::json file_cfg = load_config_file(a.config);
    merge_opt(cmd, file_cfg, "eval-rows", a.eval_rows);

    Checkpoint ca = load_checkpoint(a.ckpt_a);
    Checkpoint cb = load_checkpoint(a.ckpt_b);
    if (!(ca.config == cb.config))
        throw ConfigError("checkpoints have different model configurations");
    LoadedData data = load_data_arg(a.data);
    for (const auto& ck : {std::cref(ca), std::cref(cb)})
        if (!ck.get().state.dataset_digest.empty() &&
            ck.get().state.dataset_digest != data.ds.spec_digest)
            throw ConfigError("checkpoint was trained on a different dataset (digest mismatch)");

    TrainConfig tcfg;
    if (!ca.state.train_config_json.empty())
        tcfg = TrainConfig::from_json(ca.state.train_config_json);
    if (a.eval_rows > 0) tcfg.eval_rows = a.eval_rows;
    Split sp = make_split(data.ds, tcfg);

    Tensor la = latent_responses(ca.state.params, ca.config, sp.x_eval);
    Tensor lb = latent_responses(cb.state.params, cb.config, sp.x_eval);
    StabilityResult st = stability_score(la, lb);

    fs::create_directories(a.out);
    write_stability((fs::path(a.out) / "stability.csv").string(), st);
    std::cout << "mean_score " << CsvWriter::num(st.mean) << "\n";
    return 0;
}

}  // namespace
}  // namespace felab::cli

int main(int argc, char** argv) {
    using namespace felab;
    using namespace felab::cli;

    CLI::App app{"full-encoder lab: progressive autoencoder experiments on synthetic systems"};
    app.require_subcommand(1);

    GenDataArgs gen;
    CLI::App* cmd_gen = app.add_subcommand("gen-data", "generate a synthetic system + dataset");
    cmd_gen->add_option("--seed", gen.seed, "generator seed");
    cmd_gen->add_option("--kind", gen.kind, "nonlinear|linear");
    cmd_gen->add_option("--n", gen.n, "number of samples");
    cmd_gen->add_option("--noise-std", gen.noise_std, "observation noise std");
    cmd_gen->add_option("--inputs", gen.inputs, "generative factor count");
    cmd_gen->add_option("--outputs", gen.outputs, "observable count");
    cmd_gen->add_option("--importance", gen.importance, "per-factor importance weights");
    cmd_gen->add_option("--out", gen.out, "output directory")->required();
    cmd_gen->add_option("--config", gen.config, "JSON config file (flags win)");

    TrainArgs tr;
    CLI::App* cmd_tr = app.add_subcommand("train", "train a model on a dataset");
    cmd_tr->add_option("--data", tr.data, "dataset directory or .fed file")->required();
    cmd_tr->add_option("--model", tr.model, "fe|vae|beta-vae|beta-fe|supervised-fe");
    cmd_tr->add_option("--latents", tr.latents, "encoder latent columns");
    cmd_tr->add_option("--beta", tr.beta, "KL weight (beta models default to 4)");
    cmd_tr->add_option("--xi", tr.xi, "loss weight scale");
    cmd_tr->add_option("--alpha", tr.alpha, "geometric common ratio");
    cmd_tr->add_option("--median", tr.median, "median code dimension");
    cmd_tr->add_option("--drop-ratio", tr.drop_ratio, "input dropout ratio");
    cmd_tr->add_option("--patch-rule", tr.patch_rule, "two-step|additive");
    cmd_tr->add_option("--iters", tr.iters, "training iterations");
    cmd_tr->add_option("--batch", tr.batch, "batch size");
    cmd_tr->add_option("--lr", tr.lr, "learning rate");
    cmd_tr->add_option("--seed", tr.seed, "run seed");
    cmd_tr->add_option("--dataset-size", tr.dataset_size, "training rows (-1 = all minus eval)");
    cmd_tr->add_option("--eval-rows", tr.eval_rows, "held-out rows at the end of the dataset");
    cmd_tr->add_option("--eval-every", tr.eval_every, "history cadence");
    cmd_tr->add_option("--out", tr.out, "output directory")->required();
    cmd_tr->add_option("--config", tr.config, "JSON config file (flags win)");

    EvalArgs ev;
    CLI::App* cmd_ev = app.add_subcommand("eval", "evaluate a checkpoint");
    cmd_ev->add_option("--ckpt", ev.ckpt, "checkpoint file")->required();
    cmd_ev->add_option("--data", ev.data, "dataset directory or .fed file")->required();
    cmd_ev->add_option("--out", ev.out, "output directory")->required();
    cmd_ev->add_option("--eval-rows", ev.eval_rows, "held-out rows");
    cmd_ev->add_option("--config", ev.config, "JSON config file (flags win)");

    StabilityArgs stb;
    CLI::App* cmd_st = app.add_subcommand("stability", "compare two runs' representations");
    cmd_st->add_option("--ckpt-a", stb.ckpt_a, "first checkpoint")->required();
    cmd_st->add_option("--ckpt-b", stb.ckpt_b, "second checkpoint")->required();
    cmd_st->add_option("--data", stb.data, "dataset directory or .fed file")->required();
    cmd_st->add_option("--out", stb.out, "output directory")->required();
    cmd_st->add_option("--eval-rows", stb.eval_rows, "held-out rows");
    cmd_st->add_option("--config", stb.config, "JSON config file (flags win)");

    ReproduceOptions rep;
    CLI::App* cmd_rep = app.add_subcommand("reproduce", "run the full experiment grid");
    cmd_rep->add_option("--out", rep.out_dir, "output directory")->required();
    cmd_rep->add_option("--scale", rep.scale, "desk|paper");
    cmd_rep->add_option("--seed", rep.seed, "master seed");
    cmd_rep->add_option("--jobs", rep.jobs, "parallel runs (0 = auto)");

    PcaCheckOptions pca;
    CLI::App* cmd_pca = app.add_subcommand("pca-check", "linear model vs PCA oracle");
    cmd_pca->add_option("--seed", pca.seed, "system seed");
    cmd_pca->add_option("--latents", pca.latents, "ranks to compare");
    cmd_pca->add_option("--iters", pca.iterations, "training iterations");
    cmd_pca->add_option("--out", pca.out_dir, "output directory")->required();

    try {
        app.parse(argc, argv);
        if (cmd_gen->parsed()) return cmd_gen_data(cmd_gen, gen);
        if (cmd_tr->parsed()) return cmd_train(cmd_tr, tr);
        if (cmd_ev->parsed()) return cmd_eval(cmd_ev, ev);
        if (cmd_st->parsed()) return cmd_stability(cmd_st, stb);
        if (cmd_rep->parsed()) {
            run_reproduce(rep);
            return 0;
        }
        if (cmd_pca->parsed()) {
            run_pca_check(pca);
            return 0;
        }
        return 2;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
}
