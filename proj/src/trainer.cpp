#include "felab/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "felab/csv.hpp"
#include "felab/errors.hpp"

namespace felab {

void TrainConfig::validate(int available_rows) const {
    if (iterations < 0) throw ConfigError("train: iterations must be >= 0");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (lr <= 0.0) throw ConfigError("train: lr must be positive");
    if (eval_every < 1) throw ConfigError("train: eval_every must be >= 1");
    if (eval_rows < 1) throw ConfigError("train: eval_rows must be >= 1");
    if (available_rows <= eval_rows)
        throw ConfigError("train: dataset too small for the eval split");
    const int train_rows =
        dataset_size > 0 ? std::min(dataset_size, available_rows - eval_rows)
                         : available_rows - eval_rows;
    if (train_rows < 1) throw ConfigError("train: no training rows left");
    if (batch_size > train_rows)
        throw ConfigError("train: batch_size exceeds available training rows");
}

std::string TrainConfig::to_json() const {
    nlohmann::json j;
    j["iterations"] = iterations;
    j["batch_size"] = batch_size;
    j["lr"] = lr;
    j["dataset_size"] = dataset_size;
    j["eval_rows"] = eval_rows;
    j["seed"] = seed;
    j["eval_every"] = eval_every;
    return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
    TrainConfig c;
    try {
        nlohmann::json j = nlohmann::json::parse(text);
        c.iterations = j.at("iterations").get<int>();
        c.batch_size = j.at("batch_size").get<int>();
        c.lr = j.at("lr").get<double>();
        c.dataset_size = j.at("dataset_size").get<int>();
        c.eval_rows = j.at("eval_rows").get<int>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.eval_every = j.at("eval_every").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("train config json: ") + e.what());
    }
    return c;
}

void TrainHistory::save_csv(const std::string& path) const {
    CsvWriter csv(path);
    std::vector<std::string> header{"iteration"};
    const std::size_t levels = points.empty() ? 0 : points.front().re.size();
    for (std::size_t i = 0; i < levels; ++i) header.push_back("re_" + std::to_string(i));
    header.insert(header.end(), {"kl", "loss_encoder", "loss_decoder"});
    csv.row(header);
    for (const EvalPoint& p : points) {
        std::vector<std::string> row{std::to_string(p.iteration)};
        for (double v : p.re) row.push_back(CsvWriter::num(v));
        row.push_back(CsvWriter::num(p.kl));
        row.push_back(CsvWriter::num(p.loss_encoder));
        row.push_back(CsvWriter::num(p.loss_decoder));
        csv.row(row);
    }
}

TrainState init_train_state(const ModelConfig& cfg, std::uint64_t seed, double lr,
                            const std::string& dataset_digest) {
    TrainState st;
    Rng init_rng(derive_seed(seed, 0x1a17));
    st.params = FEParams::init(cfg, init_rng);
    for (auto& g : st.params.groups(cfg)) {
        std::vector<AdamState> states;
        for (Tensor* t : g.tensors) states.push_back(AdamState::for_tensor(*t, lr));
        st.opt.push_back(std::move(states));
    }
    st.rng = TrainerRng::from_seed(seed);
    st.dataset_digest = dataset_digest;
    return st;
}

std::vector<std::size_t> make_batch_indices(std::size_t train_rows, int batch_size, Rng& rng) {
    if (train_rows == 0) throw ConfigError("make_batch_indices: empty dataset");
    std::vector<std::size_t> idx(batch_size);
    for (auto& i : idx) i = rng.uniform_index(train_rows);
    return idx;
}

namespace {

Tensor gather_rows(const Tensor& m, const std::vector<std::size_t>& idx) {
    Tensor out({static_cast<int>(idx.size()), m.cols()});
    for (std::size_t r = 0; r < idx.size(); ++r)
        for (int c = 0; c < m.cols(); ++c)
            out.at(static_cast<int>(r), c) = m.at(static_cast<int>(idx[r]), c);
    return out;
}

// Group-name -> loss-node routing for one step.
std::vector<int> loss_per_group(const std::vector<FEParams::Group>& groups, const LossNodes& L) {
    std::vector<int> loss_ids;
    for (const auto& g : groups) {
        if (g.name == "encoder0")
            loss_ids.push_back(L.encoder0);
        else if (g.name == "encoder")
            loss_ids.push_back(L.encoder);
        else if (g.name == "nn0")
            loss_ids.push_back(L.nn0);
        else if (g.name == "decoder")
            loss_ids.push_back(L.decoder);
        else
            loss_ids.push_back(L.nni.at(std::stoul(g.name.substr(2)) - 1));
    }
    return loss_ids;
}

}  // namespace

StepRecord train_step(TrainState& state, const ModelConfig& cfg, const Tensor& xb,
                      const Tensor* yb, double lr) {
    (void)lr;  // lr lives in the Adam states
    Tape tape;
    ForwardOutputs out = forward_full(tape, state.params, cfg, xb, yb, /*training=*/true,
                                      &state.rng.dropout, &state.rng.eps);
    LossNodes L = compute_losses(tape, out, cfg);

    auto groups = state.params.groups(cfg);
    const std::vector<int> loss_ids = loss_per_group(groups, L);

    StepRecord rec;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const double lv = tape.scalar(loss_ids[g]);
        if (!std::isfinite(lv)) {
            std::string msg = "non-finite loss at iteration " + std::to_string(state.iteration);
            for (std::size_t k = 0; k < groups.size(); ++k)
                msg += " " + groups[k].name + "=" + std::to_string(tape.scalar(loss_ids[k]));
            throw NumericError(msg);
        }
        rec.names.push_back(groups[g].name);
        rec.losses.push_back(lv);
    }

    // All gradients are taken at the pre-update parameters; Adam runs after
    // every backward so group updates are simultaneous.
    for (auto& g : groups)
        for (Tensor* t : g.tensors) t->zero_grad();
    for (std::size_t g = 0; g < groups.size(); ++g)
        tape.backward(loss_ids[g], std::span<Tensor* const>(groups[g].tensors));
    for (std::size_t g = 0; g < groups.size(); ++g)
        for (std::size_t t = 0; t < groups[g].tensors.size(); ++t)
            adam_step(*groups[g].tensors[t], state.opt[g][t]);

    state.iteration += 1;
    return rec;
}

EvalPoint evaluate_model(FEParams& params, const ModelConfig& cfg, const Tensor& x_eval,
                         const Tensor* y_eval, int iteration) {
    Tape tape;
    ForwardOutputs out =
        forward_full(tape, params, cfg, x_eval, y_eval, /*training=*/false, nullptr, nullptr);
    LossNodes L = compute_losses(tape, out, cfg);
    EvalPoint p;
    p.iteration = iteration;
    for (int id : L.recon_mse) p.re.push_back(tape.scalar(id));
    p.kl = L.kl >= 0 ? tape.scalar(L.kl) : 0.0;
    p.loss_encoder = tape.scalar(L.encoder);
    p.loss_decoder = tape.scalar(L.decoder);
    return p;
}

Split make_split(const Dataset& data, const TrainConfig& tcfg) {
    tcfg.validate(data.n_rows());
    Split sp;
    const int n = data.n_rows();
    sp.train_rows = tcfg.dataset_size > 0 ? std::min(tcfg.dataset_size, n - tcfg.eval_rows)
                                          : n - tcfg.eval_rows;
    const int e0 = n - tcfg.eval_rows;
    sp.x_eval = Tensor({tcfg.eval_rows, data.n_outputs()});
    for (int r = 0; r < tcfg.eval_rows; ++r)
        for (int c = 0; c < data.n_outputs(); ++c) sp.x_eval.at(r, c) = data.X.at(e0 + r, c);
    if (data.has_factors && data.S.cols() > 0) {
        sp.y_eval = Tensor({tcfg.eval_rows, data.S.cols()});
        for (int r = 0; r < tcfg.eval_rows; ++r)
            for (int c = 0; c < data.S.cols(); ++c) sp.y_eval.at(r, c) = data.S.at(e0 + r, c);
    }
    return sp;
}

namespace {

TrainResult run_loop(TrainState state, const Dataset& data, const ModelConfig& cfg,
                     const TrainConfig& tcfg) {
    cfg.validate();
    if (cfg.supervised && (!data.has_factors || data.S.cols() != cfg.label_dim))
        throw ConfigError("train: supervised model needs factor labels of width label_dim");

    Split sp = make_split(data, tcfg);
    const Tensor* y_eval = sp.y_eval.numel() > 0 ? &sp.y_eval : nullptr;

    TrainResult result{std::move(state), {}};
    result.state.train_config_json = tcfg.to_json();
    for (auto& group_states : result.state.opt)
        for (auto& s : group_states) s.lr = tcfg.lr;
    while (result.state.iteration < tcfg.iterations) {
        auto idx = make_batch_indices(static_cast<std::size_t>(sp.train_rows), tcfg.batch_size,
                                      result.state.rng.batch);
        Tensor xb = gather_rows(data.X, idx);
        Tensor yb;
        const Tensor* ybp = nullptr;
        if (cfg.supervised) {
            yb = gather_rows(data.S, idx);
            ybp = &yb;
        }
        train_step(result.state, cfg, xb, ybp, tcfg.lr);
        if (result.state.iteration % tcfg.eval_every == 0 ||
            result.state.iteration == tcfg.iterations) {
            result.history.points.push_back(evaluate_model(result.state.params, cfg, sp.x_eval,
                                                           y_eval, result.state.iteration));
        }
    }
    if (!tcfg.checkpoint_path.empty())
        save_checkpoint(tcfg.checkpoint_path, result.state, cfg);
    return result;
}

}  // namespace

TrainResult train_run(const Dataset& data, const ModelConfig& cfg, const TrainConfig& tcfg) {
    TrainState st = init_train_state(cfg, tcfg.seed, tcfg.lr, data.spec_digest);
    return run_loop(std::move(st), data, cfg, tcfg);
}

TrainResult resume_run(TrainState state, const Dataset& data, const ModelConfig& cfg,
                       const TrainConfig& tcfg) {
    return run_loop(std::move(state), data, cfg, tcfg);
}

}  // namespace felab
