#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "felab/dataset.hpp"
#include "felab/model.hpp"
#include "felab/optimizer.hpp"

namespace felab {

struct TrainConfig {
    int iterations = 20000;
    int batch_size = 500;
    double lr = 1e-3;
    int dataset_size = -1;   // training rows; -1 = all rows minus the eval split
    int eval_rows = 1000;    // held-out rows taken from the end of the dataset
    std::uint64_t seed = 1;
    int eval_every = 250;
    std::string checkpoint_path;  // empty = don't write one

    void validate(int available_rows) const;
    std::string to_json() const;
    static TrainConfig from_json(const std::string& text);
};

struct EvalPoint {
    int iteration = 0;
    std::vector<double> re;  // per-level reconstruction error on held-out rows
    double kl = 0.0;
    double loss_encoder = 0.0;
    double loss_decoder = 0.0;
};

struct TrainHistory {
    std::vector<EvalPoint> points;
    void save_csv(const std::string& path) const;
};

// The RNG streams that make a run reproducible and resumable.
struct TrainerRng {
    Rng batch;
    Rng dropout;
    Rng eps;

    static TrainerRng from_seed(std::uint64_t seed) {
        TrainerRng r;
        r.batch = Rng(derive_seed(seed, 0xba7c4));
        r.dropout = Rng(derive_seed(seed, 0xd309));
        r.eps = Rng(derive_seed(seed, 0xe95));
        return r;
    }
};

struct TrainState {
    FEParams params;
    std::vector<std::vector<AdamState>> opt;  // aligned with FEParams::groups
    TrainerRng rng;
    int iteration = 0;
    std::string dataset_digest;
    std::string train_config_json;  // provenance, carried through checkpoints
};

struct StepRecord {
    std::vector<double> losses;       // one value per parameter group
    std::vector<std::string> names;   // group names, aligned with losses
};

TrainState init_train_state(const ModelConfig& cfg, std::uint64_t seed, double lr,
                            const std::string& dataset_digest = "");

// Uniform sampling with replacement; one call consumes batch_size draws from
// the batch rng stream.
std::vector<std::size_t> make_batch_indices(std::size_t train_rows, int batch_size, Rng& rng);

// One optimization step: forward, one restricted backward per parameter
// group, then a simultaneous Adam step per group. Throws NumericError with
// diagnostics when any loss goes non-finite.
StepRecord train_step(TrainState& state, const ModelConfig& cfg, const Tensor& xb,
                      const Tensor* yb, double lr);

struct TrainResult {
    TrainState state;
    TrainHistory history;
};

TrainResult train_run(const Dataset& data, const ModelConfig& cfg, const TrainConfig& tcfg);

// Continues a loaded state; behaves exactly like the tail of an uninterrupted
// run with the same configs.
TrainResult resume_run(TrainState state, const Dataset& data, const ModelConfig& cfg,
                       const TrainConfig& tcfg);

// Held-out evaluation pass: dropout off, z = mu.
EvalPoint evaluate_model(FEParams& params, const ModelConfig& cfg, const Tensor& x_eval,
                         const Tensor* y_eval, int iteration);

// Splits a dataset per TrainConfig: [0, train_rows) for batches, the last
// eval_rows rows for evaluation.
struct Split {
    int train_rows = 0;
    Tensor x_eval;
    Tensor y_eval;
};
Split make_split(const Dataset& data, const TrainConfig& tcfg);

// Checkpoints: magic "FECKPT01", JSON header (model config, iteration, rng
// streams, dataset digest, tensor manifest), then f64 blocks for every
// parameter and its Adam moments.
void save_checkpoint(const std::string& path, const TrainState& state, const ModelConfig& cfg);

struct Checkpoint {
    TrainState state;
    ModelConfig config;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace felab
