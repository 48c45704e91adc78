#pragma once

#include <optional>
#include <string>
#include <vector>

#include "felab/nn.hpp"
#include "felab/tape.hpp"

namespace felab {

enum class PatchRule { Additive, TwoStep };

// Everything that defines a model variant. The same structure degenerates to
// a plain VAE (baseline_vae), beta-VAE (baseline_vae + beta>1), beta-FE
// (beta>1), supervised FE (supervised) and linear FE (linear_activation).
struct ModelConfig {
    int n_latents = 6;       // encoder latent columns z_1..z_n
    bool supervised = false;
    int label_dim = 0;       // width of the label block, used when supervised
    int n_outputs = 48;
    int median_dim = 50;
    int encoder_hidden = 64;
    int nn_hidden = 32;
    int decoder_hidden = 64;
    double drop_ratio = 0.2;
    double xi = 1.0;
    double alpha = 2.0 / 3.0;
    double beta = 1.0;
    PatchRule patch_rule = PatchRule::TwoStep;
    bool baseline_vae = false;
    bool linear_activation = false;
    bool teacher_forcing = false;

    void validate() const;
    int z0_dim() const { return supervised ? label_dim : 1; }
    // Number of reconstruction levels produced by one forward pass.
    int levels() const { return baseline_vae ? 1 : n_latents + 1; }
    // Latent response column count used for MI/stability analyses.
    int latent_cols() const { return baseline_vae ? n_latents : z0_dim() + n_latents; }

    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
    bool operator==(const ModelConfig&) const = default;
};

// Multiplier xi*(1-alpha^i)/(1-alpha) + 1 applied to the level-i
// reconstruction term; level 0 gets exactly 1 (empty series).
double weight_multiplier(int i, double xi, double alpha);

// Trainable parameters, partitioned into the per-loss update groups.
struct FEParams {
    Mlp encoder0;
    Mlp encoder;
    Mlp nn0;
    std::vector<Mlp> nn;  // nn[i-1] is the patcher net for latent i
    Mlp decoder;

    static FEParams init(const ModelConfig& cfg, Rng& rng);

    struct Group {
        std::string name;
        std::vector<Tensor*> tensors;
    };
    std::vector<Group> groups(const ModelConfig& cfg);
    std::vector<Tensor*> all(const ModelConfig& cfg);
    void zero_grads(const ModelConfig& cfg);
};

// Node ids of one forward pass. With baseline_vae only x, mu, sigma, z and a
// single x_hat level are populated.
struct ForwardOutputs {
    int x = -1;
    int y = -1;
    int z0 = -1;             // first latent block (== y_hat when supervised)
    int y_hat = -1;
    int mu0 = -1, sigma0 = -1;
    int mu = -1, sigma = -1;
    int z = -1;
    Tensor eps0, eps;        // the noise actually injected (zeros in eval mode)
    std::vector<int> p1, p2; // patcher ids per level 1..n
    std::vector<int> m;      // median codes m_0..m_n
    std::vector<int> x_hat;  // reconstruction levels
};

struct LossNodes {
    int encoder0 = -1;
    int encoder = -1;
    int nn0 = -1;
    std::vector<int> nni;
    int decoder = -1;
    int kl = -1;                 // total encoder KL, for reporting
    std::vector<int> recon_mse;  // per-level plain MSE terms
};

// Builds the forward graph for one batch. In training mode dropout masks and
// reparameterization noise come from the two rngs; in eval mode dropout is
// the identity and z == mu. `y` is required for supervised training
// (teacher forcing feeds it to the patch stack instead of y_hat).
ForwardOutputs forward_full(Tape& tape, FEParams& params, const ModelConfig& cfg,
                            const Tensor& x, const Tensor* y, bool training,
                            Rng* drop_rng, Rng* eps_rng);

LossNodes compute_losses(Tape& tape, const ForwardOutputs& out, const ModelConfig& cfg);

int patch(Tape& tape, int m_prev, int p1, int p2, PatchRule rule);

}  // namespace felab
