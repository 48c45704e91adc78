#include "felab/model.hpp"

#include <json.hpp>

#include "felab/errors.hpp"

namespace felab {

void ModelConfig::validate() const {
    if (n_latents < 1) throw ConfigError("model: n_latents must be >= 1");
    if (median_dim <= n_latents)
        throw ConfigError("model: median_dim must be greater than n_latents");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("model: alpha must be in (0,1)");
    if (xi < 0.0) throw ConfigError("model: xi must be >= 0");
    if (beta < 1.0) throw ConfigError("model: beta must be >= 1");
    if (drop_ratio < 0.0 || drop_ratio >= 1.0)
        throw ConfigError("model: drop_ratio must be in [0,1)");
    if (n_outputs < 1) throw ConfigError("model: n_outputs must be >= 1");
    if (supervised && label_dim < 1)
        throw ConfigError("model: supervised mode needs label_dim >= 1");
    if (encoder_hidden < 1 || nn_hidden < 1 || decoder_hidden < 1)
        throw ConfigError("model: hidden sizes must be >= 1");
}

std::string ModelConfig::to_json() const {
    nlohmann::json j;
    j["n_latents"] = n_latents;
    j["supervised"] = supervised;
    j["label_dim"] = label_dim;
    j["n_outputs"] = n_outputs;
    j["median_dim"] = median_dim;
    j["encoder_hidden"] = encoder_hidden;
    j["nn_hidden"] = nn_hidden;
    j["decoder_hidden"] = decoder_hidden;
    j["drop_ratio"] = drop_ratio;
    j["xi"] = xi;
    j["alpha"] = alpha;
    j["beta"] = beta;
    j["patch_rule"] = patch_rule == PatchRule::TwoStep ? "two-step" : "additive";
    j["baseline_vae"] = baseline_vae;
    j["linear_activation"] = linear_activation;
    j["teacher_forcing"] = teacher_forcing;
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    ModelConfig c;
    try {
        nlohmann::json j = nlohmann::json::parse(text);
        c.n_latents = j.at("n_latents").get<int>();
        c.supervised = j.at("supervised").get<bool>();
        c.label_dim = j.at("label_dim").get<int>();
        c.n_outputs = j.at("n_outputs").get<int>();
        c.median_dim = j.at("median_dim").get<int>();
        c.encoder_hidden = j.at("encoder_hidden").get<int>();
        c.nn_hidden = j.at("nn_hidden").get<int>();
        c.decoder_hidden = j.at("decoder_hidden").get<int>();
        c.drop_ratio = j.at("drop_ratio").get<double>();
        c.xi = j.at("xi").get<double>();
        c.alpha = j.at("alpha").get<double>();
        c.beta = j.at("beta").get<double>();
        c.patch_rule =
            j.at("patch_rule").get<std::string>() == "additive" ? PatchRule::Additive
                                                                : PatchRule::TwoStep;
        c.baseline_vae = j.at("baseline_vae").get<bool>();
        c.linear_activation = j.at("linear_activation").get<bool>();
        c.teacher_forcing = j.at("teacher_forcing").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("model config json: ") + e.what());
    }
    c.validate();
    return c;
}

double weight_multiplier(int i, double xi, double alpha) {
    if (i < 0) throw ConfigError("weight_multiplier: level must be >= 0");
    if (alpha == 1.0) throw ConfigError("weight_multiplier: alpha == 1 divides by zero");
    return xi * (1.0 - std::pow(alpha, static_cast<double>(i))) / (1.0 - alpha) + 1.0;
}

FEParams FEParams::init(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    const Activation act = cfg.linear_activation ? Activation::Identity : Activation::Selu;
    FEParams p;
    p.encoder =
        Mlp::make({cfg.n_outputs, cfg.encoder_hidden, cfg.encoder_hidden, 2 * cfg.n_latents},
                  act, rng);
    if (cfg.baseline_vae) {
        p.decoder = Mlp::make(
            {cfg.n_latents, cfg.decoder_hidden, cfg.decoder_hidden, cfg.n_outputs}, act, rng);
        return p;
    }
    const int enc0_out = cfg.supervised ? cfg.label_dim : 2;
    p.encoder0 = Mlp::make({cfg.n_outputs, cfg.encoder_hidden, cfg.encoder_hidden, enc0_out},
                           act, rng);
    p.nn0 = Mlp::make({cfg.z0_dim(), cfg.nn_hidden, cfg.nn_hidden, cfg.median_dim}, act, rng);
    for (int i = 1; i <= cfg.n_latents; ++i)
        p.nn.push_back(Mlp::make({1, cfg.nn_hidden, cfg.nn_hidden, 2 * cfg.median_dim}, act, rng));
    p.decoder = Mlp::make({cfg.median_dim, cfg.decoder_hidden, cfg.decoder_hidden, cfg.n_outputs},
                          act, rng);
    return p;
}

std::vector<FEParams::Group> FEParams::groups(const ModelConfig& cfg) {
    std::vector<Group> gs;
    if (!cfg.baseline_vae) {
        Group g0{"encoder0", {}};
        encoder0.collect(g0.tensors);
        gs.push_back(std::move(g0));
    }
    Group ge{"encoder", {}};
    encoder.collect(ge.tensors);
    gs.push_back(std::move(ge));
    if (!cfg.baseline_vae) {
        Group gn0{"nn0", {}};
        nn0.collect(gn0.tensors);
        gs.push_back(std::move(gn0));
        for (std::size_t i = 0; i < nn.size(); ++i) {
            Group gi{"nn" + std::to_string(i + 1), {}};
            nn[i].collect(gi.tensors);
            gs.push_back(std::move(gi));
        }
    }
    Group gd{"decoder", {}};
    decoder.collect(gd.tensors);
    gs.push_back(std::move(gd));
    return gs;
}

std::vector<Tensor*> FEParams::all(const ModelConfig& cfg) {
    std::vector<Tensor*> out;
    for (auto& g : groups(cfg))
        for (Tensor* t : g.tensors) out.push_back(t);
    return out;
}

void FEParams::zero_grads(const ModelConfig& cfg) {
    for (Tensor* t : all(cfg)) t->zero_grad();
}

int patch(Tape& tape, int m_prev, int p1, int p2, PatchRule rule) {
    if (rule == PatchRule::Additive) return tape.add(p1, m_prev);
    return tape.add(p1, tape.mul(p2, m_prev));
}

namespace {

Tensor noise_like(int rows, int cols, bool training, Rng* eps_rng) {
    Tensor eps({rows, cols});
    if (training) {
        if (eps_rng == nullptr)
            throw ConfigError("forward: training mode needs a reparameterization rng");
        for (double& v : eps.values) v = eps_rng->normal();
    }
    return eps;
}

}  // namespace

ForwardOutputs forward_full(Tape& tape, FEParams& params, const ModelConfig& cfg,
                            const Tensor& x, const Tensor* y, bool training, Rng* drop_rng,
                            Rng* eps_rng) {
    cfg.validate();
    if (x.cols() != cfg.n_outputs) throw ShapeError("forward: batch width != n_outputs");
    const int B = x.rows();
    const int n = cfg.n_latents;

    ForwardOutputs out;
    out.x = tape.constant(x);
    if (y != nullptr) {
        if (y->rows() != B) throw ShapeError("forward: label batch size mismatch");
        out.y = tape.constant(*y);
    }
    if (cfg.supervised && training && out.y < 0)
        throw ConfigError("forward: supervised training requires labels");

    // Encoder: dropout -> hidden stack -> (mu, log sigma).
    int xin_enc = tape.dropout(out.x, cfg.drop_ratio, training, drop_rng);
    int enc_head = params.encoder.forward(tape, xin_enc);
    out.mu = tape.slice_cols(enc_head, 0, n);
    out.sigma = tape.exp_clamp(tape.slice_cols(enc_head, n, 2 * n), -6.0, 3.0);
    out.eps = noise_like(B, n, training, eps_rng);
    out.z = tape.add(out.mu, tape.mul(out.sigma, tape.constant(out.eps)));

    if (cfg.baseline_vae) {
        out.x_hat.push_back(params.decoder.forward(tape, out.z));
        return out;
    }

    // Encoder0: the first latent block, supervised label head or a one-column
    // variational latent.
    int xin_enc0 = tape.dropout(out.x, cfg.drop_ratio, training, drop_rng);
    int enc0_head = params.encoder0.forward(tape, xin_enc0);
    if (cfg.supervised) {
        out.y_hat = enc0_head;
        out.z0 = out.y_hat;
    } else {
        out.mu0 = tape.slice_cols(enc0_head, 0, 1);
        out.sigma0 = tape.exp_clamp(tape.slice_cols(enc0_head, 1, 2), -6.0, 3.0);
        out.eps0 = noise_like(B, 1, training, eps_rng);
        out.z0 = tape.add(out.mu0, tape.mul(out.sigma0, tape.constant(out.eps0)));
    }

    // Progressive patching: m_0 from the first latent block, then one
    // adder/multiplier patch per remaining latent.
    int nn0_in = out.z0;
    if (cfg.supervised && cfg.teacher_forcing && training) nn0_in = out.y;
    out.m.push_back(params.nn0.forward(tape, nn0_in));
    for (int i = 1; i <= n; ++i) {
        int zi = tape.slice_cols(out.z, i - 1, i);
        int head = params.nn[i - 1].forward(tape, zi);
        int p1 = tape.slice_cols(head, 0, cfg.median_dim);
        // +1 makes a freshly initialized multiplier patch start near identity.
        int p2 = tape.add_scalar(tape.slice_cols(head, cfg.median_dim, 2 * cfg.median_dim), 1.0);
        out.p1.push_back(p1);
        out.p2.push_back(p2);
        out.m.push_back(patch(tape, out.m.back(), p1, p2, cfg.patch_rule));
    }
    for (int i = 0; i <= n; ++i) out.x_hat.push_back(params.decoder.forward(tape, out.m[i]));
    return out;
}

LossNodes compute_losses(Tape& tape, const ForwardOutputs& out, const ModelConfig& cfg) {
    LossNodes L;
    const int n = cfg.n_latents;

    if (cfg.baseline_vae) {
        int rec = tape.mse(out.x, out.x_hat[0]);
        L.recon_mse.push_back(rec);
        L.kl = tape.gaussian_kl(out.mu, out.sigma);
        L.encoder = tape.add(rec, tape.scale(L.kl, cfg.beta / n));
        L.decoder = rec;
        return L;
    }

    for (int i = 0; i <= n; ++i) L.recon_mse.push_back(tape.mse(out.x, out.x_hat[i]));

    if (cfg.supervised) {
        if (out.y < 0) throw ConfigError("losses: supervised mode requires labels");
        L.encoder0 = tape.mse(out.y, out.y_hat);
    } else {
        int kl0 = tape.gaussian_kl(out.mu0, out.sigma0);
        L.encoder0 = tape.add(L.recon_mse[0], tape.scale(kl0, cfg.beta));
    }

    // Encoder loss: geometrically weighted reconstruction terms for levels
    // 1..n plus the KL pull toward the prior, averaged over the n latents.
    int rl = -1;
    for (int i = 1; i <= n; ++i) {
        int term = tape.scale(L.recon_mse[i], weight_multiplier(i, cfg.xi, cfg.alpha));
        rl = rl < 0 ? term : tape.add(rl, term);
    }
    L.kl = tape.gaussian_kl(out.mu, out.sigma);
    L.encoder = tape.add(rl, tape.scale(L.kl, cfg.beta / n));

    L.nn0 = L.recon_mse[0];
    for (int i = 1; i <= n; ++i) L.nni.push_back(L.recon_mse[i]);

    int dec = -1;
    for (int i = 0; i <= n; ++i) {
        int term = tape.scale(L.recon_mse[i], weight_multiplier(i, cfg.xi, cfg.alpha));
        dec = dec < 0 ? term : tape.add(dec, term);
    }
    L.decoder = dec;
    return L;
}

}  // namespace felab
