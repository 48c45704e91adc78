#include "felab/system.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "felab/errors.hpp"

namespace felab {

namespace {

const char* fn_name(BasisFn f) {
    switch (f) {
        case BasisFn::Sin: return "sin";
        case BasisFn::Tanh: return "tanh";
        case BasisFn::Cubic: return "cubic";
        case BasisFn::GaussBump: return "gauss_bump";
        case BasisFn::Linear: return "linear";
    }
    return "?";
}

BasisFn fn_from_name(const std::string& s) {
    if (s == "sin") return BasisFn::Sin;
    if (s == "tanh") return BasisFn::Tanh;
    if (s == "cubic") return BasisFn::Cubic;
    if (s == "gauss_bump") return BasisFn::GaussBump;
    if (s == "linear") return BasisFn::Linear;
    throw FormatError("unknown basis function name: " + s);
}

double apply_fn(BasisFn f, double t) {
    switch (f) {
        case BasisFn::Sin: return std::sin(t);
        case BasisFn::Tanh: return std::tanh(t);
        case BasisFn::Cubic: return t * t * t / 3.0;
        case BasisFn::GaussBump: return 1.5 * std::exp(-t * t);
        case BasisFn::Linear: return t;
    }
    return 0.0;
}

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

}  // namespace

void SystemSpec::validate() const {
    if (n_inputs < 1 || n_outputs < 1)
        throw ConfigError("system: n_inputs and n_outputs must be >= 1");
    if (static_cast<int>(importance.size()) != n_inputs)
        throw ConfigError("system: importance length must equal n_inputs");
    for (double w : importance)
        if (!(w > 0.0 && w <= 1.0)) throw ConfigError("system: importance values must be in (0,1]");
    if (n_inputs >= 2 && importance[0] != importance[1])
        throw ConfigError("system: importance[0] and importance[1] must be equal");
    for (std::size_t i = 2; i < importance.size(); ++i)
        if (importance[i] > importance[i - 1])
            throw ConfigError("system: importance must be nonincreasing");
    if (noise_std < 0.0) throw ConfigError("system: noise_std must be >= 0");
    if (static_cast<int>(basis.size()) != n_outputs)
        throw ConfigError("system: basis row count must equal n_outputs");
    for (const auto& row : basis) {
        if (static_cast<int>(row.size()) != n_inputs)
            throw ConfigError("system: every output needs one basis term per factor");
        for (const auto& term : row)
            if (term.factor < 0 || term.factor >= n_inputs)
                throw ConfigError("system: basis term factor index out of range");
    }
}

std::string SystemSpec::to_json() const {
    nlohmann::json j;
    j["kind"] = kind == SystemKind::Nonlinear ? "nonlinear" : "linear";
    j["n_inputs"] = n_inputs;
    j["n_outputs"] = n_outputs;
    j["importance"] = importance;
    j["noise_std"] = noise_std;
    j["seed"] = seed;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : basis) {
        nlohmann::json terms = nlohmann::json::array();
        for (const auto& t : row) {
            terms.push_back({{"factor", t.factor},
                             {"fn", fn_name(t.fn)},
                             {"amplitude", t.amplitude},
                             {"frequency", t.frequency},
                             {"phase", t.phase}});
        }
        rows.push_back(std::move(terms));
    }
    j["basis"] = std::move(rows);
    return j.dump(2);
}

SystemSpec SystemSpec::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("system json: ") + e.what());
    }
    SystemSpec spec;
    try {
        std::string kind = j.at("kind").get<std::string>();
        if (kind == "nonlinear")
            spec.kind = SystemKind::Nonlinear;
        else if (kind == "linear")
            spec.kind = SystemKind::Linear;
        else
            throw FormatError("system json: unknown kind " + kind);
        spec.n_inputs = j.at("n_inputs").get<int>();
        spec.n_outputs = j.at("n_outputs").get<int>();
        spec.importance = j.at("importance").get<std::vector<double>>();
        spec.noise_std = j.at("noise_std").get<double>();
        spec.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& row : j.at("basis")) {
            std::vector<BasisTerm> terms;
            for (const auto& t : row) {
                BasisTerm term;
                term.factor = t.at("factor").get<int>();
                term.fn = fn_from_name(t.at("fn").get<std::string>());
                term.amplitude = t.at("amplitude").get<double>();
                term.frequency = t.at("frequency").get<double>();
                term.phase = t.at("phase").get<double>();
                terms.push_back(term);
            }
            spec.basis.push_back(std::move(terms));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("system json: ") + e.what());
    }
    spec.validate();
    return spec;
}

std::string SystemSpec::digest() const { return hex64(fnv1a64(to_json())); }

void SystemSpec::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << to_json() << "\n";
    if (!out) throw IoError("write failed: " + path);
}

SystemSpec SystemSpec::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json(text);
}

SystemSpec build_system(std::uint64_t seed, SystemKind kind, int n_inputs, int n_outputs,
                        const std::vector<double>& importance, double noise_std) {
    SystemSpec spec;
    spec.kind = kind;
    spec.n_inputs = n_inputs;
    spec.n_outputs = n_outputs;
    spec.importance = importance;
    spec.noise_std = noise_std;
    spec.seed = seed;
    spec.basis.resize(n_outputs);

    Rng rng(derive_seed(seed, 0xb0d1));
    for (int j = 0; j < n_outputs; ++j) {
        spec.basis[j].resize(n_inputs);
        for (int k = 0; k < n_inputs; ++k) {
            if (static_cast<int>(importance.size()) != n_inputs)
                throw ConfigError("system: importance length must equal n_inputs");
            const double imp = importance[k];
            BasisTerm& t = spec.basis[j][k];
            t.factor = k;
            if (kind == SystemKind::Linear) {
                t.fn = BasisFn::Linear;
                t.amplitude = imp * rng.normal();
                t.frequency = 1.0;
                t.phase = 0.0;
            } else {
                switch (rng.uniform_index(4)) {
                    case 0: t.fn = BasisFn::Sin; break;
                    case 1: t.fn = BasisFn::Tanh; break;
                    case 2: t.fn = BasisFn::Cubic; break;
                    default: t.fn = BasisFn::GaussBump; break;
                }
                const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
                t.amplitude = sign * imp * rng.uniform(0.5, 1.5);
                // Lower importance also reduces how nonlinear the response is.
                t.frequency = (0.5 + imp) * rng.uniform(0.6, 1.8);
                t.phase = rng.uniform(0.0, 6.283185307179586);
            }
        }
    }
    spec.validate();

    // Rescale amplitudes so the mean noiseless output variance is 1. Keeps
    // reconstruction errors comparable across seeds and system kinds.
    Rng probe_rng(derive_seed(seed, 0x9a0b));
    const int probe_n = 2048;
    std::vector<double> s(n_inputs);
    std::vector<double> sum(n_outputs, 0.0), sumsq(n_outputs, 0.0);
    for (int i = 0; i < probe_n; ++i) {
        for (int k = 0; k < n_inputs; ++k) s[k] = probe_rng.truncated_normal(2.0);
        std::vector<double> x = evaluate(spec, s);
        for (int j = 0; j < n_outputs; ++j) {
            sum[j] += x[j];
            sumsq[j] += x[j] * x[j];
        }
    }
    double mean_var = 0.0;
    for (int j = 0; j < n_outputs; ++j) {
        double mean = sum[j] / probe_n;
        mean_var += sumsq[j] / probe_n - mean * mean;
    }
    mean_var /= n_outputs;
    if (mean_var > 0.0) {
        const double scale = 1.0 / std::sqrt(mean_var);
        for (auto& row : spec.basis)
            for (auto& term : row) term.amplitude *= scale;
    }
    return spec;
}

std::vector<double> evaluate(const SystemSpec& spec, const std::vector<double>& s,
                             bool with_noise, Rng* rng) {
    if (static_cast<int>(s.size()) != spec.n_inputs)
        throw ShapeError("evaluate: factor vector has wrong length");
    std::vector<double> out(spec.n_outputs, 0.0);
    for (int j = 0; j < spec.n_outputs; ++j) {
        double acc = 0.0;
        for (const BasisTerm& t : spec.basis[j]) {
            const double imp = spec.importance[t.factor];
            acc += t.amplitude * apply_fn(t.fn, t.frequency * imp * s[t.factor] + t.phase);
        }
        out[j] = acc;
    }
    if (with_noise && spec.noise_std > 0.0) {
        if (rng == nullptr) throw ConfigError("evaluate: noise requested without an rng");
        for (double& v : out) v += rng->normal(0.0, spec.noise_std);
    }
    return out;
}

Tensor traversal_curves(const SystemSpec& spec, int factor_idx, const std::vector<double>& grid) {
    if (factor_idx < 0 || factor_idx >= spec.n_inputs)
        throw ConfigError("traversal_curves: factor index out of range");
    Tensor out({static_cast<int>(grid.size()), spec.n_outputs});
    std::vector<double> s(spec.n_inputs, 0.0);
    for (std::size_t g = 0; g < grid.size(); ++g) {
        s.assign(spec.n_inputs, 0.0);
        s[factor_idx] = grid[g];
        std::vector<double> x = evaluate(spec, s);
        for (int j = 0; j < spec.n_outputs; ++j) out.at(static_cast<int>(g), j) = x[j];
    }
    return out;
}

std::vector<double> traversal_grid(double lo, double hi, int points) {
    if (points < 1) throw ConfigError("traversal_grid: need at least one point");
    std::vector<double> g(points);
    if (points == 1) {
        g[0] = lo;
        return g;
    }
    for (int i = 0; i < points; ++i)
        g[i] = lo + (hi - lo) * static_cast<double>(i) / (points - 1);
    return g;
}

}  // namespace felab
