#include "felab/dataset.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "felab/errors.hpp"

namespace felab {

namespace {

constexpr char kMagic[9] = "FEDATA01";

void write_u32_le(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32_le(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw IoError("dataset file truncated while reading header length");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f64_block(std::ostream& out, const std::vector<double>& v) {
    for (double d : v) {
        std::uint64_t bits;
        std::memcpy(&bits, &d, 8);
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
        out.write(reinterpret_cast<const char*>(b), 8);
    }
}

void read_f64_block(std::istream& in, std::vector<double>& v) {
    for (double& d : v) {
        unsigned char b[8];
        in.read(reinterpret_cast<char*>(b), 8);
        if (!in) throw IoError("dataset file truncated while reading data block");
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        std::memcpy(&d, &bits, 8);
    }
}

}  // namespace

void Dataset::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);

    nlohmann::json header;
    header["n"] = n_rows();
    header["n_inputs"] = S.cols();
    header["n_outputs"] = n_outputs();
    header["seed"] = sample_seed;
    header["noise_std"] = noise_std;
    header["spec_digest"] = spec_digest;
    header["kind"] = kind;
    header["has_factors"] = has_factors;
    const std::string htext = header.dump();

    out.write(kMagic, 8);
    write_u32_le(out, static_cast<std::uint32_t>(htext.size()));
    out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    write_f64_block(out, S.values);
    write_f64_block(out, X.values);
    if (!out) throw IoError("write failed: " + path);
}

Dataset Dataset::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);

    char magic[8];
    in.read(magic, 8);
    if (!in) throw IoError("dataset file truncated while reading magic");
    if (std::memcmp(magic, kMagic, 8) != 0)
        throw FormatError("not a dataset file (bad magic): " + path);

    const std::uint32_t hlen = read_u32_le(in);
    std::string htext(hlen, '\0');
    in.read(htext.data(), hlen);
    if (!in) throw IoError("dataset file truncated while reading header");

    Dataset ds;
    int n = 0, n_in = 0, n_out = 0;
    try {
        nlohmann::json header = nlohmann::json::parse(htext);
        n = header.at("n").get<int>();
        n_in = header.at("n_inputs").get<int>();
        n_out = header.at("n_outputs").get<int>();
        ds.sample_seed = header.at("seed").get<std::uint64_t>();
        ds.noise_std = header.at("noise_std").get<double>();
        ds.spec_digest = header.at("spec_digest").get<std::string>();
        ds.kind = header.at("kind").get<std::string>();
        ds.has_factors = header.value("has_factors", true);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("dataset header: ") + e.what());
    }
    if (n < 0 || n_in < 0 || n_out < 1) throw FormatError("dataset header: bad dimensions");

    ds.S = Tensor({n, n_in});
    ds.X = Tensor({n, n_out});
    read_f64_block(in, ds.S.values);
    read_f64_block(in, ds.X.values);
    return ds;
}

Dataset sample_dataset(const SystemSpec& spec, int n, std::uint64_t seed) {
    if (n < 0) throw ConfigError("sample_dataset: n must be >= 0");
    spec.validate();
    Dataset ds;
    ds.S = Tensor({n, spec.n_inputs});
    ds.X = Tensor({n, spec.n_outputs});
    ds.spec_digest = spec.digest();
    ds.kind = spec.kind == SystemKind::Nonlinear ? "nonlinear" : "linear";
    ds.noise_std = spec.noise_std;
    ds.sample_seed = seed;

    Rng rng(derive_seed(seed, 0xda7a));
    std::vector<double> s(spec.n_inputs);
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < spec.n_inputs; ++k) {
            s[k] = rng.truncated_normal(2.0);
            ds.S.at(i, k) = s[k];
        }
        std::vector<double> x = evaluate(spec, s, /*with_noise=*/true, &rng);
        for (int j = 0; j < spec.n_outputs; ++j) ds.X.at(i, j) = x[j];
    }
    return ds;
}

}  // namespace felab
