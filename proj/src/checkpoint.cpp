#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "felab/errors.hpp"
#include "felab/trainer.hpp"

namespace felab {

namespace {

constexpr char kMagic[9] = "FECKPT01";

void write_u32_le(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32_le(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw IoError("checkpoint truncated while reading header length");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_block(std::ostream& out, const std::vector<double>& v) {
    for (double d : v) {
        std::uint64_t bits;
        std::memcpy(&bits, &d, 8);
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
        out.write(reinterpret_cast<const char*>(b), 8);
    }
}

void read_block(std::istream& in, std::vector<double>& v) {
    for (double& d : v) {
        unsigned char b[8];
        in.read(reinterpret_cast<char*>(b), 8);
        if (!in) throw IoError("checkpoint truncated while reading tensor block");
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        std::memcpy(&d, &bits, 8);
    }
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainState& state, const ModelConfig& cfg) {
    // const_cast: groups() only aggregates pointers, it does not mutate.
    auto& mutable_state = const_cast<TrainState&>(state);
    auto groups = mutable_state.params.groups(cfg);

    nlohmann::json manifest = nlohmann::json::array();
    for (std::size_t g = 0; g < groups.size(); ++g) {
        for (std::size_t t = 0; t < groups[g].tensors.size(); ++t) {
            const Tensor* tensor = groups[g].tensors[t];
            manifest.push_back({{"name", groups[g].name + "." + std::to_string(t)},
                                {"group", groups[g].name},
                                {"shape", tensor->shape},
                                {"adam_t", state.opt.at(g).at(t).t}});
        }
    }

    nlohmann::json header;
    header["model_config"] = nlohmann::json::parse(cfg.to_json());
    header["iteration"] = state.iteration;
    header["dataset_digest"] = state.dataset_digest;
    header["train_config"] = state.train_config_json.empty()
                                 ? nlohmann::json::object()
                                 : nlohmann::json::parse(state.train_config_json);
    header["rng"] = {{"batch", state.rng.batch.serialize()},
                     {"dropout", state.rng.dropout.serialize()},
                     {"eps", state.rng.eps.serialize()}};
    header["tensors"] = std::move(manifest);
    const std::string htext = header.dump();

    // Atomic write: temp file in the same directory, then rename.
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot open for writing: " + tmp);
        out.write(kMagic, 8);
        write_u32_le(out, static_cast<std::uint32_t>(htext.size()));
        out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
        for (std::size_t g = 0; g < groups.size(); ++g) {
            for (std::size_t t = 0; t < groups[g].tensors.size(); ++t) {
                write_block(out, groups[g].tensors[t]->values);
                write_block(out, state.opt.at(g).at(t).m);
                write_block(out, state.opt.at(g).at(t).v);
            }
        }
        if (!out) throw IoError("write failed: " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move checkpoint into place: " + path + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in) throw IoError("checkpoint truncated while reading magic");
    if (std::memcmp(magic, kMagic, 8) != 0)
        throw FormatError("not a checkpoint file (bad magic): " + path);

    const std::uint32_t hlen = read_u32_le(in);
    std::string htext(hlen, '\0');
    in.read(htext.data(), hlen);
    if (!in) throw IoError("checkpoint truncated while reading header");

    Checkpoint ck;
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(htext);
        ck.config = ModelConfig::from_json(header.at("model_config").dump());
        ck.state.iteration = header.at("iteration").get<int>();
        ck.state.dataset_digest = header.at("dataset_digest").get<std::string>();
        if (header.contains("train_config") && !header["train_config"].empty())
            ck.state.train_config_json = header["train_config"].dump();
        ck.state.rng.batch.deserialize(header.at("rng").at("batch").get<std::string>());
        ck.state.rng.dropout.deserialize(header.at("rng").at("dropout").get<std::string>());
        ck.state.rng.eps.deserialize(header.at("rng").at("eps").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint header: ") + e.what());
    }

    // Rebuild the parameter skeleton, then overwrite from the blocks. The
    // manifest order is the same deterministic group order used for saving.
    Rng dummy(0);
    ck.state.params = FEParams::init(ck.config, dummy);
    auto groups = ck.state.params.groups(ck.config);

    const auto& manifest = header.at("tensors");
    std::size_t entry = 0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        std::vector<AdamState> states;
        for (std::size_t t = 0; t < groups[g].tensors.size(); ++t, ++entry) {
            if (entry >= manifest.size()) throw FormatError("checkpoint manifest too short");
            const auto& item = manifest[entry];
            Tensor* tensor = groups[g].tensors[t];
            const auto shape = item.at("shape").get<std::vector<int>>();
            if (shape != tensor->shape)
                throw FormatError("checkpoint tensor shape mismatch for " +
                                  item.at("name").get<std::string>());
            AdamState st = AdamState::for_tensor(*tensor, 1e-3);
            st.t = item.at("adam_t").get<long>();
            read_block(in, tensor->values);
            read_block(in, st.m);
            read_block(in, st.v);
            states.push_back(std::move(st));
        }
        ck.state.opt.push_back(std::move(states));
    }
    if (entry != manifest.size()) throw FormatError("checkpoint manifest too long");
    return ck;
}

}  // namespace felab
