#include <fstream>
#include <sstream>

#include "binary_io.hpp"
#include "maescale/error.hpp"
#include "maescale/mae.hpp"
#include <json.hpp>

namespace maescale {

using nlohmann::ordered_json;

namespace {

constexpr const char* kCheckpointFormat = "maescale-checkpoint";

ordered_json config_to_json(const MaeModelConfig& c) {
    return {{"patch_size", c.patch_size},   {"embed_dim", c.embed_dim},
            {"depth", c.depth},             {"heads", c.heads},
            {"decoder_dim", c.decoder_dim}, {"decoder_depth", c.decoder_depth},
            {"image_side", c.image_side},   {"channels", c.channels}};
}

MaeModelConfig config_from_json(const ordered_json& j) {
    MaeModelConfig c;
    c.patch_size = j.at("patch_size").get<int>();
    c.embed_dim = j.at("embed_dim").get<int>();
    c.depth = j.at("depth").get<int>();
    c.heads = j.at("heads").get<int>();
    c.decoder_dim = j.at("decoder_dim").get<int>();
    c.decoder_depth = j.at("decoder_depth").get<int>();
    c.image_side = j.at("image_side").get<int>();
    c.channels = j.at("channels").get<int>();
    return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const MaeModelConfig& config,
                     const ParameterStore& params) {
    if (params.size() != parameter_count(config)) {
        throw DomainError("parameter store does not match the model config");
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    ordered_json header;
    header["format"] = kCheckpointFormat;
    header["version"] = 1;
    header["config"] = config_to_json(config);
    header["param_count"] = params.size();
    header["seed"] = params.seed();
    out << header.dump() << '\n';
    write_f64_le(out, params.values());
    if (!out) throw IoError("short write to checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read checkpoint " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty checkpoint " + path.string());

    Checkpoint ckpt;
    std::size_t count = 0;
    std::uint64_t seed = 0;
    try {
        const auto header = ordered_json::parse(line);
        if (header.at("format").get<std::string>() != kCheckpointFormat) {
            throw IoError("not a checkpoint: " + path.string());
        }
        ckpt.config = config_from_json(header.at("config"));
        count = header.at("param_count").get<std::size_t>();
        seed = header.at("seed").get<std::uint64_t>();
    } catch (const ordered_json::exception& e) {
        throw IoError("malformed checkpoint header in " + path.string() + ": " + e.what());
    }
    ckpt.params = ParameterStore(ParameterLayout::for_model(ckpt.config), seed);
    if (ckpt.params.size() != count) {
        throw IoError("checkpoint parameter count " + std::to_string(count) +
                      " disagrees with its config");
    }
    if (!read_f64_le(in, ckpt.params.values())) {
        throw IoError("checkpoint " + path.string() + " is truncated");
    }
    return ckpt;
}

void save_loss_trace(const std::filesystem::path& path, std::span<const double> trace) {
    std::ostringstream csv;
    csv.precision(17);
    csv << "epoch,mean_loss\n";
    for (std::size_t e = 0; e < trace.size(); ++e) csv << e << ',' << trace[e] << '\n';
    write_text_file(path, csv.str());
}

}  // namespace maescale
