#include "embedkit/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "embedkit/errors.hpp"
#include "embedkit/quant.hpp"

namespace embedkit {

using json = nlohmann::json;

namespace {

json manifest_of(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open checkpoint: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("checkpoint has no manifest line: " + path);
    try {
        return json::parse(line);
    } catch (const json::parse_error& e) {
        throw ConfigError("checkpoint manifest is not valid JSON (" + path + "): " + e.what());
    }
}

std::string read_payload(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::size_t nl = all.find('\n');
    if (nl == std::string::npos) throw ConfigError("checkpoint has no payload: " + path);
    return all.substr(nl + 1);
}

}  // namespace

void append_f32(std::string& payload, const std::vector<double>& values) {
    for (double v : values) {
        const float f = static_cast<float>(v);
        char bytes[4];
        std::memcpy(bytes, &f, 4);
        payload.append(bytes, 4);
    }
}

std::vector<double> read_f32(const std::string& payload, std::size_t offset, std::size_t count) {
    if (offset + count * 4 > payload.size()) throw ConfigError("checkpoint payload is truncated");
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        float f;
        std::memcpy(&f, payload.data() + offset + i * 4, 4);
        out[i] = static_cast<double>(f);
    }
    return out;
}

json encoder_config_json(const EncoderConfig& cfg) {
    json j;
    j["n_layers"] = cfg.n_layers;
    j["d_model"] = cfg.d_model;
    j["n_heads"] = cfg.n_heads;
    j["d_ffn"] = cfg.d_ffn;
    j["d_intermediate"] = cfg.d_intermediate;
    j["d_out"] = cfg.d_out;
    j["vocab_size"] = cfg.vocab_size;
    j["max_seq_len"] = cfg.max_seq_len;
    j["pooling"] = pooling_name(cfg.pooling);
    j["mrl_dims"] = cfg.mrl_dims;
    return j;
}

EncoderConfig encoder_config_from_json(const json& j) {
    EncoderConfig cfg;
    if (j.contains("n_layers")) cfg.n_layers = j.at("n_layers").get<int>();
    if (j.contains("d_model")) cfg.d_model = j.at("d_model").get<int>();
    if (j.contains("n_heads")) cfg.n_heads = j.at("n_heads").get<int>();
    if (j.contains("d_ffn")) cfg.d_ffn = j.at("d_ffn").get<int>();
    if (j.contains("d_intermediate")) cfg.d_intermediate = j.at("d_intermediate").get<int>();
    if (j.contains("d_out")) cfg.d_out = j.at("d_out").get<int>();
    if (j.contains("vocab_size")) cfg.vocab_size = j.at("vocab_size").get<int>();
    if (j.contains("max_seq_len")) cfg.max_seq_len = j.at("max_seq_len").get<int>();
    if (j.contains("pooling")) cfg.pooling = parse_pooling(j.at("pooling").get<std::string>());
    if (j.contains("mrl_dims")) cfg.mrl_dims = j.at("mrl_dims").get<std::vector<int>>();
    cfg.validate();
    return cfg;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    validate_params(ckpt.config, ckpt.tensors);
    json manifest;
    manifest["schema"] = kCheckpointSchema;
    manifest["format"] = "dense";
    manifest["frozen"] = ckpt.frozen;
    manifest["config"] = encoder_config_json(ckpt.config);

    json descriptors = json::array();
    std::string payload;
    for (const auto& [name, t] : ckpt.tensors) {
        json d;
        d["name"] = name;
        d["shape"] = t.shape;
        d["offset"] = payload.size();
        descriptors.push_back(std::move(d));
        append_f32(payload, t.data);
    }
    manifest["tensors"] = std::move(descriptors);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write checkpoint: " + path);
    out << manifest.dump() << "\n";
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw ConfigError("failed writing checkpoint payload: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    const json manifest = manifest_of(path);
    if (manifest.value("format", "dense") != "dense") {
        throw ConfigError("expected a dense checkpoint: " + path);
    }
    if (manifest.value("schema", 0) != kCheckpointSchema) {
        throw ConfigError("unsupported checkpoint schema in " + path);
    }
    Checkpoint ckpt;
    ckpt.config = encoder_config_from_json(manifest.at("config"));
    ckpt.frozen = manifest.value("frozen", false);

    const std::string payload = read_payload(path);
    for (const auto& d : manifest.at("tensors")) {
        const std::string name = d.at("name").get<std::string>();
        const std::vector<int> shape = d.at("shape").get<std::vector<int>>();
        std::size_t count = 1;
        for (int s : shape) count *= static_cast<std::size_t>(s);
        const std::size_t offset = d.at("offset").get<std::size_t>();
        ckpt.tensors.emplace(name, Tensor(shape, read_f32(payload, offset, count)));
    }
    validate_params(ckpt.config, ckpt.tensors);
    return ckpt;
}

std::string checkpoint_format(const std::string& path) {
    return manifest_of(path).value("format", "dense");
}

Checkpoint load_any_checkpoint(const std::string& path) {
    if (checkpoint_format(path) == "quantized") {
        return dequantize_checkpoint(load_quantized_checkpoint(path));
    }
    return load_checkpoint(path);
}

}  // namespace embedkit
