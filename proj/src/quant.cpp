#include "embedkit/quant.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "embedkit/errors.hpp"

namespace embedkit {

using json = nlohmann::json;

QuantKind parse_quant_kind(const std::string& s) {
    if (s == "int4-block" || s == "int4_per_block") return QuantKind::int4_per_block;
    if (s == "int8-block" || s == "int8_per_block") return QuantKind::int8_per_block;
    if (s == "mixed" || s == "mixed_per_channel") return QuantKind::mixed_per_channel;
    throw ConfigError("unknown quantization scheme \"" + s + "\" (expected int4-block|int8-block|mixed)");
}

std::string quant_kind_name(QuantKind k) {
    switch (k) {
        case QuantKind::int4_per_block: return "int4_per_block";
        case QuantKind::int8_per_block: return "int8_per_block";
        case QuantKind::mixed_per_channel: return "mixed_per_channel";
    }
    return "int8_per_block";
}

void QuantScheme::validate() const {
    if (block_size < 1) throw ConfigError("quant scheme: block_size must be >= 1");
}

LayerClass classify_tensor(const std::string& name) {
    if (name.find(".gain") != std::string::npos) return LayerClass::norm;
    if (name == "embed.table") return LayerClass::embedding;
    if (name.find(".attn.") != std::string::npos || name.rfind("pool.", 0) == 0) return LayerClass::attention;
    if (name.find(".ffn.") != std::string::npos) return LayerClass::feedforward;
    if (name.rfind("proj.", 0) == 0) return LayerClass::projection;
    throw ConfigError("quantization: tensor \"" + name + "\" has no layer-class mapping");
}

std::optional<TensorQuantSpec> resolve_quant_spec(const std::string& name, const QuantScheme& scheme) {
    scheme.validate();
    const LayerClass cls = classify_tensor(name);
    if (cls == LayerClass::norm) return std::nullopt;

    TensorQuantSpec spec;
    switch (scheme.kind) {
        case QuantKind::int4_per_block:
        case QuantKind::int8_per_block:
            spec.bits = scheme.kind == QuantKind::int4_per_block ? 4 : 8;
            spec.per_block = true;
            spec.block_size = scheme.block_size;
            return spec;
        case QuantKind::mixed_per_channel:
            spec.per_block = false;
            // attention stays at 8 bits; embedding, feedforward and projection drop to 4
            spec.bits = cls == LayerClass::attention ? 8 : 4;
            spec.channel_axis = cls == LayerClass::embedding ? 0 : 1;
            return spec;
    }
    return std::nullopt;
}

int qmax_for_bits(int bits) {
    if (bits == 4) return 7;
    if (bits == 8) return 127;
    throw std::invalid_argument("quantize: bits must be 4 or 8");
}

void quantize_group(const double* values, const std::size_t* idx, std::size_t count, int bits,
                    std::int8_t* codes_out, float* scale_out) {
    const int qmax = qmax_for_bits(bits);
    double max_abs = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        const double a = std::fabs(values[idx[i]]);
        if (a > max_abs) max_abs = a;
    }
    if (max_abs == 0.0) {
        for (std::size_t i = 0; i < count; ++i) codes_out[i] = 0;
        *scale_out = 0.0f;
        return;
    }
    // Scale lives in binary32 in every representation, so codes are derived
    // from the rounded scale; round-half-even keeps codes reproducible.
    const float scale = static_cast<float>(max_abs / static_cast<double>(qmax));
    const double s = static_cast<double>(scale);
    for (std::size_t i = 0; i < count; ++i) {
        double c = std::nearbyint(values[idx[i]] / s);
        if (c > qmax) c = qmax;
        if (c < -qmax) c = -qmax;
        codes_out[i] = static_cast<std::int8_t>(c);
    }
    *scale_out = scale;
}

std::vector<double> dequantize_group(const std::vector<std::int8_t>& codes, float scale) {
    std::vector<double> out(codes.size());
    const double s = static_cast<double>(scale);
    for (std::size_t i = 0; i < codes.size(); ++i) out[i] = static_cast<double>(codes[i]) * s;
    return out;
}

namespace {

// Index groups for a tensor under a spec: flattened blocks, rows, or strided
// columns. Group order is fixed, so codes/scales layouts are reproducible.
std::vector<std::vector<std::size_t>> group_indices(const Tensor& t, const TensorQuantSpec& spec) {
    std::vector<std::vector<std::size_t>> groups;
    const std::size_t n = t.numel();
    if (spec.per_block) {
        const std::size_t bs = static_cast<std::size_t>(spec.block_size);
        for (std::size_t start = 0; start < n; start += bs) {
            const std::size_t end = std::min(n, start + bs);
            std::vector<std::size_t> g(end - start);
            for (std::size_t i = start; i < end; ++i) g[i - start] = i;
            groups.push_back(std::move(g));
        }
    } else {
        const int rows = t.rows(), cols = t.cols();
        if (spec.channel_axis == 0) {
            for (int r = 0; r < rows; ++r) {
                std::vector<std::size_t> g(static_cast<std::size_t>(cols));
                for (int c = 0; c < cols; ++c) g[static_cast<std::size_t>(c)] = static_cast<std::size_t>(r) * cols + c;
                groups.push_back(std::move(g));
            }
        } else {
            for (int c = 0; c < cols; ++c) {
                std::vector<std::size_t> g(static_cast<std::size_t>(rows));
                for (int r = 0; r < rows; ++r) g[static_cast<std::size_t>(r)] = static_cast<std::size_t>(r) * cols + c;
                groups.push_back(std::move(g));
            }
        }
    }
    return groups;
}

std::string pack_codes(const std::vector<std::int8_t>& codes, int bits) {
    std::string out;
    if (bits == 8) {
        out.resize(codes.size());
        std::memcpy(out.data(), codes.data(), codes.size());
        return out;
    }
    // two 4-bit codes per byte, little end first
    out.resize((codes.size() + 1) / 2, '\0');
    for (std::size_t i = 0; i < codes.size(); ++i) {
        const unsigned nibble = static_cast<unsigned>(codes[i]) & 0xFu;
        if (i % 2 == 0) {
            out[i / 2] = static_cast<char>(nibble);
        } else {
            out[i / 2] = static_cast<char>(static_cast<unsigned char>(out[i / 2]) | (nibble << 4));
        }
    }
    return out;
}

std::vector<std::int8_t> unpack_codes(const std::string& payload, std::size_t offset, std::size_t count, int bits) {
    std::vector<std::int8_t> codes(count);
    if (bits == 8) {
        if (offset + count > payload.size()) throw ConfigError("quantized payload truncated");
        std::memcpy(codes.data(), payload.data() + offset, count);
        return codes;
    }
    const std::size_t bytes = (count + 1) / 2;
    if (offset + bytes > payload.size()) throw ConfigError("quantized payload truncated");
    for (std::size_t i = 0; i < count; ++i) {
        const unsigned char b = static_cast<unsigned char>(payload[offset + i / 2]);
        unsigned v = (i % 2 == 0) ? (b & 0xFu) : (b >> 4);
        int c = static_cast<int>(v);
        if (c & 0x8) c -= 16;
        codes[i] = static_cast<std::int8_t>(c);
    }
    return codes;
}

std::size_t packed_code_bytes(std::size_t count, int bits) {
    return bits == 8 ? count : (count + 1) / 2;
}

}  // namespace

QuantizedTensor quantize_tensor(const Tensor& t, const TensorQuantSpec& spec) {
    QuantizedTensor q;
    q.shape = t.shape;
    q.spec = spec;
    q.codes.assign(t.numel(), 0);
    const auto groups = group_indices(t, spec);
    q.scales.resize(groups.size());
    std::vector<std::int8_t> group_codes;
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        const auto& idx = groups[gi];
        group_codes.assign(idx.size(), 0);
        quantize_group(t.data.data(), idx.data(), idx.size(), spec.bits, group_codes.data(), &q.scales[gi]);
        for (std::size_t i = 0; i < idx.size(); ++i) q.codes[idx[i]] = group_codes[i];
    }
    return q;
}

Tensor dequantize_tensor(const QuantizedTensor& q) {
    Tensor t(q.shape, std::vector<double>(q.codes.size(), 0.0));
    const auto groups = group_indices(t, q.spec);
    if (groups.size() != q.scales.size()) throw ConfigError("quantized tensor: scale count mismatch");
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        const double s = static_cast<double>(q.scales[gi]);
        for (std::size_t i : groups[gi]) t.data[i] = static_cast<double>(q.codes[i]) * s;
    }
    return t;
}

Tensor fake_quant(const std::string& name, const Tensor& t, const QuantScheme& scheme) {
    const auto spec = resolve_quant_spec(name, scheme);
    if (!spec) return t;
    return dequantize_tensor(quantize_tensor(t, *spec));
}

QuantizedCheckpoint apply_quant_scheme(const Checkpoint& ckpt, const QuantScheme& scheme) {
    scheme.validate();
    validate_params(ckpt.config, ckpt.tensors);
    QuantizedCheckpoint out;
    out.config = ckpt.config;
    out.frozen = ckpt.frozen;
    out.scheme = scheme;
    for (const auto& [name, t] : ckpt.tensors) {
        const auto spec = resolve_quant_spec(name, scheme);
        if (!spec) {
            out.fp_tensors.emplace(name, t);
        } else {
            out.qtensors.emplace(name, quantize_tensor(t, *spec));
        }
    }
    return out;
}

Checkpoint dequantize_checkpoint(const QuantizedCheckpoint& q) {
    Checkpoint out;
    out.config = q.config;
    out.frozen = q.frozen;
    for (const auto& [name, t] : q.fp_tensors) out.tensors.emplace(name, t);
    for (const auto& [name, qt] : q.qtensors) out.tensors.emplace(name, dequantize_tensor(qt));
    validate_params(out.config, out.tensors);
    return out;
}

void save_quantized_checkpoint(const QuantizedCheckpoint& q, const std::string& path) {
    json manifest;
    manifest["schema"] = kCheckpointSchema;
    manifest["format"] = "quantized";
    manifest["frozen"] = q.frozen;
    manifest["config"] = encoder_config_json(q.config);
    manifest["scheme"] = {{"kind", quant_kind_name(q.scheme.kind)}, {"block_size", q.scheme.block_size}};

    json descriptors = json::array();
    std::string payload;
    for (const auto& [name, qt] : q.qtensors) {
        json d;
        d["name"] = name;
        d["shape"] = qt.shape;
        d["offset"] = payload.size();
        json qj;
        qj["bits"] = qt.spec.bits;
        qj["granularity"] = qt.spec.per_block ? "per_block" : "per_channel";
        if (qt.spec.per_block) {
            qj["block_size"] = qt.spec.block_size;
        } else {
            qj["channel_axis"] = qt.spec.channel_axis;
        }
        qj["n_scales"] = qt.scales.size();
        d["quant"] = std::move(qj);
        descriptors.push_back(std::move(d));
        payload += pack_codes(qt.codes, qt.spec.bits);
        for (float s : qt.scales) {
            char bytes[4];
            std::memcpy(bytes, &s, 4);
            payload.append(bytes, 4);
        }
    }
    for (const auto& [name, t] : q.fp_tensors) {
        json d;
        d["name"] = name;
        d["shape"] = t.shape;
        d["offset"] = payload.size();
        d["quant"] = nullptr;
        descriptors.push_back(std::move(d));
        append_f32(payload, t.data);
    }
    manifest["tensors"] = std::move(descriptors);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write quantized checkpoint: " + path);
    out << manifest.dump() << "\n";
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw ConfigError("failed writing quantized checkpoint payload: " + path);
}

QuantizedCheckpoint load_quantized_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open checkpoint: " + path);
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::size_t nl = all.find('\n');
    if (nl == std::string::npos) throw ConfigError("checkpoint has no payload: " + path);
    json manifest;
    try {
        manifest = json::parse(all.substr(0, nl));
    } catch (const json::parse_error& e) {
        throw ConfigError("checkpoint manifest is not valid JSON (" + path + "): " + e.what());
    }
    if (manifest.value("format", "") != "quantized") throw ConfigError("expected a quantized checkpoint: " + path);
    const std::string payload = all.substr(nl + 1);

    QuantizedCheckpoint out;
    out.config = encoder_config_from_json(manifest.at("config"));
    out.frozen = manifest.value("frozen", false);
    out.scheme.kind = parse_quant_kind(manifest.at("scheme").at("kind").get<std::string>());
    out.scheme.block_size = manifest.at("scheme").at("block_size").get<int>();

    for (const auto& d : manifest.at("tensors")) {
        const std::string name = d.at("name").get<std::string>();
        const std::vector<int> shape = d.at("shape").get<std::vector<int>>();
        std::size_t count = 1;
        for (int s : shape) count *= static_cast<std::size_t>(s);
        const std::size_t offset = d.at("offset").get<std::size_t>();
        if (d.at("quant").is_null()) {
            out.fp_tensors.emplace(name, Tensor(shape, read_f32(payload, offset, count)));
            continue;
        }
        QuantizedTensor qt;
        qt.shape = shape;
        qt.spec.bits = d.at("quant").at("bits").get<int>();
        qt.spec.per_block = d.at("quant").at("granularity").get<std::string>() == "per_block";
        if (qt.spec.per_block) {
            qt.spec.block_size = d.at("quant").at("block_size").get<int>();
        } else {
            qt.spec.channel_axis = d.at("quant").at("channel_axis").get<int>();
        }
        const std::size_t n_scales = d.at("quant").at("n_scales").get<std::size_t>();
        qt.codes = unpack_codes(payload, offset, count, qt.spec.bits);
        const std::size_t scale_off = offset + packed_code_bytes(count, qt.spec.bits);
        if (scale_off + n_scales * 4 > payload.size()) throw ConfigError("quantized payload truncated");
        qt.scales.resize(n_scales);
        std::memcpy(qt.scales.data(), payload.data() + scale_off, n_scales * 4);
        out.qtensors.emplace(name, std::move(qt));
    }
    return out;
}

}  // namespace embedkit
