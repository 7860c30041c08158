#pragma once

#include <string>

#include <json.hpp>

#include "embedkit/encoder.hpp"

namespace embedkit {

// Checkpoint files carry a one-line JSON manifest (schema version, encoder
// config, ordered tensor descriptors with name/shape/offset) followed by the
// binary32 little-endian payloads in manifest order.
constexpr int kCheckpointSchema = 1;

struct Checkpoint {
    EncoderConfig config;
    NamedTensors tensors;
    bool frozen = false;
};

nlohmann::json encoder_config_json(const EncoderConfig& cfg);
EncoderConfig encoder_config_from_json(const nlohmann::json& j);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);  // dense files only

// Reads either a dense or a quantized checkpoint; quantized tensors are
// expanded to their dequantized values.
Checkpoint load_any_checkpoint(const std::string& path);
std::string checkpoint_format(const std::string& path);  // "dense" | "quantized"

// payload helpers shared with the quantized writer
void append_f32(std::string& payload, const std::vector<double>& values);
std::vector<double> read_f32(const std::string& payload, std::size_t offset, std::size_t count);

}  // namespace embedkit
