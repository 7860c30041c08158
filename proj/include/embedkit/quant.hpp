#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "embedkit/checkpoint.hpp"
#include "embedkit/tensor.hpp"

namespace embedkit {

enum class QuantKind { int4_per_block, int8_per_block, mixed_per_channel };

QuantKind parse_quant_kind(const std::string& s);
std::string quant_kind_name(QuantKind k);

struct QuantScheme {
    QuantKind kind = QuantKind::int8_per_block;
    int block_size = 32;

    void validate() const;
};

enum class LayerClass { embedding, attention, feedforward, projection, norm };
LayerClass classify_tensor(const std::string& name);

// How one tensor is quantized under a scheme. nullopt means the tensor stays
// in binary32 (norm gains).
struct TensorQuantSpec {
    int bits = 8;                    // 4 or 8
    bool per_block = true;           // false -> per-channel
    int block_size = 32;             // per-block only
    int channel_axis = 1;            // per-channel only: 0 rows, 1 columns
};
std::optional<TensorQuantSpec> resolve_quant_spec(const std::string& name, const QuantScheme& scheme);

// Symmetric integer codes with one binary32 scale per group. An all-zero
// group stores scale 0 with all-zero codes.
struct QuantizedTensor {
    std::vector<int> shape;
    TensorQuantSpec spec;
    std::vector<std::int8_t> codes;  // one entry per element, range [-qmax, qmax]
    std::vector<float> scales;       // one per group
};

int qmax_for_bits(int bits);
void quantize_group(const double* values, const std::size_t* idx, std::size_t count, int bits,
                    std::int8_t* codes_out, float* scale_out);
std::vector<double> dequantize_group(const std::vector<std::int8_t>& codes, float scale);

QuantizedTensor quantize_tensor(const Tensor& t, const TensorQuantSpec& spec);
Tensor dequantize_tensor(const QuantizedTensor& q);

// Forward value for quantization-aware training: dequantize(quantize(t)).
// Tensors outside the scheme's mapping pass through unchanged.
Tensor fake_quant(const std::string& name, const Tensor& t, const QuantScheme& scheme);

struct QuantizedCheckpoint {
    EncoderConfig config;
    bool frozen = false;
    QuantScheme scheme;
    std::map<std::string, QuantizedTensor> qtensors;
    NamedTensors fp_tensors;  // tensors kept in binary32
};

QuantizedCheckpoint apply_quant_scheme(const Checkpoint& ckpt, const QuantScheme& scheme);
Checkpoint dequantize_checkpoint(const QuantizedCheckpoint& q);

void save_quantized_checkpoint(const QuantizedCheckpoint& q, const std::string& path);
QuantizedCheckpoint load_quantized_checkpoint(const std::string& path);

}  // namespace embedkit
