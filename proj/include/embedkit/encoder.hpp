#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "embedkit/graph.hpp"
#include "embedkit/tensor.hpp"
#include "embedkit/tokenizer.hpp"

namespace embedkit {

enum class Pooling { mean, first, last, attention };

Pooling parse_pooling(const std::string& s);
std::string pooling_name(Pooling p);

struct EncoderConfig {
    int n_layers = 2;
    int d_model = 32;
    int n_heads = 4;
    int d_ffn = 64;
    int d_intermediate = 64;
    int d_out = 16;
    int vocab_size = kVocabSize;
    int max_seq_len = 64;
    Pooling pooling = Pooling::mean;
    std::vector<int> mrl_dims = {16, 8, 4};  // allowed truncation widths

    void validate() const;
    bool mrl_dim_allowed(int dim) const;

    static EncoderConfig desk_default() { return EncoderConfig{}; }
    static EncoderConfig teacher_default();
};

using NamedTensors = std::map<std::string, Tensor>;

std::vector<std::string> expected_param_names(const EncoderConfig& cfg);
NamedTensors init_params(const EncoderConfig& cfg, std::uint64_t seed);
void validate_params(const EncoderConfig& cfg, const NamedTensors& params);

// Parameters bound into a graph, optionally routed through a forward-value
// transform (used for quantization-aware training).
struct BoundEncoder {
    const EncoderConfig* cfg = nullptr;
    std::map<std::string, NodeId> p;

    NodeId at(const std::string& name) const;
};

BoundEncoder bind_params(Graph& g, const EncoderConfig& cfg, const NamedTensors& params);

// Graph-mode pipeline pieces. `ids` must hold only non-pad tokens.
NodeId encoder_forward(Graph& g, const BoundEncoder& enc, const std::vector<int>& ids);  // [L x d_model]
NodeId pool_forward(Graph& g, const BoundEncoder& enc, NodeId token_matrix);             // [1 x d_model]
NodeId project_forward(Graph& g, const BoundEncoder& enc, NodeId pooled);                // [1 x d_out]
NodeId embed_text_forward(Graph& g, const BoundEncoder& enc, const std::string& text);   // raw, unnormalized
NodeId normalize_prefix(Graph& g, NodeId raw_embedding, int dim);                        // unit-norm prefix

// Value-level operations (scratch graph per call).
Tensor encode_tokens(const EncoderConfig& cfg, const NamedTensors& params, const TokenSeq& tokens);
Tensor pool(const EncoderConfig& cfg, const NamedTensors& params, const Tensor& token_matrix,
            const std::vector<bool>& pad_mask);
Tensor project(const EncoderConfig& cfg, const NamedTensors& params, const Tensor& pooled);
Tensor embed_text(const EncoderConfig& cfg, const NamedTensors& params, const std::string& text, int mrl_dim);

Tensor normalize_prefix_value(const Tensor& raw, int dim);  // [1 x d] -> unit-norm [1 x dim]

// Convenience wrapper for repeated forward-only embedding, with an optional
// per-text memo cache (safe only while the parameters stay fixed).
class Embedder {
public:
    Embedder(const EncoderConfig& cfg, const NamedTensors& params, bool cache = false);

    Tensor embed_raw(const std::string& text) const;              // [1 x d_out], unnormalized
    Tensor embed(const std::string& text, int mrl_dim) const;     // unit-norm prefix

private:
    const EncoderConfig& cfg_;
    const NamedTensors& params_;
    bool cache_enabled_;
    mutable std::map<std::string, Tensor> cache_;
};

}  // namespace embedkit
