#include "embedkit/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <stdexcept>

#include "embedkit/errors.hpp"

namespace embedkit {

namespace {

constexpr double kNormEps = 1e-6;

std::string layer_prefix(int i) {
    return "layers." + std::to_string(i) + ".";
}

// x [m x n] -> x * gain / rms(x) per row
NodeId rmsnorm(Graph& g, NodeId x, NodeId gain) {
    const int m = g.value(x).rows();
    const int n = g.value(x).cols();
    NodeId ms = g.scale(g.row_sum(g.mul(x, x)), 1.0 / n);
    NodeId inv = g.rsqrt(g.add_scalar(ms, kNormEps));
    return g.mul(g.mul(x, g.col_broadcast(inv, n)), g.row_broadcast(gain, m));
}

NodeId attention_block(Graph& g, const BoundEncoder& enc, NodeId x, int layer) {
    const EncoderConfig& cfg = *enc.cfg;
    const std::string pre = layer_prefix(layer);
    const int dh = cfg.d_model / cfg.n_heads;

    NodeId xn = rmsnorm(g, x, enc.at(pre + "attn_norm.gain"));
    NodeId q = g.rope(g.matmul(xn, enc.at(pre + "attn.wq")), cfg.n_heads);
    NodeId k = g.rope(g.matmul(xn, enc.at(pre + "attn.wk")), cfg.n_heads);
    NodeId v = g.matmul(xn, enc.at(pre + "attn.wv"));

    std::vector<NodeId> heads;
    heads.reserve(static_cast<std::size_t>(cfg.n_heads));
    for (int h = 0; h < cfg.n_heads; ++h) {
        NodeId qh = g.slice_cols(q, h * dh, dh);
        NodeId kh = g.slice_cols(k, h * dh, dh);
        NodeId vh = g.slice_cols(v, h * dh, dh);
        NodeId attn = g.row_softmax(g.scale(g.matmul_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(dh))));
        heads.push_back(g.matmul(attn, vh));
    }
    NodeId merged = g.matmul(g.concat_cols(heads), enc.at(pre + "attn.wo"));
    return g.add(x, merged);
}

NodeId ffn_block(Graph& g, const BoundEncoder& enc, NodeId x, int layer) {
    const std::string pre = layer_prefix(layer);
    NodeId xn = rmsnorm(g, x, enc.at(pre + "ffn_norm.gain"));
    NodeId gate = g.gelu(g.matmul(xn, enc.at(pre + "ffn.w_gate")));
    NodeId up = g.matmul(xn, enc.at(pre + "ffn.w_up"));
    NodeId down = g.matmul(g.mul(gate, up), enc.at(pre + "ffn.w_down"));
    return g.add(x, down);
}

NodeId attention_pool(Graph& g, const BoundEncoder& enc, NodeId t) {
    const EncoderConfig& cfg = *enc.cfg;
    const int dh = cfg.d_model / cfg.n_heads;
    NodeId k = g.matmul(t, enc.at("pool.wk"));
    NodeId v = g.matmul(t, enc.at("pool.wv"));
    NodeId query = enc.at("pool.query");
    std::vector<NodeId> heads;
    heads.reserve(static_cast<std::size_t>(cfg.n_heads));
    for (int h = 0; h < cfg.n_heads; ++h) {
        NodeId qh = g.slice_cols(query, h * dh, dh);
        NodeId kh = g.slice_cols(k, h * dh, dh);
        NodeId vh = g.slice_cols(v, h * dh, dh);
        NodeId attn = g.row_softmax(g.scale(g.matmul_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(dh))));
        heads.push_back(g.matmul(attn, vh));
    }
    return g.concat_cols(heads);
}

std::vector<int> valid_ids(const TokenSeq& tokens, const EncoderConfig& cfg) {
    std::vector<int> ids;
    ids.reserve(tokens.ids.size());
    bool in_pad = false;
    for (int id : tokens.ids) {
        if (id < 0 || id >= cfg.vocab_size) {
            throw std::invalid_argument("encode_tokens: token id " + std::to_string(id) +
                                        " out of range [0, " + std::to_string(cfg.vocab_size) + ")");
        }
        if (id == kPadId) {
            in_pad = true;
            continue;
        }
        if (in_pad) throw std::invalid_argument("encode_tokens: pad before a non-pad token");
        ids.push_back(id);
    }
    return ids;
}

}  // namespace

Pooling parse_pooling(const std::string& s) {
    if (s == "mean") return Pooling::mean;
    if (s == "first") return Pooling::first;
    if (s == "last") return Pooling::last;
    if (s == "attention") return Pooling::attention;
    throw ConfigError("unknown pooling \"" + s + "\" (expected mean|first|last|attention)");
}

std::string pooling_name(Pooling p) {
    switch (p) {
        case Pooling::mean: return "mean";
        case Pooling::first: return "first";
        case Pooling::last: return "last";
        case Pooling::attention: return "attention";
    }
    return "mean";
}

void EncoderConfig::validate() const {
    if (n_layers <= 0 || d_model <= 0 || n_heads <= 0 || d_ffn <= 0 || d_intermediate <= 0 || d_out <= 0 ||
        vocab_size <= 0 || max_seq_len <= 0) {
        throw ConfigError("encoder config: all dimensions must be positive");
    }
    if (d_model % n_heads != 0) throw ConfigError("encoder config: d_model must be divisible by n_heads");
    if ((d_model / n_heads) % 2 != 0) throw ConfigError("encoder config: head dim must be even");
    if (d_out > d_intermediate) throw ConfigError("encoder config: d_out must not exceed d_intermediate");
    for (int d : mrl_dims) {
        if (d < 1 || d > d_out) throw ConfigError("encoder config: mrl dim " + std::to_string(d) + " out of range");
    }
    for (std::size_t i = 1; i < mrl_dims.size(); ++i) {
        if (mrl_dims[i] >= mrl_dims[i - 1]) throw ConfigError("encoder config: mrl_dims must be strictly descending");
    }
}

bool EncoderConfig::mrl_dim_allowed(int dim) const {
    if (dim == d_out) return true;
    return std::find(mrl_dims.begin(), mrl_dims.end(), dim) != mrl_dims.end();
}

EncoderConfig EncoderConfig::teacher_default() {
    EncoderConfig cfg;
    cfg.n_layers = 4;
    cfg.d_model = 64;
    cfg.n_heads = 4;
    cfg.d_ffn = 128;
    cfg.d_intermediate = 128;
    cfg.d_out = 16;
    cfg.mrl_dims = {16};
    return cfg;
}

std::vector<std::string> expected_param_names(const EncoderConfig& cfg) {
    std::vector<std::string> names;
    names.push_back("embed.table");
    for (int i = 0; i < cfg.n_layers; ++i) {
        const std::string pre = layer_prefix(i);
        names.push_back(pre + "attn_norm.gain");
        names.push_back(pre + "attn.wq");
        names.push_back(pre + "attn.wk");
        names.push_back(pre + "attn.wv");
        names.push_back(pre + "attn.wo");
        names.push_back(pre + "ffn_norm.gain");
        names.push_back(pre + "ffn.w_gate");
        names.push_back(pre + "ffn.w_up");
        names.push_back(pre + "ffn.w_down");
    }
    names.push_back("final_norm.gain");
    if (cfg.pooling == Pooling::attention) {
        names.push_back("pool.query");
        names.push_back("pool.wk");
        names.push_back("pool.wv");
    }
    names.push_back("proj.g");
    names.push_back("proj.f");
    return names;
}

NamedTensors init_params(const EncoderConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> unit_normal(0.0, 1.0);

    auto linear = [&rng, &unit_normal](int fan_in, int fan_out) {
        Tensor t = Tensor::zeros(fan_in, fan_out);
        const double std_dev = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (double& v : t.data) v = unit_normal(rng) * std_dev;
        return t;
    };
    auto gain = [](int n) { return Tensor::full(1, n, 1.0); };

    NamedTensors params;
    {
        Tensor table = Tensor::zeros(cfg.vocab_size, cfg.d_model);
        for (double& v : table.data) v = unit_normal(rng);
        params.emplace("embed.table", std::move(table));
    }
    for (int i = 0; i < cfg.n_layers; ++i) {
        const std::string pre = layer_prefix(i);
        params.emplace(pre + "attn_norm.gain", gain(cfg.d_model));
        params.emplace(pre + "attn.wq", linear(cfg.d_model, cfg.d_model));
        params.emplace(pre + "attn.wk", linear(cfg.d_model, cfg.d_model));
        params.emplace(pre + "attn.wv", linear(cfg.d_model, cfg.d_model));
        params.emplace(pre + "attn.wo", linear(cfg.d_model, cfg.d_model));
        params.emplace(pre + "ffn_norm.gain", gain(cfg.d_model));
        params.emplace(pre + "ffn.w_gate", linear(cfg.d_model, cfg.d_ffn));
        params.emplace(pre + "ffn.w_up", linear(cfg.d_model, cfg.d_ffn));
        params.emplace(pre + "ffn.w_down", linear(cfg.d_ffn, cfg.d_model));
    }
    params.emplace("final_norm.gain", gain(cfg.d_model));
    if (cfg.pooling == Pooling::attention) {
        Tensor q = Tensor::zeros(1, cfg.d_model);
        const double std_dev = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
        for (double& v : q.data) v = unit_normal(rng) * std_dev;
        params.emplace("pool.query", std::move(q));
        params.emplace("pool.wk", linear(cfg.d_model, cfg.d_model));
        params.emplace("pool.wv", linear(cfg.d_model, cfg.d_model));
    }
    params.emplace("proj.g", linear(cfg.d_model, cfg.d_intermediate));
    params.emplace("proj.f", linear(cfg.d_intermediate, cfg.d_out));
    return params;
}

void validate_params(const EncoderConfig& cfg, const NamedTensors& params) {
    const std::vector<std::string> expect = expected_param_names(cfg);
    const std::set<std::string> expected(expect.begin(), expect.end());
    for (const std::string& name : expect) {
        if (!params.count(name)) throw ConfigError("checkpoint: missing parameter tensor \"" + name + "\"");
    }
    for (const auto& [name, t] : params) {
        if (!expected.count(name)) throw ConfigError("checkpoint: unexpected parameter tensor \"" + name + "\"");
        if (!t.finite()) throw ConfigError("checkpoint: parameter tensor \"" + name + "\" has non-finite values");
    }
}

NodeId BoundEncoder::at(const std::string& name) const {
    auto it = p.find(name);
    if (it == p.end()) throw std::invalid_argument("encoder: unbound parameter \"" + name + "\"");
    return it->second;
}

BoundEncoder bind_params(Graph& g, const EncoderConfig& cfg, const NamedTensors& params) {
    validate_params(cfg, params);
    BoundEncoder enc;
    enc.cfg = &cfg;
    for (const auto& [name, t] : params) enc.p[name] = g.param(name, t);
    return enc;
}

NodeId encoder_forward(Graph& g, const BoundEncoder& enc, const std::vector<int>& ids) {
    if (ids.empty()) throw std::invalid_argument("encoder: empty token sequence");
    NodeId x = g.embed_rows(enc.at("embed.table"), ids);
    for (int i = 0; i < enc.cfg->n_layers; ++i) {
        x = attention_block(g, enc, x, i);
        x = ffn_block(g, enc, x, i);
    }
    return rmsnorm(g, x, enc.at("final_norm.gain"));
}

NodeId pool_forward(Graph& g, const BoundEncoder& enc, NodeId token_matrix) {
    const int L = g.value(token_matrix).rows();
    switch (enc.cfg->pooling) {
        case Pooling::mean: {
            NodeId ones = g.constant(Tensor::full(1, L, 1.0 / static_cast<double>(L)));
            return g.matmul(ones, token_matrix);
        }
        case Pooling::first:
            return g.slice_rows(token_matrix, 0, 1);
        case Pooling::last:
            return g.slice_rows(token_matrix, L - 1, 1);
        case Pooling::attention:
            return attention_pool(g, enc, token_matrix);
    }
    throw std::invalid_argument("encoder: unknown pooling");
}

NodeId project_forward(Graph& g, const BoundEncoder& enc, NodeId pooled) {
    return g.matmul(g.matmul(pooled, enc.at("proj.g")), enc.at("proj.f"));
}

NodeId embed_text_forward(Graph& g, const BoundEncoder& enc, const std::string& text) {
    const TokenSeq tokens = tokenize(text, enc.cfg->max_seq_len);
    std::vector<int> ids(tokens.ids.begin(), tokens.ids.begin() + tokens.valid_length());
    NodeId t = encoder_forward(g, enc, ids);
    NodeId pooled = pool_forward(g, enc, t);
    return project_forward(g, enc, pooled);
}

NodeId normalize_prefix(Graph& g, NodeId raw, int dim) {
    const Tensor& v = g.value(raw);
    if (dim < 1 || dim > v.cols()) throw std::invalid_argument("normalize_prefix: dim out of range");
    NodeId prefix = dim == v.cols() ? raw : g.slice_cols(raw, 0, dim);
    double n2 = 0.0;
    for (int j = 0; j < dim; ++j) n2 += g.value(prefix).at(0, j) * g.value(prefix).at(0, j);
    if (n2 == 0.0) throw std::invalid_argument("normalize_prefix: zero-norm prefix (degenerate embedding)");
    NodeId inv = g.rsqrt(g.dot_rows(prefix, prefix));
    return g.mul(prefix, g.col_broadcast(inv, dim));
}

Tensor encode_tokens(const EncoderConfig& cfg, const NamedTensors& params, const TokenSeq& tokens) {
    const std::vector<int> ids = valid_ids(tokens, cfg);
    if (ids.empty()) throw std::invalid_argument("encode_tokens: all-pad input");
    Graph g;
    BoundEncoder enc = bind_params(g, cfg, params);
    const Tensor& t = g.value(encoder_forward(g, enc, ids));
    Tensor out = Tensor::zeros(tokens.length(), cfg.d_model);
    for (int i = 0; i < static_cast<int>(ids.size()); ++i) {
        for (int j = 0; j < cfg.d_model; ++j) out.at(i, j) = t.at(i, j);
    }
    return out;  // pad rows stay zero; they carry no signal
}

Tensor pool(const EncoderConfig& cfg, const NamedTensors& params, const Tensor& token_matrix,
            const std::vector<bool>& pad_mask) {
    if (static_cast<int>(pad_mask.size()) != token_matrix.rows()) {
        throw std::invalid_argument("pool: pad mask length must match row count");
    }
    int valid = 0;
    while (valid < token_matrix.rows() && !pad_mask[static_cast<std::size_t>(valid)]) ++valid;
    for (int i = valid; i < token_matrix.rows(); ++i) {
        if (!pad_mask[static_cast<std::size_t>(i)]) {
            throw std::invalid_argument("pool: pad mask must be a trailing block");
        }
    }
    if (valid == 0) throw std::invalid_argument("pool: all positions are padding");

    Tensor content = Tensor::zeros(valid, token_matrix.cols());
    for (int i = 0; i < valid; ++i) {
        for (int j = 0; j < token_matrix.cols(); ++j) content.at(i, j) = token_matrix.at(i, j);
    }
    Graph g;
    BoundEncoder enc = bind_params(g, cfg, params);
    return g.value(pool_forward(g, enc, g.constant(std::move(content))));
}

Tensor project(const EncoderConfig& cfg, const NamedTensors& params, const Tensor& pooled) {
    Graph g;
    BoundEncoder enc = bind_params(g, cfg, params);
    return g.value(project_forward(g, enc, g.constant(pooled)));
}

Tensor normalize_prefix_value(const Tensor& raw, int dim) {
    if (raw.rows() != 1 || dim < 1 || dim > raw.cols()) {
        throw std::invalid_argument("normalize_prefix: dim out of range");
    }
    double n2 = 0.0;
    for (int j = 0; j < dim; ++j) n2 += raw.at(0, j) * raw.at(0, j);
    if (n2 == 0.0) throw std::invalid_argument("normalize_prefix: zero-norm prefix (degenerate embedding)");
    const double inv = 1.0 / std::sqrt(n2);
    Tensor out = Tensor::zeros(1, dim);
    for (int j = 0; j < dim; ++j) out.at(0, j) = raw.at(0, j) * inv;
    return out;
}

Tensor embed_text(const EncoderConfig& cfg, const NamedTensors& params, const std::string& text, int mrl_dim) {
    if (!cfg.mrl_dim_allowed(mrl_dim)) {
        throw std::invalid_argument("embed_text: dim " + std::to_string(mrl_dim) + " is not a configured width");
    }
    Graph g;
    BoundEncoder enc = bind_params(g, cfg, params);
    const Tensor raw = g.value(embed_text_forward(g, enc, text));
    return normalize_prefix_value(raw, mrl_dim);
}

Embedder::Embedder(const EncoderConfig& cfg, const NamedTensors& params, bool cache)
    : cfg_(cfg), params_(params), cache_enabled_(cache) {
    validate_params(cfg, params);
}

Tensor Embedder::embed_raw(const std::string& text) const {
    if (cache_enabled_) {
        auto it = cache_.find(text);
        if (it != cache_.end()) return it->second;
    }
    Graph g;
    BoundEncoder enc = bind_params(g, cfg_, params_);
    Tensor raw = g.value(embed_text_forward(g, enc, text));
    if (cache_enabled_) cache_.emplace(text, raw);
    return raw;
}

Tensor Embedder::embed(const std::string& text, int mrl_dim) const {
    if (!cfg_.mrl_dim_allowed(mrl_dim)) {
        throw std::invalid_argument("embed: dim " + std::to_string(mrl_dim) + " is not a configured width");
    }
    return normalize_prefix_value(embed_raw(text), mrl_dim);
}

}  // namespace embedkit
