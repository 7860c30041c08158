#include "embedkit/soup.hpp"

#include <algorithm>

#include "embedkit/errors.hpp"

namespace embedkit {

namespace {

double pairwise_sum(std::vector<double>& v) {
    std::size_t n = v.size();
    while (n > 1) {
        std::size_t half = n / 2;
        for (std::size_t i = 0; i < half; ++i) v[i] = v[2 * i] + v[2 * i + 1];
        if (n % 2 == 1) {
            v[half] = v[n - 1];
            ++half;
        }
        n = half;
    }
    return v[0];
}

void check_compatible(const Checkpoint& a, const Checkpoint& b) {
    if (encoder_config_json(a.config) != encoder_config_json(b.config)) {
        throw ConfigError("soup: checkpoints have different encoder configs");
    }
    for (const auto& [name, t] : a.tensors) {
        auto it = b.tensors.find(name);
        if (it == b.tensors.end()) {
            throw ConfigError("soup: tensor \"" + name + "\" is missing from one input");
        }
        if (!t.same_shape(it->second)) {
            throw ConfigError("soup: tensor \"" + name + "\" has mismatched shapes " + t.shape_str() + " vs " +
                              it->second.shape_str());
        }
    }
    if (a.tensors.size() != b.tensors.size()) {
        auto it = std::find_if(b.tensors.begin(), b.tensors.end(),
                               [&a](const auto& kv) { return !a.tensors.count(kv.first); });
        throw ConfigError("soup: tensor \"" + it->first + "\" is missing from one input");
    }
}

}  // namespace

Checkpoint soup_checkpoints(const std::vector<Checkpoint>& inputs) {
    if (inputs.size() < 2) throw ConfigError("soup: need at least 2 input checkpoints");
    for (const Checkpoint& c : inputs) check_compatible(inputs.front(), c);

    const double inv_k = 1.0 / static_cast<double>(inputs.size());
    Checkpoint out;
    out.config = inputs.front().config;
    for (const auto& [name, first] : inputs.front().tensors) {
        Tensor mean(first.shape, std::vector<double>(first.numel(), 0.0));
        std::vector<double> addends(inputs.size());
        for (std::size_t e = 0; e < first.numel(); ++e) {
            for (std::size_t c = 0; c < inputs.size(); ++c) {
                addends[c] = inputs[c].tensors.at(name).data[e];
            }
            std::sort(addends.begin(), addends.end());
            mean.data[e] = pairwise_sum(addends) * inv_k;
        }
        out.tensors.emplace(name, std::move(mean));
    }
    return out;
}

Checkpoint soup_checkpoints(const SoupSpec& spec) {
    if (spec.inputs.size() < 2) throw ConfigError("soup: need at least 2 input checkpoints (--inputs)");
    std::vector<Checkpoint> loaded;
    loaded.reserve(spec.inputs.size());
    for (const std::string& path : spec.inputs) loaded.push_back(load_checkpoint(path));
    Checkpoint out = soup_checkpoints(loaded);
    if (!spec.output.empty()) save_checkpoint(out, spec.output);
    return out;
}

}  // namespace embedkit
