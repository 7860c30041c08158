#include "embedkit/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "embedkit/errors.hpp"

namespace embedkit {

Stage parse_stage(const std::string& s) {
    if (s == "prefinetune") return Stage::prefinetune;
    if (s == "finetune") return Stage::finetune;
    throw ConfigError("unknown stage \"" + s + "\" (expected prefinetune|finetune)");
}

std::string stage_name(Stage s) {
    return s == Stage::prefinetune ? "prefinetune" : "finetune";
}

void Mixture::validate(const std::vector<std::string>& corpus_tags) const {
    if (weights.empty()) throw ConfigError("mixture: no weights given");
    const std::set<std::string> known(corpus_tags.begin(), corpus_tags.end());
    double sum = 0.0;
    for (const auto& [tag, w] : weights) {
        if (!known.count(tag)) throw ConfigError("mixture: dataset tag \"" + tag + "\" not present in the corpus");
        if (!(w >= 0.0)) throw ConfigError("mixture: weight for \"" + tag + "\" must be nonnegative");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ConfigError("mixture: weights must sum to 1 (got " + std::to_string(sum) + ")");
    }
}

Mixture Mixture::uniform(const std::vector<std::string>& tags) {
    if (tags.empty()) throw std::invalid_argument("mixture: tag list is empty");
    Mixture m;
    const double w = 1.0 / static_cast<double>(tags.size());
    for (const std::string& t : tags) m.weights[t] = w;
    // exact simplex membership regardless of divisibility
    m.weights[*tags.begin()] += 1.0 - w * static_cast<double>(tags.size());
    return m;
}

Mixture sample_dirichlet_mixture(const std::vector<std::string>& tags, double concentration, std::uint64_t seed) {
    if (tags.empty()) throw std::invalid_argument("sample_dirichlet_mixture: tag list is empty");
    if (!(concentration > 0.0)) throw std::invalid_argument("sample_dirichlet_mixture: concentration must be > 0");
    std::vector<std::string> sorted = tags;
    std::sort(sorted.begin(), sorted.end());
    std::mt19937_64 rng(seed);
    std::gamma_distribution<double> gamma(concentration, 1.0);
    std::vector<double> draws(sorted.size());
    double sum = 0.0;
    for (double& d : draws) {
        d = gamma(rng);
        sum += d;
    }
    Mixture m;
    if (sum <= 0.0) {
        // vanishing draws (possible for tiny concentration); fall back to uniform
        return Mixture::uniform(sorted);
    }
    for (std::size_t i = 0; i < sorted.size(); ++i) m.weights[sorted[i]] = draws[i] / sum;
    return m;
}

BatchStream::BatchStream(const std::vector<TrainingExample>& corpus, const Mixture& mixture, int batch_size,
                         Stage stage, std::uint64_t seed)
    : batch_size_(batch_size), stage_(stage), rng_(seed) {
    if (batch_size < 2) throw ConfigError("make_batches: batch_size must be >= 2");
    mixture.validate(dataset_tags(corpus));

    std::map<std::string, std::vector<TrainingExample>> grouped;
    for (const TrainingExample& ex : corpus) grouped[ex.dataset].push_back(ex);

    double cum = 0.0;
    for (const auto& [tag, w] : mixture.weights) {  // std::map keeps tag order deterministic
        if (w <= 0.0) continue;
        auto it = grouped.find(tag);
        if (it == grouped.end() || static_cast<int>(it->second.size()) < batch_size) {
            throw ConfigError("make_batches: dataset \"" + tag + "\" has fewer than batch_size=" +
                              std::to_string(batch_size) + " examples");
        }
        DatasetPool pool;
        pool.tag = tag;
        pool.examples = it->second;
        if (stage == Stage::finetune) {
            for (const TrainingExample& ex : pool.examples) {
                if (!ex.negative) {
                    throw ConfigError("make_batches: finetune stage requires a hard negative on every example "
                                      "(dataset \"" + tag + "\")");
                }
            }
        }
        pool.order.resize(pool.examples.size());
        for (std::size_t i = 0; i < pool.order.size(); ++i) pool.order[i] = i;
        pool.cursor = pool.order.size();  // forces a shuffle on first use
        pools_.push_back(std::move(pool));
        cum += w;
        cumulative_.push_back(cum);
    }
    if (pools_.empty()) throw ConfigError("make_batches: mixture selects no datasets");
    cumulative_.back() = 1.0;  // guard against rounding at the top end
}

Batch BatchStream::next() {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double u = unit(rng_) * cumulative_.back();
    std::size_t pick = 0;
    while (pick + 1 < cumulative_.size() && u >= cumulative_[pick]) ++pick;
    DatasetPool& pool = pools_[pick];

    if (pool.cursor + static_cast<std::size_t>(batch_size_) > pool.order.size()) {
        std::shuffle(pool.order.begin(), pool.order.end(), rng_);
        pool.cursor = 0;
    }

    Batch batch;
    batch.dataset = pool.tag;
    batch.examples.reserve(static_cast<std::size_t>(batch_size_));
    for (int i = 0; i < batch_size_; ++i) {
        TrainingExample ex = pool.examples[pool.order[pool.cursor++]];
        if (stage_ == Stage::prefinetune) ex.negative.reset();
        batch.examples.push_back(std::move(ex));
    }
    return batch;
}

BatchStream make_batches(const std::vector<TrainingExample>& corpus, const Mixture& mixture, int batch_size,
                         Stage stage, std::uint64_t seed) {
    return BatchStream(corpus, mixture, batch_size, stage, seed);
}

}  // namespace embedkit
