#include "embedkit/synthcorpus.hpp"

#include <algorithm>
#include <cstdio>
#include <random>
#include <set>

#include "embedkit/errors.hpp"
#include "embedkit/text_format.hpp"
#include "embedkit/trainer.hpp"

namespace embedkit {

namespace {

std::string pseudo_word(std::mt19937_64& rng, int syllables) {
    static const char* consonants = "bdfgklmnprstvz";
    static const char* vowels = "aeiou";
    std::uniform_int_distribution<int> c_dist(0, 13), v_dist(0, 4);
    std::string w;
    for (int s = 0; s < syllables; ++s) {
        w.push_back(consonants[c_dist(rng)]);
        w.push_back(vowels[v_dist(rng)]);
    }
    return w;
}

std::string unique_word(std::mt19937_64& rng, std::set<std::string>& used, int syllables) {
    for (;;) {
        std::string w = pseudo_word(rng, syllables);
        if (used.insert(w).second) return w;
    }
}

std::string padded_id(const char* prefix, int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%s%04d", prefix, i);
    return buf;
}

}  // namespace

void SyntheticSpec::validate() const {
    if (n_clusters < 2) throw ConfigError("synthetic spec: n_clusters must be >= 2");
    if (examples_per_cluster < 1) throw ConfigError("synthetic spec: examples_per_cluster must be >= 1");
    if (keywords_per_cluster < 2) throw ConfigError("synthetic spec: keywords_per_cluster must be >= 2");
    if (dataset_tag.empty()) throw ConfigError("synthetic spec: dataset_tag must be non-empty");
}

SyntheticCorpus make_synthetic_corpus(const SyntheticSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::set<std::string> used;

    const int c_count = spec.n_clusters;
    // Own keywords per cluster plus one word shared with the next cluster on
    // a ring, so every cluster has a well-defined lexically nearest neighbor.
    std::vector<std::vector<std::string>> vocab(static_cast<std::size_t>(c_count));
    for (int c = 0; c < c_count; ++c) {
        for (int k = 0; k < spec.keywords_per_cluster; ++k) {
            vocab[static_cast<std::size_t>(c)].push_back(unique_word(rng, used, 2 + (k % 2)));
        }
    }
    std::vector<std::string> shared(static_cast<std::size_t>(c_count));
    for (int c = 0; c < c_count; ++c) shared[static_cast<std::size_t>(c)] = unique_word(rng, used, 2);
    for (int c = 0; c < c_count; ++c) {
        vocab[static_cast<std::size_t>(c)].push_back(shared[static_cast<std::size_t>(c)]);
        vocab[static_cast<std::size_t>(c)].push_back(shared[static_cast<std::size_t>((c + c_count - 1) % c_count)]);
    }

    auto nearest_cluster = [&](int c) {
        int best = -1;
        std::size_t best_overlap = 0;
        const std::set<std::string> mine(vocab[static_cast<std::size_t>(c)].begin(),
                                         vocab[static_cast<std::size_t>(c)].end());
        for (int other = 0; other < c_count; ++other) {
            if (other == c) continue;
            std::size_t overlap = 0;
            for (const std::string& w : vocab[static_cast<std::size_t>(other)]) {
                if (mine.count(w)) ++overlap;
            }
            if (overlap > best_overlap || best < 0) {
                best = other;
                best_overlap = overlap;
            }
        }
        return best;
    };

    struct Draft {
        int cluster;
        std::string query;
        std::string positive;
        std::optional<std::string> title;
    };
    std::vector<Draft> drafts;
    for (int c = 0; c < c_count; ++c) {
        const auto& words = vocab[static_cast<std::size_t>(c)];
        std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1);
        for (int e = 0; e < spec.examples_per_cluster; ++e) {
            const std::string a = words[pick(rng)];
            std::string b = words[pick(rng)];
            while (b == a) b = words[pick(rng)];
            const std::string marker = unique_word(rng, used, 3);
            Draft d;
            d.cluster = c;
            d.query = a + " " + b + " " + marker;
            d.positive = "note " + marker + " about " + a + " " + b;
            if (c % 2 == 0) d.title = words.front();
            drafts.push_back(std::move(d));
        }
    }

    SyntheticCorpus out;
    for (std::size_t i = 0; i < drafts.size(); ++i) {
        const Draft& d = drafts[i];
        const int neighbor = nearest_cluster(d.cluster);
        const std::size_t within = i % static_cast<std::size_t>(spec.examples_per_cluster);
        const std::size_t neg_index =
            static_cast<std::size_t>(neighbor) * static_cast<std::size_t>(spec.examples_per_cluster) + within;
        TrainingExample ex;
        ex.dataset = spec.dataset_tag;
        ex.task_query = kDefaultQueryTemplate;
        ex.task_passage = "";
        ex.query = d.query;
        ex.positive = d.positive;
        ex.negative = drafts[neg_index].positive;
        ex.title = d.title;
        out.examples.push_back(std::move(ex));
    }
    out.task = derive_retrieval_task(out.examples);
    return out;
}

RetrievalTask derive_retrieval_task(const std::vector<TrainingExample>& examples) {
    if (examples.empty()) throw ConfigError("derive_retrieval_task: empty corpus");
    RetrievalTask task;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const TrainingExample& ex = examples[i];
        const std::string qid = padded_id("q", static_cast<int>(i));
        const std::string did = padded_id("d", static_cast<int>(i));
        task.queries.push_back({qid, ex.query});
        task.docs.push_back({did, ex.title, ex.positive});
        task.qrels[qid].insert(did);
    }
    task.validate();
    return task;
}

void write_synthetic_corpus(const SyntheticSpec& spec, const std::string& corpus_path,
                            const std::string& task_path) {
    const SyntheticCorpus corpus = make_synthetic_corpus(spec);
    write_examples(corpus.examples, corpus_path);
    write_retrieval_task(corpus.task, task_path);
}

TeacherOptions::TeacherOptions() {
    loss.w_distill = 0.0;
    loss.mrl_dims = {};
}

Checkpoint build_teacher(const std::vector<TrainingExample>& corpus, std::uint64_t seed,
                         const TeacherOptions& options) {
    TrainConfig cfg;
    bool all_neg = true;
    for (const TrainingExample& ex : corpus) {
        if (!ex.negative) all_neg = false;
    }
    cfg.stage = all_neg ? Stage::finetune : Stage::prefinetune;
    cfg.steps = options.steps;
    cfg.batch_size = options.batch_size;
    cfg.learning_rate = options.learning_rate;
    cfg.seed = seed;
    cfg.loss = options.loss;
    cfg.loss.w_distill = 0.0;  // the teacher itself is never distilled

    const Mixture mixture = Mixture::uniform(dataset_tags(corpus));
    const NamedTensors init = init_params(options.config, seed);
    TrainResult result = train_run(cfg, options.config, corpus, mixture, init);
    result.checkpoint.frozen = true;
    return std::move(result.checkpoint);
}

}  // namespace embedkit
