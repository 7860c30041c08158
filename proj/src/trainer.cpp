#include "embedkit/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "embedkit/errors.hpp"

namespace embedkit {

int TrainConfig::effective_batch_size() const {
    if (batch_size > 0) return batch_size;
    return stage == Stage::prefinetune ? 64 : 8;
}

void TrainConfig::validate(int d_out) const {
    if (steps < 1) throw ConfigError("train config: steps must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("train config: learning_rate must be > 0");
    if (weight_decay < 0.0) throw ConfigError("train config: weight_decay must be nonnegative");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
        throw ConfigError("train config: adam betas must lie in [0, 1)");
    }
    if (!(adam_eps > 0.0)) throw ConfigError("train config: adam_eps must be > 0");
    if (qat) qat->validate();
    loss.validate(d_out);
    const bool wants_teacher = loss.w_distill != 0.0;
    if (wants_teacher && !teacher_checkpoint) {
        throw ConfigError("train config: w_distill > 0 requires teacher_checkpoint");
    }
    if (!wants_teacher && teacher_checkpoint) {
        throw ConfigError("train config: teacher_checkpoint given but w_distill is 0");
    }
}

void adamw_step(NamedTensors& params, const GradMap& grads, AdamState& state, const TrainConfig& cfg) {
    for (const auto& [name, p] : params) {
        if (!grads.count(name)) throw std::invalid_argument("optimizer: missing gradient for \"" + name + "\"");
    }
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, t);

    for (auto& [name, p] : params) {
        const Tensor& g = grads.at(name);
        if (!g.same_shape(p)) throw std::invalid_argument("optimizer: gradient shape mismatch for \"" + name + "\"");
        if (!g.finite()) {
            throw std::runtime_error("optimizer: non-finite gradient in tensor \"" + name + "\"");
        }
        Tensor& m = state.m.try_emplace(name, Tensor(p.shape, std::vector<double>(p.numel(), 0.0))).first->second;
        Tensor& v = state.v.try_emplace(name, Tensor(p.shape, std::vector<double>(p.numel(), 0.0))).first->second;
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            const double gi = g.data[i];
            m.data[i] = cfg.adam_beta1 * m.data[i] + (1.0 - cfg.adam_beta1) * gi;
            v.data[i] = cfg.adam_beta2 * v.data[i] + (1.0 - cfg.adam_beta2) * gi * gi;
            const double mh = m.data[i] / bc1;
            const double vh = v.data[i] / bc2;
            p.data[i] -= cfg.learning_rate * (mh / (std::sqrt(vh) + cfg.adam_eps) + cfg.weight_decay * p.data[i]);
        }
    }
}

namespace {

struct TeacherSide {
    const Checkpoint* ckpt = nullptr;
    std::optional<Embedder> embedder;
};

TeacherEmbeddings teacher_batch(const Embedder& teacher, const Batch& batch, int d_out) {
    const int b = static_cast<int>(batch.examples.size());
    Tensor q = Tensor::zeros(b, d_out);
    Tensor p = Tensor::zeros(b, d_out);
    bool any_neg = true;
    for (const TrainingExample& ex : batch.examples) {
        if (!ex.negative) any_neg = false;
    }
    Tensor n = any_neg ? Tensor::zeros(b, d_out) : Tensor{};
    for (int i = 0; i < b; ++i) {
        const TrainingExample& ex = batch.examples[static_cast<std::size_t>(i)];
        const Tensor tq = teacher.embed(query_text(ex), d_out);
        const Tensor tp = teacher.embed(passage_text(ex, ex.positive), d_out);
        for (int j = 0; j < d_out; ++j) {
            q.at(i, j) = tq.at(0, j);
            p.at(i, j) = tp.at(0, j);
        }
        if (any_neg) {
            const Tensor tn = teacher.embed(passage_text(ex, *ex.negative), d_out);
            for (int j = 0; j < d_out; ++j) n.at(i, j) = tn.at(0, j);
        }
    }
    TeacherEmbeddings out;
    out.q = std::move(q);
    out.p_pos = std::move(p);
    if (any_neg) out.p_neg = std::move(n);
    return out;
}

}  // namespace

TrainResult train_run(const TrainConfig& cfg, const EncoderConfig& enc_cfg,
                      const std::vector<TrainingExample>& corpus, const Mixture& mixture, const NamedTensors& init,
                      const Checkpoint* teacher) {
    enc_cfg.validate();
    cfg.validate(enc_cfg.d_out);
    validate_params(enc_cfg, init);

    Checkpoint loaded_teacher;
    if (cfg.loss.w_distill != 0.0 && teacher == nullptr) {
        loaded_teacher = load_any_checkpoint(*cfg.teacher_checkpoint);
        teacher = &loaded_teacher;
    }
    std::optional<Embedder> teacher_embedder;
    if (cfg.loss.w_distill != 0.0) {
        if (teacher->config.d_out != enc_cfg.d_out) {
            throw ConfigError("train config: teacher d_out " + std::to_string(teacher->config.d_out) +
                              " must equal student d_out " + std::to_string(enc_cfg.d_out));
        }
        teacher_embedder.emplace(teacher->config, teacher->tensors, /*cache=*/true);
    }

    BatchStream stream = make_batches(corpus, mixture, cfg.effective_batch_size(), cfg.stage, cfg.seed);
    NamedTensors params = init;
    AdamState opt_state;
    const std::vector<int> dims = cfg.loss.training_dims(enc_cfg.d_out);

    TrainResult result;
    result.trace.reserve(static_cast<std::size_t>(cfg.steps));

    for (int step = 0; step < cfg.steps; ++step) {
        const Batch batch = stream.next();
        const int b = static_cast<int>(batch.examples.size());

        Graph g;
        BoundEncoder enc = bind_params(g, enc_cfg, params);
        if (cfg.qat) {
            for (auto& [name, id] : enc.p) {
                id = g.straight_through(id, fake_quant(name, g.value(id), *cfg.qat));
            }
        }

        std::vector<NodeId> q_raw, p_raw, n_raw;
        bool has_neg = true;
        for (const TrainingExample& ex : batch.examples) {
            if (!ex.negative) has_neg = false;
        }
        for (const TrainingExample& ex : batch.examples) {
            q_raw.push_back(embed_text_forward(g, enc, query_text(ex)));
            p_raw.push_back(embed_text_forward(g, enc, passage_text(ex, ex.positive)));
            if (has_neg) n_raw.push_back(embed_text_forward(g, enc, passage_text(ex, *ex.negative)));
        }

        std::vector<std::string> queries, positives;
        for (const TrainingExample& ex : batch.examples) {
            queries.push_back(ex.query);
            positives.push_back(ex.positive);
        }
        const BoolMat dq = dup_matrix(queries);
        const BoolMat dp = dup_matrix(positives);

        std::map<int, BatchNodes> per_dim;
        for (int dim : dims) {
            std::vector<NodeId> qs, ps, ns;
            for (int i = 0; i < b; ++i) {
                qs.push_back(normalize_prefix(g, q_raw[static_cast<std::size_t>(i)], dim));
                ps.push_back(normalize_prefix(g, p_raw[static_cast<std::size_t>(i)], dim));
                if (has_neg) ns.push_back(normalize_prefix(g, n_raw[static_cast<std::size_t>(i)], dim));
            }
            BatchNodes bn;
            bn.q = g.concat_rows(qs);
            bn.p_pos = g.concat_rows(ps);
            if (has_neg) bn.p_neg = g.concat_rows(ns);
            bn.dup_q = dq;
            bn.dup_p = dp;
            per_dim.emplace(dim, std::move(bn));
        }

        std::optional<TeacherEmbeddings> teacher_emb;
        if (teacher_embedder) teacher_emb = teacher_batch(*teacher_embedder, batch, enc_cfg.d_out);

        LossParts parts;
        const NodeId loss = total_loss(g, per_dim, teacher_emb, cfg.loss, enc_cfg.d_out, &parts);
        const double loss_value = g.value(loss).data[0];
        if (!std::isfinite(loss_value)) {
            throw std::runtime_error("train: loss became non-finite at step " + std::to_string(step));
        }

        GradMap grads = g.backward(loss);
        adamw_step(params, grads, opt_state, cfg);
        result.trace.push_back({step, loss_value, parts.contrastive, parts.spreadout, parts.distill});
    }

    result.checkpoint.config = enc_cfg;
    result.checkpoint.tensors = std::move(params);
    return result;
}

void write_loss_trace(const std::vector<TraceRow>& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write loss trace: " + path);
    out << "step,loss,l_c,l_s,l_d\n";
    char line[160];
    for (const TraceRow& row : trace) {
        std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,%.17g,%.17g\n", row.step, row.loss, row.l_c, row.l_s,
                      row.l_d);
        out << line;
    }
}

MixtureSearchResult mixture_search(const Mixture& seed_mixture, int n_random, const std::vector<std::string>& tags,
                                   const TrainFn& train_fn, const EvalFn& eval_fn, double concentration,
                                   std::uint64_t seed) {
    if (n_random < 0) throw ConfigError("mixture search: n_random must be >= 0");
    std::vector<Mixture> candidates;
    candidates.push_back(seed_mixture);
    std::mt19937_64 sub_seeds(seed);
    for (int i = 0; i < n_random; ++i) {
        candidates.push_back(sample_dirichlet_mixture(tags, concentration, sub_seeds()));
    }

    std::vector<MixtureCandidate> ranked, failed;
    for (const Mixture& mix : candidates) {
        MixtureCandidate c;
        c.mixture = mix;
        try {
            const Checkpoint ckpt = train_fn(mix);
            c.scores = eval_fn(ckpt, mix);
            double sum = 0.0;
            for (const auto& [_, v] : c.scores) {
                if (!std::isfinite(v)) throw std::runtime_error("mixture search: non-finite score");
                sum += v;
            }
            c.mean_score = c.scores.empty() ? 0.0 : sum / static_cast<double>(c.scores.size());
            ranked.push_back(std::move(c));
        } catch (const std::exception& e) {
            c.failed = true;
            c.error = e.what();
            failed.push_back(std::move(c));
        }
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const MixtureCandidate& a, const MixtureCandidate& b) { return a.mean_score > b.mean_score; });
    MixtureSearchResult result;
    result.candidates = std::move(ranked);
    for (MixtureCandidate& f : failed) result.candidates.push_back(std::move(f));
    return result;
}

}  // namespace embedkit
