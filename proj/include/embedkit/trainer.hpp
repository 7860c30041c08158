#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "embedkit/checkpoint.hpp"
#include "embedkit/losses.hpp"
#include "embedkit/mixture.hpp"
#include "embedkit/quant.hpp"

namespace embedkit {

struct TrainConfig {
    Stage stage = Stage::finetune;
    int steps = 300;
    int batch_size = 0;  // 0 picks the stage default: 64 prefinetune, 8 finetune
    double learning_rate = 3e-4;
    double weight_decay = 0.01;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    std::optional<QuantScheme> qat;
    std::optional<std::string> teacher_checkpoint;
    LossConfig loss;

    int effective_batch_size() const;
    void validate(int d_out) const;
};

struct AdamState {
    NamedTensors m;
    NamedTensors v;
    long step = 0;
};

// Decoupled-weight-decay adaptive-moment update, in place.
void adamw_step(NamedTensors& params, const GradMap& grads, AdamState& state, const TrainConfig& cfg);

struct TraceRow {
    int step = 0;
    double loss = 0.0;
    double l_c = 0.0;
    double l_s = 0.0;
    double l_d = 0.0;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<TraceRow> trace;
};

TrainResult train_run(const TrainConfig& cfg, const EncoderConfig& enc_cfg,
                      const std::vector<TrainingExample>& corpus, const Mixture& mixture, const NamedTensors& init,
                      const Checkpoint* teacher = nullptr);

void write_loss_trace(const std::vector<TraceRow>& trace, const std::string& path);

// ---- mixture random search ----

using TrainFn = std::function<Checkpoint(const Mixture&)>;
using EvalFn = std::function<std::map<std::string, double>(const Checkpoint&, const Mixture&)>;

struct MixtureCandidate {
    Mixture mixture;
    std::map<std::string, double> scores;
    double mean_score = 0.0;
    bool failed = false;
    std::string error;
};

struct MixtureSearchResult {
    std::vector<MixtureCandidate> candidates;  // successes ranked by mean score, failures appended
};

MixtureSearchResult mixture_search(const Mixture& seed_mixture, int n_random, const std::vector<std::string>& tags,
                                   const TrainFn& train_fn, const EvalFn& eval_fn, double concentration,
                                   std::uint64_t seed);

}  // namespace embedkit
