#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "embedkit/dataset.hpp"

namespace embedkit {

enum class Stage { prefinetune, finetune };

Stage parse_stage(const std::string& s);
std::string stage_name(Stage s);

// Point on the dataset simplex: nonnegative weights summing to one.
struct Mixture {
    std::map<std::string, double> weights;

    void validate(const std::vector<std::string>& corpus_tags) const;
    static Mixture uniform(const std::vector<std::string>& tags);
};

Mixture sample_dirichlet_mixture(const std::vector<std::string>& tags, double concentration, std::uint64_t seed);

struct Batch {
    std::string dataset;
    std::vector<TrainingExample> examples;  // negatives stripped in the prefinetune stage
};

// Deterministic single-consumer batch source. Each batch is drawn from one
// dataset, chosen per batch proportionally to the mixture; within a dataset
// examples are consumed without replacement per shuffled epoch.
class BatchStream {
public:
    BatchStream(const std::vector<TrainingExample>& corpus, const Mixture& mixture, int batch_size, Stage stage,
                std::uint64_t seed);

    Batch next();

private:
    struct DatasetPool {
        std::string tag;
        std::vector<TrainingExample> examples;
        std::vector<std::size_t> order;
        std::size_t cursor = 0;
    };

    int batch_size_;
    Stage stage_;
    std::vector<DatasetPool> pools_;
    std::vector<double> cumulative_;
    std::mt19937_64 rng_;
};

BatchStream make_batches(const std::vector<TrainingExample>& corpus, const Mixture& mixture, int batch_size,
                         Stage stage, std::uint64_t seed);

}  // namespace embedkit
