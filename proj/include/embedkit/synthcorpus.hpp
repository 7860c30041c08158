#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "embedkit/checkpoint.hpp"
#include "embedkit/dataset.hpp"
#include "embedkit/evalharness.hpp"
#include "embedkit/losses.hpp"

namespace embedkit {

// Clustered synthetic triples: queries and positives share cluster keywords,
// the hard negative is the positive of the lexically nearest other cluster.
struct SyntheticSpec {
    int n_clusters = 8;
    int examples_per_cluster = 8;
    int keywords_per_cluster = 5;
    std::string dataset_tag = "synthetic";
    std::uint64_t seed = 1;

    void validate() const;
};

struct SyntheticCorpus {
    std::vector<TrainingExample> examples;
    RetrievalTask task;  // each query relevant to exactly its own positive
};

SyntheticCorpus make_synthetic_corpus(const SyntheticSpec& spec);
void write_synthetic_corpus(const SyntheticSpec& spec, const std::string& corpus_path, const std::string& task_path);

// Retrieval task derived from any corpus slice: one doc per example, each
// query relevant to its own positive.
RetrievalTask derive_retrieval_task(const std::vector<TrainingExample>& examples);

struct TeacherOptions {
    EncoderConfig config = EncoderConfig::teacher_default();
    int steps = 400;
    int batch_size = 8;
    double learning_rate = 1e-3;
    LossConfig loss;  // distillation weight forced to zero

    TeacherOptions();
};

// Trains the larger stand-in encoder on contrastive + spread-out objectives
// and returns it frozen.
Checkpoint build_teacher(const std::vector<TrainingExample>& corpus, std::uint64_t seed,
                         const TeacherOptions& options = TeacherOptions());

}  // namespace embedkit
