#pragma once

#include <optional>
#include <string>
#include <vector>

namespace embedkit {

// One (query, positive, optional hard negative) record with its prompt
// templates and source dataset tag.
struct TrainingExample {
    std::string dataset;
    std::string task_query;    // template for the query side, {content} required
    std::string task_passage;  // template for the passage side; empty selects the default
    std::string query;
    std::string positive;
    std::optional<std::string> negative;
    std::optional<std::string> title;
};

// Rendered model inputs for an example.
std::string query_text(const TrainingExample& ex);
std::string passage_text(const TrainingExample& ex, const std::string& passage);

std::vector<TrainingExample> load_examples(const std::string& path);
std::vector<TrainingExample> load_examples_dir(const std::string& dir);
void write_examples(const std::vector<TrainingExample>& examples, const std::string& path);

std::vector<std::string> dataset_tags(const std::vector<TrainingExample>& examples);

}  // namespace embedkit
