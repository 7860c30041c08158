#include "embedkit/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "embedkit/errors.hpp"
#include "embedkit/text_format.hpp"

namespace embedkit {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string require_string(const json& j, const char* field, const std::string& where) {
    if (!j.contains(field)) {
        throw ConfigError(where + ": missing required field \"" + field + "\"");
    }
    if (!j.at(field).is_string()) {
        throw ConfigError(where + ": field \"" + field + "\" must be a string");
    }
    return j.at(field).get<std::string>();
}

std::optional<std::string> optional_string(const json& j, const char* field, const std::string& where) {
    if (!j.contains(field) || j.at(field).is_null()) return std::nullopt;
    if (!j.at(field).is_string()) {
        throw ConfigError(where + ": field \"" + field + "\" must be a string");
    }
    return j.at(field).get<std::string>();
}

}  // namespace

std::string query_text(const TrainingExample& ex) {
    return format_query(ex.task_query, ex.query);
}

std::string passage_text(const TrainingExample& ex, const std::string& passage) {
    if (ex.task_passage.empty()) {
        return format_passage(ex.title, passage);
    }
    return render_template(ex.task_passage, passage, ex.title);
}

std::vector<TrainingExample> load_examples(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open dataset file: " + path);
    std::vector<TrainingExample> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = path + ":" + std::to_string(line_no);
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ConfigError(where + ": malformed record: " + e.what());
        }
        if (!j.is_object()) throw ConfigError(where + ": record must be a JSON object");
        TrainingExample ex;
        ex.dataset = require_string(j, "dataset", where);
        ex.task_query = require_string(j, "task_query", where);
        ex.task_passage = require_string(j, "task_passage", where);
        ex.query = require_string(j, "query", where);
        ex.positive = require_string(j, "positive", where);
        ex.negative = optional_string(j, "negative", where);
        ex.title = optional_string(j, "title", where);
        if (ex.query.empty()) throw ConfigError(where + ": \"query\" must be non-empty");
        if (ex.positive.empty()) throw ConfigError(where + ": \"positive\" must be non-empty");
        out.push_back(std::move(ex));
    }
    return out;
}

std::vector<TrainingExample> load_examples_dir(const std::string& dir) {
    if (!fs::is_directory(dir)) throw ConfigError("dataset directory not found: " + dir);
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".jsonl" &&
            entry.path().filename().string().find(".task.") == std::string::npos) {
            files.push_back(entry.path().string());
        }
    }
    std::sort(files.begin(), files.end());
    std::vector<TrainingExample> out;
    for (const std::string& f : files) {
        auto part = load_examples(f);
        out.insert(out.end(), part.begin(), part.end());
    }
    if (out.empty()) throw ConfigError("no dataset records found under: " + dir);
    return out;
}

void write_examples(const std::vector<TrainingExample>& examples, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write dataset file: " + path);
    for (const TrainingExample& ex : examples) {
        json j;
        j["dataset"] = ex.dataset;
        j["task_query"] = ex.task_query;
        j["task_passage"] = ex.task_passage;
        j["query"] = ex.query;
        j["positive"] = ex.positive;
        if (ex.negative) j["negative"] = *ex.negative;
        if (ex.title) j["title"] = *ex.title;
        out << j.dump() << "\n";
    }
}

std::vector<std::string> dataset_tags(const std::vector<TrainingExample>& examples) {
    std::set<std::string> tags;
    for (const TrainingExample& ex : examples) tags.insert(ex.dataset);
    return {tags.begin(), tags.end()};
}

}  // namespace embedkit
