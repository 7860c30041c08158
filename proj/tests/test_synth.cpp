#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "embedkit/errors.hpp"
#include "embedkit/synthcorpus.hpp"

using namespace embedkit;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("embedkit_synth_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("two clusters of four yield eight cross-cluster triples") {
    SyntheticSpec spec;
    spec.n_clusters = 2;
    spec.examples_per_cluster = 4;
    spec.seed = 3;
    const SyntheticCorpus corpus = make_synthetic_corpus(spec);
    REQUIRE(corpus.examples.size() == 8);

    // positives of each cluster, to verify negatives come from the other one
    std::map<int, std::set<std::string>> cluster_positives;
    for (std::size_t i = 0; i < corpus.examples.size(); ++i) {
        cluster_positives[static_cast<int>(i / 4)].insert(corpus.examples[i].positive);
    }
    for (std::size_t i = 0; i < corpus.examples.size(); ++i) {
        const int own = static_cast<int>(i / 4);
        REQUIRE(corpus.examples[i].negative.has_value());
        CHECK(cluster_positives[1 - own].count(*corpus.examples[i].negative) == 1);
        CHECK(cluster_positives[own].count(*corpus.examples[i].negative) == 0);
    }
}

TEST_CASE("positives are unique and queries share their marker") {
    SyntheticSpec spec;
    spec.seed = 5;
    const SyntheticCorpus corpus = make_synthetic_corpus(spec);
    std::set<std::string> positives;
    for (const TrainingExample& ex : corpus.examples) {
        CHECK(positives.insert(ex.positive).second);
        CHECK(!ex.query.empty());
        CHECK(ex.task_query.find("{content}") != std::string::npos);
    }
}

TEST_CASE("derived task has exactly one relevant doc per query") {
    SyntheticSpec spec;
    spec.n_clusters = 3;
    spec.examples_per_cluster = 2;
    const SyntheticCorpus corpus = make_synthetic_corpus(spec);
    CHECK(corpus.task.queries.size() == corpus.examples.size());
    CHECK(corpus.task.docs.size() == corpus.examples.size());
    for (const auto& q : corpus.task.queries) {
        CHECK(corpus.task.qrels.at(q.id).size() == 1);
    }
    CHECK_NOTHROW(corpus.task.validate());
}

TEST_CASE("emitted files are byte-identical per seed") {
    TempDir dir;
    SyntheticSpec spec;
    spec.n_clusters = 2;
    spec.examples_per_cluster = 3;
    spec.seed = 11;
    const std::string c1 = (dir.path / "c1.jsonl").string(), t1 = (dir.path / "t1.jsonl").string();
    const std::string c2 = (dir.path / "c2.jsonl").string(), t2 = (dir.path / "t2.jsonl").string();
    write_synthetic_corpus(spec, c1, t1);
    write_synthetic_corpus(spec, c2, t2);
    CHECK(file_bytes(c1) == file_bytes(c2));
    CHECK(file_bytes(t1) == file_bytes(t2));

    spec.seed = 12;
    const std::string c3 = (dir.path / "c3.jsonl").string(), t3 = (dir.path / "t3.jsonl").string();
    write_synthetic_corpus(spec, c3, t3);
    CHECK(file_bytes(c1) != file_bytes(c3));

    // files parse back through the standard loaders
    CHECK(load_examples(c1).size() == 6);
    CHECK(load_retrieval_task(t1).queries.size() == 6);
}

TEST_CASE("spec validation") {
    SyntheticSpec spec;
    spec.n_clusters = 1;
    CHECK_THROWS_AS(make_synthetic_corpus(spec), ConfigError);
    spec = SyntheticSpec{};
    spec.examples_per_cluster = 0;
    CHECK_THROWS_AS(make_synthetic_corpus(spec), ConfigError);
}

TEST_CASE("teacher training produces a frozen checkpoint with the student width") {
    SyntheticSpec spec;
    spec.n_clusters = 2;
    spec.examples_per_cluster = 4;
    spec.seed = 21;
    const SyntheticCorpus corpus = make_synthetic_corpus(spec);

    TeacherOptions options;
    options.steps = 3;  // structural smoke; quality is measured in the acceptance suite
    options.batch_size = 4;
    const Checkpoint teacher = build_teacher(corpus.examples, 7, options);
    CHECK(teacher.frozen);
    CHECK(teacher.config.d_out == EncoderConfig::desk_default().d_out);
    CHECK(teacher.config.d_model == 64);
    CHECK(teacher.config.n_layers == 4);
    CHECK(teacher.tensors.size() == expected_param_names(teacher.config).size());

    const Checkpoint again = build_teacher(corpus.examples, 7, options);
    for (const auto& [name, t] : teacher.tensors) {
        CHECK(again.tensors.at(name).data == t.data);
    }
}
