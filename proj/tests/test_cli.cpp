#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "embedkit/cli.hpp"
#include "embedkit/synthcorpus.hpp"

using namespace embedkit;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("embedkit_cli_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

// small encoder + few steps keeps the pipeline smoke fast
const char* kTinyConfig = R"({
  "encoder": {"n_layers": 1, "d_model": 16, "n_heads": 2, "d_ffn": 16, "d_intermediate": 16,
               "d_out": 8, "max_seq_len": 48, "pooling": "mean", "mrl_dims": [8, 4]},
  "train": {"steps": 6, "batch_size": 4, "learning_rate": 0.001, "seed": 3,
             "loss": {"tau": 0.05, "alpha": 5.0, "mrl_dims": [8, 4], "w_distill": 0.0}}
})";

struct Fixture {
    TempDir dir;
    std::string data_dir;
    std::string config_path;
    std::string task_path;

    Fixture() {
        data_dir = dir.file("data");
        fs::create_directories(data_dir);
        SyntheticSpec spec;
        spec.n_clusters = 2;
        spec.examples_per_cluster = 4;
        spec.seed = 17;
        spec.dataset_tag = "synthetic";
        write_synthetic_corpus(spec, data_dir + "/synthetic.jsonl", dir.file("retrieval.task.jsonl"));
        task_path = dir.file("retrieval.task.jsonl");
        config_path = dir.file("config.json");
        write_text(config_path, kTinyConfig);
    }
};

}  // namespace

TEST_CASE("embed emits one unit-norm vector per input line") {
    Fixture fx;
    const std::string ckpt = fx.dir.file("model.ckpt");
    REQUIRE(cli_run({"train", "--config", fx.config_path, "--data", fx.data_dir, "--stage", "finetune", "--out",
                     ckpt}) == 0);

    const std::string input = fx.dir.file("texts.jsonl");
    write_text(input, R"({"id":"a","text":"first text"}
{"id":2,"text":"second text"}
{"id":"c","text":"third text"}
)");
    const std::string output = fx.dir.file("vecs.jsonl");
    REQUIRE(cli_run({"embed", "--ckpt", ckpt, "--input", input, "--dim", "4", "--out", output}) == 0);

    std::ifstream in(output);
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++lines;
        const json j = json::parse(line);
        REQUIRE(j.contains("id"));
        const auto vec = j.at("embedding").get<std::vector<double>>();
        REQUIRE(vec.size() == 4);
        double n2 = 0.0;
        for (double v : vec) n2 += v * v;
        CHECK(std::abs(std::sqrt(n2) - 1.0) < 1e-9);  // text round-trip keeps norms
    }
    CHECK(lines == 3);
}

TEST_CASE("soup with a single input exits with a config error") {
    Fixture fx;
    const std::string ckpt = fx.dir.file("model.ckpt");
    REQUIRE(cli_run({"train", "--config", fx.config_path, "--data", fx.data_dir, "--stage", "finetune", "--out",
                     ckpt}) == 0);
    CHECK(cli_run({"soup", "--inputs", ckpt, "--out", fx.dir.file("souped.ckpt")}) == 1);
}

TEST_CASE("end-to-end train, quantize, eval pipeline") {
    Fixture fx;
    const std::string ckpt = fx.dir.file("model.ckpt");
    REQUIRE(cli_run({"train", "--config", fx.config_path, "--data", fx.data_dir, "--stage", "finetune", "--out",
                     ckpt}) == 0);
    CHECK(fs::exists(ckpt));
    CHECK(fs::exists(ckpt + ".trace.csv"));
    {
        std::ifstream trace(ckpt + ".trace.csv");
        std::string header;
        std::getline(trace, header);
        CHECK(header == "step,loss,l_c,l_s,l_d");
    }

    const std::string quantized = fx.dir.file("model.int8.ckpt");
    REQUIRE(cli_run({"quantize", "--ckpt", ckpt, "--scheme", "int8-block", "--block", "16", "--out", quantized}) ==
            0);

    const std::string report_path = fx.dir.file("report.json");
    REQUIRE(cli_run({"eval", "--ckpt", quantized, "--task", "retrieval", "--data", fx.task_path, "--k", "10",
                     "--dims", "8", "--out", report_path}) == 0);
    const json report = json::parse(file_bytes(report_path));
    CHECK(report.at("scheme") == "quantized:int8_per_block");
    const json metrics = report.at("reports").at(0).at("metrics");
    CHECK(metrics.contains("recall@1"));
    CHECK(metrics.contains("mrr@10"));
}

TEST_CASE("config and flag errors exit 1") {
    Fixture fx;
    CHECK(cli_run({"train", "--data", fx.data_dir, "--stage", "nonsense", "--out", fx.dir.file("x.ckpt")}) == 1);
    CHECK(cli_run({"train", "--data", fx.data_dir, "--stage", "finetune", "--out", fx.dir.file("x.ckpt"),
                   "--bogus-flag"}) == 1);
    CHECK(cli_run({"eval", "--ckpt", "missing.ckpt", "--task", "retrieval", "--data", fx.task_path}) == 1);
    CHECK(cli_run({"quantize", "--ckpt", "missing.ckpt", "--scheme", "int9-block", "--out", "x"}) == 1);
    CHECK(cli_run({}) == 1);
}

TEST_CASE("frozen checkpoints cannot seed training") {
    Fixture fx;
    const auto corpus = load_examples_dir(fx.data_dir);
    TeacherOptions options;
    options.steps = 2;
    options.batch_size = 4;
    const Checkpoint teacher = build_teacher(corpus, 3, options);
    const std::string path = fx.dir.file("teacher.ckpt");
    save_checkpoint(teacher, path);
    CHECK(cli_run({"train", "--config", fx.config_path, "--data", fx.data_dir, "--stage", "finetune", "--init",
                   path, "--out", fx.dir.file("y.ckpt")}) == 1);
}

TEST_CASE("train runs are reproducible at the file level") {
    Fixture fx;
    const std::string a = fx.dir.file("a.ckpt");
    const std::string b = fx.dir.file("b.ckpt");
    REQUIRE(cli_run({"train", "--config", fx.config_path, "--data", fx.data_dir, "--stage", "finetune", "--out",
                     a}) == 0);
    REQUIRE(cli_run({"train", "--config", fx.config_path, "--data", fx.data_dir, "--stage", "finetune", "--out",
                     b}) == 0);
    CHECK(file_bytes(a) == file_bytes(b));
}

TEST_CASE("mixtures verb writes a ranked report") {
    Fixture fx;
    // second dataset so mixtures have something to weigh
    SyntheticSpec spec;
    spec.n_clusters = 2;
    spec.examples_per_cluster = 4;
    spec.seed = 29;
    spec.dataset_tag = "other";
    write_synthetic_corpus(spec, fx.data_dir + "/other.jsonl", fx.dir.file("other.task.jsonl"));

    const std::string report_path = fx.dir.file("mixtures.json");
    REQUIRE(cli_run({"mixtures", "--data", fx.data_dir, "--n", "1", "--concentration", "1.0", "--seed", "5",
                     "--report", report_path, "--config", fx.config_path}) == 0);
    const json report = json::parse(file_bytes(report_path));
    REQUIRE(report.is_array());
    REQUIRE(report.size() == 2);
    for (const auto& candidate : report) {
        CHECK(candidate.contains("weights"));
        CHECK(candidate.contains("scores"));
        CHECK(candidate.contains("mean"));
    }

    const std::string again = fx.dir.file("mixtures2.json");
    REQUIRE(cli_run({"mixtures", "--data", fx.data_dir, "--n", "1", "--concentration", "1.0", "--seed", "5",
                     "--report", again, "--config", fx.config_path}) == 0);
    CHECK(file_bytes(report_path) == file_bytes(again));
}
