// Fixture utility: generates clustered synthetic corpora and trains the
// frozen stand-in teacher used for distillation.

#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "embedkit/errors.hpp"
#include "embedkit/synthcorpus.hpp"

int main(int argc, char** argv) {
    CLI::App app{"synthetic corpus and teacher utility"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen", "write a synthetic corpus and its retrieval task");
    std::string gen_out_dir = ".", gen_tag = "synthetic";
    embedkit::SyntheticSpec spec;
    gen->add_option("--out-dir", gen_out_dir, "output directory");
    gen->add_option("--tag", gen_tag, "dataset tag (also the file stem)");
    gen->add_option("--clusters", spec.n_clusters, "number of clusters");
    gen->add_option("--per-cluster", spec.examples_per_cluster, "examples per cluster");
    gen->add_option("--keywords", spec.keywords_per_cluster, "keywords per cluster");
    gen->add_option("--seed", spec.seed, "generator seed");

    auto* teacher = app.add_subcommand("teacher", "train and freeze the stand-in teacher");
    std::string teacher_data, teacher_out;
    std::uint64_t teacher_seed = 7;
    embedkit::TeacherOptions options;
    teacher->add_option("--data", teacher_data, "directory of dataset .jsonl files")->required();
    teacher->add_option("--out", teacher_out, "output checkpoint path")->required();
    teacher->add_option("--seed", teacher_seed, "training seed");
    teacher->add_option("--steps", options.steps, "training steps");
    teacher->add_option("--batch", options.batch_size, "batch size");
    teacher->add_option("--lr", options.learning_rate, "learning rate");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            spec.dataset_tag = gen_tag;
            std::filesystem::create_directories(gen_out_dir);
            const std::string corpus_path = gen_out_dir + "/" + gen_tag + ".jsonl";
            const std::string task_path = gen_out_dir + "/" + gen_tag + ".task.jsonl";
            embedkit::write_synthetic_corpus(spec, corpus_path, task_path);
            std::cout << "wrote " << corpus_path << " and " << task_path << std::endl;
            return 0;
        }
        const auto corpus = embedkit::load_examples_dir(teacher_data);
        const embedkit::Checkpoint ckpt = embedkit::build_teacher(corpus, teacher_seed, options);
        embedkit::save_checkpoint(ckpt, teacher_out);
        std::cout << "wrote " << teacher_out << std::endl;
        return 0;
    } catch (const embedkit::ConfigError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << std::endl;
        return 2;
    }
}
