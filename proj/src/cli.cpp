#include "embedkit/cli.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "embedkit/errors.hpp"
#include "embedkit/evalharness.hpp"
#include "embedkit/quant.hpp"
#include "embedkit/soup.hpp"
#include "embedkit/synthcorpus.hpp"
#include "embedkit/text_format.hpp"
#include "embedkit/trainer.hpp"

namespace embedkit {

using json = nlohmann::json;

namespace {

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    try {
        json j;
        in >> j;
        return j;
    } catch (const json::parse_error& e) {
        throw ConfigError("config file is not valid JSON (" + path + "): " + e.what());
    }
}

LossConfig loss_config_from_json(const json& j) {
    LossConfig cfg;
    if (j.contains("tau")) cfg.tau = j.at("tau").get<double>();
    if (j.contains("alpha")) cfg.alpha = j.at("alpha").get<double>();
    if (j.contains("mrl_dims")) cfg.mrl_dims = j.at("mrl_dims").get<std::vector<int>>();
    if (j.contains("w_contrastive")) cfg.w_contrastive = j.at("w_contrastive").get<double>();
    if (j.contains("w_spreadout")) cfg.w_spreadout = j.at("w_spreadout").get<double>();
    if (j.contains("w_distill")) cfg.w_distill = j.at("w_distill").get<double>();
    if (j.contains("literal_tn_diagonal")) cfg.literal_tn_diagonal = j.at("literal_tn_diagonal").get<bool>();
    return cfg;
}

QuantScheme quant_scheme_from_json(const json& j) {
    QuantScheme scheme;
    scheme.kind = parse_quant_kind(j.at("kind").get<std::string>());
    if (j.contains("block_size")) scheme.block_size = j.at("block_size").get<int>();
    scheme.validate();
    return scheme;
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig cfg;
    if (j.contains("stage")) cfg.stage = parse_stage(j.at("stage").get<std::string>());
    if (j.contains("steps")) cfg.steps = j.at("steps").get<int>();
    if (j.contains("batch_size")) cfg.batch_size = j.at("batch_size").get<int>();
    if (j.contains("learning_rate")) cfg.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("weight_decay")) cfg.weight_decay = j.at("weight_decay").get<double>();
    if (j.contains("adam_beta1")) cfg.adam_beta1 = j.at("adam_beta1").get<double>();
    if (j.contains("adam_beta2")) cfg.adam_beta2 = j.at("adam_beta2").get<double>();
    if (j.contains("adam_eps")) cfg.adam_eps = j.at("adam_eps").get<double>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("qat") && !j.at("qat").is_null()) cfg.qat = quant_scheme_from_json(j.at("qat"));
    if (j.contains("teacher_checkpoint") && !j.at("teacher_checkpoint").is_null()) {
        cfg.teacher_checkpoint = j.at("teacher_checkpoint").get<std::string>();
    }
    if (j.contains("loss")) cfg.loss = loss_config_from_json(j.at("loss"));
    return cfg;
}

Mixture mixture_from_json(const json& j) {
    Mixture m;
    for (const auto& [tag, w] : j.items()) m.weights[tag] = w.get<double>();
    return m;
}

json mixture_to_json(const Mixture& m) {
    json j = json::object();
    for (const auto& [tag, w] : m.weights) j[tag] = w;
    return j;
}

std::string format_embedding_line(const json& id, const Tensor& vec) {
    std::string line = "{\"id\":" + id.dump() + ",\"embedding\":[";
    char buf[32];
    for (std::size_t i = 0; i < vec.data.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", vec.data[i]);
        if (i) line += ",";
        line += buf;
    }
    line += "]}";
    return line;
}

void emit(const json& report, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << report.dump(2) << "\n";
        return;
    }
    std::ofstream out(out_path);
    if (!out) throw ConfigError("cannot write report: " + out_path);
    out << report.dump(2) << "\n";
}

std::string scheme_tag(const std::string& ckpt_path) {
    if (checkpoint_format(ckpt_path) == "quantized") {
        return "quantized:" + quant_kind_name(load_quantized_checkpoint(ckpt_path).scheme.kind);
    }
    return "dense";
}

int run_train(const std::string& config_path, const std::string& data_dir, const std::string& stage,
              const std::string& init_path, const std::string& out_path, const std::string& trace_path) {
    json config = config_path.empty() ? json::object() : load_json_file(config_path);
    TrainConfig cfg = config.contains("train") ? train_config_from_json(config.at("train")) : TrainConfig{};
    cfg.stage = parse_stage(stage);

    EncoderConfig enc_cfg =
        config.contains("encoder") ? encoder_config_from_json(config.at("encoder")) : EncoderConfig::desk_default();

    NamedTensors init;
    if (!init_path.empty()) {
        const Checkpoint ckpt = load_checkpoint(init_path);
        if (ckpt.frozen) throw ConfigError("--init: checkpoint is frozen and cannot seed training");
        if (config.contains("encoder") &&
            encoder_config_json(ckpt.config) != encoder_config_json(enc_cfg)) {
            throw ConfigError("--init: checkpoint encoder config conflicts with the config file");
        }
        enc_cfg = ckpt.config;
        init = ckpt.tensors;
    } else {
        init = init_params(enc_cfg, cfg.seed);
    }

    const std::vector<TrainingExample> corpus = load_examples_dir(data_dir);
    const Mixture mixture = config.contains("mixture") ? mixture_from_json(config.at("mixture"))
                                                       : Mixture::uniform(dataset_tags(corpus));

    TrainResult result = train_run(cfg, enc_cfg, corpus, mixture, init);
    save_checkpoint(result.checkpoint, out_path);
    write_loss_trace(result.trace, trace_path.empty() ? out_path + ".trace.csv" : trace_path);
    return 0;
}

int run_embed(const std::string& ckpt_path, const std::string& input_path, int dim, const std::string& out_path,
              const std::string& tmpl) {
    const Checkpoint ckpt = load_any_checkpoint(ckpt_path);
    if (dim == 0) dim = ckpt.config.d_out;
    if (!ckpt.config.mrl_dim_allowed(dim)) {
        throw ConfigError("--dim: " + std::to_string(dim) + " is not a configured width for this checkpoint");
    }
    std::ifstream in(input_path);
    if (!in) throw ConfigError("cannot open input file: " + input_path);
    std::ofstream out(out_path);
    if (!out) throw ConfigError("cannot write output file: " + out_path);

    Embedder embedder(ckpt.config, ckpt.tensors);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ConfigError(input_path + ":" + std::to_string(line_no) + ": malformed record: " + e.what());
        }
        if (!j.contains("id") || !j.contains("text")) {
            throw ConfigError(input_path + ":" + std::to_string(line_no) + ": record needs fields id and text");
        }
        const Tensor vec = embedder.embed(render_template(tmpl, j.at("text").get<std::string>()), dim);
        out << format_embedding_line(j.at("id"), vec) << "\n";
    }
    return 0;
}

int run_eval(const std::string& ckpt_path, const std::string& task_kind, const std::string& data_path, int k,
             std::vector<int> dims, const std::string& out_path) {
    const Checkpoint ckpt = load_any_checkpoint(ckpt_path);
    if (dims.empty()) dims = {ckpt.config.d_out};
    const std::string tag = scheme_tag(ckpt_path);

    json report;
    report["task"] = task_kind;
    report["scheme"] = tag;
    json reports = json::array();
    if (task_kind == "retrieval") {
        report["k"] = k;
        const RetrievalTask task = load_retrieval_task(data_path);
        for (const EvalReport& r : mrl_sweep(task, ckpt, dims, k)) {
            json jr;
            jr["mrl_dim"] = r.mrl_dim;
            jr["metrics"] = r.metrics;
            reports.push_back(std::move(jr));
        }
    } else if (task_kind == "sts") {
        const STSTask task = load_sts_task(data_path);
        for (int dim : dims) {
            const EvalReport r = sts_eval(task, ckpt, dim);
            json jr;
            jr["mrl_dim"] = r.mrl_dim;
            jr["metrics"] = r.metrics;
            if (r.degenerate) jr["degenerate"] = true;
            reports.push_back(std::move(jr));
        }
    } else {
        throw ConfigError("--task: expected retrieval|sts, got \"" + task_kind + "\"");
    }
    report["reports"] = std::move(reports);
    emit(report, out_path);
    return 0;
}

int run_quantize(const std::string& ckpt_path, const std::string& scheme_name, int block,
                 const std::string& out_path) {
    QuantScheme scheme;
    scheme.kind = parse_quant_kind(scheme_name);
    scheme.block_size = block;
    scheme.validate();
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    save_quantized_checkpoint(apply_quant_scheme(ckpt, scheme), out_path);
    return 0;
}

int run_mixtures(const std::string& data_dir, int n_random, double concentration, std::uint64_t seed,
                 const std::string& report_path, const std::string& config_path) {
    const std::vector<TrainingExample> corpus = load_examples_dir(data_dir);
    const std::vector<std::string> tags = dataset_tags(corpus);

    json config = config_path.empty() ? json::object() : load_json_file(config_path);
    TrainConfig cfg = config.contains("train") ? train_config_from_json(config.at("train")) : TrainConfig{};
    if (!config.contains("train")) cfg.loss.w_distill = 0.0;  // bare searches run without a teacher
    const EncoderConfig enc_cfg =
        config.contains("encoder") ? encoder_config_from_json(config.at("encoder")) : EncoderConfig::desk_default();
    const Mixture seed_mixture =
        config.contains("mixture") ? mixture_from_json(config.at("mixture")) : Mixture::uniform(tags);

    // Per-dataset retrieval tasks built once from the corpus itself.
    std::map<std::string, RetrievalTask> tasks;
    for (const std::string& tag : tags) {
        std::vector<TrainingExample> slice;
        for (const TrainingExample& ex : corpus) {
            if (ex.dataset == tag) slice.push_back(ex);
        }
        tasks.emplace(tag, derive_retrieval_task(slice));
    }

    const NamedTensors init = init_params(enc_cfg, cfg.seed);
    const TrainFn train_fn = [&](const Mixture& mix) {
        TrainResult r = train_run(cfg, enc_cfg, corpus, mix, init);
        return std::move(r.checkpoint);
    };
    const EvalFn eval_fn = [&](const Checkpoint& ckpt, const Mixture&) {
        std::map<std::string, double> scores;
        for (const auto& [tag, task] : tasks) {
            scores[tag] = retrieval_eval(task, ckpt, ckpt.config.d_out, 1).metrics.at("recall@1");
        }
        return scores;
    };

    const MixtureSearchResult result =
        mixture_search(seed_mixture, n_random, tags, train_fn, eval_fn, concentration, seed);

    json report = json::array();
    for (const MixtureCandidate& c : result.candidates) {
        json jc;
        jc["weights"] = mixture_to_json(c.mixture);
        if (c.failed) {
            jc["failed"] = true;
            jc["error"] = c.error;
        } else {
            jc["scores"] = c.scores;
            jc["mean"] = c.mean_score;
        }
        report.push_back(std::move(jc));
    }
    emit(report, report_path);
    return 0;
}

}  // namespace

int cli_run(const std::vector<std::string>& args) {
    CLI::App app{"dual-encoder embedding toolkit"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "train an encoder checkpoint");
    std::string train_config, train_data, train_stage, train_init, train_out, train_trace;
    train->add_option("--config", train_config, "JSON config file");
    train->add_option("--data", train_data, "directory of dataset .jsonl files")->required();
    train->add_option("--stage", train_stage, "prefinetune|finetune")->required();
    train->add_option("--init", train_init, "checkpoint to initialize from");
    train->add_option("--out", train_out, "output checkpoint path")->required();
    train->add_option("--trace", train_trace, "loss trace CSV path (default: <out>.trace.csv)");

    // embed
    auto* embed = app.add_subcommand("embed", "embed texts from a JSONL file");
    std::string embed_ckpt, embed_input, embed_out, embed_template = "{content}";
    int embed_dim = 0;
    embed->add_option("--ckpt", embed_ckpt, "checkpoint path")->required();
    embed->add_option("--input", embed_input, "JSONL with id/text records")->required();
    embed->add_option("--dim", embed_dim, "embedding width (default: full)");
    embed->add_option("--out", embed_out, "output JSONL path")->required();
    embed->add_option("--template", embed_template, "prompt template with {content}");

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a task file");
    std::string eval_ckpt, eval_task, eval_data, eval_out;
    int eval_k = 10;
    std::vector<int> eval_dims;
    eval->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
    eval->add_option("--task", eval_task, "retrieval|sts")->required();
    eval->add_option("--data", eval_data, "task JSONL file")->required();
    eval->add_option("--k", eval_k, "ranking depth for retrieval metrics");
    eval->add_option("--dims", eval_dims, "embedding widths to evaluate")->delimiter(',');
    eval->add_option("--out", eval_out, "report path (default: stdout)");

    // soup
    auto* soup = app.add_subcommand("soup", "average checkpoints elementwise");
    std::vector<std::string> soup_inputs;
    std::string soup_out;
    soup->add_option("--inputs", soup_inputs, "input checkpoints")->required()->expected(-1);
    soup->add_option("--out", soup_out, "output checkpoint path")->required();

    // quantize
    auto* quantize = app.add_subcommand("quantize", "write a quantized checkpoint");
    std::string quant_ckpt, quant_scheme, quant_out;
    int quant_block = 32;
    quantize->add_option("--ckpt", quant_ckpt, "checkpoint path")->required();
    quantize->add_option("--scheme", quant_scheme, "int4-block|int8-block|mixed")->required();
    quantize->add_option("--block", quant_block, "block size for per-block schemes");
    quantize->add_option("--out", quant_out, "output path")->required();

    // mixtures
    auto* mixtures = app.add_subcommand("mixtures", "random search over training mixtures");
    std::string mix_data, mix_report, mix_config;
    int mix_n = 10;
    double mix_concentration = 1.0;
    std::uint64_t mix_seed = 0;
    mixtures->add_option("--data", mix_data, "directory of dataset .jsonl files")->required();
    mixtures->add_option("--n", mix_n, "number of random mixtures");
    mixtures->add_option("--concentration", mix_concentration, "Dirichlet concentration");
    mixtures->add_option("--seed", mix_seed, "search seed");
    mixtures->add_option("--report", mix_report, "report path (default: stdout)");
    mixtures->add_option("--config", mix_config, "JSON config file");

    std::vector<std::string> argv_rev(args.rbegin(), args.rend());
    try {
        app.parse(argv_rev);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help() << std::endl;
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }

    try {
        if (train->parsed()) {
            return run_train(train_config, train_data, train_stage, train_init, train_out, train_trace);
        }
        if (embed->parsed()) return run_embed(embed_ckpt, embed_input, embed_dim, embed_out, embed_template);
        if (eval->parsed()) return run_eval(eval_ckpt, eval_task, eval_data, eval_k, eval_dims, eval_out);
        if (soup->parsed()) {
            SoupSpec spec;
            spec.inputs = soup_inputs;
            spec.output = soup_out;
            soup_checkpoints(spec);
            return 0;
        }
        if (quantize->parsed()) return run_quantize(quant_ckpt, quant_scheme, quant_block, quant_out);
        if (mixtures->parsed()) {
            return run_mixtures(mix_data, mix_n, mix_concentration, mix_seed, mix_report, mix_config);
        }
        std::cerr << "error: no command given" << std::endl;
        return 1;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << std::endl;
        return 2;
    }
}

}  // namespace embedkit
