#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "embedkit/errors.hpp"
#include "embedkit/evalharness.hpp"
#include "embedkit/losses.hpp"
#include "embedkit/text_format.hpp"
#include "test_util.hpp"

using namespace embedkit;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("embedkit_eval_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

EncoderConfig tiny_config() {
    EncoderConfig cfg;
    cfg.n_layers = 1;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.d_ffn = 16;
    cfg.d_intermediate = 16;
    cfg.d_out = 8;
    cfg.max_seq_len = 48;
    cfg.mrl_dims = {8, 4};
    return cfg;
}

Checkpoint tiny_ckpt(std::uint64_t seed) {
    Checkpoint c;
    c.config = tiny_config();
    c.tensors = init_params(c.config, seed);
    return c;
}

std::string padded(const char* p, int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%s%03d", p, i);
    return buf;
}

// Rankings where query i has its relevant doc at a chosen raw rank are easier
// to set up on vectors directly, so build tasks from synthetic score oracles.
RetrievalTask word_task(int n_queries, int n_docs, std::mt19937_64& rng) {
    RetrievalTask task;
    std::uniform_int_distribution<int> pick_doc(0, n_docs - 1);
    for (int d = 0; d < n_docs; ++d) {
        RetrievalTask::Doc doc;
        doc.id = padded("d", d);
        doc.text = "doc text " + std::to_string(d * 37 % 101) + " " + std::to_string(d);
        if (d % 3 == 0) doc.title = "t" + std::to_string(d);
        task.docs.push_back(std::move(doc));
    }
    for (int q = 0; q < n_queries; ++q) {
        RetrievalTask::Query query;
        query.id = padded("q", q);
        query.text = "query " + std::to_string(q * 13 % 89) + " " + std::to_string(q);
        task.queries.push_back(query);
        const int n_rel = 1 + (q % 2);
        for (int r = 0; r < n_rel; ++r) task.qrels[query.id].insert(padded("d", pick_doc(rng)));
    }
    return task;
}

// Full-sort reference for the harness ranking/metric path.
std::map<std::string, double> brute_force_metrics(const RetrievalTask& task, const Checkpoint& ckpt, int mrl_dim,
                                                  int k) {
    Embedder embedder(ckpt.config, ckpt.tensors, true);
    std::vector<Tensor> docs;
    for (const auto& d : task.docs) docs.push_back(embedder.embed(format_passage(d.title, d.text), mrl_dim));

    double recall = 0.0, mrr = 0.0;
    EvalTemplates templates;
    for (const auto& q : task.queries) {
        const Tensor qv = embedder.embed(format_query(templates.query_template, q.text), mrl_dim);
        std::vector<std::size_t> order(task.docs.size());
        std::iota(order.begin(), order.end(), 0);
        std::vector<double> scores(task.docs.size());
        for (std::size_t i = 0; i < docs.size(); ++i) scores[i] = cosine_sim(qv, docs[i]);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (scores[a] != scores[b]) return scores[a] > scores[b];
            return task.docs[a].id < task.docs[b].id;
        });
        const auto& rel = task.qrels.at(q.id);
        for (int r = 0; r < std::min<int>(k, static_cast<int>(order.size())); ++r) {
            if (rel.count(task.docs[order[static_cast<std::size_t>(r)]].id)) {
                recall += 1.0;
                mrr += 1.0 / (r + 1);
                break;
            }
        }
    }
    const double n = static_cast<double>(task.queries.size());
    return {{"recall@" + std::to_string(k), recall / n}, {"mrr@" + std::to_string(k), mrr / n}};
}

// O(n^2) definitional average ranks, then Pearson.
double spearman_oracle(const std::vector<double>& a, const std::vector<double>& b) {
    auto rank_of = [](const std::vector<double>& v) {
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            double less = 0.0, equal = 0.0;
            for (double u : v) {
                if (u < v[i]) ++less;
                if (u == v[i]) ++equal;
            }
            r[i] = less + (equal - 1.0) / 2.0 + 1.0;
        }
        return r;
    };
    const auto ra = rank_of(a), rb = rank_of(b);
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= n;
    mb /= n;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    return cov / std::sqrt(va * vb);
}

}  // namespace

TEST_CASE("reciprocal rank from known positions") {
    // craft rankings directly through rank_documents on constructed vectors
    const std::vector<std::string> ids{"d1", "d2", "d3", "d4"};
    std::vector<Tensor> docs{Tensor::row({1, 0}), Tensor::row({0.9, 0.1}), Tensor::row({0.5, 0.5}),
                             Tensor::row({0, 1})};
    for (Tensor& d : docs) {
        double n2 = 0.0;
        for (double v : d.data) n2 += v * v;
        for (double& v : d.data) v /= std::sqrt(n2);
    }
    const Tensor query = Tensor::row({1, 0});

    RetrievalTask task;
    task.queries.push_back({"q", "unused"});
    for (const auto& id : ids) task.docs.push_back({id, std::nullopt, "unused"});
    task.qrels["q"] = {"d3"};  // ranks third by similarity
    const auto ranking = rank_documents(query, docs, ids, 10);
    const auto metrics = retrieval_metrics(task, {ranking}, 10);
    CHECK(metrics.at("mrr@10") == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(metrics.at("recall@10") == 1.0);
    CHECK(metrics.at("recall@1") == 0.0);

    task.qrels["q"] = {"d4"};
    const auto metrics2 = retrieval_metrics(task, {rank_documents(query, docs, ids, 2)}, 2);
    CHECK(metrics2.at("recall@2") == 0.0);
    CHECK(metrics2.at("mrr@2") == 0.0);
}

TEST_CASE("two queries with first-relevant ranks one and four") {
    RetrievalTask task;
    const std::vector<std::string> ids{"d0", "d1", "d2", "d3"};
    for (const auto& id : ids) task.docs.push_back({id, std::nullopt, "x"});
    task.queries.push_back({"qa", "x"});
    task.queries.push_back({"qb", "x"});
    task.qrels["qa"] = {"d0"};
    task.qrels["qb"] = {"d3"};
    // identity rankings: doc j at rank j
    const std::vector<std::vector<std::size_t>> rankings{{0, 1, 2, 3}, {0, 1, 2, 3}};
    const auto metrics = retrieval_metrics(task, rankings, 10);
    CHECK(metrics.at("mrr@10") == doctest::Approx(0.625).epsilon(1e-15));
}

TEST_CASE("ranking ties break on ascending doc id and survive rescaling") {
    std::mt19937_64 rng(3);
    const int n = 12;
    std::vector<Tensor> docs;
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) {
        docs.push_back(testutil::unit_rows(1, 6, rng));
        ids.push_back(padded("d", (n - i) * 7 % 97));
    }
    docs[4] = docs[9];  // exact tie
    const Tensor q = testutil::unit_rows(1, 6, rng);
    const auto base = rank_documents(q, docs, ids, n);

    const std::size_t pos4 = static_cast<std::size_t>(
        std::find(base.begin(), base.end(), 4) - base.begin());
    const std::size_t pos9 = static_cast<std::size_t>(
        std::find(base.begin(), base.end(), 9) - base.begin());
    if (ids[4] < ids[9]) {
        CHECK(pos4 < pos9);
    } else {
        CHECK(pos9 < pos4);
    }

    std::vector<Tensor> rescaled = docs;
    for (Tensor& d : rescaled) {
        for (double& v : d.data) v *= 17.0;
    }
    CHECK(rank_documents(q, rescaled, ids, n) == base);
}

TEST_CASE("harness metrics match the full-sort brute force on random tasks") {
    const Checkpoint ckpt = tiny_ckpt(7);
    std::mt19937_64 rng(19);
    for (int trial = 0; trial < 6; ++trial) {
        const RetrievalTask task = word_task(4 + trial, 10 + 5 * trial, rng);
        const int k = 1 + trial;
        const EvalReport report = retrieval_eval(task, ckpt, ckpt.config.d_out, k);
        const auto want = brute_force_metrics(task, ckpt, ckpt.config.d_out, k);
        CHECK(report.metrics.at("recall@" + std::to_string(k)) ==
              doctest::Approx(want.at("recall@" + std::to_string(k))).epsilon(1e-15));
        CHECK(report.metrics.at("mrr@" + std::to_string(k)) ==
              doctest::Approx(want.at("mrr@" + std::to_string(k))).epsilon(1e-15));
    }
}

TEST_CASE("reports are deterministic") {
    const Checkpoint ckpt = tiny_ckpt(7);
    std::mt19937_64 rng(23);
    const RetrievalTask task = word_task(5, 12, rng);
    const EvalReport a = retrieval_eval(task, ckpt, 4, 3);
    const EvalReport b = retrieval_eval(task, ckpt, 4, 3);
    CHECK(a.metrics == b.metrics);
}

TEST_CASE("spearman basics and tie handling") {
    CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
    CHECK(spearman({1, 2, 3, 4}, {9, 7, 5, 3}) == doctest::Approx(-1.0));
    // monotone but nonlinear
    CHECK(spearman({1, 2, 3, 4}, {1, 8, 27, 64}) == doctest::Approx(1.0));

    std::mt19937_64 rng(29);
    std::uniform_int_distribution<int> small(0, 4);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> a(15), b(15);
        for (std::size_t i = 0; i < a.size(); ++i) {
            a[i] = small(rng);  // many ties
            b[i] = small(rng);
        }
        if (std::all_of(a.begin(), a.end(), [&](double v) { return v == a[0]; })) a[0] += 1.0;
        if (std::all_of(b.begin(), b.end(), [&](double v) { return v == b[0]; })) b[0] += 1.0;
        CHECK(spearman(a, b) == doctest::Approx(spearman_oracle(a, b)).epsilon(1e-12));
    }

    bool degenerate = false;
    CHECK(spearman({1, 1, 1}, {1, 2, 3}, &degenerate) == 0.0);
    CHECK(degenerate);
}

TEST_CASE("sts_eval flags zero-variance predictions") {
    STSTask task;
    task.pairs.push_back({"same text", "same text", 0.9});
    task.pairs.push_back({"same text", "same text", 0.1});
    const Checkpoint ckpt = tiny_ckpt(3);
    const EvalReport report = sts_eval(task, ckpt, ckpt.config.d_out);
    CHECK(report.degenerate);
    CHECK(report.metrics.at("spearman") == 0.0);
}

TEST_CASE("sts_eval correlates embeddings against gold") {
    STSTask task;
    task.pairs.push_back({"alpha beta gamma", "alpha beta gamma", 1.0});
    task.pairs.push_back({"alpha beta gamma", "alpha beta delta", 0.7});
    task.pairs.push_back({"alpha beta gamma", "notes on zz", 0.2});
    const Checkpoint ckpt = tiny_ckpt(5);
    const EvalReport report = sts_eval(task, ckpt, ckpt.config.d_out);
    CHECK(report.metrics.at("spearman") >= -1.0);
    CHECK(report.metrics.at("spearman") <= 1.0);
}

TEST_CASE("task files round-trip and validate") {
    TempDir dir;
    std::mt19937_64 rng(31);
    const RetrievalTask task = word_task(4, 9, rng);
    const std::string path = (dir.path / "task.jsonl").string();
    write_retrieval_task(task, path);
    const RetrievalTask loaded = load_retrieval_task(path);
    CHECK(loaded.queries.size() == task.queries.size());
    CHECK(loaded.docs.size() == task.docs.size());
    CHECK(loaded.qrels == task.qrels);

    const std::string sts_path = (dir.path / "sts.jsonl").string();
    {
        std::ofstream out(sts_path);
        out << R"({"a":"x","b":"y","gold":0.5})" << "\n";
        out << R"({"a":"x","b":"z","gold":0.2})" << "\n";
    }
    const STSTask sts = load_sts_task(sts_path);
    CHECK(sts.pairs.size() == 2);

    {
        std::ofstream out(sts_path);
        out << R"({"a":"x","b":"y","gold":0.5})" << "\n";
    }
    CHECK_THROWS_AS(load_sts_task(sts_path), ConfigError);  // needs two pairs

    RetrievalTask bad = task;
    bad.qrels.erase(bad.queries.front().id);
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("mrl sweep reuses one pass and matches per-width eval") {
    const Checkpoint ckpt = tiny_ckpt(11);
    std::mt19937_64 rng(37);
    const RetrievalTask task = word_task(5, 14, rng);

    const auto sweep = mrl_sweep(task, ckpt, {8, 4}, 3);
    REQUIRE(sweep.size() == 2);
    const EvalReport full = retrieval_eval(task, ckpt, 8, 3);
    CHECK(sweep[0].metrics == full.metrics);
    const EvalReport half = retrieval_eval(task, ckpt, 4, 3);
    CHECK(sweep[1].metrics == half.metrics);

    CHECK_THROWS_AS(mrl_sweep(task, ckpt, {5}, 3), ConfigError);
}
