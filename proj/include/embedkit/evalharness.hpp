#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "embedkit/checkpoint.hpp"
#include "embedkit/tensor.hpp"

namespace embedkit {

struct RetrievalTask {
    struct Query {
        std::string id;
        std::string text;
    };
    struct Doc {
        std::string id;
        std::optional<std::string> title;
        std::string text;
    };
    std::vector<Query> queries;
    std::vector<Doc> docs;
    std::map<std::string, std::set<std::string>> qrels;

    void validate() const;
};

struct STSTask {
    struct Pair {
        std::string a;
        std::string b;
        double gold = 0.0;
    };
    std::vector<Pair> pairs;

    void validate() const;
};

struct EvalReport {
    std::map<std::string, double> metrics;
    int mrl_dim = 0;
    std::string scheme = "dense";
    bool degenerate = false;
};

struct EvalTemplates {
    std::string query_template;  // {content} required
    std::string sts_template = "{content}";

    EvalTemplates();
};

RetrievalTask load_retrieval_task(const std::string& path);
STSTask load_sts_task(const std::string& path);
void write_retrieval_task(const RetrievalTask& task, const std::string& path);

// Documents ranked by cosine similarity against one query embedding;
// ties break toward the ascending document id.
std::vector<std::size_t> rank_documents(const Tensor& query_vec, const std::vector<Tensor>& doc_vecs,
                                        const std::vector<std::string>& doc_ids, int k);

// Recall@k and MRR@k from per-query rankings (plus the conventional
// recall@1 / mrr@10 pair when k allows).
std::map<std::string, double> retrieval_metrics(const RetrievalTask& task,
                                                const std::vector<std::vector<std::size_t>>& top_ranked, int k);

EvalReport retrieval_eval(const RetrievalTask& task, const Checkpoint& ckpt, int mrl_dim, int k,
                          const EvalTemplates& templates = EvalTemplates());
EvalReport sts_eval(const STSTask& task, const Checkpoint& ckpt, int mrl_dim,
                    const EvalTemplates& templates = EvalTemplates());
std::vector<EvalReport> mrl_sweep(const RetrievalTask& task, const Checkpoint& ckpt, const std::vector<int>& dims,
                                  int k, const EvalTemplates& templates = EvalTemplates());

// Average-rank Spearman correlation.
double spearman(const std::vector<double>& a, const std::vector<double>& b, bool* degenerate = nullptr);

}  // namespace embedkit
