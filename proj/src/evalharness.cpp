#include "embedkit/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "embedkit/errors.hpp"
#include "embedkit/losses.hpp"
#include "embedkit/text_format.hpp"

namespace embedkit {

using json = nlohmann::json;

EvalTemplates::EvalTemplates() : query_template(kDefaultQueryTemplate) {}

void RetrievalTask::validate() const {
    if (queries.empty() || docs.empty()) throw ConfigError("retrieval task: needs at least one query and one doc");
    std::set<std::string> doc_ids;
    for (const Doc& d : docs) {
        if (!doc_ids.insert(d.id).second) throw ConfigError("retrieval task: duplicate doc id \"" + d.id + "\"");
    }
    std::set<std::string> query_ids;
    for (const Query& q : queries) {
        if (!query_ids.insert(q.id).second) throw ConfigError("retrieval task: duplicate query id \"" + q.id + "\"");
        auto it = qrels.find(q.id);
        if (it == qrels.end() || it->second.empty()) {
            throw ConfigError("retrieval task: query \"" + q.id + "\" has no relevant docs");
        }
    }
    for (const auto& [qid, rel] : qrels) {
        if (!query_ids.count(qid)) throw ConfigError("retrieval task: qrel for unknown query \"" + qid + "\"");
        for (const std::string& did : rel) {
            if (!doc_ids.count(did)) throw ConfigError("retrieval task: qrel names unknown doc \"" + did + "\"");
        }
    }
}

void STSTask::validate() const {
    if (pairs.size() < 2) throw ConfigError("sts task: needs at least 2 pairs");
    const double first = pairs.front().gold;
    bool varied = false;
    for (const Pair& p : pairs) {
        if (p.gold != first) varied = true;
    }
    if (!varied) throw ConfigError("sts task: gold scores must not all be equal");
}

namespace {

std::string id_of(const json& j, const char* field, const std::string& where) {
    if (!j.contains(field)) throw ConfigError(where + ": missing field \"" + field + "\"");
    const auto& v = j.at(field);
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    throw ConfigError(where + ": field \"" + field + "\" must be a string or integer id");
}

}  // namespace

RetrievalTask load_retrieval_task(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open task file: " + path);
    RetrievalTask task;
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
        const std::string type = j.value("type", "");
        if (type == "query") {
            RetrievalTask::Query q;
            q.id = id_of(j, "id", where);
            q.text = j.value("text", "");
            task.queries.push_back(std::move(q));
        } else if (type == "doc") {
            RetrievalTask::Doc d;
            d.id = id_of(j, "id", where);
            if (j.contains("title") && !j.at("title").is_null()) d.title = j.at("title").get<std::string>();
            d.text = j.value("text", "");
            task.docs.push_back(std::move(d));
        } else if (type == "qrel") {
            task.qrels[id_of(j, "query", where)].insert(id_of(j, "doc", where));
        } else {
            throw ConfigError(where + ": unknown record type \"" + type + "\"");
        }
    }
    task.validate();
    return task;
}

void write_retrieval_task(const RetrievalTask& task, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write task file: " + path);
    for (const auto& q : task.queries) {
        json j;
        j["type"] = "query";
        j["id"] = q.id;
        j["text"] = q.text;
        out << j.dump() << "\n";
    }
    for (const auto& d : task.docs) {
        json j;
        j["type"] = "doc";
        j["id"] = d.id;
        if (d.title) j["title"] = *d.title;
        j["text"] = d.text;
        out << j.dump() << "\n";
    }
    for (const auto& [qid, rel] : task.qrels) {
        for (const std::string& did : rel) {
            json j;
            j["type"] = "qrel";
            j["query"] = qid;
            j["doc"] = did;
            out << j.dump() << "\n";
        }
    }
}

STSTask load_sts_task(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open task file: " + path);
    STSTask task;
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
        STSTask::Pair p;
        if (!j.contains("a") || !j.contains("b") || !j.contains("gold")) {
            throw ConfigError(where + ": sts record needs fields a, b, gold");
        }
        p.a = j.at("a").get<std::string>();
        p.b = j.at("b").get<std::string>();
        p.gold = j.at("gold").get<double>();
        task.pairs.push_back(std::move(p));
    }
    task.validate();
    return task;
}

std::vector<std::size_t> rank_documents(const Tensor& query_vec, const std::vector<Tensor>& doc_vecs,
                                        const std::vector<std::string>& doc_ids, int k) {
    if (k < 1) throw std::invalid_argument("rank_documents: k must be >= 1");
    if (doc_vecs.size() != doc_ids.size()) throw std::invalid_argument("rank_documents: id/vector count mismatch");
    std::vector<double> scores(doc_vecs.size());
    for (std::size_t i = 0; i < doc_vecs.size(); ++i) scores[i] = cosine_sim(query_vec, doc_vecs[i]);

    std::vector<std::size_t> order(doc_vecs.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t top = std::min(static_cast<std::size_t>(k), order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (scores[a] != scores[b]) return scores[a] > scores[b];
                          return doc_ids[a] < doc_ids[b];
                      });
    order.resize(top);
    return order;
}

std::map<std::string, double> retrieval_metrics(const RetrievalTask& task,
                                                const std::vector<std::vector<std::size_t>>& top_ranked, int k) {
    if (top_ranked.size() != task.queries.size()) {
        throw std::invalid_argument("retrieval_metrics: ranking count mismatch");
    }
    auto metrics_at = [&](int kk) {
        double recall = 0.0, mrr = 0.0;
        for (std::size_t qi = 0; qi < task.queries.size(); ++qi) {
            const auto& rel = task.qrels.at(task.queries[qi].id);
            const auto& ranked = top_ranked[qi];
            const std::size_t depth = std::min(static_cast<std::size_t>(kk), ranked.size());
            for (std::size_t r = 0; r < depth; ++r) {
                if (rel.count(task.docs[ranked[r]].id)) {
                    recall += 1.0;
                    mrr += 1.0 / static_cast<double>(r + 1);
                    break;
                }
            }
        }
        const double n = static_cast<double>(task.queries.size());
        return std::pair<double, double>(recall / n, mrr / n);
    };

    std::map<std::string, double> out;
    const auto [recall_k, mrr_k] = metrics_at(k);
    out["recall@" + std::to_string(k)] = recall_k;
    out["mrr@" + std::to_string(k)] = mrr_k;
    // conventional reporting pair, derivable from the same rankings
    if (k >= 1) {
        const auto [r1, m1] = metrics_at(1);
        out["recall@1"] = r1;
        (void)m1;
    }
    if (k >= 10) {
        const auto [r10, m10] = metrics_at(10);
        out["mrr@10"] = m10;
        (void)r10;
    }
    return out;
}

EvalReport retrieval_eval(const RetrievalTask& task, const Checkpoint& ckpt, int mrl_dim, int k,
                          const EvalTemplates& templates) {
    if (k < 1) throw ConfigError("retrieval eval: k must be >= 1");
    task.validate();
    Embedder embedder(ckpt.config, ckpt.tensors, /*cache=*/true);

    std::vector<Tensor> doc_vecs;
    std::vector<std::string> doc_ids;
    doc_vecs.reserve(task.docs.size());
    for (const auto& d : task.docs) {
        doc_vecs.push_back(embedder.embed(format_passage(d.title, d.text), mrl_dim));
        doc_ids.push_back(d.id);
    }

    std::vector<std::vector<std::size_t>> top_ranked;
    top_ranked.reserve(task.queries.size());
    for (const auto& q : task.queries) {
        const Tensor qv = embedder.embed(format_query(templates.query_template, q.text), mrl_dim);
        top_ranked.push_back(rank_documents(qv, doc_vecs, doc_ids, k));
    }

    EvalReport report;
    report.metrics = retrieval_metrics(task, top_ranked, k);
    report.mrl_dim = mrl_dim;
    return report;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b, bool* degenerate) {
    if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("spearman: need two equal-length series");
    auto ranks = [](const std::vector<double>& v) {
        const std::size_t n = v.size();
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
        std::vector<double> r(n, 0.0);
        std::size_t i = 0;
        while (i < n) {
            std::size_t j = i;
            while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
            const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
            for (std::size_t t = i; t <= j; ++t) r[order[t]] = avg;
            i = j + 1;
        }
        return r;
    };
    const std::vector<double> ra = ranks(a);
    const std::vector<double> rb = ranks(b);
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
    if (degenerate) *degenerate = false;
    if (va == 0.0 || vb == 0.0) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    return cov / std::sqrt(va * vb);
}

EvalReport sts_eval(const STSTask& task, const Checkpoint& ckpt, int mrl_dim, const EvalTemplates& templates) {
    task.validate();
    Embedder embedder(ckpt.config, ckpt.tensors, /*cache=*/true);
    std::vector<double> predicted, gold;
    predicted.reserve(task.pairs.size());
    gold.reserve(task.pairs.size());
    for (const auto& p : task.pairs) {
        const Tensor va = embedder.embed(render_template(templates.sts_template, p.a), mrl_dim);
        const Tensor vb = embedder.embed(render_template(templates.sts_template, p.b), mrl_dim);
        predicted.push_back(cosine_sim(va, vb));
        gold.push_back(p.gold);
    }
    EvalReport report;
    bool degenerate = false;
    report.metrics["spearman"] = spearman(predicted, gold, &degenerate);
    report.degenerate = degenerate;
    report.mrl_dim = mrl_dim;
    return report;
}

std::vector<EvalReport> mrl_sweep(const RetrievalTask& task, const Checkpoint& ckpt, const std::vector<int>& dims,
                                  int k, const EvalTemplates& templates) {
    if (k < 1) throw ConfigError("mrl sweep: k must be >= 1");
    task.validate();
    for (int dim : dims) {
        if (!ckpt.config.mrl_dim_allowed(dim)) {
            throw ConfigError("mrl sweep: width " + std::to_string(dim) + " is not configured for this checkpoint");
        }
    }
    Embedder embedder(ckpt.config, ckpt.tensors, /*cache=*/true);

    // One raw embedding pass; truncation and renormalization happen post-hoc.
    std::vector<Tensor> doc_raw;
    std::vector<std::string> doc_ids;
    doc_raw.reserve(task.docs.size());
    for (const auto& d : task.docs) {
        doc_raw.push_back(embedder.embed_raw(format_passage(d.title, d.text)));
        doc_ids.push_back(d.id);
    }
    std::vector<Tensor> query_raw;
    query_raw.reserve(task.queries.size());
    for (const auto& q : task.queries) {
        query_raw.push_back(embedder.embed_raw(format_query(templates.query_template, q.text)));
    }

    std::vector<EvalReport> reports;
    for (int dim : dims) {
        std::vector<Tensor> doc_vecs;
        doc_vecs.reserve(doc_raw.size());
        for (const Tensor& raw : doc_raw) doc_vecs.push_back(normalize_prefix_value(raw, dim));
        std::vector<std::vector<std::size_t>> top_ranked;
        top_ranked.reserve(query_raw.size());
        for (const Tensor& raw : query_raw) {
            top_ranked.push_back(rank_documents(normalize_prefix_value(raw, dim), doc_vecs, doc_ids, k));
        }
        EvalReport report;
        report.metrics = retrieval_metrics(task, top_ranked, k);
        report.mrl_dim = dim;
        reports.push_back(std::move(report));
    }
    return reports;
}

}  // namespace embedkit
