#include "embedkit/losses.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "embedkit/errors.hpp"

namespace embedkit {

namespace {

constexpr double kUnitNormTol = 1e-9;

void check_unit_rows(const Tensor& m, const char* what) {
    for (int i = 0; i < m.rows(); ++i) {
        double n2 = 0.0;
        for (int j = 0; j < m.cols(); ++j) n2 += m.at(i, j) * m.at(i, j);
        if (std::abs(std::sqrt(n2) - 1.0) > kUnitNormTol) {
            throw std::invalid_argument(std::string(what) + ": row " + std::to_string(i) +
                                        " is not unit-norm (|v| = " + std::to_string(std::sqrt(n2)) + ")");
        }
    }
}

void check_dup(const BoolMat& dup, int b, const char* what) {
    if (static_cast<int>(dup.size()) != b) {
        throw std::invalid_argument(std::string(what) + ": duplicate matrix size mismatch");
    }
    for (int i = 0; i < b; ++i) {
        if (static_cast<int>(dup[static_cast<std::size_t>(i)].size()) != b) {
            throw std::invalid_argument(std::string(what) + ": duplicate matrix is not square");
        }
        if (!dup[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)]) {
            throw std::invalid_argument(std::string(what) + ": duplicate matrix diagonal must be true");
        }
        for (int j = 0; j < b; ++j) {
            if (dup[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] !=
                dup[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)]) {
                throw std::invalid_argument(std::string(what) + ": duplicate matrix must be symmetric");
            }
        }
    }
}

}  // namespace

void LossConfig::validate(int d_out) const {
    if (!(tau > 0.0)) throw ConfigError("loss config: tau must be > 0");
    if (alpha < 0.0) throw ConfigError("loss config: alpha must be nonnegative");
    for (int d : mrl_dims) {
        if (d < 1 || d > d_out) throw ConfigError("loss config: mrl dim " + std::to_string(d) + " out of range");
    }
    for (std::size_t i = 1; i < mrl_dims.size(); ++i) {
        if (mrl_dims[i] >= mrl_dims[i - 1]) throw ConfigError("loss config: mrl_dims must be strictly descending");
    }
}

std::vector<int> LossConfig::training_dims(int d_out) const {
    std::vector<int> dims;
    dims.push_back(d_out);
    for (int d : mrl_dims) {
        if (d != d_out) dims.push_back(d);
    }
    std::sort(dims.begin(), dims.end(), std::greater<int>());
    return dims;
}

BoolMat dup_matrix(const std::vector<std::string>& items) {
    const std::size_t b = items.size();
    BoolMat dup(b, std::vector<bool>(b, false));
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < b; ++j) dup[i][j] = items[i] == items[j];
    }
    return dup;
}

double cosine_sim(const Tensor& x, const Tensor& y) {
    if (x.numel() != y.numel()) throw std::invalid_argument("cosine_sim: length mismatch");
    double dot = 0.0, nx = 0.0, ny = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        dot += x.data[i] * y.data[i];
        nx += x.data[i] * x.data[i];
        ny += y.data[i] * y.data[i];
    }
    if (nx == 0.0 || ny == 0.0) throw std::invalid_argument("cosine_sim: zero vector");
    return dot / (std::sqrt(nx) * std::sqrt(ny));
}

double hardness_weight(double s_neg, double alpha) {
    return std::exp(alpha * s_neg);
}

Tensor tn_mask(const BoolMat& dup_q, const BoolMat& dup_p, bool literal_diagonal) {
    const int b = static_cast<int>(dup_q.size());
    check_dup(dup_q, b, "tn_mask(dup_q)");
    check_dup(dup_p, b, "tn_mask(dup_p)");
    Tensor mask = Tensor::full(b, b, 1.0);
    for (int i = 0; i < b; ++i) {
        for (int j = 0; j < b; ++j) {
            const bool dup = dup_q[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] ||
                             dup_p[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            if (dup && (i != j || literal_diagonal)) mask.at(i, j) = 0.0;
        }
    }
    return mask;
}

std::vector<double> current_hardness(const Graph& g, const BatchNodes& be, double alpha) {
    if (!be.p_neg) return {};
    const Tensor& q = g.value(be.q);
    const Tensor& n = g.value(*be.p_neg);
    std::vector<double> w(static_cast<std::size_t>(q.rows()));
    for (int i = 0; i < q.rows(); ++i) {
        double s = 0.0;
        for (int j = 0; j < q.cols(); ++j) s += q.at(i, j) * n.at(i, j);
        w[static_cast<std::size_t>(i)] = hardness_weight(s, alpha);
    }
    return w;
}

NodeId l2_normalize_rows(Graph& g, NodeId x) {
    const int n = g.value(x).cols();
    return g.mul(x, g.col_broadcast(g.rsqrt(g.dot_rows(x, x)), n));
}

NodeId contrastive_loss(Graph& g, const BatchNodes& be, const LossConfig& cfg,
                        const std::vector<double>* fixed_hardness) {
    const Tensor& q = g.value(be.q);
    const Tensor& p = g.value(be.p_pos);
    const int b = q.rows();
    if (b < 1) throw std::invalid_argument("contrastive_loss: empty batch");
    if (!q.same_shape(p)) throw std::invalid_argument("contrastive_loss: query/positive shape mismatch");
    check_unit_rows(q, "contrastive_loss(q)");
    check_unit_rows(p, "contrastive_loss(p+)");
    std::vector<double> w;
    if (be.p_neg) {
        const Tensor& n = g.value(*be.p_neg);
        if (!q.same_shape(n)) throw std::invalid_argument("contrastive_loss: negative shape mismatch");
        check_unit_rows(n, "contrastive_loss(p-)");
        w = fixed_hardness ? *fixed_hardness : current_hardness(g, be, cfg.alpha);
        if (static_cast<int>(w.size()) != b) {
            throw std::invalid_argument("contrastive_loss: hardness weight count mismatch");
        }
    }

    // Rows are unit vectors, so plain dot products are cosine similarities.
    NodeId sims = g.scale(g.matmul_nt(be.q, be.p_pos), 1.0 / cfg.tau);
    NodeId masked = g.mul(g.exp(sims), g.constant(tn_mask(be.dup_q, be.dup_p, cfg.literal_tn_diagonal)));
    NodeId denom = g.row_sum(masked);

    if (be.p_neg) {
        NodeId neg_term = g.mul(g.constant(Tensor::column(std::move(w))),
                                g.exp(g.scale(g.dot_rows(be.q, *be.p_neg), 1.0 / cfg.tau)));
        denom = g.add(denom, neg_term);
    }

    NodeId pos = g.scale(g.dot_rows(be.q, be.p_pos), 1.0 / cfg.tau);
    NodeId per_row = g.sub(g.log(denom), pos);
    return g.scale(g.sum_all(per_row), 1.0 / static_cast<double>(b));
}

NodeId spreadout_loss(Graph& g, NodeId q, NodeId p_pos) {
    const Tensor& vq = g.value(q);
    const Tensor& vp = g.value(p_pos);
    const int b = vq.rows();
    if (b < 2) throw std::invalid_argument("spreadout_loss: batch must have at least 2 rows");
    if (!vq.same_shape(vp)) throw std::invalid_argument("spreadout_loss: shape mismatch");
    check_unit_rows(vq, "spreadout_loss(q)");
    check_unit_rows(vp, "spreadout_loss(p+)");

    Tensor off_diag = Tensor::full(b, b, 1.0);
    for (int i = 0; i < b; ++i) off_diag.at(i, i) = 0.0;
    NodeId mask = g.constant(std::move(off_diag));
    const double norm = 1.0 / (static_cast<double>(b) * static_cast<double>(b - 1));

    auto second_moment = [&](NodeId x) {
        NodeId gram = g.matmul_nt(x, x);
        return g.scale(g.sum_all(g.mul(g.mul(gram, gram), mask)), norm);
    };
    return g.add(second_moment(q), second_moment(p_pos));
}

NodeId embed_match_loss(Graph& g, const BatchNodes& student, const TeacherEmbeddings& teacher) {
    const Tensor& sq = g.value(student.q);
    const int b = sq.rows();
    if (b < 1) throw std::invalid_argument("embed_match_loss: empty batch");
    if (!sq.same_shape(teacher.q)) {
        throw std::invalid_argument("embed_match_loss: teacher/student dimension mismatch");
    }
    check_unit_rows(teacher.q, "embed_match_loss(teacher q)");
    check_unit_rows(teacher.p_pos, "embed_match_loss(teacher p+)");

    auto msd = [&](NodeId s, const Tensor& t) {
        if (!g.value(s).same_shape(t)) {
            throw std::invalid_argument("embed_match_loss: teacher/student dimension mismatch");
        }
        NodeId diff = g.sub(s, g.constant(t));
        return g.scale(g.sum_all(g.mul(diff, diff)), 1.0 / static_cast<double>(b));
    };

    NodeId loss = g.add(msd(student.q, teacher.q), msd(student.p_pos, teacher.p_pos));
    if (student.p_neg) {
        if (!teacher.p_neg) throw std::invalid_argument("embed_match_loss: teacher is missing negative embeddings");
        check_unit_rows(*teacher.p_neg, "embed_match_loss(teacher p-)");
        loss = g.add(loss, msd(*student.p_neg, *teacher.p_neg));
    }
    return loss;
}

NodeId total_loss(Graph& g, const std::map<int, BatchNodes>& per_dim,
                  const std::optional<TeacherEmbeddings>& teacher, const LossConfig& cfg, int d_out,
                  LossParts* parts, const std::map<int, std::vector<double>>* fixed_hardness) {
    cfg.validate(d_out);
    const std::vector<int> dims = cfg.training_dims(d_out);
    LossParts acc;

    NodeId loss = g.constant(Tensor::scalar(0.0));
    for (int dim : dims) {
        auto it = per_dim.find(dim);
        if (it == per_dim.end()) {
            throw std::invalid_argument("total_loss: missing embeddings for width " + std::to_string(dim));
        }
        const std::vector<double>* w = nullptr;
        if (fixed_hardness) {
            auto fit = fixed_hardness->find(dim);
            if (fit != fixed_hardness->end()) w = &fit->second;
        }
        NodeId lc = contrastive_loss(g, it->second, cfg, w);
        NodeId ls = spreadout_loss(g, it->second.q, it->second.p_pos);
        acc.contrastive += g.value(lc).data[0];
        acc.spreadout += g.value(ls).data[0];
        loss = g.add(loss, g.add(g.scale(lc, cfg.w_contrastive), g.scale(ls, cfg.w_spreadout)));
    }

    if (cfg.w_distill != 0.0) {
        if (!teacher) throw std::invalid_argument("total_loss: distillation weight is nonzero but no teacher given");
        auto it = per_dim.find(d_out);
        NodeId ld = embed_match_loss(g, it->second, *teacher);
        acc.distill = g.value(ld).data[0];
        loss = g.add(loss, g.scale(ld, cfg.w_distill));
    }

    if (parts) *parts = acc;
    return loss;
}

double spreadout_mean_term(const Tensor& q, const Tensor& p_pos) {
    const int b = q.rows();
    if (b < 2) throw std::invalid_argument("spreadout_mean_term: batch must have at least 2 rows");
    const double norm = 1.0 / (static_cast<double>(b) * static_cast<double>(b - 1));
    auto first_moment = [&](const Tensor& x) {
        double s = 0.0;
        for (int i = 0; i < b; ++i) {
            for (int j = 0; j < b; ++j) {
                if (i == j) continue;
                double dot = 0.0;
                for (int c = 0; c < x.cols(); ++c) dot += x.at(i, c) * x.at(j, c);
                s += dot;
            }
        }
        return s * norm;
    };
    return first_moment(q) + first_moment(p_pos);
}

}  // namespace embedkit
