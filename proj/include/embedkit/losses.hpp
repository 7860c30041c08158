#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "embedkit/graph.hpp"
#include "embedkit/tensor.hpp"

namespace embedkit {

struct LossConfig {
    double tau = 0.05;
    double alpha = 5.0;
    std::vector<int> mrl_dims;  // prefix widths; the full width is always trained
    double w_contrastive = 1.0;
    double w_spreadout = 1.0;
    double w_distill = 1.0;
    // Taken literally, the duplicate mask also removes the diagonal and with
    // it the positive term; off by default, kept as an ablation switch.
    bool literal_tn_diagonal = false;

    void validate(int d_out) const;
    std::vector<int> training_dims(int d_out) const;  // descending, unique
};

using BoolMat = std::vector<std::vector<bool>>;

BoolMat dup_matrix(const std::vector<std::string>& items);

// In-batch embeddings at one prefix width, plus the duplicate structure of
// the underlying examples. Rows must be unit-norm (±1e-9).
struct BatchNodes {
    NodeId q = -1;
    NodeId p_pos = -1;
    std::optional<NodeId> p_neg;
    BoolMat dup_q;
    BoolMat dup_p;
};

// Frozen teacher targets at the full width; rows unit-norm.
struct TeacherEmbeddings {
    Tensor q;
    Tensor p_pos;
    std::optional<Tensor> p_neg;
};

double cosine_sim(const Tensor& x, const Tensor& y);
double hardness_weight(double s_neg, double alpha);
Tensor tn_mask(const BoolMat& dup_q, const BoolMat& dup_p, bool literal_diagonal = false);

// Current stop-gradient hardness weights of a batch (one per row).
std::vector<double> current_hardness(const Graph& g, const BatchNodes& be, double alpha);

// Row-wise unit normalization, in-graph.
NodeId l2_normalize_rows(Graph& g, NodeId x);

NodeId contrastive_loss(Graph& g, const BatchNodes& be, const LossConfig& cfg,
                        const std::vector<double>* fixed_hardness = nullptr);
NodeId spreadout_loss(Graph& g, NodeId q, NodeId p_pos);
NodeId embed_match_loss(Graph& g, const BatchNodes& student, const TeacherEmbeddings& teacher);

struct LossParts {
    double contrastive = 0.0;
    double spreadout = 0.0;
    double distill = 0.0;
};

// Sum of contrastive and spread-out terms over every training width plus the
// distillation term at the full width.
NodeId total_loss(Graph& g, const std::map<int, BatchNodes>& per_dim,
                  const std::optional<TeacherEmbeddings>& teacher, const LossConfig& cfg, int d_out,
                  LossParts* parts = nullptr,
                  const std::map<int, std::vector<double>>* fixed_hardness = nullptr);

// First-moment diagnostic of the spread-out regularizer; reported only,
// never part of the training objective.
double spreadout_mean_term(const Tensor& q, const Tensor& p_pos);

}  // namespace embedkit
