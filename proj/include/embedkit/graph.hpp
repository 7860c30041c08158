#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "embedkit/tensor.hpp"

namespace embedkit {

using NodeId = std::int32_t;
using GradMap = std::map<std::string, Tensor>;

// Recording tape for reverse-mode differentiation. Nodes are appended in
// construction order, which is already a topological order; backward() walks
// the tape in reverse with a fixed accumulation order so repeated runs are
// bit-identical. All ops are matrix-shaped; scalars are [1 x 1].
class Graph {
public:
    // leaves
    NodeId constant(Tensor value);
    NodeId param(const std::string& name, Tensor value);  // name must be unique

    // elementwise
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId scale(NodeId a, double c);
    NodeId add_scalar(NodeId a, double c);
    NodeId exp(NodeId a);
    NodeId log(NodeId a);
    NodeId rsqrt(NodeId a);  // requires strictly positive input
    NodeId gelu(NodeId a);

    // linear algebra
    NodeId matmul(NodeId a, NodeId b);     // [m x k]·[k x n]
    NodeId matmul_nt(NodeId a, NodeId b);  // [m x k]·[n x k]ᵀ

    // reductions and broadcasts
    NodeId row_softmax(NodeId a);                 // per-row, max-shifted
    NodeId row_sum(NodeId a);                     // [m x n] -> [m x 1]
    NodeId dot_rows(NodeId a, NodeId b);          // row-wise dot -> [m x 1]
    NodeId sum_all(NodeId a);                     // -> [1 x 1]
    NodeId col_broadcast(NodeId a, int n);        // [m x 1] -> [m x n]
    NodeId row_broadcast(NodeId a, int m);        // [1 x n] -> [m x n]

    // structure
    NodeId slice_rows(NodeId a, int r0, int h);
    NodeId slice_cols(NodeId a, int c0, int w);
    NodeId concat_rows(const std::vector<NodeId>& parts);
    NodeId concat_cols(const std::vector<NodeId>& parts);

    // model-specific primitives
    NodeId embed_rows(NodeId table, std::vector<int> ids);          // gather rows, scatter-add adjoint
    NodeId rope(NodeId a, int n_heads, double base = 10000.0);      // rotary positions, row index = position
    NodeId straight_through(NodeId a, Tensor value);                // forward replaced, gradient passes unchanged

    const Tensor& value(NodeId id) const;
    std::size_t size() const { return nodes_.size(); }
    const std::map<std::string, NodeId>& params() const { return param_ids_; }

    // Gradient of a scalar node with respect to every named parameter.
    // Parameters the loss does not depend on get zero tensors.
    GradMap backward(NodeId loss);

private:
    struct Node {
        Tensor value;
        std::vector<NodeId> parents;
        std::function<void(Graph&, NodeId)> backprop;  // empty for leaves
        bool needs_grad = false;
    };

    NodeId push(Tensor value, std::vector<NodeId> parents, std::function<void(Graph&, NodeId)> backprop);
    const Tensor& val(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    Tensor& grad_buf(NodeId id);
    void check_id(NodeId id) const;
    void check_matrix(NodeId id, const char* op) const;

    // deque keeps value() references stable while later ops append nodes
    std::deque<Node> nodes_;
    std::vector<Tensor> grads_;  // allocated during backward
    std::map<std::string, NodeId> param_ids_;
};

}  // namespace embedkit
