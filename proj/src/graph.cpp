#include "embedkit/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace embedkit {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double gelu_fwd(double x) {
    return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
}

double gelu_bwd(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
    return cdf + x * pdf;
}

}  // namespace

void Graph::check_id(NodeId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
        throw std::invalid_argument("graph: node id out of range");
    }
}

void Graph::check_matrix(NodeId id, const char* op) const {
    check_id(id);
    if (!val(id).is_matrix()) {
        throw std::invalid_argument(std::string("graph: ") + op + " expects a matrix, got shape " +
                                    val(id).shape_str());
    }
}

NodeId Graph::push(Tensor value, std::vector<NodeId> parents, std::function<void(Graph&, NodeId)> backprop) {
    Node n;
    n.value = std::move(value);
    n.parents = std::move(parents);
    for (NodeId p : n.parents) {
        if (nodes_[static_cast<std::size_t>(p)].needs_grad) n.needs_grad = true;
    }
    if (n.needs_grad) n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

Tensor& Graph::grad_buf(NodeId id) {
    Tensor& g = grads_[static_cast<std::size_t>(id)];
    if (g.data.empty()) {
        const Tensor& v = val(id);
        g.shape = v.shape;
        g.data.assign(v.data.size(), 0.0);
    }
    return g;
}

NodeId Graph::constant(Tensor value) {
    return push(std::move(value), {}, nullptr);
}

NodeId Graph::param(const std::string& name, Tensor value) {
    if (param_ids_.count(name)) {
        throw std::invalid_argument("graph: duplicate parameter name '" + name + "'");
    }
    Node n;
    n.value = std::move(value);
    n.needs_grad = true;
    nodes_.push_back(std::move(n));
    const NodeId id = static_cast<NodeId>(nodes_.size() - 1);
    param_ids_[name] = id;
    return id;
}

NodeId Graph::add(NodeId a, NodeId b) {
    check_id(a);
    check_id(b);
    if (!val(a).same_shape(val(b))) {
        throw std::invalid_argument("graph: add shape mismatch " + val(a).shape_str() + " vs " + val(b).shape_str());
    }
    Tensor out = val(a);
    const Tensor& vb = val(b);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += vb.data[i];
    return push(std::move(out), {a, b}, [a, b](Graph& g, NodeId self) {
        const Tensor& go = g.grad_buf(self);
        Tensor& ga = g.grad_buf(a);
        Tensor& gb = g.grad_buf(b);
        for (std::size_t i = 0; i < go.data.size(); ++i) {
            ga.data[i] += go.data[i];
            gb.data[i] += go.data[i];
        }
    });
}

NodeId Graph::sub(NodeId a, NodeId b) {
    check_id(a);
    check_id(b);
    if (!val(a).same_shape(val(b))) {
        throw std::invalid_argument("graph: sub shape mismatch " + val(a).shape_str() + " vs " + val(b).shape_str());
    }
    Tensor out = val(a);
    const Tensor& vb = val(b);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= vb.data[i];
    return push(std::move(out), {a, b}, [a, b](Graph& g, NodeId self) {
        const Tensor& go = g.grad_buf(self);
        Tensor& ga = g.grad_buf(a);
        Tensor& gb = g.grad_buf(b);
        for (std::size_t i = 0; i < go.data.size(); ++i) {
            ga.data[i] += go.data[i];
            gb.data[i] -= go.data[i];
        }
    });
}

NodeId Graph::mul(NodeId a, NodeId b) {
    check_id(a);
    check_id(b);
    if (!val(a).same_shape(val(b))) {
        throw std::invalid_argument("graph: mul shape mismatch " + val(a).shape_str() + " vs " + val(b).shape_str());
    }
    Tensor out = val(a);
    const Tensor& vb = val(b);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= vb.data[i];
    return push(std::move(out), {a, b}, [a, b](Graph& g, NodeId self) {
        const Tensor& go = g.grad_buf(self);
        const Tensor& va = g.val(a);
        const Tensor& vb2 = g.val(b);
        Tensor& ga = g.grad_buf(a);
        Tensor& gb = g.grad_buf(b);
        for (std::size_t i = 0; i < go.data.size(); ++i) {
            ga.data[i] += go.data[i] * vb2.data[i];
            gb.data[i] += go.data[i] * va.data[i];
        }
    });
}

NodeId Graph::scale(NodeId a, double c) {
    check_id(a);
    Tensor out = val(a);
    for (double& v : out.data) v *= c;
    return push(std::move(out), {a}, [a, c](Graph& g, NodeId self) {
        const Tensor& go = g.grad_buf(self);
        Tensor& ga = g.grad_buf(a);
        for (std::size_t i = 0; i < go.data.size(); ++i) ga.data[i] += go.data[i] * c;
    });
}

NodeId Graph::add_scalar(NodeId a, double c) {
    check_id(a);
    Tensor out = val(a);
    for (double& v : out.data) v += c;
    return push(std::move(out), {a}, [a](Graph& g, NodeId self) {
        const Tensor& go = g.grad_buf(self);
        Tensor& ga = g.grad_buf(a);
        for (std::size_t i = 0; i < go.data.size(); ++i) ga.data[i] += go.data[i];
    });
}

NodeId Graph::exp(NodeId a) {
    check_id(a);
    Tensor out = val(a);
    for (double& v : out.data) v = std::exp(v);
    return push(std::move(out), {a}, [a](Graph& g, NodeId self) {
        const Tensor& go = g.grad_buf(self);
        const Tensor& vo = g.val(self);
        Tensor& ga = g.grad_buf(a);
        for (std::size_t i = 0; i < go.data.size(); ++i) ga.data[i] += go.data[i] * vo.data[i];
    });
}

NodeId Graph::log(NodeId a) {
    check_id(a);
    Tensor out = val(a);
    for (double& v : out.data) v = std::log(v);
    return push(std::move(out), {a}, [a](Graph& g, NodeId self) {
        const Tensor& go = g.grad_buf(self);
        const Tensor& va = g.val(a);
        Tensor& ga = g.grad_buf(a);
        for (std::size_t i = 0; i < go.data.size(); ++i) ga.data[i] += go.data[i] / va.data[i];
    });
}

NodeId Graph::rsqrt(NodeId a) {
    check_id(a);
    Tensor out = val(a);
    for (double& v : out.data) {
        if (v <= 0.0) throw std::invalid_argument("graph: rsqrt requires strictly positive input");
        v = 1.0 / std::sqrt(v);
    }
    return push(std::move(out), {a}, [a](Graph& g, NodeId self) {
        const Tensor& go = g.grad_buf(self);
        const Tensor& vo = g.val(self);
        Tensor& ga = g.grad_buf(a);
        for (std::size_t i = 0; i < go.data.size(); ++i) {
            const double y = vo.data[i];
            ga.data[i] += go.data[i] * (-0.5 * y * y * y);
        }
    });
}

NodeId Graph::gelu(NodeId a) {
    check_id(a);
    Tensor out = val(a);
    for (double& v : out.data) v = gelu_fwd(v);
    return push(std::move(out), {a}, [a](Graph& g, NodeId self) {
        const Tensor& go = g.grad_buf(self);
        const Tensor& va = g.val(a);
        Tensor& ga = g.grad_buf(a);
        for (std::size_t i = 0; i < go.data.size(); ++i) ga.data[i] += go.data[i] * gelu_bwd(va.data[i]);
    });
}

NodeId Graph::matmul(NodeId a, NodeId b) {
    check_matrix(a, "matmul");
    check_matrix(b, "matmul");
    const Tensor& va = val(a);
    const Tensor& vb = val(b);
    if (va.cols() != vb.rows()) {
        throw std::invalid_argument("graph: matmul dimension mismatch " + va.shape_str() + " x " + vb.shape_str());
    }
    const int m = va.rows(), k = va.cols(), n = vb.cols();
    Tensor out = Tensor::zeros(m, n);
    mm_nn(va.data.data(), vb.data.data(), out.data.data(), m, k, n);
    return push(std::move(out), {a, b}, [a, b, m, k, n](Graph& g, NodeId self) {
        const Tensor& go = g.grad_buf(self);
        const Tensor& va2 = g.val(a);
        const Tensor& vb2 = g.val(b);
        Tensor& ga = g.grad_buf(a);
        Tensor& gb = g.grad_buf(b);
        mm_nt(go.data.data(), vb2.data.data(), ga.data.data(), m, n, k);  // dA += G·Bᵀ
        mm_tn(va2.data.data(), go.data.data(), gb.data.data(), k, m, n);  // dB += Aᵀ·G
    });
}

NodeId Graph::matmul_nt(NodeId a, NodeId b) {
    check_matrix(a, "matmul_nt");
    check_matrix(b, "matmul_nt");
    const Tensor& va = val(a);
    const Tensor& vb = val(b);
    if (va.cols() != vb.cols()) {
        throw std::invalid_argument("graph: matmul_nt dimension mismatch " + va.shape_str() + " x " +
                                    vb.shape_str() + "ᵀ");
    }
    const int m = va.rows(), k = va.cols(), n = vb.rows();
    Tensor out = Tensor::zeros(m, n);
    mm_nt(va.data.data(), vb.data.data(), out.data.data(), m, k, n);
    return push(std::move(out), {a, b}, [a, b, m, k, n](Graph& g, NodeId self) {
        const Tensor& go = g.grad_buf(self);
        const Tensor& va2 = g.val(a);
        const Tensor& vb2 = g.val(b);
        Tensor& ga = g.grad_buf(a);
        Tensor& gb = g.grad_buf(b);
        mm_nn(go.data.data(), vb2.data.data(), ga.data.data(), m, n, k);  // dA += G·B
        mm_tn(go.data.data(), va2.data.data(), gb.data.data(), n, m, k);  // dB += Gᵀ·A
    });
}

NodeId Graph::row_softmax(NodeId a) {
    check_matrix(a, "row_softmax");
    Tensor out = val(a);
    const int m = out.rows(), n = out.cols();
    for (int i = 0; i < m; ++i) {
        double mx = out.at(i, 0);
        for (int j = 1; j < n; ++j) mx = std::max(mx, out.at(i, j));
        double sum = 0.0;
        for (int j = 0; j < n; ++j) {
            const double e = std::exp(out.at(i, j) - mx);
            out.at(i, j) = e;
            sum += e;
        }
        for (int j = 0; j < n; ++j) out.at(i, j) /= sum;
    }
    return push(std::move(out), {a}, [a, m, n](Graph& g, NodeId self) {
        const Tensor& go = g.grad_buf(self);
        const Tensor& y = g.val(self);
        Tensor& ga = g.grad_buf(a);
        for (int i = 0; i < m; ++i) {
            double dot = 0.0;
            for (int j = 0; j < n; ++j) dot += go.at(i, j) * y.at(i, j);
            for (int j = 0; j < n; ++j) ga.at(i, j) += y.at(i, j) * (go.at(i, j) - dot);
        }
    });
}

NodeId Graph::row_sum(NodeId a) {
    check_matrix(a, "row_sum");
    const Tensor& va = val(a);
    const int m = va.rows(), n = va.cols();
    Tensor out = Tensor::zeros(m, 1);
    for (int i = 0; i < m; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += va.at(i, j);
        out.at(i, 0) = s;
    }
    return push(std::move(out), {a}, [a, m, n](Graph& g, NodeId self) {
        const Tensor& go = g.grad_buf(self);
        Tensor& ga = g.grad_buf(a);
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) ga.at(i, j) += go.at(i, 0);
        }
    });
}

NodeId Graph::dot_rows(NodeId a, NodeId b) {
    check_matrix(a, "dot_rows");
    check_matrix(b, "dot_rows");
    const Tensor& va = val(a);
    const Tensor& vb = val(b);
    if (!va.same_shape(vb)) {
        throw std::invalid_argument("graph: dot_rows shape mismatch " + va.shape_str() + " vs " + vb.shape_str());
    }
    const int m = va.rows(), n = va.cols();
    Tensor out = Tensor::zeros(m, 1);
    for (int i = 0; i < m; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += va.at(i, j) * vb.at(i, j);
        out.at(i, 0) = s;
    }
    return push(std::move(out), {a, b}, [a, b, m, n](Graph& g, NodeId self) {
        const Tensor& go = g.grad_buf(self);
        const Tensor& va2 = g.val(a);
        const Tensor& vb2 = g.val(b);
        Tensor& ga = g.grad_buf(a);
        Tensor& gb = g.grad_buf(b);
        for (int i = 0; i < m; ++i) {
            const double gi = go.at(i, 0);
            for (int j = 0; j < n; ++j) {
                ga.at(i, j) += gi * vb2.at(i, j);
                gb.at(i, j) += gi * va2.at(i, j);
            }
        }
    });
}

NodeId Graph::sum_all(NodeId a) {
    check_id(a);
    const Tensor& va = val(a);
    double s = 0.0;
    for (double v : va.data) s += v;
    return push(Tensor::scalar(s), {a}, [a](Graph& g, NodeId self) {
        const double go = g.grad_buf(self).data[0];
        Tensor& ga = g.grad_buf(a);
        for (double& v : ga.data) v += go;
    });
}

NodeId Graph::col_broadcast(NodeId a, int n) {
    check_matrix(a, "col_broadcast");
    const Tensor& va = val(a);
    if (va.cols() != 1) throw std::invalid_argument("graph: col_broadcast expects [m x 1]");
    const int m = va.rows();
    Tensor out = Tensor::zeros(m, n);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) out.at(i, j) = va.at(i, 0);
    }
    return push(std::move(out), {a}, [a, m, n](Graph& g, NodeId self) {
        const Tensor& go = g.grad_buf(self);
        Tensor& ga = g.grad_buf(a);
        for (int i = 0; i < m; ++i) {
            double s = 0.0;
            for (int j = 0; j < n; ++j) s += go.at(i, j);
            ga.at(i, 0) += s;
        }
    });
}

NodeId Graph::row_broadcast(NodeId a, int m) {
    check_matrix(a, "row_broadcast");
    const Tensor& va = val(a);
    if (va.rows() != 1) throw std::invalid_argument("graph: row_broadcast expects [1 x n]");
    const int n = va.cols();
    Tensor out = Tensor::zeros(m, n);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) out.at(i, j) = va.at(0, j);
    }
    return push(std::move(out), {a}, [a, m, n](Graph& g, NodeId self) {
        const Tensor& go = g.grad_buf(self);
        Tensor& ga = g.grad_buf(a);
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) ga.at(0, j) += go.at(i, j);
        }
    });
}

NodeId Graph::slice_rows(NodeId a, int r0, int h) {
    check_matrix(a, "slice_rows");
    const Tensor& va = val(a);
    if (r0 < 0 || h <= 0 || r0 + h > va.rows()) throw std::invalid_argument("graph: slice_rows out of range");
    const int n = va.cols();
    Tensor out = Tensor::zeros(h, n);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < n; ++j) out.at(i, j) = va.at(r0 + i, j);
    }
    return push(std::move(out), {a}, [a, r0, h, n](Graph& g, NodeId self) {
        const Tensor& go = g.grad_buf(self);
        Tensor& ga = g.grad_buf(a);
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < n; ++j) ga.at(r0 + i, j) += go.at(i, j);
        }
    });
}

NodeId Graph::slice_cols(NodeId a, int c0, int w) {
    check_matrix(a, "slice_cols");
    const Tensor& va = val(a);
    if (c0 < 0 || w <= 0 || c0 + w > va.cols()) throw std::invalid_argument("graph: slice_cols out of range");
    const int m = va.rows();
    Tensor out = Tensor::zeros(m, w);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < w; ++j) out.at(i, j) = va.at(i, c0 + j);
    }
    return push(std::move(out), {a}, [a, c0, w, m](Graph& g, NodeId self) {
        const Tensor& go = g.grad_buf(self);
        Tensor& ga = g.grad_buf(a);
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < w; ++j) ga.at(i, c0 + j) += go.at(i, j);
        }
    });
}

NodeId Graph::concat_rows(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw std::invalid_argument("graph: concat_rows needs at least one part");
    int m = 0;
    const int n = val(parts[0]).cols();
    for (NodeId p : parts) {
        check_matrix(p, "concat_rows");
        if (val(p).cols() != n) throw std::invalid_argument("graph: concat_rows column mismatch");
        m += val(p).rows();
    }
    Tensor out = Tensor::zeros(m, n);
    int r = 0;
    for (NodeId p : parts) {
        const Tensor& vp = val(p);
        for (int i = 0; i < vp.rows(); ++i) {
            for (int j = 0; j < n; ++j) out.at(r + i, j) = vp.at(i, j);
        }
        r += vp.rows();
    }
    std::vector<NodeId> parents = parts;
    return push(std::move(out), parents, [parts, n](Graph& g, NodeId self) {
        const Tensor& go = g.grad_buf(self);
        int r2 = 0;
        for (NodeId p : parts) {
            Tensor& gp = g.grad_buf(p);
            const int h = g.val(p).rows();
            for (int i = 0; i < h; ++i) {
                for (int j = 0; j < n; ++j) gp.at(i, j) += go.at(r2 + i, j);
            }
            r2 += h;
        }
    });
}

NodeId Graph::concat_cols(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw std::invalid_argument("graph: concat_cols needs at least one part");
    const int m = val(parts[0]).rows();
    int n = 0;
    for (NodeId p : parts) {
        check_matrix(p, "concat_cols");
        if (val(p).rows() != m) throw std::invalid_argument("graph: concat_cols row mismatch");
        n += val(p).cols();
    }
    Tensor out = Tensor::zeros(m, n);
    int c = 0;
    for (NodeId p : parts) {
        const Tensor& vp = val(p);
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < vp.cols(); ++j) out.at(i, c + j) = vp.at(i, j);
        }
        c += vp.cols();
    }
    std::vector<NodeId> parents = parts;
    return push(std::move(out), parents, [parts, m](Graph& g, NodeId self) {
        const Tensor& go = g.grad_buf(self);
        int c2 = 0;
        for (NodeId p : parts) {
            Tensor& gp = g.grad_buf(p);
            const int w = g.val(p).cols();
            for (int i = 0; i < m; ++i) {
                for (int j = 0; j < w; ++j) gp.at(i, j) += go.at(i, c2 + j);
            }
            c2 += w;
        }
    });
}

NodeId Graph::embed_rows(NodeId table, std::vector<int> ids) {
    check_matrix(table, "embed_rows");
    const Tensor& vt = val(table);
    const int n = vt.cols();
    for (int id : ids) {
        if (id < 0 || id >= vt.rows()) {
            throw std::invalid_argument("graph: embed_rows id " + std::to_string(id) + " out of range [0, " +
                                        std::to_string(vt.rows()) + ")");
        }
    }
    const int m = static_cast<int>(ids.size());
    Tensor out = Tensor::zeros(m, n);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) out.at(i, j) = vt.at(ids[static_cast<std::size_t>(i)], j);
    }
    return push(std::move(out), {table}, [table, ids = std::move(ids), m, n](Graph& g, NodeId self) {
        const Tensor& go = g.grad_buf(self);
        Tensor& gt = g.grad_buf(table);
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) gt.at(ids[static_cast<std::size_t>(i)], j) += go.at(i, j);
        }
    });
}

NodeId Graph::rope(NodeId a, int n_heads, double base) {
    check_matrix(a, "rope");
    const Tensor& va = val(a);
    const int L = va.rows(), d = va.cols();
    if (n_heads <= 0 || d % n_heads != 0) throw std::invalid_argument("graph: rope head count must divide width");
    const int dh = d / n_heads;
    if (dh % 2 != 0) throw std::invalid_argument("graph: rope head dim must be even");
    const int half = dh / 2;

    // Rotation angles are fixed by (position, pair) only; precompute once and
    // share between forward and adjoint.
    std::vector<double> cs(static_cast<std::size_t>(L) * half), sn(static_cast<std::size_t>(L) * half);
    for (int pos = 0; pos < L; ++pos) {
        for (int i = 0; i < half; ++i) {
            const double theta = pos * std::pow(base, -2.0 * i / dh);
            cs[static_cast<std::size_t>(pos) * half + i] = std::cos(theta);
            sn[static_cast<std::size_t>(pos) * half + i] = std::sin(theta);
        }
    }

    Tensor out = va;
    for (int pos = 0; pos < L; ++pos) {
        for (int h = 0; h < n_heads; ++h) {
            const int c0 = h * dh;
            for (int i = 0; i < half; ++i) {
                const double c = cs[static_cast<std::size_t>(pos) * half + i];
                const double s = sn[static_cast<std::size_t>(pos) * half + i];
                const double x = va.at(pos, c0 + i);
                const double y = va.at(pos, c0 + half + i);
                out.at(pos, c0 + i) = x * c - y * s;
                out.at(pos, c0 + half + i) = x * s + y * c;
            }
        }
    }
    return push(std::move(out), {a},
                [a, L, n_heads, dh, half, cs = std::move(cs), sn = std::move(sn)](Graph& g, NodeId self) {
                    const Tensor& go = g.grad_buf(self);
                    Tensor& ga = g.grad_buf(a);
                    for (int pos = 0; pos < L; ++pos) {
                        for (int h = 0; h < n_heads; ++h) {
                            const int c0 = h * dh;
                            for (int i = 0; i < half; ++i) {
                                const double c = cs[static_cast<std::size_t>(pos) * half + i];
                                const double s = sn[static_cast<std::size_t>(pos) * half + i];
                                const double gx = go.at(pos, c0 + i);
                                const double gy = go.at(pos, c0 + half + i);
                                ga.at(pos, c0 + i) += gx * c + gy * s;
                                ga.at(pos, c0 + half + i) += -gx * s + gy * c;
                            }
                        }
                    }
                });
}

NodeId Graph::straight_through(NodeId a, Tensor value) {
    check_id(a);
    if (!val(a).same_shape(value)) {
        throw std::invalid_argument("graph: straight_through value shape mismatch");
    }
    return push(std::move(value), {a}, [a](Graph& g, NodeId self) {
        const Tensor& go = g.grad_buf(self);
        Tensor& ga = g.grad_buf(a);
        for (std::size_t i = 0; i < go.data.size(); ++i) ga.data[i] += go.data[i];
    });
}

const Tensor& Graph::value(NodeId id) const {
    check_id(id);
    return val(id);
}

GradMap Graph::backward(NodeId loss) {
    check_id(loss);
    if (val(loss).numel() != 1) {
        throw std::invalid_argument("graph: backward seed must be scalar, got shape " + val(loss).shape_str());
    }
    grads_.assign(nodes_.size(), Tensor{});
    grad_buf(loss).data[0] = 1.0;
    for (NodeId id = static_cast<NodeId>(nodes_.size()) - 1; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.needs_grad || !n.backprop) continue;
        if (grads_[static_cast<std::size_t>(id)].data.empty()) continue;  // not reachable from the loss
        n.backprop(*this, id);
    }
    GradMap out;
    for (const auto& [name, id] : param_ids_) {
        Tensor& g = grads_[static_cast<std::size_t>(id)];
        if (g.data.empty()) {
            const Tensor& v = val(id);
            out.emplace(name, Tensor(v.shape, std::vector<double>(v.data.size(), 0.0)));
        } else {
            out.emplace(name, std::move(g));
        }
    }
    grads_.clear();
    return out;
}

}  // namespace embedkit
