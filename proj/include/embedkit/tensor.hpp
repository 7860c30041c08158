#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace embedkit {

// Dense row-major tensor of binary64 values. All model math is 2-D; shape is
// kept general so parameter tensors of any rank round-trip through
// checkpoints unchanged.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<int> shape_, std::vector<double> data_);

    static Tensor zeros(int rows, int cols);
    static Tensor full(int rows, int cols, double value);
    static Tensor row(std::vector<double> values);    // [1 x n]
    static Tensor column(std::vector<double> values); // [n x 1]
    static Tensor scalar(double value);               // [1 x 1]
    static Tensor identity(int n);

    std::size_t numel() const { return data.size(); }
    bool is_matrix() const { return shape.size() == 2; }
    int rows() const;
    int cols() const;

    double& at(int r, int c);
    double at(int r, int c) const;

    bool finite() const;
    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    std::string shape_str() const;
};

// Raw matrix kernels with a fixed accumulation order (plain loops, i-k-j),
// shared by forward ops and their adjoints.
void mm_nn(const double* a, const double* b, double* c, int m, int k, int n);           // c += a·b
void mm_nt(const double* a, const double* b, double* c, int m, int k, int n);           // c += a·bᵀ, b is [n x k]
void mm_tn(const double* a, const double* b, double* c, int m, int k, int n);           // c += aᵀ·b, a is [k x m] -> [m x n]

}  // namespace embedkit
