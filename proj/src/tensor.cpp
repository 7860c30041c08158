#include "embedkit/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace embedkit {

namespace {

std::size_t checked_numel(const std::vector<int>& shape) {
    if (shape.empty()) {
        throw std::invalid_argument("tensor: shape must be non-empty");
    }
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) {
            throw std::invalid_argument("tensor: shape entries must be positive");
        }
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

}  // namespace

Tensor::Tensor(std::vector<int> shape_, std::vector<double> data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
    if (checked_numel(shape) != data.size()) {
        throw std::invalid_argument("tensor: shape " + shape_str() + " does not match data length " +
                                    std::to_string(data.size()));
    }
}

Tensor Tensor::zeros(int rows, int cols) {
    Tensor t;
    t.shape = {rows, cols};
    t.data.assign(checked_numel(t.shape), 0.0);
    return t;
}

Tensor Tensor::full(int rows, int cols, double value) {
    Tensor t = zeros(rows, cols);
    for (double& v : t.data) v = value;
    return t;
}

Tensor Tensor::row(std::vector<double> values) {
    Tensor t;
    t.shape = {1, static_cast<int>(values.size())};
    t.data = std::move(values);
    checked_numel(t.shape);
    return t;
}

Tensor Tensor::column(std::vector<double> values) {
    Tensor t;
    t.shape = {static_cast<int>(values.size()), 1};
    t.data = std::move(values);
    checked_numel(t.shape);
    return t;
}

Tensor Tensor::scalar(double value) {
    return Tensor({1, 1}, {value});
}

Tensor Tensor::identity(int n) {
    Tensor t = zeros(n, n);
    for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

int Tensor::rows() const {
    if (!is_matrix()) throw std::invalid_argument("tensor: expected matrix, got shape " + shape_str());
    return shape[0];
}

int Tensor::cols() const {
    if (!is_matrix()) throw std::invalid_argument("tensor: expected matrix, got shape " + shape_str());
    return shape[1];
}

double& Tensor::at(int r, int c) {
    return data[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols()) + static_cast<std::size_t>(c)];
}

double Tensor::at(int r, int c) const {
    return data[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols()) + static_cast<std::size_t>(c)];
}

bool Tensor::finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

void mm_nn(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        double* crow = c + static_cast<std::size_t>(i) * n;
        const double* arow = a + static_cast<std::size_t>(i) * k;
        for (int t = 0; t < k; ++t) {
            const double ait = arow[t];
            const double* brow = b + static_cast<std::size_t>(t) * n;
            for (int j = 0; j < n; ++j) {
                crow[j] += ait * brow[j];
            }
        }
    }
}

void mm_nt(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* brow = b + static_cast<std::size_t>(j) * k;
            double acc = 0.0;
            for (int t = 0; t < k; ++t) {
                acc += arow[t] * brow[t];
            }
            crow[j] += acc;
        }
    }
}

void mm_tn(const double* a, const double* b, double* c, int m, int k, int n) {
    // a is [k x m], b is [k x n], result is [m x n]
    for (int t = 0; t < k; ++t) {
        const double* arow = a + static_cast<std::size_t>(t) * m;
        const double* brow = b + static_cast<std::size_t>(t) * n;
        for (int i = 0; i < m; ++i) {
            const double ati = arow[i];
            double* crow = c + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) {
                crow[j] += ati * brow[j];
            }
        }
    }
}

}  // namespace embedkit
