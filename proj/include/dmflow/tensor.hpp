#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dmflow {

// Dense row-major tensor of 64-bit floats. Value-semantic: copies are deep,
// moves are cheap, no shared state, safe to hand across threads.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int64_t> shape);
    Tensor(std::vector<int64_t> shape, std::vector<double> data);

    static Tensor scalar(double v);
    static Tensor full(std::vector<int64_t> shape, double v);

    const std::vector<int64_t>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    // 2-D view: rank-0 is 1x1, rank-1 is 1xN, rank-2 is RxC. Higher ranks must
    // be reshaped explicitly before being treated as matrices.
    int64_t rows() const;
    int64_t cols() const;

    double& operator()(int64_t r, int64_t c);
    double operator()(int64_t r, int64_t c) const;
    double& at3(int64_t i, int64_t j, int64_t k);
    double at3(int64_t i, int64_t j, int64_t k) const;
    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    std::string shape_str() const;

    void fill(double v);
    void add_(const Tensor& o);             // elementwise +=
    void axpy_(double a, const Tensor& o);  // this += a * o
    void scale_(double a);
    double max_abs() const;
    double sum() const;
    bool all_finite() const;

    Tensor reshaped(std::vector<int64_t> shape) const;  // element count preserved

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    std::vector<int64_t> shape_;
    std::vector<double> data_;
};

int64_t shape_size(const std::vector<int64_t>& shape);

// c = alpha * op(a) * op(b) + beta * c with op controlled by the transpose
// flags; 2-D row-major; beta must be 0 or 1; c preallocated to the result
// shape. Single-threaded and deterministic.
void gemm(double alpha, const Tensor& a, bool trans_a, const Tensor& b, bool trans_b,
          double beta, Tensor& c);

} // namespace dmflow
