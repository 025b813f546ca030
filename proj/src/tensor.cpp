#include "dmflow/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Dense>

#include "dmflow/error.hpp"

namespace dmflow {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

} // namespace

int64_t shape_size(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<int64_t> shape)
    : shape_(std::move(shape)), data_(static_cast<size_t>(shape_size(shape_)), 0.0) {}

Tensor::Tensor(std::vector<int64_t> shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    require(static_cast<int64_t>(data_.size()) == shape_size(shape_), "shape_mismatch",
            "tensor data size does not match shape " + shape_str());
}

Tensor Tensor::scalar(double v) {
    Tensor t({1});
    t.data_[0] = v;
    return t;
}

Tensor Tensor::full(std::vector<int64_t> shape, double v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
}

int64_t Tensor::rows() const {
    switch (rank()) {
    case 0: return 1;
    case 1: return 1;
    case 2: return shape_[0];
    default: fail("shape_mismatch", "rank-" + std::to_string(rank()) + " tensor has no 2-D view");
    }
}

int64_t Tensor::cols() const {
    switch (rank()) {
    case 0: return 1;
    case 1: return shape_[0];
    case 2: return shape_[1];
    default: fail("shape_mismatch", "rank-" + std::to_string(rank()) + " tensor has no 2-D view");
    }
}

double& Tensor::operator()(int64_t r, int64_t c) {
    return data_[static_cast<size_t>(r * cols() + c)];
}

double Tensor::operator()(int64_t r, int64_t c) const {
    return data_[static_cast<size_t>(r * cols() + c)];
}

double& Tensor::at3(int64_t i, int64_t j, int64_t k) {
    return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
}

double Tensor::at3(int64_t i, int64_t j, int64_t k) const {
    return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape_.size(); ++i) {
        os << (i ? "," : "") << shape_[i];
    }
    os << "]";
    return os.str();
}

void Tensor::fill(double v) {
    std::fill(data_.begin(), data_.end(), v);
}

void Tensor::add_(const Tensor& o) {
    require(same_shape(o), "shape_mismatch", "add_: " + shape_str() + " vs " + o.shape_str());
    for (size_t i = 0; i < data_.size(); ++i) {
        data_[i] += o.data_[i];
    }
}

void Tensor::axpy_(double a, const Tensor& o) {
    require(same_shape(o), "shape_mismatch", "axpy_: " + shape_str() + " vs " + o.shape_str());
    for (size_t i = 0; i < data_.size(); ++i) {
        data_[i] += a * o.data_[i];
    }
}

void Tensor::scale_(double a) {
    for (double& v : data_) {
        v *= a;
    }
}

double Tensor::max_abs() const {
    double m = 0.0;
    for (double v : data_) {
        m = std::max(m, std::abs(v));
    }
    return m;
}

double Tensor::sum() const {
    double s = 0.0;
    for (double v : data_) {
        s += v;
    }
    return s;
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

Tensor Tensor::reshaped(std::vector<int64_t> shape) const {
    require(shape_size(shape) == size(), "shape_mismatch",
            "reshape " + shape_str() + " to incompatible element count");
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = data_;
    return t;
}

void gemm(double alpha, const Tensor& a, bool trans_a, const Tensor& b, bool trans_b,
          double beta, Tensor& c) {
    const int64_t m = trans_a ? a.cols() : a.rows();
    const int64_t k = trans_a ? a.rows() : a.cols();
    const int64_t kb = trans_b ? b.cols() : b.rows();
    const int64_t n = trans_b ? b.rows() : b.cols();
    require(k == kb, "shape_mismatch", "gemm inner dims: " + a.shape_str() + " x " + b.shape_str());
    require(c.rows() == m && c.cols() == n, "shape_mismatch", "gemm output shape " + c.shape_str());
    require(beta == 0.0 || beta == 1.0, "invalid_arg", "gemm beta must be 0 or 1");

    ECMap ma(a.data(), a.rows(), a.cols());
    ECMap mb(b.data(), b.rows(), b.cols());
    EMap mc(c.data(), m, n);

    auto run = [&](const auto& lhs, const auto& rhs) {
        if (beta == 0.0) {
            mc.noalias() = alpha * (lhs * rhs);
        } else {
            mc.noalias() += alpha * (lhs * rhs);
        }
    };
    if (!trans_a && !trans_b) {
        run(ma, mb);
    } else if (!trans_a && trans_b) {
        run(ma, mb.transpose());
    } else if (trans_a && !trans_b) {
        run(ma.transpose(), mb);
    } else {
        run(ma.transpose(), mb.transpose());
    }
}

} // namespace dmflow
