#pragma once

#include <Eigen/Core>

#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "vpfc/errors.hpp"

namespace vpfc::nn {

using Index = Eigen::Index;
using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

// Dense multi-dimensional array: a shape plus row-major doubles. All layer math
// views slices of it through Eigen maps.
class NdArray {
public:
    NdArray() = default;

    explicit NdArray(std::vector<Index> shape) : shape_(std::move(shape)) {
        data_.setZero(count(shape_));
    }

    NdArray(std::vector<Index> shape, Eigen::ArrayXd data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != count(shape_))
            throw ShapeMismatch("data length " + std::to_string(data_.size()) +
                                " vs shape product " + std::to_string(count(shape_)));
    }

    static NdArray zeros(std::vector<Index> shape) { return NdArray(std::move(shape)); }

    static NdArray full(std::vector<Index> shape, double v) {
        NdArray a(std::move(shape));
        a.data_.setConstant(v);
        return a;
    }

    static NdArray from_values(std::vector<Index> shape, std::initializer_list<double> vals) {
        NdArray a(std::move(shape));
        if (static_cast<Index>(vals.size()) != a.numel())
            throw ShapeMismatch("initializer list size vs shape");
        Index i = 0;
        for (double v : vals) a.data_[i++] = v;
        return a;
    }

    const std::vector<Index>& shape() const { return shape_; }
    Index rank() const { return static_cast<Index>(shape_.size()); }
    Index dim(Index i) const { return shape_[static_cast<std::size_t>(i)]; }
    Index numel() const { return data_.size(); }

    double& operator[](Index i) { return data_[i]; }
    double operator[](Index i) const { return data_[i]; }

    double& at(Index i, Index j) { return data_[i * dim(1) + j]; }
    double at(Index i, Index j) const { return data_[i * dim(1) + j]; }
    double& at(Index i, Index j, Index k) { return data_[(i * dim(1) + j) * dim(2) + k]; }
    double at(Index i, Index j, Index k) const { return data_[(i * dim(1) + j) * dim(2) + k]; }
    double& at(Index i, Index j, Index k, Index l) {
        return data_[((i * dim(1) + j) * dim(2) + k) * dim(3) + l];
    }
    double at(Index i, Index j, Index k, Index l) const {
        return data_[((i * dim(1) + j) * dim(2) + k) * dim(3) + l];
    }

    Eigen::ArrayXd& array() { return data_; }
    const Eigen::ArrayXd& array() const { return data_; }

    // 2-D matrix view of the flat data (row-major).
    MatMap mat(Index rows, Index cols) {
        if (rows * cols != numel()) throw ShapeMismatch("mat view " + shape_string());
        return MatMap(data_.data(), rows, cols);
    }
    ConstMatMap mat(Index rows, Index cols) const {
        if (rows * cols != numel()) throw ShapeMismatch("mat view " + shape_string());
        return ConstMatMap(data_.data(), rows, cols);
    }
    MatMap mat2d() { return mat(dim(0), dim(1)); }
    ConstMatMap mat2d() const { return mat(dim(0), dim(1)); }

    VecMap vec() { return VecMap(data_.data(), numel()); }
    ConstVecMap vec() const { return ConstVecMap(data_.data(), numel()); }

    NdArray reshaped(std::vector<Index> shape) const {
        if (count(shape) != numel()) throw ShapeMismatch("reshape " + shape_string());
        return NdArray(std::move(shape), data_);
    }

    bool same_shape(const NdArray& o) const { return shape_ == o.shape_; }

    bool all_finite() const { return data_.isFinite().all(); }

    std::string shape_string() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape_[i]);
        }
        return s + "]";
    }

    static Index count(const std::vector<Index>& shape) {
        Index n = 1;
        for (Index d : shape) n *= d;
        return n;
    }

private:
    std::vector<Index> shape_;
    Eigen::ArrayXd data_;
};

inline void require_same_shape(const NdArray& a, const NdArray& b, const char* where) {
    if (!a.same_shape(b))
        throw ShapeMismatch(std::string(where) + ": " + a.shape_string() + " vs " +
                            b.shape_string());
}

}  // namespace vpfc::nn
