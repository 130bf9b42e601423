#pragma once

#include <Eigen/Core>

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace handmesh {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;

template <typename Scalar>
using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;

/// Raised whenever operand extents disagree; the message carries both shapes.
class ShapeError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

inline Index numel(const Shape& shape) {
    Index n = 1;
    for (Index extent : shape) n *= extent;
    return n;
}

inline std::string to_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << ", ";
        out << shape[i];
    }
    out << ']';
    return out.str();
}

inline void check_shape(bool ok, const char* op, const Shape& a, const Shape& b) {
    if (!ok) {
        throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " +
                         to_string(b));
    }
}

/// Dense row-major array of `Scalar` with an explicit shape.
template <typename Scalar>
class Tensor {
   public:
    using scalar_type = Scalar;

    Tensor() = default;

    explicit Tensor(Shape shape) : shape_(std::move(shape)) {
        validate_extents();
        data_ = Vector<Scalar>::Zero(numel(shape_));
    }

    Tensor(Shape shape, Vector<Scalar> data) : shape_(std::move(shape)), data_(std::move(data)) {
        validate_extents();
        if (data_.size() != numel(shape_)) {
            throw ShapeError("Tensor: " + std::to_string(data_.size()) +
                             " values do not fill shape " + to_string(shape_));
        }
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor constant(Shape shape, Scalar value) {
        Tensor t(std::move(shape));
        t.data_.setConstant(value);
        return t;
    }

    template <typename Derived>
    static Tensor from_matrix(const Eigen::MatrixBase<Derived>& m) {
        Tensor t({m.rows(), m.cols()});
        t.matrix() = m.template cast<Scalar>();
        return t;
    }

    const Shape& shape() const { return shape_; }
    Index rank() const { return static_cast<Index>(shape_.size()); }
    Index dim(Index axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
    Index size() const { return data_.size(); }
    bool empty() const { return data_.size() == 0; }

    Vector<Scalar>& data() { return data_; }
    const Vector<Scalar>& data() const { return data_; }
    Scalar* ptr() { return data_.data(); }
    const Scalar* ptr() const { return data_.data(); }

    Scalar& operator[](Index i) { return data_[i]; }
    Scalar operator[](Index i) const { return data_[i]; }

    Scalar& operator()(Index r, Index c) { return data_[r * shape_[1] + c]; }
    Scalar operator()(Index r, Index c) const { return data_[r * shape_[1] + c]; }
    Scalar& operator()(Index ch, Index y, Index x) {
        return data_[(ch * shape_[1] + y) * shape_[2] + x];
    }
    Scalar operator()(Index ch, Index y, Index x) const {
        return data_[(ch * shape_[1] + y) * shape_[2] + x];
    }

    /// Rank-2 view; higher ranks fold trailing axes into columns.
    MatrixMap<Scalar> matrix() { return MatrixMap<Scalar>(ptr(), rows(), cols()); }
    ConstMatrixMap<Scalar> matrix() const {
        return ConstMatrixMap<Scalar>(ptr(), rows(), cols());
    }

    Tensor reshaped(Shape shape) const {
        if (numel(shape) != size()) {
            throw ShapeError("reshape: " + to_string(shape_) + " -> " + to_string(shape));
        }
        return Tensor(std::move(shape), data_);
    }

    template <typename Other>
    Tensor<Other> cast() const {
        return Tensor<Other>(shape_, data_.template cast<Other>());
    }

    bool all_finite() const { return data_.allFinite(); }

   private:
    Index rows() const { return shape_.empty() ? 1 : shape_[0]; }
    Index cols() const { return shape_.empty() ? 1 : numel(shape_) / shape_[0]; }

    void validate_extents() const {
        for (Index extent : shape_) {
            if (extent <= 0) throw ShapeError("Tensor: non-positive extent in " + to_string(shape_));
        }
    }

    Shape shape_;
    Vector<Scalar> data_;
};

}  // namespace handmesh
