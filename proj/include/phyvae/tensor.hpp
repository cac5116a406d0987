#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace phyvae {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles.
///
/// Most operations treat a tensor as a matrix: `cols()` is the last dimension
/// and `rows()` the product of the others, so a rank-1 tensor is one row.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor row(std::initializer_list<double> values);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t numel() const noexcept { return data_.size(); }
    std::size_t rows() const noexcept;
    std::size_t cols() const noexcept;

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::vector<double>& storage() noexcept { return data_; }
    const std::vector<double>& storage() const noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    /// Value of a single-element tensor.
    double item() const;
    bool all_finite() const noexcept;
    bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

    void reshape_inplace(Shape shape);
    Tensor reshaped(Shape shape) const;

    bool operator==(const Tensor& other) const = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

/// Largest |a - b| over all entries; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

// Value-level math. These back both forward evaluation and the tensor-path
// backward sweep. Shape violations raise DimensionError.
Tensor matmul(const Tensor& a, const Tensor& b);     // a[n,k] b[k,m]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a[n,k] b[m,k]^T
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // a[k,n]^T b[k,m]
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);  // x w + b, b broadcast over rows

// Elementwise binary ops; rhs may be same-shape, a single element, or one row of width cols().
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor tanh(const Tensor& a);
/// g * (1 - y^2): the tanh derivative applied to an upstream gradient, given y = tanh(x).
Tensor tanh_grad(const Tensor& y, const Tensor& g);
Tensor sigmoid(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor sign(const Tensor& a);
Tensor square(const Tensor& a);

Tensor sum(const Tensor& a);       // -> {1}
Tensor mean(const Tensor& a);      // -> {1}
Tensor sum_rows(const Tensor& a);  // [r,c] -> [1,c]
Tensor sum_cols(const Tensor& a);  // [r,c] -> [r,1]
Tensor broadcast_rows(const Tensor& row, std::size_t rows);  // [1,c] -> [rows,c]
Tensor broadcast_cols(const Tensor& col, std::size_t cols);  // [r,1] -> [r,cols]
Tensor expand_scalar(const Tensor& s, const Shape& shape);
Tensor softmax_lastdim(const Tensor& a);

Tensor concat_lastdim(std::span<const Tensor* const> parts);
Tensor slice_lastdim(const Tensor& a, std::size_t offset, std::size_t width);
/// Inverse placement of slice_lastdim: zeros everywhere except columns [offset, offset + cols).
Tensor pad_lastdim(const Tensor& a, std::size_t offset, std::size_t total);
Tensor transpose(const Tensor& a);

/// Reduce a broadcast gradient back onto `target` (identity, row-sum or full sum).
Tensor reduce_to_shape(const Tensor& g, const Shape& target);

}  // namespace phyvae
