#include "phyvae/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "phyvae/errors.hpp"
#include "phyvae/kernels.hpp"

namespace phyvae {

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size())
        throw DimensionError("tensor shape " + shape_string(shape_) + " does not match " +
                             std::to_string(data_.size()) + " values");
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw DimensionError("ragged matrix literal");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
}

Tensor Tensor::row(std::initializer_list<double> values) {
    return Tensor({1, values.size()}, std::vector<double>(values));
}

std::size_t Tensor::rows() const noexcept {
    if (shape_.empty()) return 1;
    std::size_t r = 1;
    for (std::size_t i = 0; i + 1 < shape_.size(); ++i) r *= shape_[i];
    return r;
}

std::size_t Tensor::cols() const noexcept { return shape_.empty() ? 1 : shape_.back(); }

double Tensor::item() const {
    if (data_.size() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape_));
    return data_[0];
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::reshape_inplace(Shape shape) {
    if (shape_numel(shape) != data_.size())
        throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    shape_ = std::move(shape);
}

Tensor Tensor::reshaped(Shape shape) const {
    Tensor t = *this;
    t.reshape_inplace(std::move(shape));
    return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel()) throw DimensionError("max_abs_diff: size mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

namespace {

void require_matrix(const Tensor& t, const char* op) {
    if (t.rank() != 2) throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
}

enum class Broadcast { same, scalar, row };

Broadcast classify(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() == b.shape()) return Broadcast::same;
    if (b.numel() == 1) return Broadcast::scalar;
    const bool row_like = b.rank() == 1 || (b.rank() == 2 && b.shape()[0] == 1);
    if (row_like && b.numel() == a.cols()) return Broadcast::row;
    throw DimensionError(std::string(op) + ": cannot broadcast " + shape_string(b.shape()) + " onto " +
                         shape_string(a.shape()));
}

template <class F>
Tensor binary(const Tensor& a, const Tensor& b, const char* op, F f) {
    Tensor out(a.shape());
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* po = out.data().data();
    const std::size_t n = a.numel();
    switch (classify(a, b, op)) {
        case Broadcast::same:
            for (std::size_t i = 0; i < n; ++i) po[i] = f(pa[i], pb[i]);
            break;
        case Broadcast::scalar: {
            const double s = pb[0];
            for (std::size_t i = 0; i < n; ++i) po[i] = f(pa[i], s);
            break;
        }
        case Broadcast::row: {
            const std::size_t c = a.cols();
            for (std::size_t r = 0; r < n; r += c)
                for (std::size_t j = 0; j < c; ++j) po[r + j] = f(pa[r + j], pb[j]);
            break;
        }
    }
    return out;
}

template <class F>
Tensor unary(const Tensor& a, F f) {
    Tensor out(a.shape());
    const double* pa = a.data().data();
    double* po = out.data().data();
    const std::size_t n = a.numel();
#pragma omp parallel for schedule(static) if (n > 65536)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) po[i] = f(pa[i]);
    return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    const std::size_t n = a.shape()[0], k = a.shape()[1], m = b.shape()[1];
    if (b.shape()[0] != k)
        throw DimensionError("matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
    Tensor c({n, m});
    kernels::matmul(a.data().data(), b.data().data(), c.data().data(), n, k, m);
    return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul_nt");
    require_matrix(b, "matmul_nt");
    const std::size_t n = a.shape()[0], k = a.shape()[1], m = b.shape()[0];
    if (b.shape()[1] != k)
        throw DimensionError("matmul_nt: " + shape_string(a.shape()) + " x " + shape_string(b.shape()) + "^T");
    Tensor c({n, m});
    kernels::matmul_nt(a.data().data(), b.data().data(), c.data().data(), n, k, m);
    return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul_tn");
    require_matrix(b, "matmul_tn");
    const std::size_t k = a.shape()[0], n = a.shape()[1], m = b.shape()[1];
    if (b.shape()[0] != k)
        throw DimensionError("matmul_tn: " + shape_string(a.shape()) + "^T x " + shape_string(b.shape()));
    Tensor c({n, m});
    kernels::matmul_tn(a.data().data(), b.data().data(), c.data().data(), n, k, m);
    return c;
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
    Tensor y = matmul(x, w);
    if (b.numel() != y.cols())
        throw DimensionError("affine: bias " + shape_string(b.shape()) + " for output " + shape_string(y.shape()));
    const std::size_t c = y.cols();
    double* py = y.data().data();
    const double* pb = b.data().data();
    for (std::size_t r = 0; r < y.numel(); r += c)
        for (std::size_t j = 0; j < c; ++j) py[r + j] += pb[j];
    return y;
}

Tensor add(const Tensor& a, const Tensor& b) {
    return binary(a, b, "add", [](double x, double y) { return x + y; });
}
Tensor sub(const Tensor& a, const Tensor& b) {
    return binary(a, b, "sub", [](double x, double y) { return x - y; });
}
Tensor mul(const Tensor& a, const Tensor& b) {
    return binary(a, b, "mul", [](double x, double y) { return x * y; });
}
Tensor div(const Tensor& a, const Tensor& b) {
    return binary(a, b, "div", [](double x, double y) { return x / y; });
}

Tensor neg(const Tensor& a) { return unary(a, [](double x) { return -x; }); }
Tensor scale(const Tensor& a, double c) { return unary(a, [c](double x) { return c * x; }); }
Tensor add_scalar(const Tensor& a, double c) { return unary(a, [c](double x) { return x + c; }); }
Tensor tanh(const Tensor& a) { return unary(a, [](double x) { return std::tanh(x); }); }

Tensor tanh_grad(const Tensor& y, const Tensor& g) {
    if (!y.same_shape(g))
        throw DimensionError("tanh_grad: " + shape_string(y.shape()) + " vs " + shape_string(g.shape()));
    Tensor out(y.shape());
    for (std::size_t i = 0; i < y.numel(); ++i) out[i] = g[i] * (1.0 - y[i] * y[i]);
    return out;
}

Tensor sigmoid(const Tensor& a) {
    return unary(a, [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
    });
}

Tensor softplus(const Tensor& a) {
    return unary(a, [](double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); });
}

Tensor exp(const Tensor& a) { return unary(a, [](double x) { return std::exp(x); }); }
Tensor log(const Tensor& a) { return unary(a, [](double x) { return std::log(x); }); }
Tensor abs(const Tensor& a) { return unary(a, [](double x) { return std::abs(x); }); }
Tensor sign(const Tensor& a) { return unary(a, [](double x) { return double((x > 0) - (x < 0)); }); }
Tensor square(const Tensor& a) { return unary(a, [](double x) { return x * x; }); }

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    return Tensor::scalar(s);
}

Tensor mean(const Tensor& a) {
    if (a.numel() == 0) throw DimensionError("mean of empty tensor");
    return Tensor::scalar(sum(a)[0] / static_cast<double>(a.numel()));
}

Tensor sum_rows(const Tensor& a) {
    const std::size_t r = a.rows(), c = a.cols();
    Tensor out({1, c});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j] += a[i * c + j];
    return out;
}

Tensor sum_cols(const Tensor& a) {
    const std::size_t r = a.rows(), c = a.cols();
    Tensor out({r, 1});
    for (std::size_t i = 0; i < r; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += a[i * c + j];
        out[i] = s;
    }
    return out;
}

Tensor broadcast_rows(const Tensor& row, std::size_t rows) {
    const std::size_t c = row.numel();
    Tensor out({rows, c});
    for (std::size_t i = 0; i < rows; ++i) std::copy(row.data().begin(), row.data().end(), out.data().begin() + i * c);
    return out;
}

Tensor broadcast_cols(const Tensor& col, std::size_t cols) {
    const std::size_t r = col.numel();
    Tensor out({r, cols});
    for (std::size_t i = 0; i < r; ++i) std::fill_n(out.data().begin() + i * cols, cols, col[i]);
    return out;
}

Tensor expand_scalar(const Tensor& s, const Shape& shape) { return Tensor(shape, s.item()); }

Tensor softmax_lastdim(const Tensor& a) {
    const std::size_t r = a.rows(), c = a.cols();
    if (c == 0) throw DimensionError("softmax over empty last dimension");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < r; ++i) {
        const double* in = a.data().data() + i * c;
        double* o = out.data().data() + i * c;
        const double mx = *std::max_element(in, in + c);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += (o[j] = std::exp(in[j] - mx));
        for (std::size_t j = 0; j < c; ++j) o[j] /= z;
    }
    return out;
}

Tensor concat_lastdim(std::span<const Tensor* const> parts) {
    if (parts.empty()) throw DimensionError("concat of zero tensors");
    const std::size_t r = parts[0]->rows();
    std::size_t total = 0;
    for (const Tensor* p : parts) {
        if (p->rows() != r) throw DimensionError("concat_lastdim: row count mismatch");
        total += p->cols();
    }
    Shape shape = parts[0]->rank() >= 2 ? parts[0]->shape() : Shape{r, 0};
    shape.back() = total;
    Tensor out(shape);
    std::size_t offset = 0;
    for (const Tensor* p : parts) {
        const std::size_t c = p->cols();
        for (std::size_t i = 0; i < r; ++i)
            std::copy_n(p->data().begin() + i * c, c, out.data().begin() + i * total + offset);
        offset += c;
    }
    return out;
}

Tensor slice_lastdim(const Tensor& a, std::size_t offset, std::size_t width) {
    const std::size_t r = a.rows(), c = a.cols();
    if (offset + width > c) throw DimensionError("slice_lastdim out of range");
    Shape shape = a.rank() >= 2 ? a.shape() : Shape{r, c};
    shape.back() = width;
    Tensor out(shape);
    for (std::size_t i = 0; i < r; ++i)
        std::copy_n(a.data().begin() + i * c + offset, width, out.data().begin() + i * width);
    return out;
}

Tensor pad_lastdim(const Tensor& a, std::size_t offset, std::size_t total) {
    const std::size_t r = a.rows(), c = a.cols();
    if (offset + c > total) throw DimensionError("pad_lastdim out of range");
    Shape shape = a.rank() >= 2 ? a.shape() : Shape{r, c};
    shape.back() = total;
    Tensor out(shape);
    for (std::size_t i = 0; i < r; ++i)
        std::copy_n(a.data().begin() + i * c, c, out.data().begin() + i * total + offset);
    return out;
}

Tensor transpose(const Tensor& a) {
    require_matrix(a, "transpose");
    const std::size_t r = a.shape()[0], c = a.shape()[1];
    Tensor out({c, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a[i * c + j];
    return out;
}

Tensor reduce_to_shape(const Tensor& g, const Shape& target) {
    if (g.shape() == target) return g;
    if (shape_numel(target) == 1) return sum(g).reshaped(target);
    if (shape_numel(target) == g.cols()) return sum_rows(g).reshaped(target);
    throw DimensionError("cannot reduce " + shape_string(g.shape()) + " to " + shape_string(target));
}

}  // namespace phyvae
