#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "phyvae/errors.hpp"
#include "phyvae/kernels.hpp"
#include "phyvae/tensor.hpp"

using namespace phyvae;

namespace {

Tensor random_tensor(Shape s, std::mt19937_64& rng) {
    std::normal_distribution<double> nd;
    Tensor t(std::move(s));
    for (double& v : t.data()) v = nd(rng);
    return t;
}

}  // namespace

TEST_CASE("matmul identity") {
    const Tensor c = matmul(Tensor::matrix({{1, 0}, {0, 1}}), Tensor::matrix({{3}, {4}}));
    CHECK(c == Tensor::matrix({{3}, {4}}));
}

TEST_CASE("tanh and softmax at symmetric points") {
    CHECK(tanh(Tensor::row({0.0}))[0] == 0.0);
    const Tensor s = softmax_lastdim(Tensor::row({0.0, 0.0}));
    CHECK(s[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(s[1] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("matmul matches the triple loop") {
    std::mt19937_64 rng(3);
    const Tensor a = random_tensor({2, 3}, rng), b = random_tensor({3, 2}, rng);
    CHECK(max_abs_diff(matmul(a, b), oracle::triple_loop_matmul(a, b)) < 1e-14);
}

TEST_CASE("parallel kernels agree with the serial reference across shapes") {
    std::mt19937_64 rng(11);
    const std::size_t shapes[][3] = {{1, 1, 1}, {2, 3, 2}, {7, 1, 9}, {5, 13, 3}, {100, 300, 4},
                                     {100, 512, 512}, {33, 65, 17}, {4, 2, 100}, {100, 4, 2}, {3, 300, 1}};
    for (const auto& s : shapes) {
        const std::size_t n = s[0], k = s[1], m = s[2];
        CAPTURE(n);
        CAPTURE(k);
        CAPTURE(m);
        const Tensor a = random_tensor({n, k}, rng), b = random_tensor({k, m}, rng);
        const Tensor bt = transpose(b), at = transpose(a);
        Tensor ref({n, m}), fast({n, m});
        kernels::serial::matmul(a.data().data(), b.data().data(), ref.data().data(), n, k, m);
        kernels::matmul(a.data().data(), b.data().data(), fast.data().data(), n, k, m);
        CHECK(max_abs_diff(ref, fast) < 1e-10);
        kernels::matmul_nt(a.data().data(), bt.data().data(), fast.data().data(), n, k, m);
        CHECK(max_abs_diff(ref, fast) < 1e-10);
        kernels::matmul_tn(at.data().data(), b.data().data(), fast.data().data(), n, k, m);
        CHECK(max_abs_diff(ref, fast) < 1e-10);
        kernels::serial::matmul_nt(a.data().data(), bt.data().data(), fast.data().data(), n, k, m);
        CHECK(max_abs_diff(ref, fast) < 1e-10);
        kernels::serial::matmul_tn(at.data().data(), b.data().data(), fast.data().data(), n, k, m);
        CHECK(max_abs_diff(ref, fast) < 1e-10);
    }
}

TEST_CASE("shape violations raise DimensionError") {
    CHECK_THROWS_AS(matmul(Tensor({2, 3}), Tensor({2, 3})), DimensionError);
    CHECK_THROWS_AS(add(Tensor({2, 3}), Tensor({3, 2})), DimensionError);
    CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
}

TEST_CASE("row broadcast and reductions") {
    const Tensor a = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
    CHECK(add(a, Tensor::row({10, 20, 30})) == Tensor::matrix({{11, 22, 33}, {14, 25, 36}}));
    CHECK(sum_rows(a) == Tensor::matrix({{5, 7, 9}}));
    CHECK(sum_cols(a) == Tensor::matrix({{6}, {15}}));
    CHECK(sum(a).item() == 21.0);
    CHECK(mean(a).item() == 3.5);
    CHECK(reduce_to_shape(a, {1, 3}) == sum_rows(a));
}

TEST_CASE("slice, pad and concat are inverse placements") {
    const Tensor a = Tensor::matrix({{1, 2, 3, 4}, {5, 6, 7, 8}});
    const Tensor mid = slice_lastdim(a, 1, 2);
    CHECK(mid == Tensor::matrix({{2, 3}, {6, 7}}));
    CHECK(pad_lastdim(mid, 1, 4) == Tensor::matrix({{0, 2, 3, 0}, {0, 6, 7, 0}}));
    const Tensor left = slice_lastdim(a, 0, 1), right = slice_lastdim(a, 3, 1);
    const Tensor* parts[] = {&left, &mid, &right};
    CHECK(concat_lastdim(parts) == a);
}

TEST_CASE("softmax rows sum to one and survive large logits") {
    const Tensor s = softmax_lastdim(Tensor::matrix({{1000, 1001, 999}, {-5, 0, 5}}));
    for (std::size_t r = 0; r < 2; ++r) {
        double t = 0.0;
        for (std::size_t c = 0; c < 3; ++c) t += s.at(r, c);
        CHECK(t == doctest::Approx(1.0).epsilon(1e-14));
    }
    CHECK(s.all_finite());
}
