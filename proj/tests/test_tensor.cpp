#include <doctest.h>

#include <cmath>

#include "sumlab/tensor.hpp"

using namespace sumlab;
using T = Tensor<double>;

namespace {

void fill_random(T& t, Rng& rng, double lo = -2.0, double hi = 2.0) {
    for (Index i = 0; i < t.size(); ++i) t.flat_mut()[i] = rng.uniform(lo, hi);
}

T random_tensor(Shape shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
    T t = T::zeros(shape);
    fill_random(t, rng, lo, hi);
    return t;
}

}  // namespace

TEST_CASE("matmul identity and hand cases") {
    T eye = T::from_rows({{1, 0}, {0, 1}});
    T m = T::from_rows({{3, -1}, {2, 5}});
    T r = matmul(eye, m);
    CHECK(r.matrix() == m.matrix());

    T a = T::from_rows({{1, 2}, {3, 4}});
    T b = T::from_rows({{1}, {1}});
    T c = matmul(a, b);
    CHECK(c(0, 0) == doctest::Approx(3.0));
    CHECK(c(1, 0) == doctest::Approx(7.0));

    T z = T::zeros({3, 4});
    Rng rng(1);
    T any = random_tensor({4, 2}, rng);
    CHECK(matmul(z, any).flat().cwiseAbs().maxCoeff() == 0.0);

    CHECK_THROWS_AS(matmul(a, T::zeros({3, 3})), ShapeError);
}

TEST_CASE("matmul associativity on random small tensors") {
    Rng rng(7);
    for (int rep = 0; rep < 20; ++rep) {
        T a = random_tensor({3, 4}, rng);
        T b = random_tensor({4, 5}, rng);
        T c = random_tensor({5, 2}, rng);
        T left = matmul(matmul(a, b), c);
        T right = matmul(a, matmul(b, c));
        CHECK((left.matrix() - right.matrix()).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("softmax rows: trivial and derived values") {
    T zeros_row = T::zeros({1, 4});
    T p = softmax_rows(zeros_row);
    for (Index j = 0; j < 4; ++j) CHECK(p(0, j) == doctest::Approx(0.25).epsilon(1e-12));

    T single = T::from_rows({{3.7}});
    CHECK(softmax_rows(single)(0, 0) == doctest::Approx(1.0).epsilon(1e-12));

    T row = T::from_rows({{1.0, 0.0}});
    T q = softmax_rows(row);
    CHECK(q(0, 0) == doctest::Approx(0.7310585786300049).epsilon(1e-12));
    CHECK(q(0, 1) == doctest::Approx(0.2689414213699951).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one for random inputs") {
    Rng rng(11);
    for (int rep = 0; rep < 50; ++rep) {
        const Index m = 1 + static_cast<Index>(rng.below(6));
        const Index c = 1 + static_cast<Index>(rng.below(8));
        T x = random_tensor({m, c}, rng, -30.0, 30.0);
        T p = softmax_rows(x);
        for (Index i = 0; i < m; ++i) {
            CHECK(std::abs(p.matrix().row(i).sum() - 1.0) < 1e-9);
            CHECK(p.matrix().row(i).minCoeff() >= 0.0);
        }
    }
}

TEST_CASE("layer_norm trivial and derived values") {
    T gain = T::from_vector({1.0, 1.0});
    T bias = T::from_vector({0.0, 0.0});

    T constant = T::from_rows({{5.0, 5.0}});
    T y = layer_norm(constant, gain, bias, 1e-5);
    CHECK(std::abs(y(0, 0)) < 1e-9);
    CHECK(std::abs(y(0, 1)) < 1e-9);

    T row = T::from_rows({{1.0, -1.0}});
    T z = layer_norm(row, gain, bias, 1e-5);
    CHECK(z(0, 0) == doctest::Approx(0.9999950000374996).epsilon(1e-10));
    CHECK(z(0, 1) == doctest::Approx(-0.9999950000374996).epsilon(1e-10));

    T zero_gain = T::from_vector({0.0, 0.0});
    T some_bias = T::from_vector({2.5, -1.5});
    T w = layer_norm(row, zero_gain, some_bias, 1e-5);
    CHECK(w(0, 0) == doctest::Approx(2.5));
    CHECK(w(0, 1) == doctest::Approx(-1.5));
}

TEST_CASE("layer_norm standardizes non-constant rows") {
    Rng rng(13);
    T gain = T::from_vector(std::vector<double>(16, 1.0));
    T bias = T::from_vector(std::vector<double>(16, 0.0));
    for (int rep = 0; rep < 20; ++rep) {
        T x = random_tensor({4, 16}, rng);
        T y = layer_norm(x, gain, bias, 1e-9);
        for (Index i = 0; i < 4; ++i) {
            const double mean = y.matrix().row(i).mean();
            const double var = (y.matrix().row(i).array() - mean).square().sum() / 16.0;
            CHECK(std::abs(mean) < 1e-9);
            CHECK(std::abs(var - 1.0) < 1e-6);
        }
    }
}

TEST_CASE("cross_entropy: uniform, margin limit, hand value") {
    T uniform = T::zeros({1, 8});
    T loss = cross_entropy(uniform, {3}, -1);
    CHECK(loss.item() == doctest::Approx(std::log(8.0)).epsilon(1e-12));

    for (double margin : {5.0, 20.0, 60.0}) {
        T logits = T::zeros({1, 4});
        logits.flat_mut()[2] = margin;
        const double l = cross_entropy(logits, {2}, -1).item();
        CHECK(l < 3.0 * std::exp(-margin) + 1e-12);
    }

    // logits [[1,2,3],[0,0,4]], targets [2,0]: mean of hand log-sum-exp losses.
    T logits = T::from_rows({{1, 2, 3}, {0, 0, 4}});
    T l2 = cross_entropy(logits, {2, 0}, -1);
    CHECK(l2.item() == doctest::Approx(2.221791132096287).epsilon(1e-12));

    // Ignored positions contribute nothing.
    T l3 = cross_entropy(T::from_rows({{1, 2, 3}, {9, 9, 9}}), {2, -1}, -1);
    CHECK(l3.item() == doctest::Approx(0.4076059644443806).epsilon(1e-12));

    CHECK_THROWS_AS(cross_entropy(logits, {-1, -1}, -1), NumericError);
}

TEST_CASE("backward populates grads and consumes the graph") {
    T w = T::param({2, 3}, "w");
    w.flat_mut().setConstant(0.5);

    T loss = sum(w);
    loss.backward();
    CHECK(w.grad().minCoeff() == 1.0);
    CHECK(w.grad().maxCoeff() == 1.0);
    CHECK_THROWS_AS(loss.backward(), GraphError);

    // loss = sum(W x) for fixed x: dW = ones(p, r) x^T.
    w.zero_grad();
    T x = T::from_rows({{1.0}, {2.0}, {-3.0}});
    T loss2 = sum(matmul(w, x));
    loss2.backward();
    for (Index i = 0; i < 2; ++i) {
        CHECK(w.grad_matrix()(i, 0) == doctest::Approx(1.0));
        CHECK(w.grad_matrix()(i, 1) == doctest::Approx(2.0));
        CHECK(w.grad_matrix()(i, 2) == doctest::Approx(-3.0));
    }

    T detached = T::zeros({});
    CHECK_THROWS_AS(detached.backward(), GraphError);
}

TEST_CASE("no-grad mode builds no graph") {
    T w = T::param({2, 2}, "w");
    w.flat_mut().setConstant(1.0);
    NoGradGuard off;
    T y = sum(matmul(w, w));
    CHECK_FALSE(y.on_graph());
}

TEST_CASE("finite differences match analytic gradients for every op") {
    Rng rng(17);
    T a = T::param({3, 4}, "a");
    T b = T::param({4, 2}, "b");
    T g = T::param({4}, "gain");
    T bias = T::param({4}, "bias");
    fill_random(a, rng);
    fill_random(b, rng);
    fill_random(g, rng, 0.5, 1.5);
    fill_random(bias, rng, -0.5, 0.5);

    SUBCASE("matmul + softmax weighted") {
        T weights = random_tensor({3, 2}, rng);
        auto f = [&] { return sum(mul(softmax_rows(matmul(a, b)), weights)); };
        auto rep = grad_check<double>(f, {a, b}, 1e-5, 1e-6);
        CHECK(rep.passed());
    }
    SUBCASE("layer_norm") {
        auto f = [&] { return sum(mul(layer_norm(a, g, bias, 1e-5), a)); };
        auto rep = grad_check<double>(f, {a, g, bias}, 1e-5, 1e-6);
        CHECK(rep.passed());
    }
    SUBCASE("gelu, transpose, slicing, concat, bias rows") {
        T bias2 = T::param({2}, "bias2");
        fill_random(bias2, rng);
        auto f = [&] {
            T h = gelu(add_bias_rows(matmul(a, b), bias2));  // 3x2
            T left = slice_cols(h, 0, 1);
            T right = slice_cols(h, 1, 1);
            T joined = concat_cols<double>({right, left});  // 3x2
            T tr = transpose(joined);                       // 2x3
            T top = slice_rows(tr, 1, 1);                   // 1x3
            return add(sum(tr), sum(top));
        };
        auto rep = grad_check<double>(f, {a, b, bias2}, 1e-5, 1e-6);
        CHECK(rep.passed());
    }
    SUBCASE("masked softmax") {
        MaskMatrix mask(3, 4);
        mask.setConstant(true);
        mask(0, 1) = false;
        mask(2, 0) = false;
        mask(2, 3) = false;
        auto f = [&] { return sum(mul(masked_softmax_rows(a, mask), a)); };
        auto rep = grad_check<double>(f, {a}, 1e-5, 1e-6);
        CHECK(rep.passed());
    }
    SUBCASE("cross entropy composite") {
        auto f = [&] { return cross_entropy(matmul(a, b), {1, 0, 1}, -1); };
        auto rep = grad_check<double>(f, {a, b}, 1e-5, 1e-6);
        CHECK(rep.passed());
    }
    SUBCASE("embedding gather") {
        auto f = [&] { return sum(gelu(embedding_rows(a, {2, 0, 2}))); };
        auto rep = grad_check<double>(f, {a}, 1e-5, 1e-6);
        CHECK(rep.passed());
    }
}

TEST_CASE("masked softmax guards fully masked rows") {
    T x = T::zeros({2, 3});
    MaskMatrix mask(2, 3);
    mask.setConstant(true);
    mask.row(1).setConstant(false);
    CHECK_THROWS_AS(masked_softmax_rows(x, mask), NumericError);
}

TEST_CASE("dropout scales kept entries and is identity at rate zero") {
    Rng rng(23);
    T x = T::full({100, 10}, 1.0);
    T y = dropout(x, 0.0, rng);
    CHECK(y.node_id() == x.node_id());

    T z = dropout(x, 0.4, rng);
    int kept = 0;
    for (Index i = 0; i < z.size(); ++i) {
        if (z.flat()[i] != 0.0) {
            ++kept;
            CHECK(z.flat()[i] == doctest::Approx(1.0 / 0.6));
        }
    }
    CHECK(kept > 450);
    CHECK(kept < 750);
}
