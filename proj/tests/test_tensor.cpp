#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "acr/tensor.hpp"
#include "test_support.hpp"

using namespace acr;
using namespace acr::testing;

TEST_CASE("matmul identity and scalar cases") {
    Tensor eye = Tensor::from_values({2, 2}, {1, 0, 0, 1});
    Tensor b = Tensor::from_values({2, 2}, {3, 4, 5, 6});
    Tensor y = matmul(eye, b);
    CHECK(y.at(0, 0) == 3.0);
    CHECK(y.at(0, 1) == 4.0);
    CHECK(y.at(1, 0) == 5.0);
    CHECK(y.at(1, 1) == 6.0);

    Tensor s = matmul(Tensor::from_values({1, 1}, {2}), Tensor::from_values({1, 1}, {3}));
    CHECK(s.value() == 6.0);
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({4, 2});
    CHECK_THROWS_WITH_AS(matmul(a, b),
                         "matmul: inner dimensions disagree, [2x3] vs [4x2]", ShapeError);
}

TEST_CASE("matmul gradient of sum equals replicated column sums of b") {
    std::mt19937 rng(7);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 2}, rng);
    Tape tape;
    Tensor loss = sum(matmul(a, b, &tape), &tape);
    tape.backward(loss);

    // d sum(a·b) / d a[i][k] = sum_j b[k][j], the same for every row i
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t k = 0; k < 4; ++k) {
            double colsum = b.at(k, 0) + b.at(k, 1);
            CHECK(rel_err(a.grad()[i * 4 + k], colsum) < 1e-12);
        }
    }

    auto forward = [&]() { return sum(matmul(a, b)).value(); };
    CHECK(max_fd_error(a, a.grad(), forward) < kFdTolerance);
    CHECK(max_fd_error(b, b.grad(), forward) < kFdTolerance);
}

TEST_CASE("matmul_nt matches matmul against the transpose") {
    std::mt19937 rng(11);
    Tensor a = random_tensor({3, 5}, rng);
    Tensor b = random_tensor({4, 5}, rng);
    Tensor y = matmul_nt(a, b);
    REQUIRE(y.shape() == Shape{3, 4});
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            double ref = 0.0;
            for (std::size_t k = 0; k < 5; ++k) ref += a.at(i, k) * b.at(j, k);
            CHECK(rel_err(y.at(i, j), ref) < 1e-12);
        }
    }

    Tape tape;
    Tensor loss = sum(matmul_nt(a, b, &tape), &tape);
    tape.backward(loss);
    auto forward = [&]() { return sum(matmul_nt(a, b)).value(); };
    CHECK(max_fd_error(a, a.grad(), forward) < kFdTolerance);
    CHECK(max_fd_error(b, b.grad(), forward) < kFdTolerance);
}

TEST_CASE("elementwise forward values") {
    Tensor r = relu(Tensor::from_values({3}, {-1, 0, 2}));
    CHECK(r.values() == std::vector<double>{0, 0, 2});

    CHECK(exp_elem(Tensor::from_values({1}, {0})).value() == 1.0);

    Tensor sum2 = add(Tensor::from_values({2}, {1, 2}), Tensor::from_values({2}, {10, 20}));
    CHECK(sum2.values() == std::vector<double>{11, 22});

    Tensor diff = sub(Tensor::from_values({2}, {1, 2}), Tensor::from_values({2}, {10, 20}));
    CHECK(diff.values() == std::vector<double>{-9, -18});

    Tensor prod = mul(Tensor::from_values({2}, {3, 4}), Tensor::from_values({2}, {5, 6}));
    CHECK(prod.values() == std::vector<double>{15, 24});

    CHECK(scale(Tensor::from_values({2}, {3, 4}), -0.5).values() ==
          std::vector<double>{-1.5, -2.0});
}

TEST_CASE("elementwise shape and domain errors") {
    Tensor a = Tensor::zeros({2});
    Tensor b = Tensor::zeros({3});
    CHECK_THROWS_AS(add(a, b), ShapeError);
    CHECK_THROWS_AS(mul(a, b), ShapeError);
    CHECK_THROWS_AS(log_elem(Tensor::from_values({1}, {0.0})), std::domain_error);
    CHECK_THROWS_AS(log_elem(Tensor::from_values({1}, {-1.0})), std::domain_error);
}

TEST_CASE("log gradient at x=2 is one half") {
    Tensor x = Tensor::from_values({1}, {2.0});
    Tape tape;
    Tensor loss = sum(log_elem(x, &tape), &tape);
    tape.backward(loss);
    auto forward = [&]() { return sum(log_elem(x)).value(); };
    double fd = fd_grad(x, 0, forward);
    CHECK(std::abs(x.grad()[0] - 0.5) < 1e-12);
    CHECK(std::abs(x.grad()[0] - fd) < 1e-8);
}

TEST_CASE("elementwise gradients agree with finite differences") {
    std::mt19937 rng(23);
    Tensor a = random_tensor({2, 3}, rng);
    Tensor b = random_tensor({2, 3}, rng);

    SUBCASE("add") {
        Tape tape;
        tape.backward(sum(add(a, b, &tape), &tape));
        auto f = [&]() { return sum(add(a, b)).value(); };
        CHECK(max_fd_error(a, a.grad(), f) < kFdTolerance);
        CHECK(max_fd_error(b, b.grad(), f) < kFdTolerance);
    }
    SUBCASE("sub") {
        Tape tape;
        tape.backward(sum(sub(a, b, &tape), &tape));
        auto f = [&]() { return sum(sub(a, b)).value(); };
        CHECK(max_fd_error(a, a.grad(), f) < kFdTolerance);
        CHECK(max_fd_error(b, b.grad(), f) < kFdTolerance);
    }
    SUBCASE("mul") {
        Tape tape;
        tape.backward(sum(mul(a, b, &tape), &tape));
        auto f = [&]() { return sum(mul(a, b)).value(); };
        CHECK(max_fd_error(a, a.grad(), f) < kFdTolerance);
        CHECK(max_fd_error(b, b.grad(), f) < kFdTolerance);
    }
    SUBCASE("scale") {
        Tape tape;
        tape.backward(sum(scale(a, 1.7, &tape), &tape));
        auto f = [&]() { return sum(scale(a, 1.7)).value(); };
        CHECK(max_fd_error(a, a.grad(), f) < kFdTolerance);
    }
    SUBCASE("exp") {
        Tape tape;
        tape.backward(sum(exp_elem(a, &tape), &tape));
        auto f = [&]() { return sum(exp_elem(a)).value(); };
        CHECK(max_fd_error(a, a.grad(), f) < kFdTolerance);
    }
    SUBCASE("relu away from the kink") {
        Tensor c = random_tensor({2, 3}, rng, -2.0, 2.0, /*avoid_near_zero=*/true);
        Tape tape;
        tape.backward(sum(relu(c, &tape), &tape));
        auto f = [&]() { return sum(relu(c)).value(); };
        CHECK(max_fd_error(c, c.grad(), f) < kFdTolerance);
    }
    SUBCASE("log on positive inputs") {
        Tensor c = random_tensor({2, 3}, rng, 0.2, 2.0);
        Tape tape;
        tape.backward(sum(log_elem(c, &tape), &tape));
        auto f = [&]() { return sum(log_elem(c)).value(); };
        CHECK(max_fd_error(c, c.grad(), f) < kFdTolerance);
    }
}

TEST_CASE("softmax rows: uniform, stability, row sums") {
    Tensor u = softmax_rows(Tensor::from_values({1, 4}, {0, 0, 0, 0}));
    for (std::size_t j = 0; j < 4; ++j) CHECK(u.at(0, j) == doctest::Approx(0.25));

    Tensor hot = softmax_rows(Tensor::from_values({1, 2}, {1000, 0}));
    CHECK(hot.all_finite());
    CHECK(hot.at(0, 0) == doctest::Approx(1.0));
    CHECK(hot.at(0, 1) == doctest::Approx(0.0));

    std::mt19937 rng(5);
    Tensor x = random_tensor({2, 3}, rng, -10.0, 10.0);
    Tensor y = softmax_rows(x);
    for (std::size_t i = 0; i < 2; ++i) {
        double s = y.at(i, 0) + y.at(i, 1) + y.at(i, 2);
        CHECK(std::abs(s - 1.0) < 1e-9);
    }
}

TEST_CASE("softmax and log_softmax gradients agree with finite differences") {
    std::mt19937 rng(31);
    Tensor x = random_tensor({2, 4}, rng);
    Tensor w = random_tensor({2, 4}, rng);  // weighting makes the row-coupling visible

    SUBCASE("softmax_rows") {
        Tape tape;
        tape.backward(sum(mul(softmax_rows(x, &tape), w, &tape), &tape));
        auto f = [&]() { return sum(mul(softmax_rows(x), w)).value(); };
        CHECK(max_fd_error(x, x.grad(), f) < kFdTolerance);
    }
    SUBCASE("log_softmax_rows") {
        Tape tape;
        tape.backward(sum(mul(log_softmax_rows(x, &tape), w, &tape), &tape));
        auto f = [&]() { return sum(mul(log_softmax_rows(x), w)).value(); };
        CHECK(max_fd_error(x, x.grad(), f) < kFdTolerance);
    }
}

TEST_CASE("log_softmax matches log of softmax") {
    std::mt19937 rng(37);
    Tensor x = random_tensor({3, 5}, rng, -5.0, 5.0);
    Tensor a = log_softmax_rows(x);
    Tensor b = softmax_rows(x);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(rel_err(a.values()[i], std::log(b.values()[i])) < 1e-12);
    }
}

TEST_CASE("l2_normalize_rows produces unit rows and correct gradients") {
    std::mt19937 rng(41);
    Tensor x = random_tensor({3, 4}, rng, 0.5, 2.0);
    Tensor y = l2_normalize_rows(x);
    for (std::size_t i = 0; i < 3; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < 4; ++j) s += y.at(i, j) * y.at(i, j);
        CHECK(std::abs(s - 1.0) < 1e-12);
    }

    Tensor w = random_tensor({3, 4}, rng);
    Tape tape;
    tape.backward(sum(mul(l2_normalize_rows(x, &tape), w, &tape), &tape));
    auto f = [&]() { return sum(mul(l2_normalize_rows(x), w)).value(); };
    CHECK(max_fd_error(x, x.grad(), f) < kFdTolerance);
}

TEST_CASE("take_rows gathers and scatter-adds gradients") {
    Tensor m = Tensor::from_values({3, 2}, {1, 2, 3, 4, 5, 6});
    Tensor y = take_rows(m, {2, 0, 2});
    REQUIRE(y.shape() == Shape{3, 2});
    CHECK(y.at(0, 0) == 5.0);
    CHECK(y.at(1, 0) == 1.0);
    CHECK(y.at(2, 1) == 6.0);
    CHECK_THROWS_AS(take_rows(m, {3}), ShapeError);

    Tape tape;
    Tensor m2 = Tensor::from_values({3, 2}, {1, 2, 3, 4, 5, 6});
    tape.backward(sum(take_rows(m2, {2, 0, 2}, &tape), &tape));
    // row 2 was taken twice, so its adjoint is 2 per entry
    CHECK(m2.grad() == std::vector<double>{1, 1, 0, 0, 2, 2});
}

TEST_CASE("pick_per_row selects one column per row") {
    Tensor m = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor y = pick_per_row(m, {2, 0});
    CHECK(y.values() == std::vector<double>{3, 4});
    CHECK_THROWS_AS(pick_per_row(m, {0}), ShapeError);
    CHECK_THROWS_AS(pick_per_row(m, {0, 3}), ShapeError);

    Tape tape;
    tape.backward(sum(pick_per_row(m, {2, 0}, &tape), &tape));
    CHECK(m.grad() == std::vector<double>{0, 0, 1, 1, 0, 0});
}

TEST_CASE("add_row_bias broadcasts and accumulates bias gradient") {
    Tensor x = Tensor::from_values({2, 2}, {1, 2, 3, 4});
    Tensor b = Tensor::from_values({2}, {10, 20});
    Tensor y = add_row_bias(x, b);
    CHECK(y.values() == std::vector<double>{11, 22, 13, 24});

    Tape tape;
    tape.backward(sum(add_row_bias(x, b, &tape), &tape));
    CHECK(x.grad() == std::vector<double>{1, 1, 1, 1});
    CHECK(b.grad() == std::vector<double>{2, 2});

    std::mt19937 rng(43);
    Tensor x2 = random_tensor({3, 4}, rng);
    Tensor b2 = random_tensor({4}, rng);
    Tape tape2;
    tape2.backward(sum(add_row_bias(x2, b2, &tape2), &tape2));
    auto f = [&]() { return sum(add_row_bias(x2, b2)).value(); };
    CHECK(max_fd_error(x2, x2.grad(), f) < kFdTolerance);
    CHECK(max_fd_error(b2, b2.grad(), f) < kFdTolerance);
}

TEST_CASE("backward basics") {
    SUBCASE("sum of a 3-vector gives ones") {
        Tensor w = Tensor::from_values({3}, {5, -1, 0.5});
        Tape tape;
        tape.backward(sum(w, &tape));
        CHECK(w.grad() == std::vector<double>{1, 1, 1});
    }
    SUBCASE("w·w at w=[2] gives 4") {
        Tensor w = Tensor::from_values({1}, {2});
        Tape tape;
        tape.backward(sum(mul(w, w, &tape), &tape));
        CHECK(w.grad() == std::vector<double>{4});
    }
    SUBCASE("mean halves the sum gradient") {
        Tensor w = Tensor::from_values({2}, {3, 7});
        Tape tape;
        Tensor m = mean(w, &tape);
        CHECK(m.value() == 5.0);
        tape.backward(m);
        CHECK(w.grad() == std::vector<double>{0.5, 0.5});
    }
}

TEST_CASE("backward contract enforcement") {
    Tensor w = Tensor::from_values({2}, {1, 2});
    Tape tape;
    Tensor y = add(w, w, &tape);  // non-scalar
    CHECK_THROWS_AS(tape.backward(y), std::logic_error);

    Tape tape2;
    Tensor loss = sum(w, &tape2);
    tape2.backward(loss);
    CHECK(tape2.consumed());
    CHECK_THROWS_AS(tape2.backward(loss), std::logic_error);
}

TEST_CASE("untaped forward records nothing") {
    Tensor a = Tensor::from_values({2}, {1, 2});
    Tensor b = Tensor::from_values({2}, {3, 4});
    Tape tape;
    add(a, b);  // no tape passed
    CHECK(tape.recorded_ops() == 0);
    sum(add(a, b, &tape), &tape);
    CHECK(tape.recorded_ops() == 2);
}

TEST_CASE("unreachable parameters keep a zero gradient") {
    Tensor used = Tensor::from_values({2}, {1, 2});
    Tensor unused = Tensor::from_values({2}, {3, 4});
    unused.zero_grad();
    Tape tape;
    tape.backward(sum(used, &tape));
    CHECK(used.grad() == std::vector<double>{1, 1});
    CHECK(unused.grad() == std::vector<double>{0, 0});
}

TEST_CASE("two-layer model gradient check end to end") {
    std::mt19937 rng(47);
    Tensor x = random_tensor({4, 3}, rng);
    Tensor w1 = random_tensor({3, 5}, rng, -0.8, 0.8);
    Tensor b1 = random_tensor({5}, rng, -0.5, 0.5);
    Tensor w2 = random_tensor({5, 2}, rng, -0.8, 0.8);
    Tensor b2 = random_tensor({2}, rng, -0.5, 0.5);
    std::vector<std::size_t> targets{0, 1, 1, 0};

    auto loss_value = [&](Tape* tape) {
        Tensor h = relu(add_row_bias(matmul(x, w1, tape), b1, tape), tape);
        Tensor logits = add_row_bias(matmul(h, w2, tape), b2, tape);
        Tensor logp = log_softmax_rows(logits, tape);
        Tensor picked = pick_per_row(logp, targets, tape);
        return scale(sum(picked, tape), -0.25, tape);
    };

    Tape tape;
    tape.backward(loss_value(&tape));
    auto f = [&]() { return loss_value(nullptr).value(); };
    for (Tensor* p : {&w1, &b1, &w2, &b2}) {
        CHECK(max_fd_error(*p, p->grad(), f) < kFdTolerance);
    }
}

TEST_CASE("tensor construction and accessors") {
    Tensor t = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.size() == 6);
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    CHECK(t.at(1, 2) == 6.0);
    CHECK(t.all_finite());
    CHECK_THROWS_AS(Tensor::from_values({2, 2}, {1, 2, 3}), ShapeError);
    CHECK_THROWS_AS(t.value(), std::logic_error);

    Tensor nan_t = Tensor::from_values({1}, {std::nan("")});
    CHECK_FALSE(nan_t.all_finite());

    Tensor undef;
    CHECK_FALSE(undef.defined());
    CHECK_THROWS_AS(undef.shape(), std::logic_error);

    std::mt19937 rng(3);
    Tensor u = Tensor::uniform({4, 4}, -0.05, 0.05, rng);
    for (double v : u.values()) {
        CHECK(v >= -0.05);
        CHECK(v <= 0.05);
    }
}

TEST_CASE("copies share storage, distinct tensors do not") {
    Tensor a = Tensor::from_values({2}, {1, 2});
    Tensor alias = a;
    alias.values()[0] = 9.0;
    CHECK(a.values()[0] == 9.0);
    CHECK(a.node_id() == alias.node_id());

    Tensor b = Tensor::from_values({2}, {1, 2});
    CHECK(a.node_id() != b.node_id());
}
