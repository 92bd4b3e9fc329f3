// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "fd_common.hpp"
#include "fedmm/grad_check.hpp"
#include "fedmm/tape.hpp"

using namespace fedmm;

TEST_CASE("backward of theta^2 through a reused parameter node") {
    // f(theta) = theta * theta built as two chained 1x1 linear layers sharing
    // the same weight node; gradient accumulates across both uses.
    Tape tape;
    const auto x = tape.leaf(Tensor({1, 1}, {1.0}));
    const auto w = tape.leaf(Tensor({1, 1}, {3.0}));
    const auto zero_bias = tape.leaf(Tensor::zeros({1}));
    const auto h = tape.linear(x, w, zero_bias);
    const auto out = tape.linear(h, w, zero_bias);
    CHECK(tape.value(out)[0] == doctest::Approx(9.0));
    tape.backward(out);
    CHECK(tape.grad(w)[0] == doctest::Approx(6.0));
}

TEST_CASE("parameters unreachable from the loss get exactly-zero gradients") {
    Tape tape;
    const auto used = tape.leaf(Tensor({1, 2}, {0.3, -0.7}));
    const auto unused = tape.leaf(Tensor({4, 4}, std::vector<double>(16, 1.0)));
    const auto loss = tape.softmax_cross_entropy(used, std::vector<int>{1});
    tape.backward(loss);
    for (std::size_t i = 0; i < 16; ++i) CHECK(tape.grad(unused)[i] == 0.0);
    CHECK(tape.grad(used)[0] != 0.0);
}

TEST_CASE("backward twice is a usage error") {
    Tape tape;
    const auto x = tape.leaf(Tensor({1, 2}, {0.0, 1.0}));
    const auto loss = tape.softmax_cross_entropy(x, std::vector<int>{0});
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), UsageError);
}

TEST_CASE("backward requires a scalar node") {
    Tape tape;
    const auto x = tape.leaf(Tensor({1, 2}, {0.0, 1.0}));
    CHECK_THROWS_AS(tape.backward(x), UsageError);
    CHECK_THROWS_AS(tape.grad(x), UsageError);  // no backward ran on this tape
}

TEST_CASE("tape forward values and gradients are deterministic across runs") {
    auto run = [] {
        Rng rng(99);
        Tape tape;
        const auto in = tape.leaf(fdtest::random_tensor({2, 1, 5, 5}, rng));
        const auto w = tape.leaf(fdtest::random_tensor({3, 1, 3, 3}, rng));
        const auto b = tape.leaf(fdtest::random_tensor({3}, rng));
        auto x = tape.conv2d(in, w, b, 1, 1);
        x = tape.relu(x);
        x = tape.maxpool2d(x, 2, 2);
        const Tensor out = tape.value(x);
        const auto flat = tape.flatten_concat(std::vector<Tape::NodeId>{x});
        const auto rw = tape.leaf(fdtest::random_tensor({tape.value(flat).dim(1), 4}, rng));
        const auto rb = tape.leaf(fdtest::random_tensor({4}, rng));
        const auto loss =
            tape.softmax_cross_entropy(tape.linear(flat, rw, rb), std::vector<int>{0, 2});
        CHECK(tape.value(loss).all_finite());
        CHECK(out.all_finite());
        tape.backward(loss);
        CHECK(tape.grad(w).all_finite());
        CHECK(tape.grad(in).all_finite());
        return std::make_pair(out, std::make_pair(tape.grad(w), tape.grad(in)));
    };
    const auto a = run();
    const auto b = run();
    CHECK(a.first == b.first);
    CHECK(a.second.first == b.second.first);
    CHECK(a.second.second == b.second.second);
}

TEST_CASE("gradient check on a quadratic is exact to rounding") {
    ParamSet p;
    p.add("theta", Tensor({3}, {0.4, -1.2, 2.0}));
    DifferentiableFn fn;
    fn.value = [](const ParamSet& q) {
        double s = 0.0;
        for (std::size_t i = 0; i < 3; ++i) s += q.tensor(0)[i] * q.tensor(0)[i];
        return s;
    };
    fn.gradient = [](const ParamSet& q) {
        ParamSet g;
        Tensor t({3});
        for (std::size_t i = 0; i < 3; ++i) t[i] = 2.0 * q.tensor(0)[i];
        g.add("theta", std::move(t));
        return g;
    };
    for (double h : {1e-6, 1e-5, 1e-4}) {
        const GradCheckReport report = grad_check(fn, p, h, 1e-9);
        CHECK(report.pass);
        CHECK(report.max_rel_err <= 1e-9);
    }
}

TEST_CASE("grad_check reports failures with the offending entry") {
    ParamSet p;
    p.add("theta", Tensor({1}, {1.0}));
    DifferentiableFn fn;
    fn.value = [](const ParamSet& q) { return q.tensor(0)[0] * q.tensor(0)[0]; };
    fn.gradient = [](const ParamSet&) {
        ParamSet g;
        g.add("theta", Tensor({1}, {17.0}));  // deliberately wrong
        return g;
    };
    const GradCheckReport report = grad_check(fn, p, 1e-5, 1e-5);
    CHECK_FALSE(report.pass);
    CHECK(report.entries[0].name == "theta");
    CHECK(report.summary().find("FAIL") != std::string::npos);
}

TEST_CASE("finite differences confirm every primitive's backward rule") {
    const int trials = 20;
    const std::uint64_t seed = 2024;
    for (const auto& check :
         {fdtest::check_conv2d(trials, seed), fdtest::check_relu(trials, seed),
          fdtest::check_maxpool(trials, seed), fdtest::check_linear(trials, seed),
          fdtest::check_flatten_concat(trials, seed), fdtest::check_softmax_xent(trials, seed),
          fdtest::check_composite(trials, seed)}) {
        INFO(check.name << " max rel err " << check.max_rel_err);
        CHECK(check.pass);
        CHECK(check.max_rel_err <= fdtest::kFdTol);
    }
}

TEST_CASE("zero part in a concat keeps its gradient slice equal to upstream") {
    // one part all zeros: its output slice is zero and its gradient slice is
    // exactly the matching slice of the upstream gradient
    Rng rng(7);
    Tape tape;
    const auto live = tape.leaf(fdtest::random_tensor({2, 3}, rng));
    const auto zeros = tape.leaf(Tensor::zeros({2, 2}));
    const auto cat = tape.flatten_concat(std::vector<Tape::NodeId>{live, zeros});
    for (std::size_t n = 0; n < 2; ++n) {
        CHECK(tape.value(cat)[n * 5 + 3] == 0.0);
        CHECK(tape.value(cat)[n * 5 + 4] == 0.0);
    }
    const auto w = tape.leaf(fdtest::random_tensor({5, 2}, rng));
    const auto b = tape.leaf(fdtest::random_tensor({2}, rng));
    const auto logits = tape.linear(cat, w, b);
    const auto loss = tape.softmax_cross_entropy(logits, std::vector<int>{0, 1});
    tape.backward(loss);
    for (std::size_t n = 0; n < 2; ++n) {
        CHECK(tape.grad(zeros)[n * 2 + 0] == tape.grad(cat)[n * 5 + 3]);
        CHECK(tape.grad(zeros)[n * 2 + 1] == tape.grad(cat)[n * 5 + 4]);
    }
}
