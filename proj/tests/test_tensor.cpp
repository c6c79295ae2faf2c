#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fdl/errors.hpp"
#include "fdl/rng.hpp"
#include "fdl/tape.hpp"
#include "fdl/tensor.hpp"
#include "oracles.hpp"

using namespace fdl;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = rng.normal() * scale;
    return t;
}

}  // namespace

TEST_CASE("tensor invariants") {
    CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5, 0.0)), DimensionError);
    CHECK_THROWS_AS(Tensor({0, 3}), DimensionError);
    Tensor t({2, 3}, 1.5);
    CHECK(t.size() == 6);
    CHECK(t.all_finite());
    t.data[4] = std::nan("");
    CHECK_FALSE(t.all_finite());
}

TEST_CASE("matmul identity and annihilator") {
    Tensor eye({2, 2}, {1, 0, 0, 1});
    Tensor a({2, 2}, {1, 2, 3, 4});
    Tensor prod = matmul(eye, a);
    for (std::size_t i = 0; i < 4; ++i) CHECK(prod.data[i] == a.data[i]);

    Tensor z({2, 2}, 0.0);
    Tensor zero = matmul(a, z);
    for (double v : zero.data) CHECK(v == 0.0);
}

TEST_CASE("matmul matches triple-loop oracle") {
    Rng rng(11);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 2}, rng);
    Tensor got = matmul(a, b);
    Tensor want = oracle::matmul(a, b);
    for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(std::abs(got.data[i] - want.data[i]) < 1e-12);
    }
}

TEST_CASE("matmul shape errors name both shapes") {
    Tensor a({3, 4});
    Tensor b({5, 2});
    try {
        matmul(a, b);
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("3 x 4") != std::string::npos);
        CHECK(msg.find("5 x 2") != std::string::npos);
    }
}

TEST_CASE("transpose identity: (AB)^T == B^T A^T") {
    Rng rng(5);
    for (int trial = 0; trial < 3; ++trial) {
        Tensor a = random_tensor({4, 3}, rng);
        Tensor b = random_tensor({3, 5}, rng);
        Tensor lhs = transpose2d(matmul(a, b));
        Tensor rhs = matmul(transpose2d(b), transpose2d(a));
        for (std::size_t i = 0; i < lhs.size(); ++i) {
            CHECK(std::abs(lhs.data[i] - rhs.data[i]) < 1e-12);
        }
    }
}

TEST_CASE("softmax forced values") {
    Tensor z({64}, 0.0);
    Tensor u = softmax(z, 0);
    for (double v : u.data) CHECK(v == doctest::Approx(1.0 / 64).epsilon(1e-14));

    Tensor x({2}, {0.0, std::log(3.0)});
    Tensor y = softmax(x, 0);
    CHECK(y.data[0] == doctest::Approx(0.25).epsilon(1e-13));
    CHECK(y.data[1] == doctest::Approx(0.75).epsilon(1e-13));
}

TEST_CASE("softmax matches direct oracle and stays on the simplex") {
    Rng rng(7);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> raw(8);
        for (double& v : raw) v = rng.uniform(-3.0, 3.0);
        Tensor x({8}, raw);
        Tensor y = softmax(x, 0);
        const auto want = oracle::softmax_vec(raw);
        double sum = 0.0;
        for (std::size_t i = 0; i < 8; ++i) {
            CHECK(std::abs(y.data[i] - want[i]) < 1e-12);
            CHECK(y.data[i] > 0.0);
            CHECK(y.data[i] <= 1.0);
            sum += y.data[i];
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("softmax slices sum to one on higher ranks") {
    Rng rng(9);
    Tensor x = random_tensor({3, 4, 5}, rng, 2.0);
    for (std::size_t axis = 0; axis < 3; ++axis) {
        Tensor y = softmax(x, axis);
        std::size_t outer = 1, inner = 1;
        for (std::size_t i = 0; i < axis; ++i) outer *= x.shape[i];
        for (std::size_t i = axis + 1; i < 3; ++i) inner *= x.shape[i];
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t in = 0; in < inner; ++in) {
                double sum = 0.0;
                for (std::size_t a = 0; a < x.shape[axis]; ++a)
                    sum += y.data[(o * x.shape[axis] + a) * inner + in];
                CHECK(std::abs(sum - 1.0) < 1e-12);
            }
    }
    CHECK_THROWS_AS(softmax(x, 3), DimensionError);
}

TEST_CASE("softmax handles huge inputs without overflow") {
    Tensor x({3}, {1e4, 1e4 - 5.0, -1e4});
    Tensor y = softmax(x, 0);
    CHECK(y.all_finite());
    CHECK(y.data[0] > 0.99);
}

TEST_CASE("conv1x1 identity and bias-only cases") {
    Rng rng(13);
    Tensor x = random_tensor({1, 3, 4, 4}, rng);
    Tape tape;
    Param eye(Tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}));
    ValueId y = tape.conv1x1(tape.constant(x), tape.param(eye), std::nullopt);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(tape.value(y).data[i] == x.data[i]);

    Param zeros(Tensor({2, 3}, 0.0));
    Param bias(Tensor({2}, {0.7, -1.1}));
    ValueId yb = tape.conv1x1(tape.constant(x), tape.param(zeros), tape.param(bias));
    const Tensor& out = tape.value(yb);
    for (std::size_t co = 0; co < 2; ++co)
        for (std::size_t p = 0; p < 16; ++p)
            CHECK(out.data[co * 16 + p] == bias.value.data[co]);
}

TEST_CASE("conv1x1 matches per-pixel oracle") {
    Rng rng(17);
    Tensor x = random_tensor({2, 5, 3, 4}, rng);
    Tensor w = random_tensor({3, 5}, rng);
    std::vector<double> b = {0.1, -0.2, 0.5};
    Tape tape;
    Param wp(w), bp(Tensor({3}, b));
    ValueId y = tape.conv1x1(tape.constant(x), tape.param(wp), tape.param(bp));
    Tensor want = oracle::conv1x1(x, w, &b);
    for (std::size_t i = 0; i < want.size(); ++i) {
        CHECK(std::abs(tape.value(y).data[i] - want.data[i]) < 1e-12);
    }
}

TEST_CASE("conv1x1 channel mismatch raises") {
    Tape tape;
    Param w(Tensor({2, 4}));
    CHECK_THROWS_AS(
        tape.conv1x1(tape.constant(Tensor({1, 3, 2, 2})), tape.param(w), std::nullopt),
        DimensionError);
}

TEST_CASE("normalize_groups forced cases") {
    Tape tape;
    Param gamma(Tensor({1}, {1.0})), beta(Tensor({1}, {0.0}));

    // constant input: eps guards the zero variance, output is all beta
    ValueId c = tape.normalize_groups(tape.constant(Tensor({4, 1, 1, 1}, 2.5)),
                                      tape.param(gamma), tape.param(beta), 1e-5);
    for (double v : tape.value(c).data) CHECK(v == 0.0);

    Param beta5(Tensor({1}, {5.0}));
    ValueId y = tape.normalize_groups(tape.constant(Tensor({2, 1, 1, 1}, {-1.0, 1.0})),
                                      tape.param(gamma), tape.param(beta5), 1e-16);
    CHECK(tape.value(y).data[0] == doctest::Approx(4.0).epsilon(1e-9));
    CHECK(tape.value(y).data[1] == doctest::Approx(6.0).epsilon(1e-9));
}

TEST_CASE("normalize_groups statistics via direct moments") {
    Rng rng(23);
    Tensor x({64, 1, 1, 1});
    for (double& v : x.data) v = rng.normal() * 5.0;
    Tape tape;
    Param gamma(Tensor({1}, {1.0})), beta(Tensor({1}, {0.0}));
    ValueId y = tape.normalize_groups(tape.constant(x), tape.param(gamma), tape.param(beta),
                                      1e-5);
    auto [mean, var] = oracle::mean_var(tape.value(y).data);
    CHECK(std::abs(mean) < 1e-12);
    CHECK(std::abs(var - 1.0) < 1e-6);
}

TEST_CASE("normalize_groups rejects degenerate statistics") {
    Tape tape;
    Param gamma(Tensor({1}, {1.0})), beta(Tensor({1}, {0.0}));
    CHECK_THROWS_AS(tape.normalize_groups(tape.constant(Tensor({1, 1, 1, 1})),
                                          tape.param(gamma), tape.param(beta), 1e-5),
                    DataError);
}

TEST_CASE("adaptive_avg_pool identity and constant cases") {
    Rng rng(29);
    Tensor x = random_tensor({2, 3, 3}, rng);
    Tensor same = adaptive_avg_pool(x, 3);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(same.data[i] == x.data[i]);

    Tensor c({3, 5, 7}, 4.25);
    for (std::size_t n : {1ul, 2ul, 4ul, 9ul}) {
        Tensor pooled = adaptive_avg_pool(c, n);
        for (double v : pooled.data) CHECK(v == doctest::Approx(4.25).epsilon(1e-15));
    }
}

TEST_CASE("adaptive_avg_pool matches bin-loop oracle on a ramp") {
    Tensor ramp({1, 4, 4});
    for (std::size_t i = 0; i < 16; ++i) ramp.data[i] = static_cast<double>(i);
    Tensor got = adaptive_avg_pool(ramp, 2);
    Tensor want = oracle::adaptive_avg_pool(ramp, 2);
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got.data[i] == want.data[i]);
    CHECK(got.at(0, 0, 0) == doctest::Approx(2.5));
    CHECK(got.at(0, 1, 1) == doctest::Approx(12.5));
}

TEST_CASE("adaptive_avg_pool preserves the global mean when sizes divide") {
    Rng rng(31);
    Tensor x = random_tensor({3, 8, 12}, rng);
    Tensor pooled = adaptive_avg_pool(x, 4);
    double in_mean = 0.0, out_mean = 0.0;
    for (double v : x.data) in_mean += v;
    for (double v : pooled.data) out_mean += v;
    in_mean /= static_cast<double>(x.size());
    out_mean /= static_cast<double>(pooled.size());
    CHECK(std::abs(in_mean - out_mean) < 1e-12);
}

TEST_CASE("adaptive_avg_pool upsamples with overlapping bins") {
    Tensor x({1, 2, 2}, {1, 2, 3, 4});
    Tensor up = adaptive_avg_pool(x, 3);
    Tensor want = oracle::adaptive_avg_pool(x, 3);
    for (std::size_t i = 0; i < up.size(); ++i) CHECK(up.data[i] == want.data[i]);
}

TEST_CASE("grad_check quadratic and constant losses") {
    Param theta(Tensor({2}, {1.0, 2.0}));
    const double err = grad_check(
        [&](Tape& t) { return t.sum(t.square(t.param(theta))); }, {&theta});
    CHECK(err < 1e-9);
    CHECK(theta.grad.data[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(theta.grad.data[1] == doctest::Approx(4.0).epsilon(1e-12));

    Param unused(Tensor({3}, {1.0, -2.0, 0.5}));
    const double err2 = grad_check(
        [&](Tape& t) {
            (void)t.param(unused);
            return t.constant(Tensor({1}, {7.5}));
        },
        {&unused});
    CHECK(err2 < 1e-9);
}

TEST_CASE("grad accumulates across backward passes until zeroed") {
    Param theta(Tensor({1}, {3.0}));
    for (int pass = 0; pass < 2; ++pass) {
        Tape t;
        ValueId loss = t.square(t.param(theta));
        t.backward(loss);
        t.accumulate_param_grads();
    }
    CHECK(theta.grad.data[0] == doctest::Approx(12.0));  // two passes of 2*theta
    theta.zero_grad();
    CHECK(theta.grad.data[0] == 0.0);
}

TEST_CASE("every exported op passes grad_check across seeds") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        Rng rng(seed);
        CAPTURE(seed);
        {
            Param a(random_tensor({3, 4}, rng)), b(random_tensor({4, 2}, rng));
            CHECK(grad_check([&](Tape& t) {
                      return t.sum(t.square(t.matmul(t.param(a), t.param(b))));
                  }, {&a, &b}) < 1e-5);
        }
        {
            Param x(random_tensor({6}, rng));
            Tensor r = random_tensor({6}, rng);
            CHECK(grad_check([&](Tape& t) {
                      return t.sum(t.mul(t.softmax(t.param(x), 0), t.constant(r)));
                  }, {&x}) < 1e-5);
        }
        {
            Param x(random_tensor({1, 3, 4, 4}, rng)), w(random_tensor({2, 3}, rng)),
                b(random_tensor({2}, rng));
            CHECK(grad_check([&](Tape& t) {
                      return t.sum(t.square(
                          t.conv1x1(t.param(x), t.param(w), t.param(b))));
                  }, {&x, &w, &b}) < 1e-5);
        }
        {
            Param x(random_tensor({1, 2, 5, 5}, rng)), w(random_tensor({3, 2, 3, 3}, rng)),
                b(random_tensor({3}, rng));
            for (std::size_t stride : {1ul, 2ul}) {
                CHECK(grad_check([&](Tape& t) {
                          return t.sum(t.square(
                              t.conv3x3(t.param(x), t.param(w), t.param(b), stride)));
                      }, {&x, &w, &b}) < 1e-5);
            }
        }
        {
            Param x(random_tensor({8, 1, 1, 1}, rng, 2.0));
            Param gm(Tensor({1}, {1.2})), bt(Tensor({1}, {-0.3}));
            Tensor r = random_tensor({8, 1, 1, 1}, rng);
            CHECK(grad_check([&](Tape& t) {
                      return t.sum(t.mul(
                          t.normalize_groups(t.param(x), t.param(gm), t.param(bt), 1e-5),
                          t.constant(r)));
                  }, {&x, &gm, &bt}) < 1e-5);
        }
        {
            Param x(random_tensor({2, 5, 7}, rng));
            CHECK(grad_check([&](Tape& t) {
                      return t.sum(t.square(t.adaptive_avg_pool(t.param(x), 3)));
                  }, {&x}) < 1e-5);
        }
        {
            Param x(random_tensor({2, 3, 4}, rng));
            CHECK(grad_check([&](Tape& t) {
                      return t.sum(t.square(t.upsample_bilinear(t.param(x), 9, 11)));
                  }, {&x}) < 1e-5);
        }
        {
            Param v(random_tensor({12}, rng)), w(random_tensor({4}, rng));
            CHECK(grad_check([&](Tape& t) {
                      return t.sum(t.square(t.group_scale(t.param(v), t.param(w))));
                  }, {&v, &w}) < 1e-5);
        }
        {
            // keep values away from the kink so central differences are valid
            Param x(Tensor({10}));
            for (double& v : x.value.data) {
                v = rng.normal();
                if (std::abs(v) < 0.01) v = 0.5;
            }
            CHECK(grad_check([&](Tape& t) {
                      return t.sum(t.square(t.relu(t.param(x))));
                  }, {&x}) < 1e-5);
        }
    }
}

TEST_CASE("op outputs stay finite on finite inputs") {
    Rng rng(37);
    Tape tape;
    Param w(random_tensor({4, 3, 3, 3}, rng, 3.0)), b(random_tensor({4}, rng));
    ValueId y = tape.conv3x3(tape.constant(random_tensor({1, 3, 6, 6}, rng, 10.0)),
                             tape.param(w), tape.param(b), 1);
    CHECK(tape.value(y).all_finite());
    ValueId s = tape.softmax(tape.constant(random_tensor({50}, rng, 300.0)), 0);
    CHECK(tape.value(s).all_finite());
}

TEST_CASE("FDLT round trip is bitwise exact") {
    Rng rng(41);
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "fdlt_test";
    fs::create_directories(dir);
    for (int trial = 0; trial < 8; ++trial) {
        Shape shape;
        const std::size_t rank = 1 + rng.below(4);
        for (std::size_t i = 0; i < rank; ++i) shape.push_back(1 + rng.below(5));
        Tensor t(shape);
        for (double& v : t.data) v = rng.normal() * std::pow(10.0, rng.uniform(-8, 8));
        const fs::path p = dir / ("t" + std::to_string(trial) + ".fdlt");
        write_fdlt(p, t);
        Tensor back = read_fdlt(p);
        REQUIRE(back.shape == t.shape);
        for (std::size_t i = 0; i < t.size(); ++i) CHECK(back.data[i] == t.data[i]);
    }
    fs::remove_all(dir);
}

TEST_CASE("FDLT rejects malformed input") {
    CHECK_THROWS_AS(decode_fdlt("XXXX"), FormatError);
    std::string good = encode_fdlt(Tensor({2, 2}, {1, 2, 3, 4}));
    CHECK_THROWS_AS(decode_fdlt(std::string_view(good).substr(0, good.size() - 3)),
                    FormatError);
    try {
        decode_fdlt(std::string_view(good).substr(0, 9));
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("offset") != std::string::npos);
    }
}
