#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <vector>

#include "a2f/ops.hpp"
#include "a2f/rng.hpp"

#include "support/testutil.hpp"

using namespace a2f;
using testutil::bit_equal;
using testutil::max_abs_diff;
using testutil::naive_conv2d;
using testutil::random_tensor;

namespace {

Tensor ones(Shape s) { return Tensor(s, 1.0f); }

}  // namespace

TEST_CASE("conv2d: 3x3 box sum on an all-ones image") {
    Tensor x = ones({1, 1, 3, 3});
    Tensor w = ones({1, 1, 3, 3});
    Tensor b({1, 1, 1, 1});
    Tensor y = conv2d(x, w, b);
    // zero-padded box sums: 4 in corners, 6 on edges, 9 in the center
    const float expect[9] = {4, 6, 4, 6, 9, 6, 4, 6, 4};
    for (int i = 0; i < 9; ++i) CHECK(y[i] == doctest::Approx(expect[i]).epsilon(1e-7));
}

TEST_CASE("conv2d: 1x1 identity kernel") {
    Rng rng(7);
    Tensor x = random_tensor<float>({2, 1, 4, 5}, rng);
    Tensor w = ones({1, 1, 1, 1});
    Tensor b({1, 1, 1, 1});
    CHECK(bit_equal(conv2d(x, w, b), x));
}

TEST_CASE("conv2d: matches the brute-force loop oracle") {
    Rng rng(11);
    for (int k : {1, 3, 5}) {
        Tensor x = random_tensor<float>({2, 3, 5, 5}, rng);
        Tensor w = random_tensor<float>({4, 3, k, k}, rng);
        Tensor b = random_tensor<float>({1, 4, 1, 1}, rng);
        Tensor got = conv2d(x, w, b);
        Tensor want = naive_conv2d(x, w, b);
        CHECK(max_abs_diff(got, want) < 1e-5);
    }
}

TEST_CASE("conv2d: linear in the input for zero bias") {
    Rng rng(13);
    Tensor x = random_tensor<float>({1, 2, 6, 6}, rng);
    Tensor y = random_tensor<float>({1, 2, 6, 6}, rng);
    Tensor w = random_tensor<float>({3, 2, 3, 3}, rng);
    Tensor b({1, 3, 1, 1});
    const float alpha = 0.7f, beta = -1.3f;

    Tensor mix(x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i) mix[i] = alpha * x[i] + beta * y[i];
    Tensor lhs = conv2d(mix, w, b);
    Tensor cx = conv2d(x, w, b);
    Tensor cy = conv2d(y, w, b);
    Tensor rhs(cx.shape());
    for (std::int64_t i = 0; i < cx.size(); ++i) rhs[i] = alpha * cx[i] + beta * cy[i];
    CHECK(max_abs_diff(lhs, rhs) < 1e-5);
}

TEST_CASE("conv2d: rejects mismatched shapes with dimension detail") {
    Tensor x({1, 2, 3, 3});
    Tensor w({1, 3, 3, 3});
    Tensor b({1, 1, 1, 1});
    CHECK_THROWS_WITH_AS(conv2d(x, w, b), doctest::Contains("input channels"), ConfigError);
    Tensor even({1, 2, 2, 2});
    CHECK_THROWS_AS(conv2d(x, even, b), ConfigError);
}

TEST_CASE("relu: clamps negatives and passes positives") {
    Tensor x({1, 1, 1, 3}, {-1.0f, 0.0f, 2.0f});
    Tensor y = relu(x);
    CHECK(y[0] == 0.0f);
    CHECK(y[1] == 0.0f);
    CHECK(y[2] == 2.0f);
}

TEST_CASE("relu: all-negative input gives zero output and zero gradient") {
    Rng rng(17);
    Tensor x = random_tensor<float>({1, 2, 3, 3}, rng, -5.0, -0.1);
    Tensor y = relu(x);
    Tensor dy(y.shape(), 1.0f);
    Tensor dx(x.shape());
    relu_backward(y, dy, &dx);
    for (std::int64_t i = 0; i < y.size(); ++i) {
        CHECK(y[i] == 0.0f);
        CHECK(dx[i] == 0.0f);
    }
}

TEST_CASE("relu: elementwise oracle on random input") {
    Rng rng(19);
    Tensor x = random_tensor<float>({2, 3, 4, 4}, rng);
    Tensor y = relu(x);
    for (std::int64_t i = 0; i < x.size(); ++i) {
        CHECK(y[i] == std::max(0.0f, x[i]));
        CHECK(y[i] >= 0.0f);
    }
}

TEST_CASE("sigmoid: fixed points and saturation") {
    Tensor x({1, 1, 1, 3}, {0.0f, 30.0f, -30.0f});
    Tensor y = sigmoid(x);
    CHECK(y[0] == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(std::abs(1.0 - y[1]) < 1e-9);
    CHECK(std::abs(y[2]) < 1e-9);

    // gradient at 0 is y(1-y) = 0.25
    Tensor dy(x.shape(), 1.0f);
    Tensor dx(x.shape());
    sigmoid_backward(y, dy, &dx);
    CHECK(dx[0] == doctest::Approx(0.25).epsilon(1e-6));
}

TEST_CASE("sigmoid: outputs stay strictly inside (0,1)") {
    Rng rng(23);
    Tensor x = random_tensor<float>({2, 2, 5, 5}, rng, -12.0, 12.0);
    Tensor y = sigmoid(x);
    for (std::int64_t i = 0; i < y.size(); ++i) {
        CHECK(y[i] > 0.0f);
        CHECK(y[i] < 1.0f);
    }
}

TEST_CASE("global_avg_pool: constants and the 2x2 mean") {
    Tensor c({3, 2, 4, 5}, 7.0f);
    Tensor yc = global_avg_pool(c);
    for (std::int64_t i = 0; i < yc.size(); ++i) CHECK(yc[i] == doctest::Approx(7.0f));

    Tensor x({1, 1, 2, 2}, {1.0f, 2.0f, 3.0f, 4.0f});
    CHECK(global_avg_pool(x)[0] == doctest::Approx(2.5f));
}

TEST_CASE("global_avg_pool: matches loop-sum oracle within 1e-6") {
    Rng rng(29);
    Tensor x = random_tensor<float>({2, 3, 7, 5}, rng);
    Tensor y = global_avg_pool(x);
    for (int n = 0; n < x.n(); ++n) {
        for (int c = 0; c < x.c(); ++c) {
            double sum = 0.0;
            for (int i = 0; i < x.h(); ++i) {
                for (int j = 0; j < x.w(); ++j) sum += x.at(n, c, i, j);
            }
            CHECK(std::abs(y.at(n, c, 0, 0) - sum / (x.h() * x.w())) < 1e-6);
        }
    }
}

TEST_CASE("pixel_shuffle: 1x4x1x1 becomes the 2x2 grid [[a,b],[c,d]]") {
    Tensor x({1, 4, 1, 1}, {1.0f, 2.0f, 3.0f, 4.0f});
    Tensor y = pixel_shuffle(x, 2);
    CHECK(y.shape() == Shape{1, 1, 2, 2});
    CHECK(y.at(0, 0, 0, 0) == 1.0f);
    CHECK(y.at(0, 0, 0, 1) == 2.0f);
    CHECK(y.at(0, 0, 1, 0) == 3.0f);
    CHECK(y.at(0, 0, 1, 1) == 4.0f);
}

TEST_CASE("pixel_shuffle: p=1 is the identity") {
    Rng rng(31);
    Tensor x = random_tensor<float>({2, 3, 4, 4}, rng);
    CHECK(bit_equal(pixel_shuffle(x, 1), x));
}

TEST_CASE("pixel_shuffle: unshuffle inverts it bit-exactly and values are preserved") {
    Rng rng(37);
    Tensor x = random_tensor<float>({2, 12, 3, 5}, rng);
    Tensor y = pixel_shuffle(x, 2);
    CHECK(bit_equal(pixel_unshuffle(y, 2), x));

    std::vector<float> a(x.data(), x.data() + x.size());
    std::vector<float> b(y.data(), y.data() + y.size());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);

    double sum_x = 0.0, sum_y = 0.0;
    for (std::int64_t i = 0; i < x.size(); ++i) {
        sum_x += x[i];
        sum_y += y[i];
    }
    CHECK(sum_x == sum_y);
}

TEST_CASE("pixel_shuffle: rejects channel counts not divisible by p^2") {
    Tensor x({1, 6, 2, 2});
    CHECK_THROWS_AS(pixel_shuffle(x, 2), ConfigError);
}

TEST_CASE("channel_concat: single input is the identity, two inputs append") {
    Rng rng(41);
    Tensor a = random_tensor<float>({1, 2, 3, 3}, rng);
    std::vector<Tensor> one{a};
    CHECK(bit_equal(channel_concat(std::span<const Tensor>(one)), a));

    Tensor p({1, 2, 1, 1}, {1.0f, 2.0f});
    Tensor q({1, 2, 1, 1}, {3.0f, 4.0f});
    std::vector<Tensor> both{p, q};
    Tensor y = channel_concat(std::span<const Tensor>(both));
    CHECK(y.shape() == Shape{1, 4, 1, 1});
    for (int i = 0; i < 4; ++i) CHECK(y[i] == static_cast<float>(i + 1));
}

TEST_CASE("channel_concat: output channels sum over 1..16 random parts") {
    Rng rng(43);
    for (int trial = 0; trial < 8; ++trial) {
        const int count = 1 + static_cast<int>(rng.below(16));
        std::vector<Tensor> parts;
        int total = 0;
        for (int i = 0; i < count; ++i) {
            const int c = 1 + static_cast<int>(rng.below(5));
            parts.push_back(random_tensor<float>({2, c, 3, 4}, rng));
            total += c;
        }
        Tensor y = channel_concat(std::span<const Tensor>(parts));
        CHECK(y.c() == total);
    }
}

TEST_CASE("channel_concat: split at the same offsets is the identity") {
    Rng rng(47);
    std::vector<Tensor> parts{random_tensor<float>({2, 3, 4, 4}, rng),
                              random_tensor<float>({2, 1, 4, 4}, rng),
                              random_tensor<float>({2, 5, 4, 4}, rng)};
    Tensor y = channel_concat(std::span<const Tensor>(parts));

    std::vector<Tensor> back{Tensor({2, 3, 4, 4}), Tensor({2, 1, 4, 4}), Tensor({2, 5, 4, 4})};
    std::vector<Tensor*> slots{&back[0], &back[1], &back[2]};
    channel_concat_backward(y, std::span<Tensor* const>(slots.data(), slots.size()));
    for (int i = 0; i < 3; ++i) CHECK(bit_equal(back[static_cast<std::size_t>(i)], parts[static_cast<std::size_t>(i)]));
}

TEST_CASE("channel_concat: rejects mismatched spatial dims") {
    std::vector<Tensor> parts{Tensor({1, 1, 2, 2}), Tensor({1, 1, 3, 2})};
    CHECK_THROWS_AS(channel_concat(std::span<const Tensor>(parts)), ConfigError);
}

TEST_CASE("channel_scale: ones pass through, zeros kill input and gradient") {
    Rng rng(53);
    Tensor x = random_tensor<float>({2, 3, 4, 4}, rng);
    CHECK(bit_equal(channel_scale(x, Tensor({2, 3, 1, 1}, 1.0f)), x));

    Tensor zeros({2, 3, 1, 1});
    Tensor y = channel_scale(x, zeros);
    Tensor dy(y.shape(), 1.0f);
    Tensor dx(x.shape());
    channel_scale_backward<float>(x, zeros, dy, &dx, nullptr);
    for (std::int64_t i = 0; i < y.size(); ++i) {
        CHECK(y[i] == 0.0f);
        CHECK(dx[i] == 0.0f);
    }
}

TEST_CASE("channel_scale: matches the broadcast multiply oracle") {
    Rng rng(59);
    Tensor x = random_tensor<float>({2, 4, 3, 5}, rng);
    Tensor s = random_tensor<float>({2, 4, 1, 1}, rng);
    Tensor y = channel_scale(x, s);
    for (int n = 0; n < x.n(); ++n) {
        for (int c = 0; c < x.c(); ++c) {
            for (int i = 0; i < x.h(); ++i) {
                for (int j = 0; j < x.w(); ++j) {
                    CHECK(std::abs(y.at(n, c, i, j) - x.at(n, c, i, j) * s.at(n, c, 0, 0)) <
                          1e-6);
                }
            }
        }
    }
    CHECK_THROWS_AS(channel_scale(x, Tensor({2, 3, 1, 1})), ConfigError);
}

TEST_CASE("weighted_sum3: unit and zero factor cases") {
    Rng rng(61);
    Tensor a = random_tensor<float>({1, 2, 3, 3}, rng);
    Tensor zero(a.shape());
    CHECK(bit_equal(weighted_sum3(a, zero, zero, 1.0f, 1.0f, 1.0f), a));

    Tensor b = random_tensor<float>({1, 2, 3, 3}, rng);
    Tensor c = random_tensor<float>({1, 2, 3, 3}, rng);
    Tensor y = weighted_sum3(a, b, c, 0.0f, 0.0f, 0.0f);
    for (std::int64_t i = 0; i < y.size(); ++i) CHECK(y[i] == 0.0f);

    CHECK_THROWS_AS(weighted_sum3(a, b, Tensor({1, 2, 3, 4}), 1.0f, 1.0f, 1.0f), ConfigError);
}

TEST_CASE("weighted_sum3: scalar gradient equals <upstream, operand>") {
    Rng rng(67);
    Tensor a = random_tensor<float>({1, 2, 4, 4}, rng);
    Tensor b = random_tensor<float>({1, 2, 4, 4}, rng);
    Tensor c = random_tensor<float>({1, 2, 4, 4}, rng);
    Tensor dy = random_tensor<float>({1, 2, 4, 4}, rng);

    float dla = 0.0f, dlb = 0.0f, dlc = 0.0f;
    weighted_sum3_backward<float>(a, b, c, 0.3f, -0.6f, 1.1f, dy, nullptr, nullptr, nullptr, &dla,
                           &dlb, &dlc);
    CHECK(dla == doctest::Approx(dot(dy, a)).epsilon(1e-5));
    CHECK(dlb == doctest::Approx(dot(dy, b)).epsilon(1e-5));
    CHECK(dlc == doctest::Approx(dot(dy, c)).epsilon(1e-5));
}

TEST_CASE("add: identities and bit-exact commutativity") {
    Rng rng(71);
    Tensor a = random_tensor<float>({2, 3, 4, 4}, rng);
    Tensor zero(a.shape());
    CHECK(bit_equal(add(a, zero), a));

    Tensor neg(a.shape());
    for (std::int64_t i = 0; i < a.size(); ++i) neg[i] = -a[i];
    Tensor cancel = add(a, neg);
    for (std::int64_t i = 0; i < cancel.size(); ++i) CHECK(cancel[i] == 0.0f);

    Tensor b = random_tensor<float>({2, 3, 4, 4}, rng);
    CHECK(bit_equal(add(a, b), add(b, a)));
    CHECK_THROWS_AS(add(a, Tensor({2, 3, 4, 5})), ConfigError);
}

TEST_CASE("tensor: invariants on construction") {
    CHECK_THROWS_AS(Tensor({0, 1, 1, 1}), ConfigError);
    CHECK_THROWS_AS(Tensor({1, 1, 2, 2}, std::vector<float>{1.0f}), ConfigError);
    Tensor t({2, 3, 4, 5});
    CHECK(t.size() == 2 * 3 * 4 * 5);
}

TEST_CASE("tensor: debug dump round-trips through the binary format") {
    Rng rng(73);
    Tensor t = random_tensor<float>({2, 3, 2, 2}, rng);
    const auto path = std::filesystem::temp_directory_path() / "a2f_dump_test.bin";
    dump_tensor(t, path);
    Tensor back = read_tensor_dump(path);
    CHECK(bit_equal(t, back));
    std::filesystem::remove(path);
}
