#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "a2f/gradcheck.hpp"
#include "a2f/model_check.hpp"
#include "a2f/ops.hpp"

#include "support/testutil.hpp"

using namespace a2f;
using testutil::random_tensor;

namespace {

struct Tolerances {
    double eps;
    double tol;
    double guard() const { return tol / 2; }
};

template <typename S>
Tolerances tolerances() {
    if constexpr (std::is_same_v<S, double>) return {1e-5, 1e-6};
    return {1e-2, 1e-2};
}

// Inputs for ReLU-style kinks: magnitudes bounded away from 0 so the FD
// interval never crosses the non-smooth point.
template <typename S>
TensorT<S> off_kink_tensor(Shape shape, Rng& rng) {
    TensorT<S> t(shape);
    for (std::int64_t i = 0; i < t.size(); ++i) {
        const double sign = rng.below(2) == 0 ? -1.0 : 1.0;
        t[i] = static_cast<S>(sign * (0.2 + 0.8 * rng.unit()));
    }
    return t;
}

template <typename S>
void expect_clean(const GradCheckReport& r, double tol) {
    INFO("worst param: ", r.worst_param, " rel_err=", r.max_rel_err, " skipped=", r.skipped);
    CHECK(r.max_rel_err < tol);
    CHECK(r.checked > 0);
    // the smoothness guard may drop the odd coordinate, never the bulk
    CHECK(r.skipped * 5 <= r.checked);
}

template <typename S>
void check_conv2d(std::uint64_t seed) {
    const auto [eps, tol] = tolerances<S>();
    Rng rng(seed);
    TensorT<S> x = random_tensor<S>({2, 3, 5, 4}, rng);
    TensorT<S> w = random_tensor<S>({4, 3, 3, 3}, rng, -0.4, 0.4);
    TensorT<S> b = random_tensor<S>({1, 4, 1, 1}, rng, -0.2, 0.2);
    TensorT<S> proj = random_tensor<S>({2, 4, 5, 4}, rng);
    TensorT<S> dx(x.shape()), dw(w.shape()), db(b.shape());

    auto loss = [&]() { return dot(conv2d(x, w, b), proj); };
    auto grads = [&]() {
        dx.fill(S(0));
        dw.fill(S(0));
        db.fill(S(0));
        conv2d_backward(x, w, proj, &dx, &dw, &db);
    };
    const ParamView<S> views[] = {{"x", &x, &dx}, {"w", &w, &dw}, {"b", &b, &db}};
    expect_clean<S>(finite_diff_gradcheck<S>(loss, grads, views, eps, 48, seed,
                                             tolerances<S>().guard()),
                    tol);
}

template <typename S>
void check_relu(std::uint64_t seed) {
    const auto [eps, tol] = tolerances<S>();
    Rng rng(seed);
    TensorT<S> x = off_kink_tensor<S>({2, 2, 4, 4}, rng);
    TensorT<S> proj = random_tensor<S>({2, 2, 4, 4}, rng);
    TensorT<S> dx(x.shape());
    auto loss = [&]() { return dot(relu(x), proj); };
    auto grads = [&]() {
        dx.fill(S(0));
        TensorT<S> y = relu(x);
        relu_backward(y, proj, &dx);
    };
    const ParamView<S> views[] = {{"x", &x, &dx}};
    expect_clean<S>(finite_diff_gradcheck<S>(loss, grads, views, eps, 64, seed,
                                             tolerances<S>().guard()),
                    tol);
}

template <typename S>
void check_sigmoid(std::uint64_t seed) {
    const auto [eps, tol] = tolerances<S>();
    Rng rng(seed);
    TensorT<S> x = random_tensor<S>({2, 2, 4, 4}, rng, -2.0, 2.0);
    TensorT<S> proj = random_tensor<S>({2, 2, 4, 4}, rng);
    TensorT<S> dx(x.shape());
    auto loss = [&]() { return dot(sigmoid(x), proj); };
    auto grads = [&]() {
        dx.fill(S(0));
        TensorT<S> y = sigmoid(x);
        sigmoid_backward(y, proj, &dx);
    };
    const ParamView<S> views[] = {{"x", &x, &dx}};
    expect_clean<S>(finite_diff_gradcheck<S>(loss, grads, views, eps, 64, seed,
                                             tolerances<S>().guard()),
                    tol);
}

template <typename S>
void check_global_avg_pool(std::uint64_t seed) {
    const auto [eps, tol] = tolerances<S>();
    Rng rng(seed);
    TensorT<S> x = random_tensor<S>({2, 3, 5, 4}, rng);
    TensorT<S> proj = random_tensor<S>({2, 3, 1, 1}, rng);
    TensorT<S> dx(x.shape());
    auto loss = [&]() { return dot(global_avg_pool(x), proj); };
    auto grads = [&]() {
        dx.fill(S(0));
        global_avg_pool_backward(x.shape(), proj, &dx);
    };
    const ParamView<S> views[] = {{"x", &x, &dx}};
    expect_clean<S>(finite_diff_gradcheck<S>(loss, grads, views, eps, 64, seed,
                                             tolerances<S>().guard()),
                    tol);
}

template <typename S>
void check_pixel_shuffle(std::uint64_t seed) {
    const auto [eps, tol] = tolerances<S>();
    Rng rng(seed);
    TensorT<S> x = random_tensor<S>({1, 8, 3, 3}, rng);
    TensorT<S> proj = random_tensor<S>({1, 2, 6, 6}, rng);
    TensorT<S> dx(x.shape());
    auto loss = [&]() { return dot(pixel_shuffle(x, 2), proj); };
    auto grads = [&]() {
        dx.fill(S(0));
        accumulate(dx, pixel_unshuffle(proj, 2));
    };
    const ParamView<S> views[] = {{"x", &x, &dx}};
    expect_clean<S>(finite_diff_gradcheck<S>(loss, grads, views, eps, 72, seed,
                                             tolerances<S>().guard()),
                    tol);
}

template <typename S>
void check_channel_concat(std::uint64_t seed) {
    const auto [eps, tol] = tolerances<S>();
    Rng rng(seed);
    std::vector<TensorT<S>> parts{random_tensor<S>({2, 2, 3, 3}, rng),
                                  random_tensor<S>({2, 3, 3, 3}, rng)};
    TensorT<S> proj = random_tensor<S>({2, 5, 3, 3}, rng);
    TensorT<S> d0(parts[0].shape()), d1(parts[1].shape());
    auto loss = [&]() {
        return dot(channel_concat(std::span<const TensorT<S>>(parts)), proj);
    };
    auto grads = [&]() {
        d0.fill(S(0));
        d1.fill(S(0));
        TensorT<S>* slots[] = {&d0, &d1};
        channel_concat_backward(proj, std::span<TensorT<S>* const>(slots, 2));
    };
    const ParamView<S> views[] = {{"part0", &parts[0], &d0}, {"part1", &parts[1], &d1}};
    expect_clean<S>(finite_diff_gradcheck<S>(loss, grads, views, eps, 48, seed,
                                             tolerances<S>().guard()),
                    tol);
}

template <typename S>
void check_channel_scale(std::uint64_t seed) {
    const auto [eps, tol] = tolerances<S>();
    Rng rng(seed);
    TensorT<S> x = random_tensor<S>({2, 3, 4, 4}, rng);
    TensorT<S> s = random_tensor<S>({2, 3, 1, 1}, rng);
    TensorT<S> proj = random_tensor<S>({2, 3, 4, 4}, rng);
    TensorT<S> dx(x.shape()), ds(s.shape());
    auto loss = [&]() { return dot(channel_scale(x, s), proj); };
    auto grads = [&]() {
        dx.fill(S(0));
        ds.fill(S(0));
        channel_scale_backward(x, s, proj, &dx, &ds);
    };
    const ParamView<S> views[] = {{"x", &x, &dx}, {"s", &s, &ds}};
    expect_clean<S>(finite_diff_gradcheck<S>(loss, grads, views, eps, 64, seed,
                                             tolerances<S>().guard()),
                    tol);
}

template <typename S>
void check_weighted_sum3(std::uint64_t seed) {
    const auto [eps, tol] = tolerances<S>();
    Rng rng(seed);
    TensorT<S> a = random_tensor<S>({1, 2, 4, 4}, rng);
    TensorT<S> b = random_tensor<S>({1, 2, 4, 4}, rng);
    TensorT<S> c = random_tensor<S>({1, 2, 4, 4}, rng);
    TensorT<S> la({1, 1, 1, 1}, {S(0.8)});
    TensorT<S> lb({1, 1, 1, 1}, {S(-0.4)});
    TensorT<S> lc({1, 1, 1, 1}, {S(1.2)});
    TensorT<S> proj = random_tensor<S>({1, 2, 4, 4}, rng);
    TensorT<S> da(a.shape()), db(b.shape()), dc(c.shape());
    TensorT<S> dla({1, 1, 1, 1}), dlb({1, 1, 1, 1}), dlc({1, 1, 1, 1});

    auto loss = [&]() { return dot(weighted_sum3(a, b, c, la[0], lb[0], lc[0]), proj); };
    auto grads = [&]() {
        for (TensorT<S>* g : {&da, &db, &dc, &dla, &dlb, &dlc}) g->fill(S(0));
        weighted_sum3_backward(a, b, c, la[0], lb[0], lc[0], proj, &da, &db, &dc, &dla[0],
                               &dlb[0], &dlc[0]);
    };
    const ParamView<S> views[] = {{"a", &a, &da},    {"b", &b, &db},    {"c", &c, &dc},
                                  {"la", &la, &dla}, {"lb", &lb, &dlb}, {"lc", &lc, &dlc}};
    expect_clean<S>(finite_diff_gradcheck<S>(loss, grads, views, eps, 48, seed,
                                             tolerances<S>().guard()),
                    tol);
}

template <typename S>
void check_add(std::uint64_t seed) {
    const auto [eps, tol] = tolerances<S>();
    Rng rng(seed);
    TensorT<S> a = random_tensor<S>({2, 2, 3, 3}, rng);
    TensorT<S> b = random_tensor<S>({2, 2, 3, 3}, rng);
    TensorT<S> proj = random_tensor<S>({2, 2, 3, 3}, rng);
    TensorT<S> da(a.shape()), db(b.shape());
    auto loss = [&]() { return dot(add(a, b), proj); };
    auto grads = [&]() {
        da.fill(S(0));
        db.fill(S(0));
        accumulate(da, proj);
        accumulate(db, proj);
    };
    const ParamView<S> views[] = {{"a", &a, &da}, {"b", &b, &db}};
    expect_clean<S>(finite_diff_gradcheck<S>(loss, grads, views, eps, 48, seed,
                                             tolerances<S>().guard()),
                    tol);
}

template <typename S>
void run_all_ops() {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        check_conv2d<S>(seed);
        check_relu<S>(seed);
        check_sigmoid<S>(seed);
        check_global_avg_pool<S>(seed);
        check_pixel_shuffle<S>(seed);
        check_channel_concat<S>(seed);
        check_channel_scale<S>(seed);
        check_weighted_sum3<S>(seed);
        check_add<S>(seed);
    }
}

}  // namespace

TEST_CASE("every op passes finite differences over 10 seeds, wide precision") {
    run_all_ops<double>();
}

TEST_CASE("every op passes finite differences over 10 seeds, 32-bit") { run_all_ops<float>(); }

TEST_CASE("linear function: analytic gradient 3 everywhere, rel error < 1e-6") {
    Rng rng(99);
    TensorT<double> x = random_tensor<double>({1, 1, 4, 4}, rng);
    TensorT<double> dx(x.shape());
    auto loss = [&]() {
        double s = 0.0;
        for (std::int64_t i = 0; i < x.size(); ++i) s += 3.0 * x[i];
        return s;
    };
    auto grads = [&]() { dx.fill(3.0); };
    const ParamView<double> views[] = {{"x", &x, &dx}};
    GradCheckReport r = finite_diff_gradcheck<double>(loss, grads, views, 1e-5, 64, 99, 5e-7);
    CHECK(r.max_rel_err < 1e-6);
    for (std::int64_t i = 0; i < dx.size(); ++i) CHECK(dx[i] == 3.0);
}

TEST_CASE("conv2d + relu + sum in f32 at eps 1e-2 stays under 1e-2") {
    for (std::uint64_t seed = 201; seed <= 205; ++seed) {
        Rng rng(seed);
        Tensor x = random_tensor<float>({1, 2, 5, 5}, rng);
        Tensor w = random_tensor<float>({3, 2, 3, 3}, rng, -0.4, 0.4);
        Tensor b = random_tensor<float>({1, 3, 1, 1}, rng, -0.2, 0.2);
        Tensor dx(x.shape()), dw(w.shape()), db(b.shape());

        auto loss = [&]() {
            Tensor y = relu(conv2d(x, w, b));
            double s = 0.0;
            for (std::int64_t i = 0; i < y.size(); ++i) s += y[i];
            return s;
        };
        auto grads = [&]() {
            dx.fill(0.0f);
            dw.fill(0.0f);
            db.fill(0.0f);
            Tensor y = relu(conv2d(x, w, b));
            Tensor dy(y.shape());
            Tensor ones(y.shape(), 1.0f);
            relu_backward(y, ones, &dy);
            conv2d_backward(x, w, dy, &dx, &dw, &db);
        };
        const ParamView<float> views[] = {{"x", &x, &dx}, {"w", &w, &dw}, {"b", &b, &db}};
        GradCheckReport r = finite_diff_gradcheck<float>(loss, grads, views, 1e-2, 32, seed, 5e-3);
        INFO("seed ", seed, " worst ", r.worst_param, " err ", r.max_rel_err);
        CHECK(r.max_rel_err < 1e-2);
        CHECK(r.checked > 0);
    }
}

TEST_CASE("2-block micro model passes wide-precision finite differences under 1e-6") {
    for (std::uint64_t seed = 301; seed <= 302; ++seed) {
        GradCheckReport r =
            model_gradcheck<double>(micro_config(), {1, 3, 8, 8}, 1e-5, 12, seed, 5e-7);
        INFO("seed ", seed, " worst ", r.worst_param, " err ", r.max_rel_err, " skipped ",
             r.skipped);
        CHECK(r.max_rel_err < 1e-6);
        CHECK(r.checked > 0);
        CHECK(r.skipped * 5 <= r.checked);
    }
}

TEST_CASE("2-block micro model passes 32-bit finite differences under 1e-2") {
    for (std::uint64_t seed = 401; seed <= 402; ++seed) {
        GradCheckReport r =
            model_gradcheck<float>(micro_config(), {1, 3, 8, 8}, 2e-2, 12, seed, 5e-3);
        INFO("seed ", seed, " worst ", r.worst_param, " err ", r.max_rel_err, " skipped ",
             r.skipped);
        CHECK(r.max_rel_err < 1e-2);
        CHECK(r.checked > 0);
    }
}

TEST_CASE("non-finite values raise a numerical error naming the parameter") {
    TensorT<double> x({1, 1, 1, 1}, {1.0});
    TensorT<double> dx(x.shape());
    auto loss = [&]() { return std::sqrt(x[0] - 10.0); };  // NaN around x = 1
    auto grads = [&]() { dx.fill(0.5); };
    const ParamView<double> views[] = {{"theta", &x, &dx}};
    CHECK_THROWS_WITH_AS(
        (void)finite_diff_gradcheck<double>(loss, grads, views, 1e-5, 4, 1),
        doctest::Contains("theta"), NumericError);
}

TEST_CASE("gradcheck rejects a non-positive step") {
    TensorT<double> x({1, 1, 1, 1}, {1.0});
    TensorT<double> dx(x.shape());
    const ParamView<double> views[] = {{"x", &x, &dx}};
    CHECK_THROWS_AS((void)finite_diff_gradcheck<double>([] { return 0.0; }, [] {}, views, 0.0,
                                                        4, 1),
                    ConfigError);
}
