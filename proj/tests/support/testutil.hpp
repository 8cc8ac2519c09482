#pragma once

// Shared helpers for the test suites: seeded tensor generators, brute-force
// reference implementations (independent of the library's compute paths), and
// a procedural generator for natural-looking test images.

#include <algorithm>
#include <cmath>
#include <vector>

#include "a2f/image.hpp"
#include "a2f/rng.hpp"
#include "a2f/tensor.hpp"

namespace testutil {

template <typename S>
a2f::TensorT<S> random_tensor(a2f::Shape shape, a2f::Rng& rng, double lo = -1.0,
                              double hi = 1.0) {
    a2f::TensorT<S> t(shape);
    for (std::int64_t i = 0; i < t.size(); ++i) {
        t[i] = static_cast<S>(lo + rng.unit() * (hi - lo));
    }
    return t;
}

// Direct 7-loop convolution, double accumulation; the oracle for conv2d.
template <typename S>
a2f::TensorT<S> naive_conv2d(const a2f::TensorT<S>& x, const a2f::TensorT<S>& weight,
                             const a2f::TensorT<S>& bias) {
    const int k = weight.h();
    const int pad = k / 2;
    a2f::TensorT<S> y({x.n(), weight.n(), x.h(), x.w()});
    for (int n = 0; n < x.n(); ++n) {
        for (int co = 0; co < weight.n(); ++co) {
            for (int i = 0; i < x.h(); ++i) {
                for (int j = 0; j < x.w(); ++j) {
                    double acc = bias.at(0, co, 0, 0);
                    for (int ci = 0; ci < x.c(); ++ci) {
                        for (int u = 0; u < k; ++u) {
                            for (int v = 0; v < k; ++v) {
                                const int si = i + u - pad;
                                const int sj = j + v - pad;
                                if (si < 0 || si >= x.h() || sj < 0 || sj >= x.w()) continue;
                                acc += static_cast<double>(weight.at(co, ci, u, v)) *
                                       x.at(n, ci, si, sj);
                            }
                        }
                    }
                    y.at(n, co, i, j) = static_cast<S>(acc);
                }
            }
        }
    }
    return y;
}

template <typename S>
double max_abs_diff(const a2f::TensorT<S>& a, const a2f::TensorT<S>& b) {
    double m = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    }
    return m;
}

template <typename S>
bool bit_equal(const a2f::TensorT<S>& a, const a2f::TensorT<S>& b) {
    if (!(a.shape() == b.shape())) return false;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        if (a[i] != b[i]) return false;
    }
    return true;
}

// Piecewise-smooth procedural image: low-frequency gradient background,
// anti-aliased ellipses and rectangles, soft sinusoidal texture. Enough
// structure for a super-resolver to learn from while every sample stays
// distinct.
inline a2f::ImagePlane synthetic_image(int width, int height, std::uint64_t seed) {
    a2f::Rng rng(seed);
    std::vector<double> r(static_cast<std::size_t>(width) * height);
    std::vector<double> g(r.size()), b(r.size());

    const double gx = rng.symmetric(0.5), gy = rng.symmetric(0.5);
    const double base_r = 60 + rng.unit() * 135;
    const double base_g = 60 + rng.unit() * 135;
    const double base_b = 60 + rng.unit() * 135;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * width + x;
            const double u = static_cast<double>(x) / width - 0.5;
            const double v = static_cast<double>(y) / height - 0.5;
            const double shade = 60.0 * (gx * u + gy * v);
            r[i] = base_r + shade;
            g[i] = base_g + shade;
            b[i] = base_b + shade;
        }
    }

    const int n_shapes = 6 + static_cast<int>(rng.below(6));
    for (int s = 0; s < n_shapes; ++s) {
        const double cx = rng.unit() * width;
        const double cy = rng.unit() * height;
        const double rx = 4.0 + rng.unit() * width * 0.3;
        const double ry = 4.0 + rng.unit() * height * 0.3;
        const double angle = rng.unit() * 3.14159265358979;
        const double ca = std::cos(angle), sa = std::sin(angle);
        const double cr = rng.unit() * 255, cg = rng.unit() * 255, cb = rng.unit() * 255;
        const bool rect = rng.below(2) == 0;
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                const double dx = (x - cx) * ca + (y - cy) * sa;
                const double dy = -(x - cx) * sa + (y - cy) * ca;
                double d;  // signed distance-ish, negative inside
                if (rect) {
                    d = std::max(std::abs(dx) / rx, std::abs(dy) / ry) - 1.0;
                } else {
                    d = std::sqrt((dx * dx) / (rx * rx) + (dy * dy) / (ry * ry)) - 1.0;
                }
                const double cover = std::clamp(0.5 - d * 8.0, 0.0, 1.0);  // soft edge
                if (cover <= 0.0) continue;
                const std::size_t i = static_cast<std::size_t>(y) * width + x;
                r[i] = r[i] * (1.0 - cover) + cr * cover;
                g[i] = g[i] * (1.0 - cover) + cg * cover;
                b[i] = b[i] * (1.0 - cover) + cb * cover;
            }
        }
    }

    const double fx = 0.05 + rng.unit() * 0.25;
    const double fy = 0.05 + rng.unit() * 0.25;
    const double amp = 4.0 + rng.unit() * 10.0;
    a2f::ImagePlane img = a2f::ImagePlane::make_u8(width, height, 3);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * width + x;
            const double tex = amp * std::sin(fx * x * 6.2831853) * std::cos(fy * y * 6.2831853);
            auto q = [](double v) {
                return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            };
            img.u8[img.pixel_index(y, x, 0)] = q(r[i] + tex);
            img.u8[img.pixel_index(y, x, 1)] = q(g[i] + tex);
            img.u8[img.pixel_index(y, x, 2)] = q(b[i] + tex);
        }
    }
    return img;
}

}  // namespace testutil
