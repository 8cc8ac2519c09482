#include "a2f/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

#define EIGEN_DONT_PARALLELIZE
#include <Eigen/Core>

#include "a2f/runtime.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace a2f {

namespace {

template <typename S>
using MatRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MapRM = Eigen::Map<MatRM<S>>;
template <typename S>
using CMapRM = Eigen::Map<const MatRM<S>>;

void require(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
}

// Gathers one batch item into a (in_ch*k*k, h*w) patch matrix with implicit
// zero padding. Row r = ci*k*k + u*k + v holds input channel ci shifted by
// (u - pad, v - pad).
template <typename S>
void im2col(const S* x, int c, int h, int w, int k, S* col) {
    const int pad = k / 2;
    S* out = col;
    for (int ci = 0; ci < c; ++ci) {
        const S* plane = x + static_cast<std::int64_t>(ci) * h * w;
        for (int u = 0; u < k; ++u) {
            for (int v = 0; v < k; ++v) {
                const int dy = u - pad;
                const int dx = v - pad;
                for (int i = 0; i < h; ++i) {
                    const int si = i + dy;
                    if (si < 0 || si >= h) {
                        std::fill(out, out + w, S(0));
                        out += w;
                        continue;
                    }
                    const int j_lo = std::max(0, -dx);
                    const int j_hi = std::min(w, w - dx);
                    if (j_lo > 0) std::fill(out, out + j_lo, S(0));
                    if (j_hi > j_lo) {
                        std::memcpy(out + j_lo, plane + static_cast<std::int64_t>(si) * w + j_lo + dx,
                                    static_cast<std::size_t>(j_hi - j_lo) * sizeof(S));
                    }
                    if (j_hi < w) std::fill(out + std::max(j_hi, j_lo), out + w, S(0));
                    out += w;
                }
            }
        }
    }
}

// Scatter-add of a patch matrix back onto the input grid; exact adjoint of
// im2col. Serial per batch item (rows overlap on the input).
template <typename S>
void col2im_add(const S* col, int c, int h, int w, int k, S* dx) {
    const int pad = k / 2;
    const S* in = col;
    for (int ci = 0; ci < c; ++ci) {
        S* plane = dx + static_cast<std::int64_t>(ci) * h * w;
        for (int u = 0; u < k; ++u) {
            for (int v = 0; v < k; ++v) {
                const int dy = u - pad;
                const int dx2 = v - pad;
                for (int i = 0; i < h; ++i) {
                    const int si = i + dy;
                    if (si < 0 || si >= h) {
                        in += w;
                        continue;
                    }
                    const int j_lo = std::max(0, -dx2);
                    const int j_hi = std::min(w, w - dx2);
                    S* row = plane + static_cast<std::int64_t>(si) * w + dx2;
                    for (int j = j_lo; j < j_hi; ++j) row[j] += in[j];
                    in += w;
                }
            }
        }
    }
}

void check_conv_shapes(const Shape& x, const Shape& w, const Shape& b) {
    require(w.h == w.w, "conv2d: kernel must be square, got " + w.str());
    require(w.h % 2 == 1, "conv2d: kernel size must be odd, got " + std::to_string(w.h));
    require(w.c == x.c, "conv2d: weight expects " + std::to_string(w.c) +
                            " input channels but input has " + std::to_string(x.c) +
                            " (input " + x.str() + ", weight " + w.str() + ")");
    require(b.n == 1 && b.c == w.n && b.h == 1 && b.w == 1,
            "conv2d: bias must be (1," + std::to_string(w.n) + ",1,1), got " + b.str());
}

}  // namespace

template <typename S>
TensorT<S> conv2d(const TensorT<S>& x, const TensorT<S>& weight, const TensorT<S>& bias) {
    check_conv_shapes(x.shape(), weight.shape(), bias.shape());
    const int n = x.n(), cin = x.c(), h = x.h(), w = x.w();
    const int cout = weight.n(), k = weight.h();
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    const std::int64_t rows = static_cast<std::int64_t>(cin) * k * k;

    TensorT<S> y({n, cout, h, w});
    CMapRM<S> wm(weight.data(), cout, rows);
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>> bv(bias.data(), cout);

    const int threads = std::min(runtime::thread_count(), n);
#pragma omp parallel num_threads(threads) if (threads > 1)
    {
        std::vector<S> col(static_cast<std::size_t>(rows) * hw);
#pragma omp for schedule(static)
        for (int b = 0; b < n; ++b) {
            im2col(x.data() + static_cast<std::int64_t>(b) * cin * hw, cin, h, w, k, col.data());
            CMapRM<S> cm(col.data(), rows, hw);
            MapRM<S> ym(y.data() + static_cast<std::int64_t>(b) * cout * hw, cout, hw);
            ym.noalias() = wm * cm;
            ym.colwise() += bv;
        }
    }
    return y;
}

template <typename S>
void conv2d_backward(const TensorT<S>& x, const TensorT<S>& weight, const TensorT<S>& dy,
                     TensorT<S>* dx, TensorT<S>* dweight, TensorT<S>* dbias) {
    require(weight.h() == weight.w() && weight.h() % 2 == 1,
            "conv2d_backward: kernel must be square and odd, got " + weight.shape().str());
    require(weight.c() == x.c(), "conv2d_backward: weight expects " + std::to_string(weight.c()) +
                                     " input channels but input has " + std::to_string(x.c()));
    const int n = x.n(), cin = x.c(), h = x.h(), w = x.w();
    const int cout = weight.n(), k = weight.h();
    require(dy.shape() == Shape{n, cout, h, w},
            "conv2d_backward: upstream gradient shape " + dy.shape().str() + " does not match " +
                Shape{n, cout, h, w}.str());
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    const std::int64_t rows = static_cast<std::int64_t>(cin) * k * k;

    CMapRM<S> wm(weight.data(), cout, rows);

    // Per-item weight/bias partials, reduced in ascending batch order so the
    // result is independent of the thread count.
    std::vector<MatRM<S>> dw_part;
    std::vector<Eigen::Matrix<S, Eigen::Dynamic, 1>> db_part;
    if (dweight) dw_part.resize(n);
    if (dbias) db_part.resize(n);

    const int threads = std::min(runtime::thread_count(), n);
#pragma omp parallel num_threads(threads) if (threads > 1)
    {
        std::vector<S> col(static_cast<std::size_t>(rows) * hw);
        std::vector<S> dcol(dx ? static_cast<std::size_t>(rows) * hw : 0);
#pragma omp for schedule(static)
        for (int b = 0; b < n; ++b) {
            CMapRM<S> dym(dy.data() + static_cast<std::int64_t>(b) * cout * hw, cout, hw);
            if (dweight || dx) {
                im2col(x.data() + static_cast<std::int64_t>(b) * cin * hw, cin, h, w, k,
                       col.data());
            }
            if (dweight) {
                CMapRM<S> cm(col.data(), rows, hw);
                dw_part[b].noalias() = dym * cm.transpose();
            }
            if (dbias) db_part[b] = dym.rowwise().sum();
            if (dx) {
                MapRM<S> dcm(dcol.data(), rows, hw);
                dcm.noalias() = wm.transpose() * dym;
                col2im_add(dcol.data(), cin, h, w, k,
                           dx->data() + static_cast<std::int64_t>(b) * cin * hw);
            }
        }
    }
    if (dweight) {
        MapRM<S> dwm(dweight->data(), cout, rows);
        for (int b = 0; b < n; ++b) dwm += dw_part[b];
    }
    if (dbias) {
        Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>> dbv(dbias->data(), cout);
        for (int b = 0; b < n; ++b) dbv += db_part[b];
    }
}

template <typename S>
TensorT<S> relu(const TensorT<S>& x) {
    TensorT<S> y(x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i) y[i] = x[i] > S(0) ? x[i] : S(0);
    return y;
}

template <typename S>
void relu_backward(const TensorT<S>& y, const TensorT<S>& dy, TensorT<S>* dx) {
    if (!dx) return;
    for (std::int64_t i = 0; i < y.size(); ++i) {
        if (y[i] > S(0)) (*dx)[i] += dy[i];
    }
}

template <typename S>
TensorT<S> sigmoid(const TensorT<S>& x) {
    TensorT<S> y(x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i) {
        const S v = x[i];
        if (v >= S(0)) {
            y[i] = S(1) / (S(1) + std::exp(-v));
        } else {
            const S e = std::exp(v);
            y[i] = e / (S(1) + e);
        }
    }
    return y;
}

template <typename S>
void sigmoid_backward(const TensorT<S>& y, const TensorT<S>& dy, TensorT<S>* dx) {
    if (!dx) return;
    for (std::int64_t i = 0; i < y.size(); ++i) (*dx)[i] += dy[i] * y[i] * (S(1) - y[i]);
}

template <typename S>
TensorT<S> global_avg_pool(const TensorT<S>& x) {
    TensorT<S> y({x.n(), x.c(), 1, 1});
    const std::int64_t hw = static_cast<std::int64_t>(x.h()) * x.w();
    for (int n = 0; n < x.n(); ++n) {
        for (int c = 0; c < x.c(); ++c) {
            const S* p = x.data() + (static_cast<std::int64_t>(n) * x.c() + c) * hw;
            double sum = 0.0;
            for (std::int64_t i = 0; i < hw; ++i) sum += p[i];
            y.at(n, c, 0, 0) = static_cast<S>(sum / static_cast<double>(hw));
        }
    }
    return y;
}

template <typename S>
void global_avg_pool_backward(const Shape& input_shape, const TensorT<S>& dy, TensorT<S>* dx) {
    if (!dx) return;
    require(dy.shape() == Shape{input_shape.n, input_shape.c, 1, 1},
            "global_avg_pool_backward: gradient shape " + dy.shape().str());
    const std::int64_t hw = static_cast<std::int64_t>(input_shape.h) * input_shape.w;
    for (int n = 0; n < input_shape.n; ++n) {
        for (int c = 0; c < input_shape.c; ++c) {
            const S g = dy.at(n, c, 0, 0) / static_cast<S>(hw);
            S* p = dx->data() + (static_cast<std::int64_t>(n) * input_shape.c + c) * hw;
            for (std::int64_t i = 0; i < hw; ++i) p[i] += g;
        }
    }
}

template <typename S>
TensorT<S> pixel_shuffle(const TensorT<S>& x, int p) {
    require(p >= 1, "pixel_shuffle: factor must be >= 1");
    require(x.c() % (p * p) == 0, "pixel_shuffle: " + std::to_string(x.c()) +
                                      " channels not divisible by p^2 = " + std::to_string(p * p));
    const int cout = x.c() / (p * p);
    TensorT<S> y({x.n(), cout, x.h() * p, x.w() * p});
    for (int n = 0; n < x.n(); ++n) {
        for (int c = 0; c < cout; ++c) {
            for (int i = 0; i < p; ++i) {
                for (int j = 0; j < p; ++j) {
                    const int cin = c * p * p + i * p + j;
                    for (int h = 0; h < x.h(); ++h) {
                        const S* src = x.data() + x.index(n, cin, h, 0);
                        S* dst = y.data() + y.index(n, c, h * p + i, j);
                        for (int w = 0; w < x.w(); ++w) dst[static_cast<std::int64_t>(w) * p] = src[w];
                    }
                }
            }
        }
    }
    return y;
}

template <typename S>
TensorT<S> pixel_unshuffle(const TensorT<S>& x, int p) {
    require(p >= 1, "pixel_unshuffle: factor must be >= 1");
    require(x.h() % p == 0 && x.w() % p == 0,
            "pixel_unshuffle: spatial dims " + x.shape().str() + " not divisible by " +
                std::to_string(p));
    const int cout = x.c() * p * p;
    TensorT<S> y({x.n(), cout, x.h() / p, x.w() / p});
    for (int n = 0; n < x.n(); ++n) {
        for (int c = 0; c < x.c(); ++c) {
            for (int i = 0; i < p; ++i) {
                for (int j = 0; j < p; ++j) {
                    const int co = c * p * p + i * p + j;
                    for (int h = 0; h < y.h(); ++h) {
                        const S* src = x.data() + x.index(n, c, h * p + i, j);
                        S* dst = y.data() + y.index(n, co, h, 0);
                        for (int w = 0; w < y.w(); ++w) dst[w] = src[static_cast<std::int64_t>(w) * p];
                    }
                }
            }
        }
    }
    return y;
}

template <typename S>
TensorT<S> channel_concat(std::span<const TensorT<S>> parts) {
    require(!parts.empty(), "channel_concat: no inputs");
    const Shape& first = parts[0].shape();
    int c_total = 0;
    for (const auto& t : parts) {
        require(t.n() == first.n && t.h() == first.h && t.w() == first.w,
                "channel_concat: part shape " + t.shape().str() + " incompatible with " +
                    first.str());
        c_total += t.c();
    }
    TensorT<S> y({first.n, c_total, first.h, first.w});
    const std::int64_t hw = static_cast<std::int64_t>(first.h) * first.w;
    for (int n = 0; n < first.n; ++n) {
        std::int64_t c_off = 0;
        for (const auto& t : parts) {
            std::memcpy(y.data() + (static_cast<std::int64_t>(n) * c_total + c_off) * hw,
                        t.data() + static_cast<std::int64_t>(n) * t.c() * hw,
                        static_cast<std::size_t>(t.c()) * hw * sizeof(S));
            c_off += t.c();
        }
    }
    return y;
}

template <typename S>
void channel_concat_backward(const TensorT<S>& dy, std::span<TensorT<S>* const> dparts) {
    require(!dparts.empty(), "channel_concat_backward: no outputs");
    const std::int64_t hw = static_cast<std::int64_t>(dy.h()) * dy.w();
    for (int n = 0; n < dy.n(); ++n) {
        std::int64_t c_off = 0;
        for (TensorT<S>* dp : dparts) {
            require(dp != nullptr, "channel_concat_backward: null gradient slot");
            const S* src = dy.data() + (static_cast<std::int64_t>(n) * dy.c() + c_off) * hw;
            S* dst = dp->data() + static_cast<std::int64_t>(n) * dp->c() * hw;
            const std::int64_t count = static_cast<std::int64_t>(dp->c()) * hw;
            for (std::int64_t i = 0; i < count; ++i) dst[i] += src[i];
            c_off += dp->c();
        }
        require(c_off == dy.c(), "channel_concat_backward: slice channels " +
                                     std::to_string(c_off) + " != gradient channels " +
                                     std::to_string(dy.c()));
    }
}

template <typename S>
TensorT<S> channel_scale(const TensorT<S>& x, const TensorT<S>& s) {
    require(s.shape() == Shape{x.n(), x.c(), 1, 1},
            "channel_scale: scale shape " + s.shape().str() + " does not match input " +
                x.shape().str());
    TensorT<S> y(x.shape());
    const std::int64_t hw = static_cast<std::int64_t>(x.h()) * x.w();
    for (int n = 0; n < x.n(); ++n) {
        for (int c = 0; c < x.c(); ++c) {
            const S g = s.at(n, c, 0, 0);
            const S* p = x.data() + (static_cast<std::int64_t>(n) * x.c() + c) * hw;
            S* q = y.data() + (static_cast<std::int64_t>(n) * x.c() + c) * hw;
            for (std::int64_t i = 0; i < hw; ++i) q[i] = p[i] * g;
        }
    }
    return y;
}

template <typename S>
void channel_scale_backward(const TensorT<S>& x, const TensorT<S>& s, const TensorT<S>& dy,
                            TensorT<S>* dx, TensorT<S>* ds) {
    const std::int64_t hw = static_cast<std::int64_t>(x.h()) * x.w();
    for (int n = 0; n < x.n(); ++n) {
        for (int c = 0; c < x.c(); ++c) {
            const std::int64_t base = (static_cast<std::int64_t>(n) * x.c() + c) * hw;
            const S* xp = x.data() + base;
            const S* gp = dy.data() + base;
            if (dx) {
                const S g = s.at(n, c, 0, 0);
                S* dp = dx->data() + base;
                for (std::int64_t i = 0; i < hw; ++i) dp[i] += gp[i] * g;
            }
            if (ds) {
                double sum = 0.0;
                for (std::int64_t i = 0; i < hw; ++i) sum += static_cast<double>(gp[i]) * xp[i];
                ds->at(n, c, 0, 0) += static_cast<S>(sum);
            }
        }
    }
}

template <typename S>
TensorT<S> weighted_sum3(const TensorT<S>& a, const TensorT<S>& b, const TensorT<S>& c,
                         S la, S lb, S lc) {
    require(a.same_shape(b) && a.same_shape(c),
            "weighted_sum3: shapes differ: " + a.shape().str() + ", " + b.shape().str() + ", " +
                c.shape().str());
    TensorT<S> y(a.shape());
    for (std::int64_t i = 0; i < a.size(); ++i) y[i] = la * a[i] + lb * b[i] + lc * c[i];
    return y;
}

template <typename S>
void weighted_sum3_backward(const TensorT<S>& a, const TensorT<S>& b, const TensorT<S>& c,
                            S la, S lb, S lc, const TensorT<S>& dy,
                            TensorT<S>* da, TensorT<S>* db, TensorT<S>* dc,
                            S* dla, S* dlb, S* dlc) {
    require(dy.same_shape(a), "weighted_sum3_backward: gradient shape " + dy.shape().str());
    if (da) accumulate_scaled(*da, dy, la);
    if (db) accumulate_scaled(*db, dy, lb);
    if (dc) accumulate_scaled(*dc, dy, lc);
    if (dla) *dla += static_cast<S>(dot(dy, a));
    if (dlb) *dlb += static_cast<S>(dot(dy, b));
    if (dlc) *dlc += static_cast<S>(dot(dy, c));
}

template <typename S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
    require(a.same_shape(b),
            "add: shapes differ: " + a.shape().str() + " vs " + b.shape().str());
    TensorT<S> y(a.shape());
    for (std::int64_t i = 0; i < a.size(); ++i) y[i] = a[i] + b[i];
    return y;
}

template <typename S>
void accumulate(TensorT<S>& dst, const TensorT<S>& src) {
    require(dst.same_shape(src),
            "accumulate: shapes differ: " + dst.shape().str() + " vs " + src.shape().str());
    for (std::int64_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename S>
void accumulate_scaled(TensorT<S>& dst, const TensorT<S>& src, S scale) {
    require(dst.same_shape(src),
            "accumulate_scaled: shapes differ: " + dst.shape().str() + " vs " +
                src.shape().str());
    for (std::int64_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
}

template <typename S>
double dot(const TensorT<S>& a, const TensorT<S>& b) {
    require(a.same_shape(b),
            "dot: shapes differ: " + a.shape().str() + " vs " + b.shape().str());
    double sum = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) sum += static_cast<double>(a[i]) * b[i];
    return sum;
}

template <typename S>
void dump_tensor(const TensorT<S>& t, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw StorageError("cannot open " + path.string() + " for writing");
    auto put_u32 = [&out](std::uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
        out.write(reinterpret_cast<const char*>(b), 4);
    };
    put_u32(static_cast<std::uint32_t>(t.n()));
    put_u32(static_cast<std::uint32_t>(t.c()));
    put_u32(static_cast<std::uint32_t>(t.h()));
    put_u32(static_cast<std::uint32_t>(t.w()));
    for (std::int64_t i = 0; i < t.size(); ++i) {
        const float f = static_cast<float>(t[i]);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32(bits);
    }
    if (!out) throw StorageError("failed writing " + path.string());
}

Tensor read_tensor_dump(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StorageError("cannot open " + path.string());
    auto get_u32 = [&in, &path]() {
        unsigned char b[4];
        in.read(reinterpret_cast<char*>(b), 4);
        if (!in) throw StorageError("truncated tensor dump " + path.string());
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    };
    Shape s{static_cast<int>(get_u32()), static_cast<int>(get_u32()),
            static_cast<int>(get_u32()), static_cast<int>(get_u32())};
    Tensor t(s);
    for (std::int64_t i = 0; i < t.size(); ++i) {
        const std::uint32_t bits = get_u32();
        float f;
        std::memcpy(&f, &bits, 4);
        t[i] = f;
    }
    return t;
}

#define A2F_INSTANTIATE_OPS(S)                                                                   \
    template TensorT<S> conv2d<S>(const TensorT<S>&, const TensorT<S>&, const TensorT<S>&);     \
    template void conv2d_backward<S>(const TensorT<S>&, const TensorT<S>&, const TensorT<S>&,   \
                                     TensorT<S>*, TensorT<S>*, TensorT<S>*);                    \
    template TensorT<S> relu<S>(const TensorT<S>&);                                             \
    template void relu_backward<S>(const TensorT<S>&, const TensorT<S>&, TensorT<S>*);          \
    template TensorT<S> sigmoid<S>(const TensorT<S>&);                                          \
    template void sigmoid_backward<S>(const TensorT<S>&, const TensorT<S>&, TensorT<S>*);       \
    template TensorT<S> global_avg_pool<S>(const TensorT<S>&);                                  \
    template void global_avg_pool_backward<S>(const Shape&, const TensorT<S>&, TensorT<S>*);    \
    template TensorT<S> pixel_shuffle<S>(const TensorT<S>&, int);                               \
    template TensorT<S> pixel_unshuffle<S>(const TensorT<S>&, int);                             \
    template TensorT<S> channel_concat<S>(std::span<const TensorT<S>>);                         \
    template void channel_concat_backward<S>(const TensorT<S>&, std::span<TensorT<S>* const>);  \
    template TensorT<S> channel_scale<S>(const TensorT<S>&, const TensorT<S>&);                 \
    template void channel_scale_backward<S>(const TensorT<S>&, const TensorT<S>&,               \
                                            const TensorT<S>&, TensorT<S>*, TensorT<S>*);       \
    template TensorT<S> weighted_sum3<S>(const TensorT<S>&, const TensorT<S>&,                  \
                                         const TensorT<S>&, S, S, S);                           \
    template void weighted_sum3_backward<S>(const TensorT<S>&, const TensorT<S>&,               \
                                            const TensorT<S>&, S, S, S, const TensorT<S>&,      \
                                            TensorT<S>*, TensorT<S>*, TensorT<S>*, S*, S*,      \
                                            S*);                                                \
    template TensorT<S> add<S>(const TensorT<S>&, const TensorT<S>&);                           \
    template void accumulate<S>(TensorT<S>&, const TensorT<S>&);                                \
    template void accumulate_scaled<S>(TensorT<S>&, const TensorT<S>&, S);                      \
    template double dot<S>(const TensorT<S>&, const TensorT<S>&);                               \
    template void dump_tensor<S>(const TensorT<S>&, const std::filesystem::path&);

A2F_INSTANTIATE_OPS(float)
A2F_INSTANTIATE_OPS(double)
#undef A2F_INSTANTIATE_OPS

}  // namespace a2f
