#pragma once

#include <span>

#include "a2f/tensor.hpp"

// Differentiable tensor operations. Every backward pass is hand-derived and
// *accumulates* into the caller's gradient tensors (pass nullptr to skip a
// gradient). Forward results are deterministic for any thread count: parallel
// regions write disjoint slices and reductions run in a fixed order.
namespace a2f {

// Cross-correlation with zero padding floor(k/2), stride 1, per-channel bias.
// weight is (out_ch, in_ch, k, k) with k odd; bias is (1, out_ch, 1, 1).
// Output spatial size equals input spatial size.
template <typename S>
TensorT<S> conv2d(const TensorT<S>& x, const TensorT<S>& weight, const TensorT<S>& bias);

template <typename S>
void conv2d_backward(const TensorT<S>& x, const TensorT<S>& weight, const TensorT<S>& dy,
                     TensorT<S>* dx, TensorT<S>* dweight, TensorT<S>* dbias);

// Elementwise max(0, x). Subgradient at 0 is 0, so the backward mask is
// derived from the forward output (y > 0).
template <typename S>
TensorT<S> relu(const TensorT<S>& x);

template <typename S>
void relu_backward(const TensorT<S>& y, const TensorT<S>& dy, TensorT<S>* dx);

// Elementwise logistic 1/(1+exp(-x)); outputs strictly in (0,1) for finite x.
// Backward uses y*(1-y).
template <typename S>
TensorT<S> sigmoid(const TensorT<S>& x);

template <typename S>
void sigmoid_backward(const TensorT<S>& y, const TensorT<S>& dy, TensorT<S>* dx);

// Per-(n,c) spatial mean: (n,c,h,w) -> (n,c,1,1).
template <typename S>
TensorT<S> global_avg_pool(const TensorT<S>& x);

template <typename S>
void global_avg_pool_backward(const Shape& input_shape, const TensorT<S>& dy, TensorT<S>* dx);

// (n, c*p^2, h, w) -> (n, c, p*h, p*w) with
// out[n][c][h*p+i][w*p+j] == in[n][c*p^2 + i*p + j][h][w].
// A pure index permutation; pixel_unshuffle is its exact inverse (and the
// backward pass of each is the other).
template <typename S>
TensorT<S> pixel_shuffle(const TensorT<S>& x, int p);

template <typename S>
TensorT<S> pixel_unshuffle(const TensorT<S>& x, int p);

// Append parts along the channel axis (all parts share n, h, w).
template <typename S>
TensorT<S> channel_concat(std::span<const TensorT<S>> parts);

// Split dy at the concat offsets and accumulate each slice into dparts[i]
// (nullptr entries are skipped).
template <typename S>
void channel_concat_backward(const TensorT<S>& dy, std::span<TensorT<S>* const> dparts);

// out[n][c][h][w] = x[n][c][h][w] * s[n][c][0][0].
template <typename S>
TensorT<S> channel_scale(const TensorT<S>& x, const TensorT<S>& s);

template <typename S>
void channel_scale_backward(const TensorT<S>& x, const TensorT<S>& s, const TensorT<S>& dy,
                            TensorT<S>* dx, TensorT<S>* ds);

// la*a + lb*b + lc*c with learnable scalar factors. Scalar gradients are the
// inner products <dy, operand>.
template <typename S>
TensorT<S> weighted_sum3(const TensorT<S>& a, const TensorT<S>& b, const TensorT<S>& c,
                         S la, S lb, S lc);

template <typename S>
void weighted_sum3_backward(const TensorT<S>& a, const TensorT<S>& b, const TensorT<S>& c,
                            S la, S lb, S lc, const TensorT<S>& dy,
                            TensorT<S>* da, TensorT<S>* db, TensorT<S>* dc,
                            S* dla, S* dlb, S* dlc);

// Elementwise sum of two same-shape tensors.
template <typename S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b);

// dst += src (shapes must match).
template <typename S>
void accumulate(TensorT<S>& dst, const TensorT<S>& src);

// dst += scale * src.
template <typename S>
void accumulate_scaled(TensorT<S>& dst, const TensorT<S>& src, S scale);

// Fixed-order inner product in double precision.
template <typename S>
double dot(const TensorT<S>& a, const TensorT<S>& b);

#define A2F_EXTERN_OPS(S)                                                                        \
    extern template TensorT<S> conv2d<S>(const TensorT<S>&, const TensorT<S>&,                  \
                                         const TensorT<S>&);                                    \
    extern template void conv2d_backward<S>(const TensorT<S>&, const TensorT<S>&,               \
                                            const TensorT<S>&, TensorT<S>*, TensorT<S>*,        \
                                            TensorT<S>*);                                       \
    extern template TensorT<S> relu<S>(const TensorT<S>&);                                      \
    extern template void relu_backward<S>(const TensorT<S>&, const TensorT<S>&, TensorT<S>*);   \
    extern template TensorT<S> sigmoid<S>(const TensorT<S>&);                                   \
    extern template void sigmoid_backward<S>(const TensorT<S>&, const TensorT<S>&,              \
                                             TensorT<S>*);                                      \
    extern template TensorT<S> global_avg_pool<S>(const TensorT<S>&);                           \
    extern template void global_avg_pool_backward<S>(const Shape&, const TensorT<S>&,           \
                                                     TensorT<S>*);                              \
    extern template TensorT<S> pixel_shuffle<S>(const TensorT<S>&, int);                        \
    extern template TensorT<S> pixel_unshuffle<S>(const TensorT<S>&, int);                      \
    extern template TensorT<S> channel_concat<S>(std::span<const TensorT<S>>);                  \
    extern template void channel_concat_backward<S>(const TensorT<S>&,                          \
                                                    std::span<TensorT<S>* const>);              \
    extern template TensorT<S> channel_scale<S>(const TensorT<S>&, const TensorT<S>&);          \
    extern template void channel_scale_backward<S>(const TensorT<S>&, const TensorT<S>&,        \
                                                   const TensorT<S>&, TensorT<S>*,              \
                                                   TensorT<S>*);                                \
    extern template TensorT<S> weighted_sum3<S>(const TensorT<S>&, const TensorT<S>&,           \
                                                const TensorT<S>&, S, S, S);                    \
    extern template void weighted_sum3_backward<S>(const TensorT<S>&, const TensorT<S>&,        \
                                                   const TensorT<S>&, S, S, S,                  \
                                                   const TensorT<S>&, TensorT<S>*, TensorT<S>*, \
                                                   TensorT<S>*, S*, S*, S*);                    \
    extern template TensorT<S> add<S>(const TensorT<S>&, const TensorT<S>&);                    \
    extern template void accumulate<S>(TensorT<S>&, const TensorT<S>&);                         \
    extern template void accumulate_scaled<S>(TensorT<S>&, const TensorT<S>&, S);               \
    extern template double dot<S>(const TensorT<S>&, const TensorT<S>&);

A2F_EXTERN_OPS(float)
A2F_EXTERN_OPS(double)
#undef A2F_EXTERN_OPS

}  // namespace a2f
