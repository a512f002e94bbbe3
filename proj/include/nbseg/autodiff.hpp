#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "nbseg/errors.hpp"
#include "nbseg/rng.hpp"
#include "nbseg/tensor.hpp"

namespace nbseg {

// Reverse-mode tape. Ops append their backward step at creation time; running
// the tape in reverse is a valid topological order because the graph is built
// sequentially. Backward steps accumulate (+=) into input grads, so leaves
// must be zeroed between steps (see Model::zero_grad).
template <class T>
class Tape {
public:
    void record(std::function<void()> step) { steps_.push_back(std::move(step)); }

    void backward(Tensor<T>& root) {
        if (root.numel() != 1) throw std::invalid_argument("backward: root must be scalar");
        root.ensure_grad();
        root.grad[0] = T(1);
        for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
    }

    void clear() { steps_.clear(); }
    std::size_t size() const { return steps_.size(); }

private:
    std::vector<std::function<void()>> steps_;
};

namespace detail {

template <class T>
inline bool track(Tape<T>* tape, std::initializer_list<const Tensor<T>*> inputs) {
    if (!tape) return false;
    for (const Tensor<T>* t : inputs)
        if (t->requires_grad) return true;
    return false;
}

}  // namespace detail

constexpr double kSeluLambda = 1.0507;
constexpr double kSeluAlpha = 1.6733;

// Uniform on [-sqrt(6)/sqrt(fan_in+fan_out), +sqrt(6)/sqrt(fan_in+fan_out)].
// For a k x k convolution the callers use fan_in = k*k*c_in, fan_out = k*k*c_out.
template <class T>
TensorPtr<T> glorot_uniform_init(int fan_in, int fan_out, Shape shape, Rng& rng) {
    if (fan_in < 1 || fan_out < 1)
        throw std::invalid_argument("glorot_uniform_init: fans must be >= 1");
    auto t = make_tensor<T>(shape, /*requires_grad=*/true);
    double bound = std::sqrt(6.0) / std::sqrt(static_cast<double>(fan_in) + fan_out);
    for (auto& v : t->data) v = static_cast<T>(rng.uniform(-bound, bound));
    return t;
}

template <class T>
TensorPtr<T> selu(Tape<T>* tape, const TensorPtr<T>& x) {
    const T lam = static_cast<T>(kSeluLambda);
    const T alpha = static_cast<T>(kSeluAlpha);
    auto y = make_tensor<T>(x->shape);
    const std::size_t n = x->numel();
    for (std::size_t i = 0; i < n; ++i) {
        T v = x->data[i];
        y->data[i] = v > T(0) ? lam * v : lam * alpha * (std::exp(v) - T(1));
    }
    if (detail::track<T>(tape, {x.get()})) {
        y->ensure_grad();
        x->ensure_grad();
        tape->record([x, y, lam, alpha, n] {
            for (std::size_t i = 0; i < n; ++i) {
                T v = x->data[i];
                T d = v > T(0) ? lam : lam * alpha * std::exp(v);
                x->grad[i] += y->grad[i] * d;
            }
        });
    }
    return y;
}

// Cross-correlation with zero 'same' padding; x[B,H,W,Cin], w[k,k,Cin,Cout],
// b[Cout] -> y[B,H,W,Cout]. Weight layout keeps the output-channel axis
// contiguous so the inner loops vectorize.
template <class T>
TensorPtr<T> conv2d_same(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& w,
                         const TensorPtr<T>& b) {
    if (x->shape.rank != 4 || w->shape.rank != 4 || b->shape.rank != 1)
        throw std::invalid_argument("conv2d_same: want x rank 4, w rank 4, b rank 1");
    const int B = x->shape[0], H = x->shape[1], W = x->shape[2], Cin = x->shape[3];
    const int k = w->shape[0], Cout = w->shape[3];
    if (w->shape[1] != k) throw std::invalid_argument("conv2d_same: kernel must be square");
    if (k % 2 == 0) throw std::invalid_argument("conv2d_same: kernel size must be odd");
    if (w->shape[2] != Cin)
        throw std::invalid_argument("conv2d_same: w input channels " + std::to_string(w->shape[2]) +
                                    " != x channels " + std::to_string(Cin));
    if (b->shape[0] != Cout) throw std::invalid_argument("conv2d_same: bias length != Cout");

    const int pad = k / 2;
    auto y = make_tensor<T>(Shape{B, H, W, Cout});
    std::vector<T> acc(Cout);
    for (int bb = 0; bb < B; ++bb)
        for (int oy = 0; oy < H; ++oy)
            for (int ox = 0; ox < W; ++ox) {
                for (int co = 0; co < Cout; ++co) acc[co] = b->data[co];
                const int ky0 = std::max(0, pad - oy), ky1 = std::min(k, H + pad - oy);
                const int kx0 = std::max(0, pad - ox), kx1 = std::min(k, W + pad - ox);
                for (int ky = ky0; ky < ky1; ++ky) {
                    const int iy = oy + ky - pad;
                    const T* xrow = &x->data[((static_cast<std::size_t>(bb) * H + iy) * W + (ox + kx0 - pad)) * Cin];
                    const T* wrow = &w->data[(static_cast<std::size_t>(ky) * k + kx0) * Cin * Cout];
                    for (int kx = kx0; kx < kx1; ++kx) {
                        for (int ci = 0; ci < Cin; ++ci) {
                            const T xv = xrow[ci];
                            const T* wr = wrow + static_cast<std::size_t>(ci) * Cout;
                            for (int co = 0; co < Cout; ++co) acc[co] += xv * wr[co];
                        }
                        xrow += Cin;
                        wrow += static_cast<std::size_t>(Cin) * Cout;
                    }
                }
                T* yp = &y->data[((static_cast<std::size_t>(bb) * H + oy) * W + ox) * Cout];
                for (int co = 0; co < Cout; ++co) yp[co] = acc[co];
            }

    if (detail::track<T>(tape, {x.get(), w.get(), b.get()})) {
        y->ensure_grad();
        x->ensure_grad();
        w->ensure_grad();
        b->ensure_grad();
        tape->record([x, w, b, y, B, H, W, Cin, Cout, k, pad] {
            for (int bb = 0; bb < B; ++bb)
                for (int oy = 0; oy < H; ++oy)
                    for (int ox = 0; ox < W; ++ox) {
                        const T* gy = &y->grad[((static_cast<std::size_t>(bb) * H + oy) * W + ox) * Cout];
                        for (int co = 0; co < Cout; ++co) b->grad[co] += gy[co];
                        const int ky0 = std::max(0, pad - oy), ky1 = std::min(k, H + pad - oy);
                        const int kx0 = std::max(0, pad - ox), kx1 = std::min(k, W + pad - ox);
                        for (int ky = ky0; ky < ky1; ++ky) {
                            const int iy = oy + ky - pad;
                            std::size_t xoff = ((static_cast<std::size_t>(bb) * H + iy) * W + (ox + kx0 - pad)) * Cin;
                            std::size_t woff = (static_cast<std::size_t>(ky) * k + kx0) * Cin * Cout;
                            for (int kx = kx0; kx < kx1; ++kx) {
                                const T* xp = &x->data[xoff];
                                T* gx = &x->grad[xoff];
                                const T* wp = &w->data[woff];
                                T* gw = &w->grad[woff];
                                for (int ci = 0; ci < Cin; ++ci) {
                                    const T xv = xp[ci];
                                    const T* wr = wp + static_cast<std::size_t>(ci) * Cout;
                                    T* gwr = gw + static_cast<std::size_t>(ci) * Cout;
                                    T s = T(0);
                                    for (int co = 0; co < Cout; ++co) {
                                        s += gy[co] * wr[co];
                                        gwr[co] += gy[co] * xv;
                                    }
                                    gx[ci] += s;
                                }
                                xoff += Cin;
                                woff += static_cast<std::size_t>(Cin) * Cout;
                            }
                        }
                    }
        });
    }
    return y;
}

// Non-overlapping 2x2 max pooling; gradient goes to the first (row-major)
// maximum of each window.
template <class T>
TensorPtr<T> max_pool2(Tape<T>* tape, const TensorPtr<T>& x) {
    if (x->shape.rank != 4) throw std::invalid_argument("max_pool2: want rank 4");
    const int B = x->shape[0], H = x->shape[1], W = x->shape[2], C = x->shape[3];
    if (H % 2 || W % 2)
        throw std::invalid_argument("max_pool2: spatial extents must be even, got " + x->shape.str());
    const int Ho = H / 2, Wo = W / 2;
    auto y = make_tensor<T>(Shape{B, Ho, Wo, C});
    auto argmax = std::make_shared<std::vector<std::int64_t>>(y->numel());
    for (int bb = 0; bb < B; ++bb)
        for (int oy = 0; oy < Ho; ++oy)
            for (int ox = 0; ox < Wo; ++ox)
                for (int c = 0; c < C; ++c) {
                    T best = -std::numeric_limits<T>::infinity();
                    std::int64_t best_i = 0;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            std::int64_t idx =
                                ((static_cast<std::int64_t>(bb) * H + (2 * oy + dy)) * W + (2 * ox + dx)) * C + c;
                            if (x->data[idx] > best) {
                                best = x->data[idx];
                                best_i = idx;
                            }
                        }
                    std::int64_t oidx = ((static_cast<std::int64_t>(bb) * Ho + oy) * Wo + ox) * C + c;
                    y->data[oidx] = best;
                    (*argmax)[oidx] = best_i;
                }
    if (detail::track<T>(tape, {x.get()})) {
        y->ensure_grad();
        x->ensure_grad();
        tape->record([x, y, argmax] {
            for (std::size_t i = 0; i < y->numel(); ++i) x->grad[(*argmax)[i]] += y->grad[i];
        });
    }
    return y;
}

// Stride-2 transposed convolution with a 2x2 kernel: exact spatial doubling.
// Every output pixel is written by exactly one (input pixel, kernel tap) pair.
template <class T>
TensorPtr<T> transposed_conv2(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& w,
                              const TensorPtr<T>& b) {
    if (x->shape.rank != 4 || w->shape.rank != 4)
        throw std::invalid_argument("transposed_conv2: want rank-4 x and w");
    const int B = x->shape[0], H = x->shape[1], W = x->shape[2], Cin = x->shape[3];
    const int Cout = w->shape[3];
    if (w->shape[0] != 2 || w->shape[1] != 2 || w->shape[2] != Cin)
        throw std::invalid_argument("transposed_conv2: w must be [2,2,Cin,Cout], got " + w->shape.str());
    if (b->shape.rank != 1 || b->shape[0] != Cout)
        throw std::invalid_argument("transposed_conv2: bias length != Cout");
    auto y = make_tensor<T>(Shape{B, 2 * H, 2 * W, Cout});
    for (int bb = 0; bb < B; ++bb)
        for (int iy = 0; iy < H; ++iy)
            for (int ix = 0; ix < W; ++ix) {
                const T* xp = &x->data[((static_cast<std::size_t>(bb) * H + iy) * W + ix) * Cin];
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                        T* yp = &y->data[((static_cast<std::size_t>(bb) * 2 * H + (2 * iy + dy)) * 2 * W +
                                          (2 * ix + dx)) * Cout];
                        const T* wp = &w->data[(static_cast<std::size_t>(dy) * 2 + dx) * Cin * Cout];
                        for (int co = 0; co < Cout; ++co) yp[co] = b->data[co];
                        for (int ci = 0; ci < Cin; ++ci) {
                            const T xv = xp[ci];
                            const T* wr = wp + static_cast<std::size_t>(ci) * Cout;
                            for (int co = 0; co < Cout; ++co) yp[co] += xv * wr[co];
                        }
                    }
            }
    if (detail::track<T>(tape, {x.get(), w.get(), b.get()})) {
        y->ensure_grad();
        x->ensure_grad();
        w->ensure_grad();
        b->ensure_grad();
        tape->record([x, w, b, y, B, H, W, Cin, Cout] {
            for (int bb = 0; bb < B; ++bb)
                for (int iy = 0; iy < H; ++iy)
                    for (int ix = 0; ix < W; ++ix) {
                        const T* xp = &x->data[((static_cast<std::size_t>(bb) * H + iy) * W + ix) * Cin];
                        T* gx = &x->grad[((static_cast<std::size_t>(bb) * H + iy) * W + ix) * Cin];
                        for (int dy = 0; dy < 2; ++dy)
                            for (int dx = 0; dx < 2; ++dx) {
                                const T* gy = &y->grad[((static_cast<std::size_t>(bb) * 2 * H + (2 * iy + dy)) * 2 * W +
                                                        (2 * ix + dx)) * Cout];
                                const T* wp = &w->data[(static_cast<std::size_t>(dy) * 2 + dx) * Cin * Cout];
                                T* gw = &w->grad[(static_cast<std::size_t>(dy) * 2 + dx) * Cin * Cout];
                                for (int co = 0; co < Cout; ++co) b->grad[co] += gy[co];
                                for (int ci = 0; ci < Cin; ++ci) {
                                    const T xv = xp[ci];
                                    const T* wr = wp + static_cast<std::size_t>(ci) * Cout;
                                    T* gwr = gw + static_cast<std::size_t>(ci) * Cout;
                                    T s = T(0);
                                    for (int co = 0; co < Cout; ++co) {
                                        s += gy[co] * wr[co];
                                        gwr[co] += gy[co] * xv;
                                    }
                                    gx[ci] += s;
                                }
                            }
                    }
        });
    }
    return y;
}

// Inverted dropout: survivors are scaled by 1/(1-rate) during training so
// inference is a pure identity.
template <class T>
TensorPtr<T> dropout(Tape<T>* tape, const TensorPtr<T>& x, double rate, Rng& rng, bool training) {
    if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0,1)");
    if (!training || rate == 0.0) {
        auto y = make_tensor<T>(x->shape);
        y->data = x->data;
        if (detail::track<T>(tape, {x.get()})) {
            y->ensure_grad();
            x->ensure_grad();
            tape->record([x, y] {
                for (std::size_t i = 0; i < x->numel(); ++i) x->grad[i] += y->grad[i];
            });
        }
        return y;
    }
    auto y = make_tensor<T>(x->shape);
    const T scale = static_cast<T>(1.0 / (1.0 - rate));
    auto mask = std::make_shared<std::vector<std::uint8_t>>(x->numel());
    for (std::size_t i = 0; i < x->numel(); ++i) {
        bool keep = rng.uniform() >= rate;
        (*mask)[i] = keep;
        y->data[i] = keep ? x->data[i] * scale : T(0);
    }
    if (detail::track<T>(tape, {x.get()})) {
        y->ensure_grad();
        x->ensure_grad();
        tape->record([x, y, mask, scale] {
            for (std::size_t i = 0; i < x->numel(); ++i)
                if ((*mask)[i]) x->grad[i] += y->grad[i] * scale;
        });
    }
    return y;
}

// Per-pixel softmax over the channel axis, max-subtracted for stability.
template <class T>
TensorPtr<T> softmax_channels(Tape<T>* tape, const TensorPtr<T>& x) {
    if (x->shape.rank != 4) throw std::invalid_argument("softmax_channels: want rank 4");
    const int C = x->shape[3];
    const std::size_t pixels = x->numel() / C;
    auto y = make_tensor<T>(x->shape);
    for (std::size_t p = 0; p < pixels; ++p) {
        const T* xp = &x->data[p * C];
        T* yp = &y->data[p * C];
        T m = xp[0];
        for (int c = 1; c < C; ++c) m = std::max(m, xp[c]);
        T sum = T(0);
        for (int c = 0; c < C; ++c) {
            yp[c] = std::exp(xp[c] - m);
            sum += yp[c];
        }
        const T inv = T(1) / sum;
        for (int c = 0; c < C; ++c) yp[c] *= inv;
    }
    if (detail::track<T>(tape, {x.get()})) {
        y->ensure_grad();
        x->ensure_grad();
        tape->record([x, y, pixels, C] {
            for (std::size_t p = 0; p < pixels; ++p) {
                const T* yp = &y->data[p * C];
                const T* gy = &y->grad[p * C];
                T dot = T(0);
                for (int c = 0; c < C; ++c) dot += gy[c] * yp[c];
                T* gx = &x->grad[p * C];
                for (int c = 0; c < C; ++c) gx[c] += yp[c] * (gy[c] - dot);
            }
        });
    }
    return y;
}

// L = -sum_{b,i,j} W(i,j) * log(max(p_target, 1e-12)) / (B*H*W).
// target must be one-hot along the channel axis; weights is [H,W] and is
// broadcast over the batch. Composed with softmax_channels this yields the
// usual weighted softmax cross-entropy gradient W*(p - t) at the logits.
template <class T>
TensorPtr<T> weighted_cross_entropy(Tape<T>* tape, const TensorPtr<T>& probs,
                                    const TensorPtr<T>& target, const TensorPtr<T>& weights) {
    if (probs->shape != target->shape)
        throw std::invalid_argument("weighted_cross_entropy: probs/target shape mismatch");
    if (probs->shape.rank != 4) throw std::invalid_argument("weighted_cross_entropy: want rank 4");
    const int B = probs->shape[0], H = probs->shape[1], W = probs->shape[2], C = probs->shape[3];
    if (weights->shape.rank != 2 || weights->shape[0] != H || weights->shape[1] != W)
        throw std::invalid_argument("weighted_cross_entropy: weights must be [H,W]");
    const T clampv = static_cast<T>(1e-12);
    const double norm = 1.0 / (static_cast<double>(B) * H * W);

    double loss = 0.0;
    for (int bb = 0; bb < B; ++bb)
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < W; ++j) {
                const T* tp = &target->data[((static_cast<std::size_t>(bb) * H + i) * W + j) * C];
                const T* pp = &probs->data[((static_cast<std::size_t>(bb) * H + i) * W + j) * C];
                int hot = -1;
                for (int c = 0; c < C; ++c) {
                    if (tp[c] == T(1)) {
                        if (hot >= 0) throw std::invalid_argument("weighted_cross_entropy: target not one-hot");
                        hot = c;
                    } else if (tp[c] != T(0)) {
                        throw std::invalid_argument("weighted_cross_entropy: target not one-hot");
                    }
                }
                if (hot < 0) throw std::invalid_argument("weighted_cross_entropy: target not one-hot");
                const T w = weights->data[static_cast<std::size_t>(i) * W + j];
                loss -= static_cast<double>(w) * std::log(static_cast<double>(std::max(pp[hot], clampv)));
            }
    auto y = make_tensor<T>(Shape{1});
    y->data[0] = static_cast<T>(loss * norm);

    if (detail::track<T>(tape, {probs.get()})) {
        y->ensure_grad();
        probs->ensure_grad();
        tape->record([probs, target, weights, y, B, H, W, C, clampv, norm] {
            const T go = y->grad[0];
            for (int bb = 0; bb < B; ++bb)
                for (int i = 0; i < H; ++i)
                    for (int j = 0; j < W; ++j) {
                        const std::size_t off = ((static_cast<std::size_t>(bb) * H + i) * W + j) * C;
                        const T w = weights->data[static_cast<std::size_t>(i) * W + j];
                        for (int c = 0; c < C; ++c) {
                            if (target->data[off + c] == T(1) && probs->data[off + c] >= clampv)
                                probs->grad[off + c] -=
                                    go * static_cast<T>(norm) * w / probs->data[off + c];
                        }
                    }
        });
    }
    return y;
}

// Channel concatenation for skip connections.
template <class T>
TensorPtr<T> concat_channels(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
    if (a->shape.rank != 4 || b->shape.rank != 4)
        throw std::invalid_argument("concat_channels: want rank 4");
    for (int i = 0; i < 3; ++i)
        if (a->shape[i] != b->shape[i])
            throw std::invalid_argument("concat_channels: leading extents differ: " + a->shape.str() +
                                        " vs " + b->shape.str());
    const int Ca = a->shape[3], Cb = b->shape[3];
    const std::size_t pixels = a->numel() / Ca;
    auto y = make_tensor<T>(Shape{a->shape[0], a->shape[1], a->shape[2], Ca + Cb});
    for (std::size_t p = 0; p < pixels; ++p) {
        std::copy_n(&a->data[p * Ca], Ca, &y->data[p * (Ca + Cb)]);
        std::copy_n(&b->data[p * Cb], Cb, &y->data[p * (Ca + Cb) + Ca]);
    }
    if (detail::track<T>(tape, {a.get(), b.get()})) {
        y->ensure_grad();
        a->ensure_grad();
        b->ensure_grad();
        tape->record([a, b, y, pixels, Ca, Cb] {
            for (std::size_t p = 0; p < pixels; ++p) {
                for (int c = 0; c < Ca; ++c) a->grad[p * Ca + c] += y->grad[p * (Ca + Cb) + c];
                for (int c = 0; c < Cb; ++c) b->grad[p * Cb + c] += y->grad[p * (Ca + Cb) + Ca + c];
            }
        });
    }
    return y;
}

// Scalar sum reduction; used to build scalar objectives for gradient checks.
template <class T>
TensorPtr<T> sum_all(Tape<T>* tape, const TensorPtr<T>& x) {
    auto y = make_tensor<T>(Shape{1});
    double s = 0.0;
    for (const T& v : x->data) s += static_cast<double>(v);
    y->data[0] = static_cast<T>(s);
    if (detail::track<T>(tape, {x.get()})) {
        y->ensure_grad();
        x->ensure_grad();
        tape->record([x, y] {
            for (std::size_t i = 0; i < x->numel(); ++i) x->grad[i] += y->grad[0];
        });
    }
    return y;
}

}  // namespace nbseg
