#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "nbseg/image.hpp"
#include "nbseg/rng.hpp"

namespace nbseg {

struct AugmentParams {
    double elastic_alpha_min = 100.0;
    double elastic_alpha_max = 200.0;
    double elastic_sigma = 12.0;
    double rescale_min = 0.5;
    double rescale_max = 1.5;
    int shift_max = 16;
    bool enable_rescale = true;
    bool enable_rotate = true;
    bool enable_flip = true;
    bool enable_shift = true;
    bool enable_elastic = true;

    void validate() const {
        if (rescale_min <= 0 || rescale_max < rescale_min)
            throw std::invalid_argument("AugmentParams: bad rescale range");
        if (elastic_alpha_min < 0 || elastic_alpha_max < elastic_alpha_min)
            throw std::invalid_argument("AugmentParams: bad alpha range");
        if (elastic_sigma <= 0) throw std::invalid_argument("AugmentParams: sigma must be > 0");
        if (shift_max < 0) throw std::invalid_argument("AugmentParams: shift_max must be >= 0");
    }
};

namespace detail {

// Separable Gaussian blur, kernel truncated at 4*sigma, symmetric reflection
// at the borders.
inline void gaussian_blur(std::vector<float>& f, int h, int w, double sigma) {
    const int r = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
    std::vector<double> kernel(2 * r + 1);
    double sum = 0.0;
    for (int i = -r; i <= r; ++i) {
        kernel[i + r] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += kernel[i + r];
    }
    for (auto& k : kernel) k /= sum;

    std::vector<float> tmp(f.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -r; i <= r; ++i)
                acc += kernel[i + r] * f[static_cast<std::size_t>(y) * w + reflect_index(x + i, w)];
            tmp[static_cast<std::size_t>(y) * w + x] = static_cast<float>(acc);
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -r; i <= r; ++i)
                acc += kernel[i + r] * tmp[static_cast<std::size_t>(reflect_index(y + i, h)) * w + x];
            f[static_cast<std::size_t>(y) * w + x] = static_cast<float>(acc);
        }
}

inline float sample_bilinear_reflect(const Image& src, double sy, double sx, int c) {
    const int y0 = static_cast<int>(std::floor(sy));
    const int x0 = static_cast<int>(std::floor(sx));
    const double fy = sy - y0, fx = sx - x0;
    const int ya = reflect_index(y0, src.height), yb = reflect_index(y0 + 1, src.height);
    const int xa = reflect_index(x0, src.width), xb = reflect_index(x0 + 1, src.width);
    const double v00 = src.at(ya, xa, c), v01 = src.at(ya, xb, c);
    const double v10 = src.at(yb, xa, c), v11 = src.at(yb, xb, c);
    return static_cast<float>((1 - fy) * ((1 - fx) * v00 + fx * v01) +
                              fy * ((1 - fx) * v10 + fx * v11));
}

}  // namespace detail

// Simard-style displacement field: i.i.d. uniform noise on [-1,1] smoothed by
// a Gaussian of std sigma, scaled by alpha. Returned as (dx, dy).
inline std::pair<std::vector<float>, std::vector<float>> elastic_field(int h, int w, double alpha,
                                                                       double sigma, Rng& rng) {
    if (h < 1 || w < 1) throw std::invalid_argument("elastic_field: non-positive extent");
    if (sigma <= 0) throw std::invalid_argument("elastic_field: sigma must be > 0");
    std::vector<float> dx(static_cast<std::size_t>(h) * w), dy(dx.size());
    for (auto& v : dx) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    for (auto& v : dy) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    detail::gaussian_blur(dx, h, w, sigma);
    detail::gaussian_blur(dy, h, w, sigma);
    for (auto& v : dx) v = static_cast<float>(v * alpha);
    for (auto& v : dy) v = static_cast<float>(v * alpha);
    return {std::move(dx), std::move(dy)};
}

// out(p) = bilinear sample of src at p + field(p), reflecting out of range.
inline Image warp_bilinear(const Image& src, const std::vector<float>& dx,
                           const std::vector<float>& dy) {
    if (dx.size() != static_cast<std::size_t>(src.width) * src.height || dy.size() != dx.size())
        throw std::invalid_argument("warp_bilinear: field shape mismatch");
    Image out(src.width, src.height, src.channels);
    for (int y = 0; y < src.height; ++y)
        for (int x = 0; x < src.width; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * src.width + x;
            const double sy = y + dy[i], sx = x + dx[i];
            for (int c = 0; c < src.channels; ++c)
                out.at(y, x, c) = detail::sample_bilinear_reflect(src, sy, sx, c);
        }
    return out;
}

// Content scaled by `factor` about the image center, canvas size unchanged
// (shrink pulls reflected margins in; grow crops). factor 1 is an exact copy.
inline Image rescale_about_center(const Image& src, double factor) {
    if (factor <= 0) throw std::invalid_argument("rescale_about_center: factor must be > 0");
    Image out(src.width, src.height, src.channels);
    const double cy = (src.height - 1) / 2.0, cx = (src.width - 1) / 2.0;
    for (int y = 0; y < src.height; ++y)
        for (int x = 0; x < src.width; ++x) {
            const double sy = cy + (y - cy) / factor;
            const double sx = cx + (x - cx) / factor;
            for (int c = 0; c < src.channels; ++c)
                out.at(y, x, c) = detail::sample_bilinear_reflect(src, sy, sx, c);
        }
    return out;
}

// Rotation about the image center, bilinear with reflection; exact index
// permutation on square images for multiples of 90 degrees.
inline Image rotate_about_center(const Image& src, double theta_deg) {
    Image out(src.width, src.height, src.channels);
    const double q = theta_deg / 90.0;
    if (src.width == src.height && std::abs(q - std::round(q)) < 1e-9) {
        const int n = src.width;
        const int k = ((static_cast<int>(std::llround(q)) % 4) + 4) % 4;
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                int sy = y, sx = x;
                if (k == 1) {
                    sy = n - 1 - x;
                    sx = y;
                } else if (k == 2) {
                    sy = n - 1 - y;
                    sx = n - 1 - x;
                } else if (k == 3) {
                    sy = x;
                    sx = n - 1 - y;
                }
                for (int c = 0; c < src.channels; ++c) out.at(y, x, c) = src.at(sy, sx, c);
            }
        return out;
    }
    const double th = theta_deg * 3.14159265358979323846 / 180.0;
    const double ct = std::cos(-th), st = std::sin(-th);
    const double cy = (src.height - 1) / 2.0, cx = (src.width - 1) / 2.0;
    for (int y = 0; y < src.height; ++y)
        for (int x = 0; x < src.width; ++x) {
            const double rx = x - cx, ry = y - cy;
            const double sx = cx + ct * rx - st * ry;
            const double sy = cy + st * rx + ct * ry;
            for (int c = 0; c < src.channels; ++c)
                out.at(y, x, c) = detail::sample_bilinear_reflect(src, sy, sx, c);
        }
    return out;
}

inline Image flip_image(const Image& src, bool horizontal, bool vertical) {
    Image out(src.width, src.height, src.channels);
    for (int y = 0; y < src.height; ++y) {
        const int sy = vertical ? src.height - 1 - y : y;
        for (int x = 0; x < src.width; ++x) {
            const int sx = horizontal ? src.width - 1 - x : x;
            for (int c = 0; c < src.channels; ++c) out.at(y, x, c) = src.at(sy, sx, c);
        }
    }
    return out;
}

// Integer translation with reflected borders; exact (no interpolation).
inline Image shift_image(const Image& src, int dy, int dx) {
    Image out(src.width, src.height, src.channels);
    for (int y = 0; y < src.height; ++y) {
        const int sy = reflect_index(y - dy, src.height);
        for (int x = 0; x < src.width; ++x) {
            const int sx = reflect_index(x - dx, src.width);
            for (int c = 0; c < src.channels; ++c) out.at(y, x, c) = src.at(sy, sx, c);
        }
    }
    return out;
}

// Re-binarization of interpolated target channels: boundary wins above 0.5,
// any trace of inside makes a non-boundary pixel inside, background is the
// complement (keeps the output one-hot).
inline TernaryClass binarize_target(float t_inside, float t_boundary) {
    if (t_boundary > 0.5f) return TernaryClass::Boundary;
    if (t_inside > 0.0f) return TernaryClass::Inside;
    return TernaryClass::Background;
}

inline Image ternary_to_float(const TernaryMask& mask) {
    Image f(mask.width, mask.height, 3);
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) f.at(y, x, mask.at(y, x)) = 1.0f;
    return f;
}

inline TernaryMask binarize_target_image(const Image& f) {
    TernaryMask mask(f.width, f.height);
    for (int y = 0; y < f.height; ++y)
        for (int x = 0; x < f.width; ++x)
            mask.at(y, x) = static_cast<std::uint8_t>(binarize_target(f.at(y, x, 2), f.at(y, x, 1)));
    return mask;
}

// Applies, in order: rescale, rotation, flips, integer shift, elastic
// deformation — the same geometric transform to the patch and to the target's
// float channels, binarizing the target once at the end.
inline std::pair<Image, TernaryMask> random_augment(const Image& patch, const TernaryMask& target,
                                                    const AugmentParams& params, Rng& rng) {
    params.validate();
    if (patch.width != target.width || patch.height != target.height)
        throw std::invalid_argument("random_augment: patch/target size mismatch");
    Image img = patch;
    Image tgt = ternary_to_float(target);

    if (params.enable_rescale) {
        const double f = rng.uniform(params.rescale_min, params.rescale_max);
        img = rescale_about_center(img, f);
        tgt = rescale_about_center(tgt, f);
    }
    if (params.enable_rotate) {
        const double theta = rng.uniform(0.0, 360.0);
        img = rotate_about_center(img, theta);
        tgt = rotate_about_center(tgt, theta);
    }
    if (params.enable_flip) {
        const bool fh = rng.bernoulli(0.5);
        const bool fv = rng.bernoulli(0.5);
        if (fh || fv) {
            img = flip_image(img, fh, fv);
            tgt = flip_image(tgt, fh, fv);
        }
    }
    if (params.enable_shift) {
        const int dy = static_cast<int>(rng.uniform_int(2 * params.shift_max + 1)) - params.shift_max;
        const int dx = static_cast<int>(rng.uniform_int(2 * params.shift_max + 1)) - params.shift_max;
        if (dy || dx) {
            img = shift_image(img, dy, dx);
            tgt = shift_image(tgt, dy, dx);
        }
    }
    if (params.enable_elastic) {
        const double alpha = rng.uniform(params.elastic_alpha_min, params.elastic_alpha_max);
        auto [dx, dy] = elastic_field(img.height, img.width, alpha, params.elastic_sigma, rng);
        img = warp_bilinear(img, dx, dy);
        tgt = warp_bilinear(tgt, dx, dy);
    }
    return {std::move(img), binarize_target_image(tgt)};
}

}  // namespace nbseg
