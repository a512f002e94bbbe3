#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace nbseg {

// Row-major interleaved float raster, values nominally in [0,1].
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<float> data;

    Image() = default;
    Image(int w, int h, int c, float fill = 0.0f)
        : width(w), height(h), channels(c),
          data(static_cast<std::size_t>(w) * h * c, fill) {
        if (w < 1 || h < 1 || c < 1) throw std::invalid_argument("Image: non-positive extent");
    }

    float& at(int y, int x, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    float at(int y, int x, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::size_t numel() const { return data.size(); }
};

// Per-pixel nucleus identities; 0 = background, k >= 1 = nucleus k.
struct LabelMap {
    int width = 0;
    int height = 0;
    std::vector<std::uint32_t> labels;

    LabelMap() = default;
    LabelMap(int w, int h) : width(w), height(h), labels(static_cast<std::size_t>(w) * h, 0) {
        if (w < 1 || h < 1) throw std::invalid_argument("LabelMap: non-positive extent");
    }

    std::uint32_t& at(int y, int x) { return labels[static_cast<std::size_t>(y) * width + x]; }
    std::uint32_t at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }

    std::uint32_t max_label() const {
        std::uint32_t m = 0;
        for (auto v : labels) m = std::max(m, v);
        return m;
    }
};

enum class TernaryClass : std::uint8_t { Background = 0, Boundary = 1, Inside = 2 };

// Per-pixel class over {background, boundary, inside}; the training target.
struct TernaryMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> cls;

    TernaryMask() = default;
    TernaryMask(int w, int h) : width(w), height(h), cls(static_cast<std::size_t>(w) * h, 0) {
        if (w < 1 || h < 1) throw std::invalid_argument("TernaryMask: non-positive extent");
    }

    std::uint8_t& at(int y, int x) { return cls[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int y, int x) const { return cls[static_cast<std::size_t>(y) * width + x]; }
};

// Symmetric reflection of an index into [0, n): ... 2 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
// Folds repeatedly so arbitrarily far out-of-range indices map back in.
inline int reflect_index(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * n;
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - 1 - i;
}

// Reflection without edge duplication: ... 2 1 | 0 1 2 ... n-1 | n-2 n-3 ...
inline int reflect_index_101(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * n - 2;
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

}  // namespace nbseg
