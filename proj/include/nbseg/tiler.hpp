#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nbseg/errors.hpp"
#include "nbseg/image.hpp"
#include "nbseg/rng.hpp"

namespace nbseg {

struct WeightMap {
    int h = 0;
    int w = 0;
    std::vector<double> weights;  // row-major

    double at(int i, int j) const { return weights[static_cast<std::size_t>(i) * w + j]; }
};

// W(i,j) = alpha * De / (Dc + De): De is the Chebyshev distance to the
// nearest map edge, Dc the Chebyshev distance to the central pixel set (the
// 1, 2, or 4 middle pixels), and alpha normalizes the mean to 1. Zero on the
// border ring, maximal at the center. For h or w < 4 every ratio can be 0
// (all rows/columns are border); the map is then all-zero and consumers fall
// back to unweighted averaging.
inline WeightMap loss_weight_map(int h, int w) {
    if (h < 2 || w < 2) throw std::invalid_argument("loss_weight_map: extents must be >= 2");
    WeightMap m;
    m.h = h;
    m.w = w;
    m.weights.assign(static_cast<std::size_t>(h) * w, 0.0);
    const int cy0 = (h - 1) / 2, cy1 = h / 2;
    const int cx0 = (w - 1) / 2, cx1 = w / 2;
    double sum = 0.0;
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const int de = std::min(std::min(i, j), std::min(h - 1 - i, w - 1 - j));
            const int dcy = std::max(0, std::max(cy0 - i, i - cy1));
            const int dcx = std::max(0, std::max(cx0 - j, j - cx1));
            const int dc = std::max(dcy, dcx);
            const double ratio = (de + dc) == 0 ? 0.0 : static_cast<double>(de) / (dc + de);
            m.weights[static_cast<std::size_t>(i) * w + j] = ratio;
            sum += ratio;
        }
    if (sum > 0.0) {
        const double alpha = static_cast<double>(h) * w / sum;
        for (auto& v : m.weights) v *= alpha;
    }
    return m;
}

struct PatchGrid {
    int patch_size = 128;
    int stride = 64;
    int pad = 64;       // reflect padding applied on every side before tiling
    int image_h = 0;    // original extents
    int image_w = 0;
    int padded_h = 0;
    int padded_w = 0;
    std::vector<std::pair<int, int>> origins;  // (y, x) into the padded image, row-major
};

namespace detail {

inline std::vector<int> axis_origins(int padded, int patch_size, int stride) {
    std::vector<int> out;
    for (int o = 0; o + patch_size <= padded; o += stride) out.push_back(o);
    if (out.empty() || out.back() + patch_size < padded) out.push_back(padded - patch_size);
    return out;
}

}  // namespace detail

// The image is reflect-padded by patch_size/2 on all sides first, so every
// original pixel falls inside some patch's high-weight interior; origins run
// at stride multiples with a final clamped origin flush to the padded edge.
inline PatchGrid plan_patches(int image_h, int image_w, int patch_size = 128, int stride = 64) {
    if (image_h < 1 || image_w < 1) throw std::invalid_argument("plan_patches: empty image");
    if (stride < 1 || stride > patch_size)
        throw std::invalid_argument("plan_patches: stride must be in [1, patch_size]");
    PatchGrid g;
    g.patch_size = patch_size;
    g.stride = stride;
    g.pad = patch_size / 2;
    g.image_h = image_h;
    g.image_w = image_w;
    g.padded_h = image_h + 2 * g.pad;
    g.padded_w = image_w + 2 * g.pad;
    const auto ys = detail::axis_origins(g.padded_h, patch_size, stride);
    const auto xs = detail::axis_origins(g.padded_w, patch_size, stride);
    for (int y : ys)
        for (int x : xs) g.origins.emplace_back(y, x);
    return g;
}

// Reflection padding without edge duplication (mirror about the edge pixel),
// folding as often as needed when pad exceeds the image extent.
inline Image pad_reflect(const Image& img, int pad) {
    if (pad < 0) throw std::invalid_argument("pad_reflect: negative pad");
    Image out(img.width + 2 * pad, img.height + 2 * pad, img.channels);
    for (int y = 0; y < out.height; ++y) {
        const int sy = reflect_index_101(y - pad, img.height);
        for (int x = 0; x < out.width; ++x) {
            const int sx = reflect_index_101(x - pad, img.width);
            for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(sy, sx, c);
        }
    }
    return out;
}

inline Image extract_patch(const Image& padded, int oy, int ox, int size) {
    Image out(size, size, padded.channels);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            for (int c = 0; c < padded.channels; ++c)
                out.at(y, x, c) = padded.at(oy + y, ox + x, c);
    return out;
}

// Weighted-vote reassembly: P(i,j) = sum_k W(local) p_k / sum_k W(local),
// accumulated in double over the padded extents in fixed patch order, then
// cropped. Pixels whose covering patches contribute zero total weight fall
// back to the unweighted average of those patches.
class Assembler {
public:
    Assembler(const PatchGrid& grid, const WeightMap& wm, int channels)
        : grid_(grid), wm_(wm), channels_(channels) {
        if (wm.h != grid.patch_size || wm.w != grid.patch_size)
            throw std::invalid_argument("Assembler: weight map size != patch size");
        const std::size_t n = static_cast<std::size_t>(grid.padded_h) * grid.padded_w;
        wsum_.assign(n * channels, 0.0);
        wtot_.assign(n, 0.0);
        usum_.assign(n * channels, 0.0f);
        ucount_.assign(n, 0);
    }

    // Patches must be delivered in origin order (0, 1, 2, ...), so
    // accumulation order — and therefore the result — is schedule-independent.
    void add(std::size_t patch_index, const Image& pred) {
        if (patch_index != next_)
            throw std::invalid_argument("Assembler: patches must be added in order");
        if (patch_index >= grid_.origins.size())
            throw std::invalid_argument("Assembler: more predictions than grid origins");
        if (pred.height != grid_.patch_size || pred.width != grid_.patch_size ||
            pred.channels != channels_)
            throw std::invalid_argument("Assembler: prediction shape mismatch");
        const auto [oy, ox] = grid_.origins[patch_index];
        for (int y = 0; y < grid_.patch_size; ++y)
            for (int x = 0; x < grid_.patch_size; ++x) {
                const double wv = wm_.at(y, x);
                const std::size_t p = static_cast<std::size_t>(oy + y) * grid_.padded_w + (ox + x);
                wtot_[p] += wv;
                ++ucount_[p];
                for (int c = 0; c < channels_; ++c) {
                    const float v = pred.at(y, x, c);
                    wsum_[p * channels_ + c] += wv * v;
                    usum_[p * channels_ + c] += v;
                }
            }
        ++next_;
    }

    Image finish() const {
        if (next_ != grid_.origins.size())
            throw std::invalid_argument("Assembler: prediction count " + std::to_string(next_) +
                                        " != origin count " + std::to_string(grid_.origins.size()));
        Image out(grid_.image_w, grid_.image_h, channels_);
        for (int y = 0; y < grid_.image_h; ++y)
            for (int x = 0; x < grid_.image_w; ++x) {
                const std::size_t p =
                    static_cast<std::size_t>(y + grid_.pad) * grid_.padded_w + (x + grid_.pad);
                if (wtot_[p] > 0.0) {
                    for (int c = 0; c < channels_; ++c)
                        out.at(y, x, c) = static_cast<float>(wsum_[p * channels_ + c] / wtot_[p]);
                } else if (ucount_[p] > 0) {
                    for (int c = 0; c < channels_; ++c)
                        out.at(y, x, c) = usum_[p * channels_ + c] / ucount_[p];
                } else {
                    throw InvalidStateError("Assembler: uncovered pixel at (" + std::to_string(x) +
                                            "," + std::to_string(y) + ")");
                }
            }
        return out;
    }

private:
    PatchGrid grid_;
    WeightMap wm_;
    int channels_;
    std::vector<double> wsum_, wtot_;
    std::vector<float> usum_;
    std::vector<std::uint32_t> ucount_;
    std::size_t next_ = 0;
};

inline Image assemble(const std::vector<Image>& preds, const PatchGrid& grid, const WeightMap& wm) {
    if (preds.size() != grid.origins.size())
        throw std::invalid_argument("assemble: prediction count != origin count");
    const int channels = preds.empty() ? 3 : preds[0].channels;
    Assembler a(grid, wm, channels);
    for (std::size_t i = 0; i < preds.size(); ++i) a.add(i, preds[i]);
    return a.finish();
}

// Uniformly random (image, origin) draws for training; deterministic per seed.
struct TrainingPatch {
    int image_index = 0;
    int oy = 0;
    int ox = 0;
};

inline std::vector<TrainingPatch> sample_training_patches(const std::vector<Image>& images,
                                                          std::size_t count, int patch_size,
                                                          Rng& rng) {
    if (images.empty()) throw std::invalid_argument("sample_training_patches: no images");
    for (std::size_t i = 0; i < images.size(); ++i)
        if (images[i].height < patch_size || images[i].width < patch_size)
            throw std::invalid_argument("sample_training_patches: image " + std::to_string(i) +
                                        " smaller than patch size");
    std::vector<TrainingPatch> out;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        TrainingPatch p;
        p.image_index = static_cast<int>(rng.uniform_int(static_cast<std::uint32_t>(images.size())));
        p.oy = static_cast<int>(
            rng.uniform_int(static_cast<std::uint32_t>(images[p.image_index].height - patch_size + 1)));
        p.ox = static_cast<int>(
            rng.uniform_int(static_cast<std::uint32_t>(images[p.image_index].width - patch_size + 1)));
        out.push_back(p);
    }
    return out;
}

}  // namespace nbseg
