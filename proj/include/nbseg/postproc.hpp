#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "nbseg/image.hpp"
#include "nbseg/rng.hpp"

namespace nbseg {

struct PostprocConfig {
    double inside_threshold = 0.5;
    int min_component_area = 20;
    double dilation_radius = 2.0;

    void validate() const {
        if (inside_threshold <= 0 || inside_threshold >= 1)
            throw std::invalid_argument("PostprocConfig: threshold must be in (0,1)");
        if (min_component_area < 0)
            throw std::invalid_argument("PostprocConfig: min_component_area must be >= 0");
        if (dilation_radius < 0)
            throw std::invalid_argument("PostprocConfig: dilation_radius must be >= 0");
    }
};

// Pixel is set iff P(inside) >= threshold (ties count as inside).
inline std::vector<std::uint8_t> threshold_inside(const Image& probs, double threshold) {
    if (probs.channels < 2) throw std::invalid_argument("threshold_inside: want class channels");
    const int inside = probs.channels - 1;  // last channel is the inside class
    std::vector<std::uint8_t> out(static_cast<std::size_t>(probs.width) * probs.height, 0);
    for (int y = 0; y < probs.height; ++y)
        for (int x = 0; x < probs.width; ++x)
            out[static_cast<std::size_t>(y) * probs.width + x] =
                probs.at(y, x, inside) >= threshold ? 1 : 0;
    return out;
}

// 8-connected components, labeled 1..N in row-major first-encounter order
// after dropping components smaller than min_area.
inline LabelMap label_components(const std::vector<std::uint8_t>& binary, int width, int height,
                                 int min_area = 0) {
    if (binary.size() != static_cast<std::size_t>(width) * height)
        throw std::invalid_argument("label_components: size mismatch");
    LabelMap out(width, height);
    std::vector<std::uint32_t> provisional(binary.size(), 0);
    std::vector<std::size_t> areas{0};  // index 0 unused
    std::vector<std::size_t> stack;
    std::uint32_t next = 0;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const std::size_t start = static_cast<std::size_t>(y) * width + x;
            if (!binary[start] || provisional[start]) continue;
            ++next;
            std::size_t area = 0;
            stack.push_back(start);
            provisional[start] = next;
            while (!stack.empty()) {
                const std::size_t p = stack.back();
                stack.pop_back();
                ++area;
                const int py = static_cast<int>(p) / width, px = static_cast<int>(p) % width;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int ny = py + dy, nx = px + dx;
                        if (ny < 0 || ny >= height || nx < 0 || nx >= width) continue;
                        const std::size_t q = static_cast<std::size_t>(ny) * width + nx;
                        if (binary[q] && !provisional[q]) {
                            provisional[q] = next;
                            stack.push_back(q);
                        }
                    }
            }
            areas.push_back(area);
        }
    // Relabel survivors compactly, preserving first-encounter order.
    std::vector<std::uint32_t> remap(next + 1, 0);
    std::uint32_t kept = 0;
    for (std::uint32_t k = 1; k <= next; ++k)
        if (areas[k] >= static_cast<std::size_t>(std::max(0, min_area))) remap[k] = ++kept;
    for (std::size_t i = 0; i < binary.size(); ++i) out.labels[i] = remap[provisional[i]];
    return out;
}

// Competitive dilation: each background pixel within `radius` of a component
// takes the label of the nearest one (ties broken toward the smaller label).
// Existing labels never change, so components never merge.
inline LabelMap dilate_instances(const LabelMap& map, double radius) {
    if (radius < 0) throw std::invalid_argument("dilate_instances: negative radius");
    LabelMap out = map;
    if (radius == 0) return out;
    const int r = static_cast<int>(std::floor(radius));
    // Offsets grouped by squared distance, ascending, so the first group with
    // any labeled pixel is exactly the nearest-distance set.
    std::vector<std::array<int, 3>> offsets;  // dy, dx, d2
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
            if (dx == 0 && dy == 0) continue;
            const int d2 = dx * dx + dy * dy;
            if (d2 <= radius * radius) offsets.push_back({dy, dx, d2});
        }
    std::sort(offsets.begin(), offsets.end(),
              [](const auto& a, const auto& b) { return a[2] < b[2]; });
    for (int y = 0; y < map.height; ++y)
        for (int x = 0; x < map.width; ++x) {
            if (map.at(y, x) != 0) continue;
            std::uint32_t best = 0;
            int best_d2 = -1;
            for (const auto& o : offsets) {
                if (best && o[2] > best_d2) break;  // past the nearest distance group
                const int ny = y + o[0], nx = x + o[1];
                if (ny < 0 || ny >= map.height || nx < 0 || nx >= map.width) continue;
                const std::uint32_t lbl = map.at(ny, nx);
                if (lbl == 0) continue;
                if (!best || lbl < best) {
                    best = lbl;
                    best_d2 = o[2];
                }
            }
            if (best) out.at(y, x) = best;
        }
    return out;
}

inline LabelMap segment(const Image& probs, const PostprocConfig& config = {}) {
    config.validate();
    const auto binary = threshold_inside(probs, config.inside_threshold);
    LabelMap labeled =
        label_components(binary, probs.width, probs.height, config.min_component_area);
    return dilate_instances(labeled, config.dilation_radius);
}

// Random color per instance for overlay PNGs; colors depend only on the
// label, so reruns are identical.
inline Image label_overlay(const LabelMap& map, const Image* base = nullptr) {
    Image out(map.width, map.height, 3);
    if (base) {
        if (base->width != map.width || base->height != map.height || base->channels != 3)
            throw std::invalid_argument("label_overlay: base image mismatch");
        out = *base;
    }
    const std::uint32_t maxl = map.max_label();
    std::vector<std::array<float, 3>> colors(maxl + 1);
    for (std::uint32_t k = 1; k <= maxl; ++k) {
        Rng rng = Rng::derive(0xC0105EEDULL, k);
        colors[k] = {static_cast<float>(0.25 + 0.75 * rng.uniform()),
                     static_cast<float>(0.25 + 0.75 * rng.uniform()),
                     static_cast<float>(0.25 + 0.75 * rng.uniform())};
    }
    for (int y = 0; y < map.height; ++y)
        for (int x = 0; x < map.width; ++x) {
            const std::uint32_t lbl = map.at(y, x);
            if (!lbl) continue;
            for (int c = 0; c < 3; ++c)
                out.at(y, x, c) = base ? 0.5f * out.at(y, x, c) + 0.5f * colors[lbl][c]
                                       : colors[lbl][c];
        }
    return out;
}

}  // namespace nbseg
