#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "nbseg/image.hpp"
#include "nbseg/masks.hpp"
#include "nbseg/rng.hpp"

namespace nbseg {

struct SyntheticSample {
    Image image;                       // H&E-look raster
    LabelMap labels;                   // instance ground truth
    std::vector<Polygon> annotations;  // the polygons the labels were rasterized from
};

// Non-overlapping textured ellipses on a noisy pink background. The label map
// comes from rasterizing the emitted polygons, so annotations and labels agree
// exactly. Placement keeps >= 3 px between nucleus boundaries and away from
// the image border.
inline SyntheticSample make_synthetic_nuclei(int width, int height, int target_count, Rng& rng,
                                             double min_axis = 5.0, double max_axis = 12.0) {
    if (width < 4 * max_axis || height < 4 * max_axis)
        throw std::invalid_argument("make_synthetic_nuclei: image too small for the axis range");
    struct E {
        double cx, cy, a, b, theta, rmax;
    };
    std::vector<E> placed;
    const double margin = max_axis + 4.0;
    const double gap = 3.0;
    int attempts = 0;
    while (static_cast<int>(placed.size()) < target_count && attempts < target_count * 64) {
        ++attempts;
        E e;
        e.cx = rng.uniform(margin, width - margin);
        e.cy = rng.uniform(margin, height - margin);
        e.a = rng.uniform(min_axis, max_axis);
        e.b = rng.uniform(min_axis, max_axis);
        e.theta = rng.uniform(0.0, 3.14159265358979323846);
        e.rmax = std::max(e.a, e.b);
        bool ok = true;
        for (const E& o : placed) {
            const double d = std::hypot(e.cx - o.cx, e.cy - o.cy);
            if (d < e.rmax + o.rmax + gap) {
                ok = false;
                break;
            }
        }
        if (ok) placed.push_back(e);
    }

    SyntheticSample s;
    s.annotations.reserve(placed.size());
    const int verts = 48;
    for (const E& e : placed) {
        Polygon poly;
        poly.reserve(verts);
        const double ct = std::cos(e.theta), st = std::sin(e.theta);
        for (int k = 0; k < verts; ++k) {
            const double phi = 2.0 * 3.14159265358979323846 * k / verts;
            const double px = e.a * std::cos(phi), py = e.b * std::sin(phi);
            poly.push_back({e.cx + ct * px - st * py, e.cy + st * px + ct * py});
        }
        s.annotations.push_back(std::move(poly));
    }
    s.labels = rasterize_annotations(s.annotations, width, height);

    // Paint: noisy pink stroma, per-nucleus purple with speckle.
    s.image = Image(width, height, 3);
    const std::array<float, 3> bg{0.82f, 0.69f, 0.80f};
    std::vector<std::array<float, 3>> tint(placed.size() + 1);
    for (std::size_t k = 1; k <= placed.size(); ++k) {
        Rng trng = Rng::derive(0x71A7ULL, k);
        tint[k] = {static_cast<float>(0.30 + trng.uniform(-0.06, 0.06)),
                   static_cast<float>(0.22 + trng.uniform(-0.05, 0.05)),
                   static_cast<float>(0.52 + trng.uniform(-0.06, 0.06))};
    }
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const std::uint32_t lbl = s.labels.at(y, x);
            for (int c = 0; c < 3; ++c) {
                const float base = lbl ? tint[lbl][c] : bg[c];
                const float noise = static_cast<float>(rng.uniform(-0.05, 0.05));
                s.image.at(y, x, c) = std::min(1.0f, std::max(0.0f, base + noise));
            }
        }
    return s;
}

// Two-stain phantom built from known optical-density vectors: pure-stain
// bands at the top and bottom (so the angular percentiles can see each pure
// stain) and random mixtures in between. OD stays low enough that nothing
// clamps, so the construction is exactly invertible.
inline Image make_two_stain_image(int width, int height, const std::array<double, 3>& stain_h,
                                  const std::array<double, 3>& stain_e, Rng& rng) {
    Image img(width, height, 3);
    const int band = std::max(1, height / 20);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            double ch, ce;
            if (y < band) {  // pure haematoxylin
                ch = rng.uniform(0.3, 1.0);
                ce = 0.0;
            } else if (y >= height - band) {  // pure eosin
                ch = 0.0;
                ce = rng.uniform(0.3, 1.0);
            } else {
                ch = rng.uniform(0.1, 1.0);
                ce = rng.uniform(0.1, 1.0);
            }
            for (int c = 0; c < 3; ++c) {
                const double od = ch * stain_h[c] + ce * stain_e[c];
                img.at(y, x, c) = static_cast<float>(std::pow(10.0, -od));
            }
        }
    return img;
}

}  // namespace nbseg
