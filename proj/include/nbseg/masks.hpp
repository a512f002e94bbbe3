#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "nbseg/errors.hpp"
#include "nbseg/image.hpp"

namespace nbseg {

using Polygon = std::vector<std::array<double, 2>>;  // closed chain, last edge implicit

namespace detail {

inline bool point_on_segment(double px, double py, double x1, double y1, double x2, double y2) {
    const double cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1);
    if (std::abs(cross) > 1e-9) return false;
    const double dot = (px - x1) * (x2 - x1) + (py - y1) * (y2 - y1);
    const double len2 = (x2 - x1) * (x2 - x1) + (y2 - y1) * (y2 - y1);
    return dot >= -1e-9 && dot <= len2 + 1e-9;
}

// Even-odd rule, with points exactly on an edge counted as inside.
inline bool point_in_polygon(double px, double py, const Polygon& poly) {
    bool inside = false;
    for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
        const double x1 = poly[j][0], y1 = poly[j][1];
        const double x2 = poly[i][0], y2 = poly[i][1];
        if (point_on_segment(px, py, x1, y1, x2, y2)) return true;
        if ((y1 > py) != (y2 > py)) {
            const double xc = x1 + (py - y1) * (x2 - x1) / (y2 - y1);
            if (px < xc) inside = !inside;
        }
    }
    return inside;
}

}  // namespace detail

// Pixel (x,y) samples the polygon at the lattice point (x,y); a pixel inside
// or on polygon k receives label k+1, later polygons overwriting earlier ones.
inline LabelMap rasterize_annotations(const std::vector<Polygon>& polygons, int width, int height) {
    LabelMap map(width, height);
    for (std::size_t k = 0; k < polygons.size(); ++k) {
        const Polygon& poly = polygons[k];
        if (poly.size() < 3)
            throw InvalidAnnotationError("polygon has fewer than 3 vertices", k);
        double xmin = poly[0][0], xmax = poly[0][0], ymin = poly[0][1], ymax = poly[0][1];
        for (const auto& v : poly) {
            xmin = std::min(xmin, v[0]);
            xmax = std::max(xmax, v[0]);
            ymin = std::min(ymin, v[1]);
            ymax = std::max(ymax, v[1]);
        }
        const int x0 = std::max(0, static_cast<int>(std::floor(xmin)));
        const int x1 = std::min(width - 1, static_cast<int>(std::ceil(xmax)));
        const int y0 = std::max(0, static_cast<int>(std::floor(ymin)));
        const int y1 = std::min(height - 1, static_cast<int>(std::ceil(ymax)));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x)
                if (detail::point_in_polygon(x, y, poly))
                    map.at(y, x) = static_cast<std::uint32_t>(k + 1);
    }
    return map;
}

// A nucleus pixel is boundary when some pixel of another label (or the
// background) lies within Euclidean distance boundary_width of it; remaining
// nucleus pixels are inside. Off-image space does not count as background,
// so a nucleus flush against the image edge keeps its interior.
inline TernaryMask instance_to_ternary(const LabelMap& map, double boundary_width = 2.0) {
    if (boundary_width < 1.0)
        throw std::invalid_argument("instance_to_ternary: boundary_width must be >= 1");
    const int r = static_cast<int>(std::floor(boundary_width));
    std::vector<std::array<int, 2>> offsets;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
            if (dx == 0 && dy == 0) continue;
            if (dx * dx + dy * dy <= boundary_width * boundary_width) offsets.push_back({dx, dy});
        }
    TernaryMask mask(map.width, map.height);
    for (int y = 0; y < map.height; ++y)
        for (int x = 0; x < map.width; ++x) {
            const std::uint32_t lbl = map.at(y, x);
            if (lbl == 0) continue;
            bool near_other = false;
            for (const auto& o : offsets) {
                const int ny = y + o[1], nx = x + o[0];
                if (ny < 0 || ny >= map.height || nx < 0 || nx >= map.width) continue;
                if (map.at(ny, nx) != lbl) {
                    near_other = true;
                    break;
                }
            }
            mask.at(y, x) = static_cast<std::uint8_t>(near_other ? TernaryClass::Boundary
                                                                 : TernaryClass::Inside);
        }
    return mask;
}

// Palette: background red, boundary green, inside blue.
inline Image ternary_to_rgb(const TernaryMask& mask) {
    Image img(mask.width, mask.height, 3);
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) img.at(y, x, mask.at(y, x)) = 1.0f;
    return img;
}

inline TernaryMask rgb_to_ternary(const Image& img) {
    if (img.channels != 3) throw std::invalid_argument("rgb_to_ternary: need RGB");
    TernaryMask mask(img.width, img.height);
    const float eps = 1.0f / 510.0f;  // half an 8-bit quantization step
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            int hot = -1;
            bool ok = true;
            for (int c = 0; c < 3; ++c) {
                const float v = img.at(y, x, c);
                if (std::abs(v - 1.0f) <= eps) {
                    if (hot >= 0) ok = false;
                    hot = c;
                } else if (std::abs(v) > eps) {
                    ok = false;
                }
            }
            if (!ok || hot < 0)
                throw InvalidMaskError("pixel is not a pure mask color", x, y);
            mask.at(y, x) = static_cast<std::uint8_t>(hot);
        }
    return mask;
}

// Annotation text format: one polygon per line, vertices separated by
// commas, each vertex "x y". Blank lines and '#' comments are skipped.
inline std::vector<Polygon> parse_annotation_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::vector<Polygon> polys;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        bool blank = true;
        for (char ch : line)
            if (!std::isspace(static_cast<unsigned char>(ch))) blank = false;
        if (blank) continue;
        Polygon poly;
        std::stringstream ls(line);
        std::string piece;
        while (std::getline(ls, piece, ',')) {
            std::stringstream ps(piece);
            double x, y;
            if (!(ps >> x >> y))
                throw InvalidAnnotationError("unparseable vertex '" + piece + "'", polys.size());
            poly.push_back({x, y});
        }
        if (poly.size() < 3)
            throw InvalidAnnotationError("polygon has fewer than 3 vertices", polys.size());
        polys.push_back(std::move(poly));
    }
    return polys;
}

inline void write_annotation_file(const std::string& path, const std::vector<Polygon>& polys) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f.precision(10);
    for (const auto& poly : polys) {
        for (std::size_t i = 0; i < poly.size(); ++i) {
            if (i) f << ", ";
            f << poly[i][0] << " " << poly[i][1];
        }
        f << "\n";
    }
}

}  // namespace nbseg
