#pragma once

#include <Eigen/Dense>

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

// Two unit-norm optical-density stain vectors plus per-stain reference
// concentrations (99th percentile over tissue pixels).
struct StainProfile {
    std::array<double, 3> haematoxylin{};
    std::array<double, 3> eosin{};
    double max_h = 1.0;
    double max_e = 1.0;
};

// OD = -log10(max(v, 1/255)); the floor keeps black pixels finite.
inline Image rgb_to_od(const Image& img) {
    Image od(img.width, img.height, img.channels);
    const float floor = 1.0f / 255.0f;
    for (std::size_t i = 0; i < img.numel(); ++i)
        od.data[i] = -std::log10(std::max(img.data[i], floor));
    return od;
}

inline Image od_to_rgb(const Image& od) {
    Image img(od.width, od.height, od.channels);
    for (std::size_t i = 0; i < od.numel(); ++i) {
        float v = std::pow(10.0f, -od.data[i]);
        img.data[i] = std::min(1.0f, std::max(0.0f, v));
    }
    return img;
}

namespace detail {

inline double percentile(std::vector<double>& v, double q) {
    if (v.empty()) return 0.0;
    const double pos = q * (static_cast<double>(v.size()) - 1.0);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    std::nth_element(v.begin(), v.begin() + lo, v.end());
    const double a = v[lo];
    std::nth_element(v.begin(), v.begin() + hi, v.end());
    const double b = v[hi];
    return a + (b - a) * (pos - lo);
}

// Clamped least squares of od onto the two stain vectors: solve the 2x2
// normal equations, clamp negatives to zero.
inline std::array<double, 2> concentrations(const StainProfile& p, const std::array<double, 3>& od) {
    const auto& h = p.haematoxylin;
    const auto& e = p.eosin;
    const double hh = h[0] * h[0] + h[1] * h[1] + h[2] * h[2];
    const double ee = e[0] * e[0] + e[1] * e[1] + e[2] * e[2];
    const double he = h[0] * e[0] + h[1] * e[1] + h[2] * e[2];
    const double bh = h[0] * od[0] + h[1] * od[1] + h[2] * od[2];
    const double be = e[0] * od[0] + e[1] * od[1] + e[2] * od[2];
    const double det = hh * ee - he * he;
    double ch, ce;
    if (std::abs(det) < 1e-12) {
        ch = bh / std::max(hh, 1e-12);
        ce = 0.0;
    } else {
        ch = (bh * ee - be * he) / det;
        ce = (be * hh - bh * he) / det;
    }
    return {std::max(0.0, ch), std::max(0.0, ce)};
}

}  // namespace detail

// Percentile-of-angles estimator: keep tissue pixels (OD norm >= beta), take
// the two principal directions of the OD cloud, and read the stain vectors
// off the 1%/99% angular extremes of pixel projections onto that plane.
inline StainProfile estimate_stain_profile(const Image& img, double beta = 0.15) {
    if (img.channels != 3) throw std::invalid_argument("estimate_stain_profile: need RGB");
    const Image od = rgb_to_od(img);
    std::vector<std::array<double, 3>> tissue;
    tissue.reserve(od.numel() / 3);
    for (std::size_t i = 0; i + 2 < od.numel(); i += 3) {
        const double a = od.data[i], b = od.data[i + 1], c = od.data[i + 2];
        if (std::sqrt(a * a + b * b + c * c) >= beta) tissue.push_back({a, b, c});
    }
    const std::size_t total_pixels = static_cast<std::size_t>(img.width) * img.height;
    if (tissue.size() < std::max<std::size_t>(2, total_pixels / 100))
        throw InsufficientTissueError("too few tissue pixels (" + std::to_string(tissue.size()) +
                                      " of " + std::to_string(total_pixels) + ")");

    // Second-moment matrix about the origin: stain vectors live in the
    // non-negative OD cone, so the plane of interest passes through 0.
    Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
    for (const auto& t : tissue) {
        const Eigen::Vector3d v(t[0], t[1], t[2]);
        m += v * v.transpose();
    }
    m /= static_cast<double>(tissue.size());
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(m);
    // Eigenvalues ascending; the two largest span the stain plane.
    const Eigen::Vector3d e1 = eig.eigenvectors().col(2);
    const Eigen::Vector3d e2 = eig.eigenvectors().col(1);
    if (eig.eigenvalues()(1) <= 1e-8 * eig.eigenvalues()(2))
        throw InsufficientTissueError("optical-density cloud is rank-1 (single stain)");

    // Re-centre the in-plane angle on the mean projection direction so the
    // percentile window never straddles the atan2 branch cut.
    double mx = 0.0, my = 0.0;
    for (const auto& t : tissue) {
        mx += e1(0) * t[0] + e1(1) * t[1] + e1(2) * t[2];
        my += e2(0) * t[0] + e2(1) * t[1] + e2(2) * t[2];
    }
    const double mn = std::sqrt(mx * mx + my * my);
    if (mn < 1e-12) throw InsufficientTissueError("optical-density cloud has no mean direction");
    const double c0 = mx / mn, s0 = my / mn;
    const Eigen::Vector3d u1 = c0 * e1 + s0 * e2;   // mean direction
    const Eigen::Vector3d u2 = -s0 * e1 + c0 * e2;  // in-plane orthogonal

    std::vector<double> angles;
    angles.reserve(tissue.size());
    for (const auto& t : tissue) {
        const double x = u1(0) * t[0] + u1(1) * t[1] + u1(2) * t[2];
        const double y = u2(0) * t[0] + u2(1) * t[1] + u2(2) * t[2];
        angles.push_back(std::atan2(y, x));
    }
    std::vector<double> tmp = angles;
    const double alo = detail::percentile(tmp, 0.01);
    tmp = angles;
    const double ahi = detail::percentile(tmp, 0.99);
    if (ahi - alo < 1e-3)
        throw InsufficientTissueError("angular stain spread degenerate (single stain)");

    auto make_vec = [&](double ang) {
        Eigen::Vector3d v = std::cos(ang) * u1 + std::sin(ang) * u2;
        if (v.sum() < 0) v = -v;
        for (int i = 0; i < 3; ++i) v(i) = std::max(0.0, v(i));  // OD components are non-negative
        v.normalize();
        return std::array<double, 3>{v(0), v(1), v(2)};
    };
    std::array<double, 3> va = make_vec(alo);
    std::array<double, 3> vb = make_vec(ahi);
    StainProfile p;
    // Haematoxylin is the vector with the larger red-OD component.
    if (va[0] >= vb[0]) {
        p.haematoxylin = va;
        p.eosin = vb;
    } else {
        p.haematoxylin = vb;
        p.eosin = va;
    }

    std::vector<double> ch, ce;
    ch.reserve(tissue.size());
    ce.reserve(tissue.size());
    for (const auto& t : tissue) {
        const auto c = detail::concentrations(p, t);
        ch.push_back(c[0]);
        ce.push_back(c[1]);
    }
    p.max_h = std::max(detail::percentile(ch, 0.99), 1e-6);
    p.max_e = std::max(detail::percentile(ce, 0.99), 1e-6);
    return p;
}

// Express every pixel in source-stain concentrations, rescale those to the
// target's reference maxima, and rebuild the image with the target vectors.
inline Image normalize_to_profile(const Image& img, const StainProfile& source,
                                  const StainProfile& target) {
    if (img.channels != 3) throw std::invalid_argument("normalize_to_profile: need RGB");
    const Image od = rgb_to_od(img);
    Image out(img.width, img.height, 3);
    const double sh = target.max_h / source.max_h;
    const double se = target.max_e / source.max_e;
    for (std::size_t i = 0; i + 2 < od.numel(); i += 3) {
        const std::array<double, 3> v{od.data[i], od.data[i + 1], od.data[i + 2]};
        const auto c = detail::concentrations(source, v);
        const double chn = c[0] * sh, cen = c[1] * se;
        for (int k = 0; k < 3; ++k) {
            const double odk = target.haematoxylin[k] * chn + target.eosin[k] * cen;
            out.data[i + k] =
                static_cast<float>(std::min(1.0, std::max(0.0, std::pow(10.0, -odk))));
        }
    }
    return out;
}

inline void save_stain_profile(const std::string& path, const StainProfile& p) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f.precision(17);
    f << "h0=" << p.haematoxylin[0] << "\nh1=" << p.haematoxylin[1] << "\nh2=" << p.haematoxylin[2]
      << "\ne0=" << p.eosin[0] << "\ne1=" << p.eosin[1] << "\ne2=" << p.eosin[2]
      << "\nmax_h=" << p.max_h << "\nmax_e=" << p.max_e << "\n";
}

inline StainProfile load_stain_profile(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    StainProfile p;
    std::string line;
    int seen = 0;
    while (std::getline(f, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq);
        const double val = std::stod(line.substr(eq + 1));
        if (key == "h0") p.haematoxylin[0] = val;
        else if (key == "h1") p.haematoxylin[1] = val;
        else if (key == "h2") p.haematoxylin[2] = val;
        else if (key == "e0") p.eosin[0] = val;
        else if (key == "e1") p.eosin[1] = val;
        else if (key == "e2") p.eosin[2] = val;
        else if (key == "max_h") p.max_h = val;
        else if (key == "max_e") p.max_e = val;
        else continue;
        ++seen;
    }
    if (seen < 8) throw std::runtime_error("incomplete stain profile in " + path);
    return p;
}

}  // namespace nbseg
