#pragma once

#include <algorithm>
#include <map>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "nbseg/image.hpp"

namespace nbseg {

inline double dice_counts(std::size_t a, std::size_t b, std::size_t inter) {
    if (a + b == 0) return 0.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(a + b);
}

struct MatchPair {
    std::uint32_t gt = 0;
    std::uint32_t pred = 0;
    double dice = 0.0;
};

struct Matching {
    std::vector<MatchPair> pairs;
    std::vector<std::uint32_t> unmatched_gt;
    std::vector<std::uint32_t> unmatched_pred;

    std::size_t tp() const { return pairs.size(); }
    std::size_t fn() const { return unmatched_gt.size(); }
    std::size_t fp() const { return unmatched_pred.size(); }
};

namespace detail {

// Map of label -> dense index in row-major first-encounter order. Tie-breaks
// below use this canonical order instead of raw label values, which keeps the
// matching invariant under any relabeling of either map.
inline std::map<std::uint32_t, std::size_t> canonical_order(const LabelMap& m) {
    std::map<std::uint32_t, std::size_t> order;
    for (std::size_t i = 0; i < m.labels.size(); ++i) {
        const std::uint32_t lbl = m.labels[i];
        if (lbl && !order.count(lbl)) order.emplace(lbl, order.size());
    }
    return order;
}

}  // namespace detail

// Greedy one-to-one matching in descending Dice order; only pairs with
// Dice >= threshold are accepted. Ties take the earlier gt object, then the
// earlier pred object, in first-encounter order.
inline Matching match_objects(const LabelMap& gt, const LabelMap& pred, double threshold = 0.2) {
    if (gt.width != pred.width || gt.height != pred.height)
        throw std::invalid_argument("match_objects: map size mismatch");

    std::map<std::uint32_t, std::size_t> gt_area, pred_area;
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::size_t> inter;
    for (std::size_t i = 0; i < gt.labels.size(); ++i) {
        const std::uint32_t g = gt.labels[i], p = pred.labels[i];
        if (g) ++gt_area[g];
        if (p) ++pred_area[p];
        if (g && p) ++inter[{g, p}];
    }
    const auto gt_order = detail::canonical_order(gt);
    const auto pred_order = detail::canonical_order(pred);

    struct Cand {
        double dice;
        std::size_t gt_rank, pred_rank;
        std::uint32_t g, p;
    };
    std::vector<Cand> cands;
    cands.reserve(inter.size());
    for (const auto& [gp, n] : inter) {
        const double d = dice_counts(gt_area[gp.first], pred_area[gp.second], n);
        if (d >= threshold)
            cands.push_back({d, gt_order.at(gp.first), pred_order.at(gp.second), gp.first, gp.second});
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        if (a.dice != b.dice) return a.dice > b.dice;
        if (a.gt_rank != b.gt_rank) return a.gt_rank < b.gt_rank;
        return a.pred_rank < b.pred_rank;
    });

    Matching m;
    std::vector<bool> gt_taken(gt_order.size(), false), pred_taken(pred_order.size(), false);
    for (const Cand& c : cands) {
        if (gt_taken[c.gt_rank] || pred_taken[c.pred_rank]) continue;
        gt_taken[c.gt_rank] = true;
        pred_taken[c.pred_rank] = true;
        m.pairs.push_back({c.g, c.p, c.dice});
    }
    for (const auto& [lbl, rank] : gt_order)
        if (!gt_taken[rank]) m.unmatched_gt.push_back(lbl);
    for (const auto& [lbl, rank] : pred_order)
        if (!pred_taken[rank]) m.unmatched_pred.push_back(lbl);
    return m;
}

struct ObjectScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool zero_division = false;
};

inline ObjectScores object_scores(const Matching& m) {
    ObjectScores s;
    const double tp = static_cast<double>(m.tp());
    if (m.tp() + m.fp() == 0 || m.tp() + m.fn() == 0 || m.tp() == 0) s.zero_division = true;
    s.precision = m.tp() + m.fp() ? tp / (m.tp() + m.fp()) : 0.0;
    s.recall = m.tp() + m.fn() ? tp / (m.tp() + m.fn()) : 0.0;
    s.f1 = (s.precision + s.recall) > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    return s;
}

// FN split into missed (MD) vs under-segmented (US) by how much of the gt
// object any prediction covers; FP split into false (FD) vs over-segmented
// (OS) by how much of the pred object lies on any gt nucleus.
struct ErrorDecomposition {
    std::size_t tp = 0, fp = 0, fn = 0;
    std::size_t md = 0, fd = 0, us = 0, os = 0;
    double mdr = 0.0, fdr = 0.0, usr = 0.0, osr = 0.0;
    bool zero_division = false;
};

inline ErrorDecomposition error_decomposition(const LabelMap& gt, const LabelMap& pred,
                                              const Matching& m,
                                              double md_overlap_threshold = 0.2) {
    if (gt.width != pred.width || gt.height != pred.height)
        throw std::invalid_argument("error_decomposition: map size mismatch");
    ErrorDecomposition e;
    e.tp = m.tp();
    e.fp = m.fp();
    e.fn = m.fn();

    std::map<std::uint32_t, std::size_t> gt_area, pred_area, gt_covered, pred_covering;
    for (std::size_t i = 0; i < gt.labels.size(); ++i) {
        const std::uint32_t g = gt.labels[i], p = pred.labels[i];
        if (g) {
            ++gt_area[g];
            if (p) ++gt_covered[g];
        }
        if (p) {
            ++pred_area[p];
            if (g) ++pred_covering[p];
        }
    }
    for (std::uint32_t g : m.unmatched_gt) {
        const double cover =
            static_cast<double>(gt_covered[g]) / static_cast<double>(gt_area[g]);
        if (cover < md_overlap_threshold) ++e.md;
        else ++e.us;
    }
    for (std::uint32_t p : m.unmatched_pred) {
        const double cover =
            static_cast<double>(pred_covering[p]) / static_cast<double>(pred_area[p]);
        if (cover < md_overlap_threshold) ++e.fd;
        else ++e.os;
    }

    auto rate = [&e](std::size_t num, std::size_t den) {
        if (den == 0) {
            e.zero_division = true;
            return 0.0;
        }
        return static_cast<double>(num) / static_cast<double>(den);
    };
    e.mdr = rate(e.md, e.fn + e.tp);
    e.fdr = rate(e.fd, e.tp + e.fp);
    e.usr = rate(e.us, e.fn + e.tp - e.md);
    e.osr = rate(e.os, e.tp + e.fp - e.fd);
    return e;
}

// Mean Dice over matched pairs; 0 when nothing matched.
inline double aggregate_dice(const Matching& m) {
    if (m.pairs.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& p : m.pairs) sum += p.dice;
    return sum / static_cast<double>(m.pairs.size());
}

// Dice of the foreground supports, ignoring instance identity.
inline double pixel_dice(const LabelMap& gt, const LabelMap& pred) {
    if (gt.width != pred.width || gt.height != pred.height)
        throw std::invalid_argument("pixel_dice: map size mismatch");
    std::size_t a = 0, b = 0, inter = 0;
    for (std::size_t i = 0; i < gt.labels.size(); ++i) {
        const bool g = gt.labels[i] != 0, p = pred.labels[i] != 0;
        a += g;
        b += p;
        inter += g && p;
    }
    return dice_counts(a, b, inter);
}

}  // namespace nbseg
