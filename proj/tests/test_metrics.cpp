#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>
#include <vector>

#include "nbseg/metrics.hpp"
#include "nbseg/rng.hpp"

using namespace nbseg;

namespace {

LabelMap map_from(const std::vector<std::uint32_t>& labels, int width, int height) {
    LabelMap m(width, height);
    m.labels = labels;
    return m;
}

// Independent matcher: repeated full-matrix argmax by (dice desc, earlier gt
// in first-encounter order, earlier pred), no sorting, no shared code paths.
Matching brute_force_greedy(const LabelMap& gt, const LabelMap& pred, double threshold) {
    std::vector<std::uint32_t> gt_objs, pred_objs;
    for (auto v : gt.labels)
        if (v && std::find(gt_objs.begin(), gt_objs.end(), v) == gt_objs.end()) gt_objs.push_back(v);
    for (auto v : pred.labels)
        if (v && std::find(pred_objs.begin(), pred_objs.end(), v) == pred_objs.end())
            pred_objs.push_back(v);

    auto dice_of = [&](std::uint32_t g, std::uint32_t p) {
        std::size_t a = 0, b = 0, inter = 0;
        for (std::size_t i = 0; i < gt.labels.size(); ++i) {
            a += gt.labels[i] == g;
            b += pred.labels[i] == p;
            inter += gt.labels[i] == g && pred.labels[i] == p;
        }
        return dice_counts(a, b, inter);
    };

    Matching m;
    std::vector<bool> g_used(gt_objs.size(), false), p_used(pred_objs.size(), false);
    for (;;) {
        double best = -1.0;
        std::size_t bi = 0, bj = 0;
        for (std::size_t i = 0; i < gt_objs.size(); ++i) {
            if (g_used[i]) continue;
            for (std::size_t j = 0; j < pred_objs.size(); ++j) {
                if (p_used[j]) continue;
                const double d = dice_of(gt_objs[i], pred_objs[j]);
                if (d >= threshold && d > best) {
                    best = d;
                    bi = i;
                    bj = j;
                }
            }
        }
        if (best < 0.0) break;
        g_used[bi] = true;
        p_used[bj] = true;
        m.pairs.push_back({gt_objs[bi], pred_objs[bj], best});
    }
    for (std::size_t i = 0; i < gt_objs.size(); ++i)
        if (!g_used[i]) m.unmatched_gt.push_back(gt_objs[i]);
    for (std::size_t j = 0; j < pred_objs.size(); ++j)
        if (!p_used[j]) m.unmatched_pred.push_back(pred_objs[j]);
    return m;
}

// Exhaustive optimal one-to-one matching: maximize cardinality, then total
// Dice, over all injective gt -> pred assignments with Dice >= threshold.
struct Optimal {
    std::size_t tp = 0;
    double total = 0.0;
};

void optimal_rec(const std::vector<std::vector<double>>& dice, std::size_t i,
                 std::vector<bool>& p_used, std::size_t tp, double total, Optimal& best) {
    if (i == dice.size()) {
        if (tp > best.tp || (tp == best.tp && total > best.total)) best = {tp, total};
        return;
    }
    optimal_rec(dice, i + 1, p_used, tp, total, best);  // gt i unmatched
    for (std::size_t j = 0; j < p_used.size(); ++j)
        if (!p_used[j] && dice[i][j] >= 0.0) {
            p_used[j] = true;
            optimal_rec(dice, i + 1, p_used, tp + 1, total + dice[i][j], best);
            p_used[j] = false;
        }
}

Optimal brute_force_optimal(const LabelMap& gt, const LabelMap& pred, double threshold) {
    std::set<std::uint32_t> gs(gt.labels.begin(), gt.labels.end());
    std::set<std::uint32_t> ps(pred.labels.begin(), pred.labels.end());
    gs.erase(0);
    ps.erase(0);
    std::vector<std::uint32_t> gv(gs.begin(), gs.end()), pv(ps.begin(), ps.end());
    std::vector<std::vector<double>> dice(gv.size(), std::vector<double>(pv.size(), -1.0));
    for (std::size_t i = 0; i < gv.size(); ++i)
        for (std::size_t j = 0; j < pv.size(); ++j) {
            std::size_t a = 0, b = 0, inter = 0;
            for (std::size_t k = 0; k < gt.labels.size(); ++k) {
                a += gt.labels[k] == gv[i];
                b += pred.labels[k] == pv[j];
                inter += gt.labels[k] == gv[i] && pred.labels[k] == pv[j];
            }
            const double d = dice_counts(a, b, inter);
            if (d >= threshold) dice[i][j] = d;
        }
    Optimal best;
    std::vector<bool> p_used(pv.size(), false);
    optimal_rec(dice, 0, p_used, 0, 0.0, best);
    return best;
}

LabelMap random_map(Rng& rng, int w, int h) {
    LabelMap m(w, h);
    for (auto& v : m.labels) {
        const std::uint32_t r = rng.uniform_int(6);
        v = r <= 3 ? r : 0;  // labels 0..3, background-biased
    }
    return m;
}

}  // namespace

TEST(Dice, CountFormula) {
    EXPECT_EQ(dice_counts(7, 7, 7), 1.0);
    EXPECT_EQ(dice_counts(5, 9, 0), 0.0);
    EXPECT_EQ(dice_counts(10, 10, 5), 0.5);
    EXPECT_EQ(dice_counts(0, 0, 0), 0.0);
}

TEST(Matching, IdenticalMapsMatchEverything) {
    Rng rng(4);
    const int w = 8, h = 8;
    LabelMap gt = random_map(rng, w, h);
    gt.labels[0] = 1;
    gt.labels[9] = 2;
    gt.labels[18] = 3;
    const Matching m = match_objects(gt, gt);
    EXPECT_EQ(m.fn(), 0u);
    EXPECT_EQ(m.fp(), 0u);
    for (const auto& p : m.pairs) {
        EXPECT_EQ(p.gt, p.pred);
        EXPECT_EQ(p.dice, 1.0);
    }
}

TEST(Matching, BelowThresholdPairIsRejected) {
    // 10 px vs 10 px with 1 px overlap: Dice 0.1 < 0.2
    LabelMap gt(10, 2), pred(10, 2);
    for (int x = 0; x < 10; ++x) gt.at(0, x) = 1;
    for (int x = 0; x < 10; ++x) pred.at(1, x) = 1;
    pred.at(0, 9) = 0;
    pred.at(1, 9) = 0;
    pred.at(0, 0) = 1;  // single overlapping pixel, area stays 10
    const Matching m = match_objects(gt, pred);
    EXPECT_EQ(m.tp(), 0u);
    EXPECT_EQ(m.fn(), 1u);
    EXPECT_EQ(m.fp(), 1u);
}

TEST(Matching, ThresholdIsInclusive) {
    // 10 px vs 10 px with 2 px overlap: Dice exactly 0.2
    LabelMap gt(10, 2), pred(10, 2);
    for (int x = 0; x < 10; ++x) gt.at(0, x) = 1;
    for (int x = 2; x < 10; ++x) pred.at(1, x) = 1;
    pred.at(0, 0) = 1;
    pred.at(0, 1) = 1;
    const Matching m = match_objects(gt, pred);
    ASSERT_EQ(m.tp(), 1u);
    EXPECT_DOUBLE_EQ(m.pairs[0].dice, 0.2);
}

TEST(Matching, TieBreaksUseEncounterOrderNotLabelValue) {
    // First-encountered gt object carries the larger raw label; on a Dice tie
    // it must still win.
    LabelMap gt(2, 3), pred(2, 3);
    gt.at(0, 0) = 5;
    gt.at(0, 1) = 5;
    gt.at(2, 0) = 3;
    gt.at(2, 1) = 3;
    pred.at(0, 0) = 1;
    pred.at(2, 0) = 1;  // overlaps each gt object by one pixel: Dice 0.5 both
    const Matching m = match_objects(gt, pred);
    ASSERT_EQ(m.tp(), 1u);
    EXPECT_EQ(m.pairs[0].gt, 5u);
    ASSERT_EQ(m.unmatched_gt.size(), 1u);
    EXPECT_EQ(m.unmatched_gt[0], 3u);
}

TEST(Matching, RejectsShapeMismatch) {
    LabelMap a(4, 4), b(4, 5);
    EXPECT_THROW(match_objects(a, b), std::invalid_argument);
}

TEST(Matching, AgreesWithBruteForceOnRandomMaps) {
    std::size_t optimal_gaps = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        Rng rng = Rng::derive(0xA11CE, static_cast<std::uint64_t>(trial));
        const int w = 1 + static_cast<int>(rng.uniform_int(8));
        const int h = 1 + static_cast<int>(rng.uniform_int(8));
        const LabelMap gt = random_map(rng, w, h);
        const LabelMap pred = random_map(rng, w, h);
        const Matching got = match_objects(gt, pred);
        const Matching want = brute_force_greedy(gt, pred, 0.2);
        ASSERT_EQ(got.pairs.size(), want.pairs.size()) << "trial " << trial;
        for (std::size_t i = 0; i < got.pairs.size(); ++i) {
            ASSERT_EQ(got.pairs[i].gt, want.pairs[i].gt) << "trial " << trial;
            ASSERT_EQ(got.pairs[i].pred, want.pairs[i].pred) << "trial " << trial;
            ASSERT_DOUBLE_EQ(got.pairs[i].dice, want.pairs[i].dice) << "trial " << trial;
        }
        // unmatched lists are sets; ordering is not part of the contract
        auto sorted = [](std::vector<std::uint32_t> v) {
            std::sort(v.begin(), v.end());
            return v;
        };
        ASSERT_EQ(sorted(got.unmatched_gt), sorted(want.unmatched_gt)) << "trial " << trial;
        ASSERT_EQ(sorted(got.unmatched_pred), sorted(want.unmatched_pred)) << "trial " << trial;
        // Greedy never beats the exhaustive optimum; equality holds in the
        // vast majority of cases and greedy is the documented behavior.
        const Optimal opt = brute_force_optimal(gt, pred, 0.2);
        ASSERT_LE(got.tp(), opt.tp) << "trial " << trial;
        if (got.tp() < opt.tp) ++optimal_gaps;
    }
    // Greedy is the documented behavior; where it undershoots the exhaustive
    // optimum its result is golden. The census below is deterministic for
    // this seed and pins the greedy/optimal relationship.
    EXPECT_EQ(optimal_gaps, 724u);
}

TEST(Matching, RelabelInvariance) {
    for (int trial = 0; trial < 200; ++trial) {
        Rng rng = Rng::derive(0xBEEF, static_cast<std::uint64_t>(trial));
        const LabelMap gt = random_map(rng, 8, 8);
        const LabelMap pred = random_map(rng, 8, 8);
        LabelMap gt2 = gt, pred2 = pred;
        const std::uint32_t gmap[4] = {0, 71, 12, 40};  // order-scrambling renumbering
        const std::uint32_t pmap[4] = {0, 9, 103, 55};
        for (auto& v : gt2.labels) v = gmap[v];
        for (auto& v : pred2.labels) v = pmap[v];
        const Matching a = match_objects(gt, pred);
        const Matching b = match_objects(gt2, pred2);
        ASSERT_EQ(a.tp(), b.tp());
        ASSERT_EQ(a.fn(), b.fn());
        ASSERT_EQ(a.fp(), b.fp());
        ASSERT_DOUBLE_EQ(aggregate_dice(a), aggregate_dice(b));
        const ErrorDecomposition ea = error_decomposition(gt, pred, a);
        const ErrorDecomposition eb = error_decomposition(gt2, pred2, b);
        ASSERT_EQ(ea.md, eb.md);
        ASSERT_EQ(ea.us, eb.us);
        ASSERT_EQ(ea.fd, eb.fd);
        ASSERT_EQ(ea.os, eb.os);
    }
}

TEST(ErrorDecomposition, PartitionInvariantOnRandomMaps) {
    for (int trial = 0; trial < 10000; ++trial) {
        Rng rng = Rng::derive(0xDECAF, static_cast<std::uint64_t>(trial));
        const int w = 1 + static_cast<int>(rng.uniform_int(8));
        const int h = 1 + static_cast<int>(rng.uniform_int(8));
        const LabelMap gt = random_map(rng, w, h);
        const LabelMap pred = random_map(rng, w, h);
        const Matching m = match_objects(gt, pred);
        const ErrorDecomposition e = error_decomposition(gt, pred, m);
        ASSERT_EQ(e.md + e.us, e.fn) << "trial " << trial;
        ASSERT_EQ(e.fd + e.os, e.fp) << "trial " << trial;
        ASSERT_LE(e.md, e.fn);
        ASSERT_LE(e.fd, e.fp);
        for (double r : {e.mdr, e.fdr, e.usr, e.osr}) {
            ASSERT_GE(r, 0.0);
            ASSERT_LE(r, 1.0);
        }
    }
}

TEST(ErrorDecomposition, SwapSymmetry) {
    for (int trial = 0; trial < 500; ++trial) {
        Rng rng = Rng::derive(0x5A5A, static_cast<std::uint64_t>(trial));
        const LabelMap a = random_map(rng, 7, 7);
        const LabelMap b = random_map(rng, 7, 7);
        const Matching mab = match_objects(a, b);
        const Matching mba = match_objects(b, a);
        const ObjectScores sab = object_scores(mab);
        const ObjectScores sba = object_scores(mba);
        ASSERT_EQ(mab.tp(), mba.tp()) << "trial " << trial;
        ASSERT_DOUBLE_EQ(sab.precision, sba.recall);
        ASSERT_DOUBLE_EQ(sab.recall, sba.precision);
        const ErrorDecomposition eab = error_decomposition(a, b, mab);
        const ErrorDecomposition eba = error_decomposition(b, a, mba);
        ASSERT_EQ(eab.md, eba.fd);
        ASSERT_EQ(eab.us, eba.os);
        ASSERT_DOUBLE_EQ(eab.mdr, eba.fdr);
        ASSERT_DOUBLE_EQ(eab.usr, eba.osr);
    }
}

TEST(ErrorDecomposition, PerfectPredictionIsAllZeroRates) {
    LabelMap gt(6, 6);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 3; ++x) gt.at(y, x) = 1;
    gt.at(5, 5) = 2;
    LabelMap pred = gt;
    for (auto& v : pred.labels) v = v ? v + 10 : 0;  // same objects, new labels
    const Matching m = match_objects(gt, pred);
    const ObjectScores s = object_scores(m);
    EXPECT_EQ(s.precision, 1.0);
    EXPECT_EQ(s.recall, 1.0);
    EXPECT_EQ(s.f1, 1.0);
    EXPECT_FALSE(s.zero_division);
    const ErrorDecomposition e = error_decomposition(gt, pred, m);
    EXPECT_EQ(e.mdr, 0.0);
    EXPECT_EQ(e.fdr, 0.0);
    EXPECT_EQ(e.usr, 0.0);
    EXPECT_EQ(e.osr, 0.0);
    EXPECT_FALSE(e.zero_division);
}

TEST(ErrorDecomposition, MergeCaseGivesHalfUnderSegmentation) {
    // Two gt nuclei swallowed by one predicted blob: the better-Dice gt
    // matches, the other is fully covered -> US, giving USR = 1/2.
    LabelMap gt(10, 1), pred(10, 1);
    for (int x = 0; x < 6; ++x) gt.at(0, x) = 1;
    for (int x = 6; x < 10; ++x) gt.at(0, x) = 2;
    for (int x = 0; x < 10; ++x) pred.at(0, x) = 1;
    const Matching m = match_objects(gt, pred);
    ASSERT_EQ(m.tp(), 1u);
    EXPECT_EQ(m.pairs[0].gt, 1u);  // Dice 0.75 beats 0.571
    const ErrorDecomposition e = error_decomposition(gt, pred, m);
    EXPECT_EQ(e.us, 1u);
    EXPECT_EQ(e.md, 0u);
    EXPECT_DOUBLE_EQ(e.usr, 0.5);
    EXPECT_DOUBLE_EQ(e.mdr, 0.0);
}

TEST(ErrorDecomposition, SplitCaseGivesHalfOverSegmentation) {
    // One gt nucleus cut into two predicted halves: the larger half matches,
    // the extra one lies on gt -> OS, giving OSR = 1/2.
    LabelMap gt(10, 1), pred(10, 1);
    for (int x = 0; x < 10; ++x) gt.at(0, x) = 1;
    for (int x = 0; x < 6; ++x) pred.at(0, x) = 1;
    for (int x = 6; x < 10; ++x) pred.at(0, x) = 2;
    const Matching m = match_objects(gt, pred);
    ASSERT_EQ(m.tp(), 1u);
    const ErrorDecomposition e = error_decomposition(gt, pred, m);
    EXPECT_EQ(e.os, 1u);
    EXPECT_EQ(e.fd, 0u);
    EXPECT_DOUBLE_EQ(e.osr, 0.5);
    EXPECT_DOUBLE_EQ(e.fdr, 0.0);
}

TEST(ErrorDecomposition, MissedAndFalseDetections) {
    // gt 2 isolated from every prediction -> MD; pred 2 on pure background -> FD.
    LabelMap gt(8, 8), pred(8, 8);
    for (int x = 0; x < 4; ++x) gt.at(0, x) = 1;
    for (int x = 0; x < 4; ++x) pred.at(0, x) = 1;
    for (int x = 0; x < 3; ++x) gt.at(4, x) = 2;
    for (int x = 0; x < 3; ++x) pred.at(7, x) = 2;
    const Matching m = match_objects(gt, pred);
    ASSERT_EQ(m.tp(), 1u);
    const ErrorDecomposition e = error_decomposition(gt, pred, m);
    EXPECT_EQ(e.md, 1u);
    EXPECT_EQ(e.fd, 1u);
    EXPECT_EQ(e.us, 0u);
    EXPECT_EQ(e.os, 0u);
    EXPECT_DOUBLE_EQ(e.mdr, 0.5);  // MD / (FN + TP) = 1/2
    EXPECT_DOUBLE_EQ(e.fdr, 0.5);  // FD / (TP + FP) = 1/2
    EXPECT_DOUBLE_EQ(e.usr, 0.0);
    EXPECT_DOUBLE_EQ(e.osr, 0.0);
}

TEST(ErrorDecomposition, EmptyMapsFlagZeroDivision) {
    LabelMap gt(4, 4), pred(4, 4);
    const Matching m = match_objects(gt, pred);
    const ObjectScores s = object_scores(m);
    EXPECT_TRUE(s.zero_division);
    EXPECT_EQ(s.f1, 0.0);
    const ErrorDecomposition e = error_decomposition(gt, pred, m);
    EXPECT_TRUE(e.zero_division);
    EXPECT_EQ(e.mdr, 0.0);
}

TEST(ObjectScores, HandCounts) {
    Matching m;
    m.pairs = {{1, 1, 0.9}, {2, 2, 0.8}, {3, 3, 0.7}};
    m.unmatched_gt = {4};
    m.unmatched_pred = {9};
    const ObjectScores s = object_scores(m);
    EXPECT_DOUBLE_EQ(s.precision, 0.75);
    EXPECT_DOUBLE_EQ(s.recall, 0.75);
    EXPECT_DOUBLE_EQ(s.f1, 0.75);
    EXPECT_FALSE(s.zero_division);
}

TEST(AggregateDice, MeanOverPairs) {
    Matching m;
    m.pairs = {{1, 1, 0.8}, {2, 2, 0.6}};
    EXPECT_DOUBLE_EQ(aggregate_dice(m), 0.7);
    EXPECT_EQ(aggregate_dice(Matching{}), 0.0);
}

TEST(PixelDice, ForegroundSupports) {
    LabelMap gt(4, 1), pred(4, 1);
    gt.at(0, 0) = 1;
    gt.at(0, 1) = 2;
    pred.at(0, 1) = 7;
    pred.at(0, 2) = 7;
    EXPECT_DOUBLE_EQ(pixel_dice(gt, pred), 0.5);  // supports {0,1} vs {1,2}
    LabelMap bad(4, 2);
    EXPECT_THROW(pixel_dice(gt, bad), std::invalid_argument);
}
