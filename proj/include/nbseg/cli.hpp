#pragma once

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "nbseg/config.hpp"
#include "nbseg/gradcheck.hpp"
#include "nbseg/masks.hpp"
#include "nbseg/metrics.hpp"
#include "nbseg/nbnet.hpp"
#include "nbseg/png_io.hpp"
#include "nbseg/postproc.hpp"
#include "nbseg/stain.hpp"
#include "nbseg/synthetic.hpp"

namespace nbseg::cli {

namespace fs = std::filesystem;

inline std::vector<fs::path> list_pngs(const std::string& dir) {
    if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir);
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

inline bool is_derived_png(const fs::path& p) {
    const std::string stem = p.stem().string();
    for (const char* suffix : {"_labels", "_ternary", "_mask", "_probs", "_overlay"}) {
        const std::size_t n = std::string(suffix).size();
        if (stem.size() > n && stem.compare(stem.size() - n, n, suffix) == 0) return true;
    }
    return false;
}

// Base H&E images only: outputs of make-masks/predict living alongside them are skipped.
inline std::vector<fs::path> list_base_pngs(const std::string& dir) {
    std::vector<fs::path> out = list_pngs(dir);
    std::erase_if(out, is_derived_png);
    return out;
}

inline std::string strip_suffix(const std::string& s, const std::string& suffix) {
    if (s.size() > suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0)
        return s.substr(0, s.size() - suffix.size());
    return s;
}

// Suffixed names take precedence so that a mask directory that also holds the
// raw images (e.g. synth output) never pairs an image with itself.
inline fs::path find_mask_for(const fs::path& image, const std::string& mask_dir) {
    const std::string stem = image.stem().string();
    for (const auto& cand : {stem + "_ternary.png", stem + "_mask.png", stem + ".png"}) {
        const fs::path p = fs::path(mask_dir) / cand;
        if (fs::exists(p)) return p;
    }
    throw std::runtime_error("no mask found for " + image.string() + " in " + mask_dir);
}

inline Dataset load_dataset(const std::string& image_dir, const std::string& mask_dir) {
    Dataset d;
    for (const auto& p : list_base_pngs(image_dir)) {
        d.images.push_back(read_image_png(p.string()));
        d.masks.push_back(rgb_to_ternary(read_image_png(find_mask_for(p, mask_dir).string())));
    }
    if (d.images.empty()) throw std::runtime_error("no PNG images in " + image_dir);
    return d;
}

// ---- subcommands ----

inline int cmd_normalize(const std::string& target, const std::string& in_dir,
                         const std::string& out_dir, const std::string& profile_out) {
    const StainProfile tp = estimate_stain_profile(read_image_png(target));
    if (!profile_out.empty()) save_stain_profile(profile_out, tp);
    fs::create_directories(out_dir);
    for (const auto& p : list_base_pngs(in_dir)) {
        const Image img = read_image_png(p.string());
        StainProfile sp;
        try {
            sp = estimate_stain_profile(img);
        } catch (const InsufficientTissueError& e) {
            std::cerr << "skipping " << p.filename().string() << ": " << e.what() << "\n";
            continue;
        }
        write_image_png((fs::path(out_dir) / p.filename()).string(),
                        normalize_to_profile(img, sp, tp));
    }
    return 0;
}

inline int cmd_make_masks(const std::string& ann_dir, const std::string& out_dir,
                          const std::string& image_dir, int width, int height,
                          double boundary_width) {
    if (!fs::is_directory(ann_dir)) throw std::runtime_error("not a directory: " + ann_dir);
    fs::create_directories(out_dir);
    std::vector<fs::path> anns;
    for (const auto& e : fs::directory_iterator(ann_dir))
        if (e.is_regular_file() && e.path().extension() == ".txt") anns.push_back(e.path());
    std::sort(anns.begin(), anns.end());
    if (anns.empty()) throw std::runtime_error("no .txt annotation files in " + ann_dir);
    for (const auto& a : anns) {
        const std::string base = strip_suffix(a.stem().string(), "_annotations");
        int w = width, h = height;
        if (!image_dir.empty()) {
            const fs::path img_path = fs::path(image_dir) / (base + ".png");
            if (!fs::exists(img_path))
                throw std::runtime_error("no image " + img_path.string() + " for " + a.string());
            const Image img = read_image_png(img_path.string());
            w = img.width;
            h = img.height;
        }
        if (w < 1 || h < 1)
            throw std::runtime_error("mask size unknown for " + a.string() +
                                     ": pass --images or --width/--height");
        const auto polys = parse_annotation_file(a.string());
        const LabelMap labels = rasterize_annotations(polys, w, h);
        const TernaryMask mask = instance_to_ternary(labels, boundary_width);
        write_label_png((fs::path(out_dir) / (base + "_labels.png")).string(), labels);
        write_image_png((fs::path(out_dir) / (base + "_ternary.png")).string(),
                        ternary_to_rgb(mask));
    }
    return 0;
}

inline int cmd_augment_preview(const std::string& image, const std::string& mask,
                               std::uint64_t seed, const std::string& out_dir, int count,
                               const AugmentParams& params) {
    const Image img = read_image_png(image);
    const TernaryMask tm = rgb_to_ternary(read_image_png(mask));
    fs::create_directories(out_dir);
    write_image_png((fs::path(out_dir) / "orig_image.png").string(), img);
    write_image_png((fs::path(out_dir) / "orig_mask.png").string(), ternary_to_rgb(tm));
    for (int i = 0; i < count; ++i) {
        Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(i));
        const auto [ai, am] = random_augment(img, tm, params, rng);
        write_image_png((fs::path(out_dir) / ("aug" + std::to_string(i) + "_image.png")).string(),
                        ai);
        write_image_png((fs::path(out_dir) / ("aug" + std::to_string(i) + "_mask.png")).string(),
                        ternary_to_rgb(am));
    }
    return 0;
}

inline int cmd_train(const PipelineConfig& cfg, const std::string& image_dir,
                     const std::string& mask_dir, const std::string& out_ckpt,
                     const std::string& val_image_dir, const std::string& val_mask_dir,
                     const std::string& loss_csv) {
    const Dataset data = load_dataset(image_dir, mask_dir);
    Dataset val;
    const bool has_val = !val_image_dir.empty();
    if (has_val) val = load_dataset(val_image_dir, val_mask_dir);

    Model<float> model = build_network<float>(cfg.network);
    const auto history = train(model, data, cfg.training, has_val ? &val : nullptr);
    if (const auto dir = fs::path(out_ckpt).parent_path(); !dir.empty()) fs::create_directories(dir);
    save_checkpoint(model, out_ckpt);

    const std::string csv = loss_csv.empty() ? out_ckpt + ".loss.csv" : loss_csv;
    std::ofstream f(csv);
    if (!f) throw std::runtime_error("cannot write " + csv);
    f << "epoch,train_loss,val_loss\n";
    for (std::size_t i = 0; i < history.size(); ++i)
        f << (i + 1) << "," << history[i].train_loss << ","
          << (has_val ? history[i].val_loss : history[i].train_eval_loss) << "\n";
    std::cout << "trained " << history.size() << " epochs, final train loss "
              << (history.empty() ? 0.0 : history.back().train_loss) << ", checkpoint " << out_ckpt
              << "\n";
    return 0;
}

inline int cmd_predict(const std::string& ckpt, const std::string& in_dir,
                       const std::string& out_dir, int stride, int jobs,
                       const PostprocConfig& pcfg) {
    const Model<float> model = load_checkpoint(ckpt);
    fs::create_directories(out_dir);
    for (const auto& p : list_base_pngs(in_dir)) {
        const Image img = read_image_png(p.string());
        const Image probs = predict_image(model, img, stride, jobs);
        const LabelMap labels = segment(probs, pcfg);
        const std::string stem = p.stem().string();
        write_image_png((fs::path(out_dir) / (stem + "_probs.png")).string(), probs);
        write_label_png((fs::path(out_dir) / (stem + "_labels.png")).string(), labels);
        write_image_png((fs::path(out_dir) / (stem + "_overlay.png")).string(),
                        label_overlay(labels, &img));
        std::cout << stem << ": " << labels.max_label() << " nuclei\n";
    }
    return 0;
}

inline fs::path find_labels_for(const fs::path& gt, const std::string& pred_dir) {
    const std::string stem = gt.stem().string();
    std::vector<std::string> cands = {gt.filename().string(), stem + "_labels.png"};
    if (stem.size() > 7 && stem.substr(stem.size() - 7) == "_labels")
        cands.push_back(stem.substr(0, stem.size() - 7) + "_labels.png");
    for (const auto& c : cands) {
        const fs::path p = fs::path(pred_dir) / c;
        if (fs::exists(p)) return p;
    }
    throw std::runtime_error("no prediction found for " + gt.string() + " in " + pred_dir);
}

inline int cmd_evaluate(const std::string& gt_dir, const std::string& pred_dir,
                        const std::string& report, double match_threshold) {
    auto gts = list_pngs(gt_dir);
    // Mixed directories (images + their label maps) are fine: keep just the label maps.
    auto labels_only = gts;
    std::erase_if(labels_only, [](const fs::path& p) {
        const std::string stem = p.stem().string();
        return !(stem.size() > 7 && stem.compare(stem.size() - 7, 7, "_labels") == 0);
    });
    if (!labels_only.empty()) gts = labels_only;
    if (gts.empty()) throw std::runtime_error("no PNG label maps in " + gt_dir);
    std::ofstream rep;
    if (!report.empty()) {
        rep.open(report);
        if (!rep) throw std::runtime_error("cannot write " + report);
    }
    std::printf("%-20s %4s %4s %4s %6s %6s %6s %6s %6s %6s %6s %6s\n", "image", "TP", "FP", "FN",
                "prec", "rec", "F1", "dice", "MDR", "FDR", "USR", "OSR");
    double sum_f1 = 0, sum_dice = 0, sum_mdr = 0, sum_fdr = 0, sum_usr = 0, sum_osr = 0,
           sum_prec = 0, sum_rec = 0;
    std::size_t n = 0;
    for (const auto& g : gts) {
        const LabelMap gt = read_label_png(g.string());
        const LabelMap pred = read_label_png(find_labels_for(g, pred_dir).string());
        const Matching m = match_objects(gt, pred, match_threshold);
        const ObjectScores os = object_scores(m);
        const ErrorDecomposition ed = error_decomposition(gt, pred, m, match_threshold);
        const double dice = aggregate_dice(m);
        const std::string stem = strip_suffix(g.stem().string(), "_labels");
        std::printf("%-20s %4zu %4zu %4zu %6.3f %6.3f %6.3f %6.3f %6.3f %6.3f %6.3f %6.3f\n",
                    stem.c_str(), m.tp(), m.fp(), m.fn(), os.precision, os.recall, os.f1, dice,
                    ed.mdr, ed.fdr, ed.usr, ed.osr);
        if (rep.is_open()) {
            rep << stem << ".tp=" << m.tp() << "\n" << stem << ".fp=" << m.fp() << "\n"
                << stem << ".fn=" << m.fn() << "\n" << stem << ".precision=" << os.precision << "\n"
                << stem << ".recall=" << os.recall << "\n" << stem << ".f1=" << os.f1 << "\n"
                << stem << ".dice=" << dice << "\n"
                << stem << ".pixel_dice=" << pixel_dice(gt, pred) << "\n"
                << stem << ".mdr=" << ed.mdr << "\n" << stem << ".fdr=" << ed.fdr << "\n"
                << stem << ".usr=" << ed.usr << "\n" << stem << ".osr=" << ed.osr << "\n";
        }
        sum_prec += os.precision;
        sum_rec += os.recall;
        sum_f1 += os.f1;
        sum_dice += dice;
        sum_mdr += ed.mdr;
        sum_fdr += ed.fdr;
        sum_usr += ed.usr;
        sum_osr += ed.osr;
        ++n;
    }
    const double dn = static_cast<double>(n);
    std::printf("%-20s %4s %4s %4s %6.3f %6.3f %6.3f %6.3f %6.3f %6.3f %6.3f %6.3f\n", "mean", "",
                "", "", sum_prec / dn, sum_rec / dn, sum_f1 / dn, sum_dice / dn, sum_mdr / dn,
                sum_fdr / dn, sum_usr / dn, sum_osr / dn);
    if (rep.is_open()) {
        rep << "mean.precision=" << sum_prec / dn << "\nmean.recall=" << sum_rec / dn
            << "\nmean.f1=" << sum_f1 / dn << "\nmean.dice=" << sum_dice / dn
            << "\nmean.mdr=" << sum_mdr / dn << "\nmean.fdr=" << sum_fdr / dn
            << "\nmean.usr=" << sum_usr / dn << "\nmean.osr=" << sum_osr / dn << "\n";
    }
    return 0;
}

inline int cmd_synth(const std::string& out_dir, int width, int height, int count, int images,
                     std::uint64_t seed, double boundary_width) {
    fs::create_directories(out_dir);
    for (int i = 0; i < images; ++i) {
        Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(i));
        const SyntheticSample s = make_synthetic_nuclei(width, height, count, rng);
        char stem[32];
        std::snprintf(stem, sizeof stem, "synth%02d", i);
        write_image_png((fs::path(out_dir) / (std::string(stem) + ".png")).string(), s.image);
        write_label_png((fs::path(out_dir) / (std::string(stem) + "_labels.png")).string(),
                        s.labels);
        write_annotation_file(
            (fs::path(out_dir) / (std::string(stem) + "_annotations.txt")).string(),
            s.annotations);
        write_image_png((fs::path(out_dir) / (std::string(stem) + "_ternary.png")).string(),
                        ternary_to_rgb(instance_to_ternary(s.labels, boundary_width)));
        std::cout << stem << ": " << s.labels.max_label() << " nuclei\n";
    }
    return 0;
}

inline int cmd_selftest() {
    int failures = 0;
    auto check = [&](const std::string& name, bool ok) {
        std::cout << "selftest: " << name << ": " << (ok ? "ok" : "FAIL") << "\n";
        if (!ok) ++failures;
    };

    {  // gradient checks on small shapes, 64-bit
        Rng rng(11);
        auto x = make_tensor<double>(Shape{2, 4, 4, 3}, true);
        for (auto& v : x->data) v = rng.uniform(-2.0, 2.0);
        auto w = glorot_uniform_init<double>(27, 27, Shape{3, 3, 3, 3}, rng);
        auto b = make_tensor<double>(Shape{3}, true);
        auto loss_fn = [&] {
            auto y = conv2d_same<double>(nullptr, x, w, b);
            y = selu<double>(nullptr, y);
            auto s = sum_all<double>(nullptr, y);
            return static_cast<double>(s->data[0]);
        };
        Tape<double> tape;
        auto y = conv2d_same<double>(&tape, x, w, b);
        y = selu<double>(&tape, y);
        auto s = sum_all<double>(&tape, y);
        tape.backward(*s);
        auto grads = snapshot_grads<double>({x, w, b});
        auto r = finite_diff_check<double>({x, w, b}, grads, loss_fn, 1e-5, 24);
        check("conv+selu gradient (64-bit rel err " + std::to_string(r.max_rel_err) + ")",
              r.max_rel_err < 1e-5);
    }
    {  // softmax oracle
        auto x = make_tensor<float>(Shape{1, 1, 1, 3});
        x->data = {1.0f, 2.0f, 3.0f};
        auto p = softmax_channels<float>(nullptr, x);
        check("softmax(1,2,3)", std::abs(p->data[0] - 0.09003f) < 1e-4 &&
                                    std::abs(p->data[1] - 0.24473f) < 1e-4 &&
                                    std::abs(p->data[2] - 0.66524f) < 1e-4);
    }
    {  // adam first-step magnitude
        auto p = make_tensor<float>(Shape{4}, true);
        p->ensure_grad();
        for (auto& g : p->grad) g = 4.0f;
        Adam<float> opt({p});
        opt.step();
        bool ok = true;
        for (auto v : p->data) ok = ok && std::abs(v + 1e-3f) < 1e-6f;
        check("adam first step = -lr", ok);
    }
    {  // weight map invariants
        bool ok = true;
        for (int h : {4, 5, 64}) {
            for (int w : {4, 5, 64}) {
                const WeightMap m = loss_weight_map(h, w);
                double mean = 0;
                for (auto v : m.weights) mean += v;
                mean /= static_cast<double>(h) * w;
                ok = ok && std::abs(mean - 1.0) < 1e-6;
                for (int j = 0; j < w; ++j) ok = ok && m.at(0, j) == 0.0 && m.at(h - 1, j) == 0.0;
            }
        }
        check("weight map mean 1, zero border", ok);
    }
    {  // tiling plan + constant assembly
        const PatchGrid g = plan_patches(128, 128, 128, 64);
        bool ok = g.origins.size() == 9;
        const WeightMap wm = loss_weight_map(32, 32);
        const PatchGrid g2 = plan_patches(48, 48, 32, 16);
        Image patch(32, 32, 3);
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x) {
                patch.at(y, x, 0) = 0.2f;
                patch.at(y, x, 1) = 0.3f;
                patch.at(y, x, 2) = 0.5f;
            }
        std::vector<Image> preds(g2.origins.size(), patch);
        const Image full = assemble(preds, g2, wm);
        for (std::size_t i = 0; i < full.numel(); i += 3)
            ok = ok && std::abs(full.data[i] - 0.2f) < 1e-6f &&
                 std::abs(full.data[i + 2] - 0.5f) < 1e-6f;
        check("patch plan and constant assembly", ok);
    }
    {  // binarization rules
        check("binarization rules",
              binarize_target(0.7f, 0.6f) == TernaryClass::Boundary &&
                  binarize_target(0.4f, 0.3f) == TernaryClass::Inside &&
                  binarize_target(0.0f, 0.0f) == TernaryClass::Background);
    }
    {  // matching on identical maps
        LabelMap m(8, 8);
        for (int y = 2; y < 5; ++y)
            for (int x = 2; x < 5; ++x) m.at(y, x) = 1;
        const Matching match = match_objects(m, m);
        const ObjectScores os = object_scores(match);
        check("self-match scores", os.f1 == 1.0 && match.fn() == 0 && match.fp() == 0);
    }
    std::cout << (failures ? "selftest FAILED\n" : "selftest passed\n");
    return failures ? 1 : 0;
}

// ---- argument wiring ----

inline int run(int argc, const char* const* argv) {
    CLI::App app{"nuclei segmentation toolkit"};
    app.require_subcommand(1);

    PipelineConfig cfg;
    std::string config_path;

    // normalize
    auto* norm = app.add_subcommand("normalize", "stain-normalize images to a target image");
    std::string n_target, n_in, n_out, n_profile;
    norm->add_option("--target", n_target, "target H&E image (PNG)")->required();
    norm->add_option("--in", n_in, "input image directory")->required();
    norm->add_option("--out", n_out, "output directory")->required();
    norm->add_option("--save-profile", n_profile, "write the target stain profile here");

    // make-masks
    auto* mm = app.add_subcommand("make-masks", "rasterize polygon annotations into label/ternary masks");
    std::string mm_ann, mm_out, mm_images;
    int mm_w = 0, mm_h = 0;
    double mm_bw = 2.0;
    mm->add_option("--annotations", mm_ann, "directory of .txt polygon files")->required();
    mm->add_option("--out", mm_out, "output directory")->required();
    mm->add_option("--images", mm_images, "directory of matching images (for sizes)");
    mm->add_option("--width", mm_w, "mask width when no --images");
    mm->add_option("--height", mm_h, "mask height when no --images");
    mm->add_option("--boundary-width", mm_bw, "boundary band width in pixels")->capture_default_str();

    // augment-preview
    auto* ap = app.add_subcommand("augment-preview", "write before/after augmentation PNG pairs");
    std::string ap_image, ap_mask, ap_out;
    std::uint64_t ap_seed = 0;
    int ap_count = 4;
    ap->add_option("--image", ap_image, "input patch PNG")->required();
    ap->add_option("--mask", ap_mask, "ternary mask PNG")->required();
    ap->add_option("--seed", ap_seed, "base seed")->capture_default_str();
    ap->add_option("--out", ap_out, "output directory")->required();
    ap->add_option("--count", ap_count, "number of augmented pairs")->capture_default_str();

    // train
    auto* tr = app.add_subcommand("train", "train the nucleus-boundary network");
    std::string tr_images, tr_masks, tr_out, tr_val_images, tr_val_masks, tr_csv;
    bool no_elastic = false, no_rotate = false, no_flip = false, no_shift = false,
         no_rescale = false;
    int tr_epochs = -1, tr_base = -1, tr_ppe = -1;
    std::int64_t tr_seed = -1;
    tr->add_option("--config", config_path, "key=value config file");
    tr->add_option("--images", tr_images, "training image directory")->required();
    tr->add_option("--masks", tr_masks, "ternary mask directory")->required();
    tr->add_option("--out", tr_out, "output checkpoint path")->required();
    tr->add_option("--val-images", tr_val_images, "validation image directory");
    tr->add_option("--val-masks", tr_val_masks, "validation mask directory");
    tr->add_option("--loss-csv", tr_csv, "per-epoch loss CSV path (default <out>.loss.csv)");
    tr->add_option("--epochs", tr_epochs, "override epochs");
    tr->add_option("--base-channels", tr_base, "override base channel count");
    tr->add_option("--patches-per-epoch", tr_ppe, "override patches per epoch");
    tr->add_option("--seed", tr_seed, "override global seed");
    tr->add_flag("--no-elastic", no_elastic, "disable elastic deformation");
    tr->add_flag("--no-rotate", no_rotate, "disable rotation");
    tr->add_flag("--no-flip", no_flip, "disable flips");
    tr->add_flag("--no-shift", no_shift, "disable shifts");
    tr->add_flag("--no-rescale", no_rescale, "disable rescaling");

    // predict
    auto* pr = app.add_subcommand("predict", "tiled inference + post-processing on a directory");
    std::string pr_ckpt, pr_in, pr_out;
    int pr_stride = 64, pr_jobs = 1;
    pr->add_option("--config", config_path, "key=value config file");
    pr->add_option("--ckpt", pr_ckpt, "checkpoint path")->required();
    pr->add_option("--in", pr_in, "input image directory")->required();
    pr->add_option("--out", pr_out, "output directory")->required();
    pr->add_option("--stride", pr_stride, "patch stride")->capture_default_str();
    pr->add_option("--jobs", pr_jobs, "inference worker threads")->capture_default_str();

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "object/pixel metrics of predictions vs ground truth");
    std::string ev_gt, ev_pred, ev_report;
    double ev_thresh = 0.2;
    ev->add_option("--gt", ev_gt, "ground-truth label map directory")->required();
    ev->add_option("--pred", ev_pred, "predicted label map directory")->required();
    ev->add_option("--report", ev_report, "key=value report file");
    ev->add_option("--match-threshold", ev_thresh, "Dice acceptance threshold")->capture_default_str();

    // synth
    auto* sy = app.add_subcommand("synth", "generate synthetic nuclei fixtures");
    std::string sy_out;
    int sy_w = 256, sy_h = 256, sy_count = 30, sy_images = 1;
    std::uint64_t sy_seed = 1;
    sy->add_option("--out", sy_out, "output directory")->required();
    sy->add_option("--width", sy_w, "image width")->capture_default_str();
    sy->add_option("--height", sy_h, "image height")->capture_default_str();
    sy->add_option("--count", sy_count, "nuclei per image")->capture_default_str();
    sy->add_option("--images", sy_images, "number of images")->capture_default_str();
    sy->add_option("--seed", sy_seed, "base seed")->capture_default_str();

    auto* st = app.add_subcommand("selftest", "run the built-in oracle suite");
    (void)st;

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (!config_path.empty()) load_config_file(cfg, config_path);
        if (norm->parsed()) return cmd_normalize(n_target, n_in, n_out, n_profile);
        if (mm->parsed()) return cmd_make_masks(mm_ann, mm_out, mm_images, mm_w, mm_h, mm_bw);
        if (ap->parsed())
            return cmd_augment_preview(ap_image, ap_mask, ap_seed, ap_out, ap_count,
                                       cfg.training.augment);
        if (tr->parsed()) {
            if (tr_epochs > 0) cfg.training.epochs = tr_epochs;
            if (tr_base > 0) cfg.network.base_channels = tr_base;
            if (tr_ppe > 0) cfg.training.patches_per_epoch = tr_ppe;
            if (tr_seed >= 0) cfg.set_seed(static_cast<std::uint64_t>(tr_seed));
            if (no_elastic) cfg.training.augment.enable_elastic = false;
            if (no_rotate) cfg.training.augment.enable_rotate = false;
            if (no_flip) cfg.training.augment.enable_flip = false;
            if (no_shift) cfg.training.augment.enable_shift = false;
            if (no_rescale) cfg.training.augment.enable_rescale = false;
            if (tr_val_images.empty() != tr_val_masks.empty())
                throw std::runtime_error("--val-images and --val-masks go together");
            return cmd_train(cfg, tr_images, tr_masks, tr_out, tr_val_images, tr_val_masks, tr_csv);
        }
        if (pr->parsed()) {
            if (pr->count("--stride") == 0) pr_stride = cfg.stride;
            return cmd_predict(pr_ckpt, pr_in, pr_out, pr_stride, pr_jobs, cfg.postproc);
        }
        if (ev->parsed()) return cmd_evaluate(ev_gt, ev_pred, ev_report, ev_thresh);
        if (sy->parsed())
            return cmd_synth(sy_out, sy_w, sy_h, sy_count, sy_images, sy_seed, cfg.boundary_width);
        if (st->parsed()) return cmd_selftest();
    } catch (const std::exception& e) {
        std::cerr << "nbseg: error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace nbseg::cli
