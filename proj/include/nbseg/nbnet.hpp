#pragma once

#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "nbseg/adam.hpp"
#include "nbseg/augment.hpp"
#include "nbseg/autodiff.hpp"
#include "nbseg/errors.hpp"
#include "nbseg/image.hpp"
#include "nbseg/tiler.hpp"

namespace nbseg {

enum class ClassScheme { Ternary, BinaryInside, BinaryBoundary };

inline std::string class_scheme_name(ClassScheme s) {
    switch (s) {
        case ClassScheme::Ternary: return "ternary";
        case ClassScheme::BinaryInside: return "binary_inside";
        default: return "binary_boundary";
    }
}

inline ClassScheme class_scheme_from_name(const std::string& s) {
    if (s == "ternary") return ClassScheme::Ternary;
    if (s == "binary_inside") return ClassScheme::BinaryInside;
    if (s == "binary_boundary") return ClassScheme::BinaryBoundary;
    throw std::invalid_argument("unknown class scheme '" + s + "'");
}

struct NetworkConfig {
    int input_size = 128;
    int depth = 4;
    int base_channels = 32;
    double dropout_rate = 0.2;
    ClassScheme class_scheme = ClassScheme::Ternary;
    std::uint64_t seed = 0;

    int num_classes() const { return class_scheme == ClassScheme::Ternary ? 3 : 2; }

    void validate() const {
        if (depth < 1 || depth > 8) throw std::invalid_argument("NetworkConfig: depth out of range");
        if (base_channels < 1) throw std::invalid_argument("NetworkConfig: base_channels must be >= 1");
        if (dropout_rate < 0 || dropout_rate >= 1)
            throw std::invalid_argument("NetworkConfig: dropout_rate must be in [0,1)");
        if (input_size < 1 || input_size % (1 << depth) != 0)
            throw std::invalid_argument("NetworkConfig: input_size " + std::to_string(input_size) +
                                        " not divisible by 2^depth");
    }
};

// Named parameter set plus the config that fixes the topology. Encoder stage
// s runs at base*2^s channels, the bottleneck at base*2^depth, the decoder
// mirrors the encoder with skip concatenation.
template <class T>
struct Model {
    NetworkConfig config;
    std::vector<std::string> names;
    std::vector<TensorPtr<T>> params;

    TensorPtr<T> param(const std::string& name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return params[i];
        throw std::invalid_argument("no parameter named " + name);
    }
    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& p : params) n += p->numel();
        return n;
    }
};

namespace detail {

template <class T>
void add_conv(Model<T>& m, const std::string& name, int k, int cin, int cout, Rng& rng) {
    m.names.push_back(name + "_w");
    m.params.push_back(glorot_uniform_init<T>(k * k * cin, k * k * cout, Shape{k, k, cin, cout}, rng));
    m.names.push_back(name + "_b");
    m.params.push_back(make_tensor<T>(Shape{cout}, /*requires_grad=*/true));  // biases start at 0
}

}  // namespace detail

template <class T>
Model<T> build_network(const NetworkConfig& config, Rng& rng) {
    config.validate();
    Model<T> m;
    m.config = config;
    int cin = 3;
    for (int s = 0; s < config.depth; ++s) {
        const int c = config.base_channels << s;
        detail::add_conv(m, "enc" + std::to_string(s) + "_conv1", 3, cin, c, rng);
        detail::add_conv(m, "enc" + std::to_string(s) + "_conv2", 3, c, c, rng);
        cin = c;
    }
    const int cb = config.base_channels << config.depth;
    detail::add_conv(m, "bot_conv1", 3, cin, cb, rng);
    detail::add_conv(m, "bot_conv2", 3, cb, cb, rng);
    cin = cb;
    for (int s = config.depth - 1; s >= 0; --s) {
        const int c = config.base_channels << s;
        detail::add_conv(m, "dec" + std::to_string(s) + "_up", 2, cin, c, rng);
        detail::add_conv(m, "dec" + std::to_string(s) + "_conv1", 3, 2 * c, c, rng);
        detail::add_conv(m, "dec" + std::to_string(s) + "_conv2", 3, c, c, rng);
        cin = c;
    }
    detail::add_conv(m, "final", 1, cin, config.num_classes(), rng);
    return m;
}

template <class T>
Model<T> build_network(const NetworkConfig& config) {
    Rng rng(config.seed);
    return build_network<T>(config, rng);
}

// Fully convolutional: any spatial extent divisible by 2^depth is accepted.
// Returns per-pixel class probabilities (softmax over channels).
template <class T>
TensorPtr<T> forward(const Model<T>& model, Tape<T>* tape, const TensorPtr<T>& x, bool training,
                     Rng& rng) {
    const NetworkConfig& cfg = model.config;
    if (x->shape.rank != 4 || x->shape[3] != 3)
        throw std::invalid_argument("forward: want [B,H,W,3] input");
    if (x->shape[1] % (1 << cfg.depth) != 0 || x->shape[2] % (1 << cfg.depth) != 0)
        throw std::invalid_argument("forward: spatial extents " + x->shape.str() +
                                    " not divisible by 2^depth");
    const double rate = cfg.dropout_rate;
    auto block = [&](TensorPtr<T> t, const std::string& name) {
        t = conv2d_same<T>(tape, t, model.param(name + "_w"), model.param(name + "_b"));
        t = selu<T>(tape, t);
        return dropout<T>(tape, t, rate, rng, training);
    };

    TensorPtr<T> h = x;
    std::vector<TensorPtr<T>> skips;
    for (int s = 0; s < cfg.depth; ++s) {
        h = block(h, "enc" + std::to_string(s) + "_conv1");
        h = block(h, "enc" + std::to_string(s) + "_conv2");
        skips.push_back(h);
        h = max_pool2<T>(tape, h);
    }
    h = block(h, "bot_conv1");
    h = block(h, "bot_conv2");
    for (int s = cfg.depth - 1; s >= 0; --s) {
        const std::string d = "dec" + std::to_string(s);
        h = transposed_conv2<T>(tape, h, model.param(d + "_up_w"), model.param(d + "_up_b"));
        h = selu<T>(tape, h);
        h = dropout<T>(tape, h, rate, rng, training);
        h = concat_channels<T>(tape, skips[s], h);
        h = block(h, d + "_conv1");
        h = block(h, d + "_conv2");
    }
    h = conv2d_same<T>(tape, h, model.param("final_w"), model.param("final_b"));
    return softmax_channels<T>(tape, h);
}

// ---- data plumbing ----

struct Dataset {
    std::vector<Image> images;       // RGB in [0,1]
    std::vector<TernaryMask> masks;  // congruent ternary targets
};

template <class T>
int target_channel(ClassScheme scheme, std::uint8_t cls) {
    switch (scheme) {
        case ClassScheme::Ternary: return cls;
        case ClassScheme::BinaryInside:
            return cls == static_cast<std::uint8_t>(TernaryClass::Inside) ? 1 : 0;
        default:
            return cls == static_cast<std::uint8_t>(TernaryClass::Boundary) ? 1 : 0;
    }
}

template <class T>
TensorPtr<T> images_to_tensor(const std::vector<Image>& batch) {
    if (batch.empty()) throw std::invalid_argument("images_to_tensor: empty batch");
    const int h = batch[0].height, w = batch[0].width, c = batch[0].channels;
    auto t = make_tensor<T>(Shape{static_cast<int>(batch.size()), h, w, c});
    std::size_t off = 0;
    for (const Image& img : batch) {
        if (img.height != h || img.width != w || img.channels != c)
            throw std::invalid_argument("images_to_tensor: mixed shapes in batch");
        for (std::size_t i = 0; i < img.numel(); ++i) t->data[off + i] = static_cast<T>(img.data[i]);
        off += img.numel();
    }
    return t;
}

template <class T>
TensorPtr<T> masks_to_target(const std::vector<TernaryMask>& batch, ClassScheme scheme) {
    if (batch.empty()) throw std::invalid_argument("masks_to_target: empty batch");
    const int h = batch[0].height, w = batch[0].width;
    const int classes = scheme == ClassScheme::Ternary ? 3 : 2;
    auto t = make_tensor<T>(Shape{static_cast<int>(batch.size()), h, w, classes});
    for (std::size_t b = 0; b < batch.size(); ++b)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const int ch = target_channel<T>(scheme, batch[b].at(y, x));
                t->data[((b * h + y) * w + x) * classes + ch] = T(1);
            }
    return t;
}

inline Image tensor_to_image(const Tensor<float>& t, int batch_index = 0) {
    if (t.shape.rank != 4) throw std::invalid_argument("tensor_to_image: want rank 4");
    Image out(t.shape[2], t.shape[1], t.shape[3]);
    const std::size_t per = out.numel();
    std::copy_n(t.data.begin() + static_cast<std::size_t>(batch_index) * per, per, out.data.begin());
    return out;
}

// ---- training ----

struct TrainConfig {
    int epochs = 1;
    int batch_size = 8;
    int patches_per_epoch = 256;
    AugmentParams augment;
    AdamConfig adam;
    std::uint64_t seed = 0;

    bool any_augment() const {
        return augment.enable_rescale || augment.enable_rotate || augment.enable_flip ||
               augment.enable_shift || augment.enable_elastic;
    }
};

struct EpochStats {
    double train_loss = 0.0;       // mean weighted CE over the epoch's steps
    double train_eval_loss = 0.0;  // clean-pass loss on the training images
    double val_loss = 0.0;         // clean-pass loss on held-out images (0 if none)
};

namespace detail {

// Deterministic full-coverage patch origins for loss evaluation: multiples of
// the patch size with a clamped final origin.
inline std::vector<std::pair<int, int>> eval_origins(int h, int w, int ps) {
    std::vector<int> ys, xs;
    for (int y = 0; y + ps <= h; y += ps) ys.push_back(y);
    if (ys.empty() || ys.back() + ps < h) ys.push_back(std::max(0, h - ps));
    for (int x = 0; x + ps <= w; x += ps) xs.push_back(x);
    if (xs.empty() || xs.back() + ps < w) xs.push_back(std::max(0, w - ps));
    std::vector<std::pair<int, int>> out;
    for (int y : ys)
        for (int x : xs) out.emplace_back(y, x);
    return out;
}

inline Image crop_image(const Image& img, int oy, int ox, int size) {
    Image out(size, size, img.channels);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(oy + y, ox + x, c);
    return out;
}

inline TernaryMask crop_mask(const TernaryMask& m, int oy, int ox, int size) {
    TernaryMask out(size, size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) out.at(y, x) = m.at(oy + y, ox + x);
    return out;
}

template <class T>
double eval_loss(const Model<T>& model, const Dataset& data, const TensorPtr<T>& wmap) {
    const int ps = model.config.input_size;
    Rng dead(0);  // dropout is off outside training; never drawn from
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < data.images.size(); ++i) {
        for (auto [oy, ox] : eval_origins(data.images[i].height, data.images[i].width, ps)) {
            auto x = images_to_tensor<T>({crop_image(data.images[i], oy, ox, ps)});
            auto t = masks_to_target<T>({crop_mask(data.masks[i], oy, ox, ps)},
                                        model.config.class_scheme);
            auto probs = forward<T>(model, nullptr, x, /*training=*/false, dead);
            auto loss = weighted_cross_entropy<T>(nullptr, probs, t, wmap);
            total += static_cast<double>(loss->data[0]);
            ++n;
        }
    }
    return n ? total / static_cast<double>(n) : 0.0;
}

}  // namespace detail

// Adam on the weighted cross-entropy over randomly sampled (and optionally
// augmented) patches. Deterministic for a given seed: sampling, augmentation,
// and dropout each consume their own derived stream, with augmentation keyed
// by global sample ordinal so worker scheduling cannot reorder it.
template <class T>
std::vector<EpochStats> train(Model<T>& model, const Dataset& data, const TrainConfig& tc,
                              const Dataset* val = nullptr) {
    if (data.images.empty()) throw InvalidStateError("train: empty dataset");
    if (data.images.size() != data.masks.size())
        throw std::invalid_argument("train: image/mask count mismatch");
    if (tc.epochs < 1 || tc.batch_size < 1 || tc.patches_per_epoch < 1)
        throw std::invalid_argument("train: epochs, batch_size, patches_per_epoch must be >= 1");
    for (std::size_t i = 0; i < data.images.size(); ++i)
        if (data.images[i].width != data.masks[i].width ||
            data.images[i].height != data.masks[i].height)
            throw std::invalid_argument("train: image/mask size mismatch at " + std::to_string(i));

    const int ps = model.config.input_size;
    const WeightMap wm = loss_weight_map(ps, ps);
    auto wmap = make_tensor<T>(Shape{ps, ps});
    for (std::size_t i = 0; i < wm.weights.size(); ++i) wmap->data[i] = static_cast<T>(wm.weights[i]);

    Adam<T> opt(model.params, tc.adam);
    Rng sample_rng = Rng::derive(tc.seed, 1);
    Rng dropout_rng = Rng::derive(tc.seed, 2);
    const int steps = std::max(1, tc.patches_per_epoch / tc.batch_size);
    std::uint64_t sample_ordinal = 0;

    std::vector<EpochStats> history;
    history.reserve(tc.epochs);
    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        double epoch_loss = 0.0;
        for (int step = 0; step < steps; ++step) {
            const auto picks =
                sample_training_patches(data.images, tc.batch_size, ps, sample_rng);
            std::vector<Image> xs;
            std::vector<TernaryMask> ts;
            xs.reserve(picks.size());
            ts.reserve(picks.size());
            for (const auto& p : picks) {
                Image patch = detail::crop_image(data.images[p.image_index], p.oy, p.ox, ps);
                TernaryMask target = detail::crop_mask(data.masks[p.image_index], p.oy, p.ox, ps);
                if (tc.any_augment()) {
                    Rng arng = Rng::derive(tc.seed, 0x100000 + sample_ordinal);
                    auto [ai, at] = random_augment(patch, target, tc.augment, arng);
                    patch = std::move(ai);
                    target = std::move(at);
                }
                ++sample_ordinal;
                xs.push_back(std::move(patch));
                ts.push_back(std::move(target));
            }
            auto x = images_to_tensor<T>(xs);
            auto t = masks_to_target<T>(ts, model.config.class_scheme);
            Tape<T> tape;
            opt.zero_grad();
            auto probs = forward<T>(model, &tape, x, /*training=*/true, dropout_rng);
            auto loss = weighted_cross_entropy<T>(&tape, probs, t, wmap);
            tape.backward(*loss);
            opt.step();
            epoch_loss += static_cast<double>(loss->data[0]);
        }
        EpochStats st;
        st.train_loss = epoch_loss / steps;
        st.train_eval_loss = detail::eval_loss(model, data, wmap);
        st.val_loss = val ? detail::eval_loss(model, *val, wmap) : 0.0;
        history.push_back(st);
    }
    return history;
}

// ---- checkpoints ----
// Little-endian binary: magic "NBCK", u32 version=1, u32 config length,
// config key=value lines, u32 tensor count, then per tensor: u16 name length,
// name bytes, u8 rank, u32 extents, raw float32 data row-major.

namespace detail {

template <class V>
void put_raw(std::string& out, V v) {
    char buf[sizeof(V)];
    std::memcpy(buf, &v, sizeof(V));
    out.append(buf, sizeof(V));  // x86-class hosts are little-endian
}

struct Cursor {
    const std::string& buf;
    std::size_t off = 0;

    void need(std::size_t n, const char* what) const {
        if (off + n > buf.size())
            throw CorruptCheckpointError(std::string("unexpected end of file reading ") + what, off);
    }
    template <class V>
    V take(const char* what) {
        need(sizeof(V), what);
        V v;
        std::memcpy(&v, buf.data() + off, sizeof(V));
        off += sizeof(V);
        return v;
    }
    std::string take_bytes(std::size_t n, const char* what) {
        need(n, what);
        std::string s = buf.substr(off, n);
        off += n;
        return s;
    }
};

}  // namespace detail

template <class T>
void save_checkpoint(const Model<T>& model, const std::string& path) {
    std::string out;
    out.append("NBCK");
    detail::put_raw<std::uint32_t>(out, 1);

    std::ostringstream cfg;
    cfg << "input_size=" << model.config.input_size << "\n"
        << "depth=" << model.config.depth << "\n"
        << "base_channels=" << model.config.base_channels << "\n"
        << "dropout_rate=" << model.config.dropout_rate << "\n"
        << "class_scheme=" << class_scheme_name(model.config.class_scheme) << "\n"
        << "seed=" << model.config.seed << "\n";
    const std::string cfgs = cfg.str();
    detail::put_raw<std::uint32_t>(out, static_cast<std::uint32_t>(cfgs.size()));
    out.append(cfgs);

    detail::put_raw<std::uint32_t>(out, static_cast<std::uint32_t>(model.params.size()));
    for (std::size_t i = 0; i < model.params.size(); ++i) {
        const std::string& name = model.names[i];
        const Tensor<T>& t = *model.params[i];
        detail::put_raw<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
        out.append(name);
        detail::put_raw<std::uint8_t>(out, static_cast<std::uint8_t>(t.shape.rank));
        for (int d = 0; d < t.shape.rank; ++d)
            detail::put_raw<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape[d]));
        for (std::size_t j = 0; j < t.numel(); ++j)
            detail::put_raw<float>(out, static_cast<float>(t.data[j]));
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("short write to " + path);
}

inline Model<float> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    const std::string buf = ss.str();
    detail::Cursor cur{buf};

    if (cur.take_bytes(4, "magic") != "NBCK")
        throw CorruptCheckpointError("bad magic (not an NBCK checkpoint)", 0);
    const auto version = cur.take<std::uint32_t>("version");
    if (version != 1)
        throw CorruptCheckpointError("unsupported version " + std::to_string(version), 4);

    const std::size_t cfg_off = cur.off;
    const auto cfg_len = cur.take<std::uint32_t>("config length");
    const std::string cfgs = cur.take_bytes(cfg_len, "config block");
    NetworkConfig config;
    try {
        std::istringstream cs(cfgs);
        std::string line;
        while (std::getline(cs, line)) {
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw std::invalid_argument("missing '=' in " + line);
            const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
            if (key == "input_size") config.input_size = std::stoi(val);
            else if (key == "depth") config.depth = std::stoi(val);
            else if (key == "base_channels") config.base_channels = std::stoi(val);
            else if (key == "dropout_rate") config.dropout_rate = std::stod(val);
            else if (key == "class_scheme") config.class_scheme = class_scheme_from_name(val);
            else if (key == "seed") config.seed = std::stoull(val);
            else throw std::invalid_argument("unknown config key '" + key + "'");
        }
        config.validate();
    } catch (const std::exception& e) {
        throw CorruptCheckpointError(std::string("bad config block: ") + e.what(), cfg_off);
    }

    Model<float> model = build_network<float>(config);
    const std::size_t count_off = cur.off;
    const auto count = cur.take<std::uint32_t>("tensor count");
    if (count != model.params.size())
        throw CorruptCheckpointError("tensor count " + std::to_string(count) + " != expected " +
                                         std::to_string(model.params.size()),
                                     count_off);
    std::vector<bool> seen(model.params.size(), false);
    for (std::uint32_t k = 0; k < count; ++k) {
        const std::size_t rec_off = cur.off;
        const auto name_len = cur.take<std::uint16_t>("name length");
        const std::string name = cur.take_bytes(name_len, "name");
        const auto rank = cur.take<std::uint8_t>("rank");
        if (rank > 4) throw CorruptCheckpointError("rank " + std::to_string(rank) + " > 4", rec_off);
        Shape shape;
        shape.rank = rank;
        for (int d = 0; d < rank; ++d) {
            const auto e = cur.take<std::uint32_t>("extent");
            if (e == 0 || e > (1u << 24)) throw CorruptCheckpointError("bad extent", rec_off);
            shape.dim[d] = static_cast<int>(e);
        }
        std::size_t idx = model.params.size();
        for (std::size_t i = 0; i < model.names.size(); ++i)
            if (model.names[i] == name) idx = i;
        if (idx == model.params.size())
            throw CorruptCheckpointError("unknown tensor '" + name + "'", rec_off);
        if (seen[idx]) throw CorruptCheckpointError("duplicate tensor '" + name + "'", rec_off);
        if (model.params[idx]->shape != shape)
            throw CorruptCheckpointError("tensor '" + name + "' shape " + shape.str() +
                                             " != expected " + model.params[idx]->shape.str(),
                                         rec_off);
        seen[idx] = true;
        Tensor<float>& t = *model.params[idx];
        cur.need(t.numel() * sizeof(float), "tensor data");
        std::memcpy(t.data.data(), buf.data() + cur.off, t.numel() * sizeof(float));
        cur.off += t.numel() * sizeof(float);
    }
    if (cur.off != buf.size())
        throw CorruptCheckpointError("trailing bytes after last tensor", cur.off);
    return model;
}

// ---- tiled whole-image inference ----

// Reflect-pad, predict every patch (in fixed origin order), and reassemble
// with the weight-map vote. `jobs` > 1 runs patch inference on worker
// threads; accumulation order stays fixed so the result is identical.
inline Image predict_image(const Model<float>& model, const Image& img, int stride = 64,
                           int jobs = 1) {
    const int ps = model.config.input_size;
    const PatchGrid grid = plan_patches(img.height, img.width, ps, stride);
    const WeightMap wm = loss_weight_map(ps, ps);
    const Image padded = pad_reflect(img, grid.pad);
    Assembler assembler(grid, wm, model.config.num_classes());

    const std::size_t n = grid.origins.size();
    Rng dead(0);
    if (jobs <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            const auto [oy, ox] = grid.origins[i];
            auto x = images_to_tensor<float>({extract_patch(padded, oy, ox, ps)});
            auto probs = forward<float>(model, nullptr, x, /*training=*/false, dead);
            assembler.add(i, tensor_to_image(*probs));
        }
        return assembler.finish();
    }

    std::vector<Image> preds(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        Rng local_dead(0);
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            const auto [oy, ox] = grid.origins[i];
            auto x = images_to_tensor<float>({extract_patch(padded, oy, ox, ps)});
            auto probs = forward<float>(model, nullptr, x, /*training=*/false, local_dead);
            preds[i] = tensor_to_image(*probs);
        }
    };
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    for (std::size_t i = 0; i < n; ++i) assembler.add(i, preds[i]);
    return assembler.finish();
}

}  // namespace nbseg
