#pragma once

#include <fstream>
#include <map>
#include <stdexcept>
#include <string>

#include "nbseg/nbnet.hpp"
#include "nbseg/postproc.hpp"

namespace nbseg {

// Every knob of the pipeline with its default; config files and CLI flags
// both funnel through set().
struct PipelineConfig {
    NetworkConfig network;
    TrainConfig training;
    PostprocConfig postproc;
    int stride = 64;
    double match_threshold = 0.2;
    double boundary_width = 2.0;

    void set_seed(std::uint64_t s) {
        network.seed = s;
        training.seed = s;
    }

    void set(const std::string& key, const std::string& value) {
        try {
            if (key == "input_size") network.input_size = std::stoi(value);
            else if (key == "depth") network.depth = std::stoi(value);
            else if (key == "base_channels") network.base_channels = std::stoi(value);
            else if (key == "dropout_rate") network.dropout_rate = std::stod(value);
            else if (key == "class_scheme") network.class_scheme = class_scheme_from_name(value);
            else if (key == "seed") set_seed(std::stoull(value));
            else if (key == "epochs") training.epochs = std::stoi(value);
            else if (key == "batch_size") training.batch_size = std::stoi(value);
            else if (key == "patches_per_epoch") training.patches_per_epoch = std::stoi(value);
            else if (key == "learning_rate") training.adam.lr = std::stod(value);
            else if (key == "beta1") training.adam.beta1 = std::stod(value);
            else if (key == "beta2") training.adam.beta2 = std::stod(value);
            else if (key == "epsilon") training.adam.eps = std::stod(value);
            else if (key == "elastic") training.augment.enable_elastic = parse_bool(value);
            else if (key == "rotate") training.augment.enable_rotate = parse_bool(value);
            else if (key == "flip") training.augment.enable_flip = parse_bool(value);
            else if (key == "shift") training.augment.enable_shift = parse_bool(value);
            else if (key == "rescale") training.augment.enable_rescale = parse_bool(value);
            else if (key == "elastic_alpha_min") training.augment.elastic_alpha_min = std::stod(value);
            else if (key == "elastic_alpha_max") training.augment.elastic_alpha_max = std::stod(value);
            else if (key == "elastic_sigma") training.augment.elastic_sigma = std::stod(value);
            else if (key == "rescale_min") training.augment.rescale_min = std::stod(value);
            else if (key == "rescale_max") training.augment.rescale_max = std::stod(value);
            else if (key == "shift_max") training.augment.shift_max = std::stoi(value);
            else if (key == "inside_threshold") postproc.inside_threshold = std::stod(value);
            else if (key == "min_component_area") postproc.min_component_area = std::stoi(value);
            else if (key == "dilation_radius") postproc.dilation_radius = std::stod(value);
            else if (key == "stride") stride = std::stoi(value);
            else if (key == "match_threshold") match_threshold = std::stod(value);
            else if (key == "boundary_width") boundary_width = std::stod(value);
            else throw std::invalid_argument("unknown config key '" + key + "'");
        } catch (const std::invalid_argument& e) {
            if (std::string(e.what()).rfind("unknown config key", 0) == 0 ||
                std::string(e.what()).rfind("unknown class scheme", 0) == 0 ||
                std::string(e.what()).rfind("bad boolean", 0) == 0)
                throw;
            throw std::invalid_argument("bad value '" + value + "' for config key '" + key + "'");
        }
    }

    static bool parse_bool(const std::string& v) {
        if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
        if (v == "0" || v == "false" || v == "off" || v == "no") return false;
        throw std::invalid_argument("bad boolean '" + v + "'");
    }
};

// Line-oriented key=value with '#' comments and blank lines.
inline void load_config_file(PipelineConfig& cfg, const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto l = line.find_first_not_of(" \t\r");
        if (l == std::string::npos) continue;
        auto r = line.find_last_not_of(" \t\r");
        line = line.substr(l, r - l + 1);
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                        ": expected key=value, got '" + line + "'");
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t");
            if (a == std::string::npos) return std::string();
            const auto b = s.find_last_not_of(" \t");
            return s.substr(a, b - a + 1);
        };
        try {
            cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const std::exception& e) {
            throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

}  // namespace nbseg
