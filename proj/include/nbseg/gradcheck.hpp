#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "nbseg/tensor.hpp"

namespace nbseg {

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::size_t worst_param = 0;   // index into the checked parameter list
    std::size_t worst_elem = 0;    // flat element index within that parameter
    double analytic = 0.0;
    double numeric = 0.0;
    std::string str() const {
        return "max_rel_err=" + std::to_string(max_rel_err) + " at param " +
               std::to_string(worst_param) + "[" + std::to_string(worst_elem) +
               "] analytic=" + std::to_string(analytic) + " numeric=" + std::to_string(numeric);
    }
};

// Central-difference check of d(loss)/d(param) against tape gradients.
// `loss_fn` must rebuild the graph from current parameter values and return
// the scalar loss; `analytic_grads` are the tape gradients captured once at
// the unperturbed point. Per-element errors are normalized by the parameter's
// gradient scale, max(||a||_inf, ||n||_inf, 1e-8): tiny elements of an
// otherwise healthy gradient sit below the finite-difference noise floor, so
// measuring them against their own magnitude would only compare noise.
template <class T>
GradCheckResult finite_diff_check(const std::vector<TensorPtr<T>>& params,
                                  const std::vector<std::vector<double>>& analytic_grads,
                                  const std::function<double()>& loss_fn, double h,
                                  std::size_t max_elems_per_param = SIZE_MAX) {
    GradCheckResult r;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor<T>& p = *params[pi];
        const std::size_t n = std::min<std::size_t>(p.numel(), max_elems_per_param);
        const std::size_t stride = p.numel() <= max_elems_per_param
                                       ? 1
                                       : std::max<std::size_t>(1, p.numel() / max_elems_per_param);
        std::vector<std::size_t> elems;
        std::vector<double> numeric;
        double scale = 1e-8;
        std::size_t checked = 0;
        for (std::size_t j = 0; j < p.numel() && checked < n; j += stride, ++checked) {
            const T saved = p.data[j];
            p.data[j] = static_cast<T>(static_cast<double>(saved) + h);
            const double lp = loss_fn();
            p.data[j] = static_cast<T>(static_cast<double>(saved) - h);
            const double lm = loss_fn();
            p.data[j] = saved;
            elems.push_back(j);
            numeric.push_back((lp - lm) / (2.0 * h));
            scale = std::max({scale, std::abs(numeric.back()), std::abs(analytic_grads[pi][j])});
        }
        for (std::size_t k = 0; k < elems.size(); ++k) {
            const double analytic = analytic_grads[pi][elems[k]];
            const double rel = std::abs(analytic - numeric[k]) / scale;
            if (rel > r.max_rel_err) {
                r.max_rel_err = rel;
                r.worst_param = pi;
                r.worst_elem = elems[k];
                r.analytic = analytic;
                r.numeric = numeric[k];
            }
        }
    }
    return r;
}

// Snapshot current tape gradients as doubles for use with finite_diff_check.
template <class T>
std::vector<std::vector<double>> snapshot_grads(const std::vector<TensorPtr<T>>& params) {
    std::vector<std::vector<double>> out(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        out[i].assign(params[i]->numel(), 0.0);
        if (params[i]->grad.size() == params[i]->numel())
            for (std::size_t j = 0; j < params[i]->numel(); ++j)
                out[i][j] = static_cast<double>(params[i]->grad[j]);
    }
    return out;
}

}  // namespace nbseg
