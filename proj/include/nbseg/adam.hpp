#pragma once

#include <cmath>
#include <vector>

#include "nbseg/errors.hpp"
#include "nbseg/tensor.hpp"

namespace nbseg {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First/second moment estimates with bias correction. One instance per
// parameter list; step() must see the same parameters in the same order
// every call.
template <class T>
class Adam {
public:
    explicit Adam(std::vector<TensorPtr<T>> params, AdamConfig cfg = {})
        : params_(std::move(params)), cfg_(cfg) {
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i) {
            m_[i].assign(params_[i]->numel(), 0.0);
            v_[i].assign(params_[i]->numel(), 0.0);
        }
    }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
        const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
        for (std::size_t i = 0; i < params_.size(); ++i) {
            Tensor<T>& p = *params_[i];
            if (p.grad.size() != p.numel())
                throw InvalidStateError("Adam::step: parameter " + std::to_string(i) +
                                        " has no gradient");
            for (std::size_t j = 0; j < p.numel(); ++j) {
                const double g = static_cast<double>(p.grad[j]);
                m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * g;
                v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * g * g;
                const double mhat = m_[i][j] / bc1;
                const double vhat = v_[i][j] / bc2;
                p.data[j] -= static_cast<T>(cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
            }
        }
    }

    void zero_grad() {
        for (auto& p : params_) p->zero_grad();
    }

    long long step_count() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

private:
    std::vector<TensorPtr<T>> params_;
    AdamConfig cfg_;
    // Moments kept in double regardless of T: cheap relative to the conv
    // work and keeps long runs stable.
    std::vector<std::vector<double>> m_, v_;
    long long t_ = 0;
};

}  // namespace nbseg
