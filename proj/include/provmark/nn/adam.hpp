#pragma once

#include <cmath>
#include <map>

#include "provmark/nn/module.hpp"

namespace provmark::nn {

// Adam optimizer over a fixed parameter set. Moment buffers are keyed by
// parameter name so they survive checkpoint round-trips.
template <typename T>
class Adam {
public:
    Adam() = default;
    Adam(ParamRefs<T> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8)
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (auto* p : params_) {
            m_[p->name] = Tensor<T>(p->value.shape());
            v_[p->name] = Tensor<T>(p->value.shape());
        }
    }

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }
    int64_t step_count() const { return t_; }

    void step() {
        ++t_;
        double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (auto* p : params_) {
            Tensor<T>& m = m_[p->name];
            Tensor<T>& v = v_[p->name];
            for (int64_t i = 0; i < p->value.numel(); ++i) {
                double g = p->grad[i];
                double mi = beta1_ * m[i] + (1.0 - beta1_) * g;
                double vi = beta2_ * v[i] + (1.0 - beta2_) * g * g;
                m[i] = static_cast<T>(mi);
                v[i] = static_cast<T>(vi);
                p->value[i] -= static_cast<T>(lr_ * (mi / bc1) /
                                              (std::sqrt(vi / bc2) + eps_));
            }
        }
    }

    // serialization hooks: state lives in flat tensors plus the step counter
    void export_state(std::map<std::string, Tensor<T>>& out, int64_t& step) const {
        for (const auto& [name, t] : m_) out["adam.m." + name] = t;
        for (const auto& [name, t] : v_) out["adam.v." + name] = t;
        step = t_;
    }

    void import_state(const std::map<std::string, Tensor<T>>& in, int64_t step) {
        for (auto& [name, t] : m_) {
            auto it = in.find("adam.m." + name);
            if (it != in.end()) t = it->second;
        }
        for (auto& [name, t] : v_) {
            auto it = in.find("adam.v." + name);
            if (it != in.end()) t = it->second;
        }
        t_ = step;
    }

private:
    ParamRefs<T> params_;
    double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    int64_t t_ = 0;
    std::map<std::string, Tensor<T>> m_, v_;
};

}  // namespace provmark::nn
