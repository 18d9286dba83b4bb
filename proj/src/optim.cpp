#include "sdabn/optim.hpp"

#include <cmath>

#include "sdabn/errors.hpp"

namespace sdabn {

namespace {

const std::vector<double>& require_grad_of(const std::pair<std::string, Tensor>& entry) {
    if (!entry.second.has_grad()) {
        throw UsageError("optimizer step: parameter '" + entry.first + "' has no gradient");
    }
    return entry.second.grad();
}

}  // namespace

SgdOptimizer::SgdOptimizer(ParamList params, double lr, double momentum)
    : params_(std::move(params)), lr_(lr), momentum_(momentum) {
    velocity_.reserve(params_.size());
    for (const auto& [name, t] : params_) {
        velocity_.emplace_back(static_cast<std::size_t>(t.numel()), 0.0);
    }
}

void SgdOptimizer::step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const std::vector<double>& g = require_grad_of(params_[i]);
        std::vector<double>& v = velocity_[i];
        double* p = params_[i].second.data();
        for (std::size_t k = 0; k < g.size(); ++k) {
            v[k] = momentum_ * v[k] + g[k];
            p[k] -= lr_ * v[k];
        }
        params_[i].second.zero_grad();
    }
}

AdamOptimizer::AdamOptimizer(ParamList params, double lr, double beta1, double beta2, double epsilon)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& [name, t] : params_) {
        m_.emplace_back(static_cast<std::size_t>(t.numel()), 0.0);
        v_.emplace_back(static_cast<std::size_t>(t.numel()), 0.0);
    }
}

void AdamOptimizer::step() {
    ++step_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const std::vector<double>& g = require_grad_of(params_[i]);
        std::vector<double>& m = m_[i];
        std::vector<double>& v = v_[i];
        double* p = params_[i].second.data();
        for (std::size_t k = 0; k < g.size(); ++k) {
            m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
            v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            p[k] -= lr_ * mhat / (std::sqrt(vhat) + epsilon_);
        }
        params_[i].second.zero_grad();
    }
}

void zero_all_grads(ParamList& params) {
    for (auto& [name, t] : params) t.zero_grad();
}

}  // namespace sdabn
