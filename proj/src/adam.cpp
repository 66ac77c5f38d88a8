#include "fast/adam.hpp"

#include <cmath>

namespace fast {

AdamState::AdamState(const std::vector<const Tensor*>& params, Options opt) : opt_(opt) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const Tensor* p : params) {
        m_.emplace_back(Tensor(p->shape()));
        v_.emplace_back(Tensor(p->shape()));
    }
}

void AdamState::step(std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
        throw ShapeError("adam_step: parameter list size changed since state creation");
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = *grads[i];
        if (!p.same_shape(m_[i]) || !g.same_shape(m_[i])) {
            throw ShapeError("adam_step: shape mismatch at parameter " + std::to_string(i) + ": param " +
                             p.shape_string() + ", grad " + g.shape_string() + ", state " +
                             m_[i].shape_string());
        }
        Tensor out(p.shape());
        for (std::size_t j = 0; j < p.numel(); ++j) {
            m_[i][j] = opt_.beta1 * m_[i][j] + (1.0 - opt_.beta1) * g[j];
            v_[i][j] = opt_.beta2 * v_[i][j] + (1.0 - opt_.beta2) * g[j] * g[j];
            const double mhat = m_[i][j] / bc1;
            const double vhat = v_[i][j] / bc2;
            out[j] = p[j] - opt_.lr * mhat / (std::sqrt(vhat) + opt_.eps);
        }
        p = std::move(out);
    }
}

} // namespace fast
