#pragma once

#include <cstddef>
#include <vector>

#include "fast/tensor.hpp"

namespace fast {

// Adam with standard bias correction. One state instance owns the moment
// pairs for a fixed list of parameter tensors; updates are deterministic
// given the gradient sequence.
class AdamState {
public:
    struct Options {
        double lr = 1e-3;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
    };

    AdamState(const std::vector<const Tensor*>& params, Options opt);

    // params[i] is replaced by the updated tensor. Throws ShapeError if any
    // param/grad shape no longer matches the registered layout.
    void step(std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads);

    std::size_t step_count() const { return step_; }
    const Options& options() const { return opt_; }
    const Tensor& first_moment(std::size_t i) const { return m_[i]; }
    const Tensor& second_moment(std::size_t i) const { return v_[i]; }

private:
    Options opt_;
    std::size_t step_ = 0;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
};

} // namespace fast
