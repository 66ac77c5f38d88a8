#include <doctest.h>

#include "fast/adam.hpp"
#include "fast/rng.hpp"

using namespace fast;

TEST_CASE("zero gradient leaves parameters unchanged") {
    Tensor p({2, 2}, {1, -2, 3, -4});
    std::vector<const Tensor*> reg = {&p};
    AdamState state(reg, {.lr = 0.1});
    Tensor g({2, 2});
    std::vector<Tensor*> params = {&p};
    std::vector<const Tensor*> grads = {&g};
    state.step(params, grads);
    CHECK(p == Tensor({2, 2}, {1, -2, 3, -4}));
}

TEST_CASE("single scalar first step moves by about lr") {
    Tensor p = Tensor::scalar(1.0);
    std::vector<const Tensor*> reg = {&p};
    AdamState state(reg, {.lr = 0.1});
    Tensor g = Tensor::scalar(1.0);
    std::vector<Tensor*> params = {&p};
    std::vector<const Tensor*> grads = {&g};
    state.step(params, grads);
    // mhat = 1, vhat = 1 after bias correction: update = lr / (1 + eps).
    CHECK(p.item() == doctest::Approx(1.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("same seed gives bitwise-identical trajectories") {
    auto run = [] {
        Rng rng(42);
        Tensor p = Tensor::randn({4, 4}, rng, 1.0);
        std::vector<const Tensor*> reg = {&p};
        AdamState state(reg, {.lr = 0.01});
        std::vector<Tensor*> params = {&p};
        for (int step = 0; step < 25; ++step) {
            Tensor g = Tensor::randn({4, 4}, rng, 1.0);
            std::vector<const Tensor*> grads = {&g};
            state.step(params, grads);
        }
        return p;
    };
    CHECK(run() == run());
}

TEST_CASE("shape mismatch is a dimension error") {
    Tensor p({2, 2});
    std::vector<const Tensor*> reg = {&p};
    AdamState state(reg, {});
    Tensor g({2, 3});
    std::vector<Tensor*> params = {&p};
    std::vector<const Tensor*> grads = {&g};
    CHECK_THROWS_AS(state.step(params, grads), ShapeError);
}

TEST_CASE("moments track the registered shapes and step counts") {
    Tensor a({3});
    Tensor b({2, 2});
    std::vector<const Tensor*> reg = {&a, &b};
    AdamState state(reg, {});
    CHECK(state.step_count() == 0);
    CHECK(state.first_moment(0).same_shape(a));
    CHECK(state.second_moment(1).same_shape(b));
    Tensor ga({3}, {1, 1, 1});
    Tensor gb({2, 2});
    std::vector<Tensor*> params = {&a, &b};
    std::vector<const Tensor*> grads = {&ga, &gb};
    state.step(params, grads);
    CHECK(state.step_count() == 1);
}
