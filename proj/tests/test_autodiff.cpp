#include <doctest.h>

#include <cmath>

#include "fast/autodiff.hpp"
#include "fast/rng.hpp"
#include "support.hpp"

using namespace fast;
using fast::testing::finite_difference;
using fast::testing::max_rel_err;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, scale);
    return t;
}

Tensor random_prob(std::size_t n, Rng& rng) {
    Tensor t({n});
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        t[i] = 0.05 + rng.uniform01();
        s += t[i];
    }
    for (std::size_t i = 0; i < n; ++i) t[i] /= s;
    return t;
}

// Finite-difference check for a scalar graph built from one or two inputs.
void check_grads(const std::function<double(Tape&, std::vector<NodeId>&)>& build,
                 std::vector<Tensor>& inputs, double tol = 1e-5) {
    Tape tape;
    std::vector<NodeId> ids;
    for (Tensor& t : inputs) ids.push_back(tape.leaf(t, true));
    std::vector<NodeId> leaves = ids;
    const double base = build(tape, ids);
    CHECK(std::isfinite(base));
    NodeId root = ids.back();  // build() appends the root id
    GradMap grads = tape.backward(root);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        auto eval = [&]() {
            Tape t2;
            std::vector<NodeId> ids2;
            for (Tensor& t : inputs) ids2.push_back(t2.leaf(t, false));
            return build(t2, ids2);
        };
        Tensor fd = finite_difference(eval, inputs[i]);
        REQUIRE(grads.find(leaves[i]) != nullptr);
        const Tensor& an = grads.at(leaves[i]);
        CHECK(an.same_shape(fd));
        CHECK(max_rel_err(an, fd) <= tol);
    }
}

} // namespace

TEST_CASE("matmul identity and unit selection") {
    Tape tape;
    NodeId eye = tape.constant(Tensor({2, 2}, {1, 0, 0, 1}));
    NodeId m = tape.constant(Tensor({2, 2}, {1, 2, 3, 4}));
    CHECK(tape.value(tape.matmul(eye, m)) == Tensor({2, 2}, {1, 2, 3, 4}));

    NodeId row = tape.constant(Tensor({1, 2}, {1, 0}));
    NodeId col = tape.constant(Tensor({2, 1}, {2, 5}));
    CHECK(tape.value(tape.matmul(row, col)) == Tensor({1, 1}, {2}));
}

TEST_CASE("matmul rejects mismatched inner dimensions naming both shapes") {
    Tape tape;
    NodeId a = tape.constant(Tensor({2, 3}));
    NodeId b = tape.constant(Tensor({2, 2}));
    CHECK_THROWS_WITH_AS(tape.matmul(a, b), doctest::Contains("[2x3]"), ShapeError);
}

TEST_CASE("matmul gradient of sum matches central finite differences") {
    Rng rng(11);
    std::vector<Tensor> inputs = {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)};
    check_grads(
        [](Tape& t, std::vector<NodeId>& ids) {
            ids.push_back(t.sum(t.matmul(ids[0], ids[1])));
            return t.value(ids.back()).item();
        },
        inputs, 1e-6);
}

TEST_CASE("softmax basics") {
    Tape tape;
    SUBCASE("symmetry") {
        NodeId s = tape.softmax_rows(tape.constant(Tensor({3}, {0, 0, 0})));
        for (std::size_t i = 0; i < 3; ++i) CHECK(tape.value(s)[i] == doctest::Approx(1.0 / 3).epsilon(1e-12));
    }
    SUBCASE("stability under large logits") {
        NodeId s = tape.softmax_rows(tape.constant(Tensor({2}, {1000, 0})));
        CHECK(tape.value(s)[0] == doctest::Approx(1.0));
        CHECK(tape.value(s)[1] >= 0.0);
        CHECK(tape.value(s)[1] < 1e-300);
    }
    SUBCASE("direct evaluation") {
        NodeId s = tape.softmax_rows(tape.constant(Tensor({3}, {1, 2, 3})));
        CHECK(tape.value(s)[0] == doctest::Approx(0.09003057).epsilon(1e-6));
        CHECK(tape.value(s)[1] == doctest::Approx(0.24472847).epsilon(1e-6));
        CHECK(tape.value(s)[2] == doctest::Approx(0.66524096).epsilon(1e-6));
    }
}

TEST_CASE("softmax rows sum to one and stay positive on sane inputs") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        Tape tape;
        Tensor x = random_tensor({4, 7}, rng, 5.0);
        const Tensor& s = tape.value(tape.softmax_rows(tape.constant(x)));
        for (std::size_t r = 0; r < 4; ++r) {
            double sum = 0.0;
            for (std::size_t j = 0; j < 7; ++j) {
                CHECK(s.at(r, j) > 0.0);
                sum += s.at(r, j);
            }
            CHECK(std::abs(sum - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("kl divergence values") {
    Tape tape;
    SUBCASE("identity") {
        Tensor p({4}, {0.4, 0.3, 0.2, 0.1});
        NodeId kl = tape.kl_divergence(tape.constant(p), tape.constant(p));
        CHECK(tape.value(kl).item() <= 1e-12);
        CHECK(tape.value(kl).item() >= -1e-12);
    }
    SUBCASE("closed form with a zero in p") {
        NodeId kl = tape.kl_divergence(tape.constant(Tensor({2}, {1, 0})),
                                       tape.constant(Tensor({2}, {0.5, 0.5})));
        CHECK(tape.value(kl).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    }
    SUBCASE("uniform vs skewed, direct evaluation") {
        Tensor q({4}, {0.4, 0.3, 0.2, 0.1});
        double expected = 0.0;
        for (std::size_t i = 0; i < 4; ++i) expected += 0.25 * std::log(0.25 / q[i]);
        NodeId kl = tape.kl_divergence(tape.constant(Tensor({4}, {0.25, 0.25, 0.25, 0.25})),
                                       tape.constant(q));
        CHECK(tape.value(kl).item() == doctest::Approx(expected).epsilon(1e-12));
    }
    SUBCASE("q floored at 1e-12 rather than erroring") {
        NodeId kl = tape.kl_divergence(tape.constant(Tensor({2}, {0.5, 0.5})),
                                       tape.constant(Tensor({2}, {1.0, 0.0})));
        CHECK(std::isfinite(tape.value(kl).item()));
        CHECK(tape.value(kl).item() > 0.0);
    }
    SUBCASE("rejects non-probability inputs") {
        CHECK_THROWS_AS(tape.kl_divergence(tape.constant(Tensor({2}, {0.9, 0.3})),
                                           tape.constant(Tensor({2}, {0.5, 0.5}))),
                        UsageError);
    }
}

TEST_CASE("kl nonnegativity property over random probability vectors") {
    Rng rng(21);
    for (int trial = 0; trial < 50; ++trial) {
        Tape tape;
        Tensor p = random_prob(6, rng);
        Tensor q = random_prob(6, rng);
        CHECK(tape.value(tape.kl_divergence(tape.constant(p), tape.constant(q))).item() >= -1e-12);
        CHECK(tape.value(tape.kl_divergence(tape.constant(p), tape.constant(p))).item() <= 1e-12);
    }
}

TEST_CASE("backward basics") {
    SUBCASE("identity function") {
        Tape tape;
        NodeId x = tape.leaf(Tensor::scalar(3.0), true);
        GradMap g = tape.backward(x);
        CHECK(g.at(x).item() == 1.0);
    }
    SUBCASE("softmax entry at symmetric point has the analytic Jacobian row") {
        Tape tape;
        NodeId x = tape.leaf(Tensor({2}, {0, 0}), true);
        NodeId s = tape.softmax_rows(x);
        NodeId p0 = tape.pick(s, 0);
        GradMap g = tape.backward(p0);
        CHECK(g.at(x)[0] == doctest::Approx(0.25).epsilon(1e-12));
        CHECK(g.at(x)[1] == doctest::Approx(-0.25).epsilon(1e-12));
    }
    SUBCASE("non-scalar root is a usage error") {
        Tape tape;
        NodeId x = tape.leaf(Tensor({2}, {1, 2}), true);
        CHECK_THROWS_AS(tape.backward(x), UsageError);
    }
    SUBCASE("frozen leaves get no gradient entry") {
        Tape tape;
        NodeId a = tape.leaf(Tensor::scalar(2.0), true);
        NodeId b = tape.leaf(Tensor::scalar(5.0), false);
        NodeId root = tape.sum(tape.add(a, b));
        GradMap g = tape.backward(root);
        CHECK(g.find(a) != nullptr);
        CHECK(g.find(b) == nullptr);
    }
}

TEST_CASE("gradient correctness for every differentiable op") {
    Rng rng(1234);

    SUBCASE("add/sub/scale/abs chain") {
        std::vector<Tensor> inputs = {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)};
        check_grads(
            [](Tape& t, std::vector<NodeId>& ids) {
                NodeId d = t.sub(ids[0], ids[1]);
                NodeId s = t.add(t.scale(ids[0], 0.7), d);
                ids.push_back(t.sum(t.abs(s)));
                return t.value(ids.back()).item();
            },
            inputs);
    }
    SUBCASE("matmul_nt") {
        std::vector<Tensor> inputs = {random_tensor({3, 5}, rng), random_tensor({4, 5}, rng)};
        check_grads(
            [](Tape& t, std::vector<NodeId>& ids) {
                ids.push_back(t.sum(t.abs(t.matmul_nt(ids[0], ids[1]))));
                return t.value(ids.back()).item();
            },
            inputs);
    }
    SUBCASE("relu") {
        std::vector<Tensor> inputs = {random_tensor({4, 4}, rng)};
        check_grads(
            [](Tape& t, std::vector<NodeId>& ids) {
                ids.push_back(t.sum(t.relu(ids[0])));
                return t.value(ids.back()).item();
            },
            inputs);
    }
    SUBCASE("gelu") {
        std::vector<Tensor> inputs = {random_tensor({4, 4}, rng)};
        check_grads(
            [](Tape& t, std::vector<NodeId>& ids) {
                ids.push_back(t.sum(t.gelu(ids[0])));
                return t.value(ids.back()).item();
            },
            inputs);
    }
    SUBCASE("softmax_rows") {
        std::vector<Tensor> inputs = {random_tensor({3, 5}, rng)};
        check_grads(
            [](Tape& t, std::vector<NodeId>& ids) {
                NodeId s = t.softmax_rows(ids[0]);
                ids.push_back(t.pick(s, 7));
                return t.value(ids.back()).item();
            },
            inputs);
    }
    SUBCASE("log_softmax_rows with nll") {
        std::vector<Tensor> inputs = {random_tensor({3, 5}, rng)};
        check_grads(
            [](Tape& t, std::vector<NodeId>& ids) {
                NodeId ls = t.log_softmax_rows(ids[0]);
                ids.push_back(t.nll_rows(ls, {1, 4, 0}));
                return t.value(ids.back()).item();
            },
            inputs);
    }
    SUBCASE("layer_norm") {
        std::vector<Tensor> inputs = {random_tensor({3, 6}, rng), random_tensor({6}, rng),
                                      random_tensor({6}, rng)};
        check_grads(
            [](Tape& t, std::vector<NodeId>& ids) {
                NodeId y = t.layer_norm(ids[0], ids[1], ids[2]);
                ids.push_back(t.sum(t.abs(y)));
                return t.value(ids.back()).item();
            },
            inputs);
    }
    SUBCASE("gather_rows and slice_cols and concat_cols") {
        std::vector<Tensor> inputs = {random_tensor({5, 6}, rng)};
        check_grads(
            [](Tape& t, std::vector<NodeId>& ids) {
                NodeId g = t.gather_rows(ids[0], {4, 1, 1, 0});
                NodeId left = t.slice_cols(g, 0, 3);
                NodeId right = t.slice_cols(g, 3, 3);
                NodeId joined = t.concat_cols({right, left});
                ids.push_back(t.sum(t.abs(joined)));
                return t.value(ids.back()).item();
            },
            inputs);
    }
    SUBCASE("pick and sum") {
        std::vector<Tensor> inputs = {random_tensor({2, 3}, rng)};
        check_grads(
            [](Tape& t, std::vector<NodeId>& ids) {
                ids.push_back(t.add(t.pick(ids[0], 4), t.scale(t.sum(ids[0]), 0.5)));
                return t.value(ids.back()).item();
            },
            inputs);
    }
    SUBCASE("kl_divergence wrt both arguments") {
        // Leaves are logits normalized in-graph, so every perturbed evaluation
        // still feeds the op valid probability vectors.
        std::vector<Tensor> inputs = {random_tensor({5}, rng), random_tensor({5}, rng)};
        check_grads(
            [](Tape& t, std::vector<NodeId>& ids) {
                NodeId pn = t.softmax_rows(ids[0]);
                NodeId qn = t.softmax_rows(ids[1]);
                ids.push_back(t.kl_divergence(pn, qn));
                return t.value(ids.back()).item();
            },
            inputs);
    }
}

TEST_CASE("tape is deterministic and reusable read-only after backward") {
    Rng rng(9);
    Tensor a = random_tensor({3, 3}, rng);
    Tensor b = random_tensor({3, 3}, rng);
    auto run = [&]() {
        Tape tape;
        NodeId x = tape.leaf(a, true);
        NodeId y = tape.leaf(b, true);
        NodeId root = tape.sum(tape.abs(tape.matmul(x, y)));
        GradMap g = tape.backward(root);
        GradMap g2 = tape.backward(root);  // reusable: same result twice
        CHECK(g.at(x) == g2.at(x));
        return std::pair{tape.value(root).item(), g.at(x)};
    };
    auto [v1, g1] = run();
    auto [v2, g2] = run();
    CHECK(v1 == v2);
    CHECK(g1 == g2);
}

TEST_CASE("tape node ids are topological and gradients shape-match values") {
    Rng rng(5);
    Tape tape;
    NodeId a = tape.leaf(random_tensor({2, 3}, rng), true);
    NodeId b = tape.leaf(random_tensor({3, 2}, rng), true);
    NodeId c = tape.matmul(a, b);
    NodeId root = tape.sum(c);
    CHECK(a < c);
    CHECK(b < c);
    CHECK(c < root);
    for (NodeId id = 0; id < tape.size(); ++id) {
        for (NodeId in : tape.node(id).inputs) CHECK(in < id);
    }
    GradMap g = tape.backward(root);
    for (NodeId id : {a, b, c, root}) {
        CHECK(g.at(id).same_shape(tape.value(id)));
    }
}
