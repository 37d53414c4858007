#include <doctest.h>

#include <cmath>

#include "support/finite_diff.hpp"
#include "support/references.hpp"
#include "unetsurv/adam.hpp"
#include "unetsurv/graph.hpp"

using namespace unetsurv;
using testsupport::check_gradients;
using testsupport::random_tensor;
using Tensor = ad::Tensor<double>;
using Graph = ad::Graph<double>;

namespace {

constexpr double kFdTol = 1e-4;

// Scalar probe objective: sum(op_out * fixed_weights) so every output element
// influences the root.
int weighted_sum(Graph& g, int node, int weights) { return g.sum(g.mul(node, weights)); }

Tensor away_from_zero(std::vector<int> shape, Rng& rng, double min_abs = 0.05) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) {
        const double mag = rng.uniform(min_abs, 1.0);
        v = rng.bernoulli(0.5) ? mag : -mag;
    }
    return t;
}

}  // namespace

TEST_CASE("conv3d with a centered delta kernel is the identity") {
    Rng rng(1);
    Graph g;
    const int input = g.leaf(random_tensor({1, 4, 4, 2}, rng));
    Tensor kernel = Tensor::zeros({1, 1, 3, 3, 3});
    kernel.data[(1 * 3 + 1) * 3 + 1] = 1.0;  // center tap
    const int w = g.leaf(kernel);
    const int b = g.leaf(Tensor::zeros({1}));
    const int out = g.conv3d(input, w, b);
    CHECK(g.value(out).data == g.value(input).data);
}

TEST_CASE("all-ones kernel on all-ones input sums to 27 in the interior") {
    Graph g;
    const int input = g.leaf(Tensor::full({1, 5, 5, 5}, 1.0));
    const int w = g.leaf(Tensor::full({1, 1, 3, 3, 3}, 1.0));
    const int b = g.leaf(Tensor::zeros({1}));
    const Tensor& out = g.value(g.conv3d(input, w, b));
    // interior voxel (2,2,2)
    CHECK(out.data[(2 * 5 + 2) * 5 + 2] == doctest::Approx(27.0));
    // corner voxel (only the 2x2x2 in-bounds taps contribute)
    CHECK(out.data[0] == doctest::Approx(8.0));
}

TEST_CASE("conv3d forward matches the naive 7-loop reference") {
    Rng rng(2);
    for (int trial = 0; trial < 5; ++trial) {
        const Tensor in = random_tensor({3, 5, 4, 3}, rng);
        const Tensor w = random_tensor({2, 3, 3, 3, 3}, rng);
        const Tensor b = random_tensor({2}, rng);
        const Tensor expected = testsupport::naive_conv3d(in, w, b);

        Graph g;
        const Tensor& got = g.value(g.conv3d(g.leaf(in), g.leaf(w), g.leaf(b)));
        REQUIRE(got.shape == expected.shape);
        for (std::size_t i = 0; i < got.data.size(); ++i)
            CHECK(got.data[i] == doctest::Approx(expected.data[i]).epsilon(1e-10));
    }
}

TEST_CASE("conv3d gradients match finite differences for input, weight and bias") {
    Rng rng(3);
    const Tensor in = random_tensor({2, 4, 4, 2}, rng);
    const Tensor w = random_tensor({2, 2, 3, 3, 3}, rng);
    const Tensor b = random_tensor({2}, rng);
    const Tensor probe = random_tensor({2, 4, 4, 2}, rng);

    const auto build = [](Graph& g, const std::vector<int>& leaves) {
        return weighted_sum(g, g.conv3d(leaves[0], leaves[1], leaves[2]), leaves[3]);
    };
    const auto report = check_gradients({in, w, b, probe}, {0, 1, 2}, build, 120, rng);
    CHECK(report.max_rel_err < kFdTol);
}

TEST_CASE("conv3d rejects channel mismatches") {
    Rng rng(4);
    Graph g;
    const int input = g.leaf(random_tensor({2, 4, 4, 2}, rng));
    const int w = g.leaf(random_tensor({2, 3, 3, 3, 3}, rng));  // expects 3 channels
    const int b = g.leaf(Tensor::zeros({2}));
    CHECK_THROWS_WITH_AS(g.conv3d(input, w, b), doctest::Contains("channel mismatch"),
                         std::invalid_argument);
}

TEST_CASE("maxpool picks block maxima and routes ties to the first element") {
    SUBCASE("ascending block") {
        Graph g;
        Tensor in = Tensor::zeros({1, 2, 2, 2});
        for (std::size_t i = 0; i < 8; ++i) in.data[i] = static_cast<double>(i + 1);
        const Tensor& out = g.value(g.maxpool3d(g.leaf(in)));
        REQUIRE(out.data.size() == 1);
        CHECK(out.data[0] == 8.0);
    }
    SUBCASE("constant block sends the whole gradient to the first element") {
        Graph g;
        Tensor in = Tensor::full({1, 2, 2, 2}, 3.5);
        in.requires_grad = true;
        const int leaf = g.leaf(in);
        const int root = g.sum(g.maxpool3d(leaf));
        g.backward(root);
        const auto& grad = g.grad(leaf);
        CHECK(grad[0] == 1.0);
        for (std::size_t i = 1; i < 8; ++i) CHECK(grad[i] == 0.0);
    }
    SUBCASE("odd spatial dims are rejected") {
        Graph g;
        const int leaf = g.leaf(Tensor::zeros({1, 3, 2, 2}));
        CHECK_THROWS_AS(g.maxpool3d(leaf), std::invalid_argument);
    }
}

TEST_CASE("maxpool forward matches brute force and backward matches FD off ties") {
    Rng rng(5);
    Tensor in = random_tensor({2, 4, 4, 4}, rng);
    // spread values so no block has near-ties (FD step is 1e-5)
    for (std::size_t i = 0; i < in.data.size(); ++i) in.data[i] += 1e-2 * static_cast<double>(i);

    Graph g;
    const Tensor& out = g.value(g.maxpool3d(g.leaf(in)));
    for (int c = 0; c < 2; ++c)
        for (int x = 0; x < 2; ++x)
            for (int y = 0; y < 2; ++y)
                for (int z = 0; z < 2; ++z) {
                    double expected = -1e300;
                    for (int dx = 0; dx < 2; ++dx)
                        for (int dy = 0; dy < 2; ++dy)
                            for (int dz = 0; dz < 2; ++dz)
                                expected = std::max(
                                    expected,
                                    in.data[((static_cast<std::size_t>(c) * 4 + 2 * x + dx) * 4 +
                                             2 * y + dy) *
                                                4 +
                                            2 * z + dz]);
                    CHECK(out.data[((static_cast<std::size_t>(c) * 2 + x) * 2 + y) * 2 + z] ==
                          doctest::Approx(expected));
                }

    const Tensor probe = random_tensor({2, 2, 2, 2}, rng);
    const auto build = [](Graph& gg, const std::vector<int>& leaves) {
        return weighted_sum(gg, gg.maxpool3d(leaves[0]), leaves[1]);
    };
    const auto report = check_gradients({in, probe}, {0}, build, 100, rng);
    CHECK(report.max_rel_err < kFdTol);
}

TEST_CASE("upsample repeats voxels and is inverted by maxpool on constants") {
    Graph g;
    const int leaf = g.leaf(Tensor::full({1, 1, 1, 1}, 4.25));
    const Tensor& up = g.value(g.upsample3d_nn(leaf));
    REQUIRE(up.shape == std::vector<int>{1, 2, 2, 2});
    for (double v : up.data) CHECK(v == 4.25);

    Rng rng(6);
    const Tensor block = random_tensor({2, 2, 2, 2}, rng);
    Graph g2;
    const int x = g2.leaf(block);
    const Tensor& roundtrip = g2.value(g2.maxpool3d(g2.upsample3d_nn(x)));
    CHECK(roundtrip.data == block.data);
}

TEST_CASE("upsample gradients match finite differences") {
    Rng rng(7);
    const Tensor in = random_tensor({2, 2, 2, 2}, rng);
    const Tensor probe = random_tensor({2, 4, 4, 4}, rng);
    const auto build = [](Graph& g, const std::vector<int>& leaves) {
        return weighted_sum(g, g.upsample3d_nn(leaves[0]), leaves[1]);
    };
    const auto report = check_gradients({in, probe}, {0}, build, 100, rng);
    CHECK(report.max_rel_err < kFdTol);
}

TEST_CASE("elementwise op definitions") {
    Graph g;
    const int x = g.leaf(Tensor({2}, {-1.0, 2.0}));
    const Tensor& r = g.value(g.relu(x));
    CHECK(r.data[0] == 0.0);
    CHECK(r.data[1] == 2.0);

    const int zero = g.leaf(Tensor({1}, {0.0}));
    CHECK(g.value(g.sigmoid(zero)).data[0] == doctest::Approx(0.5));

    const int a = g.leaf(Tensor::zeros({2, 3, 3, 2}));
    const int b = g.leaf(Tensor::zeros({3, 3, 3, 2}));
    CHECK(g.value(g.concat_channels(a, b)).shape == std::vector<int>{5, 3, 3, 2});

    const int p = g.leaf(Tensor({2}, {2.0, 3.0}));
    const int q = g.leaf(Tensor({2}, {5.0, -1.0}));
    CHECK(g.value(g.add(p, q)).data == std::vector<double>{7.0, 2.0});
    CHECK(g.value(g.mul(p, q)).data == std::vector<double>{10.0, -3.0});
    CHECK(g.value(g.affine(p, 2.0, 1.0)).data == std::vector<double>{5.0, 7.0});
    CHECK(g.value(g.sum(p)).data[0] == 5.0);
    CHECK(g.value(g.select(q, 1)).data[0] == -1.0);

    const int bad = g.leaf(Tensor({3}, {1.0, 2.0, 3.0}));
    CHECK_THROWS_AS(g.add(p, bad), std::invalid_argument);
}

TEST_CASE("elementwise gradients match finite differences") {
    Rng rng(8);
    const Tensor x = away_from_zero({2, 4, 4, 2}, rng);
    const Tensor y = away_from_zero({2, 4, 4, 2}, rng);
    const Tensor probe = random_tensor({2, 4, 4, 2}, rng);
    const Tensor probe_cat = random_tensor({4, 4, 4, 2}, rng);

    SUBCASE("relu") {
        const auto build = [](Graph& g, const std::vector<int>& l) {
            return weighted_sum(g, g.relu(l[0]), l[1]);
        };
        CHECK(check_gradients({x, probe}, {0}, build, 100, rng).max_rel_err < kFdTol);
    }
    SUBCASE("sigmoid") {
        const auto build = [](Graph& g, const std::vector<int>& l) {
            return weighted_sum(g, g.sigmoid(l[0]), l[1]);
        };
        CHECK(check_gradients({x, probe}, {0}, build, 100, rng).max_rel_err < kFdTol);
    }
    SUBCASE("concat") {
        const auto build = [](Graph& g, const std::vector<int>& l) {
            return weighted_sum(g, g.concat_channels(l[0], l[1]), l[2]);
        };
        CHECK(check_gradients({x, y, probe_cat}, {0, 1}, build, 100, rng).max_rel_err < kFdTol);
    }
    SUBCASE("add and mul") {
        const auto build = [](Graph& g, const std::vector<int>& l) {
            return weighted_sum(g, g.mul(g.add(l[0], l[1]), l[1]), l[2]);
        };
        CHECK(check_gradients({x, y, probe}, {0, 1}, build, 100, rng).max_rel_err < kFdTol);
    }
    SUBCASE("affine and select") {
        const auto build = [](Graph& g, const std::vector<int>& l) {
            return g.select(g.affine(l[0], 2.5, -0.75), 13);
        };
        CHECK(check_gradients({x}, {0}, build, 100, rng).max_rel_err < kFdTol);
    }
}

TEST_CASE("soft dice + bce loss values") {
    SUBCASE("perfect prediction is (numerically) zero loss") {
        Graph g;
        const int pred = g.leaf(Tensor::full({1, 2, 2, 2}, 1.0));
        const int target = g.leaf(Tensor::full({1, 2, 2, 2}, 1.0));
        CHECK(g.value(g.soft_dice_bce_loss(pred, target)).data[0] < 1e-6);
    }
    SUBCASE("uniform 0.5 prediction against all-ones target") {
        const std::size_t n = 8;
        Graph g;
        const int pred = g.leaf(Tensor::full({1, 2, 2, 2}, 0.5));
        const int target = g.leaf(Tensor::full({1, 2, 2, 2}, 1.0));
        const double loss = g.value(g.soft_dice_bce_loss(pred, target)).data[0];
        // soft dice term has the closed form (2*0.5n+1)/(1.5n+1)
        const double soft_dice = (2 * 0.5 * n + 1) / (0.5 * n + n + 1);
        const double expected = 0.5 * (1 - soft_dice) + 0.5 * std::log(2.0);
        CHECK(loss == doctest::Approx(expected).epsilon(1e-12));
        // BCE term = ln 2 exactly
        CHECK(loss - 0.5 * (1 - soft_dice) == doctest::Approx(0.5 * std::log(2.0)));
    }
    SUBCASE("non-binary target is rejected") {
        Graph g;
        const int pred = g.leaf(Tensor::full({2}, 0.5));
        const int target = g.leaf(Tensor({2}, {0.0, 0.25}));
        CHECK_THROWS_WITH_AS(g.soft_dice_bce_loss(pred, target), doctest::Contains("binary"),
                             std::invalid_argument);
    }
}

TEST_CASE("loss gradient matches finite differences") {
    Rng rng(9);
    Tensor pred = Tensor::zeros({1, 4, 4, 2});
    for (double& v : pred.data) v = rng.uniform(0.05, 0.95);
    Tensor target = Tensor::zeros({1, 4, 4, 2});
    for (double& v : target.data) v = rng.bernoulli(0.4) ? 1.0 : 0.0;

    const auto build = [](Graph& g, const std::vector<int>& l) {
        return g.soft_dice_bce_loss(l[0], l[1]);
    };
    CHECK(check_gradients({pred, target}, {0}, build, 100, rng).max_rel_err < kFdTol);
}

TEST_CASE("backward basics") {
    SUBCASE("root = sum(x) gives unit gradients") {
        Graph g;
        Tensor x = Tensor({4}, {1.0, 2.0, 3.0, 4.0});
        x.requires_grad = true;
        const int leaf = g.leaf(x);
        g.backward(g.sum(leaf));
        for (double v : g.grad(leaf)) CHECK(v == 1.0);
    }
    SUBCASE("product rule on x*y") {
        Graph g;
        Tensor x = Tensor({2}, {2.0, -3.0});
        Tensor y = Tensor({2}, {5.0, 7.0});
        x.requires_grad = y.requires_grad = true;
        const int lx = g.leaf(x), ly = g.leaf(y);
        g.backward(g.sum(g.mul(lx, ly)));
        CHECK(g.grad(lx) == std::vector<double>{5.0, 7.0});
        CHECK(g.grad(ly) == std::vector<double>{2.0, -3.0});
    }
    SUBCASE("non-scalar root is rejected") {
        Graph g;
        const int leaf = g.leaf(Tensor::zeros({3}));
        CHECK_THROWS_WITH_AS(g.backward(leaf), doctest::Contains("scalar"),
                             std::invalid_argument);
    }
}

TEST_CASE("backward is linear in the root") {
    Rng rng(10);
    Tensor x = away_from_zero({2, 4, 4, 2}, rng);
    x.requires_grad = true;
    const double a = 2.75, b = -1.25;

    // grad of a*f + b*g against a*grad(f) + b*grad(g)
    Graph gf;
    const int lf = gf.leaf(x);
    gf.backward(gf.sum(gf.relu(lf)));
    Graph gg;
    const int lg = gg.leaf(x);
    gg.backward(gg.sum(gg.sigmoid(lg)));

    Graph gc;
    const int lc = gc.leaf(x);
    const int combined =
        gc.add(gc.affine(gc.sum(gc.relu(lc)), a, 0.0), gc.affine(gc.sum(gc.sigmoid(lc)), b, 0.0));
    gc.backward(combined);

    const auto& gfv = gf.grad(lf);
    const auto& ggv = gg.grad(lg);
    const auto& gcv = gc.grad(lc);
    for (std::size_t i = 0; i < gcv.size(); ++i)
        CHECK(gcv[i] == doctest::Approx(a * gfv[i] + b * ggv[i]).epsilon(1e-12));
}

TEST_CASE("fan-out accumulates gradients") {
    Graph g;
    Tensor x = Tensor({2}, {3.0, 4.0});
    x.requires_grad = true;
    const int leaf = g.leaf(x);
    // x used twice: sum(x*x) -> grad = 2x
    g.backward(g.sum(g.mul(leaf, leaf)));
    CHECK(g.grad(leaf) == std::vector<double>{6.0, 8.0});
}

TEST_CASE("adam first step and invariances") {
    SUBCASE("zero gradient with zero weight decay leaves parameters unchanged") {
        ad::AdamConfig cfg;
        cfg.weight_decay = 0;
        ad::AdamState<double> adam(cfg);
        std::vector<double> p{1.0, -2.0};
        const std::vector<double> g{0.0, 0.0};
        adam.step({&p}, {&g});
        CHECK(p == std::vector<double>{1.0, -2.0});
    }
    SUBCASE("first step with constant gradient equals the closed form") {
        ad::AdamConfig cfg;
        cfg.weight_decay = 0;
        ad::AdamState<double> adam(cfg);
        const double grad_value = 0.37;
        std::vector<double> p{0.0};
        const std::vector<double> g{grad_value};
        adam.step({&p}, {&g});
        // mhat = g, vhat = g^2 at t=1, so the step is -lr*g/(|g|+eps)
        const double expected = -cfg.lr * grad_value / (std::abs(grad_value) + cfg.eps);
        CHECK(p[0] == doctest::Approx(expected).epsilon(1e-12));
        CHECK(std::abs(p[0] + cfg.lr) < 1e-6);  // ~ -lr*sign(g)
    }
    SUBCASE("decoupled weight decay shrinks before the adaptive step") {
        ad::AdamConfig cfg;
        cfg.weight_decay = 0.5;
        ad::AdamState<double> adam(cfg);
        std::vector<double> p{2.0};
        const std::vector<double> g{0.0};
        adam.step({&p}, {&g});
        CHECK(p[0] == doctest::Approx(2.0 * (1 - cfg.lr * 0.5)));
    }
    SUBCASE("identical runs produce identical trajectories") {
        const auto run = []() {
            ad::AdamState<double> adam{ad::AdamConfig{}};
            std::vector<double> p{1.0, 2.0, 3.0};
            Rng rng(55);
            for (int i = 0; i < 50; ++i) {
                std::vector<double> g{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
                adam.step({&p}, {&g});
            }
            return p;
        };
        CHECK(run() == run());
    }
}
