#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "uavids/tree.hpp"

using namespace uavids;
using Catch::Approx;

namespace {

Matrix column(const std::vector<double>& v) {
    Matrix m(v.size(), 1);
    for (std::size_t i = 0; i < v.size(); ++i) m(i, 0) = v[i];
    return m;
}

Matrix from_rows(const std::vector<std::vector<double>>& rows) {
    Matrix m(rows.size(), rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
    return m;
}

std::vector<double> ones(std::size_t n) { return std::vector<double>(n, 1.0); }

// Deterministic uniform test matrix via the library generator.
Matrix random_matrix(std::size_t n, std::size_t d, std::uint64_t seed) {
    Rng rng(seed, 1);
    Matrix m(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) m(i, j) = rng.uniform(-3.0, 3.0);
    return m;
}

std::vector<int> random_labels(std::size_t n, std::size_t k, std::uint64_t seed) {
    Rng rng(seed, 2);
    std::vector<int> y(n);
    for (auto& v : y) v = static_cast<int>(rng.below(k));
    return y;
}

}  // namespace

TEST_CASE("gini impurity on hand-worked count vectors") {
    REQUIRE(gini_impurity({4, 0}) == 0.0);
    REQUIRE(gini_impurity({2, 2}) == 0.5);
    REQUIRE(gini_impurity({1, 2, 3}) == Approx(11.0 / 18.0).epsilon(1e-12));
    REQUIRE_THROWS_AS(gini_impurity({0, 0}), EmptyNode);
}

TEST_CASE("best-mode split finds the midpoint with maximal decrease") {
    Matrix X = column({1, 2, 3, 4});
    std::vector<int> y{0, 0, 1, 1};
    TreeParams params;
    Rng rng(1);
    auto found = find_best_split(X, y, ones(4), 2, params, rng);
    REQUIRE(found.has_value());
    REQUIRE(found->split.feature == 0);
    REQUIRE(found->split.threshold == 2.5);
    REQUIRE(found->decrease == Approx(0.5).epsilon(1e-12));
}

TEST_CASE("no split on constant features or pure nodes") {
    TreeParams params;
    Rng rng(1);
    REQUIRE_FALSE(find_best_split(column({2, 2, 2, 2}), {0, 1, 0, 1}, ones(4), 2, params, rng)
                      .has_value());
    REQUIRE_FALSE(
        find_best_split(column({1, 2, 3, 4}), {1, 1, 1, 1}, ones(4), 2, params, rng).has_value());
}

TEST_CASE("split ties break to the lowest feature index, then lowest threshold") {
    // Two identical columns: the first must win.
    Matrix X = from_rows({{1, 1}, {2, 2}, {3, 3}, {4, 4}});
    std::vector<int> y{0, 0, 1, 1};
    TreeParams params;
    Rng rng(1);
    auto found = find_best_split(X, y, ones(4), 2, params, rng);
    REQUIRE(found->split.feature == 0);

    // Thresholds 1.5 and 2.5 give the same decrease; the lower wins.
    auto one_dim = find_best_split(column({1, 2, 3}), {0, 1, 0}, ones(3), 2, params, rng);
    REQUIRE(one_dim.has_value());
    REQUIRE(one_dim->split.threshold == 1.5);
    REQUIRE(one_dim->decrease == Approx(1.0 / 9.0).epsilon(1e-12));
}

TEST_CASE("min_impurity_decrease suppresses marginal splits") {
    Matrix X = column({1, 2, 3, 4});
    std::vector<int> y{0, 0, 1, 1};
    TreeParams params;
    params.min_impurity_decrease = 0.5;  // best achievable is exactly 0.5
    Rng rng(1);
    REQUIRE_FALSE(find_best_split(X, y, ones(4), 2, params, rng).has_value());
}

TEST_CASE("grow_tree separates separable data at depth one") {
    Matrix X = column({-2, -1.5, -1, 1, 1.5, 2});
    std::vector<int> y{0, 0, 0, 1, 1, 1};
    TreeParams params;
    Rng rng(3);
    auto tree = grow_tree(X, y, ones(6), 2, params, rng);
    REQUIRE(tree.depth() == 1);
    for (std::size_t i = 0; i < 6; ++i) {
        double x = X(i, 0);
        auto p = tree.predict(std::span<const double>(&x, 1));
        REQUIRE(p[static_cast<std::size_t>(y[i])] == 1.0);
    }
}

TEST_CASE("max_depth zero yields a single prior leaf") {
    Matrix X = column({1, 2, 3, 4});
    std::vector<int> y{0, 0, 0, 1};
    TreeParams params;
    params.max_depth = 0;
    Rng rng(3);
    auto tree = grow_tree(X, y, ones(4), 2, params, rng);
    REQUIRE(tree.nodes.size() == 1);
    REQUIRE(tree.nodes[0].value == std::vector<double>{0.75, 0.25});
    REQUIRE(tree.nodes[0].cover == 4.0);
}

TEST_CASE("doubling a row's weight equals duplicating the row") {
    Matrix X1 = from_rows({{1, 5}, {2, 3}, {3, 8}, {4, 1}, {2, 3}});
    std::vector<int> y1{0, 1, 1, 0, 1};
    std::vector<double> w1{1, 2, 1, 1, 1};

    Matrix X2 = from_rows({{1, 5}, {2, 3}, {2, 3}, {3, 8}, {4, 1}, {2, 3}});
    std::vector<int> y2{0, 1, 1, 1, 0, 1};

    TreeParams params;  // feature_subset all, best mode: no randomness consumed
    Rng r1(9), r2(9);
    auto t1 = grow_tree(X1, y1, w1, 2, params, r1);
    auto t2 = grow_tree(X2, y2, ones(6), 2, params, r2);
    REQUIRE(t1 == t2);
}

TEST_CASE("cover additivity, leaf normalization, and importance telescoping") {
    auto X = random_matrix(300, 6, 42);
    auto y = random_labels(300, 3, 43);
    TreeParams params;
    params.feature_subset = FeatureSubset::sqrt_count;
    Rng rng(7);
    auto tree = grow_tree(X, y, ones(300), 3, params, rng);

    double leaf_impurity_mass = 0.0;
    for (const auto& n : tree.nodes) {
        if (n.is_leaf()) {
            double sum = 0.0;
            for (double v : n.value) {
                REQUIRE(v >= 0.0);
                sum += v;
            }
            REQUIRE(sum == Approx(1.0).margin(1e-12));
            leaf_impurity_mass += n.cover * gini_impurity(n.value);
        } else {
            const auto& l = tree.nodes[static_cast<std::size_t>(n.left)];
            const auto& r = tree.nodes[static_cast<std::size_t>(n.right)];
            REQUIRE(n.cover == Approx(l.cover + r.cover).margin(1e-9));
        }
    }

    const auto& root = tree.nodes[static_cast<std::size_t>(tree.root)];
    double total_reduction = root.cover * gini_impurity(root.value) - leaf_impurity_mass;
    double recorded = 0.0;
    for (double g : tree.gain_by_feature()) recorded += g;
    REQUIRE(recorded == Approx(total_reduction).margin(1e-9));
}

TEST_CASE("tree prediction routes thresholds with left-on-tie") {
    Tree stump;
    stump.n_features = 1;
    stump.nodes.resize(3);
    stump.nodes[0].split = {0, 0.0};
    stump.nodes[0].left = 1;
    stump.nodes[0].right = 2;
    stump.nodes[1].value = {1.0, 0.0};
    stump.nodes[2].value = {0.0, 1.0};

    double x = -1.0;
    REQUIRE(tree_predict(stump, std::span<const double>(&x, 1))[0] == 1.0);
    x = 0.0;  // boundary goes left
    REQUIRE(tree_predict(stump, std::span<const double>(&x, 1))[0] == 1.0);
    x = 0.5;
    REQUIRE(tree_predict(stump, std::span<const double>(&x, 1))[1] == 1.0);

    Tree leaf_only;
    leaf_only.n_features = 1;
    leaf_only.nodes.resize(1);
    leaf_only.nodes[0].value = {0.25, 0.75};
    x = 123.0;
    REQUIRE(tree_predict(leaf_only, std::span<const double>(&x, 1))[1] == 0.75);
}

TEST_CASE("tree growth is deterministic per seed") {
    auto X = random_matrix(200, 5, 8);
    auto y = random_labels(200, 4, 9);
    TreeParams params;
    params.feature_subset = FeatureSubset::sqrt_count;
    params.split_mode = SplitMode::random;
    Rng a(17), b(17), c(18);
    auto t1 = grow_tree(X, y, ones(200), 4, params, a);
    auto t2 = grow_tree(X, y, ones(200), 4, params, b);
    auto t3 = grow_tree(X, y, ones(200), 4, params, c);
    REQUIRE(t1 == t2);
    REQUIRE_FALSE(t1 == t3);
}

TEST_CASE("random split mode still separates obvious structure") {
    Matrix X = column({-5, -4, -4.5, 4, 4.5, 5});
    std::vector<int> y{0, 0, 0, 1, 1, 1};
    TreeParams params;
    params.split_mode = SplitMode::random;
    Rng rng(12);
    auto tree = grow_tree(X, y, ones(6), 2, params, rng);
    for (std::size_t i = 0; i < 6; ++i) {
        double x = X(i, 0);
        REQUIRE(tree.predict(std::span<const double>(&x, 1))[static_cast<std::size_t>(y[i])] ==
                1.0);
    }
}

TEST_CASE("gradient leaf weight matches -G/(H+lambda)") {
    Matrix X = column({0.0});
    Matrix g(1, 1), h(1, 1);
    g(0, 0) = -2.0;
    h(0, 0) = 4.0;
    TreeParams params;
    params.max_depth = 0;
    Rng rng(1);
    auto tree = grow_gradient_tree(X, g, h, 0, params, 1.0, 0.0, rng);
    REQUIRE(tree.nodes.size() == 1);
    REQUIRE(tree.nodes[0].value[0] == Approx(0.4).epsilon(1e-12));
}

TEST_CASE("gradient split gain matches the hand-worked value and gamma gates it") {
    Matrix X = column({0, 1, 2, 3});
    Matrix g(4, 1), h(4, 1);
    g(0, 0) = -1;
    g(1, 0) = -1;
    g(2, 0) = 1;
    g(3, 0) = 1;
    for (std::size_t i = 0; i < 4; ++i) h(i, 0) = 1;

    TreeParams params;
    Rng rng(1);
    auto tree = grow_gradient_tree(X, g, h, 0, params, 1.0, 0.0, rng);
    REQUIRE(tree.nodes.size() == 3);
    const auto& root = tree.nodes[0];
    REQUIRE(root.split.threshold == 1.5);
    REQUIRE(root.split_gain == Approx(4.0 / 3.0).epsilon(1e-12));
    REQUIRE(tree.nodes[static_cast<std::size_t>(root.left)].value[0] ==
            Approx(2.0 / 3.0).epsilon(1e-12));
    REQUIRE(tree.nodes[static_cast<std::size_t>(root.right)].value[0] ==
            Approx(-2.0 / 3.0).epsilon(1e-12));

    Rng rng2(1);
    auto pruned = grow_gradient_tree(X, g, h, 0, params, 1.0, 2.0, rng2);
    REQUIRE(pruned.nodes.size() == 1);
    REQUIRE(pruned.nodes[0].value[0] == 0.0);
}

TEST_CASE("gradient leaf weight minimizes the second-order objective") {
    auto objective = [](double G, double H, double lambda, double w) {
        return G * w + 0.5 * (H + lambda) * w * w;
    };
    const double cases[][3] = {{-2, 4, 1}, {3, 0.5, 0.1}, {0.7, 2, 0}, {-5, 1e-3, 2}};
    for (const auto& c : cases) {
        Matrix X = column({0.0});
        Matrix g(1, 1), h(1, 1);
        g(0, 0) = c[0];
        h(0, 0) = c[1];
        TreeParams params;
        params.max_depth = 0;
        Rng rng(1);
        auto tree = grow_gradient_tree(X, g, h, 0, params, c[2], 0.0, rng);
        double w_star = tree.nodes[0].value[0];
        double at_star = objective(c[0], c[1], c[2], w_star);
        REQUIRE(at_star < objective(c[0], c[1], c[2], w_star + 1e-3));
        REQUIRE(at_star < objective(c[0], c[1], c[2], w_star - 1e-3));
    }
}

TEST_CASE("gradient tree floors vanishing hessians") {
    Matrix X = column({0.0});
    Matrix g(1, 1), h(1, 1);
    g(0, 0) = 1.0;
    h(0, 0) = 0.0;
    TreeParams params;
    params.max_depth = 0;
    Rng rng(1);
    auto tree = grow_gradient_tree(X, g, h, 0, params, 0.0, 0.0, rng);
    REQUIRE(std::isfinite(tree.nodes[0].value[0]));
}

TEST_CASE("gradient tree respects depth limits and records covers") {
    auto X = random_matrix(150, 4, 77);
    Matrix g(150, 2), h(150, 2);
    Rng noise(78);
    for (std::size_t i = 0; i < 150; ++i)
        for (std::size_t k = 0; k < 2; ++k) {
            g(i, k) = noise.uniform(-1.0, 1.0);
            h(i, k) = 0.25;
        }
    TreeParams params;
    params.max_depth = 3;
    Rng rng(5);
    auto tree = grow_gradient_tree(X, g, h, 1, params, 1.0, 0.0, rng);
    REQUIRE(tree.depth() <= 3);
    REQUIRE(tree.nodes[0].cover == 150.0);
    for (const auto& n : tree.nodes)
        if (!n.is_leaf())
            REQUIRE(n.cover == tree.nodes[static_cast<std::size_t>(n.left)].cover +
                                   tree.nodes[static_cast<std::size_t>(n.right)].cover);
}
