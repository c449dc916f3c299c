#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "uavids/explain.hpp"
#include "uavids/ingest.hpp"

using namespace uavids;
using Catch::Approx;

namespace {

Matrix from_rows(const std::vector<std::vector<double>>& rows) {
    Matrix m(rows.size(), rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
    return m;
}

FeatureTable toy(const Matrix& x, std::vector<int> y, std::size_t k) {
    FeatureTable t;
    t.X = x;
    t.y = std::move(y);
    for (std::size_t j = 0; j < x.cols(); ++j) t.feature_names.push_back("f" + std::to_string(j));
    std::vector<std::string> cls;
    for (std::size_t c = 0; c < k; ++c) cls.push_back("c" + std::to_string(c));
    t.class_names = LabelMap(cls);
    return t;
}

Tree stump(int feature, double thr, std::vector<double> left_val, std::vector<double> right_val,
           double cover_left, double cover_right, std::size_t d) {
    Tree t;
    t.n_features = d;
    TreeNode root;
    root.left = 1;
    root.right = 2;
    root.split = SplitSpec{feature, thr};
    root.cover = cover_left + cover_right;
    TreeNode l, r;
    l.value = std::move(left_val);
    l.cover = cover_left;
    r.value = std::move(right_val);
    r.cover = cover_right;
    t.nodes = {root, l, r};
    return t;
}

FeatureTable synth_features(SynthSpec spec, std::uint64_t seed) {
    auto scan = synthesize_dataset(spec, seed);
    auto recipe = fit_recipe(scan.table, infer_schema(scan.table), "Label");
    return apply_recipe(recipe, scan.table, "Label");
}

}  // namespace

// --- brute-force oracle ---------------------------------------------------------------

TEST_CASE("brute shapley satisfies additivity and symmetry axioms") {
    // Additive game: v(S) = sum of per-player constants.
    std::vector<double> c{0.5, -1.25, 2.0, 0.125};
    auto additive = [&](std::uint32_t mask) {
        double v = 0.0;
        for (std::size_t j = 0; j < c.size(); ++j)
            if (mask & (1u << j)) v += c[j];
        return v;
    };
    auto phi = brute_shapley_oracle(additive, 4);
    for (std::size_t j = 0; j < 4; ++j) REQUIRE(phi[j] == Approx(c[j]).margin(1e-12));

    // Symmetric two-player game.
    auto symmetric = [](std::uint32_t mask) {
        return mask == 3u ? 1.0 : (mask != 0u ? 0.25 : 0.0);
    };
    auto phi2 = brute_shapley_oracle(symmetric, 2);
    REQUIRE(phi2[0] == Approx(phi2[1]).margin(1e-12));
    REQUIRE(phi2[0] + phi2[1] == Approx(1.0).margin(1e-12));  // efficiency

    REQUIRE_THROWS_AS(brute_shapley_oracle([](std::uint32_t) { return 0.0; }, 13),
                      TooManyFeatures);
}

TEST_CASE("the hand-worked stump gives half credit to its feature") {
    auto tree = stump(0, 0.0, {0.0}, {1.0}, 50, 50, 1);
    std::vector<double> x{1.0};
    auto leaf = [](const TreeNode& n) { return n.value[0]; };

    double expected = 0.0;
    auto phi = tree_shap_single(tree, x, leaf, &expected);
    REQUIRE(expected == Approx(0.5).margin(1e-12));
    REQUIRE(phi[0] == Approx(0.5).margin(1e-12));

    auto value_fn = [&](std::uint32_t mask) { return tree_coalition_value(tree, x, mask, leaf); };
    auto oracle = brute_shapley_oracle(value_fn, 1);
    REQUIRE(oracle[0] == Approx(0.5).margin(1e-12));
}

TEST_CASE("a single-leaf tree attributes nothing") {
    Tree t;
    t.n_features = 3;
    TreeNode leaf_node;
    leaf_node.value = {0.7};
    leaf_node.cover = 12;
    t.nodes = {leaf_node};
    std::vector<double> x{1.0, -2.0, 0.5};
    double expected = 0.0;
    auto phi = tree_shap_single(t, x, [](const TreeNode& n) { return n.value[0]; }, &expected);
    REQUIRE(expected == 0.7);
    REQUIRE(phi == std::vector<double>{0.0, 0.0, 0.0});
}

TEST_CASE("trees without positive cover are rejected") {
    auto tree = stump(0, 0.0, {0.0}, {1.0}, 0, 50, 1);
    std::vector<double> x{1.0};
    REQUIRE_THROWS_AS(tree_shap_single(tree, x, [](const TreeNode& n) { return n.value[0]; }),
                      ModelLacksCover);
}

TEST_CASE("path-dependent attributions equal brute force on 200 random trees") {
    Rng rng(2024, 0);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t d = 2 + rng.below(9);   // 2..10 features
        const std::size_t n = 25 + rng.below(20); // rows
        Matrix x_train(n, d);
        std::vector<int> y(n);
        std::vector<double> w(n, 1.0);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = static_cast<int>(rng.below(3));
            for (std::size_t j = 0; j < d; ++j) x_train(i, j) = rng.uniform(-2.0, 2.0);
        }

        TreeParams params;
        params.max_depth = 1 + rng.below(4);  // 1..4
        params.split_mode = SplitMode::random;
        Rng grow_rng(3000 + static_cast<std::uint64_t>(rep), 1);

        Tree tree;
        std::function<double(const TreeNode&)> leaf;
        if (rep % 2 == 0) {
            tree = grow_tree(x_train, y, w, 3, params, grow_rng);
            std::size_t c = rng.below(3);
            leaf = [c](const TreeNode& node) { return node.value[c]; };
        } else {
            // Second-order regression tree: single-value leaves.
            Matrix g(n, 1), h(n, 1);
            for (std::size_t i = 0; i < n; ++i) {
                g(i, 0) = rng.uniform(-1.0, 1.0);
                h(i, 0) = rng.uniform(0.1, 1.0);
            }
            tree = grow_gradient_tree(x_train, g, h, 0, params, 1.0, 0.0, grow_rng);
            leaf = [](const TreeNode& node) { return node.value[0]; };
        }

        std::vector<double> point(d);
        for (std::size_t j = 0; j < d; ++j) point[j] = rng.uniform(-2.0, 2.0);

        double expected = 0.0;
        auto fast = tree_shap_single(tree, point, leaf, &expected);
        auto oracle = brute_shapley_oracle(
            [&](std::uint32_t mask) { return tree_coalition_value(tree, point, mask, leaf); }, d);
        for (std::size_t j = 0; j < d; ++j) REQUIRE(fast[j] == Approx(oracle[j]).margin(1e-9));

        // Efficiency: empty-coalition value + total attribution = tree output.
        double total = expected;
        for (double p : fast) total += p;
        double full = tree_coalition_value(tree, point, (1u << d) - 1u, leaf);
        REQUIRE(total == Approx(full).margin(1e-9));
    }
}

// --- ensemble attributions -------------------------------------------------------------

TEST_CASE("every model kind satisfies per-class local accuracy") {
    SynthSpec spec;
    spec.n_rows = 160;
    spec.n_numeric = 4;
    spec.n_categorical = 1;
    spec.n_classes = 3;
    auto ft = synth_features(spec, 303);
    auto cw = class_weights(ft.y, 3);

    for (auto kind : {ModelKind::random_forest, ModelKind::extra_trees, ModelKind::adaboost,
                      ModelKind::grad_boost_regularized, ModelKind::grad_boost_ordered}) {
        auto s = default_model_spec(kind);
        s.n_estimators = 4;
        s.tree.max_depth = kind == ModelKind::adaboost ? 2 : 4;
        auto m = fit_model(s, ft, cw, 99);
        auto proba = predict_proba(m, ft);

        for (std::size_t r = 0; r < 12; ++r) {
            auto att = tree_shap(m, ft.X.row(r), r);
            REQUIRE(att.space == (m.is_boosting() ? "logit" : "probability"));
            for (std::size_t c = 0; c < 3; ++c) {
                double reconstructed = att.base_value[c];
                for (std::size_t j = 0; j < ft.n_features(); ++j)
                    reconstructed += att.phi(c, j);
                REQUIRE(reconstructed == Approx(att.output[c]).margin(1e-9));
            }
            if (!m.is_boosting()) {
                for (std::size_t c = 0; c < 3; ++c)
                    REQUIRE(att.output[c] == Approx(proba(r, c)).margin(1e-12));
            } else {
                // Softmax of the attributed logits reproduces the probabilities.
                double mx = *std::max_element(att.output.begin(), att.output.end());
                double z = 0.0;
                for (double v : att.output) z += std::exp(v - mx);
                for (std::size_t c = 0; c < 3; ++c)
                    REQUIRE(std::exp(att.output[c] - mx) / z == Approx(proba(r, c)).margin(1e-9));
            }
        }
    }
}

TEST_CASE("forest attributions are the average of per-tree attributions") {
    SynthSpec spec;
    spec.n_rows = 90;
    spec.n_numeric = 3;
    spec.n_classes = 2;
    auto ft = synth_features(spec, 313);
    auto cw = class_weights(ft.y, 2);
    auto m = fit_random_forest(ft, cw, 3, TreeParams{}, 6);

    auto x = ft.X.row(0);
    auto att = tree_shap(m, x, 0);
    for (std::size_t c = 0; c < 2; ++c) {
        std::vector<double> mean_phi(3, 0.0);
        double mean_base = 0.0;
        for (const auto& tree : m.trees) {
            double expected = 0.0;
            auto phi = tree_shap_single(
                tree, x, [c](const TreeNode& n) { return n.value[c]; }, &expected);
            mean_base += expected / 3.0;
            for (std::size_t j = 0; j < 3; ++j) mean_phi[j] += phi[j] / 3.0;
        }
        REQUIRE(att.base_value[c] == Approx(mean_base).margin(1e-12));
        for (std::size_t j = 0; j < 3; ++j)
            REQUIRE(att.phi(c, j) == Approx(mean_phi[j]).margin(1e-12));
    }
}

TEST_CASE("attribution rejects a mismatched instance width") {
    auto ft = toy(from_rows({{0, 1}, {1, 0}, {2, 1}, {3, 0}}), {0, 0, 1, 1}, 2);
    auto m = fit_random_forest(ft, ClassWeights{{1, 1}}, 2, TreeParams{}, 1);
    std::vector<double> narrow{1.0};
    REQUIRE_THROWS_AS(tree_shap(m, narrow), SchemaMismatch);
}

// --- permutation importance ------------------------------------------------------------------

TEST_CASE("shuffling a constant or unused column moves nothing") {
    // x0 fully determines y; x1 is constant; x2 is label-independent noise,
    // and the depth-1 model can only ever use x0.
    Rng rng(31, 0);
    const std::size_t n = 120;
    Matrix x(n, 3);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = static_cast<int>(rng.below(2));
        x(i, 0) = y[i] == 0 ? -2.0 + 0.1 * rng.normal() : 2.0 + 0.1 * rng.normal();
        x(i, 1) = 1.5;
        x(i, 2) = rng.normal();
    }
    auto ft = toy(x, y, 2);
    auto cw = class_weights(ft.y, 2);
    TreeParams params;
    params.max_depth = 1;
    auto m = fit_random_forest(ft, cw, 5, params, 9);

    auto table = permutation_importance(m, ft, score_accuracy, 30, 17);
    REQUIRE(table.baseline == 1.0);
    REQUIRE(table.rows.size() == 3);
    REQUIRE(table.rows[0].feature == 0);
    // Shuffling the informative column costs roughly baseline − chance ≈ 0.5.
    REQUIRE(table.rows[0].mean > 0.3);
    REQUIRE(table.rows[0].mean < 0.7);
    for (const auto& row : table.rows) {
        REQUIRE(row.std_dev >= 0.0);
        if (row.feature != 0) {
            REQUIRE(row.mean == 0.0);  // stump forest never looks at x1 or x2
            REQUIRE(row.std_dev == 0.0);
        }
    }
    REQUIRE_THROWS_AS(permutation_importance(m, ft, score_accuracy, 0, 1), InvalidSpec);
}

TEST_CASE("permutation importance is seed-deterministic and sorted") {
    SynthSpec spec;
    spec.n_rows = 150;
    spec.n_numeric = 4;
    spec.n_classes = 3;
    auto ft = synth_features(spec, 323);
    auto cw = class_weights(ft.y, 3);
    auto m = fit_random_forest(ft, cw, 8, default_model_spec(ModelKind::random_forest).tree, 2);

    auto a = permutation_importance(m, ft, score_f1_macro, 5, 21);
    auto b = permutation_importance(m, ft, score_f1_macro, 5, 21);
    REQUIRE(a.rows.size() == b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        REQUIRE(a.rows[i].feature == b.rows[i].feature);
        REQUIRE(a.rows[i].mean == b.rows[i].mean);
        REQUIRE(a.rows[i].std_dev == b.rows[i].std_dev);
        if (i > 0) REQUIRE(a.rows[i - 1].mean >= a.rows[i].mean);
    }
}

// --- SHAP summary ------------------------------------------------------------------------------

TEST_CASE("summary ranks the dominant feature first and zeroes ignored ones") {
    Rng rng(41, 0);
    const std::size_t n = 100;
    Matrix x(n, 3);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = static_cast<int>(rng.below(2));
        x(i, 0) = y[i] == 0 ? -1.0 : 1.0;
        x(i, 1) = 0.77;  // constant: no split can use it
        x(i, 2) = rng.normal() * 0.01;
    }
    auto ft = toy(x, y, 2);
    auto m = fit_random_forest(ft, class_weights(ft.y, 2), 5, TreeParams{}, 3);

    auto summary = shap_summary(m, ft, 1, 0);
    REQUIRE(summary.space == "probability");
    REQUIRE(summary.features.size() == 3);
    REQUIRE(summary.features[0].feature == 0);
    REQUIRE(summary.features[0].mean_abs_phi > 0.0);
    for (const auto& f : summary.features) {
        if (f.feature == 1) REQUIRE(f.mean_abs_phi == 0.0);
        REQUIRE(f.points.size() == n);
    }

    // Duplicating every row leaves the ranking and the means unchanged.
    std::vector<std::size_t> twice;
    for (std::size_t i = 0; i < n; ++i) {
        twice.push_back(i);
        twice.push_back(i);
    }
    auto doubled = ft.select_rows(twice);
    auto summary2 = shap_summary(m, doubled, 1, 0);
    for (std::size_t i = 0; i < 3; ++i) {
        REQUIRE(summary2.features[i].feature == summary.features[i].feature);
        REQUIRE(summary2.features[i].mean_abs_phi ==
                Approx(summary.features[i].mean_abs_phi).margin(1e-12));
    }

    auto top1 = shap_summary(m, ft, 1, 1);
    REQUIRE(top1.features.size() == 1);
    auto capped = shap_summary(m, ft, 1, 0, 10, 5);
    REQUIRE(capped.features[0].points.size() == 10);
    REQUIRE_THROWS_AS(shap_summary(m, ft, 9, 0), InvalidSpec);
}

// --- LIME ---------------------------------------------------------------------------------------

namespace {

/// Forest of evenly spaced stumps: P(class 1) ramps linearly in x0 over (−3, 3).
EnsembleModel linear_ramp_forest(std::size_t t_count, std::size_t d) {
    EnsembleModel m;
    m.kind = ModelKind::random_forest;
    for (std::size_t j = 0; j < d; ++j) m.feature_names.push_back("f" + std::to_string(j));
    m.class_names = LabelMap({"c0", "c1"});
    for (std::size_t t = 0; t < t_count; ++t) {
        double thr = -3.0 + 6.0 * (static_cast<double>(t) + 0.5) / static_cast<double>(t_count);
        m.trees.push_back(stump(0, thr, {1.0, 0.0}, {0.0, 1.0}, 50, 50, d));
    }
    return m;
}

}  // namespace

TEST_CASE("a constant model earns zero coefficients and perfect fidelity") {
    EnsembleModel m;
    m.kind = ModelKind::random_forest;
    m.feature_names = {"f0", "f1"};
    m.class_names = LabelMap({"c0", "c1"});
    Tree leaf_only;
    leaf_only.n_features = 2;
    TreeNode leaf;
    leaf.value = {0.3, 0.7};
    leaf.cover = 10;
    leaf_only.nodes = {leaf};
    m.trees = {leaf_only};

    std::vector<double> x{0.0, 0.0};
    auto explanations = lime_explain(m, x, nullptr, 400, 0.0, 2, 5);
    REQUIRE(explanations.size() == 2);
    REQUIRE(explanations[0].intercept == Approx(0.3).margin(1e-3));
    REQUIRE(explanations[1].intercept == Approx(0.7).margin(1e-3));
    for (const auto& ex : explanations) {
        REQUIRE(ex.r2 == 1.0);  // zero variance target: fidelity defined as perfect
        for (const auto& coef : ex.top) REQUIRE(std::abs(coef.weight) < 1e-4);
    }
}

TEST_CASE("the surrogate recovers a linear model's slope within ten percent") {
    auto m = linear_ramp_forest(60, 3);
    std::vector<double> x{0.0, 0.0, 0.0};
    auto explanations = lime_explain(m, x, nullptr, 5000, 0.0, 3, 11);
    const auto& class1 = explanations[1];

    REQUIRE(class1.top[0].feature == 0);  // the split feature dominates
    double slope = 0.0;
    for (const auto& coef : class1.top)
        if (coef.feature == 0) slope = coef.weight;
    REQUIRE(slope == Approx(1.0 / 6.0).epsilon(0.10));
    REQUIRE(class1.r2 > 0.9);
    REQUIRE(class1.r2 <= 1.0);
}

TEST_CASE("lime is deterministic under a fixed seed and validates inputs") {
    auto m = linear_ramp_forest(10, 2);
    std::vector<double> x{0.5, -0.5};
    auto a = lime_explain(m, x, nullptr, 200, 0.0, 2, 77);
    auto b = lime_explain(m, x, nullptr, 200, 0.0, 2, 77);
    for (std::size_t c = 0; c < 2; ++c) {
        REQUIRE(a[c].intercept == b[c].intercept);
        REQUIRE(a[c].r2 == b[c].r2);
        for (std::size_t i = 0; i < a[c].top.size(); ++i) {
            REQUIRE(a[c].top[i].feature == b[c].top[i].feature);
            REQUIRE(a[c].top[i].weight == b[c].top[i].weight);
        }
        REQUIRE(a[c].r2 >= 0.0);
        REQUIRE(a[c].r2 <= 1.0);
    }
    REQUIRE_THROWS_AS(lime_explain(m, x, nullptr, 3, 0.0, 2, 1), InvalidSpec);
    std::vector<double> narrow{1.0};
    REQUIRE_THROWS_AS(lime_explain(m, narrow, nullptr, 200, 0.0, 2, 1), SchemaMismatch);
}

TEST_CASE("categorical columns are perturbed from the recipe domain") {
    SynthSpec spec;
    spec.n_rows = 150;
    spec.n_numeric = 2;
    spec.n_categorical = 1;
    spec.n_classes = 2;
    auto scan = synthesize_dataset(spec, 29);
    auto recipe = fit_recipe(scan.table, infer_schema(scan.table), "Label");
    auto ft = apply_recipe(recipe, scan.table, "Label");
    auto m = fit_gradient_boost(ft, class_weights(ft.y, 2), 4, 0.2, 1.0, 0.0,
                                ModelKind::grad_boost_ordered, TreeParams{}, 7);

    auto ex = lime_explain(m, ft.X.row(0), &recipe, 300, 0.0, 3, 13);
    REQUIRE(ex.size() == 2);
    for (const auto& e : ex) {
        REQUIRE(e.top.size() == 3);
        REQUIRE(e.r2 >= 0.0);
        REQUIRE(e.r2 <= 1.0);
    }
}

// --- ablation -----------------------------------------------------------------------------------

TEST_CASE("ablation keeps informative features and collapses without them") {
    SynthSpec spec;
    spec.n_rows = 360;
    spec.n_numeric = 12;
    spec.n_informative = 4;
    spec.n_classes = 3;
    auto ft = synth_features(spec, 333);

    auto base = default_model_spec(ModelKind::random_forest);
    base.n_estimators = 10;

    ExclusionGroup informative;
    informative.name = "informative";
    informative.patterns = {"num_00", "num_01", "num_02", "num_03"};

    auto report = ablation_study(base, ft, ImportanceSource::gini, {4}, {informative}, 3, 17);
    REQUIRE(report.ranking.size() == 12);
    REQUIRE(report.rows.size() == 3);

    REQUIRE(report.rows[0].name == "all_features");
    REQUIRE(report.rows[0].delta == 0.0);
    REQUIRE(report.baseline_f1 >= 0.95);

    REQUIRE(report.rows[1].name == "top_4");
    REQUIRE(report.rows[1].features.size() == 4);
    REQUIRE(std::abs(report.rows[1].delta) <= 0.01);

    REQUIRE(report.rows[2].name == "without_informative");
    REQUIRE(report.rows[2].features.size() == 8);
    REQUIRE(report.rows[2].delta < -0.3);  // noise-only model collapses toward chance
}

TEST_CASE("ablation validates subsets and exclusion coverage") {
    SynthSpec spec;
    spec.n_rows = 100;
    spec.n_numeric = 3;
    spec.n_classes = 2;
    auto ft = synth_features(spec, 343);
    auto base = default_model_spec(ModelKind::random_forest);
    base.n_estimators = 3;

    ExclusionGroup everything;
    everything.name = "everything";
    everything.patterns = {"num_"};
    REQUIRE_THROWS_AS(ablation_study(base, ft, ImportanceSource::gini, {}, {everything}, 2, 1),
                      NothingLeft);
    REQUIRE_THROWS_AS(ablation_study(base, ft, ImportanceSource::gini, {0}, {}, 2, 1),
                      InvalidSpec);
}

TEST_CASE("permutation and shap rankings also surface the informative features") {
    SynthSpec spec;
    spec.n_rows = 200;
    spec.n_numeric = 6;
    spec.n_informative = 2;
    spec.n_classes = 2;
    auto ft = synth_features(spec, 353);
    auto base = default_model_spec(ModelKind::random_forest);
    base.n_estimators = 8;

    for (auto source : {ImportanceSource::permutation, ImportanceSource::shap}) {
        auto report = ablation_study(base, ft, source, {2}, {}, 2, 23);
        // The two informative columns are num_0 and num_1 (indices 0 and 1).
        std::vector<std::size_t> top(report.ranking.begin(), report.ranking.begin() + 2);
        std::sort(top.begin(), top.end());
        REQUIRE(top == std::vector<std::size_t>{0, 1});
        REQUIRE(std::abs(report.rows[1].delta) <= 0.05);
    }
    REQUIRE(importance_source_from("gini") == ImportanceSource::gini);
    REQUIRE(importance_source_from("shap") == ImportanceSource::shap);
    REQUIRE_THROWS_AS(importance_source_from("x"), InvalidSpec);
}
