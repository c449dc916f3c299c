#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "uavids/error.hpp"
#include "uavids/rng.hpp"
#include "uavids/table.hpp"

namespace uavids {

/// Rows with x[feature] ≤ threshold go left.
struct SplitSpec {
    int feature = -1;
    double threshold = 0.0;

    bool operator==(const SplitSpec&) const = default;
};

enum class FeatureSubset { all, sqrt_count, fixed };
enum class SplitMode { best, random };

inline constexpr std::size_t kUnlimitedDepth = std::numeric_limits<std::size_t>::max();

struct TreeParams {
    std::size_t max_depth = kUnlimitedDepth;
    std::size_t min_samples_split = 2;
    FeatureSubset feature_subset = FeatureSubset::all;
    std::size_t subset_count = 0;  // only read when feature_subset == fixed
    SplitMode split_mode = SplitMode::best;
    double min_impurity_decrease = 0.0;
};

/// Arena node. Internal nodes carry the split and weight-scaled gain of the
/// split (for importance accounting); leaves carry the payload: a class
/// probability vector for classification trees, a single weight for
/// gradient trees. `cover` is the total sample weight (classification) or
/// row count (gradient) that reached the node during growth.
struct TreeNode {
    int left = -1;
    int right = -1;
    SplitSpec split;
    double cover = 0.0;
    double split_gain = 0.0;
    std::vector<double> value;

    bool is_leaf() const { return left < 0; }
    bool operator==(const TreeNode&) const = default;
};

struct Tree {
    std::vector<TreeNode> nodes;
    int root = 0;
    std::size_t n_features = 0;

    std::span<const double> predict(std::span<const double> x) const {
        int id = root;
        while (!nodes[static_cast<std::size_t>(id)].is_leaf()) {
            const TreeNode& n = nodes[static_cast<std::size_t>(id)];
            id = x[static_cast<std::size_t>(n.split.feature)] <= n.split.threshold ? n.left
                                                                                   : n.right;
        }
        return nodes[static_cast<std::size_t>(id)].value;
    }

    std::size_t depth() const {
        std::size_t best = 0;
        std::vector<std::pair<int, std::size_t>> stack{{root, 0}};
        while (!stack.empty()) {
            auto [id, d] = stack.back();
            stack.pop_back();
            const TreeNode& n = nodes[static_cast<std::size_t>(id)];
            if (n.is_leaf()) {
                best = std::max(best, d);
            } else {
                stack.emplace_back(n.left, d + 1);
                stack.emplace_back(n.right, d + 1);
            }
        }
        return best;
    }

    /// Split gains accumulated per feature (the tree's share of Gini or
    /// boosting-gain importance).
    std::vector<double> gain_by_feature() const {
        std::vector<double> g(n_features, 0.0);
        for (const auto& n : nodes)
            if (!n.is_leaf()) g[static_cast<std::size_t>(n.split.feature)] += n.split_gain;
        return g;
    }

    bool operator==(const Tree&) const = default;
};

inline std::span<const double> tree_predict(const Tree& t, std::span<const double> x) {
    return t.predict(x);
}

/// Gini impurity of a weighted class-count vector: 1 − Σ (c_k/Σc)².
inline double gini_impurity(const std::vector<double>& weighted_counts) {
    double total = 0.0;
    for (double c : weighted_counts) total += c;
    if (total <= 0.0) throw EmptyNode("gini impurity of an empty node");
    double sq = 0.0;
    for (double c : weighted_counts) {
        double f = c / total;
        sq += f * f;
    }
    return 1.0 - sq;
}

namespace detail {

inline std::vector<std::size_t> sample_features(std::size_t d, const TreeParams& params,
                                                Rng& rng) {
    std::size_t m = d;
    if (params.feature_subset == FeatureSubset::sqrt_count)
        m = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(d))));
    else if (params.feature_subset == FeatureSubset::fixed)
        m = std::clamp<std::size_t>(params.subset_count, 1, d);
    if (m >= d) {
        std::vector<std::size_t> all(d);
        for (std::size_t j = 0; j < d; ++j) all[j] = j;
        return all;  // no randomness consumed when the subset is everything
    }
    return rng.sample_without_replacement(d, m);  // sorted ascending
}

struct FoundSplit {
    SplitSpec split;
    double decrease = 0.0;  // Δ relative to the parent node
};

/// Weighted-Gini split search over the given rows. Candidates iterate in
/// (feature ascending, threshold ascending) order and only strictly larger
/// decreases replace the incumbent, so exact ties keep the lowest feature
/// index and then the lowest threshold.
inline std::optional<FoundSplit> best_split_rows(const Matrix& X,
                                                 const std::vector<std::size_t>& rows,
                                                 const std::vector<int>& y,
                                                 const std::vector<double>& w, std::size_t K,
                                                 const TreeParams& params, Rng& rng) {
    std::vector<double> parent(K, 0.0);
    double w_total = 0.0;
    for (auto r : rows) {
        parent[static_cast<std::size_t>(y[r])] += w[r];
        w_total += w[r];
    }
    if (w_total <= 0.0) return std::nullopt;
    double g_parent = gini_impurity(parent);
    if (g_parent <= 0.0) return std::nullopt;  // pure node

    auto features = sample_features(X.cols(), params, rng);
    std::optional<FoundSplit> best;
    std::vector<std::size_t> order(rows);
    std::vector<double> left(K), right(K);

    auto evaluate = [&](std::size_t feature, double threshold) {
        std::fill(left.begin(), left.end(), 0.0);
        double w_left = 0.0;
        for (auto r : rows)
            if (X(r, feature) <= threshold) {
                left[static_cast<std::size_t>(y[r])] += w[r];
                w_left += w[r];
            }
        double w_right = w_total - w_left;
        if (w_left <= 0.0 || w_right <= 0.0) return;
        for (std::size_t k = 0; k < K; ++k) right[k] = parent[k] - left[k];
        double delta =
            g_parent - (w_left * gini_impurity(left) + w_right * gini_impurity(right)) / w_total;
        if (!best || delta > best->decrease)
            best = FoundSplit{{static_cast<int>(feature), threshold}, delta};
    };

    for (auto f : features) {
        if (params.split_mode == SplitMode::random) {
            double lo = std::numeric_limits<double>::infinity();
            double hi = -std::numeric_limits<double>::infinity();
            for (auto r : rows) {
                lo = std::min(lo, X(r, f));
                hi = std::max(hi, X(r, f));
            }
            if (lo == hi) continue;  // constant feature, no threshold drawn
            evaluate(f, rng.uniform(lo, hi));
            continue;
        }

        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return X(a, f) < X(b, f); });
        std::fill(left.begin(), left.end(), 0.0);
        double w_left = 0.0;
        for (std::size_t i = 0; i + 1 < order.size(); ++i) {
            std::size_t r = order[i];
            left[static_cast<std::size_t>(y[r])] += w[r];
            w_left += w[r];
            double a = X(r, f), b = X(order[i + 1], f);
            if (a == b) continue;
            double w_right = w_total - w_left;
            if (w_left <= 0.0 || w_right <= 0.0) continue;
            for (std::size_t k = 0; k < K; ++k) right[k] = parent[k] - left[k];
            double delta = g_parent - (w_left * gini_impurity(left) +
                                       w_right * gini_impurity(right)) /
                                          w_total;
            if (!best || delta > best->decrease)
                best = FoundSplit{{static_cast<int>(f), 0.5 * (a + b)}, delta};
        }
    }

    if (best && best->decrease > params.min_impurity_decrease) return best;
    return std::nullopt;
}

}  // namespace detail

/// Split search over a node-local sample (spec-shaped entry point).
inline std::optional<detail::FoundSplit> find_best_split(const Matrix& X_node,
                                                         const std::vector<int>& y_node,
                                                         const std::vector<double>& weights,
                                                         std::size_t K, const TreeParams& params,
                                                         Rng& rng) {
    std::vector<std::size_t> rows(X_node.rows());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    return detail::best_split_rows(X_node, rows, y_node, weights, K, params, rng);
}

/// Grows a classification tree with weighted-Gini splits. Leaves hold the
/// weighted class frequencies normalized to probabilities; each internal
/// node records cover · Δ so split gains telescope to the tree's total
/// impurity reduction.
inline Tree grow_tree(const Matrix& X, const std::vector<int>& y, const std::vector<double>& w,
                      std::size_t K, const TreeParams& params, Rng& rng) {
    if (X.rows() == 0) throw InvalidSpec("cannot grow a tree on zero rows");
    if (y.size() != X.rows() || w.size() != X.rows())
        throw InvalidSpec("labels/weights misaligned with feature matrix");
    if (params.min_samples_split < 2) throw InvalidSpec("min_samples_split must be at least 2");

    Tree tree;
    tree.n_features = X.cols();

    std::vector<std::size_t> all_rows(X.rows());
    for (std::size_t i = 0; i < all_rows.size(); ++i) all_rows[i] = i;

    auto build = [&](auto&& self, std::vector<std::size_t> rows, std::size_t depth) -> int {
        std::vector<double> counts(K, 0.0);
        double w_total = 0.0;
        std::size_t nonzero = 0;
        for (auto r : rows) {
            counts[static_cast<std::size_t>(y[r])] += w[r];
            w_total += w[r];
            nonzero += w[r] > 0.0 ? 1 : 0;
        }
        if (w_total <= 0.0) throw EmptyNode("tree node received zero total weight");

        int id = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes.back().cover = w_total;
        tree.nodes.back().value.resize(K);
        for (std::size_t k = 0; k < K; ++k) tree.nodes.back().value[k] = counts[k] / w_total;

        if (depth >= params.max_depth || nonzero < params.min_samples_split) return id;
        auto found = detail::best_split_rows(X, rows, y, w, K, params, rng);
        if (!found) return id;

        std::vector<std::size_t> left_rows, right_rows;
        for (auto r : rows)
            (X(r, static_cast<std::size_t>(found->split.feature)) <= found->split.threshold
                 ? left_rows
                 : right_rows)
                .push_back(r);
        rows.clear();
        rows.shrink_to_fit();

        int left = self(self, std::move(left_rows), depth + 1);
        int right = self(self, std::move(right_rows), depth + 1);
        TreeNode& n = tree.nodes[static_cast<std::size_t>(id)];
        n.split = found->split;
        n.split_gain = w_total * found->decrease;
        n.left = left;
        n.right = right;
        return id;
    };
    tree.root = build(build, std::move(all_rows), 0);
    return tree;
}

/// Grows a second-order regression tree for one boosting class column.
/// Gain = ½[G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ)] − γ, accepted iff > 0;
/// leaf weight w* = −G/(H+λ) with the denominator floored at 1e−16.
inline Tree grow_gradient_tree(const Matrix& X, const Matrix& g, const Matrix& h,
                               std::size_t class_k, const TreeParams& params, double lambda,
                               double gamma, Rng& rng) {
    if (X.rows() == 0) throw InvalidSpec("cannot grow a tree on zero rows");
    if (g.rows() != X.rows() || h.rows() != X.rows() || class_k >= g.cols())
        throw InvalidSpec("gradients misaligned with feature matrix");
    if (lambda < 0.0 || gamma < 0.0) throw InvalidSpec("regularizers must be nonnegative");

    Tree tree;
    tree.n_features = X.cols();

    auto score = [&](double G, double H) {
        double denom = std::max(H + lambda, 1e-16);
        return G * G / denom;
    };
    auto leaf_weight = [&](double G, double H) {
        double denom = std::max(H + lambda, 1e-16);
        return -G / denom;
    };

    std::vector<std::size_t> all_rows(X.rows());
    for (std::size_t i = 0; i < all_rows.size(); ++i) all_rows[i] = i;

    auto build = [&](auto&& self, std::vector<std::size_t> rows, std::size_t depth) -> int {
        double G = 0.0, H = 0.0;
        for (auto r : rows) {
            G += g(r, class_k);
            H += h(r, class_k);
        }
        int id = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes.back().cover = static_cast<double>(rows.size());
        tree.nodes.back().value = {leaf_weight(G, H)};

        if (depth >= params.max_depth || rows.size() < params.min_samples_split) return id;

        auto features = detail::sample_features(X.cols(), params, rng);
        std::optional<detail::FoundSplit> best;
        std::vector<std::size_t> order(rows);

        auto consider = [&](std::size_t feature, double threshold, double GL, double HL,
                            std::size_t n_left) {
            if (n_left == 0 || n_left == rows.size()) return;
            double gain =
                0.5 * (score(GL, HL) + score(G - GL, H - HL) - score(G, H)) - gamma;
            if (!best || gain > best->decrease)
                best = detail::FoundSplit{{static_cast<int>(feature), threshold}, gain};
        };

        for (auto f : features) {
            if (params.split_mode == SplitMode::random) {
                double lo = std::numeric_limits<double>::infinity();
                double hi = -std::numeric_limits<double>::infinity();
                for (auto r : rows) {
                    lo = std::min(lo, X(r, f));
                    hi = std::max(hi, X(r, f));
                }
                if (lo == hi) continue;
                double threshold = rng.uniform(lo, hi);
                double GL = 0.0, HL = 0.0;
                std::size_t n_left = 0;
                for (auto r : rows)
                    if (X(r, f) <= threshold) {
                        GL += g(r, class_k);
                        HL += h(r, class_k);
                        ++n_left;
                    }
                consider(f, threshold, GL, HL, n_left);
                continue;
            }
            std::sort(order.begin(), order.end(),
                      [&](std::size_t a, std::size_t b) { return X(a, f) < X(b, f); });
            double GL = 0.0, HL = 0.0;
            for (std::size_t i = 0; i + 1 < order.size(); ++i) {
                std::size_t r = order[i];
                GL += g(r, class_k);
                HL += h(r, class_k);
                double a = X(r, f), b = X(order[i + 1], f);
                if (a == b) continue;
                consider(f, 0.5 * (a + b), GL, HL, i + 1);
            }
        }

        if (!best || best->decrease <= 0.0) return id;

        std::vector<std::size_t> left_rows, right_rows;
        for (auto r : rows)
            (X(r, static_cast<std::size_t>(best->split.feature)) <= best->split.threshold
                 ? left_rows
                 : right_rows)
                .push_back(r);
        rows.clear();
        rows.shrink_to_fit();

        int left = self(self, std::move(left_rows), depth + 1);
        int right = self(self, std::move(right_rows), depth + 1);
        TreeNode& n = tree.nodes[static_cast<std::size_t>(id)];
        n.split = best->split;
        n.split_gain = best->decrease;
        n.left = left;
        n.right = right;
        return id;
    };
    tree.root = build(build, std::move(all_rows), 0);
    return tree;
}

}  // namespace uavids
