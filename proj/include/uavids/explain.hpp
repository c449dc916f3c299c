#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "uavids/ensemble.hpp"
#include "uavids/error.hpp"
#include "uavids/preprocess.hpp"
#include "uavids/rng.hpp"
#include "uavids/statcompare.hpp"
#include "uavids/table.hpp"
#include "uavids/tree.hpp"

namespace uavids {

// --- permutation importance -----------------------------------------------------

struct ImportanceRow {
    int feature = 0;
    std::string name;
    double mean = 0.0;
    double std_dev = 0.0;
};

struct ImportanceTable {
    double baseline = 0.0;
    std::vector<ImportanceRow> rows;  // sorted by mean descending
};

/// Baseline score minus the score after shuffling one column, averaged over
/// seeded repeats; each (feature, repeat) pair draws from its own RNG stream.
inline ImportanceTable permutation_importance(const EnsembleModel& m, const FeatureTable& t,
                                              const ScoreFn& metric, std::size_t repeats,
                                              std::uint64_t seed) {
    if (repeats < 1) throw InvalidSpec("permutation importance needs at least one repeat");
    ImportanceTable out;
    out.baseline = metric(t.y, argmax_labels(predict_proba(m, t)));

    FeatureTable shuffled = t;
    const std::size_t n = t.n_rows();
    std::vector<double> column(n);
    for (std::size_t j = 0; j < t.n_features(); ++j) {
        std::vector<double> samples(repeats);
        for (std::size_t r = 0; r < repeats; ++r) {
            Rng rng(seed, j * repeats + r);
            for (std::size_t i = 0; i < n; ++i) column[i] = t.X(i, j);
            rng.shuffle(column);
            for (std::size_t i = 0; i < n; ++i) shuffled.X(i, j) = column[i];
            samples[r] = out.baseline - metric(t.y, argmax_labels(predict_proba(m, shuffled)));
        }
        for (std::size_t i = 0; i < n; ++i) shuffled.X(i, j) = t.X(i, j);  // restore

        ImportanceRow row;
        row.feature = static_cast<int>(j);
        row.name = t.feature_names[j];
        for (double s : samples) row.mean += s;
        row.mean /= static_cast<double>(repeats);
        for (double s : samples) row.std_dev += (s - row.mean) * (s - row.mean);
        row.std_dev = std::sqrt(row.std_dev / static_cast<double>(repeats));
        out.rows.push_back(std::move(row));
    }
    std::sort(out.rows.begin(), out.rows.end(), [](const ImportanceRow& a, const ImportanceRow& b) {
        if (a.mean != b.mean) return a.mean > b.mean;
        return a.feature < b.feature;
    });
    return out;
}

// --- path-dependent TreeSHAP ------------------------------------------------------

namespace detail {

struct PathElement {
    int feature = -1;
    double zero_fraction = 0.0;
    double one_fraction = 0.0;
    double pweight = 0.0;
};

inline void shap_extend(std::vector<PathElement>& path, double pz, double po, int pi) {
    const auto l = static_cast<int>(path.size());
    path.push_back({pi, pz, po, l == 0 ? 1.0 : 0.0});
    for (int i = l - 1; i >= 0; --i) {
        path[static_cast<std::size_t>(i + 1)].pweight +=
            po * path[static_cast<std::size_t>(i)].pweight * static_cast<double>(i + 1) /
            static_cast<double>(l + 1);
        path[static_cast<std::size_t>(i)].pweight = pz *
                                                    path[static_cast<std::size_t>(i)].pweight *
                                                    static_cast<double>(l - i) /
                                                    static_cast<double>(l + 1);
    }
}

inline void shap_unwind(std::vector<PathElement>& path, int i) {
    const auto l = static_cast<int>(path.size());
    const double one = path[static_cast<std::size_t>(i)].one_fraction;
    const double zero = path[static_cast<std::size_t>(i)].zero_fraction;
    double next = path[static_cast<std::size_t>(l - 1)].pweight;
    for (int j = l - 2; j >= 0; --j) {
        auto& el = path[static_cast<std::size_t>(j)];
        if (one != 0.0) {
            double tmp = el.pweight;
            el.pweight = next * static_cast<double>(l) / (static_cast<double>(j + 1) * one);
            next = tmp - el.pweight * zero * static_cast<double>(l - 1 - j) /
                             static_cast<double>(l);
        } else {
            el.pweight = el.pweight * static_cast<double>(l) /
                         (zero * static_cast<double>(l - 1 - j));
        }
    }
    for (int j = i; j < l - 1; ++j) {
        path[static_cast<std::size_t>(j)].feature = path[static_cast<std::size_t>(j + 1)].feature;
        path[static_cast<std::size_t>(j)].zero_fraction =
            path[static_cast<std::size_t>(j + 1)].zero_fraction;
        path[static_cast<std::size_t>(j)].one_fraction =
            path[static_cast<std::size_t>(j + 1)].one_fraction;
    }
    path.pop_back();
}

inline double shap_unwound_sum(const std::vector<PathElement>& path, int i) {
    const auto l = static_cast<int>(path.size());
    const double one = path[static_cast<std::size_t>(i)].one_fraction;
    const double zero = path[static_cast<std::size_t>(i)].zero_fraction;
    double next = path[static_cast<std::size_t>(l - 1)].pweight;
    double total = 0.0;
    if (one != 0.0) {
        for (int j = l - 2; j >= 0; --j) {
            double tmp = next * static_cast<double>(l) / (static_cast<double>(j + 1) * one);
            total += tmp;
            next = path[static_cast<std::size_t>(j)].pweight -
                   tmp * zero * static_cast<double>(l - 1 - j) / static_cast<double>(l);
        }
    } else {
        for (int j = l - 2; j >= 0; --j)
            total += path[static_cast<std::size_t>(j)].pweight * static_cast<double>(l) /
                     (zero * static_cast<double>(l - 1 - j));
    }
    return total;
}

/// One tree, one output component; `leaf_value` maps a leaf node to the
/// output being attributed.
inline void shap_recurse(const Tree& tree, std::span<const double> x,
                         const std::function<double(const TreeNode&)>& leaf_value,
                         std::vector<double>& phi, std::vector<PathElement> path, int node_id,
                         double pz, double po, int pi) {
    shap_extend(path, pz, po, pi);
    const TreeNode& node = tree.nodes[static_cast<std::size_t>(node_id)];
    if (node.is_leaf()) {
        const double v = leaf_value(node);
        for (int i = 1; i < static_cast<int>(path.size()); ++i) {
            const auto& el = path[static_cast<std::size_t>(i)];
            phi[static_cast<std::size_t>(el.feature)] +=
                shap_unwound_sum(path, i) * (el.one_fraction - el.zero_fraction) * v;
        }
        return;
    }

    const auto f = static_cast<std::size_t>(node.split.feature);
    const bool goes_left = x[f] <= node.split.threshold;
    const int hot = goes_left ? node.left : node.right;
    const int cold = goes_left ? node.right : node.left;
    const double cover_hot = tree.nodes[static_cast<std::size_t>(hot)].cover;
    const double cover_cold = tree.nodes[static_cast<std::size_t>(cold)].cover;

    double iz = 1.0, io = 1.0;
    int k = -1;
    for (int i = 1; i < static_cast<int>(path.size()); ++i) {
        if (path[static_cast<std::size_t>(i)].feature == node.split.feature) {
            k = i;
            break;
        }
    }
    if (k >= 0) {
        iz = path[static_cast<std::size_t>(k)].zero_fraction;
        io = path[static_cast<std::size_t>(k)].one_fraction;
        shap_unwind(path, k);
    }
    shap_recurse(tree, x, leaf_value, phi, path, hot, iz * cover_hot / node.cover, io,
                 node.split.feature);
    shap_recurse(tree, x, leaf_value, phi, path, cold, iz * cover_cold / node.cover, 0.0,
                 node.split.feature);
}

inline void require_cover(const Tree& tree) {
    for (const auto& n : tree.nodes)
        if (!(n.cover > 0.0)) throw ModelLacksCover("tree node without positive cover");
}

/// Cover-weighted expectation of the tree output.
inline double tree_expectation(const Tree& tree, int node_id,
                               const std::function<double(const TreeNode&)>& leaf_value) {
    const TreeNode& node = tree.nodes[static_cast<std::size_t>(node_id)];
    if (node.is_leaf()) return leaf_value(node);
    double left = tree_expectation(tree, node.left, leaf_value);
    double right = tree_expectation(tree, node.right, leaf_value);
    return (tree.nodes[static_cast<std::size_t>(node.left)].cover * left +
            tree.nodes[static_cast<std::size_t>(node.right)].cover * right) /
           node.cover;
}

}  // namespace detail

/// Exact path-dependent attributions for a single tree output component.
/// Returns per-feature phi; `expected` receives the cover-weighted mean output.
inline std::vector<double> tree_shap_single(const Tree& tree, std::span<const double> x,
                                            const std::function<double(const TreeNode&)>& leaf_value,
                                            double* expected = nullptr) {
    detail::require_cover(tree);
    std::vector<double> phi(tree.n_features, 0.0);
    if (expected) *expected = detail::tree_expectation(tree, tree.root, leaf_value);
    if (tree.nodes[static_cast<std::size_t>(tree.root)].is_leaf()) return phi;
    detail::shap_recurse(tree, x, leaf_value, phi, {}, tree.root, 1.0, 1.0, -1);
    return phi;
}

struct Attribution {
    std::size_t instance_index = 0;
    std::string space;               // "probability" (forests, adaboost) or "logit" (boosting)
    std::vector<double> base_value;  // per class
    Matrix phi;                      // classes × source features
    std::vector<double> output;      // model output per class in `space`
};

/// Ensemble attributions in the model's margin space. Forest attributions are
/// tree-averaged probabilities; vote ensembles attribute their alpha-weighted
/// vote shares; boosting attributes logits (eta-scaled tree sum), folding
/// derived target-statistic columns back onto their source features.
inline Attribution tree_shap(const EnsembleModel& m, std::span<const double> x,
                             std::size_t instance_index = 0) {
    if (x.size() != m.n_features()) throw SchemaMismatch("instance width differs from the model");
    if (m.trees.empty()) throw InvalidSpec("model has no trees");
    const std::size_t k = m.n_classes(), d = m.n_features();

    Attribution out;
    out.instance_index = instance_index;
    out.space = m.is_boosting() ? "logit" : "probability";
    out.base_value.assign(k, 0.0);
    out.phi = Matrix(k, d);
    out.output.assign(k, 0.0);

    switch (m.kind) {
        case ModelKind::random_forest:
        case ModelKind::extra_trees: {
            const double scale = 1.0 / static_cast<double>(m.trees.size());
            for (const auto& tree : m.trees) {
                for (std::size_t c = 0; c < k; ++c) {
                    auto leaf = [c](const TreeNode& n) { return n.value[c]; };
                    double expected = 0.0;
                    auto phi = tree_shap_single(tree, x, leaf, &expected);
                    out.base_value[c] += scale * expected;
                    for (std::size_t j = 0; j < d; ++j) out.phi(c, j) += scale * phi[j];
                }
                auto v = tree.predict(x);
                for (std::size_t c = 0; c < k; ++c) out.output[c] += scale * v[c];
            }
            break;
        }
        case ModelKind::adaboost: {
            double alpha_sum = 0.0;
            for (double a : m.alphas) alpha_sum += a;
            for (std::size_t ti = 0; ti < m.trees.size(); ++ti) {
                const auto& tree = m.trees[ti];
                const double scale = m.alphas[ti] / alpha_sum;
                for (std::size_t c = 0; c < k; ++c) {
                    // The tree's vote for class c: 1 on leaves whose argmax is c.
                    auto leaf = [c](const TreeNode& n) {
                        return static_cast<std::size_t>(detail::leaf_argmax(n.value)) == c ? 1.0
                                                                                           : 0.0;
                    };
                    double expected = 0.0;
                    auto phi = tree_shap_single(tree, x, leaf, &expected);
                    out.base_value[c] += scale * expected;
                    for (std::size_t j = 0; j < d; ++j) out.phi(c, j) += scale * phi[j];
                }
                auto vote = static_cast<std::size_t>(detail::leaf_argmax(tree.predict(x)));
                out.output[vote] += scale;
            }
            break;
        }
        case ModelKind::grad_boost_regularized:
        case ModelKind::grad_boost_ordered: {
            std::vector<double> derived(x.begin(), x.end());
            std::vector<int> to_source;
            if (!m.encoder.empty()) {
                derived = m.encoder.transform_row(x);
                to_source = m.encoder.derived_to_source();
            }
            for (std::size_t c = 0; c < k; ++c) {
                out.base_value[c] = m.base_score[c];
                out.output[c] = m.base_score[c];
            }
            auto leaf = [](const TreeNode& n) { return n.value[0]; };
            for (std::size_t ti = 0; ti < m.trees.size(); ++ti) {
                const auto& tree = m.trees[ti];
                const std::size_t c = ti % k;
                double expected = 0.0;
                auto phi = tree_shap_single(tree, derived, leaf, &expected);
                out.base_value[c] += m.learning_rate * expected;
                for (std::size_t j = 0; j < phi.size(); ++j) {
                    std::size_t source =
                        to_source.empty() ? j : static_cast<std::size_t>(to_source[j]);
                    out.phi(c, source) += m.learning_rate * phi[j];
                }
                out.output[c] += m.learning_rate * tree.predict(derived)[0];
            }
            break;
        }
    }
    return out;
}

// --- brute-force Shapley oracle -------------------------------------------------------

/// Exact Shapley values of `value_fn` over coalitions encoded as bit masks
/// (bit j set = feature j present). Intended as a test oracle.
inline std::vector<double> brute_shapley_oracle(
    const std::function<double(std::uint32_t)>& value_fn, std::size_t d) {
    if (d > 12) throw TooManyFeatures("brute-force Shapley supports at most 12 features");
    const std::uint32_t count = 1u << d;

    std::vector<double> value(count);
    for (std::uint32_t mask = 0; mask < count; ++mask) value[mask] = value_fn(mask);

    std::vector<double> fact(d + 1, 1.0);
    for (std::size_t i = 1; i <= d; ++i) fact[i] = fact[i - 1] * static_cast<double>(i);

    std::vector<double> phi(d, 0.0);
    for (std::uint32_t mask = 0; mask < count; ++mask) {
        const auto s = static_cast<std::size_t>(__builtin_popcount(mask));
        for (std::size_t j = 0; j < d; ++j) {
            if (mask & (1u << j)) continue;
            double weight = fact[s] * fact[d - s - 1] / fact[d];
            phi[j] += weight * (value[mask | (1u << j)] - value[mask]);
        }
    }
    return phi;
}

/// Cover-weighted conditional expectation of a tree output with the masked
/// features fixed at x — the same conditioning TreeSHAP uses.
inline double tree_coalition_value(const Tree& tree, std::span<const double> x,
                                   std::uint32_t mask,
                                   const std::function<double(const TreeNode&)>& leaf_value) {
    detail::require_cover(tree);
    std::function<double(int)> walk = [&](int id) -> double {
        const TreeNode& node = tree.nodes[static_cast<std::size_t>(id)];
        if (node.is_leaf()) return leaf_value(node);
        const auto f = static_cast<std::size_t>(node.split.feature);
        if (mask & (1u << f))
            return walk(x[f] <= node.split.threshold ? node.left : node.right);
        double left = walk(node.left);
        double right = walk(node.right);
        return (tree.nodes[static_cast<std::size_t>(node.left)].cover * left +
                tree.nodes[static_cast<std::size_t>(node.right)].cover * right) /
               node.cover;
    };
    return walk(tree.root);
}

// --- global SHAP summary -----------------------------------------------------------------

struct ShapSummaryFeature {
    int feature = 0;
    std::string name;
    double mean_abs_phi = 0.0;
    std::vector<std::pair<double, double>> points;  // (phi, feature value) per explained row
};

struct ShapSummary {
    std::size_t class_k = 0;
    std::string space;
    std::vector<ShapSummaryFeature> features;  // ranked by mean |phi|, truncated to top_n
};

/// Attributions over all rows (or a seeded subsample of `sample_cap` rows),
/// aggregated per feature and ranked by mean absolute phi.
inline ShapSummary shap_summary(const EnsembleModel& m, const FeatureTable& t, std::size_t class_k,
                                std::size_t top_n, std::size_t sample_cap = 0,
                                std::uint64_t seed = 0) {
    if (t.n_rows() == 0) throw InvalidSpec("nothing to summarize");
    if (class_k >= m.n_classes()) throw InvalidSpec("class index out of range");

    std::vector<std::size_t> rows(t.n_rows());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    if (sample_cap > 0 && sample_cap < rows.size())
        rows = Rng(seed, 0x73686170).sample_without_replacement(rows.size(), sample_cap);

    const std::size_t d = m.n_features();
    std::vector<ShapSummaryFeature> features(d);
    for (std::size_t j = 0; j < d; ++j) {
        features[j].feature = static_cast<int>(j);
        features[j].name = m.feature_names[j];
    }

    ShapSummary out;
    out.class_k = class_k;
    for (std::size_t r : rows) {
        auto att = tree_shap(m, t.X.row(r), r);
        out.space = att.space;
        for (std::size_t j = 0; j < d; ++j) {
            double phi = att.phi(class_k, j);
            features[j].mean_abs_phi += std::abs(phi);
            features[j].points.emplace_back(phi, t.X(r, j));
        }
    }
    for (auto& f : features) f.mean_abs_phi /= static_cast<double>(rows.size());

    std::sort(features.begin(), features.end(),
              [](const ShapSummaryFeature& a, const ShapSummaryFeature& b) {
                  if (a.mean_abs_phi != b.mean_abs_phi) return a.mean_abs_phi > b.mean_abs_phi;
                  return a.feature < b.feature;
              });
    if (top_n > 0 && top_n < features.size()) features.resize(top_n);
    out.features = std::move(features);
    return out;
}

// --- LIME-style local surrogate ------------------------------------------------------------

struct LimeCoefficient {
    int feature = 0;
    std::string name;
    double weight = 0.0;
};

struct LimeExplanation {
    std::size_t class_k = 0;
    double intercept = 0.0;
    std::vector<LimeCoefficient> top;  // top_k by |weight · local feature std|
    double r2 = 0.0;                   // weighted fidelity of the surrogate
};

namespace detail {

/// Gaussian elimination with partial pivoting; throws SurrogateFailed when a
/// pivot collapses despite the ridge term.
inline std::vector<double> solve_linear(std::vector<std::vector<double>> a,
                                        std::vector<double> rhs) {
    const std::size_t n = rhs.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
        if (std::abs(a[pivot][col]) < 1e-12)
            throw SurrogateFailed("weighted least squares system is singular");
        std::swap(a[col], a[pivot]);
        std::swap(rhs[col], rhs[pivot]);
        for (std::size_t r = col + 1; r < n; ++r) {
            double factor = a[r][col] / a[col][col];
            for (std::size_t c = col; c < n; ++c) a[r][c] -= factor * a[col][c];
            rhs[r] -= factor * rhs[col];
        }
    }
    std::vector<double> x(n);
    for (std::size_t i = n; i-- > 0;) {
        double sum = rhs[i];
        for (std::size_t c = i + 1; c < n; ++c) sum -= a[i][c] * x[c];
        x[i] = sum / a[i][i];
    }
    return x;
}

}  // namespace detail

/// Local linear surrogates per class: perturb x with unit Gaussian noise in
/// the standardized feature space (categorical code columns resample a
/// uniform training-domain code when a recipe is supplied), weight samples by
/// exp(−dist²/width²), and fit ridge-damped weighted least squares to the
/// model's class probabilities. kernel_width ≤ 0 selects 0.75·√d.
inline std::vector<LimeExplanation> lime_explain(const EnsembleModel& m,
                                                 std::span<const double> x,
                                                 const PreprocessRecipe* recipe,
                                                 std::size_t n_samples, double kernel_width,
                                                 std::size_t top_k, std::uint64_t seed) {
    const std::size_t d = m.n_features(), k = m.n_classes();
    if (x.size() != d) throw SchemaMismatch("instance width differs from the model");
    if (n_samples < d + 2) throw InvalidSpec("lime needs at least d+2 samples");
    if (kernel_width <= 0.0) kernel_width = 0.75 * std::sqrt(static_cast<double>(d));

    // Categorical columns (by model metadata) with known domain sizes.
    std::vector<std::size_t> domain_size(d, 0);
    if (recipe) {
        for (int j : m.categorical_features) {
            const auto* col = recipe->find(m.feature_names[static_cast<std::size_t>(j)]);
            if (col) domain_size[static_cast<std::size_t>(j)] = col->domain.size();
        }
    }

    Rng rng(seed, 0x6c696d65);
    FeatureTable samples;
    samples.feature_names = m.feature_names;
    samples.class_names = m.class_names;
    samples.categorical_features = m.categorical_features;
    samples.X = Matrix(n_samples, d);
    samples.y.assign(n_samples, 0);
    std::vector<double> weight(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
        double dist2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            double v;
            if (domain_size[j] > 0)
                v = static_cast<double>(rng.below(domain_size[j]));
            else
                v = x[j] + rng.normal();
            samples.X(i, j) = v;
            dist2 += (v - x[j]) * (v - x[j]);
        }
        weight[i] = std::exp(-dist2 / (kernel_width * kernel_width));
    }
    auto proba = predict_proba(m, samples);

    // Weighted column moments for ranking by |weight · local std|.
    double w_total = 0.0;
    for (double w : weight) w_total += w;
    if (w_total <= 0.0) throw SurrogateFailed("kernel weights vanished");
    std::vector<double> col_mean(d, 0.0), col_std(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t i = 0; i < n_samples; ++i) col_mean[j] += weight[i] * samples.X(i, j);
        col_mean[j] /= w_total;
        for (std::size_t i = 0; i < n_samples; ++i) {
            double dv = samples.X(i, j) - col_mean[j];
            col_std[j] += weight[i] * dv * dv;
        }
        col_std[j] = std::sqrt(col_std[j] / w_total);
    }

    std::vector<LimeExplanation> out;
    const std::size_t cols = d + 1;  // intercept last
    for (std::size_t c = 0; c < k; ++c) {
        // Normal equations with ridge damping.
        std::vector<std::vector<double>> ata(cols, std::vector<double>(cols, 0.0));
        std::vector<double> atb(cols, 0.0);
        for (std::size_t i = 0; i < n_samples; ++i) {
            std::vector<double> z(cols, 1.0);
            for (std::size_t j = 0; j < d; ++j) z[j] = samples.X(i, j);
            for (std::size_t a = 0; a < cols; ++a) {
                for (std::size_t b = 0; b < cols; ++b) ata[a][b] += weight[i] * z[a] * z[b];
                atb[a] += weight[i] * z[a] * proba(i, c);
            }
        }
        for (std::size_t a = 0; a < cols; ++a) ata[a][a] += 1e-6;
        auto beta = detail::solve_linear(ata, atb);

        LimeExplanation ex;
        ex.class_k = c;
        ex.intercept = beta[d];

        double ss_res = 0.0, ss_tot = 0.0, y_mean = 0.0;
        for (std::size_t i = 0; i < n_samples; ++i) y_mean += weight[i] * proba(i, c);
        y_mean /= w_total;
        for (std::size_t i = 0; i < n_samples; ++i) {
            double fit = beta[d];
            for (std::size_t j = 0; j < d; ++j) fit += beta[j] * samples.X(i, j);
            ss_res += weight[i] * (proba(i, c) - fit) * (proba(i, c) - fit);
            ss_tot += weight[i] * (proba(i, c) - y_mean) * (proba(i, c) - y_mean);
        }
        // A numerically constant target means the surrogate is trivially faithful;
        // the floor absorbs rounding in the weighted mean (squared ulp-scale noise).
        const double tot_floor = 1e-18 * w_total;
        ex.r2 = ss_tot > tot_floor ? std::clamp(1.0 - ss_res / ss_tot, 0.0, 1.0) : 1.0;

        std::vector<std::size_t> order(d);
        for (std::size_t j = 0; j < d; ++j) order[j] = j;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            double sa = std::abs(beta[a] * col_std[a]);
            double sb = std::abs(beta[b] * col_std[b]);
            if (sa != sb) return sa > sb;
            return a < b;
        });
        for (std::size_t r = 0; r < std::min(top_k, d); ++r) {
            LimeCoefficient lc;
            lc.feature = static_cast<int>(order[r]);
            lc.name = m.feature_names[order[r]];
            lc.weight = beta[order[r]];
            ex.top.push_back(std::move(lc));
        }
        out.push_back(std::move(ex));
    }
    return out;
}

// --- ablation study ------------------------------------------------------------------------

enum class ImportanceSource { gini, permutation, shap };

inline const char* importance_source_name(ImportanceSource s) {
    switch (s) {
        case ImportanceSource::gini: return "gini";
        case ImportanceSource::permutation: return "permutation";
        case ImportanceSource::shap: return "shap";
    }
    return "unknown";
}

inline ImportanceSource importance_source_from(const std::string& s) {
    if (s == "gini") return ImportanceSource::gini;
    if (s == "permutation") return ImportanceSource::permutation;
    if (s == "shap") return ImportanceSource::shap;
    throw InvalidSpec("unknown importance source: " + s);
}

struct ExclusionGroup {
    std::string name;
    std::vector<std::string> patterns;  // substring match on feature names
};

struct AblationRow {
    std::string name;
    std::vector<std::size_t> features;  // source feature indices used
    double f1_macro = 0.0;              // mean over folds
    double delta = 0.0;                 // vs the all-features baseline
};

struct AblationReport {
    ImportanceSource source = ImportanceSource::gini;
    std::vector<std::size_t> ranking;  // all features, most important first
    double baseline_f1 = 0.0;
    std::vector<AblationRow> rows;
};

namespace detail {

inline std::vector<std::size_t> importance_ranking(const ModelSpec& spec, const FeatureTable& t,
                                                   ImportanceSource source, std::uint64_t seed) {
    auto cw = class_weights(t.y, t.n_classes());
    auto model = fit_model(spec, t, cw, seed);
    std::vector<std::size_t> ranking;
    switch (source) {
        case ImportanceSource::gini: {
            for (const auto& fi : gini_importance(model))
                ranking.push_back(static_cast<std::size_t>(fi.feature));
            break;
        }
        case ImportanceSource::permutation: {
            auto table = permutation_importance(model, t, score_f1_macro, 5, seed);
            for (const auto& row : table.rows)
                ranking.push_back(static_cast<std::size_t>(row.feature));
            break;
        }
        case ImportanceSource::shap: {
            // Global rank: mean |phi| summed over classes on a capped subsample.
            const std::size_t cap = std::min<std::size_t>(t.n_rows(), 200);
            auto rows = Rng(seed, 0x61626c61).sample_without_replacement(t.n_rows(), cap);
            std::vector<double> score(t.n_features(), 0.0);
            for (std::size_t r : rows) {
                auto att = tree_shap(model, t.X.row(r), r);
                for (std::size_t c = 0; c < t.n_classes(); ++c)
                    for (std::size_t j = 0; j < t.n_features(); ++j)
                        score[j] += std::abs(att.phi(c, j));
            }
            std::vector<std::size_t> order(t.n_features());
            for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                if (score[a] != score[b]) return score[a] > score[b];
                return a < b;
            });
            ranking = order;
            break;
        }
    }
    return ranking;
}

inline double cv_f1(const ModelSpec& spec, const FeatureTable& t, std::size_t k_folds,
                    std::uint64_t seed) {
    auto fs = cross_validate({spec}, {"base"}, t, k_folds, score_f1_macro, seed);
    double mean = 0.0;
    for (std::size_t f = 0; f < fs.folds; ++f) mean += fs.scores(0, f);
    return mean / static_cast<double>(fs.folds);
}

}  // namespace detail

/// Refits the base spec on reduced feature sets (top-N by the chosen
/// importance source, plus named exclusion groups) and reports the
/// cross-validated f1_macro delta against the all-features baseline.
inline AblationReport ablation_study(const ModelSpec& base_spec, const FeatureTable& t,
                                     ImportanceSource source,
                                     const std::vector<std::size_t>& subset_sizes,
                                     const std::vector<ExclusionGroup>& exclusion_groups,
                                     std::size_t k_folds, std::uint64_t seed) {
    AblationReport report;
    report.source = source;
    report.ranking = detail::importance_ranking(base_spec, t, source, seed);
    report.baseline_f1 = detail::cv_f1(base_spec, t, k_folds, seed);

    std::vector<std::size_t> all(t.n_features());
    for (std::size_t j = 0; j < all.size(); ++j) all[j] = j;
    report.rows.push_back({"all_features", all, report.baseline_f1, 0.0});

    auto run = [&](const std::string& name, std::vector<std::size_t> features) {
        if (features.empty())
            throw NothingLeft("ablation configuration '" + name + "' removes every feature");
        std::sort(features.begin(), features.end());
        auto reduced = t.select_features(features);
        AblationRow row;
        row.name = name;
        row.features = features;
        row.f1_macro = detail::cv_f1(base_spec, reduced, k_folds, seed);
        row.delta = row.f1_macro - report.baseline_f1;
        report.rows.push_back(std::move(row));
    };

    for (std::size_t size : subset_sizes) {
        if (size == 0) throw InvalidSpec("subset size must be positive");
        std::size_t n = std::min(size, report.ranking.size());
        std::vector<std::size_t> top(report.ranking.begin(),
                                     report.ranking.begin() + static_cast<std::ptrdiff_t>(n));
        run("top_" + std::to_string(size), std::move(top));
    }

    for (const auto& group : exclusion_groups) {
        std::vector<std::size_t> kept;
        for (std::size_t j = 0; j < t.n_features(); ++j) {
            bool excluded = false;
            for (const auto& pattern : group.patterns)
                if (t.feature_names[j].find(pattern) != std::string::npos) excluded = true;
            if (!excluded) kept.push_back(j);
        }
        run("without_" + group.name, std::move(kept));
    }
    return report;
}

}  // namespace uavids
