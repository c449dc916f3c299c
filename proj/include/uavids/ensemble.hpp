#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "uavids/error.hpp"
#include "uavids/jsonio.hpp"
#include "uavids/metrics.hpp"
#include "uavids/rng.hpp"
#include "uavids/table.hpp"
#include "uavids/tree.hpp"

namespace uavids {

enum class ModelKind {
    random_forest,
    extra_trees,
    adaboost,
    grad_boost_regularized,
    grad_boost_ordered,
};

enum class AdaBoostVariant { paper, samme };

inline const char* model_kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::random_forest: return "random_forest";
        case ModelKind::extra_trees: return "extra_trees";
        case ModelKind::adaboost: return "adaboost";
        case ModelKind::grad_boost_regularized: return "grad_boost_regularized";
        case ModelKind::grad_boost_ordered: return "grad_boost_ordered";
    }
    return "unknown";
}

/// Accepts both the long serialized names and the short CLI tokens.
inline ModelKind model_kind_from(const std::string& s) {
    if (s == "random_forest" || s == "rf") return ModelKind::random_forest;
    if (s == "extra_trees" || s == "et") return ModelKind::extra_trees;
    if (s == "adaboost" || s == "ada") return ModelKind::adaboost;
    if (s == "grad_boost_regularized" || s == "gbr") return ModelKind::grad_boost_regularized;
    if (s == "grad_boost_ordered" || s == "gbo") return ModelKind::grad_boost_ordered;
    throw InvalidSpec("unknown model kind: " + s);
}

inline const char* adaboost_variant_name(AdaBoostVariant v) {
    return v == AdaBoostVariant::paper ? "paper" : "samme";
}

inline AdaBoostVariant adaboost_variant_from(const std::string& s) {
    if (s == "paper") return AdaBoostVariant::paper;
    if (s == "samme") return AdaBoostVariant::samme;
    throw InvalidSpec("unknown adaboost variant: " + s);
}

/// Target-statistics encoder for integer-coded categorical features. At
/// prediction time every category maps to its smoothed full-training-set
/// class rates; unseen codes fall back to the class priors.
struct OrderedEncoder {
    struct Column {
        int source = -1;  // feature index in the source table
        double smoothing = 1.0;
        std::vector<std::vector<double>> counts;  // [category][class]
        std::vector<double> totals;               // [category]

        bool operator==(const Column&) const = default;
    };

    std::vector<double> prior;  // class rates over the training labels
    std::vector<Column> columns;
    std::size_t n_source = 0;
    std::size_t n_classes = 0;

    bool empty() const { return columns.empty(); }
    bool operator==(const OrderedEncoder&) const = default;

    std::size_t derived_width() const {
        return n_source + columns.size() * (n_classes - 1);
    }

    /// Source feature index owning each derived column.
    std::vector<int> derived_to_source() const {
        std::vector<int> map;
        map.reserve(derived_width());
        std::size_t next = 0;
        for (std::size_t j = 0; j < n_source; ++j) {
            bool is_cat = next < columns.size() &&
                          columns[next].source == static_cast<int>(j);
            if (is_cat) {
                for (std::size_t c = 0; c < n_classes; ++c) map.push_back(static_cast<int>(j));
                ++next;
            } else {
                map.push_back(static_cast<int>(j));
            }
        }
        return map;
    }

    void encode_category(const Column& col, double raw, double* out) const {
        auto code = static_cast<long long>(std::llround(raw));
        bool known = code >= 0 && static_cast<std::size_t>(code) < col.totals.size();
        for (std::size_t c = 0; c < n_classes; ++c) {
            double count = known ? col.counts[static_cast<std::size_t>(code)][c] : 0.0;
            double total = known ? col.totals[static_cast<std::size_t>(code)] : 0.0;
            out[c] = (count + col.smoothing * prior[c]) / (total + col.smoothing);
        }
    }

    /// Full-stats encoding of one source-space row.
    std::vector<double> transform_row(std::span<const double> x) const {
        std::vector<double> out(derived_width());
        std::vector<double> buf(n_classes);
        std::size_t next = 0, o = 0;
        for (std::size_t j = 0; j < n_source; ++j) {
            bool is_cat = next < columns.size() &&
                          columns[next].source == static_cast<int>(j);
            if (is_cat) {
                encode_category(columns[next], x[j], buf.data());
                for (std::size_t c = 0; c < n_classes; ++c) out[o++] = buf[c];
                ++next;
            } else {
                out[o++] = x[j];
            }
        }
        return out;
    }

    /// Full-stats transform used at prediction time.
    Matrix transform(const Matrix& x) const {
        Matrix out(x.rows(), derived_width());
        std::vector<double> buf(n_classes);
        for (std::size_t i = 0; i < x.rows(); ++i) {
            std::size_t next = 0, o = 0;
            for (std::size_t j = 0; j < n_source; ++j) {
                bool is_cat = next < columns.size() &&
                              columns[next].source == static_cast<int>(j);
                if (is_cat) {
                    encode_category(columns[next], x(i, j), buf.data());
                    for (std::size_t c = 0; c < n_classes; ++c) out(i, o++) = buf[c];
                    ++next;
                } else {
                    out(i, o++) = x(i, j);
                }
            }
        }
        return out;
    }
};

struct TrainMeta {
    std::uint64_t seed = 0;
    std::size_t n_estimators = 0;
    std::size_t rounds_completed = 0;
    double learning_rate = 0.0;
    double lambda = 0.0;
    double gamma = 0.0;
    std::string adaboost_variant;  // empty unless kind == adaboost
    TreeParams tree_params;
    std::vector<double> loss_curve;  // boosting: training loss per round + final

    bool operator==(const TrainMeta&) const = default;
};

struct EnsembleModel {
    ModelKind kind = ModelKind::random_forest;
    std::vector<Tree> trees;     // boosting: round-major, K trees per round
    std::vector<double> alphas;  // adaboost learner weights
    double learning_rate = 0.0;
    std::vector<double> base_score;  // boosting, length K
    LabelMap class_names;
    std::vector<std::string> feature_names;
    std::vector<int> categorical_features;
    OrderedEncoder encoder;  // populated only for grad_boost_ordered
    TrainMeta train_meta;

    std::size_t n_classes() const { return class_names.size(); }
    std::size_t n_features() const { return feature_names.size(); }
    bool is_boosting() const {
        return kind == ModelKind::grad_boost_regularized || kind == ModelKind::grad_boost_ordered;
    }

    bool operator==(const EnsembleModel&) const = default;
};

inline bool operator==(const TreeParams& a, const TreeParams& b) {
    return a.max_depth == b.max_depth && a.min_samples_split == b.min_samples_split &&
           a.feature_subset == b.feature_subset && a.subset_count == b.subset_count &&
           a.split_mode == b.split_mode && a.min_impurity_decrease == b.min_impurity_decrease;
}

// --- AdaBoost learner weight --------------------------------------------------

/// paper: ½ ln((1−ε)/ε).  samme: ln((1−ε)/ε) + ln(K−1).
inline double adaboost_alpha(double epsilon, std::size_t k, AdaBoostVariant variant) {
    if (!(epsilon > 0.0 && epsilon < 1.0))
        throw InvalidError("adaboost error rate must lie strictly inside (0,1)");
    double ratio = std::log((1.0 - epsilon) / epsilon);
    if (variant == AdaBoostVariant::paper) return 0.5 * ratio;
    return ratio + std::log(static_cast<double>(k) - 1.0);
}

// --- ordered target statistics -------------------------------------------------

/// Prefix-only smoothed class rates: the code for row `i` (at permutation
/// position p) uses only rows at positions before p, so later rows can never
/// leak into earlier codes.
inline Matrix ordered_target_stats(const std::vector<double>& column, const std::vector<int>& y,
                                   const std::vector<std::size_t>& permutation,
                                   const std::vector<double>& prior, double a) {
    const std::size_t n = column.size();
    const std::size_t k = prior.size();
    if (y.size() != n || permutation.size() != n)
        throw InvalidSpec("ordered stats inputs misaligned");
    if (!(a > 0.0)) throw InvalidSpec("smoothing must be positive");
    {
        std::vector<bool> seen(n, false);
        for (auto p : permutation) {
            if (p >= n || seen[p]) throw InvalidSpec("permutation is not a bijection on rows");
            seen[p] = true;
        }
    }

    Matrix out(n, k);
    std::map<long long, std::pair<std::vector<double>, double>> stats;  // code -> (counts, total)
    for (std::size_t pos = 0; pos < n; ++pos) {
        std::size_t i = permutation[pos];
        auto code = static_cast<long long>(std::llround(column[i]));
        auto& [counts, total] = stats[code];
        if (counts.empty()) counts.assign(k, 0.0);
        for (std::size_t c = 0; c < k; ++c) out(i, c) = (counts[c] + a * prior[c]) / (total + a);
        counts[static_cast<std::size_t>(y[i])] += 1.0;
        total += 1.0;
    }
    return out;
}

// --- softmax loss and derivatives ----------------------------------------------

struct SoftmaxGrad {
    double loss = 0.0;
    Matrix g;  // N×K first derivatives
    Matrix h;  // N×K second derivatives
};

/// Weighted multiclass log loss at the given logits plus its per-row
/// per-class first and second derivatives:
/// g = w(p − 1{true}), h = w·p(1−p), loss = −Σ w log p_true / Σ w.
inline SoftmaxGrad softmax_loss_grad(const Matrix& logits, const std::vector<int>& y,
                                     const std::vector<double>& row_weights) {
    const std::size_t n = logits.rows(), k = logits.cols();
    if (y.size() != n || row_weights.size() != n)
        throw InvalidSpec("softmax inputs misaligned");
    SoftmaxGrad out;
    out.g = Matrix(n, k);
    out.h = Matrix(n, k);
    double w_total = 0.0;
    std::vector<double> p(k);
    for (std::size_t i = 0; i < n; ++i) {
        double m = logits(i, 0);
        for (std::size_t c = 1; c < k; ++c) m = std::max(m, logits(i, c));
        double z = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            p[c] = std::exp(logits(i, c) - m);
            z += p[c];
        }
        double w = row_weights[i];
        for (std::size_t c = 0; c < k; ++c) {
            p[c] /= z;
            double target = static_cast<std::size_t>(y[i]) == c ? 1.0 : 0.0;
            out.g(i, c) = w * (p[c] - target);
            out.h(i, c) = w * p[c] * (1.0 - p[c]);
        }
        out.loss -= w * std::log(std::max(p[static_cast<std::size_t>(y[i])], 1e-300));
        w_total += w;
    }
    if (w_total > 0.0) out.loss /= w_total;
    return out;
}

// --- fitting -------------------------------------------------------------------

namespace detail {

inline std::vector<double> per_row_weights(const FeatureTable& t, const ClassWeights& w) {
    std::vector<double> out(t.n_rows());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = w.of_label(t.y[i]);
    return out;
}

inline int leaf_argmax(std::span<const double> probs) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < probs.size(); ++c)
        if (probs[c] > probs[best]) best = c;
    return static_cast<int>(best);
}

inline void stamp_common(EnsembleModel& m, const FeatureTable& train, std::size_t t,
                         const TreeParams& params, std::uint64_t seed) {
    m.class_names = train.class_names;
    m.feature_names = train.feature_names;
    m.categorical_features = train.categorical_features;
    m.train_meta.seed = seed;
    m.train_meta.n_estimators = t;
    m.train_meta.tree_params = params;
}

inline EnsembleModel fit_forest(ModelKind kind, const FeatureTable& train,
                                const ClassWeights& weights, std::size_t t, TreeParams params,
                                std::uint64_t seed, bool bootstrap) {
    if (t < 1) throw InvalidSpec("n_estimators must be at least 1");
    const std::size_t n = train.n_rows(), k = train.n_classes();
    auto row_w = per_row_weights(train, weights);

    EnsembleModel m;
    m.kind = kind;
    stamp_common(m, train, t, params, seed);
    m.train_meta.rounds_completed = t;

    for (std::size_t tree_i = 0; tree_i < t; ++tree_i) {
        Rng rng(seed, tree_i);  // per-tree stream: schedule-independent
        if (bootstrap) {
            Matrix xb(n, train.n_features());
            std::vector<int> yb(n);
            std::vector<double> wb(n);
            for (std::size_t i = 0; i < n; ++i) {
                std::size_t r = rng.below(n);
                for (std::size_t j = 0; j < train.n_features(); ++j) xb(i, j) = train.X(r, j);
                yb[i] = train.y[r];
                wb[i] = row_w[r];
            }
            m.trees.push_back(grow_tree(xb, yb, wb, k, params, rng));
        } else {
            m.trees.push_back(grow_tree(train.X, train.y, row_w, k, params, rng));
        }
    }
    return m;
}

}  // namespace detail

/// Bagged Gini forest: per-tree bootstrap resample, per-row class weights,
/// soft-voted probabilities.
inline EnsembleModel fit_random_forest(const FeatureTable& train, const ClassWeights& weights,
                                       std::size_t t, TreeParams params, std::uint64_t seed) {
    return detail::fit_forest(ModelKind::random_forest, train, weights, t, params, seed, true);
}

/// Extra-Trees style forest: whole training set per tree, random thresholds
/// (per params). The bootstrap knob exists to express the parameter
/// equivalence with the bagged forest.
inline EnsembleModel fit_extra_trees(const FeatureTable& train, const ClassWeights& weights,
                                     std::size_t t, TreeParams params, std::uint64_t seed,
                                     bool bootstrap = false) {
    return detail::fit_forest(ModelKind::extra_trees, train, weights, t, params, seed, bootstrap);
}

/// Sequential reweighting with weighted-error learner weights. A first-round
/// learner at or above the error threshold is retained with weight 1 so the
/// model still predicts (degenerately); later such rounds are discarded and
/// boosting stops. A zero-error round is kept with the capped weight at
/// ε = 1e−10 and also stops boosting.
inline EnsembleModel fit_adaboost(const FeatureTable& train, const ClassWeights& weights,
                                  std::size_t t, TreeParams base_params, AdaBoostVariant variant,
                                  std::uint64_t seed) {
    if (t < 1) throw InvalidSpec("n_estimators must be at least 1");
    const std::size_t n = train.n_rows(), k = train.n_classes();

    EnsembleModel m;
    m.kind = ModelKind::adaboost;
    detail::stamp_common(m, train, t, base_params, seed);
    m.train_meta.adaboost_variant = adaboost_variant_name(variant);

    std::vector<double> w = detail::per_row_weights(train, weights);
    double w_sum = 0.0;
    for (double v : w) w_sum += v;
    for (double& v : w) v /= w_sum;

    const double threshold =
        variant == AdaBoostVariant::paper ? 0.5 : 1.0 - 1.0 / static_cast<double>(k);

    for (std::size_t round = 0; round < t; ++round) {
        Rng rng(seed, round);
        Tree tree = grow_tree(train.X, train.y, w, k, base_params, rng);

        double epsilon = 0.0;
        std::vector<bool> wrong(n);
        for (std::size_t i = 0; i < n; ++i) {
            wrong[i] = detail::leaf_argmax(tree.predict(train.X.row(i))) != train.y[i];
            if (wrong[i]) epsilon += w[i];
        }

        if (epsilon <= 0.0) {
            m.trees.push_back(std::move(tree));
            m.alphas.push_back(adaboost_alpha(1e-10, k, variant));
            break;
        }
        if (epsilon >= threshold) {
            if (m.trees.empty()) {
                m.trees.push_back(std::move(tree));
                m.alphas.push_back(1.0);
            }
            break;
        }

        double alpha = adaboost_alpha(epsilon, k, variant);
        m.trees.push_back(std::move(tree));
        m.alphas.push_back(alpha);

        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (wrong[i]) w[i] *= std::exp(alpha);
            total += w[i];
        }
        for (double& v : w) v /= total;
    }
    m.train_meta.rounds_completed = m.trees.size();
    return m;
}

namespace detail {

inline std::vector<double> class_priors(const std::vector<int>& y, std::size_t k) {
    std::vector<double> prior(k, 0.0);
    for (int label : y) prior[static_cast<std::size_t>(label)] += 1.0;
    for (std::size_t c = 0; c < k; ++c) {
        if (prior[c] == 0.0)
            throw MissingClass("class " + std::to_string(c) + " absent from training labels");
        prior[c] /= static_cast<double>(y.size());
    }
    return prior;
}

inline OrderedEncoder build_ordered_encoder(const FeatureTable& train, double smoothing) {
    OrderedEncoder enc;
    enc.n_source = train.n_features();
    enc.n_classes = train.n_classes();
    enc.prior = class_priors(train.y, enc.n_classes);

    std::vector<int> cats = train.categorical_features;
    std::sort(cats.begin(), cats.end());
    for (int j : cats) {
        OrderedEncoder::Column col;
        col.source = j;
        col.smoothing = smoothing;
        long long max_code = -1;
        for (std::size_t i = 0; i < train.n_rows(); ++i) {
            auto code = static_cast<long long>(std::llround(train.X(i, static_cast<std::size_t>(j))));
            if (code < 0) throw InvalidSpec("negative categorical code in training data");
            max_code = std::max(max_code, code);
        }
        col.counts.assign(static_cast<std::size_t>(max_code + 1),
                          std::vector<double>(enc.n_classes, 0.0));
        col.totals.assign(static_cast<std::size_t>(max_code + 1), 0.0);
        for (std::size_t i = 0; i < train.n_rows(); ++i) {
            auto code = static_cast<std::size_t>(
                std::llround(train.X(i, static_cast<std::size_t>(j))));
            col.counts[code][static_cast<std::size_t>(train.y[i])] += 1.0;
            col.totals[code] += 1.0;
        }
        enc.columns.push_back(std::move(col));
    }
    return enc;
}

/// Training matrix in the encoder's derived layout, with the causal
/// prefix-only target statistics in place of categorical code columns.
inline Matrix ordered_training_matrix(const FeatureTable& train, const OrderedEncoder& enc,
                                      const std::vector<std::size_t>& permutation) {
    Matrix out(train.n_rows(), enc.derived_width());
    std::size_t next = 0, o = 0;
    for (std::size_t j = 0; j < enc.n_source; ++j) {
        bool is_cat =
            next < enc.columns.size() && enc.columns[next].source == static_cast<int>(j);
        if (is_cat) {
            std::vector<double> column(train.n_rows());
            for (std::size_t i = 0; i < train.n_rows(); ++i) column[i] = train.X(i, j);
            Matrix codes = ordered_target_stats(column, train.y, permutation, enc.prior,
                                                enc.columns[next].smoothing);
            for (std::size_t i = 0; i < train.n_rows(); ++i)
                for (std::size_t c = 0; c < enc.n_classes; ++c) out(i, o + c) = codes(i, c);
            o += enc.n_classes;
            ++next;
        } else {
            for (std::size_t i = 0; i < train.n_rows(); ++i) out(i, o) = train.X(i, j);
            ++o;
        }
    }
    return out;
}

}  // namespace detail

/// One-vs-rest second-order boosting: per round, one gradient tree per class
/// fit to the softmax derivatives, logits advanced by η·tree. Ordered mode
/// first rewrites categorical codes as causal target statistics under one
/// seeded permutation (full-training statistics are kept for prediction).
inline EnsembleModel fit_gradient_boost(const FeatureTable& train, const ClassWeights& weights,
                                        std::size_t t, double eta, double lambda, double gamma,
                                        ModelKind mode, TreeParams tree_params,
                                        std::uint64_t seed) {
    if (mode != ModelKind::grad_boost_regularized && mode != ModelKind::grad_boost_ordered)
        throw InvalidSpec("gradient boosting mode must be regularized or ordered");
    if (t < 1) throw InvalidSpec("n_estimators must be at least 1");
    if (eta < 0.0) throw InvalidSpec("learning rate must be nonnegative");

    const std::size_t n = train.n_rows(), k = train.n_classes();
    EnsembleModel m;
    m.kind = mode;
    detail::stamp_common(m, train, t, tree_params, seed);
    m.train_meta.rounds_completed = t;
    m.learning_rate = eta;
    m.train_meta.learning_rate = eta;
    m.train_meta.lambda = lambda;
    m.train_meta.gamma = gamma;

    auto prior = detail::class_priors(train.y, k);
    m.base_score.resize(k);
    for (std::size_t c = 0; c < k; ++c) m.base_score[c] = std::log(prior[c]);

    Matrix x_train = train.X;
    if (mode == ModelKind::grad_boost_ordered && !train.categorical_features.empty()) {
        m.encoder = detail::build_ordered_encoder(train, 1.0);
        // Dedicated stream well above any tree index, so the permutation
        // never shares a stream with tree growth.
        auto permutation = Rng(seed, 0x706572).permutation(n);
        x_train = detail::ordered_training_matrix(train, m.encoder, permutation);
    }

    auto row_w = detail::per_row_weights(train, weights);
    Matrix logits(n, k);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < k; ++c) logits(i, c) = m.base_score[c];

    for (std::size_t round = 0; round < t; ++round) {
        auto sg = softmax_loss_grad(logits, train.y, row_w);
        m.train_meta.loss_curve.push_back(sg.loss);
        for (std::size_t c = 0; c < k; ++c) {
            Rng rng(seed, round * k + c);
            Tree tree = grow_gradient_tree(x_train, sg.g, sg.h, c, tree_params, lambda, gamma, rng);
            for (std::size_t i = 0; i < n; ++i) logits(i, c) += eta * tree.predict(x_train.row(i))[0];
            m.trees.push_back(std::move(tree));
        }
    }
    m.train_meta.loss_curve.push_back(softmax_loss_grad(logits, train.y, row_w).loss);
    return m;
}

// --- prediction ------------------------------------------------------------------

inline Matrix predict_proba(const EnsembleModel& m, const FeatureTable& t) {
    if (t.feature_names != m.feature_names)
        throw SchemaMismatch("feature names/order differ from the model's training table");
    const std::size_t n = t.n_rows(), k = m.n_classes();
    Matrix p(n, k);

    switch (m.kind) {
        case ModelKind::random_forest:
        case ModelKind::extra_trees: {
            for (std::size_t i = 0; i < n; ++i) {
                auto row = t.X.row(i);
                for (const auto& tree : m.trees) {
                    auto v = tree.predict(row);
                    for (std::size_t c = 0; c < k; ++c) p(i, c) += v[c];
                }
                for (std::size_t c = 0; c < k; ++c) p(i, c) /= static_cast<double>(m.trees.size());
            }
            break;
        }
        case ModelKind::adaboost: {
            double alpha_sum = 0.0;
            for (double a : m.alphas) alpha_sum += a;
            for (std::size_t i = 0; i < n; ++i) {
                auto row = t.X.row(i);
                for (std::size_t j = 0; j < m.trees.size(); ++j) {
                    auto vote = static_cast<std::size_t>(
                        detail::leaf_argmax(m.trees[j].predict(row)));
                    p(i, vote) += m.alphas[j];
                }
                for (std::size_t c = 0; c < k; ++c) p(i, c) /= alpha_sum;
            }
            break;
        }
        case ModelKind::grad_boost_regularized:
        case ModelKind::grad_boost_ordered: {
            Matrix x = m.encoder.empty() ? t.X : m.encoder.transform(t.X);
            std::vector<double> logit(k);
            for (std::size_t i = 0; i < n; ++i) {
                auto row = x.row(i);
                for (std::size_t c = 0; c < k; ++c) logit[c] = m.base_score[c];
                for (std::size_t j = 0; j < m.trees.size(); ++j)
                    logit[j % k] += m.learning_rate * m.trees[j].predict(row)[0];
                double mx = *std::max_element(logit.begin(), logit.end());
                double z = 0.0;
                for (std::size_t c = 0; c < k; ++c) {
                    p(i, c) = std::exp(logit[c] - mx);
                    z += p(i, c);
                }
                for (std::size_t c = 0; c < k; ++c) p(i, c) /= z;
            }
            break;
        }
    }
    return p;
}

inline MetricsReport evaluate_model(const EnsembleModel& m, const FeatureTable& t) {
    return evaluate_predictions(t.y, predict_proba(m, t));
}

// --- importance ------------------------------------------------------------------

struct FeatureImportance {
    int feature = 0;
    double importance = 0.0;

    bool operator==(const FeatureImportance&) const = default;
};

/// Split-gain importance in the source feature space (derived target-stat
/// columns fold back onto their categorical source), averaged over trees and
/// normalized to sum 1; ranked descending with index tiebreak.
inline std::vector<FeatureImportance> gini_importance(const EnsembleModel& m) {
    if (m.trees.empty()) throw InvalidSpec("model has no trees");
    const std::size_t d = m.n_features();
    std::vector<int> to_source;
    if (!m.encoder.empty()) to_source = m.encoder.derived_to_source();

    std::vector<double> acc(d, 0.0);
    for (const auto& tree : m.trees) {
        auto gains = tree.gain_by_feature();
        for (std::size_t j = 0; j < gains.size(); ++j) {
            std::size_t source = to_source.empty() ? j : static_cast<std::size_t>(to_source[j]);
            acc[source] += gains[j];
        }
    }
    double total = 0.0;
    for (double v : acc) total += v;
    std::vector<FeatureImportance> out(d);
    for (std::size_t j = 0; j < d; ++j)
        out[j] = {static_cast<int>(j), total > 0.0 ? acc[j] / total : 0.0};
    std::sort(out.begin(), out.end(), [](const FeatureImportance& a, const FeatureImportance& b) {
        if (a.importance != b.importance) return a.importance > b.importance;
        return a.feature < b.feature;
    });
    return out;
}

// --- canonical model specs ---------------------------------------------------------

struct ModelSpec {
    ModelKind kind = ModelKind::random_forest;
    std::size_t n_estimators = 100;
    TreeParams tree;
    double learning_rate = 0.3;
    double lambda = 1.0;
    double gamma = 0.0;
    AdaBoostVariant variant = AdaBoostVariant::samme;
};

inline ModelSpec default_model_spec(ModelKind kind) {
    ModelSpec s;
    s.kind = kind;
    switch (kind) {
        case ModelKind::random_forest:
            s.tree.feature_subset = FeatureSubset::sqrt_count;
            break;
        case ModelKind::extra_trees:
            s.tree.feature_subset = FeatureSubset::sqrt_count;
            s.tree.split_mode = SplitMode::random;
            break;
        case ModelKind::adaboost:
            s.tree.max_depth = 1;  // stump base learner
            break;
        case ModelKind::grad_boost_regularized:
            s.tree.max_depth = 6;
            s.learning_rate = 0.3;
            break;
        case ModelKind::grad_boost_ordered:
            s.tree.max_depth = 6;
            s.learning_rate = 0.1;
            break;
    }
    return s;
}

inline EnsembleModel fit_model(const ModelSpec& spec, const FeatureTable& train,
                               const ClassWeights& weights, std::uint64_t seed) {
    switch (spec.kind) {
        case ModelKind::random_forest:
            return fit_random_forest(train, weights, spec.n_estimators, spec.tree, seed);
        case ModelKind::extra_trees:
            return fit_extra_trees(train, weights, spec.n_estimators, spec.tree, seed);
        case ModelKind::adaboost:
            return fit_adaboost(train, weights, spec.n_estimators, spec.tree, spec.variant, seed);
        case ModelKind::grad_boost_regularized:
        case ModelKind::grad_boost_ordered:
            return fit_gradient_boost(train, weights, spec.n_estimators, spec.learning_rate,
                                      spec.lambda, spec.gamma, spec.kind, spec.tree, seed);
    }
    throw InvalidSpec("unknown model kind");
}

// --- persistence -------------------------------------------------------------------

namespace detail {

inline void write_tree_params(JsonWriter& w, const TreeParams& p) {
    w.begin_object();
    w.key("max_depth").value(p.max_depth == kUnlimitedDepth ? -1 : static_cast<int>(p.max_depth));
    w.key("min_samples_split").value(p.min_samples_split);
    if (p.feature_subset == FeatureSubset::all)
        w.key("feature_subset").value("all");
    else if (p.feature_subset == FeatureSubset::sqrt_count)
        w.key("feature_subset").value("sqrt");
    else
        w.key("feature_subset").value(p.subset_count);
    w.key("split_mode").value(p.split_mode == SplitMode::best ? "best" : "random");
    w.key("min_impurity_decrease").value(p.min_impurity_decrease);
    w.end_object();
}

inline TreeParams read_tree_params(const nlohmann::json& j) {
    TreeParams p;
    auto depth = j.at("max_depth").get<long long>();
    p.max_depth = depth < 0 ? kUnlimitedDepth : static_cast<std::size_t>(depth);
    p.min_samples_split = j.at("min_samples_split").get<std::size_t>();
    const auto& fs = j.at("feature_subset");
    if (fs.is_string()) {
        p.feature_subset = fs.get<std::string>() == "all" ? FeatureSubset::all
                                                          : FeatureSubset::sqrt_count;
    } else {
        p.feature_subset = FeatureSubset::fixed;
        p.subset_count = fs.get<std::size_t>();
    }
    p.split_mode =
        j.at("split_mode").get<std::string>() == "best" ? SplitMode::best : SplitMode::random;
    p.min_impurity_decrease = j.at("min_impurity_decrease").get<double>();
    return p;
}

}  // namespace detail

inline void save_model(const EnsembleModel& m, const std::filesystem::path& path) {
    JsonWriter w;
    w.begin_object();
    w.key("format").value("uavids-model");
    w.key("format_version").value(1);
    w.key("kind").value(model_kind_name(m.kind));
    w.key("K").value(m.n_classes());
    w.key("d").value(m.n_features());
    w.key("feature_names").array_of(m.feature_names);
    w.key("class_names").array_of(m.class_names.names());
    w.key("categorical_features").begin_array();
    for (int j : m.categorical_features) w.value(j);
    w.end_array();
    w.key("learning_rate").value(m.learning_rate);
    w.key("base_score").array_of(m.base_score);
    w.key("alphas").array_of(m.alphas);

    w.key("train_meta").begin_object();
    w.key("seed").value(static_cast<std::size_t>(m.train_meta.seed));
    w.key("n_estimators").value(m.train_meta.n_estimators);
    w.key("rounds_completed").value(m.train_meta.rounds_completed);
    w.key("learning_rate").value(m.train_meta.learning_rate);
    w.key("lambda").value(m.train_meta.lambda);
    w.key("gamma").value(m.train_meta.gamma);
    w.key("adaboost_variant").value(m.train_meta.adaboost_variant);
    w.key("tree_params");
    detail::write_tree_params(w, m.train_meta.tree_params);
    w.key("loss_curve").array_of(m.train_meta.loss_curve);
    w.end_object();

    w.key("encoder");
    if (m.encoder.empty()) {
        w.begin_object().end_object();
    } else {
        w.begin_object();
        w.key("n_source").value(m.encoder.n_source);
        w.key("n_classes").value(m.encoder.n_classes);
        w.key("prior").array_of(m.encoder.prior);
        w.key("columns").begin_array();
        for (const auto& col : m.encoder.columns) {
            w.begin_object();
            w.key("source").value(col.source);
            w.key("smoothing").value(col.smoothing);
            w.key("totals").array_of(col.totals);
            w.key("counts").begin_array();
            for (const auto& row : col.counts) w.array_of(row);
            w.end_array();
            w.end_object();
        }
        w.end_array();
        w.end_object();
    }

    w.key("trees").begin_array();
    for (const auto& tree : m.trees) {
        w.begin_object();
        w.key("n_features").value(tree.n_features);
        w.key("nodes").begin_array();
        for (const auto& n : tree.nodes) {
            w.begin_object();
            if (n.is_leaf()) {
                w.key("kind").value("leaf");
                w.key("value").array_of(n.value);
            } else {
                w.key("kind").value("split");
                w.key("feature").value(n.split.feature);
                w.key("threshold").value(n.split.threshold);
                w.key("left").value(n.left);
                w.key("right").value(n.right);
                w.key("gain").value(n.split_gain);
                w.key("value").array_of(n.value);
            }
            w.key("cover").value(n.cover);
            w.end_object();
        }
        w.end_array();
        w.end_object();
    }
    w.end_array();
    w.end_object();
    atomic_write_file(path, w.str());
}

inline EnsembleModel load_model(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file_bytes(path));
    } catch (const nlohmann::json::exception& e) {
        throw DecodeError("cannot parse model file " + path.string() + ": " + e.what());
    }
    try {
        if (j.value("format", "") != "uavids-model")
            throw DecodeError("not a model file: " + path.string());
        if (j.at("format_version").get<int>() != 1)
            throw UnsupportedModelVersion("model format version " +
                                          j.at("format_version").dump() + " is not supported");

        EnsembleModel m;
        m.kind = model_kind_from(j.at("kind").get<std::string>());
        {
            std::vector<std::string> names;
            for (const auto& s : j.at("class_names")) names.push_back(s.get<std::string>());
            m.class_names = LabelMap(std::move(names));
        }
        for (const auto& s : j.at("feature_names")) m.feature_names.push_back(s.get<std::string>());
        for (const auto& v : j.at("categorical_features"))
            m.categorical_features.push_back(v.get<int>());
        m.learning_rate = j.at("learning_rate").get<double>();
        for (const auto& v : j.at("base_score")) m.base_score.push_back(v.get<double>());
        for (const auto& v : j.at("alphas")) m.alphas.push_back(v.get<double>());

        const auto& meta = j.at("train_meta");
        m.train_meta.seed = meta.at("seed").get<std::uint64_t>();
        m.train_meta.n_estimators = meta.at("n_estimators").get<std::size_t>();
        m.train_meta.rounds_completed = meta.at("rounds_completed").get<std::size_t>();
        m.train_meta.learning_rate = meta.at("learning_rate").get<double>();
        m.train_meta.lambda = meta.at("lambda").get<double>();
        m.train_meta.gamma = meta.at("gamma").get<double>();
        m.train_meta.adaboost_variant = meta.at("adaboost_variant").get<std::string>();
        m.train_meta.tree_params = detail::read_tree_params(meta.at("tree_params"));
        for (const auto& v : meta.at("loss_curve"))
            m.train_meta.loss_curve.push_back(v.get<double>());

        const auto& enc = j.at("encoder");
        if (enc.contains("columns")) {
            m.encoder.n_source = enc.at("n_source").get<std::size_t>();
            m.encoder.n_classes = enc.at("n_classes").get<std::size_t>();
            for (const auto& v : enc.at("prior")) m.encoder.prior.push_back(v.get<double>());
            for (const auto& cj : enc.at("columns")) {
                OrderedEncoder::Column col;
                col.source = cj.at("source").get<int>();
                col.smoothing = cj.at("smoothing").get<double>();
                for (const auto& v : cj.at("totals")) col.totals.push_back(v.get<double>());
                for (const auto& row : cj.at("counts")) {
                    std::vector<double> r;
                    for (const auto& v : row) r.push_back(v.get<double>());
                    col.counts.push_back(std::move(r));
                }
                m.encoder.columns.push_back(std::move(col));
            }
        }

        for (const auto& tj : j.at("trees")) {
            Tree tree;
            tree.n_features = tj.at("n_features").get<std::size_t>();
            const auto& nodes = tj.at("nodes");
            for (const auto& nj : nodes) {
                TreeNode n;
                n.cover = nj.at("cover").get<double>();
                for (const auto& v : nj.at("value")) n.value.push_back(v.get<double>());
                if (nj.at("kind").get<std::string>() == "split") {
                    n.split.feature = nj.at("feature").get<int>();
                    n.split.threshold = nj.at("threshold").get<double>();
                    n.left = nj.at("left").get<int>();
                    n.right = nj.at("right").get<int>();
                    n.split_gain = nj.at("gain").get<double>();
                    if (n.left < 0 || n.right < 0 ||
                        static_cast<std::size_t>(n.left) >= nodes.size() ||
                        static_cast<std::size_t>(n.right) >= nodes.size())
                        throw DecodeError("tree node child index out of range in " +
                                          path.string());
                }
                tree.nodes.push_back(std::move(n));
            }
            if (tree.nodes.empty()) throw DecodeError("empty tree in " + path.string());
            m.trees.push_back(std::move(tree));
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw DecodeError("malformed model file " + path.string() + ": " + e.what());
    }
}

}  // namespace uavids
