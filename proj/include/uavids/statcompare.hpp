#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "uavids/ensemble.hpp"
#include "uavids/error.hpp"
#include "uavids/metrics.hpp"
#include "uavids/preprocess.hpp"
#include "uavids/rng.hpp"
#include "uavids/table.hpp"

namespace uavids {

// --- scoring functions ------------------------------------------------------------

/// Score a prediction vector against ground truth (higher is better).
using ScoreFn = std::function<double(const std::vector<int>&, const std::vector<int>&)>;

namespace detail {

inline std::size_t label_span(const std::vector<int>& y, const std::vector<int>& y_hat) {
    int top = 0;
    for (int v : y) top = std::max(top, v);
    for (int v : y_hat) top = std::max(top, v);
    return static_cast<std::size_t>(top) + 1;
}

}  // namespace detail

inline double score_accuracy(const std::vector<int>& y, const std::vector<int>& y_hat) {
    if (y.size() != y_hat.size() || y.empty()) throw InvalidSpec("misaligned label vectors");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < y.size(); ++i)
        if (y[i] == y_hat[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(y.size());
}

inline double score_f1_macro(const std::vector<int>& y, const std::vector<int>& y_hat) {
    auto cm = confusion_matrix(y, y_hat, detail::label_span(y, y_hat));
    return macro_prf(cm).f1_macro;
}

inline ScoreFn score_fn_from(const std::string& name) {
    if (name == "accuracy") return score_accuracy;
    if (name == "f1_macro") return score_f1_macro;
    throw InvalidSpec("unknown comparison metric: " + name);
}

// --- chi-square tail --------------------------------------------------------------

namespace detail {

/// Regularized upper incomplete gamma Q(a, x): series for small x,
/// Lentz continued fraction otherwise.
inline double gamma_q(double a, double x) {
    if (a <= 0.0 || x < 0.0) throw InvalidSpec("gamma_q domain error");
    if (x == 0.0) return 1.0;
    const double eps = 1e-15;
    const double fpmin = 1e-300;
    if (x < a + 1.0) {
        double ap = a, sum = 1.0 / a, term = sum;
        for (int i = 0; i < 500; ++i) {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if (std::abs(term) < std::abs(sum) * eps) break;
        }
        double p = sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
        return 1.0 - p;
    }
    double b = x + 1.0 - a, c = 1.0 / fpmin, d = 1.0 / b, h = d;
    for (int i = 1; i <= 500; ++i) {
        double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < fpmin) d = fpmin;
        c = b + an / c;
        if (std::abs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < eps) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

inline double standard_normal_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace detail

/// Upper-tail probability of a chi-square variate with `df` degrees of freedom.
inline double chi_square_tail(double statistic, double df) {
    if (statistic < 0.0) throw InvalidSpec("chi-square statistic must be nonnegative");
    return detail::gamma_q(df / 2.0, statistic / 2.0);
}

// --- ranking helpers ----------------------------------------------------------------

namespace detail {

/// Ranks 1..n with average ranks on ties.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        double shared = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = shared;
        i = j + 1;
    }
    return ranks;
}

}  // namespace detail

// --- cross-validation ------------------------------------------------------------------

struct FoldScores {
    std::vector<std::string> models;
    std::size_t folds = 0;
    Matrix scores;  // models × folds
};

/// Seeded stratified fold assignment: per class, shuffled indices are dealt
/// round-robin, so per-class fold sizes differ by at most one.
inline std::vector<std::size_t> stratified_folds(const std::vector<int>& y, std::size_t k_folds,
                                                 std::uint64_t seed) {
    if (k_folds < 2) throw InvalidSpec("k_folds must be at least 2");
    int top = 0;
    for (int v : y) top = std::max(top, v);
    const auto k = static_cast<std::size_t>(top) + 1;

    std::vector<std::vector<std::size_t>> by_class(k);
    for (std::size_t i = 0; i < y.size(); ++i) by_class[static_cast<std::size_t>(y[i])].push_back(i);

    std::vector<std::size_t> fold_of(y.size());
    Rng rng(seed, 0x666f6c64);
    for (auto& rows : by_class) {
        if (!rows.empty() && rows.size() < 2)
            throw StratificationImpossible("a class has fewer than two rows");
        rng.shuffle(rows);
        for (std::size_t i = 0; i < rows.size(); ++i) fold_of[rows[i]] = i % k_folds;
    }
    return fold_of;
}

namespace detail {

/// Leakage control: standardize numeric columns with statistics computed on
/// the training rows only; categorical code columns pass through.
inline void standardize_pair(FeatureTable& train, FeatureTable& test,
                             const std::vector<int>& categorical) {
    std::vector<bool> is_cat(train.n_features(), false);
    for (int j : categorical) is_cat[static_cast<std::size_t>(j)] = true;
    for (std::size_t j = 0; j < train.n_features(); ++j) {
        if (is_cat[j]) continue;
        double mean = 0.0;
        for (std::size_t i = 0; i < train.n_rows(); ++i) mean += train.X(i, j);
        mean /= static_cast<double>(train.n_rows());
        double var = 0.0;
        for (std::size_t i = 0; i < train.n_rows(); ++i) {
            double d = train.X(i, j) - mean;
            var += d * d;
        }
        double sd = std::sqrt(var / static_cast<double>(train.n_rows()));
        for (std::size_t i = 0; i < train.n_rows(); ++i)
            train.X(i, j) = sd > 0.0 ? (train.X(i, j) - mean) / sd : 0.0;
        for (std::size_t i = 0; i < test.n_rows(); ++i)
            test.X(i, j) = sd > 0.0 ? (test.X(i, j) - mean) / sd : 0.0;
    }
}

}  // namespace detail

/// Stratified k-fold scores, identical folds for every model spec. Per fold,
/// numeric features are re-standardized from the training rows only and each
/// spec is refit from scratch (the fit seed depends on the fold, not on the
/// model index, so identical specs score identically).
inline FoldScores cross_validate(const std::vector<ModelSpec>& model_specs,
                                 const std::vector<std::string>& model_names,
                                 const FeatureTable& t, std::size_t k_folds,
                                 const ScoreFn& metric, std::uint64_t seed) {
    if (model_specs.empty()) throw InvalidSpec("no model specs to cross-validate");
    if (model_specs.size() != model_names.size())
        throw InvalidSpec("model names misaligned with specs");

    auto fold_of = stratified_folds(t.y, k_folds, seed);
    FoldScores fs;
    fs.models = model_names;
    fs.folds = k_folds;
    fs.scores = Matrix(model_specs.size(), k_folds);

    for (std::size_t f = 0; f < k_folds; ++f) {
        std::vector<std::size_t> train_rows, test_rows;
        for (std::size_t i = 0; i < t.n_rows(); ++i)
            (fold_of[i] == f ? test_rows : train_rows).push_back(i);
        auto train = t.select_rows(train_rows);
        auto test = t.select_rows(test_rows);
        detail::standardize_pair(train, test, t.categorical_features);

        auto cw = class_weights(train.y, t.n_classes());
        std::uint64_t fold_state = seed + f + 1;
        std::uint64_t fit_seed = splitmix64(fold_state);
        for (std::size_t m = 0; m < model_specs.size(); ++m) {
            auto model = fit_model(model_specs[m], train, cw, fit_seed);
            auto labels = argmax_labels(predict_proba(model, test));
            fs.scores(m, f) = metric(test.y, labels);
        }
    }
    return fs;
}

// --- Friedman test ---------------------------------------------------------------------

struct FriedmanResult {
    double statistic = 0.0;
    std::size_t df = 0;
    double p = 1.0;
};

/// χ²_F = 12n/(k(k+1)) Σ_j (R̄_j − (k+1)/2)², ranks averaged on ties per fold.
inline FriedmanResult friedman_test(const FoldScores& fs) {
    const std::size_t k = fs.models.size(), n = fs.folds;
    if (k < 2 || n < 2) throw InvalidSpec("friedman test needs at least 2 models and 2 folds");

    std::vector<double> mean_rank(k, 0.0);
    std::vector<double> column(k);
    for (std::size_t f = 0; f < n; ++f) {
        for (std::size_t m = 0; m < k; ++m) column[m] = fs.scores(m, f);
        auto ranks = detail::average_ranks(column);
        for (std::size_t m = 0; m < k; ++m) mean_rank[m] += ranks[m];
    }
    for (auto& r : mean_rank) r /= static_cast<double>(n);

    const double center = (static_cast<double>(k) + 1.0) / 2.0;
    double spread = 0.0;
    for (double r : mean_rank) spread += (r - center) * (r - center);
    FriedmanResult out;
    out.statistic = 12.0 * static_cast<double>(n) /
                    (static_cast<double>(k) * (static_cast<double>(k) + 1.0)) * spread;
    out.df = k - 1;
    out.p = chi_square_tail(out.statistic, static_cast<double>(out.df));
    return out;
}

// --- Wilcoxon signed-rank ---------------------------------------------------------------

enum class WilcoxonAlternative { greater, two_sided };

struct WilcoxonResult {
    double p = 1.0;
    double w_plus = 0.0;        // positive-rank sum
    std::size_t n_effective = 0;  // pairs left after dropping zero differences
    bool degenerate = false;      // all differences were zero
    bool exact = false;           // exact enumeration vs normal approximation
};

/// Exact for n ≤ 25 (distribution of the positive-rank sum over all 2^n sign
/// assignments via a rank-sum convolution, ranks averaged on ties); normal
/// approximation with tie correction beyond. Zero differences are dropped;
/// an all-zero sample is flagged degenerate with p = 1.
inline WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a,
                                           const std::vector<double>& b,
                                           WilcoxonAlternative alternative) {
    if (a.size() != b.size() || a.empty()) throw InvalidSpec("misaligned samples");

    std::vector<double> abs_d;
    std::vector<bool> positive;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        if (d == 0.0) continue;
        abs_d.push_back(std::abs(d));
        positive.push_back(d > 0.0);
    }
    WilcoxonResult out;
    out.n_effective = abs_d.size();
    if (abs_d.empty()) {
        out.degenerate = true;
        out.p = 1.0;
        return out;
    }

    auto ranks = detail::average_ranks(abs_d);
    const std::size_t n = abs_d.size();
    for (std::size_t i = 0; i < n; ++i)
        if (positive[i]) out.w_plus += ranks[i];

    if (n <= 25) {
        out.exact = true;
        // Doubled ranks are integers even with .5 average ranks.
        std::vector<long long> scaled(n);
        long long total = 0;
        for (std::size_t i = 0; i < n; ++i) {
            scaled[i] = std::llround(2.0 * ranks[i]);
            total += scaled[i];
        }
        std::vector<double> ways(static_cast<std::size_t>(total) + 1, 0.0);
        ways[0] = 1.0;
        long long reach = 0;
        for (std::size_t i = 0; i < n; ++i) {
            reach += scaled[i];
            for (long long w = reach; w >= scaled[i]; --w)
                ways[static_cast<std::size_t>(w)] +=
                    ways[static_cast<std::size_t>(w - scaled[i])];
        }
        const double denom = std::pow(2.0, static_cast<double>(n));
        auto observed = std::llround(2.0 * out.w_plus);
        double at_or_above = 0.0, at_or_below = 0.0;
        for (long long w = 0; w <= total; ++w) {
            if (w >= observed) at_or_above += ways[static_cast<std::size_t>(w)];
            if (w <= observed) at_or_below += ways[static_cast<std::size_t>(w)];
        }
        double p_greater = at_or_above / denom;
        if (alternative == WilcoxonAlternative::greater)
            out.p = p_greater;
        else
            out.p = std::min(1.0, 2.0 * std::min(p_greater, at_or_below / denom));
        return out;
    }

    const double nn = static_cast<double>(n);
    double mu = nn * (nn + 1.0) / 4.0;
    double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
    // Tie correction: −Σ(t³−t)/48 over groups of tied |differences|.
    {
        std::vector<double> sorted = abs_d;
        std::sort(sorted.begin(), sorted.end());
        std::size_t i = 0;
        while (i < sorted.size()) {
            std::size_t j = i;
            while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
            double t = static_cast<double>(j - i + 1);
            var -= (t * t * t - t) / 48.0;
            i = j + 1;
        }
    }
    double z = (out.w_plus - mu) / std::sqrt(var);
    double p_greater = detail::standard_normal_tail(z);
    out.p = alternative == WilcoxonAlternative::greater
                ? p_greater
                : std::min(1.0, 2.0 * detail::standard_normal_tail(std::abs(z)));
    return out;
}

// --- Holm step-down adjustment -------------------------------------------------------------

/// adjusted_(i) = min(1, max_{j ≤ i} (m−j+1)·p_(j)) over ascending raw values,
/// mapped back to the input order.
inline std::vector<double> holm_adjust(const std::vector<double>& p_raw) {
    const std::size_t m = p_raw.size();
    if (m == 0) throw InvalidSpec("no p-values to adjust");
    for (double p : p_raw)
        if (p < 0.0 || p > 1.0) throw InvalidSpec("p-values must lie in [0,1]");

    std::vector<std::size_t> order(m);
    for (std::size_t i = 0; i < m; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return p_raw[a] < p_raw[b]; });

    std::vector<double> adjusted(m);
    double running = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        double scaled = static_cast<double>(m - i) * p_raw[order[i]];
        running = std::max(running, scaled);
        adjusted[order[i]] = std::min(1.0, running);
    }
    return adjusted;
}

// --- bootstrap confidence interval ------------------------------------------------------------

struct BootstrapCi {
    double mean_diff = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
};

namespace detail {

inline double interpolated_quantile(const std::vector<double>& sorted, double q) {
    double h = q * static_cast<double>(sorted.size() - 1);
    auto lo = static_cast<std::size_t>(h);
    if (lo + 1 >= sorted.size()) return sorted.back();
    double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace detail

/// Percentile bootstrap over test-set rows: each iteration resamples row
/// indices with replacement (its own counter-derived RNG stream) and scores
/// metric(A) − metric(B).
inline BootstrapCi bootstrap_diff_ci(const std::vector<int>& pred_a,
                                     const std::vector<int>& pred_b,
                                     const std::vector<int>& y_true, const ScoreFn& metric,
                                     std::size_t iterations, double confidence,
                                     std::uint64_t seed) {
    const std::size_t n = y_true.size();
    if (pred_a.size() != n || pred_b.size() != n || n == 0)
        throw InvalidSpec("misaligned predictions");
    if (iterations < 1000) throw InvalidSpec("bootstrap needs at least 1000 iterations");
    if (!(confidence > 0.0 && confidence < 1.0))
        throw InvalidSpec("confidence must lie in (0,1)");

    std::vector<double> diffs(iterations);
    std::vector<int> ys(n), as(n), bs(n);
    for (std::size_t it = 0; it < iterations; ++it) {
        Rng rng(seed, it);
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t r = rng.below(n);
            ys[i] = y_true[r];
            as[i] = pred_a[r];
            bs[i] = pred_b[r];
        }
        diffs[it] = metric(ys, as) - metric(ys, bs);
    }

    BootstrapCi out;
    for (double d : diffs) out.mean_diff += d;
    out.mean_diff /= static_cast<double>(iterations);
    std::sort(diffs.begin(), diffs.end());
    double alpha = 1.0 - confidence;
    out.ci_low = detail::interpolated_quantile(diffs, alpha / 2.0);
    out.ci_high = detail::interpolated_quantile(diffs, 1.0 - alpha / 2.0);
    return out;
}

// --- McNemar -------------------------------------------------------------------------------------

struct McNemarTable {
    std::size_t both_correct = 0;
    std::size_t a_correct_b_wrong = 0;
    std::size_t a_wrong_b_correct = 0;
    std::size_t both_wrong = 0;

    std::size_t total() const {
        return both_correct + a_correct_b_wrong + a_wrong_b_correct + both_wrong;
    }
    bool operator==(const McNemarTable&) const = default;
};

struct McNemarResult {
    McNemarTable table;
    double chi2 = 0.0;
    double p = 1.0;
};

/// Continuity-corrected χ² = (|b−c|−1)²/(b+c), zero when b+c = 0; df-1 tail.
inline McNemarResult mcnemar_from_table(const McNemarTable& table) {
    McNemarResult out;
    out.table = table;
    double b = static_cast<double>(table.a_correct_b_wrong);
    double c = static_cast<double>(table.a_wrong_b_correct);
    if (b + c > 0.0) {
        double num = std::abs(b - c) - 1.0;
        out.chi2 = num * num / (b + c);
    }
    out.p = chi_square_tail(out.chi2, 1.0);
    return out;
}

inline McNemarResult mcnemar_test(const std::vector<int>& y_true, const std::vector<int>& pred_a,
                                  const std::vector<int>& pred_b) {
    if (pred_a.size() != y_true.size() || pred_b.size() != y_true.size())
        throw InvalidSpec("misaligned predictions");
    McNemarTable table;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        bool a_ok = pred_a[i] == y_true[i];
        bool b_ok = pred_b[i] == y_true[i];
        if (a_ok && b_ok)
            ++table.both_correct;
        else if (a_ok)
            ++table.a_correct_b_wrong;
        else if (b_ok)
            ++table.a_wrong_b_correct;
        else
            ++table.both_wrong;
    }
    return mcnemar_from_table(table);
}

// --- assembled comparison report ------------------------------------------------------------------

struct PairwiseComparison {
    std::string model_a;
    std::string model_b;
    double p_raw = 1.0;
    double p_holm = 1.0;
    double mean_diff = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
};

struct ComparisonReport {
    FriedmanResult friedman;
    std::vector<PairwiseComparison> pairwise;
    std::optional<McNemarResult> mcnemar;
};

/// Friedman over the fold scores plus one-sided Wilcoxon tests for every
/// ordered-by-index pair, Holm-adjusted jointly. Confidence bounds start at
/// the fold-score mean difference; callers with holdout predictions can
/// overwrite them with a bootstrap interval.
inline ComparisonReport compare_models(const FoldScores& fs,
                                       WilcoxonAlternative alternative =
                                           WilcoxonAlternative::greater) {
    ComparisonReport report;
    report.friedman = friedman_test(fs);

    std::vector<double> raw;
    for (std::size_t i = 0; i < fs.models.size(); ++i) {
        for (std::size_t j = i + 1; j < fs.models.size(); ++j) {
            std::vector<double> a(fs.folds), b(fs.folds);
            for (std::size_t f = 0; f < fs.folds; ++f) {
                a[f] = fs.scores(i, f);
                b[f] = fs.scores(j, f);
            }
            PairwiseComparison pc;
            pc.model_a = fs.models[i];
            pc.model_b = fs.models[j];
            pc.p_raw = wilcoxon_signed_rank(a, b, alternative).p;
            for (std::size_t f = 0; f < fs.folds; ++f) pc.mean_diff += a[f] - b[f];
            pc.mean_diff /= static_cast<double>(fs.folds);
            pc.ci_low = pc.mean_diff;
            pc.ci_high = pc.mean_diff;
            raw.push_back(pc.p_raw);
            report.pairwise.push_back(std::move(pc));
        }
    }
    if (!raw.empty()) {
        auto adjusted = holm_adjust(raw);
        for (std::size_t i = 0; i < adjusted.size(); ++i)
            report.pairwise[i].p_holm = adjusted[i];
    }
    return report;
}

}  // namespace uavids
