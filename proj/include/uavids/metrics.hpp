#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "uavids/error.hpp"
#include "uavids/table.hpp"

namespace uavids {

/// K×K count matrix, rows = actual class, columns = predicted class.
struct ConfusionMatrix {
    std::size_t k = 0;
    std::vector<std::size_t> counts;  // row-major

    ConfusionMatrix() = default;
    explicit ConfusionMatrix(std::size_t classes) : k(classes), counts(classes * classes, 0) {}

    std::size_t& at(std::size_t actual, std::size_t predicted) { return counts[actual * k + predicted]; }
    std::size_t at(std::size_t actual, std::size_t predicted) const { return counts[actual * k + predicted]; }

    std::size_t total() const {
        std::size_t n = 0;
        for (auto c : counts) n += c;
        return n;
    }
    std::size_t row_sum(std::size_t a) const {
        std::size_t n = 0;
        for (std::size_t p = 0; p < k; ++p) n += at(a, p);
        return n;
    }
    std::size_t col_sum(std::size_t p) const {
        std::size_t n = 0;
        for (std::size_t a = 0; a < k; ++a) n += at(a, p);
        return n;
    }
    std::size_t trace() const {
        std::size_t n = 0;
        for (std::size_t i = 0; i < k; ++i) n += at(i, i);
        return n;
    }

    bool operator==(const ConfusionMatrix&) const = default;
};

struct PerClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
};

struct RocCurve {
    int class_index = 0;
    double auc = 0.0;
    std::vector<std::pair<double, double>> points;  // (fpr, tpr)
};

struct MetricsReport {
    double accuracy = 0.0;
    double precision_macro = 0.0;
    double recall_macro = 0.0;
    double f1_macro = 0.0;
    double balanced_accuracy = 0.0;
    double mcc = 0.0;
    double cohen_kappa = 0.0;
    double log_loss = 0.0;
    double brier_score = 0.0;
    double roc_auc_macro = 0.0;
    ConfusionMatrix confusion;
    std::vector<PerClassMetrics> per_class;
    std::vector<RocCurve> roc_curves;
    std::vector<std::string> warnings;
};

inline ConfusionMatrix confusion_matrix(const std::vector<int>& y, const std::vector<int>& y_hat,
                                        std::size_t k) {
    if (y.size() != y_hat.size()) throw InvalidSpec("label vectors differ in length");
    ConfusionMatrix cm(k);
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] < 0 || static_cast<std::size_t>(y[i]) >= k)
            throw InvalidLabel("actual label " + std::to_string(y[i]) + " outside 0.." +
                               std::to_string(k - 1));
        if (y_hat[i] < 0 || static_cast<std::size_t>(y_hat[i]) >= k)
            throw InvalidLabel("predicted label " + std::to_string(y_hat[i]) + " outside 0.." +
                               std::to_string(k - 1));
        ++cm.at(static_cast<std::size_t>(y[i]), static_cast<std::size_t>(y_hat[i]));
    }
    return cm;
}

struct MacroPrf {
    double precision_macro = 0.0;
    double recall_macro = 0.0;
    double f1_macro = 0.0;
    double balanced_accuracy = 0.0;
    std::vector<PerClassMetrics> per_class;
    std::vector<std::string> warnings;
};

/// Per-class precision/recall/F1 with unweighted macro means. A class with
/// no predicted positives scores precision 0; one with no support scores
/// recall 0; both still count toward the macro mean.
inline MacroPrf macro_prf(const ConfusionMatrix& cm) {
    MacroPrf out;
    for (std::size_t c = 0; c < cm.k; ++c) {
        PerClassMetrics pc;
        double tp = static_cast<double>(cm.at(c, c));
        double predicted = static_cast<double>(cm.col_sum(c));
        double actual = static_cast<double>(cm.row_sum(c));
        pc.support = cm.row_sum(c);
        if (predicted > 0) {
            pc.precision = tp / predicted;
        } else {
            out.warnings.push_back("class " + std::to_string(c) +
                                   " has no predicted positives; precision set to 0");
        }
        if (actual > 0) {
            pc.recall = tp / actual;
        } else {
            out.warnings.push_back("class " + std::to_string(c) +
                                   " has no true samples; recall set to 0");
        }
        if (pc.precision + pc.recall > 0)
            pc.f1 = 2.0 * pc.precision * pc.recall / (pc.precision + pc.recall);
        out.precision_macro += pc.precision;
        out.recall_macro += pc.recall;
        out.f1_macro += pc.f1;
        out.per_class.push_back(pc);
    }
    double k = static_cast<double>(cm.k);
    out.precision_macro /= k;
    out.recall_macro /= k;
    out.f1_macro /= k;
    out.balanced_accuracy = out.recall_macro;
    return out;
}

/// Multiclass Matthews correlation from confusion-matrix marginals; a
/// zero-variance factor (single predicted or actual class) yields 0.
inline double mcc_multiclass(const ConfusionMatrix& cm) {
    double s = static_cast<double>(cm.total());
    double c = static_cast<double>(cm.trace());
    double pt = 0.0, pp = 0.0, tt = 0.0;
    for (std::size_t k = 0; k < cm.k; ++k) {
        double p_k = static_cast<double>(cm.col_sum(k));
        double t_k = static_cast<double>(cm.row_sum(k));
        pt += p_k * t_k;
        pp += p_k * p_k;
        tt += t_k * t_k;
    }
    double denom = (s * s - pp) * (s * s - tt);
    if (denom <= 0.0) return 0.0;
    return (c * s - pt) / std::sqrt(denom);
}

/// Cohen's kappa; chance agreement of exactly 1 yields 0 by convention.
inline double cohen_kappa(const ConfusionMatrix& cm) {
    double n = static_cast<double>(cm.total());
    if (n == 0) return 0.0;
    double p0 = static_cast<double>(cm.trace()) / n;
    double pe = 0.0;
    for (std::size_t k = 0; k < cm.k; ++k)
        pe += static_cast<double>(cm.row_sum(k)) * static_cast<double>(cm.col_sum(k)) / (n * n);
    if (std::abs(1.0 - pe) < 1e-15) return 0.0;
    return (p0 - pe) / (1.0 - pe);
}

namespace detail {

inline void check_probability_rows(const Matrix& p) {
    for (std::size_t i = 0; i < p.rows(); ++i) {
        double sum = 0.0;
        for (std::size_t k = 0; k < p.cols(); ++k) {
            if (!(p(i, k) >= 0.0))
                throw InvalidProbabilities("negative probability in row " + std::to_string(i));
            sum += p(i, k);
        }
        if (std::abs(sum - 1.0) > 1e-6)
            throw InvalidProbabilities("row " + std::to_string(i) + " sums to " +
                                       std::to_string(sum));
    }
}

}  // namespace detail

/// Mean negative log-likelihood with probabilities clipped to
/// [1e−15, 1−1e−15] before the log.
inline double log_loss(const std::vector<int>& y, const Matrix& p) {
    if (y.size() != p.rows() || y.empty()) throw InvalidSpec("labels and probabilities disagree");
    detail::check_probability_rows(p);
    double total = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        double q = std::clamp(p(i, static_cast<std::size_t>(y[i])), 1e-15, 1.0 - 1e-15);
        total -= std::log(q);
    }
    return total / static_cast<double>(y.size());
}

/// Multiclass Brier score: mean squared distance to the one-hot target,
/// summed over classes (range [0,2]).
inline double brier_score(const std::vector<int>& y, const Matrix& p) {
    if (y.size() != p.rows() || y.empty()) throw InvalidSpec("labels and probabilities disagree");
    detail::check_probability_rows(p);
    double total = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i)
        for (std::size_t k = 0; k < p.cols(); ++k) {
            double target = static_cast<std::size_t>(y[i]) == k ? 1.0 : 0.0;
            double d = p(i, k) - target;
            total += d * d;
        }
    return total / static_cast<double>(y.size());
}

namespace detail {

/// One-vs-rest curve and rank-statistic AUC for a single class; nullopt when
/// positives or negatives are absent.
inline std::optional<RocCurve> roc_curve_one(const std::vector<double>& scores,
                                             const std::vector<bool>& positive, int class_index) {
    std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (bool b : positive) n_pos += b ? 1 : 0;
    std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) return std::nullopt;

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    // Mann-Whitney with average ranks over ties (ascending scan).
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum_pos = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (std::size_t t = i; t < j; ++t)
            if (positive[order[t]]) rank_sum_pos += avg_rank;
        i = j;
    }
    double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);

    RocCurve curve;
    curve.class_index = class_index;
    curve.auc = u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));

    // Curve points at each distinct threshold, descending.
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    curve.points.emplace_back(0.0, 0.0);
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) {
            if (positive[order[j]])
                ++tp;
            else
                ++fp;
            ++j;
        }
        curve.points.emplace_back(static_cast<double>(fp) / static_cast<double>(n_neg),
                                  static_cast<double>(tp) / static_cast<double>(n_pos));
        i = j;
    }
    if (curve.points.back() != std::make_pair(1.0, 1.0)) curve.points.emplace_back(1.0, 1.0);
    return curve;
}

}  // namespace detail

struct RocResult {
    double auc_macro = 0.0;
    std::vector<RocCurve> curves;
    std::vector<int> skipped_classes;
    std::vector<std::string> warnings;
};

/// One-vs-rest macro AUC; classes without both positives and negatives are
/// skipped (with a warning) and excluded from the mean.
inline RocResult roc_auc_macro(const std::vector<int>& y, const Matrix& p) {
    if (y.size() != p.rows() || y.empty()) throw InvalidSpec("labels and probabilities disagree");
    RocResult out;
    std::vector<double> scores(y.size());
    std::vector<bool> positive(y.size());
    for (std::size_t k = 0; k < p.cols(); ++k) {
        for (std::size_t i = 0; i < y.size(); ++i) {
            scores[i] = p(i, k);
            positive[i] = static_cast<std::size_t>(y[i]) == k;
        }
        auto curve = detail::roc_curve_one(scores, positive, static_cast<int>(k));
        if (curve) {
            out.auc_macro += curve->auc;
            out.curves.push_back(std::move(*curve));
        } else {
            out.skipped_classes.push_back(static_cast<int>(k));
            out.warnings.push_back("class " + std::to_string(k) +
                                   " lacks positives or negatives; AUC skipped");
        }
    }
    if (!out.curves.empty())
        out.auc_macro /= static_cast<double>(out.curves.size());
    else
        out.warnings.push_back("no class had a computable AUC; macro AUC set to 0");
    return out;
}

/// Row-argmax with exact ties resolved to the lowest class index.
inline std::vector<int> argmax_labels(const Matrix& p) {
    std::vector<int> y_hat(p.rows(), 0);
    for (std::size_t i = 0; i < p.rows(); ++i) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < p.cols(); ++k)
            if (p(i, k) > p(i, best)) best = k;
        y_hat[i] = static_cast<int>(best);
    }
    return y_hat;
}

/// Assembles the full ten-metric report from true labels and a probability
/// matrix; predictions are the row argmax.
inline MetricsReport evaluate_predictions(const std::vector<int>& y, const Matrix& p) {
    if (y.empty()) throw InvalidSpec("cannot evaluate an empty prediction set");
    MetricsReport r;
    auto y_hat = argmax_labels(p);
    r.confusion = confusion_matrix(y, y_hat, p.cols());
    r.accuracy = static_cast<double>(r.confusion.trace()) / static_cast<double>(r.confusion.total());
    auto prf = macro_prf(r.confusion);
    r.precision_macro = prf.precision_macro;
    r.recall_macro = prf.recall_macro;
    r.f1_macro = prf.f1_macro;
    r.balanced_accuracy = prf.balanced_accuracy;
    r.per_class = std::move(prf.per_class);
    r.warnings = std::move(prf.warnings);
    r.mcc = mcc_multiclass(r.confusion);
    r.cohen_kappa = cohen_kappa(r.confusion);
    r.log_loss = log_loss(y, p);
    r.brier_score = brier_score(y, p);
    auto roc = roc_auc_macro(y, p);
    r.roc_auc_macro = roc.auc_macro;
    r.roc_curves = std::move(roc.curves);
    for (auto& w : roc.warnings) r.warnings.push_back(std::move(w));
    return r;
}

}  // namespace uavids
