#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "uavids/metrics.hpp"

using namespace uavids;
using Catch::Approx;

// --- independent naive reimplementations (direct definitions) ---------------

namespace oracle {

double accuracy(const std::vector<int>& y, const std::vector<int>& yh) {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < y.size(); ++i) ok += y[i] == yh[i] ? 1 : 0;
    return static_cast<double>(ok) / static_cast<double>(y.size());
}

void class_counts(const std::vector<int>& y, const std::vector<int>& yh, int k, double& tp,
                  double& fp, double& fn) {
    tp = fp = fn = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (yh[i] == k && y[i] == k) tp += 1;
        if (yh[i] == k && y[i] != k) fp += 1;
        if (yh[i] != k && y[i] == k) fn += 1;
    }
}

double precision_macro(const std::vector<int>& y, const std::vector<int>& yh, int K) {
    double total = 0;
    for (int k = 0; k < K; ++k) {
        double tp, fp, fn;
        class_counts(y, yh, k, tp, fp, fn);
        total += tp + fp > 0 ? tp / (tp + fp) : 0.0;
    }
    return total / K;
}

double recall_macro(const std::vector<int>& y, const std::vector<int>& yh, int K) {
    double total = 0;
    for (int k = 0; k < K; ++k) {
        double tp, fp, fn;
        class_counts(y, yh, k, tp, fp, fn);
        total += tp + fn > 0 ? tp / (tp + fn) : 0.0;
    }
    return total / K;
}

double f1_macro(const std::vector<int>& y, const std::vector<int>& yh, int K) {
    double total = 0;
    for (int k = 0; k < K; ++k) {
        double tp, fp, fn;
        class_counts(y, yh, k, tp, fp, fn);
        double p = tp + fp > 0 ? tp / (tp + fp) : 0.0;
        double r = tp + fn > 0 ? tp / (tp + fn) : 0.0;
        total += p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    }
    return total / K;
}

double mcc(const std::vector<int>& y, const std::vector<int>& yh, int K) {
    double n = static_cast<double>(y.size());
    double correct = 0;
    std::vector<double> pred(K, 0), act(K, 0);
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] == yh[i]) correct += 1;
        pred[static_cast<std::size_t>(yh[i])] += 1;
        act[static_cast<std::size_t>(y[i])] += 1;
    }
    double cross = 0, p2 = 0, t2 = 0;
    for (int k = 0; k < K; ++k) {
        cross += pred[k] * act[k];
        p2 += pred[k] * pred[k];
        t2 += act[k] * act[k];
    }
    double denom = (n * n - p2) * (n * n - t2);
    return denom > 0 ? (correct * n - cross) / std::sqrt(denom) : 0.0;
}

double kappa(const std::vector<int>& y, const std::vector<int>& yh, int K) {
    double n = static_cast<double>(y.size());
    double agree = 0;
    std::vector<double> pred(K, 0), act(K, 0);
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] == yh[i]) agree += 1;
        pred[static_cast<std::size_t>(yh[i])] += 1;
        act[static_cast<std::size_t>(y[i])] += 1;
    }
    double pe = 0;
    for (int k = 0; k < K; ++k) pe += act[k] * pred[k] / (n * n);
    return std::abs(1 - pe) < 1e-15 ? 0.0 : (agree / n - pe) / (1 - pe);
}

double log_loss(const std::vector<int>& y, const Matrix& p) {
    double total = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        double q = p(i, static_cast<std::size_t>(y[i]));
        if (q < 1e-15) q = 1e-15;
        if (q > 1 - 1e-15) q = 1 - 1e-15;
        total += -std::log(q);
    }
    return total / static_cast<double>(y.size());
}

double brier(const std::vector<int>& y, const Matrix& p) {
    double total = 0;
    for (std::size_t i = 0; i < y.size(); ++i)
        for (std::size_t k = 0; k < p.cols(); ++k) {
            double t = static_cast<std::size_t>(y[i]) == k ? 1.0 : 0.0;
            total += (p(i, k) - t) * (p(i, k) - t);
        }
    return total / static_cast<double>(y.size());
}

// Pairwise Mann-Whitney: P(score_pos > score_neg) + 0.5 P(equal).
double auc_one(const std::vector<double>& s, const std::vector<bool>& pos) {
    double wins = 0, pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!pos[i]) continue;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (pos[j]) continue;
            pairs += 1;
            if (s[i] > s[j])
                wins += 1;
            else if (s[i] == s[j])
                wins += 0.5;
        }
    }
    return pairs > 0 ? wins / pairs : -1;
}

double auc_macro(const std::vector<int>& y, const Matrix& p) {
    double total = 0;
    int used = 0;
    for (std::size_t k = 0; k < p.cols(); ++k) {
        std::vector<double> s(y.size());
        std::vector<bool> pos(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) {
            s[i] = p(i, k);
            pos[i] = static_cast<std::size_t>(y[i]) == k;
        }
        double a = auc_one(s, pos);
        if (a >= 0) {
            total += a;
            ++used;
        }
    }
    return used > 0 ? total / used : 0.0;
}

}  // namespace oracle

namespace {

Matrix random_probabilities(std::mt19937& gen, std::size_t n, std::size_t k) {
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    Matrix p(n, k);
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0;
        for (std::size_t c = 0; c < k; ++c) {
            p(i, c) = dist(gen) + 1e-3;
            sum += p(i, c);
        }
        for (std::size_t c = 0; c < k; ++c) p(i, c) /= sum;
    }
    return p;
}

}  // namespace

TEST_CASE("confusion matrix counts actual by predicted") {
    auto cm = confusion_matrix({0, 0, 1, 1}, {0, 1, 1, 1}, 2);
    REQUIRE(cm.at(0, 0) == 1);
    REQUIRE(cm.at(0, 1) == 1);
    REQUIRE(cm.at(1, 0) == 0);
    REQUIRE(cm.at(1, 1) == 2);
    REQUIRE(cm.total() == 4);

    auto empty = confusion_matrix({}, {}, 3);
    REQUIRE(empty.total() == 0);
    REQUIRE_THROWS_AS(confusion_matrix({0, 5}, {0, 0}, 2), InvalidLabel);
    REQUIRE_THROWS_AS(confusion_matrix({0}, {-1}, 2), InvalidLabel);
    REQUIRE_THROWS_AS(confusion_matrix({0}, {0, 1}, 2), InvalidSpec);
}

TEST_CASE("macro precision/recall/F1 on the worked two-class case") {
    auto cm = confusion_matrix({0, 0, 1, 1}, {0, 1, 1, 1}, 2);
    auto prf = macro_prf(cm);
    REQUIRE(prf.precision_macro == Approx(5.0 / 6.0).epsilon(1e-12));
    REQUIRE(prf.recall_macro == Approx(0.75).epsilon(1e-12));
    REQUIRE(prf.f1_macro == Approx(11.0 / 15.0).epsilon(1e-12));
    REQUIRE(prf.balanced_accuracy == prf.recall_macro);
    REQUIRE(prf.per_class[0].support == 2);

    auto perfect = confusion_matrix({0, 1, 2}, {0, 1, 2}, 3);
    auto p2 = macro_prf(perfect);
    REQUIRE(p2.precision_macro == 1.0);
    REQUIRE(p2.recall_macro == 1.0);
    REQUIRE(p2.f1_macro == 1.0);
}

TEST_CASE("degenerate precision/recall conventions score zero with warnings") {
    // Nothing predicted as class 1; nothing truly class 2.
    auto cm = confusion_matrix({0, 0, 1}, {0, 2, 0}, 3);
    auto prf = macro_prf(cm);
    REQUIRE(prf.per_class[1].precision == 0.0);
    REQUIRE(prf.per_class[2].recall == 0.0);
    REQUIRE_FALSE(prf.warnings.empty());
}

TEST_CASE("multiclass MCC matches the hand-worked value and conventions") {
    REQUIRE(mcc_multiclass(confusion_matrix({0, 0, 1, 1}, {0, 1, 1, 1}, 2)) ==
            Approx(4.0 / std::sqrt(48.0)).epsilon(1e-12));
    REQUIRE(mcc_multiclass(confusion_matrix({0, 1, 2}, {0, 1, 2}, 3)) == 1.0);
    // Single-class predictor: zero variance convention.
    REQUIRE(mcc_multiclass(confusion_matrix({0, 0, 1, 1}, {0, 0, 0, 0}, 2)) == 0.0);
}

TEST_CASE("Cohen's kappa matches the hand-worked value and conventions") {
    REQUIRE(cohen_kappa(confusion_matrix({0, 0, 1, 1}, {0, 1, 1, 1}, 2)) ==
            Approx(0.5).epsilon(1e-12));
    REQUIRE(cohen_kappa(confusion_matrix({0, 1}, {0, 1}, 2)) == 1.0);
    // All mass in one cell: chance agreement is 1, kappa 0 by convention.
    REQUIRE(cohen_kappa(confusion_matrix({0, 0}, {0, 0}, 2)) == 0.0);
}

TEST_CASE("log loss clips and matches closed forms") {
    Matrix p(1, 2);
    p(0, 0) = 0.25;
    p(0, 1) = 0.75;
    REQUIRE(log_loss({1}, p) == Approx(-std::log(0.75)).epsilon(1e-12));

    Matrix uniform(4, 2, 0.5);
    REQUIRE(log_loss({0, 1, 0, 1}, uniform) == Approx(std::log(2.0)).epsilon(1e-12));

    Matrix onehot(2, 2);
    onehot(0, 0) = 1.0;
    onehot(1, 1) = 1.0;
    REQUIRE(log_loss({0, 1}, onehot) <= 1e-14);

    Matrix zero(1, 2);
    zero(0, 0) = 1.0;
    zero(0, 1) = 0.0;
    REQUIRE(log_loss({1}, zero) == Approx(-std::log(1e-15)).epsilon(1e-12));

    Matrix bad(1, 2, 0.7);
    REQUIRE_THROWS_AS(log_loss({0}, bad), InvalidProbabilities);
}

TEST_CASE("Brier score matches closed forms") {
    Matrix p(1, 2);
    p(0, 0) = 0.25;
    p(0, 1) = 0.75;
    REQUIRE(brier_score({1}, p) == Approx(0.125).epsilon(1e-12));

    Matrix uniform(3, 2, 0.5);
    REQUIRE(brier_score({0, 1, 1}, uniform) == Approx(0.5).epsilon(1e-12));

    Matrix onehot(2, 2);
    onehot(0, 0) = 1.0;
    onehot(1, 1) = 1.0;
    REQUIRE(brier_score({0, 1}, onehot) == 0.0);
}

TEST_CASE("one-vs-rest AUC handles separation, mixtures, and ties") {
    auto run = [](std::vector<double> pos, std::vector<double> neg) {
        std::vector<int> y;
        Matrix p(pos.size() + neg.size(), 2);
        std::size_t i = 0;
        for (double s : pos) {
            y.push_back(1);
            p(i, 1) = s;
            p(i, 0) = 1 - s;
            ++i;
        }
        for (double s : neg) {
            y.push_back(0);
            p(i, 1) = s;
            p(i, 0) = 1 - s;
            ++i;
        }
        auto r = roc_auc_macro(y, p);
        for (const auto& c : r.curves)
            if (c.class_index == 1) return c.auc;
        return -1.0;
    };
    REQUIRE(run({0.9, 0.8}, {0.4, 0.7}) == 1.0);
    REQUIRE(run({0.9, 0.3}, {0.4, 0.2}) == Approx(0.75).epsilon(1e-12));
    REQUIRE(run({0.5, 0.5}, {0.5, 0.5}) == Approx(0.5).epsilon(1e-12));
}

TEST_CASE("AUC skips classes lacking positives or negatives") {
    Matrix p(3, 3);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t k = 0; k < 3; ++k) p(i, k) = k == 0 ? 0.8 : 0.1;
    auto r = roc_auc_macro({0, 0, 1}, p);  // class 2 never occurs
    REQUIRE(r.skipped_classes == std::vector<int>{2});
    REQUIRE(r.curves.size() == 2);
    REQUIRE_FALSE(r.warnings.empty());
}

TEST_CASE("rank AUC equals trapezoidal area under the emitted curve") {
    std::mt19937 gen(2024);
    std::uniform_int_distribution<int> grid(0, 9);  // heavy ties on purpose
    std::uniform_int_distribution<int> coin(0, 1);
    for (int trial = 0; trial < 200; ++trial) {
        std::size_t n = 5 + static_cast<std::size_t>(gen() % 40);
        std::vector<int> y(n);
        Matrix p(n, 2);
        bool has0 = false, has1 = false;
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = coin(gen);
            (y[i] ? has1 : has0) = true;
            double s = grid(gen) / 10.0;
            p(i, 1) = s;
            p(i, 0) = 1 - s;
        }
        if (!has0 || !has1) continue;
        auto r = roc_auc_macro(y, p);
        for (const auto& c : r.curves) {
            double area = 0;
            for (std::size_t i = 1; i < c.points.size(); ++i)
                area += 0.5 * (c.points[i].first - c.points[i - 1].first) *
                        (c.points[i].second + c.points[i - 1].second);
            REQUIRE(c.auc == Approx(area).margin(1e-12));
        }
    }
}

TEST_CASE("one thousand random instances agree with naive oracles") {
    std::mt19937 gen(777);
    for (int trial = 0; trial < 1000; ++trial) {
        std::size_t n = 2 + gen() % 49;
        int K = 2 + static_cast<int>(gen() % 4);
        std::vector<int> y(n), yh(n);
        for (auto& v : y) v = static_cast<int>(gen() % static_cast<unsigned>(K));
        for (auto& v : yh) v = static_cast<int>(gen() % static_cast<unsigned>(K));
        Matrix p = random_probabilities(gen, n, static_cast<std::size_t>(K));

        auto cm = confusion_matrix(y, yh, static_cast<std::size_t>(K));
        auto prf = macro_prf(cm);
        double acc = static_cast<double>(cm.trace()) / static_cast<double>(cm.total());
        REQUIRE(acc == Approx(oracle::accuracy(y, yh)).margin(1e-12));
        REQUIRE(prf.precision_macro == Approx(oracle::precision_macro(y, yh, K)).margin(1e-12));
        REQUIRE(prf.recall_macro == Approx(oracle::recall_macro(y, yh, K)).margin(1e-12));
        REQUIRE(prf.f1_macro == Approx(oracle::f1_macro(y, yh, K)).margin(1e-12));
        REQUIRE(prf.balanced_accuracy == Approx(oracle::recall_macro(y, yh, K)).margin(1e-12));
        REQUIRE(mcc_multiclass(cm) == Approx(oracle::mcc(y, yh, K)).margin(1e-12));
        REQUIRE(cohen_kappa(cm) == Approx(oracle::kappa(y, yh, K)).margin(1e-12));
        REQUIRE(log_loss(y, p) == Approx(oracle::log_loss(y, p)).margin(1e-12));
        REQUIRE(brier_score(y, p) == Approx(oracle::brier(y, p)).margin(1e-12));
        REQUIRE(roc_auc_macro(y, p).auc_macro == Approx(oracle::auc_macro(y, p)).margin(1e-12));
    }
}

TEST_CASE("metrics are invariant under class relabeling") {
    std::mt19937 gen(31415);
    for (int trial = 0; trial < 50; ++trial) {
        std::size_t n = 10 + gen() % 40;
        std::size_t K = 3;
        std::vector<int> y(n);
        for (auto& v : y) v = static_cast<int>(gen() % K);
        Matrix p = random_probabilities(gen, n, K);
        auto base = evaluate_predictions(y, p);

        std::vector<int> perm{2, 0, 1};
        std::vector<int> y2(n);
        Matrix p2(n, K);
        for (std::size_t i = 0; i < n; ++i) {
            y2[i] = perm[static_cast<std::size_t>(y[i])];
            for (std::size_t k = 0; k < K; ++k)
                p2(i, static_cast<std::size_t>(perm[k])) = p(i, k);
        }
        auto moved = evaluate_predictions(y2, p2);
        REQUIRE(moved.accuracy == Approx(base.accuracy).margin(1e-12));
        REQUIRE(moved.precision_macro == Approx(base.precision_macro).margin(1e-12));
        REQUIRE(moved.recall_macro == Approx(base.recall_macro).margin(1e-12));
        REQUIRE(moved.f1_macro == Approx(base.f1_macro).margin(1e-12));
        REQUIRE(moved.mcc == Approx(base.mcc).margin(1e-12));
        REQUIRE(moved.cohen_kappa == Approx(base.cohen_kappa).margin(1e-12));
        REQUIRE(moved.log_loss == Approx(base.log_loss).margin(1e-12));
        REQUIRE(moved.brier_score == Approx(base.brier_score).margin(1e-12));
        REQUIRE(moved.roc_auc_macro == Approx(base.roc_auc_macro).margin(1e-12));
    }
}

TEST_CASE("correcting one wrong prediction never lowers accuracy") {
    std::vector<int> y{0, 1, 2, 1, 0};
    std::vector<int> yh{0, 2, 2, 0, 0};
    auto before = confusion_matrix(y, yh, 3);
    double acc_before = static_cast<double>(before.trace()) / 5.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] == yh[i]) continue;
        auto fixed = yh;
        fixed[i] = y[i];
        auto after = confusion_matrix(y, fixed, 3);
        REQUIRE(static_cast<double>(after.trace()) / 5.0 >= acc_before);
    }
}

TEST_CASE("evaluate_predictions assembles a consistent report") {
    std::mt19937 gen(99);
    std::size_t n = 60, K = 4;
    std::vector<int> y(n);
    for (auto& v : y) v = static_cast<int>(gen() % K);
    Matrix p = random_probabilities(gen, n, K);
    auto r = evaluate_predictions(y, p);

    REQUIRE(r.balanced_accuracy == r.recall_macro);
    REQUIRE(r.confusion.total() == n);
    REQUIRE(r.per_class.size() == K);
    REQUIRE(r.accuracy >= 0.0);
    REQUIRE(r.accuracy <= 1.0);
    REQUIRE(r.mcc >= -1.0);
    REQUIRE(r.mcc <= 1.0);
    REQUIRE(r.cohen_kappa >= -1.0);
    REQUIRE(r.cohen_kappa <= 1.0);
    REQUIRE(r.roc_auc_macro >= 0.0);
    REQUIRE(r.roc_auc_macro <= 1.0);
    REQUIRE(r.brier_score >= 0.0);
    REQUIRE(r.brier_score <= 2.0);

    // Argmax ties resolve to the lowest class index.
    Matrix tie(1, 3, 1.0 / 3.0);
    REQUIRE(argmax_labels(tie) == std::vector<int>{0});
}
