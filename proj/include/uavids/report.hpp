#pragma once

// Byte-stable report serialization: JSON (stable key order, 17-digit floats)
// and CSV tables shaped like the toolkit's published result tables.

#include <json.hpp>

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "uavids/csv.hpp"
#include "uavids/ensemble.hpp"
#include "uavids/explain.hpp"
#include "uavids/jsonio.hpp"
#include "uavids/metrics.hpp"
#include "uavids/statcompare.hpp"

namespace uavids {

struct NamedMetrics {
    std::string model;
    MetricsReport report;
};

namespace detail {

inline void write_metrics_fields(JsonWriter& w, const MetricsReport& r) {
    w.key("accuracy").value(r.accuracy);
    w.key("precision_macro").value(r.precision_macro);
    w.key("recall_macro").value(r.recall_macro);
    w.key("f1_macro").value(r.f1_macro);
    w.key("balanced_accuracy").value(r.balanced_accuracy);
    w.key("mcc").value(r.mcc);
    w.key("cohen_kappa").value(r.cohen_kappa);
    w.key("log_loss").value(r.log_loss);
    w.key("brier_score").value(r.brier_score);
    w.key("roc_auc_macro").value(r.roc_auc_macro);
    w.key("confusion").begin_object();
    w.key("k").value(r.confusion.k);
    w.key("counts").array_of(r.confusion.counts);
    w.end_object();
    w.key("per_class").begin_array();
    for (const auto& pc : r.per_class) {
        w.begin_object();
        w.key("precision").value(pc.precision);
        w.key("recall").value(pc.recall);
        w.key("f1").value(pc.f1);
        w.key("support").value(pc.support);
        w.end_object();
    }
    w.end_array();
    w.key("roc_curves").begin_array();
    for (const auto& curve : r.roc_curves) {
        w.begin_object();
        w.key("class_index").value(curve.class_index);
        w.key("auc").value(curve.auc);
        w.key("fpr").begin_array();
        for (const auto& p : curve.points) w.value(p.first);
        w.end_array();
        w.key("tpr").begin_array();
        for (const auto& p : curve.points) w.value(p.second);
        w.end_array();
        w.end_object();
    }
    w.end_array();
    w.key("warnings").array_of(r.warnings);
}

inline MetricsReport read_metrics_fields(const nlohmann::json& j) {
    MetricsReport r;
    r.accuracy = j.at("accuracy").get<double>();
    r.precision_macro = j.at("precision_macro").get<double>();
    r.recall_macro = j.at("recall_macro").get<double>();
    r.f1_macro = j.at("f1_macro").get<double>();
    r.balanced_accuracy = j.at("balanced_accuracy").get<double>();
    r.mcc = j.at("mcc").get<double>();
    r.cohen_kappa = j.at("cohen_kappa").get<double>();
    r.log_loss = j.at("log_loss").get<double>();
    r.brier_score = j.at("brier_score").get<double>();
    r.roc_auc_macro = j.at("roc_auc_macro").get<double>();
    r.confusion.k = j.at("confusion").at("k").get<std::size_t>();
    r.confusion.counts = j.at("confusion").at("counts").get<std::vector<std::size_t>>();
    for (const auto& pc : j.at("per_class")) {
        PerClassMetrics m;
        m.precision = pc.at("precision").get<double>();
        m.recall = pc.at("recall").get<double>();
        m.f1 = pc.at("f1").get<double>();
        m.support = pc.at("support").get<std::size_t>();
        r.per_class.push_back(m);
    }
    for (const auto& jc : j.at("roc_curves")) {
        RocCurve curve;
        curve.class_index = jc.at("class_index").get<int>();
        curve.auc = jc.at("auc").get<double>();
        auto fpr = jc.at("fpr").get<std::vector<double>>();
        auto tpr = jc.at("tpr").get<std::vector<double>>();
        if (fpr.size() != tpr.size()) throw DecodeError("roc curve axes differ in length");
        for (std::size_t i = 0; i < fpr.size(); ++i) curve.points.emplace_back(fpr[i], tpr[i]);
        r.roc_curves.push_back(std::move(curve));
    }
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    return r;
}

inline std::string metric_field(double v) { return format_double_17(v); }

}  // namespace detail

// --- evaluation metrics --------------------------------------------------------------

inline std::string metrics_json(const std::vector<NamedMetrics>& all,
                                const std::vector<std::string>& class_names) {
    JsonWriter w;
    w.begin_object();
    w.key("classes").array_of(class_names);
    w.key("models").begin_array();
    for (const auto& nm : all) {
        w.begin_object();
        w.key("model").value(nm.model);
        detail::write_metrics_fields(w, nm.report);
        w.end_object();
    }
    w.end_array();
    w.end_object();
    return w.str();
}

struct ParsedMetrics {
    std::vector<std::string> classes;
    std::vector<NamedMetrics> models;
};

inline ParsedMetrics parse_metrics_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
        ParsedMetrics out;
        out.classes = j.at("classes").get<std::vector<std::string>>();
        for (const auto& jm : j.at("models"))
            out.models.push_back({jm.at("model").get<std::string>(),
                                  detail::read_metrics_fields(jm)});
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw DecodeError(std::string("invalid metrics report: ") + e.what());
    }
}

/// One metric per row, one model per column.
inline std::string metrics_table_csv(const std::vector<NamedMetrics>& all) {
    std::vector<std::pair<std::string, double MetricsReport::*>> rows = {
        {"Accuracy", &MetricsReport::accuracy},
        {"Precision", &MetricsReport::precision_macro},
        {"Recall", &MetricsReport::recall_macro},
        {"F1 Score", &MetricsReport::f1_macro},
        {"Balanced Accuracy", &MetricsReport::balanced_accuracy},
        {"Matthews Corrcoef", &MetricsReport::mcc},
        {"Cohen Kappa", &MetricsReport::cohen_kappa},
        {"Log Loss", &MetricsReport::log_loss},
        {"Brier Score Loss", &MetricsReport::brier_score},
        {"ROC AUC", &MetricsReport::roc_auc_macro},
    };
    std::string out;
    std::vector<std::string> header{"Metric"};
    for (const auto& nm : all) header.push_back(nm.model);
    out += csv::format_row(header);
    for (const auto& [label, field] : rows) {
        std::vector<std::string> fields{label};
        for (const auto& nm : all) fields.push_back(detail::metric_field(nm.report.*field));
        out += csv::format_row(fields);
    }
    return out;
}

/// Per-class precision/recall/F1 plus accuracy, macro-average, and
/// support-weighted-average summary rows.
inline std::string classification_report_csv(const MetricsReport& r,
                                             const std::vector<std::string>& class_names) {
    std::string out = csv::format_row({"Class", "Precision", "Recall", "F1-Score"});
    double wp = 0.0, wr = 0.0, wf = 0.0;
    std::size_t total = 0;
    for (std::size_t k = 0; k < r.per_class.size(); ++k) {
        const auto& pc = r.per_class[k];
        out += csv::format_row({class_names.at(k), detail::metric_field(pc.precision),
                                detail::metric_field(pc.recall), detail::metric_field(pc.f1)});
        wp += pc.precision * static_cast<double>(pc.support);
        wr += pc.recall * static_cast<double>(pc.support);
        wf += pc.f1 * static_cast<double>(pc.support);
        total += pc.support;
    }
    double n = total ? static_cast<double>(total) : 1.0;
    out += csv::format_row({"Accuracy", detail::metric_field(r.accuracy), "", ""});
    out += csv::format_row({"Macro Avg", detail::metric_field(r.precision_macro),
                            detail::metric_field(r.recall_macro),
                            detail::metric_field(r.f1_macro)});
    out += csv::format_row({"Weighted Avg", detail::metric_field(wp / n),
                            detail::metric_field(wr / n), detail::metric_field(wf / n)});
    return out;
}

// --- feature importance --------------------------------------------------------------

/// Rank / Feature / Importance, already in ranked order.
inline std::string importance_csv(const std::vector<FeatureImportance>& ranked,
                                  const std::vector<std::string>& feature_names) {
    std::string out = csv::format_row({"Rank", "Feature", "Importance"});
    for (std::size_t i = 0; i < ranked.size(); ++i)
        out += csv::format_row({std::to_string(i + 1), feature_names.at(ranked[i].feature),
                                detail::metric_field(ranked[i].importance)});
    return out;
}

inline std::string permutation_importance_csv(const ImportanceTable& table) {
    std::string out = csv::format_row({"Rank", "Feature", "Importance Mean", "Importance Std"});
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        out += csv::format_row({std::to_string(i + 1), row.name,
                                detail::metric_field(row.mean),
                                detail::metric_field(row.std_dev)});
    }
    return out;
}

// --- cross-validation scores ----------------------------------------------------------

inline std::string cv_scores_csv(const FoldScores& fs) {
    std::vector<std::string> header{"Model"};
    for (std::size_t f = 0; f < fs.folds; ++f) header.push_back("Fold " + std::to_string(f + 1));
    header.push_back("Mean");
    std::string out = csv::format_row(header);
    for (std::size_t m = 0; m < fs.models.size(); ++m) {
        std::vector<std::string> fields{fs.models[m]};
        double mean = 0.0;
        for (std::size_t f = 0; f < fs.folds; ++f) {
            fields.push_back(detail::metric_field(fs.scores(m, f)));
            mean += fs.scores(m, f);
        }
        fields.push_back(detail::metric_field(mean / static_cast<double>(fs.folds)));
        out += csv::format_row(fields);
    }
    return out;
}

inline std::string cv_scores_json(const FoldScores& fs, const std::string& metric) {
    JsonWriter w;
    w.begin_object();
    w.key("metric").value(metric);
    w.key("folds").value(fs.folds);
    w.key("models").begin_array();
    for (std::size_t m = 0; m < fs.models.size(); ++m) {
        w.begin_object();
            w.key("model").value(fs.models[m]);
        std::vector<double> scores;
        for (std::size_t f = 0; f < fs.folds; ++f) scores.push_back(fs.scores(m, f));
        w.key("scores").array_of(scores);
        w.end_object();
    }
    w.end_array();
    w.end_object();
    return w.str();
}

// --- statistical comparison ------------------------------------------------------------

inline std::string friedman_csv(const FriedmanResult& fr) {
    std::string out = csv::format_row({"Test", "Statistic", "df", "p-value"});
    out += csv::format_row({"Friedman Test", detail::metric_field(fr.statistic),
                            std::to_string(fr.df), detail::metric_field(fr.p)});
    return out;
}

/// One row per ordered pair: raw and Holm-adjusted one-sided p plus the
/// bootstrap mean difference and confidence bounds.
inline std::string pairwise_csv(const ComparisonReport& rep) {
    std::string out = csv::format_row(
        {"Comparison", "P(raw)", "P(Holm)", "Mean diff", "95% CI low", "95% CI high"});
    for (const auto& pc : rep.pairwise)
        out += csv::format_row({pc.model_a + " > " + pc.model_b,
                                detail::metric_field(pc.p_raw),
                                detail::metric_field(pc.p_holm),
                                detail::metric_field(pc.mean_diff),
                                detail::metric_field(pc.ci_low),
                                detail::metric_field(pc.ci_high)});
    return out;
}

inline std::string mcnemar_csv(const McNemarResult& r) {
    std::string out = csv::format_row({"Test", "Chi2", "p-value"});
    out += csv::format_row({"McNemar Test", detail::metric_field(r.chi2),
                            detail::metric_field(r.p)});
    return out;
}

inline std::string contingency_csv(const McNemarTable& t, const std::string& name_a,
                                   const std::string& name_b) {
    std::string out =
        csv::format_row({"Contingency Table", name_b + " Correct", name_b + " Wrong"});
    out += csv::format_row({name_a + " Correct", std::to_string(t.both_correct),
                            std::to_string(t.a_correct_b_wrong)});
    out += csv::format_row({name_a + " Wrong", std::to_string(t.a_wrong_b_correct),
                            std::to_string(t.both_wrong)});
    return out;
}

/// Reads a 2×2 contingency CSV (header row + two labeled rows, as written by
/// contingency_csv). Row and column labels are free-form.
inline McNemarTable parse_contingency_csv(const std::string& text, const std::string& origin) {
    auto doc = csv::parse(text, origin);
    if (doc.rows.size() != 2 || doc.rows[0].size() != 3 || doc.rows[1].size() != 3)
        throw DecodeError("contingency table in " + origin +
                          " must be 2 labeled rows of 2 counts");
    auto count = [&](const std::string& cell) {
        try {
            std::size_t pos = 0;
            long long v = std::stoll(cell, &pos);
            if (pos != cell.size() || v < 0) throw std::invalid_argument(cell);
            return static_cast<std::size_t>(v);
        } catch (const std::exception&) {
            throw DecodeError("contingency cell '" + cell + "' in " + origin +
                              " is not a count");
        }
    };
    McNemarTable t;
    t.both_correct = count(doc.rows[0][1]);
    t.a_correct_b_wrong = count(doc.rows[0][2]);
    t.a_wrong_b_correct = count(doc.rows[1][1]);
    t.both_wrong = count(doc.rows[1][2]);
    return t;
}

inline std::string comparison_json(const ComparisonReport& rep, const std::string& metric,
                                   const std::string& mcnemar_a = "",
                                   const std::string& mcnemar_b = "") {
    JsonWriter w;
    w.begin_object();
    w.key("metric").value(metric);
    w.key("friedman").begin_object();
    w.key("statistic").value(rep.friedman.statistic);
    w.key("df").value(rep.friedman.df);
    w.key("p").value(rep.friedman.p);
    w.end_object();
    w.key("pairwise").begin_array();
    for (const auto& pc : rep.pairwise) {
        w.begin_object();
        w.key("model_a").value(pc.model_a);
        w.key("model_b").value(pc.model_b);
        w.key("p_raw").value(pc.p_raw);
        w.key("p_holm").value(pc.p_holm);
        w.key("mean_diff").value(pc.mean_diff);
        w.key("ci_low").value(pc.ci_low);
        w.key("ci_high").value(pc.ci_high);
        w.end_object();
    }
    w.end_array();
    if (rep.mcnemar) {
        w.key("mcnemar").begin_object();
        w.key("model_a").value(mcnemar_a);
        w.key("model_b").value(mcnemar_b);
        w.key("both_correct").value(rep.mcnemar->table.both_correct);
        w.key("a_correct_b_wrong").value(rep.mcnemar->table.a_correct_b_wrong);
        w.key("a_wrong_b_correct").value(rep.mcnemar->table.a_wrong_b_correct);
        w.key("both_wrong").value(rep.mcnemar->table.both_wrong);
        w.key("chi2").value(rep.mcnemar->chi2);
        w.key("p").value(rep.mcnemar->p);
        w.end_object();
    }
    w.end_object();
    return w.str();
}

struct ParsedComparison {
    ComparisonReport report;
    std::string metric;
    std::string mcnemar_a, mcnemar_b;
};

inline ParsedComparison parse_comparison_json(const std::string& text) {
    try {
        auto j = nlohmann::json::parse(text);
        ParsedComparison out;
        out.metric = j.at("metric").get<std::string>();
        out.report.friedman.statistic = j.at("friedman").at("statistic").get<double>();
        out.report.friedman.df = j.at("friedman").at("df").get<std::size_t>();
        out.report.friedman.p = j.at("friedman").at("p").get<double>();
        for (const auto& jp : j.at("pairwise")) {
            PairwiseComparison pc;
            pc.model_a = jp.at("model_a").get<std::string>();
            pc.model_b = jp.at("model_b").get<std::string>();
            pc.p_raw = jp.at("p_raw").get<double>();
            pc.p_holm = jp.at("p_holm").get<double>();
            pc.mean_diff = jp.at("mean_diff").get<double>();
            pc.ci_low = jp.at("ci_low").get<double>();
            pc.ci_high = jp.at("ci_high").get<double>();
            out.report.pairwise.push_back(std::move(pc));
        }
        if (j.contains("mcnemar")) {
            const auto& jm = j.at("mcnemar");
            McNemarResult r;
            r.table.both_correct = jm.at("both_correct").get<std::size_t>();
            r.table.a_correct_b_wrong = jm.at("a_correct_b_wrong").get<std::size_t>();
            r.table.a_wrong_b_correct = jm.at("a_wrong_b_correct").get<std::size_t>();
            r.table.both_wrong = jm.at("both_wrong").get<std::size_t>();
            r.chi2 = jm.at("chi2").get<double>();
            r.p = jm.at("p").get<double>();
            out.report.mcnemar = r;
            out.mcnemar_a = jm.at("model_a").get<std::string>();
            out.mcnemar_b = jm.at("model_b").get<std::string>();
        }
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw DecodeError(std::string("invalid comparison report: ") + e.what());
    }
}

// --- ablation ---------------------------------------------------------------------------

inline std::string ablation_csv(const AblationReport& rep,
                                const std::vector<std::string>& feature_names) {
    std::string out = csv::format_row({"Configuration", "Features", "F1 Macro", "Delta"});
    for (const auto& row : rep.rows) {
        std::string joined;
        for (std::size_t i = 0; i < row.features.size(); ++i) {
            if (i) joined += ' ';
            joined += feature_names.at(row.features[i]);
        }
        out += csv::format_row({row.name, joined, detail::metric_field(row.f1_macro),
                                detail::metric_field(row.delta)});
    }
    return out;
}

inline std::string ablation_json(const AblationReport& rep,
                                 const std::vector<std::string>& feature_names) {
    JsonWriter w;
    w.begin_object();
    w.key("importance_source").value(importance_source_name(rep.source));
    w.key("ranking").begin_array();
    for (std::size_t j : rep.ranking) w.value(feature_names.at(j));
    w.end_array();
    w.key("baseline_f1").value(rep.baseline_f1);
    w.key("rows").begin_array();
    for (const auto& row : rep.rows) {
        w.begin_object();
        w.key("name").value(row.name);
        w.key("features").begin_array();
        for (std::size_t j : row.features) w.value(feature_names.at(j));
        w.end_array();
        w.key("f1_macro").value(row.f1_macro);
        w.key("delta").value(row.delta);
        w.end_object();
    }
    w.end_array();
    w.end_object();
    return w.str();
}

}  // namespace uavids
