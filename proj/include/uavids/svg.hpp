#pragma once

// Deterministic SVG figure rendering. Output is plain text with fixed float
// formatting and no timestamps, so identical inputs give byte-identical files.

#include <algorithm>
#include <cstdio>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "uavids/explain.hpp"
#include "uavids/metrics.hpp"

namespace uavids {
namespace svgdetail {

inline std::string num(double v, int decimals = 2) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

inline std::string esc(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

inline std::string open(double width, double height) {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width, 0) +
           "\" height=\"" + num(height, 0) + "\" viewBox=\"0 0 " + num(width, 0) + " " +
           num(height, 0) + "\" font-family=\"monospace\" font-size=\"11\">\n";
}

inline std::string text(double x, double y, const std::string& s,
                        const std::string& extra = "") {
    return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\"" +
           (extra.empty() ? "" : " " + extra) + ">" + esc(s) + "</text>\n";
}

inline std::string rect(double x, double y, double w, double h, const std::string& fill,
                        const std::string& extra = "") {
    return "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(w) +
           "\" height=\"" + num(h) + "\" fill=\"" + fill + "\"" +
           (extra.empty() ? "" : " " + extra) + "/>\n";
}

inline std::string line(double x1, double y1, double x2, double y2,
                        const std::string& stroke = "#444") {
    return "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) +
           "\" y2=\"" + num(y2) + "\" stroke=\"" + stroke + "\"/>\n";
}

/// Linear blend between two RGB colors, t in [0, 1].
inline std::string blend(int r0, int g0, int b0, int r1, int g1, int b1, double t) {
    t = std::clamp(t, 0.0, 1.0);
    auto ch = [&](int a, int b) {
        return static_cast<int>(a + (b - a) * t + 0.5);
    };
    char buf[16];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", ch(r0, r1), ch(g0, g1), ch(b0, b1));
    return buf;
}

/// Categorical palette for per-class curves (cycles after 12 entries).
inline std::string palette(std::size_t i) {
    static constexpr const char* kColors[] = {
        "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
        "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#aec7e8", "#ffbb78",
    };
    return kColors[i % 12];
}

/// Deterministic jitter in (−0.5, 0.5) from an integer index.
inline double jitter(std::size_t i) {
    std::uint64_t h = (i + 1) * 0x9e3779b97f4a7c15ULL;
    h ^= h >> 29;
    return static_cast<double>(h % 1000) / 1000.0 - 0.5;
}

}  // namespace svgdetail

/// Heatmap of row-actual × column-predicted counts with annotated cells.
inline std::string svg_confusion_matrix(const ConfusionMatrix& cm,
                                        const std::vector<std::string>& class_names,
                                        const std::string& title) {
    namespace sd = svgdetail;
    const std::size_t k = cm.k;
    const double cell = 46, left = 120, top = 60;
    const double width = left + cell * static_cast<double>(k) + 30;
    const double height = top + cell * static_cast<double>(k) + 70;

    std::size_t max_count = 1;
    for (auto c : cm.counts) max_count = std::max(max_count, c);

    std::string out = sd::open(width, height);
    out += sd::text(left, 24, title, "font-size=\"14\"");
    for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t p = 0; p < k; ++p) {
            double x = left + cell * static_cast<double>(p);
            double y = top + cell * static_cast<double>(a);
            double t = static_cast<double>(cm.at(a, p)) / static_cast<double>(max_count);
            out += sd::rect(x, y, cell, cell, sd::blend(247, 251, 255, 8, 48, 107, t),
                            "stroke=\"#ffffff\"");
            bool dark = t > 0.5;
            out += sd::text(x + cell / 2, y + cell / 2 + 4, std::to_string(cm.at(a, p)),
                            std::string("text-anchor=\"middle\" fill=\"") +
                                (dark ? "#ffffff" : "#1a1a1a") + "\"");
        }
    }
    for (std::size_t i = 0; i < k; ++i) {
        out += sd::text(left - 8, top + cell * static_cast<double>(i) + cell / 2 + 4,
                        class_names.at(i), "text-anchor=\"end\"");
        out += sd::text(left + cell * static_cast<double>(i) + cell / 2,
                        top + cell * static_cast<double>(k) + 16, class_names.at(i),
                        "text-anchor=\"middle\"");
    }
    out += sd::text(left - 96, top - 12, "actual");
    out += sd::text(left, top + cell * static_cast<double>(k) + 40, "predicted");
    out += "</svg>\n";
    return out;
}

/// One-vs-rest ROC curves for every class, with an AUC legend.
inline std::string svg_roc_curves(const std::vector<RocCurve>& curves,
                                  const std::vector<std::string>& class_names,
                                  const std::string& title) {
    namespace sd = svgdetail;
    const double left = 60, top = 50, plot = 320;
    const double width = left + plot + 230, height = top + plot + 60;
    auto px = [&](double fpr) { return left + fpr * plot; };
    auto py = [&](double tpr) { return top + (1.0 - tpr) * plot; };

    std::string out = sd::open(width, height);
    out += sd::text(left, 24, title, "font-size=\"14\"");
    out += sd::rect(left, top, plot, plot, "none", "stroke=\"#444\"");
    out += sd::line(px(0), py(0), px(1), py(1), "#bbbbbb");  // chance diagonal
    for (double tick : {0.0, 0.5, 1.0}) {
        out += sd::text(px(tick), top + plot + 16, sd::num(tick, 1), "text-anchor=\"middle\"");
        out += sd::text(left - 8, py(tick) + 4, sd::num(tick, 1), "text-anchor=\"end\"");
    }
    out += sd::text(left + plot / 2, top + plot + 36, "false positive rate",
                    "text-anchor=\"middle\"");
    out += sd::text(14, top + plot / 2, "true positive rate",
                    "transform=\"rotate(-90 14 " + sd::num(top + plot / 2) + ")\"");

    for (std::size_t i = 0; i < curves.size(); ++i) {
        const auto& c = curves[i];
        std::string pts;
        for (const auto& [fpr, tpr] : c.points)
            pts += sd::num(px(fpr)) + "," + sd::num(py(tpr)) + " ";
        out += "<polyline fill=\"none\" stroke=\"" + sd::palette(i) + "\" points=\"" + pts +
               "\"/>\n";
        double ly = top + 14 * static_cast<double>(i);
        out += sd::rect(left + plot + 16, ly, 10, 10, sd::palette(i));
        std::string label = class_names.at(static_cast<std::size_t>(c.class_index));
        out += sd::text(left + plot + 32, ly + 9,
                        label + " (AUC=" + sd::num(c.auc, 3) + ")");
    }
    out += "</svg>\n";
    return out;
}

/// Horizontal importance bars, largest on top. An empty list still renders
/// valid axes.
inline std::string svg_importance_bars(
    const std::vector<std::pair<std::string, double>>& items, const std::string& title) {
    namespace sd = svgdetail;
    const double left = 170, top = 50, bar_h = 20, gap = 6, plot = 340;
    const double height = top + static_cast<double>(items.size()) * (bar_h + gap) + 50;
    const double width = left + plot + 90;

    double max_v = 0.0;
    for (const auto& [name, v] : items) max_v = std::max(max_v, std::abs(v));
    if (max_v <= 0.0) max_v = 1.0;

    std::string out = sd::open(width, std::max(height, 140.0));
    out += sd::text(left, 24, title, "font-size=\"14\"");
    out += sd::line(left, top, left, std::max(height, 140.0) - 40);
    for (std::size_t i = 0; i < items.size(); ++i) {
        double y = top + static_cast<double>(i) * (bar_h + gap);
        double w = std::abs(items[i].second) / max_v * plot;
        out += sd::rect(left, y, w, bar_h,
                        sd::blend(66, 146, 198, 8, 48, 107,
                                  static_cast<double>(i) /
                                      std::max<std::size_t>(items.size() - 1, 1)),
                        "class=\"bar\"");
        out += sd::text(left - 8, y + bar_h - 5, items[i].first, "text-anchor=\"end\"");
        out += sd::text(left + w + 6, y + bar_h - 5, sd::num(items[i].second, 6));
    }
    out += "</svg>\n";
    return out;
}

/// Per-class SHAP summary: one horizontal strip per feature, dots placed at
/// their attribution with color encoding the feature value (blue low, red
/// high) and deterministic vertical jitter.
inline std::string svg_shap_summary(const ShapSummary& summary, const std::string& title) {
    namespace sd = svgdetail;
    const double left = 170, top = 56, row_h = 26, plot = 360;
    const double height = top + static_cast<double>(summary.features.size()) * row_h + 50;
    const double width = left + plot + 60;

    double max_abs = 0.0;
    for (const auto& f : summary.features)
        for (const auto& [phi, value] : f.points) max_abs = std::max(max_abs, std::abs(phi));
    if (max_abs <= 0.0) max_abs = 1.0;
    auto px = [&](double phi) { return left + (phi / max_abs * 0.5 + 0.5) * plot; };

    std::string out = sd::open(width, std::max(height, 160.0));
    out += sd::text(left, 24, title, "font-size=\"14\"");
    out += sd::text(left, 40, "attribution space: " + summary.space);
    out += sd::line(px(0.0), top - 8, px(0.0), std::max(height, 160.0) - 42, "#999999");
    for (std::size_t i = 0; i < summary.features.size(); ++i) {
        const auto& f = summary.features[i];
        double cy = top + (static_cast<double>(i) + 0.5) * row_h;
        out += sd::text(left - 8, cy + 4, f.name, "text-anchor=\"end\"");
        double lo = 0.0, hi = 0.0;
        if (!f.points.empty()) {
            lo = hi = f.points[0].second;
            for (const auto& [phi, value] : f.points) {
                lo = std::min(lo, value);
                hi = std::max(hi, value);
            }
        }
        for (std::size_t p = 0; p < f.points.size(); ++p) {
            const auto& [phi, value] = f.points[p];
            double t = hi > lo ? (value - lo) / (hi - lo) : 0.5;
            out += "<circle cx=\"" + sd::num(px(phi)) + "\" cy=\"" +
                   sd::num(cy + sd::jitter(i * 131071 + p) * (row_h - 8)) +
                   "\" r=\"2\" fill=\"" + sd::blend(54, 120, 235, 220, 50, 47, t) +
                   "\" fill-opacity=\"0.7\"/>\n";
        }
    }
    out += sd::text(left, std::max(height, 160.0) - 20,
                    "attribution (max |phi| = " + sd::num(max_abs, 5) + ")");
    out += "</svg>\n";
    return out;
}

/// Local force-style chart: signed contribution bars for one instance and one
/// class, strongest contributions first.
inline std::string svg_local_force(const Attribution& att, std::size_t class_k,
                                   const std::vector<std::string>& feature_names,
                                   std::span<const double> x, const std::string& title,
                                   std::size_t top_n = 10) {
    namespace sd = svgdetail;
    const std::size_t d = att.phi.cols();
    std::vector<std::size_t> order(d);
    for (std::size_t j = 0; j < d; ++j) order[j] = j;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        double pa = std::abs(att.phi(class_k, a)), pb = std::abs(att.phi(class_k, b));
        return pa != pb ? pa > pb : a < b;
    });
    if (top_n && order.size() > top_n) order.resize(top_n);

    const double left = 230, top = 76, bar_h = 20, gap = 6, plot = 300;
    const double height = top + static_cast<double>(order.size()) * (bar_h + gap) + 50;
    const double width = left + plot + 110;
    double max_abs = 1e-12;
    for (std::size_t j : order) max_abs = std::max(max_abs, std::abs(att.phi(class_k, j)));
    double mid = left + plot / 2;

    std::string out = sd::open(width, std::max(height, 170.0));
    out += sd::text(left, 24, title, "font-size=\"14\"");
    out += sd::text(left, 42,
                    "base=" + sd::num(att.base_value.at(class_k), 5) +
                        "  output=" + sd::num(att.output.at(class_k), 5) + "  (" +
                        att.space + ")");
    out += sd::line(mid, top - 8, mid, std::max(height, 170.0) - 40, "#999999");
    for (std::size_t i = 0; i < order.size(); ++i) {
        std::size_t j = order[i];
        double phi = att.phi(class_k, j);
        double y = top + static_cast<double>(i) * (bar_h + gap);
        double w = std::abs(phi) / max_abs * (plot / 2);
        double bx = phi >= 0 ? mid : mid - w;
        out += sd::rect(bx, y, w, bar_h, phi >= 0 ? "#d62728" : "#1f77b4", "class=\"bar\"");
        out += sd::text(left - 8, y + bar_h - 5,
                        feature_names.at(j) + " = " + sd::num(x[j], 4), "text-anchor=\"end\"");
        out += sd::text(phi >= 0 ? mid + w + 6 : mid - w - 6, y + bar_h - 5,
                        sd::num(phi, 5),
                        phi >= 0 ? "" : "text-anchor=\"end\"");
    }
    out += "</svg>\n";
    return out;
}

}  // namespace uavids
