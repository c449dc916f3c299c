#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "uavids/error.hpp"
#include "uavids/ingest.hpp"
#include "uavids/jsonio.hpp"
#include "uavids/rng.hpp"
#include "uavids/table.hpp"

namespace uavids {

/// Fitted preprocessing state for one column. Numeric columns carry the
/// imputation median and post-imputation standardization moments; categorical
/// columns carry the imputation mode and their code domain (code = position,
/// domain sorted lexicographically at fit time).
struct RecipeColumn {
    std::string name;
    ColumnKind kind = ColumnKind::numeric;
    double median = 0.0;
    double mean = 0.0;
    double std_dev = 0.0;
    std::string mode;
    std::vector<std::string> domain;

    std::optional<int> code_of(const std::string& value) const {
        auto it = std::lower_bound(domain.begin(), domain.end(), value);
        if (it == domain.end() || *it != value) return std::nullopt;
        return static_cast<int>(it - domain.begin());
    }
};

struct PreprocessRecipe {
    std::vector<RecipeColumn> columns;  // feature columns in table order
    LabelMap label_map;

    const RecipeColumn* find(const std::string& name) const {
        for (const auto& c : columns)
            if (c.name == name) return &c;
        return nullptr;
    }
};

/// Fits imputation, standardization, and encoding state on a raw table.
/// The label column is excluded from feature fitting; its observed names
/// yield the label map unless an explicit one is supplied.
inline PreprocessRecipe fit_recipe(const RawTable& t, const std::vector<ColumnSpec>& schema,
                                   const std::string& label_column,
                                   std::optional<LabelMap> explicit_labels = std::nullopt) {
    const RawColumn* labels = t.find_column(label_column);
    if (!labels) throw SchemaMismatch("label column '" + label_column + "' not found");

    PreprocessRecipe recipe;
    if (explicit_labels) {
        recipe.label_map = *explicit_labels;
    } else {
        std::vector<std::string> names;
        for (const auto& cell : labels->values) names.push_back(cell_text(cell));
        recipe.label_map = LabelMap::from_names(std::move(names));
    }

    for (const auto& col : t.columns) {
        if (col.name == label_column) continue;
        const ColumnSpec* spec = nullptr;
        for (const auto& s : schema)
            if (s.name == col.name) spec = &s;
        if (!spec) throw SchemaMismatch("schema does not cover column '" + col.name + "'");

        RecipeColumn rc;
        rc.name = col.name;
        rc.kind = spec->kind;
        if (spec->kind == ColumnKind::numeric) {
            std::vector<double> vals;
            vals.reserve(col.values.size());
            for (const auto& cell : col.values)
                if (auto v = cell_number(cell)) vals.push_back(*v);
            if (vals.empty()) throw AllMissingColumn("column '" + col.name + "' has no observed values");
            std::sort(vals.begin(), vals.end());
            std::size_t n = vals.size();
            rc.median = n % 2 ? vals[n / 2] : 0.5 * (vals[n / 2 - 1] + vals[n / 2]);
            // Moments over the imputed column: missing cells contribute the median.
            double sum = 0.0;
            for (const auto& cell : col.values) sum += cell_number(cell).value_or(rc.median);
            rc.mean = sum / static_cast<double>(col.values.size());
            double sq = 0.0;
            for (const auto& cell : col.values) {
                double d = cell_number(cell).value_or(rc.median) - rc.mean;
                sq += d * d;
            }
            rc.std_dev = std::sqrt(sq / static_cast<double>(col.values.size()));
        } else {
            std::vector<std::string> observed;
            for (const auto& cell : col.values)
                if (!is_missing(cell)) observed.push_back(cell_text(cell));
            if (observed.empty()) throw AllMissingColumn("column '" + col.name + "' has no observed values");
            std::sort(observed.begin(), observed.end());
            // Mode with lexicographically-smallest tie break: scan runs of the
            // sorted values, strict > keeps the earliest maximal run.
            std::size_t best = 0;
            for (std::size_t i = 0; i < observed.size();) {
                std::size_t j = i;
                while (j < observed.size() && observed[j] == observed[i]) ++j;
                if (j - i > best) {
                    best = j - i;
                    rc.mode = observed[i];
                }
                i = j;
            }
            observed.erase(std::unique(observed.begin(), observed.end()), observed.end());
            rc.domain = std::move(observed);
        }
        recipe.columns.push_back(std::move(rc));
    }
    return recipe;
}

/// Replays a fitted recipe: impute, standardize, encode. Guarantees a fully
/// numeric, missing-free matrix in the recipe's column order. Unseen
/// categories map to the reserved code |domain| and are tallied in
/// `unseen_categories` when provided.
inline FeatureTable apply_recipe(const PreprocessRecipe& recipe, const RawTable& t,
                                 const std::string& label_column,
                                 std::size_t* unseen_categories = nullptr) {
    const RawColumn* labels = t.find_column(label_column);
    if (!labels) throw SchemaMismatch("label column '" + label_column + "' not found");
    for (const auto& col : t.columns)
        if (col.name != label_column && !recipe.find(col.name))
            throw SchemaMismatch("column '" + col.name + "' is not covered by the recipe");

    FeatureTable out;
    out.class_names = recipe.label_map;
    out.y.reserve(labels->values.size());
    for (const auto& cell : labels->values) {
        auto idx = recipe.label_map.index_of(cell_text(cell));
        if (!idx) throw InvalidLabel("unknown class name: '" + cell_text(cell) + "'");
        out.y.push_back(*idx);
    }

    std::size_t unseen = 0;
    out.X = Matrix(t.row_count, recipe.columns.size());
    for (std::size_t j = 0; j < recipe.columns.size(); ++j) {
        const RecipeColumn& rc = recipe.columns[j];
        out.feature_names.push_back(rc.name);
        const RawColumn* col = t.find_column(rc.name);  // absent → fully imputed
        if (rc.kind == ColumnKind::numeric) {
            for (std::size_t i = 0; i < t.row_count; ++i) {
                double x = rc.median;
                if (col)
                    if (auto v = cell_number(col->values[i])) x = *v;
                out.X(i, j) = rc.std_dev > 0.0 ? (x - rc.mean) / rc.std_dev : 0.0;
            }
        } else {
            out.categorical_features.push_back(static_cast<int>(j));
            for (std::size_t i = 0; i < t.row_count; ++i) {
                std::string v = rc.mode;
                if (col && !is_missing(col->values[i])) v = cell_text(col->values[i]);
                if (auto code = rc.code_of(v)) {
                    out.X(i, j) = *code;
                } else {
                    out.X(i, j) = static_cast<double>(rc.domain.size());
                    ++unseen;
                }
            }
        }
    }
    if (unseen_categories) *unseen_categories = unseen;
    return out;
}

struct SplitResult {
    FeatureTable train;
    FeatureTable test;
    std::vector<std::size_t> train_rows;  // indices into the input table
    std::vector<std::size_t> test_rows;
};

/// Per-class split: round(train_fraction · n_k) rows to train, clamped so
/// both sides keep at least one row of every class. Membership is chosen by
/// a seeded within-class shuffle; row order is preserved within each side.
inline SplitResult stratified_split(const FeatureTable& t, double train_fraction,
                                    std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw InvalidSpec("train_fraction must lie strictly between 0 and 1");
    const std::size_t K = t.n_classes();
    std::vector<std::vector<std::size_t>> by_class(K);
    for (std::size_t i = 0; i < t.y.size(); ++i)
        by_class.at(static_cast<std::size_t>(t.y[i])).push_back(i);

    SplitResult out;
    Rng rng(seed, 0x73706c69);  // dedicated split stream
    for (std::size_t k = 0; k < K; ++k) {
        auto& rows = by_class[k];
        if (rows.size() < 2)
            throw StratificationImpossible("class '" + t.class_names.name(k) +
                                           "' has fewer than 2 samples");
        auto take = static_cast<std::size_t>(
            std::llround(train_fraction * static_cast<double>(rows.size())));
        take = std::clamp<std::size_t>(take, 1, rows.size() - 1);
        rng.shuffle(rows);
        out.train_rows.insert(out.train_rows.end(), rows.begin(), rows.begin() + take);
        out.test_rows.insert(out.test_rows.end(), rows.begin() + take, rows.end());
    }
    std::sort(out.train_rows.begin(), out.train_rows.end());
    std::sort(out.test_rows.begin(), out.test_rows.end());
    out.train = t.select_rows(out.train_rows);
    out.test = t.select_rows(out.test_rows);
    return out;
}

/// Balanced class weights w_k = N / (K·n_k), so Σ_k w_k·n_k = N.
inline ClassWeights class_weights(const std::vector<int>& y, std::size_t K) {
    std::vector<std::size_t> counts(K, 0);
    for (int label : y) ++counts.at(static_cast<std::size_t>(label));
    ClassWeights out;
    out.w.resize(K);
    for (std::size_t k = 0; k < K; ++k) {
        if (counts[k] == 0) throw MissingClass("class " + std::to_string(k) + " absent from labels");
        out.w[k] = static_cast<double>(y.size()) /
                   (static_cast<double>(K) * static_cast<double>(counts[k]));
    }
    return out;
}

inline void save_recipe(const std::filesystem::path& path, const PreprocessRecipe& recipe) {
    JsonWriter w;
    w.begin_object();
    w.key("format").value("uavids-recipe");
    w.key("version").value(1);
    w.key("classes").array_of(recipe.label_map.names());
    w.key("columns").begin_array();
    for (const auto& rc : recipe.columns) {
        w.begin_object();
        w.key("name").value(rc.name);
        w.key("kind").value(column_kind_name(rc.kind));
        if (rc.kind == ColumnKind::numeric) {
            w.key("median").value(rc.median);
            w.key("mean").value(rc.mean);
            w.key("std").value(rc.std_dev);
        } else {
            w.key("mode").value(rc.mode);
            w.key("domain").array_of(rc.domain);
        }
        w.end_object();
    }
    w.end_array();
    w.end_object();
    atomic_write_file(path, w.str());
}

inline PreprocessRecipe load_recipe(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file_bytes(path));
    } catch (const nlohmann::json::exception& e) {
        throw IoFailure("invalid recipe " + path.string() + ": " + e.what());
    }
    if (j.value("format", "") != "uavids-recipe" || j.value("version", 0) != 1)
        throw IoFailure("unrecognized recipe format in " + path.string());
    PreprocessRecipe recipe;
    {
        std::vector<std::string> names;
        for (const auto& name : j.at("classes")) names.push_back(name.get<std::string>());
        recipe.label_map = LabelMap(std::move(names));
    }
    for (const auto& col : j.at("columns")) {
        RecipeColumn rc;
        rc.name = col.at("name").get<std::string>();
        rc.kind = column_kind_from(col.at("kind").get<std::string>());
        if (rc.kind == ColumnKind::numeric) {
            rc.median = col.at("median").get<double>();
            rc.mean = col.at("mean").get<double>();
            rc.std_dev = col.at("std").get<double>();
            if (rc.std_dev < 0) throw IoFailure("negative std in recipe column " + rc.name);
        } else {
            rc.mode = col.at("mode").get<std::string>();
            for (const auto& v : col.at("domain")) rc.domain.push_back(v.get<std::string>());
            if (!std::is_sorted(rc.domain.begin(), rc.domain.end()))
                throw IoFailure("unsorted domain in recipe column " + rc.name);
        }
        recipe.columns.push_back(std::move(rc));
    }
    return recipe;
}

}  // namespace uavids
