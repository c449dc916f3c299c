#pragma once

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "uavids/error.hpp"

namespace uavids {

/// A raw cell is text, a number, or missing.
struct MissingCell {
    bool operator==(const MissingCell&) const = default;
};
using Cell = std::variant<MissingCell, double, std::string>;

inline bool is_missing(const Cell& c) { return std::holds_alternative<MissingCell>(c); }

/// Canonical text form of a cell, used for categorical handling ("explicitly
/// cast to string"). Numbers keep their shortest round-trip representation.
std::string cell_text(const Cell& c);

/// Parses a cell's content as a finite number if possible.
std::optional<double> cell_number(const Cell& c);

/// Interprets one raw text field: surrounding ASCII whitespace is ignored,
/// an empty remainder is missing, a fully numeric finite remainder becomes a
/// number, everything else stays text.
Cell parse_field(const std::string& raw);

struct RawColumn {
    std::string name;
    std::vector<Cell> values;
};

/// Column-major table of raw cells, one label column included when it came
/// from ingestion. All columns have the same length and unique names.
struct RawTable {
    std::vector<RawColumn> columns;
    std::vector<std::string> source_files;
    std::size_t row_count = 0;

    const RawColumn* find_column(const std::string& name) const {
        for (const auto& c : columns)
            if (c.name == name) return &c;
        return nullptr;
    }
    RawColumn* find_column(const std::string& name) {
        for (auto& c : columns)
            if (c.name == name) return &c;
        return nullptr;
    }
};

enum class ColumnKind { numeric, categorical };

struct ColumnSpec {
    std::string name;
    ColumnKind kind = ColumnKind::numeric;
    std::size_t missing_count = 0;
};

/// Ordered class-name list; the position of a name is its class index.
class LabelMap {
public:
    LabelMap() = default;
    explicit LabelMap(std::vector<std::string> names) : names_(std::move(names)) {}

    /// Deterministic default mapping: lexicographic order of the distinct names.
    static LabelMap from_names(std::vector<std::string> names) {
        std::sort(names.begin(), names.end());
        names.erase(std::unique(names.begin(), names.end()), names.end());
        return LabelMap(std::move(names));
    }

    std::size_t size() const { return names_.size(); }
    const std::string& name(std::size_t index) const { return names_.at(index); }
    const std::vector<std::string>& names() const { return names_; }

    std::optional<int> index_of(const std::string& name) const {
        for (std::size_t i = 0; i < names_.size(); ++i)
            if (names_[i] == name) return static_cast<int>(i);
        return std::nullopt;
    }

    bool operator==(const LabelMap&) const = default;

private:
    std::vector<std::string> names_;
};

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<const double> row(std::size_t i) const {
        return {data_.data() + i * cols_, cols_};
    }
    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Fully numeric feature matrix with integer labels; the interchange record
/// between preprocessing, training, evaluation and explanation.
struct FeatureTable {
    std::vector<std::string> feature_names;
    Matrix X;
    std::vector<int> y;
    LabelMap class_names;
    /// Indices of feature columns that were label-encoded categoricals.
    std::vector<int> categorical_features;

    std::size_t n_rows() const { return X.rows(); }
    std::size_t n_features() const { return X.cols(); }
    std::size_t n_classes() const { return class_names.size(); }

    /// Row subset in the given order.
    FeatureTable select_rows(const std::vector<std::size_t>& idx) const {
        FeatureTable out;
        out.feature_names = feature_names;
        out.class_names = class_names;
        out.categorical_features = categorical_features;
        out.X = Matrix(idx.size(), X.cols());
        out.y.resize(idx.size());
        for (std::size_t r = 0; r < idx.size(); ++r) {
            for (std::size_t c = 0; c < X.cols(); ++c) out.X(r, c) = X(idx[r], c);
            out.y[r] = y[idx[r]];
        }
        return out;
    }

    /// Column subset (by feature index), preserving order of `cols`.
    FeatureTable select_features(const std::vector<std::size_t>& cols) const {
        FeatureTable out;
        out.class_names = class_names;
        out.y = y;
        out.X = Matrix(X.rows(), cols.size());
        for (std::size_t c = 0; c < cols.size(); ++c) {
            out.feature_names.push_back(feature_names[cols[c]]);
            for (std::size_t r = 0; r < X.rows(); ++r) out.X(r, c) = X(r, cols[c]);
            bool was_cat =
                std::find(categorical_features.begin(), categorical_features.end(),
                          static_cast<int>(cols[c])) != categorical_features.end();
            if (was_cat) out.categorical_features.push_back(static_cast<int>(c));
        }
        return out;
    }
};

/// Balanced class weights, w_k = N / (K * n_k).
struct ClassWeights {
    std::vector<double> w;
    double of_label(int label) const { return w.at(static_cast<std::size_t>(label)); }
};

// --- inline definitions -----------------------------------------------------

inline std::string format_double_short(double v);

inline std::string cell_text(const Cell& c) {
    if (std::holds_alternative<std::string>(c)) return std::get<std::string>(c);
    if (std::holds_alternative<double>(c)) return format_double_short(std::get<double>(c));
    return std::string();
}

inline std::optional<double> cell_number(const Cell& c) {
    if (std::holds_alternative<double>(c)) {
        double v = std::get<double>(c);
        if (std::isfinite(v)) return v;
        return std::nullopt;
    }
    if (!std::holds_alternative<std::string>(c)) return std::nullopt;
    const std::string& s = std::get<std::string>(c);
    if (s.empty()) return std::nullopt;
    const char* begin = s.c_str();
    char* end = nullptr;
    errno = 0;
    double v = std::strtod(begin, &end);
    if (end != begin + s.size() || errno == ERANGE || !std::isfinite(v)) return std::nullopt;
    return v;
}

inline Cell parse_field(const std::string& raw) {
    std::size_t b = 0, e = raw.size();
    while (b < e && std::isspace(static_cast<unsigned char>(raw[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(raw[e - 1]))) --e;
    if (b == e) return MissingCell{};
    std::string s = raw.substr(b, e - b);
    if (s.size() == 3 && (s[0] == 'n' || s[0] == 'N') && (s[1] == 'a' || s[1] == 'A') &&
        (s[2] == 'n' || s[2] == 'N'))
        return MissingCell{};
    if (auto v = cell_number(Cell{s})) return *v;
    return s;
}

/// Shortest representation that round-trips a double (grisu via to_chars).
inline std::string format_double_short(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

}  // namespace uavids
