#pragma once

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <limits>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "uavids/csv.hpp"
#include "uavids/error.hpp"
#include "uavids/jsonio.hpp"
#include "uavids/rng.hpp"
#include "uavids/table.hpp"

namespace uavids {

/// Name of the label column appended by scanning/synthesis and expected at
/// the end of every canonical table file.
inline constexpr const char* kLabelColumn = "Label";

struct ScanResult {
    RawTable table;  // feature columns plus a trailing "Label" column of class names
    LabelMap classes;
};

namespace detail {

inline bool has_csv_extension(const std::filesystem::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == ".csv";
}

}  // namespace detail

/// Reads a dataset laid out as one subdirectory per class, each holding CSV
/// files. Rows are merged in (sorted file path, row index) order; headers are
/// unioned with absent columns padded as missing; the subdirectory name is
/// appended as a "Label" column.
inline ScanResult scan_dataset(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    if (!fs::exists(root) || !fs::is_directory(root))
        throw IoFailure("dataset root is not a directory: " + root.string());

    // Gather per-class CSV files; directories with no CSVs contribute nothing.
    std::vector<std::pair<std::string, std::string>> files;  // (file path, class name)
    std::vector<std::string> class_names;
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(root))
        if (entry.is_directory()) dirs.push_back(entry.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& dir : dirs) {
        std::vector<fs::path> in_dir;
        for (const auto& entry : fs::directory_iterator(dir))
            if (entry.is_regular_file() && detail::has_csv_extension(entry.path()))
                in_dir.push_back(entry.path());
        if (in_dir.empty()) continue;
        class_names.push_back(dir.filename().string());
        for (const auto& f : in_dir) files.emplace_back(f.string(), dir.filename().string());
    }
    if (files.empty()) throw NoClassesFound("no class subdirectory with CSV files under " + root.string());
    std::sort(files.begin(), files.end());

    ScanResult out;
    out.classes = LabelMap::from_names(class_names);
    RawTable& t = out.table;
    std::unordered_map<std::string, std::size_t> column_index;
    std::vector<Cell> labels;

    for (const auto& [path, class_name] : files) {
        t.source_files.push_back(path);
        auto doc = csv::parse(read_file_bytes(path), path);
        if (doc.header.empty()) continue;  // empty file, zero rows

        // Map each header position to a merged column, registering new ones.
        std::vector<std::size_t> slot(doc.header.size());
        for (std::size_t h = 0; h < doc.header.size(); ++h) {
            const std::string& name = doc.header[h];
            if (name == kLabelColumn)
                throw SchemaConflict("column '" + name + "' in " + path +
                                     " collides with the label column");
            auto [it, inserted] = column_index.try_emplace(name, t.columns.size());
            if (!inserted) {
                // Seen before: either from an earlier file (fine) or a
                // duplicate within this very header (conflict).
                for (std::size_t g = 0; g < h; ++g)
                    if (doc.header[g] == name)
                        throw SchemaConflict("duplicate column '" + name + "' in " + path);
            } else {
                t.columns.push_back({name, std::vector<Cell>(t.row_count, MissingCell{})});
            }
            slot[h] = column_index[name];
        }

        for (const auto& row : doc.rows) {
            for (auto& col : t.columns) col.values.emplace_back(MissingCell{});
            for (std::size_t h = 0; h < row.size(); ++h)
                t.columns[slot[h]].values[t.row_count] = parse_field(row[h]);
            labels.emplace_back(class_name);
            ++t.row_count;
        }
    }

    t.columns.push_back({kLabelColumn, std::move(labels)});
    return out;
}

/// Types every column: numeric iff each non-missing cell parses as a finite
/// number, categorical otherwise. Missing counts are recorded as found.
inline std::vector<ColumnSpec> infer_schema(const RawTable& t) {
    std::vector<ColumnSpec> specs;
    specs.reserve(t.columns.size());
    for (const auto& col : t.columns) {
        ColumnSpec spec;
        spec.name = col.name;
        bool all_numeric = true;
        for (const auto& cell : col.values) {
            if (is_missing(cell)) {
                ++spec.missing_count;
            } else if (all_numeric && !cell_number(cell)) {
                all_numeric = false;
            }
        }
        if (spec.missing_count == col.values.size())
            throw AllMissingColumn("column '" + col.name + "' has no observed values");
        spec.kind = all_numeric ? ColumnKind::numeric : ColumnKind::categorical;
        specs.push_back(std::move(spec));
    }
    return specs;
}

/// Recipe for a deterministic desk-scale dataset: per-class Gaussian clusters
/// on the informative numeric features, pure-noise numeric features beyond
/// them, class-correlated categorical columns, and optional missing cells.
struct SynthSpec {
    std::size_t n_rows = 0;
    std::size_t n_numeric = 0;
    std::size_t n_categorical = 0;
    std::size_t n_classes = 0;
    std::vector<double> class_weights;  // empty means uniform; else sums to 1
    double separability = 1.0;          // 0 = identical class distributions
    std::size_t n_informative = std::numeric_limits<std::size_t>::max();  // default: all numeric
    double missing_fraction = 0.0;
};

namespace detail {

inline std::string zero_padded(std::size_t value, std::size_t max_value) {
    std::size_t width = 1;
    for (std::size_t v = max_value; v >= 10; v /= 10) ++width;
    std::string digits = std::to_string(value);
    return std::string(width - digits.size(), '0') + digits;
}

// Distinct hypercube corner per class: the sign of informative feature j is
// bit (j mod B) of the class index, B = bits needed to tell K classes apart.
inline double class_corner(std::size_t klass, std::size_t feature, std::size_t n_classes) {
    std::size_t bits = 1;
    while ((std::size_t{1} << bits) < n_classes) ++bits;
    return ((klass >> (feature % bits)) & 1) ? 1.0 : -1.0;
}

}  // namespace detail

inline ScanResult synthesize_dataset(const SynthSpec& spec, std::uint64_t seed) {
    if (spec.n_classes < 2) throw InvalidSpec("n_classes must be at least 2");
    if (spec.n_rows == 0) throw InvalidSpec("n_rows must be positive");
    if (spec.n_numeric == 0) throw InvalidSpec("n_numeric must be positive");
    if (spec.separability < 0.0 || spec.separability > 1.0)
        throw InvalidSpec("separability must lie in [0,1]");
    if (spec.missing_fraction < 0.0 || spec.missing_fraction >= 1.0)
        throw InvalidSpec("missing_fraction must lie in [0,1)");
    std::vector<double> weights = spec.class_weights;
    if (weights.empty()) weights.assign(spec.n_classes, 1.0 / static_cast<double>(spec.n_classes));
    if (weights.size() != spec.n_classes) throw InvalidSpec("class_weights size must equal n_classes");
    double wsum = 0.0;
    for (double w : weights) {
        if (w <= 0.0) throw InvalidSpec("class_weights must be positive");
        wsum += w;
    }
    if (std::abs(wsum - 1.0) > 1e-9) throw InvalidSpec("class_weights must sum to 1");
    std::size_t informative = std::min(spec.n_informative, spec.n_numeric);
    if (informative == 0) throw InvalidSpec("n_informative must be positive");

    const double amplitude = 5.0 * spec.separability;
    const double category_pull = 0.8 * spec.separability;
    const std::size_t n_features = spec.n_numeric + spec.n_categorical;

    ScanResult out;
    std::vector<std::string> class_names(spec.n_classes);
    for (std::size_t k = 0; k < spec.n_classes; ++k)
        class_names[k] = "class_" + detail::zero_padded(k, spec.n_classes - 1);
    out.classes = LabelMap(class_names);  // zero-padded, so already sorted

    RawTable& t = out.table;
    t.row_count = spec.n_rows;
    for (std::size_t j = 0; j < spec.n_numeric; ++j)
        t.columns.push_back({"num_" + detail::zero_padded(j, spec.n_numeric - 1),
                             std::vector<Cell>(spec.n_rows, MissingCell{})});
    for (std::size_t j = 0; j < spec.n_categorical; ++j)
        t.columns.push_back({"cat_" + detail::zero_padded(j, spec.n_categorical ? spec.n_categorical - 1 : 0),
                             std::vector<Cell>(spec.n_rows, MissingCell{})});
    t.columns.push_back({kLabelColumn, std::vector<Cell>(spec.n_rows, MissingCell{})});

    Rng rng(seed, 0x73796e74);  // dedicated synthesis stream
    for (std::size_t i = 0; i < spec.n_rows; ++i) {
        double u = rng.uniform();
        std::size_t klass = spec.n_classes - 1;
        double acc = 0.0;
        for (std::size_t k = 0; k < spec.n_classes; ++k) {
            acc += weights[k];
            if (u < acc) {
                klass = k;
                break;
            }
        }

        for (std::size_t j = 0; j < spec.n_numeric; ++j) {
            double center = j < informative
                                ? amplitude * detail::class_corner(klass, j, spec.n_classes)
                                : 0.0;
            t.columns[j].values[i] = center + rng.normal();
        }
        for (std::size_t j = 0; j < spec.n_categorical; ++j) {
            std::size_t cat = rng.uniform() < category_pull ? klass : rng.below(spec.n_classes);
            t.columns[spec.n_numeric + j].values[i] =
                "v" + detail::zero_padded(cat, spec.n_classes - 1);
        }
        if (spec.missing_fraction > 0.0)
            for (std::size_t j = 0; j < n_features; ++j)
                if (rng.uniform() < spec.missing_fraction) t.columns[j].values[i] = MissingCell{};
        t.columns[n_features].values[i] = class_names[klass];
    }
    return out;
}

/// Translates a class-name label column into integer labels.
inline std::vector<int> encode_labels(const RawColumn& label_column, const LabelMap& classes) {
    std::vector<int> y;
    y.reserve(label_column.values.size());
    for (const auto& cell : label_column.values) {
        auto idx = classes.index_of(cell_text(cell));
        if (!idx) throw InvalidLabel("unknown class name: '" + cell_text(cell) + "'");
        y.push_back(*idx);
    }
    return y;
}

/// Canonical on-disk table: feature columns plus integer labels, described by
/// a JSON sidecar (schema, class names, encoded-categorical markers).
struct CanonicalTable {
    RawTable features;  // no label column
    std::vector<int> labels;
    std::vector<ColumnSpec> schema;  // one spec per feature column, same order
    LabelMap classes;
    std::vector<int> categorical_features;  // label-encoded columns, if preprocessed
};

/// Splits a scan/synthesis result into the canonical representation.
inline CanonicalTable canonical_from_scan(ScanResult scan, std::vector<ColumnSpec> schema) {
    CanonicalTable out;
    out.classes = scan.classes;
    RawColumn* label_col = scan.table.find_column(kLabelColumn);
    if (!label_col) throw SchemaMismatch("table lacks a label column");
    out.labels = encode_labels(*label_col, out.classes);
    for (auto& col : scan.table.columns)
        if (col.name != kLabelColumn) out.features.columns.push_back(std::move(col));
    out.features.row_count = scan.table.row_count;
    out.features.source_files = std::move(scan.table.source_files);
    for (auto& spec : schema)
        if (spec.name != kLabelColumn) out.schema.push_back(std::move(spec));
    if (out.schema.size() != out.features.columns.size())
        throw SchemaMismatch("schema does not cover every feature column");
    return out;
}

/// Wraps a fully numeric FeatureTable for canonical persistence.
inline CanonicalTable canonical_from_features(const FeatureTable& ft) {
    CanonicalTable out;
    out.classes = ft.class_names;
    out.labels = ft.y;
    out.categorical_features = ft.categorical_features;
    out.features.row_count = ft.n_rows();
    for (std::size_t j = 0; j < ft.n_features(); ++j) {
        RawColumn col;
        col.name = ft.feature_names[j];
        col.values.reserve(ft.n_rows());
        for (std::size_t i = 0; i < ft.n_rows(); ++i) col.values.emplace_back(ft.X(i, j));
        out.features.columns.push_back(std::move(col));
        out.schema.push_back({ft.feature_names[j], ColumnKind::numeric, 0});
    }
    return out;
}

/// Requires a canonical table that is fully numeric with no missing cells.
inline FeatureTable feature_table_from(const CanonicalTable& ct) {
    FeatureTable ft;
    ft.class_names = ct.classes;
    ft.y = ct.labels;
    ft.categorical_features = ct.categorical_features;
    ft.X = Matrix(ct.features.row_count, ct.features.columns.size());
    for (std::size_t j = 0; j < ct.features.columns.size(); ++j) {
        const auto& col = ct.features.columns[j];
        ft.feature_names.push_back(col.name);
        for (std::size_t i = 0; i < col.values.size(); ++i) {
            auto v = cell_number(col.values[i]);
            if (!v)
                throw SchemaMismatch("column '" + col.name +
                                     "' is not fully numeric; run preprocessing first");
            ft.X(i, j) = *v;
        }
    }
    return ft;
}

inline const char* column_kind_name(ColumnKind k) {
    return k == ColumnKind::numeric ? "numeric" : "categorical";
}

inline ColumnKind column_kind_from(const std::string& s) {
    if (s == "numeric") return ColumnKind::numeric;
    if (s == "categorical") return ColumnKind::categorical;
    throw IoFailure("unknown column kind: " + s);
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& table_path) {
    std::filesystem::path p = table_path;
    p += ".meta.json";
    return p;
}

/// Writes the canonical CSV (trailing integer "Label" column) and its JSON
/// sidecar. Both writes are atomic.
inline void save_canonical(const std::filesystem::path& path, const CanonicalTable& ct) {
    std::string text;
    std::vector<std::string> header;
    for (const auto& col : ct.features.columns) header.push_back(col.name);
    header.push_back(kLabelColumn);
    text += csv::format_row(header);
    text += '\n';
    std::vector<std::string> row(header.size());
    for (std::size_t i = 0; i < ct.features.row_count; ++i) {
        for (std::size_t j = 0; j < ct.features.columns.size(); ++j)
            row[j] = cell_text(ct.features.columns[j].values[i]);
        row.back() = std::to_string(ct.labels[i]);
        text += csv::format_row(row);
        text += '\n';
    }
    atomic_write_file(path, text);

    JsonWriter w;
    w.begin_object();
    w.key("format").value("uavids-table");
    w.key("version").value(1);
    w.key("row_count").value(ct.features.row_count);
    w.key("columns").begin_array();
    for (const auto& spec : ct.schema) {
        w.begin_object();
        w.key("name").value(spec.name);
        w.key("kind").value(column_kind_name(spec.kind));
        w.key("missing_count").value(spec.missing_count);
        w.end_object();
    }
    w.end_array();
    w.key("classes").array_of(ct.classes.names());
    w.key("categorical_features").begin_array();
    for (int j : ct.categorical_features) w.value(j);
    w.end_array();
    w.key("source_files").array_of(ct.features.source_files);
    w.end_object();
    atomic_write_file(sidecar_path(path), w.str());
}

inline CanonicalTable load_canonical(const std::filesystem::path& path) {
    auto doc = csv::parse(read_file_bytes(path), path.string());
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(read_file_bytes(sidecar_path(path)));
    } catch (const nlohmann::json::exception& e) {
        throw IoFailure("invalid table sidecar " + sidecar_path(path).string() + ": " + e.what());
    }
    if (meta.value("format", "") != "uavids-table" || meta.value("version", 0) != 1)
        throw IoFailure("unrecognized table format in " + sidecar_path(path).string());

    CanonicalTable ct;
    {
        std::vector<std::string> names;
        for (const auto& name : meta.at("classes")) names.push_back(name.get<std::string>());
        ct.classes = LabelMap(std::move(names));
    }
    for (const auto& col : meta.at("columns"))
        ct.schema.push_back({col.at("name").get<std::string>(),
                             column_kind_from(col.at("kind").get<std::string>()),
                             col.value("missing_count", std::size_t{0})});
    if (meta.contains("categorical_features"))
        for (const auto& j : meta.at("categorical_features")) ct.categorical_features.push_back(j.get<int>());
    if (meta.contains("source_files"))
        for (const auto& f : meta.at("source_files"))
            ct.features.source_files.push_back(f.get<std::string>());

    if (doc.header.size() != ct.schema.size() + 1 || doc.header.back() != kLabelColumn)
        throw SchemaMismatch("table header does not match sidecar of " + path.string());
    for (std::size_t j = 0; j < ct.schema.size(); ++j)
        if (doc.header[j] != ct.schema[j].name)
            throw SchemaMismatch("column '" + doc.header[j] + "' does not match sidecar");

    ct.features.row_count = doc.rows.size();
    for (const auto& spec : ct.schema) ct.features.columns.push_back({spec.name, {}});
    ct.labels.reserve(doc.rows.size());
    const int K = static_cast<int>(ct.classes.size());
    for (const auto& row : doc.rows) {
        for (std::size_t j = 0; j < ct.schema.size(); ++j) {
            if (ct.schema[j].kind == ColumnKind::numeric) {
                Cell c = parse_field(row[j]);
                if (!is_missing(c) && !cell_number(c))
                    throw SchemaMismatch("non-numeric value '" + row[j] + "' in numeric column '" +
                                         ct.schema[j].name + "'");
                ct.features.columns[j].values.push_back(std::move(c));
            } else {
                ct.features.columns[j].values.push_back(
                    row[j].empty() ? Cell{MissingCell{}} : Cell{row[j]});
            }
        }
        Cell lc = parse_field(row.back());
        auto v = cell_number(lc);
        int label = v ? static_cast<int>(*v) : -1;
        if (!v || *v != label || label < 0 || label >= K)
            throw InvalidLabel("label '" + row.back() + "' outside 0.." + std::to_string(K - 1));
        ct.labels.push_back(label);
    }
    // Recorded missing counts may predate edits; recompute from the data.
    for (std::size_t j = 0; j < ct.schema.size(); ++j) {
        std::size_t m = 0;
        for (const auto& c : ct.features.columns[j].values)
            if (is_missing(c)) ++m;
        ct.schema[j].missing_count = m;
    }
    return ct;
}

/// Reads an explicit class-name → index mapping (JSON object). The indices
/// must form exactly 0..K−1.
inline LabelMap load_label_map(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file_bytes(path));
    } catch (const nlohmann::json::exception& e) {
        throw IoFailure("invalid label map " + path.string() + ": " + e.what());
    }
    if (!j.is_object() || j.empty()) throw InvalidSpec("label map must be a non-empty JSON object");
    std::vector<std::string> names(j.size());
    std::vector<bool> used(j.size(), false);
    for (const auto& [name, idx] : j.items()) {
        if (!idx.is_number_integer()) throw InvalidSpec("label map index for '" + name + "' is not an integer");
        auto k = idx.get<long long>();
        if (k < 0 || k >= static_cast<long long>(names.size()) || used[static_cast<std::size_t>(k)])
            throw InvalidSpec("label map indices must be exactly 0.." +
                              std::to_string(names.size() - 1) + " with no duplicates");
        used[static_cast<std::size_t>(k)] = true;
        names[static_cast<std::size_t>(k)] = name;
    }
    return LabelMap(std::move(names));
}

}  // namespace uavids
