#pragma once

// Batch command-line front end. Every subcommand is single-process and fully
// seeded: identical config + inputs produce byte-identical reports/figures.

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "uavids/ensemble.hpp"
#include "uavids/explain.hpp"
#include "uavids/ingest.hpp"
#include "uavids/jsonio.hpp"
#include "uavids/metrics.hpp"
#include "uavids/preprocess.hpp"
#include "uavids/report.hpp"
#include "uavids/statcompare.hpp"
#include "uavids/svg.hpp"

namespace uavids {

inline constexpr const char* kToolkitVersion = "1.0.0";

/// Command-line misuse (unknown flag/subcommand, malformed value): exit 2.
/// Distinct from uavids::Error so runtime failures keep exit 1.
struct UsageError {
    std::string message;
};

struct ModelChoice {
    std::string short_name;  // rf | et | ada | gbr | gbo; used in file names
    std::string display;     // used in report tables
    ModelSpec spec;
};

struct RunConfig {
    bool seed_set = false;
    std::uint64_t seed = 0;
    std::filesystem::path out = "out";
    std::optional<std::filesystem::path> raw_dataset;   // ingest input
    std::optional<std::filesystem::path> canonical;     // default: <out>/dataset.csv
    std::optional<SynthSpec> synth;
    std::vector<ModelChoice> models;  // empty → all five defaults
    double train_fraction = 0.8;
    std::size_t k_folds = 5;
    std::string metric = "f1_macro";
    bool report_json = true;
    bool report_csv = true;
    bool figures = true;
    bool fit_on_all = false;
    AdaBoostVariant adaboost_variant = AdaBoostVariant::samme;
    std::optional<std::filesystem::path> label_map;
    // explain
    std::size_t explain_instance = 0;
    std::size_t top_n = 10;
    std::size_t lime_samples = 1000;
    double lime_kernel_width = 0.0;  // 0 → default bandwidth
    std::size_t shap_sample_cap = 200;
    // ablate
    ImportanceSource ablate_source = ImportanceSource::gini;
    std::vector<std::size_t> subset_sizes = {5, 10, 15};
    std::vector<ExclusionGroup> exclusion_groups;
    // compare
    std::optional<std::filesystem::path> contingency;
    std::size_t bootstrap_iterations = 2000;
    double confidence = 0.95;
};

inline std::string short_model_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::random_forest: return "rf";
        case ModelKind::extra_trees: return "et";
        case ModelKind::adaboost: return "ada";
        case ModelKind::grad_boost_regularized: return "gbr";
        case ModelKind::grad_boost_ordered: return "gbo";
    }
    throw InvalidSpec("unknown model kind");
}

inline std::string display_model_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::random_forest: return "Random Forest";
        case ModelKind::extra_trees: return "Extra Trees";
        case ModelKind::adaboost: return "AdaBoost";
        case ModelKind::grad_boost_regularized: return "Regularized GB";
        case ModelKind::grad_boost_ordered: return "Ordered GB";
    }
    throw InvalidSpec("unknown model kind");
}

inline ModelChoice default_model_choice(ModelKind kind) {
    return {short_model_name(kind), display_model_name(kind), default_model_spec(kind)};
}

inline std::string usage_text() {
    return
        "usage: uavids <command> [flags]\n"
        "commands:\n"
        "  synth       generate a synthetic labeled dataset (config section: synth)\n"
        "  ingest      scan raw CSVs into the canonical dataset + schema sidecar\n"
        "  preprocess  fit the imputation/scaling/encoding recipe and report it\n"
        "  train       fit configured models on the stratified training split\n"
        "  evaluate    score saved models on the held-out split; tables + figures\n"
        "  crossval    stratified k-fold cross-validation scores\n"
        "  compare     Friedman + Wilcoxon/Holm + bootstrap + McNemar comparison\n"
        "  explain     permutation importance, SHAP summaries, local SHAP, LIME\n"
        "  ablate      feature-subset ablation study\n"
        "  report      re-render CSV tables and figures from existing JSON reports\n"
        "flags:\n"
        "  --config PATH        JSON run configuration (see README for the schema)\n"
        "  --seed N             master seed; required here or in the config\n"
        "  --out DIR            output directory (default: out)\n"
        "  --model NAME         rf|et|ada|gbr|gbo; repeatable, overrides config\n"
        "  --folds N            cross-validation folds\n"
        "  --train-fraction F   stratified train fraction in (0,1)\n"
        "  --fit-on-all         additionally fit each model on every row\n"
        "  --adaboost-variant V paper|samme\n"
        "  --label-map PATH     explicit class-name -> index JSON mapping\n";
}

// --- configuration file ---------------------------------------------------------------

namespace cfgdetail {

[[noreturn]] inline void unknown_key(const std::string& origin, const std::string& context,
                                     const std::string& key) {
    throw InvalidSpec(origin + ": unknown " + context + " key '" + key + "'");
}

inline void expect(bool ok, const std::string& origin, const std::string& what) {
    if (!ok) throw InvalidSpec(origin + ": " + what);
}

inline SynthSpec parse_synth(const nlohmann::json& j, const std::string& origin) {
    SynthSpec s;
    for (const auto& [key, v] : j.items()) {
        if (key == "rows") s.n_rows = v.get<std::size_t>();
        else if (key == "numeric") s.n_numeric = v.get<std::size_t>();
        else if (key == "categorical") s.n_categorical = v.get<std::size_t>();
        else if (key == "classes") s.n_classes = v.get<std::size_t>();
        else if (key == "class_weights") s.class_weights = v.get<std::vector<double>>();
        else if (key == "separability") s.separability = v.get<double>();
        else if (key == "informative") s.n_informative = v.get<std::size_t>();
        else if (key == "missing_fraction") s.missing_fraction = v.get<double>();
        else unknown_key(origin, "synth", key);
    }
    return s;
}

inline ModelChoice parse_model_entry(const nlohmann::json& j, const std::string& origin) {
    if (j.is_string()) return default_model_choice(model_kind_from(j.get<std::string>()));
    expect(j.is_object(), origin, "model entries must be short names or objects");
    if (!j.contains("kind")) throw InvalidSpec(origin + ": model entry lacks 'kind'");
    ModelChoice choice = default_model_choice(model_kind_from(j.at("kind").get<std::string>()));
    for (const auto& [key, v] : j.items()) {
        if (key == "kind") continue;
        else if (key == "name") choice.display = v.get<std::string>();
        else if (key == "n_estimators") choice.spec.n_estimators = v.get<std::size_t>();
        else if (key == "max_depth") {
            auto depth = v.get<std::size_t>();
            choice.spec.tree.max_depth = depth == 0 ? kUnlimitedDepth : depth;
        } else if (key == "min_samples_split")
            choice.spec.tree.min_samples_split = v.get<std::size_t>();
        else if (key == "min_impurity_decrease")
            choice.spec.tree.min_impurity_decrease = v.get<double>();
        else if (key == "feature_subset") {
            if (v.is_string()) {
                auto s = v.get<std::string>();
                if (s == "all") choice.spec.tree.feature_subset = FeatureSubset::all;
                else if (s == "sqrt") choice.spec.tree.feature_subset = FeatureSubset::sqrt_count;
                else throw InvalidSpec(origin + ": feature_subset must be all|sqrt|count");
            } else {
                choice.spec.tree.feature_subset = FeatureSubset::fixed;
                choice.spec.tree.subset_count = v.get<std::size_t>();
            }
        } else if (key == "split_mode") {
            auto s = v.get<std::string>();
            if (s == "best") choice.spec.tree.split_mode = SplitMode::best;
            else if (s == "random") choice.spec.tree.split_mode = SplitMode::random;
            else throw InvalidSpec(origin + ": split_mode must be best|random");
        } else if (key == "learning_rate") choice.spec.learning_rate = v.get<double>();
        else if (key == "lambda") choice.spec.lambda = v.get<double>();
        else if (key == "gamma") choice.spec.gamma = v.get<double>();
        else unknown_key(origin, "model", key);
    }
    return choice;
}

inline std::vector<ExclusionGroup> parse_exclusions(const nlohmann::json& j,
                                                    const std::string& origin) {
    std::vector<ExclusionGroup> groups;
    for (const auto& jg : j) {
        expect(jg.is_object(), origin, "exclusion groups must be objects");
        ExclusionGroup g;
        for (const auto& [key, v] : jg.items()) {
            if (key == "name") g.name = v.get<std::string>();
            else if (key == "patterns") g.patterns = v.get<std::vector<std::string>>();
            else unknown_key(origin, "exclusion group", key);
        }
        if (g.name.empty()) throw InvalidSpec(origin + ": exclusion group lacks a name");
        groups.push_back(std::move(g));
    }
    return groups;
}

}  // namespace cfgdetail

inline RunConfig parse_config_text(const std::string& text, const std::string& origin) {
    namespace cd = cfgdetail;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidSpec(origin + ": " + e.what());
    }
    cd::expect(j.is_object(), origin, "config root must be a JSON object");

    RunConfig cfg;
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "seed") {
                cfg.seed = v.get<std::uint64_t>();
                cfg.seed_set = true;
            } else if (key == "out") cfg.out = v.get<std::string>();
            else if (key == "dataset") {
                for (const auto& [dk, dv] : v.items()) {
                    if (dk == "raw") cfg.raw_dataset = dv.get<std::string>();
                    else if (dk == "canonical") cfg.canonical = dv.get<std::string>();
                    else cd::unknown_key(origin, "dataset", dk);
                }
            } else if (key == "synth") cfg.synth = cd::parse_synth(v, origin);
            else if (key == "models") {
                cd::expect(v.is_array(), origin, "'models' must be an array");
                for (const auto& jm : v) cfg.models.push_back(cd::parse_model_entry(jm, origin));
            } else if (key == "split") {
                for (const auto& [sk, sv] : v.items()) {
                    if (sk == "train_fraction") cfg.train_fraction = sv.get<double>();
                    else if (sk == "k_folds") cfg.k_folds = sv.get<std::size_t>();
                    else cd::unknown_key(origin, "split", sk);
                }
            } else if (key == "metric") cfg.metric = v.get<std::string>();
            else if (key == "reports") {
                for (const auto& [rk, rv] : v.items()) {
                    if (rk == "json") cfg.report_json = rv.get<bool>();
                    else if (rk == "csv") cfg.report_csv = rv.get<bool>();
                    else cd::unknown_key(origin, "reports", rk);
                }
            } else if (key == "figures") cfg.figures = v.get<bool>();
            else if (key == "fit_on_all") cfg.fit_on_all = v.get<bool>();
            else if (key == "adaboost_variant")
                cfg.adaboost_variant = adaboost_variant_from(v.get<std::string>());
            else if (key == "label_map") cfg.label_map = v.get<std::string>();
            else if (key == "explain") {
                for (const auto& [ek, ev] : v.items()) {
                    if (ek == "instance") cfg.explain_instance = ev.get<std::size_t>();
                    else if (ek == "top_n") cfg.top_n = ev.get<std::size_t>();
                    else if (ek == "lime_samples") cfg.lime_samples = ev.get<std::size_t>();
                    else if (ek == "kernel_width") cfg.lime_kernel_width = ev.get<double>();
                    else if (ek == "shap_sample_cap") cfg.shap_sample_cap = ev.get<std::size_t>();
                    else cd::unknown_key(origin, "explain", ek);
                }
            } else if (key == "ablate") {
                for (const auto& [ak, av] : v.items()) {
                    if (ak == "source") cfg.ablate_source = importance_source_from(av.get<std::string>());
                    else if (ak == "subset_sizes")
                        cfg.subset_sizes = av.get<std::vector<std::size_t>>();
                    else if (ak == "exclusion_groups")
                        cfg.exclusion_groups = cd::parse_exclusions(av, origin);
                    else cd::unknown_key(origin, "ablate", ak);
                }
            } else if (key == "compare") {
                for (const auto& [ck, cv] : v.items()) {
                    if (ck == "contingency") cfg.contingency = cv.get<std::string>();
                    else if (ck == "bootstrap_iterations")
                        cfg.bootstrap_iterations = cv.get<std::size_t>();
                    else if (ck == "confidence") cfg.confidence = cv.get<double>();
                    else cd::unknown_key(origin, "compare", ck);
                }
            } else cd::unknown_key(origin, "config", key);
        }
    } catch (const nlohmann::json::exception& e) {
        throw InvalidSpec(origin + ": " + e.what());
    }
    return cfg;
}

/// Re-serialization of the effective configuration: the manifest's config
/// snapshot. Stable key order; changes iff an effective field changes.
inline void write_config_snapshot(JsonWriter& w, const RunConfig& cfg,
                                  const std::vector<ModelChoice>& models) {
    w.begin_object();
    w.key("seed").value(static_cast<std::size_t>(cfg.seed));
    w.key("out").value(cfg.out.string());
    w.key("dataset").begin_object();
    w.key("raw").value(cfg.raw_dataset ? cfg.raw_dataset->string() : "");
    w.key("canonical").value(cfg.canonical ? cfg.canonical->string() : "");
    w.end_object();
    if (cfg.synth) {
        w.key("synth").begin_object();
        w.key("rows").value(cfg.synth->n_rows);
        w.key("numeric").value(cfg.synth->n_numeric);
        w.key("categorical").value(cfg.synth->n_categorical);
        w.key("classes").value(cfg.synth->n_classes);
        w.key("class_weights").array_of(cfg.synth->class_weights);
        w.key("separability").value(cfg.synth->separability);
        w.key("informative").value(cfg.synth->n_informative == SIZE_MAX
                                       ? std::size_t{0}
                                       : cfg.synth->n_informative);
        w.key("missing_fraction").value(cfg.synth->missing_fraction);
        w.end_object();
    }
    w.key("models").begin_array();
    for (const auto& mc : models) {
        w.begin_object();
        w.key("name").value(mc.display);
        w.key("kind").value(model_kind_name(mc.spec.kind));
        w.key("n_estimators").value(mc.spec.n_estimators);
        w.key("max_depth").value(mc.spec.tree.max_depth == kUnlimitedDepth
                                     ? std::size_t{0}
                                     : mc.spec.tree.max_depth);
        w.key("min_samples_split").value(mc.spec.tree.min_samples_split);
        w.key("min_impurity_decrease").value(mc.spec.tree.min_impurity_decrease);
        w.key("feature_subset")
            .value(mc.spec.tree.feature_subset == FeatureSubset::all
                       ? std::string("all")
                       : mc.spec.tree.feature_subset == FeatureSubset::sqrt_count
                             ? std::string("sqrt")
                             : std::to_string(mc.spec.tree.subset_count));
        w.key("split_mode").value(mc.spec.tree.split_mode == SplitMode::best ? "best"
                                                                             : "random");
        w.key("learning_rate").value(mc.spec.learning_rate);
        w.key("lambda").value(mc.spec.lambda);
        w.key("gamma").value(mc.spec.gamma);
        w.key("adaboost_variant").value(adaboost_variant_name(mc.spec.variant));
        w.end_object();
    }
    w.end_array();
    w.key("split").begin_object();
    w.key("train_fraction").value(cfg.train_fraction);
    w.key("k_folds").value(cfg.k_folds);
    w.end_object();
    w.key("metric").value(cfg.metric);
    w.key("reports").begin_object();
    w.key("json").value(cfg.report_json);
    w.key("csv").value(cfg.report_csv);
    w.end_object();
    w.key("figures").value(cfg.figures);
    w.key("fit_on_all").value(cfg.fit_on_all);
    w.key("adaboost_variant").value(adaboost_variant_name(cfg.adaboost_variant));
    w.key("label_map").value(cfg.label_map ? cfg.label_map->string() : "");
    w.key("explain").begin_object();
    w.key("instance").value(cfg.explain_instance);
    w.key("top_n").value(cfg.top_n);
    w.key("lime_samples").value(cfg.lime_samples);
    w.key("kernel_width").value(cfg.lime_kernel_width);
    w.key("shap_sample_cap").value(cfg.shap_sample_cap);
    w.end_object();
    w.key("ablate").begin_object();
    w.key("source").value(importance_source_name(cfg.ablate_source));
    w.key("subset_sizes").array_of(cfg.subset_sizes);
    w.key("exclusion_groups").begin_array();
    for (const auto& g : cfg.exclusion_groups) {
        w.begin_object();
        w.key("name").value(g.name);
        w.key("patterns").array_of(g.patterns);
        w.end_object();
    }
    w.end_array();
    w.end_object();
    w.key("compare").begin_object();
    w.key("contingency").value(cfg.contingency ? cfg.contingency->string() : "");
    w.key("bootstrap_iterations").value(cfg.bootstrap_iterations);
    w.key("confidence").value(cfg.confidence);
    w.end_object();
    w.end_object();
}

// --- flag parsing -----------------------------------------------------------------------

inline RunConfig parse_args(const std::vector<std::string>& args) {
    RunConfig cfg;
    for (std::size_t i = 1; i < args.size(); ++i) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size()) throw UsageError{"flag '--config' needs a value"};
            const std::string& path = args[i + 1];
            cfg = parse_config_text(read_file_bytes(path), path);
            break;
        }
    }

    auto parse_u64 = [](const std::string& v, const std::string& flag) -> std::uint64_t {
        try {
            std::size_t pos = 0;
            auto n = std::stoull(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return n;
        } catch (const std::exception&) {
            throw UsageError{"flag '" + flag + "' needs a non-negative integer, got '" + v + "'"};
        }
    };

    std::vector<std::string> model_flags;
    for (std::size_t i = 1; i < args.size(); ++i) {
        const std::string& flag = args[i];
        auto need = [&]() -> const std::string& {
            if (i + 1 >= args.size()) throw UsageError{"flag '" + flag + "' needs a value"};
            return args[++i];
        };
        if (flag == "--config") { ++i; }
        else if (flag == "--seed") {
            cfg.seed = parse_u64(need(), "--seed");
            cfg.seed_set = true;
        } else if (flag == "--out") cfg.out = need();
        else if (flag == "--model") model_flags.push_back(need());
        else if (flag == "--folds") cfg.k_folds = parse_u64(need(), "--folds");
        else if (flag == "--train-fraction") {
            const std::string& v = need();
            try {
                std::size_t pos = 0;
                cfg.train_fraction = std::stod(v, &pos);
                if (pos != v.size()) throw std::invalid_argument(v);
            } catch (const std::exception&) {
                throw UsageError{"flag '--train-fraction' needs a number, got '" + v + "'"};
            }
            if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0))
                throw UsageError{"flag '--train-fraction' must lie strictly between 0 and 1"};
        } else if (flag == "--fit-on-all") cfg.fit_on_all = true;
        else if (flag == "--adaboost-variant") {
            const std::string& v = need();
            try {
                cfg.adaboost_variant = adaboost_variant_from(v);
            } catch (const Error&) {
                throw UsageError{"flag '--adaboost-variant' must be paper|samme, got '" + v +
                                 "'"};
            }
        } else if (flag == "--label-map") cfg.label_map = need();
        else throw UsageError{"unknown flag '" + flag + "'"};
    }

    if (!model_flags.empty()) {
        cfg.models.clear();
        for (const auto& name : model_flags) {
            try {
                cfg.models.push_back(default_model_choice(model_kind_from(name)));
            } catch (const Error&) {
                throw UsageError{"flag '--model' must be one of rf|et|ada|gbr|gbo, got '" +
                                 name + "'"};
            }
        }
    }
    return cfg;
}

// --- run manifest -----------------------------------------------------------------------

/// Records inputs/outputs with content digests, counts warnings, and writes
/// `manifest_<command>.json` in the output directory.
class ArtifactWriter {
public:
    ArtifactWriter(const RunConfig& cfg, std::vector<ModelChoice> models, std::string command)
        : cfg_(cfg), models_(std::move(models)), command_(std::move(command)) {}

    void write(const std::string& name, const std::string& content) {
        atomic_write_file(cfg_.out / name, content);
        outputs_.emplace_back(name, digest_hex(content));
    }

    /// Digest a file written by a library-side saver (model/recipe/dataset).
    void record_written(const std::filesystem::path& full) {
        auto rel = full.lexically_relative(cfg_.out);
        bool inside = !rel.empty() && rel.native().rfind("..", 0) != 0;
        outputs_.emplace_back(inside ? rel.string() : full.string(),
                              digest_hex(read_file_bytes(full)));
    }

    std::string read_input(const std::filesystem::path& path) {
        auto bytes = read_file_bytes(path);
        inputs_.emplace_back(path.string(), digest_hex(bytes));
        return bytes;
    }

    void warn(std::ostream& out, const std::string& message) {
        ++warnings_;
        out << "warning: " << message << "\n";
    }

    std::size_t warnings() const { return warnings_; }

    void finish(double elapsed_ms) {
        JsonWriter w;
        w.begin_object();
        w.key("toolkit_version").value(kToolkitVersion);
        w.key("command").value(command_);
        w.key("config");
        write_config_snapshot(w, cfg_, models_);
        w.key("inputs").begin_array();
        for (const auto& [path, digest] : inputs_) {
            w.begin_object();
            w.key("path").value(path);
            w.key("digest").value(digest);
            w.end_object();
        }
        w.end_array();
        w.key("outputs").begin_array();
        for (const auto& [path, digest] : outputs_) {
            w.begin_object();
            w.key("path").value(path);
            w.key("digest").value(digest);
            w.end_object();
        }
        w.end_array();
        w.key("warnings").value(warnings_);
        w.key("timing_ms").value(elapsed_ms);
        w.end_object();
        atomic_write_file(cfg_.out / ("manifest_" + command_ + ".json"), w.str());
    }

private:
    const RunConfig& cfg_;
    std::vector<ModelChoice> models_;
    std::string command_;
    std::vector<std::pair<std::string, std::string>> inputs_, outputs_;
    std::size_t warnings_ = 0;
};

// --- shared pipeline pieces --------------------------------------------------------------

namespace clidetail {

inline std::filesystem::path canonical_path(const RunConfig& cfg) {
    return cfg.canonical ? *cfg.canonical : cfg.out / "dataset.csv";
}

inline std::vector<ModelChoice> effective_models(const RunConfig& cfg) {
    std::vector<ModelChoice> models = cfg.models;
    if (models.empty())
        for (auto kind : {ModelKind::random_forest, ModelKind::extra_trees, ModelKind::adaboost,
                          ModelKind::grad_boost_regularized, ModelKind::grad_boost_ordered})
            models.push_back(default_model_choice(kind));
    for (auto& mc : models)
        if (mc.spec.kind == ModelKind::adaboost) mc.spec.variant = cfg.adaboost_variant;
    return models;
}

struct LoadedData {
    CanonicalTable ct;
    PreprocessRecipe recipe;
    FeatureTable ft;
};

/// Canonical dataset → recipe → numeric feature table. The label map may be
/// overridden by an explicit class-name → index file for compatibility.
inline LoadedData load_features(const RunConfig& cfg, ArtifactWriter& art) {
    auto path = canonical_path(cfg);
    art.read_input(path);
    art.read_input(sidecar_path(path));

    LoadedData d;
    d.ct = load_canonical(path);

    RawTable raw = d.ct.features;
    RawColumn label_col;
    label_col.name = kLabelColumn;
    for (int code : d.ct.labels)
        label_col.values.push_back(Cell{d.ct.classes.name(static_cast<std::size_t>(code))});
    raw.columns.push_back(std::move(label_col));

    std::optional<LabelMap> explicit_labels;
    if (cfg.label_map) {
        art.read_input(*cfg.label_map);
        LabelMap lm = load_label_map(*cfg.label_map);
        for (const auto& name : d.ct.classes.names())
            if (!lm.index_of(name))
                throw InvalidSpec("label map " + cfg.label_map->string() +
                                  " lacks observed class '" + name + "'");
        explicit_labels = std::move(lm);
    }

    d.recipe = fit_recipe(raw, d.ct.schema, kLabelColumn, std::move(explicit_labels));
    d.ft = apply_recipe(d.recipe, raw, kLabelColumn);
    return d;
}

/// Seeded stratified split with train-statistics re-standardization, shared
/// by train/evaluate/compare/explain so they all see identical data.
inline SplitResult prepare_split(const FeatureTable& ft, const RunConfig& cfg) {
    auto split = stratified_split(ft, cfg.train_fraction, cfg.seed);
    detail::standardize_pair(split.train, split.test, ft.categorical_features);
    return split;
}

inline std::vector<int> predicted_labels(const EnsembleModel& m, const FeatureTable& t) {
    Matrix p = predict_proba(m, t);
    std::vector<int> out(t.n_rows());
    for (std::size_t i = 0; i < t.n_rows(); ++i)
        out[i] = static_cast<int>(detail::leaf_argmax(p.row(i)));
    return out;
}

inline std::string model_file(const ModelChoice& mc) { return "model_" + mc.short_name + ".json"; }

inline std::string slug(const std::string& name) {
    std::string out;
    for (char c : name)
        out.push_back(c == ' ' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    return out;
}

inline std::string num(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

}  // namespace clidetail

// --- subcommands --------------------------------------------------------------------------

namespace clidetail {

inline void cmd_synth(const RunConfig& cfg, ArtifactWriter& art, std::ostream& out) {
    if (!cfg.synth) throw InvalidSpec("synth requires a 'synth' section in --config");
    auto scan = synthesize_dataset(*cfg.synth, cfg.seed);
    auto schema = infer_schema(scan.table);
    auto ct = canonical_from_scan(std::move(scan), std::move(schema));
    auto path = canonical_path(cfg);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    save_canonical(path, ct);
    art.record_written(path);
    art.record_written(sidecar_path(path));
    out << "synth: wrote " << ct.features.row_count << " rows x "
        << ct.features.columns.size() << " features, " << ct.classes.size()
        << " classes to " << path.string() << "\n";
}

inline void cmd_ingest(const RunConfig& cfg, ArtifactWriter& art, std::ostream& out) {
    if (!cfg.raw_dataset)
        throw InvalidSpec("ingest requires dataset.raw in --config");
    auto scan = scan_dataset(*cfg.raw_dataset);
    for (const auto& f : scan.table.source_files) art.read_input(f);
    auto schema = infer_schema(scan.table);
    auto ct = canonical_from_scan(std::move(scan), std::move(schema));
    auto path = canonical_path(cfg);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    save_canonical(path, ct);
    art.record_written(path);
    art.record_written(sidecar_path(path));

    JsonWriter w;
    w.begin_object();
    w.key("source_files").array_of(ct.features.source_files);
    w.key("rows").value(ct.features.row_count);
    w.key("classes").array_of(ct.classes.names());
    w.key("columns").begin_array();
    for (const auto& spec : ct.schema) {
        w.begin_object();
        w.key("name").value(spec.name);
        w.key("kind").value(column_kind_name(spec.kind));
        w.key("missing").value(spec.missing_count);
        w.end_object();
    }
    w.end_array();
    w.end_object();
    art.write("ingest_report.json", w.str());
    out << "ingest: " << ct.features.row_count << " rows x " << ct.schema.size()
        << " features from " << ct.features.source_files.size() << " file(s), "
        << ct.classes.size() << " classes\n";
}

inline void cmd_preprocess(const RunConfig& cfg, ArtifactWriter& art, std::ostream& out) {
    auto d = load_features(cfg, art);
    save_recipe(cfg.out / "recipe.json", d.recipe);
    art.record_written(cfg.out / "recipe.json");

    // Verification sweep: post-recipe columns must be missing-free with
    // standardized numeric moments.
    double max_abs_mean = 0.0, max_var_err = 0.0;
    std::vector<bool> is_cat(d.ft.n_features(), false);
    for (int j : d.ft.categorical_features) is_cat[static_cast<std::size_t>(j)] = true;
    for (std::size_t j = 0; j < d.ft.n_features(); ++j) {
        if (is_cat[j]) continue;
        double mean = 0.0;
        const auto n = static_cast<double>(d.ft.n_rows());
        for (std::size_t i = 0; i < d.ft.n_rows(); ++i) mean += d.ft.X(i, j);
        mean /= n;
        double var = 0.0;
        for (std::size_t i = 0; i < d.ft.n_rows(); ++i) {
            double diff = d.ft.X(i, j) - mean;
            var += diff * diff;
        }
        var /= n;
        max_abs_mean = std::max(max_abs_mean, std::abs(mean));
        if (var > 0.0) max_var_err = std::max(max_var_err, std::abs(var - 1.0));
    }

    std::vector<std::size_t> class_counts(d.ft.n_classes(), 0);
    for (int y : d.ft.y) ++class_counts[static_cast<std::size_t>(y)];

    JsonWriter w;
    w.begin_object();
    w.key("rows").value(d.ft.n_rows());
    w.key("classes").array_of(d.ft.class_names.names());
    w.key("class_counts").array_of(class_counts);
    w.key("max_abs_standardized_mean").value(max_abs_mean);
    w.key("max_standardized_variance_error").value(max_var_err);
    w.key("columns").begin_array();
    for (std::size_t j = 0; j < d.recipe.columns.size(); ++j) {
        const auto& rc = d.recipe.columns[j];
        w.begin_object();
        w.key("name").value(rc.name);
        w.key("kind").value(column_kind_name(rc.kind));
        w.key("missing_filled").value(d.ct.schema.at(j).missing_count);
        if (rc.kind == ColumnKind::numeric) {
            w.key("median").value(rc.median);
            w.key("mean").value(rc.mean);
            w.key("std_dev").value(rc.std_dev);
        } else {
            w.key("mode").value(rc.mode);
            w.key("domain_size").value(rc.domain.size());
        }
        w.end_object();
    }
    w.end_array();
    w.end_object();
    art.write("preprocess_report.json", w.str());
    out << "preprocess: " << d.ft.n_rows() << " rows x " << d.ft.n_features()
        << " features; max |mean| " << format_double_17(max_abs_mean)
        << ", max |var-1| " << format_double_17(max_var_err) << "\n";
}

inline void cmd_train(const RunConfig& cfg, ArtifactWriter& art, std::ostream& out) {
    auto d = load_features(cfg, art);
    auto models = effective_models(cfg);
    auto split = prepare_split(d.ft, cfg);
    auto cw = class_weights(split.train.y, d.ft.n_classes());

    save_recipe(cfg.out / "recipe.json", d.recipe);
    art.record_written(cfg.out / "recipe.json");

    JsonWriter w;
    w.begin_object();
    w.key("train_rows").value(split.train.n_rows());
    w.key("test_rows").value(split.test.n_rows());
    w.key("models").begin_array();
    for (const auto& mc : models) {
        auto m = fit_model(mc.spec, split.train, cw, cfg.seed);
        save_model(m, cfg.out / model_file(mc));
        art.record_written(cfg.out / model_file(mc));
        auto train_metrics = evaluate_model(m, split.train);
        w.begin_object();
        w.key("name").value(mc.display);
        w.key("file").value(model_file(mc));
        w.key("rounds_completed").value(m.train_meta.rounds_completed);
        w.key("train_accuracy").value(train_metrics.accuracy);
        w.key("loss_curve").array_of(m.train_meta.loss_curve);
        w.end_object();
        out << "train: " << mc.display << " rounds=" << m.train_meta.rounds_completed
            << " train_accuracy=" << num(train_metrics.accuracy, 5) << "\n";
        if (cfg.fit_on_all) {
            auto full = fit_model(mc.spec, d.ft, class_weights(d.ft.y, d.ft.n_classes()),
                                  cfg.seed);
            auto full_name = "model_" + mc.short_name + "_full.json";
            save_model(full, cfg.out / full_name);
            art.record_written(cfg.out / full_name);
        }
    }
    w.end_array();
    w.end_object();
    art.write("train_report.json", w.str());
}

inline void cmd_evaluate(const RunConfig& cfg, ArtifactWriter& art, std::ostream& out) {
    auto d = load_features(cfg, art);
    auto models = effective_models(cfg);
    auto split = prepare_split(d.ft, cfg);

    std::vector<NamedMetrics> all;
    for (const auto& mc : models) {
        art.read_input(cfg.out / model_file(mc));
        auto m = load_model(cfg.out / model_file(mc));
        all.push_back({mc.display, evaluate_model(m, split.test)});
        const auto& r = all.back().report;
        out << "evaluate: " << mc.display << " accuracy=" << num(r.accuracy, 5)
            << " f1_macro=" << num(r.f1_macro, 5) << " roc_auc=" << num(r.roc_auc_macro, 5)
            << "\n";
        if (cfg.report_csv)
            art.write("classification_report_" + mc.short_name + ".csv",
                      classification_report_csv(r, d.ft.class_names.names()));
        if (cfg.figures) {
            art.write("confusion_" + mc.short_name + ".svg",
                      svg_confusion_matrix(r.confusion, d.ft.class_names.names(),
                                           "Confusion Matrix: " + mc.display));
            art.write("roc_" + mc.short_name + ".svg",
                      svg_roc_curves(r.roc_curves, d.ft.class_names.names(),
                                     "ROC Curves: " + mc.display));
        }
        auto importance = gini_importance(m);
        if (cfg.report_csv)
            art.write("importance_" + mc.short_name + ".csv",
                      importance_csv(importance, d.ft.feature_names));
        if (cfg.figures) {
            std::vector<std::pair<std::string, double>> bars;
            for (std::size_t i = 0; i < importance.size() && i < cfg.top_n; ++i)
                bars.emplace_back(d.ft.feature_names.at(importance[i].feature),
                                  importance[i].importance);
            art.write("importance_" + mc.short_name + ".svg",
                      svg_importance_bars(bars, "Top Features: " + mc.display));
        }
    }
    if (cfg.report_json)
        art.write("metrics.json", metrics_json(all, d.ft.class_names.names()));
    if (cfg.report_csv) art.write("metrics.csv", metrics_table_csv(all));
}

inline void cmd_crossval(const RunConfig& cfg, ArtifactWriter& art, std::ostream& out) {
    auto d = load_features(cfg, art);
    auto models = effective_models(cfg);
    std::vector<ModelSpec> specs;
    std::vector<std::string> names;
    for (const auto& mc : models) {
        specs.push_back(mc.spec);
        names.push_back(mc.display);
    }
    auto fs = cross_validate(specs, names, d.ft, cfg.k_folds, score_fn_from(cfg.metric),
                             cfg.seed);
    if (cfg.report_csv) art.write("cv_scores.csv", cv_scores_csv(fs));
    if (cfg.report_json) art.write("cv_scores.json", cv_scores_json(fs, cfg.metric));
    for (std::size_t m = 0; m < fs.models.size(); ++m) {
        double mean = 0.0;
        for (std::size_t f = 0; f < fs.folds; ++f) mean += fs.scores(m, f);
        mean /= static_cast<double>(fs.folds);
        out << "crossval: " << fs.models[m] << " mean_" << cfg.metric << "="
            << num(mean, 5) << " over " << fs.folds << " folds\n";
    }
}

inline void cmd_compare(const RunConfig& cfg, ArtifactWriter& art, std::ostream& out) {
    if (cfg.contingency) {
        auto text = art.read_input(*cfg.contingency);
        auto table = parse_contingency_csv(text, cfg.contingency->string());
        auto res = mcnemar_from_table(table);
        if (cfg.report_csv) art.write("mcnemar.csv", mcnemar_csv(res));
        if (cfg.report_json) {
            JsonWriter w;
            w.begin_object();
            w.key("mcnemar").begin_object();
            w.key("both_correct").value(table.both_correct);
            w.key("a_correct_b_wrong").value(table.a_correct_b_wrong);
            w.key("a_wrong_b_correct").value(table.a_wrong_b_correct);
            w.key("both_wrong").value(table.both_wrong);
            w.key("chi2").value(res.chi2);
            w.key("p").value(res.p);
            w.end_object();
            w.end_object();
            art.write("mcnemar.json", w.str());
        }
        out << "compare: mcnemar chi2=" << num(res.chi2, 4) << " p=" << num(res.p, 6)
            << "\n";
        return;
    }

    auto d = load_features(cfg, art);
    auto models = effective_models(cfg);
    if (models.size() < 2) throw InvalidSpec("compare needs at least two models");
    std::vector<ModelSpec> specs;
    std::vector<std::string> names;
    for (const auto& mc : models) {
        specs.push_back(mc.spec);
        names.push_back(mc.display);
    }
    auto metric_fn = score_fn_from(cfg.metric);
    auto fs = cross_validate(specs, names, d.ft, cfg.k_folds, metric_fn, cfg.seed);
    auto rep = compare_models(fs, WilcoxonAlternative::greater);

    // Holdout predictions feed the bootstrap intervals and the McNemar test.
    auto split = prepare_split(d.ft, cfg);
    auto cw = class_weights(split.train.y, d.ft.n_classes());
    std::vector<std::vector<int>> preds;
    for (const auto& mc : models)
        preds.push_back(predicted_labels(fit_model(mc.spec, split.train, cw, cfg.seed),
                                         split.test));
    auto index_of = [&](const std::string& name) {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return i;
        throw InvalidSpec("unknown model in comparison: " + name);
    };
    for (auto& pc : rep.pairwise) {
        auto ci = bootstrap_diff_ci(preds[index_of(pc.model_a)], preds[index_of(pc.model_b)],
                                    split.test.y, metric_fn, cfg.bootstrap_iterations,
                                    cfg.confidence, cfg.seed);
        pc.mean_diff = ci.mean_diff;
        pc.ci_low = ci.ci_low;
        pc.ci_high = ci.ci_high;
    }

    // McNemar between the two best models by mean cross-validation score.
    std::vector<std::pair<double, std::size_t>> by_mean;
    for (std::size_t m = 0; m < names.size(); ++m) {
        double mean = 0.0;
        for (std::size_t f = 0; f < fs.folds; ++f) mean += fs.scores(m, f);
        by_mean.emplace_back(-mean, m);
    }
    std::sort(by_mean.begin(), by_mean.end());
    std::size_t best = by_mean[0].second, second = by_mean[1].second;
    rep.mcnemar = mcnemar_test(split.test.y, preds[best], preds[second]);

    if (cfg.report_csv) {
        art.write("cv_scores.csv", cv_scores_csv(fs));
        art.write("friedman.csv", friedman_csv(rep.friedman));
        art.write("pairwise.csv", pairwise_csv(rep));
        art.write("mcnemar.csv", mcnemar_csv(*rep.mcnemar));
        art.write("contingency.csv",
                  contingency_csv(rep.mcnemar->table, names[best], names[second]));
    }
    if (cfg.report_json)
        art.write("comparison.json",
                  comparison_json(rep, cfg.metric, names[best], names[second]));
    out << "compare: friedman statistic=" << num(rep.friedman.statistic, 4)
        << " p=" << num(rep.friedman.p, 6) << "\n";
    for (const auto& pc : rep.pairwise)
        out << "compare: " << pc.model_a << " > " << pc.model_b
            << " p_raw=" << num(pc.p_raw, 6) << " p_holm=" << num(pc.p_holm, 6)
            << " mean_diff=" << num(pc.mean_diff, 6) << "\n";
    out << "compare: mcnemar " << names[best] << " vs " << names[second]
        << " chi2=" << num(rep.mcnemar->chi2, 4) << " p=" << num(rep.mcnemar->p, 6) << "\n";
}

inline void cmd_explain(const RunConfig& cfg, ArtifactWriter& art, std::ostream& out) {
    auto d = load_features(cfg, art);
    auto models = effective_models(cfg);
    const auto& mc = models.front();
    art.read_input(cfg.out / model_file(mc));
    auto m = load_model(cfg.out / model_file(mc));
    auto split = prepare_split(d.ft, cfg);
    auto metric_fn = score_fn_from(cfg.metric);

    auto perm = permutation_importance(m, split.test, metric_fn, 5, cfg.seed);
    if (cfg.report_csv)
        art.write("permutation_importance.csv", permutation_importance_csv(perm));
    if (cfg.figures) {
        std::vector<std::pair<std::string, double>> bars;
        for (std::size_t i = 0; i < perm.rows.size() && i < cfg.top_n; ++i)
            bars.emplace_back(perm.rows[i].name, perm.rows[i].mean);
        art.write("importance_mean.svg",
                  svg_importance_bars(bars, "Permutation Importance: " + mc.display));
    }

    std::vector<ShapSummary> summaries;
    for (std::size_t k = 0; k < d.ft.n_classes(); ++k) {
        summaries.push_back(shap_summary(m, split.test, k, cfg.top_n, cfg.shap_sample_cap,
                                         cfg.seed));
        if (cfg.figures)
            art.write("shap_summary_class_" + std::to_string(k) + ".svg",
                      svg_shap_summary(summaries.back(),
                                       "Global SHAP: " + d.ft.class_names.name(k)));
    }

    if (cfg.explain_instance >= split.test.n_rows())
        throw InvalidSpec("explain.instance " + std::to_string(cfg.explain_instance) +
                          " is out of range for the " + std::to_string(split.test.n_rows()) +
                          "-row held-out split");
    auto x = split.test.X.row(cfg.explain_instance);
    auto att = tree_shap(m, x, cfg.explain_instance);
    std::size_t predicted = detail::leaf_argmax(std::span<const double>(att.output));
    if (cfg.figures)
        art.write("local_shap.svg",
                  svg_local_force(att, predicted, d.ft.feature_names, x,
                                  "Local SHAP: instance " +
                                      std::to_string(cfg.explain_instance) + " -> " +
                                      d.ft.class_names.name(predicted),
                                  cfg.top_n));

    auto lime = lime_explain(m, x, &d.recipe, cfg.lime_samples, cfg.lime_kernel_width,
                             cfg.top_n, cfg.seed);
    const auto& lime_pred = lime.at(predicted);
    if (cfg.figures) {
        std::vector<std::pair<std::string, double>> bars;
        for (const auto& coef : lime_pred.top) bars.emplace_back(coef.name, coef.weight);
        art.write("lime.svg",
                  svg_importance_bars(bars, "LIME: instance " +
                                                std::to_string(cfg.explain_instance) +
                                                " class " + d.ft.class_names.name(predicted)));
    }

    if (cfg.report_json) {
        JsonWriter w;
        w.begin_object();
        w.key("model").value(mc.display);
        w.key("permutation").begin_object();
        w.key("baseline").value(perm.baseline);
        w.key("rows").begin_array();
        for (const auto& row : perm.rows) {
            w.begin_object();
            w.key("feature").value(row.feature);
            w.key("name").value(row.name);
            w.key("mean").value(row.mean);
            w.key("std_dev").value(row.std_dev);
            w.end_object();
        }
        w.end_array();
        w.end_object();
        w.key("shap_summaries").begin_array();
        for (const auto& s : summaries) {
            w.begin_object();
            w.key("class").value(s.class_k);
            w.key("space").value(s.space);
            w.key("features").begin_array();
            for (const auto& f : s.features) {
                w.begin_object();
                w.key("feature").value(f.feature);
                w.key("name").value(f.name);
                w.key("mean_abs_phi").value(f.mean_abs_phi);
                w.end_object();
            }
            w.end_array();
            w.end_object();
        }
        w.end_array();
        w.key("local").begin_object();
        w.key("instance").value(cfg.explain_instance);
        w.key("space").value(att.space);
        w.key("predicted_class").value(d.ft.class_names.name(predicted));
        w.key("base_value").array_of(att.base_value);
        w.key("output").array_of(att.output);
        w.key("phi").begin_array();
        for (std::size_t c = 0; c < att.phi.rows(); ++c) {
            std::vector<double> row;
            for (std::size_t j = 0; j < att.phi.cols(); ++j) row.push_back(att.phi(c, j));
            w.array_of(row);
        }
        w.end_array();
        w.end_object();
        w.key("lime").begin_object();
        w.key("class").value(d.ft.class_names.name(predicted));
        w.key("intercept").value(lime_pred.intercept);
        w.key("r2").value(lime_pred.r2);
        w.key("coefficients").begin_array();
        for (const auto& coef : lime_pred.top) {
            w.begin_object();
            w.key("feature").value(coef.feature);
            w.key("name").value(coef.name);
            w.key("weight").value(coef.weight);
            w.end_object();
        }
        w.end_array();
        w.end_object();
        w.end_object();
        art.write("explain.json", w.str());
    }
    out << "explain: " << mc.display << " instance " << cfg.explain_instance
        << " predicted " << d.ft.class_names.name(predicted) << " (lime r2="
        << num(lime_pred.r2, 4) << ")\n";
}

inline void cmd_ablate(const RunConfig& cfg, ArtifactWriter& art, std::ostream& out) {
    auto d = load_features(cfg, art);
    auto models = effective_models(cfg);
    auto rep = ablation_study(models.front().spec, d.ft, cfg.ablate_source, cfg.subset_sizes,
                              cfg.exclusion_groups, cfg.k_folds, cfg.seed);
    if (cfg.report_csv) art.write("ablation.csv", ablation_csv(rep, d.ft.feature_names));
    if (cfg.report_json) art.write("ablation.json", ablation_json(rep, d.ft.feature_names));
    for (const auto& row : rep.rows)
        out << "ablate: " << row.name << " features=" << row.features.size()
            << " f1_macro=" << num(row.f1_macro, 5) << " delta=" << num(row.delta, 5)
            << "\n";
}

inline void cmd_report(const RunConfig& cfg, ArtifactWriter& art, std::ostream& out) {
    namespace fs = std::filesystem;
    bool rendered = false;

    if (fs::exists(cfg.out / "metrics.json")) {
        auto parsed = parse_metrics_json(art.read_input(cfg.out / "metrics.json"));
        art.write("metrics.csv", metrics_table_csv(parsed.models));
        for (const auto& nm : parsed.models) {
            auto tag = slug(nm.model);
            art.write("classification_report_" + tag + ".csv",
                      classification_report_csv(nm.report, parsed.classes));
            art.write("confusion_" + tag + ".svg",
                      svg_confusion_matrix(nm.report.confusion, parsed.classes,
                                           "Confusion Matrix: " + nm.model));
            art.write("roc_" + tag + ".svg",
                      svg_roc_curves(nm.report.roc_curves, parsed.classes,
                                     "ROC Curves: " + nm.model));
        }
        rendered = true;
    } else {
        art.warn(out, "report: skipped metrics tables (missing " +
                          (cfg.out / "metrics.json").string() + ")");
    }

    if (fs::exists(cfg.out / "comparison.json")) {
        auto parsed = parse_comparison_json(art.read_input(cfg.out / "comparison.json"));
        art.write("friedman.csv", friedman_csv(parsed.report.friedman));
        art.write("pairwise.csv", pairwise_csv(parsed.report));
        if (parsed.report.mcnemar) {
            art.write("mcnemar.csv", mcnemar_csv(*parsed.report.mcnemar));
            art.write("contingency.csv",
                      contingency_csv(parsed.report.mcnemar->table, parsed.mcnemar_a,
                                      parsed.mcnemar_b));
        }
        rendered = true;
    } else {
        art.warn(out, "report: skipped comparison tables (missing " +
                          (cfg.out / "comparison.json").string() + ")");
    }

    if (fs::exists(cfg.out / "explain.json")) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(art.read_input(cfg.out / "explain.json"));
            ImportanceTable perm;
            perm.baseline = j.at("permutation").at("baseline").get<double>();
            for (const auto& jr : j.at("permutation").at("rows")) {
                ImportanceRow row;
                row.feature = jr.at("feature").get<std::size_t>();
                row.name = jr.at("name").get<std::string>();
                row.mean = jr.at("mean").get<double>();
                row.std_dev = jr.at("std_dev").get<double>();
                perm.rows.push_back(std::move(row));
            }
            art.write("permutation_importance.csv", permutation_importance_csv(perm));
            std::vector<std::pair<std::string, double>> bars;
            for (std::size_t i = 0; i < perm.rows.size() && i < cfg.top_n; ++i)
                bars.emplace_back(perm.rows[i].name, perm.rows[i].mean);
            art.write("importance_mean.svg",
                      svg_importance_bars(bars, "Permutation Importance: " +
                                                    j.at("model").get<std::string>()));
        } catch (const nlohmann::json::exception& e) {
            throw DecodeError(std::string("invalid explain report: ") + e.what());
        }
        rendered = true;
    } else {
        art.warn(out, "report: skipped explanation tables (missing " +
                          (cfg.out / "explain.json").string() + ")");
    }

    if (fs::exists(cfg.out / "ablation.json")) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(art.read_input(cfg.out / "ablation.json"));
            std::string csv_text =
                csv::format_row({"Configuration", "Features", "F1 Macro", "Delta"});
            for (const auto& jr : j.at("rows")) {
                std::string joined;
                for (const auto& f : jr.at("features")) {
                    if (!joined.empty()) joined += ' ';
                    joined += f.get<std::string>();
                }
                csv_text += csv::format_row(
                    {jr.at("name").get<std::string>(), joined,
                     format_double_17(jr.at("f1_macro").get<double>()),
                     format_double_17(jr.at("delta").get<double>())});
            }
            art.write("ablation.csv", csv_text);
        } catch (const nlohmann::json::exception& e) {
            throw DecodeError(std::string("invalid ablation report: ") + e.what());
        }
        rendered = true;
    } else {
        art.warn(out, "report: skipped ablation tables (missing " +
                          (cfg.out / "ablation.json").string() + ")");
    }

    out << "report: " << (rendered ? "re-rendered available sections" : "nothing to render")
        << ", " << art.warnings() << " warning(s)\n";
}

}  // namespace clidetail

// --- entry point ----------------------------------------------------------------------------

inline int run_command(const std::vector<std::string>& args, std::ostream& out,
                       std::ostream& err) {
    namespace cd = clidetail;
    const auto t0 = std::chrono::steady_clock::now();
    std::string command = args.empty() ? "" : args[0];
    try {
        if (args.empty()) throw UsageError{"missing subcommand"};
        if (command == "help" || command == "--help" || command == "-h") {
            out << usage_text();
            return 0;
        }
        static const std::vector<std::string> kCommands = {
            "ingest", "preprocess", "train",  "evaluate", "crossval",
            "compare", "explain",   "ablate", "synth",    "report"};
        if (std::find(kCommands.begin(), kCommands.end(), command) == kCommands.end())
            throw UsageError{"unknown subcommand '" + command + "'"};

        RunConfig cfg = parse_args(args);
        if (!cfg.seed_set)
            throw UsageError{"--seed is required (or a 'seed' key in --config)"};
        std::filesystem::create_directories(cfg.out);
        ArtifactWriter art(cfg, cd::effective_models(cfg), command);

        if (command == "synth") cd::cmd_synth(cfg, art, out);
        else if (command == "ingest") cd::cmd_ingest(cfg, art, out);
        else if (command == "preprocess") cd::cmd_preprocess(cfg, art, out);
        else if (command == "train") cd::cmd_train(cfg, art, out);
        else if (command == "evaluate") cd::cmd_evaluate(cfg, art, out);
        else if (command == "crossval") cd::cmd_crossval(cfg, art, out);
        else if (command == "compare") cd::cmd_compare(cfg, art, out);
        else if (command == "explain") cd::cmd_explain(cfg, art, out);
        else if (command == "ablate") cd::cmd_ablate(cfg, art, out);
        else if (command == "report") cd::cmd_report(cfg, art, out);

        const auto elapsed = std::chrono::duration<double, std::milli>(
            std::chrono::steady_clock::now() - t0);
        art.finish(elapsed.count());
        return 0;
    } catch (const UsageError& u) {
        err << "usage error: " << u.message << "\n" << usage_text();
        return 2;
    } catch (const std::exception& e) {
        // Single machine-parseable line: error: <command>: <message>.
        std::string message = e.what();
        std::replace(message.begin(), message.end(), '\n', ' ');
        err << "error: " << (command.empty() ? "uavids" : command) << ": " << message << "\n";
        return 1;
    }
}

}  // namespace uavids
