#include "crashrisk/experiments.hpp"

#include "crashrisk/errors.hpp"
#include "crashrisk/evaluation.hpp"
#include "crashrisk/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <utility>

namespace crashrisk {

namespace {

struct KeyedRow {
    std::array<int, 4> key{};
    std::vector<std::string> cells;
};

void sort_rows(std::vector<KeyedRow>& rows) {
    std::stable_sort(rows.begin(), rows.end(),
                     [](const KeyedRow& a, const KeyedRow& b) { return a.key < b.key; });
}

ReportTable to_table(std::vector<std::string> columns, std::vector<KeyedRow> rows) {
    sort_rows(rows);
    ReportTable table;
    table.columns = std::move(columns);
    table.rows.reserve(rows.size());
    for (KeyedRow& row : rows) table.rows.push_back(std::move(row.cells));
    return table;
}

struct MeanStd {
    double mean = 0.0;
    double stddev = 0.0;
};

MeanStd mean_std(const std::vector<double>& values) {
    MeanStd out;
    const double n = static_cast<double>(values.size());
    for (double v : values) out.mean += v;
    out.mean /= n;
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - out.mean) * (v - out.mean);
        out.stddev = std::sqrt(ss / (n - 1.0));
    }
    return out;
}

double median(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

ImputeResult fit_one_imputer(ImputerKind kind, const MaskedTable& table, int latent_dim,
                             int clusters, int max_iter, std::uint64_t seed) {
    ImputerSpec spec;
    spec.kind = kind;
    spec.latent_dim = latent_dim;
    spec.clusters = clusters;
    spec.max_iter = max_iter;
    return fit_imputer(spec, table, seed);
}

void require_complete(const LabeledDataset& data, const std::string& experiment) {
    if (data.table.missing_count() > 0)
        throw ConfigError(experiment + " requires a complete dataset (no missing cells)");
}

// Single source of truth for what "no dataset given" means, so the manifest
// echoes exactly the generator configuration the run used.
GeneratorConfig resolved_generator_config(const ExperimentSpec& spec) {
    if (spec.dataset.synthetic) return *spec.dataset.synthetic;
    GeneratorConfig config;
    config.rng_seed = spec.seed;
    if (spec.experiment == ExperimentId::ImputerDimSweep ||
        spec.experiment == ExperimentId::ImputerRatioSweep) {
        config.n_crash = 100;  // imputer sweeps ignore labels; 200x24 desk scale
        config.n_noncrash = 100;
    }
    return config;
}

nlohmann::json spec_to_json(const ExperimentSpec& spec);

std::string make_manifest(const ExperimentSpec& spec) {
    nlohmann::json doc;
    doc["experiment"] = to_string(spec.experiment);
    doc["library_version"] = kLibraryVersion;
    doc["seed"] = spec.seed;
    doc["spec"] = spec_to_json(spec);
    return doc.dump(2);
}

nlohmann::json spec_to_json(const ExperimentSpec& spec) {
    nlohmann::json doc;
    doc["experiment"] = to_string(spec.experiment);
    if (spec.dataset.csv_path) {
        doc["dataset"]["csv"] = *spec.dataset.csv_path;
    } else {
        const GeneratorConfig resolved = resolved_generator_config(spec);
        nlohmann::json gen;
        gen["n_crash"] = resolved.n_crash;
        gen["n_noncrash"] = resolved.n_noncrash;
        gen["d"] = resolved.d;
        gen["latent_rank"] = resolved.latent_rank;
        gen["noise_std"] = resolved.noise_std;
        gen["class_shift"] = resolved.class_shift;
        gen["rng_seed"] = resolved.rng_seed;
        doc["dataset"]["synthetic"] = gen;
        if (!spec.dataset.synthetic) doc["dataset"]["defaulted"] = true;
    }
    doc["gammas"] = spec.gammas;
    doc["latent_dims"] = spec.latent_dims;
    doc["ratios"] = spec.ratios;
    std::vector<std::string> names;
    for (ClassifierKind kind : spec.classifiers) names.push_back(to_string(kind));
    doc["classifiers"] = names;
    doc["repeats"] = spec.effective_repeats();
    doc["cv_folds"] = spec.cv_folds;
    doc["seed"] = spec.seed;
    doc["out_dir"] = spec.out_dir;
    doc["format"] = spec.format;
    doc["scaling"] = spec.scaling;
    doc["cost_gamma"] = spec.cost_gamma;
    doc["gaussian_gamma"] = spec.gaussian_gamma;
    doc["svm_C"] = spec.svm_C;
    doc["adaboost_rounds"] = spec.adaboost_rounds;
    doc["latent_dim"] = spec.latent_dim;
    doc["kmeans_clusters"] = spec.kmeans_clusters;
    doc["top_k"] = spec.top_k;
    doc["rf_trees"] = spec.rf_trees;
    doc["validation_missing"] = spec.validation_missing;
    doc["imputer_max_iter"] = spec.imputer_max_iter;
    return doc;
}

PipelineConfig base_pipeline_config(const ExperimentSpec& spec, ClassifierKind classifier) {
    PipelineConfig config;
    config.classifier = classifier;
    config.svm_C = spec.svm_C;
    config.gaussian_gamma = spec.gaussian_gamma;
    config.adaboost_rounds = spec.adaboost_rounds;
    config.imputer.latent_dim = spec.latent_dim;
    config.imputer.clusters = spec.kmeans_clusters;
    config.imputer.max_iter = spec.imputer_max_iter;
    config.standardize = spec.scaling == "train";
    return config;
}

// Applies the spec's scaling policy: "full" standardizes the whole table in
// place before anything else sees it.
LabeledDataset load_working_dataset(const ExperimentSpec& spec) {
    LabeledDataset data = load_experiment_dataset(spec);
    if (spec.scaling == "full") data.table = transform(data.table, fit_scaler(data.table));
    return data;
}

std::string mode_name(ImbalanceMode mode) { return to_string(mode); }

}  // namespace

std::string to_string(ExperimentId id) {
    switch (id) {
        case ExperimentId::ImbalanceSweep: return "imbalance_sweep";
        case ExperimentId::ImputerDimSweep: return "imputer_dim_sweep";
        case ExperimentId::ImputerRatioSweep: return "imputer_ratio_sweep";
        case ExperimentId::MissingVsAuc: return "missing_vs_auc";
        case ExperimentId::Validation: return "validation";
    }
    throw InternalError("unknown experiment id");
}

ExperimentId experiment_id_from_string(const std::string& name) {
    if (name == "imbalance_sweep") return ExperimentId::ImbalanceSweep;
    if (name == "imputer_dim_sweep") return ExperimentId::ImputerDimSweep;
    if (name == "imputer_ratio_sweep") return ExperimentId::ImputerRatioSweep;
    if (name == "missing_vs_auc") return ExperimentId::MissingVsAuc;
    if (name == "validation") return ExperimentId::Validation;
    throw ConfigError("unknown experiment '" + name + "'");
}

void ExperimentSpec::validate() const {
    if (gammas.empty() || latent_dims.empty() || ratios.empty() || classifiers.empty())
        throw ConfigError("experiment grids must be non-empty");
    for (double g : gammas)
        if (g < 1.0) throw ConfigError("gamma grid values must be >= 1");
    for (int c : latent_dims)
        if (c < 1) throw ConfigError("latent_dims grid values must be >= 1");
    for (double r : ratios)
        if (r < 0.0 || r >= 1.0) throw ConfigError("ratio grid values must lie in [0, 1)");
    if (repeats != -1 && repeats < 1) throw ConfigError("repeats must be >= 1");
    if (cv_folds < 2) throw ConfigError("cv_folds must be >= 2");
    if (format != "csv" && format != "json")
        throw ConfigError("format must be 'csv' or 'json'");
    if (scaling != "full" && scaling != "train")
        throw ConfigError("scaling must be 'full' or 'train'");
    if (cost_gamma < 1.0) throw ConfigError("cost_gamma must be >= 1");
    if (gaussian_gamma <= 0.0) throw ConfigError("gaussian_gamma must be positive");
    if (svm_C <= 0.0) throw ConfigError("svm_C must be positive");
    if (adaboost_rounds < 1) throw ConfigError("adaboost_rounds must be >= 1");
    if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
    if (kmeans_clusters < 1) throw ConfigError("kmeans_clusters must be >= 1");
    if (top_k < 1) throw ConfigError("top_k must be >= 1");
    if (rf_trees < 1) throw ConfigError("rf_trees must be >= 1");
    if (validation_missing < 0.0 || validation_missing >= 1.0)
        throw ConfigError("validation_missing must lie in [0, 1)");
    if (imputer_max_iter < 1) throw ConfigError("imputer_max_iter must be >= 1");
    if (dataset.synthetic && dataset.csv_path)
        throw ConfigError("dataset source must be synthetic or csv, not both");
}

int ExperimentSpec::effective_repeats() const {
    if (repeats > 0) return repeats;
    switch (experiment) {
        case ExperimentId::ImbalanceSweep:
        case ExperimentId::Validation: return 1;
        default: return 5;  // the protocol averages five runs elsewhere
    }
}

ExperimentSpec experiment_spec_from_json(const std::string& json_text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("experiment spec is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("experiment spec must be a JSON object");

    static const std::array<const char*, 22> known = {
        "experiment",   "dataset",        "gammas",          "latent_dims",
        "ratios",       "classifiers",    "repeats",         "cv_folds",
        "seed",         "out_dir",        "format",          "scaling",
        "cost_gamma",   "gaussian_gamma", "svm_C",           "adaboost_rounds",
        "latent_dim",   "kmeans_clusters", "top_k",          "rf_trees",
        "validation_missing", "imputer_max_iter"};
    for (const auto& [key, value] : doc.items())
        if (std::find_if(known.begin(), known.end(),
                         [&](const char* k) { return key == k; }) == known.end())
            throw ConfigError("unknown experiment spec key '" + key + "'");

    if (!doc.contains("experiment"))
        throw ConfigError("experiment spec must name an 'experiment'");

    ExperimentSpec spec;
    try {
        spec.experiment = experiment_id_from_string(doc.at("experiment").get<std::string>());
        if (doc.contains("dataset")) {
            const nlohmann::json& ds = doc.at("dataset");
            if (!ds.is_object()) throw ConfigError("'dataset' must be an object");
            for (const auto& [key, value] : ds.items())
                if (key != "synthetic" && key != "csv")
                    throw ConfigError("unknown dataset key '" + key + "'");
            if (ds.contains("synthetic"))
                spec.dataset.synthetic =
                    generator_config_from_json(ds.at("synthetic").dump());
            if (ds.contains("csv"))
                spec.dataset.csv_path = ds.at("csv").get<std::string>();
        }
        if (doc.contains("gammas")) spec.gammas = doc.at("gammas").get<std::vector<double>>();
        if (doc.contains("latent_dims"))
            spec.latent_dims = doc.at("latent_dims").get<std::vector<int>>();
        if (doc.contains("ratios")) {
            spec.ratios = doc.at("ratios").get<std::vector<double>>();
        } else if (spec.experiment == ExperimentId::ImputerDimSweep) {
            spec.ratios = {0.2, 0.4, 0.6};
        }
        if (doc.contains("classifiers")) {
            spec.classifiers.clear();
            for (const auto& name : doc.at("classifiers"))
                spec.classifiers.push_back(
                    classifier_kind_from_string(name.get<std::string>()));
        }
        if (doc.contains("repeats")) spec.repeats = doc.at("repeats").get<int>();
        if (doc.contains("cv_folds")) spec.cv_folds = doc.at("cv_folds").get<int>();
        if (doc.contains("seed")) spec.seed = doc.at("seed").get<std::uint64_t>();
        if (doc.contains("out_dir")) spec.out_dir = doc.at("out_dir").get<std::string>();
        if (doc.contains("format")) spec.format = doc.at("format").get<std::string>();
        if (doc.contains("scaling")) spec.scaling = doc.at("scaling").get<std::string>();
        if (doc.contains("cost_gamma")) spec.cost_gamma = doc.at("cost_gamma").get<double>();
        if (doc.contains("gaussian_gamma"))
            spec.gaussian_gamma = doc.at("gaussian_gamma").get<double>();
        if (doc.contains("svm_C")) spec.svm_C = doc.at("svm_C").get<double>();
        if (doc.contains("adaboost_rounds"))
            spec.adaboost_rounds = doc.at("adaboost_rounds").get<int>();
        if (doc.contains("latent_dim")) spec.latent_dim = doc.at("latent_dim").get<int>();
        if (doc.contains("kmeans_clusters"))
            spec.kmeans_clusters = doc.at("kmeans_clusters").get<int>();
        if (doc.contains("top_k")) spec.top_k = doc.at("top_k").get<int>();
        if (doc.contains("rf_trees")) spec.rf_trees = doc.at("rf_trees").get<int>();
        if (doc.contains("validation_missing"))
            spec.validation_missing = doc.at("validation_missing").get<double>();
        if (doc.contains("imputer_max_iter"))
            spec.imputer_max_iter = doc.at("imputer_max_iter").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("experiment spec field has the wrong type: ") +
                          e.what());
    }
    spec.validate();
    return spec;
}

std::string ReportTable::to_csv() const {
    std::ostringstream out;
    for (std::size_t j = 0; j < columns.size(); ++j)
        out << columns[j] << (j + 1 < columns.size() ? "," : "");
    out << '\n';
    for (const std::vector<std::string>& row : rows) {
        for (std::size_t j = 0; j < row.size(); ++j)
            out << row[j] << (j + 1 < row.size() ? "," : "");
        out << '\n';
    }
    return out.str();
}

std::string ReportTable::to_json() const {
    nlohmann::json doc;
    doc["columns"] = columns;
    doc["rows"] = rows;
    return doc.dump(2);
}

LabeledDataset load_experiment_dataset(const ExperimentSpec& spec) {
    if (spec.dataset.csv_path) {
        CsvData csv = load_csv_file(*spec.dataset.csv_path);
        if (!csv.labels)
            throw ConfigError("dataset CSV has no 'label' column: " + *spec.dataset.csv_path);
        return LabeledDataset(std::move(csv.table), std::move(*csv.labels));
    }
    return generate(resolved_generator_config(spec)).data;
}

ExperimentResult run_imbalance_sweep(const ExperimentSpec& spec) {
    spec.validate();
    const LabeledDataset data = load_working_dataset(spec);
    require_complete(data, "imbalance_sweep");
    const int repeats = spec.effective_repeats();
    const std::uint64_t base = mix_seed(spec.seed, "imbalance_sweep");
    const std::array<ImbalanceMode, 3> modes = {ImbalanceMode::Cost, ImbalanceMode::Smote,
                                                ImbalanceMode::CostPlusSmote};

    std::vector<KeyedRow> rows, summary;
    for (std::size_t gi = 0; gi < spec.gammas.size(); ++gi) {
        for (std::size_t mi = 0; mi < modes.size(); ++mi) {
            for (std::size_t ci = 0; ci < spec.classifiers.size(); ++ci) {
                const std::uint64_t cell_seed =
                    mix_seed(mix_seed(mix_seed(base, gi), mi), ci);
                PipelineConfig config = base_pipeline_config(spec, spec.classifiers[ci]);
                config.imbalance = ImbalanceConfig{spec.gammas[gi], modes[mi], 5};
                const CvReport cv =
                    run_cv(data, config, spec.cv_folds, repeats, cell_seed);

                const std::vector<std::string> coords = {
                    to_string(spec.experiment), std::to_string(spec.seed),
                    format_value(spec.gammas[gi]), mode_name(modes[mi]),
                    to_string(spec.classifiers[ci])};
                for (int r = 0; r < repeats; ++r) {
                    const MoeStats& s = cv.repeat_means[static_cast<std::size_t>(r)];
                    KeyedRow row{{static_cast<int>(gi), static_cast<int>(mi),
                                  static_cast<int>(ci), r},
                                 {coords[0], coords[1], std::to_string(r), coords[2],
                                  coords[3], coords[4], format_value(s.accuracy),
                                  format_value(s.auc), format_value(s.sensitivity),
                                  format_value(s.specificity)}};
                    rows.push_back(std::move(row));
                }
                summary.push_back(
                    KeyedRow{{static_cast<int>(gi), static_cast<int>(mi),
                              static_cast<int>(ci), 0},
                             {coords[0], coords[1], coords[2], coords[3], coords[4],
                              format_value(cv.mean.accuracy), format_value(cv.mean.auc),
                              format_value(cv.mean.sensitivity),
                              format_value(cv.mean.specificity),
                              format_value(cv.stddev.auc)}});
            }
        }
    }

    ExperimentResult result;
    result.report = to_table({"experiment", "seed", "repeat", "gamma", "mode", "classifier",
                              "accuracy", "auc", "sensitivity", "specificity"},
                             std::move(rows));
    result.summary =
        to_table({"experiment", "seed", "gamma", "mode", "classifier", "accuracy_mean",
                  "auc_mean", "sensitivity_mean", "specificity_mean", "auc_std"},
                 std::move(summary));
    result.manifest_json = make_manifest(spec);
    return result;
}

namespace {

// Shared by the two imputer sweeps: one (ratio, repeat) cell owns one mask
// draw, reused across every imputer and latent dimension so RMSE values are
// comparable on identical missingness.
struct SweepMask {
    MaskedTable masked;
    MaskMatrix probe;  // hidden-but-originally-observed cells
};

SweepMask make_sweep_mask(const MaskedTable& table, double ratio, std::uint64_t seed) {
    const MaskMatrix extra = generate_mcar_mask(table.rows(), table.cols(), ratio, seed);
    MaskedTable masked = apply_mask(table, extra);
    const MaskMatrix probe = table.mask() && !masked.mask();
    return SweepMask{std::move(masked), probe};
}

}  // namespace

ExperimentResult run_imputer_dim_sweep(const ExperimentSpec& spec) {
    spec.validate();
    const LabeledDataset data = load_working_dataset(spec);
    require_complete(data, "imputer_dim_sweep");
    const int repeats = spec.effective_repeats();
    const std::uint64_t base = mix_seed(spec.seed, "imputer_dim_sweep");
    const std::array<ImputerKind, 3> imputers = {ImputerKind::LsPca, ImputerKind::Ppca,
                                                 ImputerKind::VbPca};

    std::vector<KeyedRow> rows, summary, timing_rows, timing_summary;
    for (std::size_t ri = 0; ri < spec.ratios.size(); ++ri) {
        const double ratio = spec.ratios[ri];
        for (int rep = 0; rep < repeats; ++rep) {
            const std::uint64_t mask_seed =
                mix_seed(mix_seed(mix_seed(base, "mask"), ri), static_cast<std::uint64_t>(rep));
            const SweepMask sweep = make_sweep_mask(data.table, ratio, mask_seed);
            for (std::size_t ci = 0; ci < spec.latent_dims.size(); ++ci) {
                for (std::size_t ii = 0; ii < imputers.size(); ++ii) {
                    const std::uint64_t fit_seed =
                        mix_seed(mix_seed(mask_seed, "fit"), ii);
                    const auto start = std::chrono::steady_clock::now();
                    const ImputeResult fit = fit_one_imputer(
                        imputers[ii], sweep.masked, spec.latent_dims[ci],
                        spec.kmeans_clusters, spec.imputer_max_iter, fit_seed);
                    const double wall_ms =
                        std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - start)
                            .count();
                    const double cell_rmse =
                        rmse(data.table.values(), fit.completed, sweep.probe);

                    const std::array<int, 4> key = {static_cast<int>(ri),
                                                    static_cast<int>(ci),
                                                    static_cast<int>(ii), rep};
                    const std::vector<std::string> coords = {
                        to_string(spec.experiment), std::to_string(spec.seed),
                        std::to_string(rep), format_value(ratio),
                        std::to_string(spec.latent_dims[ci]),
                        to_string(imputers[ii])};
                    rows.push_back(KeyedRow{
                        key, {coords[0], coords[1], coords[2], coords[3], coords[4],
                              coords[5], format_value(cell_rmse)}});
                    timing_rows.push_back(KeyedRow{
                        key, {coords[0], coords[1], coords[2], coords[3], coords[4],
                              coords[5], format_value(wall_ms)}});
                }
            }
        }
    }

    // Aggregate per cell over repeats.
    const std::size_t cells = spec.ratios.size() * spec.latent_dims.size() * imputers.size();
    std::vector<std::vector<double>> rmse_by_cell(cells), wall_by_cell(cells);
    sort_rows(rows);
    sort_rows(timing_rows);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::array<int, 4>& key = rows[i].key;
        const std::size_t cell =
            (static_cast<std::size_t>(key[0]) * spec.latent_dims.size() +
             static_cast<std::size_t>(key[1])) *
                imputers.size() +
            static_cast<std::size_t>(key[2]);
        rmse_by_cell[cell].push_back(std::stod(rows[i].cells.back()));
        wall_by_cell[cell].push_back(std::stod(timing_rows[i].cells.back()));
    }
    for (std::size_t ri = 0; ri < spec.ratios.size(); ++ri)
        for (std::size_t ci = 0; ci < spec.latent_dims.size(); ++ci)
            for (std::size_t ii = 0; ii < imputers.size(); ++ii) {
                const std::size_t cell =
                    (ri * spec.latent_dims.size() + ci) * imputers.size() + ii;
                const MeanStd stats = mean_std(rmse_by_cell[cell]);
                const std::array<int, 4> key = {static_cast<int>(ri), static_cast<int>(ci),
                                                static_cast<int>(ii), 0};
                summary.push_back(KeyedRow{
                    key,
                    {to_string(spec.experiment), std::to_string(spec.seed),
                     format_value(spec.ratios[ri]), std::to_string(spec.latent_dims[ci]),
                     to_string(imputers[ii]), format_value(stats.mean),
                     format_value(stats.stddev)}});
                // Aggregates share the per-repeat schema, flagged in the
                // repeat column.
                const MeanStd wall = mean_std(wall_by_cell[cell]);
                timing_summary.push_back(KeyedRow{
                    key,
                    {to_string(spec.experiment), std::to_string(spec.seed), "median",
                     format_value(spec.ratios[ri]), std::to_string(spec.latent_dims[ci]),
                     to_string(imputers[ii]), format_value(median(wall_by_cell[cell]))}});
                std::array<int, 4> mean_key = key;
                mean_key[3] = 1;
                timing_summary.push_back(KeyedRow{
                    mean_key,
                    {to_string(spec.experiment), std::to_string(spec.seed), "mean",
                     format_value(spec.ratios[ri]), std::to_string(spec.latent_dims[ci]),
                     to_string(imputers[ii]), format_value(wall.mean)}});
            }

    ExperimentResult result;
    result.report = to_table({"experiment", "seed", "repeat", "missing_ratio", "latent_dim",
                              "imputer", "rmse"},
                             std::move(rows));
    result.summary = to_table({"experiment", "seed", "missing_ratio", "latent_dim",
                               "imputer", "rmse_mean", "rmse_std"},
                              std::move(summary));
    ReportTable timing = to_table({"experiment", "seed", "repeat", "missing_ratio",
                                   "latent_dim", "imputer", "wall_ms"},
                                  std::move(timing_rows));
    sort_rows(timing_summary);
    for (KeyedRow& row : timing_summary)
        timing.rows.push_back(std::move(row.cells));
    result.timing = std::move(timing);
    result.manifest_json = make_manifest(spec);
    return result;
}

ExperimentResult run_imputer_ratio_sweep(const ExperimentSpec& spec) {
    spec.validate();
    const LabeledDataset data = load_working_dataset(spec);
    require_complete(data, "imputer_ratio_sweep");
    const int repeats = spec.effective_repeats();
    const std::uint64_t base = mix_seed(spec.seed, "imputer_ratio_sweep");
    const std::array<ImputerKind, 5> imputers = {ImputerKind::Mean, ImputerKind::KMeans,
                                                 ImputerKind::LsPca, ImputerKind::Ppca,
                                                 ImputerKind::VbPca};

    std::vector<KeyedRow> rows, summary;
    std::vector<std::vector<double>> rmse_by_cell(spec.ratios.size() * imputers.size());
    for (std::size_t ri = 0; ri < spec.ratios.size(); ++ri) {
        const double ratio = spec.ratios[ri];
        for (int rep = 0; rep < repeats; ++rep) {
            std::optional<SweepMask> sweep;
            if (ratio > 0.0) {
                const std::uint64_t mask_seed = mix_seed(
                    mix_seed(mix_seed(base, "mask"), ri), static_cast<std::uint64_t>(rep));
                sweep = make_sweep_mask(data.table, ratio, mask_seed);
            }
            for (std::size_t ii = 0; ii < imputers.size(); ++ii) {
                std::string rmse_text;  // ratio-0 rows: nothing hidden, RMSE undefined
                if (sweep) {
                    const std::uint64_t fit_seed = mix_seed(
                        mix_seed(mix_seed(mix_seed(base, "fit"), ri),
                                 static_cast<std::uint64_t>(rep)),
                        ii);
                    const ImputeResult fit = fit_one_imputer(
                        imputers[ii], sweep->masked, spec.latent_dim,
                        spec.kmeans_clusters, spec.imputer_max_iter, fit_seed);
                    const double value =
                        rmse(data.table.values(), fit.completed, sweep->probe);
                    rmse_text = format_value(value);
                    rmse_by_cell[ri * imputers.size() + ii].push_back(value);
                }
                rows.push_back(KeyedRow{
                    {static_cast<int>(ri), static_cast<int>(ii), rep, 0},
                    {to_string(spec.experiment), std::to_string(spec.seed),
                     std::to_string(rep), format_value(ratio), to_string(imputers[ii]),
                     rmse_text}});
            }
        }
    }
    for (std::size_t ri = 0; ri < spec.ratios.size(); ++ri)
        for (std::size_t ii = 0; ii < imputers.size(); ++ii) {
            const std::vector<double>& values = rmse_by_cell[ri * imputers.size() + ii];
            std::string mean_text, std_text;
            if (!values.empty()) {
                const MeanStd stats = mean_std(values);
                mean_text = format_value(stats.mean);
                std_text = format_value(stats.stddev);
            }
            summary.push_back(KeyedRow{{static_cast<int>(ri), static_cast<int>(ii), 0, 0},
                                       {to_string(spec.experiment),
                                        std::to_string(spec.seed),
                                        format_value(spec.ratios[ri]),
                                        to_string(imputers[ii]), mean_text, std_text}});
        }

    ExperimentResult result;
    result.report = to_table(
        {"experiment", "seed", "repeat", "missing_ratio", "imputer", "rmse"}, std::move(rows));
    result.summary = to_table(
        {"experiment", "seed", "missing_ratio", "imputer", "rmse_mean", "rmse_std"},
        std::move(summary));
    result.manifest_json = make_manifest(spec);
    return result;
}

ExperimentResult run_missing_vs_auc(const ExperimentSpec& spec) {
    spec.validate();
    const LabeledDataset data = load_working_dataset(spec);
    require_complete(data, "missing_vs_auc");
    const int repeats = spec.effective_repeats();
    const std::uint64_t base = mix_seed(spec.seed, "missing_vs_auc");
    const std::array<ImputerKind, 4> imputers = {ImputerKind::Ppca, ImputerKind::LsPca,
                                                 ImputerKind::Mean, ImputerKind::KMeans};

    if (spec.top_k > data.table.cols())
        throw ConfigError("top_k exceeds the dataset's feature count");
    const FeatureImportance importance =
        rf_feature_importance(data, spec.rf_trees, mix_seed(base, "rf"));
    const std::vector<int> top_features = select_top_features(importance, spec.top_k);

    std::vector<KeyedRow> rows, summary;
    for (std::size_t ri = 0; ri < spec.ratios.size(); ++ri) {
        for (std::size_t ii = 0; ii < imputers.size(); ++ii) {
            for (std::size_t mi = 0; mi < spec.classifiers.size() * 2; ++mi) {
                const ClassifierKind classifier = spec.classifiers[mi / 2];
                const bool selected = mi % 2 == 1;
                // The seed must not depend on the imputer: at ratio 0 every
                // imputer then sees identical folds and training data.
                const std::uint64_t cell_seed =
                    mix_seed(mix_seed(mix_seed(base, "cell"), ri), mi);

                PipelineConfig config = base_pipeline_config(spec, classifier);
                config.imputer.kind = imputers[ii];
                config.imbalance =
                    ImbalanceConfig{spec.cost_gamma, ImbalanceMode::Cost, 5};
                if (spec.ratios[ri] > 0.0) config.missing_ratio = spec.ratios[ri];
                if (selected) config.selected_features = top_features;

                const CvReport cv =
                    run_cv(data, config, spec.cv_folds, repeats, cell_seed);
                const std::vector<std::string> coords = {
                    to_string(spec.experiment), std::to_string(spec.seed),
                    format_value(spec.ratios[ri]), to_string(imputers[ii]),
                    to_string(classifier), selected ? "top" : "all"};
                for (int r = 0; r < repeats; ++r) {
                    const MoeStats& s = cv.repeat_means[static_cast<std::size_t>(r)];
                    rows.push_back(KeyedRow{
                        {static_cast<int>(ri), static_cast<int>(ii),
                         static_cast<int>(mi), r},
                        {coords[0], coords[1], std::to_string(r), coords[2], coords[3],
                         coords[4], coords[5], format_value(s.accuracy),
                         format_value(s.auc), format_value(s.sensitivity),
                         format_value(s.specificity)}});
                }
                summary.push_back(KeyedRow{
                    {static_cast<int>(ri), static_cast<int>(ii), static_cast<int>(mi), 0},
                    {coords[0], coords[1], coords[2], coords[3], coords[4], coords[5],
                     format_value(cv.mean.auc), format_value(cv.stddev.auc),
                     format_value(cv.mean.sensitivity),
                     format_value(cv.mean.specificity)}});
            }
        }
    }

    ExperimentResult result;
    result.report =
        to_table({"experiment", "seed", "repeat", "missing_ratio", "imputer", "classifier",
                  "features", "accuracy", "auc", "sensitivity", "specificity"},
                 std::move(rows));
    result.summary =
        to_table({"experiment", "seed", "missing_ratio", "imputer", "classifier",
                  "features", "auc_mean", "auc_std", "sensitivity_mean",
                  "specificity_mean"},
                 std::move(summary));
    result.manifest_json = make_manifest(spec);
    return result;
}

ExperimentResult run_validation(const ExperimentSpec& spec) {
    spec.validate();
    const std::uint64_t base = mix_seed(spec.seed, "validation");
    const int repeats = spec.effective_repeats();

    // Train/validation pair: a fresh draw from the same generator, or a
    // stratified even split when the dataset came from a file.
    std::optional<LabeledDataset> train, validation;
    if (spec.dataset.csv_path) {
        const LabeledDataset full = load_experiment_dataset(spec);
        const std::vector<FoldSplit> split =
            kfold(full.labels, 2, true, mix_seed(base, "split"));
        train.emplace(full.table.select_rows(split[0].train),
                      [&] {
                          Eigen::VectorXi y(static_cast<Eigen::Index>(split[0].train.size()));
                          for (std::size_t i = 0; i < split[0].train.size(); ++i)
                              y[static_cast<Eigen::Index>(i)] = full.labels[split[0].train[i]];
                          return y;
                      }());
        validation.emplace(full.table.select_rows(split[0].test),
                           [&] {
                               Eigen::VectorXi y(
                                   static_cast<Eigen::Index>(split[0].test.size()));
                               for (std::size_t i = 0; i < split[0].test.size(); ++i)
                                   y[static_cast<Eigen::Index>(i)] =
                                       full.labels[split[0].test[i]];
                               return y;
                           }());
    } else {
        const GeneratorConfig config = resolved_generator_config(spec);
        train = generate(config).data;
        GeneratorConfig val_config = config;
        val_config.rng_seed = mix_seed(base, "validation_data");
        validation = generate(val_config).data;
    }
    if (spec.scaling == "full") {
        // Each dataset is standardized on its own table; in "train" mode the
        // pipeline instead freezes the training-fold scaler onto validation.
        train->table = transform(train->table, fit_scaler(train->table));
        validation->table = transform(validation->table, fit_scaler(validation->table));
    }

    std::vector<KeyedRow> rows, summary;
    std::vector<std::vector<double>> auc_by_cell(spec.classifiers.size());
    for (std::size_t ci = 0; ci < spec.classifiers.size(); ++ci) {
        PipelineConfig config = base_pipeline_config(spec, spec.classifiers[ci]);
        config.imputer.kind = ImputerKind::Ppca;
        config.imbalance = ImbalanceConfig{spec.cost_gamma, ImbalanceMode::Cost, 5};
        const TrainedPipeline model =
            fit_pipeline(*train, config, mix_seed(mix_seed(base, "fit"), ci));

        for (int rep = 0; rep < repeats; ++rep) {
            MaskedTable masked = validation->table;
            std::optional<MaskMatrix> probe;
            if (spec.validation_missing > 0.0) {
                const MaskMatrix extra = generate_mcar_mask(
                    masked.rows(), masked.cols(), spec.validation_missing,
                    mix_seed(mix_seed(base, "mask"), static_cast<std::uint64_t>(rep)));
                masked = apply_mask(masked, extra);
                probe = validation->table.mask() && !masked.mask();
            }
            const Eigen::VectorXd scores = pipeline_score(model, masked);
            EvalReport report = evaluate_scores(scores, validation->labels);
            std::string rmse_text;
            if (probe && probe->any()) {
                MaskedTable original = validation->table;
                MaskedTable masked_copy = masked;
                if (model.scaler) {
                    original = transform(original, *model.scaler);
                    masked_copy = transform(masked_copy, *model.scaler);
                }
                const Eigen::MatrixXd imputed =
                    apply_imputer(model.imputer, masked_copy).completed;
                rmse_text = format_value(rmse(original.values(), imputed, *probe));
            }
            auc_by_cell[ci].push_back(report.auc);
            rows.push_back(KeyedRow{
                {static_cast<int>(ci), rep, 0, 0},
                {to_string(spec.experiment), std::to_string(spec.seed),
                 std::to_string(rep), to_string(spec.classifiers[ci]),
                 format_value(spec.validation_missing), format_value(report.accuracy),
                 format_value(report.auc), format_value(report.sensitivity),
                 format_value(report.specificity), rmse_text}});
        }
    }
    for (std::size_t ci = 0; ci < spec.classifiers.size(); ++ci) {
        const MeanStd stats = mean_std(auc_by_cell[ci]);
        summary.push_back(KeyedRow{{static_cast<int>(ci), 0, 0, 0},
                                   {to_string(spec.experiment), std::to_string(spec.seed),
                                    to_string(spec.classifiers[ci]),
                                    format_value(spec.validation_missing),
                                    format_value(stats.mean),
                                    format_value(stats.stddev)}});
    }

    ExperimentResult result;
    result.report =
        to_table({"experiment", "seed", "repeat", "classifier", "missing_ratio",
                  "accuracy", "auc", "sensitivity", "specificity", "rmse"},
                 std::move(rows));
    result.summary = to_table(
        {"experiment", "seed", "classifier", "missing_ratio", "auc_mean", "auc_std"},
        std::move(summary));
    result.manifest_json = make_manifest(spec);
    return result;
}

ExperimentResult run_experiment(const ExperimentSpec& spec) {
    switch (spec.experiment) {
        case ExperimentId::ImbalanceSweep: return run_imbalance_sweep(spec);
        case ExperimentId::ImputerDimSweep: return run_imputer_dim_sweep(spec);
        case ExperimentId::ImputerRatioSweep: return run_imputer_ratio_sweep(spec);
        case ExperimentId::MissingVsAuc: return run_missing_vs_auc(spec);
        case ExperimentId::Validation: return run_validation(spec);
    }
    throw InternalError("unknown experiment id");
}

std::vector<std::string> write_experiment(const ExperimentResult& result,
                                          const ExperimentSpec& spec) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(spec.out_dir, ec);
    if (ec) throw IoError("cannot create output directory '" + spec.out_dir + "': " +
                          ec.message());

    const std::string id = to_string(spec.experiment);
    const std::string ext = spec.format == "json" ? ".json" : ".csv";
    const auto write_file = [&](const std::string& name, const std::string& text) {
        const std::string path = (fs::path(spec.out_dir) / name).string();
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot open '" + path + "' for writing");
        out << text;
        if (!out) throw IoError("failed writing '" + path + "'");
        return path;
    };

    std::vector<std::string> paths;
    paths.push_back(write_file(id + ext, spec.format == "json" ? result.report.to_json()
                                                               : result.report.to_csv()));
    paths.push_back(write_file(id + "_summary" + ext,
                               spec.format == "json" ? result.summary.to_json()
                                                     : result.summary.to_csv()));
    if (result.timing)
        paths.push_back(write_file(id + "_timing.csv", result.timing->to_csv()));
    paths.push_back(write_file("manifest.json", result.manifest_json));
    return paths;
}

}  // namespace crashrisk
