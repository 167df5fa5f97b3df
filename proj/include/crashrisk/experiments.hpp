#pragma once

#include "crashrisk/imputers.hpp"
#include "crashrisk/pipeline.hpp"
#include "crashrisk/synth.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace crashrisk {

inline constexpr const char* kLibraryVersion = "0.1.0";

enum class ExperimentId {
    ImbalanceSweep,
    ImputerDimSweep,
    ImputerRatioSweep,
    MissingVsAuc,
    Validation,
};

std::string to_string(ExperimentId id);
ExperimentId experiment_id_from_string(const std::string& name);

/// Either a synthetic generator configuration or a labeled CSV file.
/// When both are empty the runner picks a per-experiment default generator.
struct DatasetSource {
    std::optional<GeneratorConfig> synthetic;
    std::optional<std::string> csv_path;
};

struct ExperimentSpec {
    ExperimentId experiment = ExperimentId::ImbalanceSweep;
    DatasetSource dataset;
    std::vector<double> gammas = {1.0, 5.0, 10.0, 20.0, 30.0};
    std::vector<int> latent_dims = {2, 4, 6, 8, 10, 12};  // dim-sweep c grid
    std::vector<double> ratios = {0.0,  0.05, 0.10, 0.15, 0.20, 0.25, 0.30,
                                  0.35, 0.40, 0.45, 0.50, 0.55, 0.60};
    std::vector<ClassifierKind> classifiers = {ClassifierKind::SvmLinear,
                                               ClassifierKind::SvmGaussian,
                                               ClassifierKind::SvmPoly3,
                                               ClassifierKind::AdaBoost};
    int repeats = -1;    // -1 = per-experiment default (1, or 5 where the
                         // protocol averages five runs)
    int cv_folds = 10;
    std::uint64_t seed = 0;
    std::string out_dir = "reports";
    std::string format = "csv";  // report body format: "csv" or "json"
    // "full": standardize the whole table once, up front (before any masking;
    // pipelines then run without their own scaler). "train": leave the data
    // as loaded and let each pipeline fit its scaler on training rows only;
    // the imputation sweeps then work in the dataset's native scale.
    std::string scaling = "full";

    double cost_gamma = 10.0;     // fixed class-weight ratio where not swept
    double gaussian_gamma = 1.0;  // Gaussian kernel bandwidth
    double svm_C = 1.0;
    int adaboost_rounds = 100;
    int latent_dim = 8;            // c for pipeline imputers outside the c sweep
    int kmeans_clusters = 5;
    int top_k = 8;                 // feature-selected model variants
    int rf_trees = 100;            // importance forest size
    double validation_missing = 0.21;
    int imputer_max_iter = 500;

    void validate() const;  // throws ConfigError
    int effective_repeats() const;
};

/// Strict parser: unknown keys are rejected. Every key optional except
/// "experiment".
ExperimentSpec experiment_spec_from_json(const std::string& json_text);

/// Rectangular report: column names plus pre-formatted cell values (%.9g for
/// reals). Rows are emitted in sorted grid order, so equal specs serialize to
/// byte-identical files.
struct ReportTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    std::string to_csv() const;
    std::string to_json() const;  // {"columns": [...], "rows": [[...], ...]}
};

struct ExperimentResult {
    /// Primary per-(cell x repeat) rows; deterministic under the spec seed.
    ReportTable report;
    /// Per-cell aggregates (means / stddevs over repeats); deterministic.
    ReportTable summary;
    /// Wall-clock fit times; inherently non-deterministic, kept out of the
    /// reproducibility contract. Present for the dim sweep only.
    std::optional<ReportTable> timing;
    /// Config echo, library version, and seed; deterministic.
    std::string manifest_json;
};

ExperimentResult run_imbalance_sweep(const ExperimentSpec& spec);
ExperimentResult run_imputer_dim_sweep(const ExperimentSpec& spec);
ExperimentResult run_imputer_ratio_sweep(const ExperimentSpec& spec);
ExperimentResult run_missing_vs_auc(const ExperimentSpec& spec);
ExperimentResult run_validation(const ExperimentSpec& spec);

/// Dispatch on spec.experiment.
ExperimentResult run_experiment(const ExperimentSpec& spec);

/// Writes <experiment>.<format>, <experiment>_summary.<format>,
/// <experiment>_timing.csv when present, and manifest.json into spec.out_dir
/// (created if needed). Returns the paths written.
std::vector<std::string> write_experiment(const ExperimentResult& result,
                                          const ExperimentSpec& spec);

/// The dataset an experiment runs on: the configured CSV or generator, else
/// the per-experiment default (balanced 200x24 generator for the imputer
/// sweeps, which ignore labels; the imbalanced 123-vs-1230 generator
/// otherwise).
LabeledDataset load_experiment_dataset(const ExperimentSpec& spec);

}  // namespace crashrisk
