#pragma once

#include "crashrisk/classifiers.hpp"
#include "crashrisk/evaluation.hpp"
#include "crashrisk/imbalance.hpp"
#include "crashrisk/imputers.hpp"
#include "crashrisk/masked_table.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace crashrisk {

enum class ClassifierKind { SvmLinear, SvmGaussian, SvmPoly3, AdaBoost };

std::string to_string(ClassifierKind kind);
ClassifierKind classifier_kind_from_string(const std::string& name);

/// End-to-end training recipe for one model. `missing_ratio` is consumed by
/// run_cv and the experiment drivers (which mask the data before splitting);
/// fit_pipeline itself trains on the rows exactly as given.
struct PipelineConfig {
    ImputerSpec imputer;
    std::optional<ImbalanceConfig> imbalance;  // replaces any dataset weights
    ClassifierKind classifier = ClassifierKind::SvmLinear;
    double svm_C = 1.0;
    double gaussian_gamma = 1.0;  // bandwidth of the Gaussian kernel
    double svm_tol = 1e-4;
    int svm_max_epochs = 10000;
    int adaboost_rounds = 100;
    std::optional<double> missing_ratio;  // per-task MCAR mask when set
    std::vector<int> selected_features;   // classifier input subset; empty = all
    bool standardize = true;              // scaler fitted on training rows only

    void validate() const;  // throws ConfigError
};

/// Everything needed to score unseen rows: train-fitted scaler, frozen
/// imputer, the classifier input columns, and the fitted classifier.
struct TrainedPipeline {
    std::optional<Scaler> scaler;
    ImputerModel imputer;
    std::vector<int> features;  // empty = all columns
    ClassifierKind classifier = ClassifierKind::SvmLinear;
    std::optional<SvmModel> svm;
    std::optional<AdaBoostModel> adaboost;
};

/// Scale -> impute -> select features -> rebalance -> fit, in that order.
/// Only the training rows are touched; scoring-side rows never reach this
/// function. Sub-stages draw from seeds derived from `rng_seed`.
TrainedPipeline fit_pipeline(const LabeledDataset& train, const PipelineConfig& config,
                             std::uint64_t rng_seed);

/// Applies the frozen pipeline: transform with the stored scaler, complete
/// missing cells with the stored imputer, take the stored feature subset,
/// and return classifier scores (one per row).
Eigen::VectorXd pipeline_score(const TrainedPipeline& model, const MaskedTable& rows);

struct FoldResult {
    TrainedPipeline model;
    Eigen::VectorXd scores;  // test rows, in split.test order
    EvalReport report;       // operating threshold 0; rmse set when the fold
                             // mask hid originally-observed test cells
};

/// One cross-validation task: optionally MCAR-mask the full table (seeded
/// from `task_seed`), split rows, fit the pipeline on the training side only,
/// score the test side. The reported rmse compares imputed test cells against
/// their pre-mask values in the pipeline's working (post-scaler) scale.
FoldResult run_fold(const LabeledDataset& data, const FoldSplit& split,
                    const PipelineConfig& config, std::uint64_t task_seed);

struct CvFoldRow {
    int repeat = 0;
    int fold = 0;
    EvalReport report;
};

struct MoeStats {
    double accuracy = 0.0;
    double auc = 0.0;
    double sensitivity = 0.0;
    double specificity = 0.0;
    std::optional<double> rmse;
};

struct CvReport {
    int k = 0;
    int repeats = 0;
    std::vector<CvFoldRow> rows;        // repeat-major, fold-minor
    std::vector<MoeStats> repeat_means; // fold means, one entry per repeat
    MoeStats mean;                      // mean of repeat_means
    MoeStats stddev;                    // sample standard deviation over repeats
};

/// Repeated stratified k-fold cross-validation. Each (repeat, fold) task owns
/// a seed derived from (rng_seed, repeat, fold), so results are independent
/// of the execution schedule; `threads` <= 0 means the hardware count.
CvReport run_cv(const LabeledDataset& data, const PipelineConfig& config, int k,
                int repeats, std::uint64_t rng_seed, int threads = 0);

/// One CSV row per repeat x fold plus `mean` / `stddev` aggregate rows.
std::string cv_report_to_csv(const CvReport& report);
std::string cv_report_to_json(const CvReport& report);

/// Strict JSON parser for PipelineConfig (unknown keys rejected). Every key
/// is optional; shape mirrors pipeline_config_to_json.
PipelineConfig pipeline_config_from_json(const std::string& json_text);
std::string pipeline_config_to_json(const PipelineConfig& config);

/// Lossless round trip of a fitted pipeline, including the scaler and the
/// nested imputer/classifier models.
std::string pipeline_model_to_json(const TrainedPipeline& model);
TrainedPipeline pipeline_model_from_json(const std::string& json_text);

}  // namespace crashrisk
