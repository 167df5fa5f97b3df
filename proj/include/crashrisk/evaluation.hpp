#pragma once

#include "crashrisk/masked_table.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace crashrisk {

struct ConfusionMatrix {
    std::int64_t tn = 0;
    std::int64_t fn = 0;
    std::int64_t fp = 0;
    std::int64_t tp = 0;

    std::int64_t total() const { return tn + fn + fp + tp; }
    double accuracy() const;
    double sensitivity() const;  // TPR = tp / (tp + fn)
    double specificity() const;  // TNR = tn / (tn + fp) = 1 - FPR
};

/// Threshold sweep over the distinct scores, ties grouped. Points run from
/// (0,0) to (1,1) with non-decreasing FPR; auc is the trapezoidal area and
/// equals the Mann-Whitney pairwise statistic with ties counted 1/2.
struct RocCurve {
    std::vector<std::pair<double, double>> points;  // (FPR, TPR)
    double auc = 0.0;
};

struct EvalReport {
    double accuracy = 0.0;
    double auc = 0.0;
    double sensitivity = 0.0;
    double specificity = 0.0;
    ConfusionMatrix confusion;
    std::optional<double> rmse;
};

/// MCAR mask: each cell hidden independently with probability `ratio`, then
/// offending all-hidden rows/columns are re-drawn until every row and column
/// keeps at least one observed cell (at most 1000 repair attempts).
MaskMatrix generate_mcar_mask(Eigen::Index m, Eigen::Index d, double ratio,
                              std::uint64_t rng_seed);

/// Root mean square error over the probe cells only.
double rmse(const Eigen::MatrixXd& real_values, const Eigen::MatrixXd& imputed_values,
            const MaskMatrix& probe_mask);

/// Predicts +1 iff score >= threshold.
ConfusionMatrix confusion(const Eigen::VectorXd& scores, const Eigen::VectorXi& labels,
                          double threshold);

RocCurve roc_auc(const Eigen::VectorXd& scores, const Eigen::VectorXi& labels);

/// Operating threshold is 0 (the natural decision boundary of the scorers).
EvalReport evaluate_scores(const Eigen::VectorXd& scores, const Eigen::VectorXi& labels);

struct FoldSplit {
    std::vector<int> train;
    std::vector<int> test;
};

/// Disjoint folds covering all indices; stratified splits preserve the class
/// ratio per fold. Deterministic under rng_seed.
std::vector<FoldSplit> kfold(const Eigen::VectorXi& labels, int k, bool stratified,
                             std::uint64_t rng_seed);

}  // namespace crashrisk
