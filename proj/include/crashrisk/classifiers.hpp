#pragma once

#include "crashrisk/masked_table.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace crashrisk {

enum class KernelKind { Linear, Gaussian, Poly3 };

std::string to_string(KernelKind kind);
KernelKind kernel_kind_from_string(const std::string& name);

struct KernelSpec {
    KernelKind kind = KernelKind::Linear;
    // Width of exp(-gamma * ||x - y||^2); the reference form is exactly 1.
    double gaussian_gamma = 1.0;
};

double kernel_eval(const KernelSpec& kernel, const Eigen::VectorXd& a,
                   const Eigen::VectorXd& b);

struct SvmOptions {
    KernelSpec kernel;
    double C = 1.0;
    double tol = 1e-4;      // KKT violation gap at which training stops
    int max_epochs = 10000;  // pair updates before giving up
};

struct SvmModel {
    KernelSpec kernel;
    double C = 1.0;
    Eigen::MatrixXd support_vectors;  // s x d
    Eigen::VectorXd dual_coeffs;      // alpha_i * y_i per support vector
    double bias = 0.0;
    Eigen::VectorXd linear_weights;   // materialized primal w (linear kernel only)
    bool converged = true;
    int epochs = 0;
};

// Weighted soft-margin fit; per-sample box constraints C * weight_i with
// weights taken from the dataset (ones when absent).
SvmModel svm_fit(const LabeledDataset& data, const SvmOptions& options = {});

Eigen::VectorXd svm_score(const SvmModel& model, const Eigen::MatrixXd& rows);

struct Stump {
    int feature = 0;
    double threshold = 0.0;
    int polarity = 1;  // predict polarity where value > threshold, else -polarity
};

int stump_predict(const Stump& stump, double value);

struct AdaBoostModel {
    std::vector<Stump> stumps;
    std::vector<double> alphas;
    int rounds = 0;  // equals stumps.size(); may be below the requested count
};

// Adaptive boosting of exhaustively searched decision stumps. The initial
// sample distribution is proportional to the dataset weights, which is how
// cost weighting composes with boosting.
AdaBoostModel adaboost_fit(const LabeledDataset& data, int rounds = 100);

Eigen::VectorXd adaboost_score(const AdaBoostModel& model, const Eigen::MatrixXd& rows);

struct FeatureImportance {
    // (feature index, importance), sorted by decreasing importance with ties
    // broken by lower index; importances sum to 1.
    std::vector<std::pair<int, double>> ranking;
};

FeatureImportance rf_feature_importance(const LabeledDataset& data, int n_trees,
                                        std::uint64_t rng_seed);

std::vector<int> select_top_features(const FeatureImportance& importance, int k);

std::string svm_model_to_json(const SvmModel& model);
SvmModel svm_model_from_json(const std::string& text);
std::string adaboost_model_to_json(const AdaBoostModel& model);
AdaBoostModel adaboost_model_from_json(const std::string& text);

}  // namespace crashrisk
